use std::collections::BTreeMap;

use super::{DatasetError, Frame, RawSequence, Result};
use crate::lane_graph::wrap_angle;
use crate::scene_graph::{AgentState, EgoPose};

pub const TARGET_HZ: f64 = 4.0;
const SUPPORTED_HZ: [f64; 3] = [2.0, 4.0, 10.0];
const SNAP: f64 = 1e-9;

fn lerp(a: f64, b: f64, w: f64) -> f64 {
    a + (b - a) * w
}

/// Interpolates headings along the shorter arc.
fn lerp_angle(a: f64, b: f64, w: f64) -> f64 {
    wrap_angle(a + wrap_angle(b - a) * w)
}

fn lerp_ego(a: &EgoPose, b: &EgoPose, w: f64) -> EgoPose {
    EgoPose {
        x: lerp(a.x, b.x, w),
        y: lerp(a.y, b.y, w),
        phi: lerp_angle(a.phi, b.phi, w),
        v: lerp(a.v, b.v, w),
    }
}

fn lerp_agent(a: &AgentState, b: &AgentState, w: f64) -> AgentState {
    AgentState {
        track_id: a.track_id,
        x: lerp(a.x, b.x, w),
        y: lerp(a.y, b.y, w),
        phi: lerp_angle(a.phi, b.phi, w),
        v: lerp(a.v, b.v, w),
    }
}

/// Agents of the union of both frames; an agent seen in only one of them
/// is copied from that frame.
fn lerp_agents(a: &Frame, b: &Frame, w: f64) -> Vec<AgentState> {
    let mut by_id: BTreeMap<u64, (Option<&AgentState>, Option<&AgentState>)> = BTreeMap::new();
    for s in &a.agents {
        by_id.entry(s.track_id).or_default().0 = Some(s);
    }
    for s in &b.agents {
        by_id.entry(s.track_id).or_default().1 = Some(s);
    }
    by_id
        .into_values()
        .map(|pair| match pair {
            (Some(x), Some(y)) => lerp_agent(x, y, w),
            (Some(x), None) | (None, Some(x)) => *x,
            (None, None) => unreachable!(),
        })
        .collect()
}

/// Resamples a 2, 4 or 10 Hz sequence onto the 4 Hz grid `t0 + k/4`.
///
/// Continuous states are interpolated linearly between the bracketing
/// frames (headings along the shorter arc); a grid time that coincides with
/// a source frame copies it. Labels come from the nearest source frame, the
/// earlier one on ties. 4 Hz input is returned unchanged.
pub fn resample_to_4hz(seq: &RawSequence) -> Result<RawSequence> {
    if !SUPPORTED_HZ.iter().any(|&h| (h - seq.hz).abs() < 1e-9) {
        return Err(DatasetError::UnsupportedRate(seq.hz));
    }
    seq.validate()?;
    if (seq.hz - TARGET_HZ).abs() < 1e-9 {
        return Ok(seq.clone());
    }
    let src = &seq.frames;
    let t0 = src[0].t;
    let src_dt = 1.0 / seq.hz;
    let span = src[src.len() - 1].t - t0;
    let n_out = (span * TARGET_HZ + SNAP).floor() as usize + 1;
    let mut frames = Vec::with_capacity(n_out);
    for k in 0..n_out {
        let t = t0 + k as f64 / TARGET_HZ;
        let pos = (t - t0) / src_dt;
        let i = ((pos + SNAP).floor() as usize).min(src.len() - 1);
        let w = pos - i as f64;
        let frame = if w.abs() < SNAP || i + 1 == src.len() {
            Frame {
                t,
                ..src[i].clone()
            }
        } else if (1.0 - w).abs() < SNAP {
            Frame {
                t,
                ..src[i + 1].clone()
            }
        } else {
            let (a, b) = (&src[i], &src[i + 1]);
            Frame {
                t,
                ego: lerp_ego(&a.ego, &b.ego, w),
                agents: lerp_agents(a, b, w),
                label: if w <= 0.5 { a.label } else { b.label },
            }
        };
        frames.push(frame);
    }
    Ok(RawSequence {
        id: seq.id.clone(),
        source: seq.source.clone(),
        hz: TARGET_HZ,
        frames,
        lanes: seq.lanes.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(hz: f64, n: usize) -> RawSequence {
        RawSequence {
            id: "r".into(),
            source: "unit".into(),
            hz,
            frames: (0..n)
                .map(|i| {
                    let t = i as f64 / hz;
                    Frame {
                        t,
                        ego: EgoPose {
                            x: 2.0 * t,
                            y: -t,
                            phi: 0.1 * t,
                            v: 2.0,
                        },
                        agents: vec![AgentState {
                            track_id: 7,
                            x: 10.0 + t,
                            y: 1.0,
                            phi: 0.0,
                            v: 1.0,
                        }],
                        label: Some(usize::from(i >= n / 2)),
                    }
                })
                .collect(),
            lanes: vec![],
        }
    }

    #[test]
    fn ten_hz_downsamples_linear_motion_exactly() {
        let out = resample_to_4hz(&seq(10.0, 21)).unwrap();
        assert_eq!(out.frames.len(), 9);
        for (k, f) in out.frames.iter().enumerate() {
            let t = k as f64 * 0.25;
            assert!((f.t - t).abs() < 1e-12);
            assert!((f.ego.x - 2.0 * t).abs() < 1e-9);
            assert!((f.agents[0].x - 10.0 - t).abs() < 1e-9);
        }
        assert_eq!(out.frames[2].ego, seq(10.0, 21).frames[5].ego);
    }

    #[test]
    fn two_hz_upsamples() {
        let out = resample_to_4hz(&seq(2.0, 5)).unwrap();
        assert_eq!(out.frames.len(), 9);
        assert!((out.frames[1].ego.x - 0.5).abs() < 1e-12);
        assert_eq!(out.frames[1].label, Some(0));
        assert_eq!(out.frames[5].label, Some(1));
    }

    #[test]
    fn four_hz_is_identity_and_other_rates_fail() {
        let s = seq(4.0, 6);
        assert_eq!(resample_to_4hz(&s).unwrap(), s);
        assert!(matches!(
            resample_to_4hz(&seq(5.0, 6)),
            Err(DatasetError::UnsupportedRate(_))
        ));
    }

    #[test]
    fn heading_takes_short_arc() {
        let a = std::f64::consts::PI - 0.1;
        let b = -std::f64::consts::PI + 0.1;
        let m = lerp_angle(a, b, 0.5);
        assert!((m.abs() - std::f64::consts::PI).abs() < 1e-12);
    }

    #[test]
    fn agent_in_one_frame_is_copied() {
        let mut s = seq(2.0, 3);
        s.frames[1].agents[0].track_id = 9;
        let out = resample_to_4hz(&s).unwrap();
        let ids: Vec<u64> = out.frames[1].agents.iter().map(|a| a.track_id).collect();
        assert_eq!(ids, vec![7, 9]);
        assert_eq!(out.frames[1].agents[0], s.frames[0].agents[0]);
    }
}
