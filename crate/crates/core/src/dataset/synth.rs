//! Template-driven synthetic scenarios on two compact maps: a straight
//! two-lane road (classes 1 to 4) and a four-way crossing (classes 5 to 7).
//!
//! Every template is a noiseless continuous trajectory; labels are read off
//! it with fixed kinematic thresholds and observation noise is added last.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{DatasetError, Frame, RawSequence, Result, ScenarioClass, ScenarioSequence, TARGET_HZ};
use crate::lane_graph::LaneSegment;
use crate::scene_graph::{AgentState, EgoPose};

pub const LANE_WIDTH: f64 = 3.5;
const DT: f64 = 1.0 / TARGET_HZ;

/// Mean and standard deviation of the scenario duration in seconds, for
/// classes 1 to 7.
pub const DURATION_STATS: [(f64, f64); 7] = [
    (4.7, 1.8),
    (8.1, 3.8),
    (4.3, 1.5),
    (4.6, 1.2),
    (7.0, 2.6),
    (6.7, 2.4),
    (5.1, 2.0),
];
const MAX_DURATION: f64 = 15.0;
const CONTEXT: std::ops::RangeInclusive<i64> = 2..=8;

/// Lateral speed above which a lane change counts as started.
pub const LATERAL_SPEED_ONSET: f64 = 0.2;
/// Distance to the target lane center at which a lane change counts as done.
pub const RECENTER_TOLERANCE: f64 = 0.1;
/// Speed below which the ego counts as stopped.
pub const STOP_SPEED: f64 = 0.3;

const SEGMENT_LENGTH: f64 = 30.0;
const BOX_HALF: f64 = 10.0;
const ARM_LENGTH: f64 = 20.0;
const TURN_SPEED: (f64, f64) = (1.5, 8.0);

/// Generator difficulty settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthKnobs {
    /// Standard deviation of the position noise in meters.
    pub noise_std: f64,
    /// Non-interacting agents added to each sequence.
    pub background_agents: usize,
}

impl Default for SynthKnobs {
    fn default() -> Self {
        Self {
            noise_std: 0.05,
            background_agents: 0,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct State {
    x: f64,
    y: f64,
    phi: f64,
    v: f64,
}

impl State {
    fn from_velocity(x: f64, y: f64, vx: f64, vy: f64) -> Self {
        Self {
            x,
            y,
            phi: vy.atan2(vx),
            v: vx.hypot(vy),
        }
    }
}

type Trajectory = Box<dyn Fn(f64) -> State>;

struct Template {
    ego: Trajectory,
    agents: Vec<(u64, Trajectory)>,
    /// Whether grid step `j` (time `j * DT`) belongs to the scenario.
    labeled: Box<dyn Fn(i64) -> bool>,
    lanes: Box<dyn Fn(f64, f64) -> Vec<LaneSegment>>,
}

fn truncated_normal(rng: &mut impl Rng, mean: f64, std: f64) -> f64 {
    let lo = (mean - 2.0 * std).max(1.0);
    let hi = (mean + 2.0 * std).min(MAX_DURATION);
    let normal = Normal::new(mean, std).expect("valid normal");
    loop {
        let d = normal.sample(rng);
        if (lo..=hi).contains(&d) {
            return d;
        }
    }
}

/// Raised-cosine lateral move from `y0` to `y1` over `[0, m]`.
fn lateral(t: f64, m: f64, y0: f64, y1: f64) -> (f64, f64) {
    if t <= 0.0 {
        (y0, 0.0)
    } else if t >= m {
        (y1, 0.0)
    } else {
        let s = PI * t / m;
        (
            y0 + (y1 - y0) * (1.0 - s.cos()) / 2.0,
            (y1 - y0) * PI / (2.0 * m) * s.sin(),
        )
    }
}

/// Time a raised-cosine lane change of length `m` spends labeled.
fn labeled_time(m: f64) -> f64 {
    let onset = (2.0 * m * LATERAL_SPEED_ONSET / (LANE_WIDTH * PI))
        .min(1.0)
        .asin()
        / PI;
    let done = (-1.0 + 2.0 * RECENTER_TOLERANCE / LANE_WIDTH).acos() / PI;
    (done - onset).max(0.0) * m
}

/// Maneuver length whose labeled part lasts about `d` seconds.
fn maneuver_length(d: f64) -> f64 {
    let mut m = d / 0.8;
    for _ in 0..50 {
        let lt = labeled_time(m);
        if lt <= 0.0 {
            break;
        }
        m = (m * d / lt).min(25.0);
    }
    m
}

/// Labeled steps of a lane change of the tracked lateral coordinate.
fn lane_change_labels(
    y: impl Fn(f64) -> (f64, f64) + 'static,
    target: f64,
) -> Box<dyn Fn(i64) -> bool> {
    let mut started = None;
    let mut done = None;
    for j in -40..400i64 {
        let (pos, vel) = y(j as f64 * DT);
        if started.is_none() && vel.abs() > LATERAL_SPEED_ONSET {
            started = Some(j);
        }
        if started.is_some() && (pos - target).abs() <= RECENTER_TOLERANCE {
            done = Some(j);
            break;
        }
    }
    let (a, b) = (started.unwrap_or(0), done.unwrap_or(0));
    Box::new(move |j| j >= a && j < b)
}

fn straight_road(x_min: f64, x_max: f64) -> Vec<LaneSegment> {
    let start = x_min - 10.0;
    let n = ((x_max + 30.0 - start) / SEGMENT_LENGTH).ceil().max(1.0) as usize;
    let mut out = Vec::with_capacity(2 * n);
    for (name, y) in [("A", 0.0), ("B", LANE_WIDTH)] {
        for i in 0..n {
            let x0 = start + SEGMENT_LENGTH * i as f64;
            let seg = LaneSegment::new(
                format!("{name}{i}"),
                vec![[x0, y], [x0 + SEGMENT_LENGTH, y]],
            );
            let next = format!("{name}{}", i + 1);
            out.push(if i + 1 < n {
                seg.with_successors(&[next.as_str()])
            } else {
                seg
            });
        }
    }
    out
}

fn straight_background(
    rng: &mut ChaCha8Rng,
    count: usize,
    speed: f64,
    behind_only: bool,
) -> Vec<(u64, Trajectory)> {
    (0..count)
        .map(|k| {
            let mut offset = rng.random_range(20.0..30.0) + 12.0 * k as f64;
            if behind_only || rng.random_bool(0.5) {
                offset = -offset;
            }
            let v = speed * rng.random_range(0.95..1.05);
            let traj: Trajectory =
                Box::new(move |t| State::from_velocity(offset + v * t, LANE_WIDTH, v, 0.0));
            (2 + k as u64, traj)
        })
        .collect()
}

fn cut_in(rng: &mut ChaCha8Rng, d: f64, knobs: &SynthKnobs) -> Template {
    let v_ego = rng.random_range(6.0..10.0);
    let v_agent = v_ego + rng.random_range(0.5..2.0);
    let gap = rng.random_range(2.0..8.0);
    let m = maneuver_length(d);
    let ego: Trajectory = Box::new(move |t| State::from_velocity(v_ego * t, 0.0, v_ego, 0.0));
    let agent: Trajectory = Box::new(move |t| {
        let (y, vy) = lateral(t, m, LANE_WIDTH, 0.0);
        State::from_velocity(gap + v_agent * t, y, v_agent, vy)
    });
    let mut agents = vec![(1, agent)];
    agents.extend(straight_background(
        rng,
        knobs.background_agents,
        v_ego,
        true,
    ));
    Template {
        ego,
        agents,
        labeled: lane_change_labels(move |t| lateral(t, m, LANE_WIDTH, 0.0), 0.0),
        lanes: Box::new(straight_road),
    }
}

fn stationary(rng: &mut ChaCha8Rng, d: f64, knobs: &SynthKnobs) -> Template {
    let v0 = rng.random_range(6.0..10.0);
    let brake = d / (1.0 - STOP_SPEED / v0);
    let gap = rng.random_range(6.0..10.0);
    let stop_x = v0 * brake / 2.0;
    let speed = move |t: f64| {
        if t < 0.0 {
            v0
        } else {
            (v0 * (1.0 - t / brake)).max(0.0)
        }
    };
    let ego: Trajectory = Box::new(move |t| {
        let x = if t < 0.0 {
            v0 * t
        } else if t < brake {
            v0 * t - v0 * t * t / (2.0 * brake)
        } else {
            stop_x
        };
        State::from_velocity(x, 0.0, speed(t), 0.0)
    });
    let parked: Trajectory = Box::new(move |_| State::from_velocity(stop_x + gap, 0.0, 0.0, 0.0));
    let mut agents = vec![(1, parked)];
    agents.extend(straight_background(rng, knobs.background_agents, v0, false));
    Template {
        ego,
        agents,
        labeled: Box::new(move |j| {
            let t = j as f64 * DT;
            t >= 0.0 && speed(t) >= STOP_SPEED
        }),
        lanes: Box::new(straight_road),
    }
}

fn lane_change(rng: &mut ChaCha8Rng, d: f64, knobs: &SynthKnobs, rightward: bool) -> Template {
    let v = rng.random_range(6.0..10.0);
    let (y0, y1) = if rightward {
        (LANE_WIDTH, 0.0)
    } else {
        (0.0, LANE_WIDTH)
    };
    let m = maneuver_length(d);
    let ego: Trajectory = Box::new(move |t| {
        let (y, vy) = lateral(t, m, y0, y1);
        State::from_velocity(v * t, y, v, vy)
    });
    Template {
        ego,
        agents: straight_background(rng, knobs.background_agents, v, false),
        labeled: lane_change_labels(move |t| lateral(t, m, y0, y1), y1),
        lanes: Box::new(straight_road),
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Turn {
    Right,
    Left,
    Straight,
}

impl Turn {
    fn length(self) -> f64 {
        match self {
            Turn::Right => FRAC_PI_2 * (BOX_HALF - LANE_WIDTH / 2.0),
            Turn::Left => FRAC_PI_2 * (BOX_HALF + LANE_WIDTH / 2.0),
            Turn::Straight => 2.0 * BOX_HALF,
        }
    }

    /// Pose at distance `u` past the box entry.
    fn pose(self, u: f64) -> (f64, f64, f64) {
        let (h, half) = (BOX_HALF, LANE_WIDTH / 2.0);
        if u < 0.0 {
            return (half, -h + u, FRAC_PI_2);
        }
        let len = self.length();
        match self {
            Turn::Straight => (half, -h + u, FRAC_PI_2),
            Turn::Right if u < len => {
                let r = h - half;
                let th = PI - u / r;
                (h + r * th.cos(), -h + r * th.sin(), th - FRAC_PI_2)
            }
            Turn::Right => (h + u - len, -half, 0.0),
            Turn::Left if u < len => {
                let r = h + half;
                let th = u / r;
                (-h + r * th.cos(), -h + r * th.sin(), th + FRAC_PI_2)
            }
            Turn::Left => (-h - (u - len), half, PI),
        }
    }
}

fn arc(center: [f64; 2], r: f64, from: f64, to: f64) -> Vec<[f64; 2]> {
    let n = ((to - from).abs() * r).ceil().max(2.0) as usize;
    (0..=n)
        .map(|i| {
            let th = from + (to - from) * i as f64 / n as f64;
            [center[0] + r * th.cos(), center[1] + r * th.sin()]
        })
        .collect()
}

fn crossing() -> Vec<LaneSegment> {
    let (h, l, half) = (BOX_HALF, ARM_LENGTH, LANE_WIDTH / 2.0);
    let line = |id: &str, a: [f64; 2], b: [f64; 2]| LaneSegment::new(id, vec![a, b]);
    vec![
        line("S_in", [half, -h - l], [half, -h]).with_successors(&[
            "X_right",
            "X_left",
            "X_straight",
        ]),
        line("S_out", [-half, -h], [-half, -h - l]),
        line("N_in", [-half, h + l], [-half, h]),
        line("N_out", [half, h], [half, h + l]),
        line("E_in", [h + l, half], [h, half]),
        line("E_out", [h, -half], [h + l, -half]),
        line("W_in", [-h - l, -half], [-h, -half]),
        line("W_out", [-h, half], [-h - l, half]),
        line("X_straight", [half, -h], [half, h]).with_successors(&["N_out"]),
        LaneSegment::new("X_right", arc([h, -h], h - half, PI, FRAC_PI_2))
            .with_successors(&["E_out"]),
        LaneSegment::new("X_left", arc([-h, -h], h + half, 0.0, FRAC_PI_2))
            .with_successors(&["W_out"]),
    ]
}

fn crossing_background(count: usize) -> Vec<(u64, Trajectory)> {
    let (h, half) = (BOX_HALF, LANE_WIDTH / 2.0);
    let waiting = [
        (-half, h + 3.0, -FRAC_PI_2),
        (h + 3.0, half, PI),
        (-h - 3.0, -half, 0.0),
    ];
    (0..count)
        .map(|k| {
            let (x, y, phi) = waiting[k % 3];
            let back = 7.0 * (k / 3) as f64;
            let (x, y) = (x - back * phi.cos(), y - back * phi.sin());
            let traj: Trajectory = Box::new(move |_| State { x, y, phi, v: 0.0 });
            (2 + k as u64, traj)
        })
        .collect()
}

fn crossing_turn(d: f64, knobs: &SynthKnobs, turn: Turn) -> Template {
    let len = turn.length();
    let v = (len / d).clamp(TURN_SPEED.0, TURN_SPEED.1);
    let ego: Trajectory = Box::new(move |t| {
        let (x, y, phi) = turn.pose(v * t);
        State { x, y, phi, v }
    });
    Template {
        ego,
        agents: crossing_background(knobs.background_agents),
        labeled: Box::new(move |j| {
            let u = v * j as f64 * DT;
            (0.0..len).contains(&u)
        }),
        lanes: Box::new(|_, _| crossing()),
    }
}

fn add_noise(rng: &mut ChaCha8Rng, noise: Option<&Normal<f64>>, x: &mut f64, y: &mut f64) {
    if let Some(n) = noise {
        *x += n.sample(rng);
        *y += n.sample(rng);
    }
}

/// One synthetic sequence of a scenario class, fully determined by
/// `(class, seed, knobs)`. Scenario frames are preceded and followed by
/// 2 to 8 frames labeled 0.
pub fn generate_synthetic(
    class: ScenarioClass,
    seed: u64,
    knobs: &SynthKnobs,
) -> Result<ScenarioSequence> {
    let id = format!("synth-{}-{seed}", class.id());
    if class == ScenarioClass::NoScenario {
        return Err(DatasetError::Invalid {
            id,
            reason: "cannot generate a sequence without a scenario".into(),
        });
    }
    if !(knobs.noise_std >= 0.0 && knobs.noise_std.is_finite()) {
        return Err(DatasetError::Invalid {
            id,
            reason: format!(
                "noise std {} must be finite and non-negative",
                knobs.noise_std
            ),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(class.id() as u64);
    let (mean, std) = DURATION_STATS[class.id() - 1];
    let d = truncated_normal(&mut rng, mean, std);
    let template = match class {
        ScenarioClass::CutIn => cut_in(&mut rng, d, knobs),
        ScenarioClass::StationaryVehicleInLane => stationary(&mut rng, d, knobs),
        ScenarioClass::EgoLaneChangeRight => lane_change(&mut rng, d, knobs, true),
        ScenarioClass::EgoLaneChangeLeft => lane_change(&mut rng, d, knobs, false),
        ScenarioClass::RightTurnAtCrossing => crossing_turn(d, knobs, Turn::Right),
        ScenarioClass::LeftTurnAtCrossing => crossing_turn(d, knobs, Turn::Left),
        ScenarioClass::StraightAheadAtCrossing => crossing_turn(d, knobs, Turn::Straight),
        ScenarioClass::NoScenario => unreachable!(),
    };
    let first = (-40..400).find(|&j| (template.labeled)(j));
    let Some(first) = first else {
        return Err(DatasetError::Invalid {
            id,
            reason: "template produced no scenario frame".into(),
        });
    };
    let last = (first..400)
        .take_while(|&j| (template.labeled)(j))
        .last()
        .unwrap_or(first);
    let j0 = first - rng.random_range(CONTEXT);
    let j1 = last + rng.random_range(CONTEXT);

    let noise =
        (knobs.noise_std > 0.0).then(|| Normal::new(0.0, knobs.noise_std).expect("valid noise"));
    let mut frames = Vec::with_capacity((j1 - j0 + 1) as usize);
    let (mut x_min, mut x_max) = (f64::INFINITY, f64::NEG_INFINITY);
    for j in j0..=j1 {
        let t = j as f64 * DT;
        let e = (template.ego)(t);
        x_min = x_min.min(e.x);
        x_max = x_max.max(e.x);
        let mut ego = EgoPose {
            x: e.x,
            y: e.y,
            phi: e.phi,
            v: e.v,
        };
        add_noise(&mut rng, noise.as_ref(), &mut ego.x, &mut ego.y);
        let agents = template
            .agents
            .iter()
            .map(|(track_id, traj)| {
                let s = traj(t);
                let mut a = AgentState {
                    track_id: *track_id,
                    x: s.x,
                    y: s.y,
                    phi: s.phi,
                    v: s.v,
                };
                add_noise(&mut rng, noise.as_ref(), &mut a.x, &mut a.y);
                a
            })
            .collect();
        frames.push(Frame {
            t: (j - j0) as f64 * DT,
            ego,
            agents,
            label: Some(if (template.labeled)(j) { class.id() } else { 0 }),
        });
    }
    ScenarioSequence::new(RawSequence {
        id,
        source: "synthetic".into(),
        hz: TARGET_HZ,
        frames,
        lanes: (template.lanes)(x_min, x_max),
    })
}

/// `n` sequences whose classes cycle through 1 to 7.
pub fn generate_dataset(n: usize, seed: u64, knobs: &SynthKnobs) -> Result<Vec<ScenarioSequence>> {
    (0..n)
        .map(|i| {
            let class = ScenarioClass::ALL[1 + i % 7];
            let s = seed.wrapping_mul(1_000_003).wrapping_add(i as u64);
            let mut seq = generate_synthetic(class, s, knobs)?.into_raw();
            seq.id = format!("synth-{seed}-{i:04}");
            ScenarioSequence::new(seq)
        })
        .collect()
}

/// `per_class` sequences of every listed class, grouped by class.
pub fn generate_per_class(
    classes: &[ScenarioClass],
    per_class: usize,
    seed: u64,
    knobs: &SynthKnobs,
) -> Result<Vec<ScenarioSequence>> {
    let mut out = Vec::with_capacity(classes.len() * per_class);
    for &class in classes {
        for k in 0..per_class {
            let s = seed.wrapping_mul(1_000_003).wrapping_add(k as u64);
            let mut seq = generate_synthetic(class, s, knobs)?.into_raw();
            seq.id = format!("synth-{seed}-c{}-{k:04}", class.id());
            out.push(ScenarioSequence::new(seq)?);
        }
    }
    Ok(out)
}
