//! Scenario data: the JSON-lines sequence format, 4 Hz alignment, scenario
//! extraction, train/val splitting and a synthetic scenario generator.

mod extract;
mod io;
mod resample;
mod split;
mod synth;

pub use extract::extract_scenarios;
pub use io::{parse_jsonl, read_jsonl, round_significant, to_jsonl_line, write_jsonl};
pub use resample::{resample_to_4hz, TARGET_HZ};
pub use split::{dominant_class, split, DatasetManifest, Split};
pub use synth::{
    generate_dataset, generate_per_class, generate_synthetic, SynthKnobs, DURATION_STATS,
    LANE_WIDTH,
};

use serde::{Deserialize, Serialize};

use crate::lane_graph::{LaneGraph, LaneGraphError, LaneSegment};
use crate::scene_graph::{
    build_sequence, AgentState, EgoPose, GraphOptions, SceneError, SequenceBatch,
};

pub const N_CLASSES: usize = 8;

const CLASS_NAMES: [&str; N_CLASSES] = [
    "no-scenario",
    "cut-in",
    "stationary-vehicle-in-lane",
    "ego-lane-change-right",
    "ego-lane-change-left",
    "right-turn-at-crossing",
    "left-turn-at-crossing",
    "straight-ahead-at-crossing",
];

/// Per-frame scenario label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ScenarioClass {
    NoScenario = 0,
    CutIn = 1,
    StationaryVehicleInLane = 2,
    EgoLaneChangeRight = 3,
    EgoLaneChangeLeft = 4,
    RightTurnAtCrossing = 5,
    LeftTurnAtCrossing = 6,
    StraightAheadAtCrossing = 7,
}

impl ScenarioClass {
    pub const ALL: [ScenarioClass; N_CLASSES] = [
        Self::NoScenario,
        Self::CutIn,
        Self::StationaryVehicleInLane,
        Self::EgoLaneChangeRight,
        Self::EgoLaneChangeLeft,
        Self::RightTurnAtCrossing,
        Self::LeftTurnAtCrossing,
        Self::StraightAheadAtCrossing,
    ];

    pub fn from_id(id: usize) -> Option<Self> {
        Self::ALL.get(id).copied()
    }

    pub fn id(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        CLASS_NAMES[self.id()]
    }

    pub fn from_name(name: &str) -> Option<Self> {
        CLASS_NAMES
            .iter()
            .position(|&n| n == name)
            .map(|i| Self::ALL[i])
    }
}

/// Name of a class id, or `"unknown"`.
pub fn class_name(id: usize) -> &'static str {
    CLASS_NAMES.get(id).copied().unwrap_or("unknown")
}

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("sequence {id}: {reason}")]
    Invalid { id: String, reason: String },
    #[error("unsupported sample rate {0} Hz (expected 2, 4 or 10)")]
    UnsupportedRate(f64),
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Lanes(#[from] LaneGraphError),
    #[error(transparent)]
    Scene(#[from] SceneError),
}

pub type Result<T> = std::result::Result<T, DatasetError>;

/// One time step of a sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub t: f64,
    pub ego: EgoPose,
    #[serde(default)]
    pub agents: Vec<AgentState>,
    #[serde(default)]
    pub label: Option<usize>,
}

/// A recorded sequence at its native rate; labels may be missing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawSequence {
    pub id: String,
    pub source: String,
    pub hz: f64,
    pub frames: Vec<Frame>,
    #[serde(default)]
    pub lanes: Vec<LaneSegment>,
}

impl RawSequence {
    fn invalid(&self, reason: impl Into<String>) -> DatasetError {
        DatasetError::Invalid {
            id: self.id.clone(),
            reason: reason.into(),
        }
    }

    /// Checks timing, finiteness, track-id uniqueness and label range.
    pub fn validate(&self) -> Result<()> {
        if !(self.hz > 0.0 && self.hz.is_finite()) {
            return Err(self.invalid(format!("sample rate {} is not positive", self.hz)));
        }
        if self.frames.is_empty() {
            return Err(self.invalid("no frames"));
        }
        let dt = 1.0 / self.hz;
        for (i, w) in self.frames.windows(2).enumerate() {
            let step = w[1].t - w[0].t;
            if (step - dt).abs() > 1e-6 {
                return Err(self.invalid(format!(
                    "frames {i} and {} are {step} s apart, expected {dt} s",
                    i + 1
                )));
            }
        }
        for (i, f) in self.frames.iter().enumerate() {
            let e = &f.ego;
            if ![f.t, e.x, e.y, e.phi, e.v].iter().all(|v| v.is_finite()) {
                return Err(self.invalid(format!("frame {i}: non-finite ego state")));
            }
            let mut ids: Vec<u64> = Vec::with_capacity(f.agents.len());
            for a in &f.agents {
                if ![a.x, a.y, a.phi, a.v].iter().all(|v| v.is_finite()) || a.v < 0.0 {
                    return Err(
                        self.invalid(format!("frame {i}: invalid state of agent {}", a.track_id))
                    );
                }
                ids.push(a.track_id);
            }
            ids.sort_unstable();
            if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
                return Err(self.invalid(format!("frame {i}: track id {} repeated", w[0])));
            }
            if let Some(l) = f.label {
                if l >= N_CLASSES {
                    return Err(self.invalid(format!("frame {i}: label {l} out of range")));
                }
            }
        }
        Ok(())
    }

    pub fn labels(&self) -> Option<Vec<usize>> {
        self.frames.iter().map(|f| f.label).collect()
    }

    pub fn lane_graph(&self) -> Result<LaneGraph> {
        Ok(LaneGraph::new(self.lanes.clone())?)
    }
}

/// A labeled 4 Hz sequence containing at least one scenario frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSequence(RawSequence);

impl ScenarioSequence {
    pub fn new(raw: RawSequence) -> Result<Self> {
        raw.validate()?;
        if (raw.hz - TARGET_HZ).abs() > 1e-9 {
            return Err(raw.invalid(format!("sample rate {} Hz, expected 4 Hz", raw.hz)));
        }
        let Some(labels) = raw.labels() else {
            return Err(raw.invalid("every frame needs a label"));
        };
        if labels.iter().all(|&l| l == 0) {
            return Err(raw.invalid("no scenario frame (all labels are 0)"));
        }
        if !(8..=92).contains(&labels.len()) {
            log::warn!(
                "sequence {} has {} frames, outside the usual 8..=92",
                raw.id,
                labels.len()
            );
        }
        Ok(Self(raw))
    }

    pub fn raw(&self) -> &RawSequence {
        &self.0
    }

    pub fn into_raw(self) -> RawSequence {
        self.0
    }

    pub fn id(&self) -> &str {
        &self.0.id
    }

    pub fn len(&self) -> usize {
        self.0.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.frames.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.0.frames.iter().map(|f| f.label.unwrap_or(0)).collect()
    }

    /// Scene graphs of all frames, aligned into one batch.
    pub fn to_batch(&self, options: &GraphOptions) -> Result<SequenceBatch> {
        let lanes = self.0.lane_graph()?;
        let frames: Vec<(EgoPose, Vec<AgentState>)> = self
            .0
            .frames
            .iter()
            .map(|f| (f.ego, f.agents.clone()))
            .collect();
        Ok(build_sequence(&frames, &self.labels(), &lanes, options)?)
    }
}

/// Frame count of every class over a set of sequences.
pub fn label_counts<'a>(
    seqs: impl IntoIterator<Item = &'a ScenarioSequence>,
) -> [usize; N_CLASSES] {
    let mut counts = [0; N_CLASSES];
    for s in seqs {
        for l in s.labels() {
            counts[l] += 1;
        }
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(t: f64, label: Option<usize>) -> Frame {
        Frame {
            t,
            ego: EgoPose {
                x: t,
                y: 0.0,
                phi: 0.0,
                v: 1.0,
            },
            agents: vec![],
            label,
        }
    }

    fn raw(labels: &[usize]) -> RawSequence {
        RawSequence {
            id: "s".into(),
            source: "test".into(),
            hz: 4.0,
            frames: labels
                .iter()
                .enumerate()
                .map(|(i, &l)| frame(i as f64 * 0.25, Some(l)))
                .collect(),
            lanes: vec![],
        }
    }

    #[test]
    fn class_names_round_trip() {
        for c in ScenarioClass::ALL {
            assert_eq!(ScenarioClass::from_name(c.name()), Some(c));
            assert_eq!(ScenarioClass::from_id(c.id()), Some(c));
        }
        assert_eq!(class_name(2), "stationary-vehicle-in-lane");
    }

    #[test]
    fn scenario_sequence_requires_a_scenario() {
        assert!(ScenarioSequence::new(raw(&[0; 10])).is_err());
        assert!(ScenarioSequence::new(raw(&[0, 0, 1, 1, 0, 0, 0, 0])).is_ok());
        let mut r = raw(&[0, 1, 1]);
        r.frames[1].label = None;
        assert!(ScenarioSequence::new(r).is_err());
    }

    #[test]
    fn validation_catches_bad_timing_and_duplicates() {
        let mut r = raw(&[0, 1, 1]);
        r.frames[2].t = 0.6;
        assert!(r.validate().is_err());
        let mut r = raw(&[0, 1, 1]);
        let a = AgentState {
            track_id: 3,
            x: 0.0,
            y: 0.0,
            phi: 0.0,
            v: 0.0,
        };
        r.frames[0].agents = vec![a, a];
        assert!(r.validate().is_err());
    }
}
