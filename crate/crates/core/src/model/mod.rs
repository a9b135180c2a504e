//! Spatial graph encoder, dilated temporal CNN and per-frame classifier.
//!
//! The network consumes a whole [`SequenceBatch`](crate::scene_graph::SequenceBatch)
//! at once: all frames are stacked block-diagonally so each graph layer is a
//! single propagation plus one matrix product over `T * N` rows.

mod checkpoint;
mod forward;
mod params;

pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use forward::{
    loss_and_grads, model_forward, predict, softmax_rows, ModelInput, Network, ParamVars,
};
pub use params::{param_specs, Init, ModelParams, ParamSpec};

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;
use crate::tensor::{Tensor, TensorError};

/// Number of scenario classes, including "no scenario".
pub const N_CLASSES: usize = 8;
/// Output widths of the four environment GCN layers.
pub const ENV_CHANNELS: [usize; 4] = [16, 64, 128, 128];
/// Width of every spatial feature after the first environment layers.
pub const HIDDEN: usize = 128;
/// Channels of the temporal CNN.
pub const TEMPORAL_CHANNELS: usize = 16;
/// `(kernel, dilation, padding)` of the four temporal layers.
pub const TEMPORAL_LAYERS: [(usize, usize, usize); 4] =
    [(3, 1, 1), (3, 2, 2), (3, 4, 4), (7, 1, 3)];
/// Per-channel scaling of the raw `(x, y, phi, v)` vertex features.
pub const INPUT_SCALE: [f64; 4] = [0.1, 0.1, 1.0, 0.1];

/// Frames on each side of an output frame that can influence it.
pub fn receptive_radius() -> usize {
    TEMPORAL_LAYERS
        .iter()
        .map(|&(k, d, _)| (k - 1) * d / 2)
        .sum()
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("frame {0} has no valid vertex to pool")]
    EmptyFrame(usize),
    #[error("missing parameter {0:?}")]
    MissingParam(String),
    #[error("parameter {name:?} has shape {actual:?}, expected {expected:?}")]
    ParamShape {
        name: String,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

pub type Result<T> = std::result::Result<T, ModelError>;

/// Architecture switches. The default is the full model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Replace the three-stage encoder by one GCN over the union relation.
    pub baseline: bool,
    /// Use lane waypoints (environment encoder and fusion).
    pub use_map: bool,
    /// Residual connections around the spatial blocks.
    pub residual: bool,
    /// Temporal CNN between the spatial encoder and the classifier.
    pub temporal: bool,
    /// Proximity edges weighted by reciprocal distance.
    pub weighted_adjacency: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            baseline: false,
            use_map: true,
            residual: false,
            temporal: true,
            weighted_adjacency: false,
        }
    }
}

impl ModelConfig {
    pub fn baseline() -> Self {
        Self {
            baseline: true,
            ..Self::default()
        }
    }

    pub fn no_temporal() -> Self {
        Self {
            temporal: false,
            ..Self::default()
        }
    }

    pub fn no_map() -> Self {
        Self {
            use_map: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.baseline && self.residual {
            return Err(ModelError::Config(
                "the baseline encoder has no residual variant".into(),
            ));
        }
        Ok(())
    }

    pub fn graph_options(&self) -> crate::scene_graph::GraphOptions {
        crate::scene_graph::GraphOptions {
            weighted: self.weighted_adjacency,
            ..Default::default()
        }
    }
}

/// Per-frame output of the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction<S: Scalar> {
    /// `[T, 8]`
    pub logits: Tensor<S>,
    /// `[T, 8]`, rows sum to one.
    pub probabilities: Tensor<S>,
    /// Argmax class of every frame.
    pub labels: Vec<usize>,
}

impl<S: Scalar> Prediction<S> {
    pub fn from_logits(logits: Tensor<S>) -> Self {
        let probabilities = softmax_rows(&logits);
        let labels = (0..probabilities.rows())
            .map(|t| argmax(probabilities.row(t)))
            .collect();
        Self {
            logits,
            probabilities,
            labels,
        }
    }
}

/// Index of the first maximum.
pub fn argmax<S: Scalar>(row: &[S]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}
