use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelConfig, ModelError, ModelParams, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const CHECKPOINT_FORMAT: &str = "scenario-gcn-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct NamedArray {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

/// JSON container of named parameter arrays. Floats are written with
/// shortest round-trip formatting, so save/load is bit-exact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub seed: u64,
    pub config: ModelConfig,
    arrays: Vec<NamedArray>,
}

impl Checkpoint {
    pub fn from_params<S: Scalar>(params: &ModelParams<S>) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            seed: params.seed,
            config: params.config,
            arrays: params
                .iter()
                .map(|(name, t)| NamedArray {
                    name: name.clone(),
                    shape: t.shape().to_vec(),
                    data: t.data().iter().map(|x| x.as_f64()).collect(),
                })
                .collect(),
        }
    }

    pub fn into_params<S: Scalar>(self) -> Result<ModelParams<S>> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(ModelError::Checkpoint(format!(
                "unknown format {:?}",
                self.format
            )));
        }
        if self.version != CHECKPOINT_VERSION {
            return Err(ModelError::Checkpoint(format!(
                "unsupported version {}",
                self.version
            )));
        }
        let mut tensors = BTreeMap::new();
        for a in self.arrays {
            let t = Tensor::from_f64(a.shape, &a.data)?;
            if tensors.insert(a.name.clone(), t).is_some() {
                return Err(ModelError::Checkpoint(format!(
                    "duplicate array {:?}",
                    a.name
                )));
            }
        }
        ModelParams::from_tensors(self.config, self.seed, tensors)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| ModelError::Checkpoint(e.to_string()))
    }
}

impl<S: Scalar> ModelParams<S> {
    pub fn to_json(&self) -> String {
        Checkpoint::from_params(self).to_json()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Checkpoint::from_json(text)?.into_params()
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_json())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ModelError::Checkpoint(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let p = ModelParams::<f64>::init(5, ModelConfig::default()).unwrap();
        let json = p.to_json();
        let q = ModelParams::<f64>::from_json(&json).unwrap();
        assert_eq!(p, q);
        assert_eq!(json, q.to_json());
    }

    #[test]
    fn rejects_foreign_format_and_missing_arrays() {
        let p = ModelParams::<f64>::init(5, ModelConfig::no_temporal()).unwrap();
        let mut c = Checkpoint::from_params(&p);
        c.format = "other".into();
        assert!(c.into_params::<f64>().is_err());
        let mut c = Checkpoint::from_params(&p);
        c.arrays.pop();
        assert!(matches!(
            c.into_params::<f64>(),
            Err(ModelError::MissingParam(_))
        ));
    }
}
