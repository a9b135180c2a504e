use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    ModelConfig, ModelError, Result, ENV_CHANNELS, HIDDEN, N_CLASSES, TEMPORAL_CHANNELS,
    TEMPORAL_LAYERS,
};
use crate::scalar::Scalar;
use crate::scene_graph::VERTEX_FEATURES;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// Uniform in `[-limit, limit]`, `limit = sqrt(6 / (fan_in + fan_out))`.
    Glorot {
        fan_in: usize,
        fan_out: usize,
    },
    Zeros,
    Ones,
}

impl Init {
    pub fn limit(&self) -> f64 {
        match *self {
            Init::Glorot { fan_in, fan_out } => (6.0 / (fan_in + fan_out) as f64).sqrt(),
            Init::Zeros | Init::Ones => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
}

struct Specs(Vec<ParamSpec>);

impl Specs {
    fn weight(&mut self, name: String, c_in: usize, c_out: usize) {
        self.0.push(ParamSpec {
            name,
            shape: vec![c_in, c_out],
            init: Init::Glorot {
                fan_in: c_in,
                fan_out: c_out,
            },
        });
    }

    fn filled(&mut self, name: String, len: usize, init: Init) {
        self.0.push(ParamSpec {
            name,
            shape: vec![len],
            init,
        });
    }

    /// Graph layer: bias-free weight plus layer-norm affine.
    fn gcn(&mut self, prefix: &str, c_in: usize, c_out: usize) {
        self.weight(format!("{prefix}.w"), c_in, c_out);
        self.filled(format!("{prefix}.ln.gain"), c_out, Init::Ones);
        self.filled(format!("{prefix}.ln.bias"), c_out, Init::Zeros);
    }

    fn linear(&mut self, prefix: &str, c_in: usize, c_out: usize) {
        self.weight(format!("{prefix}.w"), c_in, c_out);
        self.filled(format!("{prefix}.b"), c_out, Init::Zeros);
    }

    fn gcn_stack(&mut self, prefix: &str, c_in: usize, widths: &[usize]) {
        let mut c = c_in;
        for (i, &w) in widths.iter().enumerate() {
            self.gcn(&format!("{prefix}.gcn{i}"), c, w);
            c = w;
        }
    }
}

/// Every learnable tensor of a configuration, sorted by name.
pub fn param_specs(config: &ModelConfig) -> Vec<ParamSpec> {
    let mut s = Specs(Vec::new());
    if config.baseline {
        s.gcn_stack("baseline", VERTEX_FEATURES, &ENV_CHANNELS);
        s.linear("baseline.fc", HIDDEN, HIDDEN);
    } else {
        if config.use_map {
            for dir in ["suc", "pre"] {
                let prefix = format!("env.{dir}");
                s.gcn_stack(&prefix, VERTEX_FEATURES, &ENV_CHANNELS);
                s.linear(&format!("{prefix}.fc"), HIDDEN, HIDDEN);
            }
            s.linear("env.merge", HIDDEN, HIDDEN);
            s.gcn_stack("fusion.e2w", HIDDEN, &[HIDDEN, HIDDEN]);
            s.linear("branch.env", HIDDEN, HIDDEN);
        }
        s.gcn("agent.w2a", VERTEX_FEATURES, HIDDEN);
        s.gcn_stack("agent.e2a", HIDDEN, &[HIDDEN, HIDDEN]);
        s.linear("branch.agent", HIDDEN, HIDDEN);
        s.linear("final", HIDDEN, HIDDEN);
    }
    let mut width = HIDDEN;
    if config.temporal {
        for (i, &(k, _, _)) in TEMPORAL_LAYERS.iter().enumerate() {
            s.0.push(ParamSpec {
                name: format!("temporal.conv{i}.w"),
                shape: vec![TEMPORAL_CHANNELS, width, k],
                init: Init::Glorot {
                    fan_in: width * k,
                    fan_out: TEMPORAL_CHANNELS * k,
                },
            });
            s.filled(
                format!("temporal.conv{i}.b"),
                TEMPORAL_CHANNELS,
                Init::Zeros,
            );
            width = TEMPORAL_CHANNELS;
        }
    }
    s.linear("classifier", width, N_CLASSES);
    let mut specs = s.0;
    specs.sort_by(|a, b| a.name.cmp(&b.name));
    specs
}

/// Learnable weights of one model configuration, keyed by name.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<S: Scalar> {
    pub config: ModelConfig,
    pub seed: u64,
    tensors: BTreeMap<String, Tensor<S>>,
}

impl<S: Scalar> ModelParams<S> {
    /// Deterministic initialization: Glorot-uniform weights drawn in name
    /// order from a ChaCha stream, zero biases, unit layer-norm gains.
    pub fn init(seed: u64, config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tensors = BTreeMap::new();
        for spec in param_specs(&config) {
            let len: usize = spec.shape.iter().product();
            let data: Vec<S> = match spec.init {
                Init::Glorot { .. } => {
                    let limit = spec.init.limit();
                    (0..len)
                        .map(|_| S::lit(rng.random_range(-limit..=limit)))
                        .collect()
                }
                Init::Zeros => vec![S::zero(); len],
                Init::Ones => vec![S::one(); len],
            };
            tensors.insert(spec.name, Tensor::new(spec.shape, data)?);
        }
        Ok(Self {
            config,
            seed,
            tensors,
        })
    }

    /// Assembles parameters from named tensors, checking names and shapes
    /// against the configuration.
    pub fn from_tensors(
        config: ModelConfig,
        seed: u64,
        mut tensors: BTreeMap<String, Tensor<S>>,
    ) -> Result<Self> {
        config.validate()?;
        let specs = param_specs(&config);
        for spec in &specs {
            let t = tensors
                .get_mut(&spec.name)
                .ok_or_else(|| ModelError::MissingParam(spec.name.clone()))?;
            if t.shape() != spec.shape.as_slice() {
                return Err(ModelError::ParamShape {
                    name: spec.name.clone(),
                    expected: spec.shape.clone(),
                    actual: t.shape().to_vec(),
                });
            }
            t.requires_grad = false;
            t.grad = None;
        }
        if tensors.len() != specs.len() {
            let unknown = tensors
                .keys()
                .find(|k| !specs.iter().any(|s| &s.name == *k))
                .cloned()
                .unwrap_or_default();
            return Err(ModelError::Checkpoint(format!(
                "unexpected parameter {unknown:?}"
            )));
        }
        Ok(Self {
            config,
            seed,
            tensors,
        })
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<S>> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<S>> {
        self.tensors.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor<S>)> {
        self.tensors.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor<S>)> {
        self.tensors.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.tensors.keys()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn n_scalars(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.values().all(Tensor::all_finite)
    }

    pub fn cast<T: Scalar>(&self) -> ModelParams<T> {
        ModelParams {
            config: self.config,
            seed: self.seed,
            tensors: self
                .tensors
                .iter()
                .map(|(k, v)| (k.clone(), v.cast()))
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_deterministic_per_seed() {
        let a = ModelParams::<f64>::init(3, ModelConfig::default()).unwrap();
        let b = ModelParams::<f64>::init(3, ModelConfig::default()).unwrap();
        let c = ModelParams::<f64>::init(4, ModelConfig::default()).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn weights_respect_fan_limit() {
        let cfg = ModelConfig::default();
        let p = ModelParams::<f64>::init(11, cfg).unwrap();
        for spec in param_specs(&cfg) {
            let t = p.get(&spec.name).unwrap();
            match spec.init {
                Init::Glorot { fan_in, fan_out } => {
                    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                    assert!(t.data().iter().all(|w| w.abs() <= limit), "{}", spec.name);
                }
                Init::Zeros => assert!(t.data().iter().all(|&w| w == 0.0)),
                Init::Ones => assert!(t.data().iter().all(|&w| w == 1.0)),
            }
        }
    }

    #[test]
    fn variants_own_their_parameters() {
        let full = param_specs(&ModelConfig::default());
        assert!(full
            .iter()
            .any(|s| s.name == "env.suc.gcn3.w" && s.shape == [128, 128]));
        assert!(full
            .iter()
            .any(|s| s.name == "temporal.conv3.w" && s.shape == [16, 16, 7]));
        assert!(full
            .iter()
            .any(|s| s.name == "classifier.w" && s.shape == [16, 8]));
        let base = param_specs(&ModelConfig::baseline());
        assert!(base.iter().all(|s| !s.name.starts_with("env.")));
        assert!(base
            .iter()
            .any(|s| s.name == "baseline.gcn0.w" && s.shape == [4, 16]));
        let flat = param_specs(&ModelConfig::no_temporal());
        assert!(flat
            .iter()
            .any(|s| s.name == "classifier.w" && s.shape == [128, 8]));
        let no_map = param_specs(&ModelConfig::no_map());
        assert!(no_map
            .iter()
            .all(|s| !s.name.starts_with("env.") && !s.name.starts_with("fusion.")));
    }

    #[test]
    fn baseline_with_residual_is_rejected() {
        let cfg = ModelConfig {
            residual: true,
            ..ModelConfig::baseline()
        };
        assert!(ModelParams::<f64>::init(0, cfg).is_err());
    }
}
