use std::collections::BTreeMap;
use std::sync::Arc;

use super::{
    ModelConfig, ModelError, ModelParams, Prediction, Result, ENV_CHANNELS, INPUT_SCALE,
    TEMPORAL_LAYERS,
};
use crate::scalar::Scalar;
use crate::scene_graph::{RelationKind, RelationSet, SequenceBatch, VERTEX_FEATURES};
use crate::tensor::{SparseRelation, Tape, Tensor, TensorError, Var};

type Mask<S> = Arc<Vec<S>>;
type Rel<S> = Arc<SparseRelation<S>>;

/// A sequence prepared for one model configuration: scaled features,
/// vertex-partition masks and the stacked, normalized relations of every
/// stage. Building it is the expensive graph work; it can be reused across
/// epochs.
#[derive(Debug, Clone)]
pub struct ModelInput<S: Scalar> {
    n_frames: usize,
    n_vertices: usize,
    features: Tensor<S>,
    labels: Vec<usize>,
    waypoints: Mask<S>,
    ego_agents: Mask<S>,
    ego_waypoints: Mask<S>,
    /// Rows that reach the temporal stage and the pooling.
    active: Mask<S>,
    pool_weights: Mask<S>,
    suc: Option<Rel<S>>,
    pre: Option<Rel<S>>,
    w2a: Option<Rel<S>>,
    e2a: Option<Rel<S>>,
    e2w: Option<Rel<S>>,
    merged: Option<Rel<S>>,
}

fn mask_from<S: Scalar>(flags: impl Iterator<Item = bool>) -> Vec<S> {
    flags
        .map(|b| if b { S::one() } else { S::zero() })
        .collect()
}

impl<S: Scalar> ModelInput<S> {
    pub fn new(batch: &SequenceBatch, config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let t_len = batch.n_frames();
        let n = batch.n_vertices();
        let rows = t_len * n;
        let row_kind = |r: usize| (r % n, batch.mask[r]);

        let valid: Vec<bool> = batch.mask.clone();
        let wp: Vec<bool> = (0..rows)
            .map(|r| {
                let (v, ok) = row_kind(r);
                ok && batch.is_waypoint(v)
            })
            .collect();
        let ego_agents: Vec<bool> = (0..rows)
            .map(|r| {
                let (v, ok) = row_kind(r);
                ok && !batch.is_waypoint(v)
            })
            .collect();
        let ego_wp: Vec<bool> = (0..rows)
            .map(|r| {
                let (v, ok) = row_kind(r);
                ok && (v == 0 || batch.is_waypoint(v))
            })
            .collect();
        let active = if config.use_map {
            valid.clone()
        } else {
            ego_agents.clone()
        };

        let mut pool = vec![S::zero(); rows];
        for t in 0..t_len {
            let frame = &active[t * n..(t + 1) * n];
            let count = frame.iter().filter(|&&a| a).count();
            if count == 0 {
                return Err(ModelError::EmptyFrame(t));
            }
            let w = S::one() / S::lit(count as f64);
            for (v, &a) in frame.iter().enumerate() {
                if a {
                    pool[t * n + v] = w;
                }
            }
        }

        let mut feats = batch.features.cast::<S>().into_data();
        for (i, x) in feats.iter_mut().enumerate() {
            *x *= S::lit(INPUT_SCALE[i % VERTEX_FEATURES]);
        }
        let features = Tensor::new(vec![rows, VERTEX_FEATURES], feats)?;

        let stage = |pick: &dyn Fn(
            &RelationSet,
        )
            -> std::result::Result<SparseRelation<f64>, TensorError>,
                     partition: &[bool]|
         -> Result<Rel<S>> {
            let mut blocks = Vec::with_capacity(t_len);
            for (t, rels) in batch.relations.iter().enumerate() {
                let normalized = pick(rels)?.normalize()?;
                blocks.push(normalized.close_over(&partition[t * n..(t + 1) * n])?);
            }
            Ok(Arc::new(SparseRelation::stack(&blocks)?.cast()))
        };
        let single =
            |kind: RelationKind| move |r: &RelationSet| Ok::<_, TensorError>(r.get(kind).clone());

        let mut input = Self {
            n_frames: t_len,
            n_vertices: n,
            features,
            labels: batch.labels.clone(),
            waypoints: Arc::new(mask_from(wp.iter().copied())),
            ego_agents: Arc::new(mask_from(ego_agents.iter().copied())),
            ego_waypoints: Arc::new(mask_from(ego_wp.iter().copied())),
            active: Arc::new(mask_from(active.iter().copied())),
            pool_weights: Arc::new(pool),
            suc: None,
            pre: None,
            w2a: None,
            e2a: None,
            e2w: None,
            merged: None,
        };
        if config.baseline {
            let use_map = config.use_map;
            let merged = move |r: &RelationSet| {
                if use_map {
                    r.merged()
                } else {
                    Ok(r.e2a.clone())
                }
            };
            input.merged = Some(stage(&merged, &active)?);
            return Ok(input);
        }
        if config.use_map {
            input.suc = Some(stage(&single(RelationKind::Suc), &wp)?);
            input.pre = Some(stage(&single(RelationKind::Pre), &wp)?);
            input.w2a = Some(stage(&single(RelationKind::W2A), &ego_agents)?);
            input.e2w = Some(stage(&single(RelationKind::E2W), &ego_wp)?);
        } else {
            let none = |r: &RelationSet| Ok(SparseRelation::empty(r.w2a.n_vertices()));
            input.w2a = Some(stage(&none, &ego_agents)?);
        }
        input.e2a = Some(stage(&single(RelationKind::E2A), &ego_agents)?);
        Ok(input)
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn n_vertices(&self) -> usize {
        self.n_vertices
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Validity of rows entering the temporal stage, `T * N` entries.
    pub fn active_mask(&self) -> &[S] {
        &self.active
    }
}

/// Tape handles of the model parameters, by name.
pub type ParamVars = BTreeMap<String, Var>;

/// One forward pass being recorded on a tape.
pub struct Network<'a, S: Scalar> {
    pub tape: &'a mut Tape<S>,
    pub vars: &'a ParamVars,
    pub input: &'a ModelInput<S>,
    pub config: ModelConfig,
}

fn require<S: Scalar>(rel: &Option<Rel<S>>, what: &str) -> Result<Rel<S>> {
    rel.clone().ok_or_else(|| {
        ModelError::Config(format!("input was prepared without the {what} relation"))
    })
}

impl<'a, S: Scalar> Network<'a, S> {
    /// Records all parameters on `tape`, as trainable leaves when
    /// `trainable` is set and as constants otherwise.
    pub fn load_params(tape: &mut Tape<S>, params: &ModelParams<S>, trainable: bool) -> ParamVars {
        params
            .iter()
            .map(|(name, t)| {
                let v = if trainable {
                    tape.param(t.clone())
                } else {
                    tape.constant(t.clone())
                };
                (name.clone(), v)
            })
            .collect()
    }

    fn p(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| ModelError::MissingParam(name.to_string()))
    }

    fn features(&mut self) -> Var {
        self.tape.constant(self.input.features.clone())
    }

    /// `mask(relu(layer_norm(P h W)))`
    fn gcn(&mut self, prefix: &str, rel: &Rel<S>, h: Var, mask: &Mask<S>) -> Result<Var> {
        let w = self.p(&format!("{prefix}.w"))?;
        let gain = self.p(&format!("{prefix}.ln.gain"))?;
        let bias = self.p(&format!("{prefix}.ln.bias"))?;
        let hw = self.tape.matmul(h, w)?;
        let agg = self.tape.propagate(rel, hw)?;
        let normed = self.tape.layer_norm(agg, gain, bias)?;
        let act = self.tape.relu(normed);
        Ok(self.tape.scale_rows(act, mask)?)
    }

    fn linear(&mut self, prefix: &str, h: Var) -> Result<Var> {
        let w = self.p(&format!("{prefix}.w"))?;
        let b = self.p(&format!("{prefix}.b"))?;
        Ok(self.tape.linear(h, w, b)?)
    }

    fn masked_linear(&mut self, prefix: &str, h: Var, mask: &Mask<S>) -> Result<Var> {
        let y = self.linear(prefix, h)?;
        Ok(self.tape.scale_rows(y, mask)?)
    }

    fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        Ok(self.tape.add(a, b)?)
    }

    /// Environment encoder: two parallel GCN stacks over the successor and
    /// predecessor relations, summed and merged. Non-waypoint rows are zero.
    pub fn env_encode(&mut self) -> Result<Var> {
        let wp = Arc::clone(&self.input.waypoints);
        let x = self.features();
        let x = self.tape.scale_rows(x, &wp)?;
        let mut outs = Vec::with_capacity(2);
        for (dir, rel) in [
            ("suc", require(&self.input.suc, "successor")?),
            ("pre", require(&self.input.pre, "predecessor")?),
        ] {
            let mut h = x;
            let mut skip = None;
            for i in 0..ENV_CHANNELS.len() {
                if i + 1 == ENV_CHANNELS.len() {
                    skip = Some(h);
                }
                h = self.gcn(&format!("env.{dir}.gcn{i}"), &rel, h, &wp)?;
            }
            h = self.masked_linear(&format!("env.{dir}.fc"), h, &wp)?;
            if self.config.residual {
                h = self.add(h, skip.expect("env stack has layers"))?;
            }
            outs.push(h);
        }
        let sum = self.add(outs[0], outs[1])?;
        self.masked_linear("env.merge", sum, &wp)
    }

    /// Agent encoder: the W2A layer embeds raw agent and ego features and
    /// collects environment features from nearby waypoints, then two E2A
    /// layers aggregate agents into the ego vertex.
    pub fn agent_encode(&mut self, env: Option<Var>) -> Result<Var> {
        let ea = Arc::clone(&self.input.ego_agents);
        let x = self.features();
        let x = self.tape.scale_rows(x, &ea)?;
        let w = self.p("agent.w2a.w")?;
        let mut h = self.tape.matmul(x, w)?;
        if let Some(env) = env {
            h = self.add(h, env)?;
        }
        let w2a = require(&self.input.w2a, "W2A")?;
        let gain = self.p("agent.w2a.ln.gain")?;
        let bias = self.p("agent.w2a.ln.bias")?;
        let agg = self.tape.propagate(&w2a, h)?;
        let normed = self.tape.layer_norm(agg, gain, bias)?;
        let act = self.tape.relu(normed);
        let a1 = self.tape.scale_rows(act, &ea)?;

        let e2a = require(&self.input.e2a, "E2A")?;
        let mut h = a1;
        for i in 0..2 {
            h = self.gcn(&format!("agent.e2a.gcn{i}"), &e2a, h, &ea)?;
        }
        if self.config.residual {
            h = self.add(h, a1)?;
        }
        Ok(h)
    }

    /// Ego-environment fusion: E2W block over the environment features (with
    /// the agent-stage ego vertex), both branches through their own linear
    /// layer, summed, then the final linear layer. Without map data only the
    /// agent branch remains.
    pub fn fuse(&mut self, env: Option<Var>, agent: Var) -> Result<Var> {
        let active = Arc::clone(&self.input.active);
        let agent_branch = self.linear("branch.agent", agent)?;
        let merged = match env {
            Some(env) => {
                let e2w = require(&self.input.e2w, "E2W")?;
                let ego_wp = Arc::clone(&self.input.ego_waypoints);
                let f0 = self.add(env, agent)?;
                let mut h = f0;
                for i in 0..2 {
                    h = self.gcn(&format!("fusion.e2w.gcn{i}"), &e2w, h, &ego_wp)?;
                }
                if self.config.residual {
                    h = self.add(h, f0)?;
                }
                let env_branch = self.linear("branch.env", h)?;
                self.add(agent_branch, env_branch)?
            }
            None => agent_branch,
        };
        self.masked_linear("final", merged, &active)
    }

    /// Single GCN over the union of all relations.
    pub fn baseline_encode(&mut self) -> Result<Var> {
        let active = Arc::clone(&self.input.active);
        let rel = require(&self.input.merged, "merged")?;
        let x = self.features();
        let mut h = self.tape.scale_rows(x, &active)?;
        for i in 0..ENV_CHANNELS.len() {
            h = self.gcn(&format!("baseline.gcn{i}"), &rel, h, &active)?;
        }
        self.masked_linear("baseline.fc", h, &active)
    }

    pub fn spatial_encode(&mut self) -> Result<Var> {
        if self.config.baseline {
            return self.baseline_encode();
        }
        let env = if self.config.use_map {
            Some(self.env_encode()?)
        } else {
            None
        };
        let agent = self.agent_encode(env)?;
        self.fuse(env, agent)
    }

    /// Dilated temporal CNN applied to every vertex series independently;
    /// inactive rows are zeroed after each layer.
    pub fn temporal_forward(&mut self, spatial: Var) -> Result<Var> {
        let active = Arc::clone(&self.input.active);
        let (t_len, n) = (self.input.n_frames, self.input.n_vertices);
        let mut c = self.tape.value(spatial).cols();
        let mut h = self.tape.reshape(spatial, vec![t_len, n, c])?;
        for (i, &(_, dilation, pad)) in TEMPORAL_LAYERS.iter().enumerate() {
            let w = self.p(&format!("temporal.conv{i}.w"))?;
            let b = self.p(&format!("temporal.conv{i}.b"))?;
            let y = self.tape.conv1d(h, w, dilation, pad)?;
            let y = self.tape.add_bias(y, b)?;
            let y = self.tape.selu(y);
            h = self.tape.scale_rows(y, &active)?;
            c = self.tape.value(h).cols();
        }
        Ok(self.tape.reshape(h, vec![t_len * n, c])?)
    }

    /// Masked mean over the vertices of each frame, then the linear
    /// classifier: `[T, 8]` logits.
    pub fn classify(&mut self, features: Var) -> Result<Var> {
        let pooled =
            self.tape
                .segment_sum(features, self.input.n_frames, &self.input.pool_weights)?;
        self.linear("classifier", pooled)
    }

    pub fn logits(&mut self) -> Result<Var> {
        let spatial = self.spatial_encode()?;
        let features = if self.config.temporal {
            self.temporal_forward(spatial)?
        } else {
            spatial
        };
        self.classify(features)
    }
}

/// Row-wise softmax.
pub fn softmax_rows<S: Scalar>(logits: &Tensor<S>) -> Tensor<S> {
    let c = logits.cols();
    let mut out = logits.data().to_vec();
    for row in out.chunks_mut(c.max(1)) {
        let max = row.iter().copied().fold(S::neg_infinity(), S::max);
        let mut z = S::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            z += *v;
        }
        for v in row.iter_mut() {
            *v /= z;
        }
    }
    Tensor::new(logits.shape().to_vec(), out).expect("same shape")
}

/// Inference on a prepared input.
pub fn model_forward<S: Scalar>(
    params: &ModelParams<S>,
    input: &ModelInput<S>,
) -> Result<Prediction<S>> {
    let mut tape = Tape::new();
    let vars = Network::load_params(&mut tape, params, false);
    let mut net = Network {
        tape: &mut tape,
        vars: &vars,
        input,
        config: params.config,
    };
    let logits = net.logits()?;
    Ok(Prediction::from_logits(tape.value(logits).clone()))
}

/// Inference on a raw batch.
pub fn predict<S: Scalar>(params: &ModelParams<S>, batch: &SequenceBatch) -> Result<Prediction<S>> {
    let input = ModelInput::new(batch, &params.config)?;
    model_forward(params, &input)
}

/// Class-weighted cross-entropy of one sequence and its gradient with
/// respect to every parameter.
pub fn loss_and_grads<S: Scalar>(
    params: &ModelParams<S>,
    input: &ModelInput<S>,
    class_weights: &[S],
) -> Result<(S, BTreeMap<String, Vec<S>>)> {
    let mut tape = Tape::new();
    let vars = Network::load_params(&mut tape, params, true);
    let mut net = Network {
        tape: &mut tape,
        vars: &vars,
        input,
        config: params.config,
    };
    let logits = net.logits()?;
    let loss = tape.weighted_cross_entropy(logits, &input.labels, class_weights)?;
    let value = tape.value(loss).data()[0];
    tape.backward(loss)?;
    let grads = vars
        .iter()
        .map(|(name, &v)| {
            let g = tape
                .grad(v)
                .expect("trainable leaf has a gradient")
                .to_vec();
            (name.clone(), g)
        })
        .collect();
    Ok((value, grads))
}
