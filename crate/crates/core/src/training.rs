//! Class-weighted training with Adam and a step learning-rate schedule.

use std::collections::BTreeMap;
use std::fmt::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::evaluation::{frame_accuracy, mean_pr_auc, EvalError};
use crate::model::{loss_and_grads, model_forward, ModelError, ModelInput, ModelParams, N_CLASSES};
use crate::scalar::Scalar;
use crate::tensor::{Tape, Tensor, TensorError};

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("class {class} has no training frames; class weights are undefined. Add sequences of this class (augment the dataset) before training")]
    EmptyClass { class: usize },
    #[error("epoch {epoch} is outside 1..={epochs}")]
    Epoch { epoch: usize, epochs: usize },
    #[error("non-finite gradient in {param}[{index}] (value {value}) at step {step}")]
    NonFiniteGradient {
        param: String,
        index: usize,
        value: f64,
        step: u64,
    },
    #[error("optimizer state does not match parameter {0}")]
    State(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

pub type Result<T> = std::result::Result<T, TrainError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr0: f64,
    pub decay_factor: f64,
    /// The learning rate is multiplied by `decay_factor` after each of these
    /// epochs.
    pub decay_after_epochs: Vec<usize>,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 25,
            lr0: 1e-4,
            decay_factor: 0.1,
            decay_after_epochs: vec![8, 14, 18],
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return bad("lr0 must be positive");
        }
        if !(self.decay_factor > 0.0 && self.decay_factor.is_finite()) {
            return bad("decay factor must be positive");
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2)) {
            return bad("Adam betas must lie in [0, 1)");
        }
        if self.eps.is_nan() || self.eps <= 0.0 {
            return bad("Adam epsilon must be positive");
        }
        Ok(())
    }
}

/// Learning rate of a 1-indexed epoch.
pub fn lr_at_epoch(cfg: &TrainConfig, epoch: usize) -> Result<f64> {
    if epoch == 0 || epoch > cfg.epochs {
        return Err(TrainError::Epoch {
            epoch,
            epochs: cfg.epochs,
        });
    }
    let decays = cfg
        .decay_after_epochs
        .iter()
        .filter(|&&e| e < epoch)
        .count();
    Ok(cfg.lr0 * cfg.decay_factor.powi(decays as i32))
}

/// Inverse-frequency class weights `w_i = N / (n_classes * n_i)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    pub w: [f64; N_CLASSES],
}

impl ClassWeights {
    pub fn uniform() -> Self {
        Self {
            w: [1.0; N_CLASSES],
        }
    }

    pub fn cast<S: Scalar>(&self) -> Vec<S> {
        self.w.iter().map(|&w| S::lit(w)).collect()
    }
}

pub fn compute_class_weights(counts: &[usize; N_CLASSES]) -> Result<ClassWeights> {
    if let Some(class) = counts.iter().position(|&n| n == 0) {
        return Err(TrainError::EmptyClass { class });
    }
    let total: usize = counts.iter().sum();
    let mut w = [0.0; N_CLASSES];
    for (wi, &n) in w.iter_mut().zip(counts) {
        *wi = total as f64 / (N_CLASSES * n) as f64;
    }
    Ok(ClassWeights { w })
}

/// Frame count of every class.
pub fn label_counts<'a>(labels: impl IntoIterator<Item = &'a [usize]>) -> [usize; N_CLASSES] {
    let mut counts = [0; N_CLASSES];
    for seq in labels {
        for &l in seq {
            counts[l] += 1;
        }
    }
    counts
}

/// Class-weighted cross-entropy of `[T, C]` logits, averaged over frames.
pub fn weighted_cross_entropy<S: Scalar>(
    logits: &Tensor<S>,
    labels: &[usize],
    weights: &[S],
) -> Result<S> {
    let mut tape = Tape::new();
    let x = tape.constant(logits.clone());
    let loss = tape.weighted_cross_entropy(x, labels, weights)?;
    Ok(tape.value(loss).data()[0])
}

/// One bias-corrected Adam update of a flat parameter slice; `t` is the
/// 1-based step count.
#[allow(clippy::too_many_arguments)]
pub fn adam_update<S: Scalar>(
    x: &mut [S],
    g: &[S],
    m: &mut [S],
    v: &mut [S],
    t: u64,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
) {
    let (b1, b2) = (S::lit(beta1), S::lit(beta2));
    let one = S::one();
    let c1 = S::lit(1.0 - beta1.powi(t as i32));
    let c2 = S::lit(1.0 - beta2.powi(t as i32));
    let (lr, eps) = (S::lit(lr), S::lit(eps));
    for i in 0..x.len() {
        m[i] = b1 * m[i] + (one - b1) * g[i];
        v[i] = b2 * v[i] + (one - b2) * g[i] * g[i];
        let m_hat = m[i] / c1;
        let v_hat = v[i] / c2;
        x[i] -= lr * m_hat / (v_hat.sqrt() + eps);
    }
}

/// Adam moments for every named parameter.
#[derive(Debug, Clone)]
pub struct Adam<S: Scalar> {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    moments: BTreeMap<String, (Vec<S>, Vec<S>)>,
}

impl<S: Scalar> Adam<S> {
    pub fn new(beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            beta1,
            beta2,
            eps,
            step: 0,
            moments: BTreeMap::new(),
        }
    }

    pub fn from_config(cfg: &TrainConfig) -> Self {
        Self::new(cfg.beta1, cfg.beta2, cfg.eps)
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one step to every parameter with a gradient. Nothing is
    /// modified when any gradient entry is non-finite.
    pub fn step(
        &mut self,
        params: &mut ModelParams<S>,
        grads: &BTreeMap<String, Vec<S>>,
        lr: f64,
    ) -> Result<()> {
        for (name, g) in grads {
            let p = params
                .get(name)
                .ok_or_else(|| TrainError::State(name.clone()))?;
            if p.len() != g.len() {
                return Err(TrainError::State(name.clone()));
            }
            if let Some(index) = g.iter().position(|x| !x.is_finite()) {
                return Err(TrainError::NonFiniteGradient {
                    param: name.clone(),
                    index,
                    value: g[index].as_f64(),
                    step: self.step + 1,
                });
            }
        }
        self.step += 1;
        for (name, g) in grads {
            let p = params.get_mut(name).expect("checked above");
            let (m, v) = self
                .moments
                .entry(name.clone())
                .or_insert_with(|| (vec![S::zero(); g.len()], vec![S::zero(); g.len()]));
            adam_update(
                p.data_mut(),
                g,
                m,
                v,
                self.step,
                lr,
                self.beta1,
                self.beta2,
                self.eps,
            );
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_mean_pr_auc: Option<f64>,
}

pub fn metrics_csv(log: &[EpochMetrics]) -> String {
    let mut out = String::from("epoch,lr,train_loss,val_mean_pr_auc\n");
    for m in log {
        let auc = m
            .val_mean_pr_auc
            .map(|a| format!("{a:.6}"))
            .unwrap_or_default();
        let _ = writeln!(out, "{},{:e},{:.6},{}", m.epoch, m.lr, m.train_loss, auc);
    }
    out
}

/// Stateful training loop: one sequence per optimizer step, a seeded
/// shuffle per epoch, validation PR-AUC after every epoch.
pub struct Trainer<S: Scalar> {
    cfg: TrainConfig,
    params: ModelParams<S>,
    train: Vec<ModelInput<S>>,
    val: Vec<ModelInput<S>>,
    weights: Vec<S>,
    adam: Adam<S>,
    rng: ChaCha8Rng,
    log: Vec<EpochMetrics>,
}

impl<S: Scalar> Trainer<S> {
    /// Class weights are derived from the training labels.
    pub fn new(
        cfg: TrainConfig,
        params: ModelParams<S>,
        train: Vec<ModelInput<S>>,
        val: Vec<ModelInput<S>>,
    ) -> Result<Self> {
        let counts = label_counts(train.iter().map(|i| i.labels()));
        let weights = compute_class_weights(&counts)?;
        Self::with_class_weights(cfg, params, train, val, weights)
    }

    pub fn with_class_weights(
        cfg: TrainConfig,
        params: ModelParams<S>,
        train: Vec<ModelInput<S>>,
        val: Vec<ModelInput<S>>,
        weights: ClassWeights,
    ) -> Result<Self> {
        cfg.validate()?;
        if train.is_empty() {
            return Err(TrainError::Config("the training split is empty".into()));
        }
        Ok(Self {
            adam: Adam::from_config(&cfg),
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            weights: weights.cast(),
            cfg,
            params,
            train,
            val,
            log: Vec::new(),
        })
    }

    pub fn params(&self) -> &ModelParams<S> {
        &self.params
    }

    pub fn log(&self) -> &[EpochMetrics] {
        &self.log
    }

    pub fn epochs_done(&self) -> usize {
        self.log.len()
    }

    pub fn run_epoch(&mut self) -> Result<EpochMetrics> {
        let epoch = self.log.len() + 1;
        let lr = lr_at_epoch(&self.cfg, epoch)?;
        let mut order: Vec<usize> = (0..self.train.len()).collect();
        order.shuffle(&mut self.rng);
        let mut total = 0.0;
        for &i in &order {
            let (loss, grads) = loss_and_grads(&self.params, &self.train[i], &self.weights)?;
            self.adam.step(&mut self.params, &grads, lr)?;
            total += loss.as_f64();
        }
        let metrics = EpochMetrics {
            epoch,
            lr,
            train_loss: total / order.len() as f64,
            val_mean_pr_auc: self.val_pr_auc()?,
        };
        log::info!(
            "epoch {epoch}: lr {lr:e}, train loss {:.5}, val mean PR-AUC {}",
            metrics.train_loss,
            metrics
                .val_mean_pr_auc
                .map_or_else(|| "n/a".to_string(), |a| format!("{a:.4}"))
        );
        self.log.push(metrics.clone());
        Ok(metrics)
    }

    fn val_pr_auc(&self) -> Result<Option<f64>> {
        if self.val.is_empty() {
            return Ok(None);
        }
        let (probs, gt) = pooled_probabilities(&self.params, &self.val)?;
        let m = mean_pr_auc(&probs, &gt, N_CLASSES)?;
        Ok((!m.mean.is_nan()).then_some(m.mean))
    }

    /// Frame accuracy over the training split.
    pub fn train_accuracy(&self) -> Result<f64> {
        let (mut gt, mut pred) = (Vec::new(), Vec::new());
        for input in &self.train {
            let p = model_forward(&self.params, input)?;
            gt.extend_from_slice(input.labels());
            pred.extend(p.labels);
        }
        Ok(frame_accuracy(&gt, &pred)?)
    }

    pub fn finish(self) -> (ModelParams<S>, Vec<EpochMetrics>) {
        (self.params, self.log)
    }
}

/// Class probabilities and labels of all frames, pooled over sequences.
pub fn pooled_probabilities<S: Scalar>(
    params: &ModelParams<S>,
    inputs: &[ModelInput<S>],
) -> Result<(Vec<Vec<f64>>, Vec<usize>)> {
    let (mut probs, mut gt) = (Vec::new(), Vec::new());
    for input in inputs {
        let p = model_forward(params, input)?;
        for t in 0..p.probabilities.rows() {
            probs.push(p.probabilities.row(t).iter().map(|x| x.as_f64()).collect());
        }
        gt.extend_from_slice(input.labels());
    }
    Ok((probs, gt))
}

/// Runs all configured epochs.
pub fn train<S: Scalar>(
    cfg: TrainConfig,
    params: ModelParams<S>,
    train: Vec<ModelInput<S>>,
    val: Vec<ModelInput<S>>,
) -> Result<(ModelParams<S>, Vec<EpochMetrics>)> {
    let epochs = cfg.epochs;
    let mut trainer = Trainer::new(cfg, params, train, val)?;
    for _ in 0..epochs {
        trainer.run_epoch()?;
    }
    Ok(trainer.finish())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_steps_down() {
        let cfg = TrainConfig::default();
        let lr = |e| lr_at_epoch(&cfg, e).unwrap();
        for e in 1..=8 {
            assert_eq!(lr(e), 1e-4);
        }
        assert!((lr(9) - 1e-5).abs() < 1e-18);
        assert!((lr(14) - 1e-5).abs() < 1e-18);
        assert!((lr(15) - 1e-6).abs() < 1e-19);
        assert!((lr(25) - 1e-7).abs() < 1e-20);
        assert!(lr_at_epoch(&cfg, 0).is_err());
        assert!(lr_at_epoch(&cfg, 26).is_err());
    }

    #[test]
    fn class_weight_examples() {
        let w = compute_class_weights(&[50; 8]).unwrap();
        assert_eq!(w.w, [1.0; 8]);
        let w = compute_class_weights(&[100; 8]).unwrap();
        assert_eq!(w.w, [1.0; 8]);
        let w = compute_class_weights(&[700, 10, 10, 10, 10, 20, 20, 20]).unwrap();
        assert!((w.w[0] - 800.0 / 5600.0).abs() < 1e-15);
        assert_eq!(w.w[1], 10.0);
        assert_eq!(w.w[5], 5.0);
        let w = compute_class_weights(&[50, 50, 50, 50, 50, 50, 50, 450]).unwrap();
        assert_eq!(w.w[0], 2.0);
        assert_eq!(w.w[7], 800.0 / 3600.0);
        let err = compute_class_weights(&[5, 5, 0, 5, 5, 5, 5, 5]).unwrap_err();
        assert!(err.to_string().contains("augment"));
    }

    #[test]
    fn adam_first_step_and_convergence() {
        let mut x = [1.0f64];
        let (mut m, mut v) = ([0.0], [0.0]);
        adam_update(&mut x, &[2.0], &mut m, &mut v, 1, 0.1, 0.9, 0.999, 1e-8);
        assert!((x[0] - 0.9).abs() < 1e-7);

        let mut x = [1.0f64];
        let (mut m, mut v) = ([0.0], [0.0]);
        for t in 1..=200 {
            let g = [2.0 * x[0]];
            adam_update(&mut x, &g, &mut m, &mut v, t, 0.1, 0.9, 0.999, 1e-8);
        }
        assert!(x[0].abs() < 1e-3, "{}", x[0]);

        let mut x = [0.3f64, -2.0];
        let (mut m, mut v) = ([0.0; 2], [0.0; 2]);
        adam_update(
            &mut x,
            &[0.0, 0.0],
            &mut m,
            &mut v,
            1,
            0.1,
            0.9,
            0.999,
            1e-8,
        );
        assert_eq!(x, [0.3, -2.0]);
    }

    #[test]
    fn weighted_loss_values() {
        let logits = Tensor::<f64>::zeros(vec![3, 8]);
        let ce = weighted_cross_entropy(&logits, &[0, 4, 7], &[1.0; 8]).unwrap();
        assert!((ce - 8f64.ln()).abs() < 1e-12);
        let ce2 = weighted_cross_entropy(&logits, &[0, 4, 7], &[2.0; 8]).unwrap();
        assert!((ce2 - 2.0 * ce).abs() < 1e-12);
    }

    #[test]
    fn metrics_csv_layout() {
        let log = vec![
            EpochMetrics {
                epoch: 1,
                lr: 1e-4,
                train_loss: 2.0,
                val_mean_pr_auc: Some(0.5),
            },
            EpochMetrics {
                epoch: 2,
                lr: 1e-4,
                train_loss: 1.5,
                val_mean_pr_auc: None,
            },
        ];
        let csv = metrics_csv(&log);
        assert_eq!(
            csv.lines().next(),
            Some("epoch,lr,train_loss,val_mean_pr_auc")
        );
        assert_eq!(csv.lines().nth(1), Some("1,1e-4,2.000000,0.500000"));
        assert_eq!(csv.lines().nth(2), Some("2,1e-4,1.500000,"));
    }
}
