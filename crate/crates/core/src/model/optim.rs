//! Adam minibatch training with chronological early stopping, shared by the
//! fusion network and the neural baselines.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{ModelError, Result};
use crate::layers::{ParamKind, Parameterized};
use crate::tensor::TensorError;

/// Optimizer and stopping settings.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainOptions {
    /// L2 weight on every non-bias parameter.
    pub alpha: f64,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub max_epochs: usize,
    /// Optimizer steps over which the step size ramps up linearly from 0.
    pub warmup_steps: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    /// Trailing share of the training observations held out for validation.
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            alpha: 1e-4,
            batch_size: 32,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            max_epochs: 200,
            warmup_steps: 0,
            patience: 10,
            validation_fraction: 0.1,
            seed: 0,
        }
    }
}

impl TrainOptions {
    pub fn validate(&self) -> Result<()> {
        let ok = self.alpha >= 0.0
            && self.alpha.is_finite()
            && self.batch_size >= 1
            && self.learning_rate >= 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0
            && (0.0..1.0).contains(&self.validation_fraction);
        if ok {
            Ok(())
        } else {
            Err(ModelError::Config(format!("invalid training options {self:?}")))
        }
    }

    pub fn to_kv(&self, prefix: &str) -> Vec<(String, String)> {
        [
            ("alpha", self.alpha.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("learning_rate", self.learning_rate.to_string()),
            ("beta1", self.beta1.to_string()),
            ("beta2", self.beta2.to_string()),
            ("epsilon", self.epsilon.to_string()),
            ("max_epochs", self.max_epochs.to_string()),
            ("warmup_steps", self.warmup_steps.to_string()),
            ("patience", self.patience.to_string()),
            ("validation_fraction", self.validation_fraction.to_string()),
            ("seed", self.seed.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (format!("{prefix}{k}"), v))
        .collect()
    }

    /// Applies one `key=value` setting; returns `false` for unknown keys.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        let bad = || ModelError::Config(format!("bad value for {key}: {value:?}"));
        match key {
            "alpha" => self.alpha = value.parse().map_err(|_| bad())?,
            "batch_size" => self.batch_size = value.parse().map_err(|_| bad())?,
            "learning_rate" => self.learning_rate = value.parse().map_err(|_| bad())?,
            "beta1" => self.beta1 = value.parse().map_err(|_| bad())?,
            "beta2" => self.beta2 = value.parse().map_err(|_| bad())?,
            "epsilon" => self.epsilon = value.parse().map_err(|_| bad())?,
            "max_epochs" => self.max_epochs = value.parse().map_err(|_| bad())?,
            "warmup_steps" => self.warmup_steps = value.parse().map_err(|_| bad())?,
            "patience" => self.patience = value.parse().map_err(|_| bad())?,
            "validation_fraction" => self.validation_fraction = value.parse().map_err(|_| bad())?,
            "seed" => self.seed = value.parse().map_err(|_| bad())?,
            _ => return Ok(false),
        }
        Ok(true)
    }
}

/// A model trainable by [`fit`]: flat parameter access plus per-sample
/// squared error and its gradient.
pub trait Trainable: Parameterized + Sync {
    type Sample: Sync;

    /// Sum of squared errors for one observation.
    fn sample_error(&self, sample: &Self::Sample) -> std::result::Result<f64, TensorError>;

    /// Sum of squared errors and its gradient, flattened in visiting order.
    fn sample_grad(&self, sample: &Self::Sample) -> std::result::Result<(f64, Vec<f64>), TensorError>;

    /// Number of output values per observation (for RMSE).
    fn outputs_per_sample(&self) -> usize;
}

pub fn flatten(p: &dyn Parameterized) -> Vec<f64> {
    let mut out = Vec::with_capacity(p.parameter_count());
    p.visit("", &mut |_, _, t| out.extend_from_slice(t.data()));
    out
}

pub fn unflatten(p: &mut dyn Parameterized, values: &[f64]) {
    let mut at = 0;
    p.visit_mut("", &mut |_, _, t| {
        let n = t.len();
        t.data_mut().copy_from_slice(&values[at..at + n]);
        at += n;
    });
    assert_eq!(at, values.len(), "flat parameter length mismatch");
}

pub fn weight_mask(p: &dyn Parameterized) -> Vec<bool> {
    let mut out = Vec::with_capacity(p.parameter_count());
    p.visit("", &mut |_, kind, t| out.extend(std::iter::repeat(kind == ParamKind::Weight).take(t.len())));
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean objective per training observation (squared error plus penalty).
    pub train_loss: f64,
    /// Root mean squared error per output value on the validation slice.
    pub validation_rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_validation_rmse: f64,
    pub stopped_early: bool,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], step: 0 }
    }

    fn update(&mut self, params: &mut [f64], grad: &[f64], o: &TrainOptions) {
        self.step += 1;
        let (b1, b2) = (o.beta1, o.beta2);
        let c1 = 1.0 - b1.powi(self.step);
        let c2 = 1.0 - b2.powi(self.step);
        let lr = if o.warmup_steps > 0 { o.learning_rate * (self.step as f64 / o.warmup_steps as f64).min(1.0) } else { o.learning_rate };
        for k in 0..params.len() {
            self.m[k] = b1 * self.m[k] + (1.0 - b1) * grad[k];
            self.v[k] = b2 * self.v[k] + (1.0 - b2) * grad[k] * grad[k];
            let mh = self.m[k] / c1;
            let vh = self.v[k] / c2;
            params[k] -= lr * mh / (vh.sqrt() + o.epsilon);
        }
    }
}

/// Splits observations into (fit, validation) with the validation slice at
/// the end. Both are non-empty when there are at least two observations.
pub fn validation_split(n: usize, fraction: f64) -> usize {
    if n < 2 || fraction <= 0.0 {
        return n;
    }
    let val = ((n as f64 * fraction).round() as usize).clamp(1, n - 1);
    n - val
}

/// Root mean squared error per output value over `samples`.
pub fn rmse<M: Trainable>(model: &M, samples: &[M::Sample]) -> std::result::Result<f64, TensorError> {
    let errs: Vec<f64> = samples.par_iter().map(|s| model.sample_error(s)).collect::<std::result::Result<_, _>>()?;
    let total: f64 = errs.iter().sum();
    Ok((total / (samples.len() * model.outputs_per_sample()).max(1) as f64).sqrt())
}

/// Trains in place on `samples` (chronological order); the trailing
/// `validation_fraction` is held out and the best-validation parameters are
/// restored at the end. The starting parameters count as epoch 0, so a run
/// that never improves on them leaves the model unchanged.
///
/// The per-batch objective is the mean squared error per observation plus
/// `alpha` times the squared norm of the weights. Per-sample gradients may
/// be computed in parallel; they are always summed in sample order.
pub fn fit<M: Trainable>(model: &mut M, samples: &[M::Sample], opts: &TrainOptions) -> Result<TrainLog> {
    opts.validate()?;
    if samples.len() < 2 {
        return Err(ModelError::InsufficientHistory(format!("{} training observations", samples.len())));
    }
    let n_fit = validation_split(samples.len(), opts.validation_fraction);
    let (fit_set, val_set) = samples.split_at(n_fit);
    let mask = weight_mask(model);
    let mut params = flatten(model);
    let mut adam = Adam::new(params.len());
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut order: Vec<usize> = (0..fit_set.len()).collect();

    let eval_set = if val_set.is_empty() { fit_set } else { val_set };
    let initial = rmse(model, eval_set).map_err(|e| diverged(0, e))?;
    let mut log = TrainLog { best_validation_rmse: if initial.is_finite() { initial } else { f64::INFINITY }, ..TrainLog::default() };
    let mut best = params.clone();
    let mut since_best = 0;
    for epoch in 1..=opts.max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(opts.batch_size) {
            let results: Vec<(f64, Vec<f64>)> = batch
                .par_iter()
                .map(|&i| model.sample_grad(&fit_set[i]))
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| diverged(epoch, e))?;
            let scale = 1.0 / batch.len() as f64;
            let mut grad = vec![0.0; params.len()];
            for (err, g) in &results {
                epoch_loss += err;
                for (acc, gi) in grad.iter_mut().zip(g) {
                    *acc += scale * gi;
                }
            }
            let mut penalty = 0.0;
            for k in 0..params.len() {
                if mask[k] {
                    grad[k] += 2.0 * opts.alpha * params[k];
                    penalty += params[k] * params[k];
                }
            }
            epoch_loss += opts.alpha * penalty * batch.len() as f64;
            adam.update(&mut params, &grad, opts);
            if params.iter().any(|v| !v.is_finite()) {
                return Err(ModelError::Diverged { epoch });
            }
            unflatten(model, &params);
        }
        let train_loss = epoch_loss / fit_set.len() as f64;
        let validation_rmse = rmse(model, eval_set).map_err(|e| diverged(epoch, e))?;
        if !train_loss.is_finite() || !validation_rmse.is_finite() {
            return Err(ModelError::Diverged { epoch });
        }
        log::debug!("epoch {epoch}: train {train_loss:.6} validation rmse {validation_rmse:.6}");
        log.epochs.push(EpochLog { epoch, train_loss, validation_rmse });
        if validation_rmse < log.best_validation_rmse {
            log.best_validation_rmse = validation_rmse;
            log.best_epoch = epoch;
            best.copy_from_slice(&params);
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= opts.patience {
                log.stopped_early = true;
                break;
            }
        }
    }
    unflatten(model, &best);
    Ok(log)
}

fn diverged(epoch: usize, e: TensorError) -> ModelError {
    match e {
        TensorError::NonFinite { .. } => ModelError::Diverged { epoch },
        other => ModelError::Tensor(other),
    }
}
