//! Minibatch gradient descent on squared error, SRMSE evaluation and
//! closed-form linear baselines.

mod baseline;
mod metrics;

pub use baseline::{fit_ridge, linear_baseline, RidgeFit};
pub use metrics::{evaluate, mse_loss, scores, EvalReport, Scores};

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Model, ModelError};
use crate::tensor::{Tape, Tensor, TensorError};
use crate::tsdata::WindowedRegressionSet;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("loss became non-finite at epoch {epoch}, step {step}")]
    Diverged { epoch: usize, step: usize },
    #[error("empty set: {0}")]
    EmptySet(String),
    #[error("geometry mismatch: {0}")]
    Geometry(String),
    #[error("{0}")]
    Singular(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("history i/o: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    /// Keep the epoch with the lowest validation error.
    #[default]
    BestValidation,
    /// Keep the parameters after the final epoch.
    LastEpoch,
}

fn default_epochs() -> usize {
    200
}

fn default_batch() -> usize {
    16
}

fn default_lr() -> f64 {
    1e-3
}

fn default_clip() -> f64 {
    10.0
}

fn default_val() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default)]
    pub momentum: f64,
    /// Global gradient-norm cap; 0 disables clipping.
    #[serde(default = "default_clip")]
    pub clip_norm: f64,
    /// Trailing share of the training samples held out for selection.
    #[serde(default = "default_val")]
    pub val_fraction: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub selection: Selection,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: default_epochs(),
            batch_size: default_batch(),
            learning_rate: default_lr(),
            momentum: 0.0,
            clip_norm: default_clip(),
            val_fraction: default_val(),
            seed: 0,
            selection: Selection::BestValidation,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::InvalidConfig(m));
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be finite and ≥ 0, got {}", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum must lie in [0, 1), got {}", self.momentum));
        }
        if !(self.clip_norm >= 0.0 && self.clip_norm.is_finite()) {
            return bad(format!("clip_norm must be finite and ≥ 0, got {}", self.clip_norm));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return bad(format!("val_fraction must lie in [0, 1), got {}", self.val_fraction));
        }
        Ok(())
    }
}

/// Metrics logged after one epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_srmse: Option<f64>,
    pub val_srmse: Option<f64>,
    /// Sample-weighted mean of the minibatch losses.
    pub loss: f64,
    /// Membership matrix after the epoch, for coeff-mode models.
    pub coefficients: Option<Tensor>,
    #[serde(skip)]
    selection_error: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Model chosen by the selection rule.
    pub model: Model,
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
    /// Training samples used for updates and for validation.
    pub fit_samples: usize,
    pub val_samples: usize,
}

impl TrainOutcome {
    pub fn best(&self) -> &EpochRecord {
        &self.history[self.best_epoch - 1]
    }
}

/// Called after every optimizer step with `(epoch, step, model)`.
pub type StepObserver<'a> = dyn FnMut(usize, usize, &Model) + 'a;

pub(crate) fn check_geometry(model: &Model, set: &WindowedRegressionSet) -> Result<(), TrainError> {
    let s = &model.spec;
    if set.n_channels() != s.input_channels || set.window() != s.window {
        return Err(TrainError::Geometry(format!(
            "model expects {}×{} windows, set has {}×{}",
            s.input_channels,
            s.window,
            set.n_channels(),
            set.window()
        )));
    }
    Ok(())
}

/// Splits off the trailing validation share of `set`.
pub fn validation_split(
    set: &WindowedRegressionSet,
    val_fraction: f64,
) -> Result<(WindowedRegressionSet, Option<WindowedRegressionSet>), TrainError> {
    let n = set.len();
    let n_val = (n as f64 * val_fraction).round() as usize;
    let n_val = if val_fraction > 0.0 { n_val.max(1) } else { 0 };
    if n_val >= n {
        return Err(TrainError::EmptySet(format!(
            "{n} training samples leave none after holding out {n_val} for validation"
        )));
    }
    let val = (n_val > 0).then(|| set.slice(n - n_val..n));
    Ok((set.slice(0..n - n_val), val))
}

pub fn train(model: Model, set: &WindowedRegressionSet, config: &TrainConfig) -> Result<TrainOutcome, TrainError> {
    train_observed(model, set, config, &mut |_, _, _| {})
}

/// Minibatch SGD with optional momentum and gradient clipping. Sample
/// order is reshuffled every epoch from `config.seed`.
pub fn train_observed(
    mut model: Model,
    set: &WindowedRegressionSet,
    config: &TrainConfig,
    observer: &mut StepObserver<'_>,
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    check_geometry(&model, set)?;
    let (fit, val) = validation_split(set, config.val_fraction)?;
    let inputs: Vec<Tensor> = (0..fit.len()).map(|i| fit.input(i)).collect();
    let targets = fit.targets();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..fit.len()).collect();
    let mut velocity: Vec<Tensor> = model.params().iter().map(|t| Tensor::zeros(t.shape())).collect();
    let mut history = Vec::with_capacity(config.epochs);
    let mut best: Option<(usize, f64, Model)> = None;

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for (step, batch) in order.chunks(config.batch_size).enumerate() {
            let mut tape = Tape::new();
            let vars = model.bind(&mut tape);
            let mut preds = Vec::with_capacity(batch.len());
            for &i in batch {
                let x = tape.constant(inputs[i].clone());
                preds.push(model.forward(&mut tape, &vars, x)?);
            }
            let t: Vec<f64> = batch.iter().map(|&i| targets[i]).collect();
            let loss = mse_loss(&mut tape, &preds, &t)?;
            let lv = tape.value(loss).data()[0];
            if !lv.is_finite() {
                return Err(TrainError::Diverged { epoch, step: step + 1 });
            }
            loss_sum += lv * batch.len() as f64;

            let mut grads = tape.backward(loss)?;
            let mut grads: Vec<Tensor> = vars.iter().map(|&v| grads.take(v).expect("bound parameter")).collect();
            let norm = grads.iter().map(Tensor::sq_norm).sum::<f64>().sqrt();
            if !norm.is_finite() {
                return Err(TrainError::Diverged { epoch, step: step + 1 });
            }
            if config.clip_norm > 0.0 && norm > config.clip_norm {
                let s = config.clip_norm / norm;
                grads.iter_mut().for_each(|g| g.scale_in_place(s));
            }
            for ((p, v), g) in model.params_mut().into_iter().zip(&mut velocity).zip(&grads) {
                if config.momentum == 0.0 {
                    for (w, d) in p.data_mut().iter_mut().zip(g.data()) {
                        *w -= config.learning_rate * d;
                    }
                } else {
                    for ((w, vel), d) in p.data_mut().iter_mut().zip(v.data_mut()).zip(g.data()) {
                        *vel = config.momentum * *vel - config.learning_rate * d;
                        *w += *vel;
                    }
                }
            }
            if model.params().iter().any(|p| !p.is_finite()) {
                return Err(TrainError::Diverged { epoch, step: step + 1 });
            }
            observer(epoch, step + 1, &model);
        }

        let train_report = evaluate(&model, &fit, "train")?;
        let val_report = val.as_ref().map(|v| evaluate(&model, v, "validation")).transpose()?;
        let selection_error = val_report.as_ref().map_or(train_report.rmse, |r| r.rmse);
        history.push(EpochRecord {
            epoch,
            train_srmse: train_report.srmse,
            val_srmse: val_report.as_ref().and_then(|r| r.srmse),
            loss: loss_sum / fit.len() as f64,
            coefficients: model.coefficients(),
            selection_error,
        });
        let better = match (&best, config.selection) {
            (None, _) | (_, Selection::LastEpoch) => true,
            (Some((_, e, _)), Selection::BestValidation) => selection_error < *e,
        };
        if better {
            best = Some((epoch, selection_error, model.clone()));
        }
    }

    let (best_epoch, _, best_model) = best.expect("at least one epoch");
    Ok(TrainOutcome {
        model: best_model,
        best_epoch,
        history,
        fit_samples: fit.len(),
        val_samples: val.map_or(0, |v| v.len()),
    })
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

/// Writes `epoch,train_srmse,val_srmse,loss`; undefined values are blank.
pub fn write_history<W: Write>(mut out: W, history: &[EpochRecord]) -> Result<(), TrainError> {
    writeln!(out, "epoch,train_srmse,val_srmse,loss")?;
    for r in history {
        writeln!(out, "{},{},{},{}", r.epoch, opt(r.train_srmse), opt(r.val_srmse), r.loss)?;
    }
    Ok(())
}
