use std::fmt;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::QnModel;
use crate::seed::{self, Stream};
use crate::trace::{Dataset, MEASURED_CONSERVATION_TOL};

use super::adam::{adam_step, AdamConfig, AdamState};
use super::grad::{backward, loss, Gradients};
use super::params::{materialize, RawParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    /// Stop once the best validation error has not dropped by
    /// `min_improvement_pct` percentage points for this many iterations.
    pub patience_iters: usize,
    pub min_improvement_pct: f64,
    pub max_iters: usize,
    pub init_seed: u64,
    pub train_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.05,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            patience_iters: 50,
            min_improvement_pct: 0.01,
            max_iters: 20_000,
            init_seed: 0,
            train_fraction: 0.5,
        }
    }
}

impl TrainConfig {
    pub fn check(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::config("learning_rate must be positive"));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::config("train_fraction must lie in (0, 1)"));
        }
        if self.patience_iters < 1 {
            return Err(Error::config("patience_iters must be at least 1"));
        }
        if !(self.min_improvement_pct >= 0.0) {
            return Err(Error::config("min_improvement_pct must be non-negative"));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return Err(Error::config("Adam betas must lie in [0, 1)"));
        }
        Ok(())
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            epsilon: self.adam_epsilon,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Patience,
    MaxIters,
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StopReason::Patience => "patience",
            StopReason::MaxIters => "max_iters",
        })
    }
}

/// Outcome of a training run. `model` is the snapshot with the lowest
/// validation error; `loss_history` rows are `[iteration, train, validation]`
/// errors of the parameters in force at that iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    #[serde(flatten)]
    pub model: QnModel,
    pub iterations: usize,
    pub stop_reason: StopReason,
    pub validation_err_pct: f64,
    pub best_iteration: usize,
    pub loss_history: Vec<(usize, f64, f64)>,
    pub train_traces: Vec<usize>,
    pub validation_traces: Vec<usize>,
    pub config: TrainConfig,
}

impl TrainReport {
    /// Report JSON with the learned model's fields first, in canonical model
    /// formatting.
    pub fn to_json(&self) -> Result<String> {
        let mut out = String::from("{\n");
        self.model.write_fields(&mut out, "  ")?;
        let rest = serde_json::json!({
            "iterations": self.iterations,
            "stop_reason": self.stop_reason,
            "validation_err_pct": self.validation_err_pct,
            "best_iteration": self.best_iteration,
            "train_traces": self.train_traces,
            "validation_traces": self.validation_traces,
            "config": self.config,
            "loss_history": self.loss_history,
        });
        for (k, v) in rest.as_object().expect("object") {
            out.push_str(&format!(
                ",\n  {}: {}",
                serde_json::to_string(k)?,
                serde_json::to_string(v)?
            ));
        }
        out.push_str("\n}\n");
        Ok(out)
    }
}

/// Deterministic split of `n` trace indices into training and validation.
pub fn split_indices(n: usize, fraction: f64, seed_value: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if n < 2 {
        return Err(Error::config(format!(
            "need at least 2 traces to split into training and validation, got {n}"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut seed::rng(seed::derive(seed_value, Stream::Split, 0)));
    let n_train = ((n as f64 * fraction).round() as usize).clamp(1, n - 1);
    let mut train = idx[..n_train].to_vec();
    let mut val = idx[n_train..].to_vec();
    train.sort_unstable();
    val.sort_unstable();
    Ok((train, val))
}

/// Mean loss and summed gradient over `idx`, reduced in index order.
fn batch_gradient(raw: &RawParams, ds: &Dataset, idx: &[usize]) -> Result<(f64, Gradients)> {
    let parts = idx
        .par_iter()
        .map(|&k| backward(raw, &ds.s, &ds.traces[k]))
        .collect::<Result<Vec<_>>>()?;
    let mut total = Gradients::zeros(raw.stations());
    let mut sum = 0.0;
    for (err, g) in &parts {
        sum += err;
        total.add_assign(g);
    }
    Ok((sum / idx.len() as f64, total))
}

fn mean_loss(model: &QnModel, ds: &Dataset, idx: &[usize]) -> Result<f64> {
    let errs = idx
        .par_iter()
        .map(|&k| loss(model, &ds.traces[k]))
        .collect::<Result<Vec<_>>>()?;
    Ok(errs.iter().sum::<f64>() / idx.len() as f64)
}

/// Fits routing probabilities and service rates to `dataset` by full-batch
/// Adam with early stopping on the validation error.
pub fn train(dataset: &Dataset, cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.check()?;
    dataset.check(MEASURED_CONSERVATION_TOL, true)?;
    let (train_idx, val_idx) = split_indices(dataset.traces.len(), cfg.train_fraction, cfg.init_seed)?;
    let m = dataset.stations();
    let adam = cfg.adam();

    let mut raw = RawParams::init(m, seed::derive(cfg.init_seed, Stream::Init, 0));
    let mut state = AdamState::default();
    let mut history = Vec::new();
    let mut best: Option<(f64, usize, QnModel)> = None;
    // last validation error that counted as an improvement, and when
    let mut reference = f64::INFINITY;
    let mut last_improved = 0;
    let mut iter = 0;
    let stop_reason = loop {
        let model = materialize(&raw, &dataset.s)?;
        let (train_err, grad) = batch_gradient(&raw, dataset, &train_idx)?;
        let val_err = mean_loss(&model, dataset, &val_idx)?;
        history.push((iter, train_err, val_err));

        if best.as_ref().is_none_or(|b| val_err < b.0) {
            best = Some((val_err, iter, model));
        }
        if val_err < reference - cfg.min_improvement_pct {
            reference = val_err;
            last_improved = iter;
        }
        if iter >= cfg.max_iters {
            break StopReason::MaxIters;
        }
        if iter - last_improved >= cfg.patience_iters {
            break StopReason::Patience;
        }
        adam_step(&mut raw, &grad, &mut state, &adam);
        iter += 1;
    };

    let (val_err, best_iter, model) = best.expect("at least one evaluation");
    Ok(TrainReport {
        model,
        iterations: iter,
        stop_reason,
        validation_err_pct: val_err,
        best_iteration: best_iter,
        loss_history: history,
        train_traces: train_idx,
        validation_traces: val_idx,
        config: cfg.clone(),
    })
}
