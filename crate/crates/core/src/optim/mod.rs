//! Mini-batch Adam with early stopping on validation loss.

mod table;

pub use table::{format_curves_csv, format_params_table, parse_params_table, params_from_table, TableError};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{ComponentLoss, EngineError, Model, ParamVector, TransitionSet};

/// A new validation loss counts as an improvement only when it beats the
/// best so far by more than this.
pub const IMPROVEMENT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            learning_rate: 0.01,
            batch_size: 1000,
            max_epochs: 2000,
            patience: 20,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error("invalid optimizer config: {0}")]
    Config(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

impl OptimConfig {
    pub fn check(&self) -> Result<(), FitError> {
        let bad = |m: &str| Err(FitError::Config(m.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.patience == 0 {
            return bad("batch_size, max_epochs and patience must be positive");
        }
        if self.patience > self.max_epochs {
            return bad("patience must not exceed max_epochs");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("beta1 and beta2 must lie in [0, 1)");
        }
        if !(self.eps > 0.0) {
            return bad("eps must be positive");
        }
        Ok(())
    }
}

/// One bias-corrected Adam step for a single entry; `step` counts from 1.
pub fn adam_update(param: f64, grad: f64, m: f64, v: f64, step: u64, cfg: &OptimConfig) -> (f64, f64, f64) {
    let m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad;
    let v = cfg.beta2 * v + (1.0 - cfg.beta2) * grad * grad;
    let m_hat = m / (1.0 - cfg.beta1.powf(step as f64));
    let v_hat = v / (1.0 - cfg.beta2.powf(step as f64));
    (param - cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.eps), m, v)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    /// 0 is the evaluation of the initial parameters.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Patience,
    MaxEpochs,
    Fault,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub params: ParamVector,
    /// Validation loss of `params`.
    pub val: ComponentLoss,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub curves: Vec<EpochRecord>,
    pub stop: StopReason,
    pub fault: Option<String>,
}

impl FitResult {
    pub fn upsilon(&self) -> f64 {
        self.val.upsilon
    }

    pub fn faulted(&self) -> bool {
        self.fault.is_some()
    }
}

/// Fits every parameter of `model` starting from `init`.
pub fn fit(
    model: &Model,
    init: ParamVector,
    train: &TransitionSet,
    val: &TransitionSet,
    cfg: &OptimConfig,
) -> Result<FitResult, FitError> {
    cfg.check()?;
    model.check_params(&init)?;
    if train.is_empty() || val.is_empty() {
        return Err(EngineError::NoTransitions.into());
    }
    let dim = model.state_dim();
    let mut params = init;
    let mut curves = Vec::new();
    let mut fault = None;

    let first_val = model.per_component_mse(&params, val);
    let first_train = model.one_step_mse(&params, train).unwrap_or(f64::INFINITY);
    let (mut best_val, mut best_params) = match first_val {
        Ok(l) if l.upsilon.is_finite() => (l, params.clone()),
        Ok(_) => {
            fault = Some("non-finite validation loss at initial parameters".to_string());
            (ComponentLoss::infinite(dim), params.clone())
        }
        Err(e) => {
            fault = Some(format!("initial parameters: {e}"));
            (ComponentLoss::infinite(dim), params.clone())
        }
    };
    curves.push(EpochRecord {
        epoch: 0,
        train_loss: first_train,
        val_loss: best_val.upsilon,
    });
    if fault.is_some() {
        return Ok(FitResult {
            params: best_params,
            val: best_val,
            best_epoch: 0,
            epochs_run: 0,
            curves,
            stop: StopReason::Fault,
            fault,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train.len).collect();
    let mut ws = model.workspace();
    let mut grads = model.zero_gradients();
    let mut m = vec![0.0; params.len()];
    let mut v = vec![0.0; params.len()];
    let mut step: u64 = 0;
    let mut best_epoch = 0;
    let mut stale = 0;
    let mut epochs_run = 0;
    let mut stop = StopReason::MaxEpochs;

    'epochs: for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut train_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let loss = match model.loss_gradient_into(&params, train, batch, &mut ws, &mut grads) {
                Ok(l) if l.is_finite() => l,
                Ok(_) => {
                    fault = Some(format!("epoch {epoch}: non-finite training loss"));
                    break 'epochs;
                }
                Err(e) => {
                    fault = Some(format!("epoch {epoch}: {e}"));
                    break 'epochs;
                }
            };
            train_sum += loss * batch.len() as f64;
            step += 1;
            for k in 0..params.values.len() {
                let (p, mk, vk) = adam_update(params.values[k], grads.values[k], m[k], v[k], step, cfg);
                params.values[k] = p;
                m[k] = mk;
                v[k] = vk;
            }
        }
        epochs_run = epoch;
        let val_loss = match model.per_component_mse(&params, val) {
            Ok(l) if l.upsilon.is_finite() => l,
            Ok(_) => {
                fault = Some(format!("epoch {epoch}: non-finite validation loss"));
                break;
            }
            Err(e) => {
                fault = Some(format!("epoch {epoch}: validation: {e}"));
                break;
            }
        };
        curves.push(EpochRecord {
            epoch,
            train_loss: train_sum / train.len as f64,
            val_loss: val_loss.upsilon,
        });
        if val_loss.upsilon < best_val.upsilon - IMPROVEMENT_TOL {
            best_val = val_loss;
            best_params.values.copy_from_slice(&params.values);
            best_epoch = epoch;
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                stop = StopReason::Patience;
                break;
            }
        }
    }
    if fault.is_some() {
        stop = StopReason::Fault;
        log::debug!("fit stopped with fault: {}", fault.as_deref().unwrap_or(""));
    }
    Ok(FitResult {
        params: best_params,
        val: best_val,
        best_epoch,
        epochs_run,
        curves,
        stop,
        fault,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_configs() {
        assert!(OptimConfig::default().check().is_ok());
        let c = OptimConfig {
            patience: 10,
            max_epochs: 5,
            ..Default::default()
        };
        assert!(c.check().is_err());
        let c = OptimConfig {
            learning_rate: 0.0,
            ..Default::default()
        };
        assert!(c.check().is_err());
    }
}
