use serde::{Deserialize, Serialize};

use crate::dataset::{EVAL_BATCH_SIZE, TRAIN_BATCH_SIZE};
use crate::error::{Result, VeError};
use crate::numcore::{Gradients, ParamStore};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub eval_batch_size: usize,
    pub max_epochs: usize,
    /// Non-improving epochs tolerated before the learning rate is cut.
    pub patience: usize,
    pub lr_factor: f64,
    pub lr_floor: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            weight_decay: 1e-4,
            batch_size: TRAIN_BATCH_SIZE,
            eval_batch_size: EVAL_BATCH_SIZE,
            max_epochs: 100,
            patience: 3,
            lr_factor: 0.5,
            lr_floor: 1e-6,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(VeError::Config(m.into()));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight_decay must be non-negative");
        }
        if self.batch_size == 0 || self.eval_batch_size == 0 {
            return bad("batch sizes must be positive");
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be positive");
        }
        if self.patience == 0 {
            return bad("patience must be at least 1");
        }
        if !(self.lr_factor > 0.0 && self.lr_factor < 1.0) {
            return bad("lr_factor must lie in (0, 1)");
        }
        if !(self.lr_floor > 0.0 && self.lr_floor <= self.lr) {
            return bad("lr_floor must be positive and at most lr");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("Adam betas must lie in [0, 1)");
        }
        if !(self.adam_eps > 0.0 && self.adam_eps.is_finite()) {
            return bad("adam_eps must be positive");
        }
        Ok(())
    }
}

/// First and second moments per trainable parameter.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AdamState {
    pub step: u64,
    m: Vec<Option<Vec<f64>>>,
    v: Vec<Option<Vec<f64>>>,
}

impl AdamState {
    pub fn new(store: &ParamStore) -> Self {
        let zeros = || {
            store
                .iter()
                .map(|(_, p)| p.trainable.then(|| vec![0.0; p.tensor.numel()]))
                .collect()
        };
        Self {
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }
}

/// One bias-corrected Adam step with decoupled weight decay
/// (`p ← p − lr·wd·p` before the Adam delta). Frozen parameters are left
/// untouched.
pub fn adam_step(
    store: &mut ParamStore,
    grads: &Gradients,
    state: &mut AdamState,
    lr: f64,
    cfg: &TrainConfig,
) -> Result<()> {
    if grads.len() != store.len() || state.m.len() != store.len() {
        return Err(VeError::Contract(format!(
            "adam_step: {} params, {} gradients, {} moment slots",
            store.len(),
            grads.len(),
            state.m.len()
        )));
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for i in 0..store.len() {
        let param = store.by_index_mut(i);
        if !param.trainable {
            continue;
        }
        let (Some(g), Some(m), Some(v)) = (grads.get(i), state.m[i].as_mut(), state.v[i].as_mut()) else {
            return Err(VeError::Contract(format!(
                "adam_step: no gradient or moments for parameter {i}"
            )));
        };
        let p = param.tensor.data_mut();
        if g.len() != p.len() || m.len() != p.len() {
            return Err(VeError::Contract(format!(
                "adam_step: parameter {i} has {} values, gradient {}",
                p.len(),
                g.len()
            )));
        }
        for j in 0..p.len() {
            p[j] -= lr * cfg.weight_decay * p[j];
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
            let m_hat = m[j] / c1;
            let v_hat = v[j] / c2;
            p[j] -= lr * m_hat / (v_hat.sqrt() + cfg.adam_eps);
        }
    }
    Ok(())
}

/// Reduce-on-plateau learning-rate state.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlateauState {
    pub lr: f64,
    pub best: Option<f64>,
    /// Consecutive epochs without a new best.
    pub stale: usize,
}

impl PlateauState {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            best: None,
            stale: 0,
        }
    }
}

/// Feeds one epoch's validation accuracy and returns the learning rate for
/// the next epoch. After `patience` consecutive epochs without strict
/// improvement the rate is multiplied by `lr_factor`, clamped at
/// `lr_floor`, and the counter restarts.
pub fn plateau_schedule(state: &mut PlateauState, val_accuracy: f64, cfg: &TrainConfig) -> f64 {
    if state.best.is_none_or(|b| val_accuracy > b) {
        state.best = Some(val_accuracy);
        state.stale = 0;
    } else {
        state.stale += 1;
        if state.stale >= cfg.patience {
            state.lr = (state.lr * cfg.lr_factor).max(cfg.lr_floor);
            state.stale = 0;
        }
    }
    state.lr
}
