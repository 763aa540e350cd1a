//! Adam with a reduce-on-plateau learning-rate schedule and best-epoch
//! checkpointing. Every parameter sub-problem in the crate goes through
//! [`run_epochs`].

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Smallest decrease of the full objective that counts as an improvement.
pub const IMPROVEMENT_EPS: f64 = 1e-12;

/// A differentiable objective that can be evaluated in full and
/// differentiated on mini-batches of sample indices.
pub trait Objective {
    fn dim(&self) -> usize;

    fn n_samples(&self) -> usize;

    /// Full objective value.
    fn value(&self, params: &[f64]) -> f64;

    /// Adds the gradient of the mini-batch objective into `grad`.
    fn batch_gradient(&self, params: &[f64], batch: &[usize], grad: &mut [f64]);
}

#[derive(Debug, Clone)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl AdamState {
    pub fn new(n_params: usize, lr: f64) -> Self {
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            step: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam update, in place.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) -> Result<()> {
        Error::check_dim(self.m.len(), params.len())?;
        Error::check_dim(self.m.len(), grad.len())?;
        if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
            return Err(Error::Divergence(format!("non-finite gradient at coordinate {i}")));
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (((p, g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlateauSchedule {
    /// Epochs without improvement before the learning rate is cut.
    pub patience: usize,
    pub factor: f64,
    pub min_lr: f64,
    /// Extra epochs run once the learning rate reaches `min_lr`.
    pub tail_epochs: usize,
}

impl Default for PlateauSchedule {
    fn default() -> Self {
        PlateauSchedule {
            patience: 10,
            factor: 0.1,
            min_lr: 1e-5,
            tail_epochs: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub schedule: PlateauSchedule,
    /// Hard cap on epochs, whatever the schedule says.
    pub max_epochs: usize,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            lr: 1e-3,
            batch_size: 128,
            schedule: PlateauSchedule::default(),
            max_epochs: 200,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        let s = &self.schedule;
        if !(self.lr > 0.0) || self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::invalid("lr, batch_size and max_epochs must be positive"));
        }
        if !(s.factor > 0.0 && s.factor < 1.0) || !(s.min_lr > 0.0) || s.patience == 0 {
            return Err(Error::invalid(
                "plateau schedule needs patience >= 1, factor in (0,1), min_lr > 0",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub objective: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    pub initial: f64,
    pub epochs: Vec<EpochRecord>,
    /// `(epoch, new_lr)` for every learning-rate cut.
    pub reductions: Vec<(usize, f64)>,
    /// 0 means the initial parameters were never beaten.
    pub best_epoch: usize,
    pub best_value: f64,
}

fn finite(v: f64, what: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Divergence(format!("{what} objective is {v}")))
    }
}

/// Shuffled mini-batch Adam under the plateau schedule. Returns the parameters
/// with the lowest full objective seen at any epoch boundary, the initial
/// point included.
pub fn run_epochs<O: Objective + ?Sized>(
    objective: &O,
    init: Vec<f64>,
    cfg: &OptimConfig,
    seed: u64,
) -> Result<(Vec<f64>, Trace)> {
    cfg.validate()?;
    Error::check_dim(objective.dim(), init.len())?;
    let sched = cfg.schedule;
    let n = objective.n_samples();

    let initial = finite(objective.value(&init), "initial")?;
    let mut trace = Trace {
        initial,
        best_value: initial,
        ..Trace::default()
    };
    let mut best = init.clone();
    let mut params = init;
    let mut adam = AdamState::new(params.len(), cfg.lr);
    let mut grad = vec![0.0; params.len()];
    let mut order: Vec<usize> = (0..n).collect();
    let mut shuffle = rng::rng_from(seed, "epochs", 0);

    let at_floor = |lr: f64| lr <= sched.min_lr * (1.0 + 1e-9);
    let mut tail_left = at_floor(adam.lr).then_some(sched.tail_epochs);
    if tail_left == Some(0) || n == 0 {
        return Ok((best, trace));
    }
    let mut stale = 0usize;

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut shuffle);
        for batch in order.chunks(cfg.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            objective.batch_gradient(&params, batch, &mut grad);
            adam.step(&mut params, &grad)?;
        }
        let value = finite(objective.value(&params), "epoch")?;
        trace.epochs.push(EpochRecord {
            epoch,
            lr: adam.lr,
            objective: value,
        });
        if value <= trace.best_value - IMPROVEMENT_EPS {
            trace.best_value = value;
            trace.best_epoch = epoch;
            best.copy_from_slice(&params);
            stale = 0;
        } else {
            stale += 1;
        }

        if let Some(left) = tail_left.as_mut() {
            *left -= 1;
            if *left == 0 {
                break;
            }
        } else if stale >= sched.patience {
            let next = adam.lr * sched.factor;
            adam.lr = if at_floor(next) { sched.min_lr } else { next };
            trace.reductions.push((epoch, adam.lr));
            stale = 0;
            if at_floor(adam.lr) {
                if sched.tail_epochs == 0 {
                    break;
                }
                tail_left = Some(sched.tail_epochs);
            }
        }
    }
    Ok((best, trace))
}
