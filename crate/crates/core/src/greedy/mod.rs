//! Greedy construction of a convex ensemble, one basis module per iteration.
//!
//! Four variants share the scheme `f_t = (1 - alpha) f_{t-1} + alpha g_t`:
//!
//! - `Nonlinear`: `g` and `alpha` jointly minimize the risk of the blend.
//! - `Fw`: `g` minimizes the linear functional `sum_i <dL/df(x_i), g(x_i)>`
//!   (the linear minimization oracle), then `alpha` comes from a line search.
//! - `Afw`: like `Fw`, but may instead step away from the current atom most
//!   aligned with the gradient.
//! - `Pfw`: moves weight directly from that away atom to `g`.
//!
//! Atoms are either small networks trained per iteration by Adam, or drawn
//! from a fixed finite dictionary (the oracle then enumerates it), which makes
//! the outer algorithm testable without training noise.

pub mod line_search;
pub mod objectives;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::basis::{BasisModule, Shape};
use crate::dataset::Dataset;
use crate::ensemble::{ConvexEnsemble, Incoming};
use crate::error::{Error, Result};
use crate::loss::{LossKind, LossSpec};
use crate::optimizer::{run_epochs, OptimConfig};
use crate::rng::derive_seed;

pub use line_search::LineSearchRule;
use line_search::{directional_loss, search_step};
use objectives::{squash, BlendObjective, LinearObjective, RiskObjective};

/// A dataset viewed through a loss: flat features plus encoded targets.
pub struct Problem<'a> {
    pub x: &'a [f64],
    pub n: usize,
    pub d: usize,
    pub m: usize,
    pub targets: Vec<f64>,
    pub loss: LossSpec,
}

impl<'a> Problem<'a> {
    pub fn new(data: &'a Dataset, loss: LossSpec) -> Result<Self> {
        Ok(Problem {
            x: data.features(),
            n: data.n_samples(),
            d: data.n_features(),
            m: loss.output_dim(data)?,
            targets: loss.encode_targets(data)?,
            loss,
        })
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.d..(i + 1) * self.d]
    }

    #[inline]
    pub fn target(&self, i: usize) -> &[f64] {
        &self.targets[i * self.m..(i + 1) * self.m]
    }

    /// Mean loss of row-major `n x m` predictions.
    pub fn risk(&self, preds: &[f64]) -> f64 {
        self.loss.mean(preds, &self.targets, self.m)
    }

    /// Per-sample loss gradients at the predictions (the functional gradient
    /// restricted to the sample), `n x m`.
    pub fn gradient(&self, preds: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; preds.len()];
        for ((p, y), o) in preds
            .chunks(self.m)
            .zip(self.targets.chunks(self.m))
            .zip(out.chunks_mut(self.m))
        {
            self.loss.grad_into(p, y, o);
        }
        out
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Nonlinear,
    Fw,
    Afw,
    Pfw,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Nonlinear, Variant::Fw, Variant::Afw, Variant::Pfw];
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nonlinear" => Ok(Variant::Nonlinear),
            "fw" => Ok(Variant::Fw),
            "afw" => Ok(Variant::Afw),
            "pfw" => Ok(Variant::Pfw),
            other => Err(Error::invalid(format!("unknown greedy variant `{other}`"))),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Nonlinear => "nonlinear",
            Variant::Fw => "fw",
            Variant::Afw => "afw",
            Variant::Pfw => "pfw",
        })
    }
}

/// Where candidate atoms come from.
#[derive(Debug, Clone, PartialEq)]
pub enum AtomSource {
    /// A fresh network with this many hidden units, trained per iteration.
    Trained { hidden: usize },
    /// A fixed dictionary searched by enumeration.
    Dictionary(Vec<BasisModule>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GreedyConfig {
    pub variant: Variant,
    /// Maximum number of iterations, the initial fit included.
    pub max_modules: usize,
    pub early_stop_window: usize,
    /// Minimum relative validation improvement that resets the window.
    pub early_stop_tol: f64,
    pub atoms: AtomSource,
    pub bound: f64,
    pub loss: LossKind,
    pub optim: OptimConfig,
    pub line_search: LineSearchRule,
    pub seed: u64,
    /// Atoms whose weight falls to this level or below are dropped.
    pub prune_eps: f64,
}

impl Default for GreedyConfig {
    fn default() -> Self {
        GreedyConfig {
            variant: Variant::Pfw,
            max_modules: 100,
            early_stop_window: 5,
            early_stop_tol: 1e-5,
            atoms: AtomSource::Trained { hidden: 10 },
            bound: 10.0,
            loss: LossKind::Quadratic,
            optim: OptimConfig::default(),
            line_search: LineSearchRule::ClosedForm,
            seed: 0,
            prune_eps: 0.0,
        }
    }
}

impl GreedyConfig {
    pub fn loss_spec(&self) -> Result<LossSpec> {
        LossSpec::new(self.loss, self.bound)
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_modules == 0 || self.early_stop_window == 0 {
            return Err(Error::invalid("max_modules and early_stop_window must be >= 1"));
        }
        if !(self.early_stop_tol >= 0.0) || !(self.prune_eps >= 0.0) {
            return Err(Error::invalid("early_stop_tol and prune_eps must be nonnegative"));
        }
        match &self.atoms {
            AtomSource::Trained { hidden: 0 } => return Err(Error::invalid("hidden width must be >= 1")),
            AtomSource::Dictionary(atoms) if atoms.is_empty() => return Err(Error::invalid("dictionary is empty")),
            AtomSource::Dictionary(atoms) => {
                if atoms.iter().any(|a| a.bound() != self.bound) {
                    return Err(Error::invalid("dictionary atoms must share the configured bound"));
                }
            }
            AtomSource::Trained { .. } => {}
        }
        self.optim.validate()?;
        self.loss_spec().map(|_| ())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepType {
    Init,
    Greedy,
    Fw,
    Away,
    Pairwise,
    Stall,
}

impl fmt::Display for StepType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StepType::Init => "init",
            StepType::Greedy => "greedy",
            StepType::Fw => "fw",
            StepType::Away => "away",
            StepType::Pairwise => "pairwise",
            StepType::Stall => "stall",
        })
    }
}

/// Outcome of one greedy move.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub step: StepType,
    /// `alpha` for blends, `gamma` for away and pairwise moves.
    pub size: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub test_loss: Option<f64>,
    pub alpha: f64,
    pub step: StepType,
    pub n_atoms: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub records: Vec<IterationRecord>,
    /// Iteration whose ensemble was returned.
    pub best_iter: usize,
    pub stopped_early: bool,
}

#[derive(Default)]
struct OutputCache {
    outs: Vec<Vec<f64>>,
}

impl OutputCache {
    fn retain(&mut self, keep: &[usize]) {
        let old = std::mem::take(&mut self.outs);
        let mut old: Vec<Option<Vec<f64>>> = old.into_iter().map(Some).collect();
        self.outs = keep.iter().map(|&i| old[i].take().expect("kept once")).collect();
    }

    fn combine(&self, weights: &[f64], len: usize) -> Vec<f64> {
        let mut f = vec![0.0; len];
        for (o, &w) in self.outs.iter().zip(weights) {
            for (fi, v) in f.iter_mut().zip(o) {
                *fi += w * v;
            }
        }
        f
    }
}

struct Candidate {
    incoming: Incoming,
    origin: Option<usize>,
    train_out: Vec<f64>,
}

/// Outputs of every dictionary atom on the train/val/test rows.
struct DictOutputs {
    train: Vec<Vec<f64>>,
    val: Vec<Vec<f64>>,
    test: Vec<Vec<f64>>,
}

struct State<'a> {
    cfg: &'a GreedyConfig,
    train: Problem<'a>,
    val: Option<Problem<'a>>,
    test: Option<Problem<'a>>,
    ensemble: ConvexEnsemble,
    origin: Vec<Option<usize>>,
    train_cache: OutputCache,
    val_cache: OutputCache,
    test_cache: OutputCache,
    dict: Option<DictOutputs>,
    f_train: Vec<f64>,
}

fn non_empty<'a>(d: Option<&'a Dataset>, loss: LossSpec) -> Result<Option<Problem<'a>>> {
    match d {
        Some(d) if d.n_samples() > 0 => Ok(Some(Problem::new(d, loss)?)),
        _ => Ok(None),
    }
}

impl<'a> State<'a> {
    fn new(
        cfg: &'a GreedyConfig,
        train: &'a Dataset,
        val: Option<&'a Dataset>,
        test: Option<&'a Dataset>,
    ) -> Result<Self> {
        cfg.validate()?;
        let loss = cfg.loss_spec()?;
        if train.n_samples() == 0 {
            return Err(Error::invalid("training split is empty"));
        }
        let train = Problem::new(train, loss)?;
        let val = non_empty(val, loss)?;
        let test = non_empty(test, loss)?;
        let dict = match &cfg.atoms {
            AtomSource::Dictionary(atoms) => {
                for a in atoms {
                    Error::check_dim(train.d, a.input_dim())?;
                    Error::check_dim(train.m, a.output_dim())?;
                }
                let outs = |p: &Option<Problem>| match p {
                    Some(p) => atoms.iter().map(|a| a.outputs(p.x)).collect(),
                    None => Vec::new(),
                };
                Some(DictOutputs {
                    train: atoms.iter().map(|a| a.outputs(train.x)).collect(),
                    val: outs(&val),
                    test: outs(&test),
                })
            }
            AtomSource::Trained { .. } => None,
        };
        let placeholder = BasisModule::zeros(Shape::new(train.d.max(1), 1, train.m.max(1)), cfg.bound)?;
        Ok(State {
            cfg,
            f_train: vec![0.0; train.n * train.m],
            train,
            val,
            test,
            ensemble: ConvexEnsemble::single(placeholder),
            origin: Vec::new(),
            train_cache: OutputCache::default(),
            val_cache: OutputCache::default(),
            test_cache: OutputCache::default(),
            dict,
        })
    }

    /// Adopts an existing ensemble (for single-step use outside `train`).
    fn with_ensemble(mut self, f: &ConvexEnsemble) -> Result<Self> {
        Error::check_dim(self.train.d, f.input_dim())?;
        Error::check_dim(self.train.m, f.output_dim())?;
        self.ensemble = f.clone();
        self.origin = vec![None; f.len()];
        self.train_cache.outs = f.atoms().iter().map(|a| a.outputs(self.train.x)).collect();
        if let Some(v) = &self.val {
            self.val_cache.outs = f.atoms().iter().map(|a| a.outputs(v.x)).collect();
        }
        if let Some(t) = &self.test {
            self.test_cache.outs = f.atoms().iter().map(|a| a.outputs(t.x)).collect();
        }
        self.refresh();
        Ok(self)
    }

    fn module_shape(&self) -> Option<Shape> {
        match self.cfg.atoms {
            AtomSource::Trained { hidden } => Some(Shape::new(self.train.d, hidden, self.train.m)),
            AtomSource::Dictionary(_) => None,
        }
    }

    fn dictionary(&self) -> &[BasisModule] {
        match &self.cfg.atoms {
            AtomSource::Dictionary(atoms) => atoms,
            AtomSource::Trained { .. } => &[],
        }
    }

    fn refresh(&mut self) {
        self.f_train = self
            .train_cache
            .combine(self.ensemble.weights(), self.train.n * self.train.m);
    }

    fn risk_on(p: &Option<Problem>, cache: &OutputCache, weights: &[f64]) -> Option<f64> {
        p.as_ref().map(|p| p.risk(&cache.combine(weights, p.n * p.m)))
    }

    /// Registers caches for an atom the ensemble just appended.
    fn register_new(&mut self, module_origin: Option<usize>, train_out: Vec<f64>) {
        let module = self.ensemble.atoms().last().expect("non-empty");
        let (val_out, test_out) = match (module_origin, &self.dict) {
            (Some(j), Some(dict)) => (dict.val.get(j).cloned(), dict.test.get(j).cloned()),
            _ => (
                self.val.as_ref().map(|p| module.outputs(p.x)),
                self.test.as_ref().map(|p| module.outputs(p.x)),
            ),
        };
        self.train_cache.outs.push(train_out);
        if let Some(v) = val_out {
            self.val_cache.outs.push(v);
        }
        if let Some(t) = test_out {
            self.test_cache.outs.push(t);
        }
        self.origin.push(module_origin);
    }

    fn after_move(&mut self, before: usize, cand_origin: Option<usize>, cand_out: Option<Vec<f64>>) -> Result<()> {
        if self.ensemble.len() > before {
            self.register_new(cand_origin, cand_out.expect("new atom carries its outputs"));
        }
        let keep = self.ensemble.prune(self.cfg.prune_eps)?;
        if keep.len() < self.origin.len() {
            self.train_cache.retain(&keep);
            if self.val.is_some() {
                self.val_cache.retain(&keep);
            }
            if self.test.is_some() {
                self.test_cache.retain(&keep);
            }
            let old = std::mem::take(&mut self.origin);
            self.origin = keep.iter().map(|&i| old[i]).collect();
        }
        self.refresh();
        Ok(())
    }

    fn initialize(&mut self) -> Result<()> {
        let (module, origin, out) = match self.module_shape() {
            Some(shape) => {
                let init = BasisModule::init(derive_seed(self.cfg.seed, "f0", 0), shape, self.cfg.bound)?;
                let obj = RiskObjective {
                    problem: &self.train,
                    shape,
                    bound: self.cfg.bound,
                    l2: 0.0,
                };
                let (best, _) = run_epochs(
                    &obj,
                    init.to_vector(),
                    &self.cfg.optim,
                    derive_seed(self.cfg.seed, "f0-epochs", 0),
                )?;
                let module = BasisModule::from_vector(shape, self.cfg.bound, best)?;
                let out = module.outputs(self.train.x);
                (module, None, out)
            }
            None => {
                let dict = self.dict.as_ref().expect("dictionary mode");
                let j = argmin((0..dict.train.len()).map(|j| self.train.risk(&dict.train[j])));
                (self.dictionary()[j].clone(), Some(j), dict.train[j].clone())
            }
        };
        self.ensemble = ConvexEnsemble::single(module);
        self.origin.clear();
        self.train_cache = OutputCache::default();
        self.val_cache = OutputCache::default();
        self.test_cache = OutputCache::default();
        self.register_new(origin, out);
        self.refresh();
        Ok(())
    }

    fn candidate_from_dictionary(&self, j: usize) -> Candidate {
        let dict = self.dict.as_ref().expect("dictionary mode");
        match self.origin.iter().position(|&o| o == Some(j)) {
            Some(idx) => Candidate {
                incoming: Incoming::Existing(idx),
                origin: Some(j),
                train_out: self.train_cache.outs[idx].clone(),
            },
            None => Candidate {
                incoming: Incoming::New(self.dictionary()[j].clone()),
                origin: Some(j),
                train_out: dict.train[j].clone(),
            },
        }
    }

    /// Linear minimization oracle for the coefficients `grad`.
    fn lmo(&self, grad: &[f64], t: usize) -> Result<Candidate> {
        match self.module_shape() {
            Some(shape) => {
                let module = self.train_lmo_module(grad, shape, t)?;
                let train_out = module.outputs(self.train.x);
                Ok(Candidate {
                    incoming: Incoming::New(module),
                    origin: None,
                    train_out,
                })
            }
            None => {
                let dict = self.dict.as_ref().expect("dictionary mode");
                let j = argmin(dict.train.iter().map(|o| dot(grad, o)));
                Ok(self.candidate_from_dictionary(j))
            }
        }
    }

    fn train_lmo_module(&self, grad: &[f64], shape: Shape, t: usize) -> Result<BasisModule> {
        let init = BasisModule::init(derive_seed(self.cfg.seed, "lmo", t as u64), shape, self.cfg.bound)?;
        let obj = LinearObjective {
            problem: &self.train,
            coeffs: grad,
            shape,
            bound: self.cfg.bound,
        };
        let (best, _) = run_epochs(
            &obj,
            init.to_vector(),
            &self.cfg.optim,
            derive_seed(self.cfg.seed, "lmo-epochs", t as u64),
        )?;
        BasisModule::from_vector(shape, self.cfg.bound, best)
    }

    /// Existing atom with the largest inner product with the gradient.
    fn away_atom(&self, grad: &[f64]) -> usize {
        let w = self.ensemble.weights();
        argmax(
            self.train_cache
                .outs
                .iter()
                .enumerate()
                .map(|(i, o)| if w[i] > 0.0 { dot(grad, o) } else { f64::NEG_INFINITY }),
        )
    }

    fn stall_tol(&self, grad: &[f64]) -> f64 {
        1e-13 * (1.0 + grad.iter().map(|g| g.abs()).sum::<f64>() * self.cfg.bound)
    }

    fn line_search(&self, direction: &[f64], max: f64, t: usize) -> f64 {
        search_step(
            self.cfg.line_search,
            &self.train.loss,
            &self.f_train,
            direction,
            &self.train.targets,
            self.train.m,
            max,
            t,
        )
    }

    fn blend(&mut self, cand: Candidate, alpha: f64, step: StepType) -> Result<StepRecord> {
        let before = self.ensemble.len();
        let is_new = matches!(cand.incoming, Incoming::New(_));
        self.ensemble.add_blend(cand.incoming, alpha)?;
        self.after_move(before, cand.origin, is_new.then_some(cand.train_out))?;
        Ok(StepRecord { step, size: alpha })
    }

    fn fw_move(&mut self, cand: Candidate, grad: &[f64], t: usize) -> Result<StepRecord> {
        let dir: Vec<f64> = cand.train_out.iter().zip(&self.f_train).map(|(g, f)| g - f).collect();
        if dot(grad, &dir) >= -self.stall_tol(grad) {
            return Ok(StepRecord {
                step: StepType::Stall,
                size: 0.0,
            });
        }
        let alpha = self.line_search(&dir, 1.0, t);
        if alpha <= 0.0 {
            return Ok(StepRecord {
                step: StepType::Stall,
                size: 0.0,
            });
        }
        self.blend(cand, alpha, StepType::Fw)
    }

    fn step_nonlinear(&mut self, t: usize) -> Result<StepRecord> {
        let (cand, alpha) = match self.module_shape() {
            Some(shape) => {
                let (module, alpha) = self.train_blend(shape, t)?;
                let train_out = module.outputs(self.train.x);
                (
                    Candidate {
                        incoming: Incoming::New(module),
                        origin: None,
                        train_out,
                    },
                    alpha,
                )
            }
            None => {
                // joint minimization by enumeration: best line-searched blend per atom
                let dict = self.dict.as_ref().expect("dictionary mode");
                let mut best: Option<(usize, f64, f64)> = None;
                for (j, out) in dict.train.iter().enumerate() {
                    let dir: Vec<f64> = out.iter().zip(&self.f_train).map(|(g, f)| g - f).collect();
                    let a = self.line_search(&dir, 1.0, t);
                    let r = directional_loss(
                        &self.train.loss,
                        &self.f_train,
                        &dir,
                        &self.train.targets,
                        self.train.m,
                        a,
                    );
                    if best.is_none_or(|(_, _, br)| r < br) {
                        best = Some((j, a, r));
                    }
                }
                let (j, a, _) = best.expect("non-empty dictionary");
                (self.candidate_from_dictionary(j), a)
            }
        };
        if alpha <= 0.0 {
            return Ok(StepRecord {
                step: StepType::Stall,
                size: 0.0,
            });
        }
        self.blend(cand, alpha, StepType::Greedy)
    }

    /// Joint Adam fit of `(theta, alpha)`, followed by an exact line search
    /// on `alpha` for the fitted module. The smaller of the two risks wins.
    fn train_blend(&self, shape: Shape, t: usize) -> Result<(BasisModule, f64)> {
        let init = BasisModule::init(derive_seed(self.cfg.seed, "greedy", t as u64), shape, self.cfg.bound)?;
        let obj = BlendObjective {
            problem: &self.train,
            current: &self.f_train,
            shape,
            bound: self.cfg.bound,
        };
        let mut start = init.to_vector();
        start.push(0.0);
        let (best, _) = run_epochs(
            &obj,
            start,
            &self.cfg.optim,
            derive_seed(self.cfg.seed, "greedy-epochs", t as u64),
        )?;
        let np = shape.n_params();
        let module = BasisModule::from_vector(shape, self.cfg.bound, best[..np].to_vec())?;
        let out = module.outputs(self.train.x);
        let dir: Vec<f64> = out.iter().zip(&self.f_train).map(|(g, f)| g - f).collect();
        let risk = |a: f64| {
            directional_loss(
                &self.train.loss,
                &self.f_train,
                &dir,
                &self.train.targets,
                self.train.m,
                a,
            )
        };
        let adam_alpha = squash(best[np]);
        let rule = match self.cfg.line_search {
            LineSearchRule::FixedSchedule => LineSearchRule::ClosedForm,
            r => r,
        };
        let searched = search_step(
            rule,
            &self.train.loss,
            &self.f_train,
            &dir,
            &self.train.targets,
            self.train.m,
            1.0,
            t,
        );
        let alpha = if risk(searched) <= risk(adam_alpha) {
            searched
        } else {
            adam_alpha
        };
        Ok((module, alpha))
    }

    fn step_fw(&mut self, t: usize) -> Result<StepRecord> {
        let grad = self.train.gradient(&self.f_train);
        let cand = self.lmo(&grad, t)?;
        self.fw_move(cand, &grad, t)
    }

    fn step_afw(&mut self, t: usize) -> Result<StepRecord> {
        let grad = self.train.gradient(&self.f_train);
        let cand = self.lmo(&grad, t)?;
        let a = self.away_atom(&grad);
        let fw_slope = dot(&grad, &cand.train_out) - dot(&grad, &self.f_train);
        let away_slope = dot(&grad, &self.f_train) - dot(&grad, &self.train_cache.outs[a]);
        let wa = self.ensemble.weights()[a];
        let away_feasible = wa < 1.0 && self.ensemble.len() > 1;
        if fw_slope <= away_slope || !away_feasible {
            return self.fw_move(cand, &grad, t);
        }
        if away_slope >= -self.stall_tol(&grad) {
            return Ok(StepRecord {
                step: StepType::Stall,
                size: 0.0,
            });
        }
        let cap = self.ensemble.away_cap(a)?;
        let dir: Vec<f64> = self
            .f_train
            .iter()
            .zip(&self.train_cache.outs[a])
            .map(|(f, g)| f - g)
            .collect();
        let gamma = self.line_search(&dir, cap, t);
        if gamma <= 0.0 {
            return Ok(StepRecord {
                step: StepType::Stall,
                size: 0.0,
            });
        }
        let before = self.ensemble.len();
        self.ensemble.away_reweight(a, gamma.min(cap))?;
        self.after_move(before, None, None)?;
        Ok(StepRecord {
            step: StepType::Away,
            size: gamma,
        })
    }

    fn step_pfw(&mut self, t: usize) -> Result<StepRecord> {
        let grad = self.train.gradient(&self.f_train);
        let cand = self.lmo(&grad, t)?;
        let a = self.away_atom(&grad);
        let stall = StepRecord {
            step: StepType::Stall,
            size: 0.0,
        };
        if matches!(cand.incoming, Incoming::Existing(i) if i == a) {
            return Ok(stall);
        }
        let dir: Vec<f64> = cand
            .train_out
            .iter()
            .zip(&self.train_cache.outs[a])
            .map(|(g, s)| g - s)
            .collect();
        if dot(&grad, &dir) >= -self.stall_tol(&grad) {
            return Ok(stall);
        }
        let max = self.ensemble.weights()[a];
        let gamma = self.line_search(&dir, max, t);
        if gamma <= 0.0 {
            return Ok(stall);
        }
        let before = self.ensemble.len();
        let is_new = matches!(cand.incoming, Incoming::New(_));
        self.ensemble.pairwise_swap(a, cand.incoming, gamma.min(max))?;
        self.after_move(before, cand.origin, is_new.then_some(cand.train_out))?;
        Ok(StepRecord {
            step: StepType::Pairwise,
            size: gamma,
        })
    }

    fn step(&mut self, t: usize) -> Result<StepRecord> {
        match self.cfg.variant {
            Variant::Nonlinear => self.step_nonlinear(t),
            Variant::Fw => self.step_fw(t),
            Variant::Afw => self.step_afw(t),
            Variant::Pfw => self.step_pfw(t),
        }
    }

    fn record(&self, iter: usize, step: StepRecord, started: Instant) -> IterationRecord {
        let w = self.ensemble.weights();
        IterationRecord {
            iter,
            train_loss: self.train.risk(&self.f_train),
            val_loss: Self::risk_on(&self.val, &self.val_cache, w),
            test_loss: Self::risk_on(&self.test, &self.test_cache, w),
            alpha: step.size,
            step: step.step,
            n_atoms: self.ensemble.len(),
            seconds: started.elapsed().as_secs_f64(),
        }
    }
}

/// Index of the smallest value; ties go to the lowest index.
fn argmin(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::INFINITY);
    for (i, v) in values.enumerate() {
        if v < best.1 {
            best = (i, v);
        }
    }
    best.0
}

/// Index of the largest value; ties go to the lowest index.
fn argmax(values: impl Iterator<Item = f64>) -> usize {
    argmin(values.map(|v| -v))
}

/// Runs the configured greedy variant. Validation loss (or training loss when
/// there is no validation data) drives early stopping, and the ensemble with
/// the lowest such loss is returned.
pub fn train(
    cfg: &GreedyConfig,
    train_data: &Dataset,
    val: Option<&Dataset>,
    test: Option<&Dataset>,
) -> Result<(ConvexEnsemble, TrainHistory)> {
    let started = Instant::now();
    let mut state = State::new(cfg, train_data, val, test)?;
    state.initialize()?;

    let mut history = TrainHistory::default();
    let init = state.record(
        0,
        StepRecord {
            step: StepType::Init,
            size: 1.0,
        },
        started,
    );
    let monitor = |r: &IterationRecord| r.val_loss.unwrap_or(r.train_loss);
    let mut best_loss = monitor(&init);
    let mut best_ensemble = state.ensemble.clone();
    let mut reference = best_loss;
    let mut since_improvement = 0;
    history.records.push(init);

    for t in 1..cfg.max_modules {
        let step = state.step(t)?;
        let rec = state.record(t, step, started);
        let loss = monitor(&rec);
        history.records.push(rec);
        if loss < best_loss {
            best_loss = loss;
            best_ensemble = state.ensemble.clone();
            history.best_iter = t;
        }
        let improvement = (reference - loss) / reference.abs().max(f64::MIN_POSITIVE);
        if improvement > cfg.early_stop_tol {
            reference = loss;
            since_improvement = 0;
        } else {
            since_improvement += 1;
            if since_improvement >= cfg.early_stop_window {
                history.stopped_early = true;
                break;
            }
        }
    }
    Ok((best_ensemble, history))
}

/// `sum_i <dL/df(x_i), g(x_i)>`: the objective the oracle minimizes.
pub fn lmo_objective(f: &ConvexEnsemble, g: &BasisModule, data: &Dataset, loss: &LossSpec) -> Result<f64> {
    let p = Problem::new(data, *loss)?;
    let grad = p.gradient(&f.predict_rows(p.x)?);
    Ok(dot(&grad, &g.outputs(p.x)))
}

/// One oracle call at iteration `t` for the ensemble `f`.
pub fn fw_lmo(f: &ConvexEnsemble, data: &Dataset, cfg: &GreedyConfig, t: usize) -> Result<BasisModule> {
    let state = State::new(cfg, data, None, None)?.with_ensemble(f)?;
    let grad = state.train.gradient(&state.f_train);
    match state.lmo(&grad, t)?.incoming {
        Incoming::New(g) => Ok(g),
        Incoming::Existing(i) => Ok(f.atoms()[i].clone()),
    }
}

/// Best `alpha in [0,1]` for `(1 - alpha) f + alpha g`: closed form for squared
/// losses, Brent's method otherwise.
pub fn line_search_alpha(f: &ConvexEnsemble, g: &BasisModule, data: &Dataset, loss: &LossSpec) -> Result<f64> {
    let p = Problem::new(data, *loss)?;
    let fv = f.predict_rows(p.x)?;
    let dir: Vec<f64> = g.outputs(p.x).iter().zip(&fv).map(|(g, f)| g - f).collect();
    Ok(search_step(
        LineSearchRule::ClosedForm,
        loss,
        &fv,
        &dir,
        &p.targets,
        p.m,
        1.0,
        0,
    ))
}

/// Joint `(g, alpha)` minimizing the risk of `(1 - alpha) f + alpha g`.
pub fn nonlinear_greedy_step(
    f: &ConvexEnsemble,
    data: &Dataset,
    cfg: &GreedyConfig,
    t: usize,
) -> Result<(BasisModule, f64)> {
    let state = State::new(cfg, data, None, None)?.with_ensemble(f)?;
    match state.module_shape() {
        Some(shape) => state.train_blend(shape, t),
        None => Err(Error::Unsupported("nonlinear_greedy_step needs trained atoms".into())),
    }
}

fn single_step(
    f: &mut ConvexEnsemble,
    data: &Dataset,
    cfg: &GreedyConfig,
    t: usize,
    variant: Variant,
) -> Result<StepRecord> {
    let cfg = GreedyConfig { variant, ..cfg.clone() };
    let mut state = State::new(&cfg, data, None, None)?.with_ensemble(f)?;
    let rec = state.step(t)?;
    *f = state.ensemble;
    Ok(rec)
}

/// One away-step Frank-Wolfe iteration applied to `f` in place.
pub fn afw_step(f: &mut ConvexEnsemble, data: &Dataset, cfg: &GreedyConfig, t: usize) -> Result<StepRecord> {
    single_step(f, data, cfg, t, Variant::Afw)
}

/// One pairwise Frank-Wolfe iteration applied to `f` in place.
pub fn pfw_step(f: &mut ConvexEnsemble, data: &Dataset, cfg: &GreedyConfig, t: usize) -> Result<StepRecord> {
    single_step(f, data, cfg, t, Variant::Pfw)
}

/// One Frank-Wolfe iteration applied to `f` in place.
pub fn fw_step(f: &mut ConvexEnsemble, data: &Dataset, cfg: &GreedyConfig, t: usize) -> Result<StepRecord> {
    single_step(f, data, cfg, t, Variant::Fw)
}
