//! Non-greedy training: all `k` modules and the mixing weights at once.
//!
//! The weights come from an unconstrained vector `v` through
//! `alpha_i = (1/k + |v_i|) / (1 + sum_j |v_j|)`, which always lands strictly
//! inside the simplex, so plain Adam can be used on `[theta_1 .. theta_k | v]`.

use crate::basis::{BasisModule, Scratch, Shape};
use crate::dataset::Dataset;
use crate::ensemble::ConvexEnsemble;
use crate::error::{Error, Result};
use crate::greedy::Problem;
use crate::loss::{LossKind, LossSpec};
use crate::optimizer::{run_epochs, Objective, OptimConfig, Trace};
use crate::rng::derive_seed;

/// Convex weights induced by `v`. Empty input gives an empty vector.
pub fn weights_from(v: &[f64]) -> Vec<f64> {
    let k = v.len() as f64;
    let s = 1.0 + v.iter().map(|x| x.abs()).sum::<f64>();
    v.iter().map(|x| (1.0 / k + x.abs()) / s).collect()
}

fn sign0(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Pulls an upstream gradient on `alpha` back to `v`. The subgradient of
/// `|.|` at 0 is taken as 0.
pub fn grad_v(v: &[f64], upstream: &[f64]) -> Vec<f64> {
    let alpha = weights_from(v);
    let s = 1.0 + v.iter().map(|x| x.abs()).sum::<f64>();
    let mean: f64 = upstream.iter().zip(&alpha).map(|(u, a)| u * a).sum();
    v.iter()
        .zip(upstream)
        .map(|(&vj, &uj)| sign0(vj) / s * (uj - mean))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct NgceConfig {
    pub k: usize,
    pub hidden: usize,
    pub bound: f64,
    pub loss: LossKind,
    pub optim: OptimConfig,
    /// Penalty on module parameters only; `v` is never penalized.
    pub l2: f64,
    pub seed: u64,
}

impl Default for NgceConfig {
    fn default() -> Self {
        NgceConfig {
            k: 100,
            hidden: 10,
            bound: 10.0,
            loss: LossKind::Quadratic,
            optim: OptimConfig::default(),
            l2: 0.0,
            seed: 0,
        }
    }
}

struct Joint<'a> {
    problem: &'a Problem<'a>,
    shape: Shape,
    bound: f64,
    k: usize,
    l2: f64,
}

impl Joint<'_> {
    fn split<'p>(&self, params: &'p [f64]) -> (&'p [f64], &'p [f64]) {
        params.split_at(self.k * self.shape.n_params())
    }

    fn theta<'p>(&self, thetas: &'p [f64], i: usize) -> &'p [f64] {
        let np = self.shape.n_params();
        &thetas[i * np..(i + 1) * np]
    }

    fn predict(&self, thetas: &[f64], alpha: &[f64], x: &[f64], s: &mut Scratch, outs: &mut [f64], f: &mut [f64]) {
        let m = self.shape.m;
        f.iter_mut().for_each(|v| *v = 0.0);
        for (i, a) in alpha.iter().enumerate() {
            let o = &mut outs[i * m..(i + 1) * m];
            o.copy_from_slice(s.forward(&self.shape, self.theta(thetas, i), self.bound, x));
            for (fi, oi) in f.iter_mut().zip(o.iter()) {
                *fi += a * oi;
            }
        }
    }
}

impl Objective for Joint<'_> {
    fn dim(&self) -> usize {
        self.k * (self.shape.n_params() + 1)
    }

    fn n_samples(&self) -> usize {
        self.problem.n
    }

    fn value(&self, params: &[f64]) -> f64 {
        let p = self.problem;
        let (thetas, v) = self.split(params);
        let alpha = weights_from(v);
        let mut s = Scratch::for_shape(&self.shape);
        let mut outs = vec![0.0; self.k * p.m];
        let mut f = vec![0.0; p.m];
        let mut total = 0.0;
        for i in 0..p.n {
            self.predict(thetas, &alpha, p.row(i), &mut s, &mut outs, &mut f);
            total += p.loss.value(&f, p.target(i));
        }
        total / p.n as f64 + self.l2 * thetas.iter().map(|t| t * t).sum::<f64>()
    }

    fn batch_gradient(&self, params: &[f64], batch: &[usize], grad: &mut [f64]) {
        let p = self.problem;
        let m = p.m;
        let (thetas, v) = self.split(params);
        let alpha = weights_from(v);
        let scale = 1.0 / batch.len() as f64;
        let np = self.shape.n_params();
        let mut s = Scratch::for_shape(&self.shape);
        let mut outs = vec![0.0; self.k * m];
        let mut f = vec![0.0; m];
        let mut c = vec![0.0; m];
        let mut d_alpha = vec![0.0; self.k];
        let (g_theta, g_v) = grad.split_at_mut(self.k * np);
        for &i in batch {
            let x = p.row(i);
            self.predict(thetas, &alpha, x, &mut s, &mut outs, &mut f);
            p.loss.grad_into(&f, p.target(i), &mut c);
            for (j, a) in alpha.iter().enumerate() {
                let o = &outs[j * m..(j + 1) * m];
                d_alpha[j] += scale * c.iter().zip(o).map(|(ci, oi)| ci * oi).sum::<f64>();
                self.shape.accumulate_grad(
                    self.theta(thetas, j),
                    self.bound,
                    x,
                    &c,
                    a * scale,
                    &mut s,
                    &mut g_theta[j * np..(j + 1) * np],
                );
            }
        }
        for (g, dv) in g_v.iter_mut().zip(grad_v(v, &d_alpha)) {
            *g += dv;
        }
        if self.l2 > 0.0 {
            for (g, t) in g_theta.iter_mut().zip(thetas) {
                *g += 2.0 * self.l2 * t;
            }
        }
    }
}

/// Trains `k` modules and their mixing weights jointly on `train`.
pub fn train_ngce(cfg: &NgceConfig, train: &Dataset) -> Result<(ConvexEnsemble, Trace)> {
    if cfg.k == 0 || cfg.hidden == 0 {
        return Err(Error::invalid("k and hidden must be >= 1"));
    }
    if !(cfg.l2 >= 0.0) {
        return Err(Error::invalid("l2 must be nonnegative"));
    }
    let loss = LossSpec::new(cfg.loss, cfg.bound)?;
    let problem = Problem::new(train, loss)?;
    if problem.n == 0 {
        return Err(Error::invalid("training split is empty"));
    }
    let shape = Shape::new(problem.d, cfg.hidden, problem.m);
    let mut init = Vec::with_capacity(cfg.k * (shape.n_params() + 1));
    for i in 0..cfg.k {
        let m = BasisModule::init(derive_seed(cfg.seed, "ngce-module", i as u64), shape, cfg.bound)?;
        init.extend_from_slice(m.params());
    }
    init.extend(std::iter::repeat_n(0.0, cfg.k));

    let obj = Joint {
        problem: &problem,
        shape,
        bound: cfg.bound,
        k: cfg.k,
        l2: cfg.l2,
    };
    let (best, trace) = run_epochs(&obj, init, &cfg.optim, derive_seed(cfg.seed, "ngce-epochs", 0))?;
    let (thetas, v) = obj.split(&best);
    let atoms = (0..cfg.k)
        .map(|i| BasisModule::from_vector(shape, cfg.bound, obj.theta(thetas, i).to_vec()))
        .collect::<Result<Vec<_>>>()?;
    let ens = ConvexEnsemble::from_parts(atoms, weights_from(v))?;
    Ok((ens, trace))
}
