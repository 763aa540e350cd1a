//! Parameter-space objectives for the per-iteration sub-problems.

use crate::basis::{Scratch, Shape};
use crate::optimizer::Objective;

use super::Problem;

/// Plain empirical risk of a single module, plus an optional l2 penalty.
pub struct RiskObjective<'a> {
    pub problem: &'a Problem<'a>,
    pub shape: Shape,
    pub bound: f64,
    pub l2: f64,
}

impl Objective for RiskObjective<'_> {
    fn dim(&self) -> usize {
        self.shape.n_params()
    }

    fn n_samples(&self) -> usize {
        self.problem.n
    }

    fn value(&self, params: &[f64]) -> f64 {
        let p = self.problem;
        let mut s = Scratch::for_shape(&self.shape);
        let total: f64 = (0..p.n)
            .map(|i| {
                p.loss
                    .value(s.forward(&self.shape, params, self.bound, p.row(i)), p.target(i))
            })
            .sum();
        total / p.n as f64 + self.l2 * params.iter().map(|v| v * v).sum::<f64>()
    }

    fn batch_gradient(&self, params: &[f64], batch: &[usize], grad: &mut [f64]) {
        let p = self.problem;
        let mut s = Scratch::for_shape(&self.shape);
        let mut upstream = vec![0.0; p.m];
        let scale = 1.0 / batch.len() as f64;
        for &i in batch {
            let out = s.forward(&self.shape, params, self.bound, p.row(i));
            p.loss.grad_into(out, p.target(i), &mut upstream);
            self.shape
                .accumulate_grad(params, self.bound, p.row(i), &upstream, scale, &mut s, grad);
        }
        if self.l2 > 0.0 {
            for (g, v) in grad.iter_mut().zip(params) {
                *g += 2.0 * self.l2 * v;
            }
        }
    }
}

/// Linear functional `sum_i <c_i, g(x_i)>` for fixed per-sample coefficients
/// `c_i` (the loss gradient at the current ensemble).
pub struct LinearObjective<'a> {
    pub problem: &'a Problem<'a>,
    pub coeffs: &'a [f64],
    pub shape: Shape,
    pub bound: f64,
}

impl Objective for LinearObjective<'_> {
    fn dim(&self) -> usize {
        self.shape.n_params()
    }

    fn n_samples(&self) -> usize {
        self.problem.n
    }

    fn value(&self, params: &[f64]) -> f64 {
        let p = self.problem;
        let mut s = Scratch::for_shape(&self.shape);
        (0..p.n)
            .map(|i| {
                let out = s.forward(&self.shape, params, self.bound, p.row(i));
                let c = &self.coeffs[i * p.m..(i + 1) * p.m];
                out.iter().zip(c).map(|(o, c)| o * c).sum::<f64>()
            })
            .sum()
    }

    fn batch_gradient(&self, params: &[f64], batch: &[usize], grad: &mut [f64]) {
        let p = self.problem;
        let mut s = Scratch::for_shape(&self.shape);
        // unbiased estimate of the full-sum gradient
        let scale = p.n as f64 / batch.len() as f64;
        for &i in batch {
            let c = &self.coeffs[i * p.m..(i + 1) * p.m];
            self.shape
                .accumulate_grad(params, self.bound, p.row(i), c, scale, &mut s, grad);
        }
    }
}

/// Logistic squashing of the unconstrained blend parameter into `(0, 1)`.
pub fn squash(u: f64) -> f64 {
    1.0 / (1.0 + (-u).exp())
}

/// Joint objective over `[theta | u]`: risk of `(1 - a) f + a g_theta` with
/// `a = squash(u)`, for fixed current predictions `f`.
pub struct BlendObjective<'a> {
    pub problem: &'a Problem<'a>,
    pub current: &'a [f64],
    pub shape: Shape,
    pub bound: f64,
}

fn blend_into(out: &[f64], f: &[f64], a: f64, buf: &mut [f64]) {
    for ((b, o), fi) in buf.iter_mut().zip(out).zip(f) {
        *b = (1.0 - a) * fi + a * o;
    }
}

impl Objective for BlendObjective<'_> {
    fn dim(&self) -> usize {
        self.shape.n_params() + 1
    }

    fn n_samples(&self) -> usize {
        self.problem.n
    }

    fn value(&self, params: &[f64]) -> f64 {
        let p = self.problem;
        let (theta, u) = params.split_at(self.shape.n_params());
        let a = squash(u[0]);
        let mut s = Scratch::for_shape(&self.shape);
        let mut buf = vec![0.0; p.m];
        let total: f64 = (0..p.n)
            .map(|i| {
                let out = s.forward(&self.shape, theta, self.bound, p.row(i));
                blend_into(out, &self.current[i * p.m..(i + 1) * p.m], a, &mut buf);
                p.loss.value(&buf, p.target(i))
            })
            .sum();
        total / p.n as f64
    }

    fn batch_gradient(&self, params: &[f64], batch: &[usize], grad: &mut [f64]) {
        let p = self.problem;
        let np = self.shape.n_params();
        let (theta, u) = params.split_at(np);
        let a = squash(u[0]);
        let da = a * (1.0 - a);
        let scale = 1.0 / batch.len() as f64;
        let mut s = Scratch::for_shape(&self.shape);
        let mut buf = vec![0.0; p.m];
        let mut upstream = vec![0.0; p.m];
        let mut du = 0.0;
        let (g_theta, g_u) = grad.split_at_mut(np);
        for &i in batch {
            let f = &self.current[i * p.m..(i + 1) * p.m];
            let out = s.forward(&self.shape, theta, self.bound, p.row(i));
            blend_into(out, f, a, &mut buf);
            p.loss.grad_into(&buf, p.target(i), &mut upstream);
            du += upstream
                .iter()
                .zip(out)
                .zip(f)
                .map(|((c, o), fi)| c * (o - fi))
                .sum::<f64>();
            self.shape
                .accumulate_grad(theta, self.bound, p.row(i), &upstream, a * scale, &mut s, g_theta);
        }
        g_u[0] += da * du * scale;
    }
}
