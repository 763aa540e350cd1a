//! Step-size selection along a direction in prediction space.
//!
//! Every greedy move has the form `f + gamma * d` for a per-sample direction
//! `d` and `gamma` in `[0, gamma_max]`. Squared losses have a closed-form
//! minimizer; other losses use Brent's method on the interval.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::{LossKind, LossSpec};

pub const BRENT_TOL: f64 = 1e-8;
pub const BRENT_MAX_ITER: usize = 100;

/// `(3 - sqrt(5)) / 2`
const GOLDEN: f64 = 0.381_966_011_250_105_2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LineSearchRule {
    /// Closed form for squared losses, Brent otherwise.
    ClosedForm,
    /// Brent's method for every loss.
    Brent,
    /// `1 / (t + 1)` at iteration `t`, capped at the admissible maximum.
    FixedSchedule,
}

impl std::str::FromStr for LineSearchRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "closed_form" | "closed-form" => Ok(LineSearchRule::ClosedForm),
            "brent" => Ok(LineSearchRule::Brent),
            "fixed_schedule" | "fixed-schedule" | "fixed" => Ok(LineSearchRule::FixedSchedule),
            other => Err(Error::invalid(format!("unknown line search `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Minimum {
    pub x: f64,
    pub fx: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Brent's minimizer (golden section plus parabolic interpolation) on `[a, b]`.
pub fn brent_minimize<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: f64, max_iter: usize) -> Minimum {
    let (mut lo, mut hi) = if a <= b { (a, b) } else { (b, a) };
    let mut x = lo + GOLDEN * (hi - lo);
    let (mut w, mut v) = (x, x);
    let mut fx = f(x);
    let (mut fw, mut fv) = (fx, fx);
    let (mut step, mut prev_step) = (0.0f64, 0.0f64);
    let sqrt_eps = f64::EPSILON.sqrt();

    for it in 0..max_iter {
        let mid = 0.5 * (lo + hi);
        let tol1 = sqrt_eps * x.abs() + tol / 3.0;
        let tol2 = 2.0 * tol1;
        if (x - mid).abs() <= tol2 - 0.5 * (hi - lo) {
            return Minimum {
                x,
                fx,
                iterations: it,
                converged: true,
            };
        }
        let mut golden = true;
        if prev_step.abs() > tol1 {
            // parabola through (v, fv), (w, fw), (x, fx)
            let r = (x - w) * (fx - fv);
            let q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            let mut q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            } else {
                q = -q;
            }
            let keep = prev_step;
            if p.abs() < (0.5 * q * keep).abs() && p > q * (lo - x) && p < q * (hi - x) {
                prev_step = step;
                step = p / q;
                let u = x + step;
                if u - lo < tol2 || hi - u < tol2 {
                    step = if x < mid { tol1 } else { -tol1 };
                }
                golden = false;
            }
        }
        if golden {
            prev_step = if x < mid { hi - x } else { lo - x };
            step = GOLDEN * prev_step;
        }
        let u = if step.abs() >= tol1 {
            x + step
        } else if step > 0.0 {
            x + tol1
        } else {
            x - tol1
        };
        let fu = f(u);
        if fu <= fx {
            if u < x {
                hi = x;
            } else {
                lo = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                lo = u;
            } else {
                hi = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    Minimum {
        x,
        fx,
        iterations: max_iter,
        converged: false,
    }
}

/// Plain golden-section search on `[a, b]`.
pub fn golden_section<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: f64, max_iter: usize) -> Minimum {
    let (mut lo, mut hi) = if a <= b { (a, b) } else { (b, a) };
    let mut x1 = hi - (1.0 - GOLDEN) * (hi - lo);
    let mut x2 = lo + (1.0 - GOLDEN) * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    let mut it = 0;
    while hi - lo > tol && it < max_iter {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - (1.0 - GOLDEN) * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + (1.0 - GOLDEN) * (hi - lo);
            f2 = f(x2);
        }
        it += 1;
    }
    let (x, fx) = if f1 <= f2 { (x1, f1) } else { (x2, f2) };
    Minimum {
        x,
        fx,
        iterations: it,
        converged: hi - lo <= tol,
    }
}

/// Minimizes a scalar function on `[0, max]`: Brent first, golden section if
/// Brent does not converge, and the endpoints are always considered.
pub fn minimize_on_interval<F: FnMut(f64) -> f64>(mut f: F, max: f64) -> f64 {
    if max <= 0.0 {
        return 0.0;
    }
    let mut best = brent_minimize(&mut f, 0.0, max, BRENT_TOL, BRENT_MAX_ITER);
    if !best.converged {
        best = golden_section(&mut f, 0.0, max, BRENT_TOL, 4 * BRENT_MAX_ITER);
    }
    let (f0, fmax) = (f(0.0), f(max));
    let mut x = best.x.clamp(0.0, max);
    let mut fx = best.fx;
    if f0 <= fx {
        x = 0.0;
        fx = f0;
    }
    if fmax < fx {
        x = max;
    }
    x
}

/// Exact minimizer of `sum |f + gamma d - y|^2` over `gamma in [0, max]`.
/// A zero direction yields 0.
pub fn closed_form_quadratic(current: &[f64], direction: &[f64], targets: &[f64], max: f64) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for ((f, d), y) in current.iter().zip(direction).zip(targets) {
        num += (y - f) * d;
        den += d * d;
    }
    if den <= 0.0 {
        return 0.0;
    }
    (num / den).clamp(0.0, max.max(0.0))
}

/// Total loss of `f + gamma d` over all samples.
pub fn directional_loss(
    loss: &LossSpec,
    current: &[f64],
    direction: &[f64],
    targets: &[f64],
    m: usize,
    gamma: f64,
) -> f64 {
    let mut buf = vec![0.0; m];
    current
        .chunks(m)
        .zip(direction.chunks(m))
        .zip(targets.chunks(m))
        .map(|((f, d), y)| {
            for ((b, fi), di) in buf.iter_mut().zip(f).zip(d) {
                *b = fi + gamma * di;
            }
            loss.value(&buf, y)
        })
        .sum()
}

fn is_squared(kind: LossKind) -> bool {
    matches!(kind, LossKind::Quadratic) || kind == LossKind::Lq(2.0)
}

/// Step size along `direction` in `[0, max]` under the given rule; `t` is the
/// iteration number used by the fixed schedule.
pub fn search_step(
    rule: LineSearchRule,
    loss: &LossSpec,
    current: &[f64],
    direction: &[f64],
    targets: &[f64],
    m: usize,
    max: f64,
    t: usize,
) -> f64 {
    match rule {
        LineSearchRule::FixedSchedule => (1.0 / (t as f64 + 1.0)).min(max),
        LineSearchRule::ClosedForm if is_squared(loss.kind) => closed_form_quadratic(current, direction, targets, max),
        _ => minimize_on_interval(|g| directional_loss(loss, current, direction, targets, m, g), max),
    }
}
