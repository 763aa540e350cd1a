//! Capacity tools for threshold units `x -> 1[theta . x >= t]`: the circle
//! shattering constructions for linear and convex combinations, Monte-Carlo
//! Rademacher estimates, and the generalization-bound constant.

mod rademacher;

pub use rademacher::{
    empirical_rademacher, gaussian_sample, rademacher_from_values, sample_conv, sample_lin, Function,
    RademacherEstimate,
};

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdUnit {
    pub theta: Vec<f64>,
    pub t: f64,
}

impl ThresholdUnit {
    pub fn eval(&self, x: &[f64]) -> f64 {
        let s: f64 = self.theta.iter().zip(x).map(|(a, b)| a * b).sum();
        if s >= self.t {
            1.0
        } else {
            0.0
        }
    }
}

/// `x -> sum_i w_i unit_i(x)`, classified as 1 when the sum reaches `threshold`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdCombination {
    pub units: Vec<ThresholdUnit>,
    pub weights: Vec<f64>,
    pub threshold: f64,
}

impl ThresholdCombination {
    pub fn value(&self, x: &[f64]) -> f64 {
        self.units.iter().zip(&self.weights).map(|(u, w)| w * u.eval(x)).sum()
    }

    pub fn decide(&self, x: &[f64]) -> u8 {
        u8::from(self.value(x) >= self.threshold)
    }

    pub fn on_simplex(&self, tol: f64) -> bool {
        self.weights.iter().all(|&w| w >= 0.0) && (self.weights.iter().sum::<f64>() - 1.0).abs() <= tol
    }
}

/// `k` equally spaced points on the unit circle, starting at angle 0.
pub fn circle_points(k: usize) -> Result<Vec<[f64; 2]>> {
    if k == 0 {
        return Err(Error::invalid("k must be >= 1"));
    }
    if k >= 2 && (2.0 * std::f64::consts::PI / k as f64).cos() >= 1.0 - 1e-9 {
        return Err(Error::invalid(format!(
            "k = {k} points are too close to separate in floating point"
        )));
    }
    Ok((0..k)
        .map(|j| {
            let a = 2.0 * std::f64::consts::PI * j as f64 / k as f64;
            [a.cos(), a.sin()]
        })
        .collect())
}

/// One unit per circle point, firing on that point only. The threshold sits
/// halfway between the neighbouring inner product `cos(2 pi / k)` and 1, so
/// the rounding of `cos^2 + sin^2` cannot flip the self-comparison.
fn point_units(k: usize) -> Result<Vec<ThresholdUnit>> {
    let pts = circle_points(k)?;
    let t = if k == 1 {
        0.5
    } else {
        0.5 * (1.0 + (2.0 * std::f64::consts::PI / k as f64).cos())
    };
    Ok(pts.iter().map(|p| ThresholdUnit { theta: p.to_vec(), t }).collect())
}

fn check_labels(k: usize, labels: &[u8]) -> Result<()> {
    Error::check_dim(k, labels.len())?;
    if labels.iter().any(|&y| y > 1) {
        return Err(Error::invalid("labels must be 0 or 1"));
    }
    Ok(())
}

/// Linear combination realizing `labels` on the circle points: weight `y_i`
/// on the unit of point `i`, decision threshold 1.
pub fn shatter_linear(k: usize, labels: &[u8]) -> Result<ThresholdCombination> {
    check_labels(k, labels)?;
    Ok(ThresholdCombination {
        units: point_units(k)?,
        weights: labels.iter().map(|&y| f64::from(y)).collect(),
        threshold: 1.0,
    })
}

/// Convex combination of `k + 1` units realizing `labels`: an always-off unit
/// with weight `1/(1+s)` and weight `y_i/(1+s)` per point unit, where `s` is
/// the number of positive labels; decision threshold `1/(k+1)`.
pub fn shatter_convex(k: usize, labels: &[u8]) -> Result<ThresholdCombination> {
    check_labels(k, labels)?;
    let s: usize = labels.iter().map(|&y| usize::from(y)).sum();
    let w = 1.0 / (1.0 + s as f64);
    let mut units = vec![ThresholdUnit {
        theta: vec![0.0, 0.0],
        t: 0.5,
    }];
    units.extend(point_units(k)?);
    let mut weights = vec![w];
    weights.extend(labels.iter().map(|&y| if y == 1 { w } else { 0.0 }));
    Ok(ThresholdCombination {
        units,
        weights,
        threshold: 1.0 / (1.0 + k as f64),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Construction {
    Linear,
    Convex,
}

#[derive(Debug, Clone, Serialize)]
pub struct LabelingCheck {
    pub labels: Vec<u8>,
    pub weights: Vec<f64>,
    pub outputs: Vec<u8>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ShatterCertificate {
    pub construction: Construction,
    pub k: usize,
    pub points: Vec<[f64; 2]>,
    pub labelings: Vec<LabelingCheck>,
    /// Labelings whose outputs differ from the labels.
    pub failures: usize,
    /// Convex construction only: labelings whose weights leave the simplex.
    pub off_simplex: usize,
}

impl ShatterCertificate {
    pub fn verified(&self) -> bool {
        self.failures == 0 && self.off_simplex == 0 && self.labelings.len() == 1usize << self.k
    }
}

/// Builds and checks the construction for all `2^k` labelings.
pub fn verify_shattering(construction: Construction, k: usize) -> Result<ShatterCertificate> {
    if k > 20 {
        return Err(Error::invalid("exhaustive verification is limited to k <= 20"));
    }
    let points = circle_points(k)?;
    let mut labelings = Vec::with_capacity(1 << k);
    let (mut failures, mut off_simplex) = (0, 0);
    for code in 0u32..(1 << k) {
        let labels: Vec<u8> = (0..k).map(|j| ((code >> j) & 1) as u8).collect();
        let comb = match construction {
            Construction::Linear => shatter_linear(k, &labels)?,
            Construction::Convex => shatter_convex(k, &labels)?,
        };
        let outputs: Vec<u8> = points.iter().map(|p| comb.decide(p)).collect();
        if outputs != labels {
            failures += 1;
        }
        if construction == Construction::Convex && !comb.on_simplex(1e-12) {
            off_simplex += 1;
        }
        labelings.push(LabelingCheck {
            labels,
            weights: comb.weights,
            outputs,
        });
    }
    Ok(ShatterCertificate {
        construction,
        k,
        points,
        labelings,
        failures,
        off_simplex,
    })
}

/// `c / sqrt(n)` with `c = 2 c_phi B (sqrt(2 ln(1/delta)) + D sqrt(p) + 2)`.
pub fn bound_constant(c_phi: f64, b: f64, delta: f64, p: f64, n: u64, d: f64) -> Result<f64> {
    if !(c_phi > 0.0 && b > 0.0 && p > 0.0 && d > 0.0) || n == 0 {
        return Err(Error::invalid("c_phi, B, p, D and n must be positive"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid("delta must lie in (0, 1)"));
    }
    let c = 2.0 * c_phi * b * ((2.0 * (1.0 / delta).ln()).sqrt() + d * p.sqrt() + 2.0);
    Ok(c / (n as f64).sqrt())
}
