//! Per-sample losses `L(y, f(x))`, their gradients with respect to the
//! prediction (the sample-level functional gradient), and the Lipschitz
//! constants that enter the generalization bound.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::dataset::{Dataset, Targets};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossKind {
    /// Squared error summed over output coordinates.
    Quadratic,
    /// `|pred - target|^q`, summed over coordinates; `q >= 1`.
    Lq(f64),
    /// Margin log-loss `ln(1 + exp(-y * pred))` for `y in {-1, +1}`.
    Logistic,
    /// Softmax cross-entropy against a one-hot target.
    CrossEntropy,
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mse" => Ok(LossKind::Quadratic),
            "logistic" => Ok(LossKind::Logistic),
            "xent" => Ok(LossKind::CrossEntropy),
            _ => {
                let q = s
                    .strip_prefix("lq:")
                    .and_then(|q| q.parse::<f64>().ok())
                    .ok_or_else(|| Error::invalid(format!("unknown loss `{s}` (expected mse|lq:<q>|logistic|xent)")))?;
                if q >= 1.0 && q.is_finite() {
                    Ok(LossKind::Lq(q))
                } else {
                    Err(Error::invalid(format!("lq exponent must be >= 1, got {q}")))
                }
            }
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LossKind::Quadratic => f.write_str("mse"),
            LossKind::Lq(q) => write!(f, "lq:{q}"),
            LossKind::Logistic => f.write_str("logistic"),
            LossKind::CrossEntropy => f.write_str("xent"),
        }
    }
}

impl Serialize for LossKind {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for LossKind {
    fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(de)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossSpec {
    pub kind: LossKind,
    pub bound: f64,
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn one_hot_label(target: &[f64]) -> Option<usize> {
    let mut label = None;
    for (k, &t) in target.iter().enumerate() {
        if t == 1.0 {
            if label.is_some() {
                return None;
            }
            label = Some(k);
        } else if t != 0.0 {
            return None;
        }
    }
    label
}

impl LossSpec {
    pub fn new(kind: LossKind, bound: f64) -> Result<Self> {
        if let LossKind::Lq(q) = kind {
            if !(q >= 1.0) {
                return Err(Error::invalid(format!("lq exponent must be >= 1, got {q}")));
            }
        }
        if !(bound > 0.0) {
            return Err(Error::invalid(format!("bound must be positive, got {bound}")));
        }
        Ok(LossSpec { kind, bound })
    }

    pub fn quadratic(bound: f64) -> Self {
        LossSpec {
            kind: LossKind::Quadratic,
            bound,
        }
    }

    fn check(&self, pred: &[f64], target: &[f64]) -> Result<()> {
        Error::check_dim(pred.len(), target.len())?;
        match self.kind {
            LossKind::Logistic => {
                Error::check_dim(1, pred.len())?;
                if target[0] != 1.0 && target[0] != -1.0 {
                    return Err(Error::InvalidTarget(format!(
                        "logistic target must be -1 or +1, got {}",
                        target[0]
                    )));
                }
            }
            LossKind::CrossEntropy if one_hot_label(target).is_none() => {
                return Err(Error::InvalidTarget(format!(
                    "cross-entropy target is not one-hot: {target:?}"
                )));
            }
            _ => {}
        }
        Ok(())
    }

    pub fn eval(&self, pred: &[f64], target: &[f64]) -> Result<f64> {
        self.check(pred, target)?;
        Ok(self.value(pred, target))
    }

    pub fn grad_pred(&self, pred: &[f64], target: &[f64]) -> Result<Vec<f64>> {
        self.check(pred, target)?;
        let mut g = vec![0.0; pred.len()];
        self.grad_into(pred, target, &mut g);
        Ok(g)
    }

    /// Unchecked loss value; targets must already be encoded for this kind.
    #[inline]
    pub fn value(&self, pred: &[f64], target: &[f64]) -> f64 {
        match self.kind {
            LossKind::Quadratic => pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum(),
            LossKind::Lq(q) => pred.iter().zip(target).map(|(p, t)| (p - t).abs().powf(q)).sum(),
            LossKind::Logistic => softplus(-target[0] * pred[0]),
            LossKind::CrossEntropy => {
                let label = target.iter().position(|&t| t == 1.0).unwrap_or(0);
                let mx = pred.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let lse = mx + pred.iter().map(|p| (p - mx).exp()).sum::<f64>().ln();
                lse - pred[label]
            }
        }
    }

    /// Unchecked gradient with respect to `pred`, written into `out`.
    #[inline]
    pub fn grad_into(&self, pred: &[f64], target: &[f64], out: &mut [f64]) {
        match self.kind {
            LossKind::Quadratic => {
                for ((o, p), t) in out.iter_mut().zip(pred).zip(target) {
                    *o = 2.0 * (p - t);
                }
            }
            LossKind::Lq(q) => {
                for ((o, p), t) in out.iter_mut().zip(pred).zip(target) {
                    let r = p - t;
                    *o = if r == 0.0 {
                        0.0
                    } else {
                        q * r.abs().powf(q - 1.0) * r.signum()
                    };
                }
            }
            LossKind::Logistic => {
                let y = target[0];
                out[0] = -y * sigmoid(-y * pred[0]);
            }
            LossKind::CrossEntropy => {
                let mx = pred.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mut z = 0.0;
                for (o, p) in out.iter_mut().zip(pred) {
                    *o = (p - mx).exp();
                    z += *o;
                }
                for (o, t) in out.iter_mut().zip(target) {
                    *o = *o / z - t;
                }
            }
        }
    }

    /// Lipschitz constant of the scalar loss profile over `[-2B, 2B]`.
    pub fn lipschitz_constant(&self) -> Result<f64> {
        match self.kind {
            LossKind::Lq(q) => Ok(q * (2.0 * self.bound).powf(q - 1.0)),
            LossKind::Quadratic => Ok(4.0 * self.bound),
            LossKind::Logistic => Ok(1.0),
            LossKind::CrossEntropy => Err(Error::Unsupported(
                "no Lipschitz constant is available for cross-entropy".into(),
            )),
        }
    }

    /// Number of model outputs this loss needs for the given data.
    pub fn output_dim(&self, d: &Dataset) -> Result<usize> {
        match (self.kind, d.targets()) {
            (LossKind::Quadratic | LossKind::Lq(_), Targets::Regression(_)) => Ok(1),
            (LossKind::Quadratic | LossKind::Lq(_), Targets::Classification { n_classes, .. }) => Ok(*n_classes),
            (LossKind::Logistic, Targets::Classification { n_classes, .. }) if *n_classes <= 2 => Ok(1),
            (LossKind::CrossEntropy, Targets::Classification { n_classes, .. }) => Ok(*n_classes),
            (kind, t) => Err(Error::InvalidTarget(format!(
                "loss `{kind}` cannot be used with {} targets",
                match t {
                    Targets::Regression(_) => "regression".to_string(),
                    Targets::Classification { n_classes, .. } => format!("{n_classes}-class"),
                }
            ))),
        }
    }

    /// Row-major `n x m` target matrix in the encoding this loss expects:
    /// reals for regression, one-hot for cross-entropy (and squared losses on
    /// labels), `-1/+1` for the margin loss.
    pub fn encode_targets(&self, d: &Dataset) -> Result<Vec<f64>> {
        let m = self.output_dim(d)?;
        Ok(match d.targets() {
            Targets::Regression(y) => y.clone(),
            Targets::Classification { labels, .. } => match self.kind {
                LossKind::Logistic => labels.iter().map(|&l| if l == 1 { 1.0 } else { -1.0 }).collect(),
                _ => {
                    let mut t = vec![0.0; labels.len() * m];
                    for (i, &l) in labels.iter().enumerate() {
                        t[i * m + l] = 1.0;
                    }
                    t
                }
            },
        })
    }

    /// Mean loss over row-major `n x m` predictions and targets.
    pub fn mean(&self, preds: &[f64], targets: &[f64], m: usize) -> f64 {
        let n = preds.len() / m;
        if n == 0 {
            return 0.0;
        }
        preds
            .chunks(m)
            .zip(targets.chunks(m))
            .map(|(p, t)| self.value(p, t))
            .sum::<f64>()
            / n as f64
    }
}
