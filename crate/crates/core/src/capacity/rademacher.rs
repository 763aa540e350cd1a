//! Monte-Carlo empirical Rademacher complexity over a finite sampled subset of
//! a function class. The max over sampled functions is a lower estimate of
//! the sup over the class.

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::Serialize;

use super::{ThresholdCombination, ThresholdUnit};
use crate::error::{Error, Result};
use crate::rng::{rng_from, Rng};

/// Anything that can be evaluated on a sample point.
pub trait Function {
    fn eval(&self, x: &[f64]) -> f64;
}

impl Function for ThresholdCombination {
    fn eval(&self, x: &[f64]) -> f64 {
        self.value(x)
    }
}

impl<F: Fn(&[f64]) -> f64> Function for F {
    fn eval(&self, x: &[f64]) -> f64 {
        self(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RademacherEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub draws: usize,
    pub n_functions: usize,
}

/// Estimate from precomputed function values (`values[f][i] = f(x_i)`).
/// Signs come from their own stream, so the same seed gives the same signs
/// whatever the class.
pub fn rademacher_from_values(values: &[Vec<f64>], draws: usize, seed: u64) -> Result<RademacherEstimate> {
    if values.is_empty() {
        return Err(Error::invalid("the sampled function class is empty"));
    }
    if draws == 0 {
        return Err(Error::invalid("draws must be >= 1"));
    }
    let n = values[0].len();
    if n == 0 || values.iter().any(|v| v.len() != n) {
        return Err(Error::invalid("every function needs one value per sample point"));
    }
    let mut signs = rng_from(seed, "rademacher-signs", 0);
    let mut eps = vec![0.0; n];
    let mut sups = Vec::with_capacity(draws);
    for _ in 0..draws {
        for e in eps.iter_mut() {
            *e = if signs.gen::<bool>() { 1.0 } else { -1.0 };
        }
        let sup = values
            .iter()
            .map(|f| f.iter().zip(&eps).map(|(v, e)| v * e).sum::<f64>() / n as f64)
            .fold(f64::NEG_INFINITY, f64::max);
        sups.push(sup);
    }
    let mean = sups.iter().sum::<f64>() / draws as f64;
    let var = if draws > 1 {
        sups.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (draws - 1) as f64
    } else {
        0.0
    };
    Ok(RademacherEstimate {
        estimate: mean,
        std_error: (var / draws as f64).sqrt(),
        draws,
        n_functions: values.len(),
    })
}

/// Draws `num_functions` functions from `sampler` (seeded stream) and
/// estimates the Rademacher complexity on `sample` over `draws` sign vectors.
pub fn empirical_rademacher<F, S>(
    sample: &[Vec<f64>],
    num_functions: usize,
    mut sampler: S,
    draws: usize,
    seed: u64,
) -> Result<RademacherEstimate>
where
    F: Function,
    S: FnMut(&mut Rng) -> F,
{
    let mut rng = rng_from(seed, "rademacher-functions", 0);
    let values: Vec<Vec<f64>> = (0..num_functions)
        .map(|_| {
            let f = sampler(&mut rng);
            sample.iter().map(|x| f.eval(x)).collect()
        })
        .collect();
    rademacher_from_values(&values, draws, seed)
}

/// `n` points from a standard normal in `R^d`.
pub fn gaussian_sample(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = rng_from(seed, "rademacher-sample", 0);
    (0..n)
        .map(|_| (0..d).map(|_| rng.sample(StandardNormal)).collect())
        .collect()
}

fn random_units(rng: &mut Rng, units: usize, d: usize) -> Vec<ThresholdUnit> {
    (0..units)
        .map(|_| ThresholdUnit {
            theta: (0..d).map(|_| rng.sample(StandardNormal)).collect(),
            t: rng.sample(StandardNormal),
        })
        .collect()
}

/// A random member of `lin_units(T)`: Gaussian units, weights uniform on
/// `[-scale, scale]`.
pub fn sample_lin(rng: &mut Rng, units: usize, d: usize, scale: f64) -> ThresholdCombination {
    let u = random_units(rng, units, d);
    let weights = (0..units).map(|_| scale * rng.gen_range(-1.0..=1.0)).collect();
    ThresholdCombination {
        units: u,
        weights,
        threshold: 0.0,
    }
}

/// A random member of `conv_units(T)`: raw weights `scale * U[0,1]`,
/// normalized onto the simplex, so `scale` cancels.
pub fn sample_conv(rng: &mut Rng, units: usize, d: usize, scale: f64) -> ThresholdCombination {
    let u = random_units(rng, units, d);
    let raw: Vec<f64> = (0..units).map(|_| scale * rng.gen::<f64>()).collect();
    let total: f64 = raw.iter().sum();
    ThresholdCombination {
        units: u,
        weights: raw.iter().map(|w| w / total).collect(),
        threshold: 0.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_class_is_zero() {
        let sample = gaussian_sample(10, 2, 1);
        let est = empirical_rademacher(&sample, 3, |_| |_: &[f64]| 0.0, 50, 1).unwrap();
        assert_eq!(est.estimate, 0.0);
    }

    #[test]
    fn plus_minus_constant_matches_enumeration() {
        // exact: E|sum of 4 signs| / 4 over the 16 patterns
        let exact: f64 = (0u32..16)
            .map(|c| {
                (0..4)
                    .map(|i| if c >> i & 1 == 1 { 1.0 } else { -1.0 })
                    .sum::<f64>()
                    .abs()
                    / 4.0
            })
            .sum::<f64>()
            / 16.0;
        assert_eq!(exact, 0.375);
        let values = vec![vec![1.0; 4], vec![-1.0; 4]];
        let est = rademacher_from_values(&values, 20_000, 9).unwrap();
        assert!((est.estimate - exact).abs() <= 3.0 * est.std_error, "{est:?}");
    }

    #[test]
    fn scaling_is_exactly_linear_for_lin() {
        let sample = gaussian_sample(30, 2, 4);
        let est = |c: f64| {
            empirical_rademacher(&sample, 50, |r| sample_lin(r, 5, 2, c), 200, 4)
                .unwrap()
                .estimate
        };
        let base = est(1.0);
        assert!(((est(10.0) / base) - 10.0).abs() < 1e-9);
    }

    #[test]
    fn superset_never_decreases() {
        let sample = gaussian_sample(20, 2, 2);
        let values: Vec<Vec<f64>> = {
            let mut rng = rng_from(2, "t", 0);
            (0..40)
                .map(|_| {
                    let f = sample_conv(&mut rng, 4, 2, 1.0);
                    sample.iter().map(|x| f.value(x)).collect()
                })
                .collect()
        };
        let small = rademacher_from_values(&values[..10], 100, 3).unwrap();
        let big = rademacher_from_values(&values, 100, 3).unwrap();
        assert!(big.estimate >= small.estimate);
    }

    #[test]
    fn errors() {
        assert!(rademacher_from_values(&[], 10, 0).is_err());
        assert!(rademacher_from_values(&[vec![1.0]], 0, 0).is_err());
    }
}
