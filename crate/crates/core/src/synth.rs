//! Synthetic data: regression targets from a known random convex combination,
//! and random labelings of circle points for the shattering demo.

use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::basis::{BasisModule, Shape};
use crate::capacity::circle_points;
use crate::dataset::{Dataset, Targets};
use crate::ensemble::ConvexEnsemble;
use crate::error::Result;
use crate::rng::rng_from;

/// A random `f* = sum_i alpha_i g_i` with `k` atoms of width `hidden` on `R^d`.
/// First-layer weights are `N(0, 1/d)`, the rest `N(0, 1)`; mixing weights are
/// normalized exponentials.
pub fn random_ensemble(seed: u64, d: usize, hidden: usize, k: usize, bound: f64) -> Result<ConvexEnsemble> {
    let shape = Shape::new(d, hidden, 1);
    let mut rng = rng_from(seed, "synth-target", 0);
    let in_scale = 1.0 / (d as f64).sqrt();
    let n_w1 = d * hidden;
    let atoms = (0..k)
        .map(|_| {
            let params = (0..shape.n_params())
                .map(|j| {
                    let z: f64 = rng.sample(StandardNormal);
                    if j < n_w1 {
                        z * in_scale
                    } else {
                        z
                    }
                })
                .collect();
            BasisModule::from_vector(shape, bound, params)
        })
        .collect::<Result<Vec<_>>>()?;
    let raw: Vec<f64> = (0..k).map(|_| -rng.gen::<f64>().max(f64::MIN_POSITIVE).ln()).collect();
    let total: f64 = raw.iter().sum();
    ConvexEnsemble::from_parts(atoms, raw.iter().map(|w| w / total).collect())
}

/// `n` standard-normal inputs labelled by `target` plus `N(0, noise^2)` noise.
/// `stream` selects an independent sample for the same seed.
pub fn sample_regression(target: &ConvexEnsemble, n: usize, noise: f64, seed: u64, stream: u64) -> Result<Dataset> {
    let d = target.input_dim();
    let mut rng = rng_from(seed, "synth-sample", stream);
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..d).map(|_| rng.sample(StandardNormal)).collect())
        .collect();
    let mut y = target.predict_rows(&rows.concat())?;
    if noise > 0.0 {
        for v in y.iter_mut() {
            *v += noise * rng.sample::<f64, _>(StandardNormal);
        }
    }
    Dataset::from_rows(&rows, y)
}

/// The `k` circle points with uniformly random 0/1 labels.
pub fn circle_labels(k: usize, seed: u64) -> Result<Dataset> {
    let pts = circle_points(k)?;
    let mut rng = rng_from(seed, "synth-circle", 0);
    let labels: Vec<usize> = (0..k).map(|_| usize::from(rng.gen::<bool>())).collect();
    Dataset::new(
        pts.concat(),
        2,
        Targets::Classification { labels, n_classes: 2 },
        vec!["x1".into(), "x2".into()],
        "label",
    )
}

/// Writes a dataset as CSV with a header, target last.
pub fn write_csv(data: &Dataset, out: impl std::io::Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = data.feature_names().iter().map(String::as_str).collect();
    header.push(data.target_name());
    w.write_record(&header)?;
    for i in 0..data.n_samples() {
        let mut rec: Vec<String> = data.row(i).iter().map(|v| v.to_string()).collect();
        rec.push(match data.targets() {
            Targets::Regression(y) => y[i].to_string(),
            Targets::Classification { labels, .. } => labels[i].to_string(),
        });
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
