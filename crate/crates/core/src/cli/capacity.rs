use std::fs::File;
use std::io;
use std::path::PathBuf;

use clap::{Subcommand, ValueEnum};
use serde::Serialize;

use crate::capacity::{
    bound_constant, empirical_rademacher, gaussian_sample, sample_conv, sample_lin, verify_shattering, Construction,
    RademacherEstimate,
};
use crate::error::{Error, Result};
use crate::synth;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Class {
    Lin,
    Conv,
}

#[derive(Debug, Subcommand)]
pub enum CapacityCommand {
    /// Verify both circle constructions on all 2^k labelings.
    Shatter {
        #[arg(long)]
        k: usize,
    },
    /// Monte-Carlo Rademacher estimate for sampled combinations of threshold
    /// units. Without --class, prints lin at scales 1, 10, 100 next to conv.
    Rademacher {
        #[arg(long, value_enum)]
        class: Option<Class>,
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long, default_value_t = 200)]
        draws: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Sampled functions per estimate.
        #[arg(long, default_value_t = 200)]
        functions: usize,
        /// Threshold units per sampled function.
        #[arg(long, default_value_t = 10)]
        units: usize,
        /// Input dimension of the sample.
        #[arg(long, default_value_t = 2)]
        dim: usize,
    },
    /// Evaluate `c / sqrt(n)` with `c = 2 c_phi B (sqrt(2 ln(1/delta)) + D sqrt(p) + 2)`.
    Bound {
        #[arg(long)]
        cphi: f64,
        #[arg(long = "B")]
        b: f64,
        #[arg(long)]
        delta: f64,
        #[arg(long)]
        p: f64,
        #[arg(long)]
        n: u64,
        #[arg(long = "D", default_value_t = 1.0)]
        d: f64,
    },
}

#[derive(Debug, Subcommand)]
pub enum GenerateCommand {
    /// Regression data from a random convex combination of `k` modules.
    Regression {
        #[arg(long, default_value_t = 2000)]
        n: usize,
        #[arg(long, default_value_t = 10)]
        d: usize,
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[arg(long, default_value_t = 1)]
        hidden: usize,
        #[arg(long, default_value_t = 3.0)]
        bound: f64,
        #[arg(long, default_value_t = 0.1)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output CSV (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// The k circle points with random binary labels.
    Circle {
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Serialize)]
struct ShatterRow {
    construction: Construction,
    k: usize,
    labelings: usize,
    failures: usize,
    off_simplex: usize,
    verified: bool,
}

#[derive(Serialize)]
struct RademacherRow {
    class: Class,
    scale: f64,
    #[serde(flatten)]
    estimate: RademacherEstimate,
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string(value)?);
    Ok(())
}

pub fn cmd_capacity(cmd: CapacityCommand) -> Result<()> {
    match cmd {
        CapacityCommand::Shatter { k } => {
            let mut rows = Vec::new();
            for c in [Construction::Linear, Construction::Convex] {
                let cert = verify_shattering(c, k).map_err(|e| Error::Usage(e.to_string()))?;
                rows.push(ShatterRow {
                    construction: c,
                    k,
                    labelings: cert.labelings.len(),
                    failures: cert.failures,
                    off_simplex: cert.off_simplex,
                    verified: cert.verified(),
                });
            }
            println!(
                "{:<8} {:>4} {:>10} {:>9} {:>12} {:>9}",
                "class", "k", "labelings", "failures", "off-simplex", "verified"
            );
            for r in &rows {
                let name = match r.construction {
                    Construction::Linear => "lin",
                    Construction::Convex => "conv",
                };
                println!(
                    "{:<8} {:>4} {:>10} {:>9} {:>12} {:>9}",
                    name, r.k, r.labelings, r.failures, r.off_simplex, r.verified
                );
            }
            print_json(&rows)?;
            if rows.iter().all(|r| r.verified) {
                Ok(())
            } else {
                Err(Error::invalid("shattering verification failed"))
            }
        }
        CapacityCommand::Rademacher {
            class,
            scale,
            n,
            draws,
            seed,
            functions,
            units,
            dim,
        } => {
            if n == 0 || units == 0 || dim == 0 || !(scale > 0.0) {
                return Err(Error::Usage("n, units, dim and scale must be positive".into()));
            }
            let sample = gaussian_sample(n, dim, seed);
            let estimate = |c: Class, s: f64| match c {
                Class::Lin => empirical_rademacher(&sample, functions, |r| sample_lin(r, units, dim, s), draws, seed),
                Class::Conv => empirical_rademacher(&sample, functions, |r| sample_conv(r, units, dim, s), draws, seed),
            };
            let runs: Vec<(Class, f64)> = match class {
                Some(c) => vec![(c, scale)],
                None => [1.0, 10.0, 100.0]
                    .iter()
                    .flat_map(|&s| [(Class::Lin, s), (Class::Conv, s)])
                    .collect(),
            };
            let mut rows = Vec::new();
            for (c, s) in runs {
                let est = estimate(c, s).map_err(|e| Error::Usage(e.to_string()))?;
                rows.push(RademacherRow {
                    class: c,
                    scale: s,
                    estimate: est,
                });
            }
            println!("{:<6} {:>8} {:>14} {:>12}", "class", "scale", "estimate", "std error");
            for r in &rows {
                let name = match r.class {
                    Class::Lin => "lin",
                    Class::Conv => "conv",
                };
                println!(
                    "{:<6} {:>8} {:>14.6} {:>12.6}",
                    name, r.scale, r.estimate.estimate, r.estimate.std_error
                );
            }
            print_json(&rows)
        }
        CapacityCommand::Bound {
            cphi,
            b,
            delta,
            p,
            n,
            d,
        } => {
            let value = bound_constant(cphi, b, delta, p, n, d).map_err(|e| Error::Usage(e.to_string()))?;
            println!("c_phi {cphi}  B {b}  delta {delta}  p {p}  n {n}  D {d}");
            println!("bound {value:.10}");
            print_json(&serde_json::json!({
                "c_phi": cphi, "B": b, "delta": delta, "p": p, "n": n, "D": d, "bound": value,
            }))
        }
    }
}

pub fn cmd_generate(cmd: GenerateCommand) -> Result<()> {
    let (data, out) = match cmd {
        GenerateCommand::Regression {
            n,
            d,
            k,
            hidden,
            bound,
            noise,
            seed,
            out,
        } => {
            if n == 0 || d == 0 || k == 0 || hidden == 0 || !(noise >= 0.0) {
                return Err(Error::Usage(
                    "n, d, k, hidden must be positive and noise nonnegative".into(),
                ));
            }
            let f = synth::random_ensemble(seed, d, hidden, k, bound).map_err(|e| Error::Usage(e.to_string()))?;
            (synth::sample_regression(&f, n, noise, seed, 0)?, out)
        }
        GenerateCommand::Circle { k, seed, out } => (
            synth::circle_labels(k, seed).map_err(|e| Error::Usage(e.to_string()))?,
            out,
        ),
    };
    match out {
        Some(path) => synth::write_csv(&data, File::create(path)?),
        None => synth::write_csv(&data, io::stdout().lock()),
    }
}
