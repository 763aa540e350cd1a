//! Acceptance suite. Each check prints one PASS/FAIL line; the process exits
//! nonzero if any check fails.

use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use convex_ensemble::basis::{BasisModule, Shape};
use convex_ensemble::capacity::{
    bound_constant, empirical_rademacher, gaussian_sample, sample_conv, sample_lin, verify_shattering, Construction,
};
use convex_ensemble::dataset::{prepare, Dataset, SplitSpec, Targets};
use convex_ensemble::ensemble::{ConvexEnsemble, Incoming};
use convex_ensemble::greedy::line_search::search_step;
use convex_ensemble::greedy::{self, AtomSource, GreedyConfig, LineSearchRule, Variant};
use convex_ensemble::loss::{LossKind, LossSpec};
use convex_ensemble::ngce::{grad_v, weights_from};
use convex_ensemble::synth;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn normal(r: &mut ChaCha8Rng) -> f64 {
    r.sample(StandardNormal)
}

fn random_module(r: &mut ChaCha8Rng, shape: Shape, bound: f64) -> BasisModule {
    let p = (0..shape.n_params()).map(|_| normal(r)).collect();
    BasisModule::from_vector(shape, bound, p).unwrap()
}

// ---------------------------------------------------------------- 1

fn simplex_ok(w: &[f64]) -> (bool, f64) {
    let dev = (w.iter().sum::<f64>() - 1.0).abs();
    (w.iter().all(|&x| x >= 0.0) && dev <= 1e-9, dev)
}

fn simplex_fuzz() -> Outcome {
    let shape = Shape::new(1, 1, 1);
    let mut r = rng(1);
    let mut worst = 0.0f64;
    let mut ops = 0usize;
    for seq in 0..10_000 {
        let mut f = ConvexEnsemble::single(random_module(&mut r, shape, 1.0));
        for _ in 0..r.gen_range(1..25) {
            let incoming = |r: &mut ChaCha8Rng, f: &ConvexEnsemble| {
                if r.gen_bool(0.3) {
                    Incoming::Existing(r.gen_range(0..f.len()))
                } else {
                    Incoming::New(random_module(r, shape, 1.0))
                }
            };
            match r.gen_range(0..4) {
                0 => {
                    let g = incoming(&mut r, &f);
                    let alpha = if r.gen_bool(0.1) { 1.0 } else { r.gen::<f64>() };
                    f.add_blend(g, alpha).unwrap();
                }
                1 => {
                    let a = r.gen_range(0..f.len());
                    if f.weights()[a] < 1.0 {
                        let cap = f.away_cap(a).unwrap();
                        let gamma = if r.gen_bool(0.2) { cap } else { r.gen::<f64>() * cap };
                        f.away_reweight(a, gamma).unwrap();
                    }
                }
                2 => {
                    let a = r.gen_range(0..f.len());
                    let g = incoming(&mut r, &f);
                    let wa = f.weights()[a];
                    let gamma = if r.gen_bool(0.2) { wa } else { r.gen::<f64>() * wa };
                    f.pairwise_swap(a, g, gamma).unwrap();
                }
                _ => {
                    let eps = if r.gen_bool(0.5) { 0.0 } else { r.gen::<f64>() * 0.05 };
                    let max = f.weights().iter().copied().fold(0.0, f64::max);
                    if max > eps {
                        f.prune(eps).unwrap();
                    }
                }
            }
            ops += 1;
            let (ok, dev) = simplex_ok(f.weights());
            worst = worst.max(dev);
            if !ok {
                return outcome(false, format!("sequence {seq}: weights {:?}", f.weights()));
            }
        }
    }
    outcome(true, format!("10000 sequences, {ops} moves, max |sum-1| = {worst:.1e}"))
}

// ---------------------------------------------------------------- 2

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt().max(1e-12);
    diff / scale
}

fn central_diff(x: &[f64], h: f64, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    (0..x.len())
        .map(|j| {
            let mut p = x.to_vec();
            let mut q = x.to_vec();
            p[j] += h;
            q[j] -= h;
            (f(&p) - f(&q)) / (2.0 * h)
        })
        .collect()
}

/// True when `x` is at least `margin` away from every ReLU and clamp kink.
fn smooth_point(m: &BasisModule, x: &[f64], margin: f64) -> bool {
    let s = m.shape();
    let p = m.params();
    let (w1, rest) = p.split_at(s.h * s.d);
    let (b1, rest) = rest.split_at(s.h);
    let (w2, b2) = rest.split_at(s.m * s.h);
    let mut hidden = vec![0.0; s.h];
    for j in 0..s.h {
        let z: f64 = (0..s.d).map(|i| w1[j * s.d + i] * x[i]).sum::<f64>() + b1[j];
        if z.abs() < margin {
            return false;
        }
        hidden[j] = z.max(0.0);
    }
    (0..s.m).all(|k| {
        let o: f64 = (0..s.h).map(|j| w2[k * s.h + j] * hidden[j]).sum::<f64>() + b2[k];
        (o.abs() - m.bound()).abs() >= margin
    })
}

fn gradient_oracles() -> Outcome {
    let mut r = rng(2);
    let mut worst = [0.0f64; 3];

    let mut basis_points = 0;
    while basis_points < 100 {
        let shape = Shape::new(r.gen_range(1..5), r.gen_range(1..6), r.gen_range(1..4));
        let bound = r.gen_range(0.5..5.0);
        let m = random_module(&mut r, shape, bound);
        let x: Vec<f64> = (0..shape.d).map(|_| normal(&mut r)).collect();
        if !smooth_point(&m, &x, 1e-3) {
            continue;
        }
        let up: Vec<f64> = (0..shape.m).map(|_| normal(&mut r)).collect();
        let g = m.grad_params(&x, &up).unwrap();
        let fd = central_diff(m.params(), 1e-6, |p| {
            let mm = BasisModule::from_vector(shape, bound, p.to_vec()).unwrap();
            mm.forward(&x).unwrap().iter().zip(&up).map(|(a, b)| a * b).sum()
        });
        worst[0] = worst[0].max(rel_err(&g, &fd));
        basis_points += 1;
    }

    let kinds = [
        LossKind::Quadratic,
        LossKind::Lq(3.0),
        LossKind::Logistic,
        LossKind::CrossEntropy,
    ];
    for i in 0..100 {
        let kind = kinds[i % kinds.len()];
        let loss = LossSpec::new(kind, 5.0).unwrap();
        let (pred, target): (Vec<f64>, Vec<f64>) = match kind {
            LossKind::Logistic => (vec![normal(&mut r)], vec![if r.gen_bool(0.5) { 1.0 } else { -1.0 }]),
            LossKind::CrossEntropy => {
                let m = r.gen_range(2..6);
                let mut t = vec![0.0; m];
                t[r.gen_range(0..m)] = 1.0;
                ((0..m).map(|_| normal(&mut r)).collect(), t)
            }
            _ => {
                let m = r.gen_range(1..4);
                // keep residuals away from 0, where |r|^3 is least smooth
                let t: Vec<f64> = (0..m).map(|_| normal(&mut r)).collect();
                let p = t
                    .iter()
                    .map(|v| v + r.gen_range(0.1..2.0) * if r.gen_bool(0.5) { 1.0 } else { -1.0 })
                    .collect();
                (p, t)
            }
        };
        let g = loss.grad_pred(&pred, &target).unwrap();
        let fd = central_diff(&pred, 1e-6, |p| loss.eval(p, &target).unwrap());
        worst[1] = worst[1].max(rel_err(&g, &fd));
    }

    for _ in 0..100 {
        let k = r.gen_range(1..12);
        let v: Vec<f64> = (0..k)
            .map(|_| {
                let s = r.gen_range(0.05..3.0);
                if r.gen_bool(0.5) {
                    s
                } else {
                    -s
                }
            })
            .collect();
        let up: Vec<f64> = (0..k).map(|_| normal(&mut r)).collect();
        let g = grad_v(&v, &up);
        let fd = central_diff(&v, 1e-6, |vv| {
            weights_from(vv).iter().zip(&up).map(|(a, b)| a * b).sum()
        });
        worst[2] = worst[2].max(rel_err(&g, &fd));
    }
    let pass = worst.iter().all(|&w| w <= 1e-4);
    outcome(
        pass,
        format!(
            "max relative error: basis {:.1e}, loss {:.1e}, ngce {:.1e} (100 points each)",
            worst[0], worst[1], worst[2]
        ),
    )
}

// ---------------------------------------------------------------- 3

/// Grid argmin on `[0, 1]` with `points` nodes, refined by the parabola
/// through the best node and its neighbours.
fn grid_scan(points: usize, f: impl Fn(f64) -> f64) -> f64 {
    let h = 1.0 / (points - 1) as f64;
    let vals: Vec<f64> = (0..points).map(|i| f(i as f64 * h)).collect();
    let mut best = 0;
    for (i, v) in vals.iter().enumerate() {
        if *v < vals[best] {
            best = i;
        }
    }
    let x = best as f64 * h;
    if best == 0 || best + 1 == points {
        return x;
    }
    let (a, b, c) = (vals[best - 1], vals[best], vals[best + 1]);
    let den = a - 2.0 * b + c;
    if den <= 0.0 {
        return x;
    }
    (x + 0.5 * h * (a - c) / den).clamp(x - h, x + h)
}

fn line_search_oracle() -> Outcome {
    let mut r = rng(3);
    let mut worst = [0.0f64; 2];
    for _ in 0..100 {
        let n = r.gen_range(5..40);
        let f: Vec<f64> = (0..n).map(|_| normal(&mut r)).collect();
        let g: Vec<f64> = (0..n).map(|_| 2.0 * normal(&mut r)).collect();
        let d: Vec<f64> = g.iter().zip(&f).map(|(a, b)| a - b).collect();

        let y: Vec<f64> = (0..n)
            .map(|i| f[i] + r.gen_range(-0.2..1.2) * d[i] + 0.3 * normal(&mut r))
            .collect();
        let quad = LossSpec::quadratic(10.0);
        let a = search_step(LineSearchRule::ClosedForm, &quad, &f, &d, &y, 1, 1.0, 0);
        let scan = grid_scan(100_001, |t| (0..n).map(|i| (f[i] + t * d[i] - y[i]).powi(2)).sum());
        worst[0] = worst[0].max((a - scan).abs());

        let labels: Vec<f64> = (0..n).map(|_| if r.gen_bool(0.5) { 1.0 } else { -1.0 }).collect();
        let logistic = LossSpec::new(LossKind::Logistic, 10.0).unwrap();
        let a = search_step(LineSearchRule::Brent, &logistic, &f, &d, &labels, 1, 1.0, 0);
        let scan = grid_scan(100_001, |t| {
            (0..n)
                .map(|i| {
                    let z = -labels[i] * (f[i] + t * d[i]);
                    z.max(0.0) + (-z.abs()).exp().ln_1p()
                })
                .sum()
        });
        worst[1] = worst[1].max((a - scan).abs());
    }
    outcome(
        worst[0] <= 1e-6 && worst[1] <= 1e-5,
        format!(
            "max |alpha - scan|: closed form {:.1e}, Brent log-loss {:.1e}",
            worst[0], worst[1]
        ),
    )
}

// ---------------------------------------------------------------- 4, 5

struct DictionaryInstance {
    atoms: Vec<BasisModule>,
    data: Dataset,
    /// atom outputs on the sample, `outs[j][i]`
    outs: Vec<Vec<f64>>,
    y: Vec<f64>,
}

fn dictionary_instance() -> DictionaryInstance {
    let mut r = rng(4);
    let shape = Shape::new(4, 3, 1);
    let bound = 3.0;
    let atoms: Vec<BasisModule> = (0..20).map(|_| random_module(&mut r, shape, bound)).collect();
    let rows: Vec<Vec<f64>> = (0..500).map(|_| (0..4).map(|_| normal(&mut r)).collect()).collect();
    let outs: Vec<Vec<f64>> = atoms
        .iter()
        .map(|a| rows.iter().map(|x| a.forward(x).unwrap()[0]).collect())
        .collect();
    // a target partly inside the hull, partly outside, plus noise
    let y: Vec<f64> = (0..rows.len())
        .map(|i| {
            0.5 * outs[3][i] + 0.3 * outs[7][i] + 0.2 * outs[11][i] + 0.5 * rows[i][0].sin() + 0.1 * normal(&mut r)
        })
        .collect();
    let data = Dataset::from_rows(&rows, y.clone()).unwrap();
    DictionaryInstance { atoms, data, outs, y }
}

fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let (mut css, mut theta) = (0.0, 0.0);
    for (j, uj) in u.iter().enumerate() {
        css += uj;
        let t = (css - 1.0) / (j + 1) as f64;
        if uj - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}

/// Minimizes `mean (sum_j a_j out_j - y)^2` over the simplex by accelerated
/// projected gradient with restarts; returns the optimal risk.
fn simplex_oracle(inst: &DictionaryInstance) -> (f64, f64) {
    let k = inst.outs.len();
    let n = inst.y.len() as f64;
    let mut q = vec![vec![0.0; k]; k];
    let mut b = vec![0.0; k];
    for i in 0..k {
        for (j, qij) in q[i].iter_mut().enumerate() {
            *qij = inst.outs[i].iter().zip(&inst.outs[j]).map(|(a, c)| a * c).sum::<f64>() / n;
        }
        b[i] = inst.outs[i].iter().zip(&inst.y).map(|(a, c)| a * c).sum::<f64>() / n;
    }
    let grad = |a: &[f64]| -> Vec<f64> {
        (0..k)
            .map(|i| 2.0 * ((0..k).map(|j| q[i][j] * a[j]).sum::<f64>() - b[i]))
            .collect()
    };
    // Lipschitz constant of the gradient by power iteration on 2Q
    let mut v = vec![1.0; k];
    let mut lam = 0.0;
    for _ in 0..500 {
        let w: Vec<f64> = (0..k).map(|i| (0..k).map(|j| q[i][j] * v[j]).sum()).collect();
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        lam = norm;
        v = w.iter().map(|x| x / norm).collect();
    }
    let step = 1.0 / (2.0 * lam * 1.01);
    let risk = |a: &[f64]| -> f64 {
        (0..inst.y.len())
            .map(|i| ((0..k).map(|j| a[j] * inst.outs[j][i]).sum::<f64>() - inst.y[i]).powi(2))
            .sum::<f64>()
            / n
    };
    let gap = |a: &[f64]| {
        let g = grad(a);
        let lin: f64 = g.iter().zip(a).map(|(x, y)| x * y).sum();
        lin - g.iter().copied().fold(f64::INFINITY, f64::min)
    };
    let mut x = vec![1.0 / k as f64; k];
    let mut z = x.clone();
    let mut t = 1.0f64;
    let mut prev_obj = f64::INFINITY;
    for it in 0..2_000_000 {
        let g = grad(&z);
        let next = project_simplex(&z.iter().zip(&g).map(|(a, b)| a - step * b).collect::<Vec<_>>());
        let obj: f64 = {
            let qa: f64 = (0..k)
                .map(|i| next[i] * (0..k).map(|j| q[i][j] * next[j]).sum::<f64>())
                .sum();
            qa - 2.0 * b.iter().zip(&next).map(|(p, c)| p * c).sum::<f64>()
        };
        if obj > prev_obj {
            // restart momentum
            t = 1.0;
            z = x.clone();
            prev_obj = f64::INFINITY;
            continue;
        }
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        z = next
            .iter()
            .zip(&x)
            .map(|(a, c)| a + (t - 1.0) / t_next * (a - c))
            .collect();
        x = next;
        t = t_next;
        prev_obj = obj;
        if it % 100 == 0 && gap(&x) <= 1e-10 {
            break;
        }
    }
    (risk(&x), gap(&x))
}

fn dict_config(variant: Variant, atoms: &[BasisModule]) -> GreedyConfig {
    GreedyConfig {
        variant,
        max_modules: 201,
        early_stop_window: 1000,
        early_stop_tol: 0.0,
        atoms: AtomSource::Dictionary(atoms.to_vec()),
        bound: 3.0,
        loss: LossKind::Quadratic,
        line_search: LineSearchRule::ClosedForm,
        ..GreedyConfig::default()
    }
}

fn fw_rate(inst: &DictionaryInstance, r_star: f64, oracle_gap: f64) -> Outcome {
    if oracle_gap > 1e-10 {
        return outcome(false, format!("simplex oracle stopped at gap {oracle_gap:.1e}"));
    }
    let (_, hist) = greedy::train(&dict_config(Variant::Fw, &inst.atoms), &inst.data, None, None).unwrap();
    if hist.records.len() < 201 {
        return outcome(false, format!("only {} iterations recorded", hist.records.len()));
    }
    let scaled: Vec<f64> = (5..=200)
        .map(|t| t as f64 * (hist.records[t].train_loss - r_star))
        .collect();
    let limit = 2.0 * scaled[0];
    let max = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min_gap = hist.records[200].train_loss - r_star;
    outcome(
        max <= limit && min_gap >= -1e-12,
        format!("max t*(R_t - R*) over [5,200] = {max:.3e}, 2x value at t=5 = {limit:.3e}, final gap {min_gap:.1e}"),
    )
}

fn afw_pfw(inst: &DictionaryInstance, r_star: f64) -> Outcome {
    let mut parts = Vec::new();
    let mut pass = true;
    for v in [Variant::Afw, Variant::Pfw] {
        let (_, hist) = greedy::train(&dict_config(v, &inst.atoms), &inst.data, None, None).unwrap();
        let first = hist.records.iter().position(|r| r.train_loss - r_star <= 1e-6);
        pass &= first.is_some_and(|t| t <= 200);
        let last = hist.records.last().unwrap().train_loss - r_star;
        parts.push(format!(
            "{v}: gap <= 1e-6 at step {}, final gap {last:.1e}",
            first.map_or("never".to_string(), |t| t.to_string())
        ));
    }
    outcome(pass, parts.join("; "))
}

// ---------------------------------------------------------------- 6, 7

fn regression_bound(train: &Dataset) -> f64 {
    let y = train.targets().regression().unwrap();
    4.0 / 3.0 * y.iter().fold(0.0f64, |a, v| a.max(v.abs()))
}

fn pfw_vs_nonlinear() -> Outcome {
    let mut wins = 0;
    let mut parts = Vec::new();
    for seed in 0..3u64 {
        let target = synth::random_ensemble(seed, 10, 1, 5, 3.0).unwrap();
        let raw = synth::sample_regression(&target, 2000, 0.1, seed, 0).unwrap();
        let p = prepare(&raw, &SplitSpec::with_seed(seed)).unwrap();
        let bound = regression_bound(&p.train);
        let at30 = |variant| {
            let cfg = GreedyConfig {
                variant,
                max_modules: 51,
                early_stop_window: 1000,
                early_stop_tol: 0.0,
                atoms: AtomSource::Trained { hidden: 1 },
                bound,
                seed,
                ..GreedyConfig::default()
            };
            let (_, hist) = greedy::train(&cfg, &p.train, Some(&p.val), Some(&p.test)).unwrap();
            hist.records[30].train_loss
        };
        let (pfw, nl) = (at30(Variant::Pfw), at30(Variant::Nonlinear));
        if pfw <= nl {
            wins += 1;
        }
        parts.push(format!("seed {seed}: pfw {pfw:.4} vs nonlinear {nl:.4}"));
    }
    outcome(wins >= 2, format!("{wins}/3 seeds; {}", parts.join(", ")))
}

fn excess_test_mse(n: usize, seed: u64) -> f64 {
    let target = synth::random_ensemble(100 + seed, 5, 2, 3, 3.0).unwrap();
    let all = synth::sample_regression(&target, n, 0.0, seed, 0).unwrap();
    let test = synth::sample_regression(&target, 5000, 0.0, seed, 1).unwrap();
    let n_train = n * 4 / 5;
    let train = all.subset(&(0..n_train).collect::<Vec<_>>());
    let val = all.subset(&(n_train..n).collect::<Vec<_>>());
    let cfg = GreedyConfig {
        variant: Variant::Pfw,
        atoms: AtomSource::Trained { hidden: 2 },
        bound: regression_bound(&train),
        seed,
        ..GreedyConfig::default()
    };
    let (f, _) = greedy::train(&cfg, &train, Some(&val), None).unwrap();
    let pred = f.predict_rows(test.features()).unwrap();
    let Targets::Regression(y) = test.targets() else {
        unreachable!()
    };
    pred.iter().zip(y).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / y.len() as f64
}

fn recovery() -> Outcome {
    let small: f64 = (0..3).map(|s| excess_test_mse(500, s)).sum::<f64>() / 3.0;
    let large: f64 = (0..3).map(|s| excess_test_mse(2000, s)).sum::<f64>() / 3.0;
    outcome(
        large <= 0.6 * small,
        format!(
            "mean excess test MSE: n=500 {small:.4e}, n=2000 {large:.4e}, ratio {:.3}",
            large / small
        ),
    )
}

// ---------------------------------------------------------------- 8-11

fn shattering() -> Outcome {
    for k in 1..=12 {
        for c in [Construction::Linear, Construction::Convex] {
            let cert = verify_shattering(c, k).unwrap();
            // independent re-check of every labeling
            let pts = &cert.points;
            for l in &cert.labelings {
                let ok_out = l.outputs == l.labels && l.outputs.len() == pts.len();
                let ok_w = c == Construction::Linear
                    || (l.weights.iter().all(|&w| w >= 0.0) && (l.weights.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
                if !ok_out || !ok_w {
                    return outcome(false, format!("{c:?} k={k} labels {:?}", l.labels));
                }
            }
            if !cert.verified() {
                return outcome(false, format!("{c:?} k={k} not verified"));
            }
        }
    }
    outcome(
        true,
        "all 2^k labelings for k = 1..12, both constructions, convex weights on the simplex",
    )
}

fn rademacher_scaling() -> Outcome {
    let sample = gaussian_sample(200, 2, 9);
    let lin = |c: f64| {
        empirical_rademacher(&sample, 100, |r| sample_lin(r, 10, 2, c), 300, 9)
            .unwrap()
            .estimate
    };
    let conv = |c: f64| {
        empirical_rademacher(&sample, 100, |r| sample_conv(r, 10, 2, c), 300, 9)
            .unwrap()
            .estimate
    };
    let base = lin(1.0);
    let r10 = lin(10.0) / base;
    let r100 = lin(100.0) / base;
    let c1 = conv(1.0);
    let dconv = [conv(10.0), conv(100.0)]
        .iter()
        .map(|v| (v - c1).abs() / c1.abs())
        .fold(0.0, f64::max);
    let pass = (r10 - 10.0).abs() <= 1e-9 && (r100 - 100.0).abs() <= 1e-9 && dconv <= 1e-12;
    outcome(
        pass,
        format!("lin ratios {r10:.12} and {r100:.12}; conv estimate {c1:.6}, max relative change under rescaling {dconv:.1e}"),
    )
}

fn ngce_reparam() -> Outcome {
    let mut r = rng(10);
    let (mut worst_sum, mut worst_floor) = (0.0f64, f64::INFINITY);
    for _ in 0..10_000 {
        let k = r.gen_range(1..=100);
        let mag = 10f64.powf(r.gen_range(-3.0..6.0));
        let v: Vec<f64> = (0..k)
            .map(|_| {
                if r.gen_bool(0.1) {
                    0.0
                } else {
                    r.gen_range(-1.0..1.0) * mag
                }
            })
            .collect();
        let a = weights_from(&v);
        let floor = 1.0 / (k as f64 * (1.0 + v.iter().map(|x| x.abs()).sum::<f64>()));
        worst_sum = worst_sum.max((a.iter().sum::<f64>() - 1.0).abs());
        let slack = a.iter().copied().fold(f64::INFINITY, f64::min) - (floor - 1e-15);
        worst_floor = worst_floor.min(slack);
    }
    outcome(
        worst_sum <= 1e-12 && worst_floor >= 0.0,
        format!("max |sum-1| = {worst_sum:.1e}, min (alpha_min - floor + 1e-15) = {worst_floor:.1e}"),
    )
}

fn bound_evaluator() -> Outcome {
    let cases = [
        ((1.0, 1.0, (-1.0f64).exp(), 1.0, 1u64, 1.0), 8.828_427_124_746_19),
        ((2.0, 0.5, 0.05, 4.0, 100, 1.5), 1.489_549_366_136_163),
        ((3.0, 10.0, 0.01, 2.0, 400, 0.5), 17.225_883_119_870_52),
    ];
    let mut worst = 0.0f64;
    for ((c, b, d, p, n, dd), want) in cases {
        let got = bound_constant(c, b, d, p, n, dd).unwrap();
        worst = worst.max((got - want).abs());
    }
    let ratio =
        bound_constant(1.0, 1.0, 0.1, 3.0, 250, 2.0).unwrap() / bound_constant(1.0, 1.0, 0.1, 3.0, 1000, 2.0).unwrap();
    outcome(
        worst <= 1e-9 && (ratio - 2.0).abs() <= 1e-12,
        format!("max abs error {worst:.1e} on 3 cases; n -> 4n ratio {ratio}"),
    )
}

// ---------------------------------------------------------------- 12

fn run_train(dir: &Path, csv: &Path, tag: &str, timing: &str) -> (Vec<u8>, String) {
    let model = dir.join(format!("{tag}.json"));
    let history = dir.join(format!("{tag}.csv"));
    let code = convex_ensemble::cli::run([
        "convex-ensemble",
        "train",
        "--variant",
        "pfw",
        "--data",
        csv.to_str().unwrap(),
        "--target",
        "y",
        "--task",
        "reg",
        "--hidden",
        "4",
        "--max-modules",
        "12",
        "--seed",
        "5",
        "--timing",
        timing,
        "--out",
        model.to_str().unwrap(),
        "--history",
        history.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "train exited with {code}");
    (std::fs::read(model).unwrap(), std::fs::read_to_string(history).unwrap())
}

fn drop_seconds(csv: &str) -> Vec<String> {
    csv.lines().map(|l| l.rsplit_once(',').unwrap().0.to_string()).collect()
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("data.csv");
    let target = synth::random_ensemble(6, 4, 2, 3, 3.0).unwrap();
    let data = synth::sample_regression(&target, 400, 0.05, 6, 0).unwrap();
    synth::write_csv(&data, std::fs::File::create(&csv).unwrap()).unwrap();

    let (m1, h1) = run_train(dir.path(), &csv, "a", "off");
    let (m2, h2) = run_train(dir.path(), &csv, "b", "off");
    let (m3, h3) = run_train(dir.path(), &csv, "c", "wall");
    let exact = m1 == m2 && h1 == h2;
    let wall = m3 == m1 && drop_seconds(&h3) == drop_seconds(&h1);
    outcome(
        exact && wall,
        format!(
            "model JSON ({} bytes) and history ({} rows) identical: {exact}; wall-clock run identical apart from seconds: {wall}",
            m1.len(),
            h1.lines().count() - 1
        ),
    )
}

// ----------------------------------------------------------------

fn main() {
    let mut failures = 0;
    let mut check = |id: usize, name: &str, limit: Duration, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let o = f();
        let took = start.elapsed();
        let in_time = took <= limit;
        let pass = o.pass && in_time;
        if !pass {
            failures += 1;
        }
        println!(
            "{} {:>2} {}: {} [{:.2}s, limit {}s{}]",
            if pass { "PASS" } else { "FAIL" },
            id,
            name,
            o.detail,
            took.as_secs_f64(),
            limit.as_secs(),
            if in_time { "" } else { ", over time" }
        );
    };

    let secs = Duration::from_secs;
    check(1, "simplex fuzz", secs(10), &mut simplex_fuzz);
    check(2, "gradient oracles", secs(30), &mut gradient_oracles);
    check(3, "line-search oracle", secs(30), &mut line_search_oracle);

    let inst = dictionary_instance();
    let oracle_start = Instant::now();
    let (r_star, oracle_gap) = simplex_oracle(&inst);
    let oracle_time = oracle_start.elapsed();
    check(4, "FW O(1/t) rate", secs(60), &mut || {
        let mut o = fw_rate(&inst, r_star, oracle_gap);
        o.detail = format!(
            "{}; oracle R* = {r_star:.6}, gap {oracle_gap:.1e} in {:.2}s",
            o.detail,
            oracle_time.as_secs_f64()
        );
        o
    });
    check(5, "AFW/PFW reach the simplex optimum", secs(60), &mut || {
        afw_pfw(&inst, r_star)
    });
    check(6, "PFW vs nonlinear greedy at iteration 30", secs(600), &mut pfw_vs_nonlinear);
    check(7, "excess risk shrinks with n", secs(600), &mut recovery);
    check(8, "shattering constructions", secs(60), &mut shattering);
    check(9, "Rademacher scaling", secs(30), &mut rademacher_scaling);
    check(10, "NGCE weights on the simplex", secs(5), &mut ngce_reparam);
    check(11, "bound evaluator", secs(1), &mut bound_evaluator);
    check(12, "end-to-end determinism", secs(120), &mut determinism);

    if failures > 0 {
        println!("{failures} acceptance check(s) failed");
        std::process::exit(1);
    }
    println!("all acceptance checks passed");
}
