use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use indexmap::IndexMap;
use serde::Serialize;

use super::{EvaluateArgs, Timing, TrainArgs, TrainVariant};
use crate::dataset::{self, load_csv, prepare, Dataset, PreparedData, SplitSpec, TargetColumn, Targets, Task};
use crate::ensemble::ConvexEnsemble;
use crate::error::{Error, Result};
use crate::greedy::{self, AtomSource, GreedyConfig, LineSearchRule, TrainHistory, Variant};
use crate::loss::LossKind;
use crate::metrics::{misclassification_rate, predict_labels, regression_metrics};
use crate::model::ModelFile;
use crate::ngce::{train_ngce, NgceConfig};
use crate::optimizer::{OptimConfig, PlateauSchedule};

/// Fully resolved training settings.
struct Plan {
    variant: TrainVariant,
    data: PathBuf,
    target: String,
    task: Task,
    hidden: usize,
    max_modules: usize,
    k: usize,
    seed: u64,
    split: SplitSpec,
    out: PathBuf,
    history: Option<PathBuf>,
    metrics: Option<PathBuf>,
    loss: Option<LossKind>,
    bound: Option<f64>,
    optim: OptimConfig,
    line_search: LineSearchRule,
    early_stop_window: usize,
    early_stop_tol: f64,
    l2: f64,
    prune_eps: f64,
    timing: Timing,
}

fn usage(e: Error) -> Error {
    match e {
        Error::InvalidArgument(msg) => Error::Usage(msg),
        other => other,
    }
}

impl Plan {
    fn from_args(a: TrainArgs) -> Result<Plan> {
        let data = a.data.ok_or_else(|| Error::Usage("missing --data".into()))?;
        let target = a.target.ok_or_else(|| Error::Usage("missing --target".into()))?;
        let seed = a.seed.unwrap_or(0);
        let defaults = OptimConfig::default();
        let sched = PlateauSchedule::default();
        let plan = Plan {
            variant: a.variant.unwrap_or(TrainVariant::Greedy(Variant::Pfw)),
            data,
            target,
            task: a.task.unwrap_or(Task::Regression),
            hidden: a.hidden.unwrap_or(10),
            max_modules: a.max_modules.unwrap_or(100),
            k: a.k.unwrap_or(100),
            seed,
            split: SplitSpec {
                seed: a.split_seed.unwrap_or(seed),
                test_fraction: a.test_fraction.unwrap_or(0.2),
                val_fraction: a.val_fraction.unwrap_or(0.2),
            },
            out: a.out.unwrap_or_else(|| PathBuf::from("model.json")),
            history: a.history,
            metrics: a.metrics,
            loss: a.loss,
            bound: a.bound,
            optim: OptimConfig {
                lr: a.lr.unwrap_or(defaults.lr),
                batch_size: a.batch_size.unwrap_or(defaults.batch_size),
                max_epochs: a.max_epochs.unwrap_or(defaults.max_epochs),
                schedule: PlateauSchedule {
                    patience: a.patience.unwrap_or(sched.patience),
                    factor: a.lr_factor.unwrap_or(sched.factor),
                    min_lr: a.min_lr.unwrap_or(sched.min_lr),
                    tail_epochs: a.tail_epochs.unwrap_or(sched.tail_epochs),
                },
            },
            line_search: a.line_search.unwrap_or(LineSearchRule::ClosedForm),
            early_stop_window: a.early_stop_window.unwrap_or(5),
            early_stop_tol: a.early_stop_tol.unwrap_or(1e-5),
            l2: a.l2.unwrap_or(0.0),
            prune_eps: a.prune_eps.unwrap_or(0.0),
            timing: a.timing.unwrap_or(Timing::Wall),
        };
        plan.optim.validate().map_err(usage)?;
        plan.split.validate().map_err(usage)?;
        if plan.hidden == 0 || plan.max_modules == 0 || plan.k == 0 || plan.early_stop_window == 0 {
            return Err(Error::Usage(
                "hidden, max-modules, k and early-stop-window must be >= 1".into(),
            ));
        }
        if matches!(plan.bound, Some(b) if !(b > 0.0)) {
            return Err(Error::Usage("bound must be positive".into()));
        }
        if !(plan.l2 >= 0.0 && plan.prune_eps >= 0.0 && plan.early_stop_tol >= 0.0) {
            return Err(Error::Usage(
                "l2, prune-eps and early-stop-tol must be nonnegative".into(),
            ));
        }
        Ok(plan)
    }

    fn load(&self) -> Result<(Dataset, PreparedData)> {
        let raw = load_csv(&self.data, &TargetColumn::from(self.target.as_str()), self.task)?;
        let prepared = prepare(&raw, &self.split)?;
        Ok((raw, prepared))
    }

    fn loss_for(&self, train: &Dataset) -> LossKind {
        self.loss.unwrap_or(match train.targets() {
            Targets::Regression(_) => LossKind::Quadratic,
            Targets::Classification { .. } => LossKind::CrossEntropy,
        })
    }

    fn bound_for(&self, train: &Dataset) -> f64 {
        self.bound.unwrap_or_else(|| match train.targets() {
            Targets::Regression(y) => {
                let m = y.iter().fold(0.0f64, |a, v| a.max(v.abs()));
                if m > 0.0 {
                    4.0 / 3.0 * m
                } else {
                    1.0
                }
            }
            Targets::Classification { .. } => 10.0,
        })
    }

    fn greedy_config(&self, variant: Variant, loss: LossKind, bound: f64) -> GreedyConfig {
        GreedyConfig {
            variant,
            max_modules: self.max_modules,
            early_stop_window: self.early_stop_window,
            early_stop_tol: self.early_stop_tol,
            atoms: AtomSource::Trained { hidden: self.hidden },
            bound,
            loss,
            optim: self.optim,
            line_search: self.line_search,
            seed: self.seed,
            prune_eps: self.prune_eps,
        }
    }
}

struct HistoryRow {
    iter: usize,
    train_loss: f64,
    val_loss: Option<f64>,
    alpha: Option<f64>,
    step: String,
    n_atoms: usize,
    seconds: Option<f64>,
}

fn greedy_rows(h: &TrainHistory, timing: Timing) -> Vec<HistoryRow> {
    h.records
        .iter()
        .map(|r| HistoryRow {
            iter: r.iter,
            train_loss: r.train_loss,
            val_loss: r.val_loss,
            alpha: Some(r.alpha),
            step: r.step.to_string(),
            n_atoms: r.n_atoms,
            seconds: Some(match timing {
                Timing::Wall => r.seconds,
                Timing::Off => 0.0,
            }),
        })
        .collect()
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn write_history(path: &Path, rows: &[HistoryRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "iter",
        "train_loss",
        "val_loss",
        "alpha",
        "step_type",
        "n_atoms",
        "seconds",
    ])?;
    for r in rows {
        w.write_record([
            r.iter.to_string(),
            r.train_loss.to_string(),
            opt(r.val_loss),
            opt(r.alpha),
            r.step.clone(),
            r.n_atoms.to_string(),
            opt(r.seconds),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct SplitReport {
    pub n: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mae: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mse: Option<f64>,
    /// Misclassification rate in percent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error_rate: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricsReport {
    pub n_atoms: usize,
    pub n_params: usize,
    pub splits: IndexMap<String, SplitReport>,
    pub seconds: f64,
}

fn split_report(model: &ModelFile, data: &Dataset) -> Result<SplitReport> {
    let out = model.predict(data)?;
    let m = if data.n_samples() == 0 {
        1
    } else {
        out.len() / data.n_samples()
    };
    Ok(match data.targets() {
        Targets::Regression(y) => {
            let r = regression_metrics(&out, y);
            SplitReport {
                n: y.len(),
                mae: Some(r.mae),
                mse: Some(r.mse),
                error_rate: None,
            }
        }
        Targets::Classification { labels, .. } => SplitReport {
            n: labels.len(),
            mae: None,
            mse: None,
            error_rate: Some(misclassification_rate(&predict_labels(&out, m, model.loss), labels)),
        },
    })
}

fn report(model: &ModelFile, parts: &[(&str, &Dataset)], seconds: f64) -> Result<MetricsReport> {
    let ens = model.ensemble()?;
    let mut splits = IndexMap::new();
    for (name, d) in parts {
        splits.insert(name.to_string(), split_report(model, d)?);
    }
    Ok(MetricsReport {
        n_atoms: ens.len(),
        n_params: ens.n_params(),
        splits,
        seconds,
    })
}

fn print_report(r: &MetricsReport) {
    println!("atoms {}  parameters {}", r.n_atoms, r.n_params);
    println!(
        "{:<8} {:>8} {:>14} {:>14} {:>10}",
        "split", "n", "MAE", "MSE", "error %"
    );
    let cell = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_else(|| "-".into());
    for (name, s) in &r.splits {
        println!(
            "{:<8} {:>8} {:>14} {:>14} {:>10}",
            name,
            s.n,
            cell(s.mae),
            cell(s.mse),
            s.error_rate.map(|x| format!("{x:.2}")).unwrap_or_else(|| "-".into())
        );
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn cmd_train(args: TrainArgs) -> Result<()> {
    let started = Instant::now();
    let plan = Plan::from_args(args)?;
    let (raw, prepared) = plan.load()?;
    let loss = plan.loss_for(&prepared.train);
    let bound = plan.bound_for(&prepared.train);

    let (ensemble, rows): (ConvexEnsemble, Vec<HistoryRow>) = match plan.variant {
        TrainVariant::Greedy(v) => {
            let cfg = plan.greedy_config(v, loss, bound);
            let (ens, hist) = greedy::train(&cfg, &prepared.train, Some(&prepared.val), Some(&prepared.test))?;
            (ens, greedy_rows(&hist, plan.timing))
        }
        TrainVariant::Ngce => {
            let cfg = NgceConfig {
                k: plan.k,
                hidden: plan.hidden,
                bound,
                loss,
                optim: plan.optim,
                l2: plan.l2,
                seed: plan.seed,
            };
            let (ens, trace) = train_ngce(&cfg, &prepared.train)?;
            let mut rows = vec![HistoryRow {
                iter: 0,
                train_loss: trace.initial,
                val_loss: None,
                alpha: None,
                step: "init".into(),
                n_atoms: plan.k,
                seconds: None,
            }];
            rows.extend(trace.epochs.iter().map(|e| HistoryRow {
                iter: e.epoch,
                train_loss: e.objective,
                val_loss: None,
                alpha: None,
                step: "epoch".into(),
                n_atoms: plan.k,
                seconds: None,
            }));
            (ens, rows)
        }
    };

    let model = ModelFile {
        variant: plan.variant.to_string(),
        task: plan.task,
        loss,
        bound,
        target: raw.target_name().to_string(),
        features: raw.feature_names().to_vec(),
        split: plan.split,
        norm_stats: prepared.stats.clone(),
        weights: ensemble.weights().to_vec(),
        atoms: ensemble.atoms().to_vec(),
    };
    model.save(&plan.out)?;
    if let Some(path) = &plan.history {
        write_history(path, &rows)?;
    }

    let (tr, va, te) = dataset::split(&raw, &plan.split)?;
    let seconds = match plan.timing {
        Timing::Wall => started.elapsed().as_secs_f64(),
        Timing::Off => 0.0,
    };
    let r = report(&model, &[("train", &tr), ("val", &va), ("test", &te)], seconds)?;
    print_report(&r);
    if let Some(path) = &plan.metrics {
        write_json(path, &r)?;
    }
    Ok(())
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<()> {
    let started = Instant::now();
    let model = ModelFile::load(&args.model)?;
    let data = load_csv(&args.data, &TargetColumn::from(model.target.as_str()), model.task)?;
    if data.n_features() != model.features.len() {
        return Err(Error::DimensionMismatch {
            expected: model.features.len(),
            got: data.n_features(),
        });
    }
    let r = if args.splits {
        let (tr, va, te) = dataset::split(&data, &model.split)?;
        report(
            &model,
            &[("train", &tr), ("val", &va), ("test", &te)],
            started.elapsed().as_secs_f64(),
        )?
    } else {
        report(&model, &[("all", &data)], started.elapsed().as_secs_f64())?
    };
    print_report(&r);
    if let Some(path) = &args.json {
        write_json(path, &r)?;
    }
    Ok(())
}

pub fn cmd_compare(args: TrainArgs) -> Result<()> {
    if args.variant.is_some() {
        return Err(Error::Usage(
            "compare always runs nonlinear, fw, afw and pfw; drop --variant".into(),
        ));
    }
    let out = args.out.clone();
    let plan = Plan::from_args(args)?;
    if plan.task != Task::Regression {
        return Err(Error::Usage("compare reports MSE and needs --task reg".into()));
    }
    if !matches!(plan.loss, None | Some(LossKind::Quadratic)) {
        return Err(Error::Usage("compare uses the squared loss".into()));
    }
    let (raw, prepared) = plan.load()?;
    let bound = plan.bound_for(&prepared.train);
    let scale = prepared
        .stats
        .target_stats(raw.target_name())
        .map_or(1.0, |s| s.std * s.std);

    let histories: Vec<Result<TrainHistory>> = std::thread::scope(|s| {
        let handles: Vec<_> = Variant::ALL
            .iter()
            .map(|&v| {
                let cfg = plan.greedy_config(v, LossKind::Quadratic, bound);
                let p = &prepared;
                s.spawn(move || greedy::train(&cfg, &p.train, Some(&p.val), Some(&p.test)).map(|(_, h)| h))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("variant thread panicked"))
            .collect()
    });

    let sink: Box<dyn Write> = match &out {
        Some(path) => Box::new(File::create(path)?),
        None => Box::new(io::stdout()),
    };
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["variant", "iter", "train_mse", "test_mse"])?;
    for (v, h) in Variant::ALL.iter().zip(histories) {
        for r in h?.records {
            w.write_record([
                v.to_string(),
                r.iter.to_string(),
                (r.train_loss * scale).to_string(),
                opt(r.test_loss.map(|t| t * scale)),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
