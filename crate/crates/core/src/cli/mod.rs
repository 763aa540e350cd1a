//! Command-line front end.
//!
//! Training options can come from flags or from a flat `key = value` config
//! file whose keys mirror the flag names; flags win over the file, the file
//! wins over built-in defaults.

mod capacity;
mod train;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use crate::dataset::Task;
use crate::error::{Error, Result};
use crate::greedy::{LineSearchRule, Variant};
use crate::loss::LossKind;

pub use capacity::{CapacityCommand, GenerateCommand};
pub use train::MetricsReport;

#[derive(Debug, Parser)]
#[command(
    name = "convex-ensemble",
    version,
    about = "Greedy and joint training of convex ensembles of small networks"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model and write its JSON file and per-iteration history.
    Train(TrainArgs),
    /// Report metrics of a saved model on a CSV file.
    Evaluate(EvaluateArgs),
    /// Run nonlinear/fw/afw/pfw on the same data and emit per-iteration MSE.
    #[command(alias = "bench")]
    Compare(TrainArgs),
    /// Shattering checks, Rademacher estimates and bound evaluation.
    #[command(subcommand)]
    Capacity(CapacityCommand),
    /// Write synthetic datasets.
    #[command(subcommand)]
    Generate(GenerateCommand),
}

/// Greedy variant or the joint trainer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainVariant {
    Greedy(Variant),
    Ngce,
}

impl FromStr for TrainVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ngce" => Ok(TrainVariant::Ngce),
            other => other.parse().map(TrainVariant::Greedy),
        }
    }
}

impl fmt::Display for TrainVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TrainVariant::Greedy(v) => v.fmt(f),
            TrainVariant::Ngce => f.write_str("ngce"),
        }
    }
}

/// Whether the history records wall-clock seconds or zeros (byte-stable output).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Timing {
    Wall,
    Off,
}

impl FromStr for Timing {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "wall" => Ok(Timing::Wall),
            "off" => Ok(Timing::Off),
            other => Err(Error::invalid(format!("timing must be `wall` or `off`, got `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct TrainArgs {
    /// Flat `key = value` file with defaults for any of these flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// nonlinear | fw | afw | pfw | ngce
    #[arg(long)]
    pub variant: Option<TrainVariant>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Target column name (or zero-based index).
    #[arg(long)]
    pub target: Option<String>,
    /// reg | cls
    #[arg(long)]
    pub task: Option<Task>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub max_modules: Option<usize>,
    /// Number of modules for ngce.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Split seed; defaults to --seed.
    #[arg(long)]
    pub split_seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub history: Option<PathBuf>,
    /// Write the metrics report as JSON here.
    #[arg(long)]
    pub metrics: Option<PathBuf>,
    /// mse | lq:<q> | logistic | xent
    #[arg(long)]
    pub loss: Option<LossKind>,
    /// Output bound B; defaults to 10 for classification and 4/3 of the
    /// largest absolute normalized training target for regression.
    #[arg(long)]
    pub bound: Option<f64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub lr_factor: Option<f64>,
    #[arg(long)]
    pub min_lr: Option<f64>,
    #[arg(long)]
    pub tail_epochs: Option<usize>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    /// closed_form | brent | fixed_schedule
    #[arg(long)]
    pub line_search: Option<LineSearchRule>,
    #[arg(long)]
    pub early_stop_window: Option<usize>,
    #[arg(long)]
    pub early_stop_tol: Option<f64>,
    /// l2 penalty on module parameters (ngce only).
    #[arg(long)]
    pub l2: Option<f64>,
    #[arg(long)]
    pub prune_eps: Option<f64>,
    #[arg(long)]
    pub test_fraction: Option<f64>,
    #[arg(long)]
    pub val_fraction: Option<f64>,
    /// wall | off
    #[arg(long)]
    pub timing: Option<Timing>,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Re-create the model's train/val/test split and report each part;
    /// otherwise the whole file is one evaluation set.
    #[arg(long)]
    pub splits: bool,
    #[arg(long)]
    pub json: Option<PathBuf>,
}

/// Reads `key = value` lines; `#` starts a comment. Keys accept `_` or `-`.
pub fn read_config(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::MissingFile {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Usage(format!("config line {}: expected `key = value`", no + 1)))?;
        let key = k.trim().trim_start_matches("--").replace('_', "-");
        if map.insert(key.clone(), v.trim().to_string()).is_some() {
            return Err(Error::Usage(format!("config key `{key}` given twice")));
        }
    }
    Ok(map)
}

macro_rules! merge_fields {
    ($args:expr, $map:expr; $($field:ident),* $(,)?) => {{
        $(
            let key = stringify!($field).replace('_', "-");
            if let Some(raw) = $map.remove(&key) {
                if $args.$field.is_none() {
                    $args.$field = Some(
                        raw.parse()
                            .map_err(|e| Error::Usage(format!("config key `{key}`: {e}")))?,
                    );
                }
            }
        )*
    }};
}

impl TrainArgs {
    /// Fills unset flags from the config file named by `--config`.
    pub fn with_config(mut self) -> Result<Self> {
        let Some(path) = self.config.clone() else {
            return Ok(self);
        };
        let mut map = read_config(&path)?;
        merge_fields!(self, map;
            variant, data, target, task, hidden, max_modules, k, seed, split_seed, out, history,
            metrics, loss, bound, lr, batch_size, patience, lr_factor, min_lr, tail_epochs,
            max_epochs, line_search, early_stop_window, early_stop_tol, l2, prune_eps,
            test_fraction, val_fraction, timing,
        );
        if let Some(key) = map.keys().next() {
            return Err(Error::Usage(format!("unknown config key `{key}`")));
        }
        Ok(self)
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(args) => train::cmd_train(args.with_config()?),
        Command::Evaluate(args) => train::cmd_evaluate(&args),
        Command::Compare(args) => train::cmd_compare(args.with_config()?),
        Command::Capacity(c) => capacity::cmd_capacity(c),
        Command::Generate(g) => capacity::cmd_generate(g),
    }
}

/// Parses arguments and runs; returns the process exit code
/// (0 success, 1 runtime failure, 2 usage error).
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e @ Error::Usage(_)) => {
            eprintln!("error: {e}");
            2
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
