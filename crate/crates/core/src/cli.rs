//! Command-line pipeline: `prepare`, `train`, `evaluate` and `gradcheck`.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::{split_assignment, RunConfig};
use crate::dataset::{
    chronological_split, filter_and_index, parse_interactions, read_dataset, write_dataset,
    DatasetStats, SplitDataset,
};
use crate::error::{Error, Result};
use crate::evaluator::{evaluate, EvalMode, EvalReport};
use crate::gradcheck::{run_gradcheck, GradcheckConfig};
use crate::itemgraph::ItemGraph;
use crate::model::{load_checkpoint, save_checkpoint, AnyParams, ModelConfig, ParamKind, Variant};
use crate::real::{Precision, Real};
use crate::trainer::fit;

pub const DATASET_FILE: &str = "dataset.bin";
pub const STATS_FILE: &str = "stats.json";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const TRAIN_LOG_FILE: &str = "train_log.jsonl";
pub const RUN_CONFIG_FILE: &str = "run_config.txt";

#[derive(Debug, Parser)]
#[command(name = "magnn", version, about = "Memory-augmented GNN sequential recommender")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// `key = value` settings file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// MF, MF+S, MF+S+H+gating, MF+S+H+concat or FULL.
    #[arg(long, global = true)]
    pub variant: Option<Variant>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Override one setting, e.g. `--set train.epochs=5` (repeatable).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse, filter and split a ratings log into a dataset file.
    Prepare {
        input: PathBuf,
    },
    /// Train a model on a prepared dataset.
    Train {
        dataset: PathBuf,
    },
    /// Compute Recall@K and NDCG@K for a checkpoint.
    Evaluate {
        checkpoint: PathBuf,
        dataset: PathBuf,
        /// val or test.
        #[arg(long)]
        split: Option<EvalMode>,
        #[arg(long)]
        k: Option<usize>,
        /// Also write the per-user metrics as CSV.
        #[arg(long)]
        per_user: bool,
    },
    /// Compare reverse-mode gradients with finite differences.
    Gradcheck {
        /// Corrupt the gate gradient to exercise the failure path.
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
}

impl GlobalArgs {
    /// File settings, then `--set` overrides, then the dedicated flags.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        let pairs = self
            .overrides
            .iter()
            .map(|s| split_assignment(s))
            .collect::<Result<Vec<_>>>()?;
        cfg.apply(pairs)?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(v) = self.variant {
            cfg.model.variant = v;
        }
        if let Some(out) = &self.out {
            cfg.out = out.to_string_lossy().into_owned();
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Whether the user said anything about the model shape or variant.
    fn mentions_model(&self) -> bool {
        self.config.is_some() || self.variant.is_some() || self.overrides.iter().any(|s| s.trim_start().starts_with("model."))
    }
}

fn create_out_dir(cfg: &RunConfig) -> Result<PathBuf> {
    let dir = PathBuf::from(&cfg.out);
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let path = dir.join(RUN_CONFIG_FILE);
    std::fs::write(&path, cfg.to_text()).map_err(|e| Error::io(&path, e))?;
    Ok(dir)
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn prepare(input: &Path, cfg: &RunConfig) -> Result<DatasetStats> {
    let file = File::open(input).map_err(|e| Error::io(input, e))?;
    let parsed = parse_interactions(BufReader::new(file), &cfg.parse_config()?)?;
    if parsed.malformed > 0 {
        log::warn!("skipped {} malformed row(s)", parsed.malformed);
    }
    let filtered = filter_and_index(&parsed.interactions, &cfg.filter_config())?;
    let counts = filtered.counts;
    let split = chronological_split(filtered);
    let dir = create_out_dir(cfg)?;
    write_dataset(&split, &dir.join(DATASET_FILE))?;
    let stats = DatasetStats::from_split(&split, Some(counts), parsed.malformed);
    write_json(&dir.join(STATS_FILE), &stats)?;
    log::info!(
        "{} users, {} items, {} interactions",
        stats.users,
        stats.items,
        stats.interactions
    );
    Ok(stats)
}

fn train_typed<T: Real>(split: &SplitDataset, model: &ModelConfig, cfg: &RunConfig, dir: &Path) -> Result<()> {
    let graph = ItemGraph::build(&split.train, split.num_items(), &model.graph)?;
    log::info!("item graph: {} edges", graph.num_edges());
    let log_path = dir.join(TRAIN_LOG_FILE);
    let file = File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;
    let mut sink = BufWriter::new(file);
    let result = fit::<T>(split, &graph, model, &cfg.train_config(), Some(&mut sink))?;
    sink.flush().map_err(|e| Error::io(&log_path, e))?;
    if let Some(best) = result.best_epoch {
        log::info!("best validation epoch: {best}");
    }
    save_checkpoint(&result.params, model, &dir.join(CHECKPOINT_FILE))
}

pub fn train(dataset: &Path, cfg: &RunConfig) -> Result<()> {
    let split = read_dataset(dataset)?;
    let model = cfg.model_config();
    let dir = create_out_dir(cfg)?;
    match model.precision {
        Precision::F32 => train_typed::<f32>(&split, &model, cfg, &dir),
        Precision::F64 => train_typed::<f64>(&split, &model, cfg, &dir),
    }
}

/// Evaluates a checkpoint. When `expected` is given, the checkpoint's model
/// settings must match it.
pub fn evaluate_checkpoint(
    checkpoint: &Path,
    dataset: &Path,
    expected: Option<&ModelConfig>,
    mode: EvalMode,
    k: usize,
) -> Result<EvalReport> {
    let ckpt = load_checkpoint(checkpoint)?;
    if let Some(want) = expected {
        want.check_compatible(&ckpt.config)?;
    }
    let split = read_dataset(dataset)?;
    let model = &ckpt.config;
    let graph = ItemGraph::build(&split.train, split.num_items(), &model.graph)?;
    let mut report = match &ckpt.params {
        AnyParams::F32(p) => evaluate(p, &split, &graph, model, mode, k)?,
        AnyParams::F64(p) => evaluate(p, &split, &graph, model, mode, k)?,
    };
    report.checkpoint = Some(checkpoint.display().to_string());
    Ok(report)
}

fn eval_file_names(mode: EvalMode) -> (String, String) {
    (format!("eval_{mode}.json"), format!("eval_{mode}_per_user.csv"))
}

/// Runs a parsed command line and returns the process exit status.
pub fn execute(cli: Cli) -> i32 {
    match dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: &Cli) -> Result<i32> {
    let mut cfg = cli.global.resolve()?;
    match &cli.command {
        Command::Prepare { input } => {
            let stats = prepare(input, &cfg)?;
            println!("{}", serde_json::to_string_pretty(&stats)?);
        }
        Command::Train { dataset } => {
            train(dataset, &cfg)?;
            println!("wrote {}", Path::new(&cfg.out).join(CHECKPOINT_FILE).display());
        }
        Command::Evaluate {
            checkpoint,
            dataset,
            split,
            k,
            per_user,
        } => {
            if let Some(s) = split {
                cfg.eval.split = *s;
            }
            if let Some(k) = k {
                cfg.eval.k = *k;
            }
            cfg.eval.per_user_csv |= per_user;
            cfg.validate()?;
            let expected = cli.global.mentions_model().then(|| cfg.model_config());
            let report = evaluate_checkpoint(checkpoint, dataset, expected.as_ref(), cfg.eval.split, cfg.eval.k)?;
            let dir = create_out_dir(&cfg)?;
            let (json_name, csv_name) = eval_file_names(cfg.eval.split);
            if cfg.eval.per_user_csv {
                let path = dir.join(csv_name);
                let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
                report
                    .write_per_user_csv(BufWriter::new(file))
                    .map_err(|e| Error::io(&path, e))?;
            }
            let summary = ReportSummary::from(&report);
            write_json(&dir.join(json_name), &report)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
        Command::Gradcheck { inject_fault } => {
            let gc = GradcheckConfig {
                seed: cfg.seed,
                fault: inject_fault.then_some((ParamKind::Gate1, 1.01)),
                ..GradcheckConfig::default()
            };
            let report = run_gradcheck(&gc)?;
            print!("{report}");
            let ok = report.passed();
            println!(
                "gradcheck {} (tolerance {:e}, {:.2}s)",
                if ok { "passed" } else { "FAILED" },
                report.tolerance,
                report.seconds
            );
            return Ok(if ok { 0 } else { 1 });
        }
    }
    Ok(0)
}

/// The report without per-user rows, for the terminal.
#[derive(serde::Serialize)]
struct ReportSummary<'a> {
    k: usize,
    split: EvalMode,
    variant: Variant,
    checkpoint: Option<&'a str>,
    evaluated_users: usize,
    skipped_users: usize,
    users_with_more_relevant_than_k: usize,
    recall: f64,
    ndcg: f64,
}

impl<'a> From<&'a EvalReport> for ReportSummary<'a> {
    fn from(r: &'a EvalReport) -> Self {
        ReportSummary {
            k: r.k,
            split: r.split,
            variant: r.variant,
            checkpoint: r.checkpoint.as_deref(),
            evaluated_users: r.evaluated_users,
            skipped_users: r.skipped_users,
            users_with_more_relevant_than_k: r.users_with_more_relevant_than_k,
            recall: r.recall,
            ndcg: r.ndcg,
        }
    }
}

/// Parses `args` (including the program name) and runs the command.
/// Usage errors print clap's message and yield status 2.
pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => execute(cli),
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            code
        }
    }
}
