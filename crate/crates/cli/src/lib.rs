//! Commands behind the `mtga` binary.

pub mod config;
pub mod error;
pub mod output;

use std::fs;
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mtga_core::data_io::fmat::read_fmat;
use mtga_core::data_io::manifest::read_labels;
use mtga_core::data_io::{generate_synthetic, load_all, PoolManifest};
use mtga_core::driver::{
    evaluate_fixed, naive_mean_genotype, predict, run_mtga_with, RunOptions, TaskData,
};
use mtga_core::fusion::fuse_genotype;
use mtga_core::metrics::{MetricReport, DECISION_THRESHOLD};
use mtga_core::model::{pool_size, Individual};
use mtga_core::nsga3::Nsga3Selector;

pub use config::RunConfigFile;
pub use error::{CliError, Result};
use output::{
    metric_lines, pareto_text, probability_lines, read_probabilities, write_history, write_text,
    StrategyFile,
};

#[derive(Debug, Parser)]
#[command(name = "mtga", version, about = "Multi-task evolutionary feature-fusion search")]
pub struct Cli {
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic multi-task benchmark.
    Gen(GenArgs),
    /// Search fusion strategies for every task in a data directory.
    Evolve(EvolveArgs),
    /// Score residues with a saved strategy.
    Predict(PredictArgs),
    /// Compute the seven metrics for a prediction file.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides `synth.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum)]
pub enum SelectorKind {
    #[default]
    Nsga3,
}

#[derive(Debug, Args)]
pub struct EvolveArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Disable external neighborhoods and cross-task transfer.
    #[arg(long)]
    pub no_enm: bool,
    /// Skip evolution and evaluate the equal-weight mean of all pool entries.
    #[arg(long)]
    pub naive_mean: bool,
    /// Overrides `evo.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum, default_value_t)]
    pub selector: SelectorKind,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub strategy: PathBuf,
    /// Directory holding `pool_<k>.fmat` for the task.
    #[arg(long)]
    pub pool: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Only score rows `START:END` (end exclusive).
    #[arg(long)]
    pub rows: Option<RowRange>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    /// Evaluate labels `START:END` (end exclusive); predictions may cover either all rows
    /// or exactly this range.
    #[arg(long)]
    pub rows: Option<RowRange>,
}

/// Half-open row range written `START:END`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RowRange(pub Range<usize>);

impl FromStr for RowRange {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let (a, b) = s.split_once(':').ok_or("expected START:END")?;
        let start: usize = a.parse().map_err(|_| format!("bad start `{a}`"))?;
        let end: usize = b.parse().map_err(|_| format!("bad end `{b}`"))?;
        if start >= end {
            return Err(format!("empty range {start}:{end}"));
        }
        Ok(RowRange(start..end))
    }
}

fn check_range(range: &Range<usize>, len: usize, what: &Path) -> Result<()> {
    if range.end > len {
        return Err(CliError::Usage(format!(
            "rows {}:{} exceed the {len} rows of {}",
            range.start,
            range.end,
            what.display()
        )));
    }
    Ok(())
}

/// Runs a parsed command on a pool sized by `--threads`.
pub fn run(cli: Cli) -> Result<()> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {} threads: {e}", cli.threads)))?;
    pool.install(|| match cli.command {
        Command::Gen(a) => cmd_gen(&a).map(|m| print!("{}", manifest_summary(&m))),
        Command::Evolve(a) => cmd_evolve(&a),
        Command::Predict(a) => cmd_predict(&a),
        Command::Eval(a) => cmd_eval(&a).map(|r| print!("{}", metric_lines(&r, None))),
    })
}

pub fn manifest_summary(m: &PoolManifest) -> String {
    let mut s = format!("tasks: {}\npool_size: {}\n", m.tasks.len(), pool_size(m.tasks.len()));
    for t in &m.tasks {
        s.push_str(&format!(
            "{}: residues={} feature_dim={} positives={} informative={:?}\n",
            t.name, t.residues, t.feature_dim, t.positives, t.informative
        ));
    }
    s
}

pub fn cmd_gen(args: &GenArgs) -> Result<PoolManifest> {
    let mut cfg = RunConfigFile::load_or_default(args.config.as_deref())?.synth;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    Ok(generate_synthetic(&cfg, &args.out)?)
}

/// Validation-row metrics of a fitted individual at the 0.5 threshold.
pub fn validation_report(ind: &Individual, task: &TaskData) -> Result<MetricReport> {
    let probs = predict(ind, &task.pool)?;
    let scores: Vec<f64> = task.split.validation.iter().map(|&i| probs[i]).collect();
    let labels: Vec<u8> = task.split.validation.iter().map(|&i| task.labels[i]).collect();
    Ok(MetricReport::compute(&scores, &labels, DECISION_THRESHOLD)?)
}

pub fn cmd_evolve(args: &EvolveArgs) -> Result<()> {
    let mut cfg = RunConfigFile::load_or_default(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        cfg.evo.seed = seed;
    }
    if args.naive_mean && args.no_enm {
        eprintln!("warning: --no-enm has no effect with --naive-mean");
    }
    let (_, tasks) = load_all(&args.data)?;
    fs::create_dir_all(&args.out).map_err(|e| CliError::io(&args.out, e))?;
    let names: Vec<String> = tasks.iter().map(|t| t.descriptor.name.clone()).collect();
    let pool = pool_size(tasks.len());

    // (task, pareto, selected, history)
    let results: Vec<(&TaskData, Vec<Individual>, Individual, Option<Vec<_>>)> = if args.naive_mean {
        let mut out = Vec::with_capacity(tasks.len());
        for t in &tasks {
            t.validate(tasks.len())?;
            let ind = evaluate_fixed(t, naive_mean_genotype(pool), &cfg.proxy);
            if ind.failed {
                return Err(CliError::Usage(format!(
                    "task {}: naive mean evaluation failed",
                    t.descriptor.name
                )));
            }
            out.push((t, vec![ind.clone()], ind, None));
        }
        out
    } else {
        let selector = match args.selector {
            SelectorKind::Nsga3 => Box::new(Nsga3Selector::for_population(cfg.evo.population_size)),
        };
        let opts = RunOptions {
            enm: !args.no_enm,
            selector: Some(selector),
        };
        let run = run_mtga_with(&tasks, &cfg.evo, &cfg.proxy, opts)?;
        run.tasks
            .into_iter()
            .zip(&tasks)
            .map(|(r, t)| (t, r.pareto, r.selected, Some(r.history)))
            .collect()
    };

    let mut summary = String::new();
    for (task, pareto, selected, history) in &results {
        let name = &task.descriptor.name;
        write_text(&args.out.join(format!("pareto.{name}.out")), &pareto_text(pareto))?;
        StrategyFile::from_individual(name, pool, selected)?
            .write(&args.out.join(format!("strategy.{name}.out")))?;
        write_history(
            &args.out.join(format!("history.{name}.csv")),
            name,
            &names,
            history.as_deref().unwrap_or(&[]),
        )?;
        summary.push_str(&metric_lines(&validation_report(selected, task)?, Some(name)));
    }
    write_text(&args.out.join("summary.out"), &summary)?;
    print!("{summary}");
    Ok(())
}

pub fn cmd_predict(args: &PredictArgs) -> Result<()> {
    let strategy = StrategyFile::read(&args.strategy)?;
    let pool = (0..strategy.pool_size)
        .map(|k| read_fmat(args.pool.join(format!("pool_{k}.fmat"))))
        .collect::<mtga_core::Result<Vec<_>>>()?;
    let fused = fuse_genotype(&strategy.genotype(), &pool)?;
    if fused.cols() != strategy.feature_dim {
        return Err(mtga_core::Error::Shape(format!(
            "strategy expects {} columns, pool in {} has {}",
            strategy.feature_dim,
            args.pool.display(),
            fused.cols()
        ))
        .into());
    }
    let rows: Vec<usize> = match &args.rows {
        Some(r) => {
            check_range(&r.0, fused.rows(), &args.pool)?;
            r.0.clone().collect()
        }
        None => (0..fused.rows()).collect(),
    };
    let probs = strategy.model.predict_rows(&fused, &rows)?;
    write_text(&args.out, &probability_lines(&probs))
}

pub fn cmd_eval(args: &EvalArgs) -> Result<MetricReport> {
    let probs = read_probabilities(&args.pred)?;
    let labels = read_labels(&args.labels)?;
    let (probs, labels) = match &args.rows {
        Some(r) => {
            check_range(&r.0, labels.len(), &args.labels)?;
            let probs = if probs.len() == labels.len() {
                probs[r.0.clone()].to_vec()
            } else {
                probs
            };
            (probs, labels[r.0.clone()].to_vec())
        }
        None => (probs, labels),
    };
    Ok(MetricReport::compute(&probs, &labels, DECISION_THRESHOLD)?)
}
