//! Batch subcommands: simulation, threshold table, dictionary sweep and
//! bin report. Each writes plain CSV/JSON(L) files into an output location.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use serde::Serialize;
use swarmsteer::channel::ErrorProfile;
use swarmsteer::codec::Algorithm;
use swarmsteer::harness::{
    self, bin_report, generate_threshold_table, inputs_histogram, read_trials_jsonl, run_trials,
    sweep_dictionaries, write_bin_summary_csv, write_trials_jsonl, DictionarySource,
    ExperimentConfig, StopMode, SweepConfig, TableConfig, ThresholdTable,
};
use swarmsteer::metrics::{self, accuracy_series, itr_series, write_series_csv, MetricSeries};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AlgorithmArg {
    Pm,
    Stepwise,
}

impl From<AlgorithmArg> for Algorithm {
    fn from(a: AlgorithmArg) -> Self {
        match a {
            AlgorithmArg::Pm => Algorithm::PosteriorMatching,
            AlgorithmArg::Stepwise => Algorithm::Stepwise,
        }
    }
}

/// `swarm`, `synthetic:<b>,<r>` or a path to a dictionary JSON file.
pub fn parse_dictionary(s: &str) -> Result<DictionarySource> {
    if s == "swarm" {
        return Ok(DictionarySource::Swarm);
    }
    if let Some(rest) = s.strip_prefix("synthetic:") {
        let (b, r) = rest
            .split_once(',')
            .with_context(|| format!("expected synthetic:<b>,<r>, got {s}"))?;
        return Ok(DictionarySource::Synthetic {
            b: b.trim().parse()?,
            r: r.trim().parse()?,
        });
    }
    Ok(DictionarySource::File { path: s.into() })
}

fn parse_error(s: &str) -> Result<ErrorProfile> {
    s.parse::<ErrorProfile>()
        .with_context(|| format!("bad error profile {s:?}"))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

fn write_histogram(path: &Path, hist: &[usize]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["inputs", "count"])?;
    for (i, c) in hist.iter().enumerate() {
        w.write_record([(i + 1).to_string(), c.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Experiment config JSON; flags given explicitly override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// `swarm`, `synthetic:<b>,<r>` or a dictionary JSON file.
    #[arg(long)]
    pub dictionary: Option<String>,
    #[arg(long, value_enum)]
    pub algorithm: Option<AlgorithmArg>,
    /// Crossover the searcher assumes.
    #[arg(long)]
    pub assumed_p: Option<f64>,
    /// Generated error: `fixed:<p>`, `digitized`, `pchip:<file>` or `samples:<file>`.
    #[arg(long)]
    pub error: Option<String>,
    /// Fixed stopping threshold.
    #[arg(long, conflicts_with_all = ["budget", "no_stop"])]
    pub tau: Option<f64>,
    /// Look the threshold up in `--table` for this input budget.
    #[arg(long, requires = "table", conflicts_with = "no_stop")]
    pub budget: Option<usize>,
    #[arg(long)]
    pub table: Option<PathBuf>,
    /// Run every trial to the input cap.
    #[arg(long)]
    pub no_stop: bool,
    #[arg(long)]
    pub max_inputs: Option<usize>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Serialize)]
struct SimulateSummary<'a> {
    config: &'a ExperimentConfig,
    n_d: usize,
    tau: Option<f64>,
    accuracy: metrics::Interval,
    mean_inputs: f64,
    itr: f64,
    converged: usize,
    timed_out: usize,
}

impl SimulateArgs {
    pub fn experiment(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => serde_json::from_str(&fs::read_to_string(p)?)
                .with_context(|| format!("parsing {}", p.display()))?,
            None => ExperimentConfig::default(),
        };
        if let Some(d) = &self.dictionary {
            cfg.dictionary = parse_dictionary(d)?;
        }
        if let Some(a) = self.algorithm {
            cfg.algorithm = a.into();
        }
        if let Some(p) = self.assumed_p {
            cfg.assumed_p = p;
        }
        if let Some(e) = &self.error {
            cfg.error = parse_error(e)?;
        }
        if let Some(tau) = self.tau {
            cfg.stopping = StopMode::Threshold { tau };
        }
        if let Some(budget) = self.budget {
            cfg.stopping = StopMode::Table { budget };
        }
        if self.no_stop {
            cfg.stopping = StopMode::Disabled;
        }
        if let Some(m) = self.max_inputs {
            cfg.max_inputs = m;
        }
        if let Some(t) = self.trials {
            cfg.trials = t;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        Ok(cfg)
    }
}

/// Writes `trials.jsonl`, `summary.json`, `accuracy.csv` (error-free accuracy
/// and ITR per input count) and `inputs_histogram.csv`.
pub fn simulate(args: &SimulateArgs) -> Result<()> {
    let cfg = args.experiment()?;
    let table = args.table.as_ref().map(ThresholdTable::load).transpose()?;
    if matches!(cfg.stopping, StopMode::Table { .. }) && table.is_none() {
        bail!("table stopping needs --table");
    }
    let n_d = cfg.dictionary.resolve()?.size();
    let tau = harness::resolve_tau(&cfg, table.as_ref())?;
    let trials = run_trials(&cfg, table.as_ref())?;
    fs::create_dir_all(&args.out)?;

    write_trials_jsonl(&trials, create(&args.out.join("trials.jsonl"))?)?;
    let acc = metrics::final_accuracy(&trials)?;
    let mean_inputs = trials.iter().map(|t| t.inputs as f64).sum::<f64>() / trials.len() as f64;
    let converged = trials
        .iter()
        .filter(|t| t.outcome == swarmsteer::codec::Outcome::Converged)
        .count();
    write_json(
        &args.out.join("summary.json"),
        &SimulateSummary {
            config: &cfg,
            n_d,
            tau,
            accuracy: acc,
            mean_inputs,
            itr: metrics::itr(acc.value, n_d),
            converged,
            timed_out: trials.len() - converged,
        },
    )?;
    let accuracy = accuracy_series(&trials, cfg.max_inputs, "accuracy")?;
    let itr = itr_series(&accuracy, n_d, "itr");
    write_series_csv(&[accuracy, itr], create(&args.out.join("accuracy.csv"))?)?;
    write_histogram(
        &args.out.join("inputs_histogram.csv"),
        &inputs_histogram(&trials, cfg.max_inputs),
    )?;
    println!(
        "{} trials, accuracy {:.4} [{:.4}, {:.4}], mean inputs {:.2}, tau {}",
        trials.len(),
        acc.value,
        acc.lo,
        acc.hi,
        mean_inputs,
        tau.map_or("none".to_string(), |t| format!("{t:.2}"))
    );
    Ok(())
}

fn parse_list<T: std::str::FromStr>(s: &str) -> Result<Vec<T>>
where
    T::Err: std::error::Error + Send + Sync + 'static,
{
    s.split(',')
        .filter(|v| !v.trim().is_empty())
        .map(|v| v.trim().parse::<T>().map_err(Into::into))
        .collect()
}

#[derive(Debug, Args)]
pub struct TableArgs {
    #[arg(long, default_value_t = 60)]
    pub n_d: usize,
    #[arg(long, default_value_t = 500)]
    pub trials_per_cell: usize,
    #[arg(long, default_value_t = 50)]
    pub max_inputs: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Comma-separated crossover rows (default 0, 0.05, ..., 0.5).
    #[arg(long)]
    pub crossovers: Option<String>,
    /// Comma-separated candidate thresholds (default 0, 0.05, ..., 1).
    #[arg(long)]
    pub taus: Option<String>,
    /// Comma-separated input budgets (default 5, 10, ..., 50).
    #[arg(long)]
    pub budgets: Option<String>,
    /// Table CSV; the full table with candidate statistics is written next
    /// to it as JSON.
    #[arg(long, default_value = "threshold_table.csv")]
    pub out: PathBuf,
}

pub fn threshold_table(args: &TableArgs) -> Result<()> {
    let mut cfg = TableConfig {
        n_d: args.n_d,
        trials_per_cell: args.trials_per_cell,
        max_inputs: args.max_inputs,
        seed: args.seed,
        ..TableConfig::default()
    };
    if let Some(c) = &args.crossovers {
        cfg.crossovers = parse_list(c)?;
    }
    if let Some(t) = &args.taus {
        cfg.taus = parse_list(t)?;
    }
    if let Some(b) = &args.budgets {
        cfg.budgets = parse_list(b)?;
    }
    let table = generate_threshold_table(&cfg)?;
    let mut out = create(&args.out)?;
    table.write_csv(&mut out)?;
    out.flush()?;
    write_json(&args.out.with_extension("json"), &table)?;
    let infeasible = table.infeasible.iter().flatten().filter(|&&b| b).count();
    println!(
        "{} x {} table written to {} ({infeasible} cells over budget)",
        table.crossovers.len(),
        table.budgets.len(),
        args.out.display()
    );
    Ok(())
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long, default_value_t = 0.1)]
    pub assumed_p: f64,
    #[arg(long, default_value = "fixed:0.1")]
    pub error: String,
    #[arg(long, default_value = "3,5")]
    pub alphabet_sizes: String,
    #[arg(long, default_value = "2,4,6,8")]
    pub lengths: String,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "pm,stepwise")]
    pub algorithms: Vec<AlgorithmArg>,
    #[arg(long, default_value_t = 1000)]
    pub trials: usize,
    #[arg(long, default_value_t = 50)]
    pub max_inputs: usize,
    #[arg(long, default_value_t = 10_000)]
    pub resamples: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Include dictionaries larger than the default size limit (the
    /// 390,625-string case needs several GB per worker).
    #[arg(long)]
    pub allow_large: bool,
    #[arg(long, default_value = "sweep.csv")]
    pub out: PathBuf,
}

pub fn sweep(args: &SweepArgs) -> Result<()> {
    let cfg = SweepConfig {
        assumed_p: args.assumed_p,
        error: parse_error(&args.error)?,
        alphabet_sizes: parse_list(&args.alphabet_sizes)?,
        lengths: parse_list(&args.lengths)?,
        algorithms: args.algorithms.iter().map(|&a| a.into()).collect(),
        trials: args.trials,
        max_inputs: args.max_inputs,
        seed: args.seed,
        resamples: args.resamples,
        max_size: if args.allow_large {
            usize::MAX
        } else {
            harness::DEFAULT_SWEEP_LIMIT
        },
    };
    let series: Vec<MetricSeries> = sweep_dictionaries(&cfg)?;
    write_series_csv(&series, create(&args.out)?)?;
    println!("{} series written to {}", series.len(), args.out.display());
    Ok(())
}

#[derive(Debug, Args)]
pub struct BinReportArgs {
    /// Trial log written by `simulate`.
    #[arg(long)]
    pub trials: PathBuf,
    #[arg(long, default_value_t = 60)]
    pub n_d: usize,
    #[arg(long, default_value_t = 50)]
    pub max_inputs: usize,
    #[arg(long, default_value_t = 10_000)]
    pub resamples: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Output directory for `bins.csv`, `deviation.csv` and
    /// `inputs_histogram.csv`.
    #[arg(long, default_value = "bins")]
    pub out: PathBuf,
}

pub fn bin_report_cmd(args: &BinReportArgs) -> Result<()> {
    let file =
        File::open(&args.trials).with_context(|| format!("opening {}", args.trials.display()))?;
    let trials = read_trials_jsonl(BufReader::new(file))?;
    if trials.is_empty() {
        bail!("no trials in {}", args.trials.display());
    }
    let report = bin_report(
        &trials,
        args.n_d,
        args.max_inputs,
        args.resamples,
        args.seed,
    )?;
    fs::create_dir_all(&args.out)?;
    write_bin_summary_csv(&report.summaries, create(&args.out.join("bins.csv"))?)?;
    write_series_csv(&report.deviation, create(&args.out.join("deviation.csv"))?)?;
    write_histogram(
        &args.out.join("inputs_histogram.csv"),
        &inputs_histogram(&trials, args.max_inputs),
    )?;
    for s in &report.summaries {
        println!(
            "{:>6}: {:>6} trials, accuracy {:.4}",
            s.label(),
            s.count,
            s.accuracy
        );
    }
    Ok(())
}
