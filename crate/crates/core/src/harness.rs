//! Batch simulation: simulated-user trials, threshold tables, dictionary
//! sweeps and trial-length bin reports.

use std::fs;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{corrupt, ErrorProfile};
use crate::codec::{
    ideal_input, Algorithm, CodecError, Outcome, PosteriorState, Searcher, StoppingRule,
};
use crate::dictionary::{DictionaryError, DictionarySpec};
use crate::metrics::{
    self, accuracy_series, alphabet_metrics, bin_trials, bootstrap_series, dictionary_distance,
    itr_series, AlphabetMetrics, Bin, InputStep, MetricSeries, MetricsError, TrialRecord,
};
use crate::rng::{derive_seed, trial_stream, Stream};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("threshold table has no row at or above crossover {0}")]
    NoRow(f64),
    #[error("threshold table has no column at or below budget {0}")]
    NoColumn(usize),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Dictionary(#[from] DictionaryError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Where the dictionary comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DictionarySource {
    /// The 60-string swarm dictionary.
    Swarm,
    /// `r` alphabets of `b` characters.
    Synthetic {
        b: usize,
        r: usize,
    },
    File {
        path: PathBuf,
    },
}

impl DictionarySource {
    pub fn resolve(&self) -> Result<DictionarySpec, HarnessError> {
        Ok(match self {
            DictionarySource::Swarm => DictionarySpec::swarm_preset(),
            DictionarySource::Synthetic { b, r } => DictionarySpec::synthetic(*b, *r)?,
            DictionarySource::File { path } => DictionarySpec::load(path)?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StopMode {
    Threshold {
        tau: f64,
    },
    /// Look τ up in a threshold table for the assumed crossover.
    Table {
        budget: usize,
    },
    /// Run every trial to the input cap.
    Disabled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dictionary: DictionarySource,
    pub algorithm: Algorithm,
    pub assumed_p: f64,
    pub error: ErrorProfile,
    pub stopping: StopMode,
    pub max_inputs: usize,
    pub trials: usize,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dictionary: DictionarySource::Swarm,
            algorithm: Algorithm::PosteriorMatching,
            assumed_p: 0.218,
            error: ErrorProfile::Fixed { p: 0.218 },
            stopping: StopMode::Threshold { tau: 0.95 },
            max_inputs: StoppingRule::DEFAULT_MAX_INPUTS,
            trials: 1000,
            seed: 1,
        }
    }
}

/// One trial's fixed inputs.
#[derive(Debug, Clone, Copy)]
pub struct TrialSpec<'a> {
    pub n_d: usize,
    pub algorithm: Algorithm,
    pub assumed_p: f64,
    pub error: &'a ErrorProfile,
    /// `None` runs to `max_inputs` without early stopping.
    pub tau: Option<f64>,
    pub max_inputs: usize,
    pub seed: u64,
}

/// Simulate one trial with an ideal user behind the noisy channel.
pub fn run_trial(spec: &TrialSpec<'_>, trial: u64) -> Result<TrialRecord, HarnessError> {
    let mut target_rng = trial_stream(spec.seed, trial, Stream::Target);
    let mut channel_rng = trial_stream(spec.seed, trial, Stream::Channel);
    let target = target_rng.random_range(1..=spec.n_d);
    let posterior = PosteriorState::with_any_crossover(
        spec.n_d,
        spec.assumed_p,
        trial_stream(spec.seed, trial, Stream::Guess),
    )?;
    let mut search = Searcher::new(posterior, spec.algorithm);
    let rule = StoppingRule::new(spec.tau.unwrap_or(1.0), spec.max_inputs)?;
    let mut steps = Vec::with_capacity(spec.max_inputs);
    for k in 1..=spec.max_inputs {
        let guess = search.guess();
        let x = ideal_input(target, guess);
        let y = corrupt(x, k, spec.error, &mut channel_rng);
        search.observe(y)?;
        let post = search.posterior();
        steps.push(InputStep {
            guess,
            x,
            y,
            crossover: spec.error.crossover(k),
            map: post.map_estimate(),
        });
        if spec.tau.is_some() {
            if let Some(stop) = post.check_stopped(&rule) {
                return Ok(TrialRecord {
                    trial,
                    seed: spec.seed,
                    target,
                    steps,
                    estimate: stop.estimate,
                    inputs: stop.inputs,
                    outcome: stop.outcome,
                });
            }
        }
    }
    let estimate = search.posterior().map_estimate();
    Ok(TrialRecord {
        trial,
        seed: spec.seed,
        target,
        steps,
        estimate,
        inputs: spec.max_inputs,
        outcome: Outcome::Timeout,
    })
}

/// Trials `0..count` in parallel; the result depends only on the spec.
pub fn run_many(spec: &TrialSpec<'_>, count: usize) -> Result<Vec<TrialRecord>, HarnessError> {
    (0..count as u64)
        .into_par_iter()
        .map(|t| run_trial(spec, t))
        .collect()
}

fn validate(config: &ExperimentConfig) -> Result<(), HarnessError> {
    if !(0.0..=0.5).contains(&config.assumed_p) {
        return Err(HarnessError::Config(format!(
            "assumed crossover {} outside [0, 0.5]",
            config.assumed_p
        )));
    }
    if config.max_inputs == 0 {
        return Err(HarnessError::Config("max_inputs must be positive".into()));
    }
    if config.trials == 0 {
        return Err(HarnessError::Config("trial count must be positive".into()));
    }
    Ok(())
}

/// Resolve the stopping threshold for a config, if it stops early at all.
pub fn resolve_tau(
    config: &ExperimentConfig,
    table: Option<&ThresholdTable>,
) -> Result<Option<f64>, HarnessError> {
    match config.stopping {
        StopMode::Threshold { tau } => Ok(Some(tau)),
        StopMode::Disabled => Ok(None),
        StopMode::Table { budget } => {
            let table = table.ok_or_else(|| {
                HarnessError::Config("table stopping needs a threshold table".into())
            })?;
            Ok(Some(table.lookup(config.assumed_p, budget)?))
        }
    }
}

pub fn run_trials(
    config: &ExperimentConfig,
    table: Option<&ThresholdTable>,
) -> Result<Vec<TrialRecord>, HarnessError> {
    validate(config)?;
    let dict = config.dictionary.resolve()?;
    let spec = TrialSpec {
        n_d: dict.size(),
        algorithm: config.algorithm,
        assumed_p: config.assumed_p,
        error: &config.error,
        tau: resolve_tau(config, table)?,
        max_inputs: config.max_inputs,
        seed: config.seed,
    };
    run_many(&spec, config.trials)
}

/// Trials whose final estimate is drawn uniformly at random, without inputs.
pub fn chance_trials(n_d: usize, count: usize, seed: u64) -> Vec<TrialRecord> {
    (0..count as u64)
        .map(|t| {
            let mut rng = trial_stream(seed, t, Stream::Target);
            let target = rng.random_range(1..=n_d);
            let estimate = rng.random_range(1..=n_d);
            TrialRecord {
                trial: t,
                seed,
                target,
                steps: Vec::new(),
                estimate,
                inputs: 0,
                outcome: Outcome::Timeout,
            }
        })
        .collect()
}

pub fn write_trials_jsonl<W: Write>(
    trials: &[TrialRecord],
    mut out: W,
) -> Result<(), HarnessError> {
    for t in trials {
        serde_json::to_writer(&mut out, t)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_trials_jsonl<R: BufRead>(input: R) -> Result<Vec<TrialRecord>, HarnessError> {
    let mut out = Vec::new();
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

/// Counts of `k*` for `k* = 1..=max_inputs`.
pub fn inputs_histogram(trials: &[TrialRecord], max_inputs: usize) -> Vec<usize> {
    let mut h = vec![0; max_inputs];
    for t in trials {
        if (1..=max_inputs).contains(&t.inputs) {
            h[t.inputs - 1] += 1;
        }
    }
    h
}

/// Crossover rows `0, 0.05, …, 0.5`.
pub fn default_crossovers() -> Vec<f64> {
    (0..=10).map(|i| i as f64 * 0.05).collect()
}

/// Candidate thresholds `0, 0.05, …, 1`.
pub fn default_taus() -> Vec<f64> {
    (0..=20).map(|i| i as f64 * 0.05).collect()
}

/// Input budget columns `5, 10, …, 50`.
pub fn default_budgets() -> Vec<usize> {
    (1..=10).map(|i| i * 5).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CandidateStats {
    pub p: f64,
    pub tau: f64,
    pub accuracy: f64,
    pub mean_inputs: f64,
}

/// Best stopping threshold per (crossover, input budget).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdTable {
    pub crossovers: Vec<f64>,
    pub budgets: Vec<usize>,
    /// `tau[row][col]`.
    pub tau: Vec<Vec<f64>>,
    /// Set where no candidate met the budget and the most accurate was kept.
    pub infeasible: Vec<Vec<bool>>,
    /// Simulation results behind the table, one per (crossover, τ).
    #[serde(default)]
    pub candidates: Vec<CandidateStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableConfig {
    pub n_d: usize,
    pub crossovers: Vec<f64>,
    pub taus: Vec<f64>,
    pub budgets: Vec<usize>,
    pub trials_per_cell: usize,
    pub max_inputs: usize,
    pub seed: u64,
}

impl Default for TableConfig {
    fn default() -> Self {
        Self {
            n_d: 60,
            crossovers: default_crossovers(),
            taus: default_taus(),
            budgets: default_budgets(),
            trials_per_cell: 500,
            max_inputs: StoppingRule::DEFAULT_MAX_INPUTS,
            seed: 1,
        }
    }
}

/// Simulate every candidate τ at every crossover (generated error equal to
/// the assumed error) and keep, per input budget, the most accurate τ whose
/// mean input count fits the budget. Ties go to the larger τ.
pub fn generate_threshold_table(cfg: &TableConfig) -> Result<ThresholdTable, HarnessError> {
    if cfg.crossovers.is_empty() || cfg.taus.is_empty() || cfg.budgets.is_empty() {
        return Err(HarnessError::Config(
            "threshold table grids must be nonempty".into(),
        ));
    }
    if cfg.trials_per_cell == 0 {
        return Err(HarnessError::Config(
            "trials per cell must be positive".into(),
        ));
    }
    let mut crossovers = cfg.crossovers.clone();
    crossovers.sort_by(f64::total_cmp);
    let mut budgets = cfg.budgets.clone();
    budgets.sort_unstable();

    let jobs: Vec<(usize, f64, f64)> = crossovers
        .iter()
        .enumerate()
        .flat_map(|(i, &p)| cfg.taus.iter().map(move |&tau| (i, p, tau)))
        .collect();
    let candidates: Vec<CandidateStats> = jobs
        .par_iter()
        .map(|&(i, p, tau)| {
            let error = ErrorProfile::fixed(p).map_err(|e| HarnessError::Config(e.to_string()))?;
            // common random numbers across τ within a row
            let spec = TrialSpec {
                n_d: cfg.n_d,
                algorithm: Algorithm::PosteriorMatching,
                assumed_p: p,
                error: &error,
                tau: Some(tau),
                max_inputs: cfg.max_inputs,
                seed: derive_seed(cfg.seed, i as u64),
            };
            let mut hits = 0usize;
            let mut inputs = 0usize;
            for t in 0..cfg.trials_per_cell as u64 {
                let r = run_trial(&spec, t)?;
                hits += usize::from(r.correct());
                inputs += r.inputs;
            }
            let n = cfg.trials_per_cell as f64;
            Ok(CandidateStats {
                p,
                tau,
                accuracy: hits as f64 / n,
                mean_inputs: inputs as f64 / n,
            })
        })
        .collect::<Result<_, HarnessError>>()?;

    let mut tau_grid = Vec::new();
    let mut infeasible = Vec::new();
    for &p in &crossovers {
        let row: Vec<&CandidateStats> = candidates.iter().filter(|c| c.p == p).collect();
        let mut taus = Vec::new();
        let mut flags = Vec::new();
        for &budget in &budgets {
            let feasible: Vec<&&CandidateStats> = row
                .iter()
                .filter(|c| c.mean_inputs <= budget as f64)
                .collect();
            let pool: Vec<&CandidateStats> = if feasible.is_empty() {
                row.clone()
            } else {
                feasible.into_iter().copied().collect()
            };
            let best = pool
                .iter()
                .max_by(|a, b| {
                    a.accuracy
                        .total_cmp(&b.accuracy)
                        .then(a.tau.total_cmp(&b.tau))
                })
                .expect("nonempty candidate pool");
            taus.push(best.tau);
            flags
                .push(pool.len() == row.len() && row.iter().all(|c| c.mean_inputs > budget as f64));
        }
        tau_grid.push(taus);
        infeasible.push(flags);
    }
    Ok(ThresholdTable {
        crossovers,
        budgets,
        tau: tau_grid,
        infeasible,
        candidates,
    })
}

const ROW_SLACK: f64 = 1e-9;

impl ThresholdTable {
    /// Row for the next crossover at or above `p`; column for the budget or
    /// the next smaller tabulated budget.
    pub fn lookup(&self, p: f64, budget: usize) -> Result<f64, HarnessError> {
        let row = self
            .crossovers
            .iter()
            .position(|&c| c >= p - ROW_SLACK)
            .ok_or(HarnessError::NoRow(p))?;
        let col = self
            .budgets
            .iter()
            .rposition(|&b| b <= budget)
            .ok_or(HarnessError::NoColumn(budget))?;
        Ok(self.tau[row][col])
    }

    pub fn row_crossover(&self, p: f64) -> Option<f64> {
        self.crossovers
            .iter()
            .copied()
            .find(|&c| c >= p - ROW_SLACK)
    }

    /// Wide layout: crossover rows, budget columns.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), HarnessError> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["crossover".to_string()];
        header.extend(self.budgets.iter().map(|b| b.to_string()));
        w.write_record(&header)?;
        for (p, row) in self.crossovers.iter().zip(&self.tau) {
            let mut rec = vec![format!("{p:.2}")];
            rec.extend(row.iter().map(|t| format!("{t:.2}")));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn from_csv(text: &str) -> Result<Self, HarnessError> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let budgets = r
            .headers()?
            .iter()
            .skip(1)
            .map(|h| h.trim().parse::<usize>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| HarnessError::Config(format!("bad budget header: {e}")))?;
        let mut crossovers = Vec::new();
        let mut tau = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let vals = rec
                .iter()
                .map(|v| v.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| HarnessError::Config(format!("bad table entry: {e}")))?;
            if vals.len() != budgets.len() + 1 {
                return Err(HarnessError::Config("ragged threshold table".into()));
            }
            crossovers.push(vals[0]);
            tau.push(vals[1..].to_vec());
        }
        if crossovers.is_empty() || budgets.is_empty() {
            return Err(HarnessError::Config("empty threshold table".into()));
        }
        if crossovers.windows(2).any(|w| w[1] <= w[0]) || budgets.windows(2).any(|w| w[1] <= w[0]) {
            return Err(HarnessError::Config("table axes must be increasing".into()));
        }
        let infeasible = vec![vec![false; budgets.len()]; crossovers.len()];
        Ok(Self {
            crossovers,
            budgets,
            tau,
            infeasible,
            candidates: Vec::new(),
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        if path.extension().is_some_and(|e| e == "json") {
            Ok(serde_json::from_str(&text)?)
        } else {
            Self::from_csv(&text)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub assumed_p: f64,
    pub error: ErrorProfile,
    pub alphabet_sizes: Vec<usize>,
    pub lengths: Vec<usize>,
    pub algorithms: Vec<Algorithm>,
    pub trials: usize,
    pub max_inputs: usize,
    pub seed: u64,
    pub resamples: usize,
    /// Dictionaries above this size are skipped.
    pub max_size: usize,
}

/// Largest dictionary swept unless the caller opts in to bigger ones.
pub const DEFAULT_SWEEP_LIMIT: usize = 20_000;

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            assumed_p: 0.1,
            error: ErrorProfile::Fixed { p: 0.1 },
            alphabet_sizes: vec![3, 5],
            lengths: vec![2, 4, 6, 8],
            algorithms: vec![Algorithm::PosteriorMatching, Algorithm::Stepwise],
            trials: 1000,
            max_inputs: StoppingRule::DEFAULT_MAX_INPUTS,
            seed: 1,
            resamples: 10_000,
            max_size: DEFAULT_SWEEP_LIMIT,
        }
    }
}

/// Series for one (algorithm, b, r) cell of a sweep. Labels are
/// `<alg>/b<b>r<r>/<metric>`.
pub fn sweep_cell(
    cfg: &SweepConfig,
    algorithm: Algorithm,
    b: usize,
    r: usize,
) -> Result<Vec<MetricSeries>, HarnessError> {
    let dict = DictionarySpec::synthetic(b, r)?;
    let n_d = dict.size();
    let spec = TrialSpec {
        n_d,
        algorithm,
        assumed_p: cfg.assumed_p,
        error: &cfg.error,
        tau: None,
        max_inputs: cfg.max_inputs,
        seed: cfg.seed,
    };
    let trials = run_many(&spec, cfg.trials)?;
    let prefix = format!("{}/b{b}r{r}", algorithm.label());
    let acc = accuracy_series(&trials, cfg.max_inputs, &format!("{prefix}/accuracy"))?;
    let itr = itr_series(&acc, n_d, &format!("{prefix}/itr"));
    let dist = bootstrap_series(
        &trials,
        cfg.max_inputs,
        cfg.resamples,
        derive_seed(cfg.seed, 1),
        &format!("{prefix}/distance"),
        |t: &TrialRecord, k| dictionary_distance(t.estimate_at(k), t.target, n_d),
    )?;

    // per trial, alphabet metrics of the estimate after each input
    let alph: Vec<Vec<AlphabetMetrics>> = trials
        .iter()
        .map(|t| {
            let target = dict.decode_index(t.target)?;
            (1..=cfg.max_inputs)
                .map(|k| {
                    Ok(alphabet_metrics(
                        &dict.decode_index(t.estimate_at(k))?,
                        &target,
                        b,
                    )?)
                })
                .collect::<Result<Vec<_>, HarnessError>>()
        })
        .collect::<Result<_, _>>()?;
    let alph_series = |tag: u64, name: &str, f: fn(&AlphabetMetrics) -> f64| {
        bootstrap_series(
            &alph,
            cfg.max_inputs,
            cfg.resamples,
            derive_seed(cfg.seed, tag),
            &format!("{prefix}/{name}"),
            |a: &Vec<AlphabetMetrics>, k| f(&a[k - 1]),
        )
    };
    let alph_acc = alph_series(2, "alph_acc", |m| m.accuracy)?;
    let alph_dev = alph_series(3, "alph_dev", |m| m.deviation)?;
    let norm_dev = alph_series(4, "norm_alph_dev", |m| m.normalized_deviation)?;
    Ok(vec![acc, itr, dist, alph_acc, alph_dev, norm_dev])
}

/// Every (algorithm, b, r) combination within the size limit, stopping
/// disabled, all runs from the same master seed.
pub fn sweep_dictionaries(cfg: &SweepConfig) -> Result<Vec<MetricSeries>, HarnessError> {
    let mut out = Vec::new();
    for &alg in &cfg.algorithms {
        for &b in &cfg.alphabet_sizes {
            for &r in &cfg.lengths {
                let size = (b as u128).checked_pow(r as u32).unwrap_or(u128::MAX);
                if size > cfg.max_size as u128 {
                    continue;
                }
                out.extend(sweep_cell(cfg, alg, b, r)?);
            }
        }
    }
    Ok(out)
}

/// Accuracy of one trial-length bin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinSummary {
    pub bin: Option<Bin>,
    pub count: usize,
    pub accuracy: f64,
    pub lo: f64,
    pub hi: f64,
}

impl BinSummary {
    pub fn label(&self) -> &'static str {
        self.bin.map_or("all", Bin::label)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinReport {
    pub summaries: Vec<BinSummary>,
    /// Dictionary distance of the displayed guess after every input, per bin.
    pub deviation: Vec<MetricSeries>,
}

pub fn bin_report(
    trials: &[TrialRecord],
    n_d: usize,
    max_inputs: usize,
    resamples: usize,
    seed: u64,
) -> Result<BinReport, HarnessError> {
    let bins = bin_trials(trials);
    let groups: Vec<(Option<Bin>, Vec<TrialRecord>)> = Bin::ALL
        .iter()
        .map(|&b| (Some(b), bins.get(b).iter().map(|t| (*t).clone()).collect()))
        .chain(std::iter::once((None, trials.to_vec())))
        .collect();
    let mut summaries = Vec::new();
    let mut deviation = Vec::new();
    for (i, (bin, group)) in groups.iter().enumerate() {
        let label = bin.map_or("all", Bin::label);
        if group.is_empty() {
            summaries.push(BinSummary {
                bin: *bin,
                count: 0,
                accuracy: f64::NAN,
                lo: f64::NAN,
                hi: f64::NAN,
            });
            continue;
        }
        let acc = metrics::final_accuracy(group)?;
        summaries.push(BinSummary {
            bin: *bin,
            count: group.len(),
            accuracy: acc.value,
            lo: acc.lo,
            hi: acc.hi,
        });
        deviation.push(bootstrap_series(
            group,
            max_inputs,
            resamples,
            derive_seed(seed, i as u64),
            &format!("{label}/deviation"),
            |t: &TrialRecord, k| dictionary_distance(t.guess_after(k), t.target, n_d),
        )?);
    }
    Ok(BinReport {
        summaries,
        deviation,
    })
}

/// CSV rows `bin,count,accuracy,lo,hi`.
pub fn write_bin_summary_csv<W: Write>(
    summaries: &[BinSummary],
    out: W,
) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["bin", "count", "accuracy", "lo", "hi"])?;
    for s in summaries {
        w.write_record(&[
            s.label().to_string(),
            s.count.to_string(),
            s.accuracy.to_string(),
            s.lo.to_string(),
            s.hi.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::final_accuracy;

    fn fixed(p: f64) -> ErrorProfile {
        ErrorProfile::fixed(p).unwrap()
    }

    #[test]
    fn noiseless_trials_all_converge_correctly() {
        let err = fixed(0.0);
        let spec = TrialSpec {
            n_d: 60,
            algorithm: Algorithm::PosteriorMatching,
            assumed_p: 0.05,
            error: &err,
            tau: Some(0.95),
            max_inputs: 50,
            seed: 11,
        };
        let trials = run_many(&spec, 200).unwrap();
        assert!(trials
            .iter()
            .all(|t| t.correct() && t.outcome == Outcome::Converged));
        assert!(trials
            .iter()
            .all(|t| t.steps.len() == t.inputs && t.inputs <= 50));
    }

    #[test]
    fn runs_are_reproducible() {
        let cfg = ExperimentConfig {
            trials: 50,
            ..ExperimentConfig::default()
        };
        let a = run_trials(&cfg, None).unwrap();
        let b = run_trials(&cfg, None).unwrap();
        assert_eq!(a, b);
        let mut buf_a = Vec::new();
        let mut buf_b = Vec::new();
        write_trials_jsonl(&a, &mut buf_a).unwrap();
        write_trials_jsonl(&b, &mut buf_b).unwrap();
        assert_eq!(buf_a, buf_b);
        assert_eq!(read_trials_jsonl(&buf_a[..]).unwrap(), a);
    }

    #[test]
    fn sweep_mode_logs_every_input() {
        let cfg = ExperimentConfig {
            trials: 20,
            stopping: StopMode::Disabled,
            ..ExperimentConfig::default()
        };
        let trials = run_trials(&cfg, None).unwrap();
        assert!(trials.iter().all(|t| t.steps.len() == 50 && t.inputs == 50));
    }

    #[test]
    fn table_mode_needs_a_table() {
        let cfg = ExperimentConfig {
            stopping: StopMode::Table { budget: 25 },
            ..ExperimentConfig::default()
        };
        assert!(run_trials(&cfg, None).is_err());
        let bad = ExperimentConfig {
            assumed_p: 0.7,
            ..ExperimentConfig::default()
        };
        assert!(run_trials(&bad, None).is_err());
    }

    #[test]
    fn chance_selection_rate() {
        let trials = chance_trials(60, 60_000, 3);
        let acc = final_accuracy(&trials).unwrap().value;
        assert!((acc - 1.0 / 60.0).abs() < 0.002, "{acc}");
    }

    fn small_table() -> ThresholdTable {
        generate_threshold_table(&TableConfig {
            crossovers: vec![0.0, 0.25, 0.5],
            taus: default_taus(),
            budgets: vec![10, 25],
            trials_per_cell: 60,
            ..TableConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn table_selection_rule() {
        let t = small_table();
        for (r, &p) in t.crossovers.iter().enumerate() {
            for (c, &budget) in t.budgets.iter().enumerate() {
                let row: Vec<_> = t.candidates.iter().filter(|s| s.p == p).collect();
                let chosen = row.iter().find(|s| s.tau == t.tau[r][c]).unwrap();
                assert!(chosen.mean_inputs <= budget as f64 || t.infeasible[r][c]);
                for s in &row {
                    if s.mean_inputs <= budget as f64 {
                        assert!(
                            s.accuracy < chosen.accuracy
                                || (s.accuracy == chosen.accuracy && s.tau <= chosen.tau)
                        );
                    }
                }
            }
        }
        // every τ on the 5% grid
        for row in &t.tau {
            for &tau in row {
                assert!(((tau * 20.0).round() - tau * 20.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn lookup_rounds_crossover_up() {
        let t = ThresholdTable {
            crossovers: vec![0.0, 0.2, 0.25, 0.3],
            budgets: vec![20, 25, 30],
            tau: vec![
                vec![0.1, 0.2, 0.3],
                vec![0.4, 0.5, 0.6],
                vec![0.7, 0.75, 0.8],
                vec![0.85, 0.9, 0.95],
            ],
            infeasible: vec![vec![false; 3]; 4],
            candidates: vec![],
        };
        assert_eq!(t.lookup(0.22, 25).unwrap(), 0.75);
        assert_eq!(t.lookup(0.218, 25).unwrap(), 0.75);
        assert_eq!(t.lookup(0.25, 25).unwrap(), 0.75);
        assert_eq!(t.lookup(0.2, 27).unwrap(), 0.5);
        assert!(t.lookup(0.31, 25).is_err());
        assert!(t.lookup(0.1, 10).is_err());
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("crossover,20,25,30\n0.00,0.10,0.20,0.30\n"));
        let back = ThresholdTable::from_csv(&text).unwrap();
        assert_eq!(back.tau, t.tau);
        assert_eq!(back.crossovers, t.crossovers);
    }

    #[test]
    fn bins_and_histogram() {
        let cfg = ExperimentConfig {
            trials: 300,
            ..ExperimentConfig::default()
        };
        let trials = run_trials(&cfg, None).unwrap();
        let h = inputs_histogram(&trials, 50);
        assert_eq!(h.iter().sum::<usize>(), 300);
        let rep = bin_report(&trials, 60, 50, 200, 1).unwrap();
        let total: usize = rep.summaries[..3].iter().map(|s| s.count).sum();
        assert_eq!(total, rep.summaries[3].count);
        let mut buf = Vec::new();
        write_bin_summary_csv(&rep.summaries, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 5);
    }

    #[test]
    fn equal_sizes_give_equal_series() {
        let cfg = SweepConfig {
            trials: 40,
            resamples: 50,
            ..SweepConfig::default()
        };
        let a = sweep_cell(&cfg, Algorithm::PosteriorMatching, 3, 4).unwrap();
        let b = sweep_cell(&cfg, Algorithm::PosteriorMatching, 9, 2).unwrap();
        // string-level metrics depend only on N_d
        for i in 0..3 {
            assert_eq!(a[i].points, b[i].points);
        }
    }
}
