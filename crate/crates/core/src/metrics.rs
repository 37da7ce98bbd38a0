//! Trial records and the statistics computed over them.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use thiserror::Error;

use crate::codec::{Bit, Outcome};
use crate::dictionary::ConfigString;

/// Two-sided 95% standard normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("cannot aggregate an empty set")]
    Empty,
    #[error("{successes} successes out of {n} trials")]
    InvalidCount { successes: usize, n: usize },
    #[error("strings have different lengths")]
    LengthMismatch,
    #[error(transparent)]
    Csv(#[from] CsvError),
}

/// CSV failures, kept comparable for `MetricsError: PartialEq`.
#[derive(Debug, Error, PartialEq)]
#[error("{0}")]
pub struct CsvError(String);

impl From<csv::Error> for MetricsError {
    fn from(e: csv::Error) -> Self {
        MetricsError::Csv(CsvError(e.to_string()))
    }
}

impl From<std::io::Error> for MetricsError {
    fn from(e: std::io::Error) -> Self {
        MetricsError::Csv(CsvError(e.to_string()))
    }
}

/// One input of a trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InputStep {
    /// Guess presented before this input.
    pub guess: usize,
    /// Correct input for the guess.
    pub x: Bit,
    /// Input received after the channel.
    pub y: Bit,
    /// Crossover that generated `y`.
    pub crossover: f64,
    /// MAP estimate after absorbing `y`.
    pub map: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: u64,
    pub seed: u64,
    pub target: usize,
    pub steps: Vec<InputStep>,
    /// Final estimate `j*`.
    pub estimate: usize,
    /// Inputs used `k*`.
    pub inputs: usize,
    pub outcome: Outcome,
}

impl TrialRecord {
    pub fn correct(&self) -> bool {
        self.estimate == self.target
    }

    /// MAP estimate after `k` inputs. Before any input this is string 1 (the
    /// MAP of the uniform prior); after the trial stops it is `j*`.
    pub fn estimate_at(&self, k: usize) -> usize {
        match k {
            0 => 1,
            k if k <= self.steps.len() => self.steps[k - 1].map,
            _ => self.estimate,
        }
    }

    /// Guess on display after `k` inputs, `j*` once the trial has stopped.
    pub fn guess_after(&self, k: usize) -> usize {
        if k < self.steps.len() {
            self.steps[k].guess
        } else {
            self.estimate
        }
    }

    pub fn bin(&self) -> Option<Bin> {
        Bin::of(self.inputs)
    }
}

/// Information transfer rate in bits per selection.
///
/// Evaluated as written for any `p` in [0, 1], so values below chance come
/// out negative.
pub fn itr(p: f64, n_d: usize) -> f64 {
    let n = n_d as f64;
    let xlog = |a: f64, b: f64| if a == 0.0 { 0.0 } else { a * b.log2() };
    n.log2() + xlog(p, p) + xlog(1.0 - p, (1.0 - p) / (n - 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub value: f64,
    pub lo: f64,
    pub hi: f64,
}

/// 95% Wilson score interval for a binomial proportion.
pub fn wilson(successes: usize, n: usize) -> Result<Interval, MetricsError> {
    if n == 0 {
        return Err(MetricsError::Empty);
    }
    if successes > n {
        return Err(MetricsError::InvalidCount { successes, n });
    }
    let nf = n as f64;
    let p = successes as f64 / nf;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / denom;
    let half = Z95 / denom * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt();
    let lo = if successes == 0 {
        0.0
    } else {
        (center - half).max(0.0)
    };
    let hi = if successes == n {
        1.0
    } else {
        (center + half).min(1.0)
    };
    Ok(Interval { value: p, lo, hi })
}

/// Fraction of trials whose estimate after `k` inputs is the target.
pub fn error_free_accuracy(trials: &[TrialRecord], k: usize) -> Result<Interval, MetricsError> {
    let hits = trials
        .iter()
        .filter(|t| t.estimate_at(k) == t.target)
        .count();
    wilson(hits, trials.len())
}

/// Final-estimate accuracy over a trial set.
pub fn final_accuracy(trials: &[TrialRecord]) -> Result<Interval, MetricsError> {
    wilson(trials.iter().filter(|t| t.correct()).count(), trials.len())
}

/// `|Z_j − Z_t|` on the unit interval.
pub fn dictionary_distance(j: usize, t: usize, n_d: usize) -> f64 {
    j.abs_diff(t) as f64 / n_d as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphabetMetrics {
    pub accuracy: f64,
    pub deviation: f64,
    pub normalized_deviation: f64,
}

/// Per-alphabet agreement between two strings over `b`-character alphabets.
pub fn alphabet_metrics(
    estimate: &ConfigString,
    target: &ConfigString,
    b: usize,
) -> Result<AlphabetMetrics, MetricsError> {
    if estimate.0.len() != target.0.len() {
        return Err(MetricsError::LengthMismatch);
    }
    let r = target.0.len();
    if r == 0 {
        return Err(MetricsError::Empty);
    }
    let same = estimate
        .0
        .iter()
        .zip(&target.0)
        .filter(|(a, b)| a == b)
        .count();
    let dev: f64 = estimate
        .0
        .iter()
        .zip(&target.0)
        .map(|(a, t)| a.abs_diff(*t) as f64 / b as f64)
        .sum();
    Ok(AlphabetMetrics {
        accuracy: same as f64 / r as f64,
        deviation: dev,
        normalized_deviation: dev / r as f64,
    })
}

/// Mean, accumulated as offsets from the first sample so that constant
/// input returns that constant exactly.
pub fn mean(samples: &[f64]) -> f64 {
    let x0 = samples[0];
    x0 + samples.iter().map(|x| x - x0).sum::<f64>() / samples.len() as f64
}

/// Percentile bootstrap 95% interval for the mean.
pub fn bootstrap_ci(
    samples: &[f64],
    resamples: usize,
    seed: u64,
) -> Result<Interval, MetricsError> {
    if samples.is_empty() || resamples == 0 {
        return Err(MetricsError::Empty);
    }
    let value = mean(samples);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = samples.len();
    let x0 = samples[0];
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| {
            x0 + (0..n)
                .map(|_| samples[rng.random_range(0..n)] - x0)
                .sum::<f64>()
                / n as f64
        })
        .collect();
    means.sort_by(f64::total_cmp);
    let pick = |q: f64| {
        let idx = (q * resamples as f64).ceil() as usize;
        means[idx.clamp(1, resamples) - 1]
    };
    Ok(Interval {
        value,
        lo: pick(0.025).min(value),
        hi: pick(0.975).max(value),
    })
}

/// Two-sided normal-approximation p-value for `c` correct answers out of `n`
/// against 50% chance.
pub fn chance_pvalue(c: usize, n: usize) -> f64 {
    let nf = n as f64;
    let z = (c as f64 / nf - 0.5) / (0.25 / nf).sqrt();
    // 2 min(Φ(z), 1 − Φ(z)) = erfc(|z| / √2)
    erfc(z.abs() / std::f64::consts::SQRT_2).min(1.0)
}

/// Trial-length groups by inputs needed to stop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bin {
    Short,
    Medium,
    Long,
}

impl Bin {
    pub const ALL: [Bin; 3] = [Bin::Short, Bin::Medium, Bin::Long];

    pub fn of(inputs: usize) -> Option<Bin> {
        match inputs {
            1..=12 => Some(Bin::Short),
            13..=18 => Some(Bin::Medium),
            19..=50 => Some(Bin::Long),
            _ => None,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Bin::Short => "short",
            Bin::Medium => "medium",
            Bin::Long => "long",
        }
    }

    pub fn range(self) -> (usize, usize) {
        match self {
            Bin::Short => (1, 12),
            Bin::Medium => (13, 18),
            Bin::Long => (19, 50),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Bins<'a> {
    pub short: Vec<&'a TrialRecord>,
    pub medium: Vec<&'a TrialRecord>,
    pub long: Vec<&'a TrialRecord>,
    pub all: Vec<&'a TrialRecord>,
}

impl<'a> Bins<'a> {
    pub fn get(&self, bin: Bin) -> &[&'a TrialRecord] {
        match bin {
            Bin::Short => &self.short,
            Bin::Medium => &self.medium,
            Bin::Long => &self.long,
        }
    }
}

pub fn bin_trials(trials: &[TrialRecord]) -> Bins<'_> {
    let mut bins = Bins::default();
    for t in trials {
        match t.bin() {
            Some(Bin::Short) => bins.short.push(t),
            Some(Bin::Medium) => bins.medium.push(t),
            Some(Bin::Long) => bins.long.push(t),
            None => {}
        }
        bins.all.push(t);
    }
    bins
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub inputs: usize,
    pub value: f64,
    pub lo: f64,
    pub hi: f64,
}

/// A metric tracked against the number of inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSeries {
    pub label: String,
    pub points: Vec<SeriesPoint>,
}

impl MetricSeries {
    pub fn new(label: impl Into<String>) -> Self {
        Self {
            label: label.into(),
            points: Vec::new(),
        }
    }

    pub fn push(&mut self, inputs: usize, iv: Interval) {
        self.points.push(SeriesPoint {
            inputs,
            value: iv.value,
            lo: iv.lo,
            hi: iv.hi,
        });
    }

    pub fn at(&self, inputs: usize) -> Option<&SeriesPoint> {
        self.points.iter().find(|p| p.inputs == inputs)
    }
}

/// Write series as CSV rows `inputs,value,lo,hi,series`.
pub fn write_series_csv<W: Write>(series: &[MetricSeries], out: W) -> Result<(), MetricsError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["inputs", "value", "lo", "hi", "series"])?;
    for s in series {
        for p in &s.points {
            w.write_record(&[
                p.inputs.to_string(),
                p.value.to_string(),
                p.lo.to_string(),
                p.hi.to_string(),
                s.label.clone(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Read series back from [`write_series_csv`] output, keeping first-seen order.
pub fn read_series_csv(text: &str) -> Result<Vec<MetricSeries>, MetricsError> {
    #[derive(Deserialize)]
    struct Row {
        inputs: usize,
        value: f64,
        lo: f64,
        hi: f64,
        series: String,
    }
    let mut out: Vec<MetricSeries> = Vec::new();
    for row in csv::Reader::from_reader(text.as_bytes()).deserialize() {
        let row: Row = row?;
        let idx = match out.iter().position(|s| s.label == row.series) {
            Some(i) => i,
            None => {
                out.push(MetricSeries::new(row.series.clone()));
                out.len() - 1
            }
        };
        out[idx].points.push(SeriesPoint {
            inputs: row.inputs,
            value: row.value,
            lo: row.lo,
            hi: row.hi,
        });
    }
    Ok(out)
}

/// Error-free accuracy with Wilson bounds for `k = 1..=max_k`.
pub fn accuracy_series(
    trials: &[TrialRecord],
    max_k: usize,
    label: &str,
) -> Result<MetricSeries, MetricsError> {
    let mut s = MetricSeries::new(label);
    for k in 1..=max_k {
        s.push(k, error_free_accuracy(trials, k)?);
    }
    Ok(s)
}

/// ITR of the accuracy series; bounds are the ITR of the accuracy bounds,
/// reordered so that `lo ≤ hi`.
pub fn itr_series(accuracy: &MetricSeries, n_d: usize, label: &str) -> MetricSeries {
    let mut s = MetricSeries::new(label);
    for p in &accuracy.points {
        let (a, b) = (itr(p.lo, n_d), itr(p.hi, n_d));
        let v = itr(p.value, n_d);
        s.push(
            p.inputs,
            Interval {
                value: v,
                lo: a.min(b).min(v),
                hi: a.max(b).max(v),
            },
        );
    }
    s
}

/// Mean of a per-trial statistic at each `k` with bootstrap bounds, resampled
/// independently per `k`.
pub fn bootstrap_series<T, F>(
    items: &[T],
    max_k: usize,
    resamples: usize,
    seed: u64,
    label: &str,
    stat: F,
) -> Result<MetricSeries, MetricsError>
where
    F: Fn(&T, usize) -> f64,
{
    let mut s = MetricSeries::new(label);
    for k in 1..=max_k {
        let xs: Vec<f64> = items.iter().map(|t| stat(t, k)).collect();
        s.push(
            k,
            bootstrap_ci(&xs, resamples, crate::rng::derive_seed(seed, k as u64))?,
        );
    }
    Ok(s)
}
