//! The noisy binary input channel.
//!
//! Inputs pass through a binary symmetric channel whose crossover is either
//! fixed or depends on the input number. The non-stationary profile is built
//! from empirical per-input error rates: a least-squares cubic is fitted, and
//! a monotone PCHIP is run through the cubic's first value, its interior
//! minimum and its maximum, with the maximum held until the input cap.

mod pchip;

use std::fs;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::Bit;

pub use pchip::Pchip;

/// Per-input crossover samples read off the published error-rate figure.
/// Approximate: they were digitized by eye, not taken from raw data.
pub const DIGITIZED_SAMPLES: &str = include_str!("../../data/crossover_digitized.csv");

#[derive(Debug, Error, PartialEq)]
pub enum ChannelError {
    #[error("crossover must lie in [0, 0.5], got {0}")]
    InvalidCrossover(f64),
    #[error("cubic fit needs at least 4 distinct input indices, got {0}")]
    TooFewPoints(usize),
    #[error("cubic fit design matrix is rank deficient")]
    RankDeficient,
    #[error("invalid knots: {0}")]
    Knots(String),
    #[error("bad profile table: {0}")]
    Table(String),
    #[error("unrecognized error profile `{0}` (expected fixed:<p>, pchip:<file>, samples:<file> or digitized)")]
    Spec(String),
}

/// Empirical error rate at one input index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossoverSample {
    pub input: usize,
    pub rate: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CrossoverSamples(pub Vec<CrossoverSample>);

impl CrossoverSamples {
    /// Parse `input,rate[,count]` rows; `#` starts a comment and a
    /// non-numeric first row is treated as a header.
    pub fn parse(text: &str) -> Result<Self, ChannelError> {
        let rows = parse_table(text)?;
        let mut out = Vec::with_capacity(rows.len());
        for row in rows {
            if row.len() < 2 {
                return Err(ChannelError::Table("expected input,rate[,count]".into()));
            }
            let rate = row[1];
            if !(0.0..=1.0).contains(&rate) {
                return Err(ChannelError::Table(format!("rate {rate} outside [0, 1]")));
            }
            let count = row.get(2).copied().unwrap_or(1.0);
            if count < 0.0 || row[0] < 1.0 {
                return Err(ChannelError::Table(
                    "negative count or input below 1".into(),
                ));
            }
            out.push(CrossoverSample {
                input: row[0] as usize,
                rate,
                count: count as usize,
            });
        }
        Ok(Self(out))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ChannelError> {
        let text = fs::read_to_string(path).map_err(|e| ChannelError::Table(e.to_string()))?;
        Self::parse(&text)
    }

    pub fn digitized() -> Self {
        Self::parse(DIGITIZED_SAMPLES).expect("bundled samples parse")
    }

    /// Count-weighted mean error rate over all recorded inputs.
    pub fn pooled_rate(&self) -> f64 {
        let (num, den) = self.0.iter().fold((0.0, 0.0), |(n, d), s| {
            (n + s.rate * s.count as f64, d + s.count as f64)
        });
        num / den
    }
}

fn parse_table(text: &str) -> Result<Vec<Vec<f64>>, ChannelError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| ChannelError::Table(e.to_string()))?;
        if rec.iter().all(str::is_empty) {
            continue;
        }
        let parsed: Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(v) => rows.push(v),
            Err(_) if i == 0 => continue,
            Err(e) => return Err(ChannelError::Table(format!("row {}: {e}", i + 1))),
        }
    }
    Ok(rows)
}

/// `c0 + c1 x + c2 x^2 + c3 x^3`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cubic(pub [f64; 4]);

impl Cubic {
    pub fn eval(&self, x: f64) -> f64 {
        let [c0, c1, c2, c3] = self.0;
        ((c3 * x + c2) * x + c1) * x + c0
    }

    /// Real roots of the derivative, ascending.
    fn critical_points(&self) -> Vec<f64> {
        let [_, c1, c2, c3] = self.0;
        let (a, b, c) = (3.0 * c3, 2.0 * c2, c1);
        if a.abs() < 1e-300 {
            return if b.abs() > 1e-300 {
                vec![-c / b]
            } else {
                vec![]
            };
        }
        let disc = b * b - 4.0 * a * c;
        if disc < 0.0 {
            return vec![];
        }
        let sq = disc.sqrt();
        // numerically stable pair
        let qv = -0.5 * (b + b.signum() * sq);
        let mut r = if qv == 0.0 {
            vec![0.0]
        } else {
            vec![qv / a, c / qv]
        };
        r.sort_by(f64::total_cmp);
        r
    }

    fn second_derivative(&self, x: f64) -> f64 {
        2.0 * self.0[2] + 6.0 * self.0[3] * x
    }
}

/// Ordinary (or count-weighted) least-squares cubic through the samples.
pub fn fit_cubic(samples: &CrossoverSamples, weighted: bool) -> Result<Cubic, ChannelError> {
    let mut xs: Vec<usize> = samples.0.iter().map(|s| s.input).collect();
    xs.sort_unstable();
    xs.dedup();
    if xs.len() < 4 {
        return Err(ChannelError::TooFewPoints(xs.len()));
    }
    let rows: Vec<&CrossoverSample> = samples
        .0
        .iter()
        .filter(|s| !weighted || s.count > 0)
        .collect();
    let m = rows.len();
    let mut design = DMatrix::<f64>::zeros(m, 4);
    let mut rhs = DVector::<f64>::zeros(m);
    for (i, s) in rows.iter().enumerate() {
        let w = if weighted {
            (s.count as f64).sqrt()
        } else {
            1.0
        };
        let x = s.input as f64;
        for p in 0..4 {
            design[(i, p)] = w * x.powi(p as i32);
        }
        rhs[i] = w * s.rate;
    }
    // column equilibration before the SVD solve
    let norms: Vec<f64> = (0..4).map(|p| design.column(p).norm()).collect();
    if norms.contains(&0.0) {
        return Err(ChannelError::RankDeficient);
    }
    for (p, n) in norms.iter().enumerate() {
        design.column_mut(p).scale_mut(1.0 / n);
    }
    let svd = design.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if smin <= 1e-12 * smax {
        return Err(ChannelError::RankDeficient);
    }
    let sol = svd
        .solve(&rhs, 0.0)
        .map_err(|_| ChannelError::RankDeficient)?;
    let mut c = [0.0; 4];
    for p in 0..4 {
        c[p] = sol[p] / norms[p];
    }
    Ok(Cubic(c))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonStationaryProfile {
    pchip: Pchip,
    clamp_at: usize,
    /// Set when the cubic had no interior minimum and a two-knot monotone
    /// fit through its end values was used instead.
    pub fallback: bool,
}

impl NonStationaryProfile {
    pub fn from_knots(input: Vec<f64>, crossover: Vec<f64>) -> Result<Self, ChannelError> {
        if let Some(&bad) = crossover.iter().find(|c| !(0.0..=0.5).contains(*c)) {
            return Err(ChannelError::InvalidCrossover(bad));
        }
        let pchip = Pchip::new(input, crossover)?;
        let clamp_at = pchip.last_x().ceil() as usize;
        Ok(Self {
            pchip,
            clamp_at,
            fallback: false,
        })
    }

    /// Knot table with rows `input,crossover`.
    pub fn parse_knots(text: &str) -> Result<Self, ChannelError> {
        let rows = parse_table(text)?;
        if rows.iter().any(|r| r.len() < 2) {
            return Err(ChannelError::Table("expected input,crossover".into()));
        }
        Self::from_knots(
            rows.iter().map(|r| r[0]).collect(),
            rows.iter().map(|r| r[1]).collect(),
        )
    }

    pub fn knots(&self) -> Vec<(f64, f64)> {
        self.pchip.knots().collect()
    }

    pub fn clamp_at(&self) -> usize {
        self.clamp_at
    }

    pub fn to_knot_table(&self) -> String {
        let mut out = String::from("input,crossover\n");
        for (x, y) in self.pchip.knots() {
            out.push_str(&format!("{x},{y}\n"));
        }
        out
    }
}

/// PCHIP through the cubic's first value, interior minimum and maximum, with
/// the maximum held until `max_inputs`. Knot values are clipped to [0, 0.5].
pub fn build_pchip(cubic: &Cubic, max_inputs: usize) -> Result<ErrorProfile, ChannelError> {
    if max_inputs < 2 {
        return Err(ChannelError::Knots("need at least two inputs".into()));
    }
    let lo = 1.0;
    let hi = max_inputs as f64;
    let clip = |v: f64| v.clamp(0.0, 0.5);

    let interior_min = cubic
        .critical_points()
        .into_iter()
        .filter(|&x| x > lo && x < hi && cubic.second_derivative(x) > 0.0)
        .min_by(|a, b| cubic.eval(*a).total_cmp(&cubic.eval(*b)))
        .filter(|&x| cubic.eval(x) <= cubic.eval(lo) && cubic.eval(x) <= cubic.eval(hi));

    let Some(x_min) = interior_min else {
        let start = clip(cubic.eval(lo));
        let end = clip(cubic.eval(hi)).max(start);
        let mut profile = NonStationaryProfile::from_knots(vec![lo, hi], vec![start, end])?;
        profile.fallback = true;
        return Ok(ErrorProfile::NonStationary(profile));
    };

    // maximum on [x_min, hi]: an interior local maximum or the right end
    let mut x_max = hi;
    for x in cubic.critical_points() {
        if x > x_min && x < hi && cubic.eval(x) > cubic.eval(x_max) {
            x_max = x;
        }
    }
    let mut xs = vec![lo, x_min, x_max];
    let y_max = clip(cubic.eval(x_max));
    let mut ys = vec![clip(cubic.eval(lo)), clip(cubic.eval(x_min)), y_max];
    if x_max < hi {
        xs.push(hi);
        ys.push(y_max);
    }
    let mut profile = NonStationaryProfile::from_knots(xs, ys)?;
    profile.clamp_at = max_inputs;
    Ok(ErrorProfile::NonStationary(profile))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ErrorProfile {
    Fixed { p: f64 },
    NonStationary(NonStationaryProfile),
}

impl ErrorProfile {
    pub fn fixed(p: f64) -> Result<Self, ChannelError> {
        if !(0.0..=0.5).contains(&p) {
            return Err(ChannelError::InvalidCrossover(p));
        }
        Ok(Self::Fixed { p })
    }

    /// Fit the bundled digitized samples and build the clamped PCHIP.
    pub fn digitized(max_inputs: usize) -> Self {
        let cubic = fit_cubic(&CrossoverSamples::digitized(), false).expect("bundled samples fit");
        build_pchip(&cubic, max_inputs).expect("bundled samples build a profile")
    }

    /// Crossover at 1-based input number `k`, always within [0, 0.5].
    pub fn crossover(&self, k: usize) -> f64 {
        match self {
            ErrorProfile::Fixed { p } => *p,
            ErrorProfile::NonStationary(prof) => {
                let x = k.min(prof.clamp_at) as f64;
                prof.pchip.eval(x).clamp(0.0, 0.5)
            }
        }
    }

    pub fn label(&self) -> String {
        match self {
            ErrorProfile::Fixed { p } => format!("fixed:{p}"),
            ErrorProfile::NonStationary(_) => "pchip".to_string(),
        }
    }
}

impl FromStr for ErrorProfile {
    type Err = ChannelError;

    /// `fixed:<p>`, `pchip:<knot file>`, `samples:<samples file>` or `digitized`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (kind, arg) = s.split_once(':').unwrap_or((s, ""));
        match kind {
            "fixed" => {
                let p: f64 = arg.parse().map_err(|_| ChannelError::Spec(s.to_string()))?;
                Self::fixed(p)
            }
            "pchip" => {
                let text =
                    fs::read_to_string(arg).map_err(|e| ChannelError::Table(e.to_string()))?;
                Ok(Self::NonStationary(NonStationaryProfile::parse_knots(
                    &text,
                )?))
            }
            "samples" => {
                let samples = CrossoverSamples::load(arg)?;
                build_pchip(&fit_cubic(&samples, false)?, 50)
            }
            "digitized" => Ok(Self::digitized(50)),
            _ => Err(ChannelError::Spec(s.to_string())),
        }
    }
}

/// Pass `x` through the channel at input number `k`.
pub fn corrupt<R: Rng + ?Sized>(x: Bit, k: usize, profile: &ErrorProfile, rng: &mut R) -> Bit {
    let p = profile.crossover(k);
    let u: f64 = rng.random();
    if u < p {
        x.flip()
    } else {
        x
    }
}
