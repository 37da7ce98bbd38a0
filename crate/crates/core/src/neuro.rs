//! Motor-imagery input classifier on multichannel signal blocks: common
//! average referencing, CSP spatial filters, normalized log-power features
//! and a two-class LDA, plus a synthetic signal generator to drive it.
//!
//! Class `Right` is the positive class (`X = 1`) throughout.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector, Matrix4, SymmetricEigen, Vector4};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Eigenvalues of the composite covariance at or below this are treated as
/// the null direction removed by CAR.
pub const EIGEN_FLOOR: f64 = 1e-10;
pub const DEFAULT_RIDGE: f64 = 1e-6;
pub const MODEL_VERSION: u32 = 1;
/// Selected CSP filters: two per class.
pub const FEATURES: usize = 4;

#[derive(Debug, Error)]
pub enum NeuroError {
    #[error("need at least {need} channels, got {got}")]
    TooFewChannels { need: usize, got: usize },
    #[error("need more samples than channels ({samples} <= {channels})")]
    TooFewSamples { samples: usize, channels: usize },
    #[error("no training blocks for class {0:?}")]
    EmptyClass(Class),
    #[error("channel count mismatch: expected {expected}, got {got}")]
    ChannelMismatch { expected: usize, got: usize },
    #[error("degenerate training data: {0}")]
    DegenerateData(String),
    #[error("signal block has zero power")]
    ZeroPower,
    #[error("pooled within-class covariance is singular")]
    SingularCovariance,
    #[error("unsupported model version {0}")]
    Version(u32),
    #[error("malformed signal csv: {0}")]
    Format(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Class {
    Left,
    Right,
}

impl Class {
    /// Ground-truth indicator `X`: 0 for left, 1 for right.
    pub fn indicator(self) -> f64 {
        match self {
            Class::Left => 0.0,
            Class::Right => 1.0,
        }
    }

    pub fn other(self) -> Self {
        match self {
            Class::Left => Class::Right,
            Class::Right => Class::Left,
        }
    }
}

/// `T × d` samples, one row per time sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalBlock {
    pub samples: DMatrix<f64>,
    pub label: Class,
}

impl SignalBlock {
    pub fn new(samples: DMatrix<f64>, label: Class) -> Self {
        Self { samples, label }
    }

    pub fn channels(&self) -> usize {
        self.samples.ncols()
    }

    pub fn len(&self) -> usize {
        self.samples.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.nrows() == 0
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self::new(&self.samples * c, self.label)
    }

    /// One row per sample, comma separated. A non-numeric first row is taken
    /// as a header and skipped.
    pub fn read_csv<R: Read>(input: R, label: Class) -> Result<Self, NeuroError> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(input);
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let parsed: Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
            match parsed {
                Ok(row) => {
                    if let Some(first) = rows.first() {
                        if first.len() != row.len() {
                            return Err(NeuroError::Format(format!(
                                "row {} has {} columns, expected {}",
                                i + 1,
                                row.len(),
                                first.len()
                            )));
                        }
                    }
                    rows.push(row);
                }
                Err(_) if i == 0 => continue,
                Err(e) => return Err(NeuroError::Format(format!("row {}: {e}", i + 1))),
            }
        }
        if rows.is_empty() {
            return Err(NeuroError::Format("no samples".into()));
        }
        let d = rows[0].len();
        let samples = DMatrix::from_row_iterator(rows.len(), d, rows.into_iter().flatten());
        Ok(Self::new(samples, label))
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), NeuroError> {
        let mut w = csv::Writer::from_writer(out);
        let header: Vec<String> = (0..self.channels()).map(|c| format!("ch{c}")).collect();
        w.write_record(&header)?;
        for row in self.samples.row_iter() {
            w.write_record(row.iter().map(|v| v.to_string()))?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// Subtract the across-channel mean from every sample.
pub fn car_reference(block: &SignalBlock) -> SignalBlock {
    let mut samples = block.samples.clone();
    for mut row in samples.row_iter_mut() {
        let mean = row.mean();
        row.add_scalar_mut(-mean);
    }
    SignalBlock::new(samples, block.label)
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>, NeuroError> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(NeuroError::Format("ragged filter matrix".into()));
    }
    Ok(DMatrix::from_row_iterator(
        rows.len(),
        ncols,
        rows.iter().flatten().copied(),
    ))
}

/// Trained CSP filters. `filters` is the full `(d-1) × d` matrix `W`, rows
/// ordered by descending left-class eigenvalue; `selected` holds rows
/// `0, 1, d-3, d-2` of it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CspModel {
    pub channels: usize,
    pub filters: Vec<Vec<f64>>,
    pub selected: Vec<Vec<f64>>,
    pub eigenvalues_left: Vec<f64>,
    pub eigenvalues_right: Vec<f64>,
}

impl CspModel {
    pub fn filter_matrix(&self) -> DMatrix<f64> {
        from_rows(&self.filters).expect("filters are rectangular")
    }

    pub fn selected_matrix(&self) -> DMatrix<f64> {
        from_rows(&self.selected).expect("filters are rectangular")
    }
}

/// Intermediate products of CSP training, kept for inspection.
#[derive(Debug, Clone)]
pub struct CspFit {
    pub model: CspModel,
    pub cov_left: DMatrix<f64>,
    pub cov_right: DMatrix<f64>,
    /// `P = Λ^{-1/2} Uᵀ` over the retained eigenpairs of `C_l + C_r`.
    pub whitening: DMatrix<f64>,
}

impl CspFit {
    pub fn whitened_left(&self) -> DMatrix<f64> {
        &self.whitening * &self.cov_left * self.whitening.transpose()
    }

    pub fn whitened_right(&self) -> DMatrix<f64> {
        &self.whitening * &self.cov_right * self.whitening.transpose()
    }
}

/// Average of `XᵀX / tr(XᵀX)` over the blocks.
fn class_covariance(blocks: &[&SignalBlock], d: usize) -> Result<DMatrix<f64>, NeuroError> {
    let mut acc = DMatrix::zeros(d, d);
    for b in blocks {
        let xtx = b.samples.transpose() * &b.samples;
        let tr = xtx.trace();
        if !(tr > 0.0) {
            return Err(NeuroError::ZeroPower);
        }
        acc += xtx / tr;
    }
    Ok(acc / blocks.len() as f64)
}

/// Symmetric eigendecomposition with eigenpairs sorted by descending value.
fn sorted_eigen(m: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let SymmetricEigen {
        eigenvalues,
        eigenvectors,
    } = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eigenvalues[b].total_cmp(&eigenvalues[a]));
    let values = order.iter().map(|&i| eigenvalues[i]).collect();
    let vectors = DMatrix::from_columns(
        &order
            .iter()
            .map(|&i| eigenvectors.column(i).into_owned())
            .collect::<Vec<_>>(),
    );
    (values, vectors)
}

/// Train CSP on CAR-referenced blocks. The blocks' own labels are ignored;
/// class membership comes from which slice a block is in.
pub fn train_csp(left: &[SignalBlock], right: &[SignalBlock]) -> Result<CspModel, NeuroError> {
    train_csp_detailed(left, right).map(|f| f.model)
}

pub fn train_csp_detailed(
    left: &[SignalBlock],
    right: &[SignalBlock],
) -> Result<CspFit, NeuroError> {
    if left.is_empty() {
        return Err(NeuroError::EmptyClass(Class::Left));
    }
    if right.is_empty() {
        return Err(NeuroError::EmptyClass(Class::Right));
    }
    let d = left[0].channels();
    if d < FEATURES + 1 {
        return Err(NeuroError::TooFewChannels {
            need: FEATURES + 1,
            got: d,
        });
    }
    for b in left.iter().chain(right) {
        if b.channels() != d {
            return Err(NeuroError::ChannelMismatch {
                expected: d,
                got: b.channels(),
            });
        }
        if b.len() <= d {
            return Err(NeuroError::TooFewSamples {
                samples: b.len(),
                channels: d,
            });
        }
    }
    let cov_left = class_covariance(&left.iter().collect::<Vec<_>>(), d)?;
    let cov_right = class_covariance(&right.iter().collect::<Vec<_>>(), d)?;

    let (lambda, u) = sorted_eigen(&cov_left + &cov_right);
    let keep = d - 1;
    if let Some(pos) = lambda[..keep].iter().position(|&l| l <= EIGEN_FLOOR) {
        return Err(NeuroError::DegenerateData(format!(
            "composite covariance has only {pos} eigenvalues above {EIGEN_FLOOR}, need {keep}"
        )));
    }
    let mut whitening = u.columns(0, keep).transpose();
    for (i, mut row) in whitening.row_iter_mut().enumerate() {
        row /= lambda[i].sqrt();
    }

    let s_left = &whitening * &cov_left * whitening.transpose();
    let s_right = &whitening * &cov_right * whitening.transpose();
    let (eig_left, b) = sorted_eigen(s_left);
    let eig_right = (0..keep)
        .map(|i| {
            let v = b.column(i);
            (v.transpose() * &s_right * v)[(0, 0)]
        })
        .collect();
    let w = b.transpose() * &whitening;
    let rows = [0, 1, keep - 2, keep - 1];
    let selected = DMatrix::from_rows(&rows.map(|r| w.row(r).into_owned()));

    Ok(CspFit {
        model: CspModel {
            channels: d,
            filters: to_rows(&w),
            selected: to_rows(&selected),
            eigenvalues_left: eig_left,
            eigenvalues_right: eig_right,
        },
        cov_left,
        cov_right,
        whitening,
    })
}

/// Normalized log channel powers `ln(p_i / Σ p)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(pub [f64; FEATURES]);

impl FeatureVector {
    fn vector(&self) -> Vector4<f64> {
        Vector4::from(self.0)
    }
}

pub fn extract_features(block: &SignalBlock, csp: &CspModel) -> Result<FeatureVector, NeuroError> {
    if block.channels() != csp.channels {
        return Err(NeuroError::ChannelMismatch {
            expected: csp.channels,
            got: block.channels(),
        });
    }
    if block.is_empty() {
        return Err(NeuroError::ZeroPower);
    }
    let z = &block.samples * csp.selected_matrix().transpose();
    let t = block.len() as f64;
    let power: Vec<f64> = z.column_iter().map(|c| c.norm_squared() / t).collect();
    let total: f64 = power.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(NeuroError::ZeroPower);
    }
    let mut f = [0.0; FEATURES];
    for (fi, p) in f.iter_mut().zip(&power) {
        *fi = (p / total).ln();
    }
    Ok(FeatureVector(f))
}

/// Equal-prior two-class LDA: decide right when `μᵀf - τ ≥ 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LdaModel {
    pub weights: [f64; FEATURES],
    pub offset: f64,
    /// Ridge added to the pooled covariance, 0 when it was invertible as is.
    #[serde(default)]
    pub ridge: f64,
}

impl LdaModel {
    pub fn score(&self, f: &FeatureVector) -> f64 {
        Vector4::from(self.weights).dot(&f.vector()) - self.offset
    }

    pub fn classify(&self, f: &FeatureVector) -> Class {
        if self.score(f) >= 0.0 {
            Class::Right
        } else {
            Class::Left
        }
    }
}

/// Fit LDA with pooled within-class covariance. When that covariance is not
/// positive definite, `ridge · I` is added if a ridge is given.
pub fn train_lda(
    samples: &[(FeatureVector, Class)],
    ridge: Option<f64>,
) -> Result<LdaModel, NeuroError> {
    let mean_of = |class: Class| -> Result<(Vector4<f64>, usize), NeuroError> {
        let (sum, n) = samples
            .iter()
            .filter(|(_, c)| *c == class)
            .fold((Vector4::zeros(), 0), |(s, n), (f, _)| {
                (s + f.vector(), n + 1)
            });
        if n == 0 {
            return Err(NeuroError::EmptyClass(class));
        }
        Ok((sum / n as f64, n))
    };
    let (m_left, _) = mean_of(Class::Left)?;
    let (m_right, _) = mean_of(Class::Right)?;

    let mut scatter = Matrix4::zeros();
    for (f, c) in samples {
        let dev = f.vector() - if *c == Class::Left { m_left } else { m_right };
        scatter += dev * dev.transpose();
    }
    let dof = samples.len().saturating_sub(2).max(1) as f64;
    let pooled = scatter / dof;

    let diff = m_right - m_left;
    let (weights, used) = if well_conditioned(&pooled) {
        (solve_spd(pooled, &diff)?, 0.0)
    } else {
        let eps = ridge.ok_or(NeuroError::SingularCovariance)?;
        (solve_spd(pooled + Matrix4::identity() * eps, &diff)?, eps)
    };
    let offset = weights.dot(&((m_left + m_right) / 2.0));
    Ok(LdaModel {
        weights: weights.into(),
        offset,
        ridge: used,
    })
}

/// Relative eigenvalue gap below which a covariance counts as singular.
const CONDITION_FLOOR: f64 = 1e-12;

fn well_conditioned(m: &Matrix4<f64>) -> bool {
    let eig = m.symmetric_eigenvalues();
    let max = eig.max();
    max > 0.0 && eig.min() > CONDITION_FLOOR * max
}

fn solve_spd(m: Matrix4<f64>, rhs: &Vector4<f64>) -> Result<Vector4<f64>, NeuroError> {
    m.cholesky()
        .map(|ch| ch.solve(rhs))
        .ok_or(NeuroError::SingularCovariance)
}

/// `(2X - 1)(μᵀf - τ)`: positive when the classifier is confidently right,
/// negative when confidently wrong.
pub fn confidence_logratio(f: &FeatureVector, model: &LdaModel, truth: Class) -> f64 {
    (2.0 * truth.indicator() - 1.0) * model.score(f)
}

/// CSP and LDA together, with the documented JSON layout
/// `{"version": 1, "csp": {...}, "lda": {...}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuroModel {
    pub version: u32,
    pub csp: CspModel,
    pub lda: LdaModel,
}

impl NeuroModel {
    /// CAR-reference the raw blocks, train CSP, then LDA on the training
    /// features.
    pub fn train(blocks: &[SignalBlock], ridge: Option<f64>) -> Result<Self, NeuroError> {
        let referenced: Vec<SignalBlock> = blocks.iter().map(car_reference).collect();
        let (left, right): (Vec<SignalBlock>, Vec<SignalBlock>) = referenced
            .iter()
            .cloned()
            .partition(|b| b.label == Class::Left);
        let csp = train_csp(&left, &right)?;
        let feats = referenced
            .iter()
            .map(|b| Ok((extract_features(b, &csp)?, b.label)))
            .collect::<Result<Vec<_>, NeuroError>>()?;
        let lda = train_lda(&feats, ridge)?;
        Ok(Self {
            version: MODEL_VERSION,
            csp,
            lda,
        })
    }

    /// Features of a raw (unreferenced) block.
    pub fn features(&self, block: &SignalBlock) -> Result<FeatureVector, NeuroError> {
        extract_features(&car_reference(block), &self.csp)
    }

    pub fn classify(&self, block: &SignalBlock) -> Result<Class, NeuroError> {
        Ok(self.lda.classify(&self.features(block)?))
    }

    pub fn to_json(&self) -> Result<String, NeuroError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self, NeuroError> {
        let m: Self = serde_json::from_str(text)?;
        if m.version != MODEL_VERSION {
            return Err(NeuroError::Version(m.version));
        }
        from_rows(&m.csp.filters)?;
        if m.csp.selected.len() != FEATURES
            || m.csp.selected.iter().any(|r| r.len() != m.csp.channels)
        {
            return Err(NeuroError::Format(
                "selected filters must be 4 × channels".into(),
            ));
        }
        Ok(m)
    }
}

/// Two-class colored-noise generator. Each channel is an independent AR(1)
/// process; the left class has variance `gain` on channel 0, the right class
/// on channel 1, every other channel has unit variance.
///
/// `drift` in `[0, 1]` moves each class's pattern toward the other's: at 0.5
/// the classes are indistinguishable, at 1 they are swapped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSignals {
    pub channels: usize,
    pub samples: usize,
    pub gain: f64,
    pub ar: f64,
    pub drift: f64,
}

impl Default for SyntheticSignals {
    fn default() -> Self {
        Self {
            channels: 8,
            samples: 250,
            gain: 4.0,
            ar: 0.5,
            drift: 0.0,
        }
    }
}

impl SyntheticSignals {
    /// Per-channel variances for `class` under the current drift.
    pub fn variances(&self, class: Class) -> Vec<f64> {
        let hi = self.gain + (1.0 - self.gain) * self.drift;
        let lo = 1.0 + (self.gain - 1.0) * self.drift;
        let mut v = vec![1.0; self.channels];
        let (a, b) = match class {
            Class::Left => (0, 1),
            Class::Right => (1, 0),
        };
        v[a] = hi;
        v[b] = lo;
        v
    }

    /// A raw block; apply [`car_reference`] before CSP.
    pub fn block<R: Rng + ?Sized>(&self, class: Class, rng: &mut R) -> SignalBlock {
        let sd: Vec<f64> = self.variances(class).iter().map(|v| v.sqrt()).collect();
        let innov = (1.0 - self.ar * self.ar).sqrt();
        let mut state = DVector::<f64>::from_fn(self.channels, |_, _| rng.sample(StandardNormal));
        let mut samples = DMatrix::zeros(self.samples, self.channels);
        for t in 0..self.samples {
            for c in 0..self.channels {
                let e: f64 = rng.sample(StandardNormal);
                state[c] = self.ar * state[c] + innov * e;
                samples[(t, c)] = sd[c] * state[c];
            }
        }
        SignalBlock::new(samples, class)
    }

    /// `per_class` blocks of each class, alternating left and right.
    pub fn session<R: Rng + ?Sized>(&self, per_class: usize, rng: &mut R) -> Vec<SignalBlock> {
        (0..per_class)
            .flat_map(|_| [Class::Left, Class::Right])
            .map(|c| self.block(c, rng))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn training(seed: u64) -> (Vec<SignalBlock>, Vec<SignalBlock>) {
        let gen = SyntheticSignals::default();
        let blocks: Vec<SignalBlock> = gen
            .session(40, &mut rng(seed))
            .iter()
            .map(car_reference)
            .collect();
        blocks.into_iter().partition(|b| b.label == Class::Left)
    }

    #[test]
    fn car_examples() {
        let flat = SignalBlock::new(
            DMatrix::from_row_slice(2, 3, &[2.0, 2.0, 2.0, -1.0, -1.0, -1.0]),
            Class::Left,
        );
        assert!(car_reference(&flat).samples.iter().all(|&v| v == 0.0));
        let pair = SignalBlock::new(DMatrix::from_row_slice(1, 2, &[1.0, -1.0]), Class::Left);
        assert_eq!(car_reference(&pair), pair);
        let b = car_reference(&SyntheticSignals::default().block(Class::Right, &mut rng(1)));
        for row in b.samples.row_iter() {
            assert!(row.sum().abs() < 1e-12);
        }
    }

    #[test]
    fn whitened_classes_sum_to_identity() {
        let (l, r) = training(2);
        let fit = train_csp_detailed(&l, &r).unwrap();
        let sum = fit.whitened_left() + fit.whitened_right();
        let d = sum.nrows();
        assert!((sum - DMatrix::<f64>::identity(d, d)).amax() < 1e-8);
        for (a, b) in fit
            .model
            .eigenvalues_left
            .iter()
            .zip(&fit.model.eigenvalues_right)
        {
            assert!((a + b - 1.0).abs() < 1e-8);
        }
        assert_eq!(fit.model.filters.len(), 7);
        assert_eq!(fit.model.selected.len(), 4);
    }

    #[test]
    fn top_left_filter_separates_variance() {
        let (l, r) = training(3);
        let csp = train_csp(&l, &r).unwrap();
        let w = csp.selected_matrix();
        let var = |blocks: &[SignalBlock]| -> f64 {
            blocks
                .iter()
                .map(|b| (&b.samples * w.row(0).transpose()).norm_squared() / b.len() as f64)
                .sum::<f64>()
                / blocks.len() as f64
        };
        assert!(var(&l) / var(&r) > 2.0);
    }

    #[test]
    fn csp_input_checks() {
        let (l, r) = training(4);
        assert!(matches!(
            train_csp(&[], &r),
            Err(NeuroError::EmptyClass(Class::Left))
        ));
        let narrow = SyntheticSignals {
            channels: 4,
            ..Default::default()
        };
        let b = car_reference(&narrow.block(Class::Left, &mut rng(0)));
        assert!(matches!(
            train_csp(std::slice::from_ref(&b), std::slice::from_ref(&b)),
            Err(NeuroError::TooFewChannels { .. })
        ));
        // a channel that never moves leaves too few informative directions
        let mut dead = l.clone();
        let mut dead_r = r.clone();
        for b in dead.iter_mut().chain(dead_r.iter_mut()) {
            b.samples.column_mut(3).fill(0.0);
            b.samples.column_mut(4).fill(0.0);
            *b = car_reference(b);
        }
        assert!(matches!(
            train_csp(&dead, &dead_r),
            Err(NeuroError::DegenerateData(_))
        ));
    }

    #[test]
    fn features_are_log_proportions() {
        let (l, r) = training(5);
        let csp = train_csp(&l, &r).unwrap();
        let f = extract_features(&l[0], &csp).unwrap();
        assert!(f.0.iter().all(|&v| v <= 0.0));
        assert!((f.0.iter().map(|v| v.exp()).sum::<f64>() - 1.0).abs() < 1e-9);
        let g = extract_features(&l[0].scaled(-3.7), &csp).unwrap();
        for (a, b) in f.0.iter().zip(&g.0) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn equal_powers_give_quarter_logs() {
        let mut csp = train_csp(&training(6).0, &training(6).1).unwrap();
        let d = csp.channels;
        csp.selected = (0..4)
            .map(|i| (0..d).map(|c| if c == i { 1.0 } else { 0.0 }).collect())
            .collect();
        let mut x = DMatrix::zeros(4, d);
        for i in 0..4 {
            x[(i, i)] = 2.0;
        }
        let f = extract_features(&SignalBlock::new(x, Class::Left), &csp).unwrap();
        for v in f.0 {
            assert!((v - 0.25f64.ln()).abs() < 1e-12);
        }
        let zero = SignalBlock::new(DMatrix::zeros(10, d), Class::Left);
        assert!(matches!(
            extract_features(&zero, &csp),
            Err(NeuroError::ZeroPower)
        ));
    }

    #[test]
    fn left_blocks_load_the_left_filters() {
        let (l, r) = training(7);
        let csp = train_csp(&l, &r).unwrap();
        let share = |b: &SignalBlock| {
            let f = extract_features(b, &csp).unwrap().0;
            f[0].exp() + f[1].exp() - f[2].exp() - f[3].exp()
        };
        let test = SyntheticSignals::default();
        let mut g = rng(70);
        let left_mean: f64 = (0..50)
            .map(|_| share(&car_reference(&test.block(Class::Left, &mut g))))
            .sum::<f64>()
            / 50.0;
        let right_mean: f64 = (0..50)
            .map(|_| share(&car_reference(&test.block(Class::Right, &mut g))))
            .sum::<f64>()
            / 50.0;
        assert!(left_mean > 0.0 && right_mean < 0.0);
    }

    fn fv(v: [f64; 4]) -> FeatureVector {
        FeatureVector(v)
    }

    #[test]
    fn symmetric_lda_passes_through_origin() {
        let m = [1.0, -0.5, 0.25, 0.0];
        let neg = m.map(|v| -v);
        let jitter = [
            [0.1, 0.0, 0.0, 0.0],
            [0.0, 0.1, 0.0, 0.0],
            [0.0, 0.0, 0.1, 0.0],
            [0.0, 0.0, 0.0, 0.1],
        ];
        let mut data = Vec::new();
        for j in jitter {
            for s in [1.0, -1.0] {
                let off: [f64; 4] = std::array::from_fn(|i| s * j[i]);
                data.push((fv(std::array::from_fn(|i| m[i] + off[i])), Class::Right));
                data.push((fv(std::array::from_fn(|i| neg[i] + off[i])), Class::Left));
            }
        }
        let lda = train_lda(&data, None).unwrap();
        assert!(lda.offset.abs() < 1e-12);
        assert_eq!(lda.ridge, 0.0);
        assert_eq!(lda.classify(&fv(m)), Class::Right);
        assert_eq!(lda.classify(&fv(neg)), Class::Left);
    }

    #[test]
    fn separated_features_classify_well() {
        let mut g = rng(8);
        let mut draw = |class: Class| {
            let s = if class == Class::Right { 1.5 } else { -1.5 };
            let n: [f64; 4] = std::array::from_fn(|_| g.sample::<f64, _>(StandardNormal) * 0.5);
            (fv([s + n[0], n[1], -s + n[2], n[3]]), class)
        };
        let train: Vec<_> = (0..200)
            .map(|i| {
                draw(if i % 2 == 0 {
                    Class::Left
                } else {
                    Class::Right
                })
            })
            .collect();
        let test: Vec<_> = (0..400)
            .map(|i| {
                draw(if i % 2 == 0 {
                    Class::Left
                } else {
                    Class::Right
                })
            })
            .collect();
        let lda = train_lda(&train, Some(DEFAULT_RIDGE)).unwrap();
        let acc = test.iter().filter(|(f, c)| lda.classify(f) == *c).count() as f64 / 400.0;
        assert!(acc > 0.9, "{acc}");
    }

    #[test]
    fn duplicate_point_uses_ridge() {
        let a = fv([-1.0, -2.0, -2.0, -3.0]);
        let b = fv([-2.0, -1.0, -3.0, -2.0]);
        let dup = fv([-1.5, -1.5, -2.5, -2.5]);
        let data = [
            (a, Class::Left),
            (dup, Class::Left),
            (b, Class::Right),
            (dup, Class::Right),
        ];
        assert!(matches!(
            train_lda(&data, None),
            Err(NeuroError::SingularCovariance)
        ));
        let lda = train_lda(&data, Some(DEFAULT_RIDGE)).unwrap();
        assert_eq!(lda.ridge, DEFAULT_RIDGE);
        assert_eq!(lda.classify(&a), Class::Left);
        assert_eq!(lda.classify(&b), Class::Right);
        assert!(train_lda(&[(a, Class::Left)], Some(1e-6)).is_err());
    }

    #[test]
    fn logratio_signs() {
        let lda = LdaModel {
            weights: [1.0, 0.0, 0.0, 0.0],
            offset: -2.0,
            ridge: 0.0,
        };
        assert_eq!(
            confidence_logratio(&fv([-2.0, 0.0, 0.0, 0.0]), &lda, Class::Left),
            0.0
        );
        let f = fv([-0.5, -1.0, -1.0, -1.0]);
        assert_eq!(lda.classify(&f), Class::Right);
        assert_eq!(
            confidence_logratio(&f, &lda, Class::Right),
            lda.score(&f).abs()
        );
        assert!(confidence_logratio(&f, &lda, Class::Left) < 0.0);
    }

    #[test]
    fn logratio_declines_with_drift() {
        let model = NeuroModel::train(
            &SyntheticSignals::default().session(40, &mut rng(9)),
            Some(DEFAULT_RIDGE),
        )
        .unwrap();
        let mut prev = f64::INFINITY;
        for drift in [0.0, 0.25, 0.5, 0.75] {
            let gen = SyntheticSignals {
                drift,
                ..Default::default()
            };
            let blocks = gen.session(60, &mut rng(90));
            let mean = blocks
                .iter()
                .map(|b| confidence_logratio(&model.features(b).unwrap(), &model.lda, b.label))
                .sum::<f64>()
                / blocks.len() as f64;
            assert!(mean < prev, "drift {drift}: {mean} !< {prev}");
            prev = mean;
        }
    }

    #[test]
    fn model_json_round_trip() {
        let blocks = SyntheticSignals::default().session(20, &mut rng(10));
        let model = NeuroModel::train(&blocks, Some(DEFAULT_RIDGE)).unwrap();
        let back = NeuroModel::from_json(&model.to_json().unwrap()).unwrap();
        assert_eq!(back, model);
        let held = SyntheticSignals::default().session(50, &mut rng(11));
        let acc = held
            .iter()
            .filter(|b| model.classify(b).unwrap() == b.label)
            .count();
        assert!(acc > 80, "{acc}/100");
        let mut bad = model.clone();
        bad.version = 9;
        assert!(matches!(
            NeuroModel::from_json(&serde_json::to_string(&bad).unwrap()),
            Err(NeuroError::Version(9))
        ));
    }

    #[test]
    fn signal_csv_round_trip() {
        let b = SyntheticSignals {
            samples: 12,
            ..Default::default()
        }
        .block(Class::Right, &mut rng(12));
        let mut buf = Vec::new();
        b.write_csv(&mut buf).unwrap();
        let back = SignalBlock::read_csv(buf.as_slice(), Class::Right).unwrap();
        assert_eq!(back, b);
        let headless = SignalBlock::read_csv("1,2\n3,4\n".as_bytes(), Class::Left).unwrap();
        assert_eq!(
            headless.samples,
            DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0])
        );
        assert!(SignalBlock::read_csv("1,2\n3\n".as_bytes(), Class::Left).is_err());
        assert!(SignalBlock::read_csv("a,b\n1,x\n".as_bytes(), Class::Left).is_err());
    }
}
