//! Datasets, scales, parameter draws and chain configuration.
//!
//! Labels and scale ids are 1-based wherever they cross the crate boundary
//! (`RawDataset`, [`Dataset::label`], [`Dataset::scale_id`]); internally a
//! class or scale is its 0-based index.

use nalgebra::{DMatrix, DVector};

use crate::distributions::{std_normal_quantile, PrecisionFactor};
use crate::error::{Error, Result, ValidationReport, Violation};

/// Minimum gap enforced between initial thresholds.
const INIT_THRESHOLD_SPREAD: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScaleSpec {
    num_classes: usize,
}

impl ScaleSpec {
    pub fn new(num_classes: usize) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::Config(format!(
                "a scale needs at least 2 classes, got {num_classes}"
            )));
        }
        Ok(Self { num_classes })
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn num_thresholds(&self) -> usize {
        self.num_classes - 1
    }
}

/// Unvalidated dataset as read from disk: 1-based labels and scale ids.
#[derive(Debug, Clone, Default)]
pub struct RawDataset {
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<i64>,
    pub scale_ids: Vec<i64>,
    pub scales: Vec<ScaleSpec>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ValidationOptions {
    /// Accept feature columns that are zero in every row.
    pub allow_zero_columns: bool,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    features: DMatrix<f64>,
    classes: Vec<usize>,
    scale_of: Vec<usize>,
    scales: Vec<ScaleSpec>,
    members: Vec<Vec<usize>>,
}

/// Checks every dataset invariant and reports all violations at once.
pub fn validate_dataset(raw: RawDataset, options: ValidationOptions) -> Result<Dataset> {
    let mut report = ValidationReport::default();
    let n = raw.rows.len();
    if n == 0 {
        report.violations.push(Violation::NoRows);
        return Err(Error::Validation(report));
    }
    for (what, len) in [("labels", raw.labels.len()), ("scale ids", raw.scale_ids.len())] {
        if len != n {
            report.violations.push(Violation::LengthMismatch { what, expected: n, found: len });
        }
    }
    if !report.is_empty() {
        return Err(Error::Validation(report));
    }

    let p = raw.rows[0].len();
    let mut classes = Vec::with_capacity(n);
    let mut scale_of = Vec::with_capacity(n);
    for (i, row) in raw.rows.iter().enumerate() {
        if row.len() != p {
            report.violations.push(Violation::RowLength { row: i, expected: p, found: row.len() });
        }
        if let Some(column) = row.iter().position(|v| !v.is_finite()) {
            report.violations.push(Violation::NonFinite { row: i, column });
        }
        let scale_id = raw.scale_ids[i];
        let label = raw.labels[i];
        match usize::try_from(scale_id - 1).ok().and_then(|s| raw.scales.get(s).map(|spec| (s, spec))) {
            None => report.violations.push(Violation::UnknownScale { row: i, scale_id }),
            Some((s, spec)) => {
                if label < 1 || label as usize > spec.num_classes {
                    report.violations.push(Violation::LabelOutOfRange {
                        row: i,
                        scale_id,
                        label,
                        num_classes: spec.num_classes,
                    });
                } else {
                    classes.push(label as usize - 1);
                    scale_of.push(s);
                }
            }
        }
    }
    if report.is_empty() && !options.allow_zero_columns {
        for column in 0..p {
            if raw.rows.iter().all(|r| r[column] == 0.0) {
                report.violations.push(Violation::ZeroColumn { column });
            }
        }
    }
    if !report.is_empty() {
        return Err(Error::Validation(report));
    }

    let features = DMatrix::from_fn(n, p, |i, j| raw.rows[i][j]);
    Ok(Dataset::assemble(features, classes, scale_of, raw.scales))
}

impl Dataset {
    /// Builds a dataset from 0-based classes and scale indices.
    pub fn from_parts(
        features: DMatrix<f64>,
        classes: Vec<usize>,
        scale_of: Vec<usize>,
        scales: Vec<ScaleSpec>,
    ) -> Result<Self> {
        let n = features.nrows();
        let mut report = ValidationReport::default();
        if n == 0 {
            report.violations.push(Violation::NoRows);
        }
        for (what, len) in [("classes", classes.len()), ("scale indices", scale_of.len())] {
            if len != n {
                report.violations.push(Violation::LengthMismatch { what, expected: n, found: len });
            }
        }
        if report.is_empty() {
            for i in 0..n {
                match scales.get(scale_of[i]) {
                    None => report.violations.push(Violation::UnknownScale {
                        row: i,
                        scale_id: scale_of[i] as i64 + 1,
                    }),
                    Some(spec) if classes[i] >= spec.num_classes => {
                        report.violations.push(Violation::LabelOutOfRange {
                            row: i,
                            scale_id: scale_of[i] as i64 + 1,
                            label: classes[i] as i64 + 1,
                            num_classes: spec.num_classes,
                        })
                    }
                    Some(_) => {}
                }
            }
        }
        if !report.is_empty() {
            return Err(Error::Validation(report));
        }
        Ok(Self::assemble(features, classes, scale_of, scales))
    }

    fn assemble(features: DMatrix<f64>, classes: Vec<usize>, scale_of: Vec<usize>, scales: Vec<ScaleSpec>) -> Self {
        let mut members = vec![Vec::new(); scales.len()];
        for (i, &s) in scale_of.iter().enumerate() {
            members[s].push(i);
        }
        Self { features, classes, scale_of, scales, members }
    }

    pub fn n(&self) -> usize {
        self.features.nrows()
    }

    pub fn p(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    /// Feature vector of observation `i`.
    pub fn row(&self, i: usize) -> DVector<f64> {
        self.features.row(i).transpose()
    }

    /// 0-based class index of observation `i`.
    pub fn class(&self, i: usize) -> usize {
        self.classes[i]
    }

    /// 0-based scale index of observation `i`.
    pub fn scale(&self, i: usize) -> usize {
        self.scale_of[i]
    }

    /// 1-based label of observation `i`.
    pub fn label(&self, i: usize) -> usize {
        self.classes[i] + 1
    }

    /// 1-based scale id of observation `i`.
    pub fn scale_id(&self, i: usize) -> usize {
        self.scale_of[i] + 1
    }

    pub fn classes(&self) -> &[usize] {
        &self.classes
    }

    pub fn scales(&self) -> &[ScaleSpec] {
        &self.scales
    }

    pub fn num_scales(&self) -> usize {
        self.scales.len()
    }

    /// Observation indices on scale `s`, in row order.
    pub fn members(&self, s: usize) -> &[usize] {
        &self.members[s]
    }

    pub fn class_counts(&self, s: usize) -> Vec<usize> {
        let mut counts = vec![0; self.scales[s].num_classes];
        for &i in &self.members[s] {
            counts[self.classes[i]] += 1;
        }
        counts
    }

    /// Rows `indices` (in that order), keeping every declared scale.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let features = self.features.select_rows(indices);
        let classes = indices.iter().map(|&i| self.classes[i]).collect();
        let scale_of = indices.iter().map(|&i| self.scale_of[i]).collect();
        Self::assemble(features, classes, scale_of, self.scales.clone())
    }

    /// The rows of scale `s` as a standalone single-scale dataset.
    pub fn single_scale(&self, s: usize) -> Dataset {
        let rows = &self.members[s];
        let features = self.features.select_rows(rows);
        let classes = rows.iter().map(|&i| self.classes[i]).collect();
        Self::assemble(features, classes, vec![0; rows.len()], vec![self.scales[s]])
    }

    /// Same rows and labels with replaced features (e.g. standardised).
    pub fn with_features(&self, features: DMatrix<f64>) -> Result<Dataset> {
        if features.shape() != self.features.shape() {
            return Err(Error::LengthMismatch { left: features.nrows(), right: self.n() });
        }
        Ok(Self { features, ..self.clone() })
    }
}

/// `(γ_{c-1}, γ_c)` for 0-based class `c`, with open outer boundaries.
pub fn class_bounds(gammas: &[f64], class: usize) -> (f64, f64) {
    let lower = if class == 0 { f64::NEG_INFINITY } else { gammas[class - 1] };
    let upper = gammas.get(class).copied().unwrap_or(f64::INFINITY);
    (lower, upper)
}

pub fn strictly_increasing(values: &[f64]) -> bool {
    values.iter().all(|v| v.is_finite()) && values.windows(2).all(|w| w[0] < w[1])
}

/// One posterior draw: coefficients plus one threshold vector per scale.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamDraw {
    pub beta: DVector<f64>,
    pub gammas: Vec<Vec<f64>>,
}

impl ParamDraw {
    pub fn new(beta: DVector<f64>, gammas: Vec<Vec<f64>>) -> Result<Self> {
        let draw = Self { beta, gammas };
        draw.check()?;
        Ok(draw)
    }

    pub fn check(&self) -> Result<()> {
        for (s, g) in self.gammas.iter().enumerate() {
            if !strictly_increasing(g) {
                return Err(Error::Domain(format!(
                    "thresholds for scale {} are not strictly increasing: {g:?}",
                    s + 1
                )));
            }
        }
        if self.beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::Domain("coefficient vector is not finite".into()));
        }
        Ok(())
    }

    pub fn fits(&self, p: usize, scales: &[ScaleSpec]) -> bool {
        self.beta.len() == p
            && self.gammas.len() == scales.len()
            && self.gammas.iter().zip(scales).all(|(g, s)| g.len() == s.num_thresholds())
    }

    /// Linear predictor xᵀβ.
    pub fn score(&self, x: &DVector<f64>) -> f64 {
        x.dot(&self.beta)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatentState {
    pub y_star: Vec<f64>,
}

impl LatentState {
    /// Every latent value lies strictly inside its label's interval.
    pub fn is_consistent(&self, gammas: &[Vec<f64>], dataset: &Dataset) -> bool {
        self.y_star.len() == dataset.n()
            && self.y_star.iter().enumerate().all(|(i, &y)| {
                let (lo, hi) = class_bounds(&gammas[dataset.scale(i)], dataset.class(i));
                lo < y && y < hi
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PriorPrecision {
    ScaledIdentity(f64),
    Dense(DMatrix<f64>),
}

/// Normal prior on β given by its mean and precision.
#[derive(Debug, Clone, PartialEq)]
pub struct Prior {
    mean: DVector<f64>,
    precision: PriorPrecision,
}

impl Prior {
    pub fn isotropic(p: usize, precision: f64) -> Result<Self> {
        Self::new(DVector::zeros(p), PriorPrecision::ScaledIdentity(precision))
    }

    pub fn new(mean: DVector<f64>, precision: PriorPrecision) -> Result<Self> {
        match &precision {
            PriorPrecision::ScaledIdentity(v) => {
                if !(*v > 0.0 && v.is_finite()) {
                    return Err(Error::Config(format!("prior precision must be positive, got {v}")));
                }
            }
            PriorPrecision::Dense(m) => {
                if m.nrows() != mean.len() {
                    return Err(Error::LengthMismatch { left: m.nrows(), right: mean.len() });
                }
                if (m - m.transpose()).abs().max() > 1e-12 * m.abs().max() {
                    return Err(Error::Config("prior precision is not symmetric".into()));
                }
                PrecisionFactor::new(m)?;
            }
        }
        Ok(Self { mean, precision })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn precision(&self) -> &PriorPrecision {
        &self.precision
    }

    pub fn precision_matrix(&self) -> DMatrix<f64> {
        match &self.precision {
            PriorPrecision::ScaledIdentity(v) => DMatrix::identity(self.dim(), self.dim()) * *v,
            PriorPrecision::Dense(m) => m.clone(),
        }
    }

    /// Λ₀ μ₀.
    pub fn precision_times_mean(&self) -> DVector<f64> {
        match &self.precision {
            PriorPrecision::ScaledIdentity(v) => &self.mean * *v,
            PriorPrecision::Dense(m) => m * &self.mean,
        }
    }
}

/// Everything one chain needs besides the data.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainConfig {
    pub prior: Prior,
    /// Standard deviation of the threshold proposal, per scale.
    pub proposal_sd: Vec<f64>,
    pub burn_in: usize,
    pub thinning: usize,
    pub stored_draws: usize,
    pub seed: u64,
    /// `None` means [`default_init`].
    pub init_beta: Option<DVector<f64>>,
    pub init_gammas: Option<Vec<Vec<f64>>>,
    /// Variance of an independent normal prior on each threshold (restricted
    /// to the ordered region). `None` is the flat prior on the ordered region.
    pub gamma_prior_variance: Option<f64>,
}

impl ChainConfig {
    pub const DEFAULT_BURN_IN: usize = 50_000;
    pub const DEFAULT_THINNING: usize = 100;
    pub const DEFAULT_STORED_DRAWS: usize = 500;

    pub fn new(prior: Prior, proposal_sd: Vec<f64>) -> Self {
        Self {
            prior,
            proposal_sd,
            burn_in: Self::DEFAULT_BURN_IN,
            thinning: Self::DEFAULT_THINNING,
            stored_draws: Self::DEFAULT_STORED_DRAWS,
            seed: 0,
            init_beta: None,
            init_gammas: None,
            gamma_prior_variance: None,
        }
    }

    pub fn with_schedule(mut self, burn_in: usize, thinning: usize, stored_draws: usize) -> Self {
        self.burn_in = burn_in;
        self.thinning = thinning;
        self.stored_draws = stored_draws;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn total_sweeps(&self) -> usize {
        self.burn_in + self.thinning * self.stored_draws
    }

    /// Checks the configuration against the dataset it will be run on.
    pub fn validate(&self, dataset: &Dataset) -> Result<()> {
        if self.thinning == 0 {
            return Err(Error::Config("thinning must be at least 1".into()));
        }
        if self.stored_draws == 0 {
            return Err(Error::Config("stored_draws must be at least 1".into()));
        }
        if self.prior.dim() != dataset.p() {
            return Err(Error::Config(format!(
                "prior has dimension {} but the data has {} features",
                self.prior.dim(),
                dataset.p()
            )));
        }
        if self.proposal_sd.len() != dataset.num_scales() {
            return Err(Error::Config(format!(
                "{} proposal scales given for {} data scales",
                self.proposal_sd.len(),
                dataset.num_scales()
            )));
        }
        if let Some(bad) = self.proposal_sd.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
            return Err(Error::Config(format!("proposal sd must be positive, got {bad}")));
        }
        if let Some(v) = self.gamma_prior_variance {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("threshold prior variance must be positive, got {v}")));
            }
        }
        if let Some(beta) = &self.init_beta {
            if beta.len() != dataset.p() {
                return Err(Error::Config("initial beta has the wrong length".into()));
            }
        }
        if let Some(gammas) = &self.init_gammas {
            if gammas.len() != dataset.num_scales()
                || gammas.iter().zip(dataset.scales()).any(|(g, s)| g.len() != s.num_thresholds())
            {
                return Err(Error::Config("initial thresholds do not match the scales".into()));
            }
            if let Some(s) = gammas.iter().position(|g| !strictly_increasing(g)) {
                return Err(Error::Config(format!(
                    "initial thresholds for scale {} are not strictly increasing",
                    s + 1
                )));
            }
        }
        Ok(())
    }

    /// Initial (β, γ): configured values where given, [`default_init`] otherwise.
    pub fn initial_state(&self, dataset: &Dataset) -> Result<(DVector<f64>, Vec<Vec<f64>>)> {
        let (beta, gammas) = match (&self.init_beta, &self.init_gammas) {
            (Some(b), Some(g)) => return Ok((b.clone(), g.clone())),
            _ => default_init(dataset, &self.prior)?,
        };
        Ok((
            self.init_beta.clone().unwrap_or(beta),
            self.init_gammas.clone().unwrap_or(gammas),
        ))
    }
}

/// β at the prior mean; thresholds at the normal quantiles of the empirical
/// cumulative class frequencies of each scale.
pub fn default_init(dataset: &Dataset, prior: &Prior) -> Result<(DVector<f64>, Vec<Vec<f64>>)> {
    let mut gammas = Vec::with_capacity(dataset.num_scales());
    for s in 0..dataset.num_scales() {
        let counts = dataset.class_counts(s);
        if let Some(empty) = counts.iter().position(|&c| c == 0) {
            return Err(Error::Init(format!(
                "scale {} has no observations in class {}; supply initial thresholds \
                 (e.g. evenly spaced on [-1, 1], see `fallback_thresholds`)",
                s + 1,
                empty + 1
            )));
        }
        let total: usize = counts.iter().sum();
        let mut cumulative = 0;
        let mut g = Vec::with_capacity(counts.len() - 1);
        for &count in &counts[..counts.len() - 1] {
            cumulative += count;
            let mut q = std_normal_quantile(cumulative as f64 / total as f64)?;
            if let Some(&prev) = g.last() {
                q = f64::max(q, prev + INIT_THRESHOLD_SPREAD);
            }
            g.push(q);
        }
        gammas.push(g);
    }
    Ok((prior.mean().clone(), gammas))
}

/// Evenly spaced thresholds on [-1, 1].
pub fn fallback_thresholds(num_classes: usize) -> Vec<f64> {
    let k = num_classes - 1;
    if k == 1 {
        return vec![0.0];
    }
    (0..k).map(|c| -1.0 + 2.0 * c as f64 / (k - 1) as f64).collect()
}
