//! Repeated random train/test splits comparing single-scale fits with one
//! multi-scale fit.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::RngCore;
use rayon::prelude::*;

use super::{argmax, class_probs, combined_score, f1_scores, kendall_tau_b, scores};
use crate::distributions::RandomStream;
use crate::error::{Error, Result};
use crate::model::{ChainConfig, Dataset};
use crate::sampler::{run_chains, DrawSet};
use crate::simulate::ModelKind;

/// Attempts at drawing a training set that contains every (scale, class).
pub const MAX_RESPLITS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct SplitSpec {
    /// Share of each scale's observations used for training.
    pub fraction: f64,
    pub num_splits: usize,
    pub chains: usize,
    /// Standardise features with training-set statistics.
    pub standardize: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Sample {
    In,
    Out,
}

impl fmt::Display for Sample {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sample::In => "in",
            Sample::Out => "out",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EvalMetric {
    F1Macro(Sample),
    TauB(Sample),
    /// Harmonic mean of macro F1 and τ_B clamped at 0.
    Harmonic(Sample),
    /// F1 of one 0-based class.
    F1Class(usize, Sample),
}

impl EvalMetric {
    /// Every metric reported for a scale with `num_classes` classes, in report order.
    pub fn for_scale(num_classes: usize) -> Vec<EvalMetric> {
        [Sample::In, Sample::Out]
            .into_iter()
            .flat_map(|s| {
                [EvalMetric::F1Macro(s), EvalMetric::TauB(s), EvalMetric::Harmonic(s)]
                    .into_iter()
                    .chain((0..num_classes).map(move |c| EvalMetric::F1Class(c, s)))
            })
            .collect()
    }
}

impl fmt::Display for EvalMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvalMetric::F1Macro(s) => write!(f, "f1_macro_{s}"),
            EvalMetric::TauB(s) => write!(f, "tau_b_{s}"),
            EvalMetric::Harmonic(s) => write!(f, "harmonic_{s}"),
            EvalMetric::F1Class(c, s) => write!(f, "f1_class{}_{s}", c + 1),
        }
    }
}

/// One metric value for one posterior draw.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricSample {
    pub split: usize,
    pub model: ModelKind,
    /// 0-based scale of the evaluated observations.
    pub scale: usize,
    pub metric: EvalMetric,
    pub draw: usize,
    pub value: f64,
}

/// Posterior-mean metric of the multi-scale fit minus that of the single-scale fit.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricDifference {
    pub split: usize,
    pub scale: usize,
    pub metric: EvalMetric,
    pub mean_multi: f64,
    pub mean_single: f64,
    pub diff: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvaluationReport {
    pub samples: Vec<MetricSample>,
    pub differences: Vec<MetricDifference>,
}

impl EvaluationReport {
    /// Share of splits where the multi-scale fit scored higher.
    pub fn multi_better_fraction(&self, scale: usize, metric: EvalMetric) -> f64 {
        let diffs: Vec<f64> = self
            .differences
            .iter()
            .filter(|d| d.scale == scale && d.metric == metric && !d.diff.is_nan())
            .map(|d| d.diff)
            .collect();
        diffs.iter().filter(|&&d| d > 0.0).count() as f64 / diffs.len() as f64
    }
}

/// Zero-mean, unit-variance column transform.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub means: DVector<f64>,
    pub sds: DVector<f64>,
}

impl Standardizer {
    /// Column means and (population) sds of `x`; constant columns keep scale 1.
    pub fn fit(x: &DMatrix<f64>) -> Result<Self> {
        let n = x.nrows();
        if n == 0 {
            return Err(Error::Empty);
        }
        let means = DVector::from_fn(x.ncols(), |j, _| x.column(j).mean());
        let sds = DVector::from_fn(x.ncols(), |j, _| {
            let m = means[j];
            let var = x.column(j).iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n as f64;
            if var > 0.0 { var.sqrt() } else { 1.0 }
        });
        Ok(Self { means, sds })
    }

    pub fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| (x[(i, j)] - self.means[j]) / self.sds[j])
    }
}

/// Runs `spec.num_splits` splits (concurrently), each on `rng.split(split)`.
/// Every split fits one single-scale model per scale and one multi-scale
/// model on its training rows, then scores every draw in and out of sample.
pub fn evaluate_splits(
    dataset: &Dataset,
    spec: &SplitSpec,
    config: &ChainConfig,
    rng: &RandomStream,
) -> Result<EvaluationReport> {
    if !(spec.fraction > 0.0 && spec.fraction < 1.0) {
        return Err(Error::Config(format!("split fraction must lie in (0, 1), got {}", spec.fraction)));
    }
    if spec.num_splits == 0 || spec.chains == 0 {
        return Err(Error::Config("num_splits and chains must be at least 1".into()));
    }
    config.validate(dataset)?;
    let outcomes: Vec<Result<EvaluationReport>> = (0..spec.num_splits)
        .into_par_iter()
        .map(|split| evaluate_one(dataset, spec, config, split, rng.split(split as u64)))
        .collect();
    let mut report = EvaluationReport::default();
    for outcome in outcomes {
        let part = outcome?;
        report.samples.extend(part.samples);
        report.differences.extend(part.differences);
    }
    Ok(report)
}

/// Training rows per scale (sorted), keeping every class of every scale.
fn draw_split(dataset: &Dataset, fraction: f64, rng: &mut RandomStream) -> Result<Vec<bool>> {
    let mut starved = (0, 0);
    for _ in 0..MAX_RESPLITS {
        let mut train = vec![false; dataset.n()];
        let mut ok = true;
        for s in 0..dataset.num_scales() {
            let mut members = dataset.members(s).to_vec();
            let size = members.len();
            if size < 2 {
                return Err(Error::Stratification(format!(
                    "scale {} has {size} observation(s); a split needs at least 2",
                    s + 1
                )));
            }
            let take = ((fraction * size as f64).round() as usize).clamp(1, size - 1);
            members.shuffle(rng);
            let mut seen = vec![false; dataset.scales()[s].num_classes()];
            for &i in &members[..take] {
                train[i] = true;
                seen[dataset.class(i)] = true;
            }
            if let Some(c) = seen.iter().position(|&v| !v) {
                ok = false;
                starved = (s, c);
            }
        }
        if ok {
            return Ok(train);
        }
    }
    Err(Error::Stratification(format!(
        "after {MAX_RESPLITS} attempts the training split still misses class {} of scale {}",
        starved.1 + 1,
        starved.0 + 1
    )))
}

fn evaluate_one(
    dataset: &Dataset,
    spec: &SplitSpec,
    config: &ChainConfig,
    split: usize,
    mut rng: RandomStream,
) -> Result<EvaluationReport> {
    let is_train = draw_split(dataset, spec.fraction, &mut rng)?;
    let train_rows: Vec<usize> = (0..dataset.n()).filter(|&i| is_train[i]).collect();

    let data = if spec.standardize {
        let transform = Standardizer::fit(&dataset.features().select_rows(&train_rows))?;
        dataset.with_features(transform.apply(dataset.features()))?
    } else {
        dataset.clone()
    };
    let train = data.subset(&train_rows);

    let scales = dataset.num_scales();
    let mut single_fits = Vec::with_capacity(scales);
    for s in 0..scales {
        let mut single = config.clone().with_seed(rng.next_u64());
        single.proposal_sd = vec![config.proposal_sd[s]];
        single.init_gammas = config.init_gammas.as_ref().map(|g| vec![g[s].clone()]);
        let draws = run_chains(&train.single_scale(s), &single, spec.chains)
            .map_err(|e| Error::Simulation(format!("split {split}, single-scale fit {}: {e}", s + 1)))?;
        single_fits.push(draws);
    }
    let multi = run_chains(&train, &config.clone().with_seed(rng.next_u64()), spec.chains)
        .map_err(|e| Error::Simulation(format!("split {split}, multi-scale fit: {e}")))?;

    let mut report = EvaluationReport::default();
    for s in 0..scales {
        let num_classes = dataset.scales()[s].num_classes();
        let metrics = EvalMetric::for_scale(num_classes);
        let mut means = Vec::with_capacity(2);
        for (model, draws, j) in [(ModelKind::Single(s), &single_fits[s], 0), (ModelKind::Multi, &multi, s)] {
            let values = score_draws(&data, &is_train, s, draws, j)?;
            let mut sums = vec![0.0; metrics.len()];
            for (m, metric) in metrics.iter().enumerate() {
                for (d, row) in values.iter().enumerate() {
                    let value = row[m];
                    sums[m] += value;
                    report.samples.push(MetricSample { split, model, scale: s, metric: *metric, draw: d, value });
                }
            }
            means.push(sums.into_iter().map(|t| t / values.len() as f64).collect::<Vec<_>>());
        }
        for (m, metric) in metrics.iter().enumerate() {
            let (single, multi) = (means[0][m], means[1][m]);
            report.differences.push(MetricDifference {
                split,
                scale: s,
                metric: *metric,
                mean_multi: multi,
                mean_single: single,
                diff: multi - single,
            });
        }
    }
    Ok(report)
}

/// Metric values per draw, in [`EvalMetric::for_scale`] order, for the
/// observations of scale `s` using the fit's threshold vector `j`.
fn score_draws(data: &Dataset, is_train: &[bool], s: usize, draws: &DrawSet, j: usize) -> Result<Vec<Vec<f64>>> {
    let num_classes = data.scales()[s].num_classes();
    let parts: Vec<(DMatrix<f64>, Vec<usize>)> = [true, false]
        .into_iter()
        .map(|in_sample| {
            let rows: Vec<usize> = data.members(s).iter().copied().filter(|&i| is_train[i] == in_sample).collect();
            let actual = rows.iter().map(|&i| data.class(i)).collect();
            (data.features().select_rows(&rows), actual)
        })
        .collect();

    draws
        .draws
        .iter()
        .map(|draw| {
            let mut row = Vec::with_capacity(2 * (3 + num_classes));
            for (x, actual) in &parts {
                let eta = scores(draw, x);
                let predicted: Vec<usize> = eta.iter().map(|&e| argmax(&class_probs(&draw.gammas[j], e))).collect();
                let f1 = f1_scores(&predicted, actual, num_classes)?;
                let labels: Vec<f64> = actual.iter().map(|&c| c as f64).collect();
                let tau = match kendall_tau_b(eta.as_slice(), &labels) {
                    Ok(t) => t,
                    Err(Error::UndefinedCorrelation(_)) => f64::NAN,
                    Err(e) => return Err(e),
                };
                row.extend([f1.macro_f1, tau, combined_score(f1.macro_f1, tau)]);
                row.extend(f1.per_class);
            }
            Ok(row)
        })
        .collect()
}
