//! Posterior prediction and per-draw classification and ranking metrics.

mod evaluate;

use nalgebra::{DMatrix, DVector};

pub use evaluate::{
    evaluate_splits, EvalMetric, EvaluationReport, MetricDifference, MetricSample, Sample, SplitSpec, Standardizer,
    MAX_RESPLITS,
};

use crate::distributions::normal::interval_mass;
use crate::error::{Error, Result};
use crate::model::ParamDraw;
use crate::sampler::DrawSet;

/// Class probabilities of `x` on 0-based scale `scale` under one draw.
pub fn predict_class_probs(draw: &ParamDraw, x: &DVector<f64>, scale: usize) -> Result<Vec<f64>> {
    if x.len() != draw.beta.len() {
        return Err(Error::LengthMismatch { left: x.len(), right: draw.beta.len() });
    }
    let gammas = draw
        .gammas
        .get(scale)
        .ok_or_else(|| Error::Domain(format!("draw has {} scales, asked for scale {}", draw.gammas.len(), scale + 1)))?;
    Ok(class_probs(gammas, draw.score(x)))
}

pub(crate) fn class_probs(gammas: &[f64], eta: f64) -> Vec<f64> {
    let num_classes = gammas.len() + 1;
    (0..num_classes)
        .map(|c| {
            let lower = if c == 0 { f64::NEG_INFINITY } else { gammas[c - 1] - eta };
            let upper = if c == gammas.len() { f64::INFINITY } else { gammas[c] - eta };
            interval_mass(lower, upper)
        })
        .collect()
}

/// Most probable 0-based class; ties go to the lower class.
pub fn classify(draw: &ParamDraw, x: &DVector<f64>, scale: usize) -> Result<usize> {
    Ok(argmax(&predict_class_probs(draw, x, scale)?))
}

pub(crate) fn argmax(probs: &[f64]) -> usize {
    let mut best = 0;
    for (c, &p) in probs.iter().enumerate().skip(1) {
        if p > probs[best] {
            best = c;
        }
    }
    best
}

/// Counts indexed `[actual][predicted]`, 0-based classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(predicted: &[usize], actual: &[usize], num_classes: usize) -> Result<Self> {
        if predicted.len() != actual.len() {
            return Err(Error::LengthMismatch { left: predicted.len(), right: actual.len() });
        }
        if predicted.is_empty() {
            return Err(Error::Empty);
        }
        let mut counts = vec![vec![0; num_classes]; num_classes];
        for (&p, &a) in predicted.iter().zip(actual) {
            if p >= num_classes || a >= num_classes {
                return Err(Error::Domain(format!("class {} outside 1..={num_classes}", p.max(a) + 1)));
            }
            counts[a][p] += 1;
        }
        Ok(Self { counts })
    }

    pub fn num_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn get(&self, actual: usize, predicted: usize) -> u64 {
        self.counts[actual][predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn true_positives(&self, c: usize) -> u64 {
        self.counts[c][c]
    }

    /// Everything predicted as `c`.
    pub fn predicted(&self, c: usize) -> u64 {
        self.counts.iter().map(|row| row[c]).sum()
    }

    /// Everything actually in `c`.
    pub fn actual(&self, c: usize) -> u64 {
        self.counts[c].iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct F1Scores {
    pub per_class: Vec<f64>,
    /// Unweighted mean of `per_class`.
    pub macro_f1: f64,
    /// Classes never predicted or never present, scored 0 by convention.
    pub degenerate: Vec<bool>,
}

/// Per-class F1 on 0-based labels. A class with no predictions or no
/// actual members scores 0.
pub fn f1_scores(predicted: &[usize], actual: &[usize], num_classes: usize) -> Result<F1Scores> {
    let cm = ConfusionMatrix::new(predicted, actual, num_classes)?;
    Ok(f1_from_confusion(&cm))
}

pub fn f1_from_confusion(cm: &ConfusionMatrix) -> F1Scores {
    let k = cm.num_classes();
    let mut per_class = Vec::with_capacity(k);
    let mut degenerate = Vec::with_capacity(k);
    for c in 0..k {
        let tp = cm.true_positives(c) as f64;
        let (predicted, actual) = (cm.predicted(c), cm.actual(c));
        if predicted == 0 || actual == 0 {
            per_class.push(0.0);
            degenerate.push(true);
            continue;
        }
        let precision = tp / predicted as f64;
        let recall = tp / actual as f64;
        per_class.push(if tp == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) });
        degenerate.push(false);
    }
    let macro_f1 = per_class.iter().sum::<f64>() / k as f64;
    F1Scores { per_class, macro_f1, degenerate }
}

/// Pair counts behind τ_B.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairCounts {
    pub pairs: u64,
    /// Pairs tied in `a`, and in `b`.
    pub ties_a: u64,
    pub ties_b: u64,
    /// Concordant minus discordant pairs.
    pub score: i64,
}

impl PairCounts {
    pub fn tau_b(&self) -> Result<f64> {
        let da = self.pairs - self.ties_a;
        let db = self.pairs - self.ties_b;
        if da == 0 || db == 0 {
            return Err(Error::UndefinedCorrelation(format!(
                "every pair is tied in {}",
                if da == 0 { "the first vector" } else { "the second vector" }
            )));
        }
        Ok(self.score as f64 / ((da as f64) * (db as f64)).sqrt())
    }
}

/// Kendall's τ_B in O(n log n) (Knight's merge-sort counting).
pub fn kendall_tau_b(a: &[f64], b: &[f64]) -> Result<f64> {
    pair_counts(a, b)?.tau_b()
}

pub fn pair_counts(a: &[f64], b: &[f64]) -> Result<PairCounts> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch { left: a.len(), right: b.len() });
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::UndefinedCorrelation(format!("need at least two observations, got {n}")));
    }
    if a.iter().chain(b).any(|v| v.is_nan()) {
        return Err(Error::Domain("NaN in rank correlation input".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[i].total_cmp(&a[j]).then(b[i].total_cmp(&b[j])));

    let tied_pairs = |run: u64| run * (run - 1) / 2;
    let (mut ties_a, mut ties_joint) = (0u64, 0u64);
    let (mut run_a, mut run_joint) = (1u64, 1u64);
    for w in order.windows(2) {
        let (i, j) = (w[0], w[1]);
        if a[i] == a[j] {
            run_a += 1;
            if b[i] == b[j] {
                run_joint += 1;
            } else {
                ties_joint += tied_pairs(run_joint);
                run_joint = 1;
            }
        } else {
            ties_a += tied_pairs(run_a);
            ties_joint += tied_pairs(run_joint);
            run_a = 1;
            run_joint = 1;
        }
    }
    ties_a += tied_pairs(run_a);
    ties_joint += tied_pairs(run_joint);

    let mut values: Vec<f64> = order.iter().map(|&i| b[i]).collect();
    let swaps = merge_count(&mut values);

    let mut ties_b = 0u64;
    let mut run_b = 1u64;
    for w in values.windows(2) {
        if w[0] == w[1] {
            run_b += 1;
        } else {
            ties_b += tied_pairs(run_b);
            run_b = 1;
        }
    }
    ties_b += tied_pairs(run_b);

    let pairs = tied_pairs(n as u64);
    let score = pairs as i64 - ties_a as i64 - ties_b as i64 + ties_joint as i64 - 2 * swaps as i64;
    Ok(PairCounts { pairs, ties_a, ties_b, score })
}

/// Sorts `v` and returns the number of strict inversions.
fn merge_count(v: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = merge_count(&mut v[..mid]) + merge_count(&mut v[mid..]);
    let mut merged = Vec::with_capacity(n);
    let (mut i, mut j) = (0, mid);
    while i < mid && j < n {
        if v[j] < v[i] {
            swaps += (mid - i) as u64;
            merged.push(v[j]);
            j += 1;
        } else {
            merged.push(v[i]);
            i += 1;
        }
    }
    merged.extend_from_slice(&v[i..mid]);
    merged.extend_from_slice(&v[j..]);
    v.copy_from_slice(&merged);
    swaps
}

/// Posterior mean of xᵀβ.
pub fn rank_score(draws: &DrawSet, x: &DVector<f64>) -> Result<f64> {
    let per_draw = rank_scores_per_draw(draws, x)?;
    Ok(per_draw.iter().sum::<f64>() / per_draw.len() as f64)
}

/// xᵀβ for every draw.
pub fn rank_scores_per_draw(draws: &DrawSet, x: &DVector<f64>) -> Result<Vec<f64>> {
    if draws.is_empty() {
        return Err(Error::Empty);
    }
    draws
        .draws
        .iter()
        .map(|d| {
            if d.beta.len() != x.len() {
                return Err(Error::LengthMismatch { left: x.len(), right: d.beta.len() });
            }
            Ok(d.score(x))
        })
        .collect()
}

/// Rank scores of every row of `x` (one row per observation) under one draw.
pub(crate) fn scores(draw: &ParamDraw, x: &DMatrix<f64>) -> DVector<f64> {
    x * &draw.beta
}

/// 2ab / (a + b), and 0 when both are 0.
pub fn harmonic_mean(a: f64, b: f64) -> Result<f64> {
    if !(a >= 0.0 && b >= 0.0) {
        return Err(Error::Domain(format!("harmonic mean needs non-negative inputs, got {a} and {b}")));
    }
    if a + b == 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * a * b / (a + b))
}

/// Harmonic mean of macro F1 and τ_B, with negative τ_B counted as 0.
pub fn combined_score(f1: f64, tau_b: f64) -> f64 {
    if tau_b.is_nan() {
        return f64::NAN;
    }
    harmonic_mean(f1, tau_b.max(0.0)).unwrap_or(f64::NAN)
}
