//! Synthetic multi-scale probit data with known parameters.

mod experiment;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

pub use experiment::{
    rmse, run_experiment, ExperimentReport, ExperimentSpec, Failure, Metric, ModelKind, RatioRecord, RmseDraw,
    RmseRecord,
};

use crate::error::{Error, Result};
use crate::model::{Dataset, ScaleSpec};

/// Variance of the normal each simulated threshold is drawn from.
pub const THRESHOLD_VARIANCE: f64 = 5.0;

const MAX_CONSECUTIVE_REJECTIONS: usize = 10_000;

/// Shape of a simulated dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SimSpec {
    /// Observations per scale.
    pub n: usize,
    pub p: usize,
    /// Number of thresholds per scale (classes minus one).
    pub thresholds: Vec<usize>,
    /// Minimum number of observations in every class.
    pub min_per_class: usize,
}

impl SimSpec {
    pub fn num_scales(&self) -> usize {
        self.thresholds.len()
    }

    pub fn scales(&self) -> Result<Vec<ScaleSpec>> {
        self.thresholds.iter().map(|&k| ScaleSpec::new(k + 1)).collect()
    }

    fn validate(&self) -> Result<()> {
        if self.thresholds.is_empty() || self.p == 0 || self.min_per_class == 0 {
            return Err(Error::Config(format!(
                "simulation needs at least one scale, p >= 1 and k >= 1 (got {self:?})"
            )));
        }
        let most_classes = self.thresholds.iter().max().copied().unwrap_or(0) + 1;
        if self.thresholds.contains(&0) {
            return Err(Error::Config("every scale needs at least one threshold".into()));
        }
        if self.n < self.min_per_class * most_classes {
            return Err(Error::Config(format!(
                "n = {} cannot hold {} observations in each of {} classes",
                self.n, self.min_per_class, most_classes
            )));
        }
        Ok(())
    }
}

/// Simulated data together with the parameters that generated it.
#[derive(Debug, Clone, PartialEq)]
pub struct SimTruth {
    pub beta: DVector<f64>,
    pub gammas: Vec<Vec<f64>>,
    /// Per scale: features, latent values and 0-based classes.
    pub features: Vec<DMatrix<f64>>,
    pub y_star: Vec<Vec<f64>>,
    pub classes: Vec<Vec<usize>>,
    scales: Vec<ScaleSpec>,
}

impl SimTruth {
    pub fn scales(&self) -> &[ScaleSpec] {
        &self.scales
    }

    /// All scales pooled into one dataset, scale by scale.
    pub fn dataset(&self) -> Dataset {
        let n: usize = self.features.iter().map(|f| f.nrows()).sum();
        let p = self.beta.len();
        let mut x = DMatrix::zeros(n, p);
        let mut classes = Vec::with_capacity(n);
        let mut scale_of = Vec::with_capacity(n);
        let mut row = 0;
        for (s, f) in self.features.iter().enumerate() {
            x.rows_mut(row, f.nrows()).copy_from(f);
            row += f.nrows();
            classes.extend_from_slice(&self.classes[s]);
            scale_of.extend(std::iter::repeat_n(s, f.nrows()));
        }
        Dataset::from_parts(x, classes, scale_of, self.scales.clone()).expect("simulated data is consistent")
    }

    /// Scale `s` on its own.
    pub fn scale_dataset(&self, s: usize) -> Dataset {
        Dataset::from_parts(
            self.features[s].clone(),
            self.classes[s].clone(),
            vec![0; self.classes[s].len()],
            vec![self.scales[s]],
        )
        .expect("simulated data is consistent")
    }
}

/// Draws β ~ N(0, I) once, then for every scale a standard normal design,
/// sorted thresholds from N(0, 5) and labels from y* = xᵀβ + ε, redrawing
/// thresholds and latent values until every class has enough members.
pub fn simulate_dataset<R: Rng + ?Sized>(spec: &SimSpec, rng: &mut R) -> Result<SimTruth> {
    spec.validate()?;
    let scales = spec.scales()?;
    let p = spec.p;
    let beta = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let sd = THRESHOLD_VARIANCE.sqrt();

    let mut truth = SimTruth {
        beta,
        gammas: Vec::new(),
        features: Vec::new(),
        y_star: Vec::new(),
        classes: Vec::new(),
        scales,
    };
    for (s, &k) in spec.thresholds.iter().enumerate() {
        let x = DMatrix::from_fn(spec.n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
        let eta = &x * &truth.beta;
        let mut rejections = 0;
        let (gammas, y_star, classes) = loop {
            let mut gammas: Vec<f64> = (0..k).map(|_| sd * rng.sample::<f64, _>(StandardNormal)).collect();
            gammas.sort_by(f64::total_cmp);
            let y_star: Vec<f64> = eta.iter().map(|m| m + rng.sample::<f64, _>(StandardNormal)).collect();
            let classes: Vec<usize> = y_star.iter().map(|&y| class_of(&gammas, y)).collect();
            let mut counts = vec![0; k + 1];
            for &c in &classes {
                counts[c] += 1;
            }
            let distinct = gammas.windows(2).all(|w| w[0] < w[1]);
            if distinct && counts.iter().all(|&c| c >= spec.min_per_class) {
                break (gammas, y_star, classes);
            }
            rejections += 1;
            if rejections >= MAX_CONSECUTIVE_REJECTIONS {
                return Err(Error::Simulation(format!(
                    "scale {}: {rejections} consecutive threshold draws left a class with fewer than {} \
                     observations; use a larger n or fewer classes",
                    s + 1,
                    spec.min_per_class
                )));
            }
        };
        truth.gammas.push(gammas);
        truth.y_star.push(y_star);
        truth.classes.push(classes);
        truth.features.push(x);
    }
    Ok(truth)
}

/// 0-based class whose interval contains `y`.
pub fn class_of(gammas: &[f64], y: f64) -> usize {
    gammas.iter().take_while(|&&g| y >= g).count()
}
