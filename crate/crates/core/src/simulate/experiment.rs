//! Replicated parameter-recovery comparison of single-scale fits against
//! one multi-scale fit on the pooled data.

use std::fmt;

use nalgebra::DVector;
use rand::RngCore;
use rayon::prelude::*;

use super::{simulate_dataset, SimSpec, SimTruth};
use crate::distributions::RandomStream;
use crate::error::{Error, Result};
use crate::model::{ChainConfig, Dataset, Prior};
use crate::sampler::{run_chains, DrawSet};

/// One experiment: R replications of simulate, fit, compare.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub replications: usize,
    pub sim: SimSpec,
    /// Scalar λ of the prior precision λ·I on β (prior mean zero).
    pub prior_precision: f64,
    /// Threshold proposal sd for each scale; single-scale fits use their own entry.
    pub proposal_sd: Vec<f64>,
    pub burn_in: usize,
    pub thinning: usize,
    pub stored_draws: usize,
    pub chains: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ModelKind {
    /// Fit on one scale's data only (0-based scale).
    Single(usize),
    Multi,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelKind::Single(_) => f.write_str("single"),
            ModelKind::Multi => f.write_str("multi"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Metric {
    BetaRmse,
    GammaRmse,
}

impl Metric {
    pub const ALL: [Metric; 2] = [Metric::BetaRmse, Metric::GammaRmse];
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::BetaRmse => "beta_rmse",
            Metric::GammaRmse => "gamma_rmse",
        })
    }
}

/// Posterior mean of the per-draw RMSE for one (replication, model, scale, metric).
#[derive(Debug, Clone, PartialEq)]
pub struct RmseRecord {
    pub replication: usize,
    pub model: ModelKind,
    /// 0-based scale the record refers to.
    pub scale: usize,
    pub metric: Metric,
    pub posterior_mean: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RmseDraw {
    pub replication: usize,
    pub model: ModelKind,
    pub scale: usize,
    pub metric: Metric,
    pub draw: usize,
    pub value: f64,
}

/// Multi-scale over single-scale posterior-mean RMSE on one scale.
#[derive(Debug, Clone, PartialEq)]
pub struct RatioRecord {
    pub replication: usize,
    pub scale: usize,
    pub metric: Metric,
    pub multi: f64,
    pub single: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Failure {
    pub replication: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExperimentReport {
    pub records: Vec<RmseRecord>,
    pub draws: Vec<RmseDraw>,
    pub ratios: Vec<RatioRecord>,
    pub failures: Vec<Failure>,
}

impl ExperimentReport {
    pub fn record(&self, replication: usize, model: ModelKind, scale: usize, metric: Metric) -> Option<&RmseRecord> {
        self.records
            .iter()
            .find(|r| r.replication == replication && r.model == model && r.scale == scale && r.metric == metric)
    }

    pub fn ratios_for(&self, scale: usize, metric: Metric) -> impl Iterator<Item = &RatioRecord> {
        self.ratios.iter().filter(move |r| r.scale == scale && r.metric == metric)
    }

    pub fn completed_replications(&self) -> usize {
        let mut reps: Vec<usize> = self.records.iter().map(|r| r.replication).collect();
        reps.dedup();
        reps.len()
    }
}

/// Root-mean-square difference of two equally long vectors.
pub fn rmse(estimate: &[f64], truth: &[f64]) -> Result<f64> {
    if estimate.len() != truth.len() {
        return Err(Error::LengthMismatch { left: estimate.len(), right: truth.len() });
    }
    if estimate.is_empty() {
        return Err(Error::Empty);
    }
    let sq: f64 = estimate.iter().zip(truth).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((sq / estimate.len() as f64).sqrt())
}

/// Runs every replication (concurrently) and collects the report in
/// replication order. A failed replication is skipped and listed in
/// [`ExperimentReport::failures`].
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    if spec.proposal_sd.len() != spec.sim.num_scales() {
        return Err(Error::Config(format!(
            "{} proposal sds for {} scales",
            spec.proposal_sd.len(),
            spec.sim.num_scales()
        )));
    }
    if spec.chains == 0 || spec.replications == 0 {
        return Err(Error::Config("replications and chains must be at least 1".into()));
    }
    Prior::isotropic(spec.sim.p, spec.prior_precision)?;

    let root = RandomStream::new(spec.seed);
    let outcomes: Vec<Result<Replication>> = (0..spec.replications)
        .into_par_iter()
        .map(|r| replicate(spec, r, root.split(r as u64)))
        .collect();

    let mut report = ExperimentReport::default();
    for (r, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(rep) => rep.append_to(r, &mut report),
            Err(e) => report.failures.push(Failure { replication: r, message: e.to_string() }),
        }
    }
    Ok(report)
}

struct Fit {
    model: ModelKind,
    /// Per-draw β RMSE.
    beta: Vec<f64>,
    /// Per covered scale: (0-based scale, per-draw γ RMSE).
    gamma: Vec<(usize, Vec<f64>)>,
}

struct Replication {
    fits: Vec<Fit>,
}

fn replicate(spec: &ExperimentSpec, r: usize, mut rng: RandomStream) -> Result<Replication> {
    let truth = simulate_dataset(&spec.sim, &mut rng)?;
    let scales = spec.sim.num_scales();
    let mut fits = Vec::with_capacity(scales + 1);
    for s in 0..scales {
        let data = truth.scale_dataset(s);
        let draws = fit(spec, &data, vec![spec.proposal_sd[s]], rng.next_u64())
            .map_err(|e| Error::Simulation(format!("replication {r}, single-scale fit {}: {e}", s + 1)))?;
        fits.push(score(ModelKind::Single(s), &draws, &truth, &[s])?);
    }
    let data = truth.dataset();
    let draws = fit(spec, &data, spec.proposal_sd.clone(), rng.next_u64())
        .map_err(|e| Error::Simulation(format!("replication {r}, multi-scale fit: {e}")))?;
    let all: Vec<usize> = (0..scales).collect();
    fits.push(score(ModelKind::Multi, &draws, &truth, &all)?);
    Ok(Replication { fits })
}

fn fit(spec: &ExperimentSpec, data: &Dataset, proposal_sd: Vec<f64>, seed: u64) -> Result<DrawSet> {
    let config = ChainConfig::new(Prior::isotropic(data.p(), spec.prior_precision)?, proposal_sd)
        .with_schedule(spec.burn_in, spec.thinning, spec.stored_draws)
        .with_seed(seed);
    run_chains(data, &config, spec.chains)
}

/// `covered[j]` is the truth scale behind the fit's j-th scale.
fn score(model: ModelKind, draws: &DrawSet, truth: &SimTruth, covered: &[usize]) -> Result<Fit> {
    let beta_true: &DVector<f64> = &truth.beta;
    let beta = draws
        .draws
        .iter()
        .map(|d| rmse(d.beta.as_slice(), beta_true.as_slice()))
        .collect::<Result<_>>()?;
    let gamma = covered
        .iter()
        .enumerate()
        .map(|(j, &s)| {
            let per_draw = draws
                .draws
                .iter()
                .map(|d| rmse(&d.gammas[j], &truth.gammas[s]))
                .collect::<Result<_>>()?;
            Ok((s, per_draw))
        })
        .collect::<Result<_>>()?;
    Ok(Fit { model, beta, gamma })
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

impl Replication {
    fn append_to(self, r: usize, report: &mut ExperimentReport) {
        for fit in &self.fits {
            for (s, gamma) in &fit.gamma {
                for (metric, values) in [(Metric::BetaRmse, &fit.beta), (Metric::GammaRmse, gamma)] {
                    report.records.push(RmseRecord {
                        replication: r,
                        model: fit.model,
                        scale: *s,
                        metric,
                        posterior_mean: mean(values),
                    });
                    report.draws.extend(values.iter().enumerate().map(|(draw, &value)| RmseDraw {
                        replication: r,
                        model: fit.model,
                        scale: *s,
                        metric,
                        draw,
                        value,
                    }));
                }
            }
        }
        let multi = self.fits.iter().find(|f| f.model == ModelKind::Multi).expect("multi-scale fit present");
        for single in self.fits.iter().filter(|f| matches!(f.model, ModelKind::Single(_))) {
            let ModelKind::Single(s) = single.model else { unreachable!() };
            let multi_gamma = &multi.gamma.iter().find(|(t, _)| *t == s).expect("multi covers every scale").1;
            for (metric, m, sgl) in [
                (Metric::BetaRmse, mean(&multi.beta), mean(&single.beta)),
                (Metric::GammaRmse, mean(multi_gamma), mean(&single.gamma[0].1)),
            ] {
                report.ratios.push(RatioRecord { replication: r, scale: s, metric, multi: m, single: sgl, ratio: m / sgl });
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn smoke_spec() -> ExperimentSpec {
        ExperimentSpec {
            replications: 1,
            sim: SimSpec { n: 60, p: 3, thresholds: vec![1, 2], min_per_class: 1 },
            prior_precision: 1.0,
            proposal_sd: vec![0.5, 0.3],
            burn_in: 100,
            thinning: 2,
            stored_draws: 25,
            chains: 1,
            seed: 17,
        }
    }

    #[test]
    fn rmse_hand_values() {
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert!((rmse(&[0.0, 0.0], &[3.0, 4.0]).unwrap() - 12.5f64.sqrt()).abs() < 1e-15);
        assert!(rmse(&[0.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn smoke_run_has_every_model() {
        let spec = smoke_spec();
        let report = run_experiment(&spec).unwrap();
        assert!(report.failures.is_empty());
        let models: std::collections::BTreeSet<_> = report.records.iter().map(|r| r.model).collect();
        assert_eq!(models.len(), spec.sim.num_scales() + 1);
        // (single on its scale + multi on every scale) x 2 metrics
        assert_eq!(report.records.len(), 2 * 2 * 2);
        assert_eq!(report.draws.len(), report.records.len() * 25);
        assert_eq!(report.ratios.len(), 2 * 2);
        assert_eq!(report.completed_replications(), 1);
    }

    #[test]
    fn pooled_mean_matches_per_draw_values() {
        let report = run_experiment(&smoke_spec()).unwrap();
        for rec in &report.records {
            let values: Vec<f64> = report
                .draws
                .iter()
                .filter(|d| d.replication == rec.replication && d.model == rec.model && d.scale == rec.scale && d.metric == rec.metric)
                .map(|d| d.value)
                .collect();
            assert!((mean(&values) - rec.posterior_mean).abs() < 1e-12);
        }
    }

    #[test]
    fn deterministic_and_ratio_consistent() {
        let a = run_experiment(&smoke_spec()).unwrap();
        let b = run_experiment(&smoke_spec()).unwrap();
        assert_eq!(a, b);
        for r in &a.ratios {
            assert_eq!(r.ratio, r.multi / r.single);
            let single = a.record(r.replication, ModelKind::Single(r.scale), r.scale, r.metric).unwrap();
            assert_eq!(single.posterior_mean, r.single);
        }
    }

    #[test]
    fn failed_replications_are_counted() {
        let mut spec = smoke_spec();
        spec.replications = 2;
        // a near-zero proposal sd still runs; a failing simulation needs an infeasible class count
        spec.sim = SimSpec { n: 62, p: 2, thresholds: vec![30], min_per_class: 2 };
        spec.proposal_sd = vec![0.1];
        let report = run_experiment(&spec).unwrap();
        assert_eq!(report.failures.len(), 2);
        assert!(report.records.is_empty());
    }
}
