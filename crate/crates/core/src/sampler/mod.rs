//! Data-augmented Gibbs sampler for the multi-scale ordinal probit model.
//!
//! Each sweep updates, in order:
//!
//! 1. the thresholds γ⁽ˢ⁾ of every scale with a Metropolis-Hastings step
//!    (latent values integrated out),
//! 2. every latent value y*ᵢ from its truncated normal,
//! 3. β from its conjugate normal conditional.
//!
//! Binary and ordered probit are the single-scale special cases.

mod blocks;
mod tune;

use nalgebra::DVector;
use rayon::prelude::*;

pub use blocks::{
    draw_beta, draw_latents, log_acceptance_ratio, mh_update_gammas, propose_thresholds, BetaConditional,
    GammaMove,
};
pub use tune::{tune_proposal, TuningOutcome, DEFAULT_TARGET_RATE};

use crate::distributions::RandomStream;
use crate::error::{Error, Result};
use crate::model::{strictly_increasing, ChainConfig, Dataset, LatentState, ParamDraw};

/// Stored posterior draws with their provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct DrawSet {
    pub draws: Vec<ParamDraw>,
    pub chain_ids: Vec<usize>,
    /// 1-based sweep index each draw was taken at.
    pub iterations: Vec<usize>,
    /// Accepted threshold moves per scale, summed over chains.
    pub accepted: Vec<u64>,
    /// Proposed threshold moves per scale, summed over chains.
    pub proposed: Vec<u64>,
}

impl DrawSet {
    pub fn empty(num_scales: usize) -> Self {
        Self {
            draws: Vec::new(),
            chain_ids: Vec::new(),
            iterations: Vec::new(),
            accepted: vec![0; num_scales],
            proposed: vec![0; num_scales],
        }
    }

    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    pub fn accept_rate(&self) -> Vec<f64> {
        self.accepted
            .iter()
            .zip(&self.proposed)
            .map(|(&a, &p)| if p == 0 { 0.0 } else { a as f64 / p as f64 })
            .collect()
    }

    /// Appends `other`, keeping its chain ids.
    pub fn extend(&mut self, other: DrawSet) {
        self.draws.extend(other.draws);
        self.chain_ids.extend(other.chain_ids);
        self.iterations.extend(other.iterations);
        for (a, b) in self.accepted.iter_mut().zip(other.accepted) {
            *a += b;
        }
        for (a, b) in self.proposed.iter_mut().zip(other.proposed) {
            *a += b;
        }
    }

    pub fn beta_mean(&self) -> DVector<f64> {
        let p = self.draws.first().map_or(0, |d| d.beta.len());
        let sum = self.draws.iter().fold(DVector::zeros(p), |acc, d| acc + &d.beta);
        sum / self.draws.len() as f64
    }

    pub fn gamma_mean(&self) -> Vec<Vec<f64>> {
        let Some(first) = self.draws.first() else { return Vec::new() };
        let n = self.draws.len() as f64;
        first
            .gammas
            .iter()
            .enumerate()
            .map(|(s, g)| {
                (0..g.len())
                    .map(|c| self.draws.iter().map(|d| d.gammas[s][c]).sum::<f64>() / n)
                    .collect()
            })
            .collect()
    }

    /// Draws belonging to one chain, in order.
    pub fn chain(&self, chain_id: usize) -> impl Iterator<Item = &ParamDraw> {
        self.draws
            .iter()
            .zip(&self.chain_ids)
            .filter(move |(_, &c)| c == chain_id)
            .map(|(d, _)| d)
    }
}

/// Mutable state of one Markov chain over a fixed dataset.
#[derive(Debug, Clone)]
pub struct Chain<'a> {
    dataset: &'a Dataset,
    beta_conditional: BetaConditional,
    proposal_sd: Vec<f64>,
    gamma_prior_variance: Option<f64>,
    beta: DVector<f64>,
    gammas: Vec<Vec<f64>>,
    latent: Vec<f64>,
    sweeps: usize,
    accepted: Vec<u64>,
    proposed: Vec<u64>,
    rng: RandomStream,
}

impl<'a> Chain<'a> {
    /// Starts a chain at the configured (or default) initial state.
    pub fn new(dataset: &'a Dataset, config: &ChainConfig, rng: RandomStream) -> Result<Self> {
        config.validate(dataset)?;
        let (beta, gammas) = config.initial_state(dataset)?;
        let scales = dataset.num_scales();
        Ok(Self {
            dataset,
            beta_conditional: BetaConditional::new(dataset, &config.prior)?,
            proposal_sd: config.proposal_sd.clone(),
            gamma_prior_variance: config.gamma_prior_variance,
            beta,
            gammas,
            latent: vec![0.0; dataset.n()],
            sweeps: 0,
            accepted: vec![0; scales],
            proposed: vec![0; scales],
            rng,
        })
    }

    pub fn sweep(&mut self) -> Result<()> {
        let data = self.dataset;
        let eta = data.features() * &self.beta;
        for s in 0..data.num_scales() {
            let mv = blocks::update_thresholds(
                data,
                s,
                &self.gammas[s],
                eta.as_slice(),
                self.proposal_sd[s],
                self.gamma_prior_variance,
                &mut self.rng,
            )?;
            self.proposed[s] += 1;
            if mv.accepted {
                self.accepted[s] += 1;
                self.gammas[s] = mv.gammas;
            }
        }
        blocks::fill_latents(data, eta.as_slice(), &self.gammas, &mut self.latent, &mut self.rng)?;
        self.beta = self.beta_conditional.draw(data, &self.latent, &mut self.rng);
        self.sweeps += 1;

        debug_assert!(self.gammas.iter().all(|g| strictly_increasing(g)), "{:?}", self.gammas);
        debug_assert!(LatentState { y_star: self.latent.clone() }.is_consistent(&self.gammas, data));
        debug_assert!(self.beta.iter().all(|b| b.is_finite()));
        Ok(())
    }

    pub fn params(&self) -> ParamDraw {
        ParamDraw {
            beta: self.beta.clone(),
            gammas: self.gammas.clone(),
        }
    }

    pub fn latent(&self) -> LatentState {
        LatentState { y_star: self.latent.clone() }
    }

    pub fn sweeps(&self) -> usize {
        self.sweeps
    }

    pub fn accepted(&self) -> &[u64] {
        &self.accepted
    }

    pub fn proposed(&self) -> &[u64] {
        &self.proposed
    }

    pub fn proposal_sd(&self) -> &[f64] {
        &self.proposal_sd
    }

    pub fn set_proposal_sd(&mut self, sd: Vec<f64>) {
        assert_eq!(sd.len(), self.proposal_sd.len());
        self.proposal_sd = sd;
    }

    pub fn reset_acceptance(&mut self) {
        self.accepted.iter_mut().for_each(|a| *a = 0);
        self.proposed.iter_mut().for_each(|p| *p = 0);
    }

    pub fn into_rng(self) -> RandomStream {
        self.rng
    }
}

/// Runs chain 0 of `config`: burn-in, then every `thinning`-th sweep stored.
pub fn run_chain(dataset: &Dataset, config: &ChainConfig) -> Result<DrawSet> {
    run_chain_with_id(dataset, config, 0)
}

fn run_chain_with_id(dataset: &Dataset, config: &ChainConfig, chain_id: usize) -> Result<DrawSet> {
    let rng = RandomStream::new(config.seed).split(chain_id as u64);
    let mut chain = Chain::new(dataset, config, rng)?;
    let mut out = DrawSet::empty(dataset.num_scales());
    out.draws.reserve(config.stored_draws);
    for sweep in 1..=config.total_sweeps() {
        chain.sweep().map_err(|e| Error::Sampler {
            chain: chain_id,
            sweep,
            source: Box::new(e),
        })?;
        if sweep > config.burn_in && (sweep - config.burn_in).is_multiple_of(config.thinning) {
            out.draws.push(chain.params());
            out.chain_ids.push(chain_id);
            out.iterations.push(sweep);
        }
    }
    out.accepted = chain.accepted;
    out.proposed = chain.proposed;
    Ok(out)
}

/// Runs `num_chains` independent chains (concurrently) and pools their draws
/// in chain order.
pub fn run_chains(dataset: &Dataset, config: &ChainConfig, num_chains: usize) -> Result<DrawSet> {
    if num_chains == 0 {
        return Err(Error::Config("at least one chain is required".into()));
    }
    let sets: Vec<DrawSet> = (0..num_chains)
        .into_par_iter()
        .map(|c| run_chain_with_id(dataset, config, c))
        .collect::<Result<_>>()?;
    let mut pooled = DrawSet::empty(dataset.num_scales());
    for set in sets {
        pooled.extend(set);
    }
    Ok(pooled)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Prior, ScaleSpec};
    use nalgebra::DMatrix;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn binary_data(n: usize, beta: &[f64], seed: u64) -> Dataset {
        let mut rng = RandomStream::new(seed);
        let p = beta.len();
        let x = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
        let classes = (0..n)
            .map(|i| {
                let eta: f64 = (0..p).map(|k| x[(i, k)] * beta[k]).sum();
                let y = eta + rng.sample::<f64, _>(StandardNormal);
                usize::from(y > 0.0)
            })
            .collect();
        Dataset::from_parts(x, classes, vec![0; n], vec![ScaleSpec::new(2).unwrap()]).unwrap()
    }

    fn config(p: usize, sds: Vec<f64>) -> ChainConfig {
        ChainConfig::new(Prior::isotropic(p, 1.0).unwrap(), sds).with_schedule(200, 2, 150)
    }

    #[test]
    fn stores_the_configured_schedule() {
        let d = binary_data(50, &[1.0, -0.5], 1);
        let out = run_chain(&d, &config(2, vec![0.5]).with_seed(3)).unwrap();
        assert_eq!(out.len(), 150);
        assert_eq!(out.iterations.first(), Some(&202));
        assert_eq!(out.iterations.last(), Some(&500));
        assert!(out.iterations.windows(2).all(|w| w[1] - w[0] == 2));
        assert_eq!(out.proposed, vec![500]);
        assert_eq!(out.accept_rate()[0], out.accepted[0] as f64 / 500.0);
        assert!(out.draws.iter().all(|d| d.check().is_ok()));
    }

    #[test]
    fn long_schedule_arithmetic() {
        let c = ChainConfig::new(Prior::isotropic(1, 1.0).unwrap(), vec![1.0]);
        assert_eq!((c.burn_in, c.thinning, c.stored_draws), (50_000, 100, 500));
        assert_eq!(c.total_sweeps(), 100_000);
    }

    #[test]
    fn same_seed_same_draws() {
        let d = binary_data(40, &[0.7, 0.2], 2);
        let cfg = config(2, vec![0.5]).with_seed(11);
        assert_eq!(run_chain(&d, &cfg).unwrap(), run_chain(&d, &cfg).unwrap());
        assert_ne!(run_chain(&d, &cfg).unwrap(), run_chain(&d, &cfg.clone().with_seed(12)).unwrap());
    }

    #[test]
    fn one_chain_equals_run_chain() {
        let d = binary_data(40, &[0.7, 0.2], 4);
        let cfg = config(2, vec![0.5]).with_seed(5);
        assert_eq!(run_chains(&d, &cfg, 1).unwrap(), run_chain(&d, &cfg).unwrap());
        let two = run_chains(&d, &cfg, 2).unwrap();
        assert_eq!(two.len(), 300);
        assert_eq!(two.chain(1).count(), 150);
        assert_eq!(two.proposed, vec![1000]);
        assert!(run_chains(&d, &cfg, 0).is_err());
    }

    #[test]
    fn config_errors_surface_before_sampling() {
        let d = binary_data(20, &[0.7, 0.2], 6);
        let mut cfg = config(2, vec![0.5]);
        cfg.thinning = 0;
        assert!(matches!(run_chain(&d, &cfg), Err(Error::Config(_))));
        let cfg = config(3, vec![0.5]);
        assert!(matches!(run_chain(&d, &cfg), Err(Error::Config(_))));
        let mut cfg = config(2, vec![0.5]);
        cfg.init_gammas = Some(vec![vec![f64::NAN]]);
        assert!(matches!(run_chain(&d, &cfg), Err(Error::Config(_))));
    }
}
