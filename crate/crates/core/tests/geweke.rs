//! Joint-distribution ("getting it right") test of the full sweep.
//!
//! Parameters drawn from the prior and pushed through alternating
//! "simulate labels | parameters" and "one Gibbs sweep | labels" steps must
//! keep the prior as their stationary marginal. An error in the threshold
//! acceptance ratio shows up as a drift away from the prior.

use msprobit::diagnostics::effective_sample_size;
use msprobit::distributions::RandomStream;
use msprobit::model::{ChainConfig, Dataset, Prior, ScaleSpec};
use msprobit::sampler::Chain;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

const GAMMA_PRIOR_VARIANCE: f64 = 2.0;

fn prior_draw<R: Rng>(rng: &mut R, p: usize, thresholds: &[usize]) -> (DVector<f64>, Vec<Vec<f64>>) {
    let beta = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let gammas = thresholds
        .iter()
        .map(|&k| {
            let mut g: Vec<f64> = (0..k)
                .map(|_| GAMMA_PRIOR_VARIANCE.sqrt() * rng.sample::<f64, _>(StandardNormal))
                .collect();
            g.sort_by(f64::total_cmp);
            g
        })
        .collect();
    (beta, gammas)
}

fn simulate_classes<R: Rng>(rng: &mut R, x: &DMatrix<f64>, scale_of: &[usize], beta: &DVector<f64>, gammas: &[Vec<f64>]) -> Vec<usize> {
    let eta = x * beta;
    (0..x.nrows())
        .map(|i| {
            let y = eta[i] + rng.sample::<f64, _>(StandardNormal);
            gammas[scale_of[i]].iter().filter(|&&g| y > g).count()
        })
        .collect()
}

fn ks_two_sample(a: &mut [f64], b: &mut [f64]) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len(), b.len());
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < n && j < m {
        let x = a[i].min(b[j]);
        while i < n && a[i] <= x {
            i += 1;
        }
        while j < m && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    d
}

#[test]
fn successive_conditional_matches_prior() {
    let (p, n_per_scale, thresholds) = (2, 10, [1usize, 2]);
    let sweeps: usize = std::env::var("GEWEKE_SWEEPS").ok().and_then(|s| s.parse().ok()).unwrap_or(50_000);
    let thin: usize = std::env::var("GEWEKE_THIN").ok().and_then(|s| s.parse().ok()).unwrap_or(25);

    let mut rng = RandomStream::new(std::env::var("GEWEKE_SEED").ok().and_then(|s| s.parse().ok()).unwrap_or(2024));
    let n = n_per_scale * thresholds.len();
    let x = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let scale_of: Vec<usize> = (0..n).map(|i| i / n_per_scale).collect();
    let scales: Vec<ScaleSpec> = thresholds.iter().map(|&k| ScaleSpec::new(k + 1).unwrap()).collect();

    let mut config = ChainConfig::new(Prior::isotropic(p, 1.0).unwrap(), vec![0.8, 0.8]);
    config.gamma_prior_variance = Some(GAMMA_PRIOR_VARIANCE);

    let (mut beta, mut gammas) = prior_draw(&mut rng, p, &thresholds);
    let mut classes = simulate_classes(&mut rng, &x, &scale_of, &beta, &gammas);
    let mut successive: Vec<Vec<f64>> = Vec::new();
    let mut chain_rng = rng.split(1);
    for _ in 0..sweeps {
        let data = Dataset::from_parts(x.clone(), classes, scale_of.clone(), scales.clone()).unwrap();
        config.init_beta = Some(beta);
        config.init_gammas = Some(gammas);
        let mut chain = Chain::new(&data, &config, chain_rng).unwrap();
        chain.sweep().unwrap();
        let params = chain.params();
        chain_rng = chain.into_rng();
        beta = params.beta;
        gammas = params.gammas;
        classes = simulate_classes(&mut rng, &x, &scale_of, &beta, &gammas);
        successive.push(flatten(&beta, &gammas));
    }

    let mut marginal_rng = rng.split(2);
    let kept: Vec<&Vec<f64>> = successive.iter().step_by(thin).collect();
    let marginal: Vec<Vec<f64>> = (0..kept.len())
        .map(|_| {
            let (b, g) = prior_draw(&mut marginal_rng, p, &thresholds);
            flatten(&b, &g)
        })
        .collect();

    let n2 = marginal.len() as f64;
    for k in 0..successive[0].len() {
        let full: Vec<f64> = successive.iter().map(|v| v[k]).collect();
        // dependent draws carry less information than their count suggests
        let n1 = effective_sample_size(&full).min(kept.len() as f64);
        let critical = 1.628 * ((n1 + n2) / (n1 * n2)).sqrt();
        let mut a: Vec<f64> = kept.iter().map(|v| v[k]).collect();
        let mut b: Vec<f64> = marginal.iter().map(|v| v[k]).collect();
        let d = ks_two_sample(&mut a, &mut b);
        println!("parameter {k}: KS = {d:.4} (critical {critical:.4}, effective n {n1:.0})");
        assert!(d < critical, "parameter {k}: KS {d} >= {critical}");
    }
}

fn flatten(beta: &DVector<f64>, gammas: &[Vec<f64>]) -> Vec<f64> {
    beta.iter().copied().chain(gammas.iter().flatten().copied()).collect()
}
