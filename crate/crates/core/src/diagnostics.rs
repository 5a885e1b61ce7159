//! Monte Carlo error estimates for autocorrelated chains.

/// Effective sample size by Geyer's initial monotone positive sequence.
pub fn effective_sample_size(chain: &[f64]) -> f64 {
    let n = chain.len();
    if n < 4 {
        return n as f64;
    }
    let mean = chain.iter().sum::<f64>() / n as f64;
    let centred: Vec<f64> = chain.iter().map(|x| x - mean).collect();
    let var = centred.iter().map(|x| x * x).sum::<f64>() / n as f64;
    if var == 0.0 {
        return n as f64;
    }
    let autocorr = |lag: usize| -> f64 {
        centred[..n - lag].iter().zip(&centred[lag..]).map(|(a, b)| a * b).sum::<f64>() / (n as f64 * var)
    };

    // Sum autocorrelations in adjacent pairs while the pair sums stay
    // positive, forcing them to be non-increasing.
    let mut tau = -1.0;
    let mut previous = f64::INFINITY;
    let mut lag = 0;
    while lag + 1 < n {
        let pair = autocorr(lag) + autocorr(lag + 1);
        if pair <= 0.0 {
            break;
        }
        let pair = pair.min(previous);
        tau += 2.0 * pair;
        previous = pair;
        lag += 2;
    }
    (n as f64 / tau.max(1.0 / n as f64)).min(n as f64)
}

/// Monte Carlo standard error of the mean of `chain`.
pub fn mcse(chain: &[f64]) -> f64 {
    let n = chain.len() as f64;
    let mean = chain.iter().sum::<f64>() / n;
    let var = chain.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (var / effective_sample_size(chain)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::RandomStream;
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn white_noise_is_nearly_independent() {
        let mut rng = RandomStream::new(1);
        let x: Vec<f64> = (0..10_000).map(|_| rng.sample(StandardNormal)).collect();
        let ess = effective_sample_size(&x);
        assert!(ess > 8_000.0, "{ess}");
    }

    #[test]
    fn ar1_matches_theory() {
        // AR(1) with phi = 0.9 has ESS ≈ n (1 - phi) / (1 + phi)
        let mut rng = RandomStream::new(2);
        let mut x = vec![0.0; 200_000];
        for t in 1..x.len() {
            x[t] = 0.9 * x[t - 1] + rng.sample::<f64, _>(StandardNormal);
        }
        let ess = effective_sample_size(&x);
        let want = 200_000.0 * 0.1 / 1.9;
        assert!((ess / want - 1.0).abs() < 0.15, "{ess} vs {want}");
    }
}
