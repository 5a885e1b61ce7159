use rand::Rng;
use rand_distr::Exp1;

use super::normal::{cdf, log_interval_mass, quantile};
use crate::error::{Error, Result};

/// Interval masses below this switch from inverse-CDF to rejection sampling.
const INVERSE_CDF_MIN_MASS: f64 = 1e-10;

/// Intervals with less mass than this cannot be sampled meaningfully.
const DEGENERATE_LOG_MASS: f64 = -690.775_527_898_213_7; // ln(1e-300)

const MAX_REDRAWS: usize = 64;

/// Open interval on the extended reals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    lower: f64,
    upper: f64,
}

impl Interval {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if lower.is_nan() || upper.is_nan() || lower >= upper {
            return Err(Error::Domain(format!("invalid interval ({lower}, {upper})")));
        }
        Ok(Self { lower, upper })
    }

    pub fn full() -> Self {
        Self {
            lower: f64::NEG_INFINITY,
            upper: f64::INFINITY,
        }
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lower < x && x < self.upper
    }
}

/// Draw from N(mean, variance) restricted to the open interval `bounds`.
pub fn sample_truncated_normal<R: Rng + ?Sized>(
    mean: f64,
    variance: f64,
    bounds: Interval,
    rng: &mut R,
) -> Result<f64> {
    if !(variance > 0.0) || !variance.is_finite() || !mean.is_finite() {
        return Err(Error::Domain(format!(
            "truncated normal needs finite mean and positive variance, got N({mean}, {variance})"
        )));
    }
    let sd = variance.sqrt();
    let a = (bounds.lower - mean) / sd;
    let b = (bounds.upper - mean) / sd;
    let log_mass = if a < b { log_interval_mass(a, b) } else { f64::NEG_INFINITY };
    if !(log_mass >= DEGENERATE_LOG_MASS) {
        return Err(Error::Degenerate {
            lower: bounds.lower,
            upper: bounds.upper,
            mean,
            sd,
        });
    }

    for _ in 0..MAX_REDRAWS {
        let z = standard_truncated(a, b, log_mass.exp(), rng);
        let x = mean + sd * z;
        if bounds.contains(x) {
            return Ok(x);
        }
    }
    // Only reachable when the interval is a handful of ulps wide.
    Err(Error::Degenerate {
        lower: bounds.lower,
        upper: bounds.upper,
        mean,
        sd,
    })
}

fn standard_truncated<R: Rng + ?Sized>(a: f64, b: f64, mass: f64, rng: &mut R) -> f64 {
    if mass >= INVERSE_CDF_MIN_MASS {
        // Work in the lower tail, where Φ keeps its relative precision.
        if a > 0.0 {
            -inverse_cdf(-b, -a, rng)
        } else {
            inverse_cdf(a, b, rng)
        }
    } else if a >= 0.0 {
        upper_tail(a, b, rng)
    } else if b <= 0.0 {
        -upper_tail(-b, -a, rng)
    } else {
        // A tiny-mass interval around the mode can only be very narrow.
        uniform_rejection(a, b, 0.0, rng)
    }
}

fn inverse_cdf<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    let lo = cdf(a);
    let hi = cdf(b);
    loop {
        let u = lo + (hi - lo) * rng.random::<f64>();
        if u > 0.0 && u < 1.0 {
            return quantile(u);
        }
    }
}

/// Standard normal restricted to (a, b) with a ≥ 0 deep in the tail.
fn upper_tail<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    if (b - a) * a <= 1.0 {
        return uniform_rejection(a, b, a, rng);
    }
    // Exponential proposal with the optimal rate for a one-sided tail.
    let rate = 0.5 * (a + (a * a + 4.0).sqrt());
    loop {
        let e: f64 = rng.sample(Exp1);
        let z = a + e / rate;
        if z >= b {
            continue;
        }
        let accept = (-0.5 * (z - rate) * (z - rate)).exp();
        if rng.random::<f64>() <= accept {
            return z;
        }
    }
}

/// Uniform proposal on a finite interval; `closest` is the point of the
/// interval nearest zero, where the density peaks.
fn uniform_rejection<R: Rng + ?Sized>(a: f64, b: f64, closest: f64, rng: &mut R) -> f64 {
    loop {
        let z = a + (b - a) * rng.random::<f64>();
        let accept = (-0.5 * (z * z - closest * closest)).exp();
        if rng.random::<f64>() <= accept {
            return z;
        }
    }
}
