//! Standard normal CDF, quantile and log-space interval masses.
//!
//! The public entry points validate their arguments; the `pub(crate)`
//! helpers accept extended reals (`±∞`) so threshold boundaries need no
//! special casing in the sampler.

use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};

use libm::erfc;
use statrs::function::erf::erfc_inv;

use crate::error::{Error, Result};

/// Above this the CDF is 1 to double precision.
const CDF_SATURATION: f64 = 40.0;

/// Below this `erfc` is about to underflow; switch to the asymptotic series.
const LOG_CDF_ASYMPTOTIC: f64 = -35.0;

/// Φ(x). Errors on non-finite input.
pub fn std_normal_cdf(x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::Domain(format!("normal cdf of non-finite value {x}")));
    }
    Ok(cdf(x))
}

/// Φ⁻¹(p) for p in the open unit interval.
pub fn std_normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!("normal quantile requires 0 < p < 1, got {p}")));
    }
    Ok(quantile(p))
}

/// Φ(x) on the extended reals.
pub(crate) fn cdf(x: f64) -> f64 {
    if x >= CDF_SATURATION {
        1.0
    } else if x == f64::NEG_INFINITY {
        0.0
    } else {
        0.5 * erfc(-x * FRAC_1_SQRT_2)
    }
}

pub(crate) fn pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

pub(crate) fn quantile(p: f64) -> f64 {
    debug_assert!(p > 0.0 && p < 1.0);
    // erfc_inv keeps full relative precision for small p; work in the lower
    // half and mirror so the upper half does not lose digits to 1 - p.
    let (q, sign) = if p <= 0.5 { (p, 1.0) } else { (1.0 - p, -1.0) };
    let mut x = -SQRT_2 * erfc_inv(2.0 * q);
    // One Newton step against the accurate CDF.
    if x.is_finite() && x > -37.0 {
        let density = pdf(x);
        if density > 0.0 {
            x -= (cdf(x) - q) / density;
        }
    }
    sign * x
}

/// ln Φ(x) on the extended reals, accurate far into the lower tail.
pub(crate) fn log_cdf(x: f64) -> f64 {
    if x == f64::NEG_INFINITY {
        f64::NEG_INFINITY
    } else if x < LOG_CDF_ASYMPTOTIC {
        let x2 = x * x;
        let inv = 1.0 / x2;
        let series = 1.0 - inv * (1.0 - 3.0 * inv * (1.0 - 5.0 * inv * (1.0 - 7.0 * inv)));
        -0.5 * x2 - (-x).ln() - 0.5 * (2.0 * PI).ln() + series.ln()
    } else if x > 0.0 {
        (-cdf(-x)).ln_1p()
    } else {
        cdf(x).ln()
    }
}

/// ln(Φ(upper) − Φ(lower)) for `lower < upper` on the extended reals.
///
/// Differences are always taken in whichever tail keeps relative precision.
pub(crate) fn log_interval_mass(lower: f64, upper: f64) -> f64 {
    debug_assert!(lower < upper, "interval ({lower}, {upper}) is empty");
    if lower >= 0.0 {
        return log_interval_mass(-upper, -lower);
    }
    if upper <= 0.0 {
        let log_upper = log_cdf(upper);
        let log_lower = log_cdf(lower);
        if log_lower == f64::NEG_INFINITY {
            return log_upper;
        }
        return log_upper + (-(log_lower - log_upper).exp_m1()).ln();
    }
    // Straddles zero: both excluded tails are at most one half.
    (-(cdf(lower) + cdf(-upper))).ln_1p()
}

/// Φ(upper) − Φ(lower) for the interval probability of a class.
pub(crate) fn interval_mass(lower: f64, upper: f64) -> f64 {
    if lower >= 0.0 {
        cdf(-lower) - cdf(-upper)
    } else {
        cdf(upper) - cdf(lower)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cdf_reference_values() {
        assert_eq!(std_normal_cdf(0.0).unwrap(), 0.5);
        assert_eq!(std_normal_cdf(40.0).unwrap(), 1.0);
        assert_eq!(std_normal_cdf(123.0).unwrap(), 1.0);
        assert!((std_normal_cdf(1.0).unwrap() - 0.841_344_746_068_542_9).abs() < 1e-12);
        assert!((std_normal_cdf(-10.0).unwrap() - 7.619_853_024_160_526e-24).abs() < 1e-12);
        assert!(std_normal_cdf(f64::INFINITY).is_err());
        assert!(std_normal_cdf(f64::NAN).is_err());
    }

    #[test]
    fn quantile_reference_values() {
        assert_eq!(std_normal_quantile(0.5).unwrap(), 0.0);
        assert!((std_normal_quantile(0.841_344_746).unwrap() - 1.0).abs() < 1e-8);
        assert!((std_normal_quantile(0.25).unwrap() + 0.674_489_750_196_081_7).abs() < 1e-12);
        let far = std_normal_quantile(1e-300).unwrap();
        assert!(far.is_finite() && far < -30.0, "{far}");
        assert!(std_normal_quantile(0.0).is_err());
        assert!(std_normal_quantile(1.0).is_err());
    }

    #[test]
    fn log_cdf_reference_values() {
        // mpmath, 40 digits
        let cases = [
            (-40.0, -804.608_442_013_753_8),
            (-38.0, -726.557_216_018_820_1),
            (-20.0, -203.917_155_371_097_26),
            (-5.0, -15.064_998_393_988_726),
            (-0.5, -1.175_911_761_593_618_6),
            (0.3, -0.481_410_161_588_481_2),
            (2.5, -0.006_229_025_485_860_002),
        ];
        for (x, want) in cases {
            let got = log_cdf(x);
            assert!(((got - want) / want).abs() < 1e-12, "x={x}: {got} vs {want}");
        }
        let got = log_cdf(9.0);
        assert!((got / -1.128_588_405_953_840_6e-19 - 1.0).abs() < 1e-6, "{got}");
    }

    #[test]
    fn log_interval_mass_matches_direct_difference() {
        let direct = |a: f64, b: f64| (cdf(b) - cdf(a)).ln();
        for &(a, b) in &[(-1.0, 1.0), (-3.0, -1.0), (0.2, 0.9), (f64::NEG_INFINITY, 0.0), (1.5, f64::INFINITY)] {
            assert!((log_interval_mass(a, b) - direct(a, b)).abs() < 1e-12);
        }
        // (5, 6) has mass 2.856649842341562e-7 (mpmath).
        let far = log_interval_mass(5.0, 6.0).exp();
        assert!((far / 2.856_649_842_341_562e-7 - 1.0).abs() < 1e-10);
        // Far beyond where Φ underflows the log mass is still finite.
        let extreme = log_interval_mass(300.0, f64::INFINITY);
        assert!(extreme.is_finite() && extreme < -40_000.0);
        let extreme = log_interval_mass(f64::NEG_INFINITY, -300.0);
        assert!(extreme.is_finite());
    }
}
