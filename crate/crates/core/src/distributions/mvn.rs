use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Cholesky factor of a precision matrix, reusable across draws.
#[derive(Clone, Debug)]
pub struct PrecisionFactor {
    chol: Cholesky<f64, Dyn>,
}

impl PrecisionFactor {
    pub fn new(precision: &DMatrix<f64>) -> Result<Self> {
        if !precision.is_square() {
            return Err(Error::LinearAlgebra(format!(
                "precision matrix is {}x{}, not square",
                precision.nrows(),
                precision.ncols()
            )));
        }
        match Cholesky::new(precision.clone()) {
            Some(chol) => Ok(Self { chol }),
            None => Err(Error::LinearAlgebra(diagnose(precision))),
        }
    }

    pub fn dim(&self) -> usize {
        self.chol.l_dirty().nrows()
    }

    /// Solves `precision * x = rhs`.
    pub fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(rhs)
    }

    /// Draw from N(P⁻¹ h, P⁻¹) given h = `precision_times_mean`.
    pub fn sample<R: Rng + ?Sized>(&self, precision_times_mean: &DVector<f64>, rng: &mut R) -> DVector<f64> {
        let p = self.dim();
        let mut x = self.chol.solve(precision_times_mean);
        let z = DVector::from_iterator(p, (0..p).map(|_| rng.sample::<f64, _>(StandardNormal)));
        // L Lᵀ = P, so Lᵀ u = z gives Cov(u) = P⁻¹.
        let u = self
            .chol
            .l_dirty()
            .tr_solve_lower_triangular(&z)
            .expect("Cholesky factor has a positive diagonal");
        x += u;
        x
    }
}

/// One draw from the normal with the given precision and precision-weighted mean.
pub fn sample_mvn_from_precision<R: Rng + ?Sized>(
    precision_times_mean: &DVector<f64>,
    precision: &DMatrix<f64>,
    rng: &mut R,
) -> Result<DVector<f64>> {
    if precision_times_mean.len() != precision.nrows() {
        return Err(Error::LengthMismatch {
            left: precision_times_mean.len(),
            right: precision.nrows(),
        });
    }
    Ok(PrecisionFactor::new(precision)?.sample(precision_times_mean, rng))
}

fn diagnose(m: &DMatrix<f64>) -> String {
    let asym = (m - m.transpose()).abs().max();
    if asym > 1e-10 * m.abs().max().max(1.0) {
        return format!("matrix is not symmetric (max asymmetry {asym:.3e})");
    }
    let eig = m.clone().symmetric_eigenvalues();
    let min = eig.min();
    let max = eig.max();
    if min <= 0.0 {
        format!("matrix is not positive definite: eigenvalues span [{min:.3e}, {max:.3e}]")
    } else {
        format!("factorisation failed: condition number {:.3e}", max / min)
    }
}
