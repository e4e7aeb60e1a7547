//! Dense kernels for matrices of dimension at most 4: Riccati, Lyapunov
//! and forced Sylvester equations, and the matrix exponential.
//!
//! Tolerances are relative to a problem scale `max(|A|, |M|, 1)` in the
//! Frobenius norm, because the physical parameters span many decades.

mod expm;
mod lyapunov;
mod riccati;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub use expm::matrix_exp;
pub use lyapunov::{solve_lyapunov, solve_sylvester_forced, solve_sylvester_raw};
pub use riccati::{solve_care, solve_gc_filter_riccati, solve_gc_riccati_pair, solve_riccati, GcProblem, GcSolution};

/// Dense real matrix with at most 4 rows and columns.
pub type SmallMatrix = DMatrix<f64>;

pub const MAX_DIM: usize = 4;

pub(crate) fn check_dim(m: &SmallMatrix) -> Result<()> {
    if m.nrows() > MAX_DIM || m.ncols() > MAX_DIM || m.nrows() == 0 || m.ncols() == 0 {
        return Err(Error::Dimension {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    Ok(())
}

pub(crate) fn check_square(m: &SmallMatrix, what: &'static str) -> Result<()> {
    check_dim(m)?;
    if !m.is_square() {
        return Err(Error::DimensionMismatch(what));
    }
    Ok(())
}

/// Largest real part over the spectrum of `a`.
pub fn spectral_abscissa(a: &SmallMatrix) -> f64 {
    a.complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

pub fn is_hurwitz(a: &SmallMatrix) -> bool {
    spectral_abscissa(a) < 0.0
}

pub(crate) fn require_hurwitz(a: &SmallMatrix) -> Result<()> {
    let max_re = spectral_abscissa(a);
    if max_re < 0.0 {
        Ok(())
    } else {
        Err(Error::UnstableA { max_re })
    }
}

pub(crate) fn problem_scale(a: &SmallMatrix, m: &SmallMatrix) -> f64 {
    a.norm().max(m.norm()).max(1.0)
}

pub(crate) fn symmetrize(m: &SmallMatrix) -> SmallMatrix {
    (m + m.transpose()) * 0.5
}

/// `|M - M^T|_max <= 1e-12 |M|_max`
pub fn is_symmetric(m: &SmallMatrix) -> bool {
    if !m.is_square() {
        return false;
    }
    let asym = (m - m.transpose()).amax();
    asym <= 1e-12 * m.amax()
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_sym_eigenvalue(m: &SmallMatrix) -> f64 {
    symmetrize(m).symmetric_eigenvalues().min()
}

pub fn scalar(x: f64) -> SmallMatrix {
    DMatrix::from_element(1, 1, x)
}
