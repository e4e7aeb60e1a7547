use nalgebra::DMatrix;

use super::{check_square, matrix_exp, problem_scale, require_hurwitz, symmetrize, SmallMatrix};
use crate::error::{Error, Result};

const LYAP_TOL: f64 = 1e-12;
const SYLV_TOL: f64 = 1e-11;

/// Solves `A X + X B + C = 0` through the vectorised Kronecker system.
///
/// Dimensions are small enough (at most 16 unknowns) that a pivoted LU with
/// one step of iterative refinement beats any Schur-based method on
/// simplicity and accuracy.
pub fn solve_sylvester_raw(a: &SmallMatrix, b: &SmallMatrix, c: &SmallMatrix) -> Result<SmallMatrix> {
    check_square(a, "A must be square")?;
    check_square(b, "B must be square")?;
    let (n, m) = (a.nrows(), b.nrows());
    if c.nrows() != n || c.ncols() != m {
        return Err(Error::DimensionMismatch("C must be rows(A) x rows(B)"));
    }
    // vec(A X) = (I_m kron A) vec X,  vec(X B) = (B^T kron I_n) vec X
    let op = DMatrix::<f64>::identity(m, m).kronecker(a) + b.transpose().kronecker(&DMatrix::identity(n, n));
    let rhs = -DMatrix::from_column_slice(n * m, 1, c.as_slice());
    let lu = op.clone().full_piv_lu();
    let mut x = lu.solve(&rhs).ok_or(Error::Singular)?;
    if !x.iter().all(|v| v.is_finite()) {
        return Err(Error::Singular);
    }
    let r = &rhs - &op * &x;
    if let Some(dx) = lu.solve(&r) {
        x += dx;
    }
    Ok(DMatrix::from_column_slice(n, m, x.as_slice()))
}

/// Steady-state covariance: symmetric `P` with `A P + P A^T + M = 0`.
pub fn solve_lyapunov(a: &SmallMatrix, m: &SmallMatrix) -> Result<SmallMatrix> {
    check_square(a, "A must be square")?;
    require_hurwitz(a)?;
    let p = symmetrize(&solve_sylvester_raw(a, &a.transpose(), m)?);
    debug_assert!({
        let res = (a * &p + &p * a.transpose() + m).norm();
        res <= LYAP_TOL * problem_scale(a, m) * p.norm().max(1.0)
    });
    Ok(p)
}

/// Two-time covariance equation `A X + X A^T + exp(A tau) M = 0`.
///
/// The solution is not symmetric for `tau > 0`; at `tau = 0` it coincides
/// with [`solve_lyapunov`].
pub fn solve_sylvester_forced(a: &SmallMatrix, m: &SmallMatrix, tau: f64) -> Result<SmallMatrix> {
    check_square(a, "A must be square")?;
    require_hurwitz(a)?;
    if tau == 0.0 {
        return solve_lyapunov(a, m);
    }
    let forcing = matrix_exp(a, tau)? * m;
    let x = solve_sylvester_raw(a, &a.transpose(), &forcing)?;
    debug_assert!({
        let res = (a * &x + &x * a.transpose() + &forcing).norm();
        res <= SYLV_TOL * problem_scale(a, m) * x.norm().max(1.0)
    });
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linsolve::scalar;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
    }

    #[test]
    fn scalar_lyapunov_is_prior_variance() {
        let (lam, kap) = (5.9e4, 1.9e4);
        let p = solve_lyapunov(&scalar(-lam), &scalar(kap)).unwrap();
        assert!(rel(p[(0, 0)], kap / (2.0 * lam)) < 1e-14);
        assert!((p[(0, 0)] - 0.16102).abs() < 1e-5);
    }

    #[test]
    fn zero_forcing_gives_zero() {
        let a = SmallMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 3.0, -2.0]);
        let p = solve_lyapunov(&a, &SmallMatrix::zeros(2, 2)).unwrap();
        assert_eq!(p.amax(), 0.0);
    }

    #[test]
    fn unstable_a_is_rejected() {
        let a = SmallMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -2.0]);
        assert!(matches!(
            solve_lyapunov(&a, &SmallMatrix::identity(2, 2)),
            Err(Error::UnstableA { .. })
        ));
    }

    #[test]
    fn forced_scalar_closed_form() {
        let (a, m, tau) = (3.0e4, 7.0, 2.5e-5);
        let x = solve_sylvester_forced(&scalar(-a), &scalar(m), tau).unwrap();
        assert!(rel(x[(0, 0)], m * (-a * tau).exp() / (2.0 * a)) < 1e-13);
    }

    #[test]
    fn forced_at_zero_lag_is_lyapunov() {
        let a = SmallMatrix::from_row_slice(3, 3, &[-3.0, 1.0, 0.0, 0.5, -2.0, 0.2, 0.0, 1.0, -1.0]);
        let m = SmallMatrix::from_row_slice(3, 3, &[2.0, 0.1, 0.0, 0.1, 1.0, 0.3, 0.0, 0.3, 4.0]);
        let x0 = solve_sylvester_forced(&a, &m, 0.0).unwrap();
        let p = solve_lyapunov(&a, &m).unwrap();
        assert!((x0 - p).amax() < 1e-15);
    }

    #[test]
    fn forced_residual_small() {
        let a = SmallMatrix::from_row_slice(2, 2, &[-5.9e4, 0.0, 2.2e5, -2.8e5]);
        let m = SmallMatrix::from_row_slice(2, 2, &[1.9e4, 0.0, 0.0, 12.4]);
        let x = solve_sylvester_forced(&a, &m, 1e-5).unwrap();
        let f = matrix_exp(&a, 1e-5).unwrap() * &m;
        let res = (&a * &x + &x * a.transpose() + f).norm();
        assert!(res <= 1e-11 * problem_scale(&a, &m));
        assert!((x.clone() - x.transpose()).amax() > 0.0);
    }
}
