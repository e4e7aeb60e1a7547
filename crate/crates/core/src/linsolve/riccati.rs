//! Stabilising solutions of filter-type algebraic Riccati equations
//!
//! ```text
//! A X + X A^T - X G X + W = 0,    A - X G Hurwitz
//! ```
//!
//! `G` may be indefinite, which covers both the Kalman equation
//! (`G = C^T R^-1 C`) and the auxiliary guaranteed-cost equation whose
//! quadratic term enters with a positive sign (`G = -eps E^T E`).
//!
//! The stable invariant subspace of the Hamiltonian
//! `H = [[A^T, -G], [-W, -A]]` is extracted through the matrix sign
//! function and the result is polished with Newton (Kleinman) steps.

use nalgebra::DMatrix;

use super::{check_dim, check_square, is_hurwitz, min_sym_eigenvalue, solve_lyapunov, symmetrize, SmallMatrix};
use crate::error::{Error, Result};

const RESIDUAL_TOL: f64 = 1e-10;
const SIGN_MAX_ITER: usize = 100;
const NEWTON_MAX_ITER: usize = 30;

fn residual(a: &SmallMatrix, g: &SmallMatrix, w: &SmallMatrix, x: &SmallMatrix) -> SmallMatrix {
    a * x + x * a.transpose() - x * g * x + w
}

fn riccati_scale(a: &SmallMatrix, g: &SmallMatrix, w: &SmallMatrix, x: &SmallMatrix) -> f64 {
    (a.norm() * x.norm())
        .max((x * g * x).norm())
        .max(w.norm())
        .max(a.norm())
        .max(1.0)
}

/// Stabilising solution of `A X + X A^T - X G X + W = 0`.
pub fn solve_riccati(a: &SmallMatrix, g: &SmallMatrix, w: &SmallMatrix) -> Result<SmallMatrix> {
    check_square(a, "A must be square")?;
    let n = a.nrows();
    if g.shape() != (n, n) || w.shape() != (n, n) {
        return Err(Error::DimensionMismatch("G and W must match A"));
    }
    let g = symmetrize(g);
    let w = symmetrize(w);

    let mut h = DMatrix::<f64>::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(&a.transpose());
    h.view_mut((0, n), (n, n)).copy_from(&(-&g));
    h.view_mut((n, 0), (n, n)).copy_from(&(-&w));
    h.view_mut((n, n), (n, n)).copy_from(&(-a));

    let eig_floor = 1e-10 * h.norm();
    let min_re = h
        .complex_eigenvalues()
        .iter()
        .map(|z| z.re.abs())
        .fold(f64::INFINITY, f64::min);
    if !(min_re > eig_floor) {
        return Err(Error::NoStabilizingSolution(
            "Hamiltonian has eigenvalues on the imaginary axis",
        ));
    }

    let sign = matrix_sign(&h)?;
    let id = DMatrix::<f64>::identity(n, n);
    // (sign + I) [I; X] = 0
    let mut lhs = DMatrix::<f64>::zeros(2 * n, n);
    lhs.view_mut((0, 0), (n, n)).copy_from(&sign.view((0, n), (n, n)));
    lhs.view_mut((n, 0), (n, n))
        .copy_from(&(sign.view((n, n), (n, n)) + &id));
    let mut rhs = DMatrix::<f64>::zeros(2 * n, n);
    rhs.view_mut((0, 0), (n, n))
        .copy_from(&(-(sign.view((0, 0), (n, n)) + &id)));
    rhs.view_mut((n, 0), (n, n)).copy_from(&(-sign.view((n, 0), (n, n))));
    let x = lhs
        .svd(true, true)
        .solve(&rhs, 1e-14)
        .map_err(|_| Error::NoStabilizingSolution("stable subspace is not a graph"))?;
    if !x.iter().all(|v| v.is_finite()) {
        return Err(Error::NoStabilizingSolution("stable subspace is not a graph"));
    }
    let mut x = symmetrize(&x);
    if !is_hurwitz(&(a - &x * &g)) {
        return Err(Error::NoStabilizingSolution("closed loop is not Hurwitz"));
    }

    x = newton_polish(a, &g, &w, x);

    let res = residual(a, &g, &w, &x).norm();
    let tol = RESIDUAL_TOL * riccati_scale(a, &g, &w, &x);
    if res > tol {
        return Err(Error::IllConditioned {
            residual: res,
            tolerance: tol,
        });
    }
    if !is_hurwitz(&(a - &x * &g)) {
        return Err(Error::NoStabilizingSolution("closed loop is not Hurwitz"));
    }
    Ok(x)
}

/// Newton sign iteration with determinant scaling.
fn matrix_sign(h: &SmallMatrix) -> Result<SmallMatrix> {
    let dim = h.nrows() as f64;
    let mut z = h.clone();
    let mut prev_change = f64::INFINITY;
    for _ in 0..SIGN_MAX_ITER {
        let lu = z.clone().lu();
        let det = lu.determinant().abs();
        let inv = lu
            .try_inverse()
            .ok_or(Error::NoStabilizingSolution("singular iterate in sign function"))?;
        let c = if det.is_finite() && det > 0.0 {
            det.powf(-1.0 / dim)
        } else {
            1.0
        };
        let next = (&z * c + inv / c) * 0.5;
        let change = (&next - &z).norm();
        z = next;
        if change <= 1e-13 * z.norm() {
            return Ok(z);
        }
        // Rounding floor reached on a stiff Hamiltonian; Newton polishing
        // recovers the remaining digits.
        if change <= 1e-6 * z.norm() && change >= prev_change {
            return Ok(z);
        }
        prev_change = change;
    }
    Err(Error::NoStabilizingSolution("sign iteration did not converge"))
}

/// Kleinman iteration; keeps the iterate with the smallest residual.
fn newton_polish(a: &SmallMatrix, g: &SmallMatrix, w: &SmallMatrix, mut x: SmallMatrix) -> SmallMatrix {
    let mut best = residual(a, g, w, &x).norm();
    for _ in 0..NEWTON_MAX_ITER {
        let closed = a - &x * g;
        let forcing = &x * g * &x + w;
        let Ok(next) = solve_lyapunov(&closed, &forcing) else {
            break;
        };
        let r = residual(a, g, w, &next).norm();
        if !(r < best) {
            break;
        }
        let step = (&next - &x).norm();
        x = next;
        best = r;
        if step <= 1e-16 * x.norm() {
            break;
        }
    }
    x
}

/// Steady-state Kalman covariance:
/// `A P + P A^T + Bq Bq^T - P C^T (Dr Dr^T)^-1 C P = 0`.
pub fn solve_care(a: &SmallMatrix, c: &SmallMatrix, bq: &SmallMatrix, dr: &SmallMatrix) -> Result<SmallMatrix> {
    check_square(a, "A must be square")?;
    check_dim(c)?;
    check_dim(bq)?;
    check_dim(dr)?;
    let n = a.nrows();
    if c.ncols() != n || bq.nrows() != n || dr.nrows() != c.nrows() {
        return Err(Error::DimensionMismatch("A, C, Bq, Dr are inconsistent"));
    }
    let r = dr * dr.transpose();
    let r_inv = r.try_inverse().ok_or(Error::Singular)?;
    let g = c.transpose() * r_inv * c;
    let w = bq * bq.transpose();
    solve_riccati(a, &g, &w)
}

/// Norm-bounded uncertain system
///
/// ```text
/// dx/dt = (A + D1 Delta E1) x + w1,   y = (C + D2 Delta E1) x + w2
/// ```
///
/// with `Delta^T Delta <= I`, noise intensities `V1`, `V2`, and scaling
/// parameter `epsilon > 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct GcProblem {
    pub a: SmallMatrix,
    pub c: SmallMatrix,
    pub d1: SmallMatrix,
    pub d2: SmallMatrix,
    pub e1: SmallMatrix,
    pub v1: SmallMatrix,
    pub v2: SmallMatrix,
    pub epsilon: f64,
}

/// Solutions of the auxiliary (`S+`) and filter (`Q+`) Riccati equations.
#[derive(Debug, Clone, PartialEq)]
pub struct GcSolution {
    pub s_plus: SmallMatrix,
    pub q_plus: SmallMatrix,
}

impl GcProblem {
    pub fn with_epsilon(&self, epsilon: f64) -> Self {
        Self {
            epsilon,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for m in [&self.a, &self.c, &self.d1, &self.d2, &self.e1, &self.v1, &self.v2] {
            check_dim(m)?;
        }
        let n = self.a.nrows();
        let l = self.c.nrows();
        let p = self.d1.ncols();
        let q = self.e1.nrows();
        let consistent = self.a.is_square()
            && self.c.ncols() == n
            && self.d1.nrows() == n
            && self.d2.shape() == (l, p)
            && self.e1.ncols() == n
            && self.v1.shape() == (n, n)
            && self.v2.shape() == (l, l)
            && p == q;
        if !consistent {
            return Err(Error::DimensionMismatch("uncertain system matrices are inconsistent"));
        }
        for v in [&self.v1, &self.v2] {
            if !super::is_symmetric(v) || v.clone().cholesky().is_none() {
                return Err(Error::DimensionMismatch(
                    "V1 and V2 must be symmetric positive definite",
                ));
            }
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::EpsilonInfeasible { epsilon: self.epsilon });
        }
        Ok(())
    }

    /// `(eps V2 + D2 D2^T)^-1`
    fn weighted_r_inv(&self) -> Result<SmallMatrix> {
        (&self.v2 * self.epsilon + &self.d2 * self.d2.transpose())
            .try_inverse()
            .ok_or(Error::Singular)
    }

    /// Terms `(A_bar, G, W)` of the filter Riccati equation in the form
    /// `A_bar Q + Q A_bar^T - Q G Q + W = 0`.
    fn filter_terms(&self) -> Result<(SmallMatrix, SmallMatrix, SmallMatrix)> {
        let eps = self.epsilon;
        let r_inv = self.weighted_r_inv()?;
        let a_bar = &self.a - &self.d1 * self.d2.transpose() * &r_inv * &self.c;
        let g = self.c.transpose() * &r_inv * &self.c * eps - self.e1.transpose() * &self.e1 * eps;
        let p = self.d1.ncols();
        let proj = DMatrix::<f64>::identity(p, p) - self.d2.transpose() * &r_inv * &self.d2;
        let w = &self.d1 * proj * self.d1.transpose() / eps + &self.v1;
        Ok((a_bar, g, w))
    }

    /// State matrix `A + eps Q E1^T E1` and gain `(eps Q C^T + D1 D2^T)(eps V2 + D2 D2^T)^-1`
    /// of the guaranteed-cost estimator built on `q_plus`.
    pub fn estimator(&self, q_plus: &SmallMatrix) -> Result<(SmallMatrix, SmallMatrix)> {
        let eps = self.epsilon;
        let r_inv = self.weighted_r_inv()?;
        let a_est = &self.a + q_plus * self.e1.transpose() * &self.e1 * eps;
        let gain = (q_plus * self.c.transpose() * eps + &self.d1 * self.d2.transpose()) * r_inv;
        Ok((a_est, gain))
    }
}

/// `Q+` alone: the stabilising, positive definite solution of the filter
/// Riccati equation, without requiring the auxiliary equation to be solvable.
pub fn solve_gc_filter_riccati(gp: &GcProblem) -> Result<SmallMatrix> {
    gp.validate()?;
    let (a_bar, g, w) = gp.filter_terms()?;
    let q = solve_riccati(&a_bar, &g, &w)?;
    if min_sym_eigenvalue(&q) <= 0.0 {
        return Err(Error::NoStabilizingSolution(
            "filter Riccati solution is not positive definite",
        ));
    }
    Ok(q)
}

/// Both Riccati equations of the guaranteed-cost estimator:
///
/// ```text
/// A S + S A^T + eps S E1^T E1 S + D1 D1^T / eps + V1 = 0          (S+ > 0)
/// A_bar Q + Q A_bar^T + eps Q E1^T E1 Q - eps Q C^T R_eps^-1 C Q
///     + D1 (I - D2^T R_eps^-1 D2) D1^T / eps + V1 = 0             (Q+ > 0)
/// ```
///
/// Fails with [`Error::EpsilonInfeasible`] when the first equation has no
/// stabilising positive solution, i.e. `epsilon` is beyond the feasible range.
pub fn solve_gc_riccati_pair(gp: &GcProblem) -> Result<GcSolution> {
    gp.validate()?;
    let eps = gp.epsilon;
    let g_aux = -(gp.e1.transpose() * &gp.e1) * eps;
    let w_aux = &gp.d1 * gp.d1.transpose() / eps + &gp.v1;
    let infeasible = Error::EpsilonInfeasible { epsilon: eps };
    let s_plus = match solve_riccati(&gp.a, &g_aux, &w_aux) {
        Ok(s) => s,
        Err(Error::NoStabilizingSolution(_)) | Err(Error::IllConditioned { .. }) => return Err(infeasible),
        Err(e) => return Err(e),
    };
    if min_sym_eigenvalue(&s_plus) <= 0.0 {
        return Err(infeasible);
    }
    let q_plus = solve_gc_filter_riccati(gp)?;
    Ok(GcSolution { s_plus, q_plus })
}
