//! Mean-square error of a first-order design applied to the uncertain plant,
//! worst-case orderings, effective quantum efficiency and effective noise power.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::design::{design_kalman, design_robust, design_sql, optimal_limit, FilterDesign, FilterKind};
use crate::error::{Error, Result};
use crate::linsolve::{solve_lyapunov, SmallMatrix};
use crate::model::{lambda_u, PlantParams, Uncertainty};

/// Steady-state second moments of `[phi, phi_hat]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentedCov {
    /// <phi^2>
    pub p1: f64,
    /// <phi phi_hat>
    pub p2: f64,
    /// <phi_hat^2>
    pub p3: f64,
}

impl AugmentedCov {
    pub fn sigma2(&self) -> f64 {
        self.p1 - 2.0 * self.p2 + self.p3
    }

    pub fn is_psd(&self) -> bool {
        self.p1 > 0.0 && self.p1 * self.p3 - self.p2 * self.p2 >= -1e-12 * self.p1 * self.p3
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MseReport {
    pub sigma2: f64,
    pub optimal_limit: f64,
    pub sql: f64,
    pub ratio_to_sql: f64,
}

/// Measurement-noise intensity seen by a design. The SQL filter sees the
/// dual-homodyne current, which carries two independent vacuum noises.
pub fn measurement_noise_intensity(kind: FilterKind, p: &PlantParams) -> f64 {
    let single = 0.25 / p.flux();
    match kind {
        FilterKind::Sql => 2.0 * single,
        _ => single,
    }
}

/// Drift and diffusion `(A_bar, B_bar B_bar^T)` of the plant-plus-filter state.
pub fn augmented_system(p: &PlantParams, u: Uncertainty, f: &FilterDesign) -> (SmallMatrix, SmallMatrix) {
    let lu = lambda_u(p, u);
    let a = DMatrix::from_row_slice(2, 2, &[-lu, 0.0, f.gain, f.pole]);
    let r = measurement_noise_intensity(f.kind, p);
    let m = DMatrix::from_row_slice(2, 2, &[p.kappa, 0.0, 0.0, f.gain * f.gain * r]);
    (a, m)
}

/// The same system in coordinates `[phi - phi_hat, phi]`. The error variance
/// is then a diagonal entry instead of the difference `P1 - 2 P2 + P3` of
/// nearly equal terms, which matters when `kappa / lambda_u` is large.
pub fn error_system(p: &PlantParams, u: Uncertainty, f: &FilterDesign) -> (SmallMatrix, SmallMatrix) {
    let lu = lambda_u(p, u);
    let a = DMatrix::from_row_slice(2, 2, &[f.pole, f.rate - lu, 0.0, -lu]);
    let r = measurement_noise_intensity(f.kind, p);
    let k = p.kappa;
    let m = DMatrix::from_row_slice(2, 2, &[k + f.gain * f.gain * r, k, k, k]);
    (a, m)
}

/// Maps a second-moment matrix from `[phi - phi_hat, phi]` back to `[phi, phi_hat]`.
pub fn from_error_coordinates(z: &SmallMatrix) -> SmallMatrix {
    let t_inv = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 1.0]);
    &t_inv * z * t_inv.transpose()
}

/// Steady-state covariance of plant and filter via the Lyapunov equation.
pub fn mse_uncertain(p: &PlantParams, u: Uncertainty, f: &FilterDesign) -> Result<(AugmentedCov, f64)> {
    if !f.is_stable() {
        return Err(Error::UnstableA { max_re: f.pole });
    }
    let (a, m) = error_system(p, u, f);
    let z = solve_lyapunov(&a, &m)?;
    let ps = from_error_coordinates(&z);
    let cov = AugmentedCov {
        p1: ps[(0, 0)],
        p2: ps[(0, 1)],
        p3: ps[(1, 1)],
    };
    Ok((cov, z[(0, 0)]))
}

/// Closed-form moments for an arbitrary first-order filter with
/// `Omega = gain`, `Lambda = -pole`.
pub fn augmented_cov_closed(p: &PlantParams, u: Uncertainty, f: &FilterDesign) -> AugmentedCov {
    let lu = lambda_u(p, u);
    let (om, big) = (f.gain, -f.pole);
    let r = measurement_noise_intensity(f.kind, p);
    let p1 = p.kappa / (2.0 * lu);
    let p2 = om * p.kappa / (2.0 * lu * (big + lu));
    let p3 = om * om * r / (2.0 * big) + om * om * p.kappa / (2.0 * big * lu * (big + lu));
    AugmentedCov { p1, p2, p3 }
}

/// Kalman filter error on the uncertain plant.
pub fn sigma_kalman_closed(p: &PlantParams, u: Uncertainty) -> f64 {
    let k = design_kalman(p).gain;
    let (lam, md) = (p.lambda, u.mu * u.delta);
    let kl = k + lam;
    p.kappa * (lam + kl * (1.0 + md)) / (2.0 * (1.0 + md) * kl * (k + 2.0 * lam + md * lam))
        + k * k / (8.0 * p.flux() * kl)
}

/// Robust filter error on the uncertain plant.
pub fn sigma_robust_closed(p: &PlantParams, u: Uncertainty) -> f64 {
    let r = design_robust(p, u.mu);
    let (lam, md) = (p.lambda, u.mu * u.delta);
    let j = r.corner;
    let one_m = 1.0 - u.mu;
    p.kappa * (lam * one_m * one_m + j * (1.0 + md)) / (2.0 * j * (1.0 + md) * (lam + md * lam + j))
        + r.gain * r.gain / (8.0 * p.flux() * j)
}

pub fn mse_report(p: &PlantParams, u: Uncertainty, f: &FilterDesign) -> Result<MseReport> {
    let (_, sigma2) = mse_uncertain(p, u, f)?;
    let sql = design_sql(p, u).error_value;
    Ok(MseReport {
        sigma2,
        optimal_limit: optimal_limit(p, u),
        sql,
        ratio_to_sql: sigma2 / sql,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorstCase {
    /// sigma^2 at delta = -1
    pub sigma2: f64,
    /// sigma^2 was strictly decreasing on an 11-point delta grid.
    pub monotone: bool,
}

/// Worst-case error, taken at `delta = -1`.
pub fn worst_case(p: &PlantParams, mu: f64, f: &FilterDesign) -> Result<WorstCase> {
    let mut prev = f64::INFINITY;
    let mut monotone = true;
    let mut at_minus_one = f64::NAN;
    for i in 0..=10 {
        let delta = -1.0 + 0.2 * i as f64;
        let (_, s) = mse_uncertain(p, Uncertainty::new(mu, delta), f)?;
        if i == 0 {
            at_minus_one = s;
        }
        if mu > 0.0 && !(s < prev) {
            monotone = false;
        }
        prev = s;
    }
    Ok(WorstCase {
        sigma2: at_minus_one,
        monotone,
    })
}

/// One inequality: `lhs <= rhs` holds when `margin >= 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ordering {
    pub margin: f64,
    /// `margin / max(|lhs|, |rhs|)`
    pub relative: f64,
    pub holds: bool,
}

impl Ordering {
    pub const TOL: f64 = 1e-12;

    fn new(smaller: f64, larger: f64) -> Self {
        let margin = larger - smaller;
        let relative = margin / smaller.abs().max(larger.abs()).max(f64::MIN_POSITIVE);
        Self {
            margin,
            relative,
            holds: relative >= -Self::TOL,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrderingReport {
    /// Q+ <= sigma_K^2(delta = -1)
    pub robust_vs_kalman: Ordering,
    /// Q+ <= P_SQL(delta = -1)
    pub robust_vs_sql: Ordering,
    /// sqrt(x + 4y) <= 2 sqrt(x + 2y) - sqrt(x),  x = lambda^2 (1-mu)^2, y = kappa |alpha|^2
    pub sql_inequality: Ordering,
}

impl OrderingReport {
    pub fn all_hold(&self) -> bool {
        self.robust_vs_kalman.holds && self.robust_vs_sql.holds && self.sql_inequality.holds
    }
}

pub fn check_orderings(p: &PlantParams, mu: f64) -> OrderingReport {
    let worst = Uncertainty::worst(mu);
    let q = design_robust(p, mu).error_value;
    let sk = sigma_kalman_closed(p, worst);
    let sql = design_sql(p, worst).error_value;
    let lr = p.lambda * (1.0 - mu);
    let y = p.kappa * p.flux();
    let lhs = 2.0 * (lr * lr + 2.0 * y).sqrt() - lr;
    let rhs = (lr * lr + 4.0 * y).sqrt();
    OrderingReport {
        robust_vs_kalman: Ordering::new(q, sk),
        robust_vs_sql: Ordering::new(q, sql),
        sql_inequality: Ordering::new(rhs, lhs),
    }
}

/// Detector efficiency at which the optimal filter's error equals `e`.
pub fn effective_quantum_efficiency(p: &PlantParams, u: Uncertainty, e: f64) -> Result<f64> {
    let lu = lambda_u(p, u);
    let prior = p.kappa / (2.0 * lu);
    if !(e < prior) {
        return Err(Error::EstimateWorseThanPrior { e, prior });
    }
    let optimal = optimal_limit(p, u);
    if e < optimal * (1.0 - 1e-12) {
        return Err(Error::BetterThanOptimal { e, optimal });
    }
    let eta = (p.kappa - 2.0 * e * lu) / (4.0 * p.flux() * e * e);
    Ok(eta.min(1.0))
}

/// Optimal error at efficiency `eta`; inverse of [`effective_quantum_efficiency`].
pub fn optimal_error_at_efficiency(p: &PlantParams, u: Uncertainty, eta: f64) -> f64 {
    let lu = lambda_u(p, u);
    let y = 4.0 * p.kappa * eta * p.flux();
    p.kappa / (lu + (lu * lu + y).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoisePower {
    pub kappa_n: f64,
    pub kappa_eff: f64,
}

/// Added OU noise power (with `lambda_n = lambda_u`) at which the optimal
/// filter for the noisier phase has error `e` on the original phase.
pub fn effective_noise_power(p: &PlantParams, u: Uncertainty, e: f64) -> Result<NoisePower> {
    let lu = lambda_u(p, u);
    let s = p.kappa - 2.0 * lu * e;
    if !(s > 0.0) {
        return Err(Error::PriorBoundViolated { e });
    }
    let a = p.amplitude();
    // 2|a|e - sqrt(s) = (4 a^2 e^2 + 2 lu e - kappa) / (2|a|e + sqrt(s))
    let gap = (4.0 * p.flux() * e * e + 2.0 * lu * e - p.kappa) / (2.0 * a * e + s.sqrt());
    let kappa_n = p.kappa * lu * gap / (a * s);
    if kappa_n < -1e-12 * p.kappa {
        return Err(Error::NegativeKappaN { kappa_n });
    }
    let kappa_n = kappa_n.max(0.0);
    Ok(NoisePower {
        kappa_n,
        kappa_eff: p.kappa + kappa_n,
    })
}

/// Optimal error covariance `[[P1, P2], [P2, P3]]` of the phase plus an
/// independent OU noise (rate `lambda_u`, power `kappa_n`), measured jointly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AddedNoiseCov {
    pub p1: f64,
    pub p2: f64,
    pub p3: f64,
    /// `sqrt(4 |alpha|^2 (kappa + kappa_n) + lambda_u^2)`
    pub beta: f64,
}

pub fn added_noise_cov(p: &PlantParams, u: Uncertainty, kappa_n: f64) -> AddedNoiseCov {
    let lu = lambda_u(p, u);
    let k = p.kappa;
    let total = k + kappa_n;
    let beta = (4.0 * p.flux() * total + lu * lu).sqrt();
    let inv = 1.0 / (beta + lu);
    let half = 0.5 / lu;
    AddedNoiseCov {
        p1: k / total * (kappa_n * half + k * inv),
        p2: k * kappa_n / total * (inv - half),
        p3: kappa_n / total * (k * half + kappa_n * inv),
        beta,
    }
}
