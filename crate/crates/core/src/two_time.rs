//! Steady-state two-time error correlations `<e(t) e(t - tau)>`.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{
    augmented_system, effective_noise_power, error_system, measurement_noise_intensity, mse_uncertain,
};
use crate::design::{design_kalman, design_robust, FilterDesign};
use crate::error::{Error, Result};
use crate::linsolve::{matrix_exp, scalar, solve_care, solve_sylvester_forced, solve_sylvester_raw, SmallMatrix};
use crate::model::{lambda_u, PlantParams, Uncertainty};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveKind {
    OptimalAddedNoise,
    SubKalman,
    SubRobust,
    EffectiveForKalman,
    EffectiveForRobust,
}

impl CurveKind {
    pub fn name(self) -> &'static str {
        match self {
            CurveKind::OptimalAddedNoise => "optimal_added_noise",
            CurveKind::SubKalman => "sub_kalman",
            CurveKind::SubRobust => "sub_robust",
            CurveKind::EffectiveForKalman => "effective_for_kalman",
            CurveKind::EffectiveForRobust => "effective_for_robust",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoTimeCurve {
    pub kind: CurveKind,
    pub tau_grid: Vec<f64>,
    pub values: Vec<f64>,
}

/// `tau = 0` followed by `n - 1` log-spaced lags ending at `5 / corner`.
pub fn default_tau_grid(corner: f64, n: usize) -> Vec<f64> {
    tau_grid_to(5.0 / corner, n)
}

/// `tau = 0` followed by `n - 1` log-spaced lags over three decades ending at `tau_max`.
pub fn tau_grid_to(tau_max: f64, n: usize) -> Vec<f64> {
    let mut g = vec![0.0];
    if n > 1 {
        g.extend(crate::design::log_grid(tau_max * 1e-3, tau_max, n - 1));
    }
    g
}

/// `[1, -1] X [1, -1]^T`
pub fn contract(x: &SmallMatrix) -> f64 {
    x[(0, 0)] - x[(0, 1)] - x[(1, 0)] + x[(1, 1)]
}

fn per_tau(tau_grid: &[f64], f: impl Fn(f64) -> Result<f64> + Sync) -> Result<Vec<f64>> {
    tau_grid.par_iter().map(|&t| f(t)).collect()
}

/// `P_S(t, t - tau)` of the plant-plus-filter state.
pub fn arbitrary_two_time_matrix(p: &PlantParams, u: Uncertainty, f: &FilterDesign, tau: f64) -> Result<SmallMatrix> {
    let (a, m) = augmented_system(p, u, f);
    solve_sylvester_forced(&a, &m, tau)
}

/// `<e(t) e(t - tau)>`, solved in error coordinates.
fn error_two_time(p: &PlantParams, u: Uncertainty, f: &FilterDesign, tau: f64) -> Result<f64> {
    let (a, m) = error_system(p, u, f);
    Ok(solve_sylvester_forced(&a, &m, tau)?[(0, 0)])
}

/// `P_S(t - tau, t)`, from the backward-lag equation `A X + X A^T + M exp(A^T tau) = 0`.
pub fn arbitrary_two_time_matrix_backward(
    p: &PlantParams,
    u: Uncertainty,
    f: &FilterDesign,
    tau: f64,
) -> Result<SmallMatrix> {
    let (a, m) = augmented_system(p, u, f);
    let c = m * matrix_exp(&a.transpose(), tau)?;
    solve_sylvester_raw(&a, &a.transpose(), &c)
}

pub fn arbitrary_two_time(
    p: &PlantParams,
    u: Uncertainty,
    f: &FilterDesign,
    tau_grid: &[f64],
    kind: CurveKind,
) -> Result<TwoTimeCurve> {
    if !f.is_stable() {
        return Err(Error::UnstableA { max_re: f.pole });
    }
    let values = per_tau(tau_grid, |t| error_two_time(p, u, f, t))?;
    Ok(TwoTimeCurve {
        kind,
        tau_grid: tau_grid.to_vec(),
        values,
    })
}

/// Closed form for a first-order filter with pole `A_e` and gain `B_e`.
pub fn arbitrary_two_time_closed(p: &PlantParams, u: Uncertainty, f: &FilterDesign, tau: f64) -> f64 {
    let (slow, fast) = arbitrary_two_time_terms(p, u, f, tau);
    slow + fast
}

/// The `exp(-lambda_u tau)` and `exp(A_e tau)` parts of the closed form. When
/// they have opposite signs their sum can lose digits in any evaluation order,
/// so `|slow| + |fast|` is the honest scale for comparisons.
///
/// `A_e^2 - lambda_u^2` and `(A_e + B_e)^2 - lambda_u^2` are factored through
/// the design rate so that a small gain keeps full precision.
pub fn arbitrary_two_time_terms(p: &PlantParams, u: Uncertainty, f: &FilterDesign, tau: f64) -> (f64, f64) {
    let lu = lambda_u(p, u);
    let (g, rate, k) = (f.gain, f.rate, p.kappa);
    let r = measurement_noise_intensity(f.kind, p);
    let corner = rate + g;
    let d = (corner + lu) * (g + (rate - lu));
    let slow = (-lu * tau).exp() * k * (rate - lu) * (rate + lu) / (2.0 * lu * d);
    let fast = (-corner * tau).exp() * (g * k * (2.0 * rate + g) / (2.0 * corner * d) + g * g * r / (2.0 * corner));
    (slow, fast)
}

struct AddedNoiseFilter {
    f: SmallMatrix,
    m: SmallMatrix,
}

fn added_noise_filter(p: &PlantParams, u: Uncertainty, kappa_n: f64) -> Result<AddedNoiseFilter> {
    if !(kappa_n >= 0.0) {
        return Err(Error::NegativeKappaN { kappa_n });
    }
    let lu = lambda_u(p, u);
    let a = DMatrix::from_row_slice(2, 2, &[-lu, 0.0, 0.0, -lu]);
    let c = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
    let b = DMatrix::from_row_slice(2, 2, &[p.kappa.sqrt(), 0.0, 0.0, kappa_n.sqrt()]);
    let d = scalar(0.5 / p.amplitude());
    let pc = solve_care(&a, &c, &b, &d)?;
    let gain = &pc * c.transpose() * (4.0 * p.flux());
    let f = &a - &gain * &c;
    let m = &b * b.transpose() + &gain * gain.transpose() * (0.25 / p.flux());
    Ok(AddedNoiseFilter { f, m })
}

/// Error correlation of the phase component under the optimal filter for the
/// phase plus an added OU noise of power `kappa_n` and rate `lambda_u`.
pub fn optimal_added_noise_two_time(
    p: &PlantParams,
    u: Uncertainty,
    kappa_n: f64,
    tau_grid: &[f64],
    kind: CurveKind,
) -> Result<TwoTimeCurve> {
    let sys = added_noise_filter(p, u, kappa_n)?;
    let values = per_tau(tau_grid, |t| Ok(solve_sylvester_forced(&sys.f, &sys.m, t)?[(0, 0)]))?;
    Ok(TwoTimeCurve {
        kind,
        tau_grid: tau_grid.to_vec(),
        values,
    })
}

pub fn optimal_added_noise_two_time_closed(p: &PlantParams, u: Uncertainty, kappa_n: f64, tau: f64) -> f64 {
    let lu = lambda_u(p, u);
    let k = p.kappa;
    let s = k + kappa_n;
    let beta = (4.0 * p.flux() * s + lu * lu).sqrt();
    // (beta - lu) / (4 |alpha|^2 s) = 1 / (beta + lu)
    (-lu * tau).exp() * k * kappa_n / (2.0 * lu * s) + (-beta * tau).exp() * k * k / (s * (beta + lu))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchResiduals {
    /// `A_e + beta`, rad/s
    pub r1: f64,
    /// dimensionless
    pub r2: f64,
    /// rad^2
    pub r3: f64,
    /// Residuals in normalized units: `r1 / beta`, `r2`, `r3 / rhs3`.
    pub normalized: [f64; 3],
}

impl MatchResiduals {
    pub fn max_abs(&self) -> f64 {
        self.normalized.iter().fold(0.0, |a, r| a.max(r.abs()))
    }
}

/// Conditions under which the first-order filter's two-time curve would equal
/// the added-noise optimal one for every lag.
pub fn match_residuals(p: &PlantParams, u: Uncertainty, f: &FilterDesign, kappa_n: f64) -> Result<MatchResiduals> {
    let lu = lambda_u(p, u);
    let (ae, be, k) = (f.pole, f.gain, p.kappa);
    let d = (ae - lu) * (ae + lu);
    if d.abs() < 1e-12 * lu * lu {
        return Err(Error::DegenerateDenominator(d));
    }
    let s = k + kappa_n;
    let a2 = p.flux();
    let beta = (4.0 * a2 * s + lu * lu).sqrt();
    let r1 = ae + beta;
    // A_e + B_e = -rate
    let r2 = (f.rate - lu) * (f.rate + lu) / d - kappa_n / s;
    let lhs3 = be * k * (2.0 * ae + be) / (2.0 * ae * d) - be * be / (8.0 * a2 * ae);
    let rhs3 = k * k * (beta - lu) / (4.0 * a2 * s * s);
    let r3 = lhs3 - rhs3;
    Ok(MatchResiduals {
        r1,
        r2,
        r3,
        normalized: [r1 / beta, r2, r3 / rhs3],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualScan {
    pub best_kappa_n: f64,
    pub min_max_residual: f64,
}

/// Minimum over a uniform `kappa_n` grid on `[0, kappa_n_max]` of the largest
/// normalized match residual.
pub fn match_residual_scan(
    p: &PlantParams,
    u: Uncertainty,
    f: &FilterDesign,
    kappa_n_max: f64,
    points: usize,
) -> Result<ResidualScan> {
    let mut best = ResidualScan {
        best_kappa_n: f64::NAN,
        min_max_residual: f64::INFINITY,
    };
    for i in 0..points {
        let kn = kappa_n_max * i as f64 / (points.max(2) - 1) as f64;
        let m = match_residuals(p, u, f, kn)?.max_abs();
        if m < best.min_max_residual {
            best = ResidualScan {
                best_kappa_n: kn,
                min_max_residual: m,
            };
        }
    }
    Ok(best)
}

/// The four curves compared at matched mean-square error: each suboptimal
/// filter and the optimal filter for the correspondingly noisier phase.
pub fn matched_curve_set(p: &PlantParams, u: Uncertainty, tau_grid: &[f64]) -> Result<Vec<TwoTimeCurve>> {
    let mut out = Vec::with_capacity(4);
    for (f, sub, eff) in [
        (design_kalman(p), CurveKind::SubKalman, CurveKind::EffectiveForKalman),
        (
            design_robust(p, u.mu),
            CurveKind::SubRobust,
            CurveKind::EffectiveForRobust,
        ),
    ] {
        let (_, e) = mse_uncertain(p, u, &f)?;
        let np = effective_noise_power(p, u, e)?;
        out.push(arbitrary_two_time(p, u, &f, tau_grid, sub)?);
        out.push(optimal_added_noise_two_time(p, u, np.kappa_n, tau_grid, eff)?);
    }
    Ok(out)
}
