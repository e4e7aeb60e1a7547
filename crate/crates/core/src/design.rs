//! First-order estimator designs for the phase model.
//!
//! Every design has the form
//!
//! ```text
//! dphi_hat/dt = pole * phi_hat + gain * phi + (noise on phi)
//!             = (pole + gain) * phi_hat + gain * (theta - phi_hat)
//! ```
//!
//! and so is fully described by `gain` (B_e) and `pole` (A_e < 0).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linsolve::{scalar, solve_gc_filter_riccati, solve_gc_riccati_pair, GcProblem, SmallMatrix};
use crate::model::{lambda_u, PlantParams, TransferFunction1, Uncertainty};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterKind {
    Kalman,
    Robust,
    Sql,
    #[serde(rename = "optimal")]
    OptimalLimit,
}

impl FilterKind {
    pub const ALL: [FilterKind; 4] = [
        FilterKind::Kalman,
        FilterKind::Robust,
        FilterKind::OptimalLimit,
        FilterKind::Sql,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FilterKind::Kalman => "kalman",
            FilterKind::Robust => "robust",
            FilterKind::Sql => "sql",
            FilterKind::OptimalLimit => "optimal",
        }
    }
}

impl fmt::Display for FilterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FilterKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "kalman" => Ok(FilterKind::Kalman),
            "robust" => Ok(FilterKind::Robust),
            "sql" => Ok(FilterKind::Sql),
            "optimal" => Ok(FilterKind::OptimalLimit),
            other => Err(format!(
                "unknown filter '{other}' (expected kalman, robust, sql, optimal)"
            )),
        }
    }
}

/// A designed first-order estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterDesign {
    pub kind: FilterKind,
    /// Input gain B_e multiplying the innovation (1/s).
    pub gain: f64,
    /// State coefficient A_e of the error-driven form; always negative.
    pub pole: f64,
    /// Decay rate of the model the filter was built for; `pole = -(rate + gain)`.
    pub rate: f64,
    /// Corner frequency `-pole` (rad/s).
    pub corner: f64,
    /// Steady-state error the design is built around (rad^2): P+ for Kalman,
    /// the guaranteed cost Q+ for the robust filter, P_SQL, or sigma^2_opt.
    pub error_value: f64,
    /// Optimal scaling parameter (robust filter only, else 0).
    pub epsilon_opt: f64,
    pub tf: TransferFunction1,
}

impl FilterDesign {
    fn first_order(kind: FilterKind, plant_rate: f64, gain: f64, error_value: f64, epsilon_opt: f64) -> Self {
        let pole = -(plant_rate + gain);
        Self {
            kind,
            gain,
            pole,
            rate: plant_rate,
            corner: -pole,
            error_value,
            epsilon_opt,
            tf: TransferFunction1 { gain, pole: -pole },
        }
    }

    /// Coefficient on `phi_hat` in `dphi_hat/dt = drift * phi_hat + gain * (theta - phi_hat)`.
    pub fn drift(&self) -> f64 {
        -self.rate
    }

    pub fn is_stable(&self) -> bool {
        self.pole < 0.0
    }
}

/// Optimal estimator for a known decay rate: shared by the Kalman filter,
/// the robust filter (at `lambda (1 - mu)`) and the pointwise optimal limit.
/// `4 kappa |alpha|^2 / (rate + sqrt(rate^2 + 4 kappa |alpha|^2))` is the
/// cancellation-free form of `-rate + sqrt(...)`.
fn optimal_first_order(kind: FilterKind, p: &PlantParams, rate: f64, epsilon_opt: f64) -> FilterDesign {
    let flux = p.flux();
    let root = (rate * rate + 4.0 * p.kappa * flux).sqrt();
    let error = p.kappa / (rate + root);
    let gain = 4.0 * flux * error;
    FilterDesign::first_order(kind, rate, gain, error, epsilon_opt)
}

/// Steady-state Kalman filter for the nominal model (`delta = 0`).
pub fn design_kalman(p: &PlantParams) -> FilterDesign {
    optimal_first_order(FilterKind::Kalman, p, p.lambda, 0.0)
}

/// Optimal scaling parameter of the guaranteed-cost bound.
pub fn epsilon_opt(p: &PlantParams, mu: f64) -> f64 {
    let lr = p.lambda * (1.0 - mu);
    let root = (lr * lr + 4.0 * p.kappa * p.flux()).sqrt();
    (p.lambda * mu * (1.0 - mu) + mu * root) / (p.kappa * p.lambda)
}

/// Guaranteed-cost bound `Q+(eps)` for a given scaling parameter.
pub fn robust_bound(p: &PlantParams, mu: f64, eps: f64) -> f64 {
    let w = mu * mu / eps + p.kappa;
    let g = 4.0 * p.flux() - eps * p.lambda * p.lambda;
    w / (p.lambda + (p.lambda * p.lambda + g * w).sqrt())
}

/// Robust guaranteed-cost filter for uncertainty level `mu`; independent of `delta`.
pub fn design_robust(p: &PlantParams, mu: f64) -> FilterDesign {
    optimal_first_order(FilterKind::Robust, p, p.lambda * (1.0 - mu), epsilon_opt(p, mu))
}

/// Dual-homodyne (heterodyne) Kalman filter, whose error is the SQL.
pub fn design_sql(p: &PlantParams, u: Uncertainty) -> FilterDesign {
    let lu = lambda_u(p, u);
    let two_k_flux = 2.0 * p.kappa * p.flux();
    let gain = two_k_flux / (lu + (lu * lu + two_k_flux).sqrt());
    let error = gain / (2.0 * p.flux());
    FilterDesign::first_order(FilterKind::Sql, lu, gain, error, 0.0)
}

/// Filter that knows `lambda_u` exactly.
pub fn design_optimal(p: &PlantParams, u: Uncertainty) -> FilterDesign {
    optimal_first_order(FilterKind::OptimalLimit, p, lambda_u(p, u), 0.0)
}

/// Minimum achievable mean-square error when `lambda_u` is known.
pub fn optimal_limit(p: &PlantParams, u: Uncertainty) -> f64 {
    design_optimal(p, u).error_value
}

pub fn design(kind: FilterKind, p: &PlantParams, u: Uncertainty) -> FilterDesign {
    match kind {
        FilterKind::Kalman => design_kalman(p),
        FilterKind::Robust => design_robust(p, u.mu),
        FilterKind::Sql => design_sql(p, u),
        FilterKind::OptimalLimit => design_optimal(p, u),
    }
}

/// Scalar uncertain system of the phase problem in norm-bounded form:
/// `A = -lambda`, `D1 = mu`, `E1 = lambda`, `D2 = 0`, `V1 = kappa`, `V2 = 1/(4|alpha|^2)`.
pub fn scalar_gc_problem(p: &PlantParams, mu: f64, epsilon: f64) -> GcProblem {
    GcProblem {
        a: scalar(-p.lambda),
        c: scalar(1.0),
        d1: scalar(mu),
        d2: scalar(0.0),
        e1: scalar(p.lambda),
        v1: scalar(p.kappa),
        v2: scalar(0.25 / p.flux()),
        epsilon,
    }
}

/// Which values of epsilon count as admissible in [`design_gc_matrix`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum EpsilonRule {
    /// Both the auxiliary `S+` equation and the filter `Q+` equation must
    /// have stabilising positive solutions.
    #[default]
    RequireAuxiliary,
    /// Only the filter `Q+` equation must be solvable. This is the rule
    /// under which the closed-form scalar `epsilon_opt` is attained.
    FilterOnly,
}

/// Matrix guaranteed-cost estimator `dx_hat/dt = a_est x_hat + gain (y - C x_hat)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GcEstimator {
    pub a_est: SmallMatrix,
    pub gain: SmallMatrix,
    pub q_plus: SmallMatrix,
    pub epsilon: f64,
    /// Smallest and largest admissible epsilon observed on the grid.
    pub feasible_range: (f64, f64),
}

impl GcEstimator {
    pub fn trace(&self) -> f64 {
        self.q_plus.trace()
    }
}

fn gc_bound(gp: &GcProblem, rule: EpsilonRule) -> Result<SmallMatrix> {
    match rule {
        EpsilonRule::RequireAuxiliary => solve_gc_riccati_pair(gp).map(|s| s.q_plus),
        EpsilonRule::FilterOnly => solve_gc_filter_riccati(gp),
    }
}

/// Optimal guaranteed-cost estimator: minimises `trace(Q+)` over `eps_grid`,
/// then refines the minimiser by golden-section search in `log(eps)`
/// between the neighbouring grid points.
pub fn design_gc_matrix(gp: &GcProblem, eps_grid: &[f64], rule: EpsilonRule) -> Result<GcEstimator> {
    gp.validate().or_else(|e| match e {
        // the template's own epsilon is irrelevant here
        Error::EpsilonInfeasible { .. } => Ok(()),
        e => Err(e),
    })?;
    let eval = |eps: f64| -> Option<f64> {
        if !(eps > 0.0) {
            return None;
        }
        gc_bound(&gp.with_epsilon(eps), rule).ok().map(|q| q.trace())
    };

    let values: Vec<Option<f64>> = eps_grid.iter().map(|&e| eval(e)).collect();
    let feasible: Vec<f64> = eps_grid
        .iter()
        .zip(&values)
        .filter_map(|(&e, v)| v.map(|_| e))
        .collect();
    if feasible.is_empty() {
        return Err(Error::AllEpsilonInfeasible);
    }
    let feasible_range = (
        feasible.iter().cloned().fold(f64::INFINITY, f64::min),
        feasible.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
    );

    let (best_idx, mut best_val) = values
        .iter()
        .enumerate()
        .filter_map(|(i, v)| v.map(|v| (i, v)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("nonempty");
    let mut best_eps = eps_grid[best_idx];

    let lo = if best_idx > 0 { eps_grid[best_idx - 1] } else { best_eps };
    let hi = if best_idx + 1 < eps_grid.len() {
        eps_grid[best_idx + 1]
    } else {
        best_eps
    };
    if lo > 0.0 && hi > lo {
        let f = |x: f64| eval(x.exp()).unwrap_or(f64::INFINITY);
        let (mut a, mut b) = (lo.ln(), hi.ln());
        let gr = 0.5 * (5f64.sqrt() - 1.0);
        let mut c = b - gr * (b - a);
        let mut d = a + gr * (b - a);
        let (mut fc, mut fd) = (f(c), f(d));
        for _ in 0..200 {
            if (b - a).abs() < 1e-13 {
                break;
            }
            if fc < fd {
                b = d;
                d = c;
                fd = fc;
                c = b - gr * (b - a);
                fc = f(c);
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + gr * (b - a);
                fd = f(d);
            }
            for (x, fx) in [(c, fc), (d, fd)] {
                if fx < best_val {
                    best_val = fx;
                    best_eps = x.exp();
                }
            }
        }
    }

    let gp_best = gp.with_epsilon(best_eps);
    let q_plus = gc_bound(&gp_best, rule)?;
    let (a_est, gain) = gp_best.estimator(&q_plus)?;
    Ok(GcEstimator {
        a_est,
        gain,
        q_plus,
        epsilon: best_eps,
        feasible_range,
    })
}

/// `n` log-spaced points on `[lo, hi]`, endpoints exact.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| match i {
            0 => lo,
            _ if i == n - 1 => hi,
            _ => (a + (b - a) * i as f64 / (n - 1) as f64).exp(),
        })
        .collect()
}
