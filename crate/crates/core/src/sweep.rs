//! One-parameter sweeps producing figure-ready tables.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{effective_noise_power, effective_quantum_efficiency, mse_uncertain};
use crate::design::{design, optimal_limit, FilterKind};
use crate::error::{Error, Result};
use crate::model::{validate, PlantParams, Uncertainty};

pub const DEFAULT_POINTS: usize = 201;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Delta,
    Mu,
    Alpha2,
    Kappa,
    Lambda,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::Delta => "delta",
            Axis::Mu => "mu",
            Axis::Alpha2 => "alpha2",
            Axis::Kappa => "kappa",
            Axis::Lambda => "lambda",
        }
    }

    /// Natural default range for a grid along this axis.
    pub fn default_range(self, base: &PlantParams) -> (f64, f64) {
        match self {
            Axis::Delta => (-1.0, 1.0),
            Axis::Mu => (0.0, 0.95),
            Axis::Alpha2 => (base.alpha2 * 1e-2, base.alpha2 * 1e2),
            Axis::Kappa => (base.kappa * 1e-2, base.kappa * 1e2),
            Axis::Lambda => (base.lambda * 1e-2, base.lambda * 1e2),
        }
    }

    /// Log spacing for the dimensional axes.
    pub fn is_logarithmic(self) -> bool {
        matches!(self, Axis::Alpha2 | Axis::Kappa | Axis::Lambda)
    }

    pub fn default_grid(self, base: &PlantParams, points: usize) -> Vec<f64> {
        let (lo, hi) = self.default_range(base);
        if self.is_logarithmic() {
            crate::design::log_grid(lo, hi, points)
        } else {
            linspace(lo, hi, points)
        }
    }

    fn apply(self, p: &mut PlantParams, u: &mut Uncertainty, x: f64) {
        match self {
            Axis::Delta => u.delta = x,
            Axis::Mu => u.mu = x,
            Axis::Alpha2 => p.alpha2 = x,
            Axis::Kappa => p.kappa = x,
            Axis::Lambda => p.lambda = x,
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Axis {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "delta" => Ok(Axis::Delta),
            "mu" => Ok(Axis::Mu),
            "alpha2" => Ok(Axis::Alpha2),
            "kappa" => Ok(Axis::Kappa),
            "lambda" => Ok(Axis::Lambda),
            other => Err(format!("unknown axis `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Sigma2,
    EtaEff,
    KappaEff,
}

impl FromStr for Metric {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "sigma2" | "mse" => Ok(Metric::Sigma2),
            "eta_eff" | "eta" => Ok(Metric::EtaEff),
            "kappa_eff" | "kappa" => Ok(Metric::KappaEff),
            other => Err(format!("unknown metric `{other}`")),
        }
    }
}

pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n)
            .map(|i| {
                if i == n - 1 {
                    hi
                } else {
                    lo + (hi - lo) * i as f64 / (n - 1) as f64
                }
            })
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub base: PlantParams,
    /// Held fixed unless it is the swept axis.
    pub uncertainty: Uncertainty,
    pub axis: Axis,
    pub grid: Vec<f64>,
    pub filters: Vec<FilterKind>,
    pub metrics: Vec<Metric>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub values: Vec<f64>,
    /// `column: reason` for every cell that could not be computed (stored as NaN).
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub columns: Vec<String>,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r.values[j]).collect())
    }
}

fn sigma_columns(kind: FilterKind) -> &'static [&'static str] {
    match kind {
        FilterKind::Kalman => &["sigma2_kalman"],
        FilterKind::Robust => &["sigma2_robust", "q_plus"],
        FilterKind::OptimalLimit => &["sigma2_opt"],
        FilterKind::Sql => &["p_sql"],
    }
}

/// Filters for which an effective efficiency or noise power is meaningful.
fn is_suboptimal(kind: FilterKind) -> bool {
    matches!(kind, FilterKind::Kalman | FilterKind::Robust)
}

pub fn columns(spec: &SweepSpec) -> Vec<String> {
    let mut cols = vec![spec.axis.name().to_string()];
    for m in &spec.metrics {
        for &k in &spec.filters {
            match m {
                Metric::Sigma2 => cols.extend(sigma_columns(k).iter().map(|s| s.to_string())),
                Metric::EtaEff if is_suboptimal(k) => cols.push(format!("eta_eff_{}", k.name())),
                Metric::KappaEff if is_suboptimal(k) => {
                    cols.push(format!("kappa_n_{}", k.name()));
                    cols.push(format!("kappa_eff_{}", k.name()));
                }
                _ => {}
            }
        }
    }
    cols
}

fn check_spec(spec: &SweepSpec) -> Result<()> {
    let fail = |s: &str| Err(Error::ConfigInvariantViolated(s.to_string()));
    if spec.filters.is_empty() {
        return fail("at least one filter must be selected");
    }
    if spec.metrics.is_empty() {
        return fail("at least one metric must be selected");
    }
    if spec.grid.is_empty() {
        return fail("sweep grid is empty");
    }
    if spec.grid.windows(2).any(|w| !(w[0] <= w[1])) {
        return fail("sweep grid must be sorted ascending");
    }
    let (lo, hi) = (spec.grid[0], spec.grid[spec.grid.len() - 1]);
    let ok = match spec.axis {
        Axis::Delta => lo >= -1.0 && hi <= 1.0,
        Axis::Mu => lo >= 0.0 && hi < 1.0,
        _ => lo > 0.0 && hi.is_finite(),
    };
    if !ok {
        return fail("sweep grid outside the valid range of its axis");
    }
    Ok(())
}

fn row(spec: &SweepSpec, x: f64) -> SweepRow {
    let (mut p, mut u) = (spec.base, spec.uncertainty);
    spec.axis.apply(&mut p, &mut u, x);
    let mut values = vec![x];
    let mut flags = Vec::new();
    let n_cols = columns(spec).len();
    if let Err(e) = validate(&p, &u) {
        values.resize(n_cols, f64::NAN);
        flags.push(format!("row: {e}"));
        return SweepRow { values, flags };
    }
    let push = |name: String, r: Result<f64>, values: &mut Vec<f64>, flags: &mut Vec<String>| match r {
        Ok(v) => values.push(v),
        Err(e) => {
            values.push(f64::NAN);
            flags.push(format!("{name}: {e}"));
        }
    };
    for m in &spec.metrics {
        for &k in &spec.filters {
            let f = design(k, &p, u);
            let sigma2 = || mse_uncertain(&p, u, &f).map(|r| r.1);
            match (m, k) {
                (Metric::Sigma2, FilterKind::Kalman) => push("sigma2_kalman".into(), sigma2(), &mut values, &mut flags),
                (Metric::Sigma2, FilterKind::Robust) => {
                    push("sigma2_robust".into(), sigma2(), &mut values, &mut flags);
                    values.push(f.error_value);
                }
                (Metric::Sigma2, FilterKind::OptimalLimit) => values.push(optimal_limit(&p, u)),
                (Metric::Sigma2, FilterKind::Sql) => values.push(f.error_value),
                (Metric::EtaEff, k) if is_suboptimal(k) => {
                    let r = sigma2().and_then(|e| effective_quantum_efficiency(&p, u, e));
                    push(format!("eta_eff_{}", k.name()), r, &mut values, &mut flags);
                }
                (Metric::KappaEff, k) if is_suboptimal(k) => {
                    match sigma2().and_then(|e| effective_noise_power(&p, u, e)) {
                        Ok(np) => values.extend([np.kappa_n, np.kappa_eff]),
                        Err(e) => {
                            values.extend([f64::NAN, f64::NAN]);
                            flags.push(format!("kappa_eff_{}: {e}", k.name()));
                        }
                    }
                }
                _ => {}
            }
        }
    }
    debug_assert_eq!(values.len(), n_cols);
    SweepRow { values, flags }
}

/// Evaluates every grid point independently; rows come back in grid order.
pub fn sweep(spec: &SweepSpec) -> Result<SweepTable> {
    check_spec(spec)?;
    let rows = spec.grid.par_iter().map(|&x| row(spec, x)).collect();
    Ok(SweepTable {
        columns: columns(spec),
        rows,
    })
}
