use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use robust_phase::analysis::{
    added_noise_cov, check_orderings, effective_noise_power, effective_quantum_efficiency, mse_uncertain,
    optimal_error_at_efficiency, sigma_robust_closed,
};
use robust_phase::design::{design, design_kalman, design_robust, optimal_limit, FilterKind};
use robust_phase::model::{PlantParams, Uncertainty};
use robust_phase::simulate::{run_closed_loop, SimConfig};
use robust_phase::sweep::{sweep, Metric, SweepSpec};
use robust_phase::two_time::{arbitrary_two_time_closed, match_residuals, matched_curve_set, tau_grid_to};

use crate::error::CliError;
use crate::spec::{Command, RunSpec, Sweep};

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(u64),
    Text(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub cells: Vec<Cell>,
    pub flags: Vec<String>,
}

impl Row {
    fn nums(values: impl IntoIterator<Item = f64>) -> Self {
        Row {
            cells: values.into_iter().map(Cell::Num).collect(),
            flags: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Row>,
    pub notes: Vec<String>,
    /// Nonzero only for `verify`.
    pub violations: usize,
}

impl Table {
    fn new(columns: &[&str]) -> Self {
        Table {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            ..Table::default()
        }
    }
}

pub fn execute(spec: &RunSpec) -> Result<Table, CliError> {
    spec.validate()?;
    let (p, u) = (&spec.params, spec.uncertainty);
    match &spec.command {
        Command::Design { filters } => Ok(design_table(p, u, filters)),
        Command::MseSweep(s) | Command::WorstCase(s) => sweep_table(p, u, s, Metric::Sigma2),
        Command::Efficiency(s) => sweep_table(p, u, s, Metric::EtaEff),
        Command::NoisePower(s) => sweep_table(p, u, s, Metric::KappaEff),
        Command::TwoTime { tau_max, points } => two_time_table(p, u, *tau_max, *points),
        Command::Simulate { filters, sim } => simulate_table(p, u, filters, sim),
        Command::Verify { draws, seed } => Ok(verify_table(*draws, *seed)),
    }
}

fn design_table(p: &PlantParams, u: Uncertainty, filters: &[FilterKind]) -> Table {
    let mut t = Table::new(&[
        "filter",
        "gain",
        "pole",
        "corner",
        "error_value",
        "epsilon_opt",
        "sigma2",
    ]);
    for &k in filters {
        let f = design(k, p, u);
        let mut row = Row::nums([f.gain, f.pole, f.corner, f.error_value, f.epsilon_opt]);
        row.cells.insert(0, Cell::Text(k.name().into()));
        match mse_uncertain(p, u, &f) {
            Ok((_, s)) => row.cells.push(Cell::Num(s)),
            Err(e) => {
                row.cells.push(Cell::Num(f64::NAN));
                row.flags.push(format!("sigma2: {e}"));
            }
        }
        t.rows.push(row);
    }
    t
}

fn sweep_table(p: &PlantParams, u: Uncertainty, s: &Sweep, metric: Metric) -> Result<Table, CliError> {
    let table = sweep(&SweepSpec {
        base: *p,
        uncertainty: u,
        axis: s.axis,
        grid: s.grid.values(),
        filters: s.filters.clone(),
        metrics: vec![metric],
    })?;
    Ok(Table {
        columns: table.columns,
        rows: table
            .rows
            .into_iter()
            .map(|r| Row {
                cells: r.values.into_iter().map(Cell::Num).collect(),
                flags: r.flags,
            })
            .collect(),
        ..Table::default()
    })
}

fn two_time_table(p: &PlantParams, u: Uncertainty, tau_max: f64, points: usize) -> Result<Table, CliError> {
    let grid = tau_grid_to(tau_max, points);
    let curves = matched_curve_set(p, u, &grid)?;
    let mut t = Table {
        columns: std::iter::once("tau".to_string())
            .chain(curves.iter().map(|c| c.kind.name().to_string()))
            .collect(),
        ..Table::default()
    };
    for (i, &tau) in grid.iter().enumerate() {
        t.rows.push(Row::nums(
            std::iter::once(tau).chain(curves.iter().map(|c| c.values[i])),
        ));
    }
    for f in [design_kalman(p), design_robust(p, u.mu)] {
        let (_, e) = mse_uncertain(p, u, &f)?;
        let np = effective_noise_power(p, u, e)?;
        let r = match_residuals(p, u, &f, np.kappa_n)?;
        t.notes.push(format!("kappa_n_{} = {:.16e}", f.kind, np.kappa_n));
        t.notes
            .push(format!("match_residual_{} = {:.16e}", f.kind, r.max_abs()));
    }
    Ok(t)
}

fn simulate_table(p: &PlantParams, u: Uncertainty, filters: &[FilterKind], sim: &SimConfig) -> Result<Table, CliError> {
    let long = sim.tau_grid.is_some();
    let mut t = if long {
        Table::new(&["filter", "tau", "value", "std_error", "analytic", "z"])
    } else {
        Table::new(&["filter", "mse", "std_error", "analytic", "z", "n_effective"])
    };
    for &k in filters {
        let f = design(k, p, u);
        let r = run_closed_loop(p, u, &f, sim)?;
        let name = || Cell::Text(k.name().into());
        if let Some(tt) = &r.two_time {
            for j in 0..tt.tau_grid.len() {
                let exact = arbitrary_two_time_closed(p, u, &f, tt.tau_grid[j]);
                let mut row = Row::nums([
                    tt.tau_grid[j],
                    tt.values[j],
                    tt.std_error[j],
                    exact,
                    (tt.values[j] - exact) / tt.std_error[j],
                ]);
                row.cells.insert(0, name());
                row.flags = tt.warnings.clone();
                t.rows.push(row);
            }
        } else {
            let (_, exact) = mse_uncertain(p, u, &f)?;
            let mut row = Row::nums([r.mse, r.std_error, exact, (r.mse - exact) / r.std_error]);
            row.cells.insert(0, name());
            row.cells.push(Cell::Int(r.n_effective));
            t.rows.push(row);
        }
    }
    Ok(t)
}

#[derive(Debug, Clone, Copy)]
struct Check {
    name: &'static str,
    tolerance: f64,
    draws: u64,
    violations: u64,
    min_margin: f64,
}

impl Check {
    fn new(name: &'static str, tolerance: f64) -> Self {
        Check {
            name,
            tolerance,
            draws: 0,
            violations: 0,
            min_margin: f64::INFINITY,
        }
    }

    /// Records a relative margin; the check fails below `-tolerance`.
    fn margin(&mut self, m: f64) {
        self.draws += 1;
        self.min_margin = self.min_margin.min(m);
        if !(m >= -self.tolerance) {
            self.violations += 1;
        }
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

fn log_uniform(rng: &mut ChaCha8Rng) -> f64 {
    10f64.powf(rng.gen_range(2.0..=8.0))
}

/// Randomized property suite: orderings, guaranteed cost, the optimal floor
/// and both inverse maps. Round-trip margins are the negated relative error.
fn verify_table(draws: usize, seed: u64) -> Table {
    let mut checks = [
        Check::new("robust_below_kalman_worst", 1e-12),
        Check::new("robust_below_sql_worst", 1e-12),
        Check::new("sql_inequality", 1e-12),
        Check::new("guaranteed_cost", 1e-12),
        Check::new("above_optimal_limit", 1e-10),
        Check::new("efficiency_round_trip", 1e-10),
        Check::new("noise_power_round_trip", 1e-10),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..draws {
        let p = PlantParams::new(log_uniform(&mut rng), log_uniform(&mut rng), log_uniform(&mut rng));
        let mu = rng.gen_range(0.0..0.99);
        let u = Uncertainty::new(mu, rng.gen_range(-1.0..=1.0));

        let o = check_orderings(&p, mu);
        checks[0].margin(o.robust_vs_kalman.relative);
        checks[1].margin(o.robust_vs_sql.relative);
        checks[2].margin(o.sql_inequality.relative);

        let robust = design_robust(&p, mu);
        let q = robust.error_value;
        checks[3].margin((q - sigma_robust_closed(&p, u)) / q);

        let opt = optimal_limit(&p, u);
        for f in [design_kalman(&p), robust] {
            let Ok((_, e)) = mse_uncertain(&p, u, &f) else {
                checks[4].margin(f64::NEG_INFINITY);
                continue;
            };
            checks[4].margin((e - opt) / e);
            if let Ok(eta) = effective_quantum_efficiency(&p, u, e) {
                if eta < 1.0 {
                    checks[5].margin(-rel_err(optimal_error_at_efficiency(&p, u, eta), e));
                }
            }
            if let Ok(np) = effective_noise_power(&p, u, e) {
                checks[6].margin(-rel_err(added_noise_cov(&p, u, np.kappa_n).p1, e));
            }
        }
    }
    let mut t = Table::new(&["check", "draws", "violations", "min_margin", "tolerance"]);
    for c in &checks {
        t.violations += c.violations as usize;
        t.rows.push(Row {
            cells: vec![
                Cell::Text(c.name.into()),
                Cell::Int(c.draws),
                Cell::Int(c.violations),
                Cell::Num(c.min_margin),
                Cell::Num(c.tolerance),
            ],
            flags: Vec::new(),
        });
    }
    t
}
