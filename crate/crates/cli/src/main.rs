mod commands;
mod error;
mod output;
mod spec;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use robust_phase::design::{design_kalman, FilterKind};
use robust_phase::model::{PlantParams, Uncertainty, DEFAULT_ALPHA2, DEFAULT_KAPPA, DEFAULT_LAMBDA};
use robust_phase::simulate::{MeasurementMode, SimConfig};
use robust_phase::sweep::{Axis, DEFAULT_POINTS};

use crate::error::CliError;
use crate::spec::{default_grid, Command, Format, RunSpec, Sweep};

/// Phase-estimation filters under decay-rate uncertainty: designs, error
/// sweeps, two-time correlations and Monte Carlo checks.
#[derive(Parser, Debug)]
#[command(name = "robust-phase", version)]
struct Cli {
    /// JSON run spec, or a previous CSV/JSON output whose header spec is rerun.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Write the table here instead of stdout.
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[command(subcommand)]
    command: Option<Cmd>,
}

#[derive(Args, Debug, Clone)]
struct Plant {
    #[arg(long, default_value_t = DEFAULT_LAMBDA)]
    lambda: f64,
    #[arg(long, default_value_t = DEFAULT_KAPPA)]
    kappa: f64,
    #[arg(long, default_value_t = DEFAULT_ALPHA2)]
    alpha2: f64,
    /// Detector efficiency.
    #[arg(long, default_value_t = 1.0)]
    eta_d: f64,
    #[arg(long, default_value_t = 0.5)]
    mu: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    delta: f64,
}

impl Plant {
    fn resolve(&self) -> (PlantParams, Uncertainty) {
        (
            PlantParams::new(self.lambda, self.kappa, self.alpha2).with_efficiency(self.eta_d),
            Uncertainty::new(self.mu, self.delta),
        )
    }
}

#[derive(Args, Debug, Clone)]
struct Grid {
    #[arg(long)]
    axis: Option<Axis>,
    #[arg(long, allow_hyphen_values = true)]
    lo: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    hi: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_POINTS)]
    points: usize,
    /// Comma-separated subset of kalman, robust, optimal, sql.
    #[arg(long, value_delimiter = ',')]
    filters: Option<Vec<FilterKind>>,
}

impl Grid {
    fn resolve(&self, base: &PlantParams, axis: Axis, filters: &[FilterKind]) -> Sweep {
        let axis = self.axis.unwrap_or(axis);
        Sweep {
            axis,
            grid: default_grid(axis, base, self.lo, self.hi, self.points),
            filters: self.filters.clone().unwrap_or_else(|| filters.to_vec()),
        }
    }
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Gains, poles and design errors of each filter.
    Design {
        #[command(flatten)]
        plant: Plant,
        #[arg(long, value_delimiter = ',')]
        filters: Option<Vec<FilterKind>>,
    },
    /// Mean-square error of each filter along one axis.
    MseSweep {
        #[command(flatten)]
        plant: Plant,
        #[command(flatten)]
        grid: Grid,
    },
    /// Errors at the slowest admissible plant (delta = -1), default axis mu.
    WorstCase {
        #[command(flatten)]
        plant: Plant,
        #[command(flatten)]
        grid: Grid,
    },
    /// Effective quantum efficiency of the Kalman and robust filters.
    Efficiency {
        #[command(flatten)]
        plant: Plant,
        #[command(flatten)]
        grid: Grid,
    },
    /// Added and effective noise power of the Kalman and robust filters.
    NoisePower {
        #[command(flatten)]
        plant: Plant,
        #[command(flatten)]
        grid: Grid,
    },
    /// Two-time error correlations of each filter and its matched optimal counterpart.
    TwoTime {
        #[command(flatten)]
        plant: Plant,
        /// Largest lag in seconds; defaults to 5 Kalman time constants.
        #[arg(long)]
        tau_max: Option<f64>,
        #[arg(long, default_value_t = 200)]
        points: usize,
    },
    /// Closed-loop Monte Carlo of the measurement and feedback loop.
    Simulate {
        #[command(flatten)]
        plant: Plant,
        #[arg(long, value_delimiter = ',')]
        filters: Option<Vec<FilterKind>>,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        steps: Option<u64>,
        #[arg(long)]
        traj: Option<u32>,
        #[arg(long)]
        burn_in: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Use the exact sin(phi - phi_hat) measurement instead of the linearized one.
        #[arg(long)]
        sine: bool,
        /// Comma-separated lags (s) for the empirical two-time correlation.
        #[arg(long, value_delimiter = ',')]
        tau: Option<Vec<f64>>,
    },
    /// Randomized property suite; exits 3 on any violation.
    Verify {
        #[arg(long, default_value_t = 1000)]
        draws: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

const SUBOPTIMAL: [FilterKind; 2] = [FilterKind::Kalman, FilterKind::Robust];

fn resolve(cmd: Cmd) -> RunSpec {
    let spec = |command, plant: &Plant| {
        let (params, uncertainty) = plant.resolve();
        RunSpec {
            command,
            params,
            uncertainty,
            format: Format::Csv,
        }
    };
    match cmd {
        Cmd::Design { plant, filters } => spec(
            Command::Design {
                filters: filters.unwrap_or(FilterKind::ALL.to_vec()),
            },
            &plant,
        ),
        Cmd::MseSweep { plant, grid } => {
            let s = grid.resolve(&plant.resolve().0, Axis::Delta, &FilterKind::ALL);
            spec(Command::MseSweep(s), &plant)
        }
        Cmd::WorstCase { plant, grid } => {
            let plant = Plant { delta: -1.0, ..plant };
            let s = grid.resolve(&plant.resolve().0, Axis::Mu, &FilterKind::ALL);
            spec(Command::WorstCase(s), &plant)
        }
        Cmd::Efficiency { plant, grid } => {
            let s = grid.resolve(&plant.resolve().0, Axis::Delta, &SUBOPTIMAL);
            spec(Command::Efficiency(s), &plant)
        }
        Cmd::NoisePower { plant, grid } => {
            let s = grid.resolve(&plant.resolve().0, Axis::Delta, &SUBOPTIMAL);
            spec(Command::NoisePower(s), &plant)
        }
        Cmd::TwoTime { plant, tau_max, points } => {
            let tau_max = tau_max.unwrap_or_else(|| 5.0 / design_kalman(&plant.resolve().0).corner);
            spec(Command::TwoTime { tau_max, points }, &plant)
        }
        Cmd::Simulate {
            plant,
            filters,
            dt,
            steps,
            traj,
            burn_in,
            seed,
            sine,
            tau,
        } => {
            let d = SimConfig::default();
            let sim = SimConfig {
                dt: dt.unwrap_or(d.dt),
                n_steps: steps.unwrap_or(d.n_steps),
                n_traj: traj.unwrap_or(d.n_traj),
                burn_in_fraction: burn_in.unwrap_or(d.burn_in_fraction),
                seed,
                measurement_mode: if sine {
                    MeasurementMode::Sine
                } else {
                    MeasurementMode::Linearized
                },
                tau_grid: tau,
            };
            let filters = filters.unwrap_or(SUBOPTIMAL.to_vec());
            spec(Command::Simulate { filters, sim }, &plant)
        }
        Cmd::Verify { draws, seed } => RunSpec {
            command: Command::Verify { draws, seed },
            params: PlantParams::default(),
            uncertainty: Uncertainty::NONE,
            format: Format::Csv,
        },
    }
}

fn run(cli: Cli) -> Result<u8, CliError> {
    let mut spec = match (cli.config, cli.command) {
        (Some(_), Some(_)) => {
            return Err(CliError::Invalid(
                "pass either --config or a subcommand, not both".into(),
            ));
        }
        (Some(path), None) => RunSpec::load(&path)?,
        (None, Some(cmd)) => resolve(cmd),
        (None, None) => return Err(CliError::Invalid("a subcommand or --config is required".into())),
    };
    if let Some(f) = cli.format {
        spec.format = f;
    }
    let table = commands::execute(&spec)?;
    let text = output::render(&spec, &table);
    match cli.output {
        Some(path) => std::fs::write(&path, text).map_err(|source| CliError::Io {
            path: path.display().to_string(),
            source,
        })?,
        None => print!("{text}"),
    }
    if table.violations > 0 {
        eprintln!("verify: {} violation(s)", table.violations);
        return Ok(3);
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
