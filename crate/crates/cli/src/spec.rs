//! The resolved run specification. Every default is filled in before a
//! command runs, so the spec echoed into an output header reproduces it.

use std::path::Path;

use serde::{Deserialize, Serialize};

use robust_phase::design::{log_grid, FilterKind};
use robust_phase::model::{validate, PlantParams, Uncertainty};
use robust_phase::simulate::SimConfig;
use robust_phase::sweep::{linspace, Axis};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
    pub log: bool,
}

impl GridSpec {
    pub fn values(&self) -> Vec<f64> {
        if self.log {
            log_grid(self.lo, self.hi, self.points)
        } else {
            linspace(self.lo, self.hi, self.points)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub axis: Axis,
    pub grid: GridSpec,
    pub filters: Vec<FilterKind>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    Design { filters: Vec<FilterKind> },
    MseSweep(Sweep),
    WorstCase(Sweep),
    Efficiency(Sweep),
    NoisePower(Sweep),
    TwoTime { tau_max: f64, points: usize },
    Simulate { filters: Vec<FilterKind>, sim: SimConfig },
    Verify { draws: usize, seed: u64 },
}

/// The output path is deliberately not part of the spec: rerunning a spec
/// elsewhere must not change the bytes it produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    #[serde(flatten)]
    pub command: Command,
    #[serde(default)]
    pub params: PlantParams,
    #[serde(default)]
    pub uncertainty: Uncertainty,
    #[serde(default)]
    pub format: Format,
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, CliError> {
    Err(CliError::Invalid(msg.into()))
}

impl RunSpec {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("run spec serializes")
    }

    /// Reads a spec from a JSON file, or from the header of a previous CSV or
    /// JSON output.
    pub fn load(path: &Path) -> Result<RunSpec, CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if text.starts_with('#') {
            let line = text
                .lines()
                .find_map(|l| l.strip_prefix("# spec: "))
                .ok_or_else(|| CliError::Invalid(format!("{}: no `# spec:` header line", path.display())))?;
            return Ok(serde_json::from_str(line)?);
        }
        let value: serde_json::Value = serde_json::from_str(&text)?;
        match value.get("spec") {
            Some(spec) if value.get("rows").is_some() => Ok(serde_json::from_value(spec.clone())?),
            _ => Ok(serde_json::from_value(value)?),
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        validate(&self.params, &self.uncertainty)?;
        let check_grid = |s: &Sweep| -> Result<(), CliError> {
            let g = &s.grid;
            if g.points == 0 {
                return invalid("grid needs at least one point");
            }
            if !(g.lo <= g.hi) || !g.lo.is_finite() || !g.hi.is_finite() {
                return invalid(format!("grid bounds must satisfy lo <= hi, got [{}, {}]", g.lo, g.hi));
            }
            if g.log && !(g.lo > 0.0) {
                return invalid("log grid needs a positive lower bound");
            }
            if s.filters.is_empty() {
                return invalid("at least one filter must be selected");
            }
            Ok(())
        };
        match &self.command {
            Command::Design { filters } | Command::Simulate { filters, .. } if filters.is_empty() => {
                invalid("at least one filter must be selected")
            }
            Command::MseSweep(s) => check_grid(s),
            Command::WorstCase(s) => {
                if s.axis == Axis::Delta {
                    return invalid("worst-case fixes delta = -1 and cannot sweep it");
                }
                if self.uncertainty.delta != -1.0 {
                    return invalid("worst-case requires delta = -1");
                }
                check_grid(s)
            }
            Command::Efficiency(s) | Command::NoisePower(s) => {
                if !s
                    .filters
                    .iter()
                    .any(|k| matches!(k, FilterKind::Kalman | FilterKind::Robust))
                {
                    return invalid("this command needs the kalman or robust filter");
                }
                check_grid(s)
            }
            Command::TwoTime { tau_max, points } => {
                if !(*tau_max > 0.0 && tau_max.is_finite()) {
                    return invalid(format!("tau_max must be positive, got {tau_max}"));
                }
                if *points < 2 {
                    return invalid("two-time needs at least 2 lag points");
                }
                Ok(())
            }
            Command::Verify { draws, .. } if *draws == 0 => invalid("verify needs at least one draw"),
            _ => Ok(()),
        }
    }
}

/// Default grid for an axis, matching the core sweep defaults.
pub fn default_grid(axis: Axis, base: &PlantParams, lo: Option<f64>, hi: Option<f64>, points: usize) -> GridSpec {
    let (dlo, dhi) = axis.default_range(base);
    GridSpec {
        lo: lo.unwrap_or(dlo),
        hi: hi.unwrap_or(dhi),
        points,
        log: axis.is_logarithmic(),
    }
}
