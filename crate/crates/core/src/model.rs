//! Phase model: an Ornstein-Uhlenbeck phase observed through adaptive
//! homodyne detection, optionally with an uncertain decay rate.
//!
//! ```text
//! dphi/dt = -lambda_u phi + sqrt(kappa) v
//! theta   = phi + w / (2 |alpha|)
//! lambda_u = lambda (1 + mu delta),  0 <= mu < 1,  |delta| <= 1
//! ```
//!
//! Detector loss enters as `|alpha|^2 = eta_d * alpha2`, so every
//! consumer reads the photon flux through [`PlantParams::flux`].

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Inverse correlation time of the phase (rad/s) used throughout the figures.
pub const DEFAULT_LAMBDA: f64 = 5.9e4;
/// Phase-variation magnitude (rad/s).
pub const DEFAULT_KAPPA: f64 = 1.9e4;
/// Photon flux |alpha|^2 (1/s).
pub const DEFAULT_ALPHA2: f64 = 1.0e6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantParams {
    /// Nominal decay rate lambda (rad/s).
    pub lambda: f64,
    /// Noise strength kappa; `kappa / (2 lambda)` is the prior variance in rad^2.
    pub kappa: f64,
    /// Photon flux reaching the detector before detector loss (1/s).
    pub alpha2: f64,
    /// Homodyne detector efficiency in (0, 1].
    #[serde(default = "default_eta")]
    pub eta_d: f64,
}

fn default_eta() -> f64 {
    1.0
}

impl Default for PlantParams {
    fn default() -> Self {
        Self {
            lambda: DEFAULT_LAMBDA,
            kappa: DEFAULT_KAPPA,
            alpha2: DEFAULT_ALPHA2,
            eta_d: 1.0,
        }
    }
}

impl PlantParams {
    pub fn new(lambda: f64, kappa: f64, alpha2: f64) -> Self {
        Self {
            lambda,
            kappa,
            alpha2,
            eta_d: 1.0,
        }
    }

    pub fn with_efficiency(mut self, eta_d: f64) -> Self {
        self.eta_d = eta_d;
        self
    }

    /// Detected photon flux `|alpha|^2 = eta_d * alpha2`.
    #[inline]
    pub fn flux(&self) -> f64 {
        self.eta_d * self.alpha2
    }

    /// Effective coherent amplitude `|alpha|`.
    #[inline]
    pub fn amplitude(&self) -> f64 {
        self.flux().sqrt()
    }

    /// Stationary phase variance `kappa / (2 lambda_u)`.
    pub fn prior_variance(&self, u: Uncertainty) -> f64 {
        self.kappa / (2.0 * lambda_u(self, u))
    }

    fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        for (name, value) in [("lambda", self.lambda), ("kappa", self.kappa), ("alpha2", self.alpha2)] {
            if !(value > 0.0 && value.is_finite()) {
                out.push(Violation::NonPositiveParameter { name, value });
            }
        }
        if !(self.eta_d > 0.0 && self.eta_d <= 1.0) {
            out.push(Violation::EfficiencyOutOfRange(self.eta_d));
        }
        out
    }
}

/// Uncertainty level `mu` and its (unknown) realisation `delta`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Uncertainty {
    pub mu: f64,
    pub delta: f64,
}

impl Uncertainty {
    pub const NONE: Uncertainty = Uncertainty { mu: 0.0, delta: 0.0 };

    pub fn new(mu: f64, delta: f64) -> Self {
        Self { mu, delta }
    }

    /// The slowest admissible plant, `delta = -1`.
    pub fn worst(mu: f64) -> Self {
        Self { mu, delta: -1.0 }
    }

    fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if !(self.mu >= 0.0 && self.mu < 1.0) {
            out.push(Violation::MuOutOfRange(self.mu));
        }
        if !(self.delta >= -1.0 && self.delta <= 1.0) {
            out.push(Violation::DeltaOutOfRange(self.delta));
        }
        out
    }
}

/// Actual decay rate `lambda (1 + mu delta)` of the uncertain plant.
#[inline]
pub fn lambda_u(p: &PlantParams, u: Uncertainty) -> f64 {
    p.lambda * (1.0 + u.mu * u.delta)
}

/// A single bound that failed during [`validate`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NonPositiveParameter { name: &'static str, value: f64 },
    MuOutOfRange(f64),
    DeltaOutOfRange(f64),
    EfficiencyOutOfRange(f64),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NonPositiveParameter { name, value } => {
                write!(f, "{name} must be positive and finite, got {value}")
            }
            Violation::MuOutOfRange(mu) => write!(f, "mu must lie in [0, 1), got {mu}"),
            Violation::DeltaOutOfRange(d) => write!(f, "delta must lie in [-1, 1], got {d}"),
            Violation::EfficiencyOutOfRange(e) => write!(f, "eta_d must lie in (0, 1], got {e}"),
        }
    }
}

/// Checks every bound and reports all violations at once.
pub fn validate(p: &PlantParams, u: &Uncertainty) -> Result<()> {
    let mut v = p.violations();
    v.extend(u.violations());
    if v.is_empty() {
        Ok(())
    } else {
        Err(Error::Invalid(v))
    }
}

/// First-order transfer function `gain / (s + pole)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransferFunction1 {
    pub gain: f64,
    pub pole: f64,
}

impl TransferFunction1 {
    pub fn dc_gain(&self) -> f64 {
        self.gain / self.pole
    }

    /// |G(i omega)|
    pub fn magnitude(&self, omega: f64) -> f64 {
        self.gain.abs() / (self.pole * self.pole + omega * omega).sqrt()
    }
}
