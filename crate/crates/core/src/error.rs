use thiserror::Error;

use crate::model::Violation;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameters: {}", format_violations(.0))]
    Invalid(Vec<Violation>),

    #[error("matrix dimension {rows}x{cols} not supported (max 4)")]
    Dimension { rows: usize, cols: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(&'static str),

    #[error("state matrix is not Hurwitz (max real eigenvalue {max_re:e})")]
    UnstableA { max_re: f64 },

    #[error("Riccati equation has no stabilising solution: {0}")]
    NoStabilizingSolution(&'static str),

    #[error("Riccati residual {residual:e} exceeds tolerance {tolerance:e}")]
    IllConditioned { residual: f64, tolerance: f64 },

    #[error("epsilon = {epsilon:e} is infeasible: auxiliary Riccati equation has no stabilising positive solution")]
    EpsilonInfeasible { epsilon: f64 },

    #[error("every epsilon in the grid is infeasible")]
    AllEpsilonInfeasible,

    #[error("matrix exponential overflow (norm of A*tau = {norm:e})")]
    Overflow { norm: f64 },

    #[error("singular linear system")]
    Singular,

    #[error("error {e:e} is not below the prior variance {prior:e}")]
    EstimateWorseThanPrior { e: f64, prior: f64 },

    #[error("error {e:e} is below the optimal limit {optimal:e}")]
    BetterThanOptimal { e: f64, optimal: f64 },

    #[error("error {e:e} violates the prior bound kappa - 2 lambda_u e > 0")]
    PriorBoundViolated { e: f64 },

    #[error("added noise power would be negative ({kappa_n:e})")]
    NegativeKappaN { kappa_n: f64 },

    #[error("degenerate denominator |A_e^2 - lambda_u^2| = {0:e}")]
    DegenerateDenominator(f64),

    #[error("simulation config invalid: {0}")]
    ConfigInvariantViolated(String),

    #[error("filter state blew up at step {step} (|phi_hat| > 1e6)")]
    NumericalBlowup { step: usize },

    #[error("insufficient samples: {samples} samples for largest lag {lag} steps")]
    InsufficientSamples { samples: usize, lag: usize },
}

fn format_violations(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

pub type Result<T> = std::result::Result<T, Error>;
