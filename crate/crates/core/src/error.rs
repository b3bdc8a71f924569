//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Saturation argument outside the closed unit interval.
    #[error("saturation {0} outside [0, 1]")]
    SaturationOutOfRange(f64),

    /// Saturation argument outside the open interval where a derivative is defined.
    #[error("saturation {s} outside open interval ({lo}, {hi})")]
    SaturationOutsideOpen { s: f64, lo: f64, hi: f64 },

    /// Rock/fluid parameters violate `0 <= s_wc < s_inj <= 1 - s_gr <= 1` or `M > 0`.
    #[error("invalid rock/fluid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// No sign change found when bracketing the Welge tangent; the flux
    /// curve is not S-shaped for these parameters.
    #[error("tangent bracketing failed: flux curve is not S-shaped")]
    NoTangentBracket,

    #[error("root finding did not converge within {0} iterations")]
    NoConvergence(usize),

    #[error("time step underflow: CFL condition produced dt <= 0")]
    CflViolation,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// The activation has a discontinuous first derivative and cannot feed
    /// the PDE residual.
    #[error("activation {0:?} is not differentiable enough for the residual path")]
    NonDifferentiableActivation(&'static str),

    /// A loss evaluation produced NaN/inf.
    #[error("non-finite loss value")]
    NonFiniteLoss,

    /// A loss or residual evaluation produced NaN/inf during training.
    #[error("non-finite loss at step {step}: training diverged")]
    Divergence { step: usize },

    /// Truncation bounds capture a vanishing fraction of the distribution.
    #[error("truncation [{low}, {high}] captures probability {prob:.3e} < 1e-6 of N({mu}, {sigma})")]
    PathologicalTruncation {
        low: f64,
        high: f64,
        mu: f64,
        sigma: f64,
        prob: f64,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("checkpoint parse error: {0}")]
    CheckpointParse(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
