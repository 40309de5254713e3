//! Error type shared by every module of the library.

use thiserror::Error;

/// Failures reported by spectral queries, control synthesis and verification.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum KsError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("mode index {index} out of range (must be >= 1)")]
    IndexOutOfRange { index: usize },

    #[error("threshold {what} not reached within truncation {limit}")]
    ThresholdBeyondTruncation { what: &'static str, limit: usize },

    #[error("exponents must be strictly distinct and positive (offending index {index})")]
    DuplicateRate { index: usize },

    #[error("ill-conditioned system: condition {condition:.3e}, residual {residual:.3e}")]
    IllConditioned { condition: f64, residual: f64 },

    #[error("critical parameter: 2*mu_{j} + pi^2 ({k}^2 + {l}^2)/a^2 lies in the critical set")]
    CriticalParameter { j: usize, k: usize, l: usize },

    #[error("quadrature under-resolved: {points} points per direction, need at least {required}")]
    QuadratureUnderResolved { points: usize, required: usize },

    #[error("actuator point x0/a is rational ({p}/{q}); mode {p_mode} is unobservable")]
    RationalPoint { p: i64, q: i64, p_mode: u64 },

    #[error("horizon T = {t} does not exceed the minimal control time estimate {t_hat:.6e}")]
    BelowMinimalTime { t: f64, t_hat: f64 },

    #[error("no witness found up to k = {k_max}")]
    NoWitnessFound { k_max: u64 },

    #[error("rho = {0} must lie in (0, 1/(N-1))")]
    BadRho(f64),

    #[error("beta = {beta} is too small; need beta > {min}")]
    BetaTooSmall { beta: f64, min: f64 },

    #[error("Gramian singular: min/max eigenvalue ratio {ratio:.3e} on window {window}")]
    GramianSingular { window: usize, ratio: f64 },

    #[error("dissipation bound violated on window {window}: {lhs:.6e} > {rhs:.6e}")]
    DissipationViolated { window: usize, lhs: f64, rhs: f64 },

    #[error("weight underflow at t = {t}")]
    WeightUnderflow { t: f64 },

    #[error("fixed-point iteration does not contract (ratio {ratio:.3e} at iterate {iteration})")]
    NoContraction { iteration: usize, ratio: f64 },

    #[error("time step did not converge at t = {t}: discrepancy {discrepancy:.3e}")]
    StepUnconverged { t: f64, discrepancy: f64 },

    #[error("parameters are not critical")]
    NotCritical,
}

pub type Result<T> = std::result::Result<T, KsError>;
