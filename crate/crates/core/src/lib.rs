//! Null-control synthesis and verification for the Kuramoto-Sivashinsky
//! equation on `(0, a) × Ω_y`.
//!
//! The crate works with the truncated modal system of the linearized
//! operator. Controls are built by the moment method with minimal-norm
//! biorthogonal families, assembled across frequency windows on cylinders,
//! and extended to the nonlinear equation through a source-term fixed point.

pub mod biorthogonal;
pub mod control_1d;
pub mod dd;
pub mod error;
pub mod exact;
pub mod lr;
pub mod modal;
pub mod nonlinear;
pub mod pointwise;
pub mod rhs;
pub mod signal;
pub mod spectral;

pub use dd::Dd;
pub use error::{KsError, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
