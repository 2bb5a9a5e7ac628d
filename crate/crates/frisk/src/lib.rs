//! Simulation and estimation toolkit for time series that react to the
//! forecasts published about them.
//!
//! When a forecasting rule is deployed and trading, hedging, or routing
//! decisions act on its predictions, the observed series is no longer the
//! series the rule was trained on. This crate simulates such feedback loops
//! and quantifies their cost:
//!
//! - [`env`] defines stylized outcome processes with a pluggable action
//!   channel and samples them in passive (no deployment) and deployed modes,
//!   deterministically and in parallel.
//! - [`risk`] estimates historical (passive) and deployment risk by Monte
//!   Carlo and provides closed forms for the stylized environments.
//! - [`elasticity`] measures how strongly outcomes move per unit of action
//!   via a Wasserstein distance between arms, and certifies a small-feedback
//!   bound on the gap between deployment and historical risk.
//! - [`diagnostics`] demonstrates that passive data cannot identify the
//!   feedback channel, and locates where crowding inverts a model ranking.
//! - [`estimation`] recovers the feedback coefficient from randomized action
//!   experiments by least squares, with finite-sample error bounds and a
//!   coverage harness that checks them empirically.
//!
//! All randomness flows through [`rng::SeedSpec`] streams, so every result
//! is reproducible bit-for-bit regardless of thread count.

pub mod core;
pub mod diagnostics;
pub mod elasticity;
pub mod env;
pub mod estimation;
pub mod rng;
pub mod risk;

pub use crate::core::{act, forecast, loss_value, Context, DeploymentPolicy, Forecaster, Loss};
pub use crate::rng::SeedSpec;

/// Errors reported by simulation, estimation, and diagnostic routines.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A caller-supplied argument violates a documented precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A computation left its mathematical domain (non-finite value, etc.).
    #[error("domain error: {0}")]
    Domain(String),

    /// The regression design is numerically singular.
    #[error("singular design: {0}")]
    SingularDesign(String),

    /// A runtime contract (e.g. a norm cap) was violated by supplied data.
    #[error("contract violation: {0}")]
    Contract(String),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Runs `f` on a dedicated worker pool with `threads` threads (0 = one per
/// core). Results are identical for every thread count; the pool only
/// controls how much hardware the fixed block schedule is spread over.
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot build thread pool: {e}")))?;
    Ok(pool.install(f))
}
