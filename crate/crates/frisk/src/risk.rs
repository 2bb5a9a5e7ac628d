//! Historical and deployment risk: Monte Carlo estimators and closed forms.
//!
//! Historical risk scores a forecaster against passively observed outcomes;
//! deployment risk scores it against the outcomes its own deployment
//! induces. The gap between the two is the price of feedback, and the
//! stylized crowding process admits exact expressions for both.

use serde::Serialize;

use crate::core::{forecast, loss_value, Context, DeploymentPolicy, Forecaster, Loss};
use crate::env::{deployed_draw, fold_stream_blocks, passive_draw, Environment};
use crate::rng::SeedSpec;
use crate::{Error, Result};

/// How a risk number was produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum RiskMethod {
    MonteCarlo,
    ClosedForm,
}

/// A risk value with its sampling uncertainty.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct RiskEstimate {
    pub value: f64,
    /// Standard error of the Monte Carlo mean; 0 for closed forms.
    pub std_error: f64,
    /// Number of simulated draws; 0 for closed forms.
    pub n: usize,
    pub method: RiskMethod,
}

impl RiskEstimate {
    pub fn closed_form(value: f64) -> Self {
        RiskEstimate {
            value,
            std_error: 0.0,
            n: 0,
            method: RiskMethod::ClosedForm,
        }
    }
}

/// Deployment risk minus historical risk for one forecaster.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct GapEstimate {
    pub gap: f64,
    pub historical: RiskEstimate,
    pub deployment: RiskEstimate,
}

impl GapEstimate {
    /// Standard error of the gap, treating the two legs as independent.
    /// An overestimate when the legs share draws.
    pub fn std_error(&self) -> f64 {
        self.historical
            .std_error
            .hypot(self.deployment.std_error)
    }
}

fn check_mc_n(n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "Monte Carlo risk needs at least 2 draws, got {n}"
        )));
    }
    Ok(())
}

/// Monte Carlo historical risk: expected loss of `f` on passive outcomes.
pub fn mc_historical_risk<E: Environment + ?Sized>(
    env: &E,
    f: &Forecaster,
    loss: Loss,
    n: usize,
    seed: SeedSpec,
) -> Result<RiskEstimate> {
    check_mc_n(n)?;
    let m = fold_stream_blocks(n, seed, |s| {
        let d = passive_draw(env, s)?;
        loss_value(loss, forecast(f, Context::new(d.h)?)?, d.y)
    })?;
    Ok(RiskEstimate {
        value: m.mean(),
        std_error: m.std_error(),
        n,
        method: RiskMethod::MonteCarlo,
    })
}

/// Monte Carlo deployment risk: expected loss of `f` on the outcomes its
/// deployment through `p` induces.
pub fn mc_deployment_risk<E: Environment + ?Sized>(
    env: &E,
    f: &Forecaster,
    p: &DeploymentPolicy,
    loss: Loss,
    n: usize,
    seed: SeedSpec,
) -> Result<RiskEstimate> {
    check_mc_n(n)?;
    let m = fold_stream_blocks(n, seed, |s| {
        let d = deployed_draw(env, f, p, s)?;
        loss_value(loss, forecast(f, Context::new(d.h)?)?, d.y)
    })?;
    Ok(RiskEstimate {
        value: m.mean(),
        std_error: m.std_error(),
        n,
        method: RiskMethod::MonteCarlo,
    })
}

/// Deployment risk minus historical risk.
///
/// Under the [`DeploymentPolicy::Zero`] policy both legs reuse the same
/// random stream, so the gap is exactly zero rather than Monte Carlo noise;
/// any other policy gets independent streams for the two legs.
pub fn feedback_gap<E: Environment + ?Sized>(
    env: &E,
    f: &Forecaster,
    p: &DeploymentPolicy,
    loss: Loss,
    n: usize,
    seed: SeedSpec,
) -> Result<GapEstimate> {
    let (hist_seed, dep_seed) = if matches!(p, DeploymentPolicy::Zero) {
        (seed.child(0), seed.child(0))
    } else {
        (seed.child(0), seed.child(1))
    };
    let historical = mc_historical_risk(env, f, loss, n, hist_seed)?;
    let deployment = mc_deployment_risk(env, f, p, loss, n, dep_seed)?;
    Ok(GapEstimate {
        gap: deployment.value - historical.value,
        historical,
        deployment,
    })
}

/// Exact historical risk of the linear forecaster `c * h` under squared
/// loss when passive outcomes are `h + noise` with unit-variance history:
/// `(c - 1)^2 + sigma^2`.
pub fn closed_form_passive_risk(c: f64, sigma: f64) -> Result<f64> {
    check_closed_form(c, sigma)?;
    Ok((c - 1.0) * (c - 1.0) + sigma * sigma)
}

/// Exact deployment risk of the linear forecaster `c * h` deployed at
/// proportional intensity `alpha` into the crowding process with
/// coefficient `gamma`: `(c * (1 + gamma * alpha) - 1)^2 + sigma^2`.
pub fn closed_form_deployment_risk(c: f64, alpha: f64, gamma: f64, sigma: f64) -> Result<f64> {
    check_closed_form(c, sigma)?;
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "intensity must be finite and nonnegative, got {alpha}"
        )));
    }
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "crowding coefficient must be positive, got {gamma}"
        )));
    }
    let m = c * (1.0 + gamma * alpha) - 1.0;
    Ok(m * m + sigma * sigma)
}

/// Exact deployment risk of the identity forecaster deployed at unit
/// proportional intensity into linear feedback with coefficient `beta` and
/// identity baseline mean: `sigma^2 + beta^2`. The passive risk of the same
/// forecaster is `sigma^2` for every `beta`, which is why passive data say
/// nothing about this quantity.
pub fn closed_form_nonid_risk(beta: f64, sigma: f64) -> Result<f64> {
    if !beta.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "feedback coefficient must be finite, got {beta}"
        )));
    }
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "noise standard deviation must be positive, got {sigma}"
        )));
    }
    Ok(sigma * sigma + beta * beta)
}

fn check_closed_form(c: f64, sigma: f64) -> Result<()> {
    if !c.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "forecast coefficient must be finite, got {c}"
        )));
    }
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "noise standard deviation must be positive, got {sigma}"
        )));
    }
    Ok(())
}
