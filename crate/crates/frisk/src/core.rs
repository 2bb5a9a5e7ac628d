//! Forecasters, deployment policies, and losses.
//!
//! A [`Forecaster`] maps the observable context to a point prediction, a
//! [`DeploymentPolicy`] turns that prediction into a market action, and a
//! [`Loss`] scores predictions against realized outcomes. These three pieces
//! are deliberately decoupled: the same forecaster can be evaluated passively
//! (policy absent) or deployed at any action intensity.

use std::fmt;
use std::sync::Arc;

use crate::{Error, Result};

/// Observable state available to the forecaster at prediction time.
///
/// For the stylized environments this is the most recent history value.
/// The value is guaranteed finite on construction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Context {
    h: f64,
}

impl Context {
    pub fn new(h: f64) -> Result<Self> {
        if !h.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "context value must be finite, got {h}"
            )));
        }
        Ok(Context { h })
    }

    pub fn h(&self) -> f64 {
        self.h
    }
}

/// A prediction rule mapping context to a point forecast.
#[derive(Clone)]
pub enum Forecaster {
    /// Predicts `c * h` for coefficient `c`.
    Linear(f64),
    /// Arbitrary prediction rule.
    Custom(Arc<dyn Fn(Context) -> f64 + Send + Sync>),
}

impl fmt::Debug for Forecaster {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Forecaster::Linear(c) => write!(f, "Linear({c})"),
            Forecaster::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

/// A rule converting a published forecast into an action on the system.
#[derive(Clone)]
pub enum DeploymentPolicy {
    /// Acts proportionally to the forecast with nonnegative intensity.
    Proportional(f64),
    /// Never acts; deployment under this policy reproduces passive data.
    Zero,
    /// Arbitrary action rule given the forecast and the context.
    Custom(Arc<dyn Fn(f64, Context) -> f64 + Send + Sync>),
}

impl fmt::Debug for DeploymentPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DeploymentPolicy::Proportional(a) => write!(f, "Proportional({a})"),
            DeploymentPolicy::Zero => write!(f, "Zero"),
            DeploymentPolicy::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

/// Loss function scoring a forecast against the realized outcome.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Loss {
    Squared,
    Absolute,
}

impl Loss {
    /// Lipschitz constant of the loss in its first argument, when one
    /// exists uniformly. `Squared` is not uniformly Lipschitz.
    pub fn lipschitz(&self) -> Option<f64> {
        match self {
            Loss::Squared => None,
            Loss::Absolute => Some(1.0),
        }
    }
}

/// Evaluates the forecaster on a context.
///
/// Fails with [`Error::Domain`] if the rule produces a non-finite value.
pub fn forecast(f: &Forecaster, ctx: Context) -> Result<f64> {
    let value = match f {
        Forecaster::Linear(c) => c * ctx.h(),
        Forecaster::Custom(rule) => rule(ctx),
    };
    if !value.is_finite() {
        return Err(Error::Domain(format!(
            "forecaster {f:?} produced non-finite prediction {value} at h = {}",
            ctx.h()
        )));
    }
    Ok(value)
}

/// Applies the deployment policy to a published forecast.
///
/// The proportional policy requires a finite, nonnegative intensity; any
/// policy producing a non-finite action is a domain error.
pub fn act(p: &DeploymentPolicy, forecast: f64, ctx: Context) -> Result<f64> {
    if !forecast.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "action requires a finite forecast, got {forecast}"
        )));
    }
    let action = match p {
        DeploymentPolicy::Proportional(alpha) => {
            if !alpha.is_finite() || *alpha < 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "proportional intensity must be finite and nonnegative, got {alpha}"
                )));
            }
            alpha * forecast
        }
        DeploymentPolicy::Zero => 0.0,
        DeploymentPolicy::Custom(rule) => rule(forecast, ctx),
    };
    if !action.is_finite() {
        return Err(Error::Domain(format!(
            "policy {p:?} produced non-finite action {action}"
        )));
    }
    Ok(action)
}

/// Scores a prediction against a realized outcome.
pub fn loss_value(l: Loss, prediction: f64, outcome: f64) -> Result<f64> {
    if !prediction.is_finite() || !outcome.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "loss requires finite arguments, got prediction {prediction}, outcome {outcome}"
        )));
    }
    let d = prediction - outcome;
    Ok(match l {
        Loss::Squared => d * d,
        Loss::Absolute => d.abs(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn context_rejects_non_finite() {
        assert!(Context::new(f64::NAN).is_err());
        assert!(Context::new(f64::INFINITY).is_err());
        assert!(Context::new(-3.25).is_ok());
    }

    #[test]
    fn linear_forecaster_scales_history() {
        let ctx = Context::new(2.0).unwrap();
        assert_eq!(forecast(&Forecaster::Linear(0.25), ctx).unwrap(), 0.5);
        assert_eq!(forecast(&Forecaster::Linear(0.0), ctx).unwrap(), 0.0);
    }

    #[test]
    fn custom_forecaster_runs_and_is_checked() {
        let ctx = Context::new(4.0).unwrap();
        let sq = Forecaster::Custom(Arc::new(|c: Context| c.h() * c.h()));
        assert_eq!(forecast(&sq, ctx).unwrap(), 16.0);
        let bad = Forecaster::Custom(Arc::new(|_| f64::NAN));
        assert!(matches!(forecast(&bad, ctx), Err(Error::Domain(_))));
    }

    #[test]
    fn zero_policy_never_acts() {
        let ctx = Context::new(1.0).unwrap();
        assert_eq!(act(&DeploymentPolicy::Zero, 123.0, ctx).unwrap(), 0.0);
    }

    #[test]
    fn proportional_rejects_negative_intensity() {
        let ctx = Context::new(0.0).unwrap();
        let p = DeploymentPolicy::Proportional(-0.5);
        assert!(matches!(act(&p, 1.0, ctx), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn act_rejects_non_finite_forecast() {
        let ctx = Context::new(0.0).unwrap();
        let p = DeploymentPolicy::Proportional(1.0);
        assert!(matches!(
            act(&p, f64::NAN, ctx),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn losses_evaluate() {
        assert_eq!(loss_value(Loss::Squared, 3.0, 1.0).unwrap(), 4.0);
        assert_eq!(loss_value(Loss::Absolute, 1.0, 3.0).unwrap(), 2.0);
        assert!(loss_value(Loss::Squared, f64::NAN, 0.0).is_err());
    }

    #[test]
    fn lipschitz_constants() {
        assert_eq!(Loss::Absolute.lipschitz(), Some(1.0));
        assert_eq!(Loss::Squared.lipschitz(), None);
    }

    proptest! {
        /// The proportional policy is linear in the forecast.
        #[test]
        fn proportional_policy_is_linear(
            alpha in 0.0..1e3f64,
            f in -1e3..1e3f64,
            k in -1e3..1e3f64,
        ) {
            let ctx = Context::new(0.0).unwrap();
            let p = DeploymentPolicy::Proportional(alpha);
            let scaled = act(&p, k * f, ctx).unwrap();
            let direct = k * act(&p, f, ctx).unwrap();
            let tol = 1e-12 * scaled.abs().max(1.0);
            prop_assert!((scaled - direct).abs() <= tol);
        }

        /// Losses are symmetric in their arguments and vanish iff they agree
        /// (checked away from the underflow regime for the squared loss).
        #[test]
        fn losses_symmetric_and_zero_iff_equal(
            a in -1e6..1e6f64,
            b in -1e6..1e6f64,
        ) {
            for l in [Loss::Squared, Loss::Absolute] {
                let ab = loss_value(l, a, b).unwrap();
                let ba = loss_value(l, b, a).unwrap();
                prop_assert_eq!(ab, ba);
                if a == b {
                    prop_assert_eq!(ab, 0.0);
                } else if (a - b).abs() > 1e-100 {
                    prop_assert!(ab > 0.0);
                }
            }
        }
    }
}
