//! Outcome elasticity and the small-feedback certificate.
//!
//! Elasticity measures how far the outcome distribution moves per unit of
//! action, as a Wasserstein-1 distance between two sampled action arms.
//! For environments whose sensitivity is known analytically, the certificate
//! bounds the absolute gap between deployment and historical risk by the
//! loss Lipschitz constant times the expected sensitivity-weighted action
//! magnitude, and verifies the bound by simulation.

use serde::Serialize;

use crate::core::{act, forecast, Context, DeploymentPolicy, Forecaster, Loss};
use crate::env::{fold_stream_blocks, Environment, LinearFeedbackEnv};
use crate::risk::feedback_gap;
use crate::rng::SeedSpec;
use crate::{Error, Result};

/// Empirical Wasserstein-1 distance between two equal-length samples:
/// sort both and average the absolute componentwise differences.
///
/// For samples of equal length this is the exact W1 distance between the
/// two empirical distributions; in particular `w1_empirical(xs, xs + c)`
/// equals `|c|` exactly.
pub fn w1_empirical(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.is_empty() || xs.len() != ys.len() {
        return Err(Error::InvalidArgument(format!(
            "W1 needs two nonempty samples of equal length, got {} and {}",
            xs.len(),
            ys.len()
        )));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(
            "W1 requires finite sample values".into(),
        ));
    }
    let mut a = xs.to_vec();
    let mut b = ys.to_vec();
    a.sort_unstable_by(f64::total_cmp);
    b.sort_unstable_by(f64::total_cmp);
    let sum: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum();
    Ok(sum / a.len() as f64)
}

/// Measured movement of the outcome distribution per unit of action.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ElasticityEstimate {
    /// W1 distance between the arms divided by the action separation.
    pub value: f64,
    pub h: f64,
    pub a: f64,
    pub a_prime: f64,
    pub n_per_arm: usize,
}

/// Estimates elasticity at history `h` by sampling `n` outcomes under
/// action `a` and `n` under `a_prime` (independent streams) and dividing
/// their W1 distance by `|a - a_prime|`.
pub fn estimate_elasticity<E: Environment + ?Sized>(
    env: &E,
    h: f64,
    a: f64,
    a_prime: f64,
    n: usize,
    seed: SeedSpec,
) -> Result<ElasticityEstimate> {
    for (name, v) in [("h", h), ("a", a), ("a_prime", a_prime)] {
        if !v.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "{name} must be finite, got {v}"
            )));
        }
    }
    if a == a_prime {
        return Err(Error::InvalidArgument(
            "elasticity needs two distinct actions".into(),
        ));
    }
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "elasticity needs at least 2 draws per arm, got {n}"
        )));
    }
    let sigma = env.noise_sd();
    let arm = |action: f64, arm_seed: SeedSpec| -> Vec<f64> {
        let mean = env.conditional_mean(h, action);
        let mut s = arm_seed.stream();
        (0..n).map(|_| mean + sigma * s.next_normal()).collect()
    };
    let xs = arm(a, seed.child(0));
    let ys = arm(a_prime, seed.child(1));
    let w1 = w1_empirical(&xs, &ys)?;
    Ok(ElasticityEstimate {
        value: w1 / (a - a_prime).abs(),
        h,
        a,
        a_prime,
        n_per_arm: n,
    })
}

/// Simulation check of the small-feedback gap certificate.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Prop1Report {
    /// |deployment risk - historical risk|, Monte Carlo.
    pub gap_abs: f64,
    /// Certified ceiling: `lipschitz * kappa_expectation_term`.
    pub bound: f64,
    /// Uniform Lipschitz constant of the loss.
    pub lipschitz: f64,
    /// Expected sensitivity-weighted action magnitude under passive history.
    pub kappa_expectation_term: f64,
    /// Root-sum-square of the Monte Carlo standard errors of both sides.
    pub combined_std_error: f64,
    /// Whether `gap_abs <= bound` up to three combined standard errors.
    pub holds: bool,
    pub n: usize,
}

/// Checks that the feedback gap of `f` deployed through `p` stays below
/// the certificate for a linear-feedback environment, where the outcome
/// sensitivity to actions is exactly `|beta|` everywhere.
///
/// Requires a uniformly Lipschitz loss; the squared loss has no uniform
/// constant and is rejected.
pub fn prop1_check(
    env: &LinearFeedbackEnv,
    f: &Forecaster,
    p: &DeploymentPolicy,
    loss: Loss,
    n: usize,
    seed: SeedSpec,
) -> Result<Prop1Report> {
    let lipschitz = loss.lipschitz().ok_or_else(|| {
        Error::InvalidArgument(format!(
            "the certificate needs a uniformly Lipschitz loss, {loss:?} has none"
        ))
    })?;
    let gap = feedback_gap(env, f, p, loss, n, seed.child(0))?;
    let kappa = env.beta().abs();
    // E |action(f(H), H)| over passive history draws.
    let act_mag = fold_stream_blocks(n, seed.child(1), |s| {
        let h = env.sample_history(s);
        let ctx = Context::new(h)?;
        act(p, forecast(f, ctx)?, ctx).map(f64::abs)
    })?;
    let kappa_expectation_term = kappa * act_mag.mean();
    let bound = lipschitz * kappa_expectation_term;
    let bound_se = lipschitz * kappa * act_mag.std_error();
    let combined_std_error = gap.std_error().hypot(bound_se);
    let gap_abs = gap.gap.abs();
    Ok(Prop1Report {
        gap_abs,
        bound,
        lipschitz,
        kappa_expectation_term,
        combined_std_error,
        holds: gap_abs <= bound + 3.0 * combined_std_error,
        n,
    })
}
