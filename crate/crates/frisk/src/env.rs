//! Outcome processes with an action channel, and deterministic samplers.
//!
//! An [`Environment`] specifies the conditional mean of the next outcome
//! given the observed history `h` and the action `a` taken against it, plus
//! additive Gaussian noise. Passive sampling fixes `a = 0`; deployed
//! sampling routes a forecaster's prediction through a policy to produce
//! `a` before the outcome is drawn.
//!
//! Sampling is sharded into fixed-size blocks, one derived random stream
//! per block, assembled in block order. The thread count therefore never
//! affects a single bit of the output, and a deployed sample under the
//! [`DeploymentPolicy::Zero`] policy is bit-identical to a passive sample
//! with the same seed.

use std::io;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::core::{act, forecast, Context, DeploymentPolicy, Forecaster};
use crate::rng::{SeedSpec, Stream};
use crate::{Error, Result};

/// Draws per sharding block. Fixed so results are independent of the
/// number of worker threads.
pub(crate) const BLOCK: usize = 8192;

/// Baseline mean component of a linear-feedback outcome process.
#[derive(Clone)]
pub enum MeanFn {
    /// `h` itself.
    Identity,
    /// Arbitrary baseline mean.
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl MeanFn {
    #[inline]
    fn eval(&self, h: f64) -> f64 {
        match self {
            MeanFn::Identity => h,
            MeanFn::Custom(f) => f(h),
        }
    }
}

impl std::fmt::Debug for MeanFn {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MeanFn::Identity => write!(f, "Identity"),
            MeanFn::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

/// An outcome process reacting to actions.
pub trait Environment: Send + Sync {
    /// Mean of the next outcome given history `h` and action `a`.
    fn conditional_mean(&self, h: f64, a: f64) -> f64;

    /// Standard deviation of the additive Gaussian noise.
    fn noise_sd(&self) -> f64;

    /// Draws one history value; standard normal for the stylized processes.
    fn sample_history(&self, stream: &mut Stream) -> f64 {
        stream.next_normal()
    }
}

/// Outcome process `y = mu(h) + beta * a + noise`: action feeds back
/// linearly with coefficient `beta`.
#[derive(Clone, Debug)]
pub struct LinearFeedbackEnv {
    mu: MeanFn,
    beta: f64,
    sigma: f64,
}

impl LinearFeedbackEnv {
    /// Identity baseline mean. Requires finite `beta` and `sigma > 0`.
    pub fn new(beta: f64, sigma: f64) -> Result<Self> {
        if !beta.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "feedback coefficient must be finite, got {beta}"
            )));
        }
        check_sigma(sigma)?;
        Ok(LinearFeedbackEnv {
            mu: MeanFn::Identity,
            beta,
            sigma,
        })
    }

    /// Replaces the baseline mean.
    pub fn with_mean(mut self, mu: MeanFn) -> Self {
        self.mu = mu;
        self
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }
}

impl Environment for LinearFeedbackEnv {
    fn conditional_mean(&self, h: f64, a: f64) -> f64 {
        self.mu.eval(h) + self.beta * a
    }

    fn noise_sd(&self) -> f64 {
        self.sigma
    }
}

/// Outcome process `y = h - gamma * a + noise`: every unit of action
/// erodes the predicted quantity, the crowding effect of trading on a
/// signal. Requires `gamma > 0`.
#[derive(Clone, Copy, Debug)]
pub struct CrowdingEnv {
    gamma: f64,
    sigma: f64,
}

impl CrowdingEnv {
    pub fn new(gamma: f64, sigma: f64) -> Result<Self> {
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "crowding coefficient must be positive, got {gamma}"
            )));
        }
        check_sigma(sigma)?;
        Ok(CrowdingEnv { gamma, sigma })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }
}

impl Environment for CrowdingEnv {
    fn conditional_mean(&self, h: f64, a: f64) -> f64 {
        h - self.gamma * a
    }

    fn noise_sd(&self) -> f64 {
        self.sigma
    }
}

/// Outcome process `y = h - eta * sign(a) * sqrt(|a|) + noise`: impact
/// grows sublinearly in the action and always opposes it. Requires
/// `eta > 0`.
#[derive(Clone, Copy, Debug)]
pub struct ConcaveImpactEnv {
    eta: f64,
    sigma: f64,
}

impl ConcaveImpactEnv {
    pub fn new(eta: f64, sigma: f64) -> Result<Self> {
        if !(eta.is_finite() && eta > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "impact coefficient must be positive, got {eta}"
            )));
        }
        check_sigma(sigma)?;
        Ok(ConcaveImpactEnv { eta, sigma })
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }
}

impl Environment for ConcaveImpactEnv {
    fn conditional_mean(&self, h: f64, a: f64) -> f64 {
        let impact = if a == 0.0 {
            0.0
        } else {
            a.signum() * a.abs().sqrt()
        };
        h - self.eta * impact
    }

    fn noise_sd(&self) -> f64 {
        self.sigma
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "noise standard deviation must be positive, got {sigma}"
        )));
    }
    Ok(())
}

/// One sampled record: history, action, outcome.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Draw {
    pub h: f64,
    pub a: f64,
    pub y: f64,
}

impl Draw {
    /// Bitwise equality, distinguishing -0.0 from 0.0 and NaN payloads.
    pub fn bits_eq(&self, other: &Draw) -> bool {
        self.h.to_bits() == other.h.to_bits()
            && self.a.to_bits() == other.a.to_bits()
            && self.y.to_bits() == other.y.to_bits()
    }
}

/// Bitwise equality of two draw slices.
pub fn draws_bit_identical(xs: &[Draw], ys: &[Draw]) -> bool {
    xs.len() == ys.len() && xs.iter().zip(ys).all(|(x, y)| x.bits_eq(y))
}

#[inline]
pub(crate) fn passive_draw<E: Environment + ?Sized>(env: &E, s: &mut Stream) -> Result<Draw> {
    let h = env.sample_history(s);
    let z = s.next_normal();
    finish_draw(env, h, 0.0, z)
}

#[inline]
pub(crate) fn deployed_draw<E: Environment + ?Sized>(
    env: &E,
    f: &Forecaster,
    p: &DeploymentPolicy,
    s: &mut Stream,
) -> Result<Draw> {
    let h = env.sample_history(s);
    let ctx = Context::new(h)?;
    let a = act(p, forecast(f, ctx)?, ctx)?;
    let z = s.next_normal();
    finish_draw(env, h, a, z)
}

#[inline]
fn finish_draw<E: Environment + ?Sized>(env: &E, h: f64, a: f64, z: f64) -> Result<Draw> {
    let y = env.conditional_mean(h, a) + env.noise_sd() * z;
    if !y.is_finite() {
        return Err(Error::Domain(format!(
            "environment produced non-finite outcome at h = {h}, a = {a}"
        )));
    }
    Ok(Draw { h, a, y })
}

/// Samples `n` passive records (no deployment, `a = 0`).
pub fn sample_passive<E: Environment + ?Sized>(
    env: &E,
    n: usize,
    seed: SeedSpec,
) -> Result<Vec<Draw>> {
    check_n(n)?;
    fill_draws(n, seed, |s| passive_draw(env, s))
}

/// Samples `n` records with the forecaster deployed through the policy.
pub fn sample_deployed<E: Environment + ?Sized>(
    env: &E,
    f: &Forecaster,
    p: &DeploymentPolicy,
    n: usize,
    seed: SeedSpec,
) -> Result<Vec<Draw>> {
    check_n(n)?;
    fill_draws(n, seed, |s| deployed_draw(env, f, p, s))
}

fn check_n(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample size must be positive".into()));
    }
    Ok(())
}

fn fill_draws<G>(n: usize, seed: SeedSpec, gen: G) -> Result<Vec<Draw>>
where
    G: Fn(&mut Stream) -> Result<Draw> + Sync,
{
    let mut out = vec![Draw::default(); n];
    out.par_chunks_mut(BLOCK)
        .enumerate()
        .try_for_each(|(b, chunk)| {
            let mut s = seed.child(b as u64).stream();
            for slot in chunk {
                *slot = gen(&mut s)?;
            }
            Ok::<(), Error>(())
        })?;
    Ok(out)
}

/// Streaming first and second moments with compensated summation.
///
/// Accumulation happens per block and blocks are merged in index order, so
/// the result is a pure function of the seed and `n`.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct Moments {
    pub n: usize,
    sum: f64,
    sum_c: f64,
    sumsq: f64,
    sumsq_c: f64,
}

#[inline]
fn neumaier_add(sum: &mut f64, comp: &mut f64, x: f64) {
    let t = *sum + x;
    if sum.abs() >= x.abs() {
        *comp += (*sum - t) + x;
    } else {
        *comp += (x - t) + *sum;
    }
    *sum = t;
}

impl Moments {
    #[inline]
    pub fn add(&mut self, x: f64) {
        neumaier_add(&mut self.sum, &mut self.sum_c, x);
        neumaier_add(&mut self.sumsq, &mut self.sumsq_c, x * x);
        self.n += 1;
    }

    pub fn merge(&mut self, o: &Moments) {
        neumaier_add(&mut self.sum, &mut self.sum_c, o.sum);
        neumaier_add(&mut self.sum, &mut self.sum_c, o.sum_c);
        neumaier_add(&mut self.sumsq, &mut self.sumsq_c, o.sumsq);
        neumaier_add(&mut self.sumsq, &mut self.sumsq_c, o.sumsq_c);
        self.n += o.n;
    }

    pub fn mean(&self) -> f64 {
        (self.sum + self.sum_c) / self.n as f64
    }

    pub fn sample_variance(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        let n = self.n as f64;
        let m = self.mean();
        (((self.sumsq + self.sumsq_c) - n * m * m) / (n - 1.0)).max(0.0)
    }

    /// Standard error of the mean.
    pub fn std_error(&self) -> f64 {
        (self.sample_variance() / self.n as f64).sqrt()
    }
}

/// Folds `per_draw` over `n` evaluations, block-sharded exactly like the
/// samplers: block `b` consumes stream `seed.child(b)` from its start.
pub(crate) fn fold_stream_blocks<F>(n: usize, seed: SeedSpec, per_draw: F) -> Result<Moments>
where
    F: Fn(&mut Stream) -> Result<f64> + Sync,
{
    check_n(n)?;
    let nblocks = n.div_ceil(BLOCK);
    let blocks: Vec<Result<Moments>> = (0..nblocks)
        .into_par_iter()
        .map(|b| {
            let mut s = seed.child(b as u64).stream();
            let lo = b * BLOCK;
            let hi = n.min(lo + BLOCK);
            let mut m = Moments::default();
            for _ in lo..hi {
                m.add(per_draw(&mut s)?);
            }
            Ok(m)
        })
        .collect();
    let mut total = Moments::default();
    for b in blocks {
        total.merge(&b?);
    }
    Ok(total)
}

/// Writes draws as CSV with header `h,a,y`, 17 significant digits per value.
pub fn write_draws_csv<W: io::Write>(draws: &[Draw], w: &mut W) -> io::Result<()> {
    writeln!(w, "h,a,y")?;
    for d in draws {
        writeln!(w, "{:.16e},{:.16e},{:.16e}", d.h, d.a, d.y)?;
    }
    Ok(())
}
