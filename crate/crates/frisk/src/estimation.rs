//! Recovering the feedback coefficient from randomized action experiments.
//!
//! Passive data cannot identify how outcomes react to actions, but a
//! deliberately randomized action stream can: actions drawn independently
//! of features make ordinary least squares on `(features, action)`
//! consistent for the joint coefficient vector. This module generates such
//! instrumented datasets, fits them, and computes finite-sample error
//! bounds — a high-probability cap on the parameter error given a design
//! floor, and a derived cap on the error of a plug-in deployment-risk
//! estimate. [`coverage_experiment`] measures how often the caps hold.

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::core::{forecast, Context, Forecaster};
use crate::rng::SeedSpec;
use crate::{Error, Result};

/// Numerical slack for bound comparisons: least-squares on noiseless data
/// recovers parameters only to rounding error, which must still count as
/// covered when the theoretical bound is exactly zero.
const COVER_SLACK: f64 = 1e-12;

/// Regression design with rows `z_i = (features_i, action_i)`, stored
/// row-major. Every row norm is capped by `norm_cap`.
#[derive(Clone, Debug)]
pub struct DesignMatrix {
    data: Vec<f64>,
    n: usize,
    p: usize,
    norm_cap: f64,
}

impl DesignMatrix {
    /// Wraps `n x p` row-major data, checking shape, finiteness, and the
    /// row-norm cap.
    pub fn new(data: Vec<f64>, n: usize, p: usize, norm_cap: f64) -> Result<Self> {
        if p < 2 {
            return Err(Error::InvalidArgument(format!(
                "design needs at least 2 columns (features plus action), got {p}"
            )));
        }
        if n < p {
            return Err(Error::InvalidArgument(format!(
                "design needs at least as many rows as columns, got {n} x {p}"
            )));
        }
        if data.len() != n * p {
            return Err(Error::InvalidArgument(format!(
                "design data has length {}, expected {n} x {p}",
                data.len()
            )));
        }
        if !(norm_cap.is_finite() && norm_cap > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "row norm cap must be positive, got {norm_cap}"
            )));
        }
        for (i, row) in data.chunks(p).enumerate() {
            let norm2: f64 = row.iter().map(|v| v * v).sum();
            if !norm2.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "row {i} contains non-finite values"
                )));
            }
            if norm2.sqrt() > norm_cap * (1.0 + 1e-12) {
                return Err(Error::Contract(format!(
                    "row {i} has norm {} above the cap {norm_cap}",
                    norm2.sqrt()
                )));
            }
        }
        Ok(DesignMatrix {
            data,
            n,
            p,
            norm_cap,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn norm_cap(&self) -> f64 {
        self.norm_cap
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.p..(i + 1) * self.p]
    }

    /// Normalized Gram matrix `Z'Z / n`, row-major `p x p`.
    pub fn gram(&self) -> Vec<f64> {
        let p = self.p;
        let mut g = vec![0.0; p * p];
        for row in self.data.chunks(p) {
            for r in 0..p {
                for c in r..p {
                    g[r * p + c] += row[r] * row[c];
                }
            }
        }
        let inv_n = 1.0 / self.n as f64;
        for r in 0..p {
            for c in r..p {
                g[r * p + c] *= inv_n;
                g[c * p + r] = g[r * p + c];
            }
        }
        g
    }
}

/// Simulates an instrumented dataset: exogenous Gaussian features, an
/// action drawn uniformly from `(-a_max, a_max)` independently of them,
/// and outcomes `y = theta . features + beta * action + sigma * noise`.
///
/// Feature vectors are rescaled onto the ball of radius
/// `sqrt(norm_cap^2 - a_max^2)` when they exceed it, so every design row
/// satisfies the cap; outcomes are generated from the rescaled features,
/// keeping the linear model exact. Requires `norm_cap > a_max > 0`.
pub fn generate_instrumented_data(
    theta: &[f64],
    beta: f64,
    sigma: f64,
    norm_cap: f64,
    a_max: f64,
    n: usize,
    seed: SeedSpec,
) -> Result<(DesignMatrix, Vec<f64>)> {
    if theta.is_empty() {
        return Err(Error::InvalidArgument(
            "need at least one feature coefficient".into(),
        ));
    }
    if theta.iter().any(|t| !t.is_finite()) || !beta.is_finite() {
        return Err(Error::InvalidArgument(
            "coefficients must be finite".into(),
        ));
    }
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "noise standard deviation must be nonnegative, got {sigma}"
        )));
    }
    if !(a_max.is_finite() && a_max > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "action range must be positive, got {a_max}"
        )));
    }
    if !(norm_cap.is_finite() && norm_cap > a_max) {
        return Err(Error::InvalidArgument(format!(
            "row norm cap must exceed the action range, got cap {norm_cap} with a_max {a_max}"
        )));
    }
    let p = theta.len() + 1;
    if n < p {
        return Err(Error::InvalidArgument(format!(
            "need at least {p} rows for {p} columns, got {n}"
        )));
    }

    let feature_cap2 = norm_cap * norm_cap - a_max * a_max;
    let mut s = seed.stream();
    let mut data = Vec::with_capacity(n * p);
    let mut y = Vec::with_capacity(n);
    let mut phi = vec![0.0; p - 1];
    for _ in 0..n {
        let mut norm2 = 0.0;
        for v in phi.iter_mut() {
            *v = s.next_normal();
            norm2 += *v * *v;
        }
        if norm2 > feature_cap2 {
            let scale = (feature_cap2 / norm2).sqrt();
            for v in phi.iter_mut() {
                *v *= scale;
            }
        }
        let a = a_max * (2.0 * s.next_uniform() - 1.0);
        let noise = s.next_normal();
        let mean: f64 = theta.iter().zip(&phi).map(|(t, v)| t * v).sum::<f64>() + beta * a;
        data.extend_from_slice(&phi);
        data.push(a);
        y.push(mean + sigma * noise);
    }
    Ok((DesignMatrix::new(data, n, p, norm_cap)?, y))
}

/// Least-squares fit of a design against outcomes.
#[derive(Clone, Debug, Serialize)]
pub struct OlsFit {
    pub w_hat: Vec<f64>,
    /// Smallest eigenvalue of the normalized Gram matrix.
    pub gram_min_eigenvalue: f64,
    /// Residual sum of squares over `n - p`; 0 when `n == p`.
    pub residual_variance: f64,
}

/// Ordinary least squares via Householder QR.
///
/// Fails with [`Error::SingularDesign`] when the normalized Gram matrix is
/// numerically rank-deficient.
pub fn ols_fit(z: &DesignMatrix, y: &[f64]) -> Result<OlsFit> {
    let (n, p) = (z.n, z.p);
    if y.len() != n {
        return Err(Error::InvalidArgument(format!(
            "outcome length {} does not match {n} design rows",
            y.len()
        )));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(
            "outcomes must be finite".into(),
        ));
    }
    let gram_min_eigenvalue = min_eigen_sym(&z.gram(), p)?;
    if gram_min_eigenvalue <= 1e-12 {
        return Err(Error::SingularDesign(format!(
            "smallest Gram eigenvalue {gram_min_eigenvalue} is at or below 1e-12"
        )));
    }

    let mut a = z.data.clone();
    let mut qty = y.to_vec();
    for k in 0..p {
        // Householder reflector annihilating column k below the diagonal.
        let norm2: f64 = (k..n).map(|i| a[i * p + k] * a[i * p + k]).sum();
        let norm = norm2.sqrt();
        if norm == 0.0 {
            return Err(Error::SingularDesign(format!(
                "column {k} is zero below the diagonal"
            )));
        }
        let akk = a[k * p + k];
        let alpha = if akk > 0.0 { -norm } else { norm };
        let vk = akk - alpha;
        let vtv = norm2 - 2.0 * alpha * akk + alpha * alpha;
        // Apply I - 2 v v' / v'v to the remaining columns and to y.
        for j in (k + 1)..p {
            let mut dot = vk * a[k * p + j];
            for i in (k + 1)..n {
                dot += a[i * p + k] * a[i * p + j];
            }
            let coef = 2.0 * dot / vtv;
            a[k * p + j] -= coef * vk;
            for i in (k + 1)..n {
                a[i * p + j] -= coef * a[i * p + k];
            }
        }
        let mut dot = vk * qty[k];
        for i in (k + 1)..n {
            dot += a[i * p + k] * qty[i];
        }
        let coef = 2.0 * dot / vtv;
        qty[k] -= coef * vk;
        for i in (k + 1)..n {
            qty[i] -= coef * a[i * p + k];
        }
        a[k * p + k] = alpha;
        for i in (k + 1)..n {
            a[i * p + k] = 0.0;
        }
    }

    let mut w_hat = vec![0.0; p];
    for k in (0..p).rev() {
        let mut v = qty[k];
        for j in (k + 1)..p {
            v -= a[k * p + j] * w_hat[j];
        }
        let r = a[k * p + k];
        if r == 0.0 {
            return Err(Error::SingularDesign(format!(
                "zero pivot in column {k}"
            )));
        }
        w_hat[k] = v / r;
    }

    let mut rss = 0.0;
    for (i, &yi) in y.iter().enumerate() {
        let fit: f64 = z.row(i).iter().zip(&w_hat).map(|(a, b)| a * b).sum();
        let r = yi - fit;
        rss += r * r;
    }
    let residual_variance = if n > p { rss / (n - p) as f64 } else { 0.0 };

    Ok(OlsFit {
        w_hat,
        gram_min_eigenvalue,
        residual_variance,
    })
}

/// Smallest eigenvalue of a symmetric matrix (row-major `dim x dim`) by
/// cyclic Jacobi rotations.
pub fn min_eigen_sym(matrix: &[f64], dim: usize) -> Result<f64> {
    if dim == 0 || matrix.len() != dim * dim {
        return Err(Error::InvalidArgument(format!(
            "matrix length {} does not match dimension {dim}",
            matrix.len()
        )));
    }
    if matrix.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(
            "matrix entries must be finite".into(),
        ));
    }
    let scale = matrix.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    for r in 0..dim {
        for c in (r + 1)..dim {
            if (matrix[r * dim + c] - matrix[c * dim + r]).abs() > 1e-12 * scale {
                return Err(Error::InvalidArgument(format!(
                    "matrix is not symmetric at ({r}, {c})"
                )));
            }
        }
    }

    let mut a = matrix.to_vec();
    let off = |a: &[f64]| -> f64 {
        let mut s = 0.0;
        for r in 0..dim {
            for c in (r + 1)..dim {
                s += a[r * dim + c] * a[r * dim + c];
            }
        }
        s.sqrt()
    };
    let tol = 1e-14 * scale * dim as f64;
    let mut converged = off(&a) <= tol;
    for _ in 0..50 {
        if converged {
            break;
        }
        for p in 0..dim {
            for q in (p + 1)..dim {
                let apq = a[p * dim + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q * dim + q] - a[p * dim + p]) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (theta * theta + 1.0).sqrt())
                } else {
                    -1.0 / (-theta + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..dim {
                    if k == p || k == q {
                        continue;
                    }
                    let akp = a[k * dim + p];
                    let akq = a[k * dim + q];
                    a[k * dim + p] = c * akp - s * akq;
                    a[p * dim + k] = a[k * dim + p];
                    a[k * dim + q] = s * akp + c * akq;
                    a[q * dim + k] = a[k * dim + q];
                }
                a[p * dim + p] -= t * apq;
                a[q * dim + q] += t * apq;
                a[p * dim + q] = 0.0;
                a[q * dim + p] = 0.0;
            }
        }
        converged = off(&a) <= tol;
    }
    if !converged {
        return Err(Error::Domain(
            "eigenvalue iteration did not converge".into(),
        ));
    }
    let min = (0..dim)
        .map(|k| a[k * dim + k])
        .fold(f64::INFINITY, f64::min);
    Ok(min)
}

/// Whether the smallest normalized-Gram eigenvalue reaches the floor
/// `lambda` that the error bounds assume.
pub fn check_design_event(z: &DesignMatrix, lambda: f64) -> Result<bool> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "eigenvalue floor must be positive, got {lambda}"
        )));
    }
    Ok(min_eigen_sym(&z.gram(), z.p)? >= lambda)
}

/// High-probability cap on the least-squares parameter error given the
/// design event: `(sigma * l_cap / lambda) * sqrt(2 p ln(2 p / delta) / n)`
/// holds with probability at least `1 - delta` on that event.
pub fn param_error_bound(
    sigma: f64,
    l_cap: f64,
    lambda: f64,
    p: usize,
    n: usize,
    delta: f64,
) -> Result<f64> {
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "noise standard deviation must be nonnegative, got {sigma}"
        )));
    }
    if !(l_cap.is_finite() && l_cap > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "row norm cap must be positive, got {l_cap}"
        )));
    }
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "eigenvalue floor must be positive, got {lambda}"
        )));
    }
    if p == 0 || n == 0 {
        return Err(Error::InvalidArgument(
            "dimension and sample size must be positive".into(),
        ));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "failure probability must lie in (0, 1), got {delta}"
        )));
    }
    let p = p as f64;
    let n = n as f64;
    Ok(sigma * l_cap / lambda * (2.0 * p * (2.0 * p / delta).ln() / n).sqrt())
}

/// Cap on the prediction error `|z . (w_hat - w)|` over the norm-capped
/// design ball: `l_cap` times [`param_error_bound`].
pub fn epsilon_n_bound(
    sigma: f64,
    l_cap: f64,
    lambda: f64,
    p: usize,
    n: usize,
    delta: f64,
) -> Result<f64> {
    Ok(l_cap * param_error_bound(sigma, l_cap, lambda, p, n, delta)?)
}

/// The finite-sample guarantees attached to one fitted design.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct BoundReport {
    pub sigma: f64,
    pub l_cap: f64,
    pub lambda: f64,
    pub delta: f64,
    pub p: usize,
    pub n: usize,
    /// Whether this design's smallest Gram eigenvalue reaches `lambda`.
    pub design_event_holds: bool,
    pub param_bound: f64,
    pub epsilon_n: f64,
}

/// Evaluates the design event and both bounds for a concrete design.
pub fn bound_report(
    z: &DesignMatrix,
    sigma: f64,
    lambda: f64,
    delta: f64,
) -> Result<BoundReport> {
    let param_bound = param_error_bound(sigma, z.norm_cap(), lambda, z.p(), z.n(), delta)?;
    Ok(BoundReport {
        sigma,
        l_cap: z.norm_cap(),
        lambda,
        delta,
        p: z.p(),
        n: z.n(),
        design_event_holds: check_design_event(z, lambda)?,
        param_bound,
        epsilon_n: z.norm_cap() * param_bound,
    })
}

/// Maps a history context to the feature-plus-action vector the system
/// would log under deployment, with a hard row-norm cap.
#[derive(Clone)]
pub struct PolicyFeatureMap {
    map: Arc<dyn Fn(Context) -> Vec<f64> + Send + Sync>,
    dim: usize,
    norm_cap: f64,
}

impl PolicyFeatureMap {
    pub fn new(
        dim: usize,
        norm_cap: f64,
        map: Arc<dyn Fn(Context) -> Vec<f64> + Send + Sync>,
    ) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidArgument(format!(
                "deployment features need at least 2 coordinates, got {dim}"
            )));
        }
        if !(norm_cap.is_finite() && norm_cap > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "row norm cap must be positive, got {norm_cap}"
            )));
        }
        Ok(PolicyFeatureMap { map, dim, norm_cap })
    }

    /// Deployment features of a proportional policy on a linear forecast:
    /// `(h, 0, ..., 0, adoption * forecast_coef * h)`, rescaled onto the
    /// cap ball when necessary.
    pub fn linear_deployment(
        dim: usize,
        forecast_coef: f64,
        adoption: f64,
        norm_cap: f64,
    ) -> Result<Self> {
        if !forecast_coef.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "forecast coefficient must be finite, got {forecast_coef}"
            )));
        }
        if !(adoption.is_finite() && adoption >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "adoption intensity must be finite and nonnegative, got {adoption}"
            )));
        }
        let cap = norm_cap;
        Self::new(
            dim,
            norm_cap,
            Arc::new(move |ctx: Context| {
                let h = ctx.h();
                let mut z = vec![0.0; dim];
                z[0] = h;
                z[dim - 1] = adoption * forecast_coef * h;
                let norm = (z[0] * z[0] + z[dim - 1] * z[dim - 1]).sqrt();
                if norm > cap {
                    let scale = cap / norm;
                    z[0] *= scale;
                    z[dim - 1] *= scale;
                }
                z
            }),
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn norm_cap(&self) -> f64 {
        self.norm_cap
    }

    /// Evaluates the map, enforcing dimension and norm-cap contracts.
    pub fn features(&self, ctx: Context) -> Result<Vec<f64>> {
        let z = (self.map)(ctx);
        if z.len() != self.dim {
            return Err(Error::Contract(format!(
                "feature map returned {} coordinates, declared {}",
                z.len(),
                self.dim
            )));
        }
        let norm2: f64 = z.iter().map(|v| v * v).sum();
        if !norm2.is_finite() {
            return Err(Error::Contract(
                "feature map returned non-finite values".into(),
            ));
        }
        if norm2.sqrt() > self.norm_cap * (1.0 + 1e-12) {
            return Err(Error::Contract(format!(
                "feature norm {} exceeds the cap {}",
                norm2.sqrt(),
                self.norm_cap
            )));
        }
        Ok(z)
    }
}

/// Plug-in deployment risk of forecaster `f` under squared loss: Monte
/// Carlo over passive history of `(f(h) - z(h) . w)^2`, plus `sigma^2`.
///
/// Two calls with the same seed and `n_outer` share history draws exactly,
/// so plug-in values at different `w` are directly comparable.
pub fn plugin_deployment_risk(
    f: &Forecaster,
    features: &PolicyFeatureMap,
    w: &[f64],
    sigma: f64,
    n_outer: usize,
    seed: SeedSpec,
) -> Result<f64> {
    if w.len() != features.dim() {
        return Err(Error::InvalidArgument(format!(
            "weight length {} does not match feature dimension {}",
            w.len(),
            features.dim()
        )));
    }
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("weights must be finite".into()));
    }
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "noise standard deviation must be nonnegative, got {sigma}"
        )));
    }
    if n_outer < 2 {
        return Err(Error::InvalidArgument(format!(
            "plug-in risk needs at least 2 outer draws, got {n_outer}"
        )));
    }
    let mut s = seed.stream();
    let mut sum = 0.0;
    let mut comp = 0.0;
    for _ in 0..n_outer {
        let ctx = Context::new(s.next_normal())?;
        let z = features.features(ctx)?;
        let mu: f64 = z.iter().zip(w).map(|(a, b)| a * b).sum();
        let d = forecast(f, ctx)? - mu;
        let x = d * d;
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    Ok((sum + comp) / n_outer as f64 + sigma * sigma)
}

/// Cap on the plug-in risk error when predictions are off by at most
/// `epsilon_n` and the oracle prediction error is capped by `b`:
/// `2 b epsilon_n + epsilon_n^2`.
pub fn plugin_error_bound(b: f64, epsilon_n: f64) -> Result<f64> {
    if !(b.is_finite() && b >= 0.0) || !(epsilon_n.is_finite() && epsilon_n >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "caps must be finite and nonnegative, got b = {b}, epsilon_n = {epsilon_n}"
        )));
    }
    Ok(2.0 * b * epsilon_n + epsilon_n * epsilon_n)
}

/// Risk estimate for a deployment, with its certified error cap.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct PluginRiskReport {
    /// Plug-in deployment risk at the fitted parameters.
    pub risk_hat: f64,
    /// Plug-in risk at the true parameters over the same draws, when the
    /// truth is known (simulation studies).
    pub oracle_risk: Option<f64>,
    /// Cap on the oracle prediction error `|f - mu|`.
    pub b_cap: f64,
    pub epsilon_n: f64,
    /// `2 * b_cap * epsilon_n + epsilon_n^2`.
    pub error_bound: f64,
    /// Whether `|risk_hat - oracle_risk|` is within `error_bound`; absent
    /// without an oracle.
    pub within_bound: Option<bool>,
}

/// Configuration of a bound-coverage experiment.
#[derive(Clone, Debug, Serialize)]
pub struct CoverageConfig {
    /// Columns including the action column.
    pub p: usize,
    /// Rows per trial.
    pub n: usize,
    pub sigma: f64,
    /// Row norm cap.
    pub l_cap: f64,
    /// Action range half-width.
    pub a_max: f64,
    /// Assumed floor on the smallest Gram eigenvalue.
    pub lambda: f64,
    /// Failure probability budget for the parameter bound.
    pub delta: f64,
    pub trials: usize,
    /// True coefficients, action effect last; length `p`.
    pub w_true: Vec<f64>,
    /// Outer Monte Carlo draws per plug-in evaluation.
    pub plugin_outer_n: usize,
    /// Proportional intensity of the deployment the plug-in evaluates.
    pub adoption: f64,
}

impl Default for CoverageConfig {
    fn default() -> Self {
        CoverageConfig {
            p: 2,
            n: 10_000,
            sigma: 1.0,
            l_cap: 2.0,
            a_max: 1.0,
            lambda: 0.25,
            delta: 0.05,
            trials: 500,
            w_true: vec![1.0, 0.5],
            plugin_outer_n: 2000,
            adoption: 1.0,
        }
    }
}

/// One simulated trial of the coverage experiment.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct CoverageTrialRow {
    pub trial: usize,
    pub design_event: bool,
    pub param_err: f64,
    pub param_bound: f64,
    pub plugin_err: f64,
    pub plugin_bound: f64,
}

/// Aggregate coverage of the finite-sample bounds.
#[derive(Clone, Debug, Serialize)]
pub struct CoverageReport {
    pub trials: usize,
    /// Fraction of trials whose design reached the eigenvalue floor.
    pub design_event_rate: f64,
    /// Among design-event trials, fraction with parameter error within the
    /// bound; absent if no trial reached the floor.
    pub param_coverage: Option<f64>,
    /// Among design-event trials, fraction with plug-in risk error within
    /// the bound; absent if no trial reached the floor.
    pub plugin_coverage: Option<f64>,
    /// False when the design event never held, leaving the coverage
    /// fractions undefined.
    pub coverage_defined: bool,
    pub param_bound: f64,
    pub epsilon_n: f64,
    pub plugin_bound: f64,
    pub b_cap: f64,
    /// Mean parameter error over design-event trials.
    pub mean_param_err: f64,
    #[serde(skip_serializing)]
    pub rows: Vec<CoverageTrialRow>,
}

/// Runs repeated instrumented-data trials and measures how often the
/// parameter and plug-in error bounds hold on the design event.
///
/// The plug-in legs of each trial share history draws, so their difference
/// isolates the parameter error. The reference forecaster predicts the
/// passive conditional mean (true coefficients with the action effect
/// zeroed), giving oracle prediction error cap
/// `b = l_cap * |true action effect|`.
pub fn coverage_experiment(cfg: &CoverageConfig, seed: SeedSpec) -> Result<CoverageReport> {
    if cfg.w_true.len() != cfg.p {
        return Err(Error::InvalidArgument(format!(
            "true coefficients have length {}, expected p = {}",
            cfg.w_true.len(),
            cfg.p
        )));
    }
    if cfg.trials == 0 {
        return Err(Error::InvalidArgument("need at least one trial".into()));
    }
    let theta = &cfg.w_true[..cfg.p - 1];
    let beta = cfg.w_true[cfg.p - 1];
    let param_bound = param_error_bound(cfg.sigma, cfg.l_cap, cfg.lambda, cfg.p, cfg.n, cfg.delta)?;
    let epsilon_n = cfg.l_cap * param_bound;
    let b_cap = cfg.l_cap * beta.abs();
    let plugin_bound = plugin_error_bound(b_cap, epsilon_n)?;

    let fmap = PolicyFeatureMap::linear_deployment(cfg.p, cfg.w_true[0], cfg.adoption, cfg.l_cap)?;
    let mut w_fore = cfg.w_true.clone();
    w_fore[cfg.p - 1] = 0.0;
    let f_ref = {
        let fmap = fmap.clone();
        let w_fore = w_fore.clone();
        Forecaster::Custom(Arc::new(move |ctx: Context| {
            match fmap.features(ctx) {
                Ok(z) => z.iter().zip(&w_fore).map(|(a, b)| a * b).sum(),
                Err(_) => f64::NAN,
            }
        }))
    };

    let rows: Vec<CoverageTrialRow> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| -> Result<CoverageTrialRow> {
            let trial_seed = seed.child(t as u64);
            let (z, y) = generate_instrumented_data(
                theta,
                beta,
                cfg.sigma,
                cfg.l_cap,
                cfg.a_max,
                cfg.n,
                trial_seed.child(0),
            )?;
            let (design_event, param_err, plugin_err) = match ols_fit(&z, &y) {
                Ok(fit) => {
                    let event = fit.gram_min_eigenvalue >= cfg.lambda;
                    let err = fit
                        .w_hat
                        .iter()
                        .zip(&cfg.w_true)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt();
                    let plug_seed = trial_seed.child(1);
                    let at_fit = plugin_deployment_risk(
                        &f_ref,
                        &fmap,
                        &fit.w_hat,
                        cfg.sigma,
                        cfg.plugin_outer_n,
                        plug_seed,
                    )?;
                    let at_true = plugin_deployment_risk(
                        &f_ref,
                        &fmap,
                        &cfg.w_true,
                        cfg.sigma,
                        cfg.plugin_outer_n,
                        plug_seed,
                    )?;
                    (event, err, (at_fit - at_true).abs())
                }
                Err(Error::SingularDesign(_)) => (false, f64::NAN, f64::NAN),
                Err(e) => return Err(e),
            };
            Ok(CoverageTrialRow {
                trial: t,
                design_event,
                param_err,
                param_bound,
                plugin_err,
                plugin_bound,
            })
        })
        .collect::<Result<_>>()?;

    let event_rows: Vec<&CoverageTrialRow> = rows.iter().filter(|r| r.design_event).collect();
    let design_event_rate = event_rows.len() as f64 / cfg.trials as f64;
    let coverage_defined = !event_rows.is_empty();
    let frac = |pred: &dyn Fn(&CoverageTrialRow) -> bool| -> Option<f64> {
        if event_rows.is_empty() {
            None
        } else {
            Some(event_rows.iter().filter(|r| pred(r)).count() as f64 / event_rows.len() as f64)
        }
    };
    let param_coverage = frac(&|r| r.param_err <= r.param_bound + COVER_SLACK);
    let plugin_coverage = frac(&|r| r.plugin_err <= r.plugin_bound + COVER_SLACK);
    let mean_param_err = if coverage_defined {
        event_rows.iter().map(|r| r.param_err).sum::<f64>() / event_rows.len() as f64
    } else {
        f64::NAN
    };

    Ok(CoverageReport {
        trials: cfg.trials,
        design_event_rate,
        param_coverage,
        plugin_coverage,
        coverage_defined,
        param_bound,
        epsilon_n,
        plugin_bound,
        b_cap,
        mean_param_err,
        rows,
    })
}

/// Writes per-trial coverage rows as CSV, floats at 17 significant digits.
pub fn write_coverage_csv<W: std::io::Write>(
    report: &CoverageReport,
    w: &mut W,
) -> std::io::Result<()> {
    writeln!(
        w,
        "trial,design_event,param_err,param_bound,plugin_err,plugin_bound"
    )?;
    for r in &report.rows {
        writeln!(
            w,
            "{},{},{:.16e},{:.16e},{:.16e},{:.16e}",
            r.trial, r.design_event, r.param_err, r.param_bound, r.plugin_err, r.plugin_bound
        )?;
    }
    Ok(())
}

/// Instrumented data whose action effect is concave, not linear:
/// `y = theta . features + eta * sign(a) * sqrt(|a|) + sigma * noise`,
/// same exogenous design as [`generate_instrumented_data`].
pub fn generate_misspecified_data(
    theta: &[f64],
    eta: f64,
    sigma: f64,
    norm_cap: f64,
    a_max: f64,
    n: usize,
    seed: SeedSpec,
) -> Result<(DesignMatrix, Vec<f64>)> {
    if !eta.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "impact coefficient must be finite, got {eta}"
        )));
    }
    // Generate the linear skeleton with a zero action effect, then add the
    // concave effect; the design and noise stream are untouched, so the
    // two generators share draws at equal seeds.
    let (z, mut y) = generate_instrumented_data(theta, 0.0, sigma, norm_cap, a_max, n, seed)?;
    let p = z.p();
    for (i, yi) in y.iter_mut().enumerate() {
        let a = z.row(i)[p - 1];
        if a != 0.0 {
            *yi += eta * a.signum() * a.abs().sqrt();
        }
    }
    Ok((z, y))
}

/// Least-squares diagnostics under a misspecified (concave) action effect.
#[derive(Clone, Debug, Serialize)]
pub struct MisspecReport {
    pub w_hat: Vec<f64>,
    pub gram_min_eigenvalue: f64,
    pub residual_variance: f64,
    /// Largest absolute deviation between the true conditional mean and
    /// the fitted linear predictor over the sampled rows.
    pub rho_hat: f64,
    pub eta: f64,
}

/// Fits the linear model to concave-effect data and measures the
/// worst-case approximation error over the sample.
pub fn misspec_report(
    z: &DesignMatrix,
    y: &[f64],
    theta: &[f64],
    eta: f64,
) -> Result<MisspecReport> {
    if theta.len() != z.p() - 1 {
        return Err(Error::InvalidArgument(format!(
            "theta has length {}, expected {}",
            theta.len(),
            z.p() - 1
        )));
    }
    if !eta.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "impact coefficient must be finite, got {eta}"
        )));
    }
    let fit = ols_fit(z, y)?;
    let p = z.p();
    let mut rho_hat = 0.0f64;
    for i in 0..z.n() {
        let row = z.row(i);
        let a = row[p - 1];
        let impact = if a == 0.0 {
            0.0
        } else {
            eta * a.signum() * a.abs().sqrt()
        };
        let truth: f64 =
            theta.iter().zip(row).map(|(t, v)| t * v).sum::<f64>() + impact;
        let linear: f64 = fit.w_hat.iter().zip(row).map(|(w, v)| w * v).sum();
        rho_hat = rho_hat.max((truth - linear).abs());
    }
    Ok(MisspecReport {
        w_hat: fit.w_hat,
        gram_min_eigenvalue: fit.gram_min_eigenvalue,
        residual_variance: fit.residual_variance,
        rho_hat,
        eta,
    })
}
