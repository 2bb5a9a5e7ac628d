//! Demonstrations of the two headline phenomena: crowding-induced ranking
//! inversion and non-identifiability of feedback from passive data.
//!
//! The crowding curve traces deployment risk of competing linear models as
//! a function of deployment intensity; past a threshold intensity the
//! aggressive model that wins on historical data loses under deployment.
//! The non-identifiability demo produces byte-identical passive data from
//! environments whose deployment risks differ by arbitrary margins.

use serde::Serialize;

use crate::core::{DeploymentPolicy, Forecaster, Loss};
use crate::env::{
    draws_bit_identical, sample_passive, ConcaveImpactEnv, CrowdingEnv, LinearFeedbackEnv,
};
use crate::risk::{
    closed_form_deployment_risk, closed_form_nonid_risk, mc_deployment_risk, mc_historical_risk,
    RiskEstimate,
};
use crate::rng::SeedSpec;
use crate::{Error, Result};

/// Product of crowding coefficient and intensity above which deploying the
/// aggressive model (coefficient 1) is worse than deploying the damped
/// model (coefficient `c_prime`): `(1 - c') / (1 + c')`.
pub fn inversion_threshold(c_prime: f64) -> Result<f64> {
    if !(c_prime.is_finite() && (0.0..1.0).contains(&c_prime)) {
        return Err(Error::InvalidArgument(format!(
            "damped coefficient must lie in [0, 1), got {c_prime}"
        )));
    }
    Ok((1.0 - c_prime) / (1.0 + c_prime))
}

/// Intensity at which the deployment risks of coefficients 1 and `c_prime`
/// cross for crowding coefficient `gamma`: the inversion threshold divided
/// by `gamma`.
pub fn crossing_alpha(c_prime: f64, gamma: f64) -> Result<f64> {
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "crowding coefficient must be positive, got {gamma}"
        )));
    }
    Ok(inversion_threshold(c_prime)? / gamma)
}

/// How curve points are computed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum CurveMode {
    Analytic,
    MonteCarlo,
}

/// One model's risk profile along the intensity grid.
#[derive(Clone, Debug, Serialize)]
pub struct CurveModel {
    /// Forecast coefficient.
    pub c: f64,
    /// Deployment risk at each grid intensity.
    pub risks: Vec<f64>,
    /// Monte Carlo standard errors; empty in analytic mode.
    pub std_errors: Vec<f64>,
}

/// Deployment risk of competing linear models across intensities.
#[derive(Clone, Debug, Serialize)]
pub struct CrowdingCurve {
    pub gamma: f64,
    pub sigma: f64,
    pub mode: CurveMode,
    /// Draws per Monte Carlo point; 0 in analytic mode.
    pub n_mc: usize,
    pub alphas: Vec<f64>,
    pub models: Vec<CurveModel>,
    /// Analytic intensity where the two risk curves meet. Populated only
    /// for exactly two models with distinct positive-sum coefficients.
    pub crossing_alpha: Option<f64>,
    /// Adjacent grid pair where the estimated risk difference changes
    /// sign; Monte Carlo mode with two models only. Exact ties join the
    /// earlier regime.
    pub mc_sign_change: Option<(f64, f64)>,
}

/// Traces deployment risk of the linear models `cs` over the intensity
/// grid `alphas` in the crowding process, analytically or by simulation.
pub fn crowding_curve(
    cs: &[f64],
    alphas: &[f64],
    gamma: f64,
    sigma: f64,
    mode: CurveMode,
    n_mc: usize,
    seed: SeedSpec,
) -> Result<CrowdingCurve> {
    if cs.is_empty() {
        return Err(Error::InvalidArgument("need at least one model".into()));
    }
    for &c in cs {
        if !(c.is_finite() && (0.0..=1.0).contains(&c)) {
            return Err(Error::InvalidArgument(format!(
                "forecast coefficients must lie in [0, 1], got {c}"
            )));
        }
    }
    if alphas.is_empty() {
        return Err(Error::InvalidArgument("intensity grid is empty".into()));
    }
    for &a in alphas {
        if !(a.is_finite() && a >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "intensities must be finite and nonnegative, got {a}"
            )));
        }
    }
    if !alphas.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::InvalidArgument(
            "intensity grid must be strictly ascending".into(),
        ));
    }
    let env = CrowdingEnv::new(gamma, sigma)?;
    if mode == CurveMode::MonteCarlo && n_mc < 2 {
        return Err(Error::InvalidArgument(format!(
            "Monte Carlo mode needs at least 2 draws per point, got {n_mc}"
        )));
    }

    let mut models = Vec::with_capacity(cs.len());
    for (i, &c) in cs.iter().enumerate() {
        let mut risks = Vec::with_capacity(alphas.len());
        let mut std_errors = Vec::new();
        for (j, &alpha) in alphas.iter().enumerate() {
            match mode {
                CurveMode::Analytic => {
                    risks.push(closed_form_deployment_risk(c, alpha, gamma, sigma)?);
                }
                CurveMode::MonteCarlo => {
                    let est = mc_deployment_risk(
                        &env,
                        &Forecaster::Linear(c),
                        &DeploymentPolicy::Proportional(alpha),
                        Loss::Squared,
                        n_mc,
                        seed.child((i * alphas.len() + j) as u64),
                    )?;
                    risks.push(est.value);
                    std_errors.push(est.std_error);
                }
            }
        }
        models.push(CurveModel { c, risks, std_errors });
    }

    let crossing = match cs {
        &[c1, c2] if c1 != c2 && c1 + c2 > 0.0 => Some((2.0 - c1 - c2) / (gamma * (c1 + c2))),
        _ => None,
    };

    let mc_sign_change = if mode == CurveMode::MonteCarlo && models.len() == 2 {
        sign_change_interval(alphas, &models[0].risks, &models[1].risks)
    } else {
        None
    };

    Ok(CrowdingCurve {
        gamma,
        sigma,
        mode,
        n_mc: if mode == CurveMode::MonteCarlo { n_mc } else { 0 },
        alphas: alphas.to_vec(),
        models,
        crossing_alpha: crossing,
        mc_sign_change,
    })
}

/// First adjacent grid pair where `r0 - r1` strictly changes sign. Exact
/// zeros extend the sign regime in force before them.
fn sign_change_interval(alphas: &[f64], r0: &[f64], r1: &[f64]) -> Option<(f64, f64)> {
    let mut prev: Option<(usize, f64)> = None;
    for (j, (&a, &b)) in r0.iter().zip(r1).enumerate() {
        let d = a - b;
        let s = if d > 0.0 {
            1.0
        } else if d < 0.0 {
            -1.0
        } else {
            0.0
        };
        match prev {
            None => {
                if s != 0.0 {
                    prev = Some((j, s));
                }
            }
            Some((pj, ps)) => {
                if s == 0.0 || s == ps {
                    prev = Some((j, ps));
                } else {
                    return Some((alphas[pj], alphas[j]));
                }
            }
        }
    }
    None
}

/// Writes a crowding curve as CSV: `alpha`, one risk column per model,
/// then one standard-error column per model in Monte Carlo mode.
/// 17 significant digits throughout.
pub fn write_curve_csv<W: std::io::Write>(
    curve: &CrowdingCurve,
    w: &mut W,
) -> std::io::Result<()> {
    let mut header = String::from("alpha");
    for m in &curve.models {
        header.push_str(&format!(",risk_c={}", m.c));
    }
    if curve.mode == CurveMode::MonteCarlo {
        for m in &curve.models {
            header.push_str(&format!(",se_c={}", m.c));
        }
    }
    writeln!(w, "{header}")?;
    for (j, &alpha) in curve.alphas.iter().enumerate() {
        let mut line = format!("{alpha:.16e}");
        for m in &curve.models {
            line.push_str(&format!(",{:.16e}", m.risks[j]));
        }
        if curve.mode == CurveMode::MonteCarlo {
            for m in &curve.models {
                line.push_str(&format!(",{:.16e}", m.std_errors[j]));
            }
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

/// Evidence that passive data cannot identify the feedback coefficient.
#[derive(Clone, Debug, Serialize)]
pub struct NonIdReport {
    pub betas: Vec<f64>,
    pub sigma: f64,
    pub n: usize,
    /// Whether the passive samples of all environments agree bit for bit.
    pub passive_identical: bool,
    /// Monte Carlo historical risk of the identity forecaster (identical
    /// across environments when `passive_identical` is true).
    pub passive_risk: f64,
    pub passive_std_error: f64,
    /// Monte Carlo deployment risk of the identity forecaster at unit
    /// intensity, one entry per feedback coefficient.
    pub deployment_risks: Vec<f64>,
    pub deployment_std_errors: Vec<f64>,
    /// Exact deployment risks `sigma^2 + beta^2` for reference.
    pub closed_forms: Vec<f64>,
}

/// Samples passive and deployed data from linear-feedback environments that
/// differ only in feedback coefficient. Passive draws are byte-identical
/// across coefficients; deployment risks separate by `beta^2`.
pub fn nonid_demo(betas: &[f64], sigma: f64, n: usize, seed: SeedSpec) -> Result<NonIdReport> {
    if betas.is_empty() {
        return Err(Error::InvalidArgument(
            "need at least one feedback coefficient".into(),
        ));
    }
    let envs = betas
        .iter()
        .map(|&b| LinearFeedbackEnv::new(b, sigma))
        .collect::<Result<Vec<_>>>()?;
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "demo needs at least 2 draws, got {n}"
        )));
    }

    let f = Forecaster::Linear(1.0);
    let p = DeploymentPolicy::Proportional(1.0);

    let reference = sample_passive(&envs[0], n, seed.child(0))?;
    let mut passive_identical = true;
    for env in &envs[1..] {
        let sample = sample_passive(env, n, seed.child(0))?;
        passive_identical &= draws_bit_identical(&reference, &sample);
    }

    let passive = mc_historical_risk(&envs[0], &f, Loss::Squared, n, seed.child(0))?;

    let mut deployment_risks = Vec::with_capacity(envs.len());
    let mut deployment_std_errors = Vec::with_capacity(envs.len());
    let mut closed_forms = Vec::with_capacity(envs.len());
    for (env, &beta) in envs.iter().zip(betas) {
        let est = mc_deployment_risk(env, &f, &p, Loss::Squared, n, seed.child(1))?;
        deployment_risks.push(est.value);
        deployment_std_errors.push(est.std_error);
        closed_forms.push(closed_form_nonid_risk(beta, sigma)?);
    }

    Ok(NonIdReport {
        betas: betas.to_vec(),
        sigma,
        n,
        passive_identical,
        passive_risk: passive.value,
        passive_std_error: passive.std_error,
        deployment_risks,
        deployment_std_errors,
        closed_forms,
    })
}

/// Deployment risk under a concave-impact outcome process compared with
/// its linear approximation.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ImpactPerturbation {
    pub linear_beta: f64,
    pub eta: f64,
    pub sigma: f64,
    pub linear_risk: RiskEstimate,
    pub concave_risk: RiskEstimate,
    /// `concave_risk - linear_risk`: what assuming linear impact misses.
    pub delta: f64,
}

/// Evaluates the same deployment under linear impact `linear_beta * a` and
/// concave impact `-eta * sign(a) * sqrt(|a|)`, with common random draws.
pub fn impact_perturbation(
    f: &Forecaster,
    p: &DeploymentPolicy,
    sigma: f64,
    linear_beta: f64,
    eta: f64,
    n: usize,
    seed: SeedSpec,
) -> Result<ImpactPerturbation> {
    let linear = LinearFeedbackEnv::new(linear_beta, sigma)?;
    let concave = ConcaveImpactEnv::new(eta, sigma)?;
    let linear_risk = mc_deployment_risk(&linear, f, p, Loss::Squared, n, seed)?;
    let concave_risk = mc_deployment_risk(&concave, f, p, Loss::Squared, n, seed)?;
    Ok(ImpactPerturbation {
        linear_beta,
        eta,
        sigma,
        linear_risk,
        concave_risk,
        delta: concave_risk.value - linear_risk.value,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const SEED: SeedSpec = SeedSpec {
        master_seed: 31,
        stream_id: 0,
    };

    fn grid() -> Vec<f64> {
        (0..=20).map(|i| i as f64 * 0.05).collect()
    }

    #[test]
    fn threshold_values() {
        assert_eq!(inversion_threshold(0.0).unwrap(), 1.0);
        assert!((inversion_threshold(0.25).unwrap() - 0.6).abs() < 1e-15);
        assert!(inversion_threshold(1.0).is_err());
        assert!(inversion_threshold(-0.1).is_err());
    }

    #[test]
    fn crossing_value() {
        let a = crossing_alpha(0.25, 1.35).unwrap();
        assert!((a - 4.0 / 9.0).abs() < 1e-15, "crossing = {a}");
        assert!(crossing_alpha(0.25, 0.0).is_err());
    }

    #[test]
    fn analytic_curve_endpoints_and_crossing() {
        let curve = crowding_curve(
            &[1.0, 0.25],
            &grid(),
            1.35,
            0.5,
            CurveMode::Analytic,
            0,
            SEED,
        )
        .unwrap();
        assert_eq!(curve.models.len(), 2);
        assert_eq!(curve.models[0].risks[0], 0.25);
        assert_eq!(curve.models[1].risks[0], 0.8125);
        assert!((curve.models[0].risks[20] - 2.0725).abs() < 1e-12);
        assert!((curve.models[1].risks[20] - 0.42015625).abs() < 1e-12);
        let crossing = curve.crossing_alpha.unwrap();
        assert!((crossing - 4.0 / 9.0).abs() < 1e-15);
        assert!((crossing - crossing_alpha(0.25, 1.35).unwrap()).abs() < 1e-15);
        assert!(curve.mc_sign_change.is_none());
        assert!(curve.models.iter().all(|m| m.std_errors.is_empty()));
    }

    #[test]
    fn analytic_curves_agree_at_the_crossing() {
        let c1 = 1.0;
        let c2 = 0.25;
        let gamma = 1.35;
        let a = crossing_alpha(c2, gamma).unwrap();
        let r1 = closed_form_deployment_risk(c1, a, gamma, 0.5).unwrap();
        let r2 = closed_form_deployment_risk(c2, a, gamma, 0.5).unwrap();
        assert!((r1 - 0.61).abs() < 1e-12);
        assert!((r1 - r2).abs() < 1e-12);
    }

    #[test]
    fn curve_rejects_bad_grids() {
        let alphas = grid();
        assert!(crowding_curve(&[], &alphas, 1.35, 0.5, CurveMode::Analytic, 0, SEED).is_err());
        assert!(crowding_curve(&[1.5], &alphas, 1.35, 0.5, CurveMode::Analytic, 0, SEED).is_err());
        assert!(crowding_curve(&[1.0], &[], 1.35, 0.5, CurveMode::Analytic, 0, SEED).is_err());
        assert!(
            crowding_curve(&[1.0], &[0.1, 0.1], 1.35, 0.5, CurveMode::Analytic, 0, SEED).is_err()
        );
        assert!(
            crowding_curve(&[1.0], &[0.2, 0.1], 1.35, 0.5, CurveMode::Analytic, 0, SEED).is_err()
        );
        assert!(
            crowding_curve(&[1.0], &alphas, 1.35, 0.5, CurveMode::MonteCarlo, 1, SEED).is_err()
        );
    }

    #[test]
    fn crossing_requires_exactly_two_distinct_models() {
        let alphas = grid();
        let one =
            crowding_curve(&[1.0], &alphas, 1.35, 0.5, CurveMode::Analytic, 0, SEED).unwrap();
        assert!(one.crossing_alpha.is_none());
        let same = crowding_curve(
            &[0.5, 0.5],
            &alphas,
            1.35,
            0.5,
            CurveMode::Analytic,
            0,
            SEED,
        )
        .unwrap();
        assert!(same.crossing_alpha.is_none());
        let three = crowding_curve(
            &[1.0, 0.5, 0.25],
            &alphas,
            1.35,
            0.5,
            CurveMode::Analytic,
            0,
            SEED,
        )
        .unwrap();
        assert!(three.crossing_alpha.is_none());
    }

    #[test]
    fn mc_curve_brackets_the_crossing() {
        let curve = crowding_curve(
            &[1.0, 0.25],
            &grid(),
            1.35,
            0.5,
            CurveMode::MonteCarlo,
            200_000,
            SEED,
        )
        .unwrap();
        // Every point within 3 standard errors of its closed form.
        for m in &curve.models {
            for (j, &alpha) in curve.alphas.iter().enumerate() {
                let want = closed_form_deployment_risk(m.c, alpha, 1.35, 0.5).unwrap();
                assert!(
                    (m.risks[j] - want).abs() < 3.0 * m.std_errors[j],
                    "c = {}, alpha = {alpha}: got {}, want {want}",
                    m.c,
                    m.risks[j]
                );
            }
        }
        let (lo, hi) = curve.mc_sign_change.unwrap();
        let crossing = curve.crossing_alpha.unwrap();
        assert!(
            lo < crossing && crossing < hi,
            "sign change ({lo}, {hi}) does not bracket {crossing}"
        );
        assert!((lo - 0.40).abs() < 1e-12 && (hi - 0.45).abs() < 1e-12);
    }

    #[test]
    fn sign_change_handles_ties() {
        let alphas = [0.0, 1.0, 2.0, 3.0];
        // Tie joins the regime before it.
        let r0 = [1.0, 2.0, 2.0, 9.0];
        let r1 = [2.0, 2.0, 2.0, 2.0];
        assert_eq!(
            sign_change_interval(&alphas, &r0, &r1),
            Some((2.0, 3.0))
        );
        // No strict flip anywhere.
        let r2 = [1.0, 2.0, 2.0, 2.0];
        assert_eq!(sign_change_interval(&alphas, &r2, &r1), None);
        // Leading ties carry no regime.
        let r3 = [2.0, 2.0, 1.0, 9.0];
        assert_eq!(
            sign_change_interval(&alphas, &r3, &r1),
            Some((2.0, 3.0))
        );
    }

    #[test]
    fn curve_csv_layout() {
        let curve = crowding_curve(
            &[1.0, 0.25],
            &[0.0, 0.5],
            1.35,
            0.5,
            CurveMode::Analytic,
            0,
            SEED,
        )
        .unwrap();
        let mut buf = Vec::new();
        write_curve_csv(&curve, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "alpha,risk_c=1,risk_c=0.25");
        let first = lines.next().unwrap();
        assert!(first.starts_with("0.0000000000000000e0,"));
        assert_eq!(text.lines().count(), 3);
    }

    #[test]
    fn nonid_demo_separates_deployment_risks() {
        let rep = nonid_demo(&[0.0, 0.5, 1.0], 0.5, 200_000, SEED).unwrap();
        assert!(rep.passive_identical);
        assert!(
            (rep.passive_risk - 0.25).abs() < 3.0 * rep.passive_std_error,
            "passive risk = {}",
            rep.passive_risk
        );
        assert_eq!(rep.closed_forms, vec![0.25, 0.5, 1.25]);
        for i in 0..3 {
            assert!(
                (rep.deployment_risks[i] - rep.closed_forms[i]).abs()
                    < 3.0 * rep.deployment_std_errors[i],
                "beta = {}: got {}, want {}",
                rep.betas[i],
                rep.deployment_risks[i],
                rep.closed_forms[i]
            );
        }
        // Risks strictly separate in beta.
        assert!(rep.deployment_risks[0] < rep.deployment_risks[1]);
        assert!(rep.deployment_risks[1] < rep.deployment_risks[2]);
    }

    #[test]
    fn nonid_demo_validates() {
        assert!(nonid_demo(&[], 0.5, 100, SEED).is_err());
        assert!(nonid_demo(&[0.0], 0.0, 100, SEED).is_err());
        assert!(nonid_demo(&[0.0], 0.5, 1, SEED).is_err());
    }

    #[test]
    fn impact_perturbation_matches_closed_forms() {
        // Identity forecaster at unit intensity, sigma = 0.5. Linear with
        // beta = -1 cancels the history: risk 1.25. Concave with eta = 1:
        // risk E|H| + sigma^2 = sqrt(2/pi) + 0.25.
        let rep = impact_perturbation(
            &Forecaster::Linear(1.0),
            &DeploymentPolicy::Proportional(1.0),
            0.5,
            -1.0,
            1.0,
            200_000,
            SEED,
        )
        .unwrap();
        assert!(
            (rep.linear_risk.value - 1.25).abs() < 3.0 * rep.linear_risk.std_error,
            "linear risk = {}",
            rep.linear_risk.value
        );
        let want = 0.25 + 0.7978845608028654;
        assert!(
            (rep.concave_risk.value - want).abs() < 3.0 * rep.concave_risk.std_error,
            "concave risk = {}",
            rep.concave_risk.value
        );
        assert!(rep.delta < 0.0, "delta = {}", rep.delta);
        assert_eq!(
            rep.delta,
            rep.concave_risk.value - rep.linear_risk.value
        );
    }
}
