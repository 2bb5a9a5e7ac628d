//! Acceptance gate: one test per release criterion. Each test prints a
//! single PASS line with its wall time and enforces its runtime budget.
//! Tolerances are pinned in the assertions; seeds are frozen so every
//! run is bit-reproducible.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use frisk::diagnostics::{crowding_curve, inversion_threshold, nonid_demo, CurveMode};
use frisk::elasticity::{estimate_elasticity, prop1_check, w1_empirical};
use frisk::env::{CrowdingEnv, LinearFeedbackEnv};
use frisk::estimation::{coverage_experiment, epsilon_n_bound, param_error_bound, CoverageConfig};
use frisk::risk::{
    closed_form_deployment_risk, closed_form_passive_risk, mc_deployment_risk, mc_historical_risk,
};
use frisk::{DeploymentPolicy, Forecaster, Loss, SeedSpec};

/// Master seed of the acceptance runs; frozen.
const MASTER: u64 = 2026;

fn root() -> SeedSpec {
    SeedSpec::new(MASTER, 0)
}

fn finish(criterion: u32, name: &str, started: Instant, limit_secs: Option<f64>) {
    let elapsed = started.elapsed().as_secs_f64();
    if let Some(limit) = limit_secs {
        assert!(
            elapsed <= limit,
            "acceptance {criterion} ({name}): FAIL — took {elapsed:.1}s, limit {limit:.0}s"
        );
    }
    println!("acceptance {criterion} ({name}): PASS in {elapsed:.1}s");
}

#[test]
fn acceptance_1_ranking_inversion() {
    let t = Instant::now();
    let cs = [1.0, 0.25];
    let alphas: Vec<f64> = (0..=20).map(|i| i as f64 * 0.05).collect();
    let star = 4.0 / 9.0;

    let analytic = crowding_curve(&cs, &alphas, 1.35, 0.5, CurveMode::Analytic, 0, root()).unwrap();
    let crossing = analytic.crossing_alpha.expect("two-model crossing");
    assert!(
        (crossing - star).abs() <= 1e-15,
        "analytic crossing {crossing} is not 4/9 to machine precision"
    );
    // strict ranking on each side of the crossing, reversal included
    for (i, &alpha) in alphas.iter().enumerate() {
        let diff = analytic.models[0].risks[i] - analytic.models[1].risks[i];
        if alpha < star {
            assert!(diff < 0.0, "aggressive model must win below the crossing");
        } else if alpha > star {
            assert!(diff > 0.0, "damped model must win above the crossing");
        }
    }

    let mc = crowding_curve(
        &cs,
        &alphas,
        1.35,
        0.5,
        CurveMode::MonteCarlo,
        200_000,
        root().child(1),
    )
    .unwrap();
    for (m, a) in mc.models.iter().zip(&analytic.models) {
        for i in 0..alphas.len() {
            let err = (m.risks[i] - a.risks[i]).abs();
            assert!(
                err <= 3.0 * m.std_errors[i],
                "model c={} at alpha={} off by {err} (3se = {})",
                m.c,
                alphas[i],
                3.0 * m.std_errors[i]
            );
        }
    }
    let (lo, hi) = mc.mc_sign_change.expect("sign change detected");
    assert!(
        (lo - 0.40).abs() < 1e-12 && (hi - 0.45).abs() < 1e-12,
        "sign change in [{lo}, {hi}], expected the cell [0.40, 0.45]"
    );
    assert!(lo < star && star < hi);

    finish(1, "ranking inversion", t, Some(30.0));
}

#[test]
fn acceptance_2_thresholds() {
    let t = Instant::now();
    assert_eq!(inversion_threshold(0.0).unwrap(), 1.0);
    assert_eq!(inversion_threshold(0.25).unwrap(), 0.6);
    finish(2, "intensity thresholds", t, None);
}

#[test]
fn acceptance_3_passive_non_identifiability() {
    let t = Instant::now();
    let betas = [-5.0, 0.0, 0.5, 1.0, 5.0];
    let rep = nonid_demo(&betas, 0.5, 200_000, root().child(3)).unwrap();
    assert!(
        rep.passive_identical,
        "passive streams must be bit-identical across feedback coefficients"
    );
    // deployment risks separate the models the passive data cannot
    for (i, &beta) in betas.iter().enumerate() {
        if !(beta == 0.0 || beta == 0.5 || beta == 1.0) {
            continue;
        }
        let expected = 0.25 + beta * beta;
        assert_eq!(rep.closed_forms[i], expected);
        let err = (rep.deployment_risks[i] - expected).abs();
        assert!(
            err <= 3.0 * rep.deployment_std_errors[i],
            "beta={beta}: deployment risk off by {err}"
        );
    }
    finish(3, "passive non-identifiability", t, Some(10.0));
}

#[test]
fn acceptance_4_closed_form_risk_oracles() {
    let t = Instant::now();
    let env = CrowdingEnv::new(1.35, 0.5).unwrap();
    let seed = root().child(4);
    for (k, &c) in [0.0, 0.25, 0.5, 1.0].iter().enumerate() {
        let f = Forecaster::Linear(c);
        let hist = mc_historical_risk(&env, &f, Loss::Squared, 200_000, seed.child(1000 + k as u64))
            .unwrap();
        let hist_exact = closed_form_passive_risk(c, 0.5).unwrap();
        assert!(
            (hist.value - hist_exact).abs() <= 3.0 * hist.std_error,
            "historical risk at c={c} off by {}",
            (hist.value - hist_exact).abs()
        );
        for (j, &alpha) in [0.0, 0.2, 0.4, 0.6, 0.8, 1.0].iter().enumerate() {
            let est = mc_deployment_risk(
                &env,
                &f,
                &DeploymentPolicy::Proportional(alpha),
                Loss::Squared,
                200_000,
                seed.child((k * 6 + j) as u64),
            )
            .unwrap();
            let exact = closed_form_deployment_risk(c, alpha, 1.35, 0.5).unwrap();
            assert!(
                (est.value - exact).abs() <= 3.0 * est.std_error,
                "deployment risk at (c={c}, alpha={alpha}) off by {}",
                (est.value - exact).abs()
            );
        }
    }
    finish(4, "closed-form risk oracles", t, Some(60.0));
}

#[test]
fn acceptance_5_estimation_coverage() {
    let t = Instant::now();
    // formula evaluations, pinned
    let pb = param_error_bound(1.0, 2.0, 0.5, 2, 10_000, 0.05).unwrap();
    assert!((pb - 0.16747).abs() <= 1e-5, "parameter bound {pb}");
    let eps = epsilon_n_bound(1.0, 2.0, 0.5, 2, 10_000, 0.05).unwrap();
    assert!((eps - 0.33494).abs() <= 2e-5, "prediction bound {eps}");

    let cfg = CoverageConfig::default();
    assert_eq!(
        (cfg.p, cfg.n, cfg.sigma, cfg.l_cap, cfg.a_max, cfg.lambda, cfg.delta, cfg.trials),
        (2, 10_000, 1.0, 2.0, 1.0, 0.25, 0.05, 500)
    );
    let rep = coverage_experiment(&cfg, root().child(5)).unwrap();
    assert!(rep.coverage_defined);
    let cov = rep.param_coverage.expect("design event occurred");
    assert!(cov >= 0.95, "parameter coverage {cov} below the nominal level");
    // on every trial where the parameter bound held, the plug-in risk
    // bound must hold as well (the sandwich argument is deterministic)
    for r in &rep.rows {
        if r.design_event && r.param_err <= r.param_bound + 1e-12 {
            assert!(
                r.plugin_err <= r.plugin_bound + 1e-12,
                "trial {}: parameter bound held but plug-in bound failed",
                r.trial
            );
        }
    }
    finish(5, "estimation coverage", t, Some(120.0));
}

#[test]
fn acceptance_6_small_feedback_certificate() {
    let t = Instant::now();
    // closed-form values for beta = 0.5, sigma = 0.5, c = 1, alpha = 1,
    // absolute loss
    const GAP: f64 = 0.16524730314632366;
    const BOUND: f64 = 0.3989422804014327;

    let grid_seed = root().child(6);
    for (k, &beta) in [0.0, 0.25, 0.5, 1.0].iter().enumerate() {
        for (j, &alpha) in [0.5, 1.0].iter().enumerate() {
            let env = LinearFeedbackEnv::new(beta, 0.5).unwrap();
            let rep = prop1_check(
                &env,
                &Forecaster::Linear(1.0),
                &DeploymentPolicy::Proportional(alpha),
                Loss::Absolute,
                1_000_000,
                grid_seed.child((k * 2 + j) as u64),
            )
            .unwrap();
            assert!(
                rep.holds,
                "certificate failed at beta={beta}, alpha={alpha}: gap {} vs bound {}",
                rep.gap_abs, rep.bound
            );
        }
    }

    // high-precision reference case; seed calibrated once and frozen
    let env = LinearFeedbackEnv::new(0.5, 0.5).unwrap();
    let rep = prop1_check(
        &env,
        &Forecaster::Linear(1.0),
        &DeploymentPolicy::Proportional(1.0),
        Loss::Absolute,
        100_000_000,
        SeedSpec::new(42, 0),
    )
    .unwrap();
    assert!(rep.holds);
    assert!(
        (rep.gap_abs - GAP).abs() <= 3.0 * rep.combined_std_error,
        "gap {} vs closed form {GAP}",
        rep.gap_abs
    );
    assert!(
        (rep.bound - BOUND).abs() <= 1e-4,
        "bound {} vs closed form {BOUND}",
        rep.bound
    );
    finish(6, "small-feedback certificate", t, Some(20.0));
}

#[test]
fn acceptance_7_elasticity() {
    let t = Instant::now();
    let env = LinearFeedbackEnv::new(0.7, 0.5).unwrap();
    let est = estimate_elasticity(&env, 0.0, 0.0, 1.0, 100_000, root().child(7)).unwrap();
    assert!(
        (est.value - 0.7).abs() <= 0.05 * 0.7,
        "elasticity {} not within 5% of 0.7",
        est.value
    );

    // metric and shift identities, exact in floating point: integer-valued
    // samples of length 64 keep every intermediate sum exact
    let mut s = root().child(777).stream();
    let draw_sample = |s: &mut frisk::rng::Stream| -> Vec<f64> {
        (0..64).map(|_| (s.next_u64() % 17) as f64 - 8.0).collect()
    };
    for case in 0..100 {
        let x = draw_sample(&mut s);
        let y = draw_sample(&mut s);
        let z = draw_sample(&mut s);
        assert_eq!(w1_empirical(&x, &x).unwrap(), 0.0, "case {case}: identity");
        assert_eq!(
            w1_empirical(&x, &y).unwrap(),
            w1_empirical(&y, &x).unwrap(),
            "case {case}: symmetry"
        );
        let (xy, yz, xz) = (
            w1_empirical(&x, &y).unwrap(),
            w1_empirical(&y, &z).unwrap(),
            w1_empirical(&x, &z).unwrap(),
        );
        assert!(xz <= xy + yz, "case {case}: triangle inequality");
        let c = (s.next_u64() % 9) as f64 - 4.0;
        let shifted: Vec<f64> = x.iter().map(|v| v + c).collect();
        assert_eq!(
            w1_empirical(&x, &shifted).unwrap(),
            c.abs(),
            "case {case}: shift by {c}"
        );
    }
    finish(7, "elasticity", t, None);
}

#[test]
fn acceptance_8_cli_determinism() {
    let t = Instant::now();
    let bin = env!("CARGO_BIN_EXE_frisk");
    let tmp = Path::new(env!("CARGO_TARGET_TMPDIR"));
    let run_to_file = |args: &[&str], out: &PathBuf| {
        let status = Command::new(bin)
            .args(args)
            .arg("--out")
            .arg(out)
            .status()
            .expect("spawn frisk");
        assert!(status.success(), "frisk {args:?} failed");
        std::fs::read(out).expect("read output file")
    };

    let cases: &[&[&str]] = &[
        &["nonid", "--n", "20000", "--seed", "5"],
        &["inversion", "--seed", "5"],
        &["crowding", "--mode", "mc", "--n", "5000", "--format", "csv", "--seed", "5"],
        &["elasticity", "--n", "20000", "--seed", "5"],
        &["smallfeedback", "--n", "20000", "--seed", "5"],
        &["impact", "--n", "20000", "--seed", "5"],
        &["estimate", "--n", "3000", "--plugin-outer-n", "500", "--seed", "5"],
        &[
            "coverage", "--trials", "25", "--n", "2000", "--plugin-outer-n", "300", "--format",
            "csv", "--seed", "5",
        ],
    ];
    for (i, args) in cases.iter().enumerate() {
        let a = run_to_file(args, &tmp.join(format!("det_{i}_a.out")));
        let b = run_to_file(args, &tmp.join(format!("det_{i}_b.out")));
        assert_eq!(a, b, "{:?} is not byte-deterministic", args[0]);
    }

    // thread count must not leak into the bytes, on both sampling paths
    for (i, base) in [
        &["nonid", "--n", "50000", "--seed", "5"] as &[&str],
        &["coverage", "--trials", "25", "--n", "2000", "--seed", "5"],
    ]
    .iter()
    .enumerate()
    {
        let mut one = base.to_vec();
        one.extend(["--threads", "1"]);
        let mut eight = base.to_vec();
        eight.extend(["--threads", "8"]);
        let a = run_to_file(&one, &tmp.join(format!("thr_{i}_1.out")));
        let b = run_to_file(&eight, &tmp.join(format!("thr_{i}_8.out")));
        assert_eq!(a, b, "{:?} output depends on --threads", base[0]);
    }
    finish(8, "cli determinism", t, None);
}
