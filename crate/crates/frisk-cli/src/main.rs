//! Command-line front end for the frisk toolkit.
//!
//! Each subcommand prints a JSON report (CSV for tabular outputs) built
//! from a deterministic seed, so identical invocations produce identical
//! bytes. Exit codes: 0 on success, 2 on argument errors, 1 on runtime
//! failures.

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};

use frisk::diagnostics::{
    crossing_alpha, crowding_curve, impact_perturbation, inversion_threshold, nonid_demo,
    write_curve_csv, CurveMode,
};
use frisk::elasticity::{estimate_elasticity, prop1_check};
use frisk::env::{ConcaveImpactEnv, CrowdingEnv, LinearFeedbackEnv};
use frisk::estimation::{
    bound_report, coverage_experiment, generate_instrumented_data, generate_misspecified_data,
    misspec_report, ols_fit, plugin_deployment_risk, plugin_error_bound, write_coverage_csv,
    CoverageConfig, PluginRiskReport, PolicyFeatureMap,
};
use frisk::{Context, DeploymentPolicy, Forecaster, Loss, SeedSpec};

#[derive(Parser)]
#[command(
    name = "frisk",
    version,
    about = "Simulate and estimate risk for forecasters that move the series they predict",
    args_override_self = true
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutFormat {
    Json,
    Csv,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Analytic,
    Mc,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EnvKind {
    Linear,
    Crowding,
    Concave,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum LossKind {
    Absolute,
    Squared,
}

#[derive(Args)]
struct Common {
    /// Master seed for all random streams. [artifact default]
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Write output to this file instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Output format; csv is available for tabular reports only.
    /// [artifact default]
    #[arg(long, value_enum, default_value_t = OutFormat::Json)]
    format: OutFormat,

    /// Worker threads; 0 uses every core. Output bytes never depend on it.
    /// [artifact default]
    #[arg(long, default_value_t = 0)]
    threads: usize,

    /// JSON object providing defaults for this subcommand's flags;
    /// flags given on the command line win.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Show that passive data cannot identify feedback: byte-identical
    /// passive samples, divergent deployment risks.
    Nonid {
        /// Comma-separated feedback coefficients. [artifact default]
        #[arg(long, default_value = "0,0.5,1", allow_hyphen_values = true)]
        betas: String,
        /// Noise standard deviation.
        #[arg(long, default_value_t = 0.5)]
        sigma: f64,
        /// Draws per Monte Carlo estimate. [artifact default]
        #[arg(long, default_value_t = 200_000)]
        n: usize,
        #[command(flatten)]
        common: Common,
    },

    /// Intensity threshold and crossing point where deploying the
    /// aggressive model becomes worse than the damped one.
    Inversion {
        /// Damped model coefficient (the aggressive one has coefficient 1).
        #[arg(long = "c-prime", default_value_t = 0.25)]
        c_prime: f64,
        #[arg(long, default_value_t = 1.35)]
        gamma: f64,
        #[command(flatten)]
        common: Common,
    },

    /// Deployment risk curves of competing models across intensities.
    Crowding {
        /// Comma-separated forecast coefficients.
        #[arg(long, default_value = "1,0.25")]
        cs: String,
        /// Crowding coefficient.
        #[arg(long, default_value_t = 1.35)]
        gamma: f64,
        /// Noise standard deviation.
        #[arg(long, default_value_t = 0.5)]
        sigma: f64,
        /// Start of the intensity grid. [artifact default]
        #[arg(long = "alpha-min", default_value_t = 0.0)]
        alpha_min: f64,
        /// End of the intensity grid. [artifact default]
        #[arg(long = "alpha-max", default_value_t = 1.0)]
        alpha_max: f64,
        /// Intensity grid spacing. [artifact default]
        #[arg(long = "alpha-step", default_value_t = 0.05)]
        alpha_step: f64,
        /// Curve evaluation: closed form or Monte Carlo. [artifact default]
        #[arg(long, value_enum, default_value_t = Mode::Analytic)]
        mode: Mode,
        /// Draws per grid point in mc mode. [artifact default]
        #[arg(long, default_value_t = 200_000)]
        n: usize,
        #[command(flatten)]
        common: Common,
    },

    /// Wasserstein movement of the outcome distribution per unit action.
    Elasticity {
        /// Environment family to probe. [artifact default]
        #[arg(long, value_enum, default_value_t = EnvKind::Linear)]
        env: EnvKind,
        /// Feedback coefficient (linear environment). [artifact default]
        #[arg(long, default_value_t = 0.7, allow_negative_numbers = true)]
        beta: f64,
        /// Crowding coefficient (crowding environment).
        #[arg(long, default_value_t = 1.35)]
        gamma: f64,
        /// Impact coefficient (concave environment). [artifact default]
        #[arg(long, default_value_t = 1.0)]
        eta: f64,
        /// Noise standard deviation.
        #[arg(long, default_value_t = 0.5)]
        sigma: f64,
        /// History point at which to probe. [artifact default]
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        h: f64,
        /// First action arm. [artifact default]
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        a: f64,
        /// Second action arm. [artifact default]
        #[arg(long = "a-prime", default_value_t = 1.0, allow_negative_numbers = true)]
        a_prime: f64,
        /// Draws per arm. [artifact default]
        #[arg(long, default_value_t = 100_000)]
        n: usize,
        #[command(flatten)]
        common: Common,
    },

    /// Certificate that a small feedback coefficient keeps the deployment
    /// risk near the historical risk.
    Smallfeedback {
        /// Feedback coefficient. [artifact default]
        #[arg(long, default_value_t = 0.5, allow_negative_numbers = true)]
        beta: f64,
        /// Noise standard deviation.
        #[arg(long, default_value_t = 0.5)]
        sigma: f64,
        /// Forecast coefficient. [artifact default]
        #[arg(long, default_value_t = 1.0)]
        c: f64,
        /// Proportional deployment intensity. [artifact default]
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        /// Loss to certify; must be uniformly Lipschitz. [artifact default]
        #[arg(long, value_enum, default_value_t = LossKind::Absolute)]
        loss: LossKind,
        /// Draws per expectation. [artifact default]
        #[arg(long, default_value_t = 100_000)]
        n: usize,
        #[command(flatten)]
        common: Common,
    },

    /// Risk error from linearizing a concave impact curve.
    Impact {
        /// Forecast coefficient. [artifact default]
        #[arg(long, default_value_t = 1.0)]
        c: f64,
        /// Proportional deployment intensity. [artifact default]
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        /// Noise standard deviation.
        #[arg(long, default_value_t = 0.5)]
        sigma: f64,
        /// Linear feedback coefficient to compare against. [artifact default]
        #[arg(long, default_value_t = -1.0, allow_negative_numbers = true)]
        beta: f64,
        /// Concave impact coefficient. [artifact default]
        #[arg(long, default_value_t = 1.0)]
        eta: f64,
        /// Draws per risk estimate. [artifact default]
        #[arg(long, default_value_t = 200_000)]
        n: usize,
        #[command(flatten)]
        common: Common,
    },

    /// Fit an instrumented experiment and report finite-sample bounds.
    Estimate {
        /// Columns including the action column. [artifact default]
        #[arg(long, default_value_t = 2)]
        p: usize,
        /// Comma-separated feature coefficients (length p-1); all ones by
        /// default.
        #[arg(long, allow_hyphen_values = true)]
        theta: Option<String>,
        /// True action effect. [artifact default]
        #[arg(long, default_value_t = 0.5, allow_negative_numbers = true)]
        beta: f64,
        /// Noise standard deviation. [artifact default]
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        /// Row norm cap. [artifact default]
        #[arg(long = "L", default_value_t = 2.0)]
        l_cap: f64,
        /// Action randomization half-width. [artifact default]
        #[arg(long = "a-max", default_value_t = 1.0)]
        a_max: f64,
        /// Assumed floor on the smallest Gram eigenvalue. [artifact default]
        #[arg(long, default_value_t = 0.25)]
        lambda: f64,
        /// Failure probability budget. [artifact default]
        #[arg(long, default_value_t = 0.05)]
        delta: f64,
        /// Experiment rows. [artifact default]
        #[arg(long, default_value_t = 10_000)]
        n: usize,
        /// Outer draws for the plug-in deployment risk. [artifact default]
        #[arg(long = "plugin-outer-n", default_value_t = 2000)]
        plugin_outer_n: usize,
        /// Deployment intensity the plug-in risk evaluates. [artifact default]
        #[arg(long, default_value_t = 1.0)]
        adoption: f64,
        /// Concave action-effect coefficient; switches to the
        /// misspecified stress mode.
        #[arg(long = "misspec-eta")]
        misspec_eta: Option<f64>,
        #[command(flatten)]
        common: Common,
    },

    /// Repeated trials measuring how often the error bounds hold.
    Coverage {
        /// Columns including the action column. [artifact default]
        #[arg(long, default_value_t = 2)]
        p: usize,
        /// Rows per trial. [artifact default]
        #[arg(long, default_value_t = 10_000)]
        n: usize,
        /// Noise standard deviation. [artifact default]
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        /// Row norm cap. [artifact default]
        #[arg(long = "L", default_value_t = 2.0)]
        l_cap: f64,
        /// Action randomization half-width. [artifact default]
        #[arg(long = "a-max", default_value_t = 1.0)]
        a_max: f64,
        /// Assumed floor on the smallest Gram eigenvalue. [artifact default]
        #[arg(long, default_value_t = 0.25)]
        lambda: f64,
        /// Failure probability budget. [artifact default]
        #[arg(long, default_value_t = 0.05)]
        delta: f64,
        /// Independent experiment repetitions. [artifact default]
        #[arg(long, default_value_t = 500)]
        trials: usize,
        /// Comma-separated feature coefficients (length p-1); all ones by
        /// default.
        #[arg(long, allow_hyphen_values = true)]
        theta: Option<String>,
        /// True action effect. [artifact default]
        #[arg(long, default_value_t = 0.5, allow_negative_numbers = true)]
        beta: f64,
        /// Outer draws for the plug-in deployment risk. [artifact default]
        #[arg(long = "plugin-outer-n", default_value_t = 2000)]
        plugin_outer_n: usize,
        /// Deployment intensity the plug-in risk evaluates. [artifact default]
        #[arg(long, default_value_t = 1.0)]
        adoption: f64,
        #[command(flatten)]
        common: Common,
    },
}

impl Cmd {
    fn common(&self) -> &Common {
        match self {
            Cmd::Nonid { common, .. }
            | Cmd::Inversion { common, .. }
            | Cmd::Crowding { common, .. }
            | Cmd::Elasticity { common, .. }
            | Cmd::Smallfeedback { common, .. }
            | Cmd::Impact { common, .. }
            | Cmd::Estimate { common, .. }
            | Cmd::Coverage { common, .. } => common,
        }
    }
}

enum CliError {
    Arg(String),
    Runtime(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Arg(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Arg(m) | CliError::Runtime(m) => m,
        }
    }
}

impl From<frisk::Error> for CliError {
    fn from(e: frisk::Error) -> Self {
        match e {
            frisk::Error::InvalidArgument(_) => CliError::Arg(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let argv: Vec<OsString> = std::env::args_os().collect();
    let argv = match apply_config(argv) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {}", e.message());
            return ExitCode::from(e.code());
        }
    };
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let code = u8::try_from(e.exit_code()).unwrap_or(2);
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let common = cli.cmd.common();
    let threads = common.threads;
    let out = common.out.clone();
    let rendered = frisk::with_threads(threads, || render(&cli.cmd))
        .map_err(CliError::from)
        .and_then(|r| r);
    match rendered {
        Ok(text) => {
            let write_result = match &out {
                Some(path) => std::fs::write(path, &text)
                    .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display()))),
                None => {
                    print!("{text}");
                    Ok(())
                }
            };
            match write_result {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => {
                    eprintln!("error: {}", e.message());
                    ExitCode::from(e.code())
                }
            }
        }
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}

/// Splices flags from a `--config` JSON file in front of the explicit
/// command-line flags, so explicit flags take precedence. The config must
/// be a flat JSON object keyed by flag names.
fn apply_config(argv: Vec<OsString>) -> Result<Vec<OsString>, CliError> {
    if argv.len() < 2 || argv[1].to_string_lossy().starts_with('-') {
        return Ok(argv);
    }
    let mut cfg_path: Option<PathBuf> = None;
    let mut i = 2;
    while i < argv.len() {
        let s = argv[i].to_string_lossy();
        if s == "--config" {
            if i + 1 >= argv.len() {
                return Err(CliError::Arg("--config needs a file path".into()));
            }
            cfg_path = Some(PathBuf::from(&argv[i + 1]));
            i += 2;
            continue;
        }
        if let Some(rest) = s.strip_prefix("--config=") {
            cfg_path = Some(PathBuf::from(rest));
        }
        i += 1;
    }
    let Some(path) = cfg_path else {
        return Ok(argv);
    };
    let text = std::fs::read_to_string(&path)
        .map_err(|e| CliError::Arg(format!("cannot read config {}: {e}", path.display())))?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Arg(format!("config {} is not valid JSON: {e}", path.display())))?;
    let obj = value
        .as_object()
        .ok_or_else(|| CliError::Arg("config must be a JSON object of flag values".into()))?;

    let mut flags: Vec<OsString> = Vec::new();
    for (key, v) in obj {
        if key == "config" {
            return Err(CliError::Arg("config files cannot nest --config".into()));
        }
        let flag = format!("--{}", key.replace('_', "-"));
        match v {
            serde_json::Value::Null | serde_json::Value::Bool(false) => {}
            serde_json::Value::Bool(true) => flags.push(flag.into()),
            serde_json::Value::Number(n) => {
                flags.push(flag.into());
                flags.push(n.to_string().into());
            }
            serde_json::Value::String(s) => {
                flags.push(flag.into());
                flags.push(s.into());
            }
            serde_json::Value::Array(items) => {
                let mut parts = Vec::with_capacity(items.len());
                for item in items {
                    match item {
                        serde_json::Value::Number(n) => parts.push(n.to_string()),
                        serde_json::Value::String(s) => parts.push(s.clone()),
                        _ => {
                            return Err(CliError::Arg(format!(
                                "config key {key}: arrays may hold numbers or strings only"
                            )))
                        }
                    }
                }
                flags.push(flag.into());
                flags.push(parts.join(",").into());
            }
            serde_json::Value::Object(_) => {
                return Err(CliError::Arg(format!(
                    "config key {key}: nested objects are not supported"
                )))
            }
        }
    }

    let mut out = Vec::with_capacity(argv.len() + flags.len());
    out.push(argv[0].clone());
    out.push(argv[1].clone());
    out.extend(flags);
    out.extend(argv.iter().skip(2).cloned());
    Ok(out)
}

fn parse_list(name: &str, s: &str) -> Result<Vec<f64>, CliError> {
    s.split(',')
        .map(|part| {
            part.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Arg(format!("--{name}: cannot parse '{part}' as a number")))
        })
        .collect()
}

fn build_grid(min: f64, max: f64, step: f64) -> Result<Vec<f64>, CliError> {
    if !(min.is_finite() && max.is_finite() && step.is_finite()) {
        return Err(CliError::Arg("grid bounds and step must be finite".into()));
    }
    if step <= 0.0 {
        return Err(CliError::Arg(format!(
            "--alpha-step must be positive, got {step}"
        )));
    }
    if max < min {
        return Err(CliError::Arg(format!(
            "--alpha-max {max} is below --alpha-min {min}"
        )));
    }
    let count = ((max - min) / step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|i| min + i as f64 * step).collect())
}

fn to_json<T: serde::Serialize>(value: &T) -> Result<String, CliError> {
    serde_json::to_string_pretty(value)
        .map(|mut s| {
            s.push('\n');
            s
        })
        .map_err(|e| CliError::Runtime(format!("cannot serialize output: {e}")))
}

fn json_only(format: OutFormat, cmd: &str) -> Result<(), CliError> {
    if format == OutFormat::Csv {
        return Err(CliError::Arg(format!(
            "{cmd} emits JSON only; csv is available for crowding and coverage"
        )));
    }
    Ok(())
}

fn render(cmd: &Cmd) -> Result<String, CliError> {
    let seed = SeedSpec::new(cmd.common().seed, 0);
    let format = cmd.common().format;
    match cmd {
        Cmd::Nonid {
            betas, sigma, n, ..
        } => {
            json_only(format, "nonid")?;
            let betas = parse_list("betas", betas)?;
            let rep = nonid_demo(&betas, *sigma, *n, seed)?;
            to_json(&rep)
        }

        Cmd::Inversion { c_prime, gamma, .. } => {
            json_only(format, "inversion")?;
            let threshold = inversion_threshold(*c_prime)?;
            let crossing = crossing_alpha(*c_prime, *gamma)?;
            to_json(&serde_json::json!({
                "c_prime": c_prime,
                "gamma": gamma,
                "threshold": threshold,
                "crossing_alpha": crossing,
            }))
        }

        Cmd::Crowding {
            cs,
            gamma,
            sigma,
            alpha_min,
            alpha_max,
            alpha_step,
            mode,
            n,
            ..
        } => {
            let cs = parse_list("cs", cs)?;
            let alphas = build_grid(*alpha_min, *alpha_max, *alpha_step)?;
            let curve_mode = match mode {
                Mode::Analytic => CurveMode::Analytic,
                Mode::Mc => CurveMode::MonteCarlo,
            };
            let curve = crowding_curve(&cs, &alphas, *gamma, *sigma, curve_mode, *n, seed)?;
            match format {
                OutFormat::Json => to_json(&curve),
                OutFormat::Csv => {
                    let mut buf = Vec::new();
                    write_curve_csv(&curve, &mut buf)
                        .map_err(|e| CliError::Runtime(format!("cannot render csv: {e}")))?;
                    String::from_utf8(buf)
                        .map_err(|e| CliError::Runtime(format!("csv is not utf-8: {e}")))
                }
            }
        }

        Cmd::Elasticity {
            env,
            beta,
            gamma,
            eta,
            sigma,
            h,
            a,
            a_prime,
            n,
            ..
        } => {
            json_only(format, "elasticity")?;
            let est = match env {
                EnvKind::Linear => {
                    let e = LinearFeedbackEnv::new(*beta, *sigma)?;
                    estimate_elasticity(&e, *h, *a, *a_prime, *n, seed)?
                }
                EnvKind::Crowding => {
                    let e = CrowdingEnv::new(*gamma, *sigma)?;
                    estimate_elasticity(&e, *h, *a, *a_prime, *n, seed)?
                }
                EnvKind::Concave => {
                    let e = ConcaveImpactEnv::new(*eta, *sigma)?;
                    estimate_elasticity(&e, *h, *a, *a_prime, *n, seed)?
                }
            };
            let env_name = match env {
                EnvKind::Linear => "linear",
                EnvKind::Crowding => "crowding",
                EnvKind::Concave => "concave",
            };
            to_json(&serde_json::json!({
                "env": env_name,
                "estimate": est,
            }))
        }

        Cmd::Smallfeedback {
            beta,
            sigma,
            c,
            alpha,
            loss,
            n,
            ..
        } => {
            json_only(format, "smallfeedback")?;
            let env = LinearFeedbackEnv::new(*beta, *sigma)?;
            let loss = match loss {
                LossKind::Absolute => Loss::Absolute,
                LossKind::Squared => Loss::Squared,
            };
            let rep = prop1_check(
                &env,
                &Forecaster::Linear(*c),
                &DeploymentPolicy::Proportional(*alpha),
                loss,
                *n,
                seed,
            )?;
            to_json(&rep)
        }

        Cmd::Impact {
            c,
            alpha,
            sigma,
            beta,
            eta,
            n,
            ..
        } => {
            json_only(format, "impact")?;
            let rep = impact_perturbation(
                &Forecaster::Linear(*c),
                &DeploymentPolicy::Proportional(*alpha),
                *sigma,
                *beta,
                *eta,
                *n,
                seed,
            )?;
            to_json(&rep)
        }

        Cmd::Estimate {
            p,
            theta,
            beta,
            sigma,
            l_cap,
            a_max,
            lambda,
            delta,
            n,
            plugin_outer_n,
            adoption,
            misspec_eta,
            ..
        } => {
            json_only(format, "estimate")?;
            let theta = resolve_theta(*p, theta)?;
            if let Some(eta) = misspec_eta {
                let (z, y) = generate_misspecified_data(
                    &theta, *eta, *sigma, *l_cap, *a_max, *n, seed.child(0),
                )?;
                let rep = misspec_report(&z, &y, &theta, *eta)?;
                let bounds = bound_report(&z, *sigma, *lambda, *delta)?;
                return to_json(&serde_json::json!({
                    "mode": "misspecified",
                    "misspec": rep,
                    "bounds": bounds,
                }));
            }
            let (z, y) = generate_instrumented_data(
                &theta, *beta, *sigma, *l_cap, *a_max, *n, seed.child(0),
            )?;
            let fit = ols_fit(&z, &y)?;
            let bounds = bound_report(&z, *sigma, *lambda, *delta)?;
            let mut w_true = theta.clone();
            w_true.push(*beta);
            let (fmap, f_ref) = reference_deployment(*p, &w_true, *adoption, *l_cap)?;
            let plug_seed = seed.child(1);
            let risk_hat = plugin_deployment_risk(
                &f_ref,
                &fmap,
                &fit.w_hat,
                *sigma,
                *plugin_outer_n,
                plug_seed,
            )?;
            let oracle_risk = plugin_deployment_risk(
                &f_ref,
                &fmap,
                &w_true,
                *sigma,
                *plugin_outer_n,
                plug_seed,
            )?;
            let b_cap = *l_cap * beta.abs();
            let error_bound = plugin_error_bound(b_cap, bounds.epsilon_n)?;
            let plugin = PluginRiskReport {
                risk_hat,
                oracle_risk: Some(oracle_risk),
                b_cap,
                epsilon_n: bounds.epsilon_n,
                error_bound,
                within_bound: Some((risk_hat - oracle_risk).abs() <= error_bound + 1e-12),
            };
            to_json(&serde_json::json!({
                "mode": "linear",
                "fit": fit,
                "bounds": bounds,
                "plugin": plugin,
            }))
        }

        Cmd::Coverage {
            p,
            n,
            sigma,
            l_cap,
            a_max,
            lambda,
            delta,
            trials,
            theta,
            beta,
            plugin_outer_n,
            adoption,
            ..
        } => {
            let theta = resolve_theta(*p, theta)?;
            let mut w_true = theta;
            w_true.push(*beta);
            let cfg = CoverageConfig {
                p: *p,
                n: *n,
                sigma: *sigma,
                l_cap: *l_cap,
                a_max: *a_max,
                lambda: *lambda,
                delta: *delta,
                trials: *trials,
                w_true,
                plugin_outer_n: *plugin_outer_n,
                adoption: *adoption,
            };
            let rep = coverage_experiment(&cfg, seed)?;
            match format {
                OutFormat::Json => to_json(&rep),
                OutFormat::Csv => {
                    let mut buf = Vec::new();
                    write_coverage_csv(&rep, &mut buf)
                        .map_err(|e| CliError::Runtime(format!("cannot render csv: {e}")))?;
                    String::from_utf8(buf)
                        .map_err(|e| CliError::Runtime(format!("csv is not utf-8: {e}")))
                }
            }
        }
    }
}

fn resolve_theta(p: usize, theta: &Option<String>) -> Result<Vec<f64>, CliError> {
    if p < 2 {
        return Err(CliError::Arg(format!(
            "--p must be at least 2 (features plus action), got {p}"
        )));
    }
    match theta {
        None => Ok(vec![1.0; p - 1]),
        Some(s) => {
            let theta = parse_list("theta", s)?;
            if theta.len() != p - 1 {
                return Err(CliError::Arg(format!(
                    "--theta has {} entries, expected p - 1 = {}",
                    theta.len(),
                    p - 1
                )));
            }
            Ok(theta)
        }
    }
}

/// The deployment feature map of the reference forecaster (true passive
/// coefficients, action effect zeroed) and that forecaster itself.
fn reference_deployment(
    p: usize,
    w_true: &[f64],
    adoption: f64,
    l_cap: f64,
) -> Result<(PolicyFeatureMap, Forecaster), CliError> {
    let fmap = PolicyFeatureMap::linear_deployment(p, w_true[0], adoption, l_cap)?;
    let mut w_fore = w_true.to_vec();
    w_fore[p - 1] = 0.0;
    let fm = fmap.clone();
    let f_ref = Forecaster::Custom(Arc::new(move |ctx: Context| {
        fm.features(ctx)
            .map(|z| z.iter().zip(&w_fore).map(|(a, b)| a * b).sum())
            .unwrap_or(f64::NAN)
    }));
    Ok((fmap, f_ref))
}
