use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use ncsir::analysis::{self, AnalysisError, InfectionEnvelope};
use ncsir::equilibria;
use ncsir::integrate::{self, IntegrateError, NoiseStream, Scheme};
use ncsir::scenario::{self, Scenario, PRESET_NAMES};
use ncsir::verify::{self, VerifyOptions};
use ncsir::{ModelParams, NoiseVariant};

const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser)]
#[command(
    name = "ncsir",
    version,
    about = "Compliant/noncompliant SIR model: analysis, simulation and ensembles"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Equilibria, reproductive ratios, thresholds, verdicts and the certificate.
    Analyze(ScenarioArgs),
    /// One deterministic and optionally one stochastic trajectory.
    Simulate {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, value_enum, default_value_t = Mode::Sde)]
        mode: Mode,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Path index within the seed's stream family.
        #[arg(long, default_value_t = 0)]
        path: u64,
    },
    /// Mean-square statistics over many paths.
    Ensemble {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(short = 'n', long = "paths", default_value_t = 500,
              value_parser = clap::value_parser!(u64).range(2..))]
        paths: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Burn-in for the time averages reported with a certificate.
        #[arg(long, default_value_t = verify::BURN_IN)]
        burn_in: f64,
    },
    /// Self-check suite.
    Verify {
        /// Skip the Monte Carlo ensemble checks.
        #[arg(long)]
        quick: bool,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long, hide = true)]
        disable_milstein_correction: bool,
    },
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Mode {
    Det,
    Sde,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Reduced,
    Full,
}

#[derive(Args)]
struct ScenarioArgs {
    #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(PRESET_NAMES),
          conflicts_with = "config", required_unless_present = "config")]
    preset: Option<String>,
    /// JSON file holding a Scenario or a bare ModelParams object.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    tmax: Option<f64>,
    #[arg(long, value_enum)]
    variant: Option<VariantArg>,
    /// Use gamma = 1 for fig1-fig4.
    #[arg(long)]
    gamma_as_printed: bool,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, hide = true)]
    disable_milstein_correction: bool,
}

/// Error carrying the process exit code.
#[derive(Debug)]
struct Exit {
    code: u8,
    message: String,
}

impl Exit {
    fn error(code: u8, message: impl Into<String>) -> anyhow::Error {
        anyhow::Error::new(Exit {
            code,
            message: message.into(),
        })
    }
}

impl std::fmt::Display for Exit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for Exit {}

fn load_scenario(args: &ScenarioArgs) -> anyhow::Result<Scenario> {
    let mut sc = match (&args.preset, &args.config) {
        (Some(name), _) => scenario::preset(name, args.gamma_as_printed)
            .ok_or_else(|| Exit::error(2, format!("unknown preset {name}")))?,
        (None, Some(path)) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Exit::error(2, format!("cannot read {}: {e}", path.display())))?;
            let value: Value = serde_json::from_str(&text)
                .map_err(|e| Exit::error(2, format!("{}: {e}", path.display())))?;
            if value.get("params").is_some() {
                serde_json::from_value::<Scenario>(value)
                    .map_err(|e| Exit::error(2, format!("{}: {e}", path.display())))?
            } else {
                let params: ModelParams = serde_json::from_value(value)
                    .map_err(|e| Exit::error(2, format!("{}: {e}", path.display())))?;
                let name = path
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| "custom".into());
                Scenario::from_params(&name, params)
            }
        }
        (None, None) => return Err(Exit::error(2, "either --preset or --config is required")),
    };
    if let Some(dt) = args.dt {
        sc.cfg.dt = dt;
    }
    if let Some(t) = args.tmax {
        sc.cfg.t_max = t;
    }
    if let Some(v) = args.variant {
        sc = sc
            .with_params(|p| {
                p.variant = match v {
                    VariantArg::Reduced => NoiseVariant::Reduced,
                    VariantArg::Full => NoiseVariant::Full,
                }
            })
            .map_err(|e| Exit::error(2, e.to_string()))?;
    }
    if args.disable_milstein_correction {
        sc.cfg.scheme = Scheme::EulerMaruyama;
    }
    sc.cfg
        .n_steps()
        .map_err(|e| Exit::error(2, e.to_string()))?;
    if !sc.x0.is_finite() || sc.x0.min_component() < 0.0 {
        return Err(Exit::error(
            2,
            "initial state must be finite and nonnegative",
        ));
    }
    Ok(sc)
}

fn output_dir(root: &Path, scenario: &str, command: &str) -> anyhow::Result<PathBuf> {
    let dir = root.join(scenario).join(command);
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn write_json(path: &Path, value: &impl Serialize) -> anyhow::Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    serde_json::to_writer_pretty(BufWriter::new(file), value)?;
    Ok(())
}

fn write_manifest(
    dir: &Path,
    command: &str,
    sc: Option<&Scenario>,
    extra: Value,
    artifacts: &[&str],
) -> anyhow::Result<()> {
    write_json(
        &dir.join("manifest.json"),
        &json!({
            "command": command,
            "version": VERSION,
            "scenario": sc,
            "run": extra,
            "artifacts": artifacts,
        }),
    )
}

fn cmd_analyze(args: &ScenarioArgs) -> anyhow::Result<()> {
    let sc = load_scenario(args)?;
    let dir = output_dir(&args.out, &sc.name, "analyze")?;
    let p = &sc.params;

    let reports = equilibria::classify(p);
    let cert = equilibria::certificate(p);
    let applicable = equilibria::mixed_equilibrium(p).is_some();
    let cert_block = match &cert {
        Ok(c) => json!({ "status": "ok", "certificate": c }),
        Err(e) if !applicable => json!({ "status": "not_applicable", "reason": e.to_string() }),
        Err(e) => json!({ "status": "refused", "reason": e.to_string() }),
    };
    let nc = equilibria::noncompliance_threshold(p);
    let report = json!({
        "scenario": sc.name,
        "params": p,
        "notes": sc.notes,
        "reported": sc.reported,
        "dfe": equilibria::solve_dfe(p),
        "thresholds": {
            "r0_sigma_compliant": equilibria::r0_sigma_compliant(p),
            "r0_sigma_noncompliant": equilibria::r0_sigma_noncompliant(p),
            "noncompliance": nc,
        },
        "stability": reports,
        "certificate": cert_block,
    });
    write_json(&dir.join("analysis.json"), &report)?;
    let mut artifacts = vec!["analysis.json"];
    if let Ok(c) = &cert {
        write_json(&dir.join("certificate.json"), c)?;
        artifacts.push("certificate.json");
    }
    write_manifest(&dir, "analyze", Some(&sc), json!({}), &artifacts)?;

    println!("scenario {}", sc.name);
    for r in &reports {
        println!(
            "  DFE {:?} (s, s*) = ({:.6}, {:.6}){}: r0 = {:.6}, ODE {:?}, SDE {:?}",
            r.dfe.kind,
            r.dfe.s,
            r.dfe.s_star,
            if r.dfe.admissible {
                ""
            } else {
                " [inadmissible]"
            },
            r.r0,
            r.deterministic_verdict,
            r.stochastic_verdict
        );
    }
    println!(
        "  r0_sigma compliant {:.6}, noncompliant {:.6}, noncompliance lhs {:.6} vs rhs {:.6}",
        equilibria::r0_sigma_compliant(p),
        equilibria::r0_sigma_noncompliant(p),
        nc.lhs,
        nc.rhs
    );
    match &cert {
        Ok(c) => println!("  certificate: C = {:.6}, bound = {:.6}", c.c, c.bound),
        Err(e) if !applicable => println!("  certificate: not applicable ({e})"),
        Err(e) => {
            println!("  certificate: refused ({e})");
            println!("wrote {}", dir.display());
            return Err(Exit::error(3, e.to_string()));
        }
    }
    println!("wrote {}", dir.display());
    Ok(())
}

fn divergence(e: IntegrateError) -> anyhow::Error {
    match e {
        IntegrateError::Diverged { .. } => Exit::error(4, e.to_string()),
        other => Exit::error(2, other.to_string()),
    }
}

fn write_trajectory(path: &Path, traj: &integrate::Trajectory) -> anyhow::Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    traj.write_csv(BufWriter::new(file))?;
    Ok(())
}

fn cmd_simulate(args: &ScenarioArgs, mode: Mode, seed: u64, path: u64) -> anyhow::Result<()> {
    let sc = load_scenario(args)?;
    let dir = output_dir(&args.out, &sc.name, "simulate")?;

    let det = integrate::euler_simulate(&sc.params, &sc.x0, &sc.cfg).map_err(divergence)?;
    write_trajectory(&dir.join("trajectory_det.csv"), &det)?;
    let mut artifacts = vec!["trajectory_det.csv"];
    let mut run = json!({
        "mode": mode,
        "det_final": det.last(),
        "det_population_residual_max": det.population_residual_max,
    });

    if let Mode::Sde = mode {
        let noise = NoiseStream::new(seed, path);
        let sde =
            integrate::sde_simulate(&sc.params, &sc.x0, &sc.cfg, noise).map_err(divergence)?;
        write_trajectory(&dir.join("trajectory_sde.csv"), &sde)?;
        artifacts.push("trajectory_sde.csv");
        run["seed"] = json!(seed);
        run["path_index"] = json!(path);
        run["sde_final"] = json!(sde.last());
        run["min_component_seen"] = json!(sde.min_component_seen);
        run["clamped_mass"] = json!(sde.clamped_mass);
        if let Ok(c) = equilibria::certificate(&sc.params) {
            let t_burn = verify::BURN_IN.min(0.5 * sc.cfg.t_max);
            let avg = analysis::time_average_distance(&sde, &c.dfe.state(), t_burn)?;
            run["time_average_distance"] = json!({
                "t_burn": t_burn,
                "value": avg,
                "certificate_bound": c.bound,
                "within_bound": avg <= c.bound,
            });
            println!(
                "time-average distance after t = {t_burn}: {avg:.3e} (bound {:.4})",
                c.bound
            );
        }
        println!("SDE final state {:?}", sde.last());
    }
    println!("ODE final state {:?}", det.last());
    write_manifest(&dir, "simulate", Some(&sc), run, &artifacts)?;
    println!("wrote {}", dir.display());
    Ok(())
}

fn cmd_ensemble(args: &ScenarioArgs, paths: u64, seed: u64, burn_in: f64) -> anyhow::Result<()> {
    let sc = load_scenario(args)?;
    let dir = output_dir(&args.out, &sc.name, "ensemble")?;
    let target = sc.target();
    let analysis_err = |e: AnalysisError| match e {
        AnalysisError::TooManyFailures { .. } => Exit::error(5, e.to_string()),
        AnalysisError::TooFewPaths(_) => Exit::error(2, e.to_string()),
        AnalysisError::Integrate(inner) => divergence(inner),
        other => Exit::error(2, other.to_string()),
    };
    let summary = analysis::ensemble_ms(&sc.params, &sc.x0, &target, &sc.cfg, seed, paths)
        .map_err(analysis_err)?;
    {
        let file = File::create(dir.join("ensemble.csv"))?;
        summary.write_csv(BufWriter::new(file))?;
    }

    let t_max = *summary.times.last().expect("nonempty");
    let fit = analysis::fit_decay(&summary, (0.1 * t_max, t_max)).ok();
    let ratio = summary.ms_distance[summary.ms_distance.len() - 1] / summary.ms_distance[0];
    let mut checks = json!({ "ms_ratio_final_over_initial": ratio });

    let p = &sc.params;
    if p.xi == 1.0 && p.nu == 0.0 {
        let env = InfectionEnvelope::new(p, &sc.x0);
        let worst = summary
            .times
            .iter()
            .enumerate()
            .map(|(k, t)| summary.ms_i[k].max(summary.ms_istar[k]) / env.at(*t))
            .fold(0.0, f64::max);
        checks["infection_envelope"] = json!({
            "envelope": env,
            "max_ratio": worst,
            "slack": verify::ENVELOPE_SLACK,
            "passed": worst <= verify::ENVELOPE_SLACK,
        });
        println!("infection envelope: max ms/envelope {worst:.3}");
    }
    if let Ok(c) = equilibria::certificate(p) {
        let avgs =
            analysis::ensemble_time_averages(p, &sc.x0, &target, &sc.cfg, seed, paths, burn_in)
                .map_err(analysis_err)?;
        let mean = avgs.iter().sum::<f64>() / avgs.len() as f64;
        let within = avgs.iter().filter(|a| **a <= c.bound).count() as f64 / avgs.len() as f64;
        checks["time_averages"] = json!({
            "t_burn": burn_in,
            "mean": mean,
            "fraction_within_bound": within,
            "certificate_bound": c.bound,
            "per_path": avgs,
        });
        write_json(&dir.join("certificate.json"), &c)?;
        println!(
            "time averages: mean {mean:.3e}, {:.1}% within bound {:.4}",
            100.0 * within,
            c.bound
        );
    }

    write_json(
        &dir.join("summary.json"),
        &json!({ "summary": summary, "fit": fit, "checks": checks }),
    )?;
    let mut artifacts = vec!["ensemble.csv", "summary.json"];
    if checks.get("time_averages").is_some() {
        artifacts.push("certificate.json");
    }
    write_manifest(
        &dir,
        "ensemble",
        Some(&sc),
        json!({ "seed": seed, "paths": paths, "target": target }),
        &artifacts,
    )?;

    println!(
        "{} paths ({} diverged): ms_distance(T)/ms_distance(0) = {ratio:.3e}",
        summary.n_paths, summary.failed_paths
    );
    if let Some(f) = fit {
        println!(
            "decay fit on [{}, {}]: rate {:.4}, R^2 {:.3}",
            f.window.0, f.window.1, f.rate, f.r_squared
        );
    }
    println!("wrote {}", dir.display());
    Ok(())
}

fn cmd_verify(quick: bool, out: &Path, disable: bool) -> anyhow::Result<()> {
    let results = verify::run(&VerifyOptions {
        quick,
        disable_milstein_correction: disable,
    });
    let width = results.iter().map(|r| r.name.len()).max().unwrap_or(0);
    for r in &results {
        println!(
            "{}  {:width$}  {}",
            if r.passed { "PASS" } else { "FAIL" },
            r.name,
            r.detail
        );
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    println!("{} checks, {} failed", results.len(), failed);

    let dir = output_dir(out, "suite", "verify")?;
    write_json(&dir.join("verify.json"), &results)?;
    write_manifest(
        &dir,
        "verify",
        None,
        json!({ "quick": quick, "disable_milstein_correction": disable }),
        &["verify.json"],
    )?;
    if failed > 0 {
        return Err(Exit::error(1, format!("{failed} checks failed")));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Analyze(args) => cmd_analyze(args),
        Command::Simulate {
            scenario,
            mode,
            seed,
            path,
        } => cmd_simulate(scenario, *mode, *seed, *path),
        Command::Ensemble {
            scenario,
            paths,
            seed,
            burn_in,
        } => cmd_ensemble(scenario, *paths, *seed, *burn_in),
        Command::Verify {
            quick,
            out,
            disable_milstein_correction,
        } => cmd_verify(*quick, out, *disable_milstein_correction),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e.downcast_ref::<Exit>().map_or(1, |x| x.code);
            ExitCode::from(code)
        }
    }
}
