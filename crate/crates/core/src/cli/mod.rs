//! The `fluctlab` command line: config loading, subcommand dispatch and run
//! manifests.

pub mod config;
pub mod selftest;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde_json::json;

use crate::experiments::{
    clt_baseline, energy_decay, fit_rate, fit_rate_bootstrap, par_replicas, refinement_study, rows_to_csv, rows_to_dat,
    weak_error_curve, Manifest,
};
use crate::meanfield::{solve_fp, FpOptions};
use crate::particles::{fluctuation_field, write_trajectory_header, write_trajectory_rows};
use crate::spde::SpdeManifest;
use crate::spectral::to_json;
use crate::{Error, Result};

pub use config::{parse_config, parse_config_str, ExperimentConfig, FieldSpec};

#[derive(Debug, Parser)]
#[command(name = "fluctlab", version, about = "Mean-field fluctuation experiments on the torus")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML experiment configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides `run.master_seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory; defaults to `run.out`, then `fluctlab-out/<subcommand>`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for replica loops.
    #[arg(long, global = true, env = "FLUCTLAB_THREADS")]
    pub threads: Option<usize>,
    /// Dotted-path override such as `run.sigma=0.5`; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Tabulate the limit density and dump one field per snapshot.
    SolveFp,
    /// Particle trajectories and the functional at the final time.
    SimulateParticles,
    /// Fluctuation SPDE snapshots and the functional at the final time.
    SimulateSpde,
    /// Weak-error curve against N with a bootstrap rate fit.
    WeakError,
    /// Zero-drift variance check against the i.i.d. value.
    CltBaseline,
    /// Coulomb modulated-energy decay for i.i.d. uniform points.
    ModulatedEnergy,
    /// SPDE expectation along a discretization ladder.
    Refine,
    /// Fast deterministic checks of every module.
    Selftest,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::SolveFp => "solve-fp",
            Command::SimulateParticles => "simulate-particles",
            Command::SimulateSpde => "simulate-spde",
            Command::WeakError => "weak-error",
            Command::CltBaseline => "clt-baseline",
            Command::ModulatedEnergy => "modulated-energy",
            Command::Refine => "refine",
            Command::Selftest => "selftest",
        }
    }
}

/// Parses arguments, runs the subcommand and returns the process exit code.
pub fn main_with_args(args: impl IntoIterator<Item = OsString>) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(summary) => {
            print!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("fluctlab {}: {e}", cli.command.name());
            e.exit_code()
        }
    }
}

/// Runs one invocation inside a pool sized by `--threads`.
pub fn run(cli: &Cli) -> Result<String> {
    let mut overrides = cli.overrides.clone();
    if let Some(seed) = cli.seed {
        overrides.push(format!("run.master_seed={seed}"));
    }
    let cfg = match &cli.config {
        Some(path) => parse_config(path, &overrides)?,
        None if cli.command == Command::Selftest => parse_config_str("", &overrides)?,
        None => return Err(Error::Config(vec![format!("{} needs --config <path>", cli.command.name())])),
    };
    let dir = cli
        .out
        .clone()
        .or_else(|| cfg.run.out.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| Path::new("fluctlab-out").join(cli.command.name()));
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(Error::Config(vec!["--threads must be at least 1".into()]));
        }
        builder = builder.num_threads(t);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Config(vec![format!("cannot start {:?} worker threads: {e}", cli.threads)]))?;
    pool.install(|| dispatch(cli.command, &cfg, &dir))
}

/// Runs `command` and writes its artifacts plus `manifest.json` into `dir`.
pub fn dispatch(command: Command, cfg: &ExperimentConfig, dir: &Path) -> Result<String> {
    std::fs::create_dir_all(dir)?;
    let resolved = serde_json::to_value(cfg).expect("config serializes");
    let mut manifest = Manifest::new(command.name(), cfg.run.master_seed, resolved);
    let outcome = match command {
        Command::SolveFp => cmd_solve_fp(cfg, dir, &mut manifest),
        Command::SimulateParticles => cmd_simulate_particles(cfg, dir, &mut manifest),
        Command::SimulateSpde => cmd_simulate_spde(cfg, dir, &mut manifest),
        Command::WeakError => cmd_weak_error(cfg, dir, &mut manifest),
        Command::CltBaseline => cmd_clt(cfg, dir, &mut manifest),
        Command::ModulatedEnergy => cmd_energy(cfg, dir, &mut manifest),
        Command::Refine => cmd_refine(cfg, dir, &mut manifest),
        Command::Selftest => cmd_selftest(dir, &mut manifest),
    };
    // Partial results (e.g. a curve whose fit failed) still get a manifest.
    if !manifest.outputs.is_empty() || outcome.is_ok() {
        manifest.write(dir)?;
    }
    outcome
}

fn write(dir: &Path, name: &str, text: &str, manifest: &mut Manifest) -> Result<()> {
    std::fs::write(dir.join(name), text)?;
    manifest.outputs.push(name.to_string());
    Ok(())
}

fn cmd_solve_fp(cfg: &ExperimentConfig, dir: &Path, manifest: &mut Manifest) -> Result<String> {
    let r = &cfg.run;
    let times: Vec<f64> = (0..=r.snapshots).map(|j| r.t_final * j as f64 / r.snapshots as f64).collect();
    let opts = FpOptions { positivity: r.positivity, sqrt_kmax: r.sqrt_kmax, ..FpOptions::new(cfg.dt()) };
    let curve = solve_fp(&cfg.mu0()?, &cfg.model()?, r.sigma, &times, &opts)?;
    let index = curve.write(dir)?;
    manifest.outputs.push("index.json".into());
    manifest.outputs.extend(index.files);
    let mut csv = String::from("t,min_density,l2_norm\n");
    for ((t, m), n) in curve.times().iter().zip(curve.min_values()).zip(curve.norms()) {
        let _ = writeln!(csv, "{t},{m},{n}");
    }
    write(dir, "fp_summary.csv", &csv, manifest)?;
    manifest.details = json!({ "warnings": curve.warnings() });
    Ok(format!("solve-fp: {} snapshots written to {}\n", curve.len(), dir.display()))
}

/// Step indices `0, every, 2·every, …` always ending at `steps`.
fn checkpoint_list(steps: usize, every: usize) -> Vec<usize> {
    if every == 0 {
        return vec![steps];
    }
    let mut cps: Vec<usize> = (0..steps).step_by(every).collect();
    cps.push(steps);
    cps
}

fn cmd_simulate_particles(cfg: &ExperimentConfig, dir: &Path, manifest: &mut Manifest) -> Result<String> {
    let sc = cfg.scenario()?;
    let phi = cfg.functional()?;
    let curve = sc.mu_curve()?;
    let steps = sc.steps()?;
    let p = &cfg.particles;
    let cps = checkpoint_list(steps, p.trajectory_every);
    let per_replica = par_replicas(p.replicas, |rep| {
        let mut rows = Vec::new();
        let mut last = f64::NAN;
        sc.particle_replica(p.n, rep, &cps, |ens, c| {
            write_trajectory_rows(&mut rows, ens)?;
            if c == steps {
                last = phi.eval(&fluctuation_field(ens, curve.mu_at(sc.t_final))?)?;
            }
            Ok(())
        })?;
        Ok((rows, last))
    })?;
    let mut traj = Vec::new();
    write_trajectory_header(&mut traj, sc.model.d())?;
    let mut obs = String::from("replica,phi\n");
    for (rep, (rows, v)) in per_replica.iter().enumerate() {
        traj.extend_from_slice(rows);
        let _ = writeln!(obs, "{rep},{v}");
    }
    write(dir, "trajectory.csv", &String::from_utf8(traj).expect("ascii rows"), manifest)?;
    write(dir, "observables.csv", &obs, manifest)?;
    manifest.details = json!({ "n": p.n, "replicas": p.replicas, "steps": steps });
    Ok(format!("simulate-particles: {} replicas of N = {} to t = {}\n", p.replicas, p.n, sc.t_final))
}

fn cmd_simulate_spde(cfg: &ExperimentConfig, dir: &Path, manifest: &mut Manifest) -> Result<String> {
    let sc = cfg.scenario()?;
    let phi = cfg.functional()?;
    let curve = sc.mu_curve()?;
    let solver = sc.spde_solver(&curve)?;
    let steps = sc.steps()?;
    let cps = checkpoint_list(steps, cfg.spde.snapshot_every);
    let index = curve.write(&dir.join("mu_curve"))?;
    manifest.outputs.push("mu_curve/index.json".into());
    manifest.outputs.extend(index.files.iter().map(|f| format!("mu_curve/{f}")));
    std::fs::create_dir_all(dir.join("snapshots"))?;
    let per_replica = par_replicas(cfg.spde.replicas, |rep| {
        let mut files = Vec::new();
        let vals = sc.spde_replica(&solver, &curve, rep, &cps, |s, c| {
            let name = format!("snapshots/rho_r{rep:05}_s{c:07}.json");
            std::fs::write(dir.join(&name), to_json(&s.rho))?;
            files.push(name);
            phi.eval(&s.rho)
        })?;
        Ok((files, *vals.last().expect("at least one checkpoint")))
    })?;
    let mut obs = String::from("replica,phi\n");
    for (rep, (files, v)) in per_replica.into_iter().enumerate() {
        manifest.outputs.extend(files);
        let _ = writeln!(obs, "{rep},{v}");
    }
    write(dir, "observables.csv", &obs, manifest)?;
    let spde = SpdeManifest {
        kmax: sc.model.lattice().kmax(),
        l_noise: sc.l_noise,
        n_mollify: sc.n_mollify,
        dt: sc.dt,
        sigma: sc.sigma,
        drift: sc.model.name().to_string(),
        mu_curve_ref: "mu_curve/index.json".into(),
        seed: sc.seed,
    };
    manifest.details = serde_json::to_value(&spde).expect("manifest serializes");
    Ok(format!("simulate-spde: {} replicas to t = {}\n", cfg.spde.replicas, sc.t_final))
}

fn cmd_weak_error(cfg: &ExperimentConfig, dir: &Path, manifest: &mut Manifest) -> Result<String> {
    let sc = cfg.scenario()?;
    let phi = cfg.functional()?;
    let r = &cfg.run;
    let spde_replicas = r.spde_replicas.expect("resolved");
    let curve = weak_error_curve(&sc, &phi, &r.ns, r.replicas, spde_replicas)?;
    write(dir, "weak_error.csv", &rows_to_csv(&curve.rows), manifest)?;
    write(dir, "weak_error.dat", &rows_to_dat(&curve.rows), manifest)?;
    let fit = if r.bootstrap > 0 {
        fit_rate_bootstrap(&curve, r.bootstrap, r.master_seed)
    } else {
        fit_rate(&curve.rows)
    };
    let rows = json!({ "replicas": r.replicas, "spde_replicas": spde_replicas, "bootstrap": r.bootstrap });
    match fit {
        Ok(fit) => {
            manifest.details = json!({ "counts": rows, "fit": fit });
            let ci = fit.slope_ci.map(|(a, b)| format!(" (95% CI {a:.3} to {b:.3})")).unwrap_or_default();
            Ok(format!("weak-error: slope {:.3}{ci} over N = {:?}\n", fit.slope, fit.used))
        }
        Err(e) => {
            manifest.details = json!({ "counts": rows, "fit_error": e.to_string() });
            Err(e)
        }
    }
}

fn cmd_clt(cfg: &ExperimentConfig, dir: &Path, manifest: &mut Manifest) -> Result<String> {
    let sc = cfg.scenario()?;
    let phi = cfg.field(&cfg.clt.test_function)?;
    let r = &cfg.run;
    let report = clt_baseline(&sc, &phi, &cfg.clt.ns, r.replicas, r.spde_replicas.expect("resolved"))?;
    let mut csv = String::from("side,N,variance,se,z,replicas\n");
    for row in &report.rows {
        let n = row.n.map(|n| n.to_string()).unwrap_or_default();
        let _ = writeln!(csv, "{},{n},{},{},{},{}", row.side, row.variance, row.se, row.z, row.replicas);
    }
    write(dir, "clt.csv", &csv, manifest)?;
    manifest.details = json!({ "reference": report.reference, "max_abs_z": report.max_abs_z() });
    Ok(format!("clt-baseline: reference {:.6e}, max |z| = {:.2}\n", report.reference, report.max_abs_z()))
}

fn cmd_energy(cfg: &ExperimentConfig, dir: &Path, manifest: &mut Manifest) -> Result<String> {
    let r = &cfg.run;
    let report = energy_decay(&cfg.model()?, r.sigma, &cfg.energy.ns, cfg.energy.replicas, r.bootstrap.max(2), r.master_seed)?;
    let mut csv = String::from("N,mean,se,mean_abs,se_abs,replicas\n");
    for row in &report.rows {
        let _ = writeln!(csv, "{},{},{},{},{},{}", row.n, row.mean, row.se, row.mean_abs, row.se_abs, row.replicas);
    }
    write(dir, "energy.csv", &csv, manifest)?;
    manifest.details = json!({ "slope": report.slope, "slope_ci": report.slope_ci });
    Ok(format!(
        "modulated-energy: slope {:.3} (95% CI {:.3} to {:.3})\n",
        report.slope, report.slope_ci.0, report.slope_ci.1
    ))
}

fn cmd_refine(cfg: &ExperimentConfig, dir: &Path, manifest: &mut Manifest) -> Result<String> {
    let levels = cfg.levels()?;
    if levels.is_empty() {
        return Err(Error::Config(vec!["refine.levels must list at least one level".into()]));
    }
    let rows = refinement_study(&levels, &cfg.functional()?, cfg.run.spde_replicas.expect("resolved"))?;
    let mut csv = String::from("kmax,l_noise,n_mollify,dt,mean,se,diff,diff_se,stall\n");
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in &rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{}",
            r.kmax,
            r.l_noise,
            r.n_mollify,
            r.dt,
            r.mean,
            r.se,
            opt(r.diff),
            opt(r.diff_se),
            r.stall
        );
    }
    write(dir, "refine.csv", &csv, manifest)?;
    let stalls = rows.iter().filter(|r| r.stall).count();
    manifest.details = json!({ "stalls": stalls });
    Ok(format!("refine: {} levels, {stalls} stalled\n", rows.len()))
}

fn cmd_selftest(dir: &Path, manifest: &mut Manifest) -> Result<String> {
    let outcomes = selftest::run_selftest();
    let mut csv = String::from("module,check,status,detail\n");
    let mut summary = String::new();
    for o in &outcomes {
        let status = if o.passed { "pass" } else { "FAIL" };
        let _ = writeln!(csv, "{},{},{status},{}", o.module, o.name, o.detail.replace(',', ";"));
        let _ = writeln!(summary, "[{status}] {}: {} ({})", o.module, o.name, o.detail);
    }
    write(dir, "selftest.csv", &csv, manifest)?;
    let failed: Vec<String> = outcomes.iter().filter(|o| !o.passed).map(|o| format!("{}: {}", o.module, o.name)).collect();
    manifest.details = json!({ "checks": outcomes.len(), "failed": failed });
    if failed.is_empty() {
        Ok(summary)
    } else {
        eprint!("{summary}");
        Err(Error::Consistency { op: "cli::selftest", detail: format!("{} checks failed: {}", failed.len(), failed.join("; ")) })
    }
}
