use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use thinfilm::convergence::{det_time_study, split_refinement_study, strong_order_study, RefinementStudy, Study};
use thinfilm::ensemble::{run_ensemble, write_ensemble_outputs, EnsembleReport};
use thinfilm::simulate::{simulate, write_json};
use thinfilm::{load_config, verify, ConfigError, Error, Result, RunConfig};
use thinfilm_core::{Field, SpectralBasis};

/// Split-step simulator for the stochastic thin-film equation.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one trajectory and write diagnostics, snapshots and a manifest.
    Simulate(RunArgs),
    /// Run an ensemble and write report.json and paths.csv.
    Ensemble(RunArgs),
    /// Run the built-in invariant suite.
    Verify,
    /// Run the time-step and splitting refinement studies.
    Convergence(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides master_seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides ensemble.M_paths.
    #[arg(long)]
    paths: Option<usize>,
    /// Overrides output.directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; defaults to the number of logical cores.
    #[arg(long)]
    workers: Option<usize>,
    /// Overrides output.snapshot_stride.
    #[arg(long)]
    snapshot_stride: Option<usize>,
}

impl RunArgs {
    fn load(&self) -> Result<(RunConfig, Field)> {
        let (mut cfg, u0) = load_config(&self.config)?;
        if let Some(s) = self.seed {
            cfg.master_seed = s;
        }
        if let Some(m) = self.paths {
            cfg.ensemble.paths = m;
        }
        if let Some(o) = &self.out {
            cfg.output.directory = o.clone();
        }
        if let Some(s) = self.snapshot_stride {
            cfg.output.snapshot_stride = s;
        }
        let violations = cfg.violations();
        if !violations.is_empty() {
            return Err(ConfigError::Invalid(violations).into());
        }
        Ok((cfg, u0))
    }
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(Error::io(path))
}

fn run_simulate(args: &RunArgs) -> Result<()> {
    let (cfg, u0) = args.load()?;
    let out = &cfg.output.directory;
    create_dir(out)?;
    let m = simulate(&cfg, &u0, out, 0)?;
    for w in &m.warnings {
        eprintln!("warning: {w}");
    }
    let f = &m.final_diagnostics;
    println!("t = {}: mass {:.10e}, h1 {:.6e}, min {:.6e}", f.t, f.mass, f.h1, f.min);
    println!("wrote {}", out.join("manifest.json").display());
    Ok(())
}

fn run_ensemble_cmd(args: &RunArgs) -> Result<()> {
    let (cfg, u0) = args.load()?;
    let run = run_ensemble(&cfg, &u0, cfg.ensemble.paths, args.workers)?;
    let report = EnsembleReport::new(&cfg, &run);
    write_ensemble_outputs(&cfg.output.directory, &report, &run)?;
    println!("{}/{} paths completed", report.completed, report.paths);
    if let Some(last) = report.samples.last() {
        println!("mean mass at t = {}: {:.10e} ± {:.3e}", last.t, last.mass.mean, last.mass.se);
    }
    for v in &report.verdicts.mass_moments {
        let c = v.smallest_passing_c_fit.map(|c| format!("{c:.4e}")).unwrap_or_else(|| "-".into());
        println!("p = {}: flat-moment check {}, smallest passing C_fit {c}", v.p, if v.passed { "passed" } else { "failed" });
    }
    println!("wrote {}", cfg.output.directory.join("report.json").display());
    Ok(())
}

fn run_verify() -> Result<()> {
    let outcomes = verify::run_suite();
    let mut failed = 0;
    for o in &outcomes {
        println!("[{}] {}: {}", if o.passed { "pass" } else { "FAIL" }, o.name, o.detail);
        failed += usize::from(!o.passed);
    }
    if failed > 0 {
        return Err(Error::Check(failed));
    }
    Ok(())
}

#[derive(Serialize)]
struct ConvergenceReport {
    det: Study,
    stoch: Option<Study>,
    splitting: RefinementStudy,
}

fn run_convergence(args: &RunArgs) -> Result<()> {
    let (cfg, u0) = args.load()?;
    let t_end = cfg.horizon.t_end.get();
    let det = cfg.det_params();
    let base = det.dt;
    let dts: Vec<f64> = (0..4).map(|i| base / f64::from(1 << i)).collect();
    let det_study = det_time_study(&u0, &det, t_end, &dts, base / 64.0)?;
    print!("{}", det_study.table());

    let stoch = cfg.stoch_params()?;
    let stoch_study = if stoch.spectrum.is_silent() {
        println!("stochastic study skipped: the noise spectrum is silent");
        None
    } else {
        let basis = SpectralBasis::new(u0.length(), stoch.spectrum.cutoff() as i64)?;
        let base = stoch.effective_dt(&basis, u0.dx());
        let dts: Vec<f64> = (0..4).map(|i| base / f64::from(1 << i)).collect();
        let study = strong_order_study(&u0, &stoch, t_end, &dts, base / 64.0, cfg.ensemble.paths as u64, cfg.master_seed)?;
        print!("{}", study.table());
        Some(study)
    };

    let n = cfg.horizon.n_split.max(1);
    let split = split_refinement_study(&cfg, &u0, &[n, 2 * n, 4 * n], cfg.ensemble.paths, args.workers)?;
    print!("{}", split.table());

    let out = &cfg.output.directory;
    create_dir(out)?;
    write_json(&out.join("convergence.json"), &ConvergenceReport { det: det_study, stoch: stoch_study, splitting: split })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(a) => run_simulate(a),
        Command::Ensemble(a) => run_ensemble_cmd(a),
        Command::Verify => run_verify(),
        Command::Convergence(a) => run_convergence(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
