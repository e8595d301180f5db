//! Parallel ensembles and their JSON/CSV reports.

use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};
use thinfilm_core::montecarlo::{mass_moment_check, simulate_path};
use thinfilm_core::{EnsembleStats, Field, MeanSe, NoiseSource, PathSummary};

use crate::config::RunConfig;
use crate::error::{ConfigError, Error, Result, Violation};
use crate::io::fmt_f64;
use crate::simulate::{write_json, CODE_VERSION};

/// Tolerance of the non-negativity verdict.
pub const NEGATIVITY_TOLERANCE: f64 = 1e-6;

pub struct EnsembleRun {
    pub stats: EnsembleStats,
    pub paths: Vec<PathSummary>,
    pub failures: Vec<(u64, String)>,
}

/// Run `paths` independent split trajectories on `workers` threads (all
/// logical cores when `None`). Path i always draws from substream i, and
/// results are reduced in path order, so the outcome does not depend on the
/// number of workers.
pub fn run_ensemble(cfg: &RunConfig, u0: &Field, paths: usize, workers: Option<usize>) -> Result<EnsembleRun> {
    if paths < 2 {
        return Err(ConfigError::Invalid(vec![Violation {
            path: "ensemble.M_paths".into(),
            message: "an ensemble needs at least 2 paths".into(),
        }])
        .into());
    }
    let schedule = cfg.schedule()?;
    let det = cfg.det_params();
    let stoch = cfg.stoch_params()?;
    let source = NoiseSource::new(cfg.master_seed);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.unwrap_or(0))
        .build()
        .expect("thread pool");
    let results: Vec<_> = pool.install(|| {
        (0..paths as u64)
            .into_par_iter()
            .map(|p| simulate_path(u0, &schedule, Some(&det), &stoch, &source, p))
            .collect()
    });
    let mut failures = vec![];
    let mut ok = vec![];
    let mut first_error = None;
    for (p, r) in results.iter().enumerate() {
        match r {
            Ok(s) => ok.push(s.clone()),
            Err(e) => {
                failures.push((p as u64, e.to_string()));
                first_error.get_or_insert_with(|| e.clone());
            }
        }
    }
    if ok.is_empty() {
        return Err(first_error.expect("paths >= 2").into());
    }
    let stats = EnsembleStats::from_paths(&cfg.ensemble.p_list, results)?;
    Ok(EnsembleRun { stats, paths: ok, failures })
}

/// Hash of the run configuration, ignoring where output is written.
pub fn config_hash(cfg: &RunConfig) -> String {
    let mut cfg = cfg.clone();
    cfg.output.directory = Default::default();
    Sha256::digest(cfg.to_json().as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

#[derive(Debug, Clone, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
}

impl From<MeanSe> for Estimate {
    fn from(m: MeanSe) -> Self {
        Estimate { mean: m.mean, se: m.se }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MomentRow {
    pub p: f64,
    pub mass_p: Estimate,
    pub h1_p: Estimate,
}

#[derive(Debug, Clone, Serialize)]
pub struct SampleRow {
    pub t: f64,
    pub mass: Estimate,
    pub mass_var: f64,
    pub moments: Vec<MomentRow>,
    pub min: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SupRow {
    pub p: f64,
    pub estimate: Estimate,
}

#[derive(Debug, Clone, Serialize)]
pub struct MassMomentVerdict {
    pub p: f64,
    pub c_fit: f64,
    pub passed: bool,
    pub smallest_passing_c_fit: Option<f64>,
    pub point_estimate: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Verdicts {
    /// E|mass(t)|^p against mass(0)^p with no growth allowed.
    pub mass_moments: Vec<MassMomentVerdict>,
    pub min_value: f64,
    pub non_negative: bool,
    /// E sup_t ‖u‖²_{1,2} / ‖u₀‖²_{1,2}, when p = 2 is tracked.
    pub h1_growth_constant: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FailureRow {
    pub path: u64,
    pub error: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct EnsembleReport {
    pub code_version: String,
    pub config_hash: String,
    pub master_seed: u64,
    #[serde(rename = "M")]
    pub paths: usize,
    pub completed: usize,
    pub failed: usize,
    pub completion_fraction: f64,
    pub failures: Vec<FailureRow>,
    pub samples: Vec<SampleRow>,
    pub sup_h1: Vec<SupRow>,
    pub verdicts: Verdicts,
}

impl EnsembleReport {
    pub fn new(cfg: &RunConfig, run: &EnsembleRun) -> Self {
        let stats = &run.stats;
        let samples = stats
            .samples
            .iter()
            .map(|s| SampleRow {
                t: s.t,
                mass: s.mass.into(),
                mass_var: s.mass.variance,
                moments: stats
                    .p_list
                    .iter()
                    .enumerate()
                    .map(|(i, &p)| MomentRow { p, mass_p: s.mass_p[i].into(), h1_p: s.h1_p[i].into() })
                    .collect(),
                min: s.min_value,
            })
            .collect();
        let sup_h1 = stats
            .p_list
            .iter()
            .zip(&stats.sup_h1_p)
            .map(|(&p, m)| SupRow { p, estimate: (*m).into() })
            .collect();
        let mass_moments = stats
            .p_list
            .iter()
            .filter_map(|&p| mass_moment_check(stats, p, 0.0).ok())
            .map(|r| MassMomentVerdict {
                p: r.p,
                c_fit: r.c_fit,
                passed: r.passed,
                smallest_passing_c_fit: finite(r.smallest_passing),
                point_estimate: finite(r.point_estimate),
            })
            .collect();
        let h1_growth_constant = stats.p_list.iter().position(|&p| p == 2.0).and_then(|i| {
            let h0 = stats.samples.first()?.h1_p[i].mean;
            finite(stats.sup_h1_p[i].mean / h0)
        });
        EnsembleReport {
            code_version: CODE_VERSION.to_string(),
            config_hash: config_hash(cfg),
            master_seed: cfg.master_seed,
            paths: stats.requested,
            completed: stats.completed,
            failed: stats.failed,
            completion_fraction: stats.completion_fraction(),
            failures: run.failures.iter().map(|(p, e)| FailureRow { path: *p, error: e.clone() }).collect(),
            samples,
            sup_h1,
            verdicts: Verdicts {
                mass_moments,
                min_value: stats.min_value,
                non_negative: stats.min_value >= -NEGATIVITY_TOLERANCE,
                h1_growth_constant,
            },
        }
    }
}

/// `report.json` and `paths.csv` under `out`.
pub fn write_ensemble_outputs(out: &Path, report: &EnsembleReport, run: &EnsembleRun) -> Result<()> {
    std::fs::create_dir_all(out).map_err(Error::io(out))?;
    write_json(&out.join("report.json"), report)?;
    let path = out.join("paths.csv");
    let bad = |e: csv::Error| Error::Format { path: path.clone(), reason: e.to_string() };
    let mut w = csv::Writer::from_path(&path).map_err(bad)?;
    w.write_record(["path", "final_mass", "final_h1", "sup_h1", "min"]).map_err(bad)?;
    for s in &run.paths {
        let last = s.samples.last().expect("paths sample t = 0");
        w.write_record([
            s.path.to_string(),
            fmt_f64(last.mass),
            fmt_f64(last.h1),
            fmt_f64(s.sup_h1),
            fmt_f64(s.min_value),
        ])
        .map_err(bad)?;
    }
    w.flush().map_err(Error::io(&path))
}
