//! Single-trajectory runs with per-interval output files and a manifest.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thinfilm_core::splitting::run_split_observed;
use thinfilm_core::{DiagnosticsRecord, Field, NoiseSource, Phase, SplitObserver};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::io::{self, DiagnosticsWriter};

pub const CODE_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

/// Everything needed to reproduce a run, plus where its output went. Paths
/// are relative to the output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub code_version: String,
    pub master_seed: u64,
    pub path_index: u64,
    pub config: RunConfig,
    pub schedule: ScheduleEntry,
    pub intervals: Vec<IntervalEntry>,
    pub warnings: Vec<String>,
    pub final_state: String,
    pub final_diagnostics: FinalEntry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleEntry {
    #[serde(rename = "T")]
    pub t_end: f64,
    #[serde(rename = "N_split")]
    pub n_split: usize,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalEntry {
    pub j: usize,
    pub t_start: f64,
    pub t_end: f64,
    pub det: PhaseEntry,
    pub stoch: PhaseEntry,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseEntry {
    pub diagnostics: String,
    pub substeps: usize,
    pub snapshots: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalEntry {
    pub t: f64,
    pub mass: f64,
    pub h1: f64,
    pub min: f64,
}

struct FileSink<'a> {
    out: &'a Path,
    stride: usize,
    writer: Option<DiagnosticsWriter<BufWriter<File>>>,
    current: Option<(usize, Phase, PathBuf)>,
    entries: Vec<(usize, Phase, PhaseEntry)>,
    error: Option<Error>,
}

impl FileSink<'_> {
    fn close(&mut self) -> Result<()> {
        if let (Some(w), Some((_, _, path))) = (self.writer.take(), &self.current) {
            w.finish().map_err(|e| Error::Format { path: path.clone(), reason: e.to_string() })?;
        }
        Ok(())
    }

    fn record_inner(&mut self, j: usize, phase: Phase, step: usize, rec: &DiagnosticsRecord, u: &Field) -> Result<()> {
        if step == 0 {
            self.close()?;
            let name = format!("diagnostics/j{j:03}_{phase}.csv");
            let path = self.out.join(&name);
            self.writer = Some(DiagnosticsWriter::create(&path)?);
            self.current = Some((j, phase, path));
            self.entries.push((j, phase, PhaseEntry { diagnostics: name, ..Default::default() }));
        }
        let (_, _, path) = self.current.as_ref().expect("phase opened at step 0");
        let writer = self.writer.as_mut().expect("phase opened at step 0");
        writer.write(rec).map_err(|e| Error::Format { path: path.clone(), reason: e.to_string() })?;
        let entry = &mut self.entries.last_mut().expect("phase opened at step 0").2;
        entry.substeps = step;
        if self.stride > 0 && step % self.stride == 0 {
            let name = format!("snapshots/j{j:03}_{phase}_{step:06}.stfm");
            io::write_snapshot(&self.out.join(&name), u)?;
            entry.snapshots.push(name);
        }
        Ok(())
    }
}

impl SplitObserver for FileSink<'_> {
    fn record(&mut self, j: usize, phase: Phase, step: usize, rec: &DiagnosticsRecord, u: &Field) {
        if self.error.is_none() {
            if let Err(e) = self.record_inner(j, phase, step, rec, u) {
                self.error = Some(e);
            }
        }
    }
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(Error::io(path))
}

/// Run path `path_index` of `cfg` from `u0`, writing diagnostics, snapshots
/// and `manifest.json` under `out`.
pub fn simulate(cfg: &RunConfig, u0: &Field, out: &Path, path_index: u64) -> Result<Manifest> {
    let schedule = cfg.schedule()?;
    let det = cfg.det_params();
    let stoch = cfg.stoch_params()?;
    create_dir(&out.join("diagnostics"))?;
    if cfg.output.snapshot_stride > 0 {
        create_dir(&out.join("snapshots"))?;
    }

    let mut warnings = vec![];
    if u0.min_value() < 0.0 {
        warnings.push(format!("initial condition is negative somewhere (min {:e})", u0.min_value()));
    }
    let mut sink = FileSink {
        out,
        stride: cfg.output.snapshot_stride,
        writer: None,
        current: None,
        entries: vec![],
        error: None,
    };
    let mut lease = NoiseSource::new(cfg.master_seed).lease(path_index);
    let result = run_split_observed(u0, &schedule, Some(&det), &stoch, &mut lease, &mut sink);
    if let Some(e) = sink.error.take() {
        return Err(e);
    }
    sink.close()?;
    let final_state = result?;

    let mut intervals: Vec<IntervalEntry> = schedule
        .intervals()
        .enumerate()
        .map(|(i, (t_start, t_end))| IntervalEntry {
            j: i + 1,
            t_start,
            t_end,
            det: PhaseEntry::default(),
            stoch: PhaseEntry::default(),
        })
        .collect();
    for (j, phase, entry) in sink.entries {
        let slot = &mut intervals[j - 1];
        match phase {
            Phase::Deterministic => slot.det = entry,
            Phase::Stochastic => slot.stoch = entry,
        }
    }

    let final_name = "final.stfm".to_string();
    io::write_snapshot(&out.join(&final_name), &final_state)?;
    let rec = final_state.diagnostics(schedule.t_end);
    let manifest = Manifest {
        code_version: CODE_VERSION.to_string(),
        master_seed: cfg.master_seed,
        path_index,
        config: cfg.clone(),
        schedule: ScheduleEntry { t_end: schedule.t_end, n_split: schedule.n, delta: schedule.delta },
        intervals,
        warnings,
        final_state: final_name,
        final_diagnostics: FinalEntry { t: rec.t, mass: rec.mass, h1: rec.h1, min: rec.min_value },
    };
    write_json(&out.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("reports always serialize");
    text.push('\n');
    std::fs::write(path, text).map_err(Error::io(path))
}
