//! Run configuration: JSON parsing, defaults and validation.

use std::f64::consts::PI;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize};
use thinfilm_core::{
    DetParams, Field, LipschitzCoefficient, NoiseSpectrum, SplitSchedule, SpectrumFamily, StochParams,
};

use crate::error::{ConfigError, Error, Result, Violation};
use crate::io;

/// A finite number > 0. Anything else is rejected while parsing.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize)]
#[serde(transparent)]
pub struct Positive(f64);

impl Positive {
    pub fn new(v: f64) -> Option<Self> {
        (v.is_finite() && v > 0.0).then_some(Positive(v))
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl<'de> Deserialize<'de> for Positive {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = f64::deserialize(d)?;
        Positive::new(v).ok_or_else(|| serde::de::Error::custom(format!("expected a positive number, got {v}")))
    }
}

impl fmt::Display for Positive {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub domain: Domain,
    pub horizon: Horizon,
    #[serde(default)]
    pub det: DetConfig,
    #[serde(default)]
    pub stoch: StochConfig,
    pub initial_condition: InitialCondition,
    #[serde(default)]
    pub ensemble: EnsembleConfig,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Domain {
    #[serde(rename = "L")]
    pub length: Positive,
    #[serde(rename = "M")]
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Horizon {
    #[serde(rename = "T")]
    pub t_end: Positive,
    #[serde(rename = "N_split", default)]
    pub n_split: usize,
}

fn default_eps() -> f64 {
    1e-6
}
fn default_r() -> Option<f64> {
    Some(1.0)
}
fn default_det_dt() -> f64 {
    1e-4
}
fn one() -> f64 {
    1.0
}

/// `r: null` switches the absorption off; a missing `r` means r = 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetConfig {
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default = "default_r")]
    pub r: Option<f64>,
    #[serde(default = "default_det_dt")]
    pub dt: f64,
    #[serde(default = "one")]
    pub theta: f64,
}

impl Default for DetConfig {
    fn default() -> Self {
        DetConfig { eps: default_eps(), r: default_r(), dt: default_det_dt(), theta: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SpectrumConfig {
    Zero,
    /// `[k, value]` pairs.
    Explicit { modes: Vec<(i64, f64)> },
    /// a·(1 + |k|)^(-s).
    PowerLaw { a: f64, s: f64 },
}

impl SpectrumConfig {
    pub fn family(&self) -> SpectrumFamily {
        match self {
            SpectrumConfig::Zero => SpectrumFamily::Zero,
            SpectrumConfig::Explicit { modes } => SpectrumFamily::Explicit(modes.clone()),
            &SpectrumConfig::PowerLaw { a, s } => SpectrumFamily::PowerLaw { a, s },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CoefficientConfig {
    /// f(u) = c·u.
    Linear { c: f64 },
    /// f(u) = c·u/(1 + |u|).
    Saturating { c: f64 },
}

impl From<CoefficientConfig> for LipschitzCoefficient {
    fn from(c: CoefficientConfig) -> Self {
        match c {
            CoefficientConfig::Linear { c } => LipschitzCoefficient::Linear(c),
            CoefficientConfig::Saturating { c } => LipschitzCoefficient::Saturating(c),
        }
    }
}

fn default_stoch_dt() -> f64 {
    1e-3
}
fn default_c_stab() -> f64 {
    0.25
}
fn zero_spectrum() -> SpectrumConfig {
    SpectrumConfig::Zero
}
fn default_f() -> CoefficientConfig {
    CoefficientConfig::Linear { c: 1.0 }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StochConfig {
    #[serde(default)]
    pub eps: f64,
    #[serde(default = "default_stoch_dt")]
    pub dt: f64,
    #[serde(rename = "K_modes", default)]
    pub k_modes: i64,
    #[serde(default = "zero_spectrum")]
    pub lambda: SpectrumConfig,
    #[serde(default = "zero_spectrum")]
    pub gamma: SpectrumConfig,
    #[serde(default = "default_f")]
    pub f: CoefficientConfig,
    #[serde(default = "default_c_stab")]
    pub c_stab: f64,
}

impl Default for StochConfig {
    fn default() -> Self {
        StochConfig {
            eps: 0.0,
            dt: default_stoch_dt(),
            k_modes: 0,
            lambda: SpectrumConfig::Zero,
            gamma: SpectrumConfig::Zero,
            f: default_f(),
            c_stab: default_c_stab(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialCondition {
    Constant { c: f64 },
    /// floor + exp(-(1 - cos(2π(x - center)/L))/(2π·width/L)²): a periodic
    /// bump of unit height and roughly Gaussian profile of standard
    /// deviation `width`.
    Bump { center: f64, width: Positive, floor: f64 },
    /// Grid values read from a CSV or STFM file, resolved against the
    /// config file's directory.
    Samples { file: PathBuf },
}

fn default_paths() -> usize {
    100
}
fn default_p_list() -> Vec<f64> {
    vec![1.0, 2.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    #[serde(rename = "M_paths", default = "default_paths")]
    pub paths: usize,
    #[serde(default = "default_p_list")]
    pub p_list: Vec<f64>,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig { paths: default_paths(), p_list: default_p_list() }
    }
}

fn default_directory() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_directory")]
    pub directory: PathBuf,
    /// Write a field snapshot every this many substeps; 0 disables them.
    #[serde(default)]
    pub snapshot_stride: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { directory: default_directory(), snapshot_stride: 0 }
    }
}

/// Parse and validate a JSON configuration.
pub fn parse_config(text: &str) -> std::result::Result<RunConfig, ConfigError> {
    let cfg: RunConfig = serde_json::from_str(text).map_err(|e| ConfigError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let violations = cfg.violations();
    if violations.is_empty() {
        Ok(cfg)
    } else {
        Err(ConfigError::Invalid(violations))
    }
}

/// Read a config file and its initial data, resolving relative sample paths
/// against the file's directory.
pub fn load_config(path: &Path) -> Result<(RunConfig, Field)> {
    let text = std::fs::read_to_string(path).map_err(Error::io(path))?;
    let cfg = parse_config(&text)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let u0 = cfg.initial_field(base)?;
    Ok((cfg, u0))
}

fn core_violation(section: &str, err: thinfilm_core::Error) -> Violation {
    match err {
        thinfilm_core::Error::InvalidParameter { name, reason } => {
            Violation { path: format!("{section}.{name}"), message: reason }
        }
        other => Violation { path: section.to_string(), message: other.to_string() },
    }
}

impl RunConfig {
    /// Smallest valid configuration: constant data, default physics.
    pub fn minimal(length: f64, points: usize, t_end: f64, c: f64) -> Self {
        RunConfig {
            domain: Domain { length: Positive::new(length).expect("positive length"), points },
            horizon: Horizon { t_end: Positive::new(t_end).expect("positive horizon"), n_split: 0 },
            det: DetConfig::default(),
            stoch: StochConfig::default(),
            initial_condition: InitialCondition::Constant { c },
            ensemble: EnsembleConfig::default(),
            master_seed: 0,
            output: OutputConfig::default(),
        }
    }

    /// Every semantic problem, in document order.
    pub fn violations(&self) -> Vec<Violation> {
        let mut out = vec![];
        if let Err(e) = Field::constant(self.domain.points, self.domain.length.get(), 0.0) {
            out.push(core_violation("domain.M", e));
        }
        if let Err(e) = self.det_params().validate() {
            out.push(core_violation("det", e));
        }
        if self.stoch.k_modes < 0 {
            out.push(Violation { path: "stoch.K_modes".into(), message: "cutoff must be non-negative".into() });
        }
        let k = self.stoch.k_modes.max(0);
        let lambda = NoiseSpectrum::new(&self.stoch.lambda.family(), &SpectrumFamily::Zero, k);
        if let Err(e) = lambda {
            out.push(core_violation("stoch.lambda", e));
        }
        let gamma = NoiseSpectrum::new(&SpectrumFamily::Zero, &self.stoch.gamma.family(), k);
        if let Err(e) = gamma {
            out.push(core_violation("stoch.gamma", e));
        }
        let f = LipschitzCoefficient::from(self.stoch.f);
        if !f.lipschitz_constant().is_finite() {
            out.push(Violation { path: "stoch.f.c".into(), message: "coefficient must be finite".into() });
        }
        let probe = StochParams {
            eps: self.stoch.eps,
            dt: self.stoch.dt,
            spectrum: NoiseSpectrum::silent(0).expect("cutoff 0"),
            f,
            c_stab: self.stoch.c_stab,
        };
        if let Err(e) = probe.validate() {
            out.push(core_violation("stoch", e));
        }
        match &self.initial_condition {
            InitialCondition::Constant { c } if !c.is_finite() => out.push(Violation {
                path: "initial_condition.c".into(),
                message: "value must be finite".into(),
            }),
            InitialCondition::Bump { center, floor, .. } => {
                if !center.is_finite() {
                    out.push(Violation { path: "initial_condition.center".into(), message: "must be finite".into() });
                }
                if !floor.is_finite() {
                    out.push(Violation { path: "initial_condition.floor".into(), message: "must be finite".into() });
                }
            }
            InitialCondition::Samples { file } if file.as_os_str().is_empty() => out.push(Violation {
                path: "initial_condition.file".into(),
                message: "file name is empty".into(),
            }),
            _ => {}
        }
        if self.ensemble.paths < 2 {
            out.push(Violation { path: "ensemble.M_paths".into(), message: "an ensemble needs at least 2 paths".into() });
        }
        if self.ensemble.p_list.is_empty() {
            out.push(Violation { path: "ensemble.p_list".into(), message: "list at least one moment order".into() });
        }
        for (i, p) in self.ensemble.p_list.iter().enumerate() {
            if !(p.is_finite() && *p > 0.0) {
                out.push(Violation {
                    path: format!("ensemble.p_list[{i}]"),
                    message: format!("moment order must be positive, got {p}"),
                });
            }
        }
        out
    }

    pub fn det_params(&self) -> DetParams {
        DetParams {
            eps: self.det.eps,
            r: self.det.r,
            dt: self.det.dt,
            theta: self.det.theta,
            ..DetParams::default()
        }
    }

    pub fn stoch_params(&self) -> Result<StochParams> {
        let spectrum = NoiseSpectrum::new(&self.stoch.lambda.family(), &self.stoch.gamma.family(), self.stoch.k_modes)?;
        Ok(StochParams {
            eps: self.stoch.eps,
            dt: self.stoch.dt,
            spectrum,
            f: self.stoch.f.into(),
            c_stab: self.stoch.c_stab,
        })
    }

    pub fn schedule(&self) -> Result<SplitSchedule> {
        Ok(SplitSchedule::new(self.horizon.t_end.get(), self.horizon.n_split)?)
    }

    /// Sample the initial condition on the configured grid.
    pub fn initial_field(&self, base: &Path) -> Result<Field> {
        let m = self.domain.points;
        let l = self.domain.length.get();
        match &self.initial_condition {
            &InitialCondition::Constant { c } => Ok(Field::constant(m, l, c)?),
            &InitialCondition::Bump { center, width, floor } => {
                let kappa = (2.0 * PI * width.get() / l).powi(2);
                Ok(Field::from_fn(m, l, |x| {
                    floor + (-(1.0 - (2.0 * PI * (x - center) / l).cos()) / kappa).exp()
                })?)
            }
            InitialCondition::Samples { file } => {
                let path = base.join(file);
                let invalid = |message: String| {
                    Error::Config(ConfigError::Invalid(vec![Violation {
                        path: "initial_condition.file".into(),
                        message,
                    }]))
                };
                let values = io::read_samples(&path).map_err(|e| invalid(e.to_string()))?;
                if values.len() != m {
                    return Err(invalid(format!("{} holds {} values, domain.M is {m}", path.display(), values.len())));
                }
                Field::new(values, l).map_err(|e| invalid(e.to_string()))
            }
        }
    }

    /// Canonical JSON, the form that is hashed and written to manifests.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("configs always serialize")
    }
}
