//! Refinement studies: deterministic time step, Euler–Maruyama strong order
//! and number of splitting intervals.

use rayon::prelude::*;
use serde::Serialize;
use thinfilm_core::det::det_evolve;
use thinfilm_core::stoch::stoch_evolve;
use thinfilm_core::{CoupledLease, DetParams, Field, NoiseSource, SpectralBasis, StochParams};

use crate::config::RunConfig;
use crate::ensemble::{run_ensemble, Estimate};
use crate::error::Result;

#[derive(Debug, Clone, Serialize)]
pub struct StudyRow {
    pub dt: f64,
    pub error: f64,
    /// Local slope against the previous (coarser) row.
    pub slope: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Study {
    pub name: String,
    pub reference_dt: f64,
    pub rows: Vec<StudyRow>,
    /// Least-squares slope of log(error) against log(dt).
    pub fitted_slope: f64,
}

impl Study {
    fn new(name: &str, reference_dt: f64, dts: &[f64], errors: Vec<f64>) -> Self {
        let rows = dts
            .iter()
            .zip(&errors)
            .enumerate()
            .map(|(i, (&dt, &error))| StudyRow {
                dt,
                error,
                slope: (i > 0).then(|| (error / errors[i - 1]).ln() / (dt / dts[i - 1]).ln()),
            })
            .collect();
        Study { name: name.into(), reference_dt, rows, fitted_slope: fit_slope(dts, &errors) }
    }

    pub fn table(&self) -> String {
        let mut s = format!("{} (reference dt {:e})\n{:>12} {:>14} {:>8}\n", self.name, self.reference_dt, "dt", "error", "slope");
        for r in &self.rows {
            let slope = r.slope.map(|v| format!("{v:.3}")).unwrap_or_else(|| "-".into());
            s += &format!("{:>12.4e} {:>14.6e} {:>8}\n", r.dt, r.error, slope);
        }
        s += &format!("fitted slope {:.3}\n", self.fitted_slope);
        s
    }
}

/// Least-squares slope of log y against log x.
pub fn fit_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

fn l2_distance(a: &Field, b: &Field) -> f64 {
    let sq: f64 = a.values().iter().zip(b.values()).map(|(x, y)| (x - y) * (x - y)).sum();
    (a.dx() * sq).sqrt()
}

/// ‖u_dt(T) - u_ref(T)‖₂ for each dt.
pub fn det_time_study(u0: &Field, det: &DetParams, t_end: f64, dts: &[f64], reference_dt: f64) -> Result<Study> {
    let run = |dt: f64| det_evolve(u0, 0.0, t_end, &DetParams { dt, ..det.clone() }).map(|r| r.final_state);
    let reference = run(reference_dt)?;
    let errors = dts
        .iter()
        .map(|&dt| Ok(l2_distance(&run(dt)?, &reference)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Study::new("deterministic time step", reference_dt, dts, errors))
}

/// Root-mean-square over `paths` of ‖w_dt(T) - w_ref(T)‖₂, with every coarse
/// increment the sum of the reference increments it spans.
///
/// Each dt must be an integer multiple of `reference_dt` and must not be cut
/// by the stability cap, otherwise the coupling would break.
pub fn strong_order_study(
    u0: &Field,
    stoch: &StochParams,
    t_end: f64,
    dts: &[f64],
    reference_dt: f64,
    paths: u64,
    master_seed: u64,
) -> Result<Study> {
    let basis = SpectralBasis::new(u0.length(), stoch.spectrum.cutoff() as i64)?;
    let cap = StochParams { dt: f64::INFINITY, ..stoch.clone() }.effective_dt(&basis, u0.dx());
    let mut ratios = vec![];
    for &dt in dts {
        let ratio = (dt / reference_dt).round();
        if ratio < 1.0 || (ratio * reference_dt - dt).abs() > 1e-9 * dt {
            return Err(thinfilm_core::Error::InvalidParameter {
                name: "dt",
                reason: format!("{dt:e} is not a multiple of the reference step {reference_dt:e}"),
            }
            .into());
        }
        if dt > cap {
            return Err(thinfilm_core::Error::InvalidParameter {
                name: "dt",
                reason: format!("{dt:e} exceeds the stability cap {cap:e}"),
            }
            .into());
        }
        ratios.push(ratio as u64);
    }
    let source = NoiseSource::new(master_seed);
    let per_path: Vec<Vec<f64>> = (0..paths)
        .into_par_iter()
        .map(|path| {
            let run = |dt: f64, ratio: u64| {
                let mut lease = CoupledLease::new(source.lease(path), ratio);
                stoch_evolve(u0, 0.0, t_end, &StochParams { dt, ..stoch.clone() }, &mut lease).map(|r| r.final_state)
            };
            let reference = run(reference_dt, 1)?;
            dts.iter()
                .zip(&ratios)
                .map(|(&dt, &ratio)| Ok(l2_distance(&run(dt, ratio)?, &reference).powi(2)))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let errors = (0..dts.len())
        .map(|i| (per_path.iter().map(|e| e[i]).sum::<f64>() / paths as f64).sqrt())
        .collect();
    Ok(Study::new("Euler-Maruyama strong error", reference_dt, dts, errors))
}

#[derive(Debug, Clone, Serialize)]
pub struct RefinementRow {
    #[serde(rename = "N")]
    pub n: usize,
    pub delta: f64,
    /// E sup_t ‖u_N‖²_{1,2}.
    pub sup_h1_sq: Estimate,
    /// Estimate divided by the previous row's.
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RefinementStudy {
    pub paths: usize,
    pub rows: Vec<RefinementRow>,
}

impl RefinementStudy {
    pub fn table(&self) -> String {
        let mut s = format!("splitting refinement ({} paths)\n{:>6} {:>12} {:>14} {:>12} {:>8}\n", self.paths, "N", "delta", "E sup h1^2", "se", "ratio");
        for r in &self.rows {
            let ratio = r.ratio.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into());
            s += &format!(
                "{:>6} {:>12.4e} {:>14.6e} {:>12.4e} {:>8}\n",
                r.n, r.delta, r.sup_h1_sq.mean, r.sup_h1_sq.se, ratio
            );
        }
        s
    }

    /// Largest factor between consecutive estimates, in either direction.
    pub fn max_change(&self) -> f64 {
        self.rows
            .iter()
            .filter_map(|r| r.ratio)
            .map(|q| q.max(1.0 / q))
            .fold(1.0, f64::max)
    }
}

/// E sup_t ‖u_N‖²_{1,2} for each N in `ns`, same physics and seed.
pub fn split_refinement_study(
    cfg: &RunConfig,
    u0: &Field,
    ns: &[usize],
    paths: usize,
    workers: Option<usize>,
) -> Result<RefinementStudy> {
    let mut rows: Vec<RefinementRow> = vec![];
    for &n in ns {
        let mut c = cfg.clone();
        c.horizon.n_split = n;
        c.ensemble.p_list = vec![2.0];
        let run = run_ensemble(&c, u0, paths, workers)?;
        let est: Estimate = run.stats.sup_h1_p[0].into();
        let ratio = rows.last().map(|r| est.mean / r.sup_h1_sq.mean);
        rows.push(RefinementRow { n, delta: c.schedule()?.delta, sup_h1_sq: est, ratio });
    }
    Ok(RefinementStudy { paths, rows })
}
