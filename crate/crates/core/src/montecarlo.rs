//! Per-path summaries and the ensemble statistics built from them.
//!
//! Paths stream their diagnostics into running maxima and a handful of
//! samples taken at the interval boundaries, so memory per path does not
//! grow with the number of substeps.

use alloc::vec;
use alloc::vec::Vec;

use crate::det::DetParams;
use crate::error::{Error, Result};
use crate::field::{DiagnosticsRecord, Field};
use crate::noise::NoiseSource;
use crate::splitting::{run_split_observed, Phase, SplitSchedule};
use crate::stoch::StochParams;

/// State of one path at an interval boundary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathSample {
    pub t: f64,
    pub mass: f64,
    pub h1: f64,
    pub min_value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathSummary {
    pub path: u64,
    /// At t = 0 and at the end of every interval.
    pub samples: Vec<PathSample>,
    /// sup over every recorded substep of ‖u‖_{1,2}.
    pub sup_h1: f64,
    /// min over every recorded substep and grid node.
    pub min_value: f64,
}

fn sample(rec: &DiagnosticsRecord) -> PathSample {
    PathSample { t: rec.t, mass: rec.mass, h1: rec.h1, min_value: rec.min_value }
}

/// Run one split trajectory on its own substream and summarize it.
pub fn simulate_path(
    u0: &Field,
    schedule: &SplitSchedule,
    det: Option<&DetParams>,
    stoch: &StochParams,
    source: &NoiseSource,
    path: u64,
) -> Result<PathSummary> {
    let first = u0.diagnostics(0.0);
    let mut summary = PathSummary {
        path,
        samples: vec![sample(&first)],
        sup_h1: first.h1,
        min_value: first.min_value,
    };
    let mut last_stoch: Option<PathSample> = None;
    let mut lease = source.lease(path);
    let mut obs = |_: usize, phase: Phase, step: usize, rec: &DiagnosticsRecord, _: &Field| {
        summary.sup_h1 = summary.sup_h1.max(rec.h1);
        summary.min_value = summary.min_value.min(rec.min_value);
        if phase == Phase::Stochastic {
            if step == 0 {
                if let Some(s) = last_stoch.take() {
                    summary.samples.push(s);
                }
            }
            last_stoch = Some(sample(rec));
        }
    };
    run_split_observed(u0, schedule, det, stoch, &mut lease, &mut obs)?;
    if let Some(s) = last_stoch {
        summary.samples.push(s);
    }
    Ok(summary)
}

/// Running mean and sum of squared deviations (Welford), mergeable.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Moments {
    pub n: u64,
    pub mean: f64,
    pub m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    /// Pairwise combination of two disjoint sample sets.
    pub fn merge(&self, other: &Moments) -> Moments {
        if self.n == 0 {
            return *other;
        }
        if other.n == 0 {
            return *self;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        let mean = self.mean + d * other.n as f64 / n as f64;
        let m2 = self.m2 + other.m2 + d * d * (self.n as f64 * other.n as f64) / n as f64;
        Moments { n, mean, m2 }
    }

    pub fn summary(&self) -> MeanSe {
        let variance = if self.n > 1 { self.m2 / (self.n - 1) as f64 } else { f64::NAN };
        MeanSe { n: self.n, mean: self.mean, variance, se: libm::sqrt(variance / self.n as f64) }
    }
}

/// Sample mean, sample variance and standard error √(var/n).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanSe {
    pub n: u64,
    pub mean: f64,
    pub variance: f64,
    pub se: f64,
}

impl MeanSe {
    pub fn relative_se(&self) -> f64 {
        if self.mean != 0.0 {
            self.se / self.mean.abs()
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleStats {
    pub t: f64,
    pub mass: MeanSe,
    /// E|mass|^p for each p in the ensemble's list.
    pub mass_p: Vec<MeanSe>,
    /// E‖u‖_{1,2}^p for each p.
    pub h1_p: Vec<MeanSe>,
    /// Smallest grid value seen by any path at this sample.
    pub min_value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleStats {
    pub requested: usize,
    pub completed: usize,
    pub failed: usize,
    pub p_list: Vec<f64>,
    pub samples: Vec<SampleStats>,
    /// E sup_t ‖u‖_{1,2}^p for each p.
    pub sup_h1_p: Vec<MeanSe>,
    /// min over paths, substeps and grid nodes.
    pub min_value: f64,
}

struct SampleAcc {
    t: f64,
    mass: Moments,
    mass_p: Vec<Moments>,
    h1_p: Vec<Moments>,
    min_value: f64,
}

impl EnsembleStats {
    /// Fold path results in the order given. Failed paths are counted and
    /// skipped.
    pub fn from_paths<I>(p_list: &[f64], results: I) -> Result<Self>
    where
        I: IntoIterator<Item = Result<PathSummary>>,
    {
        let mut requested = 0;
        let mut failed = 0;
        let mut acc: Vec<SampleAcc> = vec![];
        let mut sup: Vec<Moments> = vec![Moments::default(); p_list.len()];
        let mut min_value = f64::INFINITY;
        for res in results {
            requested += 1;
            let Ok(path) = res else {
                failed += 1;
                continue;
            };
            if acc.is_empty() {
                acc = path
                    .samples
                    .iter()
                    .map(|s| SampleAcc {
                        t: s.t,
                        mass: Moments::default(),
                        mass_p: vec![Moments::default(); p_list.len()],
                        h1_p: vec![Moments::default(); p_list.len()],
                        min_value: f64::INFINITY,
                    })
                    .collect();
            }
            if path.samples.len() != acc.len() {
                return Err(Error::param("samples", "paths disagree on the number of time samples"));
            }
            for (a, s) in acc.iter_mut().zip(&path.samples) {
                a.mass.push(s.mass);
                for (i, &p) in p_list.iter().enumerate() {
                    a.mass_p[i].push(libm::pow(s.mass.abs(), p));
                    a.h1_p[i].push(libm::pow(s.h1, p));
                }
                a.min_value = a.min_value.min(s.min_value);
            }
            for (i, &p) in p_list.iter().enumerate() {
                sup[i].push(libm::pow(path.sup_h1, p));
            }
            min_value = min_value.min(path.min_value);
        }
        let samples = acc
            .into_iter()
            .map(|a| SampleStats {
                t: a.t,
                mass: a.mass.summary(),
                mass_p: a.mass_p.iter().map(Moments::summary).collect(),
                h1_p: a.h1_p.iter().map(Moments::summary).collect(),
                min_value: a.min_value,
            })
            .collect();
        Ok(EnsembleStats {
            requested,
            completed: requested - failed,
            failed,
            p_list: p_list.to_vec(),
            samples,
            sup_h1_p: sup.iter().map(Moments::summary).collect(),
            min_value,
        })
    }

    pub fn completion_fraction(&self) -> f64 {
        if self.requested == 0 {
            0.0
        } else {
            self.completed as f64 / self.requested as f64
        }
    }

    fn p_index(&self, p: f64) -> Result<usize> {
        self.p_list.iter().position(|&q| q == p).ok_or(Error::UntrackedMoment(p))
    }

    fn mass_moment(&self, sample: &SampleStats, p: f64) -> Result<MeanSe> {
        if p == 1.0 && !self.p_list.contains(&1.0) {
            return Ok(sample.mass);
        }
        Ok(sample.mass_p[self.p_index(p)?])
    }
}

/// Verdict of [`mass_moment_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct MassMomentReport {
    pub p: f64,
    pub c_fit: f64,
    pub passed: bool,
    /// Smallest growth constant C with E|m(t)|^p ≤ e^{Ct}·m(0)^p·(1 + 3·SE_rel)
    /// at every sample.
    pub smallest_passing: f64,
    /// max_t ln(E|m(t)|^p / m(0)^p)/t, the same bound without the 3σ slack.
    pub point_estimate: f64,
    pub completion_fraction: f64,
}

/// Relative floating-point allowance on top of the statistical slack.
const ROUNDOFF: f64 = 1e-12;

/// Check E|m(t)|^p ≤ e^{C_fit t}·m(0)^p·(1 + 3·SE_rel) at every sample time.
pub fn mass_moment_check(stats: &EnsembleStats, p: f64, c_fit: f64) -> Result<MassMomentReport> {
    if stats.samples.len() < 3 {
        return Err(Error::InsufficientSamples { needed: 3, got: stats.samples.len() });
    }
    let reference = stats.mass_moment(&stats.samples[0], p)?.mean;
    let mut smallest = f64::NEG_INFINITY;
    let mut point = f64::NEG_INFINITY;
    let mut passed = true;
    for s in &stats.samples[1..] {
        let m = stats.mass_moment(s, p)?;
        let slack = (1.0 + 3.0 * m.relative_se()) * (1.0 + ROUNDOFF);
        let bound = libm::exp(c_fit * s.t) * reference * slack;
        if m.mean > bound {
            passed = false;
        }
        if s.t > 0.0 && reference > 0.0 && m.mean > 0.0 {
            smallest = smallest.max(libm::log(m.mean / (reference * slack)) / s.t);
            point = point.max(libm::log(m.mean / reference) / s.t);
        }
    }
    Ok(MassMomentReport {
        p,
        c_fit,
        passed,
        smallest_passing: smallest,
        point_estimate: point,
        completion_fraction: stats.completion_fraction(),
    })
}

/// Monte Carlo estimate of E sup_t ‖u‖_{1,2}^p.
pub fn supnorm_moment_estimate(stats: &EnsembleStats, p: f64) -> Result<MeanSe> {
    Ok(stats.sup_h1_p[stats.p_index(p)?])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn welford_matches_two_pass() {
        let xs = [1.0, 4.0, -2.0, 7.5, 3.25, 0.0];
        let mut m = Moments::default();
        xs.iter().for_each(|&x| m.push(x));
        let mean = xs.iter().sum::<f64>() / 6.0;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / 5.0;
        let s = m.summary();
        assert!((s.mean - mean).abs() < 1e-14);
        assert!((s.variance - var).abs() < 1e-12);
        assert!((s.se - libm::sqrt(var / 6.0)).abs() < 1e-12);
    }

    #[test]
    fn merge_is_order_insensitive() {
        let xs: Vec<f64> = (0..50).map(|i| libm::sin(i as f64 * 1.3) * 10.0).collect();
        let acc = |s: &[f64]| {
            let mut m = Moments::default();
            s.iter().for_each(|&x| m.push(x));
            m
        };
        let whole = acc(&xs);
        let (a, b, c) = (acc(&xs[..13]), acc(&xs[13..31]), acc(&xs[31..]));
        let left = a.merge(&b).merge(&c);
        let right = a.merge(&b.merge(&c));
        let swapped = c.merge(&a).merge(&b);
        for m in [left, right, swapped] {
            assert_eq!(m.n, whole.n);
            assert!((m.mean - whole.mean).abs() < 1e-13);
            assert!((m.m2 - whole.m2).abs() < 1e-10 * whole.m2);
        }
    }

    fn summary(path: u64, masses: &[f64]) -> PathSummary {
        PathSummary {
            path,
            samples: masses
                .iter()
                .enumerate()
                .map(|(i, &m)| PathSample { t: i as f64 * 0.5, mass: m, h1: m, min_value: 0.0 })
                .collect(),
            sup_h1: masses.iter().copied().fold(0.0, f64::max),
            min_value: 0.0,
        }
    }

    #[test]
    fn flat_moments_pass_with_zero_growth() {
        let paths = (0..4).map(|i| Ok(summary(i, &[1.0, 1.0, 1.0])));
        let stats = EnsembleStats::from_paths(&[2.0], paths).unwrap();
        let report = mass_moment_check(&stats, 2.0, 0.0).unwrap();
        assert!(report.passed);
        assert!(report.smallest_passing <= 0.0);
        assert_eq!(stats.samples[2].mass.variance, 0.0);
    }

    #[test]
    fn decreasing_mass_passes_with_zero_growth() {
        let paths = (0..3).map(|i| Ok(summary(i, &[1.0, 0.8, 0.5])));
        let stats = EnsembleStats::from_paths(&[1.0, 2.0], paths).unwrap();
        assert!(mass_moment_check(&stats, 2.0, 0.0).unwrap().passed);
        assert!(mass_moment_check(&stats, 1.0, 0.0).unwrap().passed);
    }

    #[test]
    fn growing_moment_needs_positive_constant() {
        // Deterministic growth e^{t}: smallest passing C is exactly 1.
        let m: Vec<f64> = (0..4).map(|i| libm::exp(0.5 * i as f64 * 0.5)).collect();
        let paths = (0..3).map(|i| Ok(summary(i, &m)));
        let stats = EnsembleStats::from_paths(&[2.0], paths).unwrap();
        let report = mass_moment_check(&stats, 2.0, 0.0).unwrap();
        assert!(!report.passed);
        assert!((report.smallest_passing - 1.0).abs() < 1e-9);
        assert!(mass_moment_check(&stats, 2.0, 1.0 + 1e-9).unwrap().passed);
    }

    #[test]
    fn check_errors() {
        let paths = (0..3).map(|i| Ok(summary(i, &[1.0, 1.0])));
        let stats = EnsembleStats::from_paths(&[2.0], paths).unwrap();
        assert!(matches!(mass_moment_check(&stats, 2.0, 0.0), Err(Error::InsufficientSamples { .. })));
        let paths = (0..3).map(|i| Ok(summary(i, &[1.0, 1.0, 1.0])));
        let stats = EnsembleStats::from_paths(&[2.0], paths).unwrap();
        assert_eq!(mass_moment_check(&stats, 4.0, 0.0), Err(Error::UntrackedMoment(4.0)));
        assert!(supnorm_moment_estimate(&stats, 3.0).is_err());
    }

    #[test]
    fn failures_are_counted() {
        let paths = vec![
            Ok(summary(0, &[1.0, 1.0, 1.0])),
            Err(Error::SolveFailed("x")),
            Ok(summary(2, &[1.0, 2.0, 3.0])),
        ];
        let stats = EnsembleStats::from_paths(&[2.0], paths).unwrap();
        assert_eq!((stats.requested, stats.completed, stats.failed), (3, 2, 1));
        assert!((stats.completion_fraction() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(supnorm_moment_estimate(&stats, 2.0).unwrap().mean, 5.0);
    }
}
