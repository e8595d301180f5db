//! The built-in invariant suite behind `thinfilm verify`. Hermetic: every
//! input is generated in memory from fixed seeds.

use std::f64::consts::PI;

use thinfilm_core::det::{det_evolve, det_evolve_observed, det_step};
use thinfilm_core::montecarlo::simulate_path;
use thinfilm_core::splitting::run_split;
use thinfilm_core::stoch::stoch_evolve;
use thinfilm_core::{
    DetParams, EnsembleStats, Field, LipschitzCoefficient, NoiseSource, NoiseSpectrum, SpectralBasis,
    SpectrumFamily, SplitSchedule, StochParams,
};

use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CheckOutcome {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        CheckOutcome { name, passed, detail }
    }
}

/// max |(Ψ_j, Ψ_k)_{H²} - δ_jk| over |j|, |k| ≤ `k_max`, by the periodic
/// rectangle rule on `points` nodes, with derivatives from the symbolic
/// identities.
pub fn h2_gram_error(length: f64, k_max: i64, points: usize) -> Result<f64> {
    let basis = SpectralBasis::new(length, k_max)?;
    let dx = length / points as f64;
    let samples: Vec<Vec<f64>> = basis.indices().map(|k| basis.sample(k, points)).collect::<thinfilm_core::Result<_>>()?;
    let at = |k: i64| &samples[(k + k_max) as usize];
    // [Ψ_k, Ψ_k′, Ψ_k″] on the grid.
    let jets: Vec<[Vec<f64>; 3]> = basis
        .indices()
        .map(|k| {
            let (c1, p1) = basis.derivative(k, 1)?;
            let (c2, p2) = basis.derivative(k, 2)?;
            Ok([at(k).clone(), at(p1).iter().map(|v| c1 * v).collect(), at(p2).iter().map(|v| c2 * v).collect()])
        })
        .collect::<Result<_>>()?;
    let mut worst: f64 = 0.0;
    for (a, ja) in jets.iter().enumerate() {
        for (b, jb) in jets.iter().enumerate() {
            let inner: f64 = (0..3)
                .map(|d| ja[d].iter().zip(&jb[d]).map(|(x, y)| x * y).sum::<f64>())
                .sum::<f64>()
                * dx;
            let target = if a == b { 1.0 } else { 0.0 };
            worst = worst.max((inner - target).abs());
        }
    }
    Ok(worst)
}

/// Bitwise equality, except that +0 and -0 count as the same value.
fn same_bits(a: f64, b: f64) -> bool {
    a.to_bits() == b.to_bits() || (a == 0.0 && b == 0.0)
}

/// Count of modes |k| ≤ `k_max` whose symbolic derivative coefficients differ
/// in any bit from ω_k = 2πk/L and its powers, or whose first derivative
/// composed with itself differs from the second.
pub fn derivative_identity_failures(length: f64, k_max: i64) -> Result<usize> {
    let basis = SpectralBasis::new(length, k_max)?;
    let mut failures = 0;
    for k in basis.indices() {
        let omega = 2.0 * PI * k as f64 / length;
        let w2 = omega * omega;
        let expected = [(omega, -k), (-w2, k), (-(w2 * omega), -k), (w2 * w2, k)];
        for (order, want) in (1..=4u8).zip(expected) {
            let got = basis.derivative(k, order)?;
            if !same_bits(got.0, want.0) || got.1 != want.1 {
                failures += 1;
            }
        }
        let (c1, p1) = basis.derivative(k, 1)?;
        let (c1b, p2) = basis.derivative(p1, 1)?;
        let (c2, q) = basis.derivative(k, 2)?;
        if !same_bits(c1 * c1b, c2) || p2 != q {
            failures += 1;
        }
    }
    Ok(failures)
}

/// |u(T) - exact| for constant data u₀ ≡ 1 with absorption exponent r.
pub fn ode_oracle_error(r: f64, t_end: f64, dt: f64) -> Result<f64> {
    let u0 = Field::constant(8, 1.0, 1.0)?;
    let p = DetParams { r: Some(r), dt, theta: 1.0, ..DetParams::default() };
    let run = det_evolve(&u0, 0.0, t_end, &p)?;
    let exact = if r == 1.0 { (-t_end).exp() } else { (1.0 + (r - 1.0) * t_end).powf(-1.0 / (r - 1.0)) };
    Ok(run.final_state.values().iter().map(|v| (v - exact).abs()).fold(0.0, f64::max))
}

/// A smooth non-negative random field: a few random Fourier modes lifted
/// onto a random floor 0.2·|Z| ≥ 0.
pub fn smooth_positive_field(points: usize, length: f64, seed: u64) -> Result<Field> {
    let (a, b) = NoiseSource::new(seed).standard_normals(0, 0, 3);
    let field = Field::from_fn(points, length, |x| {
        let mut v = 0.0;
        for (k, (ca, cb)) in a.iter().zip(&b).enumerate().skip(1) {
            let w = 2.0 * PI * k as f64 * x / length;
            v += (ca * w.cos() + cb * w.sin()) / (k * k) as f64;
        }
        v
    })?;
    let floor = 0.2 * b[0].abs();
    let shift = floor - field.min_value();
    Ok(Field::new(field.values().iter().map(|v| v + shift).collect(), length)?)
}

/// (smallest, largest) per-step mass change over `cases` smooth positive
/// inputs, each advanced `steps` deterministic steps.
pub fn mass_change_range(cases: u64, steps: usize, points: usize, p: &DetParams) -> Result<(f64, f64)> {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for case in 0..cases {
        let mut u = smooth_positive_field(points, 1.0, case)?;
        for _ in 0..steps {
            let next = det_step(&u, p)?;
            let d = next.mass() - u.mass();
            lo = lo.min(d);
            hi = hi.max(d);
            u = next;
        }
    }
    Ok((lo, hi))
}

/// Largest |mass(T) - mass(0)| over `paths` paths of the stochastic flow with
/// transport noise only.
pub fn stochastic_mass_drift(paths: u64, t_end: f64, seed: u64) -> Result<f64> {
    let u0 = smooth_positive_field(64, 1.0, 99)?;
    let spectrum =
        NoiseSpectrum::new(&SpectrumFamily::PowerLaw { a: 0.5, s: 1.0 }, &SpectrumFamily::Zero, 3)?;
    let p = StochParams::new(1e-3, 1e-3, spectrum, LipschitzCoefficient::Linear(1.0));
    let source = NoiseSource::new(seed);
    let mut worst: f64 = 0.0;
    for path in 0..paths {
        let run = stoch_evolve(&u0, 0.0, t_end, &p, &mut source.lease(path))?;
        worst = worst.max((run.final_state.mass() - u0.mass()).abs());
    }
    Ok(worst)
}

/// Parameters of the constant-mode multiplicative test: γ₀ only, f linear
/// with coefficient `c`, w₀ ≡ 1 on the unit domain. The grid mass then follows
/// a geometric Brownian motion of volatility σ = c·γ₀Ψ₀.
pub fn gbm_setup(gamma0: f64, c: f64, dt: f64) -> Result<(Field, StochParams, f64)> {
    let u0 = Field::constant(8, 1.0, 1.0)?;
    let spectrum = NoiseSpectrum::new(&SpectrumFamily::Zero, &SpectrumFamily::Explicit(vec![(0, gamma0)]), 0)?;
    let psi0 = SpectralBasis::new(1.0, 0)?.eval(0, 0.0)?;
    let p = StochParams::new(0.0, dt, spectrum, LipschitzCoefficient::Linear(c));
    Ok((u0, p, c * gamma0 * psi0))
}

/// Ensemble of the GBM test run as a split scheme with the deterministic
/// phase switched off and `n_split` sample intervals.
pub fn gbm_ensemble(gamma0: f64, c: f64, dt: f64, t_end: f64, n_split: usize, paths: u64, seed: u64) -> Result<(EnsembleStats, f64)> {
    use rayon::prelude::*;
    let (u0, p, sigma) = gbm_setup(gamma0, c, dt)?;
    let schedule = SplitSchedule::new(t_end, n_split)?;
    let source = NoiseSource::new(seed);
    let results: Vec<_> = (0..paths)
        .into_par_iter()
        .map(|path| simulate_path(&u0, &schedule, None, &p, &source, path))
        .collect();
    Ok((EnsembleStats::from_paths(&[1.0, 2.0], results)?, sigma))
}

/// max over handoff times of ‖split(t) - unsplit(t)‖_∞ with all noise off.
/// The unsplit run is one det_evolve over [0, T]; its states are compared at
/// the substeps that land on the handoff times.
pub fn split_consistency_error(u0: &Field, det: &DetParams, t_end: f64, n_split: usize) -> Result<f64> {
    let schedule = SplitSchedule::new(t_end, n_split)?;
    let stoch = StochParams::new(0.0, 1e-3, NoiseSpectrum::silent(2)?, LipschitzCoefficient::Linear(1.0));
    let traj = run_split(u0, &schedule, Some(det), &stoch, &mut NoiseSource::new(0).lease(0), usize::MAX)?;
    let handoffs: Vec<f64> = schedule.intervals().map(|(_, t1)| t1).collect();
    let mut unsplit: Vec<Option<Field>> = vec![None; handoffs.len()];
    det_evolve_observed(u0, 0.0, t_end, det, |_, rec, u| {
        if let Some(i) = handoffs.iter().position(|&t| (rec.t - t).abs() <= 1e-9 * t_end) {
            unsplit[i] = Some(u.clone());
        }
    })?;
    let mut worst: f64 = 0.0;
    for (w, reference) in traj.w_segments.iter().zip(&unsplit) {
        let Some(reference) = reference else {
            return Err(thinfilm_core::Error::InvalidParameter {
                name: "dt",
                reason: format!("no unsplit substep lands on the handoff time {}", w.t_end),
            }
            .into());
        };
        let diff = w.end().values().iter().zip(reference.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        worst = worst.max(diff);
    }
    Ok(worst)
}

/// The full suite, in a fixed order.
pub fn run_suite() -> Vec<CheckOutcome> {
    let mut out = vec![];
    let mut push = |name: &'static str, r: Result<(bool, String)>| {
        out.push(match r {
            Ok((passed, detail)) => CheckOutcome::new(name, passed, detail),
            Err(e) => CheckOutcome::new(name, false, format!("error: {e}")),
        })
    };

    push("basis orthonormality", h2_gram_error(1.0, 8, 4096).map(|e| (e < 1e-8, format!("max deviation {e:.3e}"))));
    push(
        "derivative identities",
        derivative_identity_failures(1.0, 8).map(|n| (n == 0, format!("{n} mismatching coefficients"))),
    );
    for (r, label) in [(1.0, "ODE oracle r=1"), (2.0, "ODE oracle r=2")] {
        push(label, ode_oracle_error(r, 1.0, 1e-4).map(|e| (e < 1e-4, format!("|u(1) - exact| = {e:.3e}"))));
    }
    let det = DetParams { r: Some(2.0), dt: 1e-4, ..DetParams::default() };
    push(
        "deterministic mass monotonicity",
        mass_change_range(10, 10, 64, &det).map(|(_, d)| (d <= 1e-12, format!("max per-step increase {d:.3e}"))),
    );
    let transport = DetParams { r: None, ..det.clone() };
    push(
        "deterministic mass conservation",
        mass_change_range(5, 10, 64, &transport).map(|(lo, hi)| {
            let d = lo.abs().max(hi.abs());
            (d <= 1e-12, format!("max |per-step change| {d:.3e}"))
        }),
    );
    push(
        "stochastic mass conservation",
        stochastic_mass_drift(10, 0.05, 7).map(|d| (d <= 1e-10, format!("max |mass(T) - mass(0)| {d:.3e}"))),
    );
    push(
        "GBM mean mass",
        gbm_ensemble(0.5, 1.0, 1e-3, 0.5, 4, 400, 2024).map(|(stats, _)| {
            let m = stats.samples.last().expect("samples").mass;
            let dev = (m.mean - 1.0).abs();
            (dev <= 3.0 * m.se, format!("|mean - 1| = {dev:.3e}, 3 SE = {:.3e}", 3.0 * m.se))
        }),
    );
    push(
        "split equals unsplit without noise",
        smooth_positive_field(32, 1.0, 5)
            .and_then(|u0| split_consistency_error(&u0, &DetParams { dt: 1e-3, ..det.clone() }, 0.02, 3))
            .map(|e| (e <= 1e-10, format!("max handoff deviation {e:.3e}"))),
    );
    out
}
