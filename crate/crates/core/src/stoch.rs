//! Euler–Maruyama for the viscously regularized stochastic sub-dynamics in
//! Itô form:
//!
//! dw = A^ε w dt + Σ_k λ_k ∂ₓ(Ψ_k w) dβ^k + Σ_k γ_k Ψ_k f(w) dβ₁^k,
//! A^ε w = ½ Σ_k λ_k² ∂ₓ(Ψ_k ∂ₓ(Ψ_k w)) + ε ∂ₓ²w.
//!
//! The Itô correction drift is discretized compactly as δ⁻(Ψ_k(x_{i+½}) δ⁺(Ψ_k w))
//! and the transport noise with the centered difference; both are discrete
//! divergences, so mass only moves through the γ-term.

use alloc::vec;
use alloc::vec::Vec;

use crate::basis::{NoiseSpectrum, SpectralBasis};
use crate::det::substep_count;
use crate::error::{Error, Result};
use crate::field::{DiagnosticsRecord, Field};
use crate::noise::{IncrementSource, WienerIncrements};

/// Globally Lipschitz f with f(0) = 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LipschitzCoefficient {
    /// f(u) = c·u.
    Linear(f64),
    /// f(u) = c·u/(1 + |u|).
    Saturating(f64),
}

impl LipschitzCoefficient {
    #[inline]
    pub fn value(&self, u: f64) -> f64 {
        match *self {
            LipschitzCoefficient::Linear(c) => c * u,
            LipschitzCoefficient::Saturating(c) => c * u / (1.0 + u.abs()),
        }
    }

    /// f′(u). Diagnostic only; the integrator never needs it.
    pub fn derivative(&self, u: f64) -> f64 {
        match *self {
            LipschitzCoefficient::Linear(c) => c,
            LipschitzCoefficient::Saturating(c) => {
                let d = 1.0 + u.abs();
                c / (d * d)
            }
        }
    }

    pub fn lipschitz_constant(&self) -> f64 {
        match *self {
            LipschitzCoefficient::Linear(c) | LipschitzCoefficient::Saturating(c) => c.abs(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StochParams {
    /// Viscosity ε ≥ 0.
    pub eps: f64,
    /// Requested Euler–Maruyama substep.
    pub dt: f64,
    pub spectrum: NoiseSpectrum,
    pub f: LipschitzCoefficient,
    /// Parabolic stability factor: dt ≤ c_stab·dx²/(ε + Σλ_k² max Ψ_k²).
    pub c_stab: f64,
}

impl StochParams {
    pub fn new(eps: f64, dt: f64, spectrum: NoiseSpectrum, f: LipschitzCoefficient) -> Self {
        StochParams { eps, dt, spectrum, f, c_stab: 0.25 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps.is_finite() && self.eps >= 0.0) {
            return Err(Error::param("eps", "viscosity must be non-negative"));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::param("dt", "stochastic substep must be positive"));
        }
        if !(self.c_stab.is_finite() && self.c_stab > 0.0) {
            return Err(Error::param("c_stab", "stability factor must be positive"));
        }
        Ok(())
    }

    /// True when the sub-dynamics is the identity map.
    pub fn is_trivial(&self) -> bool {
        self.eps == 0.0 && self.spectrum.is_silent()
    }

    /// Substep used on a grid of spacing `dx`.
    pub fn effective_dt(&self, basis: &SpectralBasis, dx: f64) -> f64 {
        let rate: f64 = self.eps
            + basis
                .indices()
                .map(|k| {
                    let l = self.spectrum.lambda(k);
                    let psi = basis.max_abs(k).unwrap_or(0.0);
                    l * l * psi * psi
                })
                .sum::<f64>();
        if rate == 0.0 {
            self.dt
        } else {
            self.dt.min(self.c_stab * dx * dx / rate)
        }
    }
}

struct ModeSamples {
    lambda: f64,
    gamma: f64,
    nodes: Vec<f64>,
    midpoints: Vec<f64>,
}

/// Ψ_k sampled on one grid for every mode with a nonzero coefficient.
pub struct StochKernel {
    points: usize,
    length: f64,
    cutoff: usize,
    eps: f64,
    modes: Vec<ModeSamples>,
    /// Storage positions (k + K) of the kept modes.
    positions: Vec<usize>,
}

impl StochKernel {
    pub fn new(basis: &SpectralBasis, spectrum: &NoiseSpectrum, eps: f64, points: usize) -> Result<Self> {
        if basis.cutoff() != spectrum.cutoff() {
            return Err(Error::CutoffMismatch { got: basis.mode_count(), expected: spectrum.mode_count() });
        }
        let mut modes = vec![];
        let mut positions = vec![];
        for (pos, k) in basis.indices().enumerate() {
            let (lambda, gamma) = (spectrum.lambda(k), spectrum.gamma(k));
            if lambda == 0.0 && gamma == 0.0 {
                continue;
            }
            modes.push(ModeSamples {
                lambda,
                gamma,
                nodes: basis.sample(k, points)?,
                midpoints: basis.sample_midpoints(k, points)?,
            });
            positions.push(pos);
        }
        Ok(StochKernel { points, length: basis.length(), cutoff: basis.cutoff(), eps, modes, positions })
    }

    fn check_grid(&self, w: &Field) -> Result<()> {
        if w.len() != self.points || w.length() != self.length {
            return Err(Error::InvalidGrid {
                points: w.len(),
                length: w.length(),
                reason: "field grid differs from the noise kernel grid",
            });
        }
        Ok(())
    }

    /// A^ε w.
    pub fn drift(&self, w: &Field) -> Result<Field> {
        self.check_grid(w)?;
        let m = self.points;
        let dx = w.dx();
        let u = w.values();
        let mut out = vec![0.0; m];
        if self.eps != 0.0 {
            for i in 0..m {
                out[i] = self.eps * (u[(i + 1) % m] - 2.0 * u[i] + u[(i + m - 1) % m]) / (dx * dx);
            }
        }
        let mut flux = vec![0.0; m];
        for mode in self.modes.iter().filter(|md| md.lambda != 0.0) {
            let c = 0.5 * mode.lambda * mode.lambda;
            for i in 0..m {
                let j = (i + 1) % m;
                flux[i] = mode.midpoints[i] * (mode.nodes[j] * u[j] - mode.nodes[i] * u[i]) / dx;
            }
            for i in 0..m {
                out[i] += c * (flux[i] - flux[(i + m - 1) % m]) / dx;
            }
        }
        Ok(w.with_values(out))
    }

    /// Σ λ_k D₁(Ψ_k w) Δβ^k + Σ γ_k Ψ_k f(w) Δβ₁^k.
    pub fn noise(&self, w: &Field, f: LipschitzCoefficient, inc: &WienerIncrements) -> Result<Field> {
        self.check_grid(w)?;
        if inc.mode_count() != 2 * self.cutoff + 1 || inc.multiplicative.len() != inc.transport.len() {
            return Err(Error::CutoffMismatch { got: inc.mode_count(), expected: 2 * self.cutoff + 1 });
        }
        let m = self.points;
        let dx = w.dx();
        let u = w.values();
        // By linearity the mode sums collapse to two random fields.
        let mut transport = vec![0.0; m];
        let mut multiplicative = vec![0.0; m];
        let (mut any_t, mut any_m) = (false, false);
        for (mode, &pos) in self.modes.iter().zip(&self.positions) {
            let a = mode.lambda * inc.transport[pos];
            if a != 0.0 {
                any_t = true;
                for (t, p) in transport.iter_mut().zip(&mode.nodes) {
                    *t += a * p;
                }
            }
            let b = mode.gamma * inc.multiplicative[pos];
            if b != 0.0 {
                any_m = true;
                for (t, p) in multiplicative.iter_mut().zip(&mode.nodes) {
                    *t += b * p;
                }
            }
        }
        let mut out = vec![0.0; m];
        if any_t {
            for (i, o) in out.iter_mut().enumerate() {
                let (ip, im) = ((i + 1) % m, (i + m - 1) % m);
                *o = (transport[ip] * u[ip] - transport[im] * u[im]) / (2.0 * dx);
            }
        }
        if any_m {
            for i in 0..m {
                out[i] += multiplicative[i] * f.value(u[i]);
            }
        }
        Ok(w.with_values(out))
    }

    /// w + dt·A^ε w + noise(w).
    pub fn step(&self, w: &Field, f: LipschitzCoefficient, dt: f64, inc: &WienerIncrements) -> Result<Field> {
        let drift = self.drift(w)?;
        let noise = self.noise(w, f, inc)?;
        let next: Vec<f64> = w
            .values()
            .iter()
            .zip(drift.values())
            .zip(noise.values())
            .map(|((u, d), n)| u + dt * d + n)
            .collect();
        let next = w.with_values(next);
        next.check_finite(f64::NAN)?;
        Ok(next)
    }
}

/// A^ε w on the grid of `w`.
pub fn drift_a_eps(w: &Field, basis: &SpectralBasis, spectrum: &NoiseSpectrum, eps: f64) -> Result<Field> {
    StochKernel::new(basis, spectrum, eps, w.len())?.drift(w)
}

/// The noise part of one Euler–Maruyama step.
pub fn apply_noise(
    w: &Field,
    basis: &SpectralBasis,
    spectrum: &NoiseSpectrum,
    f: LipschitzCoefficient,
    inc: &WienerIncrements,
) -> Result<Field> {
    StochKernel::new(basis, spectrum, 0.0, w.len())?.noise(w, f, inc)
}

fn basis_for(w: &Field, p: &StochParams) -> Result<SpectralBasis> {
    SpectralBasis::new(w.length(), p.spectrum.cutoff() as i64)
}

/// One explicit Euler–Maruyama step of size `p.dt`.
pub fn stoch_step(w: &Field, p: &StochParams, inc: &WienerIncrements) -> Result<Field> {
    p.validate()?;
    let basis = basis_for(w, p)?;
    StochKernel::new(&basis, &p.spectrum, p.eps, w.len())?.step(w, p.f, p.dt, inc)
}

#[derive(Debug, Clone)]
pub struct StochRun {
    pub final_state: Field,
    /// One record at t0 and one after every substep.
    pub diagnostics: Vec<DiagnosticsRecord>,
    pub substeps: usize,
}

/// Evolve over [t0, t1] in equal substeps, calling `observe` at t0 and after
/// every substep. Increments come from `noise`, one call per substep.
///
/// When the sub-dynamics is trivial (no viscosity, silent spectrum) the
/// state is carried through unchanged.
pub fn stoch_evolve_observed<S: IncrementSource>(
    w0: &Field,
    t0: f64,
    t1: f64,
    p: &StochParams,
    noise: &mut S,
    mut observe: impl FnMut(usize, &DiagnosticsRecord, &Field),
) -> Result<(Field, usize)> {
    p.validate()?;
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(t1 > t0) {
        return Err(Error::param("t1", "end time must exceed start time"));
    }
    let basis = basis_for(w0, p)?;
    let kernel = StochKernel::new(&basis, &p.spectrum, p.eps, w0.len())?;
    let span = t1 - t0;
    let n = substep_count(span, p.effective_dt(&basis, w0.dx()));
    let dt = span / n as f64;
    let cutoff = p.spectrum.cutoff();

    observe(0, &w0.diagnostics(t0), w0);
    let mut w = w0.clone();
    for step in 1..=n {
        let t = t0 + span * step as f64 / n as f64;
        let inc = noise.next_increments(dt, cutoff);
        w = kernel.step(&w, p.f, dt, &inc).map_err(|e| match e {
            Error::NonFinite { index, .. } => Error::NonFinite { index, t },
            other => other,
        })?;
        observe(step, &w.diagnostics(t), &w);
    }
    Ok((w, n))
}

/// [`stoch_evolve_observed`] collecting all records.
pub fn stoch_evolve<S: IncrementSource>(
    w0: &Field,
    t0: f64,
    t1: f64,
    p: &StochParams,
    noise: &mut S,
) -> Result<StochRun> {
    let mut diagnostics = vec![];
    let (final_state, substeps) =
        stoch_evolve_observed(w0, t0, t1, p, noise, |_, rec, _| diagnostics.push(*rec))?;
    Ok(StochRun { final_state, diagnostics, substeps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::SpectrumFamily;
    use crate::noise::NoiseSource;
    use core::f64::consts::{FRAC_1_SQRT_2, PI};

    fn spectrum(lambda: SpectrumFamily, gamma: SpectrumFamily, k: i64) -> NoiseSpectrum {
        NoiseSpectrum::new(&lambda, &gamma, k).unwrap()
    }

    fn wavy(m: usize, l: f64) -> Field {
        Field::from_fn(m, l, |x| 1.0 + 0.3 * libm::sin(2.0 * PI * x / l) + 0.1 * libm::cos(6.0 * PI * x / l))
            .unwrap()
    }

    #[test]
    fn lipschitz_coefficients() {
        let lin = LipschitzCoefficient::Linear(0.5);
        let sat = LipschitzCoefficient::Saturating(2.0);
        assert_eq!(lin.value(0.0), 0.0);
        assert_eq!(sat.value(0.0), 0.0);
        assert_eq!(lin.value(3.0), 1.5);
        assert_eq!(sat.value(1.0), 1.0);
        assert_eq!(sat.value(-1.0), -1.0);
        assert_eq!(sat.derivative(0.0), 2.0);
        assert!(sat.derivative(5.0) <= sat.lipschitz_constant());
        // Lipschitz bound on a few pairs.
        for &(a, b) in &[(0.1, 0.2), (-3.0, 4.0), (10.0, 11.0)] {
            assert!((sat.value(a) - sat.value(b)).abs() <= 2.0 * (a - b).abs() + 1e-15);
        }
    }

    #[test]
    fn constant_mode_drift_vanishes_on_constants() {
        let basis = SpectralBasis::new(1.0, 0).unwrap();
        let s = spectrum(SpectrumFamily::Explicit(vec![(0, 0.7)]), SpectrumFamily::Zero, 0);
        let w = Field::constant(16, 1.0, 2.0).unwrap();
        let d = drift_a_eps(&w, &basis, &s, 0.0).unwrap();
        assert!(d.values().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn drift_is_mass_free() {
        let l = 2.0;
        let basis = SpectralBasis::new(l, 3).unwrap();
        let s = spectrum(SpectrumFamily::PowerLaw { a: 0.8, s: 1.0 }, SpectrumFamily::Zero, 3);
        let d = drift_a_eps(&wavy(64, l), &basis, &s, 0.3).unwrap();
        assert!(d.mass().abs() < 1e-12);
    }

    #[test]
    fn viscous_drift_is_laplacian() {
        let l = 1.0;
        let basis = SpectralBasis::new(l, 0).unwrap();
        let s = NoiseSpectrum::silent(0).unwrap();
        let w = Field::from_fn(256, l, |x| libm::sin(2.0 * PI * x / l)).unwrap();
        let d = drift_a_eps(&w, &basis, &s, 1.0).unwrap();
        let k2 = (2.0 * PI / l) * (2.0 * PI / l);
        for (i, &v) in d.values().iter().enumerate() {
            let exact = -k2 * libm::sin(2.0 * PI * w.x(i) / l);
            assert!((v - exact).abs() <= 1e-3 * k2);
        }
    }

    #[test]
    fn drift_matches_closed_form_for_one_mode() {
        // λ on mode 1 only, w ≡ 1: ½λ²∂ₓ(Ψ∂ₓΨ) = ½λ² c² ∂ₓ(-ω cos sin) = -½λ²c²ω² cos(2ωx).
        let l = 1.0;
        let basis = SpectralBasis::new(l, 1).unwrap();
        let s = spectrum(SpectrumFamily::Explicit(vec![(1, 1.0)]), SpectrumFamily::Zero, 1);
        let w = Field::constant(512, l, 1.0).unwrap();
        let d = drift_a_eps(&w, &basis, &s, 0.0).unwrap();
        let c = basis.norm_constant(1).unwrap();
        let omega = 2.0 * PI / l;
        let scale = 0.5 * c * c * omega * omega;
        for (i, &v) in d.values().iter().enumerate() {
            let exact = -scale * libm::cos(2.0 * omega * w.x(i));
            assert!((v - exact).abs() <= 1e-3 * scale, "{v} vs {exact}");
        }
    }

    #[test]
    fn noise_examples() {
        let l = 1.0;
        let basis = SpectralBasis::new(l, 2).unwrap();
        let s = spectrum(SpectrumFamily::PowerLaw { a: 0.5, s: 1.0 }, SpectrumFamily::Zero, 2);
        let f = LipschitzCoefficient::Linear(1.0);
        let w = wavy(32, l);
        let zero = WienerIncrements::zero(2, 0.01);
        assert!(apply_noise(&w, &basis, &s, f, &zero).unwrap().values().iter().all(|&v| v == 0.0));

        let inc = WienerIncrements::draw(&NoiseSource::new(3), 0, 0, 2, 0.01);
        assert!(apply_noise(&w, &basis, &s, f, &inc).unwrap().mass().abs() < 1e-12);

        let s0 = spectrum(SpectrumFamily::Zero, SpectrumFamily::Explicit(vec![(0, 0.4)]), 0);
        let basis0 = SpectralBasis::new(l, 0).unwrap();
        let mut inc = WienerIncrements::zero(0, 0.01);
        inc.multiplicative[0] = 0.05;
        let out = apply_noise(&Field::constant(16, l, 1.0).unwrap(), &basis0, &s0, f, &inc).unwrap();
        let psi0 = basis0.norm_constant(0).unwrap() * FRAC_1_SQRT_2;
        for &v in out.values() {
            assert!((v - 0.4 * psi0 * 0.05).abs() < 1e-16);
        }

        let wrong = WienerIncrements::zero(1, 0.01);
        assert!(matches!(apply_noise(&w, &basis, &s, f, &wrong), Err(Error::CutoffMismatch { .. })));
    }

    #[test]
    fn step_examples() {
        let l = 1.0;
        let w = wavy(32, l);
        let quiet = StochParams::new(0.0, 0.01, NoiseSpectrum::silent(1).unwrap(), LipschitzCoefficient::Linear(1.0));
        let inc = WienerIncrements::draw(&NoiseSource::new(1), 0, 0, 1, 0.01);
        assert_eq!(stoch_step(&w, &quiet, &inc).unwrap(), w);

        let transport = StochParams::new(
            0.01,
            1e-4,
            spectrum(SpectrumFamily::PowerLaw { a: 0.3, s: 1.0 }, SpectrumFamily::Zero, 1),
            LipschitzCoefficient::Linear(1.0),
        );
        let out = stoch_step(&w, &transport, &inc).unwrap();
        assert!((out.mass() - w.mass()).abs() < 1e-12);

        // Constant data, k = 0 multiplicative noise: the scalar update w(1 + σΔβ).
        let s0 = spectrum(SpectrumFamily::Zero, SpectrumFamily::Explicit(vec![(0, 0.6)]), 0);
        let p = StochParams::new(0.0, 0.01, s0, LipschitzCoefficient::Linear(1.0));
        let inc0 = WienerIncrements::draw(&NoiseSource::new(5), 0, 0, 0, 0.01);
        let w0 = Field::constant(8, l, 1.5).unwrap();
        let out = stoch_step(&w0, &p, &inc0).unwrap();
        let sigma = 0.6 * libm::sqrt(2.0) * FRAC_1_SQRT_2;
        for &v in out.values() {
            assert!((v - 1.5 * (1.0 + sigma * inc0.multiplicative[0])).abs() < 1e-14);
        }
    }

    #[test]
    fn evolve_is_identity_without_noise_or_viscosity() {
        let w = wavy(32, 1.0);
        let p = StochParams::new(0.0, 0.01, NoiseSpectrum::silent(2).unwrap(), LipschitzCoefficient::Linear(1.0));
        let mut lease = NoiseSource::new(0).lease(0);
        let run = stoch_evolve(&w, 0.0, 0.1, &p, &mut lease).unwrap();
        assert_eq!(run.final_state, w);
        assert_eq!(run.diagnostics.len(), run.substeps + 1);
    }

    #[test]
    fn evolve_conserves_mass_pathwise_without_gamma() {
        let l = 1.0;
        let w = wavy(64, l);
        let p = StochParams::new(
            1e-3,
            1e-3,
            spectrum(SpectrumFamily::PowerLaw { a: 0.4, s: 1.0 }, SpectrumFamily::Zero, 3),
            LipschitzCoefficient::Linear(1.0),
        );
        let mut lease = NoiseSource::new(17).lease(0);
        let run = stoch_evolve(&w, 0.0, 0.2, &p, &mut lease).unwrap();
        assert!((run.final_state.mass() - w.mass()).abs() <= 1e-10);
        assert!(run.substeps >= 200);
    }

    #[test]
    fn stability_cap_applies_to_transport_noise() {
        let l = 1.0;
        let basis = SpectralBasis::new(l, 1).unwrap();
        let s = spectrum(SpectrumFamily::Explicit(vec![(1, 1.0)]), SpectrumFamily::Zero, 1);
        let p = StochParams::new(0.0, 1.0, s, LipschitzCoefficient::Linear(1.0));
        let dx = l / 64.0;
        let c = basis.norm_constant(1).unwrap();
        assert!((p.effective_dt(&basis, dx) - 0.25 * dx * dx / (c * c)).abs() < 1e-18);
    }
}
