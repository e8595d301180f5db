//! The H²(𝕋_L)-orthonormal trigonometric family Ψ_k and the noise spectrum.
//!
//! Modes are held symbolically (amplitude, angular frequency, branch) so that
//! the derivative identities ∂ₓΨ_k = ω_k Ψ_{-k}, ∂ₓ²Ψ_k = -ω_k² Ψ_k, ... hold
//! exactly rather than up to a sampling error.

use alloc::vec::Vec;
use core::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Branch {
    Constant,
    Cosine,
    Sine,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Mode {
    amplitude: f64,
    /// 2πk/L, signed.
    omega: f64,
    branch: Branch,
}

impl Mode {
    fn new(k: i64, length: f64) -> Self {
        let omega = 2.0 * PI * k as f64 / length;
        let w2 = omega * omega;
        let amplitude = libm::sqrt(2.0 / (length * (1.0 + w2 + w2 * w2)));
        let branch = match k {
            0 => Branch::Constant,
            k if k > 0 => Branch::Cosine,
            _ => Branch::Sine,
        };
        Mode { amplitude, omega, branch }
    }

    #[inline]
    fn eval(&self, x: f64) -> f64 {
        match self.branch {
            Branch::Constant => self.amplitude * FRAC_1_SQRT_2,
            Branch::Cosine => self.amplitude * libm::cos(self.omega * x),
            Branch::Sine => self.amplitude * libm::sin(self.omega * x),
        }
    }
}

/// The family {Ψ_k : |k| ≤ K} on a periodic domain of length `L`.
///
/// Ψ_0 = c_0/√2, Ψ_k = c_k cos(2πkx/L) for k > 0 and c_k sin(2πkx/L) for
/// k < 0, with c_k = √(2 / (L(1 + ω_k² + ω_k⁴))).
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralBasis {
    length: f64,
    cutoff: usize,
    modes: Vec<Mode>,
}

impl SpectralBasis {
    pub fn new(length: f64, cutoff: i64) -> Result<Self> {
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::param("L", "domain length must be positive and finite"));
        }
        if cutoff < 0 {
            return Err(Error::param("K", "mode cutoff must be non-negative"));
        }
        let modes = (-cutoff..=cutoff).map(|k| Mode::new(k, length)).collect();
        Ok(SpectralBasis { length, cutoff: cutoff as usize, modes })
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    /// Mode indices -K..=K in storage order.
    pub fn indices(&self) -> impl Iterator<Item = i64> + Clone {
        let k = self.cutoff as i64;
        -k..=k
    }

    pub fn mode_count(&self) -> usize {
        self.modes.len()
    }

    fn mode(&self, k: i64) -> Result<&Mode> {
        if k.unsigned_abs() as usize > self.cutoff {
            return Err(Error::ModeOutOfRange { k, cutoff: self.cutoff });
        }
        Ok(&self.modes[(k + self.cutoff as i64) as usize])
    }

    /// The normalization constant c_k.
    pub fn norm_constant(&self, k: i64) -> Result<f64> {
        self.mode(k).map(|m| m.amplitude)
    }

    pub fn eval(&self, k: i64, x: f64) -> Result<f64> {
        self.mode(k).map(|m| m.eval(x))
    }

    /// sup_x |Ψ_k(x)|.
    pub fn max_abs(&self, k: i64) -> Result<f64> {
        self.mode(k).map(|m| match m.branch {
            Branch::Constant => m.amplitude * FRAC_1_SQRT_2,
            _ => m.amplitude,
        })
    }

    /// `(coefficient, partner)` with ∂ₓ^order Ψ_k = coefficient · Ψ_partner.
    ///
    /// Powers of ω_k are built as ω², ω²·ω, ω²·ω², so composing two first
    /// derivatives reproduces the second-order coefficient bit for bit.
    pub fn derivative(&self, k: i64, order: u8) -> Result<(f64, i64)> {
        let omega = self.mode(k)?.omega;
        let w2 = omega * omega;
        match order {
            1 => Ok((omega, -k)),
            2 => Ok((-w2, k)),
            3 => Ok((-(w2 * omega), -k)),
            4 => Ok((w2 * w2, k)),
            other => Err(Error::DerivativeOrder(other)),
        }
    }

    /// Ψ_k at the grid nodes x_i = i·L/m.
    pub fn sample(&self, k: i64, points: usize) -> Result<Vec<f64>> {
        let mode = self.mode(k)?;
        let dx = self.length / points as f64;
        Ok((0..points).map(|i| mode.eval(i as f64 * dx)).collect())
    }

    /// Ψ_k at the cell midpoints x_{i+½} = (i + ½)·L/m.
    pub fn sample_midpoints(&self, k: i64, points: usize) -> Result<Vec<f64>> {
        let mode = self.mode(k)?;
        let dx = self.length / points as f64;
        Ok((0..points).map(|i| mode.eval((i as f64 + 0.5) * dx)).collect())
    }
}

/// How to fill one coefficient sequence of a [`NoiseSpectrum`].
#[derive(Debug, Clone, PartialEq)]
pub enum SpectrumFamily {
    /// All coefficients zero.
    Zero,
    /// Listed `(k, value)` pairs; unlisted modes are zero.
    Explicit(Vec<(i64, f64)>),
    /// value_k = a·(1 + |k|)^(-s). The untruncated sum of squares converges
    /// iff s > 1/2.
    PowerLaw { a: f64, s: f64 },
}

impl SpectrumFamily {
    fn fill(&self, name: &'static str, cutoff: usize) -> Result<Vec<f64>> {
        let k_max = cutoff as i64;
        let mut out = alloc::vec![0.0; 2 * cutoff + 1];
        match self {
            SpectrumFamily::Zero => {}
            SpectrumFamily::Explicit(entries) => {
                for &(k, v) in entries {
                    if k.abs() > k_max {
                        return Err(Error::ModeOutOfRange { k, cutoff });
                    }
                    if !v.is_finite() {
                        return Err(Error::param(name, "coefficients must be finite"));
                    }
                    out[(k + k_max) as usize] = v;
                }
            }
            &SpectrumFamily::PowerLaw { a, s } => {
                if !(a.is_finite() && a >= 0.0) {
                    return Err(Error::param(name, "power-law amplitude must be non-negative"));
                }
                if !(s.is_finite() && s > 0.5) {
                    return Err(Error::param(
                        name,
                        alloc::format!(
                            "power-law exponent s = {s} violates the coloring condition (need s > 1/2)"
                        ),
                    ));
                }
                for k in -k_max..=k_max {
                    out[(k + k_max) as usize] = a * libm::pow(1.0 + k.unsigned_abs() as f64, -s);
                }
            }
        }
        Ok(out)
    }
}

/// Truncated noise coefficients λ_k (transport) and γ_k (multiplicative).
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpectrum {
    cutoff: usize,
    lambda: Vec<f64>,
    gamma: Vec<f64>,
}

impl NoiseSpectrum {
    pub fn new(lambda: &SpectrumFamily, gamma: &SpectrumFamily, cutoff: i64) -> Result<Self> {
        if cutoff < 0 {
            return Err(Error::param("K", "mode cutoff must be non-negative"));
        }
        let cutoff = cutoff as usize;
        let lambda = lambda.fill("lambda", cutoff)?;
        if lambda.iter().any(|&l| l < 0.0) {
            return Err(Error::param("lambda", "transport coefficients must be non-negative"));
        }
        let gamma = gamma.fill("gamma", cutoff)?;
        Ok(NoiseSpectrum { cutoff, lambda, gamma })
    }

    /// No noise at all.
    pub fn silent(cutoff: i64) -> Result<Self> {
        Self::new(&SpectrumFamily::Zero, &SpectrumFamily::Zero, cutoff)
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn mode_count(&self) -> usize {
        self.lambda.len()
    }

    pub fn lambda(&self, k: i64) -> f64 {
        self.lambda[(k + self.cutoff as i64) as usize]
    }

    pub fn gamma(&self, k: i64) -> f64 {
        self.gamma[(k + self.cutoff as i64) as usize]
    }

    /// λ in storage order -K..=K.
    pub fn lambdas(&self) -> &[f64] {
        &self.lambda
    }

    pub fn gammas(&self) -> &[f64] {
        &self.gamma
    }

    /// Σ_{|k|≤K} (λ_k² + γ_k²).
    pub fn coloring_sum(&self) -> f64 {
        self.lambda.iter().chain(&self.gamma).map(|v| v * v).sum()
    }

    pub fn is_silent(&self) -> bool {
        self.lambda.iter().chain(&self.gamma).all(|&v| v == 0.0)
    }

    pub fn has_gamma(&self) -> bool {
        self.gamma.iter().any(|&v| v != 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_mode_is_one_on_unit_domain() {
        let b = SpectralBasis::new(1.0, 3).unwrap();
        assert!((b.norm_constant(0).unwrap() - libm::sqrt(2.0)).abs() < 1e-15);
        assert!((b.eval(0, 0.3).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn c1_on_two_pi_domain() {
        let b = SpectralBasis::new(2.0 * PI, 1).unwrap();
        let expected = 1.0 / libm::sqrt(3.0 * PI);
        assert!((b.norm_constant(1).unwrap() - expected).abs() < 1e-15);
        assert!((expected - 0.32574).abs() < 1e-5);
    }

    #[test]
    fn simple_values() {
        let b = SpectralBasis::new(1.7, 5).unwrap();
        assert_eq!(b.eval(5, 0.0).unwrap(), b.norm_constant(5).unwrap());
        assert_eq!(b.eval(-2, 0.0).unwrap(), 0.0);
        assert!(b.eval(1, 1.7 / 4.0).unwrap().abs() < 1e-16);
        let c0 = b.norm_constant(0).unwrap();
        assert_eq!(b.eval(0, 1.234).unwrap(), c0 * FRAC_1_SQRT_2);
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(SpectralBasis::new(0.0, 2).is_err());
        assert!(SpectralBasis::new(-1.0, 2).is_err());
        assert!(SpectralBasis::new(1.0, -1).is_err());
        let b = SpectralBasis::new(1.0, 2).unwrap();
        assert_eq!(b.eval(3, 0.1), Err(Error::ModeOutOfRange { k: 3, cutoff: 2 }));
        assert_eq!(b.derivative(1, 5), Err(Error::DerivativeOrder(5)));
        assert_eq!(b.derivative(1, 0), Err(Error::DerivativeOrder(0)));
    }

    #[test]
    fn derivative_examples() {
        let b = SpectralBasis::new(1.0, 3).unwrap();
        assert_eq!(b.derivative(3, 1).unwrap(), (6.0 * PI, -3));
        for order in 1..=4 {
            let (c, _) = b.derivative(0, order).unwrap();
            assert_eq!(c, 0.0);
        }
        let b = SpectralBasis::new(2.0 * PI, 2).unwrap();
        assert_eq!(b.derivative(2, 4).unwrap(), (16.0, 2));
    }

    #[test]
    fn spectrum_examples() {
        let s = NoiseSpectrum::new(
            &SpectrumFamily::Explicit(alloc::vec![(0, 0.5)]),
            &SpectrumFamily::Zero,
            0,
        )
        .unwrap();
        assert_eq!(s.coloring_sum(), 0.25);

        let s = NoiseSpectrum::new(
            &SpectrumFamily::PowerLaw { a: 1.0, s: 1.0 },
            &SpectrumFamily::Zero,
            2,
        )
        .unwrap();
        let by_hand = 1.0 + 2.0 * 0.25 + 2.0 / 9.0;
        assert!((s.coloring_sum() - by_hand).abs() < 1e-14);
        assert!((s.coloring_sum() - 1.7222).abs() < 1e-4);

        assert!(NoiseSpectrum::new(
            &SpectrumFamily::PowerLaw { a: 1.0, s: 0.4 },
            &SpectrumFamily::Zero,
            2
        )
        .is_err());
        assert!(NoiseSpectrum::new(
            &SpectrumFamily::Explicit(alloc::vec![(1, -0.1)]),
            &SpectrumFamily::Zero,
            2
        )
        .is_err());
        // γ may be negative.
        assert!(NoiseSpectrum::new(
            &SpectrumFamily::Zero,
            &SpectrumFamily::Explicit(alloc::vec![(1, -0.1)]),
            2
        )
        .is_ok());
        assert!(NoiseSpectrum::new(
            &SpectrumFamily::Explicit(alloc::vec![(3, 0.1)]),
            &SpectrumFamily::Zero,
            2
        )
        .is_err());
    }
}
