//! Counter-addressed Gaussian increments for the Wiener families β^k, β₁^k.
//!
//! Every increment is a pure function of (master seed, path, substep, family,
//! mode): the pair (master seed, path) keys a ChaCha8 generator, the substep
//! selects its stream, and within a stream the draws are laid out as the
//! transport family β^k for k = -K..=K followed by the multiplicative family
//! β₁^k in the same order. Any trajectory can therefore be replayed exactly,
//! paths never share a stream, and a coarse step can be coupled to a fine one
//! by summing the fine increments.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Root of all randomness for one experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NoiseSource {
    pub master_seed: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl NoiseSource {
    pub fn new(master_seed: u64) -> Self {
        NoiseSource { master_seed }
    }

    fn generator(&self, path: u64, substep: u64) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.master_seed.to_le_bytes());
        key[8..16].copy_from_slice(&path.to_le_bytes());
        key[16..24].copy_from_slice(&splitmix64(self.master_seed).to_le_bytes());
        key[24..].copy_from_slice(&splitmix64(!path).to_le_bytes());
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(substep);
        rng
    }

    /// Standard normals Z for one substep: `(transport, multiplicative)`,
    /// each of length 2K+1 in mode order -K..=K.
    pub fn standard_normals(&self, path: u64, substep: u64, cutoff: usize) -> (Vec<f64>, Vec<f64>) {
        let modes = 2 * cutoff + 1;
        let mut rng = self.generator(path, substep);
        let transport = (0..modes).map(|_| rng.sample(StandardNormal)).collect();
        let multiplicative = (0..modes).map(|_| rng.sample(StandardNormal)).collect();
        (transport, multiplicative)
    }

    /// A fresh cursor for one path, starting at substep 0.
    pub fn lease(&self, path: u64) -> RngLease {
        RngLease { source: *self, path, next_substep: 0 }
    }
}

/// Increments Δβ^k, Δβ₁^k ~ N(0, dt) for one (possibly aggregated) step.
#[derive(Debug, Clone, PartialEq)]
pub struct WienerIncrements {
    pub dt: f64,
    /// Δβ^k, k = -K..=K.
    pub transport: Vec<f64>,
    /// Δβ₁^k, k = -K..=K.
    pub multiplicative: Vec<f64>,
    pub master_seed: u64,
    pub path: u64,
    /// First base substep covered.
    pub substep: u64,
    /// Number of base substeps summed into this increment.
    pub span: u64,
}

impl WienerIncrements {
    pub fn draw(source: &NoiseSource, path: u64, substep: u64, cutoff: usize, dt: f64) -> Self {
        let (z, z1) = source.standard_normals(path, substep, cutoff);
        let s = libm::sqrt(dt);
        WienerIncrements {
            dt,
            transport: z.into_iter().map(|v| v * s).collect(),
            multiplicative: z1.into_iter().map(|v| v * s).collect(),
            master_seed: source.master_seed,
            path,
            substep,
            span: 1,
        }
    }

    pub fn zero(cutoff: usize, dt: f64) -> Self {
        WienerIncrements {
            dt,
            transport: vec![0.0; 2 * cutoff + 1],
            multiplicative: vec![0.0; 2 * cutoff + 1],
            master_seed: 0,
            path: 0,
            substep: 0,
            span: 1,
        }
    }

    pub fn mode_count(&self) -> usize {
        self.transport.len()
    }

    /// Sum of consecutive increments, i.e. the increment over their union.
    pub fn aggregate(parts: &[WienerIncrements]) -> Option<Self> {
        let (first, rest) = parts.split_first()?;
        let mut acc = first.clone();
        for p in rest {
            acc.dt += p.dt;
            acc.span += p.span;
            for (a, b) in acc.transport.iter_mut().zip(&p.transport) {
                *a += b;
            }
            for (a, b) in acc.multiplicative.iter_mut().zip(&p.multiplicative) {
                *a += b;
            }
        }
        Some(acc)
    }
}

/// Anything that hands out the next increment of a path.
pub trait IncrementSource {
    fn next_increments(&mut self, dt: f64, cutoff: usize) -> WienerIncrements;
}

/// One path's cursor into the counter space. Each call consumes one substep.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RngLease {
    pub source: NoiseSource,
    pub path: u64,
    pub next_substep: u64,
}

impl IncrementSource for RngLease {
    fn next_increments(&mut self, dt: f64, cutoff: usize) -> WienerIncrements {
        let inc = WienerIncrements::draw(&self.source, self.path, self.next_substep, cutoff, dt);
        self.next_substep += 1;
        inc
    }
}

/// Serves steps of size dt as sums of `ratio` base increments of size
/// dt/ratio, so a coarse run shares its Brownian path with a fine run on the
/// same lease.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoupledLease {
    pub base: RngLease,
    pub ratio: u64,
}

impl CoupledLease {
    pub fn new(base: RngLease, ratio: u64) -> Self {
        assert!(ratio >= 1, "coupling ratio must be positive");
        CoupledLease { base, ratio }
    }
}

impl IncrementSource for CoupledLease {
    fn next_increments(&mut self, dt: f64, cutoff: usize) -> WienerIncrements {
        let fine = dt / self.ratio as f64;
        let parts: Vec<_> = (0..self.ratio).map(|_| self.base.next_increments(fine, cutoff)).collect();
        let mut inc = WienerIncrements::aggregate(&parts).expect("ratio >= 1");
        inc.dt = dt;
        inc
    }
}

impl<T: IncrementSource + ?Sized> IncrementSource for &mut T {
    fn next_increments(&mut self, dt: f64, cutoff: usize) -> WienerIncrements {
        (**self).next_increments(dt, cutoff)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn replayable() {
        let src = NoiseSource::new(7);
        let a = WienerIncrements::draw(&src, 3, 11, 2, 0.01);
        let b = WienerIncrements::draw(&src, 3, 11, 2, 0.01);
        assert_eq!(a, b);
        let c = WienerIncrements::draw(&src, 3, 12, 2, 0.01);
        assert_ne!(a.transport, c.transport);
        let d = WienerIncrements::draw(&src, 4, 11, 2, 0.01);
        assert_ne!(a.transport, d.transport);
        let e = WienerIncrements::draw(&NoiseSource::new(8), 3, 11, 2, 0.01);
        assert_ne!(a.transport, e.transport);
    }

    #[test]
    fn lease_advances() {
        let src = NoiseSource::new(1);
        let mut lease = src.lease(5);
        let first = lease.next_increments(0.1, 1);
        let second = lease.next_increments(0.1, 1);
        assert_eq!(first.substep, 0);
        assert_eq!(second.substep, 1);
        assert_eq!(first, WienerIncrements::draw(&src, 5, 0, 1, 0.1));
    }

    #[test]
    fn coupled_lease_sums_fine_increments() {
        let src = NoiseSource::new(9);
        let mut fine = src.lease(2);
        let parts: Vec<_> = (0..4).map(|_| fine.next_increments(0.25, 1)).collect();
        let summed = WienerIncrements::aggregate(&parts).unwrap();
        let mut coarse = CoupledLease::new(src.lease(2), 4);
        let got = coarse.next_increments(1.0, 1);
        assert_eq!(got.transport, summed.transport);
        assert_eq!(got.multiplicative, summed.multiplicative);
        assert_eq!(got.span, 4);
        assert_eq!(coarse.base.next_substep, 4);
    }

    #[test]
    fn pooled_variance_matches_dt() {
        let src = NoiseSource::new(2024);
        let dt = 0.01;
        let mut n = 0usize;
        let (mut s1, mut s2) = (0.0, 0.0);
        let mut cross = 0.0;
        for step in 0..4000 {
            let inc = WienerIncrements::draw(&src, 0, step, 2, dt);
            for (a, b) in inc.transport.iter().zip(&inc.multiplicative) {
                s1 += a + b;
                s2 += a * a + b * b;
                cross += a * b;
                n += 2;
            }
        }
        let mean = s1 / n as f64;
        let var = s2 / n as f64 - mean * mean;
        // 20000 samples: relative SE of the variance is √(2/n) ≈ 1%.
        assert!((var / dt - 1.0).abs() < 0.05, "variance ratio {}", var / dt);
        assert!(mean.abs() < 4.0 * libm::sqrt(dt / n as f64));
        // Families uncorrelated.
        let corr = cross / (n as f64 / 2.0) / dt;
        assert!(corr.abs() < 0.05, "correlation {corr}");
    }
}
