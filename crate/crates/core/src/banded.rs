//! Periodic penta-diagonal linear systems.
//!
//! Row i of the matrix couples x_{i-2..=i+2} with indices taken mod n. The
//! first n-2 unknowns form an ordinary banded block that is factored by LU
//! with partial pivoting (band storage as in LAPACK `gbtrf`); the two
//! trailing unknowns absorb the wrap-around entries through a 2×2 Schur
//! complement.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

const KL: usize = 2;
const KU: usize = 2;
/// Rows of band storage: KL extra super-diagonals for pivoting fill-in.
const LDAB: usize = 2 * KL + KU + 1;

/// Coefficients of a periodic penta-diagonal matrix, one array per diagonal:
/// `diags[d][i]` multiplies x_{i + d - 2}.
#[derive(Debug, Clone)]
pub(crate) struct CyclicPenta {
    pub diags: [Vec<f64>; 5],
}

impl CyclicPenta {
    pub fn zeros(n: usize) -> Self {
        CyclicPenta { diags: core::array::from_fn(|_| vec![0.0; n]) }
    }

    pub fn len(&self) -> usize {
        self.diags[2].len()
    }

    #[cfg(test)]
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|i| {
                (0..5)
                    .map(|d| self.diags[d][i] * x[crate::field::wrap(i as isize + d as isize - 2, n)])
                    .sum()
            })
            .collect()
    }

    /// Dense entry (row, col), col already reduced mod n.
    fn entry(&self, row: usize, col: usize) -> f64 {
        let n = self.len();
        let mut acc = 0.0;
        // For small n several diagonals may land on the same column.
        for d in 0..5 {
            if crate::field::wrap(row as isize + d as isize - 2, n) == col {
                acc += self.diags[d][row];
            }
        }
        acc
    }

    pub fn factor(&self) -> Result<CyclicFactor> {
        let n = self.len();
        if n < 6 {
            return Err(Error::SolveFailed("periodic penta-diagonal system needs n >= 6"));
        }
        let m = n - 2;
        let mut band = BandLu::new(m);
        for i in 0..m {
            for j in i.saturating_sub(KL)..=(i + KU).min(m - 1) {
                band.set(i, j, self.entry(i, j));
            }
        }
        band.factor()?;

        // Border columns C (m×2), rows D (2×m), corner E (2×2).
        let mut c0: Vec<f64> = (0..m).map(|i| self.entry(i, m)).collect();
        let mut c1: Vec<f64> = (0..m).map(|i| self.entry(i, m + 1)).collect();
        band.solve(&mut c0);
        band.solve(&mut c1);
        let d_rows: [Vec<f64>; 2] = core::array::from_fn(|r| (0..m).map(|j| self.entry(m + r, j)).collect());
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let s = [
            [self.entry(m, m) - dot(&d_rows[0], &c0), self.entry(m, m + 1) - dot(&d_rows[0], &c1)],
            [self.entry(m + 1, m) - dot(&d_rows[1], &c0), self.entry(m + 1, m + 1) - dot(&d_rows[1], &c1)],
        ];
        let det = s[0][0] * s[1][1] - s[0][1] * s[1][0];
        let scale = (s[0][0].abs() + s[0][1].abs()) * (s[1][0].abs() + s[1][1].abs());
        if !det.is_finite() || det.abs() <= 1e-14 * scale || scale == 0.0 {
            return Err(Error::SolveFailed("singular border block"));
        }
        Ok(CyclicFactor { band, x_border: [c0, c1], d_rows, schur: s, det })
    }
}

pub(crate) struct CyclicFactor {
    band: BandLu,
    x_border: [Vec<f64>; 2],
    d_rows: [Vec<f64>; 2],
    schur: [[f64; 2]; 2],
    det: f64,
}

impl CyclicFactor {
    /// Solves in place.
    pub fn solve(&self, rhs: &mut [f64]) {
        let m = self.band.n;
        let (interior, border) = rhs.split_at_mut(m);
        self.band.solve(interior);
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let r0 = border[0] - dot(&self.d_rows[0], interior);
        let r1 = border[1] - dot(&self.d_rows[1], interior);
        let s = &self.schur;
        let z0 = (s[1][1] * r0 - s[0][1] * r1) / self.det;
        let z1 = (s[0][0] * r1 - s[1][0] * r0) / self.det;
        for (i, v) in interior.iter_mut().enumerate() {
            *v -= self.x_border[0][i] * z0 + self.x_border[1][i] * z1;
        }
        border[0] = z0;
        border[1] = z1;
    }
}

/// Banded LU with partial pivoting, column-major band storage.
struct BandLu {
    n: usize,
    ab: Vec<f64>,
    pivots: Vec<usize>,
}

impl BandLu {
    fn new(n: usize) -> Self {
        BandLu { n, ab: vec![0.0; LDAB * n], pivots: vec![0; n] }
    }

    #[inline]
    fn idx(i: usize, j: usize) -> usize {
        // Entry (i, j) lives in band row KL + KU + i - j of column j.
        (KL + KU + i - j) + j * LDAB
    }

    fn set(&mut self, i: usize, j: usize, v: f64) {
        self.ab[Self::idx(i, j)] = v;
    }

    fn factor(&mut self) -> Result<()> {
        let n = self.n;
        let mut max_abs = 0.0f64;
        for v in &self.ab {
            max_abs = max_abs.max(v.abs());
        }
        for j in 0..n {
            let km = KL.min(n - 1 - j);
            let mut p = j;
            let mut best = self.ab[Self::idx(j, j)].abs();
            for i in j + 1..=j + km {
                let v = self.ab[Self::idx(i, j)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            self.pivots[j] = p;
            if !best.is_finite() || best <= 1e-15 * max_abs || best == 0.0 {
                return Err(Error::SolveFailed("zero pivot in banded factorization"));
            }
            let ju = (j + KL + KU).min(n - 1);
            if p != j {
                for c in j..=ju {
                    self.ab.swap(Self::idx(p, c), Self::idx(j, c));
                }
            }
            let pivot = self.ab[Self::idx(j, j)];
            for i in j + 1..=j + km {
                let l = self.ab[Self::idx(i, j)] / pivot;
                self.ab[Self::idx(i, j)] = l;
                if l != 0.0 {
                    for c in j + 1..=ju {
                        self.ab[Self::idx(i, c)] -= l * self.ab[Self::idx(j, c)];
                    }
                }
            }
        }
        Ok(())
    }

    fn solve(&self, b: &mut [f64]) {
        let n = self.n;
        for j in 0..n {
            let p = self.pivots[j];
            if p != j {
                b.swap(p, j);
            }
            let km = KL.min(n - 1 - j);
            for i in j + 1..=j + km {
                b[i] -= self.ab[Self::idx(i, j)] * b[j];
            }
        }
        for j in (0..n).rev() {
            let ju = (j + KL + KU).min(n - 1);
            let mut acc = b[j];
            for (c, bc) in b.iter().enumerate().take(ju + 1).skip(j + 1) {
                acc -= self.ab[Self::idx(j, c)] * bc;
            }
            b[j] = acc / self.ab[Self::idx(j, j)];
        }
    }
}
