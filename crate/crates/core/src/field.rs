//! Periodic grid functions on [0, L).

use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Samples u(x_i), x_i = i·L/M, i = 0..M, of a periodic function.
///
/// M must be even and at least 8; every value must be finite.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    values: Vec<f64>,
    length: f64,
}

/// Summary of one field snapshot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub mass: f64,
    pub l2: f64,
    pub h1: f64,
    pub dx_l2: f64,
    pub min_value: f64,
    /// Cumulative energy-identity residual; only the deterministic solver
    /// fills it.
    pub energy_residual: Option<f64>,
    /// Fraction of nodes above the positivity threshold.
    pub positivity_measure: f64,
}

#[inline]
pub(crate) fn wrap(i: isize, m: usize) -> usize {
    i.rem_euclid(m as isize) as usize
}

impl Field {
    pub fn new(values: Vec<f64>, length: f64) -> Result<Self> {
        let m = values.len();
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::InvalidGrid { points: m, length, reason: "length must be positive" });
        }
        if m < 8 || m % 2 != 0 {
            return Err(Error::InvalidGrid { points: m, length, reason: "need an even number of at least 8 points" });
        }
        let field = Field { values, length };
        field.check_finite(0.0)?;
        Ok(field)
    }

    pub fn from_fn(points: usize, length: f64, f: impl Fn(f64) -> f64) -> Result<Self> {
        let dx = length / points as f64;
        Self::new((0..points).map(|i| f(i as f64 * dx)).collect(), length)
    }

    pub fn constant(points: usize, length: f64, value: f64) -> Result<Self> {
        Self::new(alloc::vec![value; points], length)
    }

    /// Same grid, new values. Finiteness is not checked.
    pub(crate) fn with_values(&self, values: Vec<f64>) -> Field {
        debug_assert_eq!(values.len(), self.values.len());
        Field { values, length: self.length }
    }

    pub fn check_finite(&self, t: f64) -> Result<()> {
        match self.values.iter().position(|v| !v.is_finite()) {
            Some(index) => Err(Error::NonFinite { index, t }),
            None => Ok(()),
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn dx(&self) -> f64 {
        self.length / self.values.len() as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        i as f64 * self.dx()
    }

    pub fn same_grid(&self, other: &Field) -> bool {
        self.values.len() == other.values.len() && self.length == other.length
    }

    pub fn scaled(&self, factor: f64) -> Field {
        self.with_values(self.values.iter().map(|v| v * factor).collect())
    }

    /// ∫u dx by the periodic rectangle rule.
    pub fn mass(&self) -> f64 {
        self.dx() * self.values.iter().sum::<f64>()
    }

    /// Centered periodic finite differences, second-order accurate.
    pub fn diff(&self, order: u8) -> Result<Field> {
        let m = self.values.len();
        let dx = self.dx();
        let u = |i: usize, s: isize| self.values[wrap(i as isize + s, m)];
        let out: Vec<f64> = match order {
            1 => (0..m).map(|i| (u(i, 1) - u(i, -1)) / (2.0 * dx)).collect(),
            2 => (0..m).map(|i| (u(i, 1) - 2.0 * u(i, 0) + u(i, -1)) / (dx * dx)).collect(),
            3 => (0..m)
                .map(|i| (u(i, 2) - 2.0 * u(i, 1) + 2.0 * u(i, -1) - u(i, -2)) / (2.0 * dx * dx * dx))
                .collect(),
            4 => (0..m)
                .map(|i| {
                    (u(i, 2) - 4.0 * u(i, 1) + 6.0 * u(i, 0) - 4.0 * u(i, -1) + u(i, -2))
                        / (dx * dx * dx * dx)
                })
                .collect(),
            other => return Err(Error::DerivativeOrder(other)),
        };
        Ok(self.with_values(out))
    }

    /// √(dx Σ u²).
    pub fn l2(&self) -> f64 {
        libm::sqrt(self.dx() * self.values.iter().map(|v| v * v).sum::<f64>())
    }

    /// `(l2, dx_l2, h1)`: ‖u‖₂, ‖δ⁺u‖₂ and √(‖u‖₂² + ‖δ⁺u‖₂²).
    pub fn norms(&self) -> (f64, f64, f64) {
        let l2 = self.l2();
        let dx_l2 = libm::sqrt(2.0 * self.gradient_energy());
        (l2, dx_l2, libm::sqrt(l2 * l2 + dx_l2 * dx_l2))
    }

    /// ½‖δ⁺u‖₂² with the forward difference δ⁺u_i = (u_{i+1} - u_i)/dx.
    ///
    /// This is the gradient energy the conservative thin-film stencil
    /// dissipates exactly.
    pub fn gradient_energy(&self) -> f64 {
        let m = self.values.len();
        let dx = self.dx();
        let sum: f64 = (0..m)
            .map(|i| {
                let g = (self.values[(i + 1) % m] - self.values[i]) / dx;
                g * g
            })
            .sum();
        0.5 * dx * sum
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Fraction of nodes with u > r.
    pub fn positivity_measure(&self, r: f64) -> f64 {
        self.values.iter().filter(|&&v| v > r).count() as f64 / self.values.len() as f64
    }

    pub fn diagnostics(&self, t: f64) -> DiagnosticsRecord {
        let (l2, dx_l2, h1) = self.norms();
        DiagnosticsRecord {
            t,
            mass: self.mass(),
            l2,
            h1,
            dx_l2,
            min_value: self.min_value(),
            energy_residual: None,
            positivity_measure: self.positivity_measure(0.0),
        }
    }

    /// Linear interpolation (1-s)·self + s·other on the same grid.
    pub fn lerp(&self, other: &Field, s: f64) -> Field {
        self.with_values(
            self.values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + s * (b - a))
                .collect(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::PI;

    fn sine(m: usize, l: f64) -> Field {
        Field::from_fn(m, l, |x| libm::sin(2.0 * PI * x / l)).unwrap()
    }

    #[test]
    fn grid_validation() {
        assert!(Field::new(alloc::vec![0.0; 6], 1.0).is_err());
        assert!(Field::new(alloc::vec![0.0; 9], 1.0).is_err());
        assert!(Field::new(alloc::vec![0.0; 8], 0.0).is_err());
        let mut v = alloc::vec![0.0; 8];
        v[3] = f64::NAN;
        assert_eq!(Field::new(v, 1.0), Err(Error::NonFinite { index: 3, t: 0.0 }));
    }

    #[test]
    fn mass_examples() {
        assert!((Field::constant(16, 2.0, 0.5).unwrap().mass() - 1.0).abs() < 1e-15);
        assert_eq!(Field::constant(16, 2.0, 0.0).unwrap().mass(), 0.0);
        let f = Field::from_fn(64, 1.0, |x| libm::sin(2.0 * PI * x) + 1.0).unwrap();
        assert!((f.mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_has_zero_derivatives() {
        let f = Field::constant(32, 1.3, 2.5).unwrap();
        for order in 1..=4 {
            assert!(f.diff(order).unwrap().values().iter().all(|&v| v == 0.0));
        }
        assert!(f.diff(5).is_err());
    }

    #[test]
    fn second_derivative_of_sine() {
        let l = 1.0;
        let f = sine(256, l);
        let d2 = f.diff(2).unwrap();
        let k2 = (2.0 * PI / l) * (2.0 * PI / l);
        for (i, &v) in d2.values().iter().enumerate() {
            let exact = -k2 * libm::sin(2.0 * PI * f.x(i) / l);
            assert!((v - exact).abs() <= 1e-3 * k2, "node {i}: {v} vs {exact}");
        }
    }

    #[test]
    fn norms_examples() {
        let f = Field::constant(16, 2.0, 3.0).unwrap();
        let (l2, dx_l2, h1) = f.norms();
        assert!((l2 - 3.0 * libm::sqrt(2.0)).abs() < 1e-14);
        assert_eq!(dx_l2, 0.0);
        assert_eq!(h1, l2);
        assert_eq!(Field::constant(16, 2.0, 0.0).unwrap().norms(), (0.0, 0.0, 0.0));

        let (l2, dx_l2, _) = sine(512, 1.0).norms();
        assert!((l2 - libm::sqrt(0.5)).abs() < 1e-3);
        assert!((dx_l2 - 2.0 * PI * libm::sqrt(0.5)).abs() < 1e-3 * 2.0 * PI);
    }

    #[test]
    fn min_and_positivity() {
        let f = Field::constant(8, 1.0, 1.0).unwrap();
        assert_eq!(f.min_value(), 1.0);
        assert_eq!(f.positivity_measure(0.0), 1.0);
        let mut v = alloc::vec![1.0; 8];
        v[5] = -0.1;
        assert_eq!(Field::new(v, 1.0).unwrap().min_value(), -0.1);
        let step = Field::from_fn(16, 1.0, |x| if x < 0.5 { 1.0 } else { -1.0 }).unwrap();
        assert_eq!(step.positivity_measure(0.0), 0.5);
    }

    #[test]
    fn composed_first_derivative_converges_at_second_order() {
        // max |D₁D₁u − D₂u| on a smooth field, under refinement.
        let err = |m: usize| {
            let f = Field::from_fn(m, 1.0, |x| libm::exp(libm::sin(2.0 * PI * x))).unwrap();
            let a = f.diff(1).unwrap().diff(1).unwrap();
            let b = f.diff(2).unwrap();
            a.values().iter().zip(b.values()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
        };
        let slope = libm::log2(err(64) / err(128));
        assert!((slope - 2.0).abs() < 0.1, "slope {slope}");
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn field() -> impl Strategy<Value = Field> {
            (4usize..32, 0.5f64..4.0).prop_flat_map(|(half, l)| {
                proptest::collection::vec(-10.0f64..10.0, 2 * half)
                    .prop_map(move |v| Field::new(v, l).unwrap())
            })
        }

        proptest! {
            #[test]
            fn first_difference_telescopes(f in field()) {
                let d = f.diff(1).unwrap();
                prop_assert!((d.dx() * d.values().iter().sum::<f64>()).abs() <= 1e-12);
            }

            #[test]
            fn norm_identity(f in field()) {
                let (l2, dx_l2, h1) = f.norms();
                prop_assert!(l2 >= 0.0 && dx_l2 >= 0.0 && h1 >= 0.0);
                prop_assert!((h1 * h1 - (l2 * l2 + dx_l2 * dx_l2)).abs() <= 1e-12 * (h1 * h1).max(1.0));
            }
        }
    }
}
