//! Numerical core of a split-step simulator for the stochastic thin-film
//! equation with nonlinear absorption and colored transport/multiplicative
//! noise.
//!
//! The crate is `no_std` (it needs `alloc`). Everything that touches files,
//! threads or the command line lives in the companion `thinfilm` crate.
//!
//! Layout:
//! - [`basis`]: the H²-orthonormal trigonometric family and the noise spectrum.
//! - [`field`]: periodic grid functions, finite differences, norms.
//! - [`det`]: the regularized deterministic thin-film sub-dynamics.
//! - [`noise`]: counter-addressed Wiener increments.
//! - [`stoch`]: Euler–Maruyama for the stochastic sub-dynamics (Itô form).
//! - [`splitting`]: the deterministic/stochastic alternation and the
//!   concatenated path.
//! - [`montecarlo`]: per-path summaries, ensemble statistics, moment checks.
#![no_std]

extern crate alloc;

mod banded;
pub mod basis;
pub mod det;
mod error;
pub mod field;
pub mod montecarlo;
pub mod noise;
pub mod splitting;
pub mod stoch;

pub use basis::{NoiseSpectrum, SpectralBasis, SpectrumFamily};
pub use det::{DetParams, DetRun};
pub use error::{Error, Result};
pub use field::{DiagnosticsRecord, Field};
pub use montecarlo::{EnsembleStats, MassMomentReport, MeanSe, PathSummary};
pub use noise::{CoupledLease, IncrementSource, NoiseSource, RngLease, WienerIncrements};
pub use splitting::{Phase, SplitObserver, SplitSchedule, SplitTrajectory};
pub use stoch::{LipschitzCoefficient, StochParams};
