use alloc::boxed::Box;
use alloc::string::String;

use crate::splitting::Phase;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("mode index {k} outside cutoff {cutoff}")]
    ModeOutOfRange { k: i64, cutoff: usize },

    #[error("derivative order {0} not in 1..=4")]
    DerivativeOrder(u8),

    #[error("grid of {points} points on length {length} is not a valid field: {reason}")]
    InvalidGrid { points: usize, length: f64, reason: &'static str },

    #[error("non-finite value at grid index {index} (t = {t})")]
    NonFinite { index: usize, t: f64 },

    #[error("linear solve failed: {0}")]
    SolveFailed(&'static str),

    #[error("step at t = {t} still failing after {retries} halvings of dt")]
    RetryExhausted { t: f64, retries: u32, source: Box<Error> },

    #[error("interval {interval}, {phase} phase: {source}")]
    Interval { interval: usize, phase: Phase, source: Box<Error> },

    #[error("time {t} outside [0, {horizon})")]
    TimeOutOfRange { t: f64, horizon: f64 },

    #[error("noise increments carry {got} modes, spectrum has {expected}")]
    CutoffMismatch { got: usize, expected: usize },

    #[error("need at least {needed} samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("moment order {0} was not tracked by the ensemble")]
    UntrackedMoment(f64),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name, reason: reason.into() }
    }
}
