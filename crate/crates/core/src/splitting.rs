//! Trotter–Kato alternation of the deterministic (D) and stochastic (S)
//! sub-dynamics.
//!
//! [0, T) is cut into N+1 intervals of length δ = T/(N+1). On interval j the
//! deterministic flow runs over [(j-1)δ, jδ] from the previous handoff state,
//! its endpoint is copied verbatim into the stochastic flow over the same
//! interval, and the stochastic endpoint starts interval j+1.
//!
//! The concatenated path u_N replays each phase at double speed:
//! u_N(t) = v_j(2t - (j-1)δ) on [(j-1)δ, (j-½)δ) and w_j(2t - jδ) on
//! [(j-½)δ, jδ).

use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::det::{det_evolve_observed, DetParams};
use crate::error::{Error, Result};
use crate::field::{DiagnosticsRecord, Field};
use crate::noise::IncrementSource;
use crate::stoch::{stoch_evolve_observed, StochParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Phase {
    Deterministic,
    Stochastic,
}

impl Phase {
    pub fn as_str(&self) -> &'static str {
        match self {
            Phase::Deterministic => "det",
            Phase::Stochastic => "stoch",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSchedule {
    pub t_end: f64,
    pub n: usize,
    pub delta: f64,
}

impl SplitSchedule {
    pub fn new(t_end: f64, n: usize) -> Result<Self> {
        if !(t_end.is_finite() && t_end > 0.0) {
            return Err(Error::param("T", "horizon must be positive"));
        }
        Ok(SplitSchedule { t_end, n, delta: t_end / (n + 1) as f64 })
    }

    pub fn interval_count(&self) -> usize {
        self.n + 1
    }

    /// [(j-1)δ, jδ) for j = 1..=N+1. The last interval ends exactly at T.
    pub fn interval(&self, j: usize) -> (f64, f64) {
        let start = (j - 1) as f64 * self.delta;
        let end = if j == self.n + 1 { self.t_end } else { j as f64 * self.delta };
        (start, end)
    }

    pub fn intervals(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        (1..=self.interval_count()).map(move |j| self.interval(j))
    }
}

/// Receives every diagnostics record of a split run, in causal order.
pub trait SplitObserver {
    /// `step` is 0 for the phase's initial state.
    fn record(&mut self, interval: usize, phase: Phase, step: usize, rec: &DiagnosticsRecord, state: &Field);
}

impl<F> SplitObserver for F
where
    F: FnMut(usize, Phase, usize, &DiagnosticsRecord, &Field),
{
    fn record(&mut self, interval: usize, phase: Phase, step: usize, rec: &DiagnosticsRecord, state: &Field) {
        self(interval, phase, step, rec, state)
    }
}

fn annotate(interval: usize, phase: Phase) -> impl FnOnce(Error) -> Error {
    move |e| Error::Interval { interval, phase, source: Box::new(e) }
}

/// Run the split scheme, streaming records to `obs`. `det = None` makes the
/// deterministic phase the identity.
pub fn run_split_observed<S: IncrementSource, O: SplitObserver>(
    u0: &Field,
    schedule: &SplitSchedule,
    det: Option<&DetParams>,
    stoch: &StochParams,
    noise: &mut S,
    obs: &mut O,
) -> Result<Field> {
    let mut state = u0.clone();
    for j in 1..=schedule.interval_count() {
        let (t0, t1) = schedule.interval(j);
        let v_end = match det {
            Some(p) => {
                let (end, _, _) = det_evolve_observed(&state, t0, t1, p, |step, rec, u| {
                    obs.record(j, Phase::Deterministic, step, rec, u)
                })
                .map_err(annotate(j, Phase::Deterministic))?;
                end
            }
            None => {
                let mut rec = state.diagnostics(t0);
                rec.energy_residual = Some(0.0);
                obs.record(j, Phase::Deterministic, 0, &rec, &state);
                state
            }
        };
        let (w_end, _) = stoch_evolve_observed(&v_end, t0, t1, stoch, noise, |step, rec, w| {
            obs.record(j, Phase::Stochastic, step, rec, w)
        })
        .map_err(annotate(j, Phase::Stochastic))?;
        state = w_end;
    }
    Ok(state)
}

/// Stored snapshots of one phase on one interval.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub interval: usize,
    pub phase: Phase,
    pub t_start: f64,
    pub t_end: f64,
    pub times: Vec<f64>,
    pub states: Vec<Field>,
    pub diagnostics: Vec<DiagnosticsRecord>,
}

impl Segment {
    pub fn start(&self) -> &Field {
        &self.states[0]
    }

    pub fn end(&self) -> &Field {
        self.states.last().expect("segments hold at least their initial state")
    }

    /// State at time `s` in [t_start, t_end], linearly interpolated between
    /// stored snapshots.
    pub fn at(&self, s: f64) -> Field {
        let times = &self.times;
        if s <= times[0] {
            return self.states[0].clone();
        }
        if s >= *times.last().unwrap() {
            return self.end().clone();
        }
        let hi = times.partition_point(|&t| t <= s);
        let lo = hi - 1;
        let frac = (s - times[lo]) / (times[hi] - times[lo]);
        if frac == 0.0 {
            return self.states[lo].clone();
        }
        self.states[lo].lerp(&self.states[hi], frac)
    }
}

/// Raw (v, w) segments of a split run.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitTrajectory {
    pub schedule: SplitSchedule,
    pub v_segments: Vec<Segment>,
    pub w_segments: Vec<Segment>,
    pub warnings: Vec<String>,
}

struct Recorder {
    stride: usize,
    segments: Vec<Segment>,
    last: Option<(f64, Field)>,
}

impl Recorder {
    fn flush_last(&mut self) {
        if let (Some((t, state)), Some(seg)) = (self.last.take(), self.segments.last_mut()) {
            if seg.times.last() != Some(&t) {
                seg.times.push(t);
                seg.states.push(state);
            }
        }
    }
}

impl SplitObserver for Recorder {
    fn record(&mut self, interval: usize, phase: Phase, step: usize, rec: &DiagnosticsRecord, state: &Field) {
        if step == 0 {
            self.flush_last();
            self.segments.push(Segment {
                interval,
                phase,
                t_start: rec.t,
                t_end: rec.t,
                times: vec![rec.t],
                states: vec![state.clone()],
                diagnostics: vec![*rec],
            });
            return;
        }
        let seg = self.segments.last_mut().expect("phase starts with step 0");
        seg.t_end = rec.t;
        seg.diagnostics.push(*rec);
        if step % self.stride == 0 {
            seg.times.push(rec.t);
            seg.states.push(state.clone());
            self.last = None;
        } else {
            self.last = Some((rec.t, state.clone()));
        }
    }
}

/// Run the split scheme and keep every `stride`-th state of each phase (the
/// phase endpoints are always kept).
pub fn run_split<S: IncrementSource>(
    u0: &Field,
    schedule: &SplitSchedule,
    det: Option<&DetParams>,
    stoch: &StochParams,
    noise: &mut S,
    stride: usize,
) -> Result<SplitTrajectory> {
    let mut warnings = vec![];
    let min0 = u0.min_value();
    if min0 < 0.0 {
        warnings.push(alloc::format!("initial condition is negative somewhere (min {min0:e})"));
    }
    let mut rec = Recorder { stride: stride.max(1), segments: vec![], last: None };
    run_split_observed(u0, schedule, det, stoch, noise, &mut rec)?;
    rec.flush_last();
    let (v_segments, w_segments) = rec.segments.into_iter().partition(|s| s.phase == Phase::Deterministic);
    Ok(SplitTrajectory { schedule: *schedule, v_segments, w_segments, warnings })
}

impl SplitTrajectory {
    pub fn final_state(&self) -> &Field {
        self.w_segments.last().expect("at least one interval").end()
    }

    /// The concatenated path u_N.
    pub fn concatenate(&self) -> ConcatenatedPath<'_> {
        ConcatenatedPath { traj: self }
    }

    /// Handoffs are exact copies: v_j end = w_j start, w_j end = v_{j+1} start.
    pub fn handoffs_exact(&self) -> bool {
        let vw = self.v_segments.iter().zip(&self.w_segments).all(|(v, w)| v.end() == w.start());
        let wv = self.w_segments.iter().zip(self.v_segments.iter().skip(1)).all(|(w, v)| w.end() == v.start());
        vw && wv
    }
}

/// Time-indexed view of a [`SplitTrajectory`].
pub struct ConcatenatedPath<'a> {
    traj: &'a SplitTrajectory,
}

impl ConcatenatedPath<'_> {
    /// The interval j and phase that t falls in, and the time argument of
    /// that phase's own path.
    pub fn locate(&self, t: f64) -> Result<(usize, Phase, f64)> {
        let s = &self.traj.schedule;
        if !(t >= 0.0 && t < s.t_end) {
            return Err(Error::TimeOutOfRange { t, horizon: s.t_end });
        }
        let count = s.interval_count();
        let mut j = ((libm::floor(t / s.delta) as usize) + 1).min(count);
        while j > 1 && t < (j - 1) as f64 * s.delta {
            j -= 1;
        }
        while j < count && t >= j as f64 * s.delta {
            j += 1;
        }
        if t < (j as f64 - 0.5) * s.delta {
            Ok((j, Phase::Deterministic, 2.0 * t - (j - 1) as f64 * s.delta))
        } else {
            Ok((j, Phase::Stochastic, 2.0 * t - j as f64 * s.delta))
        }
    }

    pub fn at(&self, t: f64) -> Result<Field> {
        let (j, phase, arg) = self.locate(t)?;
        let seg = match phase {
            Phase::Deterministic => &self.traj.v_segments[j - 1],
            Phase::Stochastic => &self.traj.w_segments[j - 1],
        };
        Ok(seg.at(arg))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{NoiseSpectrum, SpectrumFamily};
    use crate::det::det_evolve;
    use crate::noise::NoiseSource;
    use crate::stoch::LipschitzCoefficient;
    use core::f64::consts::PI;

    fn quiet() -> StochParams {
        StochParams::new(0.0, 1e-3, NoiseSpectrum::silent(1).unwrap(), LipschitzCoefficient::Linear(1.0))
    }

    fn bumpy() -> Field {
        Field::from_fn(32, 1.0, |x| 0.5 + 0.2 * libm::cos(2.0 * PI * x)).unwrap()
    }

    #[test]
    fn schedule_examples() {
        let s = SplitSchedule::new(1.0, 3).unwrap();
        assert_eq!(s.delta, 0.25);
        assert_eq!(s.intervals().count(), 4);
        let s = SplitSchedule::new(1.0, 0).unwrap();
        assert_eq!((s.delta, s.interval_count()), (1.0, 1));
        let s = SplitSchedule::new(2.0, 7).unwrap();
        assert_eq!((s.delta, s.interval_count()), (0.25, 8));
        assert!(SplitSchedule::new(0.0, 1).is_err());
        assert!(SplitSchedule::new(-1.0, 1).is_err());
    }

    #[test]
    fn intervals_tile_the_horizon() {
        let s = SplitSchedule::new(0.7, 6).unwrap();
        let iv: Vec<_> = s.intervals().collect();
        assert_eq!(iv[0].0, 0.0);
        assert_eq!(iv.last().unwrap().1, 0.7);
        for w in iv.windows(2) {
            assert_eq!(w[0].1, w[1].0);
        }
        assert!((s.delta * 7.0 - 0.7).abs() < 1e-15);
    }

    #[test]
    fn silent_stochastic_phase_reduces_to_deterministic_flow() {
        let u0 = bumpy();
        let det = DetParams { r: Some(2.0), dt: 1e-3, ..Default::default() };
        let schedule = SplitSchedule::new(0.02, 3).unwrap();
        let mut lease = NoiseSource::new(0).lease(0);
        let traj = run_split(&u0, &schedule, Some(&det), &quiet(), &mut lease, 1).unwrap();
        let direct = det_evolve(&u0, 0.0, 0.02, &det).unwrap();
        let diff = traj
            .final_state()
            .values()
            .iter()
            .zip(direct.final_state.values())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(diff < 1e-10, "{diff}");
        assert!(traj.handoffs_exact());
    }

    #[test]
    fn transport_only_conserves_mass() {
        let u0 = bumpy();
        let det = DetParams { r: None, dt: 1e-3, ..Default::default() };
        let schedule = SplitSchedule::new(0.01, 2).unwrap();
        let mut lease = NoiseSource::new(0).lease(0);
        let traj = run_split(&u0, &schedule, Some(&det), &quiet(), &mut lease, 1).unwrap();
        assert!((traj.final_state().mass() - u0.mass()).abs() < 1e-10);
    }

    #[test]
    fn handoffs_exact_with_noise() {
        let u0 = bumpy();
        let det = DetParams { r: Some(1.0), dt: 1e-3, ..Default::default() };
        let spectrum = NoiseSpectrum::new(
            &SpectrumFamily::PowerLaw { a: 0.2, s: 1.0 },
            &SpectrumFamily::PowerLaw { a: 0.2, s: 1.0 },
            2,
        )
        .unwrap();
        let stoch = StochParams::new(1e-3, 1e-3, spectrum, LipschitzCoefficient::Saturating(1.0));
        let schedule = SplitSchedule::new(0.03, 2).unwrap();
        let mut lease = NoiseSource::new(11).lease(4);
        let traj = run_split(&u0, &schedule, Some(&det), &stoch, &mut lease, 3).unwrap();
        assert_eq!(traj.v_segments.len(), 3);
        assert_eq!(traj.w_segments.len(), 3);
        assert!(traj.handoffs_exact());
        assert!(traj.warnings.is_empty());
    }

    #[test]
    fn negative_initial_data_warns() {
        let u0 = Field::from_fn(16, 1.0, |x| libm::cos(2.0 * PI * x)).unwrap();
        let mut lease = NoiseSource::new(0).lease(0);
        let schedule = SplitSchedule::new(0.01, 0).unwrap();
        let traj = run_split(&u0, &schedule, None, &quiet(), &mut lease, 1).unwrap();
        assert_eq!(traj.warnings.len(), 1);
    }

    #[test]
    fn concatenation_endpoints() {
        let u0 = bumpy();
        let det = DetParams { r: Some(1.0), dt: 1e-3, ..Default::default() };
        let spectrum = NoiseSpectrum::new(&SpectrumFamily::Zero, &SpectrumFamily::Explicit(vec![(0, 0.5)]), 0).unwrap();
        let stoch = StochParams::new(0.0, 1e-3, spectrum, LipschitzCoefficient::Linear(1.0));
        let schedule = SplitSchedule::new(0.04, 1).unwrap();
        let delta = schedule.delta;
        let mut lease = NoiseSource::new(2).lease(0);
        let traj = run_split(&u0, &schedule, Some(&det), &stoch, &mut lease, 1).unwrap();
        let path = traj.concatenate();
        for j in 1..=2usize {
            let v = &traj.v_segments[j - 1];
            let w = &traj.w_segments[j - 1];
            let start = (j - 1) as f64 * delta;
            // t = (j-1)δ → v_j at its start.
            assert_eq!(&path.at(start).unwrap(), v.start());
            // t = (j-½)δ → w_j at its start.
            let mid = (j as f64 - 0.5) * delta;
            assert_eq!(path.locate(mid).unwrap().1, Phase::Stochastic);
            assert_eq!(&path.at(mid).unwrap(), w.start());
            // Left limit at (j-½)δ approaches v_j's end.
            let before = path.at(mid - 1e-12).unwrap();
            let gap = before.values().iter().zip(v.end().values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(gap < 1e-6);
        }
        assert!(path.at(0.04).is_err());
        assert!(path.at(-0.01).is_err());
    }
}
