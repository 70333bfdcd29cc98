//! Latency measurement harness.
//!
//! Tests run against a simulated clock: callables advance it by a
//! deterministic function of their trace cost, so samples are hermetic and
//! reproducible. A wall-clock implementation and a file-backed energy meter
//! live in the companion crate; anything implementing [`Clock`] or
//! [`Meter`] plugs in here.

use alloc::vec::Vec;
use core::cell::Cell;
use core::fmt;

use rand::Rng;

use crate::SpongeRng;

/// Monotone time source in seconds.
pub trait Clock {
    fn now(&self) -> f64;
}

/// Deterministic clock advanced explicitly by the code under measurement.
#[derive(Debug, Default)]
pub struct SimClock {
    t: Cell<f64>,
}

impl SimClock {
    pub fn new() -> Self {
        SimClock { t: Cell::new(0.0) }
    }

    pub fn advance(&self, dt: f64) {
        self.t.set(self.t.get() + dt);
    }
}

impl Clock for SimClock {
    fn now(&self) -> f64 {
        self.t.get()
    }
}

/// One timed execution.
#[derive(Debug, Clone, PartialEq)]
pub struct LatencySample {
    pub duration_s: f64,
    /// Repetition index of the measured (post-warm-up) run.
    pub input_id: u64,
    /// Clock reading when the run started.
    pub timestamp_s: f64,
    /// False when the callable reported an error; the duration still covers
    /// whatever ran.
    pub ok: bool,
}

/// Run `callable` `warmup_count + repetitions` times under an exclusive
/// session, discard the warm-up runs, and return one sample per measured
/// repetition. Callable failures are recorded per-sample, never fatal.
pub fn time_inference<C, F, E>(
    clock: &C,
    mut callable: F,
    warmup_count: usize,
    repetitions: usize,
) -> Result<Vec<LatencySample>, MeasureError>
where
    C: Clock,
    F: FnMut() -> Result<(), E>,
{
    if repetitions == 0 {
        return Err(MeasureError::ZeroRepetitions);
    }
    for _ in 0..warmup_count {
        let _ = callable();
    }
    let mut samples = Vec::with_capacity(repetitions);
    for rep in 0..repetitions {
        let start = clock.now();
        let ok = callable().is_ok();
        let end = clock.now();
        samples.push(LatencySample {
            duration_s: end - start,
            input_id: rep as u64,
            timestamp_s: start,
            ok,
        });
    }
    Ok(samples)
}

/// Deterministic latency model over simulated energy: latency = base +
/// seconds_per_pj * energy + uniform jitter in [0, jitter_s).
#[derive(Debug, Clone, PartialEq)]
pub struct CostLatencyModel {
    pub base_s: f64,
    pub seconds_per_pj: f64,
    pub jitter_s: f64,
}

impl CostLatencyModel {
    pub fn noiseless(base_s: f64, seconds_per_pj: f64) -> Self {
        CostLatencyModel {
            base_s,
            seconds_per_pj,
            jitter_s: 0.0,
        }
    }

    pub fn latency_for(&self, energy_pj: f64, rng: &mut SpongeRng) -> f64 {
        let jitter = if self.jitter_s > 0.0 {
            rng.gen_range(0.0..self.jitter_s)
        } else {
            0.0
        };
        self.base_s + self.seconds_per_pj * energy_pj + jitter
    }
}

/// External cumulative energy counter. Real backings (e.g. an OS counter
/// file) live outside this crate; absence degrades measurement to
/// latency-only mode.
pub trait Meter {
    /// Cumulative energy in microjoules. Must be non-decreasing between
    /// reads within one session.
    fn read_microjoules(&mut self) -> Result<u64, MeterError>;
    fn name(&self) -> &str;
}

/// Wraps a meter and enforces counter monotonicity across a session.
pub struct MeterSession<M: Meter> {
    meter: M,
    last: Option<u64>,
}

impl<M: Meter> MeterSession<M> {
    pub fn new(meter: M) -> Self {
        MeterSession { meter, last: None }
    }

    /// Cumulative reading, flagging any counter regression.
    pub fn read_microjoules(&mut self) -> Result<u64, MeterError> {
        let value = self.meter.read_microjoules()?;
        if let Some(last) = self.last {
            if value < last {
                return Err(MeterError::CounterRegressed {
                    previous: last,
                    current: value,
                });
            }
        }
        self.last = Some(value);
        Ok(value)
    }

    /// Joules consumed since the previous read.
    pub fn delta_joules(&mut self) -> Result<f64, MeterError> {
        let prev = self.last;
        let now = self.read_microjoules()?;
        Ok(prev.map(|p| (now - p) as f64 * 1e-6).unwrap_or(0.0))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MeasureError {
    ZeroRepetitions,
}

impl fmt::Display for MeasureError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MeasureError::ZeroRepetitions => write!(f, "repetitions must be at least 1"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for MeasureError {}

#[derive(Debug, Clone, PartialEq)]
pub enum MeterError {
    CounterRegressed { previous: u64, current: u64 },
    Unavailable,
    Parse,
}

impl fmt::Display for MeterError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MeterError::CounterRegressed { previous, current } => {
                write!(f, "energy counter regressed from {previous} to {current}")
            }
            MeterError::Unavailable => write!(f, "meter unavailable"),
            MeterError::Parse => write!(f, "meter counter unparsable"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for MeterError {}

#[cfg(test)]
mod tests {
    use super::*;
    use core::convert::Infallible;

    #[test]
    fn fixed_simulated_duration_yields_equal_samples() {
        let clock = SimClock::new();
        let d = 0.125;
        let samples = time_inference(
            &clock,
            || {
                clock.advance(d);
                Ok::<(), Infallible>(())
            },
            3,
            5,
        )
        .unwrap();
        assert_eq!(samples.len(), 5);
        for s in &samples {
            assert_eq!(s.duration_s, d);
            assert!(s.ok);
        }
    }

    #[test]
    fn warmup_discards_exactly_n_runs() {
        let clock = SimClock::new();
        let mut calls = 0usize;
        let samples = time_inference(
            &clock,
            || {
                calls += 1;
                clock.advance(1.0);
                Ok::<(), Infallible>(())
            },
            7,
            4,
        )
        .unwrap();
        assert_eq!(calls, 11);
        assert_eq!(samples.len(), 4);
        // First measured run starts after the 7 warm-up seconds.
        assert_eq!(samples[0].timestamp_s, 7.0);
    }

    #[test]
    fn latency_ordering_follows_cost_ordering() {
        let clock = SimClock::new();
        let model = CostLatencyModel::noiseless(1e-3, 1e-9);
        let costs = [10.0e6, 50.0e6, 20.0e6, 90.0e6];
        let mut rng = crate::rng_from_seed(0);
        let mut durations = Vec::new();
        for c in costs {
            let samples = time_inference(
                &clock,
                || {
                    clock.advance(model.latency_for(c, &mut rng));
                    Ok::<(), Infallible>(())
                },
                0,
                1,
            )
            .unwrap();
            durations.push(samples[0].duration_s);
        }
        for (i, a) in costs.iter().enumerate() {
            for (j, b) in costs.iter().enumerate() {
                if a < b {
                    assert!(durations[i] < durations[j]);
                }
            }
        }
    }

    #[test]
    fn failures_are_recorded_per_sample() {
        let clock = SimClock::new();
        let mut n = 0;
        let samples = time_inference(
            &clock,
            || {
                n += 1;
                clock.advance(0.5);
                if n % 2 == 0 {
                    Err("boom")
                } else {
                    Ok(())
                }
            },
            0,
            4,
        )
        .unwrap();
        assert_eq!(samples.iter().filter(|s| !s.ok).count(), 2);
    }

    #[test]
    fn zero_repetitions_rejected() {
        let clock = SimClock::new();
        let result = time_inference(&clock, || Ok::<(), Infallible>(()), 0, 0);
        assert_eq!(result, Err(MeasureError::ZeroRepetitions));
    }

    struct FakeMeter {
        readings: alloc::vec::Vec<u64>,
        cursor: usize,
    }

    impl Meter for FakeMeter {
        fn read_microjoules(&mut self) -> Result<u64, MeterError> {
            let v = self.readings[self.cursor.min(self.readings.len() - 1)];
            self.cursor += 1;
            Ok(v)
        }

        fn name(&self) -> &str {
            "fake"
        }
    }

    #[test]
    fn meter_session_flags_regressions() {
        let mut session = MeterSession::new(FakeMeter {
            readings: alloc::vec![100, 250, 200],
            cursor: 0,
        });
        assert_eq!(session.read_microjoules().unwrap(), 100);
        assert!((session.delta_joules().unwrap() - 150e-6).abs() < 1e-15);
        assert!(matches!(
            session.read_microjoules(),
            Err(MeterError::CounterRegressed { .. })
        ));
    }
}
