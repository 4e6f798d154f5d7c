//! Monte-Carlo timestamp streams for the idler (reference) and signal (sample) arms.
//!
//! Pairs are emitted by a stationary Poisson process. Each pair is detected
//! in the idler arm with probability `eta1` and, independently, in the signal
//! arm with probability `eta2 · T`; every detection gets independent Gaussian
//! jitter and dark counts are added on top.
//!
//! Sampling shortcuts, all exact in distribution:
//! - independent thinning splits the pairs into independent "both",
//!   "idler only" and "signal only" Poisson processes;
//! - iid jitter maps a stationary Poisson process onto one with the same
//!   rate, so unpaired detections never need their jitter drawn;
//! - a superposition of Poisson processes is Poisson, so unpaired detections
//!   and dark counts form one background process per channel.
//!
//! Only the detections of "both" pairs carry explicit jitter draws.

use rand::{Rng, SeedableRng};
use rand_distr::{Exp1, StandardNormal};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};

pub const PS_PER_NS: f64 = 1e3;
pub const PS_PER_S: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Idler = 1,
    Signal = 2,
}

impl Channel {
    pub fn number(self) -> u8 {
        self as u8
    }

    pub fn from_number(n: u8) -> Option<Self> {
        match n {
            1 => Some(Channel::Idler),
            2 => Some(Channel::Signal),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    /// Pairs emitted per second.
    pub pair_rate: f64,
    /// Idler detection probability per pair.
    pub eta1: f64,
    /// Signal detection probability per pair, before the sample.
    pub eta2: f64,
    /// Dark counts per second, idler detector.
    pub dark1: f64,
    /// Dark counts per second, signal detector.
    pub dark2: f64,
    /// Per-detector Gaussian timing jitter.
    pub jitter_sigma_ps: f64,
    pub dead_time_ns: f64,
    pub gate_s: f64,
    pub n_gates: usize,
    pub seed: u64,
    /// Extra optical delay of the signal arm.
    #[serde(default)]
    pub delay_ps: f64,
}

impl SourceConfig {
    /// Rates of the order of a 405 nm-pumped BBO source with Si SPADs:
    /// ~1.24 Mcps idler singles and ~107 Kcps coincidences.
    pub fn table_scale() -> Self {
        Self {
            pair_rate: 4.43e6,
            eta1: 0.28,
            eta2: 0.0864,
            dark1: 351.0,
            dark2: 483.0,
            jitter_sigma_ps: 600.0,
            dead_time_ns: 50.0,
            gate_s: 0.3,
            n_gates: 100,
            seed: 0,
            delay_ps: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let nonneg = [
            ("pair_rate", self.pair_rate),
            ("dark1", self.dark1),
            ("dark2", self.dark2),
            ("jitter_sigma_ps", self.jitter_sigma_ps),
            ("dead_time_ns", self.dead_time_ns),
        ];
        for (name, v) in nonneg {
            ensure(v >= 0.0 && v.is_finite(), || {
                format!("{name} = {v} must be finite and non-negative")
            })?;
        }
        for (name, v) in [("eta1", self.eta1), ("eta2", self.eta2)] {
            ensure((0.0..=1.0).contains(&v), || {
                format!("{name} = {v} must lie in [0, 1]")
            })?;
        }
        ensure(self.gate_s > 0.0 && self.gate_s.is_finite(), || {
            format!("gate_s = {} must be positive", self.gate_s)
        })?;
        ensure(self.n_gates >= 1, || "n_gates must be at least 1".into())?;
        ensure(self.delay_ps.is_finite(), || "delay_ps must be finite".into())
    }

    pub fn gate_ps(&self) -> i64 {
        (self.gate_s * PS_PER_S).round() as i64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleModel {
    pub true_transmittance: f64,
}

impl SampleModel {
    pub fn new(true_transmittance: f64) -> Result<Self> {
        ensure((0.0..=1.0).contains(&true_transmittance), || {
            format!("transmittance {true_transmittance} must lie in [0, 1]")
        })?;
        Ok(Self { true_transmittance })
    }

    pub fn transparent() -> Self {
        Self {
            true_transmittance: 1.0,
        }
    }
}

/// Sorted detection times of one channel within one gate, in ps from the gate start.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimestampStream {
    pub channel: Channel,
    pub gate_index: u64,
    pub gate_ps: i64,
    pub times_ps: Vec<i64>,
}

impl TimestampStream {
    /// Validating constructor.
    pub fn new(channel: Channel, gate_index: u64, gate_ps: i64, times_ps: Vec<i64>) -> Result<Self> {
        let s = Self {
            channel,
            gate_index,
            gate_ps,
            times_ps,
        };
        ensure(s.is_sorted(), || format!("{channel:?} stream is not sorted"))?;
        ensure(s.in_gate(), || format!("{channel:?} stream has events outside the gate"))?;
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.times_ps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times_ps.is_empty()
    }

    pub fn is_sorted(&self) -> bool {
        self.times_ps.is_sorted()
    }

    pub fn in_gate(&self) -> bool {
        self.times_ps.first().map_or(true, |&t| t >= 0)
            && self.times_ps.last().map_or(true, |&t| t < self.gate_ps)
    }

    pub fn gate_s(&self) -> f64 {
        self.gate_ps as f64 / PS_PER_S
    }

    /// Counts per second over the gate.
    pub fn rate_cps(&self) -> f64 {
        self.len() as f64 / self.gate_s()
    }
}

const ROLE_EMISSION: u64 = 0;
const ROLE_IDLER: u64 = 1;
const ROLE_SIGNAL: u64 = 2;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent generator for one (seed, gate, role) triple.
fn stream_rng(seed: u64, gate_index: u64, role: u64) -> Xoshiro256PlusPlus {
    let key = splitmix64(splitmix64(splitmix64(seed) ^ gate_index) ^ role);
    Xoshiro256PlusPlus::seed_from_u64(key)
}

/// Arrival times of a homogeneous Poisson process on `[0, span_ps)`.
fn poisson_arrivals<R: Rng>(rng: &mut R, rate_per_ps: f64, span_ps: f64) -> Vec<f64> {
    if rate_per_ps <= 0.0 {
        return Vec::new();
    }
    let mean_gap = 1.0 / rate_per_ps;
    let mut out = Vec::with_capacity((rate_per_ps * span_ps * 1.01 + 16.0) as usize);
    let mut t = 0.0;
    loop {
        let gap: f64 = rng.sample(Exp1);
        t += gap * mean_gap;
        if t >= span_ps {
            break;
        }
        out.push(t);
    }
    out
}

/// Nearest integer for `x ≥ −0.5`, ties upward; avoids a libm call on targets without SSE4.1.
#[inline]
fn nearest_ps(x: f64) -> i64 {
    (x + 0.5) as i64
}

/// Sorts a list that is already sorted up to a few local swaps, as jittered
/// arrivals are when the jitter is small against the mean gap.
fn settle(v: &mut [i64]) {
    let mut budget = 8 * v.len() + 64;
    for k in 1..v.len() {
        let x = v[k];
        let mut j = k;
        while j > 0 && v[j - 1] > x {
            v[j] = v[j - 1];
            j -= 1;
        }
        v[j] = x;
        budget = budget.saturating_sub(k - j);
        if budget == 0 {
            // jitter comparable to the gaps: insertion would go quadratic
            v.sort_unstable();
            return;
        }
    }
}

/// Appends jittered, in-gate detection times; out-of-gate events are dropped.
fn detect<R: Rng>(
    out: &mut Vec<i64>,
    rng: &mut R,
    arrivals: &[f64],
    offset_ps: f64,
    sigma_ps: f64,
    gate_ps: i64,
) {
    for &t in arrivals {
        let z: f64 = if sigma_ps > 0.0 {
            rng.sample(StandardNormal)
        } else {
            0.0
        };
        let x = t + offset_ps + sigma_ps * z;
        if x < -0.5 {
            continue;
        }
        let d = nearest_ps(x);
        if d < gate_ps {
            out.push(d);
        }
    }
}

/// Detections of one channel in one gate, produced lazily in time order.
///
/// Paired detections are drawn up front; the background process is drawn
/// on demand from the same generator, so collecting gives exactly the
/// stream of [`generate_gate`].
pub struct ChannelEvents {
    /// Sorted, terminated by `EXHAUSTED`.
    paired: Vec<i64>,
    next_paired: usize,
    rng: Xoshiro256PlusPlus,
    mean_gap_ps: f64,
    t: f64,
    span: f64,
    gate_ps: i64,
    next_background: i64,
}

const EXHAUSTED: i64 = i64::MAX;

impl ChannelEvents {
    fn new(rng: Xoshiro256PlusPlus, mut paired: Vec<i64>, background_per_ps: f64, gate_ps: i64) -> Self {
        paired.push(EXHAUSTED);
        let mut ev = Self {
            paired,
            next_paired: 0,
            rng,
            mean_gap_ps: 1.0 / background_per_ps,
            t: 0.0,
            span: gate_ps as f64,
            gate_ps,
            next_background: EXHAUSTED,
        };
        if background_per_ps > 0.0 {
            ev.next_background = ev.draw_background();
        }
        ev
    }

    #[inline]
    fn draw_background(&mut self) -> i64 {
        loop {
            let gap: f64 = self.rng.sample(Exp1);
            self.t += gap * self.mean_gap_ps;
            if self.t >= self.span {
                return EXHAUSTED;
            }
            let d = nearest_ps(self.t);
            if d < self.gate_ps {
                return d;
            }
        }
    }
}

impl Iterator for ChannelEvents {
    type Item = i64;

    #[inline]
    fn next(&mut self) -> Option<i64> {
        let p = self.paired[self.next_paired];
        let b = self.next_background;
        if b < p {
            self.next_background = self.draw_background();
            Some(b)
        } else if p != EXHAUSTED {
            self.next_paired += 1;
            Some(p)
        } else {
            None
        }
    }
}

/// Lazy `(idler, signal)` detections of one gate; see [`generate_gate`].
pub fn gate_events(
    config: &SourceConfig,
    sample: &SampleModel,
    gate_index: u64,
) -> (ChannelEvents, ChannelEvents) {
    let gate_ps = config.gate_ps();
    let per_ps = 1.0 / PS_PER_S;

    let p_idler = config.eta1;
    let p_signal = config.eta2 * sample.true_transmittance;
    let pairs = config.pair_rate;

    let mut emission = stream_rng(config.seed, gate_index, ROLE_EMISSION);
    let both = poisson_arrivals(&mut emission, pairs * per_ps * p_idler * p_signal, gate_ps as f64);

    let channel = |role: u64, background_per_s: f64, offset: f64| {
        let mut rng = stream_rng(config.seed, gate_index, role);
        let mut paired = Vec::with_capacity(both.len());
        detect(&mut paired, &mut rng, &both, offset, config.jitter_sigma_ps, gate_ps);
        settle(&mut paired);
        ChannelEvents::new(rng, paired, background_per_s * per_ps, gate_ps)
    };
    (
        channel(
            ROLE_IDLER,
            pairs * p_idler * (1.0 - p_signal) + config.dark1,
            0.0,
        ),
        channel(
            ROLE_SIGNAL,
            pairs * (1.0 - p_idler) * p_signal + config.dark2,
            config.delay_ps,
        ),
    )
}

/// One acquisition gate: `(idler, signal)` detection streams.
///
/// Fully determined by `(config.seed, gate_index)`; dead time is not applied here.
pub fn generate_gate(
    config: &SourceConfig,
    sample: &SampleModel,
    gate_index: u64,
) -> (TimestampStream, TimestampStream) {
    let gate_ps = config.gate_ps();
    let (idler, signal) = gate_events(config, sample, gate_index);
    let expected = |rate: f64| (rate * config.gate_s * 1.01 + 16.0) as usize;
    let mut i = Vec::with_capacity(expected(config.pair_rate * config.eta1 + config.dark1));
    i.extend(idler);
    let mut s = Vec::with_capacity(expected(config.pair_rate * config.eta2 + config.dark2));
    s.extend(signal);
    (
        TimestampStream {
            channel: Channel::Idler,
            gate_index,
            gate_ps,
            times_ps: i,
        },
        TimestampStream {
            channel: Channel::Signal,
            gate_index,
            gate_ps,
            times_ps: s,
        },
    )
}

/// Non-paralyzable dead time over a time-ordered event iterator.
pub struct DeadTime<I> {
    inner: I,
    dead_ps: i64,
    /// Earliest time the detector is live again.
    live_at: i64,
}

impl<I: Iterator<Item = i64>> DeadTime<I> {
    pub fn new(inner: I, dead_time_ns: f64) -> Self {
        Self {
            inner,
            dead_ps: (dead_time_ns * PS_PER_NS).round() as i64,
            live_at: i64::MIN,
        }
    }
}

impl<I: Iterator<Item = i64>> Iterator for DeadTime<I> {
    type Item = i64;

    #[inline]
    fn next(&mut self) -> Option<i64> {
        loop {
            let t = self.inner.next()?;
            if t >= self.live_at {
                self.live_at = t + self.dead_ps;
                return Some(t);
            }
        }
    }
}

/// Non-paralyzable dead time: an event survives only if it arrives at least
/// `dead_time_ns` after the previous surviving event.
pub fn apply_dead_time(stream: &TimestampStream, dead_time_ns: f64) -> TimestampStream {
    TimestampStream {
        channel: stream.channel,
        gate_index: stream.gate_index,
        gate_ps: stream.gate_ps,
        times_ps: DeadTime::new(stream.times_ps.iter().copied(), dead_time_ns).collect(),
    }
}
