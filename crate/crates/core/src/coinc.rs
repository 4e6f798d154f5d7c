//! Windowed coincidence counting and delay histograms.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::registry::{Named, Registry};
use crate::twinstream::{
    apply_dead_time, gate_events, generate_gate, DeadTime, SampleModel, SourceConfig,
    TimestampStream, PS_PER_NS,
};

/// Per-gate singles and coincidences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoincidenceResult {
    pub gate_index: u64,
    /// Idler detections.
    pub n1: u64,
    /// Signal detections.
    pub n2: u64,
    pub ncc: u64,
    pub gate_s: f64,
    pub tau_cc_ns: f64,
}

/// Coincidence logic between two sorted timestamp lists.
///
/// Two events coincide when `2·|t_s − t_i| ≤ window_ps`, i.e. the total
/// window width is `window_ps` centred on zero delay.
pub trait CoincidenceCounter: Named + Send + Sync {
    fn count(&self, idler: &[i64], signal: &[i64], window_ps: i64) -> u64;

    /// Counts of one simulated gate after detector dead time.
    fn count_gate(
        &self,
        source: &SourceConfig,
        sample: &SampleModel,
        gate_index: u64,
        window_ps: i64,
    ) -> GateCounts {
        let (idler, signal) = generate_gate(source, sample, gate_index);
        let idler = apply_dead_time(&idler, source.dead_time_ns);
        let signal = apply_dead_time(&signal, source.dead_time_ns);
        GateCounts {
            n1: idler.len() as u64,
            n2: signal.len() as u64,
            ncc: self.count(&idler.times_ps, &signal.times_ps, window_ps),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct GateCounts {
    pub n1: u64,
    pub n2: u64,
    pub ncc: u64,
}

/// Greedy one-to-one pairing over two time-ordered iterators, draining both.
pub fn greedy_stream(
    mut idler: impl Iterator<Item = i64>,
    mut signal: impl Iterator<Item = i64>,
    window_ps: i64,
) -> GateCounts {
    let mut c = GateCounts::default();
    let (mut x, mut y) = (idler.next(), signal.next());
    while let (Some(ti), Some(ts)) = (x, y) {
        if 2 * (ts - ti).abs() <= window_ps {
            c.ncc += 1;
            c.n1 += 1;
            c.n2 += 1;
            x = idler.next();
            y = signal.next();
        } else if ts < ti {
            c.n2 += 1;
            y = signal.next();
        } else {
            c.n1 += 1;
            x = idler.next();
        }
    }
    c.n1 += x.is_some() as u64 + idler.count() as u64;
    c.n2 += y.is_some() as u64 + signal.count() as u64;
    c
}

/// One-to-one pairing: sweep both lists, pair the earliest compatible
/// events and consume them.
pub struct GreedyPairing;

impl Named for GreedyPairing {
    fn name(&self) -> &'static str {
        "greedy"
    }
}

impl CoincidenceCounter for GreedyPairing {
    fn count(&self, idler: &[i64], signal: &[i64], window_ps: i64) -> u64 {
        greedy_stream(idler.iter().copied(), signal.iter().copied(), window_ps).ncc
    }

    // streams straight from the generator without materialising the gate
    fn count_gate(
        &self,
        source: &SourceConfig,
        sample: &SampleModel,
        gate_index: u64,
        window_ps: i64,
    ) -> GateCounts {
        let (idler, signal) = gate_events(source, sample, gate_index);
        greedy_stream(
            DeadTime::new(idler, source.dead_time_ns),
            DeadTime::new(signal, source.dead_time_ns),
            window_ps,
        )
    }
}

/// Every (idler, signal) pair inside the window counts; events may be reused.
pub struct AllPairs;

impl Named for AllPairs {
    fn name(&self) -> &'static str {
        "all-pairs"
    }
}

impl CoincidenceCounter for AllPairs {
    fn count(&self, idler: &[i64], signal: &[i64], window_ps: i64) -> u64 {
        let mut start = 0;
        let mut n = 0u64;
        for &ti in idler {
            while start < signal.len() && 2 * (ti - signal[start]) > window_ps {
                start += 1;
            }
            n += signal[start..]
                .iter()
                .take_while(|&&ts| 2 * (ts - ti) <= window_ps)
                .count() as u64;
        }
        n
    }
}

pub fn coincidence_counters() -> Registry<dyn CoincidenceCounter> {
    let greedy: Arc<dyn CoincidenceCounter> = Arc::new(GreedyPairing);
    let all: Arc<dyn CoincidenceCounter> = Arc::new(AllPairs);
    Registry::new("coincidence counter", "greedy")
        .with(greedy)
        .with(all)
}

pub fn window_ps(tau_cc_ns: f64) -> i64 {
    (tau_cc_ns * PS_PER_NS).round() as i64
}

fn check_pair(idler: &TimestampStream, signal: &TimestampStream) -> Result<()> {
    if !idler.is_sorted() {
        return Err(Error::Unsorted("idler"));
    }
    if !signal.is_sorted() {
        return Err(Error::Unsorted("signal"));
    }
    ensure(idler.gate_index == signal.gate_index, || {
        format!(
            "streams belong to different gates ({} and {})",
            idler.gate_index, signal.gate_index
        )
    })
}

/// Counts with the given strategy.
pub fn count_with(
    counter: &dyn CoincidenceCounter,
    idler: &TimestampStream,
    signal: &TimestampStream,
    tau_cc_ns: f64,
) -> Result<CoincidenceResult> {
    check_pair(idler, signal)?;
    ensure(tau_cc_ns >= 0.0, || format!("negative window {tau_cc_ns} ns"))?;
    Ok(CoincidenceResult {
        gate_index: idler.gate_index,
        n1: idler.len() as u64,
        n2: signal.len() as u64,
        ncc: counter.count(&idler.times_ps, &signal.times_ps, window_ps(tau_cc_ns)),
        gate_s: idler.gate_s(),
        tau_cc_ns,
    })
}

/// One-to-one coincidence count within a symmetric window of total width `tau_cc_ns`.
pub fn count_coincidences(
    idler: &TimestampStream,
    signal: &TimestampStream,
    tau_cc_ns: f64,
) -> Result<CoincidenceResult> {
    count_with(&GreedyPairing, idler, signal, tau_cc_ns)
}

/// Expected accidental coincidences per gate, `N1·N2·τ_cc/T` with counts per gate.
pub fn accidental_counts(n1: f64, n2: f64, tau_cc_ns: f64, gate_s: f64) -> f64 {
    n1 * n2 * tau_cc_ns * 1e-9 / gate_s
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct G2Histogram {
    pub bin_width_ns: f64,
    /// Lower edge of each bin.
    pub offsets_ns: Vec<f64>,
    pub g2: Vec<f64>,
    /// Raw delay counts behind each bin.
    pub counts: Vec<u64>,
}

/// Accumulates signal−idler delay counts over gates.
///
/// Bins have width `bin_width_ns` and tile `[−range/2, range/2)`; with an odd
/// bin count the middle bin is centred on zero delay.
#[derive(Debug, Clone, PartialEq)]
pub struct G2Accumulator {
    bin_width_ns: f64,
    range_ns: f64,
    counts: Vec<u64>,
    /// Σ over gates of the accidental expectation per bin, `N1·N2·τ_w/T`.
    expected_per_bin: f64,
}

impl G2Accumulator {
    pub fn new(bin_width_ns: f64, range_ns: f64) -> Result<Self> {
        ensure(bin_width_ns > 0.0 && bin_width_ns.is_finite(), || {
            format!("bin width {bin_width_ns} ns must be positive")
        })?;
        ensure(range_ns >= 0.0 && range_ns.is_finite(), || {
            format!("range {range_ns} ns must be non-negative")
        })?;
        let ratio = range_ns / bin_width_ns;
        ensure((ratio - ratio.round()).abs() < 1e-9 * ratio.max(1.0), || {
            format!("range {range_ns} ns is not a multiple of the bin width {bin_width_ns} ns")
        })?;
        Ok(Self {
            bin_width_ns,
            range_ns,
            counts: vec![0; ratio.round() as usize],
            expected_per_bin: 0.0,
        })
    }

    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    pub fn add_gate(&mut self, idler: &TimestampStream, signal: &TimestampStream) -> Result<()> {
        check_pair(idler, signal)?;
        let gate_s = idler.gate_s();
        self.expected_per_bin +=
            idler.len() as f64 * signal.len() as f64 * self.bin_width_ns * 1e-9 / gate_s;
        if self.counts.is_empty() {
            return Ok(());
        }
        let w = self.bin_width_ns * PS_PER_NS;
        let lo = -0.5 * self.range_ns * PS_PER_NS;
        let hi = lo + w * self.counts.len() as f64;
        let ts = &signal.times_ps;
        let mut start = 0;
        for &ti in &idler.times_ps {
            while start < ts.len() && ((ts[start] - ti) as f64) < lo {
                start += 1;
            }
            for &t in &ts[start..] {
                let d = (t - ti) as f64;
                if d >= hi {
                    break;
                }
                let bin = ((d - lo) / w).floor() as usize;
                // floating-point edge: d just below hi can round to the last index + 1
                if let Some(c) = self.counts.get_mut(bin) {
                    *c += 1;
                }
            }
        }
        Ok(())
    }

    /// Associative merge of two accumulators with identical binning.
    pub fn merge(&mut self, other: &G2Accumulator) -> Result<()> {
        ensure(
            self.bin_width_ns == other.bin_width_ns && self.range_ns == other.range_ns,
            || "cannot merge histograms with different binning".into(),
        )?;
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.expected_per_bin += other.expected_per_bin;
        Ok(())
    }

    pub fn finish(&self) -> Result<G2Histogram> {
        if !(self.expected_per_bin > 0.0) {
            return Err(Error::UndefinedNormalization(
                "a channel recorded no events",
            ));
        }
        let offsets_ns = (0..self.counts.len())
            .map(|j| -0.5 * self.range_ns + j as f64 * self.bin_width_ns)
            .collect();
        Ok(G2Histogram {
            bin_width_ns: self.bin_width_ns,
            offsets_ns,
            g2: self
                .counts
                .iter()
                .map(|&c| c as f64 / self.expected_per_bin)
                .collect(),
            counts: self.counts.clone(),
        })
    }
}

/// Single-gate g²(τ) histogram; see [`G2Accumulator`] for the binning.
pub fn g2_histogram(
    idler: &TimestampStream,
    signal: &TimestampStream,
    bin_width_ns: f64,
    range_ns: f64,
) -> Result<G2Histogram> {
    let mut acc = G2Accumulator::new(bin_width_ns, range_ns)?;
    acc.add_gate(idler, signal)?;
    acc.finish()
}
