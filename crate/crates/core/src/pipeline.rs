//! End-to-end simulated measurement: a reference run and a sample run from
//! one seed, counted, corrected and turned into transmittance estimates.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::coinc::{coincidence_counters, window_ps, CoincidenceCounter, CoincidenceResult};
use crate::error::{ensure, Error, Result};
use crate::estimate::{
    advantage, batch_stats, correct_counts, estimators, quantum_efficiency, AdvantageReport,
    ChannelCounts, CorrectionOptions, DeadTimeMode, Measured, SpreadMode, TransmittanceEstimate,
};
use crate::twinstream::{SampleModel, SourceConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorrectionConfig {
    /// Dark rates assumed by the correction; the source values when absent.
    pub dark1: Option<f64>,
    pub dark2: Option<f64>,
    /// Dead time assumed by the correction; the source value when absent.
    pub tau_dead_ns: Option<f64>,
    pub tau_cc_ns: f64,
    pub dead_time: DeadTimeMode,
    pub coincidence_live_time: bool,
}

impl Default for CorrectionConfig {
    fn default() -> Self {
        Self {
            dark1: None,
            dark2: None,
            tau_dead_ns: None,
            tau_cc_ns: 7.1,
            dead_time: DeadTimeMode::Divide,
            coincidence_live_time: true,
        }
    }
}

impl CorrectionConfig {
    pub fn options(&self) -> CorrectionOptions {
        CorrectionOptions {
            dead_time: self.dead_time,
            coincidence_live_time: self.coincidence_live_time,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub counter: String,
    pub spread: SpreadMode,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            counter: coincidence_counters().default_name().to_owned(),
            spread: SpreadMode::SampleStd,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub report: Option<PathBuf>,
    pub sample_counts: Option<PathBuf>,
    pub reference_counts: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub source: SourceConfig,
    pub sample: SampleModel,
    #[serde(default)]
    pub corrections: CorrectionConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

impl RunConfig {
    pub fn new(source: SourceConfig, true_transmittance: f64) -> Result<Self> {
        let cfg = Self {
            source,
            sample: SampleModel::new(true_transmittance)?,
            corrections: CorrectionConfig::default(),
            analysis: AnalysisConfig::default(),
            output: OutputConfig::default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::parse("run config", e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Parse { message, .. } => Error::parse(path.display().to_string(), message),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.source.validate()?;
        SampleModel::new(self.sample.true_transmittance)?;
        ensure(self.source.n_gates >= 2, || {
            "n_gates must be at least 2 to estimate spreads".into()
        })?;
        let c = &self.corrections;
        for (name, v) in [
            ("dark1", c.dark1),
            ("dark2", c.dark2),
            ("tau_dead_ns", c.tau_dead_ns),
            ("tau_cc_ns", Some(c.tau_cc_ns)),
        ] {
            if let Some(v) = v {
                ensure(v >= 0.0 && v.is_finite(), || {
                    format!("corrections.{name} = {v} must be finite and non-negative")
                })?;
            }
        }
        coincidence_counters().get(&self.analysis.counter)?;
        Ok(())
    }

    /// Correction constants with source values filled in.
    pub fn correction_template(&self, label: &str) -> ChannelCounts {
        let c = &self.corrections;
        ChannelCounts {
            label: label.to_owned(),
            ncc: Measured::default(),
            n1: Measured::default(),
            n2: Measured::default(),
            dark1: c.dark1.unwrap_or(self.source.dark1),
            dark2: c.dark2.unwrap_or(self.source.dark2),
            tau_cc_ns: c.tau_cc_ns,
            tau_dead_ns: c.tau_dead_ns.unwrap_or(self.source.dead_time_ns),
            gate_s: self.source.gate_s,
            corrected: false,
        }
    }
}

/// Simulated and counted gates `first_gate .. first_gate + n_gates`.
pub fn simulate_gates(
    source: &SourceConfig,
    sample: &SampleModel,
    first_gate: u64,
    counter: &dyn CoincidenceCounter,
    tau_cc_ns: f64,
) -> Result<Vec<CoincidenceResult>> {
    ensure(tau_cc_ns >= 0.0, || format!("negative window {tau_cc_ns} ns"))?;
    let window = window_ps(tau_cc_ns);
    Ok((first_gate..first_gate + source.n_gates as u64)
        .map(|g| {
            let c = counter.count_gate(source, sample, g, window);
            CoincidenceResult {
                gate_index: g,
                n1: c.n1,
                n2: c.n2,
                ncc: c.ncc,
                gate_s: source.gate_s,
                tau_cc_ns,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    pub ncc: Measured,
    pub n1: Measured,
    pub n2: Measured,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub label: String,
    pub first_gate: u64,
    pub n_gates: usize,
    /// Rates as recorded, cps.
    pub raw: Rates,
    /// Rates after per-gate correction, cps.
    pub corrected: Rates,
}

impl RunSummary {
    pub fn corrected_counts(&self, template: &ChannelCounts) -> ChannelCounts {
        ChannelCounts {
            label: self.label.clone(),
            ncc: self.corrected.ncc,
            n1: self.corrected.n1,
            n2: self.corrected.n2,
            corrected: true,
            ..template.clone()
        }
    }
}

fn rates(rows: &[[f64; 3]], mode: SpreadMode) -> Result<Rates> {
    let col = |k: usize| -> Vec<f64> { rows.iter().map(|r| r[k]).collect() };
    Ok(Rates {
        ncc: batch_stats(&col(0), mode)?,
        n1: batch_stats(&col(1), mode)?,
        n2: batch_stats(&col(2), mode)?,
    })
}

/// Corrects every gate separately, then takes mean and spread over gates.
pub fn summarize(
    gates: &[CoincidenceResult],
    template: &ChannelCounts,
    options: CorrectionOptions,
    mode: SpreadMode,
) -> Result<RunSummary> {
    let mut raw = Vec::with_capacity(gates.len());
    let mut corrected = Vec::with_capacity(gates.len());
    for g in gates {
        let r = [g.ncc, g.n1, g.n2].map(|n| n as f64 / g.gate_s);
        let counts = ChannelCounts {
            ncc: Measured::exact(r[0]),
            n1: Measured::exact(r[1]),
            n2: Measured::exact(r[2]),
            gate_s: g.gate_s,
            ..template.clone()
        };
        let c = correct_counts(&counts, options)?;
        raw.push(r);
        corrected.push([c.ncc.mean, c.n1.mean, c.n2.mean]);
    }
    Ok(RunSummary {
        label: template.label.clone(),
        first_gate: gates.first().map_or(0, |g| g.gate_index),
        n_gates: gates.len(),
        raw: rates(&raw, mode)?,
        corrected: rates(&corrected, mode)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: u64,
    pub true_transmittance_pct: f64,
    pub counter: String,
    pub spread: SpreadMode,
    pub reference: RunSummary,
    pub sample: RunSummary,
    /// Signal-arm heralding efficiency of the reference run.
    pub heralding_efficiency: f64,
    pub t_cc: TransmittanceEstimate,
    pub t_sc: TransmittanceEstimate,
    pub advantage: AdvantageReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub report: RunReport,
    pub reference_gates: Vec<CoincidenceResult>,
    pub sample_gates: Vec<CoincidenceResult>,
}

/// Reference gates are `0..n`, sample gates `n..2n`, both from the configured seed.
pub fn run_pipeline(cfg: &RunConfig) -> Result<RunOutput> {
    cfg.validate().map_err(|e| e.in_stage("config"))?;
    let counter = coincidence_counters()
        .get(&cfg.analysis.counter)
        .map_err(|e| e.in_stage("config"))?;
    let n = cfg.source.n_gates as u64;
    let tau_cc = cfg.corrections.tau_cc_ns;

    // the two runs are independent; gate seeds keep the result thread-agnostic
    let (reference_gates, sample_gates) = std::thread::scope(|s| {
        let sample =
            s.spawn(|| simulate_gates(&cfg.source, &cfg.sample, n, counter.as_ref(), tau_cc));
        let reference = simulate_reference(cfg);
        let sample = sample.join().expect("sample simulation thread panicked");
        (reference, sample)
    });
    let reference_gates = reference_gates?;
    let sample_gates = sample_gates.map_err(|e| e.in_stage("simulate"))?;
    finish(cfg, reference_gates, sample_gates)
}

/// The reference (no-sample) gates of `cfg`; they depend only on the source and analysis settings.
pub fn simulate_reference(cfg: &RunConfig) -> Result<Vec<CoincidenceResult>> {
    let counter = coincidence_counters()
        .get(&cfg.analysis.counter)
        .map_err(|e| e.in_stage("config"))?;
    simulate_gates(
        &cfg.source,
        &SampleModel::transparent(),
        0,
        counter.as_ref(),
        cfg.corrections.tau_cc_ns,
    )
    .map_err(|e| e.in_stage("simulate"))
}

/// [`run_pipeline`] with reference gates computed earlier by [`simulate_reference`]
/// for the same source, so several samples can share one reference run.
pub fn run_with_reference(
    cfg: &RunConfig,
    reference_gates: Vec<CoincidenceResult>,
) -> Result<RunOutput> {
    cfg.validate().map_err(|e| e.in_stage("config"))?;
    let counter = coincidence_counters()
        .get(&cfg.analysis.counter)
        .map_err(|e| e.in_stage("config"))?;
    let n = cfg.source.n_gates as u64;
    if reference_gates.len() as u64 != n
        || reference_gates.iter().enumerate().any(|(k, g)| g.gate_index != k as u64)
    {
        return Err(Error::Inconsistent(format!(
            "reference run must hold gates 0..{n}"
        ))
        .in_stage("config"));
    }
    let sample_gates = simulate_gates(
        &cfg.source,
        &cfg.sample,
        n,
        counter.as_ref(),
        cfg.corrections.tau_cc_ns,
    )
    .map_err(|e| e.in_stage("simulate"))?;
    finish(cfg, reference_gates, sample_gates)
}

/// Transmittance estimates from recorded reference and sample gates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub spread: SpreadMode,
    pub reference: RunSummary,
    pub sample: RunSummary,
    /// Signal-arm heralding efficiency of the reference run.
    pub heralding_efficiency: f64,
    pub t_cc: TransmittanceEstimate,
    pub t_sc: TransmittanceEstimate,
    pub advantage: AdvantageReport,
}

/// Corrects both runs with the constants in `template` and compares them.
/// Errors carry the stage (`correct` or `estimate`) they arose in.
pub fn estimate_from_gates(
    reference_gates: &[CoincidenceResult],
    sample_gates: &[CoincidenceResult],
    template: &ChannelCounts,
    options: CorrectionOptions,
    mode: SpreadMode,
) -> Result<EstimateReport> {
    let ref_template = ChannelCounts {
        label: "reference".into(),
        ..template.clone()
    };
    let sample_template = ChannelCounts {
        label: "sample".into(),
        ..template.clone()
    };
    let reference = summarize(reference_gates, &ref_template, options, mode)
        .map_err(|e| e.in_stage("correct"))?;
    let sample = summarize(sample_gates, &sample_template, options, mode)
        .map_err(|e| e.in_stage("correct"))?;

    let estimate = || -> Result<EstimateReport> {
        let r = reference.corrected_counts(&ref_template);
        let s = sample.corrected_counts(&sample_template);
        let reg = estimators();
        let t_cc = reg.get("cc")?.estimate(&s, &r)?;
        let t_sc = reg.get("sc")?.estimate(&s, &r)?;
        Ok(EstimateReport {
            spread: mode,
            heralding_efficiency: quantum_efficiency(r.ncc.mean, r.n1.mean)?,
            advantage: advantage(s.ncc, s.n2, Some((t_cc, t_sc)))?,
            t_cc,
            t_sc,
            reference: reference.clone(),
            sample: sample.clone(),
        })
    };
    estimate().map_err(|e| e.in_stage("estimate"))
}

fn finish(
    cfg: &RunConfig,
    reference_gates: Vec<CoincidenceResult>,
    sample_gates: Vec<CoincidenceResult>,
) -> Result<RunOutput> {
    let e = estimate_from_gates(
        &reference_gates,
        &sample_gates,
        &cfg.correction_template("run"),
        cfg.corrections.options(),
        cfg.analysis.spread,
    )?;
    let report = RunReport {
        seed: cfg.source.seed,
        true_transmittance_pct: 100.0 * cfg.sample.true_transmittance,
        counter: cfg.analysis.counter.clone(),
        spread: e.spread,
        reference: e.reference,
        sample: e.sample,
        heralding_efficiency: e.heralding_efficiency,
        t_cc: e.t_cc,
        t_sc: e.t_sc,
        advantage: e.advantage,
    };
    Ok(RunOutput {
        report,
        reference_gates,
        sample_gates,
    })
}
