//! Count corrections and transmittance estimators.
//!
//! All rates are in counts per second and transmittances in percent unless a
//! name says otherwise.

mod figures;
mod stats;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::registry::{Named, Registry};

pub use figures::{advantage, fresnel_index, sensitivity_db, snr_db, AdvantageReport};
pub use stats::{batch_stats, pairwise_sum, Measured, SpreadMode};

/// Singles and coincidence rates of one measurement with the constants
/// needed to correct them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelCounts {
    pub label: String,
    pub ncc: Measured,
    pub n1: Measured,
    pub n2: Measured,
    pub dark1: f64,
    pub dark2: f64,
    pub tau_cc_ns: f64,
    pub tau_dead_ns: f64,
    pub gate_s: f64,
    /// Set by [`correct_counts`]; correcting twice is refused.
    #[serde(default)]
    pub corrected: bool,
}

impl ChannelCounts {
    /// Uncorrected rates without any correction constants.
    pub fn bare(label: impl Into<String>, ncc: Measured, n1: Measured, n2: Measured) -> Self {
        Self {
            label: label.into(),
            ncc,
            n1,
            n2,
            dark1: 0.0,
            dark2: 0.0,
            tau_cc_ns: 0.0,
            tau_dead_ns: 0.0,
            gate_s: 1.0,
            corrected: false,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.gate_s > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "gate time {} s must be positive",
                self.gate_s
            )));
        }
        let fields = [
            ("Ncc", self.ncc.mean),
            ("N1", self.n1.mean),
            ("N2", self.n2.mean),
            ("dNcc", self.ncc.spread),
            ("dN1", self.n1.spread),
            ("dN2", self.n2.spread),
            ("dark1", self.dark1),
            ("dark2", self.dark2),
            ("tau_cc", self.tau_cc_ns),
            ("tau_dead", self.tau_dead_ns),
        ];
        for (name, v) in fields {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!(
                    "{name} = {v} must be finite and non-negative"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeadTimeMode {
    /// Recorded = true·γ, so true = recorded/γ.
    #[default]
    Divide,
    /// Multiply by γ as the original recipe is worded.
    LiteralMultiply,
}

impl std::str::FromStr for DeadTimeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "divide" => Ok(Self::Divide),
            "literal-multiply" | "literal" => Ok(Self::LiteralMultiply),
            other => Err(Error::parse(
                "dead-time mode",
                format!("`{other}` (expected divide or literal-multiply)"),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorrectionOptions {
    pub dead_time: DeadTimeMode,
    /// Also correct Ncc for the probability that either detector is dead
    /// when a pair arrives. Only used in `Divide` mode.
    pub coincidence_live_time: bool,
}

impl CorrectionOptions {
    /// Settings used by the simulation pipeline.
    pub fn pipeline() -> Self {
        Self {
            dead_time: DeadTimeMode::Divide,
            coincidence_live_time: true,
        }
    }
}

/// Live fraction `1 − N·τ` of a non-paralyzable detector recording `rate_cps`.
pub fn live_fraction(rate_cps: f64, tau_dead_ns: f64) -> f64 {
    1.0 - rate_cps * tau_dead_ns * 1e-9
}

/// Probability that both detectors are live, given recorded singles and coincidence rates.
pub fn coincidence_live_fraction(n1: f64, n2: f64, ncc: f64, tau_dead_ns: f64) -> f64 {
    let tau = tau_dead_ns * 1e-9;
    1.0 - (n1 + n2) * tau + ncc * tau + n1 * n2 * tau * tau
}

/// Accidental coincidence rate `R1·R2·τ_cc`.
pub fn accidental_rate(n1: f64, n2: f64, tau_cc_ns: f64) -> f64 {
    n1 * n2 * tau_cc_ns * 1e-9
}

fn nonneg(term: &'static str, value: f64) -> Result<f64> {
    if value < 0.0 {
        Err(Error::NegativeCorrection { term, value })
    } else {
        Ok(value)
    }
}

/// Dark subtraction, then dead-time, then accidental subtraction with the corrected singles.
///
/// Spreads are carried through the multiplicative factors only.
pub fn correct_counts(raw: &ChannelCounts, opts: CorrectionOptions) -> Result<ChannelCounts> {
    raw.validate()?;
    if raw.corrected {
        return Err(Error::Inconsistent(format!(
            "`{}` is already corrected",
            raw.label
        )));
    }
    let g1 = live_fraction(raw.n1.mean, raw.tau_dead_ns);
    let g2 = live_fraction(raw.n2.mean, raw.tau_dead_ns);
    let gcc = match (opts.dead_time, opts.coincidence_live_time) {
        (DeadTimeMode::Divide, true) => {
            coincidence_live_fraction(raw.n1.mean, raw.n2.mean, raw.ncc.mean, raw.tau_dead_ns)
        }
        _ => 1.0,
    };
    for (term, g) in [("dead-time γ1", g1), ("dead-time γ2", g2), ("coincidence γ", gcc)] {
        if !(g > 0.0) {
            return Err(Error::NegativeCorrection { term, value: g });
        }
    }
    let factor = |g: f64| match opts.dead_time {
        DeadTimeMode::Divide => 1.0 / g,
        DeadTimeMode::LiteralMultiply => g,
    };
    let n1 = Measured::new(nonneg("N1 − dark1", raw.n1.mean - raw.dark1)?, raw.n1.spread)
        .scaled(factor(g1));
    let n2 = Measured::new(nonneg("N2 − dark2", raw.n2.mean - raw.dark2)?, raw.n2.spread)
        .scaled(factor(g2));
    let ncc_live = raw.ncc.scaled(1.0 / gcc);
    let acc = accidental_rate(n1.mean, n2.mean, raw.tau_cc_ns);
    let ncc = Measured::new(
        nonneg("Ncc − accidentals", ncc_live.mean - acc)?,
        ncc_live.spread,
    );
    Ok(ChannelCounts {
        label: raw.label.clone(),
        ncc,
        n1,
        n2,
        corrected: true,
        ..raw.clone()
    })
}

/// Heralding efficiency of the signal arm, `Ncc⁽⁰⁾/N1⁽⁰⁾`.
pub fn quantum_efficiency(ncc0: f64, n10: f64) -> Result<f64> {
    if !(n10 > 0.0) {
        return Err(Error::UndefinedReference("idler singles N1 must be positive"));
    }
    let eta = ncc0 / n10;
    if eta > 1.0 {
        return Err(Error::Inconsistent(format!(
            "coincidences {ncc0} exceed idler singles {n10}"
        )));
    }
    if eta < 0.0 {
        return Err(Error::Domain(format!("negative coincidence rate {ncc0}")));
    }
    Ok(eta)
}

/// `(Ncc_s/N1_s)·(N1_0/Ncc_0)` in percent.
pub fn transmittance_cc(ncc_s: f64, n1_s: f64, ncc_0: f64, n1_0: f64) -> Result<f64> {
    if !(ncc_0 > 0.0) {
        return Err(Error::UndefinedReference("reference coincidence rate is zero"));
    }
    if !(n1_s > 0.0 && n1_0 > 0.0) {
        return Err(Error::UndefinedReference("idler singles rate is zero"));
    }
    // idler ratio first so that equal idler rates give exactly the approximate form
    Ok(100.0 * (ncc_s / ncc_0) * (n1_0 / n1_s))
}

/// `Ncc_s/Ncc_0` in percent, valid when the idler rate did not drift.
pub fn transmittance_cc_approx(ncc_s: f64, ncc_0: f64) -> Result<f64> {
    if !(ncc_0 > 0.0) {
        return Err(Error::UndefinedReference("reference coincidence rate is zero"));
    }
    Ok(100.0 * (ncc_s / ncc_0))
}

/// `N2_s/N2_0` in percent.
pub fn transmittance_sc(n2_s: f64, n2_0: f64) -> Result<f64> {
    if !(n2_0 > 0.0) {
        return Err(Error::UndefinedReference("reference signal rate is zero"));
    }
    Ok(100.0 * n2_s / n2_0)
}

fn positive_means(items: &[Measured]) -> Result<()> {
    match items.iter().find(|m| !(m.mean > 0.0)) {
        Some(m) => Err(Error::Domain(format!(
            "relative error needs a positive mean, got {}",
            m.mean
        ))),
        None => Ok(()),
    }
}

/// Absolute uncertainty of [`transmittance_cc`] in percent points.
pub fn uncertainty_cc(ncc_s: Measured, n1_s: Measured, ncc_0: Measured, n1_0: Measured) -> Result<f64> {
    positive_means(&[ncc_s, n1_s, ncc_0, n1_0])?;
    let rel = ncc_s.rel().abs() + ncc_0.rel().abs() + (n1_s.rel() - n1_0.rel()).abs();
    Ok(rel * transmittance_cc(ncc_s.mean, n1_s.mean, ncc_0.mean, n1_0.mean)?)
}

/// Absolute uncertainty of [`transmittance_sc`] in percent points.
pub fn uncertainty_sc(n2_s: Measured, n2_0: Measured) -> Result<f64> {
    positive_means(&[n2_s, n2_0])?;
    Ok((n2_s.rel().abs() + n2_0.rel().abs()) * transmittance_sc(n2_s.mean, n2_0.mean)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Cc,
    Sc,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransmittanceEstimate {
    /// Percent.
    pub mean: f64,
    /// Absolute, percent points.
    pub uncertainty: f64,
    pub method: Method,
}

impl TransmittanceEstimate {
    pub fn rel(&self) -> f64 {
        self.uncertainty / self.mean
    }
}

/// Sample-vs-reference transmittance from (already corrected) counts.
pub trait TransmittanceEstimator: Named + Send + Sync {
    fn estimate(&self, sample: &ChannelCounts, reference: &ChannelCounts) -> Result<TransmittanceEstimate>;
}

/// Coincidences normalised by idler singles.
pub struct CoincidenceRatio;

impl Named for CoincidenceRatio {
    fn name(&self) -> &'static str {
        "cc"
    }
}

impl TransmittanceEstimator for CoincidenceRatio {
    fn estimate(&self, s: &ChannelCounts, r: &ChannelCounts) -> Result<TransmittanceEstimate> {
        Ok(TransmittanceEstimate {
            mean: transmittance_cc(s.ncc.mean, s.n1.mean, r.ncc.mean, r.n1.mean)?,
            uncertainty: uncertainty_cc(s.ncc, s.n1, r.ncc, r.n1)?,
            method: Method::Cc,
        })
    }
}

/// Coincidence ratio ignoring idler drift.
pub struct CoincidenceRatioApprox;

impl Named for CoincidenceRatioApprox {
    fn name(&self) -> &'static str {
        "cc-approx"
    }
}

impl TransmittanceEstimator for CoincidenceRatioApprox {
    fn estimate(&self, s: &ChannelCounts, r: &ChannelCounts) -> Result<TransmittanceEstimate> {
        let one = Measured::exact(1.0);
        Ok(TransmittanceEstimate {
            mean: transmittance_cc_approx(s.ncc.mean, r.ncc.mean)?,
            uncertainty: uncertainty_cc(s.ncc, one, r.ncc, one)?,
            method: Method::Cc,
        })
    }
}

/// Signal singles ratio.
pub struct SinglesRatio;

impl Named for SinglesRatio {
    fn name(&self) -> &'static str {
        "sc"
    }
}

impl TransmittanceEstimator for SinglesRatio {
    fn estimate(&self, s: &ChannelCounts, r: &ChannelCounts) -> Result<TransmittanceEstimate> {
        Ok(TransmittanceEstimate {
            mean: transmittance_sc(s.n2.mean, r.n2.mean)?,
            uncertainty: uncertainty_sc(s.n2, r.n2)?,
            method: Method::Sc,
        })
    }
}

pub fn estimators() -> Registry<dyn TransmittanceEstimator> {
    let cc: Arc<dyn TransmittanceEstimator> = Arc::new(CoincidenceRatio);
    let approx: Arc<dyn TransmittanceEstimator> = Arc::new(CoincidenceRatioApprox);
    let sc: Arc<dyn TransmittanceEstimator> = Arc::new(SinglesRatio);
    Registry::new("transmittance estimator", "cc")
        .with(cc)
        .with(approx)
        .with(sc)
}
