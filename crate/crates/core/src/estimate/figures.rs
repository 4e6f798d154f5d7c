//! SNR, sensitivity, entanglement advantage and the thin-film index inversion.

use serde::{Deserialize, Serialize};

use super::{Measured, TransmittanceEstimate};
use crate::error::{Error, Result};

pub fn snr_db(signal: f64, noise: f64) -> Result<f64> {
    if !(signal > 0.0 && noise > 0.0) {
        return Err(Error::Domain(format!(
            "SNR needs positive signal and noise, got {signal} and {noise}"
        )));
    }
    Ok(10.0 * (signal / noise).log10())
}

/// `−10·log10(noise)`; the unit of `min_noise` sets the 0 dB reference.
pub fn sensitivity_db(min_noise: f64) -> Result<f64> {
    if !(min_noise > 0.0) {
        return Err(Error::Domain(format!(
            "sensitivity needs a positive noise level, got {min_noise}"
        )));
    }
    Ok(-10.0 * min_noise.log10())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdvantageReport {
    /// Relative error of 𝒯_sc over that of 𝒯_cc; absent for a reference row.
    pub g_t: Option<f64>,
    /// Relative error of N2 over that of Ncc.
    pub g_n: f64,
    pub snr_cc_db: f64,
    pub snr_sc_db: f64,
    pub sensitivity_cc_db: f64,
    pub sensitivity_sc_db: f64,
}

fn ratio(num: f64, den: f64, what: &str) -> Result<f64> {
    if !(den > 0.0) || !num.is_finite() || num < 0.0 {
        return Err(Error::Domain(format!(
            "{what}: relative errors {num} / {den} give no finite ratio"
        )));
    }
    Ok(num / den)
}

/// Figures of merit for one row. Rates are in cps so the sensitivities
/// share a 1 cps reference.
pub fn advantage(
    ncc: Measured,
    n2: Measured,
    transmittance: Option<(TransmittanceEstimate, TransmittanceEstimate)>,
) -> Result<AdvantageReport> {
    let g_t = match transmittance {
        Some((cc, sc)) => Some(ratio(sc.rel(), cc.rel(), "G_T")?),
        None => None,
    };
    Ok(AdvantageReport {
        g_t,
        g_n: ratio(n2.rel(), ncc.rel(), "G_N")?,
        snr_cc_db: snr_db(ncc.mean, ncc.spread)?,
        snr_sc_db: snr_db(n2.mean, n2.spread)?,
        sensitivity_cc_db: sensitivity_db(ncc.spread)?,
        sensitivity_sc_db: sensitivity_db(n2.spread)?,
    })
}

/// Film index from normal-incidence transmittance `T = 4n/(1 + n)²` (n_air = 1),
/// taking the root above 1.
pub fn fresnel_index(transmittance: f64) -> Result<f64> {
    if !(transmittance > 0.0 && transmittance <= 1.0) {
        return Err(Error::Domain(format!(
            "transmittance fraction {transmittance} outside (0, 1]"
        )));
    }
    let t = transmittance;
    Ok(((2.0 - t) + 2.0 * (1.0 - t).sqrt()) / t)
}
