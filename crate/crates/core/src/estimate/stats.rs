//! Mean and spread over per-gate rates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A rate (or any quantity) with its ± spread, in the same units.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Measured {
    pub mean: f64,
    pub spread: f64,
}

impl Measured {
    pub fn new(mean: f64, spread: f64) -> Self {
        Self { mean, spread }
    }

    pub fn exact(mean: f64) -> Self {
        Self { mean, spread: 0.0 }
    }

    /// `spread / mean`; infinite or NaN for a zero mean.
    pub fn rel(&self) -> f64 {
        self.spread / self.mean
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self {
            mean: self.mean * k,
            spread: self.spread * k.abs(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpreadMode {
    /// Sample standard deviation (n − 1).
    #[default]
    SampleStd,
    /// Sample standard deviation over √n.
    StandardError,
}

impl std::str::FromStr for SpreadMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sample-std" | "std" => Ok(Self::SampleStd),
            "standard-error" | "sem" => Ok(Self::StandardError),
            other => Err(Error::parse(
                "spread mode",
                format!("`{other}` (expected sample-std or standard-error)"),
            )),
        }
    }
}

/// Pairwise summation; the result depends only on the order of `xs`.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        return xs.iter().sum();
    }
    let (a, b) = xs.split_at(xs.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

pub fn batch_stats(values: &[f64], mode: SpreadMode) -> Result<Measured> {
    let n = values.len();
    if n < 2 {
        return Err(Error::InsufficientData { needed: 2, got: n });
    }
    let mean = pairwise_sum(values) / n as f64;
    let dev: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
    let std = (pairwise_sum(&dev) / (n - 1) as f64).sqrt();
    let spread = match mode {
        SpreadMode::SampleStd => std,
        SpreadMode::StandardError => std / (n as f64).sqrt(),
    };
    Ok(Measured { mean, spread })
}
