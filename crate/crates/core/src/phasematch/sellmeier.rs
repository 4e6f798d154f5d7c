use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};

/// Bundled BBO dispersion constants.
pub const DEFAULT_BBO: &str = include_str!("../../data/bbo.toml");

/// Four-term Sellmeier coefficients, wavelengths in micrometres.
///
/// `n² = L1 + L2 / (λ² − L3) − L4 λ²`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SellmeierCoefficients {
    pub l1: f64,
    /// µm²
    pub l2: f64,
    /// µm²
    pub l3: f64,
    /// µm⁻²
    pub l4: f64,
    pub valid_min_um: f64,
    pub valid_max_um: f64,
}

impl SellmeierCoefficients {
    pub fn new(l1: f64, l2: f64, l3: f64, l4: f64, valid_um: (f64, f64)) -> Result<Self> {
        let c = Self {
            l1,
            l2,
            l3,
            l4,
            valid_min_um: valid_um.0,
            valid_max_um: valid_um.1,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        ensure(
            [self.l1, self.l2, self.l3, self.l4]
                .iter()
                .all(|v| v.is_finite()),
            || "Sellmeier coefficients must be finite".into(),
        )?;
        ensure(
            self.valid_min_um > 0.0 && self.valid_min_um < self.valid_max_um,
            || {
                format!(
                    "valid range [{}, {}] µm must be positive and increasing",
                    self.valid_min_um, self.valid_max_um
                )
            },
        )?;
        // Check the radicand on a grid; the pole at λ² = L3 has to stay outside the range.
        let n = 256;
        for i in 0..=n {
            let lam =
                self.valid_min_um + (self.valid_max_um - self.valid_min_um) * i as f64 / n as f64;
            let r = self.radicand(lam);
            if !(r > 0.0) || !r.is_finite() {
                return Err(Error::InvalidConfig(format!(
                    "Sellmeier radicand is {r} at {lam} µm inside the valid range"
                )));
            }
        }
        if self.l3 > 0.0 {
            let pole = self.l3.sqrt();
            ensure(
                pole < self.valid_min_um || pole > self.valid_max_um,
                || format!("Sellmeier pole at {pole} µm lies inside the valid range"),
            )?;
        }
        Ok(())
    }

    fn radicand(&self, lambda_um: f64) -> f64 {
        let l2 = lambda_um * lambda_um;
        self.l1 + self.l2 / (l2 - self.l3) - self.l4 * l2
    }

    /// Refractive index at `lambda_um`.
    pub fn refractive_index(&self, lambda_um: f64) -> Result<f64> {
        if lambda_um < self.valid_min_um || !lambda_um.is_finite() {
            return Err(Error::WavelengthOutOfRange {
                value_um: lambda_um,
                bound: "lower",
                limit_um: self.valid_min_um,
            });
        }
        if lambda_um > self.valid_max_um {
            return Err(Error::WavelengthOutOfRange {
                value_um: lambda_um,
                bound: "upper",
                limit_um: self.valid_max_um,
            });
        }
        let r = self.radicand(lambda_um);
        if r <= 0.0 || !r.is_finite() {
            return Err(Error::Domain(format!(
                "Sellmeier radicand {r} is not positive at {lambda_um} µm"
            )));
        }
        Ok(r.sqrt())
    }
}

/// Free function form of [`SellmeierCoefficients::refractive_index`].
pub fn refractive_index(coeffs: &SellmeierCoefficients, lambda_um: f64) -> Result<f64> {
    coeffs.refractive_index(lambda_um)
}

/// Angle-dependent index seen by an extraordinary ray at `phi_e_deg` from the optic axis.
pub fn effective_index(n_o: f64, n_e: f64, phi_e_deg: f64) -> Result<f64> {
    if !(n_o > 1.0 && n_e > 1.0) {
        return Err(Error::Domain(format!(
            "indices must exceed 1 (n_o = {n_o}, n_e = {n_e})"
        )));
    }
    if !(0.0..=90.0).contains(&phi_e_deg) {
        return Err(Error::Domain(format!(
            "phi_e = {phi_e_deg}° outside [0°, 90°]"
        )));
    }
    // cos(90°) is not exactly zero in floating point
    if phi_e_deg == 90.0 {
        return Ok(n_e);
    }
    Ok(effective_index_unchecked(n_o, n_e, phi_e_deg.to_radians()))
}

pub(crate) fn effective_index_unchecked(n_o: f64, n_e: f64, phi_rad: f64) -> f64 {
    let (s, c) = phi_rad.sin_cos();
    (c * c / (n_o * n_o) + s * s / (n_e * n_e)).sqrt().recip()
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CoeffsFile {
    #[serde(rename = "L1")]
    l1: f64,
    #[serde(rename = "L2")]
    l2: f64,
    #[serde(rename = "L3")]
    l3: f64,
    #[serde(rename = "L4")]
    l4: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CrystalFile {
    ordinary: CoeffsFile,
    extraordinary: CoeffsFile,
    valid_min_um: f64,
    valid_max_um: f64,
}

/// Ordinary and extraordinary dispersion of a uniaxial crystal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniaxialDispersion {
    pub ordinary: SellmeierCoefficients,
    pub extraordinary: SellmeierCoefficients,
}

impl UniaxialDispersion {
    /// Parses the key-value coefficient file (`ordinary.L1` … `extraordinary.L4`,
    /// `valid_min_um`, `valid_max_um`).
    pub fn from_str(text: &str) -> Result<Self> {
        let f: CrystalFile =
            toml::from_str(text).map_err(|e| Error::parse("crystal coefficient file", e))?;
        let range = (f.valid_min_um, f.valid_max_um);
        let mk = |c: CoeffsFile| SellmeierCoefficients::new(c.l1, c.l2, c.l3, c.l4, range);
        Ok(Self {
            ordinary: mk(f.ordinary)?,
            extraordinary: mk(f.extraordinary)?,
        })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_str(&text)
    }

    pub fn bbo() -> Self {
        Self::from_str(DEFAULT_BBO).expect("bundled BBO coefficients are valid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bbo_ordinary_at_810nm() {
        // hand evaluation: 2.7359 + 0.01878/(0.6561 - 0.01822) - 0.01354*0.6561
        let by_hand = (2.7359_f64 + 0.01878 / (0.6561 - 0.01822) - 0.01354 * 0.6561).sqrt();
        let n = UniaxialDispersion::bbo()
            .ordinary
            .refractive_index(0.810)
            .unwrap();
        assert!((n - by_hand).abs() < 1e-14);
        assert!((n - 1.6603).abs() < 1e-3, "{n}");
    }

    #[test]
    fn constant_index_degenerate_coefficients() {
        let c = SellmeierCoefficients::new(2.25, 0.0, 0.0, 0.0, (0.2, 2.0)).unwrap();
        for lam in [0.2, 0.5, 1.3, 2.0] {
            assert_eq!(c.refractive_index(lam).unwrap(), 1.5);
        }
    }

    #[test]
    fn out_of_range_names_bound() {
        let c = UniaxialDispersion::bbo().ordinary;
        match c.refractive_index(1.5) {
            Err(Error::WavelengthOutOfRange { bound, .. }) => assert_eq!(bound, "upper"),
            other => panic!("{other:?}"),
        }
        match c.refractive_index(0.1) {
            Err(Error::WavelengthOutOfRange { bound, .. }) => assert_eq!(bound, "lower"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn nonpositive_radicand_rejected() {
        assert!(SellmeierCoefficients::new(0.5, 0.0, 0.0, 1.0, (0.2, 2.0)).is_err());
        assert!(SellmeierCoefficients::new(2.0, 0.0, 0.0, 0.0, (1.0, 0.5)).is_err());
    }

    #[test]
    fn ordinary_index_normal_dispersion() {
        let c = UniaxialDispersion::bbo().ordinary;
        let mut prev = f64::INFINITY;
        for i in 0..1000 {
            let lam = 0.4 + 0.6 * i as f64 / 999.0;
            let n = c.refractive_index(lam).unwrap();
            assert!(n < prev, "not decreasing at {lam}");
            prev = n;
        }
    }

    #[test]
    fn effective_index_limits() {
        assert_eq!(effective_index(1.6919, 1.5677, 0.0).unwrap(), 1.6919);
        assert_eq!(effective_index(1.6919, 1.5677, 90.0).unwrap(), 1.5677);
        let n = effective_index(1.6919, 1.5677, 29.3).unwrap();
        assert!(n > 1.5677 && n < 1.6919);
        assert!(effective_index(1.6, 1.5, 91.0).is_err());
        assert!(effective_index(0.9, 1.5, 10.0).is_err());
    }

    #[test]
    fn effective_index_bounded_on_grid() {
        for (no, ne) in [(1.6919, 1.5677), (1.5, 1.7), (2.2, 2.1)] {
            for i in 0..=900 {
                let phi = i as f64 * 0.1;
                let n = effective_index(no, ne, phi).unwrap();
                assert!(n >= no.min(ne) - 1e-15 && n <= no.max(ne) + 1e-15);
            }
        }
    }

    #[test]
    fn crystal_file_rejects_unknown_keys() {
        let bad = DEFAULT_BBO.replace("valid_min_um", "valid_low");
        assert!(UniaxialDispersion::from_str(&bad).is_err());
    }
}
