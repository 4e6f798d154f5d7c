//! Type-I phase matching in a negative uniaxial crystal.
//!
//! The pump is the extraordinary ray; signal and idler are both ordinary.
//! Angles handed in and out of this module are external (measured in air
//! behind the exit face) and in degrees; wavelengths are in nanometres
//! unless a name says otherwise.

mod roots;
mod sellmeier;

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};

pub use roots::{root_finders, Bisection, Brent, RootFinder};
pub use sellmeier::{
    effective_index, refractive_index, SellmeierCoefficients, UniaxialDispersion, DEFAULT_BBO,
};

/// How the pump's angle to the optic axis is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PumpAngle {
    /// The pump propagates at the cut angle ψ to the optic axis.
    #[default]
    CutAngle,
    /// ψ is reduced by the internal signal angle, φ = ψ − θ_s,int.
    SignalTilted,
}

impl std::str::FromStr for PumpAngle {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cut-angle" => Ok(PumpAngle::CutAngle),
            "signal-tilted" => Ok(PumpAngle::SignalTilted),
            other => Err(Error::InvalidConfig(format!(
                "unknown pump angle convention `{other}` (cut-angle, signal-tilted)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrystalConfig {
    pub dispersion: UniaxialDispersion,
    /// Angle between pump wavevector and optic axis, degrees.
    pub cut_angle_deg: f64,
    pub length_mm: f64,
    pub pump_nm: f64,
    #[serde(default)]
    pub pump_angle: PumpAngle,
}

impl CrystalConfig {
    pub fn new(
        dispersion: UniaxialDispersion,
        cut_angle_deg: f64,
        length_mm: f64,
        pump_nm: f64,
    ) -> Result<Self> {
        let c = Self {
            dispersion,
            cut_angle_deg,
            length_mm,
            pump_nm,
            pump_angle: PumpAngle::default(),
        };
        c.validate()?;
        Ok(c)
    }

    /// 0.5 mm BBO cut at 29.3°, pumped at 405 nm.
    pub fn bbo_default() -> Self {
        Self::new(UniaxialDispersion::bbo(), 29.3, 0.5, 405.0).expect("valid default crystal")
    }

    pub fn with_pump_angle(mut self, pump_angle: PumpAngle) -> Self {
        self.pump_angle = pump_angle;
        self
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.cut_angle_deg > 0.0 && self.cut_angle_deg < 90.0, || {
            format!("cut angle {}° must lie in (0°, 90°)", self.cut_angle_deg)
        })?;
        ensure(self.length_mm > 0.0, || {
            format!("crystal length {} mm must be positive", self.length_mm)
        })?;
        let pump_um = self.pump_nm * 1e-3;
        for (name, c) in [
            ("ordinary", &self.dispersion.ordinary),
            ("extraordinary", &self.dispersion.extraordinary),
        ] {
            ensure(
                pump_um >= c.valid_min_um && pump_um <= c.valid_max_um,
                || format!("pump {} nm outside the {name} coefficient range", self.pump_nm),
            )?;
        }
        Ok(())
    }

    /// Idler wavelength fixed by energy conservation.
    pub fn idler_nm(&self, lambda_signal_nm: f64) -> f64 {
        lambda_signal_nm * self.pump_nm / (lambda_signal_nm - self.pump_nm)
    }
}

/// Longitudinal wavevector budget, all in µm⁻¹.
struct Wavevectors {
    signal_z: f64,
    idler_z: f64,
    pump: f64,
}

fn wavevectors(
    lambda_signal_nm: f64,
    theta_signal_out_deg: f64,
    crystal: &CrystalConfig,
) -> Result<Wavevectors> {
    if !(lambda_signal_nm > crystal.pump_nm) {
        return Err(Error::Domain(format!(
            "signal {lambda_signal_nm} nm must be longer than the pump {} nm",
            crystal.pump_nm
        )));
    }
    if !(0.0..90.0).contains(&theta_signal_out_deg) {
        return Err(Error::Domain(format!(
            "external signal angle {theta_signal_out_deg}° outside [0°, 90°)"
        )));
    }
    let disp = &crystal.dispersion;
    let ls = lambda_signal_nm * 1e-3;
    let li = crystal.idler_nm(lambda_signal_nm) * 1e-3;
    let lp = crystal.pump_nm * 1e-3;

    let n_s = disp.ordinary.refractive_index(ls)?;
    let n_i = disp.ordinary.refractive_index(li)?;
    let n_po = disp.ordinary.refractive_index(lp)?;
    let n_pe = disp.extraordinary.refractive_index(lp)?;

    let sin_out = theta_signal_out_deg.to_radians().sin();
    let sin_s_int = sin_out / n_s;
    let sin_i_int = (li / ls) * sin_out / n_i;
    if sin_i_int >= 1.0 {
        return Err(Error::Domain(format!(
            "idler sine {sin_i_int} exceeds 1 at {lambda_signal_nm} nm, {theta_signal_out_deg}°"
        )));
    }

    let phi = match crystal.pump_angle {
        PumpAngle::CutAngle => crystal.cut_angle_deg.to_radians(),
        PumpAngle::SignalTilted => crystal.cut_angle_deg.to_radians() - sin_s_int.asin(),
    };
    let n_p = sellmeier::effective_index_unchecked(n_po, n_pe, phi);

    let k = |n: f64, lam: f64| 2.0 * PI * n / lam;
    Ok(Wavevectors {
        signal_z: k(n_s, ls) * (1.0 - sin_s_int * sin_s_int).sqrt(),
        idler_z: k(n_i, li) * (1.0 - sin_i_int * sin_i_int).sqrt(),
        pump: k(n_p, lp),
    })
}

/// Relative longitudinal phase mismatch `(k_s,z + k_i,z − k_p) / k_p`.
pub fn pm_residual(
    lambda_signal_nm: f64,
    theta_signal_out_deg: f64,
    crystal: &CrystalConfig,
) -> Result<f64> {
    let w = wavevectors(lambda_signal_nm, theta_signal_out_deg, crystal)?;
    Ok((w.signal_z + w.idler_z - w.pump) / w.pump)
}

/// `Δk = k_p − k_s,z − k_i,z` in mm⁻¹.
pub fn phase_mismatch_per_mm(
    lambda_signal_nm: f64,
    theta_signal_out_deg: f64,
    crystal: &CrystalConfig,
) -> Result<f64> {
    let w = wavevectors(lambda_signal_nm, theta_signal_out_deg, crystal)?;
    Ok((w.pump - w.signal_z - w.idler_z) * 1e3)
}

/// Finite-length amplitude `|sin(ΔkL/2) / (ΔkL/2)|`.
pub fn sinc_envelope(delta_k_per_mm: f64, length_mm: f64) -> Result<f64> {
    if !(length_mm > 0.0) {
        return Err(Error::Domain(format!(
            "crystal length {length_mm} mm must be positive"
        )));
    }
    let x = 0.5 * delta_k_per_mm * length_mm;
    if x == 0.0 {
        return Ok(1.0);
    }
    Ok((x.sin() / x).abs())
}

/// Envelope amplitude for a given emission direction in `crystal`.
pub fn emission_envelope(
    lambda_signal_nm: f64,
    theta_signal_out_deg: f64,
    crystal: &CrystalConfig,
) -> Result<f64> {
    let dk = phase_mismatch_per_mm(lambda_signal_nm, theta_signal_out_deg, crystal)?;
    sinc_envelope(dk, crystal.length_mm)
}

/// External idler angle from transverse momentum balance.
pub fn idler_angle_deg(
    lambda_signal_nm: f64,
    theta_signal_out_deg: f64,
    crystal: &CrystalConfig,
) -> Result<f64> {
    let li = crystal.idler_nm(lambda_signal_nm);
    let s = li / lambda_signal_nm * theta_signal_out_deg.to_radians().sin();
    if s > 1.0 {
        return Err(Error::Domain(format!(
            "idler at {li:.3} nm cannot leave the exit face (sine {s})"
        )));
    }
    Ok(s.asin().to_degrees())
}

/// Scans an angular window for the first sign change of [`pm_residual`],
/// then refines it with a bracketing root finder.
#[derive(Clone)]
pub struct AngleSolver {
    pub finder: Arc<dyn RootFinder>,
    pub max_angle_deg: f64,
    pub scan_step_deg: f64,
    pub xtol_deg: f64,
}

impl Default for AngleSolver {
    fn default() -> Self {
        Self {
            finder: Arc::new(Brent),
            max_angle_deg: 15.0,
            scan_step_deg: 0.05,
            xtol_deg: 1e-12,
        }
    }
}

impl AngleSolver {
    pub fn with_finder(finder: Arc<dyn RootFinder>) -> Self {
        Self {
            finder,
            ..Self::default()
        }
    }

    pub fn solve(&self, lambda_signal_nm: f64, crystal: &CrystalConfig) -> Result<f64> {
        let mut f = |theta: f64| pm_residual(lambda_signal_nm, theta, crystal);
        // a failure at normal emission means the wavelengths themselves are unusable
        let mut prev_theta = 0.0;
        let mut prev = f(0.0)?;
        if prev == 0.0 {
            return Ok(0.0);
        }
        let steps = (self.max_angle_deg / self.scan_step_deg).round() as usize;
        for i in 1..=steps {
            let theta = (i as f64 * self.scan_step_deg).min(self.max_angle_deg);
            let cur = match f(theta) {
                Ok(v) => v,
                // the idler cannot propagate beyond this angle
                Err(Error::Domain(_)) => break,
                Err(e) => return Err(e),
            };
            if cur == 0.0 {
                return Ok(theta);
            }
            if cur.signum() != prev.signum() {
                return self
                    .finder
                    .solve(&mut f, (prev_theta, theta), (prev, cur), self.xtol_deg);
            }
            prev_theta = theta;
            prev = cur;
        }
        Err(Error::NoPhaseMatch {
            lambda_nm: lambda_signal_nm,
            lo_deg: 0.0,
            hi_deg: self.max_angle_deg,
        })
    }
}

/// External signal angle at which `lambda_signal_nm` is phase matched.
pub fn solve_signal_angle(lambda_signal_nm: f64, crystal: &CrystalConfig) -> Result<f64> {
    AngleSolver::default().solve(lambda_signal_nm, crystal)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "status", content = "detail")]
pub enum PointStatus {
    Solved,
    NoRoot,
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TuningCurvePoint {
    pub lambda_signal_nm: f64,
    pub lambda_idler_nm: f64,
    pub theta_signal_deg: Option<f64>,
    pub theta_idler_deg: Option<f64>,
    pub residual: Option<f64>,
    pub status: PointStatus,
}

impl TuningCurvePoint {
    pub fn is_solved(&self) -> bool {
        self.status == PointStatus::Solved
    }
}

/// Evenly spaced signal wavelengths from `lambda_min_nm` to `lambda_max_nm` inclusive.
///
/// A single step requires `lambda_min_nm == lambda_max_nm`.
pub fn tuning_curve(
    lambda_min_nm: f64,
    lambda_max_nm: f64,
    steps: usize,
    crystal: &CrystalConfig,
    solver: &AngleSolver,
) -> Result<Vec<TuningCurvePoint>> {
    ensure(lambda_min_nm > crystal.pump_nm, || {
        format!(
            "start wavelength {lambda_min_nm} nm must exceed the pump {} nm",
            crystal.pump_nm
        )
    })?;
    match steps {
        0 => return Err(Error::InvalidConfig("tuning curve needs at least one step".into())),
        1 => ensure(lambda_min_nm == lambda_max_nm, || {
            "a single-step curve needs equal start and end wavelengths".into()
        })?,
        _ => ensure(lambda_min_nm < lambda_max_nm, || {
            format!("empty wavelength interval [{lambda_min_nm}, {lambda_max_nm}] nm")
        })?,
    }
    let span = lambda_max_nm - lambda_min_nm;
    let points = (0..steps)
        .map(|i| {
            let ls = if steps == 1 {
                lambda_min_nm
            } else {
                lambda_min_nm + span * i as f64 / (steps - 1) as f64
            };
            curve_point(ls, crystal, solver)
        })
        .collect();
    Ok(points)
}

fn curve_point(ls: f64, crystal: &CrystalConfig, solver: &AngleSolver) -> TuningCurvePoint {
    let mut point = TuningCurvePoint {
        lambda_signal_nm: ls,
        lambda_idler_nm: crystal.idler_nm(ls),
        theta_signal_deg: None,
        theta_idler_deg: None,
        residual: None,
        status: PointStatus::NoRoot,
    };
    let theta = match solver.solve(ls, crystal) {
        Ok(t) => t,
        Err(Error::NoPhaseMatch { .. }) => return point,
        Err(e) => {
            point.status = PointStatus::Invalid(e.to_string());
            return point;
        }
    };
    point.theta_signal_deg = Some(theta);
    point.residual = pm_residual(ls, theta, crystal).ok();
    match idler_angle_deg(ls, theta, crystal) {
        Ok(ti) => {
            point.theta_idler_deg = Some(ti);
            point.status = PointStatus::Solved;
        }
        Err(e) => point.status = PointStatus::Invalid(e.to_string()),
    }
    point
}

#[cfg(test)]
mod tests {
    use super::*;

    fn crystal() -> CrystalConfig {
        CrystalConfig::bbo_default()
    }

    #[test]
    fn sinc_special_values() {
        assert_eq!(sinc_envelope(0.0, 2.0).unwrap(), 1.0);
        assert!(sinc_envelope(2.0 * PI, 1.0).unwrap() < 1e-12);
        assert!((sinc_envelope(PI, 1.0).unwrap() - 2.0 / PI).abs() < 1e-15);
        assert!(sinc_envelope(1.0, 0.0).is_err());
        assert!(sinc_envelope(-1.3, 0.7).unwrap() >= 0.0);
    }

    #[test]
    fn residual_at_reported_angle_is_small() {
        let r = pm_residual(810.0, 3.0, &crystal()).unwrap();
        assert!(r.abs() < 5e-3, "{r}");
    }

    #[test]
    fn collinear_residual_changes_sign_across_cut_angle_scan() {
        // brute-force oracle: scan ψ over [28°, 31°] at 0.001° and look for a crossing
        let mut c = crystal();
        let mut signs = Vec::new();
        for i in 0..=3000 {
            c.cut_angle_deg = 28.0 + i as f64 * 0.001;
            signs.push(pm_residual(810.0, 0.0, &c).unwrap().signum());
        }
        let crossings = signs.windows(2).filter(|w| w[0] != w[1]).count();
        assert_eq!(crossings, 1);
    }

    #[test]
    fn solved_angle_near_three_degrees() {
        let theta = solve_signal_angle(810.0, &crystal()).unwrap();
        assert!((theta - 3.0).abs() <= 0.5, "{theta}");
        assert!(pm_residual(810.0, theta, &crystal()).unwrap().abs() < 1e-10);
    }

    #[test]
    fn different_wavelengths_give_distinct_verified_roots() {
        let c = crystal();
        let a = solve_signal_angle(700.0, &c).unwrap();
        let b = solve_signal_angle(810.0, &c).unwrap();
        assert!((a - b).abs() > 1e-3);
        for (l, t) in [(700.0, a), (810.0, b)] {
            assert!(pm_residual(l, t, &c).unwrap().abs() < 1e-10);
        }
    }

    #[test]
    fn degenerate_point_is_symmetric() {
        let c = crystal();
        let pts = tuning_curve(810.0, 810.0, 1, &c, &AngleSolver::default()).unwrap();
        assert_eq!(pts.len(), 1);
        let p = &pts[0];
        assert!(p.is_solved());
        assert_eq!(p.lambda_idler_nm, 810.0);
        assert!((p.theta_signal_deg.unwrap() - p.theta_idler_deg.unwrap()).abs() < 1e-6);
    }

    #[test]
    fn far_from_phase_matching_all_points_flagged() {
        let mut c = crystal();
        c.cut_angle_deg = 10.0;
        // oracle: no sign change of the residual anywhere on a dense grid
        for ls in [700.0, 800.0, 900.0] {
            let r0 = pm_residual(ls, 0.0, &c).unwrap();
            for i in 1..=1500 {
                let r = pm_residual(ls, i as f64 * 0.01, &c).unwrap();
                assert_eq!(r.signum(), r0.signum());
            }
        }
        let pts = tuning_curve(700.0, 950.0, 11, &c, &AngleSolver::default()).unwrap();
        assert_eq!(pts.len(), 11);
        assert!(pts.iter().all(|p| p.status == PointStatus::NoRoot));
    }

    #[test]
    fn bisection_and_brent_agree() {
        let c = crystal();
        let brent = AngleSolver::default().solve(760.0, &c).unwrap();
        let bis = AngleSolver::with_finder(Arc::new(Bisection))
            .solve(760.0, &c)
            .unwrap();
        assert!((brent - bis).abs() < 1e-9);
    }

    #[test]
    fn signal_tilted_convention_is_selectable() {
        let c = crystal().with_pump_angle(PumpAngle::SignalTilted);
        let theta = solve_signal_angle(810.0, &c).unwrap();
        assert!(pm_residual(810.0, theta, &c).unwrap().abs() < 1e-10);
        assert!(theta < solve_signal_angle(810.0, &crystal()).unwrap());
    }

    #[test]
    fn envelope_peaks_at_phase_matched_angle() {
        let c = crystal();
        let theta = solve_signal_angle(810.0, &c).unwrap();
        assert!((emission_envelope(810.0, theta, &c).unwrap() - 1.0).abs() < 1e-9);
        assert!(emission_envelope(810.0, theta + 2.0, &c).unwrap() < 1.0);
    }

    #[test]
    fn invalid_inputs() {
        let c = crystal();
        assert!(pm_residual(400.0, 1.0, &c).is_err());
        assert!(pm_residual(810.0, 95.0, &c).is_err());
        // idler beyond the coefficient range
        assert!(matches!(
            solve_signal_angle(480.0, &c),
            Err(Error::WavelengthOutOfRange { .. })
        ));
        assert!(tuning_curve(700.0, 600.0, 5, &c, &AngleSolver::default()).is_err());
        assert!(tuning_curve(700.0, 800.0, 1, &c, &AngleSolver::default()).is_err());
        assert!(CrystalConfig::new(UniaxialDispersion::bbo(), 95.0, 0.5, 405.0).is_err());
        assert!(CrystalConfig::new(UniaxialDispersion::bbo(), 29.3, 0.5, 1500.0).is_err());
    }
}
