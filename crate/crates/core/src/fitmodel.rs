//! Two-exponential transmittance-vs-concentration model: fit, inversion and
//! propagation of transmittance errors to concentration.

use std::cmp::Ordering;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `T(C) = T0·exp(−C/C0) + Tinf·exp(−C/Cinf)`, T in percent, C in ng/µl.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConcentrationModel {
    pub t0: f64,
    pub c0: f64,
    pub t_inf: f64,
    pub c_inf: f64,
}

impl ConcentrationModel {
    pub fn new(t0: f64, c0: f64, t_inf: f64, c_inf: f64) -> Result<Self> {
        let m = Self { t0, c0, t_inf, c_inf };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t0.is_finite() && self.t_inf.is_finite()) {
            return Err(Error::InvalidConfig("model amplitudes must be finite".into()));
        }
        if !(self.c0 > 0.0 && self.c_inf > 0.0 && self.c0.is_finite() && self.c_inf.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "concentration scales must be positive, got C0 = {} and Cinf = {}",
                self.c0, self.c_inf
            )));
        }
        Ok(())
    }

    /// Zero-concentration transmittance within 100 % (plus `tol`).
    pub fn is_physical(&self, tol: f64) -> bool {
        self.t0 + self.t_inf <= 100.0 + tol
    }

    pub fn eval(&self, c: f64) -> f64 {
        self.t0 * (-c / self.c0).exp() + self.t_inf * (-c / self.c_inf).exp()
    }

    /// dT/dC.
    pub fn derivative(&self, c: f64) -> f64 {
        -(self.t0 / self.c0) * (-c / self.c0).exp() - (self.t_inf / self.c_inf) * (-c / self.c_inf).exp()
    }

    /// Swaps the two terms so that `c0 ≤ c_inf`.
    pub fn canonical(self) -> Self {
        if self.c0 <= self.c_inf {
            self
        } else {
            Self {
                t0: self.t_inf,
                c0: self.c_inf,
                t_inf: self.t0,
                c_inf: self.c0,
            }
        }
    }

    fn to_internal(self) -> [f64; 4] {
        [self.t0, self.c0.ln(), self.t_inf, self.c_inf.ln()]
    }

    fn from_internal(p: &[f64]) -> Self {
        Self {
            t0: p[0],
            c0: p[1].exp(),
            t_inf: p[2],
            c_inf: p[3].exp(),
        }
    }
}

pub fn eval_model(model: &ConcentrationModel, c: f64) -> f64 {
    model.eval(c)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitPoint {
    pub concentration: f64,
    pub transmittance: f64,
    /// Absent or zero means unit weight.
    pub uncertainty: Option<f64>,
}

impl FitPoint {
    pub fn new(concentration: f64, transmittance: f64, uncertainty: Option<f64>) -> Self {
        Self {
            concentration,
            transmittance,
            uncertainty,
        }
    }

    fn weight_sigma(&self) -> f64 {
        match self.uncertainty {
            Some(s) if s > 0.0 => s,
            _ => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParameterUncertainty {
    pub t0: f64,
    pub c0: f64,
    pub t_inf: f64,
    pub c_inf: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: ConcentrationModel,
    /// Weighted residual sum of squares.
    pub rss: f64,
    /// Absent with fewer than five points or a singular normal matrix.
    pub uncertainty: Option<ParameterUncertainty>,
    pub converged: bool,
    pub iterations: usize,
    /// Norm of Jᵀr in the internal (T, ln C) parameters at the solution.
    pub gradient_norm: f64,
}

pub(crate) struct LmOutcome {
    pub params: Vec<f64>,
    pub rss: f64,
    pub converged: bool,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub jacobian: DMatrix<f64>,
}

pub(crate) const MAX_ITERATIONS: usize = 500;
const RSS_RTOL: f64 = 1e-10;
const GRAD_TOL: f64 = 1e-8;

/// Accepted steps in a row with negligible rss change that end the iteration.
const STALL_STEPS: usize = 5;

/// Levenberg–Marquardt with Marquardt's diagonal scaling.
///
/// `model` returns the residual vector and its Jacobian for a parameter vector.
/// Convergence is certified by the gradient norm; a run of steps whose relative
/// rss change stays below `RSS_RTOL` only stops the iteration.
pub(crate) fn levenberg_marquardt(
    model: &dyn Fn(&[f64]) -> (DVector<f64>, DMatrix<f64>),
    start: &[f64],
) -> LmOutcome {
    let mut p = start.to_vec();
    let (mut r, mut j) = model(&p);
    let mut rss = r.norm_squared();
    let mut lambda = 1e-3;
    let mut iterations = 0;
    let mut stalled = 0;
    let mut grad = j.tr_mul(&r);

    while iterations < MAX_ITERATIONS && grad.norm() >= GRAD_TOL && stalled < STALL_STEPS {
        iterations += 1;
        let jtj = j.tr_mul(&j);
        let mut accepted = false;
        for _ in 0..40 {
            let mut a = jtj.clone();
            for k in 0..a.nrows() {
                a[(k, k)] += lambda * jtj[(k, k)].max(1e-12);
            }
            let Some(step) = a.cholesky().map(|c| c.solve(&(-&grad))) else {
                lambda *= 10.0;
                continue;
            };
            let trial: Vec<f64> = p.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            let (rt, jt) = model(&trial);
            let rss_t = rt.norm_squared();
            if rss_t.is_finite() && rss_t <= rss {
                let change = (rss - rss_t) / rss.max(f64::MIN_POSITIVE);
                stalled = if change < RSS_RTOL { stalled + 1 } else { 0 };
                p = trial;
                r = rt;
                j = jt;
                rss = rss_t;
                grad = j.tr_mul(&r);
                lambda = (lambda * 0.3).max(1e-15);
                accepted = true;
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            break;
        }
    }
    let gradient_norm = grad.norm();
    LmOutcome {
        params: p,
        rss,
        converged: gradient_norm < GRAD_TOL || rss == 0.0,
        iterations,
        gradient_norm,
        jacobian: j,
    }
}

fn residuals(points: &[FitPoint], p: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
    let (t0, c0, ti, ci) = (p[0], p[1].exp(), p[2], p[3].exp());
    let n = points.len();
    let mut r = DVector::zeros(n);
    let mut j = DMatrix::zeros(n, 4);
    for (k, pt) in points.iter().enumerate() {
        let w = 1.0 / pt.weight_sigma();
        let c = pt.concentration;
        let e0 = (-c / c0).exp();
        let ei = (-c / ci).exp();
        r[k] = w * (t0 * e0 + ti * ei - pt.transmittance);
        j[(k, 0)] = w * e0;
        // d/d(ln C0) of T0·exp(−C/C0) is T0·exp(−C/C0)·C/C0
        j[(k, 1)] = w * t0 * e0 * c / c0;
        j[(k, 2)] = w * ei;
        j[(k, 3)] = w * ti * ei * c / ci;
    }
    (r, j)
}

fn validate_points(points: &[FitPoint]) -> Result<()> {
    if points.len() < 4 {
        return Err(Error::InsufficientData {
            needed: 4,
            got: points.len(),
        });
    }
    for p in points {
        if !(p.concentration >= 0.0 && p.concentration.is_finite() && p.transmittance.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "invalid fit point ({}, {})",
                p.concentration, p.transmittance
            )));
        }
        if let Some(s) = p.uncertainty {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(Error::InvalidConfig(format!("invalid uncertainty {s}")));
            }
        }
    }
    let mut cs: Vec<f64> = points.iter().map(|p| p.concentration).collect();
    cs.sort_by(f64::total_cmp);
    if cs.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidConfig("concentrations must be distinct".into()));
    }
    Ok(())
}

/// Starting points: the data-driven guess and its 8 neighbours with either
/// concentration scale multiplied or divided by 3.
fn starts(points: &[FitPoint]) -> Vec<ConcentrationModel> {
    let by_c = |a: &&FitPoint, b: &&FitPoint| a.concentration.total_cmp(&b.concentration);
    let lowest = points.iter().min_by(by_c).expect("validated non-empty");
    let highest = points.iter().max_by(by_c).expect("validated non-empty");
    let ts = points.iter().map(|p| p.transmittance);
    let t_max = ts.clone().fold(f64::NEG_INFINITY, f64::max);
    let t_min = ts.fold(f64::INFINITY, f64::min);
    let positive: Vec<f64> = points
        .iter()
        .map(|p| p.concentration)
        .filter(|&c| c > 0.0)
        .collect();
    let gmean = (positive.iter().map(|c| c.ln()).sum::<f64>() / positive.len() as f64).exp();
    let base = ConcentrationModel {
        t0: (t_max - t_min).max(1e-3),
        c0: gmean,
        t_inf: lowest.transmittance,
        c_inf: highest.concentration,
    };
    let mut out = Vec::with_capacity(9);
    for f0 in [1.0, 3.0, 1.0 / 3.0] {
        for fi in [1.0, 3.0, 1.0 / 3.0] {
            out.push(ConcentrationModel {
                c0: base.c0 * f0,
                c_inf: base.c_inf * fi,
                ..base
            });
        }
    }
    out
}

fn better(a: &FitResult, b: &FitResult) -> Ordering {
    // converged first, then lower rss, then lexicographic parameters
    b.converged
        .cmp(&a.converged)
        .then(a.rss.total_cmp(&b.rss))
        .then(a.model.t0.total_cmp(&b.model.t0))
        .then(a.model.c0.total_cmp(&b.model.c0))
        .then(a.model.t_inf.total_cmp(&b.model.t_inf))
        .then(a.model.c_inf.total_cmp(&b.model.c_inf))
}

/// Weighted least-squares fit with multi-start; the returned model is canonical (`c0 ≤ c_inf`).
pub fn fit(points: &[FitPoint]) -> Result<FitResult> {
    validate_points(points)?;
    let f = |p: &[f64]| residuals(points, p);
    let mut best: Option<FitResult> = None;
    for start in starts(points) {
        let out = levenberg_marquardt(&f, &start.to_internal());
        let model = ConcentrationModel::from_internal(&out.params);
        if model.validate().is_err() || !out.rss.is_finite() {
            continue;
        }
        let dof = points.len() as f64 - 4.0;
        let uncertainty = (dof > 0.0)
            .then(|| out.jacobian.tr_mul(&out.jacobian).try_inverse())
            .flatten()
            .map(|cov| {
                let s2 = out.rss / dof;
                let sd = |k: usize| (cov[(k, k)] * s2).max(0.0).sqrt();
                ParameterUncertainty {
                    t0: sd(0),
                    c0: model.c0 * sd(1),
                    t_inf: sd(2),
                    c_inf: model.c_inf * sd(3),
                }
            });
        let canonical = model.canonical();
        let uncertainty = match (uncertainty, canonical == model) {
            (Some(u), false) => Some(ParameterUncertainty {
                t0: u.t_inf,
                c0: u.c_inf,
                t_inf: u.t0,
                c_inf: u.c0,
            }),
            (u, _) => u,
        };
        let candidate = FitResult {
            model: canonical,
            rss: out.rss,
            uncertainty,
            converged: out.converged,
            iterations: out.iterations,
            gradient_norm: out.gradient_norm,
        };
        if best.as_ref().map_or(true, |b| better(&candidate, b) == Ordering::Less) {
            best = Some(candidate);
        }
    }
    best.ok_or_else(|| Error::Numeric("every fit start diverged".into()))
}

/// Concentration scale beyond which the model is treated as fully decayed.
fn c_max(model: &ConcentrationModel) -> f64 {
    50.0 * model.c0.max(model.c_inf)
}

/// Concentration at which the model reaches `t`, by bisection.
pub fn invert(model: &ConcentrationModel, t: f64) -> Result<f64> {
    model.validate()?;
    if model.t0 < 0.0 || model.t_inf < 0.0 || model.t0 + model.t_inf <= 0.0 {
        return Err(Error::IllConditioned(
            "model is not strictly decreasing (negative amplitude)".into(),
        ));
    }
    let hi_t = model.eval(0.0);
    let mut hi = c_max(model);
    let lo_t = model.eval(hi);
    if t == hi_t {
        return Ok(0.0);
    }
    if !(t < hi_t && t > lo_t) {
        return Err(Error::OutOfAttainableRange {
            value: t,
            lo: lo_t,
            hi: hi_t,
        });
    }
    let mut lo = 0.0;
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if model.eval(mid) > t {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-10 * 0.5 * (lo + hi) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `dT / |dT/dC|` at the concentration where the model reads `t`.
pub fn concentration_uncertainty(model: &ConcentrationModel, t: f64, dt: f64) -> Result<f64> {
    if !(dt >= 0.0 && dt.is_finite()) {
        return Err(Error::Domain(format!("transmittance uncertainty {dt} must be non-negative")));
    }
    let c = invert(model, t)?;
    let slope = model.derivative(c).abs();
    if !(slope > 0.0) || !slope.is_finite() {
        return Err(Error::IllConditioned(format!(
            "model slope vanishes at C = {c} ng/µl"
        )));
    }
    Ok(dt / slope)
}
