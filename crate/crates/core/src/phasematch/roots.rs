//! Bracketing scalar root finders.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::registry::{Named, Registry};

/// A one-dimensional root finder working on a sign-changing bracket.
///
/// `f_bracket` holds the function values at the bracket ends, already
/// evaluated by the caller during the pre-scan.
pub trait RootFinder: Named + Send + Sync {
    fn solve(
        &self,
        f: &mut dyn FnMut(f64) -> Result<f64>,
        bracket: (f64, f64),
        f_bracket: (f64, f64),
        xtol: f64,
    ) -> Result<f64>;
}

const MAX_ITER: usize = 200;

pub struct Bisection;

impl Named for Bisection {
    fn name(&self) -> &'static str {
        "bisection"
    }
}

impl RootFinder for Bisection {
    fn solve(
        &self,
        f: &mut dyn FnMut(f64) -> Result<f64>,
        (mut lo, mut hi): (f64, f64),
        (mut f_lo, f_hi): (f64, f64),
        xtol: f64,
    ) -> Result<f64> {
        if f_lo == 0.0 {
            return Ok(lo);
        }
        if f_hi == 0.0 {
            return Ok(hi);
        }
        if f_lo.signum() == f_hi.signum() {
            return Err(Error::Numeric("bisection needs a sign change".into()));
        }
        for _ in 0..MAX_ITER {
            let mid = 0.5 * (lo + hi);
            if (hi - lo).abs() <= xtol || mid == lo || mid == hi {
                return Ok(mid);
            }
            let f_mid = f(mid)?;
            if f_mid == 0.0 {
                return Ok(mid);
            }
            if f_mid.signum() == f_lo.signum() {
                lo = mid;
                f_lo = f_mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}

/// Brent's method: inverse quadratic interpolation with a bisection fallback.
pub struct Brent;

impl Named for Brent {
    fn name(&self) -> &'static str {
        "brent"
    }
}

impl RootFinder for Brent {
    fn solve(
        &self,
        f: &mut dyn FnMut(f64) -> Result<f64>,
        (lo, hi): (f64, f64),
        (f_lo, f_hi): (f64, f64),
        xtol: f64,
    ) -> Result<f64> {
        let (mut a, mut b) = (lo, hi);
        let (mut fa, mut fb) = (f_lo, f_hi);
        if fa == 0.0 {
            return Ok(a);
        }
        if fb == 0.0 {
            return Ok(b);
        }
        if fa.signum() == fb.signum() {
            return Err(Error::Numeric("Brent needs a sign change".into()));
        }
        let (mut c, mut fc) = (b, fb);
        let (mut d, mut e) = (b - a, b - a);
        for _ in 0..MAX_ITER {
            if fb.signum() == fc.signum() {
                c = a;
                fc = fa;
                d = b - a;
                e = d;
            }
            if fc.abs() < fb.abs() {
                a = b;
                b = c;
                c = a;
                fa = fb;
                fb = fc;
                fc = fa;
            }
            let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5 * xtol;
            let xm = 0.5 * (c - b);
            if xm.abs() <= tol1 || fb == 0.0 {
                return Ok(b);
            }
            if e.abs() >= tol1 && fa.abs() > fb.abs() {
                let s = fb / fa;
                let (mut p, mut q);
                if a == c {
                    p = 2.0 * xm * s;
                    q = 1.0 - s;
                } else {
                    let qq = fa / fc;
                    let r = fb / fc;
                    p = s * (2.0 * xm * qq * (qq - r) - (b - a) * (r - 1.0));
                    q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
                }
                if p > 0.0 {
                    q = -q;
                }
                p = p.abs();
                let min1 = 3.0 * xm * q - (tol1 * q).abs();
                let min2 = (e * q).abs();
                if 2.0 * p < min1.min(min2) {
                    e = d;
                    d = p / q;
                } else {
                    d = xm;
                    e = d;
                }
            } else {
                d = xm;
                e = d;
            }
            a = b;
            fa = fb;
            b += if d.abs() > tol1 {
                d
            } else {
                tol1.copysign(xm)
            };
            fb = f(b)?;
        }
        Err(Error::Numeric(format!(
            "Brent did not converge in {MAX_ITER} iterations"
        )))
    }
}

pub fn root_finders() -> Registry<dyn RootFinder> {
    let brent: Arc<dyn RootFinder> = Arc::new(Brent);
    let bisection: Arc<dyn RootFinder> = Arc::new(Bisection);
    Registry::new("root finder", "brent")
        .with(brent)
        .with(bisection)
}
