//! Safeguarded scalar root finding for monotone functions.
//!
//! Every implicit solve in this crate reduces to finding the root of a
//! strictly increasing scalar function whose derivative may be unbounded
//! at σ = 0 (flow index m > 1). Newton steps are taken only when they land
//! strictly inside the current bracket; otherwise we bisect.

use crate::error::{Error, Result};

pub(crate) const MAX_ITERATIONS: usize = 200;

/// Root of a strictly increasing `g` on `[lo, hi]`, given `g(lo) <= 0 <= g(hi)`.
///
/// `g` returns the value and the derivative. The derivative may be infinite
/// or NaN, in which case the iteration falls back to bisection.
pub(crate) fn monotone_root<G>(mut lo: f64, mut hi: f64, xtol: f64, ftol: f64, g: G) -> Result<f64>
where
    G: Fn(f64) -> (f64, f64),
{
    if lo > hi {
        std::mem::swap(&mut lo, &mut hi);
    }
    let (glo, _) = g(lo);
    if glo == 0.0 {
        return Ok(lo);
    }
    let (ghi, _) = g(hi);
    if ghi == 0.0 {
        return Ok(hi);
    }
    if !(glo < 0.0 && ghi > 0.0) {
        return Err(Error::Domain(format!(
            "root not bracketed: g({lo}) = {glo}, g({hi}) = {ghi}"
        )));
    }

    let mut x = 0.5 * (lo + hi);
    for _ in 0..MAX_ITERATIONS {
        let (gx, dgx) = g(x);
        if gx == 0.0 || gx.abs() <= ftol {
            return Ok(x);
        }
        if gx < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        if hi - lo <= xtol * (1.0 + x.abs()) {
            return Ok(0.5 * (lo + hi));
        }
        let newton = x - gx / dgx;
        x = if dgx.is_finite() && dgx > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    Err(Error::Convergence {
        iterations: MAX_ITERATIONS,
        target: 0.5 * (lo + hi),
    })
}

/// Grows a bracket around zero until an increasing `g` changes sign.
pub(crate) fn expand_bracket<G>(g: G, start: f64) -> Result<(f64, f64)>
where
    G: Fn(f64) -> f64,
{
    let g0 = g(0.0);
    if g0 == 0.0 {
        return Ok((0.0, 0.0));
    }
    let dir = if g0 < 0.0 { 1.0 } else { -1.0 };
    let mut near = 0.0;
    let mut far = dir * start.abs().max(1.0);
    for _ in 0..MAX_ITERATIONS {
        let gf = g(far);
        if !gf.is_finite() {
            return Err(Error::Domain(format!("non-finite residual at {far}")));
        }
        if gf.signum() != g0.signum() || gf == 0.0 {
            return Ok(if dir > 0.0 { (near, far) } else { (far, near) });
        }
        near = far;
        far *= 2.0;
    }
    Err(Error::Convergence {
        iterations: MAX_ITERATIONS,
        target: far,
    })
}
