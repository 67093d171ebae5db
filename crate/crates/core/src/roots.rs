//! Safeguarded Newton iteration inside a bisection bracket.

use crate::error::{Error, Result};

const MAX_ITER: usize = 200;

/// Finds `x ∈ [lo, hi]` with `|g(x)| ≤ tol` for `g(x) = f(x).0`, given
/// `g(lo) ≤ 0 ≤ g(hi)`. `f` returns the value and derivative.
///
/// Newton steps are taken when they stay strictly inside the current
/// bracket; otherwise the bracket is bisected. The bracket is maintained by
/// sign only, so a root is found even when `g` is not monotone.
pub fn newton_bisect<F>(f: F, mut lo: f64, mut hi: f64, x0: f64, tol: f64) -> Result<f64>
where
    F: Fn(f64) -> (f64, f64),
{
    let mut x = if x0 > lo && x0 < hi { x0 } else { 0.5 * (lo + hi) };
    let mut best = (f64::INFINITY, x);
    let mut step_old = hi - lo;
    for _ in 0..MAX_ITER {
        let (gx, dgx) = f(x);
        if gx.abs() < best.0 {
            best = (gx.abs(), x);
        }
        if gx.abs() <= tol {
            return Ok(x);
        }
        if gx < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        if hi - lo <= f64::EPSILON * hi.abs().max(lo.abs()).max(f64::MIN_POSITIVE) {
            break;
        }
        let newton = x - gx / dgx;
        // Bisect when Newton leaves the bracket or is not at least halving
        // the step from two iterations ago.
        let inside = newton.is_finite() && newton > lo && newton < hi;
        if inside && (2.0 * gx).abs() <= (step_old * dgx).abs() {
            step_old = (newton - x).abs();
            x = newton;
        } else {
            step_old = 0.5 * (hi - lo);
            x = lo + step_old;
        }
    }
    if best.0 <= tol {
        Ok(best.1)
    } else {
        Err(Error::Convergence { residual: best.0 })
    }
}
