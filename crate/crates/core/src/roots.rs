//! Scalar root finding by safeguarded bisection.

use crate::error::{Error, Result};

const MAX_ITER: usize = 400;

/// Finds a root of `f` in `[lo, hi]`, which must bracket a sign change.
/// Iterates until the bracket is narrower than `tol` (absolute) or cannot be
/// split further in floating point.
pub fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> Result<f64> {
    let mut flo = f(lo);
    let fhi = f(hi);
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if !(flo.is_finite() && fhi.is_finite()) || flo.signum() == fhi.signum() {
        return Err(Error::Bracket(format!(
            "no sign change on [{lo}, {hi}]: f(lo)={flo}, f(hi)={fhi}"
        )));
    }
    for _ in 0..MAX_ITER {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || hi - lo <= tol {
            break;
        }
        let fm = f(mid);
        if !fm.is_finite() {
            return Err(Error::Numerical(format!("non-finite value at {mid}")));
        }
        if fm == 0.0 {
            return Ok(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Like [`bisect`], but grows the upper end geometrically (up to `cap`) until
/// a sign change appears.
pub fn bisect_expanding<F: Fn(f64) -> f64>(f: F, lo: f64, mut hi: f64, cap: f64, tol: f64) -> Result<f64> {
    let flo = f(lo);
    let mut span = hi - lo;
    while f(hi).signum() == flo.signum() {
        if hi >= cap {
            return Err(Error::Bracket(format!("no sign change on [{lo}, {cap}]")));
        }
        span *= 2.0;
        hi = (lo + span).min(cap);
    }
    bisect(f, lo, hi, tol)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_sqrt_two() {
        let r = bisect(|x| x * x - 2.0, 0.0, 2.0, 1e-15).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn rejects_missing_sign_change() {
        assert!(matches!(bisect(|x| x * x + 1.0, -1.0, 1.0, 1e-12), Err(Error::Bracket(_))));
    }

    #[test]
    fn expands_bracket() {
        let r = bisect_expanding(|x| x - 37.5, 0.0, 1.0, 1e6, 1e-12).unwrap();
        assert!((r - 37.5).abs() < 1e-11);
        assert!(bisect_expanding(|x| x - 37.5, 0.0, 1.0, 10.0, 1e-12).is_err());
    }
}
