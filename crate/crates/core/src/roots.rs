//! Bracketed root refinement shared by the inversion and estimating-equation
//! solvers.

/// Bisection on `[lo, hi]` where `f(lo)` and `f(hi)` have opposite signs (or
/// one of them is zero). Stops when the bracket width is below
/// `rel_tol · max(|lo|, |hi|) + abs_tol`.
pub(crate) fn bisect<F: FnMut(f64) -> f64>(
    mut f: F,
    mut lo: f64,
    mut hi: f64,
    mut f_lo: f64,
    rel_tol: f64,
    abs_tol: f64,
) -> f64 {
    if f_lo == 0.0 {
        return lo;
    }
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= rel_tol * lo.abs().max(hi.abs()) + abs_tol || mid <= lo || mid >= hi {
            return mid;
        }
        let f_mid = f(mid);
        if f_mid == 0.0 {
            return mid;
        }
        if (f_mid < 0.0) == (f_lo < 0.0) {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[inline]
pub(crate) fn brackets(fa: f64, fb: f64) -> bool {
    fa.is_finite() && fb.is_finite() && ((fa < 0.0) != (fb < 0.0) || fa == 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bisect_finds_sqrt2() {
        let f = |x: f64| x * x - 2.0;
        let r = bisect(f, 0.0, 2.0, f(0.0), 1e-14, 0.0);
        assert!((r - 2f64.sqrt()).abs() < 1e-13);
    }

    #[test]
    fn brackets_rejects_nan() {
        assert!(!brackets(f64::NAN, 1.0));
        assert!(brackets(-1.0, 1.0));
        assert!(brackets(0.0, 1.0));
        assert!(!brackets(1.0, 2.0));
    }
}
