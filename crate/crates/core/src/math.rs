//! Log-domain arithmetic helpers.
//!
//! Zero probability is represented by `f64::NEG_INFINITY`; every helper here
//! must survive that value without producing NaN.

/// Log of zero probability mass.
pub const LOG_ZERO: f64 = f64::NEG_INFINITY;

/// log(exp(a) + exp(b)) without overflow.
#[inline]
pub fn logsumexp2(a: f64, b: f64) -> f64 {
    if a == LOG_ZERO && b == LOG_ZERO {
        return LOG_ZERO;
    }
    if a > b {
        a + (b - a).exp().ln_1p()
    } else {
        b + (a - b).exp().ln_1p()
    }
}

/// log(sum_i exp(x_i)) over a slice, max-shifted.
pub fn logsumexp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(LOG_ZERO, f64::max);
    if max == LOG_ZERO {
        return LOG_ZERO;
    }
    let sum: f64 = xs.iter().map(|&x| (x - max).exp()).sum();
    max + sum.ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logsumexp2_matches_naive_in_safe_range() {
        let (a, b) = (-1.3f64, -0.2f64);
        let naive = (a.exp() + b.exp()).ln();
        assert!((logsumexp2(a, b) - naive).abs() < 1e-14);
    }

    #[test]
    fn logsumexp2_handles_log_zero() {
        assert_eq!(logsumexp2(LOG_ZERO, LOG_ZERO), LOG_ZERO);
        assert_eq!(logsumexp2(LOG_ZERO, -0.5), -0.5);
        assert_eq!(logsumexp2(-0.5, LOG_ZERO), -0.5);
    }

    #[test]
    fn logsumexp_slice_shifts_large_magnitudes() {
        let xs = [-1000.0, -1000.0];
        let expected = -1000.0 + 2.0_f64.ln();
        assert!((logsumexp(&xs) - expected).abs() < 1e-12);
        assert_eq!(logsumexp(&[LOG_ZERO, LOG_ZERO]), LOG_ZERO);
        assert_eq!(logsumexp(&[]), LOG_ZERO);
    }
}
