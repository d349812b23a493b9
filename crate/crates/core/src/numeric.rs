//! Small floating-point helpers shared by the metric and solver modules.

/// Neumaier (improved Kahan) compensated sum.
///
/// Every metric that promises 1e-12 agreement between two algebraic routes
/// accumulates through this, so the error stays O(eps) instead of O(n·eps).
pub fn compensated_sum<I>(values: I) -> f64
where
    I: IntoIterator<Item = f64>,
{
    let mut sum = 0.0_f64;
    let mut carry = 0.0_f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            carry += (sum - t) + v;
        } else {
            carry += (v - t) + sum;
        }
        sum = t;
    }
    sum + carry
}

/// `x^gamma / max^gamma` for every element, computed in log space.
///
/// Dividing by the largest element keeps the weights in `(0, 1]` so that
/// large stakes raised to `gamma` close to one never overflow and tiny `gamma`
/// never collapses everything to exactly 1.0 before the ratio is taken.
pub fn scaled_powers(values: &[f64], gamma: f64) -> Vec<f64> {
    let max = values.iter().cloned().fold(f64::MIN, f64::max);
    let ln_max = max.ln();
    values
        .iter()
        .map(|&v| (gamma * (v.ln() - ln_max)).exp())
        .collect()
}

/// Relative comparison used by the oracle checks: `|a - b| <= tol * max(|a|, |b|)`,
/// with exact equality accepted for the zero case.
pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    if a == b {
        return true;
    }
    (a - b).abs() <= tol * a.abs().max(b.abs())
}

/// Bisection on a monotone predicate over `[lo, hi]`.
///
/// `above(x)` must be `false` on a prefix of the interval and `true` on the
/// remainder. Returns the final bracket `(lo, hi)` after `max_iter` halvings or
/// once the midpoint no longer moves in floating point.
pub fn bisect_bracket<F>(mut lo: f64, mut hi: f64, max_iter: usize, mut above: F) -> (f64, f64)
where
    F: FnMut(f64) -> bool,
{
    for _ in 0..max_iter {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if above(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    (lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_cancelled_terms() {
        let v = [1.0, 1e100, 1.0, -1e100];
        assert_eq!(compensated_sum(v), 2.0);
        let naive: f64 = v.iter().sum();
        assert_eq!(naive, 0.0);
    }

    #[test]
    fn scaled_powers_top_is_one() {
        let w = scaled_powers(&[1.0, 4.0, 16.0], 0.5);
        assert_eq!(w[2], 1.0);
        assert!((w[1] - 0.5).abs() < 1e-15);
        assert!((w[0] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn bisect_finds_sqrt2() {
        let (lo, hi) = bisect_bracket(0.0, 2.0, 200, |x| x * x >= 2.0);
        assert!(hi - lo < 1e-15);
        assert!((lo - 2f64.sqrt()).abs() < 1e-15);
    }
}
