//! Small descriptive-statistics helpers.

use crate::scalar::{total_cmp, Real};

pub fn mean<T: Real>(xs: &[T]) -> T {
    if xs.is_empty() {
        return T::zero();
    }
    let mut s = T::zero();
    for &x in xs {
        s += x;
    }
    s / T::from_usize_lossy(xs.len())
}

/// Sample standard deviation with the `n - 1` divisor; zero for fewer than two values.
pub fn sample_sd<T: Real>(xs: &[T]) -> T {
    if xs.len() < 2 {
        return T::zero();
    }
    let m = mean(xs);
    let mut ss = T::zero();
    for &x in xs {
        ss += (x - m) * (x - m);
    }
    (ss / T::from_usize_lossy(xs.len() - 1)).sqrt()
}

pub fn sample_variance<T: Real>(xs: &[T]) -> T {
    let sd = sample_sd(xs);
    sd * sd
}

pub fn sorted<T: Real>(xs: &[T]) -> Vec<T> {
    let mut v = xs.to_vec();
    v.sort_by(total_cmp);
    v
}

/// Linear-interpolation sample quantile (Hyndman-Fan type 7) of a sorted slice.
pub fn quantile_sorted<T: Real>(sorted: &[T], p: f64) -> T {
    assert!(!sorted.is_empty(), "quantile of empty sample");
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = p.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = T::lit(h - lo as f64);
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

pub fn median<T: Real>(xs: &[T]) -> T {
    quantile_sorted(&sorted(xs), 0.5)
}

/// Index (0-based) of the lower empirical `p`-quantile: the order statistic
/// with 1-based rank `ceil(p * len)`, clamped to `[1, len]`.
pub fn lower_quantile_index(p: f64, len: usize) -> usize {
    assert!(len > 0);
    // Products like 0.9 * 10 land a hair above the integer; snap them back.
    let raw = p * len as f64;
    let snapped = if (raw - raw.round()).abs() < 1e-9 {
        raw.round()
    } else {
        raw.ceil()
    };
    let rank = (snapped as usize).clamp(1, len);
    rank - 1
}

/// Lower empirical `p`-quantile of an unsorted sample.
pub fn lower_quantile<T: Real>(xs: &[T], p: f64) -> T {
    let s = sorted(xs);
    s[lower_quantile_index(p, s.len())]
}
