//! Clamped cubic B-splines evaluated with the Cox-de Boor triangle.

use crate::scalar::Real;

pub const DEGREE: usize = 3;

/// Full clamped knot vector: boundary breakpoints repeated `DEGREE + 1` times.
pub fn knot_vector<T: Real>(breaks: &[T]) -> Vec<T> {
    let (a, b) = (breaks[0], breaks[breaks.len() - 1]);
    let mut t = vec![a; DEGREE + 1];
    t.extend_from_slice(&breaks[1..breaks.len() - 1]);
    t.extend(std::iter::repeat_n(b, DEGREE + 1));
    t
}

/// Number of cubic B-spline functions on the given breakpoints.
pub fn column_count(breaks: usize) -> usize {
    breaks - 2 + DEGREE + 1
}

/// Index `mu` with `t[mu] <= x < t[mu + 1]`; the right end belongs to the last span.
fn find_span<T: Real>(t: &[T], x: T) -> usize {
    let last = t.len() - DEGREE - 2;
    if x >= t[last + 1] {
        return last;
    }
    let (mut lo, mut hi) = (DEGREE, last + 1);
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if x < t[mid] {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    lo
}

/// Non-zero basis functions `N_{span-p..=span, p}(x)`.
fn nonzero_funs<T: Real>(t: &[T], span: usize, x: T, p: usize) -> Vec<T> {
    let mut n = vec![T::zero(); p + 1];
    let mut left = vec![T::zero(); p + 1];
    let mut right = vec![T::zero(); p + 1];
    n[0] = T::one();
    for j in 1..=p {
        left[j] = x - t[span + 1 - j];
        right[j] = t[span + j] - x;
        let mut saved = T::zero();
        for r in 0..j {
            let denom = right[r + 1] + left[j - r];
            let temp = if denom == T::zero() {
                T::zero()
            } else {
                n[r] / denom
            };
            n[r] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        n[j] = saved;
    }
    n
}

/// Values and first derivatives of all cubic B-splines at `x`, which must lie
/// inside `[t[0], t[last]]`.
pub fn eval<T: Real>(t: &[T], x: T) -> (Vec<T>, Vec<T>) {
    let p = DEGREE;
    let ncols = t.len() - p - 1;
    let span = find_span(t, x);
    let mut values = vec![T::zero(); ncols];
    let mut derivs = vec![T::zero(); ncols];

    let n_p = nonzero_funs(t, span, x, p);
    for (r, v) in n_p.into_iter().enumerate() {
        values[span - p + r] = v;
    }

    // Lower-degree functions N_{span-p+1..=span, p-1}.
    let n_low = nonzero_funs(t, span, x, p - 1);
    let low = |i: usize| -> T {
        if i + p > span && i <= span {
            n_low[i + p - 1 - span]
        } else {
            T::zero()
        }
    };
    let pf = T::from_usize_lossy(p);
    for i in span - p..=span {
        let mut d = T::zero();
        let den1 = t[i + p] - t[i];
        if den1 > T::zero() {
            d += low(i) / den1;
        }
        let den2 = t[i + p + 1] - t[i + 1];
        if den2 > T::zero() {
            d -= low(i + 1) / den2;
        }
        derivs[i] = pf * d;
    }
    (values, derivs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_interval_is_bernstein() {
        // Breakpoints {0, 1}: the cubic Bernstein polynomials.
        let t = knot_vector(&[0.0f64, 1.0]);
        let x: f64 = 0.3;
        let (v, d) = eval(&t, x);
        let b = [
            (1.0 - x).powi(3),
            3.0 * x * (1.0 - x).powi(2),
            3.0 * x * x * (1.0 - x),
            x.powi(3),
        ];
        let db = [
            -3.0 * (1.0 - x).powi(2),
            3.0 * (1.0 - x).powi(2) - 6.0 * x * (1.0 - x),
            6.0 * x * (1.0 - x) - 3.0 * x * x,
            3.0 * x * x,
        ];
        for k in 0..4 {
            assert!((v[k] - b[k]).abs() < 1e-14);
            assert!((d[k] - db[k]).abs() < 1e-13);
        }
    }

    #[test]
    fn right_endpoint_uses_last_span() {
        let t = knot_vector(&[0.0f64, 2.0, 4.0]);
        let (v, _) = eval(&t, 4.0);
        assert_eq!(v.len(), 5);
        assert!((v[4] - 1.0).abs() < 1e-14);
        assert!(v[..4].iter().all(|&z| z.abs() < 1e-14));
    }
}
