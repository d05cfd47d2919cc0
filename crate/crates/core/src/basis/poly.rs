//! Monomials and polynomials orthonormal under an empirical measure.

use nalgebra::DMatrix;

use crate::scalar::Real;

/// Powers `t^0..=t^degree` and their derivatives with respect to `t`.
pub fn monomials<T: Real>(t: T, degree: usize) -> (Vec<T>, Vec<T>) {
    let mut v = Vec::with_capacity(degree + 1);
    let mut d = Vec::with_capacity(degree + 1);
    let mut pow = T::one();
    let mut prev = T::zero();
    for j in 0..=degree {
        v.push(pow);
        d.push(T::from_usize_lossy(j) * prev);
        prev = pow;
        pow *= t;
    }
    (v, d)
}

/// Linear map taking standardized monomials to functions orthonormal under the
/// empirical measure of `sample`.
///
/// With `V` the `m x (degree+1)` Vandermonde matrix of `(x - center) / scale`
/// and `V = QR`, the returned matrix is `sqrt(m) R^{-1} D`, where `D` flips
/// signs so that `R` has a positive diagonal. Row `j` multiplies `t^j`.
/// Returns `None` when the sample supports fewer than `degree + 1` functions.
pub fn orthonormal_transform<T: Real>(
    sample: &[T],
    center: T,
    scale: T,
    degree: usize,
) -> Option<DMatrix<T>> {
    let m = sample.len();
    let k = degree + 1;
    if m < k {
        return None;
    }
    let mut v = DMatrix::<T>::zeros(m, k);
    for (i, &x) in sample.iter().enumerate() {
        let (row, _) = monomials((x - center) / scale, degree);
        for j in 0..k {
            v[(i, j)] = row[j];
        }
    }
    let r = v.qr().unpack_r();
    let r00 = r[(0, 0)].abs();
    let tol = r00 * T::lit(1e-10);
    if (0..k).any(|j| r[(j, j)].abs() <= tol) {
        return None;
    }
    let mut r_signed = r;
    for j in 0..k {
        if r_signed[(j, j)] < T::zero() {
            let mut row = r_signed.row_mut(j);
            row.neg_mut();
        }
    }
    let inv = r_signed.solve_upper_triangular(&DMatrix::identity(k, k))?;
    Some(inv * T::from_usize_lossy(m).sqrt())
}
