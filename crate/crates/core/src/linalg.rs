//! Dense linear-algebra helpers built on `nalgebra`.

use nalgebra::{DMatrix, DVector};

use crate::scalar::Real;

/// Relative singular-value cutoff used to decide numerical rank.
pub const RANK_TOL: f64 = 1e-10;

/// Minimum-norm solution of `min_b sum_i w_i (y_i - a_i' b)^2`.
///
/// The solution is `(A'WA)^+ A'W y` with the Moore-Penrose inverse, obtained
/// from a Householder QR of `W^{1/2} A` followed by an SVD of the triangular
/// factor. Singular values below `rel_tol * sigma_max` are treated as zero.
/// Returns the coefficients and the numerical rank.
pub fn min_norm_lstsq<T: Real>(
    design: &DMatrix<T>,
    y: &[T],
    w: &[T],
    rel_tol: T,
) -> (DVector<T>, usize) {
    let (n, k) = design.shape();
    debug_assert_eq!(y.len(), n);
    debug_assert_eq!(w.len(), n);

    let mut a = design.clone();
    let mut b = DVector::from_column_slice(y);
    for i in 0..n {
        let s = w[i].sqrt();
        if s != T::one() {
            a.row_mut(i).scale_mut(s);
            b[i] *= s;
        }
    }

    // Reduce to a k x k triangular problem when the system is tall.
    let (core, rhs) = if n > k {
        let qr = a.qr();
        qr.q_tr_mul(&mut b);
        (qr.unpack_r(), b.rows(0, k).into_owned())
    } else {
        (a, b)
    };

    pinv_apply(core, &rhs, rel_tol)
}

/// Applies the pseudo-inverse of `m` to `rhs`; returns the result and the rank.
pub fn pinv_apply<T: Real>(m: DMatrix<T>, rhs: &DVector<T>, rel_tol: T) -> (DVector<T>, usize) {
    let k = m.ncols();
    let svd = m.svd(true, true);
    let u = svd.u.as_ref().expect("u computed");
    let v_t = svd.v_t.as_ref().expect("v_t computed");
    let sv = &svd.singular_values;
    let smax = sv.iter().fold(T::zero(), |acc, &s| if s > acc { s } else { acc });
    let cut = smax * rel_tol;
    let mut x = DVector::<T>::zeros(k);
    let mut rank = 0;
    if smax <= T::zero() {
        return (x, 0);
    }
    for (j, &s) in sv.iter().enumerate() {
        if s > cut {
            rank += 1;
            let coef = u.column(j).dot(rhs) / s;
            x.axpy(coef, &v_t.row(j).transpose(), T::one());
        }
    }
    (x, rank)
}

/// Greedy selection of linearly independent columns (modified Gram-Schmidt),
/// in their original order. A column is kept when its residual norm after
/// projecting out the kept columns exceeds `rel_tol` times its own norm.
pub fn independent_columns<T: Real>(a: &DMatrix<T>, rel_tol: T) -> Vec<usize> {
    let mut basis: Vec<DVector<T>> = Vec::new();
    let mut keep = Vec::new();
    for j in 0..a.ncols() {
        let col = a.column(j).into_owned();
        let norm = col.norm();
        if norm == T::zero() {
            continue;
        }
        let mut r = col;
        // Two passes keep the orthogonalization accurate.
        for _ in 0..2 {
            for q in &basis {
                let c = q.dot(&r);
                r.axpy(-c, q, T::one());
            }
        }
        let rn = r.norm();
        if rn > norm * rel_tol {
            basis.push(r / rn);
            keep.push(j);
        }
    }
    keep
}
