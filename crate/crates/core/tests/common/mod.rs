#![allow(dead_code)]

use nalgebra::DMatrix;

/// Minimum of `sum_i w_i rho_tau(y_i - x_i'b)` by a dense-tableau simplex on
/// the textbook LP
///
/// ```text
///   min  sum_i w_i (tau u_i + (1 - tau) v_i)
///   s.t. X b+ - X b- + u - v = y,   b+, b-, u, v >= 0
/// ```
///
/// Rows with `y_i < 0` are negated so that the `u`/`v` columns form a
/// feasible starting basis. Bland's rule prevents cycling.
pub fn lp_check_loss_min(x: &DMatrix<f64>, y: &[f64], w: &[f64], tau: f64) -> f64 {
    let (n, k) = x.shape();
    let cols = 2 * k + 2 * n;
    // Tableau rows 0..n constraints, last column rhs.
    let mut t = vec![vec![0.0; cols + 1]; n];
    let mut cost = vec![0.0; cols];
    let mut basis = vec![0usize; n];
    for i in 0..n {
        let sign = if y[i] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..k {
            t[i][j] = sign * x[(i, j)];
            t[i][k + j] = -sign * x[(i, j)];
        }
        t[i][2 * k + i] = sign;
        t[i][2 * k + n + i] = -sign;
        t[i][cols] = sign * y[i];
        cost[2 * k + i] = w[i] * tau;
        cost[2 * k + n + i] = w[i] * (1.0 - tau);
        basis[i] = if sign > 0.0 { 2 * k + i } else { 2 * k + n + i };
    }

    let eps = 1e-11;
    for _ in 0..100_000 {
        // Reduced costs c_j - c_B' B^{-1} a_j from the current tableau.
        let entering = (0..cols).find(|&j| {
            if basis.contains(&j) {
                return false;
            }
            let mut rc = cost[j];
            for i in 0..n {
                rc -= cost[basis[i]] * t[i][j];
            }
            rc < -eps
        });
        let Some(e) = entering else {
            return (0..n).map(|i| cost[basis[i]] * t[i][cols]).sum();
        };
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..n {
            if t[i][e] > eps {
                let ratio = t[i][cols] / t[i][e];
                let better = match leave {
                    None => true,
                    Some((l, r)) => ratio < r - 1e-14 || (ratio <= r + 1e-14 && basis[i] < basis[l]),
                };
                if better {
                    leave = Some((i, ratio));
                }
            }
        }
        let (l, _) = leave.expect("check-loss LP is bounded below");
        let piv = t[l][e];
        for v in t[l].iter_mut() {
            *v /= piv;
        }
        let prow = t[l].clone();
        for (i, row) in t.iter_mut().enumerate() {
            if i != l && row[e] != 0.0 {
                let f = row[e];
                for (v, p) in row.iter_mut().zip(prow.iter()) {
                    *v -= f * p;
                }
            }
        }
        basis[l] = e;
    }
    panic!("simplex oracle did not terminate");
}

/// Direct evaluation of the weighted check loss.
pub fn check_loss_direct(x: &DMatrix<f64>, y: &[f64], w: &[f64], beta: &[f64], tau: f64) -> f64 {
    (0..x.nrows())
        .map(|i| {
            let r = y[i] - (0..x.ncols()).map(|j| x[(i, j)] * beta[j]).sum::<f64>();
            w[i] * if r < 0.0 { (tau - 1.0) * r } else { tau * r }
        })
        .sum()
}
