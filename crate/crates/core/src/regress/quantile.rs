//! Weighted check-loss minimization.
//!
//! The problem `min_b sum_i w_i rho_tau(y_i - x_i'b)` is solved in two
//! stages. A primal-dual interior-point method (Mehrotra predictor-corrector)
//! on the bounded dual
//!
//! ```text
//!   max_a  y'a   s.t.  X'a = (1 - tau) X'1,  0 <= a <= 1
//! ```
//!
//! gets close to the optimum cheaply. The iterate is then snapped to a vertex
//! (`p` observations fitted exactly) and improved by exact simplex pivots
//! along edge directions with a weighted-median line search, so the
//! returned coefficients sit on an optimal vertex rather than merely near
//! one. Positive weights are folded into the rows since `rho_tau` is
//! positively homogeneous; rows with zero weight are dropped.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::RegressError;
use crate::linalg;
use crate::scalar::Real;

/// Solver bookkeeping for one quantile index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QrDiagnostics {
    pub ip_iterations: usize,
    pub pivots: usize,
    /// Rank of the positively weighted design.
    pub rank: usize,
    /// Weighted check loss at the returned coefficients.
    pub loss: f64,
}

const MAX_IP_ITER: usize = 100;

#[inline]
fn rho<T: Real>(u: T, tau: T) -> T {
    if u < T::zero() {
        (tau - T::one()) * u
    } else {
        tau * u
    }
}

/// `sum_i w_i rho_tau(y_i - x_i'beta)`.
pub fn check_loss<T: Real>(x: &DMatrix<T>, y: &[T], w: &[T], beta: &[T], tau: T) -> T {
    let mut total = T::zero();
    for i in 0..x.nrows() {
        if w[i] == T::zero() {
            continue;
        }
        let mut fit = T::zero();
        for j in 0..x.ncols() {
            fit += x[(i, j)] * beta[j];
        }
        total += w[i] * rho(y[i] - fit, tau);
    }
    total
}

/// Minimizes the weighted check loss; see the module docs.
pub fn rq_solve<T: Real>(
    x: &DMatrix<T>,
    y: &[T],
    w: &[T],
    tau: T,
) -> Result<(DVector<T>, QrDiagnostics), RegressError> {
    let k = x.ncols();
    let rows: Vec<usize> = (0..x.nrows()).filter(|&i| w[i] > T::zero()).collect();
    if rows.is_empty() {
        return Err(RegressError::ZeroWeights);
    }
    let m = rows.len();
    let mut xs = DMatrix::<T>::zeros(m, k);
    let mut ys = Vec::with_capacity(m);
    for (r, &i) in rows.iter().enumerate() {
        for j in 0..k {
            xs[(r, j)] = x[(i, j)] * w[i];
        }
        ys.push(y[i] * w[i]);
    }

    let cols = linalg::independent_columns(&xs, T::lit(linalg::RANK_TOL));
    if cols.is_empty() {
        return Err(RegressError::DegenerateDesign);
    }
    let xr = xs.select_columns(&cols);

    let (start, ip_iterations) = interior_point(&xr, &ys, tau);
    let (reduced, pivots) = refine_to_vertex(&xr, &ys, tau, &start)?;

    let mut beta = DVector::<T>::zeros(k);
    for (c, &j) in cols.iter().enumerate() {
        beta[j] = reduced[c];
    }
    let loss = check_loss(x, y, w, beta.as_slice(), tau).as_f64();
    Ok((
        beta,
        QrDiagnostics {
            ip_iterations,
            pivots,
            rank: cols.len(),
            loss,
        },
    ))
}

/// Largest step in `[0, 1]` keeping `v + alpha * dv >= 0`.
fn max_step<T: Real>(v: &DVector<T>, dv: &DVector<T>) -> T {
    let mut alpha = T::one();
    for (vi, di) in v.iter().zip(dv.iter()) {
        if *di < T::zero() {
            let a = -*vi / *di;
            if a < alpha {
                alpha = a;
            }
        }
    }
    alpha
}

/// Solves `X' diag(d) X` systems, regularizing if the factorization fails.
fn normal_factor<T: Real>(x: &DMatrix<T>, d: &DVector<T>) -> Option<nalgebra::Cholesky<T, nalgebra::Dyn>> {
    let mut xd = x.clone();
    for (i, di) in d.iter().enumerate() {
        xd.row_mut(i).scale_mut(di.sqrt());
    }
    let mut ada = xd.tr_mul(&xd);
    if let Some(c) = ada.clone().cholesky() {
        return Some(c);
    }
    let bump = ada.diagonal().amax().max(T::eps()) * T::lit(1e-12);
    for j in 0..ada.nrows() {
        ada[(j, j)] += bump;
    }
    ada.cholesky()
}

/// Mehrotra predictor-corrector on the bounded dual. Returns the primal
/// coefficients (negated dual multipliers) and the iteration count. Never
/// fails: on numerical trouble the current iterate is returned for the
/// vertex stage to finish.
fn interior_point<T: Real>(x: &DMatrix<T>, y: &[T], tau: T) -> (DVector<T>, usize) {
    let (m, _) = x.shape();
    let one = T::one();
    let yv = DVector::from_column_slice(y);
    let c = -yv.clone();
    let b = x.tr_mul(&DVector::from_element(m, one - tau));

    let (ls, _) = linalg::min_norm_lstsq(x, y, &vec![one; m], T::lit(linalg::RANK_TOL));
    let mut lam = -ls;
    let mut a = DVector::from_element(m, one - tau);
    let mut s = DVector::from_element(m, tau);
    let r = &c - x * &lam;
    let shift = {
        let mean_abs = r.iter().fold(T::zero(), |acc, v| acc + v.abs()) / T::from_usize_lossy(m);
        if mean_abs > T::zero() {
            mean_abs
        } else {
            one
        }
    };
    let mut z = r.map(|v| if v > T::zero() { v } else { T::zero() }) .add_scalar(shift);
    let mut wd = r.map(|v| if v < T::zero() { -v } else { T::zero() }).add_scalar(shift);

    let tol = T::eps().sqrt() * T::lit(1e-2);
    let two_m = T::from_usize_lossy(2 * m);
    let step_frac = T::lit(0.99995);

    for iter in 0..MAX_IP_ITER {
        let gap = a.dot(&z) + s.dot(&wd);
        let pobj = c.dot(&a);
        let rp = &b - x.tr_mul(&a);
        let rd = &c - x * &lam - &z + &wd;
        let scale = one + pobj.abs();
        if gap <= tol * scale && rp.amax() <= tol * (one + b.amax()) && rd.amax() <= tol * (one + yv.amax()) {
            return (-lam, iter);
        }
        let mu = gap / two_m;

        let d = DVector::from_fn(m, |i, _| one / (z[i] / a[i] + wd[i] / s[i]));
        let Some(chol) = normal_factor(x, &d) else {
            return (-lam, iter);
        };

        let solve = |rxz: &DVector<T>, rsw: &DVector<T>| {
            let rt = DVector::from_fn(m, |i, _| rd[i] - rxz[i] / a[i] + rsw[i] / s[i]);
            let rhs = &rp + x.tr_mul(&d.component_mul(&rt));
            let dlam = chol.solve(&rhs);
            let da = d.component_mul(&(x * &dlam - &rt));
            let dz = DVector::from_fn(m, |i, _| (rxz[i] - z[i] * da[i]) / a[i]);
            let dw = DVector::from_fn(m, |i, _| (rsw[i] + wd[i] * da[i]) / s[i]);
            (dlam, da, dz, dw)
        };

        // Predictor.
        let rxz = -a.component_mul(&z);
        let rsw = -s.component_mul(&wd);
        let (_, da, dz, dw) = solve(&rxz, &rsw);
        let ds = -da.clone();
        let ap = max_step(&a, &da).min(max_step(&s, &ds));
        let ad = max_step(&z, &dz).min(max_step(&wd, &dw));
        let mu_aff = ((&a + &da * ap).dot(&(&z + &dz * ad)) + (&s + &ds * ap).dot(&(&wd + &dw * ad))) / two_m;
        let ratio = mu_aff / mu;
        let sigma = ratio * ratio * ratio;

        // Corrector.
        let smu = sigma * mu;
        let rxz = DVector::from_fn(m, |i, _| smu - a[i] * z[i] - da[i] * dz[i]);
        let rsw = DVector::from_fn(m, |i, _| smu - s[i] * wd[i] - ds[i] * dw[i]);
        let (dlam, da, dz, dw) = solve(&rxz, &rsw);
        let ds = -da.clone();
        let ap = (step_frac * max_step(&a, &da).min(max_step(&s, &ds))).min(one);
        let ad = (step_frac * max_step(&z, &dz).min(max_step(&wd, &dw))).min(one);
        if !(ap > T::zero() && ad > T::zero()) || dlam.iter().any(|v| !v.is_finite()) {
            return (-lam, iter);
        }
        a += &da * ap;
        s += &ds * ap;
        lam += &dlam * ad;
        z += &dz * ad;
        wd += &dw * ad;
    }
    (-lam, MAX_IP_ITER)
}

/// Picks `p` linearly independent rows, preferring small `|residual|`.
fn initial_basis<T: Real>(x: &DMatrix<T>, resid: &DVector<T>) -> Option<Vec<usize>> {
    let (m, p) = x.shape();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| {
        resid[i]
            .abs()
            .partial_cmp(&resid[j].abs())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(i.cmp(&j))
    });
    let mut q: Vec<DVector<T>> = Vec::with_capacity(p);
    let mut chosen = Vec::with_capacity(p);
    let tol = T::lit(1e-8);
    for i in order {
        let row = x.row(i).transpose();
        let norm = row.norm();
        if norm == T::zero() {
            continue;
        }
        let mut v = row;
        for _ in 0..2 {
            for u in &q {
                let c = u.dot(&v);
                v.axpy(-c, u, T::one());
            }
        }
        let vn = v.norm();
        if vn > tol * norm {
            q.push(v / vn);
            chosen.push(i);
            if chosen.len() == p {
                return Some(chosen);
            }
        }
    }
    None
}

/// Exact simplex pivots from the vertex nearest `start` to an optimal vertex.
fn refine_to_vertex<T: Real>(
    x: &DMatrix<T>,
    y: &[T],
    tau: T,
    start: &DVector<T>,
) -> Result<(DVector<T>, usize), RegressError> {
    let (m, p) = x.shape();
    let one = T::one();
    let yv = DVector::from_column_slice(y);
    let resid0 = &yv - x * start;
    let mut basis = initial_basis(x, &resid0).ok_or(RegressError::DegenerateDesign)?;

    let ymax = yv.amax().max(one);
    let zero_tol = T::eps() * T::lit(64.0) * ymax;
    let slope_tol = T::eps().sqrt() * T::lit(1e-2);
    let max_pivots = 50 * m + 1000;
    let mut in_basis = vec![false; m];

    for pivots in 0..=max_pivots {
        let xh = x.select_rows(&basis);
        let Some(inv) = xh.clone().try_inverse() else {
            return Err(RegressError::DegenerateDesign);
        };
        let yh = DVector::from_iterator(p, basis.iter().map(|&i| y[i]));
        let beta = &inv * yh;
        let mut r = &yv - x * &beta;
        in_basis.iter_mut().for_each(|v| *v = false);
        for &h in &basis {
            r[h] = T::zero();
            in_basis[h] = true;
        }
        let g = x * &inv;

        // Directional derivatives along +/- each edge.
        let mut best: Option<(usize, T, T)> = None;
        for j in 0..p {
            let mut up = one - tau;
            let mut down = tau;
            let mut mass = one;
            for i in 0..m {
                if in_basis[i] {
                    continue;
                }
                let gij = g[(i, j)];
                mass += gij.abs();
                let ri = r[i];
                if ri > zero_tol {
                    up -= tau * gij;
                    down += tau * gij;
                } else if ri < -zero_tol {
                    up += (one - tau) * gij;
                    down -= (one - tau) * gij;
                } else {
                    up += ((one - tau) * gij).max(-tau * gij);
                    down += (tau * gij).max(-(one - tau) * gij);
                }
            }
            for (sign, slope) in [(one, up), (-one, down)] {
                if slope < -slope_tol * mass && best.is_none_or(|(_, _, s)| slope < s) {
                    best = Some((j, sign, slope));
                }
            }
        }
        let Some((j, sign, slope)) = best else {
            return Ok((beta, pivots));
        };

        // Weighted-median line search over residual sign changes.
        let mut breaks: Vec<(T, T, usize)> = Vec::new();
        for i in 0..m {
            if in_basis[i] || r[i].abs() <= zero_tol {
                continue;
            }
            let c = sign * g[(i, j)];
            if c == T::zero() {
                continue;
            }
            let t = r[i] / c;
            if t > T::zero() {
                breaks.push((t, c.abs(), i));
            }
        }
        breaks.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal).then(a.2.cmp(&b.2)));
        let mut cur = slope;
        let mut entering = None;
        for &(_, jump, i) in &breaks {
            cur += jump;
            if cur >= T::zero() {
                entering = Some(i);
                break;
            }
        }
        let Some(i) = entering else {
            return Err(RegressError::NonConvergence {
                tau: tau.as_f64(),
                iterations: pivots,
            });
        };
        basis[j] = i;
    }
    Err(RegressError::NonConvergence {
        tau: tau.as_f64(),
        iterations: max_pivots,
    })
}
