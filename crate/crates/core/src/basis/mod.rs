//! Series bases `P^K(x1, x2)` with analytic partial derivatives.
//!
//! A [`BasisSpec`] combines one univariate block (raw polynomial, polynomial
//! orthonormal under the empirical measure of a reference sample, or clamped
//! cubic B-spline) applied to each period's regressor, either additively
//! (`1, b(x1), b(x2)`) or as a full tensor product of `(1, b(x1))` and
//! `(1, b(x2))`. Specs are immutable once built and identified by a digest
//! that fits carry around to detect mismatches.

mod bspline;
mod poly;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::panel::PanelDataset;
use crate::scalar::Real;
use crate::stats;

#[derive(Debug, Error, PartialEq)]
pub enum BasisError {
    #[error("reference sample is empty")]
    EmptySample,
    #[error("reference sample has fewer than two distinct values")]
    DegenerateSample,
    #[error("degree must be at least 1")]
    ZeroDegree,
    #[error("degree {degree} needs more distinct values than the {distinct} available")]
    DegreeTooHigh { degree: usize, distinct: usize },
    #[error("knots must be strictly increasing with at least two breakpoints")]
    InvalidKnots,
    #[error("non-finite evaluation point ({0}, {1})")]
    NonFinite(f64, f64),
}

/// Which univariate family to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BasisKind {
    RawPolynomial { degree: usize },
    OrthogonalPolynomial { degree: usize },
    /// Cubic B-spline with breakpoints at the sample minimum, maximum, and
    /// `interior_knots` equally spaced sample quantiles in between.
    CubicBspline { interior_knots: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Structure {
    /// `(1, b(x1), b(x2))`.
    Additive,
    /// All products of `(1, b(x1))` and `(1, b(x2))`.
    TensorProduct,
    /// `(1, b(x1))`; the second argument is ignored. Used for
    /// cross-sectional fits on the contemporaneous regressor.
    Contemporaneous,
}

/// A fitted univariate block. Its columns never include the constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Univariate<T> {
    RawPolynomial {
        degree: usize,
    },
    OrthogonalPolynomial {
        degree: usize,
        center: T,
        scale: T,
        /// `(degree+1) x (degree+1)` row-major map from standardized
        /// monomials to orthonormal functions; column 0 is the constant.
        transform: Vec<Vec<T>>,
    },
    CubicBspline {
        /// Strictly increasing breakpoints; the first and last are the
        /// boundary knots (multiplicity 4 in the full knot vector).
        breaks: Vec<T>,
    },
}

impl<T: Real> Univariate<T> {
    pub fn columns(&self) -> usize {
        match self {
            Univariate::RawPolynomial { degree } | Univariate::OrthogonalPolynomial { degree, .. } => {
                *degree
            }
            Univariate::CubicBspline { breaks } => bspline::column_count(breaks.len()),
        }
    }

    pub fn domain(&self) -> Option<(T, T)> {
        match self {
            Univariate::CubicBspline { breaks } => Some((breaks[0], breaks[breaks.len() - 1])),
            _ => None,
        }
    }

    /// Values and derivatives of the block at `x`, plus whether `x` was
    /// clamped into the knot span.
    pub fn eval(&self, x: T) -> (Vec<T>, Vec<T>, bool) {
        match self {
            Univariate::RawPolynomial { degree } => {
                let (v, d) = poly::monomials(x, *degree);
                (v[1..].to_vec(), d[1..].to_vec(), false)
            }
            Univariate::OrthogonalPolynomial {
                degree,
                center,
                scale,
                transform,
            } => {
                let t = (x - *center) / *scale;
                let (m, dm) = poly::monomials(t, *degree);
                let mut v = vec![T::zero(); *degree];
                let mut d = vec![T::zero(); *degree];
                for k in 1..=*degree {
                    for j in 0..=*degree {
                        v[k - 1] += m[j] * transform[j][k];
                        d[k - 1] += dm[j] * transform[j][k];
                    }
                    d[k - 1] /= *scale;
                }
                (v, d, false)
            }
            Univariate::CubicBspline { breaks } => {
                let (a, b) = (breaks[0], breaks[breaks.len() - 1]);
                let (xc, clamped) = if x < a {
                    (a, true)
                } else if x > b {
                    (b, true)
                } else {
                    (x, false)
                };
                let (v, d) = bspline::eval(&bspline::knot_vector(breaks), xc);
                (v, d, clamped)
            }
        }
    }

    /// The orthonormal functions including the constant, evaluated at `x`.
    /// `None` for non-orthogonal blocks.
    pub fn orthonormal_with_constant(&self, x: T) -> Option<Vec<T>> {
        match self {
            Univariate::OrthogonalPolynomial {
                degree,
                center,
                scale,
                transform,
            } => {
                let (m, _) = poly::monomials((x - *center) / *scale, *degree);
                Some(
                    (0..=*degree)
                        .map(|k| (0..=*degree).fold(T::zero(), |s, j| s + m[j] * transform[j][k]))
                        .collect(),
                )
            }
            _ => None,
        }
    }
}

/// An immutable series basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisSpec<T> {
    pub structure: Structure,
    pub intercept: bool,
    pub block: Univariate<T>,
    /// Digest of the fields above.
    pub id: u64,
}

/// Basis values and partial derivatives at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisEval<T: Real> {
    pub values: DVector<T>,
    pub d_x1: DVector<T>,
    pub d_x2: DVector<T>,
    /// Set when an argument fell outside the knot span and was clamped.
    pub clamped: bool,
    pub spec_id: u64,
}

fn digest<T: Real>(structure: Structure, intercept: bool, block: &Univariate<T>) -> u64 {
    let json = serde_json::to_vec(&(structure, intercept, block)).expect("basis serializes");
    let h = Sha256::digest(&json);
    u64::from_le_bytes(h[..8].try_into().expect("8 bytes"))
}

fn distinct_count<T: Real>(sorted: &[T]) -> usize {
    if sorted.is_empty() {
        return 0;
    }
    1 + sorted.windows(2).filter(|w| w[1] > w[0]).count()
}

impl<T: Real> BasisSpec<T> {
    fn assemble(structure: Structure, intercept: bool, block: Univariate<T>) -> Self {
        let id = digest(structure, intercept, &block);
        Self {
            structure,
            intercept,
            block,
            id,
        }
    }

    /// Builds a basis against a reference sample (normally the pooled
    /// regressor values of both periods).
    pub fn new(
        kind: BasisKind,
        structure: Structure,
        intercept: bool,
        reference: &[T],
    ) -> Result<Self, BasisError> {
        if reference.is_empty() {
            return Err(BasisError::EmptySample);
        }
        if reference.iter().any(|x| !x.is_finite()) {
            let bad = reference.iter().find(|x| !x.is_finite()).unwrap().as_f64();
            return Err(BasisError::NonFinite(bad, bad));
        }
        let sorted = stats::sorted(reference);
        let distinct = distinct_count(&sorted);
        if distinct < 2 {
            return Err(BasisError::DegenerateSample);
        }
        let block = match kind {
            BasisKind::RawPolynomial { degree } => {
                if degree == 0 {
                    return Err(BasisError::ZeroDegree);
                }
                if distinct <= degree {
                    return Err(BasisError::DegreeTooHigh { degree, distinct });
                }
                Univariate::RawPolynomial { degree }
            }
            BasisKind::OrthogonalPolynomial { degree } => {
                if degree == 0 {
                    return Err(BasisError::ZeroDegree);
                }
                if distinct <= degree {
                    return Err(BasisError::DegreeTooHigh { degree, distinct });
                }
                let center = stats::mean(reference);
                let scale = stats::sample_sd(reference);
                let transform = poly::orthonormal_transform(reference, center, scale, degree)
                    .ok_or(BasisError::DegreeTooHigh { degree, distinct })?;
                Univariate::OrthogonalPolynomial {
                    degree,
                    center,
                    scale,
                    transform: (0..=degree)
                        .map(|j| transform.row(j).iter().copied().collect())
                        .collect(),
                }
            }
            BasisKind::CubicBspline { interior_knots } => {
                let m = interior_knots + 1;
                let mut breaks = vec![sorted[0]];
                for k in 1..m {
                    breaks.push(stats::quantile_sorted(&sorted, k as f64 / m as f64));
                }
                breaks.push(sorted[sorted.len() - 1]);
                // Interior quantiles that coincide with a boundary are dropped.
                breaks.dedup_by(|later, earlier| *later <= *earlier);
                Univariate::CubicBspline { breaks }
            }
        };
        Ok(Self::assemble(structure, intercept, block))
    }

    /// Cubic B-spline basis on explicit breakpoints.
    pub fn bspline_with_breaks(
        breaks: Vec<T>,
        structure: Structure,
        intercept: bool,
    ) -> Result<Self, BasisError> {
        if breaks.len() < 2
            || breaks.iter().any(|b| !b.is_finite())
            || breaks.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(BasisError::InvalidKnots);
        }
        Ok(Self::assemble(structure, intercept, Univariate::CubicBspline { breaks }))
    }

    /// Same univariate block, restructured. Used for contemporaneous fits.
    pub fn with_structure(&self, structure: Structure) -> Self {
        Self::assemble(structure, self.intercept, self.block.clone())
    }

    /// Knot breakpoints for spline bases.
    pub fn breaks(&self) -> Option<&[T]> {
        match &self.block {
            Univariate::CubicBspline { breaks } => Some(breaks),
            _ => None,
        }
    }

    /// Number of columns `K`.
    pub fn columns(&self) -> usize {
        let kb = self.block.columns();
        let c = usize::from(self.intercept);
        match self.structure {
            Structure::Additive => c + 2 * kb,
            Structure::TensorProduct => (1 + kb) * (1 + kb) - 1 + c,
            Structure::Contemporaneous => c + kb,
        }
    }

    /// Evaluates `P^K(x1, x2)` and both partial-derivative vectors.
    pub fn eval(&self, x1: T, x2: T) -> Result<BasisEval<T>, BasisError> {
        if !x1.is_finite() || !x2.is_finite() {
            return Err(BasisError::NonFinite(x1.as_f64(), x2.as_f64()));
        }
        let k = self.columns();
        let mut values = Vec::with_capacity(k);
        let mut d1 = Vec::with_capacity(k);
        let mut d2 = Vec::with_capacity(k);
        let (b1, db1, c1) = self.block.eval(x1);
        let (zero, one) = (T::zero(), T::one());
        let clamped;
        match self.structure {
            Structure::Additive => {
                let (b2, db2, c2) = self.block.eval(x2);
                clamped = c1 || c2;
                if self.intercept {
                    values.push(one);
                    d1.push(zero);
                    d2.push(zero);
                }
                for j in 0..b1.len() {
                    values.push(b1[j]);
                    d1.push(db1[j]);
                    d2.push(zero);
                }
                for j in 0..b2.len() {
                    values.push(b2[j]);
                    d1.push(zero);
                    d2.push(db2[j]);
                }
            }
            Structure::TensorProduct => {
                let (b2, db2, c2) = self.block.eval(x2);
                clamped = c1 || c2;
                let u: Vec<T> = std::iter::once(one).chain(b1).collect();
                let du: Vec<T> = std::iter::once(zero).chain(db1).collect();
                let v: Vec<T> = std::iter::once(one).chain(b2).collect();
                let dv: Vec<T> = std::iter::once(zero).chain(db2).collect();
                for i in 0..u.len() {
                    for j in 0..v.len() {
                        if i == 0 && j == 0 && !self.intercept {
                            continue;
                        }
                        values.push(u[i] * v[j]);
                        d1.push(du[i] * v[j]);
                        d2.push(u[i] * dv[j]);
                    }
                }
            }
            Structure::Contemporaneous => {
                clamped = c1;
                if self.intercept {
                    values.push(one);
                    d1.push(zero);
                    d2.push(zero);
                }
                for j in 0..b1.len() {
                    values.push(b1[j]);
                    d1.push(db1[j]);
                    d2.push(zero);
                }
            }
        }
        Ok(BasisEval {
            values: DVector::from_vec(values),
            d_x1: DVector::from_vec(d1),
            d_x2: DVector::from_vec(d2),
            clamped,
            spec_id: self.id,
        })
    }

    /// Rows `P^K(x1_i, x2_i)` for paired regressor values.
    pub fn design(&self, x1: &[T], x2: &[T]) -> Result<DMatrix<T>, BasisError> {
        assert_eq!(x1.len(), x2.len(), "regressor vectors differ in length");
        let k = self.columns();
        let mut m = DMatrix::<T>::zeros(x1.len(), k);
        for (i, (&a, &b)) in x1.iter().zip(x2).enumerate() {
            let e = self.eval(a, b)?;
            for j in 0..k {
                m[(i, j)] = e.values[j];
            }
        }
        Ok(m)
    }
}

/// Design matrix of a panel: row `i` is `P^K(x1_i, x2_i)`.
pub fn design_matrix<T: Real>(
    spec: &BasisSpec<T>,
    data: &PanelDataset<T>,
) -> Result<DMatrix<T>, BasisError> {
    spec.design(&data.x1, &data.x2)
}
