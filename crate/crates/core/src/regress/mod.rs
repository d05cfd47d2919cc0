//! Weighted series regressions.
//!
//! * [`wls_fit`]: weighted least squares with the minimum-norm generalized
//!   inverse, so rank-deficient designs (e.g. spline blocks that sum to the
//!   intercept) are handled deterministically.
//! * [`variance_fit`]: regression of squared residuals from a mean fit on the
//!   same basis and weights.
//! * [`qr_fit`]: weighted check-loss minimization for a grid of quantiles.

mod quantile;

pub use quantile::{check_loss, rq_solve, QrDiagnostics};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::basis::{BasisError, BasisEval, BasisSpec};
use crate::linalg;
use crate::panel::Period;
use crate::scalar::Real;
use crate::stats;

#[derive(Debug, Error, PartialEq)]
pub enum RegressError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("weights must be finite and non-negative")]
    InvalidWeights,
    #[error("all weights are zero")]
    ZeroWeights,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("basis mismatch: fit uses basis {expected:#x}, got {found:#x}")]
    SpecMismatch { expected: u64, found: u64 },
    #[error("mean fit was computed with different weights")]
    WeightsMismatch,
    #[error("quantile index {0} is not in (0, 1)")]
    InvalidTau(f64),
    #[error("quantile solver did not converge for tau={tau} after {iterations} iterations")]
    NonConvergence { tau: f64, iterations: usize },
    #[error("design has no non-zero column among positively weighted rows")]
    DegenerateDesign,
    #[error(transparent)]
    Basis(#[from] BasisError),
}

/// A design matrix tagged with the basis that produced it.
#[derive(Debug, Clone)]
pub struct Design<T: Real> {
    pub matrix: DMatrix<T>,
    pub spec_id: u64,
}

impl<T: Real> Design<T> {
    pub fn new(spec: &BasisSpec<T>, x1: &[T], x2: &[T]) -> Result<Self, BasisError> {
        Ok(Self {
            matrix: spec.design(x1, x2)?,
            spec_id: spec.id,
        })
    }

    pub fn from_matrix(matrix: DMatrix<T>, spec_id: u64) -> Self {
        Self { matrix, spec_id }
    }

    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn cols(&self) -> usize {
        self.matrix.ncols()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "target", content = "period", rename_all = "kebab-case")]
pub enum FitTarget {
    Mean(Period),
    Variance(Period),
}

/// Coefficients of a least-squares series fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearFit<T> {
    pub beta: Vec<T>,
    pub spec_id: u64,
    pub weights_digest: String,
    pub target: FitTarget,
    pub rank: usize,
    /// Lower bound applied to predictions of variance fits.
    pub variance_floor: Option<T>,
}

/// What a quantile fit was run on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    Period(Period),
    /// A transformation of both periods' outcomes.
    Transformed,
}

/// Quantile-regression coefficients for a grid of quantile indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileFit<T> {
    pub taus: Vec<T>,
    pub betas: Vec<Vec<T>>,
    pub outcome: Outcome,
    pub spec_id: u64,
    pub weights_digest: String,
    pub diagnostics: Vec<QrDiagnostics>,
}

/// A fitted value with its partial derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction<T> {
    pub value: T,
    pub d_x1: T,
    pub d_x2: T,
    /// The value was raised to the variance floor.
    pub floored: bool,
}

/// Hex digest identifying a weight vector.
pub fn weights_digest<T: Real>(w: &[T]) -> String {
    let mut h = Sha256::new();
    for v in w {
        h.update(v.as_f64().to_le_bytes());
    }
    let out = h.finalize();
    out[..8].iter().map(|b| format!("{b:02x}")).collect()
}

fn check_inputs<T: Real>(design: &Design<T>, y: &[T], w: &[T]) -> Result<(), RegressError> {
    let n = design.rows();
    if y.len() != n || w.len() != n {
        return Err(RegressError::DimensionMismatch(format!(
            "design has {n} rows, y has {}, w has {}",
            y.len(),
            w.len()
        )));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(RegressError::NonFinite("y"));
    }
    if design.matrix.iter().any(|v| !v.is_finite()) {
        return Err(RegressError::NonFinite("design"));
    }
    if w.iter().any(|v| !v.is_finite() || *v < T::zero()) {
        return Err(RegressError::InvalidWeights);
    }
    if w.iter().all(|v| *v == T::zero()) {
        return Err(RegressError::ZeroWeights);
    }
    Ok(())
}

/// Weighted least squares with the minimum-norm solution on rank deficiency.
pub fn wls_fit<T: Real>(
    design: &Design<T>,
    y: &[T],
    w: &[T],
    target: FitTarget,
) -> Result<LinearFit<T>, RegressError> {
    check_inputs(design, y, w)?;
    let (beta, rank) = linalg::min_norm_lstsq(&design.matrix, y, w, T::lit(linalg::RANK_TOL));
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(RegressError::NonFinite("coefficients"));
    }
    Ok(LinearFit {
        beta: beta.iter().copied().collect(),
        spec_id: design.spec_id,
        weights_digest: weights_digest(w),
        target,
        rank,
        variance_floor: None,
    })
}

/// Series regression of `(y_i - mean_fit(X_i))^2` on the same basis and weights.
///
/// Predictions are floored at `1e-8` times the sample variance of `y`.
pub fn variance_fit<T: Real>(
    design: &Design<T>,
    y: &[T],
    mean_fit: &LinearFit<T>,
    w: &[T],
) -> Result<LinearFit<T>, RegressError> {
    check_inputs(design, y, w)?;
    if mean_fit.spec_id != design.spec_id {
        return Err(RegressError::SpecMismatch {
            expected: mean_fit.spec_id,
            found: design.spec_id,
        });
    }
    if mean_fit.weights_digest != weights_digest(w) {
        return Err(RegressError::WeightsMismatch);
    }
    let beta = DVector::from_column_slice(&mean_fit.beta);
    let fitted = &design.matrix * beta;
    let sq: Vec<T> = y
        .iter()
        .zip(fitted.iter())
        .map(|(&yi, &fi)| (yi - fi) * (yi - fi))
        .collect();
    let period = match mean_fit.target {
        FitTarget::Mean(p) | FitTarget::Variance(p) => p,
    };
    let mut fit = wls_fit(design, &sq, w, FitTarget::Variance(period))?;
    fit.variance_floor = Some(T::lit(1e-8) * stats::sample_variance(y));
    Ok(fit)
}

fn dot<T: Real>(beta: &[T], v: &DVector<T>) -> T {
    beta.iter().zip(v.iter()).fold(T::zero(), |s, (&b, &p)| s + b * p)
}

/// Plug-in prediction `beta'P(x)` and its partial derivatives. Variance
/// targets are floored at `floor`; derivatives are never floored.
pub fn predict<T: Real>(
    fit: &LinearFit<T>,
    basis: &BasisEval<T>,
    floor: T,
) -> Result<Prediction<T>, RegressError> {
    if fit.spec_id != basis.spec_id {
        return Err(RegressError::SpecMismatch {
            expected: fit.spec_id,
            found: basis.spec_id,
        });
    }
    let raw = dot(&fit.beta, &basis.values);
    let (value, floored) = match fit.target {
        FitTarget::Variance(_) if raw < floor => (floor, true),
        _ => (raw, false),
    };
    Ok(Prediction {
        value,
        d_x1: dot(&fit.beta, &basis.d_x1),
        d_x2: dot(&fit.beta, &basis.d_x2),
        floored,
    })
}

impl<T: Real> LinearFit<T> {
    /// [`predict`] with the fit's own floor (zero for mean fits).
    pub fn predict(&self, basis: &BasisEval<T>) -> Result<Prediction<T>, RegressError> {
        predict(self, basis, self.variance_floor.unwrap_or_else(T::zero))
    }
}

impl<T: Real> QuantileFit<T> {
    pub fn tau_index(&self, tau: T) -> Option<usize> {
        let tol = T::lit(1e-9);
        self.taus.iter().position(|&t| (t - tau).abs() <= tol)
    }

    /// `Q(tau_k | x)` and its partial derivatives.
    pub fn predict(&self, k: usize, basis: &BasisEval<T>) -> Result<Prediction<T>, RegressError> {
        if self.spec_id != basis.spec_id {
            return Err(RegressError::SpecMismatch {
                expected: self.spec_id,
                found: basis.spec_id,
            });
        }
        let beta = &self.betas[k];
        Ok(Prediction {
            value: dot(beta, &basis.values),
            d_x1: dot(beta, &basis.d_x1),
            d_x2: dot(beta, &basis.d_x2),
            floored: false,
        })
    }
}

/// Weighted quantile regression at every `tau` in `taus`.
///
/// Each coefficient vector minimizes `sum_i w_i rho_tau(y_i - P_i'b)`. The
/// minimizer need not be unique; any returned vector attains the minimum.
pub fn qr_fit<T: Real>(
    design: &Design<T>,
    y: &[T],
    taus: &[T],
    w: &[T],
    outcome: Outcome,
) -> Result<QuantileFit<T>, RegressError> {
    check_inputs(design, y, w)?;
    if let Some(bad) = taus.iter().find(|&&t| !(t > T::zero() && t < T::one())) {
        return Err(RegressError::InvalidTau(bad.as_f64()));
    }
    let solved: Vec<(DVector<T>, QrDiagnostics)> = taus
        .par_iter()
        .map(|&tau| rq_solve(&design.matrix, y, w, tau))
        .collect::<Result<_, _>>()?;
    let (betas, diagnostics) = solved
        .into_iter()
        .map(|(b, d)| (b.iter().copied().collect(), d))
        .unzip();
    Ok(QuantileFit {
        taus: taus.to_vec(),
        betas,
        outcome,
        spec_id: design.spec_id,
        weights_digest: weights_digest(w),
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{BasisKind, Structure};

    fn ones_design(n: usize) -> Design<f64> {
        Design::from_matrix(DMatrix::<f64>::from_element(n, 1, 1.0), 7)
    }

    #[test]
    fn weighted_mean() {
        let fit = wls_fit(&ones_design(2), &[2.0, 4.0], &[1.0, 1.0], FitTarget::Mean(Period::First)).unwrap();
        assert!((fit.beta[0] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn minimum_norm_split() {
        let d = Design::from_matrix(DMatrix::<f64>::from_element(2, 2, 1.0), 7);
        let fit = wls_fit(&d, &[2.0, 4.0], &[1.0, 1.0], FitTarget::Mean(Period::First)).unwrap();
        assert!((fit.beta[0] - 1.5).abs() < 1e-12);
        assert!((fit.beta[1] - 1.5).abs() < 1e-12);
        assert_eq!(fit.rank, 1);
    }

    #[test]
    fn weight_errors() {
        let d = ones_design(2);
        let t = FitTarget::Mean(Period::First);
        assert_eq!(wls_fit(&d, &[1.0, 2.0], &[0.0, 0.0], t), Err(RegressError::ZeroWeights));
        assert_eq!(wls_fit(&d, &[1.0, 2.0], &[-1.0, 2.0], t), Err(RegressError::InvalidWeights));
        assert_eq!(wls_fit(&d, &[1.0, f64::NAN], &[1.0, 1.0], t), Err(RegressError::NonFinite("y")));
        assert!(matches!(wls_fit(&d, &[1.0], &[1.0, 1.0], t), Err(RegressError::DimensionMismatch(_))));
    }

    #[test]
    fn zero_residuals_give_zero_variance() {
        let spec = BasisSpec::new(BasisKind::RawPolynomial { degree: 1 }, Structure::Additive, true, &[0.0, 1.0, 2.0]).unwrap();
        let x1 = [0.0, 1.0, 2.0, 3.0, 0.5];
        let x2 = [1.0, 0.0, 2.0, 1.0, 3.0];
        let y: Vec<f64> = x1.iter().zip(&x2).map(|(a, b)| 1.0 + 2.0 * a - b).collect();
        let d = Design::new(&spec, &x1, &x2).unwrap();
        let w = [1.0; 5];
        let m = wls_fit(&d, &y, &w, FitTarget::Mean(Period::First)).unwrap();
        let v = variance_fit(&d, &y, &m, &w).unwrap();
        assert!(v.beta.iter().all(|b| b.abs() < 1e-12));
        assert_eq!(v.target, FitTarget::Variance(Period::First));
    }

    #[test]
    fn constant_squared_residuals() {
        let y = [1.0, -1.0, 1.0, -1.0];
        let d = ones_design(4);
        let w = [1.0; 4];
        let m = wls_fit(&d, &y, &w, FitTarget::Mean(Period::Second)).unwrap();
        let v = variance_fit(&d, &y, &m, &w).unwrap();
        assert!((v.beta[0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn variance_fit_checks_provenance() {
        let d = ones_design(3);
        let m = wls_fit(&d, &[1.0, 2.0, 3.0], &[1.0; 3], FitTarget::Mean(Period::First)).unwrap();
        assert_eq!(variance_fit(&d, &[1.0, 2.0, 3.0], &m, &[2.0; 3]), Err(RegressError::WeightsMismatch));
        let other = Design::from_matrix(d.matrix.clone(), 8);
        assert!(matches!(variance_fit(&other, &[1.0, 2.0, 3.0], &m, &[1.0; 3]), Err(RegressError::SpecMismatch { .. })));
    }

    fn eval_for(spec_id: u64, values: &[f64], d1: &[f64], d2: &[f64]) -> BasisEval<f64> {
        BasisEval {
            values: DVector::from_column_slice(values),
            d_x1: DVector::from_column_slice(d1),
            d_x2: DVector::from_column_slice(d2),
            clamped: false,
            spec_id,
        }
    }

    #[test]
    fn predict_intercept_and_linear() {
        let fit = LinearFit {
            beta: vec![3.0],
            spec_id: 1,
            weights_digest: String::new(),
            target: FitTarget::Mean(Period::First),
            rank: 1,
            variance_floor: None,
        };
        let p = fit.predict(&eval_for(1, &[1.0], &[0.0], &[0.0])).unwrap();
        assert_eq!((p.value, p.d_x1, p.d_x2, p.floored), (3.0, 0.0, 0.0, false));

        let lin = LinearFit { beta: vec![0.0, 2.0, 1.0], ..fit.clone() };
        let (a, b) = (0.7, -1.3);
        let p = lin.predict(&eval_for(1, &[1.0, a, b], &[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0])).unwrap();
        assert!((p.value - (2.0 * a + b)).abs() < 1e-15);
        assert_eq!((p.d_x1, p.d_x2), (2.0, 1.0));

        assert!(matches!(fit.predict(&eval_for(2, &[1.0], &[0.0], &[0.0])), Err(RegressError::SpecMismatch { .. })));
    }

    #[test]
    fn variance_prediction_is_floored() {
        let fit = LinearFit {
            beta: vec![-0.01],
            spec_id: 1,
            weights_digest: String::new(),
            target: FitTarget::Variance(Period::First),
            rank: 1,
            variance_floor: Some(1e-8),
        };
        let p = fit.predict(&eval_for(1, &[1.0], &[0.0], &[0.0])).unwrap();
        assert_eq!(p.value, 1e-8);
        assert!(p.floored);
    }

    #[test]
    fn median_of_three() {
        let fit = qr_fit(&ones_design(3), &[1.0, 2.0, 3.0], &[0.5], &[1.0; 3], Outcome::Period(Period::First)).unwrap();
        assert!((fit.betas[0][0] - 2.0).abs() < 1e-10);
    }

    #[test]
    fn non_unique_quartile_attains_minimum() {
        let y = [0.0, 1.0, 2.0, 3.0];
        let d = ones_design(4);
        let fit = qr_fit(&d, &y, &[0.25], &[1.0; 4], Outcome::Period(Period::First)).unwrap();
        let b = fit.betas[0][0];
        assert!((-1e-10..=1.0 + 1e-10).contains(&b));
        let at = |v: f64| check_loss(&d.matrix, &y, &[1.0; 4], &[v], 0.25);
        // Loss is flat at 1.5 on [0, 1].
        assert!((at(b) - 1.5).abs() < 1e-12);
        assert!((at(0.0) - 1.5).abs() < 1e-12 && (at(1.0) - 1.5).abs() < 1e-12);
    }

    #[test]
    fn invalid_tau_rejected() {
        let d = ones_design(3);
        assert_eq!(
            qr_fit(&d, &[1.0, 2.0, 3.0], &[1.0], &[1.0; 3], Outcome::Transformed),
            Err(RegressError::InvalidTau(1.0))
        );
    }
}
