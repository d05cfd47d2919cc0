use serde::{Deserialize, Serialize};

use super::{clamp_flag, CurvePoint, EffectCurve, EffectError, EffectKind, EvalGrid, Regime};
use crate::basis::{BasisSpec, Structure};
use crate::panel::PanelDataset;
use crate::regress::{qr_fit, Design, Outcome, QuantileFit};
use crate::scalar::Real;

/// Outcome transformation `psi(y1, y2)` whose conditional quantiles are fitted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Transform {
    /// `y2 - y1`.
    Difference,
    /// `y2`.
    Period2,
    /// `lambda * y1 + pi * y2`.
    Linear { lambda: f64, pi: f64 },
}

impl Transform {
    pub fn validate(&self) -> Result<(), EffectError> {
        match *self {
            Transform::Linear { lambda, pi } if !lambda.is_finite() || !pi.is_finite() => {
                Err(EffectError::InvalidGrid("transform coefficients must be finite".into()))
            }
            Transform::Linear { lambda, pi } if lambda == 0.0 && pi == 0.0 => {
                Err(EffectError::InvalidGrid("transform is identically zero".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn apply<T: Real>(&self, y1: &[T], y2: &[T]) -> Vec<T> {
        match *self {
            Transform::Difference => y1.iter().zip(y2).map(|(&a, &b)| b - a).collect(),
            Transform::Period2 => y2.to_vec(),
            Transform::Linear { lambda, pi } => {
                let (l, p) = (T::lit(lambda), T::lit(pi));
                y1.iter().zip(y2).map(|(&a, &b)| l * a + p * b).collect()
            }
        }
    }
}

/// `d/dx2 q(tau | x1, x2)` from a fitted transformed-outcome quantile
/// regression, over every `(x1, x2)` pair of the grid and every fitted tau.
pub fn diff_outcome_curve<T: Real>(
    fit: &QuantileFit<T>,
    spec: &BasisSpec<T>,
    grid: &EvalGrid<T>,
) -> Result<EffectCurve<T>, EffectError> {
    if fit.spec_id != spec.id {
        return Err(EffectError::SpecMismatch(fit.spec_id, spec.id));
    }
    let mut curve = EffectCurve::new(EffectKind::DiffOutcome, Regime::ConditionalIndependence);
    for &x1 in &grid.x {
        for &x2 in &grid.x {
            let e = spec.eval(x1, x2)?;
            for (k, &tau) in fit.taus.iter().enumerate() {
                let p = fit.predict(k, &e)?;
                let mut point = CurvePoint::new(x1, Some(tau), p.d_x2, clamp_flag(e.clamped));
                point.x2 = Some(x2);
                curve.points.push(point);
            }
        }
    }
    Ok(curve)
}

/// Quantile regression of `psi(Y1, Y2)` on the two-period basis, differentiated
/// in the second argument on the full `grid.x x grid.x` product.
pub fn diff_outcome_effect<T: Real>(
    data: &PanelDataset<T>,
    spec: &BasisSpec<T>,
    transform: Transform,
    taus: &[T],
    grid: &EvalGrid<T>,
) -> Result<EffectCurve<T>, EffectError> {
    transform.validate()?;
    if spec.structure == Structure::Contemporaneous {
        return Err(EffectError::WrongStructure(spec.structure));
    }
    let y = transform.apply(&data.y1, &data.y2);
    let design = Design::new(spec, &data.x1, &data.x2)?;
    let w = vec![T::one(); data.n()];
    let fit = qr_fit(&design, &y, taus, &w, Outcome::Transformed)?;
    diff_outcome_curve(&fit, spec, grid)
}
