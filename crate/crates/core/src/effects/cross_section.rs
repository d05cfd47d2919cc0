use super::{clamp_flag, CurvePoint, EffectCurve, EffectError, EffectKind, EvalGrid, Flags, Regime};
use crate::basis::{BasisSpec, Structure};
use crate::panel::{PanelDataset, Period};
use crate::regress::{qr_fit, wls_fit, Design, FitTarget, LinearFit, Outcome, QuantileFit};
use crate::scalar::Real;

/// What the cross-section comparator fits.
#[derive(Debug, Clone, PartialEq)]
pub enum CrossSectionTarget<T> {
    Mean,
    Quantiles(Vec<T>),
}

fn check_contemporaneous<T: Real>(spec: &BasisSpec<T>) -> Result<(), EffectError> {
    if spec.structure != Structure::Contemporaneous {
        return Err(EffectError::WrongStructure(spec.structure));
    }
    Ok(())
}

/// Average over periods of the derivative of the per-period mean fit on the
/// contemporaneous regressor.
pub fn cross_section_mean<T: Real>(
    fits: [&LinearFit<T>; 2],
    spec: &BasisSpec<T>,
    grid: &EvalGrid<T>,
) -> Result<EffectCurve<T>, EffectError> {
    check_contemporaneous(spec)?;
    for f in fits {
        if f.spec_id != spec.id {
            return Err(EffectError::SpecMismatch(f.spec_id, spec.id));
        }
    }
    let half = T::lit(0.5);
    let mut curve = EffectCurve::new(EffectKind::CrossSectionMean, Regime::CrossSection);
    for &x in &grid.x {
        let e = spec.eval(x, x)?;
        let d = fits[0].predict(&e)?.d_x1 + fits[1].predict(&e)?.d_x1;
        curve.points.push(CurvePoint::new(x, None, d * half, clamp_flag(e.clamped)));
    }
    Ok(curve)
}

/// Quantile analogue of [`cross_section_mean`] at every fitted tau.
pub fn cross_section_quantile<T: Real>(
    fits: [&QuantileFit<T>; 2],
    spec: &BasisSpec<T>,
    grid: &EvalGrid<T>,
) -> Result<EffectCurve<T>, EffectError> {
    check_contemporaneous(spec)?;
    for f in fits {
        if f.spec_id != spec.id {
            return Err(EffectError::SpecMismatch(f.spec_id, spec.id));
        }
    }
    if fits[0].taus != fits[1].taus {
        return Err(EffectError::TauMismatch);
    }
    let half = T::lit(0.5);
    let mut curve = EffectCurve::new(EffectKind::CrossSectionQuantile, Regime::CrossSection);
    for &x in &grid.x {
        let e = spec.eval(x, x)?;
        let mut prev: Option<(T, T)> = None;
        for (k, &tau) in fits[0].taus.iter().enumerate() {
            let p1 = fits[0].predict(k, &e)?;
            let p2 = fits[1].predict(k, &e)?;
            let mut flags = clamp_flag(e.clamped);
            if let Some((v1, v2)) = prev {
                flags.set(Flags::QUANTILE_CROSSING, p1.value < v1 || p2.value < v2);
            }
            prev = Some((p1.value, p2.value));
            curve.points.push(CurvePoint::new(x, Some(tau), (p1.d_x1 + p2.d_x1) * half, flags));
        }
    }
    Ok(curve)
}

/// Fits each period on its own regressor and returns the averaged derivative.
pub fn cross_section_effect<T: Real>(
    data: &PanelDataset<T>,
    spec: &BasisSpec<T>,
    target: &CrossSectionTarget<T>,
    grid: &EvalGrid<T>,
) -> Result<EffectCurve<T>, EffectError> {
    check_contemporaneous(spec)?;
    let w = vec![T::one(); data.n()];
    let designs = [
        Design::new(spec, &data.x1, &data.x1)?,
        Design::new(spec, &data.x2, &data.x2)?,
    ];
    match target {
        CrossSectionTarget::Mean => {
            let f1 = wls_fit(&designs[0], &data.y1, &w, FitTarget::Mean(Period::First))?;
            let f2 = wls_fit(&designs[1], &data.y2, &w, FitTarget::Mean(Period::Second))?;
            cross_section_mean([&f1, &f2], spec, grid)
        }
        CrossSectionTarget::Quantiles(taus) => {
            let f1 = qr_fit(&designs[0], &data.y1, taus, &w, Outcome::Period(Period::First))?;
            let f2 = qr_fit(&designs[1], &data.y2, taus, &w, Outcome::Period(Period::Second))?;
            cross_section_quantile([&f1, &f2], spec, grid)
        }
    }
}
