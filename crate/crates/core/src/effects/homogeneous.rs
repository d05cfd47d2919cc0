use super::{check_linear_pair, check_quantile_pair, clamp_flag, CurvePoint, EffectCurve, EffectError, EffectKind, EvalGrid, Flags, Regime};
use crate::basis::BasisSpec;
use crate::regress::{LinearFit, QuantileFit};
use crate::scalar::Real;

/// Stayer mean effect `d/dx2 [M2 - M1](x, x)` and the overidentification
/// diagnostic `estimate - d/dx1 [M1 - M2](x, x)`.
pub fn mean_effect_homogeneous<T: Real>(
    m1: &LinearFit<T>,
    m2: &LinearFit<T>,
    spec: &BasisSpec<T>,
    grid: &EvalGrid<T>,
) -> Result<(EffectCurve<T>, EffectCurve<T>), EffectError> {
    check_linear_pair(m1, m2, spec.id)?;
    let mut effect = EffectCurve::new(EffectKind::MeanEffect, Regime::TimeHomogeneity);
    let mut overid = EffectCurve::new(EffectKind::MeanOverid, Regime::TimeHomogeneity);
    for &x in &grid.x {
        let e = spec.eval(x, x)?;
        let p1 = m1.predict(&e)?;
        let p2 = m2.predict(&e)?;
        let est = p2.d_x2 - p1.d_x2;
        let alt = p1.d_x1 - p2.d_x1;
        let flags = clamp_flag(e.clamped);
        effect.points.push(CurvePoint::new(x, None, est, flags));
        overid.points.push(CurvePoint::new(x, None, est - alt, flags));
    }
    Ok((effect, overid))
}

/// Stayer quantile effect `d/dx2 [Q2 - Q1](tau | x, x)` on the fits' tau grid,
/// with the first-argument version `d/dx1 [Q1 - Q2](tau | x, x)` as a
/// diagnostic curve. Crossing of fitted quantiles in either period is flagged.
pub fn quantile_effect_homogeneous<T: Real>(
    q1: &QuantileFit<T>,
    q2: &QuantileFit<T>,
    spec: &BasisSpec<T>,
    grid: &EvalGrid<T>,
) -> Result<(EffectCurve<T>, EffectCurve<T>), EffectError> {
    check_quantile_pair(q1, q2, spec.id)?;
    let mut effect = EffectCurve::new(EffectKind::QuantileEffect, Regime::TimeHomogeneity);
    let mut sym = EffectCurve::new(EffectKind::QuantileSymmetric, Regime::TimeHomogeneity);
    for &x in &grid.x {
        let e = spec.eval(x, x)?;
        let mut prev: Option<(T, T)> = None;
        for (k, &tau) in q1.taus.iter().enumerate() {
            let p1 = q1.predict(k, &e)?;
            let p2 = q2.predict(k, &e)?;
            let mut flags = clamp_flag(e.clamped);
            if let Some((v1, v2)) = prev {
                flags.set(Flags::QUANTILE_CROSSING, p1.value < v1 || p2.value < v2);
            }
            prev = Some((p1.value, p2.value));
            effect.points.push(CurvePoint::new(x, Some(tau), p2.d_x2 - p1.d_x2, flags));
            sym.points.push(CurvePoint::new(x, Some(tau), p1.d_x1 - p2.d_x1, flags));
        }
    }
    Ok((effect, sym))
}
