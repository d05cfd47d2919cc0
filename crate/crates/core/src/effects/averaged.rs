use super::{CurvePoint, EffectCurve, EffectError, EffectKind, Flags};
use crate::scalar::{total_cmp, Real};

/// Index of the entry of sorted `xs` closest to `v` (lower one on ties).
fn nearest<T: Real>(xs: &[T], v: T) -> usize {
    let hi = xs.partition_point(|&g| g < v);
    if hi == 0 {
        return 0;
    }
    if hi == xs.len() {
        return xs.len() - 1;
    }
    if v - xs[hi - 1] <= xs[hi] - v {
        hi - 1
    } else {
        hi
    }
}

/// Averages an `(x, tau)` curve over an empirical x-measure.
///
/// Each measure point is mapped to the nearest grid x; points outside the
/// grid's x range are dropped and counted in [`EffectCurve::dropped`]. The
/// `x` of each output point is the mean of the retained measure.
pub fn averaged_quantile_effect<T: Real>(curve: &EffectCurve<T>, measure: &[T]) -> Result<EffectCurve<T>, EffectError> {
    let kind = match curve.kind {
        EffectKind::QuantileEffect => EffectKind::AveragedQuantileEffect,
        EffectKind::TimeAveragedQuantile => EffectKind::AveragedTimeAveragedQuantile,
        other => return Err(EffectError::WrongCurveKind(other)),
    };
    let mut taus: Vec<T> = curve.points.iter().filter_map(|p| p.tau).collect();
    taus.sort_by(total_cmp);
    taus.dedup();
    let mut all_x: Vec<T> = curve
        .points
        .iter()
        .map(|p| p.x)
        .chain(curve.skipped.iter().map(|p| p.x))
        .collect();
    all_x.sort_by(total_cmp);
    all_x.dedup();
    if taus.is_empty() || all_x.is_empty() {
        return Err(EffectError::InvalidGrid("curve has no (x, tau) points".into()));
    }
    let (lo, hi) = (all_x[0], all_x[all_x.len() - 1]);
    let retained: Vec<T> = measure.iter().copied().filter(|&m| m >= lo && m <= hi).collect();
    if retained.is_empty() {
        return Err(EffectError::EmptyMeasure);
    }

    let mut out = EffectCurve::new(kind, curve.regime);
    out.route = curve.route;
    out.caveats = curve.caveats.clone();
    out.dropped = measure.len() - retained.len();
    let range = (hi - lo).as_f64();
    if all_x.len() > 1 {
        let gap = all_x.windows(2).map(|w| (w[1] - w[0]).as_f64()).fold(0.0, f64::max);
        if gap > 0.01 * range * (1.0 + 1e-9) {
            out.caveats.push(format!("grid spacing {:.3}% of the range exceeds 1%", 100.0 * gap / range));
        }
    }

    let center = retained.iter().fold(T::zero(), |a, &m| a + m) / T::from_usize_lossy(retained.len());
    for &tau in &taus {
        let mut pts: Vec<&CurvePoint<T>> = curve.points.iter().filter(|p| p.tau == Some(tau)).collect();
        if pts.is_empty() {
            continue;
        }
        pts.sort_by(|a, b| total_cmp(&a.x, &b.x));
        let xs: Vec<T> = pts.iter().map(|p| p.x).collect();
        let mut sum = T::zero();
        let mut flags = Flags::NONE;
        for &m in &retained {
            let p = pts[nearest(&xs, m)];
            sum += p.estimate;
            flags |= p.flags;
        }
        let est = sum / T::from_usize_lossy(retained.len());
        out.points.push(CurvePoint::new(center, Some(tau), est, flags));
    }
    Ok(out)
}
