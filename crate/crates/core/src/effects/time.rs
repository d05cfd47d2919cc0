use serde::{Deserialize, Serialize};

use super::{check_linear_pair, check_quantile_pair, clamp_flag, CurvePoint, EffectCurve, EffectError, EffectKind, EvalGrid, Flags, Regime, SkippedPoint};
use crate::basis::BasisSpec;
use crate::regress::{LinearFit, QuantileFit};
use crate::scalar::Real;

/// Which fitted objects identify the scale ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Route {
    /// Conditional means and variances.
    Moments,
    /// Conditional quantiles at three indices.
    Quantiles,
}

/// `(tau1, tau2, tau3)`: the scale ratio uses the range `Q(tau1) - Q(tau2)`,
/// the shift uses `Q(tau3)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TauParams {
    pub tau1: f64,
    pub tau2: f64,
    pub tau3: f64,
}

impl Default for TauParams {
    fn default() -> Self {
        Self {
            tau1: 0.9,
            tau2: 0.1,
            tau3: 0.5,
        }
    }
}

impl TauParams {
    pub fn validate(&self) -> Result<(), EffectError> {
        let ok = 0.0 < self.tau2 && self.tau2 < self.tau1 && self.tau1 < 1.0 && 0.0 < self.tau3 && self.tau3 < 1.0;
        if ok {
            Ok(())
        } else {
            Err(EffectError::InvalidTauParams {
                tau1: self.tau1,
                tau2: self.tau2,
                tau3: self.tau3,
            })
        }
    }
}

/// Scale ratio `sigma(x) = sigma2(x)/sigma1(x)` and shift `mu2(x) - sigma(x) mu1(x)`
/// at each grid x. `None` marks points where the ratio is not identified.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeEffectFns<T> {
    pub x: Vec<T>,
    pub sigma: Vec<Option<T>>,
    pub shift: Vec<Option<T>>,
    pub flags: Vec<Flags>,
    pub source: Route,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_params: Option<TauParams>,
}

impl<T: Real> TimeEffectFns<T> {
    /// The scale-ratio and shift functions as curves.
    pub fn to_curves(&self) -> (EffectCurve<T>, EffectCurve<T>) {
        let mut sigma = EffectCurve::new(EffectKind::TimeSigma, Regime::LocationScaleTimeEffects);
        let mut shift = EffectCurve::new(EffectKind::TimeShift, Regime::LocationScaleTimeEffects);
        sigma.route = Some(self.source);
        shift.route = Some(self.source);
        for i in 0..self.x.len() {
            let (x, f) = (self.x[i], self.flags[i]);
            match (self.sigma[i], self.shift[i]) {
                (Some(s), Some(m)) => {
                    sigma.points.push(CurvePoint::new(x, None, s, f));
                    shift.points.push(CurvePoint::new(x, None, m, f));
                }
                _ => {
                    for c in [&mut sigma, &mut shift] {
                        c.skipped.push(SkippedPoint { x, tau: None, flags: f });
                    }
                }
            }
        }
        (sigma, shift)
    }

    fn check_grid(&self, grid: &EvalGrid<T>) -> Result<(), EffectError> {
        if self.x != grid.x {
            return Err(EffectError::GridMismatch);
        }
        Ok(())
    }
}

/// Scale ratio from conditional variances, `sigma = +sqrt(V2/V1)`, and shift
/// `M2 - sigma M1`, all evaluated at `(x, x)`.
pub fn scale_location_from_moments<T: Real>(
    means: [&LinearFit<T>; 2],
    variances: [&LinearFit<T>; 2],
    spec: &BasisSpec<T>,
    grid: &EvalGrid<T>,
) -> Result<TimeEffectFns<T>, EffectError> {
    check_linear_pair(means[0], means[1], spec.id)?;
    check_linear_pair(variances[0], variances[1], spec.id)?;
    let n = grid.x.len();
    let mut out = TimeEffectFns {
        x: grid.x.clone(),
        sigma: Vec::with_capacity(n),
        shift: Vec::with_capacity(n),
        flags: Vec::with_capacity(n),
        source: Route::Moments,
        tau_params: None,
    };
    for &x in &grid.x {
        let e = spec.eval(x, x)?;
        let m1 = means[0].predict(&e)?.value;
        let m2 = means[1].predict(&e)?.value;
        let v1 = variances[0].predict(&e)?;
        let v2 = variances[1].predict(&e)?;
        let mut flags = clamp_flag(e.clamped);
        flags.set(Flags::FLOORED_VARIANCE, v1.floored || v2.floored);
        if v1.value > T::zero() && v2.value > T::zero() {
            let s = (v2.value / v1.value).sqrt();
            out.sigma.push(Some(s));
            out.shift.push(Some(m2 - s * m1));
        } else {
            flags |= Flags::MISSING_SIGMA;
            out.sigma.push(None);
            out.shift.push(None);
        }
        out.flags.push(flags);
    }
    Ok(out)
}

/// Scale ratio from conditional quantile ranges,
/// `sigma = [Q2(tau1) - Q2(tau2)] / [Q1(tau1) - Q1(tau2)]`, and shift
/// `Q2(tau3) - sigma Q1(tau3)`. Points with a nonpositive range in either
/// period are excluded and flagged.
pub fn scale_location_from_quantiles<T: Real>(
    q1: &QuantileFit<T>,
    q2: &QuantileFit<T>,
    spec: &BasisSpec<T>,
    grid: &EvalGrid<T>,
    params: TauParams,
) -> Result<TimeEffectFns<T>, EffectError> {
    params.validate()?;
    check_quantile_pair(q1, q2, spec.id)?;
    let index = |tau: f64| q1.tau_index(T::lit(tau)).ok_or(EffectError::MissingTau(tau));
    let (k1, k2, k3) = (index(params.tau1)?, index(params.tau2)?, index(params.tau3)?);
    let n = grid.x.len();
    let mut out = TimeEffectFns {
        x: grid.x.clone(),
        sigma: Vec::with_capacity(n),
        shift: Vec::with_capacity(n),
        flags: Vec::with_capacity(n),
        source: Route::Quantiles,
        tau_params: Some(params),
    };
    for &x in &grid.x {
        let e = spec.eval(x, x)?;
        let q = |fit: &QuantileFit<T>, k: usize| fit.predict(k, &e).map(|p| p.value);
        let r1 = q(q1, k1)? - q(q1, k2)?;
        let r2 = q(q2, k1)? - q(q2, k2)?;
        let mut flags = clamp_flag(e.clamped);
        if r1 > T::zero() && r2 > T::zero() {
            let s = r2 / r1;
            out.sigma.push(Some(s));
            out.shift.push(Some(q(q2, k3)? - s * q(q1, k3)?));
        } else {
            flags |= Flags::NONPOSITIVE_RANGE | Flags::MISSING_SIGMA;
            out.sigma.push(None);
            out.shift.push(None);
        }
        out.flags.push(flags);
    }
    Ok(out)
}

/// Time-averaged combination of the two one-sided estimates under
/// location-scale time effects:
/// `[d1 F1 - d1 F2 / sigma] / 2 + [d2 F2 - sigma d2 F1] / 2`.
fn time_averaged<T: Real>(d1_f1: T, d1_f2: T, d2_f1: T, d2_f2: T, sigma: T) -> T {
    let half = T::lit(0.5);
    (d1_f1 - d1_f2 / sigma) * half + (d2_f2 - sigma * d2_f1) * half
}

/// Time-averaged mean effect. Grid points without a scale ratio are skipped
/// and recorded.
pub fn mean_effect_time_effects<T: Real>(
    m1: &LinearFit<T>,
    m2: &LinearFit<T>,
    te: &TimeEffectFns<T>,
    spec: &BasisSpec<T>,
    grid: &EvalGrid<T>,
) -> Result<EffectCurve<T>, EffectError> {
    check_linear_pair(m1, m2, spec.id)?;
    te.check_grid(grid)?;
    let mut curve = EffectCurve::new(EffectKind::TimeAveragedMean, Regime::LocationScaleTimeEffects);
    curve.route = Some(te.source);
    for (i, &x) in grid.x.iter().enumerate() {
        let Some(s) = te.sigma[i] else {
            curve.skipped.push(SkippedPoint {
                x,
                tau: None,
                flags: te.flags[i] | Flags::MISSING_SIGMA,
            });
            continue;
        };
        let e = spec.eval(x, x)?;
        let p1 = m1.predict(&e)?;
        let p2 = m2.predict(&e)?;
        let est = time_averaged(p1.d_x1, p2.d_x1, p1.d_x2, p2.d_x2, s);
        curve.points.push(CurvePoint::new(x, None, est, te.flags[i] | clamp_flag(e.clamped)));
    }
    Ok(curve)
}

/// Time-averaged quantile effect at every fitted tau.
pub fn quantile_effect_time_effects<T: Real>(
    q1: &QuantileFit<T>,
    q2: &QuantileFit<T>,
    te: &TimeEffectFns<T>,
    spec: &BasisSpec<T>,
    grid: &EvalGrid<T>,
) -> Result<EffectCurve<T>, EffectError> {
    check_quantile_pair(q1, q2, spec.id)?;
    te.check_grid(grid)?;
    let mut curve = EffectCurve::new(EffectKind::TimeAveragedQuantile, Regime::LocationScaleTimeEffects);
    curve.route = Some(te.source);
    for (i, &x) in grid.x.iter().enumerate() {
        let Some(s) = te.sigma[i] else {
            for &tau in &q1.taus {
                curve.skipped.push(SkippedPoint {
                    x,
                    tau: Some(tau),
                    flags: te.flags[i] | Flags::MISSING_SIGMA,
                });
            }
            continue;
        };
        let e = spec.eval(x, x)?;
        let mut prev: Option<(T, T)> = None;
        for (k, &tau) in q1.taus.iter().enumerate() {
            let p1 = q1.predict(k, &e)?;
            let p2 = q2.predict(k, &e)?;
            let mut flags = te.flags[i] | clamp_flag(e.clamped);
            if let Some((v1, v2)) = prev {
                flags.set(Flags::QUANTILE_CROSSING, p1.value < v1 || p2.value < v2);
            }
            prev = Some((p1.value, p2.value));
            let est = time_averaged(p1.d_x1, p2.d_x1, p1.d_x2, p2.d_x2, s);
            curve.points.push(CurvePoint::new(x, Some(tau), est, flags));
        }
    }
    Ok(curve)
}
