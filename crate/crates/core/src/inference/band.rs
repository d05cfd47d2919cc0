use serde::{Deserialize, Serialize};

use super::{BootstrapRun, InferenceError};
use crate::effects::{EffectCurve, Flags};
use crate::scalar::{total_cmp, Real};
use crate::stats;

/// Smallest draw count accepted for quantile-based band steps by default.
pub const MIN_DRAWS: usize = 20;

/// Normal-consistent IQR rescaling constant, `Phi^{-1}(0.75) - Phi^{-1}(0.25)`.
const IQR_SCALE: f64 = 1.349;

/// How the pointwise bootstrap scale is estimated.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SeMethod {
    /// Standard deviation of the draws.
    Sd,
    /// Interquartile range of the draws divided by 1.349.
    #[default]
    Iqr,
}

/// A uniform band for one curve of a bootstrap run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniformBand<T> {
    pub curve: usize,
    /// Pointwise scale of `sqrt(n) (theta* - theta)`.
    pub sigma: Vec<T>,
    /// Points where `sigma` was raised to the floor.
    pub floored: Vec<bool>,
    pub t_crit: T,
    pub alpha: f64,
    pub se_method: SeMethod,
    pub lower: Vec<T>,
    pub upper: Vec<T>,
    /// Every draw coincided with the estimate; the band collapses to it.
    pub degenerate: bool,
}

fn pointwise_scale<T: Real>(draws: &[Vec<T>], g: usize, method: SeMethod) -> T {
    let col: Vec<T> = draws.iter().map(|d| d[g]).collect();
    match method {
        SeMethod::Sd => stats::sample_sd(&col),
        SeMethod::Iqr => {
            let mut s = col;
            s.sort_by(total_cmp);
            let q = |p: f64| s[stats::lower_quantile_index(p, s.len())];
            (q(0.75) - q(0.25)) / T::lit(IQR_SCALE)
        }
    }
}

fn scales<T: Real>(run: &BootstrapRun<T>, curve: usize, method: SeMethod) -> (Vec<T>, Vec<bool>) {
    let est = run.estimates[curve].estimates();
    let abs: Vec<T> = est.iter().map(|v| v.abs()).collect();
    let med = if abs.is_empty() { T::zero() } else { stats::median(&abs) };
    let scale = if med > T::zero() { med } else { T::one() };
    let floor = T::lit(1e-12) * scale;
    let draws = &run.deviations[curve];
    (0..est.len())
        .map(|g| {
            let s = pointwise_scale(draws, g, method);
            if s > floor {
                (s, false)
            } else {
                (floor, true)
            }
        })
        .unzip()
}

fn check(run_len: usize, curve: usize, alpha: f64) -> Result<(), InferenceError> {
    if curve >= run_len {
        return Err(InferenceError::NoSuchCurve(curve));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(InferenceError::InvalidAlpha(alpha));
    }
    Ok(())
}

/// Uniform band `theta +/- t_crit sigma / sqrt(n)`, where `t_crit` is the
/// lower empirical `(1 - alpha)`-quantile (order statistic `ceil((1 - alpha) B)`)
/// of the per-draw maxima `max_g |Z*_b(g)| / sigma(g)`.
pub fn uniform_band<T: Real>(
    run: &BootstrapRun<T>,
    curve: usize,
    alpha: f64,
    se_method: SeMethod,
    min_draws: usize,
) -> Result<UniformBand<T>, InferenceError> {
    check(run.estimates.len(), curve, alpha)?;
    let draws = &run.deviations[curve];
    if draws.len() < min_draws.max(2) {
        return Err(InferenceError::TooFewDraws {
            found: draws.len(),
            min: min_draws.max(2),
        });
    }
    let (sigma, floored) = scales(run, curve, se_method);
    let est = run.estimates[curve].estimates();
    let degenerate = !floored.is_empty() && floored.iter().all(|&f| f);
    let t_crit = if degenerate {
        T::zero()
    } else {
        let t_stats: Vec<T> = draws
            .iter()
            .map(|d| {
                d.iter()
                    .zip(&sigma)
                    .map(|(&z, &s)| z.abs() / s)
                    .fold(T::zero(), |a, b| if b > a { b } else { a })
            })
            .collect();
        stats::lower_quantile(&t_stats, 1.0 - alpha)
    };
    let root_n = T::from_usize_lossy(run.n).sqrt();
    let half: Vec<T> = sigma.iter().map(|&s| t_crit * s / root_n).collect();
    Ok(UniformBand {
        curve,
        lower: est.iter().zip(&half).map(|(&e, &h)| e - h).collect(),
        upper: est.iter().zip(&half).map(|(&e, &h)| e + h).collect(),
        sigma,
        floored,
        t_crit,
        alpha,
        se_method,
        degenerate,
    })
}

/// Per-point bootstrap-t critical values, the lower `(1 - alpha)`-quantile
/// of `|Z*_b(g)| / sigma(g)` at each point `g`.
pub fn pointwise_t_crit<T: Real>(
    run: &BootstrapRun<T>,
    curve: usize,
    alpha: f64,
    se_method: SeMethod,
) -> Result<Vec<T>, InferenceError> {
    check(run.estimates.len(), curve, alpha)?;
    let (sigma, _) = scales(run, curve, se_method);
    let draws = &run.deviations[curve];
    Ok((0..sigma.len())
        .map(|g| {
            let t: Vec<T> = draws.iter().map(|d| d[g].abs() / sigma[g]).collect();
            stats::lower_quantile(&t, 1.0 - alpha)
        })
        .collect())
}

/// Copies band endpoints into the curve and flags floored or collapsed points.
pub fn apply_band<T: Real>(curve: &mut EffectCurve<T>, band: &UniformBand<T>) {
    for (g, p) in curve.points.iter_mut().enumerate() {
        p.lower = Some(band.lower[g]);
        p.upper = Some(band.upper[g]);
        p.flags.set(Flags::FLOORED_SE, band.floored[g]);
        p.flags.set(Flags::DEGENERATE_BAND, band.degenerate);
    }
}
