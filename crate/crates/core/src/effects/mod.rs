//! Identified effects computed from fitted series surfaces.
//!
//! Everything here is a pure function of fits, a basis, and an evaluation
//! grid. Derivatives always come from the analytic basis derivatives.

mod averaged;
mod cross_section;
mod diff;
mod homogeneous;
mod time;

pub use averaged::averaged_quantile_effect;
pub use cross_section::{cross_section_effect, cross_section_mean, cross_section_quantile, CrossSectionTarget};
pub use diff::{diff_outcome_curve, diff_outcome_effect, Transform};
pub use homogeneous::{mean_effect_homogeneous, quantile_effect_homogeneous};
pub use time::{
    mean_effect_time_effects, quantile_effect_time_effects, scale_location_from_moments,
    scale_location_from_quantiles, Route, TauParams, TimeEffectFns,
};

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::basis::BasisError;
use crate::regress::{LinearFit, QuantileFit, RegressError};
use crate::scalar::Real;
use crate::stats;

#[derive(Debug, Error, PartialEq)]
pub enum EffectError {
    #[error(transparent)]
    Regress(#[from] RegressError),
    #[error(transparent)]
    Basis(#[from] BasisError),
    #[error("fits use different bases ({0:#x} and {1:#x})")]
    SpecMismatch(u64, u64),
    #[error("fits were computed with different weights")]
    WeightsMismatch,
    #[error("fits use different quantile grids")]
    TauMismatch,
    #[error("quantile {0} was not fitted")]
    MissingTau(f64),
    #[error("quantile parameters must satisfy 0 < tau2 < tau1 < 1 and 0 < tau3 < 1 (got {tau1}, {tau2}, {tau3})")]
    InvalidTauParams { tau1: f64, tau2: f64, tau3: f64 },
    #[error("invalid data: {0}")]
    InvalidData(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("time-effect functions were computed on a different grid")]
    GridMismatch,
    #[error("no measure points fall inside the grid")]
    EmptyMeasure,
    #[error("cannot average a curve of kind {0}")]
    WrongCurveKind(EffectKind),
    #[error("basis structure {0:?} is not valid here")]
    WrongStructure(crate::basis::Structure),
}

/// Per-point diagnostic bits.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Flags(pub u8);

impl Flags {
    pub const NONE: Flags = Flags(0);
    pub const FLOORED_VARIANCE: Flags = Flags(1);
    pub const BOUNDARY_CLAMP: Flags = Flags(1 << 1);
    pub const QUANTILE_CROSSING: Flags = Flags(1 << 2);
    pub const NONPOSITIVE_RANGE: Flags = Flags(1 << 3);
    pub const MISSING_SIGMA: Flags = Flags(1 << 4);
    pub const FLOORED_SE: Flags = Flags(1 << 5);
    pub const DEGENERATE_BAND: Flags = Flags(1 << 6);

    const NAMES: [(Flags, &'static str); 7] = [
        (Flags::FLOORED_VARIANCE, "floored-variance"),
        (Flags::BOUNDARY_CLAMP, "boundary-clamp"),
        (Flags::QUANTILE_CROSSING, "quantile-crossing"),
        (Flags::NONPOSITIVE_RANGE, "nonpositive-range"),
        (Flags::MISSING_SIGMA, "missing-sigma"),
        (Flags::FLOORED_SE, "floored-se"),
        (Flags::DEGENERATE_BAND, "degenerate-band"),
    ];

    pub fn contains(self, other: Flags) -> bool {
        self.0 & other.0 == other.0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn set(&mut self, other: Flags, on: bool) {
        if on {
            self.0 |= other.0;
        }
    }
}

impl std::ops::BitOr for Flags {
    type Output = Flags;
    fn bitor(self, rhs: Flags) -> Flags {
        Flags(self.0 | rhs.0)
    }
}

impl std::ops::BitOrAssign for Flags {
    fn bitor_assign(&mut self, rhs: Flags) {
        self.0 |= rhs.0;
    }
}

/// Pipe-separated flag names; empty when no flag is set.
impl fmt::Display for Flags {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (flag, name) in Flags::NAMES {
            if self.contains(flag) {
                if !first {
                    f.write_str("|")?;
                }
                f.write_str(name)?;
                first = false;
            }
        }
        Ok(())
    }
}

/// How an [`EvalGrid`] was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum GridRule {
    /// Equally spaced between two sample quantiles of the regressor.
    SampleQuantiles { lower: f64, upper: f64, points: usize },
    Explicit,
}

/// Regressor grid and quantile-index grid on which effects are reported.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalGrid<T> {
    pub x: Vec<T>,
    pub tau: Vec<T>,
    pub rule: GridRule,
}

fn strictly_increasing<T: Real>(v: &[T]) -> bool {
    v.windows(2).all(|w| w[1] > w[0])
}

impl<T: Real> EvalGrid<T> {
    pub const DEFAULT_POINTS: usize = 101;

    /// `0.1, 0.2, ..., 0.9`.
    pub fn default_taus() -> Vec<T> {
        (1..=9).map(|k| T::lit(k as f64 / 10.0)).collect()
    }

    pub fn new(x: Vec<T>, tau: Vec<T>) -> Result<Self, EffectError> {
        Self::checked(x, tau, GridRule::Explicit)
    }

    fn checked(x: Vec<T>, tau: Vec<T>, rule: GridRule) -> Result<Self, EffectError> {
        if x.is_empty() || tau.is_empty() {
            return Err(EffectError::InvalidGrid("grids must be nonempty".into()));
        }
        if x.iter().chain(&tau).any(|v| !v.is_finite()) {
            return Err(EffectError::InvalidGrid("grid values must be finite".into()));
        }
        if !strictly_increasing(&x) || !strictly_increasing(&tau) {
            return Err(EffectError::InvalidGrid("grids must be strictly increasing".into()));
        }
        if tau.iter().any(|&t| t <= T::zero() || t >= T::one()) {
            return Err(EffectError::InvalidGrid("quantile indices must lie in (0, 1)".into()));
        }
        Ok(Self { x, tau, rule })
    }

    /// `points` equally spaced values between the `lower` and `upper` sample
    /// quantiles of `sample`.
    pub fn from_sample(sample: &[T], lower: f64, upper: f64, points: usize, tau: Vec<T>) -> Result<Self, EffectError> {
        if sample.is_empty() {
            return Err(EffectError::InvalidGrid("empty reference sample".into()));
        }
        if !(0.0..=1.0).contains(&lower) || !(0.0..=1.0).contains(&upper) || lower >= upper {
            return Err(EffectError::InvalidGrid(format!("bad quantile range [{lower}, {upper}]")));
        }
        if points < 2 {
            return Err(EffectError::InvalidGrid("need at least two grid points".into()));
        }
        let sorted = stats::sorted(sample);
        let lo = stats::quantile_sorted(&sorted, lower);
        let hi = stats::quantile_sorted(&sorted, upper);
        if hi <= lo {
            return Err(EffectError::InvalidGrid("sample quantiles coincide".into()));
        }
        let step = (hi - lo) / T::from_usize_lossy(points - 1);
        let mut x: Vec<T> = (0..points).map(|i| lo + step * T::from_usize_lossy(i)).collect();
        x[points - 1] = hi;
        Self::checked(x, tau, GridRule::SampleQuantiles { lower, upper, points })
    }

    /// 101 points between the 0.10 and 0.90 sample quantiles; default taus.
    pub fn default_for(sample: &[T]) -> Result<Self, EffectError> {
        Self::from_sample(sample, 0.1, 0.9, Self::DEFAULT_POINTS, Self::default_taus())
    }

    /// Largest gap between consecutive x values, relative to the x range.
    pub fn relative_spacing(&self) -> f64 {
        if self.x.len() < 2 {
            return 0.0;
        }
        let range = (self.x[self.x.len() - 1] - self.x[0]).as_f64();
        let gap = self
            .x
            .windows(2)
            .map(|w| (w[1] - w[0]).as_f64())
            .fold(0.0, f64::max);
        gap / range
    }
}

/// Which effect a curve holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EffectKind {
    MeanEffect,
    /// Mean effect minus its first-argument counterpart.
    MeanOverid,
    QuantileEffect,
    /// The quantile effect computed from first-argument derivatives.
    QuantileSymmetric,
    TimeSigma,
    TimeShift,
    TimeAveragedMean,
    TimeAveragedQuantile,
    AveragedQuantileEffect,
    AveragedTimeAveragedQuantile,
    DiffOutcome,
    CrossSectionMean,
    CrossSectionQuantile,
}

impl fmt::Display for EffectKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("kind serializes");
        f.write_str(s.as_str().expect("unit variant"))
    }
}

/// Identifying assumptions behind a curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    TimeHomogeneity,
    LocationScaleTimeEffects,
    ConditionalIndependence,
    /// Contemporaneous-regressor comparator, not an identified effect.
    CrossSection,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regime::TimeHomogeneity => "time-homogeneity",
            Regime::LocationScaleTimeEffects => "location-scale-time-effects",
            Regime::ConditionalIndependence => "conditional-independence",
            Regime::CrossSection => "cross-section",
        })
    }
}

pub const STAYER_CAVEAT: &str =
    "values at different x condition on different subpopulations X1 = X2 = x";
pub const INDEPENDENCE_CAVEAT: &str = "requires conditional-independence assumptions";
pub const CROSS_SECTION_CAVEAT: &str =
    "conditions on contemporaneous regressors only; biased under correlated heterogeneity";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint<T> {
    pub x: T,
    /// Second-period regressor for curves indexed by `(x1, x2)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x2: Option<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<T>,
    pub estimate: T,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower: Option<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<T>,
    pub flags: Flags,
}

impl<T: Real> CurvePoint<T> {
    pub fn new(x: T, tau: Option<T>, estimate: T, flags: Flags) -> Self {
        Self {
            x,
            x2: None,
            tau,
            estimate,
            lower: None,
            upper: None,
            flags,
        }
    }
}

/// A grid point with no estimate, e.g. where the scale ratio is undefined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedPoint<T> {
    pub x: T,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<T>,
    pub flags: Flags,
}

/// An effect estimate over a grid, optionally with a confidence band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectCurve<T> {
    pub kind: EffectKind,
    pub regime: Regime,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub route: Option<Route>,
    pub points: Vec<CurvePoint<T>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub skipped: Vec<SkippedPoint<T>>,
    /// Measure points left out of an average because they fall off the grid.
    #[serde(default)]
    pub dropped: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub caveats: Vec<String>,
}

impl<T: Real> EffectCurve<T> {
    pub fn new(kind: EffectKind, regime: Regime) -> Self {
        let caveats = match regime {
            Regime::ConditionalIndependence => vec![INDEPENDENCE_CAVEAT.to_string()],
            Regime::CrossSection => vec![CROSS_SECTION_CAVEAT.to_string()],
            _ => vec![STAYER_CAVEAT.to_string()],
        };
        Self {
            kind,
            regime,
            route: None,
            points: Vec::new(),
            skipped: Vec::new(),
            dropped: 0,
            caveats,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn estimates(&self) -> Vec<T> {
        self.points.iter().map(|p| p.estimate).collect()
    }

    /// Whether `other` reports estimates at exactly the same index points.
    pub fn same_index(&self, other: &Self) -> bool {
        self.points.len() == other.points.len()
            && self
                .points
                .iter()
                .zip(&other.points)
                .all(|(a, b)| a.x == b.x && a.x2 == b.x2 && a.tau == b.tau)
    }

    fn has_x2(&self) -> bool {
        self.points.iter().any(|p| p.x2.is_some())
    }

    /// Writes `x,tau,estimate,lower,upper,flags,regime` rows, with an extra
    /// `x2` column for curves indexed by both regressors.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        let with_x2 = self.has_x2();
        let mut header = vec!["x", "tau", "estimate", "lower", "upper", "flags", "regime"];
        if with_x2 {
            header.push("x2");
        }
        w.write_record(&header)?;
        let opt = |v: Option<T>| v.map(|v| v.to_string()).unwrap_or_default();
        let regime = self.regime.to_string();
        for p in &self.points {
            let mut row = vec![
                p.x.to_string(),
                opt(p.tau),
                p.estimate.to_string(),
                opt(p.lower),
                opt(p.upper),
                p.flags.to_string(),
                regime.clone(),
            ];
            if with_x2 {
                row.push(opt(p.x2));
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_linear_pair<T: Real>(a: &LinearFit<T>, b: &LinearFit<T>, spec_id: u64) -> Result<(), EffectError> {
    for f in [a, b] {
        if f.spec_id != spec_id {
            return Err(EffectError::SpecMismatch(f.spec_id, spec_id));
        }
    }
    if a.weights_digest != b.weights_digest {
        return Err(EffectError::WeightsMismatch);
    }
    Ok(())
}

fn check_quantile_pair<T: Real>(a: &QuantileFit<T>, b: &QuantileFit<T>, spec_id: u64) -> Result<(), EffectError> {
    for f in [a, b] {
        if f.spec_id != spec_id {
            return Err(EffectError::SpecMismatch(f.spec_id, spec_id));
        }
    }
    if a.weights_digest != b.weights_digest {
        return Err(EffectError::WeightsMismatch);
    }
    if a.taus.len() != b.taus.len() || a.taus.iter().zip(&b.taus).any(|(p, q)| (*p - *q).abs() > T::lit(1e-12)) {
        return Err(EffectError::TauMismatch);
    }
    Ok(())
}

fn clamp_flag(clamped: bool) -> Flags {
    if clamped {
        Flags::BOUNDARY_CLAMP
    } else {
        Flags::NONE
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_render_names() {
        assert_eq!(Flags::NONE.to_string(), "");
        let f = Flags::FLOORED_VARIANCE | Flags::QUANTILE_CROSSING;
        assert_eq!(f.to_string(), "floored-variance|quantile-crossing");
        assert!(f.contains(Flags::QUANTILE_CROSSING));
        assert!(!f.contains(Flags::BOUNDARY_CLAMP));
    }

    #[test]
    fn default_grid_spans_inner_quantiles() {
        let sample: Vec<f64> = (0..=100).map(|i| i as f64).collect();
        let g = EvalGrid::default_for(&sample).unwrap();
        assert_eq!(g.x.len(), 101);
        assert!((g.x[0] - 10.0).abs() < 1e-12 && (g.x[100] - 90.0).abs() < 1e-12);
        assert!(g.relative_spacing() <= 0.01 + 1e-12);
        assert_eq!(g.tau.len(), 9);
    }

    #[test]
    fn grid_validation() {
        assert!(EvalGrid::new(vec![1.0, 1.0], vec![0.5]).is_err());
        assert!(EvalGrid::new(vec![1.0], vec![1.0]).is_err());
        assert!(EvalGrid::<f64>::new(vec![], vec![0.5]).is_err());
        assert!(EvalGrid::from_sample(&[2.0, 2.0, 2.0], 0.1, 0.9, 5, vec![0.5]).is_err());
    }

    #[test]
    fn kind_names_are_kebab_case() {
        assert_eq!(EffectKind::TimeAveragedQuantile.to_string(), "time-averaged-quantile");
        assert_eq!(Regime::ConditionalIndependence.to_string(), "conditional-independence");
    }
}
