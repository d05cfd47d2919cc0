//! A fixed estimation plan: basis, grids and requested curves, rerunnable
//! under any observation-weight vector.
//!
//! Every fit in one call of [`Pipeline::fit`] uses the same weights, so a
//! bootstrap draw reweights means, variances and quantiles together.

use serde::{Deserialize, Serialize};

use crate::basis::{BasisKind, BasisSpec, Structure};
use crate::effects::{self, EffectCurve, EffectError, EvalGrid, Route, TauParams, TimeEffectFns, Transform};
use crate::panel::{PanelDataset, Period};
use crate::regress::{qr_fit, variance_fit, wls_fit, Design, FitTarget, LinearFit, Outcome, QuantileFit};
use crate::scalar::Real;

/// A requested output curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "target", rename_all = "kebab-case")]
pub enum Target {
    MeanEffect,
    MeanOverid,
    QuantileEffect,
    QuantileSymmetric,
    TimeSigma { route: Route },
    TimeShift { route: Route },
    TimeAveragedMean { route: Route },
    TimeAveragedQuantile { route: Route },
    AveragedQuantileEffect,
    AveragedTimeAveragedQuantile { route: Route },
    CrossSectionMean,
    CrossSectionQuantile,
    DiffOutcome { transform: Transform },
}

impl Target {
    fn route(&self) -> Option<Route> {
        match *self {
            Target::TimeSigma { route }
            | Target::TimeShift { route }
            | Target::TimeAveragedMean { route }
            | Target::TimeAveragedQuantile { route }
            | Target::AveragedTimeAveragedQuantile { route } => Some(route),
            _ => None,
        }
    }

    fn needs_means(&self) -> bool {
        matches!(
            self,
            Target::MeanEffect | Target::MeanOverid | Target::TimeAveragedMean { .. }
        ) || self.route() == Some(Route::Moments)
    }

    fn needs_quantiles(&self) -> bool {
        matches!(
            self,
            Target::QuantileEffect
                | Target::QuantileSymmetric
                | Target::AveragedQuantileEffect
                | Target::TimeAveragedQuantile { .. }
                | Target::AveragedTimeAveragedQuantile { .. }
        ) || self.route() == Some(Route::Quantiles)
    }

    /// Short file-friendly name.
    pub fn label(&self) -> String {
        let route = |r: Route| match r {
            Route::Moments => "moments",
            Route::Quantiles => "quantiles",
        };
        match *self {
            Target::MeanEffect => "mean-effect".into(),
            Target::MeanOverid => "mean-overid".into(),
            Target::QuantileEffect => "quantile-effect".into(),
            Target::QuantileSymmetric => "quantile-symmetric".into(),
            Target::TimeSigma { route: r } => format!("time-sigma-{}", route(r)),
            Target::TimeShift { route: r } => format!("time-shift-{}", route(r)),
            Target::TimeAveragedMean { route: r } => format!("time-averaged-mean-{}", route(r)),
            Target::TimeAveragedQuantile { route: r } => format!("time-averaged-quantile-{}", route(r)),
            Target::AveragedQuantileEffect => "averaged-quantile-effect".into(),
            Target::AveragedTimeAveragedQuantile { route: r } => {
                format!("averaged-time-averaged-quantile-{}", route(r))
            }
            Target::CrossSectionMean => "cross-section-mean".into(),
            Target::CrossSectionQuantile => "cross-section-quantile".into(),
            Target::DiffOutcome { transform } => match transform {
                Transform::Difference => "diff-outcome-difference".into(),
                Transform::Period2 => "diff-outcome-period2".into(),
                Transform::Linear { lambda, pi } => format!("diff-outcome-linear-{lambda}-{pi}"),
            },
        }
    }
}

/// Grid construction parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    /// Sample quantiles of pooled x bounding the regressor grid.
    pub lower: f64,
    pub upper: f64,
    pub points: usize,
    pub taus: Vec<f64>,
    /// Points per axis of the `(x1, x2)` grid used by transformed-outcome curves.
    pub diff_points: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            lower: 0.1,
            upper: 0.9,
            points: 101,
            taus: (1..=9).map(|k| k as f64 / 10.0).collect(),
            diff_points: 21,
        }
    }
}

/// Everything needed to turn a dataset into curves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub basis: BasisKind,
    pub structure: Structure,
    pub intercept: bool,
    /// Univariate basis of the contemporaneous comparator fits.
    pub cross_section_basis: BasisKind,
    pub grid: GridConfig,
    pub tau_params: TauParams,
    pub targets: Vec<Target>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            basis: BasisKind::CubicBspline { interior_knots: 1 },
            structure: Structure::Additive,
            intercept: true,
            cross_section_basis: BasisKind::CubicBspline { interior_knots: 1 },
            grid: GridConfig::default(),
            tau_params: TauParams::default(),
            targets: vec![Target::MeanEffect, Target::MeanOverid],
        }
    }
}

/// All fits computed under one weight vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSet<T> {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub means: Option<[LinearFit<T>; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variances: Option<[LinearFit<T>; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quantiles: Option<[QuantileFit<T>; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cross_section_means: Option<[LinearFit<T>; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cross_section_quantiles: Option<[QuantileFit<T>; 2]>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub transformed: Vec<(Transform, QuantileFit<T>)>,
}

/// A prepared plan bound to one dataset.
#[derive(Debug, Clone)]
pub struct Pipeline<T: Real> {
    pub config: PipelineConfig,
    pub spec: BasisSpec<T>,
    pub cross_section_spec: BasisSpec<T>,
    pub grid: EvalGrid<T>,
    pub diff_grid: EvalGrid<T>,
    /// Fitted quantile indices: the grid taus plus any route parameters.
    pub taus: Vec<T>,
    /// Empirical x-measure for averaged curves (pooled regressor values).
    pub measure: Vec<T>,
    data: PanelDataset<T>,
    design: Design<T>,
    cross_designs: [Design<T>; 2],
}

fn merge_taus(mut taus: Vec<f64>, extra: &[f64]) -> Vec<f64> {
    for &t in extra {
        if !taus.iter().any(|&u| (u - t).abs() < 1e-9) {
            taus.push(t);
        }
    }
    taus.sort_by(f64::total_cmp);
    taus
}

impl<T: Real> Pipeline<T> {
    /// Builds bases, grids and design matrices from the data. The basis is
    /// normalized on the pooled regressor sample and then held fixed.
    pub fn prepare(data: &PanelDataset<T>, config: PipelineConfig) -> Result<Self, EffectError> {
        data.validate().map_err(|e| EffectError::InvalidData(e.to_string()))?;
        config.tau_params.validate()?;
        if config.structure == Structure::Contemporaneous {
            return Err(EffectError::WrongStructure(config.structure));
        }
        for t in &config.targets {
            if let Target::DiffOutcome { transform } = t {
                transform.validate()?;
            }
        }
        let pooled = data.pooled_x();
        let spec = BasisSpec::new(config.basis, config.structure, config.intercept, &pooled)?;
        let cross_section_spec =
            BasisSpec::new(config.cross_section_basis, Structure::Contemporaneous, config.intercept, &pooled)?;

        let route_q = config.targets.iter().any(|t| t.route() == Some(Route::Quantiles));
        let taus_f = if route_q {
            let p = config.tau_params;
            merge_taus(config.grid.taus.clone(), &[p.tau1, p.tau2, p.tau3])
        } else {
            config.grid.taus.clone()
        };
        let taus: Vec<T> = taus_f.iter().map(|&t| T::lit(t)).collect();
        let g = &config.grid;
        let grid = EvalGrid::from_sample(&pooled, g.lower, g.upper, g.points, taus.clone())?;
        let diff_grid = EvalGrid::from_sample(&pooled, g.lower, g.upper, g.diff_points, taus.clone())?;

        let design = Design::new(&spec, &data.x1, &data.x2)?;
        let cross_designs = [
            Design::new(&cross_section_spec, &data.x1, &data.x1)?,
            Design::new(&cross_section_spec, &data.x2, &data.x2)?,
        ];
        Ok(Self {
            config,
            spec,
            cross_section_spec,
            grid,
            diff_grid,
            taus,
            measure: pooled,
            data: data.clone(),
            design,
            cross_designs,
        })
    }

    pub fn n(&self) -> usize {
        self.data.n()
    }

    pub fn data(&self) -> &PanelDataset<T> {
        &self.data
    }

    /// Runs every fit the requested targets need, all with weights `w`.
    pub fn fit(&self, w: &[T]) -> Result<FitSet<T>, EffectError> {
        let targets = &self.config.targets;
        let any = |f: fn(&Target) -> bool| targets.iter().any(f);
        let d = &self.data;
        let mut out = FitSet {
            means: None,
            variances: None,
            quantiles: None,
            cross_section_means: None,
            cross_section_quantiles: None,
            transformed: Vec::new(),
        };
        if any(Target::needs_means) {
            let m1 = wls_fit(&self.design, &d.y1, w, FitTarget::Mean(Period::First))?;
            let m2 = wls_fit(&self.design, &d.y2, w, FitTarget::Mean(Period::Second))?;
            if any(|t| t.route() == Some(Route::Moments)) {
                let v1 = variance_fit(&self.design, &d.y1, &m1, w)?;
                let v2 = variance_fit(&self.design, &d.y2, &m2, w)?;
                out.variances = Some([v1, v2]);
            }
            out.means = Some([m1, m2]);
        }
        if any(Target::needs_quantiles) {
            let q1 = qr_fit(&self.design, &d.y1, &self.taus, w, Outcome::Period(Period::First))?;
            let q2 = qr_fit(&self.design, &d.y2, &self.taus, w, Outcome::Period(Period::Second))?;
            out.quantiles = Some([q1, q2]);
        }
        if any(|t| matches!(t, Target::CrossSectionMean)) {
            let c1 = wls_fit(&self.cross_designs[0], &d.y1, w, FitTarget::Mean(Period::First))?;
            let c2 = wls_fit(&self.cross_designs[1], &d.y2, w, FitTarget::Mean(Period::Second))?;
            out.cross_section_means = Some([c1, c2]);
        }
        if any(|t| matches!(t, Target::CrossSectionQuantile)) {
            let c1 = qr_fit(&self.cross_designs[0], &d.y1, &self.taus, w, Outcome::Period(Period::First))?;
            let c2 = qr_fit(&self.cross_designs[1], &d.y2, &self.taus, w, Outcome::Period(Period::Second))?;
            out.cross_section_quantiles = Some([c1, c2]);
        }
        for t in targets {
            if let Target::DiffOutcome { transform } = *t {
                if out.transformed.iter().any(|(tr, _)| *tr == transform) {
                    continue;
                }
                let y = transform.apply(&d.y1, &d.y2);
                let f = qr_fit(&self.design, &y, &self.taus, w, Outcome::Transformed)?;
                out.transformed.push((transform, f));
            }
        }
        Ok(out)
    }

    /// Time-effect functions for `route`, computed from `fits`.
    pub fn time_effects(&self, fits: &FitSet<T>, route: Route) -> Result<TimeEffectFns<T>, EffectError> {
        match route {
            Route::Moments => {
                let m = fits.means.as_ref().expect("mean fits present");
                let v = fits.variances.as_ref().expect("variance fits present");
                effects::scale_location_from_moments([&m[0], &m[1]], [&v[0], &v[1]], &self.spec, &self.grid)
            }
            Route::Quantiles => {
                let q = fits.quantiles.as_ref().expect("quantile fits present");
                effects::scale_location_from_quantiles(&q[0], &q[1], &self.spec, &self.grid, self.config.tau_params)
            }
        }
    }

    /// Turns fits into the requested curves, in request order.
    pub fn curves(&self, fits: &FitSet<T>) -> Result<Vec<EffectCurve<T>>, EffectError> {
        let mut te: [Option<TimeEffectFns<T>>; 2] = [None, None];
        let mut te_for = |route: Route| -> Result<TimeEffectFns<T>, EffectError> {
            let slot = match route {
                Route::Moments => 0,
                Route::Quantiles => 1,
            };
            if te[slot].is_none() {
                te[slot] = Some(self.time_effects(fits, route)?);
            }
            Ok(te[slot].clone().expect("just computed"))
        };
        let means = || fits.means.as_ref().expect("mean fits present");
        let quantiles = || fits.quantiles.as_ref().expect("quantile fits present");
        let (spec, grid) = (&self.spec, &self.grid);

        let mut out = Vec::with_capacity(self.config.targets.len());
        for target in &self.config.targets {
            let curve = match *target {
                Target::MeanEffect => effects::mean_effect_homogeneous(&means()[0], &means()[1], spec, grid)?.0,
                Target::MeanOverid => effects::mean_effect_homogeneous(&means()[0], &means()[1], spec, grid)?.1,
                Target::QuantileEffect => {
                    effects::quantile_effect_homogeneous(&quantiles()[0], &quantiles()[1], spec, grid)?.0
                }
                Target::QuantileSymmetric => {
                    effects::quantile_effect_homogeneous(&quantiles()[0], &quantiles()[1], spec, grid)?.1
                }
                Target::TimeSigma { route } => te_for(route)?.to_curves().0,
                Target::TimeShift { route } => te_for(route)?.to_curves().1,
                Target::TimeAveragedMean { route } => {
                    let te = te_for(route)?;
                    effects::mean_effect_time_effects(&means()[0], &means()[1], &te, spec, grid)?
                }
                Target::TimeAveragedQuantile { route } => {
                    let te = te_for(route)?;
                    effects::quantile_effect_time_effects(&quantiles()[0], &quantiles()[1], &te, spec, grid)?
                }
                Target::AveragedQuantileEffect => {
                    let q = quantiles();
                    let c = effects::quantile_effect_homogeneous(&q[0], &q[1], spec, grid)?.0;
                    effects::averaged_quantile_effect(&c, &self.measure)?
                }
                Target::AveragedTimeAveragedQuantile { route } => {
                    let te = te_for(route)?;
                    let c = effects::quantile_effect_time_effects(&quantiles()[0], &quantiles()[1], &te, spec, grid)?;
                    effects::averaged_quantile_effect(&c, &self.measure)?
                }
                Target::CrossSectionMean => {
                    let c = fits.cross_section_means.as_ref().expect("cross-section fits present");
                    effects::cross_section_mean([&c[0], &c[1]], &self.cross_section_spec, grid)?
                }
                Target::CrossSectionQuantile => {
                    let c = fits.cross_section_quantiles.as_ref().expect("cross-section fits present");
                    effects::cross_section_quantile([&c[0], &c[1]], &self.cross_section_spec, grid)?
                }
                Target::DiffOutcome { transform } => {
                    let (_, f) = fits
                        .transformed
                        .iter()
                        .find(|(t, _)| *t == transform)
                        .expect("transformed fit present");
                    effects::diff_outcome_curve(f, spec, &self.diff_grid)?
                }
            };
            out.push(curve);
        }
        Ok(out)
    }

    /// [`Pipeline::fit`] followed by [`Pipeline::curves`].
    pub fn estimate(&self, w: &[T]) -> Result<Vec<EffectCurve<T>>, EffectError> {
        self.curves(&self.fit(w)?)
    }

    /// Estimates with unit weights.
    pub fn point_estimate(&self) -> Result<Vec<EffectCurve<T>>, EffectError> {
        self.estimate(&vec![T::one(); self.n()])
    }
}
