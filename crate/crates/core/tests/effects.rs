use proptest::prelude::*;
use stayers::basis::{BasisKind, BasisSpec, Structure};
use stayers::dgp::{DgpSpec, Family, Heterogeneity, RegressorLaw};
use stayers::effects::{
    averaged_quantile_effect, cross_section_effect, diff_outcome_effect, mean_effect_homogeneous,
    mean_effect_time_effects, quantile_effect_homogeneous, quantile_effect_time_effects,
    scale_location_from_moments, scale_location_from_quantiles, CrossSectionTarget, CurvePoint, EffectCurve,
    EffectError, EffectKind, EvalGrid, Flags, Regime, TauParams, Transform,
};
use stayers::panel::{PanelDataset, Period};
use stayers::pipeline::{Pipeline, PipelineConfig, Target};
use stayers::regress::{weights_digest, FitTarget, LinearFit, Outcome, QuantileFit};

fn linear_spec() -> BasisSpec<f64> {
    BasisSpec::new(BasisKind::RawPolynomial { degree: 1 }, Structure::Additive, true, &[-1.0, 0.0, 1.0]).unwrap()
}

fn grid() -> EvalGrid<f64> {
    EvalGrid::new((0..11).map(|i| -1.0 + 0.2 * i as f64).collect(), vec![0.1, 0.5, 0.9]).unwrap()
}

fn linear_fit(spec: &BasisSpec<f64>, beta: [f64; 3], target: FitTarget) -> LinearFit<f64> {
    LinearFit {
        beta: beta.to_vec(),
        spec_id: spec.id,
        weights_digest: weights_digest(&[1.0]),
        target,
        rank: 3,
        variance_floor: matches!(target, FitTarget::Variance(_)).then_some(1e-12),
    }
}

fn quantile_fit(spec: &BasisSpec<f64>, betas: Vec<[f64; 3]>, taus: Vec<f64>, period: Period) -> QuantileFit<f64> {
    QuantileFit {
        taus,
        betas: betas.into_iter().map(|b| b.to_vec()).collect(),
        outcome: Outcome::Period(period),
        spec_id: spec.id,
        weights_digest: weights_digest(&[1.0]),
        diagnostics: Vec::new(),
    }
}

fn mean(m: Period, beta: [f64; 3]) -> LinearFit<f64> {
    linear_fit(&linear_spec(), beta, FitTarget::Mean(m))
}

fn all_close(c: &EffectCurve<f64>, v: f64, tol: f64) -> bool {
    c.points.iter().all(|p| (p.estimate - v).abs() <= tol)
}

fn simulate(spec: &DgpSpec, n: usize, seed: u64) -> PanelDataset<f64> {
    spec.simulate(n, seed).unwrap()
}

fn pipeline(data: &PanelDataset<f64>, targets: Vec<Target>) -> Pipeline<f64> {
    let config = PipelineConfig {
        targets,
        ..PipelineConfig::default()
    };
    Pipeline::prepare(data, config).unwrap()
}

#[test]
fn identical_mean_fits_give_zero_effect_and_diagnostic() {
    let spec = linear_spec();
    let m = [0.3, 0.7, -0.2];
    let (e, d) = mean_effect_homogeneous(&mean(Period::First, m), &mean(Period::Second, m), &spec, &grid()).unwrap();
    assert!(all_close(&e, 0.0, 0.0) && all_close(&d, 0.0, 0.0));
    assert_eq!(e.regime, Regime::TimeHomogeneity);
}

#[test]
fn linear_difference_gives_unit_effect() {
    let spec = linear_spec();
    let m1 = mean(Period::First, [0.3, 0.7, -0.2]);
    // M2 - M1 = x2 - x1: both one-sided estimates equal 1.
    let m2 = mean(Period::Second, [0.3, -0.3, 0.8]);
    let (e, d) = mean_effect_homogeneous(&m1, &m2, &spec, &grid()).unwrap();
    assert!(all_close(&e, 1.0, 1e-15) && all_close(&d, 0.0, 1e-15));
    // M2 - M1 = x2: the first-argument estimate is 0, so the diagnostic is 1.
    let m2 = mean(Period::Second, [0.3, 0.7, 0.8]);
    let (e, d) = mean_effect_homogeneous(&m1, &m2, &spec, &grid()).unwrap();
    assert!(all_close(&e, 1.0, 1e-15) && all_close(&d, 1.0, 1e-15));
}

#[test]
fn mismatched_specs_are_rejected() {
    let spec = linear_spec();
    let other = BasisSpec::new(BasisKind::RawPolynomial { degree: 1 }, Structure::TensorProduct, true, &[0.0, 5.0]).unwrap();
    let m1 = mean(Period::First, [0.0; 3]);
    let m2 = linear_fit(&other, [0.0; 3], FitTarget::Mean(Period::Second));
    let err = mean_effect_homogeneous(&m1, &m2, &spec, &grid()).unwrap_err();
    assert!(matches!(err, EffectError::SpecMismatch(..)));
}

#[test]
fn identical_quantile_fits_give_zero_effect() {
    let spec = linear_spec();
    let b = vec![[-1.0, 0.5, 0.5], [0.0, 0.5, 0.5], [1.0, 0.5, 0.5]];
    let q1 = quantile_fit(&spec, b.clone(), vec![0.1, 0.5, 0.9], Period::First);
    let q2 = quantile_fit(&spec, b, vec![0.1, 0.5, 0.9], Period::Second);
    let (e, s) = quantile_effect_homogeneous(&q1, &q2, &spec, &grid()).unwrap();
    assert_eq!(e.len(), 11 * 3);
    assert!(all_close(&e, 0.0, 0.0) && all_close(&s, 0.0, 0.0));
    assert!(e.points.iter().all(|p| !p.flags.contains(Flags::QUANTILE_CROSSING)));
}

#[test]
fn crossing_quantiles_are_flagged() {
    let spec = linear_spec();
    let b = vec![[1.0, 0.0, 0.0], [0.0, 0.0, 0.0]];
    let q1 = quantile_fit(&spec, b.clone(), vec![0.25, 0.75], Period::First);
    let q2 = quantile_fit(&spec, b, vec![0.25, 0.75], Period::Second);
    let (e, _) = quantile_effect_homogeneous(&q1, &q2, &spec, &grid()).unwrap();
    assert!(e.points.iter().filter(|p| p.tau == Some(0.75)).all(|p| p.flags.contains(Flags::QUANTILE_CROSSING)));
}

#[test]
fn fourfold_variance_gives_scale_two() {
    let spec = linear_spec();
    let m1 = mean(Period::First, [1.0, 0.5, 0.0]);
    let m2 = mean(Period::Second, [4.0, 1.0, 0.0]);
    let v1 = linear_fit(&spec, [0.5, 0.0, 0.0], FitTarget::Variance(Period::First));
    let v2 = linear_fit(&spec, [2.0, 0.0, 0.0], FitTarget::Variance(Period::Second));
    let te = scale_location_from_moments([&m1, &m2], [&v1, &v2], &spec, &grid()).unwrap();
    for (i, &x) in te.x.iter().enumerate() {
        assert!((te.sigma[i].unwrap() - 2.0).abs() < 1e-15);
        let expected = (4.0 + x) - 2.0 * (1.0 + 0.5 * x);
        assert!((te.shift[i].unwrap() - expected).abs() < 1e-12);
    }
}

#[test]
fn equal_periods_give_unit_scale_and_zero_shift() {
    let spec = linear_spec();
    let m = [1.0, 0.5, 0.3];
    let v = linear_fit(&spec, [0.5, 0.0, 0.0], FitTarget::Variance(Period::First));
    let te = scale_location_from_moments([&mean(Period::First, m), &mean(Period::Second, m)], [&v, &v], &spec, &grid())
        .unwrap();
    assert!(te.sigma.iter().all(|s| *s == Some(1.0)));
    assert!(te.shift.iter().all(|s| s.unwrap().abs() < 1e-15));

    let b = vec![[-1.0, 0.5, 0.5], [0.0, 0.5, 0.5], [1.0, 0.5, 0.5]];
    let q1 = quantile_fit(&spec, b.clone(), vec![0.1, 0.5, 0.9], Period::First);
    let q2 = quantile_fit(&spec, b, vec![0.1, 0.5, 0.9], Period::Second);
    let te = scale_location_from_quantiles(&q1, &q2, &spec, &grid(), TauParams::default()).unwrap();
    assert!(te.sigma.iter().all(|s| *s == Some(1.0)));
    assert!(te.shift.iter().all(|s| s.unwrap().abs() < 1e-15));
}

#[test]
fn degenerate_tau_range_is_rejected() {
    let spec = linear_spec();
    let q = quantile_fit(&spec, vec![[0.0; 3]], vec![0.5], Period::First);
    let params = TauParams { tau1: 0.5, tau2: 0.5, tau3: 0.5 };
    let err = scale_location_from_quantiles(&q, &q, &spec, &grid(), params).unwrap_err();
    assert!(matches!(err, EffectError::InvalidTauParams { .. }));
}

#[test]
fn nonpositive_range_excludes_points() {
    let spec = linear_spec();
    // The period-1 range Q(0.9) - Q(0.1) = 2x is positive only for x > 0.
    let q1 = quantile_fit(&spec, vec![[0.0, -1.0, 0.0], [0.0, 0.0, 0.0], [0.0, 1.0, 0.0]], vec![0.1, 0.5, 0.9], Period::First);
    let q2 = quantile_fit(&spec, vec![[-1.0, 0.0, 0.0], [0.0, 0.0, 0.0], [1.0, 0.0, 0.0]], vec![0.1, 0.5, 0.9], Period::Second);
    let g = grid();
    let te = scale_location_from_quantiles(&q1, &q2, &spec, &g, TauParams::default()).unwrap();
    for (i, &x) in g.x.iter().enumerate() {
        let excluded = x <= 1e-12;
        assert_eq!(te.sigma[i].is_none(), excluded, "x = {x}");
        assert_eq!(te.flags[i].contains(Flags::NONPOSITIVE_RANGE | Flags::MISSING_SIGMA), excluded);
    }
    let curve = quantile_effect_time_effects(&q1, &q2, &te, &spec, &g).unwrap();
    let kept = g.x.iter().filter(|&&x| x > 1e-12).count();
    assert_eq!(curve.len(), kept * 3);
    assert_eq!(curve.skipped.len(), (g.x.len() - kept) * 3);
}

#[test]
fn unit_scale_collapses_to_symmetrized_homogeneous_estimates() {
    let dgp = DgpSpec::additive_linear(1.0, 0.5);
    let data = simulate(&dgp, 3000, 11);
    let p = pipeline(&data, vec![Target::MeanEffect, Target::MeanOverid, Target::QuantileEffect, Target::QuantileSymmetric]);
    let fits = p.fit(&vec![1.0; data.n()]).unwrap();
    let curves = p.curves(&fits).unwrap();
    let mut te = p.time_effects(&fits, stayers::effects::Route::Quantiles).unwrap();
    te.sigma.iter_mut().for_each(|s| *s = Some(1.0));
    let [m1, m2] = fits.means.as_ref().unwrap();
    let ta = mean_effect_time_effects(m1, m2, &te, &p.spec, &p.grid).unwrap();
    for ((a, e), d) in ta.points.iter().zip(&curves[0].points).zip(&curves[1].points) {
        // One-sided estimates are e and e - d.
        let sym = 0.5 * (e.estimate + (e.estimate - d.estimate));
        assert!((a.estimate - sym).abs() <= 1e-12 * sym.abs().max(1.0));
    }
    let [q1, q2] = fits.quantiles.as_ref().unwrap();
    let tq = quantile_effect_time_effects(q1, q2, &te, &p.spec, &p.grid).unwrap();
    for ((a, e), s) in tq.points.iter().zip(&curves[2].points).zip(&curves[3].points) {
        let sym = 0.5 * (e.estimate + s.estimate);
        assert!((a.estimate - sym).abs() <= 1e-12 * sym.abs().max(1.0));
    }
}

#[test]
fn zero_case_of_time_averaged_effect() {
    let spec = linear_spec();
    let m = [0.2, 0.4, 0.6];
    let (m1, m2) = (mean(Period::First, m), mean(Period::Second, m));
    let v = linear_fit(&spec, [1.0, 0.0, 0.0], FitTarget::Variance(Period::First));
    let te = scale_location_from_moments([&m1, &m2], [&v, &v], &spec, &grid()).unwrap();
    let c = mean_effect_time_effects(&m1, &m2, &te, &spec, &grid()).unwrap();
    assert!(all_close(&c, 0.0, 1e-15));
}

#[test]
fn affine_outcome_transform_scales_effects() {
    let dgp = DgpSpec::additive_linear(1.0, 0.5);
    let data = simulate(&dgp, 2000, 12);
    let targets = vec![
        Target::MeanEffect,
        Target::MeanOverid,
        Target::QuantileEffect,
        Target::TimeSigma { route: stayers::effects::Route::Moments },
        Target::TimeSigma { route: stayers::effects::Route::Quantiles },
    ];
    let (a, b) = (2.5, -4.0);
    let base = pipeline(&data, targets.clone()).point_estimate().unwrap();
    let moved = pipeline(&data.affine_outcome(a, b), targets).point_estimate().unwrap();
    for c in 0..3 {
        for (p, q) in base[c].points.iter().zip(&moved[c].points) {
            assert!((q.estimate - a * p.estimate).abs() <= 1e-6 * (1.0 + p.estimate.abs()), "curve {c}");
        }
    }
    for c in 3..5 {
        for (p, q) in base[c].points.iter().zip(&moved[c].points) {
            assert!((q.estimate - p.estimate).abs() <= 1e-6, "curve {c}");
        }
    }
}

#[test]
fn homogeneous_mean_effect_recovers_theta() {
    let data = simulate(&DgpSpec::additive_linear(1.0, 0.5), 10_000, 13);
    let c = &pipeline(&data, vec![Target::MeanEffect]).point_estimate().unwrap()[0];
    let mid: Vec<f64> = c.points[20..81].iter().map(|p| p.estimate).collect();
    let avg = mid.iter().sum::<f64>() / mid.len() as f64;
    assert!((avg - 1.0).abs() < 0.1, "{avg}");
}

fn tau_curve(taus: &[f64], xs: &[f64], f: impl Fn(f64, f64) -> f64) -> EffectCurve<f64> {
    let mut c = EffectCurve::new(EffectKind::QuantileEffect, Regime::TimeHomogeneity);
    for &x in xs {
        for &t in taus {
            c.points.push(CurvePoint::new(x, Some(t), f(x, t), Flags::NONE));
        }
    }
    c
}

#[test]
fn averaging_a_linear_curve_over_grid_atoms() {
    let xs: Vec<f64> = (0..=100).map(|i| i as f64 / 100.0).collect();
    let c = tau_curve(&[0.5], &xs, |x, _| 3.0 * x + 1.0);
    let measure = [0.0, 0.1, 0.25, 0.5, 1.0];
    let avg = averaged_quantile_effect(&c, &measure).unwrap();
    let direct = measure.iter().map(|m| 3.0 * m + 1.0).sum::<f64>() / measure.len() as f64;
    assert!((avg.points[0].estimate - direct).abs() < 1e-12);
    assert_eq!(avg.kind, EffectKind::AveragedQuantileEffect);
}

proptest! {
    #[test]
    fn averaging_is_linear(
        a in -3.0..3.0f64,
        b in -3.0..3.0f64,
        coef in prop::collection::vec(-2.0..2.0f64, 4),
        measure in prop::collection::vec(-0.5..1.5f64, 1..40),
    ) {
        let taus = [0.25, 0.75];
        let xs: Vec<f64> = (0..=20).map(|i| i as f64 / 20.0).collect();
        let f = |x: f64, t: f64| coef[0] + coef[1] * x * x + t;
        let g = |x: f64, t: f64| coef[2] * x.sin() + coef[3] * t;
        let mut measure = measure;
        measure.push(0.5);
        let cf = averaged_quantile_effect(&tau_curve(&taus, &xs, f), &measure).unwrap();
        let cg = averaged_quantile_effect(&tau_curve(&taus, &xs, g), &measure).unwrap();
        let ch = averaged_quantile_effect(&tau_curve(&taus, &xs, |x, t| a * f(x, t) + b * g(x, t)), &measure).unwrap();
        for k in 0..taus.len() {
            let lin = a * cf.points[k].estimate + b * cg.points[k].estimate;
            prop_assert!((ch.points[k].estimate - lin).abs() <= 1e-9 * (1.0 + lin.abs()));
        }
        prop_assert_eq!(cf.dropped, measure.iter().filter(|&&m| !(0.0..=1.0).contains(&m)).count());
    }
}

fn independence_dgp(theta: f64) -> DgpSpec {
    DgpSpec {
        family: Family::AdditiveLinear {
            theta,
            rho: 0.8,
            a_sd: 1.0,
            noise_sd: 0.5,
            heterogeneity: Heterogeneity::FirstPeriod,
        },
        regressors: RegressorLaw::default(),
    }
}

fn small_grid(data: &PanelDataset<f64>, taus: Vec<f64>) -> EvalGrid<f64> {
    EvalGrid::from_sample(&data.pooled_x(), 0.2, 0.8, 5, taus).unwrap()
}

#[test]
fn difference_of_identical_periods_has_zero_effect() {
    let d = simulate(&DgpSpec::additive_linear(1.0, 0.5), 300, 14);
    let same = PanelDataset::new(d.y1.clone(), d.y1.clone(), d.x1.clone(), d.x2.clone()).unwrap();
    let spec = BasisSpec::new(BasisKind::CubicBspline { interior_knots: 1 }, Structure::Additive, true, &same.pooled_x()).unwrap();
    let g = small_grid(&same, vec![0.25, 0.5]);
    let c = diff_outcome_effect(&same, &spec, Transform::Difference, &g.tau, &g).unwrap();
    assert!(all_close(&c, 0.0, 1e-9));
    assert_eq!(c.len(), 5 * 5 * 2);
    assert!(c.points.iter().all(|p| p.x2.is_some()));
    assert_eq!(c.caveats, vec!["requires conditional-independence assumptions".to_string()]);
}

#[test]
fn unit_linear_combination_is_period_two() {
    let d = simulate(&independence_dgp(1.0), 400, 15);
    let spec = BasisSpec::new(BasisKind::CubicBspline { interior_knots: 1 }, Structure::Additive, true, &d.pooled_x()).unwrap();
    let g = small_grid(&d, vec![0.5]);
    let a = diff_outcome_effect(&d, &spec, Transform::Period2, &g.tau, &g).unwrap();
    let b = diff_outcome_effect(&d, &spec, Transform::Linear { lambda: 0.0, pi: 1.0 }, &g.tau, &g).unwrap();
    assert_eq!(a, b);
}

#[test]
fn second_period_quantiles_recover_slope_under_independence() {
    let d = simulate(&independence_dgp(1.0), 8000, 16);
    let spec = BasisSpec::new(BasisKind::RawPolynomial { degree: 1 }, Structure::Additive, true, &d.pooled_x()).unwrap();
    let g = small_grid(&d, vec![0.25, 0.5, 0.75]);
    for t in [Transform::Period2, Transform::Difference] {
        let c = diff_outcome_effect(&d, &spec, t, &g.tau, &g).unwrap();
        assert!(all_close(&c, 1.0, 0.1), "{t:?}");
    }
}

#[test]
fn cross_section_of_identical_periods_is_one_period_slope() {
    let x: Vec<f64> = (0..50).map(|i| i as f64 / 10.0).collect();
    let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
    let d = PanelDataset::new(y.clone(), y, x.clone(), x.clone()).unwrap();
    let spec = BasisSpec::new(BasisKind::RawPolynomial { degree: 2 }, Structure::Contemporaneous, true, &x).unwrap();
    let g = EvalGrid::new(vec![1.0, 2.0, 3.0], vec![0.5]).unwrap();
    let c = cross_section_effect(&d, &spec, &CrossSectionTarget::Mean, &g).unwrap();
    assert!(all_close(&c, 2.0, 1e-9));
    assert_eq!(c.regime, Regime::CrossSection);
    let q = cross_section_effect(&d, &spec, &CrossSectionTarget::Quantiles(vec![0.5]), &g).unwrap();
    assert!(all_close(&q, 2.0, 1e-7));
}

#[test]
fn cross_section_carries_heterogeneity_bias() {
    let dgp = DgpSpec::additive_linear(1.0, 0.5);
    let d = simulate(&dgp, 20_000, 17);
    let c = &pipeline(&d, vec![Target::CrossSectionMean, Target::MeanEffect]).point_estimate().unwrap();
    let mid = |c: &EffectCurve<f64>| c.points[20..81].iter().map(|p| p.estimate).sum::<f64>() / 61.0;
    let bias = dgp.cross_section_slope().unwrap();
    assert!((mid(&c[0]) - bias).abs() < 0.05, "{} vs {bias}", mid(&c[0]));
    assert!((mid(&c[1]) - 1.0).abs() < 0.05);
}

#[test]
fn averaged_curve_needs_quantile_kind() {
    let spec = linear_spec();
    let m = [0.0; 3];
    let (e, _) = mean_effect_homogeneous(&mean(Period::First, m), &mean(Period::Second, m), &spec, &grid()).unwrap();
    assert!(matches!(averaged_quantile_effect(&e, &[0.0]), Err(EffectError::WrongCurveKind(_))));
    let q = tau_curve(&[0.5], &[0.0, 1.0], |_, _| 1.0);
    assert!(matches!(averaged_quantile_effect(&q, &[5.0]), Err(EffectError::EmptyMeasure)));
}

#[test]
fn csv_output_has_regime_column() {
    let q = tau_curve(&[0.5], &[0.0, 1.0], |x, _| x);
    let mut buf = Vec::new();
    q.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("x,tau,estimate,lower,upper,flags,regime"));
    assert_eq!(lines.next(), Some("0,0.5,0,,,,time-homogeneity"));
}
