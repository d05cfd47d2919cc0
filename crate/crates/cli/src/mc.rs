use rayon::prelude::*;
use serde::Serialize;
use stayers::dgp::{DgpSpec, Family, OracleOptions, TrueKind};
use stayers::effects::{EffectCurve, EffectKind};
use stayers::inference::bootstrap_curves;
use stayers::panel::PanelDataset;
use stayers::pipeline::{Pipeline, Target};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::output::OutputDir;
use crate::run::{bands_for, bootstrap_config};

/// Replication counts below this are reported but flagged.
pub const MIN_REPLICATIONS: usize = 50;

/// One row of the coverage table.
#[derive(Debug, Clone, Serialize)]
pub struct McRow {
    pub target: String,
    pub replications: usize,
    pub points: usize,
    pub bias: Option<f64>,
    pub sd: Option<f64>,
    pub rmse: Option<f64>,
    pub coverage: Option<f64>,
    pub alpha: f64,
    pub low_replications: bool,
}

struct CurveOutcome {
    estimates: Vec<f64>,
    truths: Vec<Option<f64>>,
    covered: Option<bool>,
}

/// Population value of a curve point, where a closed form exists.
fn truth(dgp: &DgpSpec, kind: EffectKind, x: f64, tau: Option<f64>, opts: &OracleOptions) -> Result<Option<f64>, CliError> {
    let random = matches!(dgp.family, Family::RandomCoefficient { .. });
    let closed = |k: TrueKind| -> Result<Option<f64>, CliError> {
        if random {
            Ok(None)
        } else {
            Ok(Some(dgp.true_effect(x, k, opts)?.value))
        }
    };
    match (kind, tau) {
        (EffectKind::MeanEffect | EffectKind::TimeAveragedMean, _) if random => Ok(Some(dgp.analytic_mean_slope(x))),
        (EffectKind::MeanEffect | EffectKind::TimeAveragedMean, _) => closed(TrueKind::TimeAveragedMean),
        (EffectKind::MeanOverid, _) => Ok(match dgp.family {
            Family::LocationScale { .. } => None,
            _ => Some(0.0),
        }),
        (EffectKind::QuantileEffect | EffectKind::QuantileSymmetric, Some(t)) => closed(TrueKind::Quantile(t)),
        (EffectKind::TimeAveragedQuantile, Some(t)) => closed(TrueKind::TimeAveragedQuantile(t)),
        (EffectKind::TimeSigma, _) => Ok(Some(dgp.true_time_effects(x).0)),
        (EffectKind::TimeShift, _) => Ok(Some(dgp.true_time_effects(x).1)),
        (EffectKind::CrossSectionMean, _) => Ok(dgp.cross_section_slope()),
        _ => Ok(None),
    }
}

fn replicate(cfg: &RunConfig, dgp: &DgpSpec, rep: u64) -> Result<Vec<CurveOutcome>, CliError> {
    let data: PanelDataset<f64> = dgp.simulate(cfg.input.n, cfg.seed.wrapping_add(rep))?;
    let pipeline = Pipeline::prepare(&data, cfg.pipeline.clone())?;
    let mut curves = pipeline.point_estimate()?;
    let banded = cfg.bootstrap.draws > 0;
    if banded {
        let run = bootstrap_curves(&pipeline, &bootstrap_config(cfg, rep))?;
        bands_for(cfg, &run, &mut curves)?;
    }
    curves.iter().map(|c| outcome(c, dgp, &cfg.mc.oracle, banded)).collect()
}

fn outcome(c: &EffectCurve<f64>, dgp: &DgpSpec, opts: &OracleOptions, banded: bool) -> Result<CurveOutcome, CliError> {
    let truths = c
        .points
        .iter()
        .map(|p| truth(dgp, c.kind, p.x, p.tau, opts))
        .collect::<Result<Vec<_>, _>>()?;
    let covered = if banded && !truths.is_empty() && truths.iter().all(Option::is_some) {
        Some(c.points.iter().zip(&truths).all(|(p, t)| {
            let t = t.expect("checked above");
            matches!((p.lower, p.upper), (Some(l), Some(u)) if l <= t && t <= u)
        }))
    } else {
        None
    };
    Ok(CurveOutcome {
        estimates: c.points.iter().map(|p| p.estimate).collect(),
        truths,
        covered,
    })
}

fn summarize(target: &Target, reps: &[&CurveOutcome], alpha: f64) -> McRow {
    let r = reps.len();
    let mut errors = Vec::new();
    for o in reps {
        for (e, t) in o.estimates.iter().zip(&o.truths) {
            if let Some(t) = t {
                errors.push(e - t);
            }
        }
    }
    let has_truth = !errors.is_empty() && reps.iter().all(|o| o.truths.iter().all(Option::is_some));
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;

    // Across-replication spread per grid position, averaged over positions.
    let points = reps.iter().map(|o| o.estimates.len()).max().unwrap_or(0);
    let mut spreads = Vec::new();
    for g in 0..points {
        let column: Vec<f64> = reps.iter().filter_map(|o| o.estimates.get(g).copied()).collect();
        if column.len() >= 2 {
            let m = mean(&column);
            let var = column.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (column.len() - 1) as f64;
            spreads.push(var.sqrt());
        }
    }
    let coverage = if reps.iter().all(|o| o.covered.is_some()) && r > 0 {
        Some(reps.iter().filter(|o| o.covered == Some(true)).count() as f64 / r as f64)
    } else {
        None
    };
    McRow {
        target: target.label(),
        replications: r,
        points,
        bias: has_truth.then(|| mean(&errors)),
        sd: (!spreads.is_empty()).then(|| mean(&spreads)),
        rmse: has_truth.then(|| mean(&errors.iter().map(|e| e * e).collect::<Vec<_>>()).sqrt()),
        coverage,
        alpha,
        low_replications: r < MIN_REPLICATIONS,
    }
}

pub fn table(cfg: &RunConfig) -> Result<Vec<McRow>, CliError> {
    let dgp = cfg
        .input
        .dgp
        .as_ref()
        .ok_or_else(|| CliError::Config("mc needs input.dgp".into()))?;
    let r = cfg.mc.replications;
    if r == 0 {
        return Err(CliError::Config("mc.replications must be positive".into()));
    }
    if cfg.pipeline.targets.is_empty() {
        return Err(CliError::Config("mc has no curves to compute".into()));
    }
    let outcomes = (0..r as u64)
        .into_par_iter()
        .map(|rep| replicate(cfg, dgp, rep))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(cfg
        .pipeline
        .targets
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let reps: Vec<&CurveOutcome> = outcomes.iter().map(|o| &o[i]).collect();
            summarize(t, &reps, cfg.bootstrap.alpha)
        })
        .collect())
}

pub fn run(cfg: &RunConfig, out: &mut OutputDir) -> Result<(), CliError> {
    let rows = table(cfg)?;
    if cfg.mc.replications < MIN_REPLICATIONS {
        eprintln!(
            "{}",
            serde_json::json!({ "warning": format!("{} replications is below the recommended {MIN_REPLICATIONS}", cfg.mc.replications) })
        );
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in &rows {
        w.serialize(row).map_err(|e| CliError::output(out.path("mc.csv"), e))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::output(out.path("mc.csv"), e))?;
    out.write("mc.csv", &bytes)?;
    out.write_json("mc.json", &rows)
}
