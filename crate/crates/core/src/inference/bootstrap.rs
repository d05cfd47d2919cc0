use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{draw_rng, draw_weights, InferenceError, WeightLaw};
use crate::effects::EffectCurve;
use crate::pipeline::Pipeline;
use crate::scalar::Real;

/// Draw count, seed and weight law of a bootstrap run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BootstrapConfig {
    pub draws: usize,
    pub seed: u64,
    pub law: WeightLaw,
    /// Compute draws on the rayon pool. Results are identical either way.
    pub parallel: bool,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            draws: 499,
            seed: 1,
            law: WeightLaw::Exponential,
            parallel: true,
        }
    }
}

/// Stored bootstrap deviations `sqrt(n) (theta*_b - theta)` for each curve
/// of a pipeline, enough to recompute bands at any level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct BootstrapRun<T> {
    pub draws: usize,
    pub seed: u64,
    pub law: WeightLaw,
    pub n: usize,
    /// Digest of the pipeline and bootstrap configuration.
    pub config_digest: String,
    /// Point estimates, one per requested curve.
    pub estimates: Vec<EffectCurve<T>>,
    /// `deviations[c][b][g]`: curve `c`, draw `b`, grid point `g`.
    pub deviations: Vec<Vec<Vec<T>>>,
    /// Weight vectors tried, including failed ones.
    pub attempts: usize,
    pub failed: usize,
}

impl<T: Real> BootstrapRun<T> {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), InferenceError> {
        let file = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer(file, self)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, InferenceError> {
        let file = std::io::BufReader::new(std::fs::File::open(path)?);
        Ok(serde_json::from_reader(file)?)
    }
}

fn config_digest<T: Real>(pipeline: &Pipeline<T>, cfg: &BootstrapConfig) -> String {
    let json = serde_json::to_vec(&(&pipeline.config, cfg.draws, cfg.seed, &cfg.law, pipeline.n()))
        .expect("configuration serializes");
    Sha256::digest(&json)[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// Deviations of one draw (`None` if every attempt failed) and the attempts used.
type DrawOutcome<T> = (Option<Vec<Vec<T>>>, usize);

fn one_draw<T: Real>(
    pipeline: &Pipeline<T>,
    cfg: &BootstrapConfig,
    estimates: &[EffectCurve<T>],
    b: usize,
    cap: usize,
) -> Result<DrawOutcome<T>, InferenceError> {
    let n = pipeline.n();
    let root_n = T::from_usize_lossy(n).sqrt();
    for attempt in 0..cap {
        let w: Vec<T> = draw_weights(n, &cfg.law, &mut draw_rng(cfg.seed, b, attempt))?;
        let Ok(curves) = pipeline.estimate(&w) else {
            continue;
        };
        let aligned = curves.len() == estimates.len()
            && curves.iter().zip(estimates).all(|(c, e)| c.same_index(e));
        if !aligned {
            continue;
        }
        let dev: Vec<Vec<T>> = curves
            .iter()
            .zip(estimates)
            .map(|(c, e)| {
                c.points
                    .iter()
                    .zip(&e.points)
                    .map(|(p, q)| root_n * (p.estimate - q.estimate))
                    .collect()
            })
            .collect();
        if dev.iter().flatten().all(|v| v.is_finite()) {
            return Ok((Some(dev), attempt + 1));
        }
    }
    Ok((None, cap))
}

/// Runs `cfg.draws` weighted-bootstrap replications of every curve in the
/// pipeline.
///
/// The point estimate is computed through the same weighted path with unit
/// weights. A draw whose fits fail, or whose curves lose grid points, is
/// redrawn with a fresh weight vector; at most `5 * draws` weight vectors are
/// tried in total.
pub fn bootstrap_curves<T: Real>(pipeline: &Pipeline<T>, cfg: &BootstrapConfig) -> Result<BootstrapRun<T>, InferenceError> {
    cfg.law.validate()?;
    if cfg.draws < 2 {
        return Err(InferenceError::TooFewDraws { found: cfg.draws, min: 2 });
    }
    let estimates = pipeline.point_estimate()?;
    let cap = 5 * cfg.draws;
    // A single draw may use whatever the other draws leave of the cap.
    let per_draw = cap - (cfg.draws - 1);
    let run = |b: usize| one_draw(pipeline, cfg, &estimates, b, per_draw);
    let outcomes: Vec<DrawOutcome<T>> = if cfg.parallel {
        (0..cfg.draws).into_par_iter().map(run).collect::<Result<_, _>>()?
    } else {
        (0..cfg.draws).map(run).collect::<Result<_, _>>()?
    };

    let attempts: usize = outcomes.iter().map(|(_, a)| a).sum();
    let failed = attempts - outcomes.iter().filter(|(d, _)| d.is_some()).count();
    if attempts > cap || outcomes.iter().any(|(d, _)| d.is_none()) {
        return Err(InferenceError::RetryCapExceeded { attempts, failed, cap });
    }
    let mut deviations: Vec<Vec<Vec<T>>> = estimates.iter().map(|_| Vec::with_capacity(cfg.draws)).collect();
    for (dev, _) in outcomes {
        for (c, d) in dev.expect("checked above").into_iter().enumerate() {
            deviations[c].push(d);
        }
    }
    Ok(BootstrapRun {
        draws: cfg.draws,
        seed: cfg.seed,
        law: cfg.law.clone(),
        n: pipeline.n(),
        config_digest: config_digest(pipeline, cfg),
        estimates,
        deviations,
        attempts,
        failed,
    })
}
