//! Weighted-bootstrap inference: weight laws, reproducible draws, and
//! uniform confidence bands from the maximal studentized deviation.

mod band;
mod bootstrap;

pub use band::{apply_band, pointwise_t_crit, uniform_band, SeMethod, UniformBand, MIN_DRAWS};
pub use bootstrap::{bootstrap_curves, BootstrapConfig, BootstrapRun};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::effects::EffectError;
use crate::scalar::Real;

#[derive(Debug, Error)]
pub enum InferenceError {
    #[error(transparent)]
    Effect(#[from] EffectError),
    #[error("invalid weight law: {0}")]
    InvalidLaw(String),
    #[error("{failed} of {attempts} bootstrap attempts failed; retry cap is {cap}")]
    RetryCapExceeded { attempts: usize, failed: usize, cap: usize },
    #[error("need at least {min} bootstrap draws, have {found}")]
    TooFewDraws { found: usize, min: usize },
    #[error("alpha must lie in (0, 1), got {0}")]
    InvalidAlpha(f64),
    #[error("curve index {0} is out of range")]
    NoSuchCurve(usize),
    #[error("cannot read or write archive: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed archive: {0}")]
    Json(#[from] serde_json::Error),
}

/// Law of the i.i.d. observation weights. All laws have mean 1 and
/// variance 1 except `Degenerate`, which puts all mass on 1.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "kebab-case")]
pub enum WeightLaw {
    #[default]
    Exponential,
    /// Multinomial counts of `n` draws with replacement (the empirical bootstrap).
    Multinomial,
    /// Every weight equals one; reproduces the point estimate.
    Degenerate,
    /// Discrete law on nonnegative `values` with probabilities `probs`.
    Custom { values: Vec<f64>, probs: Vec<f64> },
}

impl WeightLaw {
    /// Checks that a custom law is a nonnegative distribution with mean 1 and variance 1.
    pub fn validate(&self) -> Result<(), InferenceError> {
        let WeightLaw::Custom { values, probs } = self else {
            return Ok(());
        };
        let bad = |m: String| Err(InferenceError::InvalidLaw(m));
        if values.is_empty() || values.len() != probs.len() {
            return bad("values and probs must be nonempty and of equal length".into());
        }
        if values.iter().chain(probs).any(|v| !v.is_finite() || *v < 0.0) {
            return bad("values and probs must be finite and nonnegative".into());
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return bad(format!("probabilities sum to {total}"));
        }
        let mean: f64 = values.iter().zip(probs).map(|(v, p)| v * p).sum();
        let var: f64 = values.iter().zip(probs).map(|(v, p)| p * (v - mean) * (v - mean)).sum();
        if (mean - 1.0).abs() > 1e-9 || (var - 1.0).abs() > 1e-9 {
            return bad(format!("mean {mean} and variance {var} must both be 1"));
        }
        Ok(())
    }
}

/// The generator for attempt `attempt` of draw `draw`.
///
/// ChaCha20 keyed by `seed`, on stream `(attempt << 32) | draw`. Each
/// (draw, attempt) pair owns an independent stream, so results do not
/// depend on the order or thread in which draws are computed.
pub fn draw_rng(seed: u64, draw: usize, attempt: usize) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(((attempt as u64) << 32) | (draw as u64 & 0xffff_ffff));
    rng
}

/// `n` i.i.d. weights from `law`.
pub fn draw_weights<T: Real, R: Rng>(n: usize, law: &WeightLaw, rng: &mut R) -> Result<Vec<T>, InferenceError> {
    if n == 0 {
        return Err(InferenceError::InvalidLaw("need at least one observation".into()));
    }
    law.validate()?;
    Ok(match law {
        WeightLaw::Exponential => (0..n).map(|_| T::lit(Exp1.sample(rng))).collect(),
        WeightLaw::Degenerate => vec![T::one(); n],
        WeightLaw::Multinomial => {
            let mut counts = vec![0u32; n];
            for _ in 0..n {
                counts[rng.random_range(0..n)] += 1;
            }
            counts.into_iter().map(|c| T::lit(f64::from(c))).collect()
        }
        WeightLaw::Custom { values, probs } => {
            let dist = WeightedIndex::new(probs).map_err(|e| InferenceError::InvalidLaw(e.to_string()))?;
            (0..n).map(|_| T::lit(values[dist.sample(rng)])).collect()
        }
    })
}
