use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::{DgpError, DgpSpec, Family, Heterogeneity, Unit};

/// Units simulated per independent oracle substream.
const CHUNK: usize = 1 << 16;

/// Which true effect to compute.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "tau", rename_all = "kebab-case")]
pub enum TrueKind {
    /// `E[d/dx phi(x, U_t) | X1 = X2 = x]`.
    Mean,
    /// `E[d/dx phi(x, U_t) | X1 = X2 = x, phi(x, U_t) = q(tau, x)]`.
    Quantile(f64),
    TimeAveragedMean,
    TimeAveragedQuantile(f64),
}

/// Simulation settings for brute-force oracles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleOptions {
    pub n_oracle: usize,
    pub seed: u64,
    /// Number of disjoint batches for the subsampling standard error.
    pub batches: usize,
    pub min_retained: usize,
    /// Multiplies the default stayer bandwidth `n_oracle^(-1/5) SD(X)`.
    pub bandwidth_scale: f64,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self {
            n_oracle: 1_000_000,
            seed: 0x00DD_5EED,
            batches: 20,
            min_retained: 500,
            bandwidth_scale: 1.0,
        }
    }
}

/// Settings that produced an oracle value. Zero sizes mean a closed form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    pub n_oracle: usize,
    pub stayer_bandwidth: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quantile_bandwidth: Option<f64>,
    pub retained: usize,
}

impl OracleConfig {
    const ANALYTIC: OracleConfig = OracleConfig {
        n_oracle: 0,
        stayer_bandwidth: 0.0,
        quantile_bandwidth: None,
        retained: 0,
    };
}

/// A true effect with its simulation standard error (zero when exact).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub value: f64,
    pub standard_error: f64,
    pub config: OracleConfig,
}

impl OracleResult {
    fn exact(value: f64) -> Self {
        Self {
            value,
            standard_error: 0.0,
            config: OracleConfig::ANALYTIC,
        }
    }

    /// `|estimate - value| <= k * SE + slack`.
    pub fn covers(&self, estimate: f64, k: f64, slack: f64) -> bool {
        (estimate - self.value).abs() <= k * self.standard_error + slack
    }
}

fn check_tau(tau: f64) -> Result<(), DgpError> {
    if tau > 0.0 && tau < 1.0 {
        Ok(())
    } else {
        Err(DgpError::InvalidSpec(format!("quantile index {tau} must lie in (0, 1)")))
    }
}

fn std_normal_quantile(tau: f64) -> f64 {
    Normal::standard().inverse_cdf(tau)
}

impl DgpSpec {
    /// The true effect at `x`.
    ///
    /// Additive-linear and location-scale families have closed forms. For
    /// location-scale the plain kinds report the time-averaged effect, the
    /// only one identified under time effects. Random-coefficient effects are
    /// computed by brute-force conditioning on a simulated population.
    pub fn true_effect(&self, x: f64, kind: TrueKind, opts: &OracleOptions) -> Result<OracleResult, DgpError> {
        self.validate()?;
        if !x.is_finite() {
            return Err(DgpError::InvalidSpec("evaluation point must be finite".into()));
        }
        if let TrueKind::Quantile(t) | TrueKind::TimeAveragedQuantile(t) = kind {
            check_tau(t)?;
        }
        match &self.family {
            Family::AdditiveLinear { theta, .. } => Ok(OracleResult::exact(*theta)),
            Family::LocationScale { theta, rho, a_sd, noise_sd, mu, sigma } => {
                let mu_bar_d = 0.5 * (mu[0].slope + mu[1].slope);
                let sigma_bar_d = 0.5 * (sigma[0].slope + sigma[1].slope);
                let sigma_bar = 0.5 * (sigma[0].at(x) + sigma[1].at(x));
                // Among stayers at x, phi(x, U) ~ N((theta + rho) x, a_sd^2 + noise_sd^2)
                // and d/dx phi = theta.
                let centre = (theta + rho) * x;
                let level = match kind {
                    TrueKind::Mean | TrueKind::TimeAveragedMean => centre,
                    TrueKind::Quantile(t) | TrueKind::TimeAveragedQuantile(t) => {
                        centre + (a_sd * a_sd + noise_sd * noise_sd).sqrt() * std_normal_quantile(t)
                    }
                };
                Ok(OracleResult::exact(mu_bar_d + sigma_bar_d * level + sigma_bar * theta))
            }
            Family::RandomCoefficient { .. } => self.brute_force(x, kind, opts),
        }
    }

    /// Closed-form `E[B2 | X1 = X2 = x]` for random-coefficient families, or
    /// `theta` for the others.
    pub fn analytic_mean_slope(&self, x: f64) -> f64 {
        match self.family {
            Family::AdditiveLinear { theta, .. } | Family::LocationScale { theta, .. } => theta,
            Family::RandomCoefficient { b2_mean, b2_corr, .. } => b2_mean + b2_corr * self.standardized_mean(x),
        }
    }

    /// Population slope of the period-`t` cross-sectional mean `E[Y_t | X_t = x]`
    /// for additive-linear families whose heterogeneity loads on the unit mean.
    ///
    /// In period 1 the slope is `theta + rho`. In period 2 it is
    /// `theta + rho (1 - c/2)`, with `c` the linear-projection coefficient of
    /// `X2 - X1` on `X2`; the pooled average of the two is returned.
    pub fn cross_section_slope(&self) -> Option<f64> {
        let Family::AdditiveLinear { theta, rho, heterogeneity: Heterogeneity::Mean, .. } = self.family else {
            return None;
        };
        let r = &self.regressors;
        let mover_var = (1.0 - r.stayer_prob) * r.change_sd * r.change_sd;
        let c = mover_var / (r.sd * r.sd + mover_var);
        Some(theta + rho * (1.0 - 0.25 * c))
    }

    /// Simulates `n` oracle units on independent ChaCha substreams, one per
    /// chunk, so the result does not depend on the thread count.
    fn oracle_population(&self, n: usize, seed: u64) -> Vec<Unit> {
        let chunks = n.div_ceil(CHUNK);
        (0..chunks)
            .into_par_iter()
            .flat_map_iter(|k| {
                let mut rng = ChaCha20Rng::seed_from_u64(seed);
                rng.set_stream(k as u64);
                let len = CHUNK.min(n - k * CHUNK);
                (0..len).map(move |_| self.draw_unit(&mut rng)).collect::<Vec<_>>()
            })
            .collect()
    }

    fn brute_force(&self, x: f64, kind: TrueKind, opts: &OracleOptions) -> Result<OracleResult, DgpError> {
        if opts.batches < 2 {
            return Err(DgpError::InvalidSpec("oracle needs at least two batches".into()));
        }
        if !(opts.bandwidth_scale > 0.0 && opts.bandwidth_scale.is_finite()) {
            return Err(DgpError::InvalidSpec("oracle bandwidth scale must be positive".into()));
        }
        let n = opts.n_oracle;
        let h = opts.bandwidth_scale * (n as f64).powf(-0.2) * self.regressors.pooled_sd();
        let retained: Vec<Unit> = self
            .oracle_population(n, opts.seed)
            .into_iter()
            .filter(|u| (u.x1 - u.x2).abs() <= h && (0.5 * (u.x1 + u.x2) - x).abs() <= h)
            .collect();
        if retained.len() < opts.min_retained {
            return Err(DgpError::TooFewRetained {
                x,
                retained: retained.len(),
                needed: opts.min_retained,
            });
        }
        let tau = match kind {
            TrueKind::Mean | TrueKind::TimeAveragedMean => None,
            TrueKind::Quantile(t) | TrueKind::TimeAveragedQuantile(t) => Some(t),
        };
        let stat = |units: &[Unit]| -> (f64, Option<f64>) {
            match tau {
                None => (units.iter().map(|u| u.b2).sum::<f64>() / units.len() as f64, None),
                Some(t) => local_quantile_slope(units, x, t),
            }
        };
        let (value, qband) = stat(&retained);
        let size = retained.len() / opts.batches;
        let batch: Vec<f64> = retained
            .chunks_exact(size.max(1))
            .take(opts.batches)
            .map(|b| stat(b).0)
            .filter(|v| v.is_finite())
            .collect();
        let m = batch.len() as f64;
        let mean = batch.iter().sum::<f64>() / m;
        let var = batch.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m - 1.0);
        Ok(OracleResult {
            value,
            standard_error: (var / m).sqrt(),
            config: OracleConfig {
                n_oracle: n,
                stayer_bandwidth: h,
                quantile_bandwidth: qband,
                retained: retained.len(),
            },
        })
    }
}

/// Mean slope among units whose `phi(x, U_t)`, pooled over both periods, lies
/// within a bandwidth of its `tau`-quantile. Returns the value and bandwidth.
fn local_quantile_slope(units: &[Unit], x: f64, tau: f64) -> (f64, Option<f64>) {
    let mut pairs: Vec<(f64, f64)> = units
        .iter()
        .flat_map(|u| u.v.map(|v| (u.phi_shift + u.b2 * x + v, u.b2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let m = pairs.len();
    let q = pairs[((tau * m as f64).ceil() as usize).clamp(1, m) - 1].0;
    let mean = pairs.iter().map(|p| p.0).sum::<f64>() / m as f64;
    let sd = (pairs.iter().map(|p| (p.0 - mean) * (p.0 - mean)).sum::<f64>() / (m as f64 - 1.0)).sqrt();
    let hq = (m as f64).powf(-0.2) * sd;
    let near: Vec<f64> = pairs.iter().filter(|p| (p.0 - q).abs() <= hq).map(|p| p.1).collect();
    let value = if near.is_empty() {
        f64::NAN
    } else {
        near.iter().sum::<f64>() / near.len() as f64
    };
    (value, Some(hq))
}
