//! Synthetic two-period panels with known effects.
//!
//! Regressors: `X1 ~ N(mean, sd^2)`; with probability `stayer_prob` the unit
//! is a stayer (`X2 = X1` exactly), otherwise `X2 = X1 + N(0, change_sd^2)`.
//! Disturbances `V1, V2` are i.i.d. given `(X, A)`, so time homogeneity
//! holds by construction.

mod oracle;

pub use oracle::{OracleConfig, OracleOptions, OracleResult, TrueKind};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::panel::PanelDataset;
use crate::scalar::Real;

#[derive(Debug, Error, PartialEq)]
pub enum DgpError {
    #[error("invalid generator: {0}")]
    InvalidSpec(String),
    #[error("only {retained} oracle units near x = {x}; need {needed} (raise the oracle sample size or bandwidth)")]
    TooFewRetained { x: f64, retained: usize, needed: usize },
}

/// Joint law of `(X1, X2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegressorLaw {
    pub mean: f64,
    pub sd: f64,
    /// Probability of `X2 = X1` exactly.
    pub stayer_prob: f64,
    /// Standard deviation of `X2 - X1` among movers.
    pub change_sd: f64,
}

impl Default for RegressorLaw {
    fn default() -> Self {
        Self {
            mean: 0.0,
            sd: 1.0,
            stayer_prob: 0.15,
            change_sd: 0.5,
        }
    }
}

impl RegressorLaw {
    /// Standard deviation of pooled `X`.
    pub fn pooled_sd(&self) -> f64 {
        let v1 = self.sd * self.sd;
        let v2 = v1 + (1.0 - self.stayer_prob) * self.change_sd * self.change_sd;
        (0.5 * (v1 + v2)).sqrt()
    }
}

/// What the individual effect `A` depends on.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Heterogeneity {
    /// `A = rho (X1 + X2)/2 + noise`: correlated with both periods.
    #[default]
    Mean,
    /// `A = rho X1 + noise`: `X2` carries no information on `A` beyond `X1`.
    FirstPeriod,
}

/// `intercept + slope * x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Affine {
    pub intercept: f64,
    #[serde(default)]
    pub slope: f64,
}

impl Affine {
    pub const fn constant(c: f64) -> Self {
        Self { intercept: c, slope: 0.0 }
    }

    pub fn at(&self, x: f64) -> f64 {
        self.intercept + self.slope * x
    }
}

/// Outcome model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum Family {
    /// `Y_t = theta X_t + A + V_t`, `A = rho * h(X) + N(0, a_sd^2)`, `V_t ~ N(0, noise_sd^2)`.
    AdditiveLinear {
        theta: f64,
        rho: f64,
        a_sd: f64,
        noise_sd: f64,
        #[serde(default)]
        heterogeneity: Heterogeneity,
    },
    /// `Y_t = B1 + B2 X_t + V_t` with `Bk = bk_mean + bk_corr * Z + bk_sd * N(0, 1)`,
    /// where `Z` is the standardized unit mean of `X`.
    RandomCoefficient {
        b1_mean: f64,
        b1_corr: f64,
        b1_sd: f64,
        b2_mean: f64,
        b2_corr: f64,
        b2_sd: f64,
        noise_sd: f64,
    },
    /// `Y_t = mu_t(X_t) + sigma_t(X_t) phi(X_t, U_t)` with the additive-linear
    /// core `phi(x, U_t) = theta x + A + V_t`, `A = rho (X1 + X2)/2 + N(0, a_sd^2)`.
    LocationScale {
        theta: f64,
        rho: f64,
        a_sd: f64,
        noise_sd: f64,
        mu: [Affine; 2],
        sigma: [Affine; 2],
    },
}

/// A complete synthetic generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    #[serde(flatten)]
    pub family: Family,
    #[serde(default)]
    pub regressors: RegressorLaw,
}

impl DgpSpec {
    pub fn additive_linear(theta: f64, rho: f64) -> Self {
        Self {
            family: Family::AdditiveLinear {
                theta,
                rho,
                a_sd: 1.0,
                noise_sd: 1.0,
                heterogeneity: Heterogeneity::Mean,
            },
            regressors: RegressorLaw::default(),
        }
    }

    pub fn validate(&self) -> Result<(), DgpError> {
        let r = &self.regressors;
        let bad = |m: &str| Err(DgpError::InvalidSpec(m.to_string()));
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        if !finite(&[r.mean, r.sd, r.stayer_prob, r.change_sd]) {
            return bad("regressor parameters must be finite");
        }
        if r.sd <= 0.0 || r.change_sd < 0.0 {
            return bad("regressor standard deviations must be positive");
        }
        if !(0.0..=1.0).contains(&r.stayer_prob) {
            return bad("stayer probability must lie in [0, 1]");
        }
        match &self.family {
            Family::AdditiveLinear { theta, rho, a_sd, noise_sd, .. } => {
                if !finite(&[*theta, *rho, *a_sd, *noise_sd]) || *a_sd < 0.0 || *noise_sd < 0.0 {
                    return bad("additive-linear parameters must be finite with nonnegative scales");
                }
            }
            Family::RandomCoefficient { b1_mean, b1_corr, b1_sd, b2_mean, b2_corr, b2_sd, noise_sd } => {
                if !finite(&[*b1_mean, *b1_corr, *b1_sd, *b2_mean, *b2_corr, *b2_sd, *noise_sd])
                    || *b1_sd < 0.0
                    || *b2_sd < 0.0
                    || *noise_sd < 0.0
                {
                    return bad("random-coefficient parameters must be finite with nonnegative scales");
                }
            }
            Family::LocationScale { theta, rho, a_sd, noise_sd, mu, sigma } => {
                if !finite(&[*theta, *rho, *a_sd, *noise_sd]) || *a_sd < 0.0 || *noise_sd < 0.0 {
                    return bad("location-scale core parameters must be finite with nonnegative scales");
                }
                if mu.iter().chain(sigma).any(|a| !a.intercept.is_finite() || !a.slope.is_finite()) {
                    return bad("location and scale functions must be finite");
                }
                // Scale functions must stay positive over the bulk of the regressor law.
                let (lo, hi) = (r.mean - 6.0 * r.pooled_sd(), r.mean + 6.0 * r.pooled_sd());
                if sigma.iter().any(|s| s.at(lo) <= 0.0 || s.at(hi) <= 0.0) {
                    return bad("scale functions must be positive on the regressor support");
                }
            }
        }
        Ok(())
    }

    /// Draws `n` units. The same `(spec, n, seed)` always gives the same data.
    pub fn simulate<T: Real>(&self, n: usize, seed: u64) -> Result<PanelDataset<T>, DgpError> {
        self.validate()?;
        if n < 2 {
            return Err(DgpError::InvalidSpec("need at least two units".into()));
        }
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let (mut x1, mut x2, mut y1, mut y2) = (
            Vec::with_capacity(n),
            Vec::with_capacity(n),
            Vec::with_capacity(n),
            Vec::with_capacity(n),
        );
        for _ in 0..n {
            let u = self.draw_unit(&mut rng);
            x1.push(T::lit(u.x1));
            x2.push(T::lit(u.x2));
            y1.push(T::lit(u.y1));
            y2.push(T::lit(u.y2));
        }
        PanelDataset::new(y1, y2, x1, x2).map_err(|e| DgpError::InvalidSpec(e.to_string()))
    }

    fn draw_regressors<R: Rng>(&self, rng: &mut R) -> (f64, f64) {
        let r = &self.regressors;
        let x1 = r.mean + r.sd * normal(rng);
        let stayer = rng.random::<f64>() < r.stayer_prob;
        let x2 = if stayer { x1 } else { x1 + r.change_sd * normal(rng) };
        (x1, x2)
    }

    pub(crate) fn draw_unit<R: Rng>(&self, rng: &mut R) -> Unit {
        let (x1, x2) = self.draw_regressors(rng);
        let xbar = 0.5 * (x1 + x2);
        match self.family {
            Family::AdditiveLinear { theta, rho, a_sd, noise_sd, heterogeneity } => {
                let h = match heterogeneity {
                    Heterogeneity::Mean => xbar,
                    Heterogeneity::FirstPeriod => x1,
                };
                let a = rho * h + a_sd * normal(rng);
                let v1 = noise_sd * normal(rng);
                let v2 = noise_sd * normal(rng);
                Unit {
                    x1,
                    x2,
                    y1: theta * x1 + a + v1,
                    y2: theta * x2 + a + v2,
                    b2: theta,
                    phi_shift: a,
                    v: [v1, v2],
                }
            }
            Family::RandomCoefficient { b1_mean, b1_corr, b1_sd, b2_mean, b2_corr, b2_sd, noise_sd } => {
                let z = self.standardized_mean(xbar);
                let b1 = b1_mean + b1_corr * z + b1_sd * normal(rng);
                let b2 = b2_mean + b2_corr * z + b2_sd * normal(rng);
                let v1 = noise_sd * normal(rng);
                let v2 = noise_sd * normal(rng);
                Unit {
                    x1,
                    x2,
                    y1: b1 + b2 * x1 + v1,
                    y2: b1 + b2 * x2 + v2,
                    b2,
                    phi_shift: b1,
                    v: [v1, v2],
                }
            }
            Family::LocationScale { theta, rho, a_sd, noise_sd, mu, sigma } => {
                let a = rho * xbar + a_sd * normal(rng);
                let v1 = noise_sd * normal(rng);
                let v2 = noise_sd * normal(rng);
                let phi1 = theta * x1 + a + v1;
                let phi2 = theta * x2 + a + v2;
                Unit {
                    x1,
                    x2,
                    y1: mu[0].at(x1) + sigma[0].at(x1) * phi1,
                    y2: mu[1].at(x2) + sigma[1].at(x2) * phi2,
                    b2: theta,
                    phi_shift: a,
                    v: [v1, v2],
                }
            }
        }
    }

    /// `(xbar - E X) / SD(X1)`, the standardized unit mean used by random coefficients.
    fn standardized_mean(&self, xbar: f64) -> f64 {
        (xbar - self.regressors.mean) / self.regressors.sd
    }

    /// Scale ratio and location shift `(sigma2/sigma1, mu2 - sigma mu1)` at `x`.
    /// Families without time effects give `(1, 0)`.
    pub fn true_time_effects(&self, x: f64) -> (f64, f64) {
        match &self.family {
            Family::LocationScale { mu, sigma, .. } => {
                let s = sigma[1].at(x) / sigma[0].at(x);
                (s, mu[1].at(x) - s * mu[0].at(x))
            }
            _ => (1.0, 0.0),
        }
    }
}

/// One simulated unit plus the latent pieces oracles need.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Unit {
    pub x1: f64,
    pub x2: f64,
    pub y1: f64,
    pub y2: f64,
    /// Slope of `phi(., U)` in `x`.
    pub b2: f64,
    /// Part of `phi(x, U_t)` that does not depend on `x` or `t`.
    pub phi_shift: f64,
    pub v: [f64; 2],
}

fn normal<R: Rng>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// [`DgpSpec::simulate`] as a free function.
pub fn simulate<T: Real>(spec: &DgpSpec, n: usize, seed: u64) -> Result<PanelDataset<T>, DgpError> {
    spec.simulate(n, seed)
}

/// [`DgpSpec::true_effect`] with default oracle options.
pub fn true_effect(spec: &DgpSpec, x: f64, kind: TrueKind) -> Result<OracleResult, DgpError> {
    spec.true_effect(x, kind, &OracleOptions::default())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_linear_model_differences_exactly() {
        let spec = DgpSpec {
            family: Family::AdditiveLinear {
                theta: 1.0,
                rho: 0.0,
                a_sd: 0.0,
                noise_sd: 0.0,
                heterogeneity: Heterogeneity::Mean,
            },
            regressors: RegressorLaw::default(),
        };
        let d: PanelDataset<f64> = spec.simulate(200, 4).unwrap();
        for i in 0..d.n() {
            assert_eq!(d.y2[i] - d.y1[i], d.x2[i] - d.x1[i]);
        }
    }

    #[test]
    fn all_stayers() {
        let mut spec = DgpSpec::additive_linear(1.0, 0.5);
        spec.regressors.stayer_prob = 1.0;
        let d: PanelDataset<f64> = spec.simulate(100, 1).unwrap();
        assert!(d.x1.iter().zip(&d.x2).all(|(a, b)| a == b));
    }

    #[test]
    fn seeded_simulation_is_reproducible() {
        let spec = DgpSpec::additive_linear(1.0, 0.5);
        let a: PanelDataset<f64> = spec.simulate(50, 7).unwrap();
        let b: PanelDataset<f64> = spec.simulate(50, 7).unwrap();
        let c: PanelDataset<f64> = spec.simulate(50, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn rejects_bad_specs() {
        let mut spec = DgpSpec::additive_linear(1.0, 0.5);
        spec.regressors.stayer_prob = 1.5;
        assert!(spec.validate().is_err());
        let spec = DgpSpec {
            family: Family::LocationScale {
                theta: 1.0,
                rho: 0.0,
                a_sd: 1.0,
                noise_sd: 1.0,
                mu: [Affine::constant(0.0); 2],
                sigma: [Affine::constant(1.0), Affine { intercept: 0.1, slope: 1.0 }],
            },
            regressors: RegressorLaw::default(),
        };
        assert!(spec.validate().is_err());
        assert!(DgpSpec::additive_linear(1.0, 0.0).simulate::<f64>(1, 0).is_err());
    }
}
