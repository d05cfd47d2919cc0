use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use stayers::dgp::{DgpSpec, OracleOptions};
use stayers::effects::{Route, Transform};
use stayers::inference::{SeMethod, WeightLaw};
use stayers::panel::ColumnMap;
use stayers::pipeline::PipelineConfig;

use crate::error::CliError;

/// Data source: a long-format CSV or a synthetic generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    pub columns: ColumnMap,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dgp: Option<DgpSpec>,
    /// Units drawn from `dgp`.
    pub n: usize,
}

impl Default for InputConfig {
    fn default() -> Self {
        Self {
            path: None,
            columns: ColumnMap::default(),
            dgp: None,
            n: 10_000,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TimeRoute {
    #[default]
    Moments,
    Quantiles,
    None,
}

impl TimeRoute {
    pub fn route(self) -> Option<Route> {
        match self {
            TimeRoute::Moments => Some(Route::Moments),
            TimeRoute::Quantiles => Some(Route::Quantiles),
            TimeRoute::None => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BootstrapSection {
    pub draws: usize,
    /// Defaults to the top-level seed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub weights: WeightLaw,
    pub alpha: f64,
    pub se: SeMethod,
    pub parallel: bool,
    /// Smallest draw count accepted by the band step.
    pub min_draws: usize,
}

impl Default for BootstrapSection {
    fn default() -> Self {
        Self {
            draws: 499,
            seed: None,
            weights: WeightLaw::Exponential,
            alpha: 0.1,
            se: SeMethod::Iqr,
            parallel: true,
            min_draws: stayers::inference::MIN_DRAWS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McSection {
    pub replications: usize,
    pub oracle: OracleOptions,
}

impl Default for McSection {
    fn default() -> Self {
        Self {
            replications: 200,
            oracle: OracleOptions::default(),
        }
    }
}

/// Declarative run description; every field has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub output: PathBuf,
    pub time_route: TimeRoute,
    pub transforms: Vec<Transform>,
    pub input: InputConfig,
    pub pipeline: PipelineConfig,
    pub bootstrap: BootstrapSection,
    pub mc: McSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            output: PathBuf::from("out"),
            time_route: TimeRoute::Moments,
            transforms: vec![Transform::Difference],
            input: InputConfig::default(),
            pipeline: PipelineConfig::default(),
            bootstrap: BootstrapSection::default(),
            mc: McSection::default(),
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub boot: Option<usize>,
    pub alpha: Option<f64>,
    pub se: Option<SeMethod>,
    pub out: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub replications: Option<usize>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Applies overrides and fills derived defaults, so the result fully
    /// determines the run.
    pub fn resolve(mut self, o: &Overrides) -> Result<Self, CliError> {
        if let Some(s) = o.seed {
            self.seed = s;
            self.bootstrap.seed = None;
        }
        if let Some(b) = o.boot {
            self.bootstrap.draws = b;
        }
        if let Some(a) = o.alpha {
            self.bootstrap.alpha = a;
        }
        if let Some(se) = o.se {
            self.bootstrap.se = se;
        }
        if let Some(out) = &o.out {
            self.output = out.clone();
        }
        if let Some(d) = &o.data {
            self.input.path = Some(d.clone());
            self.input.dgp = None;
        }
        if let Some(r) = o.replications {
            self.mc.replications = r;
        }
        self.bootstrap.seed.get_or_insert(self.seed);
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<(), CliError> {
        let bad = |m: &str| Err(CliError::Config(m.to_string()));
        if self.input.path.is_some() && self.input.dgp.is_some() {
            return bad("input must name either a csv path or a dgp, not both");
        }
        if self.input.dgp.is_some() && self.input.n < 2 {
            return bad("input.n must be at least 2");
        }
        let a = self.bootstrap.alpha;
        if !(a > 0.0 && a < 1.0) {
            return bad("bootstrap.alpha must lie in (0, 1)");
        }
        if self.bootstrap.min_draws < 2 {
            return bad("bootstrap.min_draws must be at least 2");
        }
        self.bootstrap
            .weights
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        if let Some(dgp) = &self.input.dgp {
            dgp.validate().map_err(|e| CliError::Config(e.to_string()))?;
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Config(format!("cannot serialize config: {e}")))
    }

    pub fn bootstrap_seed(&self) -> u64 {
        self.bootstrap.seed.unwrap_or(self.seed)
    }
}
