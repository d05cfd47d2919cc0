use serde::Serialize;
use serde_json::json;
use stayers::effects::EffectCurve;
use stayers::inference::{apply_band, bootstrap_curves, uniform_band, BootstrapConfig, BootstrapRun, UniformBand};
use stayers::panel::{load_csv, summarize, write_csv, IngestionLog, PanelDataset};
use stayers::pipeline::{Pipeline, PipelineConfig, Target};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::mc;
use crate::output::{sha256_hex, OutputDir};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::Subcommand)]
pub enum Command {
    /// Draw a panel from `input.dgp` and write it as CSV.
    Simulate,
    /// Descriptive statistics, within-unit shares and the regressor-change histogram.
    Summarize,
    /// Mean effect at stayers and its overidentification diagnostic.
    FitMean,
    /// Quantile effects at stayers, the symmetric diagnostic and the averaged curve.
    FitQuantile,
    /// Scale and shift time effects and time-averaged effects.
    TimeEffects,
    /// Every curve listed in `pipeline.targets`.
    Effects,
    /// `pipeline.targets` with weighted-bootstrap uniform bands.
    Bands,
    /// Quantile effects of transformed outcomes under conditional independence.
    DiffEffect,
    /// Contemporaneous-regressor comparators.
    CrossSection,
    /// Monte Carlo bias, spread and band coverage on `input.dgp`.
    Mc,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Summarize => "summarize",
            Command::FitMean => "fit-mean",
            Command::FitQuantile => "fit-quantile",
            Command::TimeEffects => "time-effects",
            Command::Effects => "effects",
            Command::Bands => "bands",
            Command::DiffEffect => "diff-effect",
            Command::CrossSection => "cross-section",
            Command::Mc => "mc",
        }
    }

    fn targets(self, cfg: &RunConfig) -> Result<Vec<Target>, CliError> {
        let targets = match self {
            Command::FitMean => vec![Target::MeanEffect, Target::MeanOverid],
            Command::FitQuantile => vec![
                Target::QuantileEffect,
                Target::QuantileSymmetric,
                Target::AveragedQuantileEffect,
            ],
            Command::TimeEffects => {
                let route = cfg
                    .time_route
                    .route()
                    .ok_or_else(|| CliError::Config("time-effects needs time_route = \"moments\" or \"quantiles\"".into()))?;
                vec![
                    Target::TimeSigma { route },
                    Target::TimeShift { route },
                    Target::TimeAveragedMean { route },
                    Target::TimeAveragedQuantile { route },
                    Target::AveragedTimeAveragedQuantile { route },
                ]
            }
            Command::DiffEffect => cfg
                .transforms
                .iter()
                .map(|&transform| Target::DiffOutcome { transform })
                .collect(),
            Command::CrossSection => vec![Target::CrossSectionMean, Target::CrossSectionQuantile],
            _ => cfg.pipeline.targets.clone(),
        };
        if targets.is_empty() {
            return Err(CliError::Config(format!("{} has no curves to compute", self.name())));
        }
        Ok(targets)
    }
}

#[derive(Debug, Serialize)]
struct InputRecord {
    source: &'static str,
    units: usize,
    sha256: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    ingestion: Option<IngestionLog>,
}

#[derive(Debug, Serialize)]
struct LabelledCurve<'a> {
    target: String,
    #[serde(flatten)]
    curve: &'a EffectCurve<f64>,
}

/// Loads or simulates the panel named by the config.
fn load_data(cfg: &RunConfig) -> Result<(PanelDataset<f64>, InputRecord), CliError> {
    if let Some(path) = &cfg.input.path {
        let bytes = std::fs::read(path).map_err(|e| stayers::panel::PanelError::Io {
            path: path.clone(),
            source: e,
        })?;
        let (data, log) = load_csv::<f64>(path, &cfg.input.columns)?;
        let record = InputRecord {
            source: "csv",
            units: data.n(),
            sha256: sha256_hex(&bytes),
            ingestion: Some(log),
        };
        return Ok((data, record));
    }
    let Some(dgp) = &cfg.input.dgp else {
        return Err(CliError::Config("no input: set input.path, input.dgp or --data".into()));
    };
    let data: PanelDataset<f64> = dgp.simulate(cfg.input.n, cfg.seed)?;
    let record = InputRecord {
        source: "dgp",
        units: data.n(),
        sha256: sha256_hex(&csv_bytes(&data)?),
        ingestion: None,
    };
    Ok((data, record))
}

fn csv_bytes(data: &PanelDataset<f64>) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    write_csv(data, &mut buf)?;
    Ok(buf)
}

pub fn bootstrap_config(cfg: &RunConfig, seed_offset: u64) -> BootstrapConfig {
    BootstrapConfig {
        draws: cfg.bootstrap.draws,
        seed: cfg.bootstrap_seed().wrapping_add(seed_offset),
        law: cfg.bootstrap.weights.clone(),
        parallel: cfg.bootstrap.parallel,
    }
}

/// Bands for every curve of a run, applied in place.
pub fn bands_for(
    cfg: &RunConfig,
    run: &BootstrapRun<f64>,
    curves: &mut [EffectCurve<f64>],
) -> Result<Vec<UniformBand<f64>>, CliError> {
    let b = &cfg.bootstrap;
    curves
        .iter_mut()
        .enumerate()
        .map(|(i, c)| {
            let band = uniform_band(run, i, b.alpha, b.se, b.min_draws)?;
            apply_band(c, &band);
            Ok(band)
        })
        .collect()
}

pub fn run(cmd: Command, cfg: &RunConfig) -> Result<(), CliError> {
    let loaded = match cmd {
        Command::Simulate | Command::Mc => {
            if cfg.input.dgp.is_none() {
                return Err(CliError::Config(format!("{} needs input.dgp", cmd.name())));
            }
            None
        }
        _ => Some(load_data(cfg)?),
    };
    let mut out = OutputDir::create(&cfg.output)?;
    let resolved = cfg.to_toml()?;
    out.write("config.resolved.toml", resolved.as_bytes())?;

    let input = match (cmd, loaded) {
        (Command::Simulate, _) => {
            let dgp = cfg.input.dgp.as_ref().expect("checked above");
            let data: PanelDataset<f64> = dgp.simulate(cfg.input.n, cfg.seed)?;
            let bytes = csv_bytes(&data)?;
            out.write("data.csv", &bytes)?;
            out.write_json("summary.json", &summarize(&data)?)?;
            Some(InputRecord {
                source: "dgp",
                units: data.n(),
                sha256: sha256_hex(&bytes),
                ingestion: None,
            })
        }
        (Command::Mc, _) => {
            mc::run(cfg, &mut out)?;
            None
        }
        (_, Some((data, record))) => {
            if cmd != Command::Summarize {
                estimate(cmd, cfg, &data, &mut out)?;
            }
            out.write_json("summary.json", &json!({ "report": summarize(&data)?, "input": &record }))?;
            Some(record)
        }
        (_, None) => unreachable!("every other command loads data"),
    };

    let manifest = json!({
        "tool": "stayers",
        "version": env!("CARGO_PKG_VERSION"),
        "command": cmd.name(),
        "config_sha256": sha256_hex(resolved.as_bytes()),
        "seed": cfg.seed,
        "bootstrap_seed": cfg.bootstrap_seed(),
        "input": input,
        "outputs": out.files(),
    });
    out.write_json("manifest.json", &manifest)
}

fn estimate(cmd: Command, cfg: &RunConfig, data: &PanelDataset<f64>, out: &mut OutputDir) -> Result<(), CliError> {
    let targets = cmd.targets(cfg)?;
    let pipeline = Pipeline::prepare(
        data,
        PipelineConfig {
            targets: targets.clone(),
            ..cfg.pipeline.clone()
        },
    )?;
    let fits = pipeline.fit(&vec![1.0; pipeline.n()])?;
    out.write_json("fits.json", &fits)?;
    let mut curves = pipeline.curves(&fits)?;

    if cmd == Command::Bands {
        let run = bootstrap_curves(&pipeline, &bootstrap_config(cfg, 0))?;
        let bands = bands_for(cfg, &run, &mut curves)?;
        out.write_json("bootstrap.json", &run)?;
        out.write_json("bands.json", &bands)?;
    }

    let mut labelled = Vec::with_capacity(curves.len());
    for (t, c) in targets.iter().zip(&curves) {
        let mut buf = Vec::new();
        c.write_csv(&mut buf).map_err(|e| CliError::output(out.path("curves"), e))?;
        out.write(&format!("curves/{}.csv", t.label()), &buf)?;
        labelled.push(LabelledCurve {
            target: t.label(),
            curve: c,
        });
    }
    out.write_json("curves.json", &labelled)
}
