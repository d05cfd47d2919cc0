use std::path::PathBuf;

use serde_json::json;
use stayers::basis::BasisError;
use stayers::dgp::DgpError;
use stayers::effects::EffectError;
use stayers::inference::InferenceError;
use stayers::panel::PanelError;
use stayers::regress::RegressError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Library(#[from] stayers::Error),
    #[error("cannot write {path}: {message}")]
    Output { path: PathBuf, message: String },
}

impl CliError {
    pub fn output(path: impl Into<PathBuf>, e: impl ToString) -> Self {
        Self::Output {
            path: path.into(),
            message: e.to_string(),
        }
    }

    /// 2 for configuration, 3 for data and I/O, 4 for numerical failures.
    pub fn exit_code(&self) -> u8 {
        use stayers::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Output { .. } => 3,
            CliError::Library(e) => match e {
                E::Panel(_) => 3,
                E::Dgp(DgpError::InvalidSpec(_)) => 2,
                E::Dgp(_) => 4,
                E::Basis(e) => basis_code(e),
                E::Regress(e) => regress_code(e),
                E::Effect(e) => effect_code(e),
                E::Inference(e) => match e {
                    InferenceError::InvalidLaw(_)
                    | InferenceError::InvalidAlpha(_)
                    | InferenceError::TooFewDraws { .. }
                    | InferenceError::NoSuchCurve(_) => 2,
                    InferenceError::Effect(e) => effect_code(e),
                    InferenceError::Io(_) | InferenceError::Json(_) => 3,
                    _ => 4,
                },
            },
        }
    }

    pub fn kind(&self) -> &'static str {
        match self.exit_code() {
            2 => "config",
            3 => "data",
            _ => "numerical",
        }
    }

    /// Machine-readable report written to stderr.
    pub fn report(&self) -> String {
        json!({
            "error": {
                "kind": self.kind(),
                "exit_code": self.exit_code(),
                "message": self.to_string(),
            }
        })
        .to_string()
    }
}

fn effect_code(e: &EffectError) -> u8 {
    match e {
        EffectError::InvalidData(_) | EffectError::EmptyMeasure => 3,
        EffectError::InvalidTauParams { .. }
        | EffectError::InvalidGrid(_)
        | EffectError::WrongStructure(_)
        | EffectError::MissingTau(_) => 2,
        EffectError::Basis(e) => basis_code(e),
        EffectError::Regress(e) => regress_code(e),
        _ => 4,
    }
}

fn basis_code(e: &BasisError) -> u8 {
    match e {
        BasisError::EmptySample | BasisError::DegenerateSample | BasisError::DegreeTooHigh { .. } => 3,
        BasisError::ZeroDegree | BasisError::InvalidKnots => 2,
        BasisError::NonFinite(..) => 4,
    }
}

fn regress_code(e: &RegressError) -> u8 {
    match e {
        RegressError::Basis(e) => basis_code(e),
        RegressError::InvalidTau(_) => 2,
        _ => 4,
    }
}

macro_rules! lib_from {
    ($($t:ty),*) => {
        $(impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Library(e.into())
            }
        })*
    };
}

lib_from!(PanelError, EffectError, InferenceError, DgpError);
