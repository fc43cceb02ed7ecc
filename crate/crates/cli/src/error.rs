use projcc::dataset::DatasetError;
use projcc::estimators::EstimatorError;
use projcc::eval::EvalError;
use projcc::lut::LutError;
use projcc::projective::{CorrectError, FitError};
use projcc::synth::SynthError;
use projcc::ColorError;
use thiserror::Error;

/// CLI failure, classified by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, config values or spec files. Exit code 2.
    #[error("configuration error: {0}")]
    Config(String),
    /// Missing, unreadable or malformed input data. Exit code 3.
    #[error("data error: {0}")]
    Data(String),
    /// A numerical step failed. Exit code 4.
    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }
}

pub fn data(e: impl std::fmt::Display) -> CliError {
    CliError::Data(e.to_string())
}

impl From<ColorError> for CliError {
    fn from(e: ColorError) -> Self {
        CliError::Numeric(e.to_string())
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::Estimator(inner) => inner.into(),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<EstimatorError> for CliError {
    fn from(e: EstimatorError) -> Self {
        match e {
            EstimatorError::InvalidParameter(_) => CliError::Config(e.to_string()),
            EstimatorError::Color(_) | EstimatorError::EigenFailure { .. } => {
                CliError::Numeric(e.to_string())
            }
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<FitError> for CliError {
    fn from(e: FitError) -> Self {
        match e {
            FitError::InvalidConfig(_) => CliError::Config(e.to_string()),
            _ => CliError::Numeric(e.to_string()),
        }
    }
}

impl From<LutError> for CliError {
    fn from(e: LutError) -> Self {
        match e {
            LutError::Fit(inner) => inner.into(),
            LutError::Color(inner) => inner.into(),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<CorrectError> for CliError {
    fn from(e: CorrectError) -> Self {
        match e {
            CorrectError::Fit(inner) => inner.into(),
            CorrectError::Lut(inner) => inner.into(),
        }
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::InvalidSpec(_) | SynthError::SingularPlant { .. } => {
                CliError::Config(e.to_string())
            }
            SynthError::Dataset(inner) => inner.into(),
            SynthError::Io { .. } => CliError::Data(e.to_string()),
            _ => CliError::Numeric(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::UnknownFormat(_)
            | EvalError::UnknownMode(_)
            | EvalError::InvalidConfig(_) => CliError::Config(e.to_string()),
            EvalError::Dataset(inner) => inner.into(),
            EvalError::Fit(inner) => inner.into(),
            EvalError::Io { .. } => CliError::Data(e.to_string()),
            _ => CliError::Numeric(e.to_string()),
        }
    }
}
