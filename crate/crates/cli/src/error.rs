use std::process::ExitCode;

use sarforge::dataset::DatasetError;
use sarforge::formats::FormatError;
use sarforge::metrics::MetricsError;
use sarforge::models::ModelError;
use sarforge::nn::NnError;
use sarforge::rda::RdaError;
use sarforge::sim::SimError;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Io(String),
    Format(String),
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Usage(_) => 2,
            CliError::Io(_) | CliError::Format(_) => 3,
            CliError::Numeric(_) => 4,
        })
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage: {m}"),
            CliError::Io(m) => write!(f, "i/o: {m}"),
            CliError::Format(m) => write!(f, "format: {m}"),
            CliError::Numeric(m) => write!(f, "numeric: {m}"),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<FormatError> for CliError {
    fn from(e: FormatError) -> Self {
        match e {
            FormatError::Io(e) => e.into(),
            e => CliError::Format(e.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Io(e) => e.into(),
            SimError::Json(e) => CliError::Format(e.to_string()),
            e => CliError::Usage(e.to_string()),
        }
    }
}

impl From<RdaError> for CliError {
    fn from(e: RdaError) -> Self {
        match e {
            RdaError::EchoShape { .. } => CliError::Format(e.to_string()),
            RdaError::Radar(e) => e.into(),
            e => CliError::Usage(e.to_string()),
        }
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::Io(e) => e.into(),
            DatasetError::Sim(e) => e.into(),
            DatasetError::Rda(e) => e.into(),
            DatasetError::DegenerateData(_) => CliError::Numeric(e.to_string()),
            DatasetError::FactorMismatch { .. } | DatasetError::BadSplit { .. } => CliError::Usage(e.to_string()),
            e => CliError::Format(e.to_string()),
        }
    }
}

impl From<NnError> for CliError {
    fn from(e: NnError) -> Self {
        match e {
            NnError::Io(e) => e.into(),
            NnError::Format(_) | NnError::Checksum => CliError::Format(e.to_string()),
            NnError::ShapeMismatch(_) | NnError::BadLabel { .. } => CliError::Format(e.to_string()),
            e => CliError::Usage(e.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Nn(e) => e.into(),
            ModelError::Config(m) => CliError::Usage(m),
            ModelError::Data(m) if m.contains("non-finite") => CliError::Numeric(m),
            ModelError::Data(m) => CliError::Format(m),
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        match e {
            MetricsError::Nn(e) => e.into(),
            MetricsError::NoPeak { .. } => CliError::Numeric(e.to_string()),
            e => CliError::Format(e.to_string()),
        }
    }
}
