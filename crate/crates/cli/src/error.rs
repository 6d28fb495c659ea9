use edgebot_core::artifact::ArtifactError;
use edgebot_core::eval::EvalError;
use edgebot_core::ingest::IngestError;
use edgebot_core::learner::LearnError;
use edgebot_core::preprocess::PreprocessError;
use edgebot_core::runtime::StreamError;
use edgebot_core::select::SelectError;
use edgebot_core::tuning::SearchError;
use thiserror::Error;

/// Error families, one exit code each.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("input error: {0}")]
    Input(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("training error: {0}")]
    Training(String),
    #[error("artifact error: {0}")]
    Artifact(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Input(_) => 3,
            CliError::Data(_) => 4,
            CliError::Training(_) => 5,
            CliError::Artifact(_) => 6,
            CliError::Io(_) => 7,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        match e {
            IngestError::Io(m) => CliError::Io(m),
            IngestError::InvalidArgument(m) => CliError::Usage(m),
            e => CliError::Input(e.to_string()),
        }
    }
}

impl From<PreprocessError> for CliError {
    fn from(e: PreprocessError) -> Self {
        match e {
            PreprocessError::Format(m) => CliError::Input(m),
            e => CliError::Data(e.to_string()),
        }
    }
}

impl From<SelectError> for CliError {
    fn from(e: SelectError) -> Self {
        match e {
            SelectError::Io(e) => CliError::Io(e.to_string()),
            SelectError::UntrainedModel => CliError::Training(e.to_string()),
            e => CliError::Data(e.to_string()),
        }
    }
}

impl From<LearnError> for CliError {
    fn from(e: LearnError) -> Self {
        match e {
            LearnError::UnknownLearner(_) => CliError::Usage(e.to_string()),
            e => CliError::Training(e.to_string()),
        }
    }
}

impl From<SearchError> for CliError {
    fn from(e: SearchError) -> Self {
        CliError::Training(e.to_string())
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Learn(e) => e.into(),
            e => CliError::Data(e.to_string()),
        }
    }
}

impl From<ArtifactError> for CliError {
    fn from(e: ArtifactError) -> Self {
        match e {
            ArtifactError::Io(e) => CliError::Io(e.to_string()),
            e => CliError::Artifact(e.to_string()),
        }
    }
}

impl From<StreamError> for CliError {
    fn from(e: StreamError) -> Self {
        match e {
            StreamError::Artifact(e) => e.into(),
            e => CliError::Io(e.to_string()),
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Input(e.to_string())
    }
}

impl CliError {
    /// Prefixes the message with a path, keeping the family.
    pub fn context(self, path: &std::path::Path) -> CliError {
        let p = path.display();
        match self {
            CliError::Usage(m) => CliError::Usage(format!("{p}: {m}")),
            CliError::Input(m) => CliError::Input(format!("{p}: {m}")),
            CliError::Data(m) => CliError::Data(format!("{p}: {m}")),
            CliError::Training(m) => CliError::Training(format!("{p}: {m}")),
            CliError::Artifact(m) => CliError::Artifact(format!("{p}: {m}")),
            CliError::Io(m) => CliError::Io(format!("{p}: {m}")),
        }
    }
}
