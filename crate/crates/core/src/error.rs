use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Pipeline stage, used to attribute failures in [`Error::Stage`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Scenario,
    Sensing,
    Fusion,
    Tracking,
    Prediction,
    RiskMap,
    Planning,
    Metrics,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Stage::Scenario => "scenario",
            Stage::Sensing => "sensing",
            Stage::Fusion => "fusion",
            Stage::Tracking => "tracking",
            Stage::Prediction => "prediction",
            Stage::RiskMap => "risk map",
            Stage::Planning => "planning",
            Stage::Metrics => "metrics",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("density {requested} exceeds the {template} lane capacity of {capacity}")]
    Capacity {
        template: String,
        requested: usize,
        capacity: usize,
    },

    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: Box<Error>,
    },

    #[error("malformed risk map file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn at(self, stage: Stage) -> Self {
        match self {
            e @ Error::Stage { .. } => e,
            e => Error::Stage {
                stage,
                source: Box::new(e),
            },
        }
    }

    /// True for errors caused by bad user configuration rather than a stage
    /// failing on valid input.
    pub fn is_config(&self) -> bool {
        match self {
            Error::Config(_) | Error::Capacity { .. } => true,
            Error::Stage { source, .. } => source.is_config(),
            _ => false,
        }
    }
}
