//! Scenario files, experiment dispatch and result files for the `andcoop`
//! command-line tool.

pub mod experiments;
pub mod scenario;

pub use experiments::{execute, ExecSummary, ResultRow, Source};
pub use scenario::{emit, parse_file, parse_str, ExperimentKind, Scenario};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("runtime error: {0}")]
    Runtime(String),
}

impl CliError {
    /// 1 for configuration problems, 2 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl From<andcoop::Error> for CliError {
    fn from(e: andcoop::Error) -> Self {
        match e {
            andcoop::Error::Config(m) => CliError::Config(m),
            andcoop::Error::InvalidArgument(m) => CliError::Runtime(m),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}
