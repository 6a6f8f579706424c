use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("parse error at {path} (line {line}, column {column}): {message}")]
    Parse { path: String, line: usize, column: usize, message: String },
    #[error("invalid scenario: {0}")]
    Validation(String),
    #[error("unresolved name {0:?}")]
    UnresolvedName(String),
    #[error("unknown bundled scenario {0:?}")]
    UnknownScenario(String),
}
