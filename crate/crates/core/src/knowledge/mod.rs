//! Grounding database and runtime beliefs.

mod beliefs;
mod database;

use thiserror::Error;

pub use beliefs::{load_belief_schema, BeliefSnapshot, BeliefState, BeliefUpdate};
pub use database::{load_database, Database, ObjectSpec, Orientation, Pose, TypedValue};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KnowledgeError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("type error at `{key}`: {message}")]
    Type { key: String, message: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("duplicate key `{0}`")]
    DuplicateKey(String),
    #[error("belief `{key}` value {value} is outside [0, 1]")]
    Range { key: String, value: f64 },
    #[error("belief `{0}` is not declared in the schema")]
    UnknownBelief(String),
}

impl KnowledgeError {
    pub fn code(&self) -> &'static str {
        match self {
            KnowledgeError::Syntax { .. } => "SYNTAX_ERROR",
            KnowledgeError::Type { .. } => "TYPE_ERROR",
            KnowledgeError::UnknownKey(_) => "UNKNOWN_KEY",
            KnowledgeError::DuplicateKey(_) => "DUPLICATE_KEY",
            KnowledgeError::Range { .. } => "RANGE_ERROR",
            KnowledgeError::UnknownBelief(_) => "UNKNOWN_BELIEF_KEY",
        }
    }

    pub(crate) fn syntax(e: &serde_yaml::Error) -> Self {
        let (line, column) = e.location().map(|l| (l.line(), l.column())).unwrap_or((0, 0));
        KnowledgeError::Syntax {
            line,
            column,
            message: e.to_string(),
        }
    }
}
