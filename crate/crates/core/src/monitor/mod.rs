//! Rule-based diagnosis and recovery of paused sessions.

mod ledger;
mod report;
mod rules;
mod supervise;

use thiserror::Error;

pub use ledger::{AbortLedger, RecoveryOutcomeKind};
pub use report::{report, Breakdown, Bucket, StatsReport, NONE_BUCKET};
pub use rules::{
    diagnose, load_rules, suffix_matches, BeliefOp, BeliefPredicate, DirectiveSpec, Factor, PathElem, Pattern, RecoveryRule, Resumption,
    RuleInputs, RuleSet, Tag,
};
pub use supervise::{
    recover, recovery_bindings, RecoveryDecision, RecoveryOutcome, Supervised, Supervisor, UnseenPolicy, DEFAULT_MAX_FAULTS,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MonitorError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("{0}")]
    Structure(String),
    #[error("rule `{rule}` names unknown recovery task `{task}`")]
    UnknownRecoveryTask { rule: String, task: String },
    #[error("rule `{rule}` uses undeclared belief `{key}`")]
    UnknownBeliefKey { rule: String, key: String },
    #[error("rule `{0}` has an empty or inverted range")]
    BadRange(String),
    #[error("rule `{rule}` resumes `{target}`, which is not a task named in its suffix")]
    BadTarget { rule: String, target: String },
    #[error("rule `{rule}` has a bad pattern: {message}")]
    BadPattern { rule: String, message: String },
}

impl MonitorError {
    pub fn code(&self) -> &'static str {
        match self {
            MonitorError::Syntax { .. } => "SYNTAX_ERROR",
            MonitorError::Structure(_) => "STRUCTURE_ERROR",
            MonitorError::UnknownRecoveryTask { .. } => "UNKNOWN_RECOVERY_TASK",
            MonitorError::UnknownBeliefKey { .. } => "UNKNOWN_BELIEF_KEY",
            MonitorError::BadRange(_) => "BAD_RANGE",
            MonitorError::BadTarget { .. } => "BAD_TARGET",
            MonitorError::BadPattern { .. } => "BAD_PATTERN",
        }
    }

    pub(crate) fn syntax(e: &serde_yaml::Error) -> Self {
        let (line, column) = e.location().map(|l| (l.line(), l.column())).unwrap_or((0, 0));
        MonitorError::Syntax {
            line,
            column,
            message: e.to_string(),
        }
    }
}
