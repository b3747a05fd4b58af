//! Step-by-step interpretation of validated recipes.

mod action;
mod context;
mod engine;
mod eval;
mod isolated;
mod registry;
mod session;
mod trace;

use thiserror::Error;

pub use action::{ActionContext, ActionHandler, ActionResult, ActionStatus, CancelToken, FnAction};
pub use context::{FaultContext, FrameNode, LeafNode, UnitKind};
pub use engine::{Env, Executor};
pub use eval::{evaluate, EvalError, Scope};
pub use isolated::{execute_unit_isolated, IsolatedReport};
pub use registry::{OpFn, Registry, BUILTIN_OPS};
pub use session::{ExecutionSession, Frame, ResumptionDirective, SessionStatus, Strategy};
pub use trace::{Trace, TraceEvent};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExecError {
    #[error("task library has not been validated")]
    NotValidated,
    #[error("no task or action named `{0}`")]
    UnknownRoot(String),
    #[error("missing input `{0}`")]
    MissingInput(String),
    #[error("unexpected input `{0}`")]
    UnexpectedInput(String),
    #[error("`{0}` is already registered")]
    DuplicateName(String),
    #[error("`{0}` is not a task frame on the paused stack")]
    InvalidTarget(String),
    #[error("session is {0}, not PAUSED_ON_FAULT")]
    InvalidState(SessionStatus),
    #[error("cannot read inputs: {0}")]
    Deserialization(String),
}

impl ExecError {
    pub fn code(&self) -> &'static str {
        match self {
            ExecError::NotValidated => "NOT_VALIDATED",
            ExecError::UnknownRoot(_) => "UNKNOWN_ROOT",
            ExecError::MissingInput(_) | ExecError::UnexpectedInput(_) => "BAD_INPUTS",
            ExecError::DuplicateName(_) => "DUPLICATE_NAME",
            ExecError::InvalidTarget(_) => "INVALID_TARGET",
            ExecError::InvalidState(_) => "INVALID_STATE",
            ExecError::Deserialization(_) => "DESERIALIZATION_ERROR",
        }
    }
}
