use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::action::CancelToken;
use super::context::{FaultContext, FrameNode, UnitKind};
use crate::monitor::AbortLedger;
use crate::recipe::{Expression, Step};
use crate::value::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SessionStatus {
    Running,
    PausedOnFault,
    Succeeded,
    AbortedFinal,
    Preempted,
}

impl SessionStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SessionStatus::Running => "RUNNING",
            SessionStatus::PausedOnFault => "PAUSED_ON_FAULT",
            SessionStatus::Succeeded => "SUCCEEDED",
            SessionStatus::AbortedFinal => "ABORTED_FINAL",
            SessionStatus::Preempted => "PREEMPTED",
        }
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, SessionStatus::Succeeded | SessionStatus::AbortedFinal | SessionStatus::Preempted)
    }
}

impl fmt::Display for SessionStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Strategy {
    #[serde(rename = "RESUME_NONE")]
    None,
    #[serde(rename = "RESUME_CONTINUE")]
    Continue,
    #[serde(rename = "RESUME_RETRY")]
    Retry,
    #[serde(rename = "RESUME_NEXT")]
    Next,
    #[serde(rename = "RESUME_PREVIOUS")]
    Previous,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [Strategy::None, Strategy::Continue, Strategy::Retry, Strategy::Next, Strategy::Previous];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::None => "RESUME_NONE",
            Strategy::Continue => "RESUME_CONTINUE",
            Strategy::Retry => "RESUME_RETRY",
            Strategy::Next => "RESUME_NEXT",
            Strategy::Previous => "RESUME_PREVIOUS",
        }
    }

    /// Accepts `RESUME_RETRY`, `retry`, `RETRY` and so on.
    pub fn parse(s: &str) -> Option<Strategy> {
        let upper = s.trim().to_ascii_uppercase();
        let bare = upper.strip_prefix("RESUME_").unwrap_or(&upper);
        Some(match bare {
            "NONE" => Strategy::None,
            "CONTINUE" => Strategy::Continue,
            "RETRY" => Strategy::Retry,
            "NEXT" => Strategy::Next,
            "PREVIOUS" => Strategy::Previous,
            _ => return None,
        })
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResumptionDirective {
    pub strategy: Strategy,
    /// Name of a task frame on the paused stack.
    pub target: String,
}

impl ResumptionDirective {
    pub fn new(strategy: Strategy, target: &str) -> Self {
        ResumptionDirective {
            strategy,
            target: target.to_string(),
        }
    }
}

/// One activation on the call stack. Choice and loop bodies get their own
/// frame named `<step>.branch`; they read and write the enclosing task
/// frame's vars.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub unit: String,
    pub kind: UnitKind,
    pub steps: Vec<Step>,
    pub index: usize,
    pub params: BTreeMap<String, Value>,
    pub vars: BTreeMap<String, Value>,
    pub declared_vars: Vec<String>,
    /// Loop frames: 1-based iteration number and the condition to re-check.
    pub iteration: u32,
    pub condition: Option<Expression>,
}

impl Frame {
    pub fn step_name(&self) -> &str {
        self.steps.get(self.index).map(|s| s.name.as_str()).unwrap_or("")
    }

    pub fn node(&self) -> FrameNode {
        FrameNode {
            unit: self.unit.clone(),
            kind: self.kind,
            step_index: self.index,
            step_name: self.step_name().to_string(),
            params: self.params.clone(),
            vars: self.vars.clone(),
        }
    }
}

/// A running or paused interpretation of one root task.
#[derive(Debug, Clone)]
pub struct ExecutionSession {
    pub(crate) id: String,
    pub(crate) root: String,
    pub(crate) stack: Vec<Frame>,
    pub(crate) status: SessionStatus,
    pub(crate) fault: Option<FaultContext>,
    pub(crate) outputs: BTreeMap<String, Value>,
    pub(crate) ordinals: BTreeMap<String, u64>,
    pub(crate) ledger: AbortLedger,
    pub(crate) cancel: CancelToken,
}

impl ExecutionSession {
    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn root(&self) -> &str {
        &self.root
    }

    pub fn status(&self) -> SessionStatus {
        self.status
    }

    pub fn fault(&self) -> Option<&FaultContext> {
        self.fault.as_ref()
    }

    pub fn outputs(&self) -> &BTreeMap<String, Value> {
        &self.outputs
    }

    pub fn stack(&self) -> &[Frame] {
        &self.stack
    }

    /// Snapshot of every live frame, outermost first.
    pub fn frame_nodes(&self) -> Vec<FrameNode> {
        self.stack.iter().map(Frame::node).collect()
    }

    /// How many times a named unit has been started in this session.
    pub fn ordinal(&self, unit: &str) -> u64 {
        self.ordinals.get(unit).copied().unwrap_or(0)
    }

    pub fn ledger(&self) -> &AbortLedger {
        &self.ledger
    }

    pub fn ledger_mut(&mut self) -> &mut AbortLedger {
        &mut self.ledger
    }

    /// Token that preempts the session (and the in-flight action) when set.
    pub fn cancel_token(&self) -> CancelToken {
        self.cancel.clone()
    }

    pub(crate) fn scope_index(&self) -> usize {
        self.stack
            .iter()
            .rposition(|f| f.kind == UnitKind::Task)
            .expect("a task frame is always at the bottom of the stack")
    }

    pub(crate) fn frame_path(&self) -> String {
        let names: Vec<&str> = self.stack.iter().map(|f| f.unit.as_str()).collect();
        names.join("/")
    }

    pub(crate) fn task_names(&self) -> Vec<&str> {
        self.stack
            .iter()
            .filter(|f| f.kind == UnitKind::Task)
            .map(|f| f.unit.as_str())
            .collect()
    }
}
