use std::collections::BTreeMap;
use std::fmt;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::knowledge::BeliefState;
use crate::recipe::ActionSchema;
use crate::value::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ActionStatus {
    Succeeded,
    Aborted,
    Preempted,
}

impl fmt::Display for ActionStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ActionStatus::Succeeded => "SUCCEEDED",
            ActionStatus::Aborted => "ABORTED",
            ActionStatus::Preempted => "PREEMPTED",
        })
    }
}

/// Terminal result of one action invocation. Outputs are only carried on
/// success; an error signal only on abort.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionResult {
    status: ActionStatus,
    outputs: BTreeMap<String, Value>,
    error_signal: Option<String>,
    error_fields: BTreeMap<String, Value>,
}

impl ActionResult {
    pub fn succeeded(outputs: BTreeMap<String, Value>) -> Self {
        ActionResult {
            status: ActionStatus::Succeeded,
            outputs,
            error_signal: None,
            error_fields: BTreeMap::new(),
        }
    }

    pub fn ok() -> Self {
        Self::succeeded(BTreeMap::new())
    }

    /// An abort. An empty signal is replaced with `UNSPECIFIED`.
    pub fn aborted(signal: &str, fields: BTreeMap<String, Value>) -> Self {
        let signal = if signal.is_empty() { "UNSPECIFIED" } else { signal };
        ActionResult {
            status: ActionStatus::Aborted,
            outputs: BTreeMap::new(),
            error_signal: Some(signal.to_string()),
            error_fields: fields,
        }
    }

    pub fn preempted() -> Self {
        ActionResult {
            status: ActionStatus::Preempted,
            outputs: BTreeMap::new(),
            error_signal: None,
            error_fields: BTreeMap::new(),
        }
    }

    pub fn status(&self) -> ActionStatus {
        self.status
    }

    pub fn outputs(&self) -> &BTreeMap<String, Value> {
        &self.outputs
    }

    pub fn error_signal(&self) -> Option<&str> {
        self.error_signal.as_deref()
    }

    pub fn error_fields(&self) -> &BTreeMap<String, Value> {
        &self.error_fields
    }
}

/// Shared cancellation flag. Handlers poll it between simulated sub-steps.
#[derive(Debug, Clone, Default)]
pub struct CancelToken(Arc<AtomicBool>);

impl CancelToken {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn request(&self) {
        self.0.store(true, Ordering::SeqCst);
    }

    pub fn is_requested(&self) -> bool {
        self.0.load(Ordering::SeqCst)
    }

    pub fn clear(&self) {
        self.0.store(false, Ordering::SeqCst);
    }
}

/// What a handler may touch while it runs.
pub struct ActionContext<'a, W> {
    pub world: &'a mut W,
    pub beliefs: &'a mut BeliefState,
    pub cancel: &'a CancelToken,
}

impl<W> ActionContext<'_, W> {
    pub fn cancelled(&self) -> bool {
        self.cancel.is_requested()
    }
}

/// A primitive action. `execute` blocks until a terminal result and must
/// return `PREEMPTED` promptly once cancellation is requested.
pub trait ActionHandler<W>: Send + Sync {
    /// Declared params/outputs, used by recipe validation. `None` accepts anything.
    fn schema(&self) -> Option<ActionSchema> {
        None
    }

    fn execute(&self, params: &BTreeMap<String, Value>, ctx: &mut ActionContext<'_, W>) -> ActionResult;
}

type ActionFn<W> = dyn Fn(&BTreeMap<String, Value>, &mut ActionContext<'_, W>) -> ActionResult + Send + Sync;

/// Closure-backed handler.
pub struct FnAction<W> {
    schema: Option<ActionSchema>,
    f: Box<ActionFn<W>>,
}

impl<W> FnAction<W> {
    pub fn new<F>(f: F) -> Self
    where
        F: Fn(&BTreeMap<String, Value>, &mut ActionContext<'_, W>) -> ActionResult + Send + Sync + 'static,
    {
        FnAction { schema: None, f: Box::new(f) }
    }

    pub fn with_schema(mut self, schema: ActionSchema) -> Self {
        self.schema = Some(schema);
        self
    }
}

impl<W> ActionHandler<W> for FnAction<W> {
    fn schema(&self) -> Option<ActionSchema> {
        self.schema.clone()
    }

    fn execute(&self, params: &BTreeMap<String, Value>, ctx: &mut ActionContext<'_, W>) -> ActionResult {
        (self.f)(params, ctx)
    }
}
