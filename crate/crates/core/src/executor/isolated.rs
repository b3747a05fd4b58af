use std::collections::BTreeMap;

use serde::Serialize;
use serde_json::{json, Value as Json};

use super::action::{ActionContext, ActionStatus, CancelToken};
use super::context::{FaultContext, LeafNode, UnitKind};
use super::engine::{Env, Executor};
use super::session::SessionStatus;
use super::ExecError;
use crate::value::Value;

/// Exit report of an isolated run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IsolatedReport {
    pub status: String,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub outputs: BTreeMap<String, Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fault_context: Option<Json>,
}

impl IsolatedReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

/// Run a single task or action with JSON inputs. Tasks take precedence when
/// a name is both.
pub fn execute_unit_isolated<W>(
    exec: &Executor<'_, W>,
    unit: &str,
    inputs: &str,
    env: &mut Env<'_, W>,
) -> Result<IsolatedReport, ExecError> {
    let inputs: BTreeMap<String, Value> =
        serde_json::from_str(inputs).map_err(|e| ExecError::Deserialization(e.to_string()))?;

    if exec.library().get(unit).is_some() {
        let s = exec.execute(unit, inputs, env)?;
        let status = match s.status() {
            SessionStatus::PausedOnFault => "ABORTED",
            other => other.as_str(),
        };
        return Ok(IsolatedReport {
            status: status.to_string(),
            outputs: s.outputs().clone(),
            fault_context: s.fault().map(FaultContext::to_json),
        });
    }

    let handler = exec
        .registry()
        .action(unit)
        .ok_or_else(|| ExecError::UnknownRoot(unit.to_string()))?
        .clone();
    let cancel = CancelToken::new();
    let params: BTreeMap<String, Json> = inputs.iter().map(|(k, v)| (k.clone(), v.to_json())).collect();
    env.trace.push("step_start", unit, json!({"kind": "action", "target": unit, "ordinal": 1, "params": params}));
    let result = handler.execute(
        &inputs,
        &mut ActionContext {
            world: &mut *env.world,
            beliefs: &mut *env.beliefs,
            cancel: &cancel,
        },
    );
    for u in env.beliefs.drain_updates() {
        env.trace.push("belief", unit, json!({"key": u.key, "value": u.value, "counter": u.counter}));
    }
    env.trace.push("step_end", unit, json!({"kind": "action", "status": result.status().to_string()}));

    let fault_context = (result.status() == ActionStatus::Aborted).then(|| {
        FaultContext {
            levels: Vec::new(),
            leaf: LeafNode {
                unit: unit.to_string(),
                kind: UnitKind::Action,
                step_name: unit.to_string(),
                params: inputs.clone(),
                error_signal: result.error_signal().unwrap_or("UNSPECIFIED").to_string(),
                error_fields: result.error_fields().clone(),
                consecutive_abort_count: 1,
            },
            beliefs: env.beliefs.snapshot(),
        }
        .to_json()
    });
    Ok(IsolatedReport {
        status: result.status().to_string(),
        outputs: result.outputs().clone(),
        fault_context,
    })
}
