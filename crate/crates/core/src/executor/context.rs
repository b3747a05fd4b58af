use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value as Json};

use crate::knowledge::BeliefSnapshot;
use crate::value::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnitKind {
    Task,
    Action,
    Op,
    Choice,
    Loop,
}

impl UnitKind {
    pub fn as_str(self) -> &'static str {
        match self {
            UnitKind::Task => "task",
            UnitKind::Action => "action",
            UnitKind::Op => "op",
            UnitKind::Choice => "choice",
            UnitKind::Loop => "loop",
        }
    }
}

impl fmt::Display for UnitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One enclosing frame at fault time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameNode {
    pub unit: String,
    pub kind: UnitKind,
    pub step_index: usize,
    pub step_name: String,
    pub params: BTreeMap<String, Value>,
    pub vars: BTreeMap<String, Value>,
}

/// The unit that failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeafNode {
    pub unit: String,
    pub kind: UnitKind,
    pub step_name: String,
    pub params: BTreeMap<String, Value>,
    pub error_signal: String,
    pub error_fields: BTreeMap<String, Value>,
    pub consecutive_abort_count: u32,
}

/// Everything the monitor sees about a fault: the frame chain from the root
/// task down, the failing leaf, and the beliefs at that moment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultContext {
    pub levels: Vec<FrameNode>,
    pub leaf: LeafNode,
    pub beliefs: BeliefSnapshot,
}

fn map_json(m: &BTreeMap<String, Value>) -> Json {
    Json::Object(m.iter().map(|(k, v)| (k.clone(), v.to_json())).collect())
}

impl FaultContext {
    /// Names of the enclosing frames, outermost first.
    pub fn frame_path(&self) -> Vec<&str> {
        self.levels.iter().map(|l| l.unit.as_str()).collect()
    }

    /// Frame names followed by the leaf name.
    pub fn full_path(&self) -> Vec<&str> {
        let mut p = self.frame_path();
        p.push(&self.leaf.unit);
        p
    }

    /// Innermost enclosing task frame, the default resumption target.
    pub fn failing_task(&self) -> Option<&str> {
        self.levels
            .iter()
            .rev()
            .find(|l| l.kind == UnitKind::Task)
            .map(|l| l.unit.as_str())
    }

    pub fn task_names(&self) -> Vec<&str> {
        self.levels
            .iter()
            .filter(|l| l.kind == UnitKind::Task)
            .map(|l| l.unit.as_str())
            .collect()
    }

    /// The recursive-dictionary form: each level nests the next under `child`.
    pub fn to_json(&self) -> Json {
        let mut node = json!({
            "unit": self.leaf.unit,
            "kind": self.leaf.kind.as_str(),
            "step_name": self.leaf.step_name,
            "params": map_json(&self.leaf.params),
            "error_signal": self.leaf.error_signal,
            "error_fields": map_json(&self.leaf.error_fields),
            "consecutive_abort_count": self.leaf.consecutive_abort_count,
        });
        for level in self.levels.iter().rev() {
            let mut m = Map::new();
            m.insert("unit".into(), json!(level.unit));
            m.insert("kind".into(), json!(level.kind.as_str()));
            m.insert("step_index".into(), json!(level.step_index));
            m.insert("step_name".into(), json!(level.step_name));
            m.insert("params".into(), map_json(&level.params));
            m.insert("vars".into(), map_json(&level.vars));
            m.insert("child".into(), node);
            node = Json::Object(m);
        }
        json!({
            "context": node,
            "beliefs": {
                "counter": self.beliefs.counter,
                "values": self.beliefs.values,
            },
        })
    }
}
