use serde::{Deserialize, Serialize};
use serde_json::Value as Json;

/// One line of the trace log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub step_counter: u64,
    pub event: String,
    pub path: String,
    pub payload: Json,
}

/// Append-only event log with a monotonically increasing step counter.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    events: Vec<TraceEvent>,
    counter: u64,
}

impl Trace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, event: &str, path: &str, payload: Json) {
        self.counter += 1;
        self.events.push(TraceEvent {
            step_counter: self.counter,
            event: event.to_string(),
            path: path.to_string(),
            payload,
        });
    }

    pub fn events(&self) -> &[TraceEvent] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn count(&self, event: &str) -> usize {
        self.events.iter().filter(|e| e.event == event).count()
    }

    pub fn of_kind<'a>(&'a self, event: &'a str) -> impl Iterator<Item = &'a TraceEvent> + 'a {
        self.events.iter().filter(move |e| e.event == event)
    }

    /// Line-delimited JSON, one record per event.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&serde_json::to_string(e).expect("trace events serialize"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Trace, serde_json::Error> {
        let mut trace = Trace::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let e: TraceEvent = serde_json::from_str(line)?;
            trace.counter = trace.counter.max(e.step_counter);
            trace.events.push(e);
        }
        Ok(trace)
    }

    /// Names of the leaves that started, in order: the target of every
    /// action/op `step_start`.
    pub fn executed_leaves(&self) -> Vec<String> {
        self.of_kind("step_start")
            .filter(|e| matches!(e.payload["kind"].as_str(), Some("action" | "op")))
            .filter_map(|e| e.payload["target"].as_str().map(String::from))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn jsonl_round_trip() {
        let mut t = Trace::new();
        t.push("session_start", "main", json!({"root": "main"}));
        t.push("step_start", "main/look", json!({"kind": "action", "target": "look"}));
        let text = t.to_jsonl();
        assert_eq!(text.lines().count(), 2);
        assert!(text.starts_with("{\"step_counter\":1,\"event\":\"session_start\""));
        let back = Trace::from_jsonl(&text).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.executed_leaves(), vec!["look"]);
    }
}
