use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_yaml::Value as Yaml;

use super::KnowledgeError;
use crate::value::yaml_key;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct Entry {
    value: f64,
    updated_at: u64,
}

/// A belief write, as appended to the execution trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefUpdate {
    pub key: String,
    pub value: f64,
    pub counter: u64,
}

/// Scalar confidences in `[0, 1]` keyed by a closed schema.
#[derive(Debug, Clone, Default)]
pub struct BeliefState {
    entries: BTreeMap<String, Entry>,
    schema: Option<BTreeSet<String>>,
    counter: u64,
    pending: Vec<BeliefUpdate>,
}

/// Immutable copy of the beliefs at one counter value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BeliefSnapshot {
    pub counter: u64,
    pub values: BTreeMap<String, f64>,
}

impl BeliefSnapshot {
    pub fn get(&self, key: &str) -> Option<f64> {
        self.values.get(key).copied()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

impl BeliefState {
    /// An open state: any key may be set.
    pub fn new() -> Self {
        Self::default()
    }

    /// A closed state seeded with initial values; only these keys can be set.
    pub fn with_schema(initial: BTreeMap<String, f64>) -> Result<Self, KnowledgeError> {
        let mut entries = BTreeMap::new();
        for (k, v) in &initial {
            check_range(k, *v)?;
            entries.insert(k.clone(), Entry { value: *v, updated_at: 0 });
        }
        Ok(BeliefState {
            entries,
            schema: Some(initial.into_keys().collect()),
            counter: 0,
            pending: Vec::new(),
        })
    }

    pub fn declares(&self, key: &str) -> bool {
        match &self.schema {
            Some(s) => s.contains(key),
            None => true,
        }
    }

    pub fn schema(&self) -> Option<&BTreeSet<String>> {
        self.schema.as_ref()
    }

    pub fn set(&mut self, key: &str, value: f64) -> Result<u64, KnowledgeError> {
        check_range(key, value)?;
        if !self.declares(key) {
            return Err(KnowledgeError::UnknownBelief(key.to_string()));
        }
        self.counter += 1;
        self.entries.insert(
            key.to_string(),
            Entry {
                value,
                updated_at: self.counter,
            },
        );
        self.pending.push(BeliefUpdate {
            key: key.to_string(),
            value,
            counter: self.counter,
        });
        Ok(self.counter)
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        self.entries.get(key).map(|e| e.value)
    }

    pub fn updated_at(&self, key: &str) -> Option<u64> {
        self.entries.get(key).map(|e| e.updated_at)
    }

    pub fn counter(&self) -> u64 {
        self.counter
    }

    pub fn snapshot(&self) -> BeliefSnapshot {
        BeliefSnapshot {
            counter: self.counter,
            values: self.entries.iter().map(|(k, e)| (k.clone(), e.value)).collect(),
        }
    }

    /// Updates since the last drain, oldest first.
    pub fn drain_updates(&mut self) -> Vec<BeliefUpdate> {
        std::mem::take(&mut self.pending)
    }
}

fn check_range(key: &str, value: f64) -> Result<(), KnowledgeError> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(KnowledgeError::Range {
            key: key.to_string(),
            value,
        })
    }
}

/// Load a belief schema: a map of belief key to initial value, or a list of
/// keys (initial value 1.0).
pub fn load_belief_schema(document: &str) -> Result<BeliefState, KnowledgeError> {
    let doc: Yaml = serde_yaml::from_str(document).map_err(|e| KnowledgeError::syntax(&e))?;
    let mut initial = BTreeMap::new();
    match doc {
        Yaml::Null => {}
        Yaml::Mapping(m) => {
            for (k, v) in m {
                let key = yaml_key(&k);
                let value = match v {
                    Yaml::Number(n) => n.as_f64().unwrap_or(f64::NAN),
                    Yaml::Bool(b) => f64::from(u8::from(b)),
                    other => {
                        return Err(KnowledgeError::Type {
                            key,
                            message: format!("initial belief must be a number, found {other:?}"),
                        })
                    }
                };
                initial.insert(key, value);
            }
        }
        Yaml::Sequence(items) => {
            for it in items {
                match it {
                    Yaml::String(s) => {
                        initial.insert(s, 1.0);
                    }
                    other => {
                        return Err(KnowledgeError::Type {
                            key: String::new(),
                            message: format!("belief entries must be names, found {other:?}"),
                        })
                    }
                }
            }
        }
        _ => {
            return Err(KnowledgeError::Type {
                key: String::new(),
                message: "belief schema must be a map or list".into(),
            })
        }
    }
    BeliefState::with_schema(initial)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn write_then_read() {
        let mut b = load_belief_schema("ROBOT_AT_EXPECTED_LOCATION: 1.0").unwrap();
        b.set("ROBOT_AT_EXPECTED_LOCATION", 0.0).unwrap();
        assert_eq!(b.snapshot().get("ROBOT_AT_EXPECTED_LOCATION"), Some(0.0));
    }

    #[test]
    fn out_of_range_is_rejected() {
        let mut b = BeliefState::new();
        assert_eq!(b.set("X", 1.5).unwrap_err().code(), "RANGE_ERROR");
        assert_eq!(b.set("X", -0.1).unwrap_err().code(), "RANGE_ERROR");
        assert!(b.get("X").is_none());
    }

    #[test]
    fn last_writer_wins_with_increasing_counter() {
        let mut b = BeliefState::new();
        let c1 = b.set("K", 0.3).unwrap();
        let c2 = b.set("K", 0.7).unwrap();
        assert!(c2 > c1);
        assert_eq!(b.get("K"), Some(0.7));
        assert_eq!(b.updated_at("K"), Some(c2));
        assert_eq!(b.drain_updates().len(), 2);
        assert!(b.drain_updates().is_empty());
    }

    #[test]
    fn snapshot_is_isolated() {
        let mut b = BeliefState::new();
        assert!(b.snapshot().is_empty());
        b.set("K", 0.2).unwrap();
        let snap = b.snapshot();
        b.set("K", 0.9).unwrap();
        assert_eq!(snap.get("K"), Some(0.2));
        assert_eq!(snap.counter, 1);
    }

    #[test]
    fn closed_schema_rejects_unknown_keys() {
        let mut b = load_belief_schema("[A, B]").unwrap();
        assert_eq!(b.get("A"), Some(1.0));
        assert_eq!(b.set("C", 0.5).unwrap_err().code(), "UNKNOWN_BELIEF_KEY");
        assert!(load_belief_schema("A: 2.0").is_err());
    }
}
