use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RecoveryOutcomeKind {
    RecoverySucceeded,
    RecoveryFailed,
}

impl RecoveryOutcomeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            RecoveryOutcomeKind::RecoverySucceeded => "RECOVERY_SUCCEEDED",
            RecoveryOutcomeKind::RecoveryFailed => "RECOVERY_FAILED",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "RECOVERY_SUCCEEDED" => Some(RecoveryOutcomeKind::RecoverySucceeded),
            "RECOVERY_FAILED" => Some(RecoveryOutcomeKind::RecoveryFailed),
            _ => None,
        }
    }
}

/// Consecutive-failure counters.
///
/// Leaf counters are keyed by (frame path, leaf name) and clear when that
/// leaf next succeeds at that path. Task counters are keyed by task name and
/// clear only when the task itself completes.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AbortLedger {
    leaves: BTreeMap<(String, String), u32>,
    tasks: BTreeMap<String, u32>,
    outcomes: BTreeMap<(String, String), RecoveryOutcomeKind>,
}

impl AbortLedger {
    pub fn new() -> Self {
        Self::default()
    }

    /// Count one abort of `leaf` under `path`; every task in `tasks` is
    /// bumped too. Returns the new leaf counter.
    pub fn record_abort(&mut self, path: &str, leaf: &str, tasks: &[&str]) -> u32 {
        for t in tasks {
            *self.tasks.entry((*t).to_string()).or_insert(0) += 1;
        }
        let c = self.leaves.entry((path.to_string(), leaf.to_string())).or_insert(0);
        *c += 1;
        *c
    }

    pub fn record_leaf_success(&mut self, path: &str, leaf: &str) {
        let key = (path.to_string(), leaf.to_string());
        self.leaves.remove(&key);
        self.outcomes.remove(&key);
    }

    pub fn record_task_success(&mut self, task: &str) {
        self.tasks.remove(task);
    }

    pub fn leaf_count(&self, path: &str, leaf: &str) -> u32 {
        self.leaves.get(&(path.to_string(), leaf.to_string())).copied().unwrap_or(0)
    }

    pub fn task_count(&self, task: &str) -> u32 {
        self.tasks.get(task).copied().unwrap_or(0)
    }

    pub fn record_outcome(&mut self, path: &str, leaf: &str, outcome: RecoveryOutcomeKind) {
        self.outcomes.insert((path.to_string(), leaf.to_string()), outcome);
    }

    /// Outcome of the most recent recovery for this leaf since it last succeeded.
    pub fn last_outcome(&self, path: &str, leaf: &str) -> Option<RecoveryOutcomeKind> {
        self.outcomes.get(&(path.to_string(), leaf.to_string())).copied()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn task_counter_survives_descendant_success() {
        let mut l = AbortLedger::new();
        l.record_abort("main/pick_task", "pick", &["main", "pick_task"]);
        l.record_leaf_success("main/pick_task", "pick");
        assert_eq!(l.leaf_count("main/pick_task", "pick"), 0);
        assert_eq!(l.task_count("pick_task"), 1);
        l.record_task_success("pick_task");
        assert_eq!(l.task_count("pick_task"), 0);
        assert_eq!(l.task_count("main"), 1);
    }

    #[test]
    fn outcome_clears_on_success() {
        let mut l = AbortLedger::new();
        l.record_abort("t", "a", &["t"]);
        l.record_outcome("t", "a", RecoveryOutcomeKind::RecoveryFailed);
        assert_eq!(l.last_outcome("t", "a"), Some(RecoveryOutcomeKind::RecoveryFailed));
        l.record_leaf_success("t", "a");
        assert_eq!(l.last_outcome("t", "a"), None);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        // Recount oracle: walk back from the end of the history for this key
        // and count aborts until the first success.
        #[test]
        fn leaf_counter_matches_recount(events in prop::collection::vec((0usize..2, 0usize..3, any::<bool>()), 0..60)) {
            let paths = ["root/a", "root/b"];
            let leaves = ["x", "y", "z"];
            let mut ledger = AbortLedger::new();
            for (p, l, ok) in &events {
                if *ok {
                    ledger.record_leaf_success(paths[*p], leaves[*l]);
                } else {
                    ledger.record_abort(paths[*p], leaves[*l], &["root"]);
                }
            }
            for (pi, p) in paths.iter().enumerate() {
                for (li, l) in leaves.iter().enumerate() {
                    let expected = events
                        .iter()
                        .rev()
                        .filter(|(ep, el, _)| *ep == pi && *el == li)
                        .take_while(|(_, _, ok)| !ok)
                        .count() as u32;
                    prop_assert_eq!(ledger.leaf_count(p, l), expected);
                }
            }
        }
    }
}
