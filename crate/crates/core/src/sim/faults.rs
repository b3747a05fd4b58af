use std::collections::BTreeMap;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_yaml::Value as Yaml;

use super::SimError;

/// Signals each mock action can be made to raise by injection.
pub fn signal_vocabulary(action: &str) -> &'static [&'static str] {
    match action {
        "navigate" => &["LOCALIZATION_LOST", "BLOCKED"],
        "reposition" => &["BLOCKED"],
        "look" => &["CAMERA_TIMEOUT"],
        "segment" => &["NO_CLUSTERS"],
        "detect_object" | "detect_schunk" => &["DETECTION_FAILED"],
        "detect_large_object_pose" => &["POSE_ESTIMATION_FAILED"],
        "pick" => &["PLANNING_FAILURE", "NO_GRASP_FOUND", "DROPPED_OBJECT"],
        "in_hand_localize" => &["LOCALIZATION_FAILED"],
        "place_in_kit" => &["PLACE_FAILED"],
        "insert_gear" => &["INSERTION_MISS", "FALSE_POSITIVE_INSERT"],
        "move_arm" => &["PLANNING_FAILURE"],
        "reinit_obstacle_map" => &["MAP_SERVICE_DOWN"],
        _ => &[],
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedFault {
    pub action: String,
    /// 1-based invocation of `action` within one run.
    pub invocation: u64,
    pub signal: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Stochastic {
    #[serde(default)]
    pub default_probability: f64,
    #[serde(default)]
    pub probabilities: BTreeMap<String, f64>,
    /// Per-action signal weights; actions left out draw uniformly from
    /// their vocabulary.
    #[serde(default)]
    pub signals: BTreeMap<String, BTreeMap<String, f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultPlan {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub deterministic: Vec<ScriptedFault>,
    #[serde(default)]
    pub stochastic: Stochastic,
}

impl FaultPlan {
    /// No faults at all.
    pub fn none() -> Self {
        Self::default()
    }

    pub fn scripted(entries: &[(&str, u64, &str)]) -> Self {
        FaultPlan {
            deterministic: entries
                .iter()
                .map(|(a, n, s)| ScriptedFault {
                    action: a.to_string(),
                    invocation: *n,
                    signal: s.to_string(),
                })
                .collect(),
            ..Self::default()
        }
    }

    pub fn uniform(probability: f64, seed: u64) -> Self {
        FaultPlan {
            seed,
            deterministic: Vec::new(),
            stochastic: Stochastic {
                default_probability: probability,
                ..Stochastic::default()
            },
        }
    }

    pub fn probability(&self, action: &str) -> f64 {
        self.stochastic
            .probabilities
            .get(action)
            .copied()
            .unwrap_or(self.stochastic.default_probability)
    }

    fn scripted_signal(&self, action: &str, invocation: u64) -> Option<&str> {
        self.deterministic
            .iter()
            .find(|f| f.action == action && f.invocation == invocation)
            .map(|f| f.signal.as_str())
    }

    fn check(&self) -> Result<(), SimError> {
        let probs = std::iter::once(("default", self.stochastic.default_probability))
            .chain(self.stochastic.probabilities.iter().map(|(k, v)| (k.as_str(), *v)));
        for (k, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(SimError::FaultPlan(format!("probability for `{k}` is {p}, outside [0, 1]")));
            }
        }
        for f in &self.deterministic {
            if f.invocation == 0 {
                return Err(SimError::FaultPlan(format!("`{}` invocation numbers start at 1", f.action)));
            }
        }
        for (action, weights) in &self.stochastic.signals {
            if weights.values().any(|w| !w.is_finite() || *w < 0.0) || weights.values().all(|w| *w == 0.0) {
                return Err(SimError::FaultPlan(format!("signal weights for `{action}` must be non-negative and not all zero")));
            }
        }
        Ok(())
    }
}

/// Decide whether the `invocation`th call of `action` faults. The Bernoulli
/// draw happens on every call so the stream does not depend on which entries
/// are scripted; a scripted entry then wins over the draw.
pub fn next_fault<R: Rng + ?Sized>(plan: &FaultPlan, action: &str, invocation: u64, rng: &mut R) -> Option<String> {
    let hit = rng.gen_bool(plan.probability(action).clamp(0.0, 1.0));
    if let Some(sig) = plan.scripted_signal(action, invocation) {
        return Some(sig.to_string());
    }
    if !hit {
        return None;
    }
    match plan.stochastic.signals.get(action) {
        Some(weights) => {
            let names: Vec<&String> = weights.keys().collect();
            let dist = WeightedIndex::new(weights.values().copied()).ok()?;
            Some(names[dist.sample(rng)].clone())
        }
        None => signal_vocabulary(action).choose(rng).map(|s| s.to_string()),
    }
}

pub fn load_fault_plan(document: &str) -> Result<FaultPlan, SimError> {
    let doc: Yaml = serde_yaml::from_str(document).map_err(|e| SimError::syntax(&e))?;
    let plan: FaultPlan = if doc.is_null() {
        FaultPlan::none()
    } else {
        serde_yaml::from_value(doc).map_err(|e| SimError::FaultPlan(e.to_string()))?
    };
    plan.check()?;
    Ok(plan)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn scripted_entry_is_a_lookup() {
        let plan = FaultPlan::scripted(&[("pick", 1, "PLANNING_FAILURE")]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(next_fault(&plan, "pick", 1, &mut rng).as_deref(), Some("PLANNING_FAILURE"));
        assert_eq!(next_fault(&plan, "pick", 2, &mut rng), None);
        assert_eq!(next_fault(&plan, "look", 1, &mut rng), None);
    }

    #[test]
    fn probability_extremes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let never = FaultPlan::uniform(0.0, 3);
        let always = FaultPlan::uniform(1.0, 3);
        for n in 1..=200 {
            assert_eq!(next_fault(&never, "pick", n, &mut rng), None);
            let sig = next_fault(&always, "pick", n, &mut rng).unwrap();
            assert!(signal_vocabulary("pick").contains(&sig.as_str()));
        }
    }

    #[test]
    fn actions_without_vocabulary_never_fault_stochastically() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let always = FaultPlan::uniform(1.0, 1);
        assert_eq!(next_fault(&always, "verify_grasp", 1, &mut rng), None);
    }

    #[test]
    fn weighted_signals_respect_zero_weight() {
        let doc = "stochastic:\n  default_probability: 1.0\n  signals:\n    pick: {PLANNING_FAILURE: 1, DROPPED_OBJECT: 0}\n";
        let plan = load_fault_plan(doc).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for n in 1..50 {
            assert_eq!(next_fault(&plan, "pick", n, &mut rng).as_deref(), Some("PLANNING_FAILURE"));
        }
    }

    #[test]
    fn rejects_bad_plans() {
        assert_eq!(load_fault_plan("stochastic: {default_probability: 1.5}").unwrap_err().code(), "FAULT_PLAN_ERROR");
        assert_eq!(
            load_fault_plan("deterministic: [{action: pick, invocation: 0, signal: X}]").unwrap_err().code(),
            "FAULT_PLAN_ERROR"
        );
        assert_eq!(load_fault_plan("seed: [").unwrap_err().code(), "SYNTAX_ERROR");
        assert_eq!(load_fault_plan("").unwrap(), FaultPlan::none());
    }
}
