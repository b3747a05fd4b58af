use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::ledger::RecoveryOutcomeKind;
use super::rules::{diagnose, Factor, RuleSet, Tag};
use crate::executor::{Env, ExecError, ExecutionSession, Executor, FaultContext, ResumptionDirective, SessionStatus, Strategy};
use crate::value::Value;

/// What to do with a fault no rule matches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum UnseenPolicy {
    #[default]
    AlwaysExit,
    /// One `RESUME_CONTINUE` per distinct (path, signal), then exit.
    RetryOnceThenExit,
}

impl UnseenPolicy {
    pub fn as_str(self) -> &'static str {
        match self {
            UnseenPolicy::AlwaysExit => "ALWAYS_EXIT",
            UnseenPolicy::RetryOnceThenExit => "RETRY_ONCE_THEN_EXIT",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_uppercase().replace('-', "_").as_str() {
            "ALWAYS_EXIT" => Some(UnseenPolicy::AlwaysExit),
            "RETRY_ONCE_THEN_EXIT" => Some(UnseenPolicy::RetryOnceThenExit),
            _ => None,
        }
    }
}

impl fmt::Display for UnseenPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecoveryOutcome {
    pub kind: RecoveryOutcomeKind,
    pub outputs: BTreeMap<String, Value>,
}

/// What the monitor decided for one fault.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecoveryDecision {
    /// Matched rule id; `None` for an unseen error.
    pub rule: Option<String>,
    pub leaf: String,
    pub signal: String,
    pub abort_count: u32,
    pub tags: BTreeSet<Tag>,
    pub factors: BTreeSet<Factor>,
    pub recovery: Option<String>,
    pub outcome: Option<RecoveryOutcomeKind>,
    pub directive: ResumptionDirective,
}

/// Values a recovery task's params are bound from, by name: the leaf's
/// params and error fields, plus `error_signal`, `failed_unit`,
/// `abort_count` and `failing_task`.
pub fn recovery_bindings(fault: &FaultContext) -> BTreeMap<String, Value> {
    let mut m = fault.leaf.params.clone();
    m.extend(fault.leaf.error_fields.clone());
    m.insert("error_signal".into(), Value::Str(fault.leaf.error_signal.clone()));
    m.insert("failed_unit".into(), Value::Str(fault.leaf.unit.clone()));
    m.insert("abort_count".into(), Value::Int(i64::from(fault.leaf.consecutive_abort_count)));
    m.insert(
        "failing_task".into(),
        fault.failing_task().map(|t| Value::Str(t.to_string())).unwrap_or(Value::Null),
    );
    m
}

/// Run a recovery task to a terminal state on `exec`. Any fault inside it
/// ends the attempt as `RECOVERY_FAILED`.
pub fn recover<W>(exec: &Executor<'_, W>, task: &str, fault: &FaultContext, env: &mut Env<'_, W>) -> RecoveryOutcome {
    let failed = RecoveryOutcome {
        kind: RecoveryOutcomeKind::RecoveryFailed,
        outputs: BTreeMap::new(),
    };
    let Some(def) = exec.library().get(task) else { return failed };
    let bindings = recovery_bindings(fault);
    let inputs = def
        .params
        .iter()
        .map(|p| (p.clone(), bindings.get(p).cloned().unwrap_or(Value::Null)))
        .collect();
    match exec.execute(task, inputs, env) {
        Ok(s) if s.status() == SessionStatus::Succeeded => RecoveryOutcome {
            kind: RecoveryOutcomeKind::RecoverySucceeded,
            outputs: s.outputs().clone(),
        },
        _ => failed,
    }
}

/// A supervised run's result.
#[derive(Debug)]
pub struct Supervised {
    pub session: ExecutionSession,
    pub decisions: Vec<RecoveryDecision>,
}

/// The loop tying a main executor to the rules and a recovery executor.
pub struct Supervisor<'a, W> {
    pub main: Executor<'a, W>,
    /// Runs recovery recipes; its trace paths should carry a prefix.
    pub recovery: Executor<'a, W>,
    pub rules: &'a RuleSet,
    pub policy: UnseenPolicy,
    /// Give up (RESUME_NONE) after this many faults in one session.
    pub max_faults: usize,
}

pub const DEFAULT_MAX_FAULTS: usize = 200;

impl<'a, W> Supervisor<'a, W> {
    pub fn new(main: Executor<'a, W>, recovery: Executor<'a, W>, rules: &'a RuleSet, policy: UnseenPolicy) -> Self {
        Supervisor {
            main,
            recovery,
            rules,
            policy,
            max_faults: DEFAULT_MAX_FAULTS,
        }
    }

    pub fn run(&self, root: &str, inputs: BTreeMap<String, Value>, env: &mut Env<'_, W>) -> Result<Supervised, ExecError> {
        let mut session = self.main.session(root, inputs)?;
        self.main.start(&mut session, env);
        let mut decisions = Vec::new();
        let mut retried: BTreeSet<(String, String)> = BTreeSet::new();

        while session.status() == SessionStatus::PausedOnFault {
            let fault = session.fault().expect("paused session carries a fault").clone();
            let frame_path = fault.frame_path().join("/");
            let full_path = fault.full_path().join("/");
            let leaf = fault.leaf.unit.clone();
            let failing = fault.failing_task().unwrap_or(root).to_string();
            let rule = if decisions.len() >= self.max_faults {
                None
            } else {
                diagnose(self.rules, &fault, &fault.beliefs, session.ledger())
            };
            env.trace.push(
                "diagnosis",
                &full_path,
                json!({
                    "rule": rule.map_or("UNSEEN", |r| r.id.as_str()),
                    "leaf": leaf,
                    "signal": fault.leaf.error_signal,
                    "count": fault.leaf.consecutive_abort_count,
                }),
            );

            let decision = match rule {
                None => {
                    let strategy = match self.policy {
                        _ if decisions.len() >= self.max_faults => Strategy::None,
                        UnseenPolicy::AlwaysExit => Strategy::None,
                        UnseenPolicy::RetryOnceThenExit => {
                            if retried.insert((full_path.clone(), fault.leaf.error_signal.clone())) {
                                Strategy::Continue
                            } else {
                                Strategy::None
                            }
                        }
                    };
                    RecoveryDecision {
                        rule: None,
                        leaf,
                        signal: fault.leaf.error_signal.clone(),
                        abort_count: fault.leaf.consecutive_abort_count,
                        tags: BTreeSet::new(),
                        factors: BTreeSet::new(),
                        recovery: None,
                        outcome: None,
                        directive: ResumptionDirective::new(strategy, &failing),
                    }
                }
                Some(rule) => {
                    let outcome = rule.recovery.as_deref().map(|task| {
                        env.trace.push("recovery_start", &full_path, json!({"rule": rule.id, "task": task}));
                        let out = recover(&self.recovery, task, &fault, env);
                        env.trace.push(
                            "recovery_end",
                            &full_path,
                            json!({"rule": rule.id, "task": task, "outcome": out.kind.as_str()}),
                        );
                        session.ledger_mut().record_outcome(&frame_path, &leaf, out.kind);
                        out.kind
                    });
                    RecoveryDecision {
                        rule: Some(rule.id.clone()),
                        leaf,
                        signal: fault.leaf.error_signal.clone(),
                        abort_count: fault.leaf.consecutive_abort_count,
                        tags: rule.tags.clone(),
                        factors: rule.factors.clone(),
                        recovery: rule.recovery.clone(),
                        outcome,
                        directive: rule.resumption.pick(outcome).resolve(&fault),
                    }
                }
            };

            let mut payload = serde_json::to_value(&decision).expect("decision serializes");
            if decision.rule.is_none() {
                payload["context"] = fault.to_json();
            }
            env.trace.push("decision", &full_path, payload);

            let directive = decision.directive.clone();
            decisions.push(decision);
            if self.main.resume(&mut session, &directive, env).is_err() {
                // target not on the live stack: stop rather than guess
                let fallback = ResumptionDirective::new(Strategy::None, &failing);
                self.main.resume(&mut session, &fallback, env)?;
            }
        }
        Ok(Supervised { session, decisions })
    }
}
