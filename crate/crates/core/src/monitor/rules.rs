use std::collections::BTreeSet;
use std::fmt;

use globset::{Glob, GlobMatcher};
use serde::{Deserialize, Serialize};
use serde_yaml::Value as Yaml;

use super::ledger::{AbortLedger, RecoveryOutcomeKind};
use super::MonitorError;
use crate::executor::{FaultContext, ResumptionDirective, Strategy};
use crate::knowledge::BeliefSnapshot;
use crate::recipe::{StepKind, TaskLibrary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Tag {
    Shared,
    Immediate,
    Dynamic,
}

impl Tag {
    pub const ALL: [Tag; 3] = [Tag::Shared, Tag::Immediate, Tag::Dynamic];

    pub fn as_str(self) -> &'static str {
        match self {
            Tag::Shared => "SHARED",
            Tag::Immediate => "IMMEDIATE",
            Tag::Dynamic => "DYNAMIC",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Factor {
    TaskLocation,
    NumAborts,
    Belief,
    ErrorSignal,
    RecoveryResult,
}

impl Factor {
    pub const ALL: [Factor; 5] = [Factor::TaskLocation, Factor::NumAborts, Factor::Belief, Factor::ErrorSignal, Factor::RecoveryResult];

    pub fn as_str(self) -> &'static str {
        match self {
            Factor::TaskLocation => "TASK_LOCATION",
            Factor::NumAborts => "NUM_ABORTS",
            Factor::Belief => "BELIEF",
            Factor::ErrorSignal => "ERROR_SIGNAL",
            Factor::RecoveryResult => "RECOVERY_RESULT",
        }
    }
}

/// A compiled glob. `*` and `?` behave as usual, `{a,b}` is alternation.
#[derive(Debug, Clone)]
pub struct Pattern {
    source: String,
    matcher: GlobMatcher,
}

impl Pattern {
    pub fn new(source: &str) -> Result<Pattern, String> {
        let glob = Glob::new(source).map_err(|e| e.to_string())?;
        Ok(Pattern {
            source: source.to_string(),
            matcher: glob.compile_matcher(),
        })
    }

    pub fn is_match(&self, s: &str) -> bool {
        self.matcher.is_match(s)
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    fn is_literal(&self) -> bool {
        !self.source.contains(['*', '?', '[', '{'])
    }
}

impl PartialEq for Pattern {
    fn eq(&self, other: &Self) -> bool {
        self.source == other.source
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

/// One element of a path-suffix pattern.
#[derive(Debug, Clone, PartialEq)]
pub enum PathElem {
    /// `**`: any run of units, possibly empty.
    AnyRun,
    Unit(Pattern),
}

/// Exact match of the whole path.
fn match_all(pat: &[PathElem], path: &[&str]) -> bool {
    match pat.split_first() {
        None => path.is_empty(),
        Some((PathElem::AnyRun, rest)) => (0..=path.len()).any(|i| match_all(rest, &path[i..])),
        Some((PathElem::Unit(p), rest)) => path.first().is_some_and(|u| p.is_match(u)) && match_all(rest, &path[1..]),
    }
}

/// True when `pat` matches some tail of `path`. An empty pattern matches anything.
pub fn suffix_matches(pat: &[PathElem], path: &[&str]) -> bool {
    (0..=path.len()).any(|i| match_all(pat, &path[i..]))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BeliefOp {
    Lt,
    Ge,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeliefPredicate {
    pub key: String,
    pub op: BeliefOp,
    pub threshold: f64,
}

impl BeliefPredicate {
    pub fn holds(&self, beliefs: &BeliefSnapshot) -> bool {
        match (beliefs.get(&self.key), self.op) {
            (Some(v), BeliefOp::Lt) => v < self.threshold,
            (Some(v), BeliefOp::Ge) => v >= self.threshold,
            (None, _) => false,
        }
    }
}

/// Strategy plus optional target; no target means the failing task frame.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectiveSpec {
    pub strategy: Strategy,
    pub target: Option<String>,
}

impl DirectiveSpec {
    pub fn resolve(&self, fault: &FaultContext) -> ResumptionDirective {
        let target = self
            .target
            .clone()
            .or_else(|| fault.failing_task().map(String::from))
            .unwrap_or_default();
        ResumptionDirective::new(self.strategy, &target)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Resumption {
    Fixed(DirectiveSpec),
    Dynamic { on_success: DirectiveSpec, on_failure: DirectiveSpec },
}

impl Resumption {
    pub fn pick(&self, outcome: Option<RecoveryOutcomeKind>) -> &DirectiveSpec {
        match self {
            Resumption::Fixed(d) => d,
            Resumption::Dynamic { on_success, on_failure } => match outcome {
                Some(RecoveryOutcomeKind::RecoveryFailed) => on_failure,
                _ => on_success,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryRule {
    pub id: String,
    pub suffix: Vec<PathElem>,
    pub action: Option<Pattern>,
    pub signal: Option<Pattern>,
    pub min_aborts: u32,
    pub max_aborts: Option<u32>,
    /// Count aborts with this task's counter instead of the leaf's.
    pub abort_counter: Option<String>,
    pub beliefs: Vec<BeliefPredicate>,
    pub prior_outcome: Option<RecoveryOutcomeKind>,
    pub recovery: Option<String>,
    pub resumption: Resumption,
    pub tags: BTreeSet<Tag>,
    pub factors: BTreeSet<Factor>,
}

impl RecoveryRule {
    /// Whether every populated match field holds for this fault.
    pub fn matches(&self, fault: &FaultContext, beliefs: &BeliefSnapshot, ledger: &AbortLedger) -> bool {
        let leaf = fault.leaf.unit.as_str();
        if !suffix_matches(&self.suffix, &fault.full_path()) {
            return false;
        }
        if self.action.as_ref().is_some_and(|p| !p.is_match(leaf)) {
            return false;
        }
        if self.signal.as_ref().is_some_and(|p| !p.is_match(&fault.leaf.error_signal)) {
            return false;
        }
        let count = match &self.abort_counter {
            Some(task) => ledger.task_count(task),
            None => fault.leaf.consecutive_abort_count,
        };
        if count < self.min_aborts || self.max_aborts.is_some_and(|m| count > m) {
            return false;
        }
        if !self.beliefs.iter().all(|b| b.holds(beliefs)) {
            return false;
        }
        if let Some(want) = self.prior_outcome {
            let path = fault.frame_path().join("/");
            if ledger.last_outcome(&path, leaf) != Some(want) {
                return false;
            }
        }
        true
    }

    fn leaf_accepts(&self, leaf: &str) -> bool {
        let by_action = self.action.as_ref().is_none_or(|p| p.is_match(leaf));
        let by_suffix = match self.suffix.last() {
            Some(PathElem::Unit(p)) => p.is_match(leaf),
            _ => true,
        };
        by_action && by_suffix
    }
}

/// Rules in priority (document) order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RuleSet {
    pub rules: Vec<RecoveryRule>,
}

impl RuleSet {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&RecoveryRule> {
        self.rules.iter().find(|r| r.id == id)
    }
}

/// First rule, in document order, that matches the fault; `None` is an
/// unseen error.
pub fn diagnose<'r>(rules: &'r RuleSet, fault: &FaultContext, beliefs: &BeliefSnapshot, ledger: &AbortLedger) -> Option<&'r RecoveryRule> {
    rules.rules.iter().find(|r| r.matches(fault, beliefs, ledger))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RuleDoc {
    id: String,
    #[serde(rename = "match", default)]
    matcher: MatchDoc,
    #[serde(default)]
    recovery: Option<String>,
    resumption: ResumptionDoc,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct MatchDoc {
    #[serde(default)]
    suffix: Vec<String>,
    action: Option<String>,
    signal: Option<String>,
    min_aborts: Option<u32>,
    max_aborts: Option<u32>,
    abort_counter: Option<String>,
    #[serde(default)]
    beliefs: Vec<BeliefDoc>,
    prior_outcome: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BeliefDoc {
    key: String,
    op: String,
    threshold: f64,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ResumptionDoc {
    Dynamic { on_success: DirectiveDoc, on_failure: DirectiveDoc },
    Fixed(DirectiveDoc),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DirectiveDoc {
    strategy: String,
    target: Option<String>,
}

/// What rule loading checks references against.
pub struct RuleInputs<'a> {
    pub recovery_library: &'a TaskLibrary,
    /// Every leaf name a fault can carry (registered actions and ops).
    pub leaf_names: &'a BTreeSet<String>,
    /// Declared belief keys; `None` skips the check.
    pub belief_keys: Option<&'a BTreeSet<String>>,
}

fn pattern(rule: &str, src: &str) -> Result<Pattern, MonitorError> {
    Pattern::new(src).map_err(|message| MonitorError::BadPattern {
        rule: rule.to_string(),
        message,
    })
}

fn directive(rule: &str, d: DirectiveDoc, suffix: &[PathElem]) -> Result<DirectiveSpec, MonitorError> {
    let strategy = Strategy::parse(&d.strategy).ok_or_else(|| MonitorError::Structure(format!("rule `{rule}`: unknown strategy `{}`", d.strategy)))?;
    if let Some(t) = &d.target {
        let named = suffix
            .iter()
            .any(|e| matches!(e, PathElem::Unit(p) if p.is_literal() && p.source() == t));
        if !named || t.ends_with(".branch") {
            return Err(MonitorError::BadTarget {
                rule: rule.to_string(),
                target: t.clone(),
            });
        }
    }
    Ok(DirectiveSpec { strategy, target: d.target })
}

/// Load an ordered rule list.
pub fn load_rules(document: &str, inputs: &RuleInputs<'_>) -> Result<RuleSet, MonitorError> {
    let doc: Yaml = serde_yaml::from_str(document).map_err(|e| MonitorError::syntax(&e))?;
    if doc.is_null() {
        return Ok(RuleSet::empty());
    }
    let docs: Vec<RuleDoc> = serde_yaml::from_value(doc).map_err(|e| MonitorError::Structure(e.to_string()))?;

    let mut seen = BTreeSet::new();
    let mut rules = Vec::with_capacity(docs.len());
    for d in docs {
        let id = d.id;
        if !seen.insert(id.clone()) {
            return Err(MonitorError::Structure(format!("duplicate rule id `{id}`")));
        }
        let m = d.matcher;
        let suffix = m
            .suffix
            .iter()
            .map(|s| if s == "**" { Ok(PathElem::AnyRun) } else { pattern(&id, s).map(PathElem::Unit) })
            .collect::<Result<Vec<_>, _>>()?;
        let min_aborts = m.min_aborts.unwrap_or(1);
        if min_aborts == 0 || m.max_aborts.is_some_and(|max| max < min_aborts) {
            return Err(MonitorError::BadRange(id));
        }
        let mut beliefs = Vec::new();
        for b in m.beliefs {
            if inputs.belief_keys.is_some_and(|keys| !keys.contains(&b.key)) {
                return Err(MonitorError::UnknownBeliefKey { rule: id, key: b.key });
            }
            if !(0.0..=1.0).contains(&b.threshold) {
                return Err(MonitorError::BadRange(id));
            }
            let op = match b.op.as_str() {
                "<" => BeliefOp::Lt,
                ">=" | "≥" => BeliefOp::Ge,
                other => return Err(MonitorError::Structure(format!("rule `{id}`: belief op must be `<` or `>=`, found `{other}`"))),
            };
            beliefs.push(BeliefPredicate { key: b.key, op, threshold: b.threshold });
        }
        let prior_outcome = match m.prior_outcome {
            None => None,
            Some(s) => Some(RecoveryOutcomeKind::parse(&s).ok_or_else(|| MonitorError::Structure(format!("rule `{id}`: unknown outcome `{s}`")))?),
        };
        let recovery = match d.recovery.as_deref() {
            None | Some("NONE") => None,
            Some(t) => {
                if inputs.recovery_library.get(t).is_none() {
                    return Err(MonitorError::UnknownRecoveryTask { rule: id, task: t.to_string() });
                }
                Some(t.to_string())
            }
        };
        let resumption = match d.resumption {
            ResumptionDoc::Fixed(x) => Resumption::Fixed(directive(&id, x, &suffix)?),
            ResumptionDoc::Dynamic { on_success, on_failure } => {
                if recovery.is_none() {
                    return Err(MonitorError::Structure(format!("rule `{id}`: outcome-dependent resumption needs a recovery task")));
                }
                Resumption::Dynamic {
                    on_success: directive(&id, on_success, &suffix)?,
                    on_failure: directive(&id, on_failure, &suffix)?,
                }
            }
        };

        let action = m.action.as_deref().map(|a| pattern(&id, a)).transpose()?;
        let signal = m.signal.as_deref().map(|s| pattern(&id, s)).transpose()?;
        let mut rule = RecoveryRule {
            id,
            suffix,
            action,
            signal,
            min_aborts,
            max_aborts: m.max_aborts,
            abort_counter: m.abort_counter,
            beliefs,
            prior_outcome,
            recovery,
            resumption,
            tags: BTreeSet::new(),
            factors: BTreeSet::new(),
        };
        rule.tags = tags_for(&rule, inputs);
        rule.factors = factors_for(&rule);
        rules.push(rule);
    }
    Ok(RuleSet { rules })
}

fn tags_for(rule: &RecoveryRule, inputs: &RuleInputs<'_>) -> BTreeSet<Tag> {
    let mut tags = BTreeSet::new();
    if inputs.leaf_names.iter().filter(|l| rule.leaf_accepts(l)).take(2).count() == 2 {
        tags.insert(Tag::Shared);
    }
    let single_action = rule
        .recovery
        .as_deref()
        .and_then(|t| inputs.recovery_library.get(t))
        .is_some_and(|def| def.steps.len() == 1 && def.steps[0].kind == StepKind::Action);
    if single_action {
        tags.insert(Tag::Immediate);
    }
    if matches!(rule.resumption, Resumption::Dynamic { .. }) {
        tags.insert(Tag::Dynamic);
    }
    tags
}

fn factors_for(rule: &RecoveryRule) -> BTreeSet<Factor> {
    let mut f = BTreeSet::new();
    if !rule.suffix.is_empty() || rule.action.is_some() {
        f.insert(Factor::TaskLocation);
    }
    if rule.min_aborts > 1 || rule.max_aborts.is_some() || rule.abort_counter.is_some() {
        f.insert(Factor::NumAborts);
    }
    if !rule.beliefs.is_empty() {
        f.insert(Factor::Belief);
    }
    if rule.signal.is_some() {
        f.insert(Factor::ErrorSignal);
    }
    if rule.prior_outcome.is_some() || matches!(rule.resumption, Resumption::Dynamic { .. }) {
        f.insert(Factor::RecoveryResult);
    }
    f
}
