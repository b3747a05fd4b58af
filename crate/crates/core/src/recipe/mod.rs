//! Hierarchical task recipes: parsing, validation, and static expansion.
//!
//! A recipe document is a YAML map of task name to task definition. Each task
//! lists `params` (inputs), `var` (declared outputs), and an ordered list of
//! `steps`. A step is an `action`, `task`, `op`, `choice`, or `loop`.

mod expand;
mod expr;
mod parse;
mod validate;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::value::Value;

pub use expand::{expand_tree, to_dot, NodeKind, TreeNode};
pub use expr::{parse_expression, BoolOp, CompareOp, ExprParseError};
pub use parse::{parse_recipe, serialize_recipe};
pub use validate::{check, validate, ActionSchema, Catalog, ValidationInputs};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum StepKind {
    Action,
    Task,
    Op,
    Choice,
    Loop,
}

impl StepKind {
    pub const ALL: [StepKind; 5] = [
        StepKind::Action,
        StepKind::Task,
        StepKind::Op,
        StepKind::Choice,
        StepKind::Loop,
    ];

    /// The key used for this kind in recipe documents.
    pub fn keyword(self) -> &'static str {
        match self {
            StepKind::Action => "action",
            StepKind::Task => "task",
            StepKind::Op => "op",
            StepKind::Choice => "choice",
            StepKind::Loop => "loop",
        }
    }

    pub fn from_keyword(s: &str) -> Option<StepKind> {
        StepKind::ALL.into_iter().find(|k| k.keyword() == s)
    }

    /// Kinds that invoke a named unit rather than steering control flow.
    pub fn has_target(self) -> bool {
        matches!(self, StepKind::Action | StepKind::Task | StepKind::Op)
    }
}

impl fmt::Display for StepKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.keyword())
    }
}

/// A recipe expression. Parameter values are references or literals; control
/// flow conditions use the full grammar.
#[derive(Debug, Clone, PartialEq)]
pub enum Expression {
    Literal(Value),
    ParamRef(String),
    VarRef(String),
    DbRef(String),
    BeliefRef(String),
    Compare {
        op: CompareOp,
        lhs: Box<Expression>,
        rhs: Box<Expression>,
    },
    Bool {
        op: BoolOp,
        operands: Vec<Expression>,
    },
    /// `exists(ref)`: true when the reference resolves. Only reference variants
    /// are allowed inside.
    Exists(Box<Expression>),
}

impl Expression {
    /// Interpret a scalar from a `params` map: dotted `params.`, `var.`, `db.`,
    /// `belief.` strings are references, everything else is a literal.
    pub fn from_param_value(v: Value) -> Expression {
        if let Value::Str(s) = &v {
            if let Some(r) = expr::reference_from_str(s) {
                return r;
            }
        }
        Expression::Literal(v)
    }

    pub fn is_reference(&self) -> bool {
        matches!(
            self,
            Expression::ParamRef(_) | Expression::VarRef(_) | Expression::DbRef(_) | Expression::BeliefRef(_)
        )
    }

    /// Visit every reference in evaluation order. The flag is true for
    /// references appearing under `exists(...)`.
    pub fn visit_refs<'a>(&'a self, f: &mut dyn FnMut(&'a Expression, bool)) {
        self.visit_refs_inner(false, f)
    }

    fn visit_refs_inner<'a>(&'a self, guarded: bool, f: &mut dyn FnMut(&'a Expression, bool)) {
        match self {
            Expression::Literal(_) => {}
            Expression::ParamRef(_) | Expression::VarRef(_) | Expression::DbRef(_) | Expression::BeliefRef(_) => {
                f(self, guarded)
            }
            Expression::Compare { lhs, rhs, .. } => {
                lhs.visit_refs_inner(guarded, f);
                rhs.visit_refs_inner(guarded, f);
            }
            Expression::Bool { operands, .. } => {
                for o in operands {
                    o.visit_refs_inner(guarded, f);
                }
            }
            Expression::Exists(inner) => inner.visit_refs_inner(true, f),
        }
    }

    /// Constant truth value when the expression contains no references.
    pub fn constant_truth(&self) -> Option<bool> {
        match self {
            Expression::Literal(Value::Bool(b)) => Some(*b),
            Expression::Bool { op: BoolOp::Not, operands } => operands.first()?.constant_truth().map(|b| !b),
            Expression::Bool { op: BoolOp::And, operands } => {
                let vals: Option<Vec<bool>> = operands.iter().map(|o| o.constant_truth()).collect();
                vals.map(|v| v.into_iter().all(|b| b))
            }
            Expression::Bool { op: BoolOp::Or, operands } => {
                let vals: Option<Vec<bool>> = operands.iter().map(|o| o.constant_truth()).collect();
                vals.map(|v| v.into_iter().any(|b| b))
            }
            _ => None,
        }
    }
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        expr::write_expression(self, f)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub name: String,
    pub kind: StepKind,
    /// Action, task, or op name. `None` for choice and loop steps.
    pub target: Option<String>,
    pub params: Vec<(String, Expression)>,
    pub var: Vec<String>,
    pub condition: Option<Expression>,
    pub if_true: Vec<Step>,
    pub if_false: Vec<Step>,
    pub body: Vec<Step>,
    /// Unrecognized keys, kept so documents survive a round trip.
    pub extra: Vec<(String, Value)>,
}

impl Step {
    fn bare(name: &str, kind: StepKind, target: Option<&str>) -> Step {
        Step {
            name: name.to_string(),
            kind,
            target: target.map(str::to_string),
            params: Vec::new(),
            var: Vec::new(),
            condition: None,
            if_true: Vec::new(),
            if_false: Vec::new(),
            body: Vec::new(),
            extra: Vec::new(),
        }
    }

    pub fn action(target: &str) -> Step {
        Step::bare(target, StepKind::Action, Some(target))
    }

    pub fn task(target: &str) -> Step {
        Step::bare(target, StepKind::Task, Some(target))
    }

    pub fn op(target: &str) -> Step {
        Step::bare(target, StepKind::Op, Some(target))
    }

    pub fn choice(name: &str, condition: Expression, if_true: Vec<Step>, if_false: Vec<Step>) -> Step {
        Step {
            condition: Some(condition),
            if_true,
            if_false,
            ..Step::bare(name, StepKind::Choice, None)
        }
    }

    pub fn looped(name: &str, condition: Expression, body: Vec<Step>) -> Step {
        Step {
            condition: Some(condition),
            body,
            ..Step::bare(name, StepKind::Loop, None)
        }
    }

    pub fn named(mut self, name: &str) -> Step {
        self.name = name.to_string();
        self
    }

    pub fn with_param(mut self, key: &str, expr: Expression) -> Step {
        self.params.push((key.to_string(), expr));
        self
    }

    pub fn with_var(mut self, names: &[&str]) -> Step {
        self.var = names.iter().map(|s| s.to_string()).collect();
        self
    }

    pub fn param(&self, key: &str) -> Option<&Expression> {
        self.params.iter().find(|(k, _)| k == key).map(|(_, e)| e)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskDefinition {
    pub name: String,
    pub params: Vec<String>,
    pub vars: Vec<String>,
    pub steps: Vec<Step>,
}

/// Collection of task definitions keyed by name. `validated` is only set by
/// [`validate`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TaskLibrary {
    pub definitions: BTreeMap<String, TaskDefinition>,
    /// Task names in document order, for serialization.
    pub order: Vec<String>,
    validated: bool,
}

impl TaskLibrary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, def: TaskDefinition) {
        if !self.definitions.contains_key(&def.name) {
            self.order.push(def.name.clone());
        }
        self.definitions.insert(def.name.clone(), def);
        self.validated = false;
    }

    pub fn get(&self, name: &str) -> Option<&TaskDefinition> {
        self.definitions.get(name)
    }

    /// Every `db.` key any step refers to.
    pub fn db_refs(&self) -> BTreeSet<String> {
        fn walk(steps: &[Step], out: &mut BTreeSet<String>) {
            for s in steps {
                for e in s.params.iter().map(|(_, e)| e).chain(s.condition.as_ref()) {
                    e.visit_refs(&mut |r, _| {
                        if let Expression::DbRef(k) = r {
                            out.insert(k.clone());
                        }
                    });
                }
                walk(&s.if_true, out);
                walk(&s.if_false, out);
                walk(&s.body, out);
            }
        }
        let mut out = BTreeSet::new();
        for def in self.definitions.values() {
            walk(&def.steps, &mut out);
        }
        out
    }

    pub fn is_validated(&self) -> bool {
        self.validated
    }

    pub fn len(&self) -> usize {
        self.definitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.definitions.is_empty()
    }

    /// Merge another library into this one. Fails on duplicate task names.
    pub fn merge(&mut self, other: TaskLibrary) -> Result<(), RecipeError> {
        for name in other.order {
            if self.definitions.contains_key(&name) {
                return Err(RecipeError::Structure(format!("task `{name}` defined twice")));
            }
            let def = other.definitions.get(&name).cloned().expect("order tracks definitions");
            self.insert(def);
        }
        Ok(())
    }

    pub(crate) fn mark_validated(mut self) -> Self {
        self.validated = true;
        self
    }

    /// Structural equality ignoring the validation flag.
    pub fn same_structure(&self, other: &TaskLibrary) -> bool {
        self.definitions == other.definitions && self.order == other.order
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub code: String,
    pub message: String,
    pub task: String,
    /// Step names from the task down to the offending step, `/`-separated.
    pub step_path: String,
    #[serde(skip)]
    pub(crate) sort_key: Vec<usize>,
}

impl Diagnostic {
    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        let path = if self.step_path.is_empty() { "-" } else { &self.step_path };
        write!(f, "{sev}\t{}\t{}\t{}\t{}", self.task, path, self.code, self.message)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RecipeError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("structure error: {0}")]
    Structure(String),
    #[error("unknown root task `{0}`")]
    UnknownRoot(String),
    #[error("library has not been validated")]
    NotValidated,
}

impl RecipeError {
    pub fn code(&self) -> &'static str {
        match self {
            RecipeError::Syntax { .. } => "SYNTAX_ERROR",
            RecipeError::Structure(_) => "STRUCTURE_ERROR",
            RecipeError::UnknownRoot(_) => "UNKNOWN_ROOT",
            RecipeError::NotValidated => "NOT_VALIDATED",
        }
    }
}
