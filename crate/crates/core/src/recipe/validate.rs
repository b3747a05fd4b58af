use std::collections::{BTreeMap, BTreeSet};

use super::{Diagnostic, Expression, Severity, Step, StepKind, TaskDefinition, TaskLibrary};

/// Declared interface of a primitive action.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ActionSchema {
    pub required: Vec<String>,
    pub optional: Vec<String>,
    pub outputs: Vec<String>,
}

impl ActionSchema {
    pub fn new(required: &[&str], optional: &[&str], outputs: &[&str]) -> Self {
        let own = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect();
        ActionSchema {
            required: own(required),
            optional: own(optional),
            outputs: own(outputs),
        }
    }

    pub fn accepts(&self, param: &str) -> bool {
        self.required.iter().chain(&self.optional).any(|p| p == param)
    }
}

/// Names the validator resolves `action` and `op` steps against.
pub trait Catalog {
    fn has_action(&self, name: &str) -> bool;
    /// `None` means the action accepts any params and produces any outputs.
    fn action_schema(&self, name: &str) -> Option<ActionSchema>;
    fn has_op(&self, name: &str) -> bool;
}

pub struct ValidationInputs<'a> {
    pub catalog: &'a dyn Catalog,
    pub db_keys: &'a BTreeSet<String>,
    /// When present, `belief.KEY` references must name a declared belief.
    pub belief_keys: Option<&'a BTreeSet<String>>,
}

struct Ctx<'a> {
    lib: &'a TaskLibrary,
    inputs: &'a ValidationInputs<'a>,
    task: &'a TaskDefinition,
    out: Vec<Diagnostic>,
}

#[derive(Clone)]
struct Loc {
    names: Vec<String>,
    index: Vec<usize>,
}

impl Loc {
    fn child(&self, step: &Step, i: usize) -> Loc {
        let mut names = self.names.clone();
        names.push(step.name.clone());
        let mut index = self.index.clone();
        index.push(i);
        Loc { names, index }
    }

    fn branch(&self, offset: usize) -> Loc {
        let mut index = self.index.clone();
        index.push(offset);
        Loc { names: self.names.clone(), index }
    }
}

impl Ctx<'_> {
    fn diag(&mut self, severity: Severity, code: &str, loc: Option<&Loc>, message: String) {
        let (step_path, sort_key) = loc
            .map(|l| (l.names.join("/"), l.index.clone()))
            .unwrap_or_default();
        self.out.push(Diagnostic {
            severity,
            code: code.to_string(),
            message,
            task: self.task.name.clone(),
            step_path,
            sort_key,
        });
    }

    fn error(&mut self, code: &str, loc: Option<&Loc>, message: String) {
        self.diag(Severity::Error, code, loc, message)
    }

    fn check_expr(&mut self, e: &Expression, defined: &BTreeSet<String>, loc: &Loc) {
        let mut problems = Vec::new();
        e.visit_refs(&mut |r, guarded| match r {
            Expression::ParamRef(p) if !self.task.params.contains(p) => {
                problems.push(("UNKNOWN_PARAM", format!("`params.{p}` is not a parameter of `{}`", self.task.name)))
            }
            Expression::VarRef(v) if !guarded && !defined.contains(v) => {
                problems.push(("USE_BEFORE_DEF", format!("`var.{v}` is used before any step binds it")))
            }
            Expression::DbRef(k) if !self.inputs.db_keys.contains(k) => {
                problems.push(("UNKNOWN_DB_KEY", format!("database has no key `{k}`")))
            }
            Expression::BeliefRef(k) => {
                if let Some(keys) = self.inputs.belief_keys {
                    if !keys.contains(k) {
                        problems.push(("UNKNOWN_BELIEF_KEY", format!("belief `{k}` is not declared")));
                    }
                }
            }
            _ => {}
        });
        for (code, msg) in problems {
            self.error(code, Some(loc), msg);
        }
    }

    fn unreachable(&mut self, steps: &[Step], loc: &Loc, why: &str) {
        for (i, s) in steps.iter().enumerate() {
            let l = loc.child(s, i);
            self.diag(Severity::Warning, "UNREACHABLE_STEP", Some(&l), format!("step `{}` can never run: {why}", s.name));
        }
    }

    /// Walk a step list, returning the set of vars definitely bound afterwards.
    fn walk(&mut self, steps: &[Step], mut defined: BTreeSet<String>, loc: &Loc) -> BTreeSet<String> {
        let mut seen = BTreeSet::new();
        for (i, step) in steps.iter().enumerate() {
            let l = loc.child(step, i);
            if !seen.insert(step.name.as_str()) {
                self.error("DUPLICATE_STEP", Some(&l), format!("step name `{}` repeats within one step list", step.name));
            }
            for (k, _) in &step.extra {
                self.diag(Severity::Warning, "UNKNOWN_KEY", Some(&l), format!("ignored key `{k}`"));
            }
            match step.kind {
                StepKind::Action | StepKind::Op | StepKind::Task => {
                    for (_, e) in &step.params {
                        self.check_expr(e, &defined, &l);
                    }
                    self.check_target(step, &l);
                    defined.extend(step.var.iter().cloned());
                }
                StepKind::Choice => {
                    let cond = step.condition.as_ref().expect("parser guarantees a condition");
                    self.check_expr(cond, &defined, &l);
                    match cond.constant_truth() {
                        Some(true) => self.unreachable(&step.if_false, &l.branch(1), "condition is always true"),
                        Some(false) => self.unreachable(&step.if_true, &l.branch(0), "condition is always false"),
                        None => {}
                    }
                    let a = self.walk(&step.if_true, defined.clone(), &l.branch(0));
                    let b = self.walk(&step.if_false, defined.clone(), &l.branch(1));
                    defined = a.intersection(&b).cloned().collect();
                }
                StepKind::Loop => {
                    let cond = step.condition.as_ref().expect("parser guarantees a condition");
                    self.check_expr(cond, &defined, &l);
                    if cond.constant_truth() == Some(false) {
                        self.unreachable(&step.body, &l.branch(0), "loop condition is always false");
                    }
                    self.walk(&step.body, defined.clone(), &l.branch(0));
                }
            }
        }
        defined
    }

    fn check_target(&mut self, step: &Step, loc: &Loc) {
        let target = step.target.as_deref().unwrap_or_default();
        match step.kind {
            StepKind::Action => {
                if !self.inputs.catalog.has_action(target) {
                    self.error("UNKNOWN_TARGET", Some(loc), format!("no action named `{target}` is registered"));
                    return;
                }
                let Some(schema) = self.inputs.catalog.action_schema(target) else { return };
                for (k, _) in &step.params {
                    if !schema.accepts(k) {
                        self.error("ARITY_MISMATCH", Some(loc), format!("action `{target}` takes no param `{k}`"));
                    }
                }
                for r in &schema.required {
                    if step.param(r).is_none() {
                        self.error("ARITY_MISMATCH", Some(loc), format!("action `{target}` requires param `{r}`"));
                    }
                }
                for v in &step.var {
                    if !schema.outputs.contains(v) {
                        self.error("UNKNOWN_OUTPUT", Some(loc), format!("action `{target}` has no output `{v}`"));
                    }
                }
            }
            StepKind::Op => {
                if !self.inputs.catalog.has_op(target) {
                    self.error("UNKNOWN_TARGET", Some(loc), format!("no op named `{target}` is registered"));
                }
            }
            StepKind::Task => {
                let Some(def) = self.lib.get(target) else {
                    self.error("UNKNOWN_TARGET", Some(loc), format!("no task named `{target}`"));
                    return;
                };
                let given: BTreeSet<&str> = step.params.iter().map(|(k, _)| k.as_str()).collect();
                let wanted: BTreeSet<&str> = def.params.iter().map(String::as_str).collect();
                if given != wanted {
                    let missing: Vec<_> = wanted.difference(&given).copied().collect();
                    let extra: Vec<_> = given.difference(&wanted).copied().collect();
                    self.error(
                        "ARITY_MISMATCH",
                        Some(loc),
                        format!("task `{target}` params mismatch (missing: [{}], unexpected: [{}])", missing.join(", "), extra.join(", ")),
                    );
                }
                for v in &step.var {
                    if !def.vars.contains(v) {
                        self.error("UNKNOWN_OUTPUT", Some(loc), format!("task `{target}` does not declare output `{v}`"));
                    }
                }
            }
            StepKind::Choice | StepKind::Loop => {}
        }
    }
}

fn duplicates(names: &[String]) -> Vec<&str> {
    let mut seen = BTreeSet::new();
    names.iter().filter(|n| !seen.insert(n.as_str())).map(String::as_str).collect()
}

fn bound_anywhere(steps: &[Step], out: &mut BTreeSet<String>) {
    for s in steps {
        out.extend(s.var.iter().cloned());
        bound_anywhere(&s.if_true, out);
        bound_anywhere(&s.if_false, out);
        bound_anywhere(&s.body, out);
    }
}

fn task_calls<'a>(steps: &'a [Step], out: &mut Vec<(&'a str, &'a str)>) {
    for s in steps {
        if s.kind == StepKind::Task {
            out.push((s.name.as_str(), s.target.as_deref().unwrap_or_default()));
        }
        task_calls(&s.if_true, out);
        task_calls(&s.if_false, out);
        task_calls(&s.body, out);
    }
}

/// Tasks that can reach themselves through task invocations.
fn recursive_tasks(lib: &TaskLibrary) -> BTreeMap<&str, Vec<&str>> {
    let mut edges: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for (name, def) in &lib.definitions {
        let mut calls = Vec::new();
        task_calls(&def.steps, &mut calls);
        edges.insert(name.as_str(), calls.into_iter().map(|(_, t)| t).collect());
    }
    let mut cyclic = BTreeMap::new();
    for start in edges.keys() {
        let mut stack: Vec<&str> = edges[start].clone();
        let mut visited = BTreeSet::new();
        let mut cycle = false;
        while let Some(n) = stack.pop() {
            if n == *start {
                cycle = true;
                break;
            }
            if visited.insert(n) {
                if let Some(next) = edges.get(n) {
                    stack.extend(next.iter().copied());
                }
            }
        }
        if cycle {
            cyclic.insert(*start, edges[start].clone());
        }
    }
    cyclic
}

/// Every diagnostic (errors and warnings) for a library, sorted by task name
/// then step position.
pub fn check(library: &TaskLibrary, inputs: &ValidationInputs<'_>) -> Vec<Diagnostic> {
    let cyclic = recursive_tasks(library);
    let mut all = Vec::new();
    for def in library.definitions.values() {
        let mut ctx = Ctx {
            lib: library,
            inputs,
            task: def,
            out: Vec::new(),
        };
        for d in duplicates(&def.params) {
            ctx.error("DUPLICATE_NAME", None, format!("param `{d}` declared twice"));
        }
        for d in duplicates(&def.vars) {
            ctx.error("DUPLICATE_NAME", None, format!("var `{d}` declared twice"));
        }
        for p in &def.params {
            if def.vars.contains(p) {
                ctx.error("DUPLICATE_NAME", None, format!("`{p}` declared as both param and var"));
            }
        }
        let root = Loc { names: Vec::new(), index: Vec::new() };
        ctx.walk(&def.steps, BTreeSet::new(), &root);

        let mut bound = BTreeSet::new();
        bound_anywhere(&def.steps, &mut bound);
        for v in &def.vars {
            if !bound.contains(v) {
                ctx.error("UNBOUND_OUTPUT", None, format!("declared output `{v}` is never bound by any step"));
            }
        }

        if cyclic.contains_key(def.name.as_str()) {
            let mut calls = Vec::new();
            task_calls(&def.steps, &mut calls);
            let via: Vec<&str> = calls.iter().map(|(_, t)| *t).collect();
            ctx.error(
                "RECURSIVE_TASK",
                None,
                format!("task `{}` invokes itself through [{}]", def.name, via.join(", ")),
            );
        }
        all.extend(ctx.out);
    }
    all.sort_by(|a, b| (&a.task, &a.sort_key, &a.code).cmp(&(&b.task, &b.sort_key, &b.code)));
    all
}

/// Validate a parsed library. On success the returned library is marked
/// validated; warnings alone do not fail validation.
pub fn validate(library: TaskLibrary, inputs: &ValidationInputs<'_>) -> Result<TaskLibrary, Vec<Diagnostic>> {
    let diags = check(&library, inputs);
    if diags.iter().any(Diagnostic::is_error) {
        Err(diags)
    } else {
        Ok(library.mark_validated())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::recipe::parse_recipe;

    struct Names {
        actions: BTreeMap<String, Option<ActionSchema>>,
        ops: BTreeSet<String>,
    }

    impl Catalog for Names {
        fn has_action(&self, name: &str) -> bool {
            self.actions.contains_key(name)
        }
        fn action_schema(&self, name: &str) -> Option<ActionSchema> {
            self.actions.get(name).cloned().flatten()
        }
        fn has_op(&self, name: &str) -> bool {
            self.ops.contains(name)
        }
    }

    fn catalog() -> Names {
        let mut actions = BTreeMap::new();
        actions.insert("look".to_string(), Some(ActionSchema::new(&["pose"], &[], &[])));
        actions.insert("detect_schunk".to_string(), Some(ActionSchema::new(&[], &[], &["chuck_approach_pose"])));
        actions.insert("pick".to_string(), None);
        actions.insert("verify_grasp".to_string(), Some(ActionSchema::new(&[], &["abort_on_false"], &["grasped"])));
        Names {
            actions,
            ops: ["increment".to_string()].into_iter().collect(),
        }
    }

    fn codes(src: &str) -> Vec<String> {
        let lib = parse_recipe(src).unwrap();
        let cat = catalog();
        let keys: BTreeSet<String> = ["waypoints.home".to_string()].into_iter().collect();
        let inputs = ValidationInputs { catalog: &cat, db_keys: &keys, belief_keys: None };
        check(&lib, &inputs).into_iter().map(|d| d.code).collect()
    }

    #[test]
    fn use_before_def() {
        let c = codes("t:\n  steps:\n  - action: pick\n    params: {g: var.grasped}\n  - action: verify_grasp\n    var: [grasped]\n");
        assert_eq!(c, vec!["USE_BEFORE_DEF"]);
    }

    #[test]
    fn exists_guard_is_not_a_use() {
        let c = codes("t:\n  steps:\n  - choice: c\n    condition: exists(var.x)\n    if_true:\n    - action: pick\n");
        assert!(c.is_empty(), "{c:?}");
    }

    #[test]
    fn mutual_recursion_is_reported_for_both_tasks() {
        let c = codes("a:\n  steps:\n  - task: b\nb:\n  steps:\n  - task: a\n");
        assert_eq!(c, vec!["RECURSIVE_TASK", "RECURSIVE_TASK"]);
    }

    #[test]
    fn unknown_targets_and_arity() {
        let c = codes(
            "a:\n  params: [p]\n  steps:\n  - action: nope1\n  - op: nope2\n  - task: nope3\nb:\n  steps:\n  - task: a\n  - action: look\n",
        );
        assert_eq!(c, vec!["UNKNOWN_TARGET", "UNKNOWN_TARGET", "UNKNOWN_TARGET", "ARITY_MISMATCH", "ARITY_MISMATCH"]);
    }

    #[test]
    fn db_param_and_duplicate_checks() {
        let c = codes(
            "t:\n  params: [a, a]\n  steps:\n  - action: look\n    params: {pose: db.waypoints.nowhere}\n  - action: look\n    params: {pose: params.zzz}\n",
        );
        assert_eq!(c, vec!["DUPLICATE_NAME", "UNKNOWN_DB_KEY", "DUPLICATE_STEP", "UNKNOWN_PARAM"]);
    }

    #[test]
    fn choice_definitions_only_count_when_both_branches_bind() {
        let src = "t:\n  steps:\n  - choice: c\n    condition: exists(var.q)\n    if_true:\n    - action: verify_grasp\n      var: [grasped]\n  - action: pick\n    params: {g: var.grasped}\n";
        assert_eq!(codes(src), vec!["USE_BEFORE_DEF"]);
        let src = "t:\n  steps:\n  - choice: c\n    condition: exists(var.q)\n    if_true:\n    - action: verify_grasp\n      var: [grasped]\n    if_false:\n    - action: verify_grasp\n      var: [grasped]\n  - action: pick\n    params: {g: var.grasped}\n";
        assert!(codes(src).is_empty());
    }

    #[test]
    fn constant_conditions_warn_unreachable() {
        let src = "t:\n  steps:\n  - loop: l\n    condition: false\n    body:\n    - action: pick\n";
        let lib = parse_recipe(src).unwrap();
        let cat = catalog();
        let keys = BTreeSet::new();
        let inputs = ValidationInputs { catalog: &cat, db_keys: &keys, belief_keys: None };
        let diags = check(&lib, &inputs);
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].severity, Severity::Warning);
        assert_eq!(diags[0].code, "UNREACHABLE_STEP");
        assert_eq!(diags[0].step_path, "l/pick");
        assert!(validate(lib, &inputs).unwrap().is_validated());
    }

    #[test]
    fn declared_outputs_must_be_bound_somewhere() {
        assert_eq!(codes("t:\n  var: [x]\n  steps:\n  - action: pick\n"), vec!["UNBOUND_OUTPUT"]);
    }

    #[test]
    fn action_outputs_checked_against_schema() {
        assert_eq!(codes("t:\n  steps:\n  - action: verify_grasp\n    var: [nope]\n"), vec!["UNKNOWN_OUTPUT"]);
    }

    #[test]
    fn unknown_step_keys_are_warnings() {
        let src = "t:\n  steps:\n  - action: pick\n    colour: red\n";
        assert_eq!(codes(src), vec!["UNKNOWN_KEY"]);
    }
}
