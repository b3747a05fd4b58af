use std::collections::BTreeMap;

use serde_json::{json, Value as Json};

use super::action::{ActionContext, ActionStatus, CancelToken};
use super::context::{FaultContext, LeafNode, UnitKind};
use super::eval::{evaluate, EvalError, Scope};
use super::registry::Registry;
use super::session::{ExecutionSession, Frame, ResumptionDirective, SessionStatus, Strategy};
use super::trace::Trace;
use super::ExecError;
use crate::knowledge::{BeliefState, Database};
use crate::monitor::AbortLedger;
use crate::recipe::{Expression, Step, StepKind, TaskLibrary};
use crate::value::Value;

/// Mutable state shared by the executor and action handlers.
pub struct Env<'e, W> {
    pub world: &'e mut W,
    pub beliefs: &'e mut BeliefState,
    pub trace: &'e mut Trace,
}

impl<'e, W> Env<'e, W> {
    pub fn new(world: &'e mut W, beliefs: &'e mut BeliefState, trace: &'e mut Trace) -> Self {
        Env { world, beliefs, trace }
    }
}

/// Interprets a validated task library against a registry.
pub struct Executor<'a, W> {
    library: &'a TaskLibrary,
    registry: &'a Registry<W>,
    database: &'a Database,
    prefix: String,
}

fn params_json(params: &BTreeMap<String, Value>) -> Json {
    Json::Object(params.iter().map(|(k, v)| (k.clone(), v.to_json())).collect())
}

fn reason(msg: impl Into<String>) -> BTreeMap<String, Value> {
    BTreeMap::from([("reason".to_string(), Value::Str(msg.into()))])
}

struct Failure<'s> {
    unit: &'s str,
    kind: UnitKind,
    step_name: &'s str,
    params: BTreeMap<String, Value>,
    signal: &'s str,
    fields: BTreeMap<String, Value>,
}

impl<'a, W> Executor<'a, W> {
    pub fn new(library: &'a TaskLibrary, registry: &'a Registry<W>, database: &'a Database) -> Result<Self, ExecError> {
        if !library.is_validated() {
            return Err(ExecError::NotValidated);
        }
        Ok(Executor {
            library,
            registry,
            database,
            prefix: String::new(),
        })
    }

    /// Prefix every trace path, e.g. `recovery/` for the recovery executor.
    pub fn with_path_prefix(mut self, prefix: &str) -> Self {
        self.prefix = prefix.to_string();
        self
    }

    pub fn library(&self) -> &TaskLibrary {
        self.library
    }

    pub fn registry(&self) -> &Registry<W> {
        self.registry
    }

    pub fn database(&self) -> &Database {
        self.database
    }

    /// A fresh session for `root`, not yet started.
    pub fn session(&self, root: &str, inputs: BTreeMap<String, Value>) -> Result<ExecutionSession, ExecError> {
        let def = self.library.get(root).ok_or_else(|| ExecError::UnknownRoot(root.to_string()))?;
        for p in &def.params {
            if !inputs.contains_key(p) {
                return Err(ExecError::MissingInput(p.clone()));
            }
        }
        if let Some(extra) = inputs.keys().find(|k| !def.params.contains(k)) {
            return Err(ExecError::UnexpectedInput(extra.clone()));
        }
        Ok(ExecutionSession {
            id: format!("{root}#1"),
            root: root.to_string(),
            stack: vec![Frame {
                unit: root.to_string(),
                kind: UnitKind::Task,
                steps: def.steps.clone(),
                index: 0,
                params: inputs,
                vars: BTreeMap::new(),
                declared_vars: def.vars.clone(),
                iteration: 0,
                condition: None,
            }],
            status: SessionStatus::Running,
            fault: None,
            outputs: BTreeMap::new(),
            ordinals: BTreeMap::new(),
            ledger: AbortLedger::new(),
            cancel: CancelToken::new(),
        })
    }

    /// Run `root` until it terminates or pauses on a fault.
    pub fn execute(&self, root: &str, inputs: BTreeMap<String, Value>, env: &mut Env<'_, W>) -> Result<ExecutionSession, ExecError> {
        let mut s = self.session(root, inputs)?;
        self.start(&mut s, env);
        Ok(s)
    }

    /// Emit `session_start` and run a session made by [`Executor::session`].
    pub fn start(&self, s: &mut ExecutionSession, env: &mut Env<'_, W>) {
        let params = params_json(&s.stack[0].params);
        env.trace.push("session_start", &self.path(&s.root), json!({"root": s.root, "params": params}));
        self.run(s, env);
    }

    /// Apply a resumption directive to a paused session and keep running.
    pub fn resume(&self, s: &mut ExecutionSession, directive: &ResumptionDirective, env: &mut Env<'_, W>) -> Result<(), ExecError> {
        if s.status != SessionStatus::PausedOnFault {
            return Err(ExecError::InvalidState(s.status));
        }
        let pos = s
            .stack
            .iter()
            .rposition(|f| f.kind == UnitKind::Task && f.unit == directive.target)
            .ok_or_else(|| ExecError::InvalidTarget(directive.target.clone()))?;
        s.stack.truncate(pos + 1);
        s.fault = None;
        let frame = s.stack.last_mut().expect("target frame");
        match directive.strategy {
            Strategy::None | Strategy::Continue => {}
            Strategy::Retry => {
                frame.index = 0;
                frame.vars.clear();
            }
            Strategy::Next => frame.index += 1,
            Strategy::Previous => frame.index = frame.index.saturating_sub(1),
        }
        let index = frame.index;
        let path = self.path(&s.frame_path());
        env.trace.push(
            "resume",
            &path,
            json!({"strategy": directive.strategy.as_str(), "target": directive.target, "step_index": index}),
        );
        if directive.strategy == Strategy::None {
            self.finish(s, env, SessionStatus::AbortedFinal);
        } else {
            s.status = SessionStatus::Running;
            self.run(s, env);
        }
        Ok(())
    }

    /// Drive the session until it leaves `RUNNING`.
    pub fn run(&self, s: &mut ExecutionSession, env: &mut Env<'_, W>) {
        while s.status == SessionStatus::Running {
            if s.cancel.is_requested() {
                self.finish(s, env, SessionStatus::Preempted);
                break;
            }
            let top = s.stack.last().expect("running session has a frame");
            if top.index >= top.steps.len() {
                self.complete_frame(s, env);
                continue;
            }
            let step = top.steps[top.index].clone();
            match step.kind {
                StepKind::Action | StepKind::Op => self.run_leaf(s, env, &step),
                StepKind::Task => self.enter_task(s, env, &step),
                StepKind::Choice => self.enter_choice(s, env, &step),
                StepKind::Loop => self.enter_loop(s, env, &step),
            }
        }
    }

    fn path(&self, p: &str) -> String {
        format!("{}{}", self.prefix, p)
    }

    fn step_path(&self, s: &ExecutionSession, step: &str) -> String {
        format!("{}{}/{}", self.prefix, s.frame_path(), step)
    }

    fn eval(&self, s: &ExecutionSession, beliefs: &BeliefState, e: &Expression) -> Result<Value, EvalError> {
        let f = &s.stack[s.scope_index()];
        let scope = Scope {
            params: &f.params,
            vars: &f.vars,
            database: self.database,
            beliefs,
        };
        evaluate(e, &scope)
    }

    fn eval_params(&self, s: &ExecutionSession, beliefs: &BeliefState, step: &Step) -> Result<Vec<(String, Value)>, EvalError> {
        step.params
            .iter()
            .map(|(k, e)| Ok((k.clone(), self.eval(s, beliefs, e)?)))
            .collect()
    }

    fn eval_condition(&self, s: &ExecutionSession, beliefs: &BeliefState, step: &Step) -> Result<bool, EvalError> {
        let cond = step
            .condition
            .as_ref()
            .ok_or_else(|| EvalError::Type(format!("`{}` has no condition", step.name)))?;
        self.eval(s, beliefs, cond)?
            .as_bool()
            .ok_or_else(|| EvalError::Type(format!("condition of `{}` is not a bool", step.name)))
    }

    fn bump_ordinal(s: &mut ExecutionSession, unit: &str) -> u64 {
        let n = s.ordinals.entry(unit.to_string()).or_insert(0);
        *n += 1;
        *n
    }

    fn bind(s: &mut ExecutionSession, name: &str, v: Value) {
        let i = s.scope_index();
        s.stack[i].vars.insert(name.to_string(), v);
    }

    fn advance(s: &mut ExecutionSession) {
        if let Some(f) = s.stack.last_mut() {
            f.index += 1;
        }
    }

    fn run_leaf(&self, s: &mut ExecutionSession, env: &mut Env<'_, W>, step: &Step) {
        let target = step.target.as_deref().unwrap_or_default();
        let kind = if step.kind == StepKind::Op { UnitKind::Op } else { UnitKind::Action };
        let path = self.step_path(s, &step.name);
        let args = match self.eval_params(s, env.beliefs, step) {
            Ok(a) => a,
            Err(e) => {
                let fail = Failure {
                    unit: target,
                    kind,
                    step_name: &step.name,
                    params: BTreeMap::new(),
                    signal: "INTERNAL",
                    fields: BTreeMap::from([
                        ("reason".to_string(), Value::Str(e.to_string())),
                        ("code".to_string(), Value::from(e.code())),
                    ]),
                };
                return self.fault(s, env, fail);
            }
        };
        let params: BTreeMap<String, Value> = args.iter().cloned().collect();
        let ordinal = Self::bump_ordinal(s, target);
        env.trace.push(
            "step_start",
            &path,
            json!({"kind": kind.as_str(), "target": target, "ordinal": ordinal, "params": params_json(&params)}),
        );

        let outcome: Result<BTreeMap<String, Value>, (String, BTreeMap<String, Value>)> = match step.kind {
            StepKind::Op => match self.registry.op(target) {
                None => Err(("INTERNAL".into(), reason(format!("op `{target}` is not registered")))),
                Some(op) => {
                    let values: Vec<Value> = args.into_iter().map(|(_, v)| v).collect();
                    match op(&values) {
                        Err(msg) => Err(("OP_FAILURE".into(), reason(msg))),
                        Ok(out) if out.len() < step.var.len() => Err((
                            "OP_FAILURE".into(),
                            reason(format!("op `{target}` produced {} values for {} vars", out.len(), step.var.len())),
                        )),
                        Ok(out) => Ok(step.var.iter().cloned().zip(out).collect()),
                    }
                }
            },
            _ => match self.registry.action(target) {
                None => Err(("INTERNAL".into(), reason(format!("action `{target}` is not registered")))),
                Some(handler) => {
                    let handler = handler.clone();
                    let mut ctx = ActionContext {
                        world: &mut *env.world,
                        beliefs: &mut *env.beliefs,
                        cancel: &s.cancel,
                    };
                    let result = handler.execute(&params, &mut ctx);
                    for u in env.beliefs.drain_updates() {
                        env.trace
                            .push("belief", &path, json!({"key": u.key, "value": u.value, "counter": u.counter}));
                    }
                    match result.status() {
                        ActionStatus::Preempted => {
                            env.trace.push("step_end", &path, json!({"kind": kind.as_str(), "status": "PREEMPTED"}));
                            self.finish(s, env, SessionStatus::Preempted);
                            return;
                        }
                        ActionStatus::Aborted => Err((
                            result.error_signal().unwrap_or("UNSPECIFIED").to_string(),
                            result.error_fields().clone(),
                        )),
                        ActionStatus::Succeeded => {
                            let outs = result.outputs();
                            match step.var.iter().find(|v| !outs.contains_key(*v)) {
                                Some(missing) => Err((
                                    "INTERNAL".into(),
                                    reason(format!("action `{target}` did not produce output `{missing}`")),
                                )),
                                None => Ok(step.var.iter().map(|v| (v.clone(), outs[v].clone())).collect()),
                            }
                        }
                    }
                }
            },
        };

        match outcome {
            Ok(bound) => {
                let out_json = params_json(&bound);
                for (k, v) in bound {
                    Self::bind(s, &k, v);
                }
                let fp = s.frame_path();
                s.ledger.record_leaf_success(&fp, target);
                env.trace
                    .push("step_end", &path, json!({"kind": kind.as_str(), "status": "SUCCEEDED", "outputs": out_json}));
                Self::advance(s);
            }
            Err((signal, fields)) => {
                let fail = Failure {
                    unit: target,
                    kind,
                    step_name: &step.name,
                    params,
                    signal: &signal,
                    fields,
                };
                self.fault(s, env, fail);
            }
        }
    }

    fn enter_task(&self, s: &mut ExecutionSession, env: &mut Env<'_, W>, step: &Step) {
        let target = step.target.as_deref().unwrap_or_default();
        let internal = |msg: String| Failure {
            unit: target,
            kind: UnitKind::Task,
            step_name: &step.name,
            params: BTreeMap::new(),
            signal: "INTERNAL",
            fields: reason(msg),
        };
        let Some(def) = self.library.get(target) else {
            return self.fault(s, env, internal(format!("task `{target}` is not defined")));
        };
        let params: BTreeMap<String, Value> = match self.eval_params(s, env.beliefs, step) {
            Ok(a) => a.into_iter().collect(),
            Err(e) => return self.fault(s, env, internal(e.to_string())),
        };
        let ordinal = Self::bump_ordinal(s, target);
        let path = self.step_path(s, &step.name);
        env.trace.push(
            "step_start",
            &path,
            json!({"kind": "task", "target": target, "ordinal": ordinal, "params": params_json(&params)}),
        );
        s.stack.push(Frame {
            unit: target.to_string(),
            kind: UnitKind::Task,
            steps: def.steps.clone(),
            index: 0,
            params,
            vars: BTreeMap::new(),
            declared_vars: def.vars.clone(),
            iteration: 0,
            condition: None,
        });
    }

    fn branch_frame(step: &Step, kind: UnitKind, steps: Vec<Step>) -> Frame {
        Frame {
            unit: format!("{}.branch", step.name),
            kind,
            steps,
            index: 0,
            params: BTreeMap::new(),
            vars: BTreeMap::new(),
            declared_vars: Vec::new(),
            iteration: if kind == UnitKind::Loop { 1 } else { 0 },
            condition: step.condition.clone(),
        }
    }

    fn condition_fault(&self, s: &mut ExecutionSession, env: &mut Env<'_, W>, step: &Step, kind: UnitKind, e: EvalError) {
        let fail = Failure {
            unit: &step.name,
            kind,
            step_name: &step.name,
            params: BTreeMap::new(),
            signal: "INTERNAL",
            fields: BTreeMap::from([
                ("reason".to_string(), Value::Str(e.to_string())),
                ("code".to_string(), Value::from(e.code())),
            ]),
        };
        self.fault(s, env, fail);
    }

    fn enter_choice(&self, s: &mut ExecutionSession, env: &mut Env<'_, W>, step: &Step) {
        let taken = match self.eval_condition(s, env.beliefs, step) {
            Ok(b) => b,
            Err(e) => return self.condition_fault(s, env, step, UnitKind::Choice, e),
        };
        let path = self.step_path(s, &step.name);
        env.trace.push("step_start", &path, json!({"kind": "choice", "branch": taken}));
        let branch = if taken { &step.if_true } else { &step.if_false };
        if branch.is_empty() {
            env.trace.push("step_end", &path, json!({"kind": "choice", "status": "SUCCEEDED"}));
            Self::advance(s);
        } else {
            s.stack.push(Self::branch_frame(step, UnitKind::Choice, branch.clone()));
        }
    }

    fn enter_loop(&self, s: &mut ExecutionSession, env: &mut Env<'_, W>, step: &Step) {
        let go = match self.eval_condition(s, env.beliefs, step) {
            Ok(b) => b,
            Err(e) => return self.condition_fault(s, env, step, UnitKind::Loop, e),
        };
        let path = self.step_path(s, &step.name);
        env.trace.push("step_start", &path, json!({"kind": "loop"}));
        if go {
            s.stack.push(Self::branch_frame(step, UnitKind::Loop, step.body.clone()));
        } else {
            env.trace
                .push("step_end", &path, json!({"kind": "loop", "status": "SUCCEEDED", "iterations": 0}));
            Self::advance(s);
        }
    }

    fn complete_frame(&self, s: &mut ExecutionSession, env: &mut Env<'_, W>) {
        let top = s.stack.last().expect("frame to complete");
        match top.kind {
            UnitKind::Loop => {
                let parent_step = s.stack[s.stack.len() - 2].steps[s.stack[s.stack.len() - 2].index].clone();
                match self.eval_condition(s, env.beliefs, &parent_step) {
                    Err(e) => self.condition_fault(s, env, &parent_step, UnitKind::Loop, e),
                    Ok(true) => {
                        let top = s.stack.last_mut().expect("loop frame");
                        top.index = 0;
                        top.iteration += 1;
                    }
                    Ok(false) => {
                        let done = s.stack.pop().expect("loop frame");
                        let path = self.step_path(s, &parent_step.name);
                        env.trace.push(
                            "step_end",
                            &path,
                            json!({"kind": "loop", "status": "SUCCEEDED", "iterations": done.iteration}),
                        );
                        Self::advance(s);
                    }
                }
            }
            UnitKind::Choice => {
                s.stack.pop();
                let parent = s.stack.last().expect("choice parent");
                let path = self.step_path(s, parent.step_name());
                env.trace.push("step_end", &path, json!({"kind": "choice", "status": "SUCCEEDED"}));
                Self::advance(s);
            }
            _ => {
                let missing: Vec<Value> = top
                    .declared_vars
                    .iter()
                    .filter(|v| !top.vars.contains_key(*v))
                    .map(|v| Value::Str(v.clone()))
                    .collect();
                if !missing.is_empty() {
                    let fail = Failure {
                        unit: "return",
                        kind: UnitKind::Op,
                        step_name: "return",
                        params: BTreeMap::new(),
                        signal: "UNBOUND_OUTPUT",
                        fields: BTreeMap::from([("missing".to_string(), Value::List(missing))]),
                    };
                    return self.fault(s, env, fail);
                }
                let done = s.stack.pop().expect("task frame");
                s.ledger.record_task_success(&done.unit);
                let outputs: BTreeMap<String, Value> = done
                    .declared_vars
                    .iter()
                    .map(|v| (v.clone(), done.vars[v].clone()))
                    .collect();
                if s.stack.is_empty() {
                    s.stack.push(done);
                    s.outputs = outputs;
                    self.finish(s, env, SessionStatus::Succeeded);
                    return;
                }
                let parent = s.stack.last().expect("task parent");
                let invoking = parent.steps[parent.index].clone();
                let mut bound = BTreeMap::new();
                for v in &invoking.var {
                    if let Some(val) = outputs.get(v) {
                        bound.insert(v.clone(), val.clone());
                        Self::bind(s, v, val.clone());
                    }
                }
                let path = self.step_path(s, &invoking.name);
                env.trace.push(
                    "step_end",
                    &path,
                    json!({"kind": "task", "status": "SUCCEEDED", "outputs": params_json(&bound)}),
                );
                Self::advance(s);
            }
        }
    }

    fn fault(&self, s: &mut ExecutionSession, env: &mut Env<'_, W>, fail: Failure<'_>) {
        let mut fields = fail.fields;
        for f in s.stack.iter().filter(|f| f.kind == UnitKind::Loop) {
            fields.insert(format!("{}.iteration", f.unit), Value::Int(i64::from(f.iteration)));
        }
        let fp = s.frame_path();
        let tasks: Vec<String> = s.task_names().into_iter().map(String::from).collect();
        let tasks: Vec<&str> = tasks.iter().map(String::as_str).collect();
        let count = s.ledger.record_abort(&fp, fail.unit, &tasks);
        let ctx = FaultContext {
            levels: s.frame_nodes(),
            leaf: LeafNode {
                unit: fail.unit.to_string(),
                kind: fail.kind,
                step_name: fail.step_name.to_string(),
                params: fail.params,
                error_signal: fail.signal.to_string(),
                error_fields: fields,
                consecutive_abort_count: count,
            },
            beliefs: env.beliefs.snapshot(),
        };
        let path = self.step_path(s, fail.step_name);
        env.trace.push(
            "fault",
            &path,
            json!({"unit": fail.unit, "signal": fail.signal, "count": count, "context": ctx.to_json()}),
        );
        s.fault = Some(ctx);
        s.status = SessionStatus::PausedOnFault;
    }

    fn finish(&self, s: &mut ExecutionSession, env: &mut Env<'_, W>, status: SessionStatus) {
        s.status = status;
        env.trace.push(
            "session_end",
            &self.path(&s.root),
            json!({"status": status.as_str(), "outputs": params_json(&s.outputs)}),
        );
    }
}
