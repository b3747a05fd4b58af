mod common;

use std::collections::{BTreeMap, BTreeSet};

use common::*;
use proptest::prelude::*;
use rdd_core::executor::{
    execute_unit_isolated, ActionResult, Env, Executor, FnAction, Registry, ResumptionDirective, SessionStatus, Strategy as Resume, Trace,
    UnitKind,
};
use rdd_core::knowledge::{BeliefState, Database};
use rdd_core::recipe::{check, expand_tree, parse_recipe, validate, ValidationInputs};
use rdd_core::value::Value;

fn waypoint() -> Value {
    let m: BTreeMap<String, Value> = [("name", Value::from("schunk_station")), ("x", Value::Float(1.5)), ("y", Value::Float(-0.5)), ("yaw", Value::Float(0.0))]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
    Value::Map(m)
}

#[test]
fn detect_schunk_pose_task_succeeds_with_output() {
    let reg = listing_registry();
    let lib = load(LISTING, &reg);
    let r = run(&lib, &reg, "detect_schunk_pose_task", &[("look_location", waypoint())], Script::default());
    assert_eq!(r.session.status(), SessionStatus::Succeeded);
    assert_eq!(r.session.outputs().keys().collect::<Vec<_>>(), vec!["chuck_approach_pose"]);
    assert_eq!(r.world.log, vec!["look", "detect_schunk"]);
    // look received the bound waypoint itself
    let start = r.trace.of_kind("step_start").next().unwrap();
    assert_eq!(start.payload["params"]["pose"]["name"], "schunk_station");
}

#[test]
fn pick_fault_builds_two_level_context() {
    let reg = listing_registry();
    let lib = load(LISTING, &reg);
    let r = run(&lib, &reg, "pick_task", &pick_inputs(), Script::default().fail("pick", 1, "PLANNING_FAILURE"));
    assert_eq!(r.session.status(), SessionStatus::PausedOnFault);
    let f = r.session.fault().unwrap();
    assert_eq!(f.full_path(), vec!["pick_task", "pick"]);
    assert_eq!(f.leaf.kind, UnitKind::Action);
    assert_eq!(f.leaf.error_signal, "PLANNING_FAILURE");
    assert_eq!(f.leaf.consecutive_abort_count, 1);
    assert_eq!(f.leaf.params["object_key"], Value::from("objects.large_gear"));
    assert_eq!(f.levels, r.session.frame_nodes());
    assert_eq!(f.levels[0].step_index, 0);
    let json = f.to_json();
    assert_eq!(json["context"]["unit"], "pick_task");
    assert_eq!(json["context"]["child"]["error_signal"], "PLANNING_FAILURE");
}

#[test]
fn grasped_comparison_after_verify() {
    let src = format!("{LISTING}\nchecked:\n  params: [object_idx, grasps, object_key]\n  var: [ok]\n  steps:\n  - task: pick_task\n    params: {{object_idx: params.object_idx, grasps: params.grasps, object_key: params.object_key}}\n    var: [grasped]\n  - op: assign\n    params: {{v: var.grasped == true}}\n    var: [ok]\n");
    let reg = listing_registry();
    let lib = parse_recipe(&src).unwrap();
    let keys = BTreeSet::new();
    let diags = check(&lib, &ValidationInputs { catalog: &reg, db_keys: &keys, belief_keys: None });
    // `var.grasped == true` as a param value is a literal string, not an expression
    assert!(diags.is_empty(), "{diags:?}");
    let lib = validate(lib, &ValidationInputs { catalog: &reg, db_keys: &keys, belief_keys: None }).unwrap();
    let r = run(&lib, &reg, "checked", &pick_inputs(), Script::default());
    assert_eq!(r.session.status(), SessionStatus::Succeeded);
    assert_eq!(r.session.outputs()["ok"], Value::from("var.grasped == true"));
}

#[test]
fn loop_initially_false_never_runs() {
    let reg = scripted(&[("a", &[])]);
    let lib = load("t:\n  steps:\n  - loop: spin\n    condition: 'false'\n    body:\n    - action: a\n", &reg);
    let r = run(&lib, &reg, "t", &[], Script::default());
    assert_eq!(r.session.status(), SessionStatus::Succeeded);
    assert!(r.world.log.is_empty());
}

#[test]
fn loop_and_choice_branch_frames() {
    let src = r#"
t:
  var: [n]
  steps:
  - op: assign
    params: {v: 0}
    var: [n]
  - loop: count
    condition: var.n < 3
    body:
    - op: increment
      params: {v: var.n}
      var: [n]
    - choice: odd
      condition: var.n == 2
      if_true:
      - action: a
      if_false:
      - action: b
"#;
    let reg = scripted(&[("a", &[]), ("b", &[])]);
    let lib = load(src, &reg);
    let r = run(&lib, &reg, "t", &[], Script::default());
    assert_eq!(r.session.status(), SessionStatus::Succeeded);
    assert_eq!(r.session.outputs()["n"], Value::Int(3));
    assert_eq!(r.world.log, vec!["b", "a", "b"]);

    let r = run(&lib, &reg, "t", &[], Script::default().fail("a", 1, "BOOM"));
    let f = r.session.fault().unwrap();
    assert_eq!(f.full_path(), vec!["t", "count.branch", "odd.branch", "a"]);
    assert_eq!(f.levels[1].kind, UnitKind::Loop);
    assert_eq!(f.levels[2].kind, UnitKind::Choice);
    assert_eq!(f.leaf.error_fields["count.branch.iteration"], Value::Int(2));
    assert_eq!(f.levels, r.session.frame_nodes());
    assert_eq!(f.failing_task(), Some("t"));
}

#[test]
fn op_failure_and_unbound_output_are_faults() {
    let reg = scripted(&[]);
    let lib = load("t:\n  steps:\n  - op: get_index\n    params: {l: [1], i: 5}\n    var: [x]\n", &reg);
    let r = run(&lib, &reg, "t", &[], Script::default());
    let f = r.session.fault().unwrap();
    assert_eq!(f.leaf.error_signal, "OP_FAILURE");
    assert_eq!(f.leaf.kind, UnitKind::Op);

    let src = "t:\n  var: [x]\n  steps:\n  - choice: c\n    condition: 'false'\n    if_true:\n    - op: assign\n      params: {v: 1}\n      var: [x]\n";
    let lib = parse_recipe(src).unwrap();
    let keys = BTreeSet::new();
    let lib = validate(lib, &ValidationInputs { catalog: &reg, db_keys: &keys, belief_keys: None }).unwrap();
    let r = run(&lib, &reg, "t", &[], Script::default());
    let f = r.session.fault().unwrap();
    assert_eq!(f.leaf.error_signal, "UNBOUND_OUTPUT");
    assert_eq!(f.leaf.error_fields["missing"], Value::List(vec!["x".into()]));
}

#[test]
fn child_vars_only_escape_when_captured() {
    let src = r#"
outer:
  var: [got]
  steps:
  - task: child
  - task: child
    name: child_again
    var: [shown]
  - op: assign
    params: {v: var.shown}
    var: [got]
child:
  var: [shown]
  steps:
  - op: assign
    params: {a: 7, b: 8}
    var: [shown, hidden]
"#;
    let reg = scripted(&[]);
    let lib = load(src, &reg);
    let r = run(&lib, &reg, "outer", &[], Script::default());
    assert_eq!(r.session.status(), SessionStatus::Succeeded);
    assert_eq!(r.session.outputs()["got"], Value::Int(7));
    let bottom = &r.session.stack()[0];
    assert!(bottom.vars.contains_key("shown"));
    assert!(!bottom.vars.contains_key("hidden"));
}

fn resume_once(src: &str, reg: &Registry<Script>, root: &str, world: Script, d: ResumptionDirective) -> (SessionStatus, Vec<String>) {
    let lib = load(src, reg);
    let db = Database::empty();
    let exec = Executor::new(&lib, reg, &db).unwrap();
    let mut world = world;
    let mut beliefs = BeliefState::new();
    let mut trace = Trace::new();
    let mut env = Env::new(&mut world, &mut beliefs, &mut trace);
    let mut s = exec.execute(root, BTreeMap::new(), &mut env).unwrap();
    assert_eq!(s.status(), SessionStatus::PausedOnFault);
    exec.resume(&mut s, &d, &mut env).unwrap();
    (s.status(), world.log)
}

#[test]
fn continue_reexecutes_failed_leaf() {
    let reg = scripted(&[("pick", &[]), ("verify_grasp", &["grasped"])]);
    let src = "pick_task:\n  steps:\n  - action: pick\n  - action: verify_grasp\n    var: [grasped]\n";
    let (st, log) = resume_once(src, &reg, "pick_task", Script::default().fail("pick", 1, "PLANNING_FAILURE"), ResumptionDirective::new(Resume::Continue, "pick_task"));
    assert_eq!(st, SessionStatus::Succeeded);
    assert_eq!(log, vec!["pick", "pick", "verify_grasp"]);
}

#[test]
fn retry_restarts_enclosing_task() {
    let reg = scripted(&[("look", &[]), ("pick", &[])]);
    let src = "perceive_pick:\n  steps:\n  - task: perceive\n  - task: pick_task\nperceive:\n  steps:\n  - action: look\npick_task:\n  steps:\n  - action: pick\n";
    let (st, log) = resume_once(src, &reg, "perceive_pick", Script::default().fail("pick", 1, "NO_GRASP_FOUND"), ResumptionDirective::new(Resume::Retry, "perceive_pick"));
    assert_eq!(st, SessionStatus::Succeeded);
    assert_eq!(log, vec!["look", "pick", "look", "pick"]);
}

#[test]
fn next_skips_failed_step() {
    let reg = scripted(&[("s0", &[]), ("s1", &[]), ("s2", &[])]);
    let src = "t:\n  steps:\n  - action: s0\n  - action: s1\n  - action: s2\n";
    let (st, log) = resume_once(src, &reg, "t", Script::default().fail("s1", 1, "X"), ResumptionDirective::new(Resume::Next, "t"));
    assert_eq!(st, SessionStatus::Succeeded);
    assert_eq!(log, vec!["s0", "s1", "s2"]);
}

#[test]
fn none_ends_session() {
    let reg = nested_registry();
    let (st, log) = resume_once(NESTED, &reg, "root", Script::default().fail("i1", 1, "X"), ResumptionDirective::new(Resume::None, "mid"));
    assert_eq!(st, SessionStatus::AbortedFinal);
    assert_eq!(log, vec!["r0", "m0", "i0", "i1"]);
}

#[test]
fn previous_at_step_zero_matches_retry() {
    let reg = nested_registry();
    let traces: Vec<String> = [Resume::Previous, Resume::Retry]
        .into_iter()
        .map(|strategy| {
            let lib = load(NESTED, &reg);
            let db = Database::empty();
            let exec = Executor::new(&lib, &reg, &db).unwrap();
            let mut world = Script::default().fail("i0", 1, "X");
            let mut beliefs = BeliefState::new();
            let mut trace = Trace::new();
            let mut env = Env::new(&mut world, &mut beliefs, &mut trace);
            let mut s = exec.execute("root", BTreeMap::new(), &mut env).unwrap();
            exec.resume(&mut s, &ResumptionDirective::new(strategy, "inner"), &mut env).unwrap();
            // the resume record names the strategy; everything else must agree
            trace.to_jsonl().replace(strategy.as_str(), "STRATEGY")
        })
        .collect();
    assert_eq!(traces[0], traces[1]);
}

#[test]
fn resume_errors() {
    let reg = nested_registry();
    let lib = load(NESTED, &reg);
    let db = Database::empty();
    let exec = Executor::new(&lib, &reg, &db).unwrap();
    let mut world = Script::default().fail("m0", 1, "X");
    let mut beliefs = BeliefState::new();
    let mut trace = Trace::new();
    let mut env = Env::new(&mut world, &mut beliefs, &mut trace);
    let mut s = exec.execute("root", BTreeMap::new(), &mut env).unwrap();
    let err = exec.resume(&mut s, &ResumptionDirective::new(Resume::Continue, "inner"), &mut env).unwrap_err();
    assert_eq!(err.code(), "INVALID_TARGET");
    exec.resume(&mut s, &ResumptionDirective::new(Resume::Continue, "mid"), &mut env).unwrap();
    assert_eq!(s.status(), SessionStatus::Succeeded);
    let err = exec.resume(&mut s, &ResumptionDirective::new(Resume::Continue, "mid"), &mut env).unwrap_err();
    assert_eq!(err.code(), "INVALID_STATE");
}

#[test]
fn execute_requires_validated_library_and_inputs() {
    let reg = listing_registry();
    let raw = parse_recipe(LISTING).unwrap();
    let db = Database::empty();
    assert_eq!(Executor::new(&raw, &reg, &db).err().unwrap().code(), "NOT_VALIDATED");
    let lib = load(LISTING, &reg);
    let exec = Executor::new(&lib, &reg, &db).unwrap();
    assert_eq!(exec.session("pick_task", BTreeMap::new()).unwrap_err().code(), "BAD_INPUTS");
    assert_eq!(exec.session("nope", BTreeMap::new()).unwrap_err().code(), "UNKNOWN_ROOT");
}

#[test]
fn cancellation_preempts() {
    let mut reg: Registry<()> = Registry::new();
    reg.register_action(
        "slow",
        FnAction::new(|_, ctx| {
            // ten simulated 100 ms sub-steps
            for i in 0..10 {
                if ctx.cancelled() {
                    return ActionResult::preempted();
                }
                if i == 3 {
                    ctx.cancel.request();
                }
            }
            ActionResult::ok()
        }),
    )
    .unwrap();
    let keys = BTreeSet::new();
    let lib = validate(parse_recipe("t:\n  steps:\n  - action: slow\n  - action: slow\n    name: slow_again\n").unwrap(), &ValidationInputs { catalog: &reg, db_keys: &keys, belief_keys: None }).unwrap();
    let db = Database::empty();
    let exec = Executor::new(&lib, &reg, &db).unwrap();
    let mut beliefs = BeliefState::new();
    let mut trace = Trace::new();
    let s = exec.execute("t", BTreeMap::new(), &mut Env::new(&mut (), &mut beliefs, &mut trace)).unwrap();
    assert_eq!(s.status(), SessionStatus::Preempted);
    assert_eq!(trace.count("step_start"), 1);
}

#[test]
fn isolated_action_and_task() {
    let reg = listing_registry();
    let lib = load(LISTING, &reg);
    let db = Database::empty();
    let exec = Executor::new(&lib, &reg, &db).unwrap();
    let mut world = Script::default().fail("pick", 1, "PLANNING_FAILURE");
    let mut beliefs = BeliefState::new();
    let mut trace = Trace::new();
    let mut env = Env::new(&mut world, &mut beliefs, &mut trace);

    let rep = execute_unit_isolated(&exec, "look", r#"{"pose": {"x": 1.5, "y": -0.5, "yaw": 0.0}}"#, &mut env).unwrap();
    assert_eq!(rep.to_json(), r#"{"status":"SUCCEEDED"}"#);

    let err = execute_unit_isolated(&exec, "look", "{pose", &mut env).unwrap_err();
    assert_eq!(err.code(), "DESERIALIZATION_ERROR");

    let inputs = r#"{"object_idx": 0, "grasps": ["top", "side"], "object_key": "objects.large_gear"}"#;
    let rep = execute_unit_isolated(&exec, "pick_task", inputs, &mut env).unwrap();
    assert_eq!(rep.status, "ABORTED");

    let engine = run(&lib, &reg, "pick_task", &pick_inputs(), Script::default().fail("pick", 1, "PLANNING_FAILURE"));
    assert_eq!(rep.fault_context.unwrap(), engine.session.fault().unwrap().to_json());
}

#[test]
fn identical_runs_give_identical_traces() {
    let reg = nested_registry();
    let lib = load(NESTED, &reg);
    let a = run(&lib, &reg, "root", &[], Script::default().fail("i1", 1, "X"));
    let b = run(&lib, &reg, "root", &[], Script::default().fail("i1", 1, "X"));
    assert_eq!(a.trace.to_jsonl(), b.trace.to_jsonl());
}

#[test]
fn tree_size_matches_fault_free_step_count() {
    // no choices and a loop that runs exactly once
    let src = r#"
top:
  steps:
  - task: pick_task
    params: {object_idx: 0, grasps: [a], object_key: k}
  - loop: once
    condition: not exists(var.done)
    body:
    - op: assign
      params: {v: true}
      var: [done]
    - action: look
      params: {pose: 1}
"#;
    let reg = listing_registry();
    let lib = load(&format!("{LISTING}{src}"), &reg);
    let tree = expand_tree(&lib, "top", &BTreeMap::new()).unwrap();
    let r = run(&lib, &reg, "top", &[], Script::default());
    assert_eq!(r.session.status(), SessionStatus::Succeeded);
    assert_eq!(tree.count(), r.trace.count("step_start") + 1);
}

// Small random libraries over a fixed vocabulary. Anything the validator
// accepts must run without a resolution error when every action succeeds.
fn leaf_step() -> impl Strategy<Value = String> {
    prop_oneof![
        Just("- action: emit\n  var: [x]".to_string()),
        Just("- action: emit\n  var: [y]".to_string()),
        Just("- action: quiet".to_string()),
        prop::sample::select(vec!["params.p", "params.q", "var.x", "var.y", "1"])
            .prop_map(|r| format!("- op: increment\n  params: {{v: {r}}}\n  var: [x]")),
        prop::sample::select(vec!["params.p", "var.x", "var.y", "db.nothing"])
            .prop_map(|r| format!("- action: quiet\n  params: {{v: {r}}}")),
    ]
}

fn step(task_count: usize) -> impl Strategy<Value = String> {
    let call = (0..task_count, prop::sample::select(vec!["", "{p: 1}", "{p: var.x}", "{p: 1, q: 2}"]), prop::sample::select(vec!["", "[x]", "[y]"]))
        .prop_map(|(t, params, var)| {
            let mut s = format!("- task: t{t}");
            if !params.is_empty() {
                s += &format!("\n  params: {params}");
            }
            if !var.is_empty() {
                s += &format!("\n  var: {var}");
            }
            s
        });
    let choice = (prop::sample::select(vec!["var.x == 1", "params.p < 2", "exists(var.y)", "true"]), leaf_step(), leaf_step())
        .prop_map(|(c, a, b)| format!("- choice: c\n  condition: {c}\n  if_true:\n{}\n  if_false:\n{}", indent(&a, 2), indent(&b, 2)));
    let looped = leaf_step().prop_map(|a| format!("- loop: l\n  condition: not exists(var.z)\n  body:\n  - op: assign\n    params: {{v: 1}}\n    var: [z]\n{}", indent(&a, 2)));
    prop_oneof![4 => leaf_step(), 2 => call, 1 => choice, 1 => looped]
}

fn indent(s: &str, n: usize) -> String {
    let pad = " ".repeat(n);
    s.lines().map(|l| format!("{pad}{l}")).collect::<Vec<_>>().join("\n")
}

fn library(task_count: usize) -> impl Strategy<Value = String> {
    let task = (prop::sample::select(vec!["[]", "[p]", "[p, q]"]), prop::sample::select(vec!["[]", "[x]"]), prop::collection::vec(step(task_count), 1..5));
    prop::collection::vec(task, task_count).prop_map(|tasks| {
        let mut doc = String::new();
        for (i, (params, vars, steps)) in tasks.into_iter().enumerate() {
            doc += &format!("t{i}:\n  params: {params}\n  var: {vars}\n  steps:\n");
            // step names must be unique within a list
            for (j, s) in steps.iter().enumerate() {
                let named = if let Some(rest) = s.strip_prefix("- choice: c") {
                    format!("- choice: c{j}{rest}")
                } else if let Some(rest) = s.strip_prefix("- loop: l") {
                    format!("- loop: l{j}{rest}")
                } else {
                    let (head, tail) = s.split_once('\n').unwrap_or((s.as_str(), ""));
                    format!("{head}\n  name: s{j}\n{tail}")
                };
                doc += &indent(named.trim_end(), 2);
                doc += "\n";
            }
        }
        doc
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn validated_libraries_never_hit_resolution_errors(doc in (1usize..4).prop_flat_map(library)) {
        let reg = scripted(&[("emit", &["x", "y"]), ("quiet", &[])]);
        let Ok(lib) = parse_recipe(&doc) else { return Ok(()) };
        let keys = BTreeSet::new();
        let Ok(lib) = validate(lib, &ValidationInputs { catalog: &reg, db_keys: &keys, belief_keys: None }) else { return Ok(()) };
        let params = &lib.get("t0").unwrap().params;
        let inputs: Vec<(&str, Value)> = params.iter().map(|p| (p.as_str(), Value::Int(1))).collect();
        let r = run(&lib, &reg, "t0", &inputs, Script::default());
        // mock outputs are untyped strings, so a condition may still hit TYPE_ERROR
        if let Some(f) = r.session.fault() {
            prop_assert_ne!(f.leaf.error_fields.get("code"), Some(&Value::from("UNBOUND_REFERENCE")), "{}\n{:?}", doc, f.leaf);
        }
    }
}
