#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use rdd_core::executor::{ActionResult, Env, ExecutionSession, Executor, FnAction, Registry, Trace};
use rdd_core::knowledge::{BeliefState, Database};
use rdd_core::recipe::{parse_recipe, validate, TaskLibrary, ValidationInputs};
use rdd_core::value::Value;

pub const LISTING: &str = r#"
detect_schunk_pose_task:
  params:
  - look_location

  var:
  - chuck_approach_pose

  steps:
  - action: look
    params:
      pose: params.look_location

  - action: detect_schunk
    var:
    - chuck_approach_pose

pick_task:
  params: [object_idx, grasps, object_key]
  var: [grasped]
  steps:
  - action: pick
    params:
      object_idx: params.object_idx
      grasps: params.grasps
      object_key: params.object_key

  - action: verify_grasp
    params:
      abort_on_false: false
    var:
    - grasped
"#;

/// World for scripted mocks: fails `(action, nth invocation)` with a signal
/// and logs every invocation.
#[derive(Debug, Default, Clone)]
pub struct Script {
    pub faults: BTreeMap<(String, u64), String>,
    pub calls: BTreeMap<String, u64>,
    pub log: Vec<String>,
}

impl Script {
    pub fn fail(mut self, action: &str, nth: u64, signal: &str) -> Self {
        self.faults.insert((action.to_string(), nth), signal.to_string());
        self
    }
}

/// Schema-less registry where every named action succeeds unless the
/// script says otherwise. `grasped` outputs `true`; other outputs are strings.
pub fn scripted(actions: &[(&str, &[&str])]) -> Registry<Script> {
    let mut reg = Registry::new();
    for (name, outs) in actions {
        let name = name.to_string();
        let outs: Vec<String> = outs.iter().map(|s| s.to_string()).collect();
        let n = name.clone();
        let handler = FnAction::new(move |_params, ctx| {
            let w: &mut Script = ctx.world;
            let k = w.calls.entry(n.clone()).or_insert(0);
            *k += 1;
            let nth = *k;
            w.log.push(n.clone());
            if let Some(sig) = w.faults.get(&(n.clone(), nth)) {
                let fields = BTreeMap::from([("invocation".to_string(), Value::Int(nth as i64))]);
                return ActionResult::aborted(sig, fields);
            }
            let outputs = outs
                .iter()
                .map(|o| {
                    let v = if o == "grasped" { Value::Bool(true) } else { Value::Str(format!("{n}.{o}")) };
                    (o.clone(), v)
                })
                .collect();
            ActionResult::succeeded(outputs)
        });
        reg.register_action(&name, handler).unwrap();
    }
    reg
}

pub fn listing_registry() -> Registry<Script> {
    scripted(&[
        ("look", &[]),
        ("detect_schunk", &["chuck_approach_pose"]),
        ("pick", &[]),
        ("verify_grasp", &["grasped"]),
    ])
}

pub fn load(src: &str, reg: &Registry<Script>) -> TaskLibrary {
    let lib = parse_recipe(src).expect("parse");
    let db_keys = BTreeSet::new();
    validate(lib, &ValidationInputs { catalog: reg, db_keys: &db_keys, belief_keys: None }).expect("validate")
}

pub struct Run {
    pub session: ExecutionSession,
    pub world: Script,
    pub trace: Trace,
}

pub fn run(lib: &TaskLibrary, reg: &Registry<Script>, root: &str, inputs: &[(&str, Value)], world: Script) -> Run {
    let db = Database::empty();
    let exec = Executor::new(lib, reg, &db).unwrap();
    let mut world = world;
    let mut beliefs = BeliefState::new();
    let mut trace = Trace::new();
    let inputs = inputs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect();
    let session = exec.execute(root, inputs, &mut Env::new(&mut world, &mut beliefs, &mut trace)).unwrap();
    Run { session, world, trace }
}

pub fn pick_inputs() -> Vec<(&'static str, Value)> {
    vec![
        ("object_idx", Value::Int(0)),
        ("grasps", Value::List(vec!["top".into(), "side".into()])),
        ("object_key", Value::from("objects.large_gear")),
    ]
}

/// root -> mid -> inner, three steps each, used by the resumption suites.
pub const NESTED: &str = r#"
root:
  steps:
  - action: r0
  - task: mid
  - action: r2
mid:
  steps:
  - action: m0
  - task: inner
  - action: m2
inner:
  steps:
  - action: i0
  - action: i1
  - action: i2
"#;

pub fn nested_registry() -> Registry<Script> {
    scripted(&[("r0", &[]), ("r2", &[]), ("m0", &[]), ("m2", &[]), ("i0", &[]), ("i1", &[]), ("i2", &[])])
}
