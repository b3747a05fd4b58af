use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::faults::{next_fault, FaultPlan};
use super::world::{Gripper, RobotPose, WorldState};
use crate::executor::{ActionContext, ActionHandler, ActionResult, Registry};
use crate::knowledge::BeliefState;
use crate::recipe::ActionSchema;
use crate::value::Value;

pub const LOCALIZATION_BELIEF: &str = "ROBOT_AT_EXPECTED_LOCATION";

/// Ticks a mock action spends "running"; the cancel flag is polled between them.
const SUBSTEPS: u32 = 3;

/// Everything the mock actions read and write.
#[derive(Debug, Clone)]
pub struct SimWorld {
    pub state: WorldState,
    pub plan: FaultPlan,
    rng: ChaCha8Rng,
    invocations: BTreeMap<String, u64>,
    /// Simulated time in sub-steps.
    pub clock: u64,
    /// Candidate order of every `pick` invocation, in call order.
    pub grasp_orders: Vec<Vec<String>>,
    /// Conservation failures seen after any action; should stay empty.
    pub violations: Vec<String>,
}

impl SimWorld {
    pub fn new(state: WorldState, plan: FaultPlan, seed: u64) -> Self {
        SimWorld {
            state,
            plan,
            rng: ChaCha8Rng::seed_from_u64(seed),
            invocations: BTreeMap::new(),
            clock: 0,
            grasp_orders: Vec::new(),
            violations: Vec::new(),
        }
    }

    pub fn invocations(&self, action: &str) -> u64 {
        self.invocations.get(action).copied().unwrap_or(0)
    }

    fn bump(&mut self, action: &str) -> u64 {
        let n = self.invocations.entry(action.to_string()).or_insert(0);
        *n += 1;
        *n
    }
}

pub const MOCK_ACTIONS: [&str; 14] = [
    "navigate",
    "reposition",
    "look",
    "segment",
    "detect_object",
    "detect_large_object_pose",
    "detect_schunk",
    "pick",
    "verify_grasp",
    "in_hand_localize",
    "place_in_kit",
    "insert_gear",
    "move_arm",
    "reinit_obstacle_map",
];

pub fn mock_schema(action: &str) -> Option<ActionSchema> {
    let (req, opt, out): (&[&str], &[&str], &[&str]) = match action {
        "navigate" => (&["location"], &[], &[]),
        "reposition" => (&["station"], &["confidence"], &["mode"]),
        "look" => (&["pose"], &[], &[]),
        "segment" => (&[], &[], &["clusters"]),
        "detect_object" => (&["object_type"], &[], &["object_idx"]),
        "detect_large_object_pose" => (&[], &[], &["object_idx"]),
        "detect_schunk" => (&[], &[], &["chuck_approach_pose"]),
        "pick" => (&["object_idx", "grasps", "object_key"], &[], &["grasp"]),
        "verify_grasp" => (&["abort_on_false"], &[], &["grasped"]),
        "in_hand_localize" => (&[], &[], &[]),
        "place_in_kit" => (&["slot_idx"], &[], &[]),
        "insert_gear" => (&[], &["pose"], &[]),
        "move_arm" => (&["pose"], &[], &[]),
        "reinit_obstacle_map" => (&[], &[], &[]),
        _ => return None,
    };
    Some(ActionSchema::new(req, opt, out))
}

type Params = BTreeMap<String, Value>;

fn abort(signal: &str, fields: &[(&str, Value)]) -> ActionResult {
    ActionResult::aborted(signal, fields.iter().map(|(k, v)| (k.to_string(), v.clone())).collect())
}

fn schema_error(param: &str, expected: &str) -> ActionResult {
    abort("SCHEMA_ERROR", &[("param", param.into()), ("expected", expected.into())])
}

fn int_param(p: &Params, key: &str) -> Result<i64, ActionResult> {
    p.get(key).and_then(Value::as_i64).ok_or_else(|| schema_error(key, "integer"))
}

fn bool_param(p: &Params, key: &str) -> Result<bool, ActionResult> {
    p.get(key).and_then(Value::as_bool).ok_or_else(|| schema_error(key, "bool"))
}

/// A station given as a bare name or as a waypoint map with a `name`.
fn station_param(p: &Params, key: &str) -> Result<String, ActionResult> {
    match p.get(key) {
        Some(Value::Str(s)) => Ok(s.clone()),
        Some(v) => v
            .get("name")
            .and_then(Value::as_str)
            .map(String::from)
            .ok_or_else(|| schema_error(key, "waypoint or station name")),
        None => Err(schema_error(key, "waypoint or station name")),
    }
}

fn set_belief(beliefs: &mut BeliefState, key: &str, value: f64) {
    if beliefs.declares(key) && beliefs.get(key) != Some(value) {
        let _ = beliefs.set(key, value);
    }
}

fn out(pairs: &[(&str, Value)]) -> ActionResult {
    ActionResult::succeeded(pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect())
}

/// One simulated action. All mocks share this type; behaviour is picked by name.
pub struct MockAction {
    name: &'static str,
}

impl MockAction {
    pub fn new(name: &'static str) -> Self {
        MockAction { name }
    }

    fn behave(&self, p: &Params, w: &mut SimWorld, beliefs: &mut BeliefState, fault: Option<String>) -> Result<ActionResult, ActionResult> {
        let s = &mut w.state;
        match self.name {
            "navigate" => {
                let station = station_param(p, "location")?;
                match fault.as_deref() {
                    Some("LOCALIZATION_LOST") => {
                        s.robot = RobotPose::Free;
                        set_belief(beliefs, LOCALIZATION_BELIEF, 0.0);
                        return Err(abort("LOCALIZATION_LOST", &[("station", station.into())]));
                    }
                    Some(sig) => return Err(abort(sig, &[("station", station.into())])),
                    None => {}
                }
                s.robot = RobotPose::At(station);
                set_belief(beliefs, LOCALIZATION_BELIEF, 1.0);
                Ok(ActionResult::ok())
            }
            "reposition" => {
                let station = station_param(p, "station")?;
                if let Some(sig) = fault {
                    return Err(abort(&sig, &[("station", station.into())]));
                }
                let mode = match p.get("confidence").and_then(Value::as_f64) {
                    Some(c) if c < 0.5 => "relocalize",
                    _ => "nudge",
                };
                s.robot = RobotPose::At(station);
                set_belief(beliefs, LOCALIZATION_BELIEF, 1.0);
                Ok(out(&[("mode", mode.into())]))
            }
            "look" => {
                if !p.contains_key("pose") {
                    return Err(schema_error("pose", "pose"));
                }
                fault.map_or(Ok(ActionResult::ok()), |sig| Err(abort(&sig, &[])))
            }
            "segment" => {
                if let Some(sig) = fault {
                    return Err(abort(&sig, &[]));
                }
                let n = s.robot_station().and_then(|st| s.stations.get(st)).map_or(0, Vec::len);
                Ok(out(&[("clusters", Value::Int(n as i64))]))
            }
            "detect_object" | "detect_large_object_pose" => {
                let wanted = match self.name {
                    "detect_object" => p
                        .get("object_type")
                        .and_then(Value::as_str)
                        .map(String::from)
                        .ok_or_else(|| schema_error("object_type", "string"))?,
                    _ => "large_gear".to_string(),
                };
                if let Some(sig) = fault {
                    return Err(abort(&sig, &[("object_type", wanted.into())]));
                }
                let found = s
                    .robot_station()
                    .and_then(|st| s.stations.get(st))
                    .and_then(|c| c.iter().position(|o| s.catalog.get(o) == Some(&wanted)));
                match found {
                    Some(i) => Ok(out(&[("object_idx", Value::Int(i as i64))])),
                    None if self.name == "detect_object" => Err(abort("DETECTION_FAILED", &[("object_type", wanted.into())])),
                    None => Err(abort("POSE_ESTIMATION_FAILED", &[("object_type", wanted.into())])),
                }
            }
            "detect_schunk" => {
                if let Some(sig) = fault {
                    return Err(abort(&sig, &[]));
                }
                if s.robot_station() != Some("schunk") {
                    return Err(abort("DETECTION_FAILED", &[]));
                }
                let pose = BTreeMap::from([
                    ("x".to_string(), Value::Float(0.45)),
                    ("y".to_string(), Value::Float(0.0)),
                    ("z".to_string(), Value::Float(0.82)),
                ]);
                Ok(out(&[("chuck_approach_pose", Value::Map(pose))]))
            }
            "pick" => {
                let idx = int_param(p, "object_idx")?;
                let grasps = p
                    .get("grasps")
                    .and_then(Value::as_list)
                    .ok_or_else(|| schema_error("grasps", "list"))?;
                let mut order: Vec<String> = grasps.iter().map(|g| g.to_string()).collect();
                order.shuffle(&mut w.rng);
                w.grasp_orders.push(order.clone());
                let s = &mut w.state;
                let station = s.robot_station().map(String::from);
                let candidates = Value::List(order.iter().map(|g| Value::from(g.as_str())).collect());
                let mut fields: Vec<(&str, Value)> = vec![("candidate_order", candidates)];
                if let Some(st) = &station {
                    fields.push(("station", st.as_str().into()));
                }
                if let Some(sig) = fault {
                    return Err(abort(&sig, &fields));
                }
                if s.held().is_some() {
                    return Err(abort("GRIPPER_OCCUPIED", &fields));
                }
                let contents = station.as_deref().and_then(|st| s.stations.get_mut(st));
                let object = match (contents, usize::try_from(idx)) {
                    (Some(c), Ok(i)) if i < c.len() => c.remove(i),
                    _ => return Err(abort("NO_OBJECT", &fields)),
                };
                s.gripper = Gripper::Holding(object);
                Ok(out(&[("grasp", order.first().cloned().map_or(Value::Null, Value::Str))]))
            }
            "verify_grasp" => {
                let abort_on_false = bool_param(p, "abort_on_false")?;
                if let Some(sig) = fault {
                    return Err(abort(&sig, &[]));
                }
                let grasped = s.held().is_some();
                if !grasped && abort_on_false {
                    return Err(abort("GRASP_LOST", &[]));
                }
                Ok(out(&[("grasped", grasped.into())]))
            }
            "in_hand_localize" => {
                if let Some(sig) = fault {
                    return Err(abort(&sig, &[]));
                }
                if s.held().is_none() {
                    return Err(abort("NOT_HOLDING", &[]));
                }
                Ok(ActionResult::ok())
            }
            "place_in_kit" => {
                let idx = int_param(p, "slot_idx")?;
                let slot = usize::try_from(idx).ok().filter(|i| *i < s.kit.len());
                let mut fields: Vec<(&str, Value)> = vec![("slot_idx", idx.into())];
                if let Some(i) = slot {
                    fields.push(("slot", s.kit[i].name.as_str().into()));
                }
                if let Some(sig) = fault {
                    return Err(abort(&sig, &fields));
                }
                let Some(i) = slot else { return Err(abort("BAD_SLOT", &fields)) };
                let Some(held) = s.held().map(String::from) else { return Err(abort("NOT_HOLDING", &fields)) };
                if s.kit[i].content.is_some() {
                    return Err(abort("SLOT_OCCUPIED", &fields));
                }
                if s.catalog.get(&held) != Some(&s.kit[i].accepts) {
                    return Err(abort("WRONG_OBJECT", &fields));
                }
                s.kit[i].content = Some(held);
                s.gripper = Gripper::Empty;
                Ok(ActionResult::ok())
            }
            "insert_gear" => {
                if let Some(sig) = fault {
                    return Err(abort(&sig, &[]));
                }
                let held = s.held().map(String::from);
                let is_gear = held.as_ref().is_some_and(|h| s.catalog.get(h).map(String::as_str) == Some("large_gear"));
                if !is_gear {
                    return Err(abort("NOT_HOLDING", &[]));
                }
                if s.robot_station() != Some("schunk") {
                    return Err(abort("INSERTION_MISS", &[]));
                }
                s.gripper = Gripper::Empty;
                s.put_in_station("schunk", held.expect("checked above"));
                Ok(ActionResult::ok())
            }
            "move_arm" => {
                if !p.contains_key("pose") {
                    return Err(schema_error("pose", "pose"));
                }
                fault.map_or(Ok(ActionResult::ok()), |sig| Err(abort(&sig, &[])))
            }
            "reinit_obstacle_map" => fault.map_or(Ok(ActionResult::ok()), |sig| Err(abort(&sig, &[]))),
            other => Err(abort("SCHEMA_ERROR", &[("reason", format!("no mock named `{other}`").into())])),
        }
    }
}

impl ActionHandler<SimWorld> for MockAction {
    fn schema(&self) -> Option<ActionSchema> {
        mock_schema(self.name)
    }

    fn execute(&self, params: &Params, ctx: &mut ActionContext<'_, SimWorld>) -> ActionResult {
        let n = ctx.world.bump(self.name);
        for _ in 0..SUBSTEPS {
            if ctx.cancelled() {
                return ActionResult::preempted();
            }
            ctx.world.clock += 1;
        }
        let fault = next_fault(&ctx.world.plan, self.name, n, &mut ctx.world.rng);
        let result = match self.behave(params, ctx.world, ctx.beliefs, fault) {
            Ok(r) | Err(r) => r,
        };
        if let Err(e) = ctx.world.state.check_conservation() {
            ctx.world.violations.push(format!("{}#{n}: {e}", self.name));
        }
        result
    }
}

fn slot_ordinal(layout: &[String]) -> impl Fn(&[Value]) -> Result<Vec<Value>, String> + Send + Sync {
    let layout = layout.to_vec();
    move |args: &[Value]| {
        let name = match args {
            [Value::Str(s)] => s,
            _ => return Err("slot_ordinal expects one slot name".into()),
        };
        layout
            .iter()
            .position(|s| s == name)
            .map(|i| vec![Value::Int(i as i64)])
            .ok_or_else(|| format!("no kit slot named `{name}`"))
    }
}

/// Registry with every mock action plus `slot_ordinal`, which maps a slot
/// name to its index in `kit_layout`.
pub fn sim_registry(kit_layout: &[String]) -> Registry<SimWorld> {
    let mut reg = Registry::new();
    for name in MOCK_ACTIONS {
        reg.register_action(name, MockAction::new(name)).expect("mock names are distinct");
    }
    reg.register_op("slot_ordinal", slot_ordinal(kit_layout)).expect("not a builtin");
    reg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::executor::{ActionStatus, CancelToken};
    use crate::sim::build_world;

    const WORLD: &str = "stations:\n  shelf: [bolt_1, large_gear_1]\n  schunk: []\nkit:\n  - {slot: bolt, accepts: bolt}\nrobot: shelf\n";

    fn call(w: &mut SimWorld, action: &'static str, params: &[(&str, Value)]) -> ActionResult {
        let mut beliefs = BeliefState::new();
        let cancel = CancelToken::new();
        let mut ctx = ActionContext {
            world: w,
            beliefs: &mut beliefs,
            cancel: &cancel,
        };
        let params = params.iter().map(|(k, v)| (k.to_string(), v.clone())).collect();
        MockAction::new(action).execute(&params, &mut ctx)
    }

    fn world(plan: FaultPlan) -> SimWorld {
        SimWorld::new(build_world(WORLD).unwrap().world, plan, 11)
    }

    fn pick_params(idx: i64) -> Vec<(&'static str, Value)> {
        vec![
            ("object_idx", idx.into()),
            ("grasps", Value::List(vec!["top".into(), "side".into(), "front".into(), "rim".into()])),
            ("object_key", "bolt".into()),
        ]
    }

    #[test]
    fn pick_moves_object_into_gripper() {
        let mut w = world(FaultPlan::none());
        let r = call(&mut w, "pick", &pick_params(0));
        assert_eq!(r.status(), ActionStatus::Succeeded);
        assert_eq!(w.state.gripper, Gripper::Holding("bolt_1".into()));
        assert_eq!(w.state.stations["shelf"], vec!["large_gear_1".to_string()]);
        assert!(w.violations.is_empty());
    }

    #[test]
    fn planning_failure_leaves_world_alone() {
        let mut w = world(FaultPlan::scripted(&[("pick", 1, "PLANNING_FAILURE")]));
        let before = w.state.clone();
        let r = call(&mut w, "pick", &pick_params(0));
        assert_eq!(r.error_signal(), Some("PLANNING_FAILURE"));
        assert_eq!(w.state, before);
    }

    #[test]
    fn verify_grasp_reports_empty_hand() {
        let mut w = world(FaultPlan::none());
        let r = call(&mut w, "verify_grasp", &[("abort_on_false", false.into())]);
        assert_eq!(r.status(), ActionStatus::Succeeded);
        assert_eq!(r.outputs()["grasped"], Value::Bool(false));
        let r = call(&mut w, "verify_grasp", &[("abort_on_false", true.into())]);
        assert_eq!(r.error_signal(), Some("GRASP_LOST"));
    }

    #[test]
    fn pick_retries_shuffle_grasps() {
        let mut w = world(FaultPlan::scripted(&[("pick", 1, "NO_GRASP_FOUND")]));
        call(&mut w, "pick", &pick_params(0));
        call(&mut w, "pick", &pick_params(0));
        assert_eq!(w.grasp_orders.len(), 2);
        assert_ne!(w.grasp_orders[0], w.grasp_orders[1]);
        let mut a = w.grasp_orders[0].clone();
        a.sort();
        assert_eq!(a, ["front", "rim", "side", "top"]);
    }

    #[test]
    fn place_checks_slot_and_type() {
        let mut w = world(FaultPlan::none());
        assert_eq!(call(&mut w, "place_in_kit", &[("slot_idx", 0.into())]).error_signal(), Some("NOT_HOLDING"));
        call(&mut w, "pick", &pick_params(1));
        assert_eq!(call(&mut w, "place_in_kit", &[("slot_idx", 0.into())]).error_signal(), Some("WRONG_OBJECT"));
        assert_eq!(call(&mut w, "place_in_kit", &[("slot_idx", 3.into())]).error_signal(), Some("BAD_SLOT"));
        assert!(w.violations.is_empty());
    }

    #[test]
    fn localization_loss_frees_the_robot() {
        let mut w = world(FaultPlan::scripted(&[("navigate", 1, "LOCALIZATION_LOST")]));
        let mut beliefs = BeliefState::with_schema(BTreeMap::from([(LOCALIZATION_BELIEF.to_string(), 1.0)])).unwrap();
        let cancel = CancelToken::new();
        let mut ctx = ActionContext {
            world: &mut w,
            beliefs: &mut beliefs,
            cancel: &cancel,
        };
        let params = BTreeMap::from([("location".to_string(), Value::from("schunk"))]);
        let r = MockAction::new("navigate").execute(&params, &mut ctx);
        assert_eq!(r.error_fields()["station"], Value::from("schunk"));
        assert_eq!(w.state.robot, RobotPose::Free);
        assert_eq!(beliefs.get(LOCALIZATION_BELIEF), Some(0.0));
    }

    #[test]
    fn malformed_params_are_schema_errors() {
        let mut w = world(FaultPlan::none());
        assert_eq!(call(&mut w, "pick", &[("object_idx", "zero".into())]).error_signal(), Some("SCHEMA_ERROR"));
    }

    #[test]
    fn cancellation_preempts() {
        let mut w = world(FaultPlan::none());
        let mut beliefs = BeliefState::new();
        let cancel = CancelToken::new();
        cancel.request();
        let mut ctx = ActionContext {
            world: &mut w,
            beliefs: &mut beliefs,
            cancel: &cancel,
        };
        let r = MockAction::new("look").execute(&BTreeMap::new(), &mut ctx);
        assert_eq!(r.status(), ActionStatus::Preempted);
    }

    #[test]
    fn slot_ordinal_follows_layout() {
        let reg = sim_registry(&["base".into(), "screw".into()]);
        let op = reg.op("slot_ordinal").unwrap();
        assert_eq!(op(&["screw".into()]).unwrap(), vec![Value::Int(1)]);
        assert!(op(&["gear".into()]).is_err());
    }
}
