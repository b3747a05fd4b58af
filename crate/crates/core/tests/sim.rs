use std::collections::BTreeMap;
use std::sync::OnceLock;

use proptest::prelude::*;
use rdd_core::executor::{ActionContext, ActionHandler, ActionStatus, CancelToken, SessionStatus};
use rdd_core::knowledge::BeliefState;
use rdd_core::monitor::UnseenPolicy;
use rdd_core::sim::{
    build_world, demo, run_scenario, signal_vocabulary, Bundle, FaultPlan, Gripper, MockAction, ScriptedFault, SimWorld, Stochastic, MOCK_ACTIONS,
};
use rdd_core::value::Value;

fn bundle() -> &'static Bundle {
    static DEMO: OnceLock<Bundle> = OnceLock::new();
    DEMO.get_or_init(|| Bundle::load(&demo::sources()).expect("demo loads"))
}

#[test]
fn demo_world_shape() {
    let s = build_world(demo::SCENARIO).unwrap();
    assert_eq!(s.world.stations.len(), 4);
    let caddies = s.world.catalog.values().filter(|t| *t == "kit_caddy").count();
    assert_eq!(caddies, 1);
    for slot in &s.world.kit {
        assert!(s.world.catalog.values().any(|t| *t == slot.accepts), "no part for {}", slot.name);
    }
    assert!(s.world.check_conservation().is_ok());
}

#[test]
fn empty_world_pick_has_no_object() {
    let mut w = SimWorld::new(build_world("").unwrap().world, FaultPlan::none(), 0);
    let mut beliefs = BeliefState::new();
    let cancel = CancelToken::new();
    let mut ctx = ActionContext { world: &mut w, beliefs: &mut beliefs, cancel: &cancel };
    let params = BTreeMap::from([
        ("object_idx".to_string(), Value::Int(0)),
        ("grasps".to_string(), Value::List(vec!["top".into()])),
        ("object_key".to_string(), Value::from("screw")),
    ]);
    let r = MockAction::new("pick").execute(&params, &mut ctx);
    assert_eq!(r.error_signal(), Some("NO_OBJECT"));
}

#[test]
fn scripted_faults_recover_and_fill_the_kit() {
    let b = bundle();
    let run = b.run(None, UnseenPolicy::AlwaysExit).unwrap();
    assert_eq!(run.status, SessionStatus::Succeeded);
    assert!(run.final_world().kit_complete());
    assert!(run.decisions.iter().all(|d| d.rule.is_some()));
    // every scripted entry was reached and diagnosed
    assert_eq!(run.decisions.len(), b.plan.deterministic.len());
    assert!(run.world.violations.is_empty());
}

#[test]
fn scripted_faults_without_rules_abort() {
    let b = bundle();
    let none = b.load_rules("").unwrap();
    let run = run_scenario(b, &none, &b.plan, b.plan.seed, UnseenPolicy::AlwaysExit).unwrap();
    assert_eq!(run.status, SessionStatus::AbortedFinal);
    assert!(!run.final_world().kit_complete());
}

#[test]
fn same_seed_same_bytes() {
    let b = bundle();
    let plan = FaultPlan::uniform(0.15, 5);
    let a = run_scenario(b, &b.rules, &plan, 5, UnseenPolicy::AlwaysExit).unwrap();
    let c = run_scenario(b, &b.rules, &plan, 5, UnseenPolicy::AlwaysExit).unwrap();
    assert_eq!(a.trace.to_jsonl(), c.trace.to_jsonl());
}

#[test]
fn zero_probability_matches_the_bare_executor() {
    let b = bundle();
    let plan = FaultPlan::uniform(0.0, 8);
    let supervised = run_scenario(b, &b.rules, &plan, 8, UnseenPolicy::AlwaysExit).unwrap();
    let bare = b.run_unsupervised(&plan, 8).unwrap();
    assert_eq!(bare.status, SessionStatus::Succeeded);
    assert_eq!(supervised.trace.to_jsonl(), bare.trace.to_jsonl());
}

#[test]
fn slot_ordinals_follow_the_kit_order() {
    let b = bundle();
    let run = b.run_unsupervised(&FaultPlan::none(), 0).unwrap();
    let seen: Vec<i64> = run
        .trace
        .of_kind("step_end")
        .filter_map(|e| e.payload["outputs"]["slot_idx"].as_i64())
        .collect();
    // main_task visits base, screw, bolt, small_gear, large_gear, gearbox_top, gearbox_bottom
    assert_eq!(seen, vec![0, 1, 2, 3, 4, 5, 6]);
}

#[test]
fn look_is_reused_across_subtasks() {
    let run = bundle().run_unsupervised(&FaultPlan::none(), 0).unwrap();
    let looks = run.trace.executed_leaves().iter().filter(|l| *l == "look").count();
    // one per perceive and per place, plus the chuck and retrieval looks
    assert_eq!(looks, 7 + 7 + 2);
}

fn arb_plan() -> impl Strategy<Value = FaultPlan> {
    let entry = (0..MOCK_ACTIONS.len(), 1u64..6, 0usize..3).prop_map(|(a, n, s)| {
        let action = MOCK_ACTIONS[a];
        let vocab = signal_vocabulary(action);
        let signal = if vocab.is_empty() { "UNSPECIFIED".to_string() } else { vocab[s % vocab.len()].to_string() };
        ScriptedFault { action: action.to_string(), invocation: n, signal }
    });
    (any::<u64>(), 0.0f64..0.35, prop::collection::vec(entry, 0..6)).prop_map(|(seed, p, deterministic)| FaultPlan {
        seed,
        deterministic,
        stochastic: Stochastic { default_probability: p, ..Stochastic::default() },
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn objects_are_conserved(plan in arb_plan(), rules_on in any::<bool>()) {
        let b = bundle();
        let none = b.load_rules("").unwrap();
        let rules = if rules_on { &b.rules } else { &none };
        let run = run_scenario(b, rules, &plan, plan.seed, UnseenPolicy::AlwaysExit).unwrap();
        prop_assert!(run.world.violations.is_empty(), "{:?}", run.world.violations);
        prop_assert!(run.final_world().check_conservation().is_ok());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    // A successful pick does the same thing to the world whatever faults
    // came before it.
    #[test]
    fn earlier_faults_do_not_change_a_success(idx in 0i64..4, prior in 0u64..4, seed in any::<u64>()) {
        let mut start = build_world(demo::SCENARIO).unwrap().world;
        start.robot = rdd_core::sim::RobotPose::At("gear_table".into());
        let scripted: Vec<(&str, u64, &str)> = (1..=prior).map(|n| ("pick", n, "NO_GRASP_FOUND")).collect();
        let mut faulty = SimWorld::new(start.clone(), FaultPlan::scripted(&scripted), seed);
        let mut clean = SimWorld::new(start, FaultPlan::none(), seed ^ 1);
        let params = BTreeMap::from([
            ("object_idx".to_string(), Value::Int(idx)),
            ("grasps".to_string(), Value::List(vec!["top".into(), "side".into()])),
            ("object_key".to_string(), Value::from("part")),
        ]);
        let pick = MockAction::new("pick");
        let mut beliefs = BeliefState::new();
        let cancel = CancelToken::new();
        for _ in 0..prior {
            let r = pick.execute(&params, &mut ActionContext { world: &mut faulty, beliefs: &mut beliefs, cancel: &cancel });
            prop_assert_eq!(r.status(), ActionStatus::Aborted);
        }
        let a = pick.execute(&params, &mut ActionContext { world: &mut faulty, beliefs: &mut beliefs, cancel: &cancel });
        let b = pick.execute(&params, &mut ActionContext { world: &mut clean, beliefs: &mut beliefs, cancel: &cancel });
        prop_assert_eq!(a.status(), ActionStatus::Succeeded);
        prop_assert_eq!(b.status(), ActionStatus::Succeeded);
        prop_assert_eq!(&faulty.state, &clean.state);
        prop_assert!(matches!(faulty.state.gripper, Gripper::Holding(_)));
    }
}
