use std::collections::BTreeSet;

use super::actions::{sim_registry, SimWorld};
use super::faults::{load_fault_plan, FaultPlan};
use super::world::{build_world, Scenario, WorldState};
use super::SimError;
use crate::executor::{Env, Executor, Registry, SessionStatus, Trace};
use crate::knowledge::{load_belief_schema, load_database, BeliefState, Database};
use crate::monitor::{load_rules, report, RecoveryDecision, RuleInputs, RuleSet, StatsReport, Supervisor, UnseenPolicy};
use crate::recipe::{parse_recipe, validate, TaskLibrary, ValidationInputs};

/// Prefix on trace paths written by the recovery executor.
pub const RECOVERY_PREFIX: &str = "recovery/";

pub const DEFAULT_ROOT: &str = "main_task";

/// Document texts making up one run. Database and beliefs given here win over
/// any embedded in the scenario.
#[derive(Debug, Clone, Default)]
pub struct Sources {
    pub recipes: Vec<String>,
    pub recoveries: Vec<String>,
    pub rules: Option<String>,
    pub database: Option<String>,
    pub beliefs: Option<String>,
    pub scenario: String,
    pub faults: Option<String>,
}

/// Everything loaded and validated, ready to run any number of times.
#[derive(Clone)]
pub struct Bundle {
    pub library: TaskLibrary,
    pub recoveries: TaskLibrary,
    pub rules: RuleSet,
    pub database: Database,
    pub beliefs: BeliefState,
    pub scenario: Scenario,
    pub plan: FaultPlan,
    pub registry: Registry<SimWorld>,
}

fn merged(docs: &[String], what: &'static str, registry: &Registry<SimWorld>, db: &Database, beliefs: &BeliefState) -> Result<TaskLibrary, SimError> {
    let mut lib = TaskLibrary::new();
    for d in docs {
        lib.merge(parse_recipe(d)?)?;
    }
    let db_keys = db.keys();
    let inputs = ValidationInputs {
        catalog: registry,
        db_keys: &db_keys,
        belief_keys: beliefs.schema(),
    };
    validate(lib, &inputs).map_err(|diagnostics| SimError::Invalid { what, diagnostics })
}

impl Bundle {
    pub fn load(src: &Sources) -> Result<Bundle, SimError> {
        let scenario = build_world(&src.scenario)?;
        let database = match &src.database {
            Some(d) => load_database(d)?,
            None => scenario.database.clone().unwrap_or_default(),
        };
        let beliefs = match &src.beliefs {
            Some(b) => load_belief_schema(b)?,
            None => scenario.beliefs.clone().unwrap_or_default(),
        };
        let plan = src.faults.as_deref().map(load_fault_plan).transpose()?.unwrap_or_default();
        let layout: Vec<String> = scenario.world.kit.iter().map(|s| s.name.clone()).collect();
        let registry = sim_registry(&layout);
        let library = merged(&src.recipes, "recipes", &registry, &database, &beliefs)?;
        let recoveries = merged(&src.recoveries, "recoveries", &registry, &database, &beliefs)?;
        let mut bundle = Bundle {
            library,
            recoveries,
            rules: RuleSet::empty(),
            database,
            beliefs,
            scenario,
            plan,
            registry,
        };
        if let Some(r) = &src.rules {
            bundle.rules = bundle.load_rules(r)?;
        }
        if bundle.library.get(bundle.root()).is_none() {
            return Err(SimError::Exec(crate::executor::ExecError::UnknownRoot(bundle.root().to_string())));
        }
        Ok(bundle)
    }

    /// Compile a rule document against this bundle's recoveries and actions.
    pub fn load_rules(&self, document: &str) -> Result<RuleSet, SimError> {
        let leaf_names: BTreeSet<String> = self
            .registry
            .action_names()
            .chain(self.registry.op_names())
            .map(String::from)
            .collect();
        let inputs = RuleInputs {
            recovery_library: &self.recoveries,
            leaf_names: &leaf_names,
            belief_keys: self.beliefs.schema(),
        };
        Ok(load_rules(document, &inputs)?)
    }

    pub fn root(&self) -> &str {
        self.scenario.root.as_deref().unwrap_or(DEFAULT_ROOT)
    }

    pub fn kit_layout(&self) -> Vec<String> {
        self.scenario.world.kit.iter().map(|s| s.name.clone()).collect()
    }

    /// Supervised run with the bundle's own rules and fault plan.
    pub fn run(&self, seed: Option<u64>, policy: UnseenPolicy) -> Result<ScenarioRun, SimError> {
        run_scenario(self, &self.rules, &self.plan, seed.unwrap_or(self.plan.seed), policy)
    }

    /// The main recipe alone, with no monitor attached: the first fault ends it.
    pub fn run_unsupervised(&self, plan: &FaultPlan, seed: u64) -> Result<ScenarioRun, SimError> {
        let exec = Executor::new(&self.library, &self.registry, &self.database)?;
        let mut world = SimWorld::new(self.scenario.world.clone(), plan.clone(), seed);
        let mut beliefs = self.beliefs.clone();
        let mut trace = Trace::new();
        let session = exec.execute(self.root(), self.scenario.inputs.clone(), &mut Env::new(&mut world, &mut beliefs, &mut trace))?;
        Ok(ScenarioRun {
            status: session.status(),
            report: report(&trace),
            trace,
            world,
            beliefs,
            decisions: Vec::new(),
        })
    }
}

#[derive(Debug)]
pub struct ScenarioRun {
    pub status: SessionStatus,
    pub trace: Trace,
    pub report: StatsReport,
    pub world: SimWorld,
    pub beliefs: BeliefState,
    pub decisions: Vec<RecoveryDecision>,
}

impl ScenarioRun {
    pub fn final_world(&self) -> &WorldState {
        &self.world.state
    }
}

/// Build the world, run the root task under supervision and summarise the trace.
pub fn run_scenario(bundle: &Bundle, rules: &RuleSet, plan: &FaultPlan, seed: u64, policy: UnseenPolicy) -> Result<ScenarioRun, SimError> {
    let main = Executor::new(&bundle.library, &bundle.registry, &bundle.database)?;
    let recovery = Executor::new(&bundle.recoveries, &bundle.registry, &bundle.database)?.with_path_prefix(RECOVERY_PREFIX);
    let supervisor = Supervisor::new(main, recovery, rules, policy);
    let mut world = SimWorld::new(bundle.scenario.world.clone(), plan.clone(), seed);
    let mut beliefs = bundle.beliefs.clone();
    let mut trace = Trace::new();
    let out = supervisor.run(bundle.root(), bundle.scenario.inputs.clone(), &mut Env::new(&mut world, &mut beliefs, &mut trace))?;
    Ok(ScenarioRun {
        status: out.session.status(),
        report: report(&trace),
        trace,
        world,
        beliefs,
        decisions: out.decisions,
    })
}
