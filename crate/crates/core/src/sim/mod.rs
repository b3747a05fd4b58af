//! Simulated kit-assembly world: mock actions, fault injection, and a
//! scenario runner wiring the executor and monitor together.

mod actions;
mod batch;
mod faults;
mod scenario;
mod world;

use thiserror::Error;

use crate::executor::ExecError;
use crate::knowledge::KnowledgeError;
use crate::monitor::MonitorError;
use crate::recipe::{Diagnostic, RecipeError};

pub use actions::{mock_schema, sim_registry, MockAction, SimWorld, LOCALIZATION_BELIEF, MOCK_ACTIONS};
pub use batch::{run_batch, run_batch_sequential, seed_sweep, BatchOutcome};
pub use faults::{load_fault_plan, next_fault, signal_vocabulary, FaultPlan, ScriptedFault, Stochastic};
pub use scenario::{run_scenario, Bundle, ScenarioRun, Sources, DEFAULT_ROOT, RECOVERY_PREFIX};
pub use world::{build_world, ConservationError, Gripper, KitSlot, RobotPose, Scenario, WorldState, OBJECT_TYPES};

/// The bundled kit-assembly demo.
pub mod demo {
    use super::Sources;

    pub const RECIPES: &str = include_str!("../../demo/recipes.yaml");
    pub const RECOVERIES: &str = include_str!("../../demo/recoveries.yaml");
    pub const RULES: &str = include_str!("../../demo/rules.yaml");
    pub const DATABASE: &str = include_str!("../../demo/database.yaml");
    pub const BELIEFS: &str = include_str!("../../demo/beliefs.yaml");
    pub const SCENARIO: &str = include_str!("../../demo/scenario.yaml");
    pub const FAULTS: &str = include_str!("../../demo/faults.yaml");

    pub fn sources() -> Sources {
        Sources {
            recipes: vec![RECIPES.to_string()],
            recoveries: vec![RECOVERIES.to_string()],
            rules: Some(RULES.to_string()),
            database: Some(DATABASE.to_string()),
            beliefs: Some(BELIEFS.to_string()),
            scenario: SCENARIO.to_string(),
            faults: Some(FAULTS.to_string()),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("object `{0}` is placed more than once")]
    DuplicateObject(String),
    #[error("scenario: {0}")]
    Scenario(String),
    #[error("fault plan: {0}")]
    FaultPlan(String),
    #[error("{what} failed validation with {} diagnostic(s)", diagnostics.len())]
    Invalid { what: &'static str, diagnostics: Vec<Diagnostic> },
    #[error(transparent)]
    Recipe(#[from] RecipeError),
    #[error(transparent)]
    Knowledge(#[from] KnowledgeError),
    #[error(transparent)]
    Monitor(#[from] MonitorError),
    #[error(transparent)]
    Exec(#[from] ExecError),
}

impl SimError {
    pub fn code(&self) -> &'static str {
        match self {
            SimError::Syntax { .. } => "SYNTAX_ERROR",
            SimError::DuplicateObject(_) => "DUPLICATE_OBJECT",
            SimError::Scenario(_) => "SCENARIO_ERROR",
            SimError::FaultPlan(_) => "FAULT_PLAN_ERROR",
            SimError::Invalid { .. } => "VALIDATION_ERROR",
            SimError::Recipe(e) => e.code(),
            SimError::Knowledge(e) => e.code(),
            SimError::Monitor(e) => e.code(),
            SimError::Exec(e) => e.code(),
        }
    }

    pub(crate) fn syntax(e: &serde_yaml::Error) -> Self {
        let (line, column) = e.location().map(|l| (l.line(), l.column())).unwrap_or((0, 0));
        SimError::Syntax {
            line,
            column,
            message: e.to_string(),
        }
    }
}
