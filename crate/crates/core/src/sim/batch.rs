#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::Serialize;

use super::faults::FaultPlan;
use super::scenario::{run_scenario, Bundle};
use super::SimError;
use crate::executor::SessionStatus;
use crate::monitor::{RuleSet, UnseenPolicy};

/// Summary of one run in a batch.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatchOutcome {
    pub seed: u64,
    pub status: SessionStatus,
    pub filled_slots: usize,
    pub decisions: usize,
    pub trace_events: usize,
    pub violations: usize,
}

impl BatchOutcome {
    pub fn succeeded(&self) -> bool {
        self.status == SessionStatus::Succeeded
    }
}

fn one(bundle: &Bundle, rules: &RuleSet, plan: &FaultPlan, policy: UnseenPolicy) -> Result<BatchOutcome, SimError> {
    let run = run_scenario(bundle, rules, plan, plan.seed, policy)?;
    Ok(BatchOutcome {
        seed: plan.seed,
        status: run.status,
        filled_slots: run.final_world().filled_slots(),
        decisions: run.decisions.len(),
        trace_events: run.trace.len(),
        violations: run.world.violations.len(),
    })
}

/// One supervised run per plan, each seeded with the plan's own seed.
/// Results come back in plan order.
pub fn run_batch(bundle: &Bundle, rules: &RuleSet, plans: &[FaultPlan], policy: UnseenPolicy) -> Vec<Result<BatchOutcome, SimError>> {
    #[cfg(feature = "parallel")]
    {
        plans.par_iter().map(|p| one(bundle, rules, p, policy)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        run_batch_sequential(bundle, rules, plans, policy)
    }
}

pub fn run_batch_sequential(bundle: &Bundle, rules: &RuleSet, plans: &[FaultPlan], policy: UnseenPolicy) -> Vec<Result<BatchOutcome, SimError>> {
    plans.iter().map(|p| one(bundle, rules, p, policy)).collect()
}

/// `count` plans with the same stochastic settings and seeds `first..`.
pub fn seed_sweep(template: &FaultPlan, first: u64, count: u64) -> Vec<FaultPlan> {
    (first..first + count)
        .map(|seed| FaultPlan { seed, ..template.clone() })
        .collect()
}
