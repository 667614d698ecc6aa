//! Grounding, derived-predicate closure and forward search.

mod axioms;
mod ground;
mod search;
mod task;

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::validate_plan;
use crate::pddl::{Domain, Plan, Problem};

pub use axioms::axiom_closure;
pub use ground::{ground_actions, GroundAction, TypeEnv};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SearchMode {
    /// Breadth-first; plans have minimal length.
    Optimal,
    /// Greedy best-first on the configured heuristic.
    Satisficing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Heuristic {
    AdditiveCost,
    GoalCount,
    Blind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    pub mode: SearchMode,
    /// Ignored in optimal mode.
    pub heuristic: Heuristic,
    pub node_limit: u64,
    pub time_limit_s: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            mode: SearchMode::Satisficing,
            heuristic: Heuristic::AdditiveCost,
            node_limit: 2_000_000,
            time_limit_s: 60.0,
        }
    }
}

impl SearchConfig {
    pub fn optimal() -> Self {
        SearchConfig {
            mode: SearchMode::Optimal,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), PlanError> {
        if self.node_limit == 0 || !(self.time_limit_s > 0.0 && self.time_limit_s.is_finite()) {
            return Err(PlanError::Config(
                "node and time limits must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Solved,
    Unsolvable,
    NodeLimit,
    TimeLimit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub status: SolveStatus,
    #[serde(skip)]
    pub plan: Option<Plan>,
    pub plan_length: Option<usize>,
    pub expanded_nodes: u64,
    pub wall_time_ms: f64,
}

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("invalid search config: {0}")]
    Config(String),
    #[error("internal error: plan fails validation at step {step:?}: {reason}")]
    Unsound { step: Option<usize>, reason: String },
}

/// Searches for a plan from the problem's init to its goal. Limits and
/// unsolvability are reported in the status, not as errors.
pub fn solve(
    domain: &Domain,
    problem: &Problem,
    cfg: &SearchConfig,
) -> Result<SolveResult, PlanError> {
    cfg.validate()?;
    let start = Instant::now();
    let t = task::Task::compile(domain, problem);
    let mut stats = search::Stats { expanded: 0 };
    let outcome = search::search(&t, cfg, &mut stats);
    let ms = start.elapsed().as_secs_f64() * 1000.0;
    let (status, plan) = match outcome {
        search::Outcome::Plan(ids) => {
            let plan = Plan {
                steps: ids.into_iter().map(|i| t.actions[i].step.clone()).collect(),
            };
            let v = validate_plan(
                domain,
                &problem.objects,
                &problem.init,
                &problem.goal,
                &plan,
            );
            if !v.ok {
                return Err(PlanError::Unsound {
                    step: v.step,
                    reason: format!("{:?}", v.reason),
                });
            }
            (SolveStatus::Solved, Some(plan))
        }
        search::Outcome::Unsolvable => (SolveStatus::Unsolvable, None),
        search::Outcome::NodeLimit => (SolveStatus::NodeLimit, None),
        search::Outcome::TimeLimit => (SolveStatus::TimeLimit, None),
    };
    Ok(SolveResult {
        status,
        plan_length: plan.as_ref().map(Plan::len),
        plan,
        expanded_nodes: stats.expanded,
        wall_time_ms: ms,
    })
}

/// Heuristic value of the initial state, `None` for a relaxed dead end.
pub fn initial_heuristic(domain: &Domain, problem: &Problem, h: Heuristic) -> Option<u64> {
    let t = task::Task::compile(domain, problem);
    search::heuristic(&t, h, &t.closure(&t.init))
}
