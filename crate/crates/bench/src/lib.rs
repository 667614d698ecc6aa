//! Inputs shared by the pipeline benchmarks.

use groundplan::bench::{DomainKind, GenConfig, GeneratedProblem, HanoiGoal};
use groundplan::goal::{parse_structured_goal, GoalSpec};
use groundplan::pddl::Domain;

/// A generated problem together with its parsed domain.
pub struct Case {
    pub domain: Domain,
    pub generated: GeneratedProblem,
}

impl Case {
    pub fn new(cfg: &GenConfig, seed: u64) -> Self {
        Case {
            domain: cfg.kind.domain(),
            generated: cfg.generate(seed),
        }
    }

    pub fn blocksworld(n: usize, seed: u64) -> Self {
        Case::new(
            &GenConfig {
                kind: DomainKind::Blocksworld,
                n,
                ..GenConfig::default()
            },
            seed,
        )
    }

    /// All disks start on one peg and move to another.
    pub fn hanoi_tower(d: usize, seed: u64) -> Self {
        Case::new(
            &GenConfig {
                kind: DomainKind::Hanoi,
                d,
                hanoi_goal: HanoiGoal::TowerTransfer,
                ..GenConfig::default()
            },
            seed,
        )
    }

    pub fn cooking(seed: u64) -> Self {
        Case::new(
            &GenConfig {
                kind: DomainKind::Cooking,
                ..GenConfig::default()
            },
            seed,
        )
    }

    pub fn goal(&self) -> GoalSpec {
        parse_structured_goal(&self.generated.goal_structured, &self.domain)
            .expect("generated goals parse")
    }
}
