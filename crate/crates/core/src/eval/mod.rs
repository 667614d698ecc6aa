//! Plan validation, triplet precision/recall and the suite harness.

mod suite;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::pddl::{Domain, GroundAtom, Literal, Plan};
use crate::planner::{axiom_closure, TypeEnv};

pub use suite::{
    evaluate_manifest, evaluate_suite, ground_with_goal, load_manifest, render_table, EvalError,
    GoalStage, Manifest, ManifestEntry, PipelineConfig, PlannerChoice, ProblemRecord, SuiteReport,
    SuiteRow,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FailReason {
    PreconditionUnsatisfied,
    UnknownAction,
    GoalUnsatisfied,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub ok: bool,
    /// Index of the failing step; `None` when ok or when only the goal fails.
    pub step: Option<usize>,
    pub reason: Option<FailReason>,
}

impl Verdict {
    fn fail(step: Option<usize>, reason: FailReason) -> Self {
        Verdict {
            ok: false,
            step,
            reason: Some(reason),
        }
    }
}

/// Base atoms plus their derived closure.
fn closed(base: &BTreeSet<GroundAtom>, domain: &Domain, env: &TypeEnv) -> BTreeSet<GroundAtom> {
    let mut all = base.clone();
    all.extend(axiom_closure(base, &domain.rules, env));
    all
}

fn holds(lits: &[Literal], state: &BTreeSet<GroundAtom>) -> bool {
    lits.iter().all(|l| state.contains(&l.atom) != l.negated)
}

/// Executes `plan` from `init` and checks `goal` at the end. A step naming
/// an unknown action, the wrong number of arguments or an argument that is
/// not a type-compatible object is reported as an unknown action.
pub fn validate_plan(
    domain: &Domain,
    objects: &[(String, String)],
    init: &BTreeSet<GroundAtom>,
    goal: &[Literal],
    plan: &Plan,
) -> Verdict {
    let env = TypeEnv::new(&domain.types, objects);
    let mut base = init.clone();
    for (i, step) in plan.steps.iter().enumerate() {
        let Some(schema) = domain.action(&step.action) else {
            return Verdict::fail(Some(i), FailReason::UnknownAction);
        };
        if schema.params.len() != step.args.len()
            || !schema
                .params
                .iter()
                .zip(&step.args)
                .all(|(p, a)| env.objects().iter().any(|(n, _)| n == a) && env.has_type(a, &p.ty))
        {
            return Verdict::fail(Some(i), FailReason::UnknownAction);
        }
        let bind = |a: &GroundAtom| GroundAtom {
            predicate: a.predicate.clone(),
            args: a
                .args
                .iter()
                .map(|v| {
                    let k = schema
                        .params
                        .iter()
                        .position(|p| p.name == *v)
                        .expect("parsed schema");
                    step.args[k].clone()
                })
                .collect(),
        };
        let pre: Vec<Literal> = schema
            .precondition
            .iter()
            .map(|l| Literal {
                negated: l.negated,
                atom: bind(&l.atom),
            })
            .collect();
        if !holds(&pre, &closed(&base, domain, &env)) {
            return Verdict::fail(Some(i), FailReason::PreconditionUnsatisfied);
        }
        for d in schema.del_effects() {
            base.remove(&bind(d));
        }
        for a in schema.add_effects() {
            base.insert(bind(a));
        }
    }
    if !holds(goal, &closed(&base, domain, &env)) {
        return Verdict::fail(None, FailReason::GoalUnsatisfied);
    }
    Verdict {
        ok: true,
        step: None,
        reason: None,
    }
}

/// Value of a ratio whose denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmptyConvention {
    #[default]
    One,
    Zero,
}

impl EmptyConvention {
    fn ratio(self, num: usize, den: usize) -> f64 {
        if den == 0 {
            match self {
                EmptyConvention::One => 1.0,
                EmptyConvention::Zero => 0.0,
            }
        } else {
            num as f64 / den as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GroundingScore {
    pub precision: f64,
    pub recall: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl GroundingScore {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize, empty: EmptyConvention) -> Self {
        GroundingScore {
            precision: empty.ratio(tp, tp + fp),
            recall: empty.ratio(tp, tp + fn_),
            tp,
            fp,
            fn_,
        }
    }
}

/// Exact-match comparison of the atoms over `observed` predicates.
pub fn triplet_pr(
    predicted: &BTreeSet<GroundAtom>,
    truth: &BTreeSet<GroundAtom>,
    observed: &BTreeSet<String>,
    empty: EmptyConvention,
) -> GroundingScore {
    let keep = |a: &&GroundAtom| observed.contains(&a.predicate);
    let p: BTreeSet<&GroundAtom> = predicted.iter().filter(keep).collect();
    let t: BTreeSet<&GroundAtom> = truth.iter().filter(keep).collect();
    let tp = p.intersection(&t).count();
    GroundingScore::from_counts(tp, p.len() - tp, t.len() - tp, empty)
}

/// Pooled counts over all scores.
pub fn micro_average(scores: &[GroundingScore], empty: EmptyConvention) -> GroundingScore {
    let (tp, fp, fn_) = scores
        .iter()
        .fold((0, 0, 0), |(a, b, c), s| (a + s.tp, b + s.fp, c + s.fn_));
    GroundingScore::from_counts(tp, fp, fn_, empty)
}

/// Mean of per-problem precision and recall; 1.0 for an empty list.
pub fn macro_average(scores: &[GroundingScore]) -> (f64, f64) {
    if scores.is_empty() {
        return (1.0, 1.0);
    }
    let n = scores.len() as f64;
    (
        scores.iter().map(|s| s.precision).sum::<f64>() / n,
        scores.iter().map(|s| s.recall).sum::<f64>() / n,
    )
}
