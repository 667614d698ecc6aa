use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{
    macro_average, micro_average, triplet_pr, validate_plan, EmptyConvention, GroundingScore,
};
use crate::dcsgg::{ground_scene, Classifier, DcsggError, ExemplarFile, Grounded};
use crate::goal::{
    llm_parse_goal, parse_structured_goal, resolve_goal, ChatTransport, GoalError, GoalSpec,
    LlmConfig, ScriptedPhrases,
};
use crate::pddl::{
    parse_domain, parse_problem, serialize_problem, Domain, GroundAtom, PddlError, Plan, Problem,
};
use crate::planner::{solve, SearchConfig, SolveStatus};
use crate::scene::{PhraseDetection, SceneObservation, DEFAULT_THETA_MATCH};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{path}: {msg}")]
    Io { path: PathBuf, msg: String },
    #[error("{path}: {source}")]
    Pddl { path: PathBuf, source: PddlError },
    #[error(transparent)]
    Goal(#[from] GoalError),
    #[error(transparent)]
    Dcsgg(#[from] DcsggError),
}

/// Paths are relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub scene: PathBuf,
    pub exemplar: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub goal_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub goal_structured: Option<String>,
    pub ground_truth_problem: PathBuf,
    /// Phrase detections answering goal-name queries.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phrases: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub domain_file: PathBuf,
    pub problems: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GoalStage {
    /// Only `goal_structured` is used.
    Structured,
    /// `goal_text` goes through the chat endpoint; entries without text fall
    /// back to `goal_structured`.
    Llm(LlmConfig),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlannerChoice {
    Search,
    /// Always returns the empty plan.
    EmptyPlan,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub theta_match: f64,
    pub search: SearchConfig,
    pub planner: PlannerChoice,
    pub empty_convention: EmptyConvention,
    pub goal: GoalStage,
}

/// Per-problem planner budget for suite runs. Noisy predictions can yield
/// large unsolvable tasks; these count as planning failures.
pub const SUITE_NODE_LIMIT: u64 = 200_000;
pub const SUITE_TIME_LIMIT_S: f64 = 10.0;

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            theta_match: DEFAULT_THETA_MATCH,
            search: SearchConfig {
                node_limit: SUITE_NODE_LIMIT,
                time_limit_s: SUITE_TIME_LIMIT_S,
                ..SearchConfig::default()
            },
            planner: PlannerChoice::Search,
            empty_convention: EmptyConvention::One,
            goal: GoalStage::Structured,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemRecord {
    pub id: String,
    pub grounding: GroundingScore,
    pub problem_valid: bool,
    pub plan_found: bool,
    pub plan_valid: bool,
    pub success: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan_length: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteRow {
    pub domain: String,
    pub n: usize,
    /// Pooled over problems.
    pub precision: f64,
    pub recall: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub problem_validity: f64,
    pub plan_validity: f64,
    pub success: f64,
    pub problems: Vec<ProblemRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub averaging: String,
    pub empty_convention: EmptyConvention,
    pub rows: Vec<SuiteRow>,
}

fn read(path: &Path) -> Result<String, EvalError> {
    std::fs::read_to_string(path).map_err(|e| EvalError::Io {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, EvalError> {
    serde_json::from_str(&read(path)?).map_err(|e| EvalError::Io {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })
}

pub fn load_manifest(path: &Path) -> Result<Manifest, EvalError> {
    read_json(path)
}

/// One manifest entry with every referenced file loaded.
struct Loaded {
    id: String,
    scene: SceneObservation,
    exemplar: ExemplarFile,
    goal_text: Option<String>,
    goal_structured: Option<String>,
    truth: Problem,
    phrases: Vec<PhraseDetection>,
}

fn load_entry(
    i: usize,
    e: &ManifestEntry,
    dir: &Path,
    domain: &Domain,
) -> Result<Loaded, EvalError> {
    let gt_path = dir.join(&e.ground_truth_problem);
    let truth = parse_problem(&read(&gt_path)?, domain).map_err(|source| EvalError::Pddl {
        path: gt_path,
        source,
    })?;
    Ok(Loaded {
        id: e.id.clone().unwrap_or_else(|| format!("p{i:04}")),
        scene: read_json(&dir.join(&e.scene))?,
        exemplar: read_json(&dir.join(&e.exemplar))?,
        goal_text: e.goal_text.clone(),
        goal_structured: e.goal_structured.clone(),
        truth,
        phrases: match &e.phrases {
            Some(p) => read_json(&dir.join(p))?,
            None => Vec::new(),
        },
    })
}

/// Goal parse, goal-name resolution, then init grounding with the resolved
/// goal attached. The goal is fixed before any predicate is classified.
pub fn ground_with_goal(
    domain: &Domain,
    scene: &SceneObservation,
    exemplar: &ExemplarFile,
    spec: &GoalSpec,
    phrases: &[PhraseDetection],
    theta_match: f64,
    name: &str,
) -> Result<Grounded, EvalError> {
    let grounder = ScriptedPhrases(phrases.to_vec());
    let (goal, augmented) = resolve_goal(spec, scene, domain, theta_match, &grounder)?;
    let classifier = Classifier::new(&exemplar.load(domain, theta_match)?, domain)?;
    Ok(ground_scene(
        &augmented,
        domain,
        &classifier,
        &goal,
        theta_match,
        name,
    )?)
}

fn parse_goal(
    l: &Loaded,
    domain: &Domain,
    cfg: &PipelineConfig,
    transport: Option<&dyn ChatTransport>,
) -> Result<GoalSpec, GoalError> {
    if let (GoalStage::Llm(llm), Some(text)) = (&cfg.goal, &l.goal_text) {
        let t = transport.ok_or_else(|| GoalError::Config("no chat transport".into()))?;
        return llm_parse_goal(text, domain, llm, t);
    }
    match &l.goal_structured {
        Some(s) => parse_structured_goal(s, domain),
        None => Err(GoalError::Config(
            "structured-only mode needs goal_structured".into(),
        )),
    }
}

fn run_one(
    l: &Loaded,
    domain: &Domain,
    cfg: &PipelineConfig,
    transport: Option<&dyn ChatTransport>,
) -> ProblemRecord {
    let observed = domain.observed_names();
    let mut rec = ProblemRecord {
        id: l.id.clone(),
        grounding: GroundingScore::default(),
        problem_valid: false,
        plan_found: false,
        plan_valid: false,
        success: false,
        plan_length: None,
        error: None,
    };
    let score = |init: &BTreeSet<GroundAtom>| {
        triplet_pr(init, &l.truth.init, &observed, cfg.empty_convention)
    };
    rec.grounding = score(&BTreeSet::new());

    let grounded = parse_goal(l, domain, cfg, transport)
        .map_err(EvalError::from)
        .and_then(|spec| {
            ground_with_goal(
                domain,
                &l.scene,
                &l.exemplar,
                &spec,
                &l.phrases,
                cfg.theta_match,
                &l.id,
            )
        });
    let grounded = match grounded {
        Ok(g) => g,
        Err(e) => {
            rec.error = Some(e.to_string());
            // Init is still scored when only the goal stage failed.
            if matches!(e, EvalError::Goal(_)) {
                if let Ok(g) = ground_with_goal(
                    domain,
                    &l.scene,
                    &l.exemplar,
                    &GoalSpec {
                        conjuncts: Vec::new(),
                        source: crate::goal::GoalSource::Structured,
                    },
                    &l.phrases,
                    cfg.theta_match,
                    &l.id,
                ) {
                    rec.grounding = score(&g.problem.init);
                }
            }
            return rec;
        }
    };
    let predicted = &grounded.problem;
    rec.grounding = score(&predicted.init);
    rec.problem_valid = parse_problem(&serialize_problem(predicted), domain)
        .map(|p| p == *predicted)
        .unwrap_or(false);

    let plan = match cfg.planner {
        PlannerChoice::EmptyPlan => Plan::default(),
        PlannerChoice::Search => match solve(domain, predicted, &cfg.search) {
            Ok(r) if r.status == SolveStatus::Solved => r.plan.unwrap_or_default(),
            Ok(r) => {
                rec.error = Some(format!("planner: {:?}", r.status));
                return rec;
            }
            Err(e) => {
                rec.error = Some(e.to_string());
                return rec;
            }
        },
    };
    rec.plan_found = true;
    rec.plan_length = Some(plan.len());
    rec.plan_valid = validate_plan(
        domain,
        &predicted.objects,
        &predicted.init,
        &predicted.goal,
        &plan,
    )
    .ok;
    rec.success = validate_plan(
        domain,
        &l.truth.objects,
        &l.truth.init,
        &l.truth.goal,
        &plan,
    )
    .ok;
    rec
}

fn ratio(records: &[ProblemRecord], f: impl Fn(&ProblemRecord) -> bool) -> f64 {
    if records.is_empty() {
        return 0.0;
    }
    records.iter().filter(|r| f(r)).count() as f64 / records.len() as f64
}

/// Runs every manifest entry through goal parsing, grounding, planning and
/// scoring. Unreadable files abort; stage failures only zero the metrics of
/// their problem. Entries run in parallel on the current rayon pool.
pub fn evaluate_suite(
    manifest: &Manifest,
    base_dir: &Path,
    cfg: &PipelineConfig,
    transport: Option<&dyn ChatTransport>,
) -> Result<SuiteRow, EvalError> {
    let domain_path = base_dir.join(&manifest.domain_file);
    let domain = parse_domain(&read(&domain_path)?).map_err(|source| EvalError::Pddl {
        path: domain_path,
        source,
    })?;
    let loaded: Vec<Loaded> = manifest
        .problems
        .iter()
        .enumerate()
        .map(|(i, e)| load_entry(i, e, base_dir, &domain))
        .collect::<Result<_, _>>()?;
    let records: Vec<ProblemRecord> = loaded
        .par_iter()
        .map(|l| run_one(l, &domain, cfg, transport))
        .collect();
    let scores: Vec<GroundingScore> = records.iter().map(|r| r.grounding).collect();
    let micro = micro_average(&scores, cfg.empty_convention);
    let (macro_p, macro_r) = macro_average(&scores);
    Ok(SuiteRow {
        domain: domain.name.clone(),
        n: records.len(),
        precision: micro.precision,
        recall: micro.recall,
        macro_precision: macro_p,
        macro_recall: macro_r,
        problem_validity: ratio(&records, |r| r.problem_valid),
        plan_validity: ratio(&records, |r| r.plan_valid),
        success: ratio(&records, |r| r.success),
        problems: records,
    })
}

/// Loads and evaluates each manifest file, one report row per manifest.
pub fn evaluate_manifest(
    paths: &[PathBuf],
    cfg: &PipelineConfig,
    transport: Option<&dyn ChatTransport>,
) -> Result<SuiteReport, EvalError> {
    let mut rows = Vec::new();
    for p in paths {
        let m = load_manifest(p)?;
        let dir = p.parent().unwrap_or(Path::new("."));
        rows.push(evaluate_suite(&m, dir, cfg, transport)?);
    }
    Ok(SuiteReport {
        averaging: "micro".to_string(),
        empty_convention: cfg.empty_convention,
        rows,
    })
}

/// Fixed-width table with grounding P|R, validity ratios and success.
pub fn render_table(report: &SuiteReport) -> String {
    let mut s = format!(
        "# grounding P|R {}-averaged over problems (macro in parentheses)\n",
        report.averaging
    );
    s += &format!(
        "{:<14} {:>5}  {:>9}  {:>13}  {:>7}  {:>5}  {:>7}\n",
        "domain", "n", "P|R", "macro P|R", "problem", "plan", "success"
    );
    for r in &report.rows {
        s += &format!(
            "{:<14} {:>5}  {:>4.2}|{:<4.2}  ({:>4.2}|{:<4.2})  {:>7.2}  {:>5.2}  {:>7.2}\n",
            r.domain,
            r.n,
            r.precision,
            r.recall,
            r.macro_precision,
            r.macro_recall,
            r.problem_validity,
            r.plan_validity,
            r.success
        );
    }
    s
}
