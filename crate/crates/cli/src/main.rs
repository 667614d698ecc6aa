//! `groundplan` command-line entry point.

mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;

use groundplan::bench::{
    generate_suite, median_length, write_suite, DomainKind, GenConfig, HanoiGoal,
};
use groundplan::dcsgg::ExemplarFile;
use groundplan::eval::{
    evaluate_manifest, ground_with_goal, render_table, validate_plan, EmptyConvention, GoalStage,
    PipelineConfig, PlannerChoice,
};
use groundplan::goal::{
    llm_parse_goal, parse_structured_goal, Cassette, ChatTransport, HttpTransport, Recorder,
};
use groundplan::pddl::{parse_domain, parse_plan, parse_problem, Domain, Problem};
use groundplan::planner::{solve, Heuristic, SearchConfig, SearchMode, SolveStatus};
use groundplan::scene::{PhraseDetection, SceneObservation};

use config::CliConfig;

#[derive(Parser)]
#[command(
    name = "groundplan",
    version,
    about = "Ground detections into PDDL problems, plan and evaluate"
)]
struct Cli {
    /// JSON config file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base seed for generated benchmarks.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for `eval` and `genbench`.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// PDDL file utilities.
    Pddl {
        #[command(subcommand)]
        command: PddlCommand,
    },
    /// Build a problem and scene graph from detections, an exemplar and a goal.
    Ground(GroundArgs),
    /// Search for a plan.
    Plan(PlanArgs),
    /// Check a plan against a problem.
    Validate {
        domain: PathBuf,
        problem: PathBuf,
        plan: PathBuf,
    },
    /// Generate a benchmark suite with a manifest.
    Genbench(GenArgs),
    /// Run manifests through the full pipeline and score them.
    Eval(EvalArgs),
}

#[derive(Subcommand)]
enum PddlCommand {
    /// Parse a domain and optionally a problem against it.
    Check {
        domain: PathBuf,
        problem: Option<PathBuf>,
    },
}

#[derive(Args)]
struct GoalArgs {
    /// Parse goals with the structured grammar even if the config names an endpoint.
    #[arg(long, conflicts_with_all = ["llm_url", "cassette", "record"])]
    structured_only: bool,
    /// Chat-completions base URL; switches goal parsing to the endpoint.
    #[arg(long, requires = "llm_model")]
    llm_url: Option<String>,
    #[arg(long, requires = "llm_url")]
    llm_model: Option<String>,
    /// Replay endpoint responses from a recorded file instead of the network.
    #[arg(long, conflicts_with = "record")]
    cassette: Option<PathBuf>,
    /// Save endpoint exchanges to this file.
    #[arg(long)]
    record: Option<PathBuf>,
    /// Detection IoU threshold for merging duplicates.
    #[arg(long)]
    theta_match: Option<f64>,
}

#[derive(Args)]
struct GroundArgs {
    domain: PathBuf,
    /// Scene observation JSON.
    scene: PathBuf,
    /// Labelled exemplar JSON.
    exemplar: PathBuf,
    /// Goal text, or a file holding it.
    #[arg(long)]
    goal: String,
    /// Phrase detections answering goal-name queries.
    #[arg(long)]
    phrases: Option<PathBuf>,
    /// Problem name written into the PDDL.
    #[arg(long, default_value = "grounded")]
    name: String,
    #[command(flatten)]
    goal_args: GoalArgs,
}

#[derive(Args)]
struct SearchArgs {
    /// optimal | satisficing
    #[arg(long, value_parser = kebab::<SearchMode>)]
    mode: Option<SearchMode>,
    /// additive-cost | goal-count | blind
    #[arg(long, value_parser = kebab::<Heuristic>)]
    heuristic: Option<Heuristic>,
    #[arg(long)]
    node_limit: Option<u64>,
    /// Seconds.
    #[arg(long)]
    time_limit: Option<f64>,
}

impl SearchArgs {
    fn apply(&self, mut s: SearchConfig) -> SearchConfig {
        if let Some(m) = self.mode {
            s.mode = m;
        }
        if let Some(h) = self.heuristic {
            s.heuristic = h;
        }
        if let Some(n) = self.node_limit {
            s.node_limit = n;
        }
        if let Some(t) = self.time_limit {
            s.time_limit_s = t;
        }
        s
    }
}

#[derive(Args)]
struct PlanArgs {
    domain: PathBuf,
    problem: PathBuf,
    #[command(flatten)]
    search: SearchArgs,
}

#[derive(Args)]
struct GenArgs {
    /// blocksworld | hanoi | cooking
    kind: DomainKind,
    /// Number of problems; seeds run from --seed upwards.
    #[arg(long, default_value_t = 10)]
    seeds: u64,
    /// Blocks.
    #[arg(long)]
    n: Option<usize>,
    /// Disks.
    #[arg(long)]
    d: Option<usize>,
    /// Pegs.
    #[arg(long)]
    g: Option<usize>,
    /// random | tower-transfer
    #[arg(long, value_parser = kebab::<HanoiGoal>)]
    hanoi_goal: Option<HanoiGoal>,
    /// Hanoi with 5 or 6 disks by seed parity and tower-transfer goals.
    #[arg(long)]
    difficulty_preset: bool,
    /// Detection noise as a fraction of object size.
    #[arg(long)]
    sigma: Option<f64>,
    /// Record optimal plan lengths in meta.json.
    #[arg(long)]
    oracle: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(required = true)]
    manifests: Vec<PathBuf>,
    /// search | empty-plan
    #[arg(long, value_parser = kebab::<PlannerChoice>)]
    planner: Option<PlannerChoice>,
    /// Ratio value when a denominator is zero: one | zero
    #[arg(long, value_parser = kebab::<EmptyConvention>)]
    empty_convention: Option<EmptyConvention>,
    #[command(flatten)]
    search: SearchArgs,
    #[command(flatten)]
    goal_args: GoalArgs,
}

/// Parses a flag value with the type's JSON string representation.
fn kebab<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_str(&read(path)?).with_context(|| format!("parsing {}", path.display()))
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn to_json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializable") + "\n"
}

fn load_domain(path: &Path) -> Result<Domain> {
    parse_domain(&read(path)?).with_context(|| format!("in {}", path.display()))
}

fn load_problem(path: &Path, domain: &Domain) -> Result<Problem> {
    parse_problem(&read(path)?, domain).with_context(|| format!("in {}", path.display()))
}

/// Goal stage after applying the goal flags to the configured one.
fn goal_stage(cfg: &CliConfig, a: &GoalArgs) -> GoalStage {
    if a.structured_only {
        return GoalStage::Structured;
    }
    match (&a.llm_url, &a.llm_model, &cfg.goal) {
        (Some(url), Some(model), stage) => {
            let mut llm = match stage {
                GoalStage::Llm(l) => l.clone(),
                GoalStage::Structured => config::default_llm(),
            };
            llm.base_url = url.clone();
            llm.model = model.clone();
            GoalStage::Llm(llm)
        }
        _ => cfg.goal.clone(),
    }
}

/// Runs `f` with the chat transport the goal stage and flags call for.
fn with_transport<R>(
    stage: &GoalStage,
    a: &GoalArgs,
    f: impl FnOnce(Option<&dyn ChatTransport>) -> Result<R>,
) -> Result<R> {
    let GoalStage::Llm(llm) = stage else {
        return f(None);
    };
    if let Some(path) = &a.cassette {
        return f(Some(&Cassette::load(path)?));
    }
    let live = HttpTransport::new(llm)?;
    match &a.record {
        Some(path) => {
            let rec = Recorder::new(live);
            let r = f(Some(&rec));
            rec.save(path)?;
            r
        }
        None => f(Some(&live)),
    }
}

fn pddl_check(domain: &Path, problem: Option<&Path>) -> Result<()> {
    let d = load_domain(domain)?;
    println!(
        "domain {}: {} types, {} predicates ({} observed), {} actions, {} rules",
        d.name,
        d.types.entries().len(),
        d.predicates.len(),
        d.observed().count(),
        d.actions.len(),
        d.rules.len()
    );
    if let Some(p) = problem {
        let p = load_problem(p, &d)?;
        println!(
            "problem {}: {} objects, {} init atoms, {} goal literals",
            p.name,
            p.objects.len(),
            p.init.len(),
            p.goal.len()
        );
    }
    Ok(())
}

fn ground(cfg: &CliConfig, out: &Path, a: &GroundArgs) -> Result<()> {
    let domain = load_domain(&a.domain)?;
    let scene: SceneObservation = read_json(&a.scene)?;
    let exemplar: ExemplarFile = read_json(&a.exemplar)?;
    let phrases: Vec<PhraseDetection> = match &a.phrases {
        Some(p) => read_json(p)?,
        None => Vec::new(),
    };
    let goal_text = if Path::new(&a.goal).is_file() {
        read(Path::new(&a.goal))?
    } else {
        a.goal.clone()
    };
    let theta = a.goal_args.theta_match.unwrap_or(cfg.theta_match);
    let stage = goal_stage(cfg, &a.goal_args);
    let spec = with_transport(&stage, &a.goal_args, |t| match (&stage, t) {
        (GoalStage::Llm(llm), Some(t)) => Ok(llm_parse_goal(&goal_text, &domain, llm, t)?),
        _ => Ok(parse_structured_goal(&goal_text, &domain)?),
    })?;
    let g = ground_with_goal(&domain, &scene, &exemplar, &spec, &phrases, theta, &a.name)?;
    let problem_path = out.join("problem.pddl");
    let graph_path = out.join("graph.json");
    write(
        &problem_path,
        &groundplan::pddl::serialize_problem(&g.problem),
    )?;
    write(&graph_path, &to_json(&g.graph))?;
    println!(
        "{} objects, {} init atoms, {} goal literals",
        g.problem.objects.len(),
        g.problem.init.len(),
        g.problem.goal.len()
    );
    println!(
        "wrote {} and {}",
        problem_path.display(),
        graph_path.display()
    );
    Ok(())
}

fn plan(cfg: &CliConfig, out: &Path, a: &PlanArgs) -> Result<bool> {
    let domain = load_domain(&a.domain)?;
    let problem = load_problem(&a.problem, &domain)?;
    let search = a.search.apply(cfg.search.clone().unwrap_or_default());
    let r = solve(&domain, &problem, &search)?;
    let result_path = out.join("result.json");
    let plan_path = out.join("plan.txt");
    write(&result_path, &to_json(&r))?;
    let status = serde_json::to_value(r.status).expect("serializable");
    match &r.plan {
        Some(p) => {
            write(&plan_path, &p.to_string())?;
            print!("{p}");
            println!(
                "; {} steps, {} nodes expanded, {:.1} ms",
                p.len(),
                r.expanded_nodes,
                r.wall_time_ms
            );
            println!(
                "wrote {} and {}",
                plan_path.display(),
                result_path.display()
            );
        }
        None => {
            println!(
                "no plan: {} after {} nodes expanded, {:.1} ms",
                status.as_str().unwrap_or_default(),
                r.expanded_nodes,
                r.wall_time_ms
            );
            println!("wrote {}", result_path.display());
        }
    }
    Ok(r.status == SolveStatus::Solved)
}

fn validate(domain: &Path, problem: &Path, plan: &Path) -> Result<bool> {
    let d = load_domain(domain)?;
    let p = load_problem(problem, &d)?;
    let plan = parse_plan(&read(plan)?).with_context(|| format!("in {}", plan.display()))?;
    let v = validate_plan(&d, &p.objects, &p.init, &p.goal, &plan);
    if v.ok {
        println!("valid: {} steps reach the goal", plan.len());
        return Ok(true);
    }
    let reason = serde_json::to_value(v.reason).expect("serializable");
    let reason = reason.as_str().unwrap_or_default();
    match v.step {
        Some(i) => println!("invalid: {reason} at step {} {}", i + 1, plan.steps[i]),
        None => println!("invalid: {reason}"),
    }
    Ok(false)
}

fn genbench(cfg: &CliConfig, out: &Path, a: &GenArgs) -> Result<()> {
    let defaults = GenConfig::default();
    let gen = GenConfig {
        kind: a.kind,
        n: a.n.unwrap_or(defaults.n),
        d: a.d.unwrap_or(defaults.d),
        g: a.g.unwrap_or(defaults.g),
        hanoi_goal: a.hanoi_goal.unwrap_or(defaults.hanoi_goal),
        difficulty_preset: a.difficulty_preset,
        sigma: a.sigma.unwrap_or(cfg.sigma),
    };
    let seeds: Vec<u64> = (cfg.seed..cfg.seed + a.seeds).collect();
    let problems = generate_suite(&gen, &seeds, a.oracle)?;
    let manifest = write_suite(out, a.kind, &problems)?;
    println!(
        "{} {} problems, sigma {}",
        problems.len(),
        a.kind.name(),
        gen.sigma
    );
    let uncertified = problems
        .iter()
        .filter(|p| p.meta.exemplar_errors > 0)
        .count();
    if uncertified > 0 {
        println!("{uncertified} exemplars misclassify part of their universe");
    }
    if let Some(m) = median_length(&problems) {
        println!("median optimal length {m}");
    }
    println!("wrote {}", manifest.display());
    Ok(())
}

fn eval(cfg: &CliConfig, out: &Path, a: &EvalArgs) -> Result<()> {
    let defaults = PipelineConfig::default();
    let pipeline = PipelineConfig {
        theta_match: a.goal_args.theta_match.unwrap_or(cfg.theta_match),
        search: a
            .search
            .apply(cfg.search.clone().unwrap_or(defaults.search)),
        planner: a.planner.unwrap_or(cfg.planner),
        empty_convention: a.empty_convention.unwrap_or(cfg.empty_convention),
        goal: goal_stage(cfg, &a.goal_args),
    };
    let report = with_transport(&pipeline.goal, &a.goal_args, |t| {
        Ok(evaluate_manifest(&a.manifests, &pipeline, t)?)
    })?;
    print!("{}", render_table(&report));
    let path = out.join("report.json");
    write(&path, &to_json(&report))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    let mut cfg = match &cli.config {
        Some(p) => CliConfig::load(p)?,
        None => CliConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(j) = cli.jobs {
        cfg.jobs = Some(j);
    }
    if let Some(o) = cli.out {
        cfg.out_dir = o;
    }
    if let Some(j) = cfg.jobs {
        if j == 0 {
            bail!("--jobs must be at least 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global()
            .context("starting worker pool")?;
    }
    let out = cfg.out_dir.clone();
    match &cli.command {
        Command::Pddl {
            command: PddlCommand::Check { domain, problem },
        } => pddl_check(domain, problem.as_deref())?,
        Command::Ground(a) => ground(&cfg, &out, a)?,
        Command::Plan(a) => return plan(&cfg, &out, a),
        Command::Validate {
            domain,
            problem,
            plan,
        } => return validate(domain, problem, plan),
        Command::Genbench(a) => genbench(&cfg, &out, a)?,
        Command::Eval(a) => eval(&cfg, &out, a)?,
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
