//! Synthetic benchmark suites: seeded scene layouts consistent with their
//! ground-truth problems, certified one-shot exemplars and manifests.

mod blocksworld;
mod cooking;
mod hanoi;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dcsgg::{
    enumerate_candidates, Candidate, Classifier, Exemplar, ExemplarFile, PredicateCandidates,
};
use crate::eval::{Manifest, ManifestEntry};
use crate::pddl::{parse_domain, serialize_problem, Domain, GroundAtom, Literal, Problem};
use crate::planner::{solve, SearchConfig, SolveStatus};
use crate::scene::{
    assign_names, BBox, ClassDetection, ObjectSet, PendingObject, PhraseDetection, SceneObject,
    SceneObservation,
};

pub use blocksworld::gen_blocksworld;
pub use cooking::gen_cooking;
pub use hanoi::{gen_hanoi, HanoiGoal};

pub const IMAGE_WIDTH: f64 = 1280.0;
pub const IMAGE_HEIGHT: f64 = 960.0;

pub const BLOCKSWORLD_PDDL: &str = include_str!("../../domains/blocksworld.pddl");
pub const HANOI_PDDL: &str = include_str!("../../domains/hanoi.pddl");
pub const COOKING_PDDL: &str = include_str!("../../domains/cooking.pddl");

const CLASS_SCORE: f64 = 0.9;
const PHRASE_SCORE: f64 = 0.8;
/// Random exemplar configurations tried before settling for the best one.
const EXEMPLAR_ATTEMPTS: usize = 4000;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid generator config: {0}")]
    Config(String),
    #[error("{path}: {msg}")]
    Io { path: PathBuf, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DomainKind {
    Blocksworld,
    Hanoi,
    Cooking,
}

impl DomainKind {
    pub fn pddl(self) -> &'static str {
        match self {
            DomainKind::Blocksworld => BLOCKSWORLD_PDDL,
            DomainKind::Hanoi => HANOI_PDDL,
            DomainKind::Cooking => COOKING_PDDL,
        }
    }

    pub fn domain(self) -> Domain {
        parse_domain(self.pddl()).expect("bundled domains parse")
    }

    pub fn name(self) -> &'static str {
        match self {
            DomainKind::Blocksworld => "blocksworld",
            DomainKind::Hanoi => "hanoi",
            DomainKind::Cooking => "cooking",
        }
    }
}

impl std::str::FromStr for DomainKind {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_lowercase().as_str() {
            "blocksworld" => Ok(DomainKind::Blocksworld),
            "hanoi" => Ok(DomainKind::Hanoi),
            "cooking" => Ok(DomainKind::Cooking),
            other => Err(BenchError::Config(format!("unknown domain kind '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub kind: DomainKind,
    /// Blocks.
    pub n: usize,
    /// Disks; the difficulty preset ignores it.
    pub d: usize,
    /// Pegs.
    pub g: usize,
    pub hanoi_goal: HanoiGoal,
    /// Hanoi only: disks alternate between 5 and 6 by seed parity and the
    /// goal is a tower transfer.
    pub difficulty_preset: bool,
    pub sigma: f64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            kind: DomainKind::Blocksworld,
            n: 5,
            d: 3,
            g: 3,
            hanoi_goal: HanoiGoal::Random,
            difficulty_preset: false,
            sigma: 0.0,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<(), BenchError> {
        let bad = |m: &str| Err(BenchError::Config(m.to_string()));
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return bad("sigma must be a non-negative number");
        }
        match self.kind {
            DomainKind::Blocksworld if !(2..=blocksworld::MAX_BLOCKS).contains(&self.n) => {
                bad("blocks must be between 2 and 15")
            }
            DomainKind::Hanoi
                if !self.difficulty_preset && !(1..=hanoi::MAX_DISKS).contains(&self.d) =>
            {
                bad("disks must be between 1 and 12")
            }
            DomainKind::Hanoi if !(2..=hanoi::MAX_PEGS).contains(&self.g) => {
                bad("pegs must be between 2 and 4")
            }
            _ => Ok(()),
        }
    }

    /// One problem per seed, perturbed by `sigma`.
    pub fn generate(&self, seed: u64) -> GeneratedProblem {
        let p = match self.kind {
            DomainKind::Blocksworld => gen_blocksworld(self.n, seed),
            DomainKind::Hanoi if self.difficulty_preset => gen_hanoi(
                if seed.is_multiple_of(2) { 5 } else { 6 },
                3,
                HanoiGoal::TowerTransfer,
                seed,
            ),
            DomainKind::Hanoi => gen_hanoi(self.d, self.g, self.hanoi_goal, seed),
            DomainKind::Cooking => gen_cooking(seed),
        };
        perturb(&p, self.sigma, seed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenMeta {
    pub seed: u64,
    pub sigma: f64,
    pub objects: usize,
    /// Universe points the exemplar misclassifies; 0 when certified.
    pub exemplar_errors: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimal_length: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedProblem {
    pub kind: DomainKind,
    /// Class detections only.
    pub scene: SceneObservation,
    /// Answers to goal-name queries.
    pub phrases: Vec<PhraseDetection>,
    pub exemplar: ExemplarFile,
    pub instruction: String,
    pub goal_structured: String,
    pub truth: Problem,
    pub meta: GenMeta,
}

/// An object of a generated layout before naming.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Placed {
    pub ty: String,
    pub query: String,
    pub bbox: BBox,
    /// Referent name used when a goal mentions the object.
    pub phrase: Option<String>,
}

/// Atom over indices into a layout.
pub(crate) type IxAtom = (&'static str, Vec<usize>);

pub(crate) fn atom_names(a: &IxAtom, names: &[String]) -> GroundAtom {
    GroundAtom::new(a.0, a.1.iter().map(|&i| names[i].clone()))
}

/// Names the objects the way scene merging will: phrase names for
/// `mentioned` objects, raster-order type names for the rest.
pub(crate) fn realize_names(objs: &[Placed], mentioned: &BTreeSet<usize>) -> Vec<String> {
    let pending = objs
        .iter()
        .enumerate()
        .map(|(i, o)| PendingObject {
            ty: o.ty.clone(),
            bbox: o.bbox,
            name: if mentioned.contains(&i) {
                o.phrase.clone()
            } else {
                None
            },
        })
        .collect();
    let set = assign_names(pending).expect("generated names are valid and distinct");
    objs.iter()
        .map(|o| {
            set.objects
                .iter()
                .find(|s| s.bbox == o.bbox && s.ty == o.ty)
                .expect("generated boxes are distinct")
                .name
                .clone()
        })
        .collect()
}

pub(crate) fn observation(objs: &[Placed]) -> SceneObservation {
    SceneObservation {
        image_width: IMAGE_WIDTH,
        image_height: IMAGE_HEIGHT,
        class_detections: objs
            .iter()
            .map(|o| ClassDetection {
                query: o.query.clone(),
                bbox: o.bbox,
                score: CLASS_SCORE,
                suggested_type: o.ty.clone(),
            })
            .collect(),
        phrase_detections: Vec::new(),
    }
}

pub(crate) fn phrases(objs: &[Placed], mentioned: &BTreeSet<usize>) -> Vec<PhraseDetection> {
    mentioned
        .iter()
        .filter_map(|&i| {
            let o = &objs[i];
            o.phrase.as_ref().map(|name| PhraseDetection {
                query: format!("the {}", name.replace('_', " ")),
                referent_name: name.clone(),
                bbox: o.bbox,
                score: PHRASE_SCORE,
                suggested_type: Some(o.ty.clone()),
            })
        })
        .collect()
}

/// Labeled features keyed by predicate and rounded feature.
pub(crate) type Universe = BTreeMap<(String, Vec<i64>), (bool, Vec<f64>)>;

pub(crate) fn feature_key(f: &[f64]) -> Vec<i64> {
    f.iter().map(|x| (x * 1e9).round() as i64).collect()
}

/// Adds the candidates of a configuration to `u`. Layout names are
/// placeholders; only features and labels matter.
pub(crate) fn add_to_universe(
    u: &mut Universe,
    domain: &Domain,
    objs: &[Placed],
    atoms: &BTreeSet<IxAtom>,
) {
    let names: Vec<String> = (0..objs.len()).map(|i| format!("o{i}")).collect();
    let set = ObjectSet {
        objects: objs
            .iter()
            .zip(&names)
            .map(|(o, n)| SceneObject {
                name: n.clone(),
                ty: o.ty.clone(),
                bbox: o.bbox,
            })
            .collect(),
    };
    let truth: BTreeSet<GroundAtom> = atoms.iter().map(|a| atom_names(a, &names)).collect();
    for pc in enumerate_candidates(&set, domain, IMAGE_WIDTH, IMAGE_HEIGHT) {
        for c in &pc.candidates {
            let label = truth.contains(&pc.atom(c));
            let prev = u.insert(
                (pc.predicate.clone(), feature_key(&c.feature)),
                (label, c.feature.clone()),
            );
            debug_assert!(prev.is_none_or(|p| p.0 == label), "inseparable layout");
        }
    }
}

/// Number of universe points the exemplar's nearest-neighbour rule gets
/// wrong; `usize::MAX` when the exemplar is uninformative for a predicate
/// that has universe points.
pub(crate) fn exemplar_errors(domain: &Domain, ex: &Exemplar, u: &Universe) -> usize {
    let Ok(clf) = Classifier::new(ex, domain) else {
        return usize::MAX;
    };
    let mut by_pred: HashMap<&str, (Vec<Candidate>, Vec<bool>)> = HashMap::new();
    for ((p, _), (label, feature)) in u {
        let e = by_pred.entry(p).or_default();
        e.0.push(Candidate {
            subject: String::new(),
            object: String::new(),
            feature: feature.clone(),
        });
        e.1.push(*label);
    }
    let mut errors = 0;
    for (p, (cands, labels)) in by_pred {
        let unary = domain.predicate(p).is_some_and(|q| q.arity() == 1);
        let pc = PredicateCandidates {
            predicate: p.to_string(),
            unary,
            candidates: cands,
        };
        match clf.classify(&pc) {
            Ok(got) => errors += got.iter().zip(&labels).filter(|(a, b)| a != b).count(),
            Err(_) => return usize::MAX,
        }
    }
    errors
}

/// Draws configurations with `draw` until one classifies the whole universe
/// correctly, keeping the best one seen.
pub(crate) fn find_exemplar(
    domain: &Domain,
    u: &Universe,
    rng: &mut ChaCha8Rng,
    mut draw: impl FnMut(&mut ChaCha8Rng) -> (Vec<Placed>, BTreeSet<IxAtom>),
) -> (ExemplarFile, usize) {
    let mut best: Option<(ExemplarFile, usize)> = None;
    for _ in 0..EXEMPLAR_ATTEMPTS {
        let (objs, atoms) = draw(rng);
        let names = realize_names(&objs, &BTreeSet::new());
        let true_atoms: BTreeSet<GroundAtom> =
            atoms.iter().map(|a| atom_names(a, &names)).collect();
        let ex = Exemplar {
            image_width: IMAGE_WIDTH,
            image_height: IMAGE_HEIGHT,
            objects: ObjectSet {
                objects: objs
                    .iter()
                    .zip(&names)
                    .map(|(o, n)| SceneObject {
                        name: n.clone(),
                        ty: o.ty.clone(),
                        bbox: o.bbox,
                    })
                    .collect(),
            },
            true_atoms: true_atoms.clone(),
        };
        let e = exemplar_errors(domain, &ex, u);
        if best.as_ref().is_none_or(|(_, b)| e < *b) {
            best = Some((ExemplarFile::new(observation(&objs), &true_atoms), e));
        }
        if e == 0 {
            break;
        }
    }
    best.expect("at least one attempt")
}

/// Assembles the named problem from an indexed layout.
#[allow(clippy::too_many_arguments)]
pub(crate) fn assemble(
    kind: DomainKind,
    domain: &Domain,
    seed: u64,
    objs: &[Placed],
    init: &BTreeSet<IxAtom>,
    goal: &[(bool, IxAtom)],
    instruction: impl Fn(&[String]) -> String,
    exemplar: (ExemplarFile, usize),
) -> GeneratedProblem {
    let mentioned: BTreeSet<usize> = goal
        .iter()
        .flat_map(|(_, a)| a.1.iter().copied())
        .filter(|&i| objs[i].phrase.is_some())
        .collect();
    let names = realize_names(objs, &mentioned);
    let goal_lits: Vec<Literal> = goal
        .iter()
        .map(|(neg, a)| Literal {
            negated: *neg,
            atom: atom_names(a, &names),
        })
        .collect();
    let truth = Problem::new(
        format!("{}-{seed}", kind.name()),
        domain,
        objs.iter()
            .zip(&names)
            .map(|(o, n)| (n.clone(), o.ty.clone()))
            .collect(),
        init.iter().map(|a| atom_names(a, &names)).collect(),
        goal_lits.clone(),
    )
    .expect("generated problems are well-typed");
    let goal_structured = goal_lits
        .iter()
        .map(|l| l.to_string())
        .collect::<Vec<_>>()
        .join(" AND ");
    GeneratedProblem {
        kind,
        scene: observation(objs),
        phrases: phrases(objs, &mentioned),
        exemplar: exemplar.0,
        instruction: instruction(&names),
        goal_structured,
        truth,
        meta: GenMeta {
            seed,
            sigma: 0.0,
            objects: objs.len(),
            exemplar_errors: exemplar.1,
            optimal_length: None,
        },
    }
}

pub(crate) fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn jitter(b: &BBox, sigma: f64, rng: &mut ChaCha8Rng) -> BBox {
    let sd = sigma * (b.width() + b.height()) / 2.0;
    let normal = Normal::new(0.0, sd).expect("finite standard deviation");
    let c: Vec<f64> = b.coords().iter().map(|&x| x + normal.sample(rng)).collect();
    let x0 = c[0].clamp(0.0, IMAGE_WIDTH - 1.0);
    let y0 = c[1].clamp(0.0, IMAGE_HEIGHT - 1.0);
    let x1 = c[2].clamp(x0 + 1.0, IMAGE_WIDTH);
    let y1 = c[3].clamp(y0 + 1.0, IMAGE_HEIGHT);
    BBox::new(x0, y0, x1, y1)
}

/// Gaussian jitter of every detection and phrase box, with standard
/// deviation `sigma` times the box's mean side. Truth and exemplar are kept.
pub fn perturb(p: &GeneratedProblem, sigma: f64, seed: u64) -> GeneratedProblem {
    let mut out = p.clone();
    out.meta.sigma = sigma;
    if sigma == 0.0 {
        return out;
    }
    let mut r = rng(seed);
    r.set_stream(1);
    for d in &mut out.scene.class_detections {
        d.bbox = jitter(&d.bbox, sigma, &mut r);
    }
    for d in &mut out.phrases {
        d.bbox = jitter(&d.bbox, sigma, &mut r);
    }
    out
}

/// Fills `meta.optimal_length` with a breadth-first optimum of the truth.
pub fn calibrate(p: &mut GeneratedProblem, domain: &Domain) {
    let r = solve(domain, &p.truth, &SearchConfig::optimal()).expect("planner config is valid");
    if r.status == SolveStatus::Solved {
        p.meta.optimal_length = r.plan_length;
    }
}

/// Generates one problem per seed in parallel, optionally with oracle lengths.
pub fn generate_suite(
    cfg: &GenConfig,
    seeds: &[u64],
    oracle: bool,
) -> Result<Vec<GeneratedProblem>, BenchError> {
    cfg.validate()?;
    let domain = cfg.kind.domain();
    Ok(seeds
        .par_iter()
        .map(|&s| {
            let mut p = cfg.generate(s);
            if oracle {
                calibrate(&mut p, &domain);
            }
            p
        })
        .collect())
}

fn write(path: &Path, text: &str) -> Result<(), BenchError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| BenchError::Io {
            path: dir.to_path_buf(),
            msg: e.to_string(),
        })?;
    }
    std::fs::write(path, text).map_err(|e| BenchError::Io {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })
}

fn json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializable") + "\n"
}

/// Writes `domain.pddl`, `manifest.json`, `meta.json` and one directory per
/// problem holding `scene.json`, `phrases.json`, `exemplar.json` and
/// `truth.pddl`. Returns the manifest path.
pub fn write_suite(
    out: &Path,
    kind: DomainKind,
    problems: &[GeneratedProblem],
) -> Result<PathBuf, BenchError> {
    write(&out.join("domain.pddl"), kind.pddl())?;
    let mut entries = Vec::new();
    for p in problems {
        let id = format!("{}-{:04}", kind.name(), p.meta.seed);
        let dir = PathBuf::from(&id);
        write(&out.join(&dir).join("scene.json"), &json(&p.scene))?;
        write(&out.join(&dir).join("phrases.json"), &json(&p.phrases))?;
        write(&out.join(&dir).join("exemplar.json"), &json(&p.exemplar))?;
        write(
            &out.join(&dir).join("truth.pddl"),
            &serialize_problem(&p.truth),
        )?;
        entries.push(ManifestEntry {
            id: Some(id),
            scene: dir.join("scene.json"),
            exemplar: dir.join("exemplar.json"),
            goal_text: Some(p.instruction.clone()),
            goal_structured: Some(p.goal_structured.clone()),
            ground_truth_problem: dir.join("truth.pddl"),
            phrases: Some(dir.join("phrases.json")),
        });
    }
    let manifest = Manifest {
        domain_file: PathBuf::from("domain.pddl"),
        problems: entries,
    };
    let path = out.join("manifest.json");
    write(&path, &json(&manifest))?;
    let meta: Vec<&GenMeta> = problems.iter().map(|p| &p.meta).collect();
    write(&out.join("meta.json"), &json(&meta))?;
    Ok(path)
}

/// Median of the oracle lengths that were found.
pub fn median_length(problems: &[GeneratedProblem]) -> Option<f64> {
    let mut v: Vec<usize> = problems
        .iter()
        .filter_map(|p| p.meta.optimal_length)
        .collect();
    if v.is_empty() {
        return None;
    }
    v.sort_unstable();
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[m] as f64
    } else {
        (v[m - 1] + v[m]) as f64 / 2.0
    })
}

pub(crate) fn pick<T: Copy>(rng: &mut ChaCha8Rng, items: &[T]) -> T {
    items[rng.random_range(0..items.len())]
}
