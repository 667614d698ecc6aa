//! Domain-conditioned scene graph generation: type-valid candidate
//! triplets, box-difference features and one-shot nearest-neighbour labels.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pddl::{Domain, GroundAtom, Literal, PddlError, Predicate, Problem};
use crate::scene::{merge_detections, BBox, ObjectSet, SceneError, SceneObservation};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DcsggError {
    #[error("exemplar has no candidates for predicate '{0}'")]
    MissingPredicate(String),
    #[error("predicate '{0}' is always true in the exemplar")]
    AlwaysTrue(String),
    #[error("predicate '{0}' is always false in the exemplar")]
    AlwaysFalse(String),
    #[error("exemplar atom {0} is not a candidate of the exemplar scene")]
    BadExemplarAtom(String),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Pddl(#[from] PddlError),
}

impl DcsggError {
    /// Whether this is one of the informative-exemplar failures.
    pub fn is_uninformative(&self) -> bool {
        matches!(
            self,
            DcsggError::MissingPredicate(_)
                | DcsggError::AlwaysTrue(_)
                | DcsggError::AlwaysFalse(_)
        )
    }
}

/// `b_i - b_j` on coordinates normalized by `(w, h, w, h)`.
pub fn binary_feature(bi: &BBox, bj: &BBox, width: f64, height: f64) -> [f64; 4] {
    let a = normalize(bi, width, height);
    let b = normalize(bj, width, height);
    [a[0] - b[0], a[1] - b[1], a[2] - b[2], a[3] - b[3]]
}

/// `c_q - c_p` for every `p < q` over normalized `(x_min, y_min, x_max, y_max)`.
pub fn unary_feature(b: &BBox, width: f64, height: f64) -> [f64; 6] {
    let c = normalize(b, width, height);
    [
        c[1] - c[0],
        c[2] - c[0],
        c[3] - c[0],
        c[2] - c[1],
        c[3] - c[1],
        c[3] - c[2],
    ]
}

fn normalize(b: &BBox, width: f64, height: f64) -> [f64; 4] {
    [
        b.x_min / width,
        b.y_min / height,
        b.x_max / width,
        b.y_max / height,
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub subject: String,
    /// Equal to `subject` for unary predicates.
    pub object: String,
    pub feature: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredicateCandidates {
    pub predicate: String,
    pub unary: bool,
    pub candidates: Vec<Candidate>,
}

impl PredicateCandidates {
    pub fn atom(&self, c: &Candidate) -> GroundAtom {
        if self.unary {
            GroundAtom::new(self.predicate.clone(), [c.subject.clone()])
        } else {
            GroundAtom::new(
                self.predicate.clone(),
                [c.subject.clone(), c.object.clone()],
            )
        }
    }
}

/// Candidates for every observed predicate, in domain declaration order.
/// Pairs are ordered `(i, j)` over the object list with `i != j`.
pub fn enumerate_candidates(
    objects: &ObjectSet,
    domain: &Domain,
    width: f64,
    height: f64,
) -> Vec<PredicateCandidates> {
    domain
        .observed()
        .map(|p| candidates_for(p, objects, domain, width, height))
        .collect()
}

fn candidates_for(
    p: &Predicate,
    objects: &ObjectSet,
    domain: &Domain,
    width: f64,
    height: f64,
) -> PredicateCandidates {
    let fits = |ty: &str, k: usize| domain.types.is_subtype(ty, &p.params[k].ty);
    let mut candidates = Vec::new();
    if p.arity() == 1 {
        for o in objects.objects.iter().filter(|o| fits(&o.ty, 0)) {
            candidates.push(Candidate {
                subject: o.name.clone(),
                object: o.name.clone(),
                feature: unary_feature(&o.bbox, width, height).to_vec(),
            });
        }
    } else {
        for (i, a) in objects.objects.iter().enumerate() {
            if !fits(&a.ty, 0) {
                continue;
            }
            for (j, b) in objects.objects.iter().enumerate() {
                if i == j || !fits(&b.ty, 1) {
                    continue;
                }
                candidates.push(Candidate {
                    subject: a.name.clone(),
                    object: b.name.clone(),
                    feature: binary_feature(&a.bbox, &b.bbox, width, height).to_vec(),
                });
            }
        }
    }
    PredicateCandidates {
        predicate: p.name.clone(),
        unary: p.arity() == 1,
        candidates,
    }
}

/// One-shot labeled example: a scene and the observed atoms true in it.
#[derive(Debug, Clone, PartialEq)]
pub struct Exemplar {
    pub image_width: f64,
    pub image_height: f64,
    pub objects: ObjectSet,
    pub true_atoms: BTreeSet<GroundAtom>,
}

/// On-disk exemplar: a scene file plus `true_atoms` as `[pred, args...]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExemplarFile {
    #[serde(flatten)]
    pub scene: SceneObservation,
    pub true_atoms: Vec<Vec<String>>,
}

impl ExemplarFile {
    pub fn new(scene: SceneObservation, atoms: &BTreeSet<GroundAtom>) -> Self {
        let true_atoms = atoms
            .iter()
            .map(|a| {
                std::iter::once(a.predicate.clone())
                    .chain(a.args.iter().cloned())
                    .collect()
            })
            .collect();
        ExemplarFile { scene, true_atoms }
    }

    pub fn atoms(&self) -> BTreeSet<GroundAtom> {
        self.true_atoms
            .iter()
            .filter_map(|v| v.split_first())
            .map(|(p, args)| {
                GroundAtom::new(p.to_lowercase(), args.iter().map(|a| a.to_lowercase()))
            })
            .collect()
    }

    pub fn load(&self, domain: &Domain, theta_match: f64) -> Result<Exemplar, DcsggError> {
        Ok(Exemplar {
            image_width: self.scene.image_width,
            image_height: self.scene.image_height,
            objects: merge_detections(&self.scene, domain, theta_match)?,
            true_atoms: self.atoms(),
        })
    }
}

/// Labeled exemplar candidates for one predicate.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPool {
    pub predicate: String,
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<bool>,
}

/// Nearest-neighbour predicate classifier built from one exemplar.
#[derive(Debug, Clone)]
pub struct Classifier {
    pools: Vec<LabeledPool>,
}

impl Classifier {
    /// Fails if an exemplar atom is not one of the exemplar's own candidates.
    pub fn new(exemplar: &Exemplar, domain: &Domain) -> Result<Self, DcsggError> {
        let cands = enumerate_candidates(
            &exemplar.objects,
            domain,
            exemplar.image_width,
            exemplar.image_height,
        );
        let mut matched = 0;
        let mut pools = Vec::new();
        for pc in &cands {
            let labels: Vec<bool> = pc
                .candidates
                .iter()
                .map(|c| exemplar.true_atoms.contains(&pc.atom(c)))
                .collect();
            matched += labels.iter().filter(|&&l| l).count();
            pools.push(LabeledPool {
                predicate: pc.predicate.clone(),
                features: pc.candidates.iter().map(|c| c.feature.clone()).collect(),
                labels,
            });
        }
        if matched != exemplar.true_atoms.len() {
            let all: BTreeSet<GroundAtom> = cands
                .iter()
                .flat_map(|pc| pc.candidates.iter().map(|c| pc.atom(c)))
                .collect();
            let bad = exemplar
                .true_atoms
                .iter()
                .find(|a| !all.contains(a))
                .map(|a| a.to_string())
                .unwrap_or_default();
            return Err(DcsggError::BadExemplarAtom(bad));
        }
        Ok(Classifier { pools })
    }

    pub fn pool(&self, predicate: &str) -> Option<&LabeledPool> {
        self.pools.iter().find(|p| p.predicate == predicate)
    }

    /// Checks that the exemplar has both labels for `predicate`.
    pub fn check_informative(&self, predicate: &str) -> Result<&LabeledPool, DcsggError> {
        let pool = self
            .pool(predicate)
            .filter(|p| !p.labels.is_empty())
            .ok_or_else(|| DcsggError::MissingPredicate(predicate.to_string()))?;
        if pool.labels.iter().all(|&l| l) {
            return Err(DcsggError::AlwaysTrue(predicate.to_string()));
        }
        if pool.labels.iter().all(|&l| !l) {
            return Err(DcsggError::AlwaysFalse(predicate.to_string()));
        }
        Ok(pool)
    }

    /// Labels each test candidate with the label of its nearest exemplar
    /// candidate. Candidates tied (within `TIE_EPS`) at the minimal distance with
    /// conflicting labels are labeled false.
    pub fn classify(&self, test: &PredicateCandidates) -> Result<Vec<bool>, DcsggError> {
        if test.candidates.is_empty() {
            return Ok(Vec::new());
        }
        let pool = self.check_informative(&test.predicate)?;
        Ok(test
            .candidates
            .iter()
            .map(|c| nearest_label(&c.feature, pool))
            .collect())
    }

    /// True-labeled candidates for every predicate with candidates.
    pub fn classify_all(&self, tests: &[PredicateCandidates]) -> Result<Vec<Edge>, DcsggError> {
        let mut edges = Vec::new();
        for t in tests {
            let labels = self.classify(t)?;
            for (c, l) in t.candidates.iter().zip(labels) {
                if l {
                    edges.push(Edge {
                        subject: c.subject.clone(),
                        predicate: t.predicate.clone(),
                        object: c.object.clone(),
                    });
                }
            }
        }
        Ok(edges)
    }
}

/// Squared distances this close count as a tie, so that rounding in the
/// normalized coordinates cannot decide between equidistant neighbours.
pub const TIE_EPS: f64 = 1e-12;

fn nearest_label(f: &[f64], pool: &LabeledPool) -> bool {
    let mut best = f64::INFINITY;
    let mut label = false;
    for (g, &l) in pool.features.iter().zip(&pool.labels) {
        let d: f64 = f.iter().zip(g).map(|(a, b)| (a - b) * (a - b)).sum();
        if d < best - TIE_EPS {
            best = d;
            label = l;
        } else if d <= best + TIE_EPS {
            best = best.min(d);
            label &= l;
        }
    }
    label
}

/// Convenience form of [`Classifier::classify`] returning the true subset.
pub fn classify(
    test: &PredicateCandidates,
    exemplar: &Exemplar,
    domain: &Domain,
) -> Result<Vec<Candidate>, DcsggError> {
    let labels = Classifier::new(exemplar, domain)?.classify(test)?;
    Ok(test
        .candidates
        .iter()
        .zip(labels)
        .filter(|(_, l)| *l)
        .map(|(c, _)| c.clone())
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub subject: String,
    pub predicate: String,
    pub object: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneGraph {
    pub vertices: ObjectSet,
    pub edges: Vec<Edge>,
}

pub fn build_graph(objects: ObjectSet, mut edges: Vec<Edge>) -> SceneGraph {
    edges.sort();
    edges.dedup();
    SceneGraph {
        vertices: objects,
        edges,
    }
}

/// Unary edges (subject equal to object) become one-argument atoms.
pub fn graph_to_init(graph: &SceneGraph) -> BTreeSet<GroundAtom> {
    graph
        .edges
        .iter()
        .map(|e| {
            if e.subject == e.object {
                GroundAtom::new(e.predicate.clone(), [e.subject.clone()])
            } else {
                GroundAtom::new(e.predicate.clone(), [e.subject.clone(), e.object.clone()])
            }
        })
        .collect()
}

/// Inverse of [`graph_to_init`].
pub fn init_to_edges(atoms: &BTreeSet<GroundAtom>) -> Vec<Edge> {
    let mut edges: Vec<Edge> = atoms
        .iter()
        .map(|a| Edge {
            subject: a.args[0].clone(),
            predicate: a.predicate.clone(),
            object: a.args.get(1).unwrap_or(&a.args[0]).clone(),
        })
        .collect();
    edges.sort();
    edges
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grounded {
    pub problem: Problem,
    pub graph: SceneGraph,
}

/// Objects from detections, init from the classified graph, goal as given.
pub fn ground_scene(
    obs: &SceneObservation,
    domain: &Domain,
    classifier: &Classifier,
    goal: &[Literal],
    theta_match: f64,
    problem_name: &str,
) -> Result<Grounded, DcsggError> {
    let objects = merge_detections(obs, domain, theta_match)?;
    let cands = enumerate_candidates(&objects, domain, obs.image_width, obs.image_height);
    let edges = classifier.classify_all(&cands)?;
    let graph = build_graph(objects, edges);
    let init = graph_to_init(&graph);
    let problem = Problem::new(
        problem_name,
        domain,
        graph.vertices.declarations(),
        init,
        goal.to_vec(),
    )?;
    Ok(Grounded { problem, graph })
}
