//! Goal construction: a structured goal grammar, an optional
//! chat-completions client for free text, and grounding of goal names
//! against scene objects.

mod llm;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pddl::{check_plannable, Atom, Domain, Literal, Violation};
use crate::scene::{merge_detections, ObjectSet, PhraseDetection, SceneError, SceneObservation};

pub use llm::{
    build_prompt, llm_parse_goal, Cassette, ChatTransport, Exchange, HttpTransport, LlmConfig,
    Recorder,
};

#[derive(Debug, Error)]
pub enum GoalError {
    #[error("goal syntax error at offset {offset}: {msg}")]
    Syntax { offset: usize, msg: String },
    #[error("unknown predicate '{0}' in goal")]
    UnknownPredicate(String),
    #[error("goal predicate '{name}' expects {expected} arguments, found {found}")]
    Arity {
        name: String,
        expected: usize,
        found: usize,
    },
    #[error("goal does not type-check: {0:?}")]
    IllTyped(Vec<Violation>),
    #[error("goal names could not be grounded: {0:?}")]
    Unresolved(Vec<String>),
    #[error("request failed: {0}")]
    Network(String),
    #[error("no valid goal after {attempts} attempts; last response: {last:?}")]
    Unparsable { attempts: usize, last: String },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("cassette: {0}")]
    Cassette(String),
    #[error(transparent)]
    Scene(#[from] SceneError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GoalSource {
    Structured,
    Llm,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GoalSpec {
    pub conjuncts: Vec<Literal>,
    pub source: GoalSource,
}

impl GoalSpec {
    /// Structured-grammar rendering, e.g. `in(a, b) AND NOT sliced(a)`.
    pub fn to_text(&self) -> String {
        self.conjuncts
            .iter()
            .map(|l| l.to_string())
            .collect::<Vec<_>>()
            .join(" AND ")
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Word(String),
    Open,
    Close,
    Comma,
}

fn lex(text: &str) -> Result<Vec<(usize, Tok)>, GoalError> {
    let mut out = Vec::new();
    let mut it = text.char_indices().peekable();
    while let Some((i, c)) = it.next() {
        match c {
            '(' => out.push((i, Tok::Open)),
            ')' => out.push((i, Tok::Close)),
            ',' => out.push((i, Tok::Comma)),
            c if c.is_whitespace() => {}
            c if c.is_alphanumeric() || c == '_' || c == '-' => {
                let mut w = String::new();
                w.extend(c.to_lowercase());
                while let Some(&(_, n)) = it.peek() {
                    if n.is_alphanumeric() || n == '_' || n == '-' {
                        w.extend(n.to_lowercase());
                        it.next();
                    } else {
                        break;
                    }
                }
                out.push((i, Tok::Word(w)));
            }
            other => {
                return Err(GoalError::Syntax {
                    offset: i,
                    msg: format!("unexpected character '{other}'"),
                })
            }
        }
    }
    Ok(out)
}

/// `goal := clause (AND clause)*`, `clause := [NOT] pred '(' name (',' name)* ')'`.
pub fn parse_structured_goal(text: &str, domain: &Domain) -> Result<GoalSpec, GoalError> {
    let toks = lex(text)?;
    let end = text.len();
    let mut pos = 0;
    let err = |pos: usize, msg: &str| GoalError::Syntax {
        offset: toks.get(pos).map_or(end, |t| t.0),
        msg: msg.to_string(),
    };
    let mut conjuncts = Vec::new();
    loop {
        let mut negated = false;
        if matches!(toks.get(pos), Some((_, Tok::Word(w))) if w == "not") {
            negated = true;
            pos += 1;
        }
        let pred = match toks.get(pos) {
            Some((_, Tok::Word(w))) if w != "and" && w != "not" => w.clone(),
            _ => return Err(err(pos, "expected predicate name")),
        };
        pos += 1;
        if toks.get(pos).map(|t| &t.1) != Some(&Tok::Open) {
            return Err(err(pos, "expected '('"));
        }
        pos += 1;
        let mut args = Vec::new();
        loop {
            match toks.get(pos) {
                Some((_, Tok::Word(w))) if crate::pddl::is_identifier(w) => args.push(w.clone()),
                _ => return Err(err(pos, "expected object name")),
            }
            pos += 1;
            match toks.get(pos).map(|t| &t.1) {
                Some(Tok::Comma) => pos += 1,
                Some(Tok::Close) => {
                    pos += 1;
                    break;
                }
                _ => return Err(err(pos, "expected ',' or ')'")),
            }
        }
        let sig = domain
            .predicate(&pred)
            .ok_or_else(|| GoalError::UnknownPredicate(pred.clone()))?;
        if sig.arity() != args.len() {
            return Err(GoalError::Arity {
                name: pred,
                expected: sig.arity(),
                found: args.len(),
            });
        }
        conjuncts.push(Literal {
            negated,
            atom: Atom::new(pred, args),
        });
        match toks.get(pos) {
            None => break,
            Some((_, Tok::Word(w))) if w == "and" => pos += 1,
            _ => return Err(err(pos, "expected AND or end of goal")),
        }
    }
    Ok(GoalSpec {
        conjuncts,
        source: GoalSource::Structured,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GoalGrounding {
    pub goal: Vec<Literal>,
    /// Names not present in the object set, to be sent out as phrase queries.
    pub unresolved: Vec<String>,
}

/// Resolves goal argument names against `objects`. Resolved literals must
/// type-check; unknown names are returned rather than rejected.
pub fn ground_goal(
    spec: &GoalSpec,
    objects: &ObjectSet,
    domain: &Domain,
) -> Result<GoalGrounding, GoalError> {
    let names = objects.names();
    let unresolved: BTreeSet<String> = spec
        .conjuncts
        .iter()
        .flat_map(|l| l.atom.args.iter())
        .filter(|a| !names.contains(a.as_str()))
        .cloned()
        .collect();
    let decls = objects.declarations();
    let violations: Vec<Violation> = check_plannable(
        spec.conjuncts
            .iter()
            .map(|l| &l.atom)
            .filter(|a| a.args.iter().all(|n| names.contains(n.as_str()))),
        domain,
        &decls,
    );
    if !violations.is_empty() {
        return Err(GoalError::IllTyped(violations));
    }
    Ok(GoalGrounding {
        goal: spec.conjuncts.clone(),
        unresolved: unresolved.into_iter().collect(),
    })
}

/// Something that can answer phrase-grounding queries, standing in for an
/// open-vocabulary detector.
pub trait PhraseGrounder {
    fn ground(&self, names: &[String]) -> Vec<PhraseDetection>;
}

/// Answers queries from a fixed list of detections keyed by referent name.
#[derive(Debug, Clone, Default)]
pub struct ScriptedPhrases(pub Vec<PhraseDetection>);

impl PhraseGrounder for ScriptedPhrases {
    fn ground(&self, names: &[String]) -> Vec<PhraseDetection> {
        self.0
            .iter()
            .filter(|d| names.iter().any(|n| *n == d.referent_name.to_lowercase()))
            .cloned()
            .collect()
    }
}

/// Two-pass goal grounding: unresolved names are sent to `grounder` and the
/// returned phrase detections merged into the observation.
pub fn resolve_goal(
    spec: &GoalSpec,
    obs: &SceneObservation,
    domain: &Domain,
    theta_match: f64,
    grounder: &dyn PhraseGrounder,
) -> Result<(Vec<Literal>, SceneObservation), GoalError> {
    let objects = merge_detections(obs, domain, theta_match)?;
    let first = ground_goal(spec, &objects, domain)?;
    if first.unresolved.is_empty() {
        return Ok((first.goal, obs.clone()));
    }
    let mut augmented = obs.clone();
    augmented
        .phrase_detections
        .extend(grounder.ground(&first.unresolved));
    let objects = merge_detections(&augmented, domain, theta_match)?;
    let second = ground_goal(spec, &objects, domain)?;
    if !second.unresolved.is_empty() {
        return Err(GoalError::Unresolved(second.unresolved));
    }
    Ok((second.goal, augmented))
}
