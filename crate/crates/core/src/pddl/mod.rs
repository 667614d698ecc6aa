//! Typed STRIPS subset with negative preconditions and `:derived` rules.
//!
//! The accepted grammar is documented in `docs/pddl-grammar.md`.

mod check;
mod domain;
mod plan;
mod problem;
pub(crate) mod sexpr;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use check::{check_plannable, Violation};
pub use domain::{parse_domain, serialize_domain};
pub use plan::{parse_plan, Plan, PlanStep};
pub use problem::{parse_problem, serialize_problem};

pub const ROOT_TYPE: &str = "object";

/// Whether `s` is a valid (lowercase) PDDL identifier.
pub fn is_identifier(s: &str) -> bool {
    sexpr::is_ident(s)
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PddlError {
    #[error("syntax error at {line}:{col}: {msg}")]
    Syntax {
        line: usize,
        col: usize,
        msg: String,
    },
    #[error("duplicate {kind} '{name}'")]
    Duplicate { kind: &'static str, name: String },
    #[error("cyclic type hierarchy involving '{0}'")]
    CyclicTypes(String),
    #[error("unknown type '{0}'")]
    UnknownType(String),
    #[error("derived predicates are not stratified: '{0}' depends on itself")]
    Unstratified(String),
    #[error("unknown predicate '{0}'")]
    UnknownPredicate(String),
    #[error("unknown action '{0}'")]
    UnknownAction(String),
    #[error("undeclared variable '?{var}' in {context}")]
    UndeclaredVariable { var: String, context: String },
    #[error("undeclared object '{object}' in {atom}")]
    UndeclaredObject { object: String, atom: String },
    #[error("{name} expects {expected} arguments, found {found}")]
    Arity {
        name: String,
        expected: usize,
        found: usize,
    },
    #[error("type error in {atom}: argument {position} is '{found}', expected '{expected}'")]
    TypeMismatch {
        atom: String,
        position: usize,
        expected: String,
        found: String,
    },
    #[error("init may not mention derived predicate: {0}")]
    DerivedInInit(String),
    #[error("{0}")]
    Invalid(String),
}

/// Type hierarchy rooted at `object`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TypeHierarchy {
    entries: Vec<(String, String)>,
    parent: HashMap<String, String>,
}

impl TypeHierarchy {
    pub fn new(entries: Vec<(String, String)>) -> Result<Self, PddlError> {
        let mut parent = HashMap::new();
        for (t, p) in &entries {
            if t == ROOT_TYPE {
                return Err(PddlError::Invalid(format!(
                    "'{ROOT_TYPE}' cannot have a parent"
                )));
            }
            if parent.insert(t.clone(), p.clone()).is_some() {
                return Err(PddlError::Duplicate {
                    kind: "type",
                    name: t.clone(),
                });
            }
        }
        for (t, p) in &entries {
            if p != ROOT_TYPE && !parent.contains_key(p) {
                return Err(PddlError::UnknownType(p.clone()));
            }
            let mut cur = p.as_str();
            let mut steps = 0;
            while cur != ROOT_TYPE {
                if cur == t || steps > entries.len() {
                    return Err(PddlError::CyclicTypes(t.clone()));
                }
                cur = &parent[cur];
                steps += 1;
            }
        }
        Ok(TypeHierarchy { entries, parent })
    }

    /// Declared `(type, parent)` pairs in declaration order, root excluded.
    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn contains(&self, t: &str) -> bool {
        t == ROOT_TYPE || self.parent.contains_key(t)
    }

    pub fn parent(&self, t: &str) -> Option<&str> {
        self.parent.get(t).map(String::as_str)
    }

    pub fn is_subtype(&self, t: &str, of: &str) -> bool {
        if of == ROOT_TYPE {
            return self.contains(t);
        }
        let mut cur = t;
        loop {
            if cur == of {
                return true;
            }
            match self.parent.get(cur) {
                Some(p) => cur = p,
                None => return false,
            }
        }
    }

    /// True when one type is a subtype of the other.
    pub fn comparable(&self, a: &str, b: &str) -> bool {
        self.is_subtype(a, b) || self.is_subtype(b, a)
    }

    pub fn types(&self) -> impl Iterator<Item = &str> {
        std::iter::once(ROOT_TYPE).chain(self.entries.iter().map(|(t, _)| t.as_str()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Param {
    pub name: String,
    pub ty: String,
}

impl Param {
    pub fn new(name: impl Into<String>, ty: impl Into<String>) -> Self {
        Param {
            name: name.into(),
            ty: ty.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PredicateKind {
    Observed,
    Derived,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Predicate {
    pub name: String,
    pub params: Vec<Param>,
    pub kind: PredicateKind,
}

impl Predicate {
    pub fn arity(&self) -> usize {
        self.params.len()
    }

    pub fn is_observed(&self) -> bool {
        self.kind == PredicateKind::Observed
    }
}

/// Atom over variables (schemas, rules) or object names (states).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Atom {
    pub predicate: String,
    pub args: Vec<String>,
}

pub type GroundAtom = Atom;

impl Atom {
    pub fn new<S: Into<String>>(
        predicate: impl Into<String>,
        args: impl IntoIterator<Item = S>,
    ) -> Self {
        Atom {
            predicate: predicate.into(),
            args: args.into_iter().map(Into::into).collect(),
        }
    }

    pub fn arity(&self) -> usize {
        self.args.len()
    }

    /// PDDL form, with a `?` prefix on each argument when `vars` is set.
    pub fn to_pddl(&self, vars: bool) -> String {
        let mut s = format!("({}", self.predicate);
        for a in &self.args {
            s.push(' ');
            if vars {
                s.push('?');
            }
            s.push_str(a);
        }
        s.push(')');
        s
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.predicate, self.args.join(", "))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Literal {
    pub negated: bool,
    pub atom: Atom,
}

impl Literal {
    pub fn pos(atom: Atom) -> Self {
        Literal {
            negated: false,
            atom,
        }
    }

    pub fn neg(atom: Atom) -> Self {
        Literal {
            negated: true,
            atom,
        }
    }

    pub fn to_pddl(&self, vars: bool) -> String {
        if self.negated {
            format!("(not {})", self.atom.to_pddl(vars))
        } else {
            self.atom.to_pddl(vars)
        }
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.negated {
            write!(f, "NOT {}", self.atom)
        } else {
            write!(f, "{}", self.atom)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionSchema {
    pub name: String,
    pub params: Vec<Param>,
    pub precondition: Vec<Literal>,
    /// Positive literals add, negated literals delete.
    pub effect: Vec<Literal>,
}

impl ActionSchema {
    pub fn add_effects(&self) -> impl Iterator<Item = &Atom> {
        self.effect.iter().filter(|l| !l.negated).map(|l| &l.atom)
    }

    pub fn del_effects(&self) -> impl Iterator<Item = &Atom> {
        self.effect.iter().filter(|l| l.negated).map(|l| &l.atom)
    }
}

/// `head(params) <- exists vars. body`. Body atoms are positive; the
/// predicate `=` unifies two variables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DerivedRule {
    pub head: Atom,
    pub params: Vec<Param>,
    pub exists: Vec<Param>,
    pub body: Vec<Atom>,
}

impl DerivedRule {
    /// Every variable with its declared type, head parameters first.
    pub fn variables(&self) -> impl Iterator<Item = &Param> {
        self.params.iter().chain(self.exists.iter())
    }
}

pub const EQUALITY: &str = "=";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Domain {
    pub name: String,
    pub requirements: Vec<String>,
    pub types: TypeHierarchy,
    pub predicates: Vec<Predicate>,
    pub actions: Vec<ActionSchema>,
    pub rules: Vec<DerivedRule>,
}

impl Domain {
    pub fn predicate(&self, name: &str) -> Option<&Predicate> {
        self.predicates.iter().find(|p| p.name == name)
    }

    pub fn action(&self, name: &str) -> Option<&ActionSchema> {
        self.actions.iter().find(|a| a.name == name)
    }

    pub fn observed(&self) -> impl Iterator<Item = &Predicate> {
        self.predicates.iter().filter(|p| p.is_observed())
    }

    pub fn derived(&self) -> impl Iterator<Item = &Predicate> {
        self.predicates.iter().filter(|p| !p.is_observed())
    }

    pub fn observed_names(&self) -> BTreeSet<String> {
        self.observed().map(|p| p.name.clone()).collect()
    }

    /// Derived predicates defined by at least one rule.
    pub fn is_axiom(&self, pred: &str) -> bool {
        self.rules.iter().any(|r| r.head.predicate == pred)
    }

    /// Rule indices grouped by stratum, lowest first.
    pub fn strata(&self) -> Vec<Vec<usize>> {
        stratify(&self.rules).expect("accepted domains are stratified")
    }
}

/// Groups rules by the stratum of their head. Fails on recursion.
pub fn stratify(rules: &[DerivedRule]) -> Result<Vec<Vec<usize>>, PddlError> {
    let heads: BTreeSet<&str> = rules.iter().map(|r| r.head.predicate.as_str()).collect();
    let mut deps: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for r in rules {
        let entry = deps.entry(r.head.predicate.as_str()).or_default();
        for b in &r.body {
            if heads.contains(b.predicate.as_str()) {
                entry.insert(b.predicate.as_str());
            }
        }
    }
    let mut level: BTreeMap<&str, usize> = BTreeMap::new();
    fn visit<'a>(
        p: &'a str,
        deps: &BTreeMap<&'a str, BTreeSet<&'a str>>,
        level: &mut BTreeMap<&'a str, usize>,
        path: &mut Vec<&'a str>,
    ) -> Result<usize, PddlError> {
        if let Some(&l) = level.get(p) {
            return Ok(l);
        }
        if path.contains(&p) {
            return Err(PddlError::Unstratified(p.to_string()));
        }
        path.push(p);
        let mut l = 0;
        for d in &deps[p] {
            l = l.max(visit(d, deps, level, path)? + 1);
        }
        path.pop();
        level.insert(p, l);
        Ok(l)
    }
    for h in &heads {
        visit(h, &deps, &mut level, &mut Vec::new())?;
    }
    let depth = level.values().copied().max().map_or(0, |m| m + 1);
    let mut strata = vec![Vec::new(); depth];
    for (i, r) in rules.iter().enumerate() {
        strata[level[r.head.predicate.as_str()]].push(i);
    }
    Ok(strata)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Problem {
    pub name: String,
    pub domain: String,
    /// `(name, type)` sorted by name.
    pub objects: Vec<(String, String)>,
    pub init: BTreeSet<GroundAtom>,
    pub goal: Vec<Literal>,
}

impl Problem {
    /// Builds a problem and checks it against the domain.
    pub fn new(
        name: impl Into<String>,
        domain: &Domain,
        mut objects: Vec<(String, String)>,
        init: BTreeSet<GroundAtom>,
        goal: Vec<Literal>,
    ) -> Result<Self, PddlError> {
        objects.sort();
        let p = Problem {
            name: name.into(),
            domain: domain.name.clone(),
            objects,
            init,
            goal,
        };
        problem::validate(&p, domain)?;
        Ok(p)
    }

    pub fn object_type(&self, name: &str) -> Option<&str> {
        self.objects
            .binary_search_by(|(n, _)| n.as_str().cmp(name))
            .ok()
            .map(|i| self.objects[i].1.as_str())
    }
}
