use std::collections::HashMap;

use serde::Serialize;

use super::{Atom, Domain};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Violation {
    UnknownPredicate {
        atom: Atom,
    },
    WrongArity {
        atom: Atom,
        expected: usize,
    },
    UnknownObject {
        atom: Atom,
        object: String,
    },
    TypeMismatch {
        atom: Atom,
        position: usize,
        expected: String,
        found: String,
    },
}

/// Lists every atom that is not `p(o)` for a domain predicate `p` over
/// declared, type-compatible objects `o`.
pub fn check_plannable<'a>(
    atoms: impl IntoIterator<Item = &'a Atom>,
    domain: &Domain,
    objects: &[(String, String)],
) -> Vec<Violation> {
    let types: HashMap<&str, &str> = objects
        .iter()
        .map(|(n, t)| (n.as_str(), t.as_str()))
        .collect();
    atoms
        .into_iter()
        .flat_map(|a| check_atom(a, domain, |o| types.get(o).copied()))
        .collect()
}

pub(super) fn check_atom<'o>(
    atom: &Atom,
    domain: &Domain,
    type_of: impl Fn(&str) -> Option<&'o str>,
) -> Vec<Violation> {
    let Some(sig) = domain.predicate(&atom.predicate) else {
        return vec![Violation::UnknownPredicate { atom: atom.clone() }];
    };
    if sig.arity() != atom.arity() {
        return vec![Violation::WrongArity {
            atom: atom.clone(),
            expected: sig.arity(),
        }];
    }
    let mut out = Vec::new();
    for (i, (o, p)) in atom.args.iter().zip(&sig.params).enumerate() {
        match type_of(o) {
            None => out.push(Violation::UnknownObject {
                atom: atom.clone(),
                object: o.clone(),
            }),
            Some(t) if !domain.types.is_subtype(t, &p.ty) => out.push(Violation::TypeMismatch {
                atom: atom.clone(),
                position: i + 1,
                expected: p.ty.clone(),
                found: t.to_string(),
            }),
            Some(_) => {}
        }
    }
    out
}
