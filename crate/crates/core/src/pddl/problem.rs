use std::collections::{BTreeSet, HashSet};

use super::check::{check_atom, Violation};
use super::domain::conjunction;
use super::sexpr::{ident, read_all, syntax, typed_list, Pos, Sexp};
use super::{Domain, PddlError, Problem};

pub fn parse_problem(text: &str, domain: &Domain) -> Result<Problem, PddlError> {
    let top = read_all(text)?;
    let root = match top.as_slice() {
        [one] => one,
        [] => return Err(syntax(Pos { line: 1, col: 1 }, "empty input")),
        [_, second, ..] => return Err(syntax(second.pos(), "trailing input after problem")),
    };
    let items = root
        .as_list()
        .ok_or_else(|| syntax(root.pos(), "expected (define ...)"))?;
    if items.first().and_then(Sexp::as_sym) != Some("define") {
        return Err(syntax(root.pos(), "expected (define ...)"));
    }
    let name = match items.get(1).and_then(Sexp::as_list) {
        Some([kw, n]) if kw.as_sym() == Some("problem") => ident(n)?,
        _ => return Err(syntax(root.pos(), "expected (problem <name>)")),
    };
    let mut dname = None;
    let mut objects = None;
    let mut init = None;
    let mut goal = None;
    for sec in &items[2..] {
        let list = sec
            .as_list()
            .ok_or_else(|| syntax(sec.pos(), "expected a section"))?;
        let dup = || syntax(sec.pos(), "repeated section");
        match sec.head().unwrap_or("") {
            ":domain" => {
                let [_, n] = list else {
                    return Err(syntax(sec.pos(), "expected (:domain <name>)"));
                };
                if dname.replace(ident(n)?).is_some() {
                    return Err(dup());
                }
            }
            ":objects" => {
                if objects.replace(typed_list(&list[1..], ident)?).is_some() {
                    return Err(dup());
                }
            }
            ":init" => {
                let mut atoms = BTreeSet::new();
                for a in &list[1..] {
                    let lit = conjunction(a, false)?;
                    match lit.as_slice() {
                        [l] if !l.negated && a.head() != Some("and") => {
                            atoms.insert(l.atom.clone());
                        }
                        _ => return Err(syntax(a.pos(), "init entries must be positive atoms")),
                    }
                }
                if init.replace(atoms).is_some() {
                    return Err(dup());
                }
            }
            ":goal" => {
                let [_, g] = list else {
                    return Err(syntax(sec.pos(), "expected (:goal <formula>)"));
                };
                if goal.replace(conjunction(g, false)?).is_some() {
                    return Err(dup());
                }
            }
            other => return Err(syntax(sec.pos(), format!("unknown section '{other}'"))),
        }
    }
    let dname = dname.ok_or_else(|| syntax(root.pos(), "missing (:domain ...)"))?;
    if dname != domain.name {
        return Err(PddlError::Invalid(format!(
            "problem is for domain '{dname}', not '{}'",
            domain.name
        )));
    }
    Problem::new(
        name,
        domain,
        objects.unwrap_or_default(),
        init.unwrap_or_default(),
        goal.ok_or_else(|| syntax(root.pos(), "missing (:goal ...)"))?,
    )
}

pub(super) fn validate(p: &Problem, domain: &Domain) -> Result<(), PddlError> {
    let mut seen = HashSet::new();
    for (n, t) in &p.objects {
        if !seen.insert(n) {
            return Err(PddlError::Duplicate {
                kind: "object",
                name: n.clone(),
            });
        }
        if !domain.types.contains(t) {
            return Err(PddlError::UnknownType(t.clone()));
        }
    }
    let atoms = p
        .init
        .iter()
        .map(|a| (a, true))
        .chain(p.goal.iter().map(|l| (&l.atom, false)));
    for (a, in_init) in atoms {
        if let Some(v) = check_atom(a, domain, |o| p.object_type(o))
            .into_iter()
            .next()
        {
            return Err(violation_error(v));
        }
        if in_init
            && !domain
                .predicate(&a.predicate)
                .is_some_and(|s| s.is_observed())
        {
            return Err(PddlError::DerivedInInit(a.to_pddl(false)));
        }
    }
    Ok(())
}

fn violation_error(v: Violation) -> PddlError {
    match v {
        Violation::UnknownPredicate { atom } => PddlError::UnknownPredicate(atom.predicate),
        Violation::WrongArity { atom, expected } => PddlError::Arity {
            name: atom.predicate.clone(),
            expected,
            found: atom.arity(),
        },
        Violation::UnknownObject { atom, object } => PddlError::UndeclaredObject {
            object,
            atom: atom.to_pddl(false),
        },
        Violation::TypeMismatch {
            atom,
            position,
            expected,
            found,
        } => PddlError::TypeMismatch {
            atom: atom.to_pddl(false),
            position,
            expected,
            found,
        },
    }
}

/// Canonical problem text: objects sorted by name, init sorted, goal in
/// declared order.
pub fn serialize_problem(p: &Problem) -> String {
    let mut s = format!("(define (problem {})\n  (:domain {})\n", p.name, p.domain);
    s += &block(
        ":objects",
        p.objects.iter().map(|(n, t)| format!("{n} - {t}")),
    );
    s += &block(":init", p.init.iter().map(|a| a.to_pddl(false)));
    s += "  (:goal (and";
    if p.goal.is_empty() {
        s += "))\n";
    } else {
        s += "\n";
        for l in &p.goal {
            s += &format!("    {}\n", l.to_pddl(false));
        }
        s += "  ))\n";
    }
    s += ")\n";
    s
}

fn block(key: &str, lines: impl Iterator<Item = String>) -> String {
    let lines: Vec<String> = lines.collect();
    if lines.is_empty() {
        return format!("  ({key} )\n");
    }
    let mut s = format!("  ({key}\n");
    for l in lines {
        s += &format!("    {l}\n");
    }
    s += "  )\n";
    s
}
