use std::collections::{BTreeSet, HashSet};

use super::sexpr::{ident, read_all, syntax, typed_list, variable, Pos, Sexp};
use super::{
    stratify, ActionSchema, Atom, DerivedRule, Domain, Literal, Param, PddlError, Predicate,
    PredicateKind, TypeHierarchy, EQUALITY,
};

struct Raw {
    name: String,
    requirements: Vec<String>,
    types: Vec<(String, String)>,
    predicates: Vec<(String, Vec<Param>)>,
    observed: Option<Vec<String>>,
    rules: Vec<DerivedRule>,
    actions: Vec<ActionSchema>,
}

pub fn parse_domain(text: &str) -> Result<Domain, PddlError> {
    let top = read_all(text)?;
    let root = match top.as_slice() {
        [one] => one,
        [] => return Err(syntax(Pos { line: 1, col: 1 }, "empty input")),
        [_, second, ..] => return Err(syntax(second.pos(), "trailing input after domain")),
    };
    let items = root
        .as_list()
        .ok_or_else(|| syntax(root.pos(), "expected (define ...)"))?;
    if items.first().and_then(Sexp::as_sym) != Some("define") {
        return Err(syntax(root.pos(), "expected (define ...)"));
    }
    let name = match items.get(1).and_then(Sexp::as_list) {
        Some([kw, n]) if kw.as_sym() == Some("domain") => ident(n)?,
        _ => return Err(syntax(root.pos(), "expected (domain <name>)")),
    };
    let mut raw = Raw {
        name,
        requirements: Vec::new(),
        types: Vec::new(),
        predicates: Vec::new(),
        observed: None,
        rules: Vec::new(),
        actions: Vec::new(),
    };
    let mut seen_sections = HashSet::new();
    for sec in &items[2..] {
        let list = sec
            .as_list()
            .ok_or_else(|| syntax(sec.pos(), "expected a section"))?;
        let head = sec.head().unwrap_or("");
        let once = matches!(
            head,
            ":requirements" | ":types" | ":predicates" | ":observed"
        );
        if once && !seen_sections.insert(head.to_string()) {
            return Err(syntax(sec.pos(), format!("repeated section {head}")));
        }
        match head {
            ":requirements" => {
                for r in &list[1..] {
                    match r.as_sym() {
                        Some(s) if s.starts_with(':') => raw.requirements.push(s.to_string()),
                        _ => return Err(syntax(r.pos(), "expected requirement keyword")),
                    }
                }
            }
            ":types" => raw.types = typed_list(&list[1..], ident)?,
            ":predicates" => {
                for p in &list[1..] {
                    let pl = p
                        .as_list()
                        .ok_or_else(|| syntax(p.pos(), "expected predicate declaration"))?;
                    let pname = pl
                        .first()
                        .ok_or_else(|| syntax(p.pos(), "empty predicate declaration"))?;
                    let pname = ident(pname)?;
                    let params = params(&pl[1..])?;
                    raw.predicates.push((pname, params));
                }
            }
            ":observed" => {
                raw.observed = Some(list[1..].iter().map(ident).collect::<Result<_, _>>()?);
            }
            ":derived" => raw.rules.push(parse_rule(sec, &list[1..])?),
            ":action" => raw.actions.push(parse_action(sec, &list[1..])?),
            _ => return Err(syntax(sec.pos(), format!("unknown section '{head}'"))),
        }
    }
    build(raw)
}

fn params(items: &[Sexp]) -> Result<Vec<Param>, PddlError> {
    Ok(typed_list(items, variable)?
        .into_iter()
        .map(|(n, t)| Param::new(n, t))
        .collect())
}

fn atom(e: &Sexp, vars: bool) -> Result<Atom, PddlError> {
    let l = e
        .as_list()
        .ok_or_else(|| syntax(e.pos(), "expected atom"))?;
    let head = l.first().ok_or_else(|| syntax(e.pos(), "empty atom"))?;
    let predicate = match head.as_sym() {
        Some(EQUALITY) => EQUALITY.to_string(),
        _ => ident(head)?,
    };
    let args = l[1..]
        .iter()
        .map(|a| if vars { variable(a) } else { ident(a) })
        .collect::<Result<_, _>>()?;
    Ok(Atom { predicate, args })
}

/// `()`, a literal, or `(and literal*)`.
pub(super) fn conjunction(e: &Sexp, vars: bool) -> Result<Vec<Literal>, PddlError> {
    let l = e
        .as_list()
        .ok_or_else(|| syntax(e.pos(), "expected formula"))?;
    match e.head() {
        None if l.is_empty() => Ok(Vec::new()),
        Some("and") => l[1..].iter().map(|x| literal(x, vars)).collect(),
        _ => Ok(vec![literal(e, vars)?]),
    }
}

fn literal(e: &Sexp, vars: bool) -> Result<Literal, PddlError> {
    match (e.head(), e.as_list()) {
        (Some("not"), Some([_, inner])) => Ok(Literal::neg(atom(inner, vars)?)),
        (Some("not"), _) => Err(syntax(e.pos(), "'not' takes one atom")),
        (Some("and" | "or" | "exists" | "forall" | "imply" | "when"), _) => Err(syntax(
            e.pos(),
            "nested formula outside the supported subset",
        )),
        _ => Ok(Literal::pos(atom(e, vars)?)),
    }
}

fn parse_rule(sec: &Sexp, rest: &[Sexp]) -> Result<DerivedRule, PddlError> {
    let [head, body] = rest else {
        return Err(syntax(sec.pos(), "expected (:derived <head> <body>)"));
    };
    let hl = head
        .as_list()
        .ok_or_else(|| syntax(head.pos(), "expected rule head"))?;
    let hname = ident(hl.first().ok_or_else(|| syntax(head.pos(), "empty head"))?)?;
    let params = params(&hl[1..])?;
    let head_atom = Atom {
        predicate: hname,
        args: params.iter().map(|p| p.name.clone()).collect(),
    };
    let (exists, inner) = match (body.head(), body.as_list()) {
        (Some("exists"), Some([_, vars, inner])) => {
            let vl = vars
                .as_list()
                .ok_or_else(|| syntax(vars.pos(), "expected variable list"))?;
            (self::params(vl)?, inner)
        }
        (Some("exists"), _) => return Err(syntax(body.pos(), "malformed exists")),
        _ => (Vec::new(), body),
    };
    let lits = conjunction(inner, true)?;
    if let Some(l) = lits.iter().find(|l| l.negated) {
        return Err(PddlError::Invalid(format!(
            "negated atom {} in body of derived rule for '{}'",
            l.atom, head_atom.predicate
        )));
    }
    Ok(DerivedRule {
        head: head_atom,
        params,
        exists,
        body: lits.into_iter().map(|l| l.atom).collect(),
    })
}

fn parse_action(sec: &Sexp, rest: &[Sexp]) -> Result<ActionSchema, PddlError> {
    let name = ident(
        rest.first()
            .ok_or_else(|| syntax(sec.pos(), "action without name"))?,
    )?;
    let mut ps = Vec::new();
    let mut pre = Vec::new();
    let mut eff = Vec::new();
    let mut i = 1;
    while i < rest.len() {
        let key = rest[i].as_sym().unwrap_or("");
        let val = rest
            .get(i + 1)
            .ok_or_else(|| syntax(rest[i].pos(), format!("missing value for '{key}'")))?;
        match key {
            ":parameters" => {
                let l = val
                    .as_list()
                    .ok_or_else(|| syntax(val.pos(), "expected parameter list"))?;
                ps = params(l)?;
            }
            ":precondition" => pre = conjunction(val, true)?,
            ":effect" => eff = conjunction(val, true)?,
            _ => {
                return Err(syntax(
                    rest[i].pos(),
                    format!("unexpected '{key}' in action"),
                ))
            }
        }
        i += 2;
    }
    Ok(ActionSchema {
        name,
        params: ps,
        precondition: pre,
        effect: eff,
    })
}

fn build(raw: Raw) -> Result<Domain, PddlError> {
    let types = TypeHierarchy::new(raw.types)?;

    let heads: BTreeSet<&str> = raw
        .rules
        .iter()
        .map(|r| r.head.predicate.as_str())
        .collect();
    let observed: Option<BTreeSet<&str>> = raw
        .observed
        .as_ref()
        .map(|o| o.iter().map(String::as_str).collect());
    let mut predicates = Vec::new();
    let mut names = HashSet::new();
    for (name, params) in &raw.predicates {
        if name == EQUALITY || !names.insert(name.clone()) {
            return Err(PddlError::Duplicate {
                kind: "predicate",
                name: name.clone(),
            });
        }
        for p in params {
            known(&types, &p.ty)?;
        }
        distinct_vars(params, name)?;
        let is_obs = match &observed {
            Some(o) => o.contains(name.as_str()),
            None => !heads.contains(name.as_str()),
        };
        if is_obs {
            if heads.contains(name.as_str()) {
                return Err(PddlError::Invalid(format!(
                    "observed predicate '{name}' cannot be the head of a derived rule"
                )));
            }
            if !(1..=2).contains(&params.len()) {
                return Err(PddlError::Invalid(format!(
                    "observed predicate '{name}' must be unary or binary"
                )));
            }
        }
        predicates.push(Predicate {
            name: name.clone(),
            params: params.clone(),
            kind: if is_obs {
                PredicateKind::Observed
            } else {
                PredicateKind::Derived
            },
        });
    }
    if let Some(o) = &raw.observed {
        let mut seen = HashSet::new();
        for n in o {
            if !names.contains(n) {
                return Err(PddlError::UnknownPredicate(n.clone()));
            }
            if !seen.insert(n) {
                return Err(PddlError::Duplicate {
                    kind: "observed entry",
                    name: n.clone(),
                });
            }
        }
    }

    let mut domain = Domain {
        name: raw.name,
        requirements: raw.requirements,
        types,
        predicates,
        actions: Vec::new(),
        rules: Vec::new(),
    };

    for r in &raw.rules {
        let sig = domain
            .predicate(&r.head.predicate)
            .ok_or_else(|| PddlError::UnknownPredicate(r.head.predicate.clone()))?;
        let context = format!("derived rule for '{}'", r.head.predicate);
        if sig.arity() != r.params.len() {
            return Err(PddlError::Arity {
                name: sig.name.clone(),
                expected: sig.arity(),
                found: r.params.len(),
            });
        }
        for (p, s) in r.params.iter().zip(&sig.params) {
            known(&domain.types, &p.ty)?;
            if !domain.types.is_subtype(&p.ty, &s.ty) {
                return Err(PddlError::TypeMismatch {
                    atom: r.head.to_pddl(true),
                    position: 0,
                    expected: s.ty.clone(),
                    found: p.ty.clone(),
                });
            }
        }
        let all: Vec<Param> = r.variables().cloned().collect();
        distinct_vars(&all, &context)?;
        for p in &r.exists {
            known(&domain.types, &p.ty)?;
        }
        for a in &r.body {
            check_lifted(&domain, a, &all, &context, true)?;
        }
    }
    stratify(&raw.rules)?;
    domain.rules = raw.rules;

    let mut action_names = HashSet::new();
    for a in raw.actions {
        if !action_names.insert(a.name.clone()) {
            return Err(PddlError::Duplicate {
                kind: "action",
                name: a.name,
            });
        }
        let context = format!("action '{}'", a.name);
        for p in &a.params {
            known(&domain.types, &p.ty)?;
        }
        distinct_vars(&a.params, &context)?;
        for l in &a.precondition {
            check_lifted(&domain, &l.atom, &a.params, &context, false)?;
        }
        for l in &a.effect {
            check_lifted(&domain, &l.atom, &a.params, &context, false)?;
            if domain.is_axiom(&l.atom.predicate) {
                return Err(PddlError::Invalid(format!(
                    "{context} changes '{}', which is defined by derived rules",
                    l.atom.predicate
                )));
            }
        }
        domain.actions.push(a);
    }
    Ok(domain)
}

fn distinct_vars(params: &[Param], context: &str) -> Result<(), PddlError> {
    let mut seen = HashSet::new();
    for p in params {
        if !seen.insert(&p.name) {
            return Err(PddlError::Duplicate {
                kind: "variable",
                name: format!("?{} in {context}", p.name),
            });
        }
    }
    Ok(())
}

fn check_lifted(
    domain: &Domain,
    a: &Atom,
    scope: &[Param],
    context: &str,
    allow_eq: bool,
) -> Result<(), PddlError> {
    let var_type = |v: &str| {
        scope
            .iter()
            .find(|p| p.name == v)
            .map(|p| p.ty.as_str())
            .ok_or_else(|| PddlError::UndeclaredVariable {
                var: v.to_string(),
                context: context.to_string(),
            })
    };
    if a.predicate == EQUALITY {
        if !allow_eq {
            return Err(PddlError::Invalid(format!(
                "equality is only supported in derived rule bodies ({context})"
            )));
        }
        if a.args.len() != 2 {
            return Err(PddlError::Arity {
                name: EQUALITY.into(),
                expected: 2,
                found: a.args.len(),
            });
        }
        for v in &a.args {
            var_type(v)?;
        }
        return Ok(());
    }
    let sig = domain
        .predicate(&a.predicate)
        .ok_or_else(|| PddlError::UnknownPredicate(a.predicate.clone()))?;
    if sig.arity() != a.arity() {
        return Err(PddlError::Arity {
            name: a.predicate.clone(),
            expected: sig.arity(),
            found: a.arity(),
        });
    }
    for (i, (v, s)) in a.args.iter().zip(&sig.params).enumerate() {
        let t = var_type(v)?;
        if !domain.types.comparable(t, &s.ty) {
            return Err(PddlError::TypeMismatch {
                atom: a.to_pddl(true),
                position: i + 1,
                expected: s.ty.clone(),
                found: t.to_string(),
            });
        }
    }
    Ok(())
}

fn typed_params(ps: &[Param]) -> String {
    ps.iter()
        .map(|p| format!("?{} - {}", p.name, p.ty))
        .collect::<Vec<_>>()
        .join(" ")
}

fn formula(lits: &[Literal]) -> String {
    match lits {
        [] => "()".to_string(),
        [one] => one.to_pddl(true),
        many => format!(
            "(and {})",
            many.iter()
                .map(|l| l.to_pddl(true))
                .collect::<Vec<_>>()
                .join(" ")
        ),
    }
}

/// Canonical domain text. Declaration order is preserved; the observed
/// section is always written out.
pub fn serialize_domain(d: &Domain) -> String {
    let mut s = format!("(define (domain {})\n", d.name);
    if !d.requirements.is_empty() {
        s += &format!("  (:requirements {})\n", d.requirements.join(" "));
    }
    s += "  (:types";
    for (t, p) in d.types.entries() {
        s += &format!(" {t} - {p}");
    }
    s += ")\n  (:predicates\n";
    for p in &d.predicates {
        let ps = typed_params(&p.params);
        if ps.is_empty() {
            s += &format!("    ({})\n", p.name);
        } else {
            s += &format!("    ({} {})\n", p.name, ps);
        }
    }
    s += "  )\n  (:observed";
    for p in d.observed() {
        s += &format!(" {}", p.name);
    }
    s += ")\n";
    for r in &d.rules {
        let ps = typed_params(&r.params);
        let head = if ps.is_empty() {
            format!("({})", r.head.predicate)
        } else {
            format!("({} {})", r.head.predicate, ps)
        };
        let body: Vec<Literal> = r.body.iter().cloned().map(Literal::pos).collect();
        let body = if r.exists.is_empty() {
            formula(&body)
        } else {
            format!("(exists ({}) {})", typed_params(&r.exists), formula(&body))
        };
        s += &format!("  (:derived {head}\n    {body})\n");
    }
    for a in &d.actions {
        s += &format!(
            "  (:action {}\n    :parameters ({})\n    :precondition {}\n    :effect {})\n",
            a.name,
            typed_params(&a.params),
            formula(&a.precondition),
            formula(&a.effect)
        );
    }
    s += ")\n";
    s
}

fn known(types: &TypeHierarchy, t: &str) -> Result<(), PddlError> {
    if types.contains(t) {
        Ok(())
    } else {
        Err(PddlError::UnknownType(t.to_string()))
    }
}
