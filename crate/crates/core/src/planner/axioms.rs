use std::collections::{BTreeSet, HashMap};

use super::ground::TypeEnv;
use crate::pddl::{stratify, DerivedRule, GroundAtom, EQUALITY};

/// Least fixpoint of `rules` over `base`, evaluated stratum by stratum.
/// Returns only the derived atoms. Every rule variable must bind to an
/// object of its declared type.
pub fn axiom_closure(
    base: &BTreeSet<GroundAtom>,
    rules: &[DerivedRule],
    env: &TypeEnv,
) -> BTreeSet<GroundAtom> {
    let strata = stratify(rules).unwrap_or_else(|_| vec![(0..rules.len()).collect()]);
    let mut facts: HashMap<&str, Vec<Vec<String>>> = HashMap::new();
    for a in base {
        facts.entry(&a.predicate).or_default().push(a.args.clone());
    }
    let mut known: BTreeSet<GroundAtom> = base.clone();
    let mut derived = BTreeSet::new();
    for stratum in strata {
        loop {
            let mut fresh = Vec::new();
            for &ri in &stratum {
                let r = &rules[ri];
                for head in fire(r, &facts, env) {
                    if !known.contains(&head) {
                        fresh.push(head);
                    }
                }
            }
            if fresh.is_empty() {
                break;
            }
            for h in fresh {
                if known.insert(h.clone()) {
                    facts
                        .entry(rule_pred(rules, &h.predicate))
                        .or_default()
                        .push(h.args.clone());
                    derived.insert(h);
                }
            }
        }
    }
    derived
}

fn rule_pred<'r>(rules: &'r [DerivedRule], name: &str) -> &'r str {
    rules
        .iter()
        .find(|r| r.head.predicate == name)
        .map(|r| r.head.predicate.as_str())
        .expect("derived atom comes from a rule head")
}

/// All head instances of `r` supported by `facts`.
fn fire(
    r: &DerivedRule,
    facts: &HashMap<&str, Vec<Vec<String>>>,
    env: &TypeEnv,
) -> Vec<GroundAtom> {
    let vars: Vec<&str> = r.variables().map(|p| p.name.as_str()).collect();
    let types: Vec<&str> = r.variables().map(|p| p.ty.as_str()).collect();
    let atoms: Vec<_> = r.body.iter().filter(|a| a.predicate != EQUALITY).collect();
    let eqs: Vec<_> = r.body.iter().filter(|a| a.predicate == EQUALITY).collect();
    let slot = |v: &str| {
        vars.iter()
            .position(|x| *x == v)
            .expect("declared variable")
    };
    let mut out = Vec::new();
    let mut binding: Vec<Option<String>> = vec![None; vars.len()];

    #[allow(clippy::too_many_arguments)]
    fn join(
        k: usize,
        atoms: &[&crate::pddl::Atom],
        facts: &HashMap<&str, Vec<Vec<String>>>,
        binding: &mut Vec<Option<String>>,
        slot: &dyn Fn(&str) -> usize,
        finish: &mut dyn FnMut(&mut Vec<Option<String>>),
    ) {
        if k == atoms.len() {
            finish(binding);
            return;
        }
        let a = atoms[k];
        let Some(rows) = facts.get(a.predicate.as_str()) else {
            return;
        };
        for row in rows {
            let saved = binding.clone();
            let ok = a.args.iter().zip(row).all(|(v, o)| {
                let s = slot(v);
                match &binding[s] {
                    Some(b) => b == o,
                    None => {
                        binding[s] = Some(o.clone());
                        true
                    }
                }
            });
            if ok {
                join(k + 1, atoms, facts, binding, slot, finish);
            }
            *binding = saved;
        }
    }

    let mut finish = |b: &mut Vec<Option<String>>| {
        complete(b, 0, &eqs, &slot, &types, env, &mut |full: &[String]| {
            out.push(GroundAtom {
                predicate: r.head.predicate.clone(),
                args: r.head.args.iter().map(|v| full[slot(v)].clone()).collect(),
            });
        });
    };
    join(0, &atoms, facts, &mut binding, &slot, &mut finish);
    out.sort();
    out.dedup();
    out
}

/// Applies equalities, enumerates still-unbound variables over their type
/// and checks every binding against its declared type.
fn complete(
    b: &mut Vec<Option<String>>,
    next_eq: usize,
    eqs: &[&crate::pddl::Atom],
    slot: &dyn Fn(&str) -> usize,
    types: &[&str],
    env: &TypeEnv,
    emit: &mut dyn FnMut(&[String]),
) {
    if next_eq < eqs.len() {
        let (x, y) = (slot(&eqs[next_eq].args[0]), slot(&eqs[next_eq].args[1]));
        match (b[x].clone(), b[y].clone()) {
            (Some(u), Some(v)) => {
                if u == v {
                    complete(b, next_eq + 1, eqs, slot, types, env, emit);
                }
            }
            (Some(u), None) | (None, Some(u)) => {
                let free = if b[x].is_none() { x } else { y };
                b[free] = Some(u);
                complete(b, next_eq + 1, eqs, slot, types, env, emit);
                b[free] = None;
            }
            (None, None) => {
                for o in env.of_type(types[x]) {
                    b[x] = Some(o.to_string());
                    b[y] = Some(o.to_string());
                    complete(b, next_eq + 1, eqs, slot, types, env, emit);
                }
                b[x] = None;
                b[y] = None;
            }
        }
        return;
    }
    if let Some(free) = b.iter().position(Option::is_none) {
        for o in env.of_type(types[free]) {
            b[free] = Some(o.to_string());
            complete(b, next_eq, eqs, slot, types, env, emit);
        }
        b[free] = None;
        return;
    }
    let full: Vec<String> = b.iter().map(|x| x.clone().expect("bound")).collect();
    if full.iter().zip(types).all(|(o, t)| env.has_type(o, t)) {
        emit(&full);
    }
}
