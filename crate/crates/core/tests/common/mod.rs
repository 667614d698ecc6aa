//! Brute-force reference semantics shared by the integration tests. Nothing
//! here calls into the planner.
#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap, VecDeque};

use groundplan::pddl::{Atom, Domain, Literal, Param, Plan, PlanStep, Problem};

pub type State = BTreeSet<Atom>;

pub fn is_subtype<'a>(d: &'a Domain, mut t: &'a str, of: &str) -> bool {
    loop {
        if t == of {
            return true;
        }
        match d.types.entries().iter().find(|(c, _)| c == t) {
            Some((_, p)) => t = p,
            None => return false,
        }
    }
}

fn objects_of<'a>(d: &Domain, objects: &'a [(String, String)], ty: &str) -> Vec<&'a str> {
    objects
        .iter()
        .filter(|(_, t)| is_subtype(d, t, ty))
        .map(|(n, _)| n.as_str())
        .collect()
}

/// Every assignment of objects to `params`, in lexicographic order of the
/// object list. Repeats are allowed.
pub fn assignments<'a>(
    d: &Domain,
    objects: &'a [(String, String)],
    params: &[Param],
) -> Vec<Vec<&'a str>> {
    let mut out = vec![vec![]];
    for p in params {
        let dom = objects_of(d, objects, &p.ty);
        out = out
            .into_iter()
            .flat_map(|prefix: Vec<&str>| {
                dom.iter().map(move |o| {
                    let mut v = prefix.clone();
                    v.push(o);
                    v
                })
            })
            .collect();
    }
    out
}

fn bind(a: &Atom, params: &[Param], vals: &[&str]) -> Atom {
    Atom::new(
        a.predicate.clone(),
        a.args
            .iter()
            .map(|v| vals[params.iter().position(|p| &p.name == v).unwrap()].to_string()),
    )
}

/// Least fixpoint of all rules at once.
pub fn derive(d: &Domain, objects: &[(String, String)], base: &State) -> State {
    let mut all = base.clone();
    loop {
        let mut grew = false;
        for r in &d.rules {
            let vars: Vec<Param> = r.variables().cloned().collect();
            for vals in assignments(d, objects, &vars) {
                let ok = r.body.iter().all(|b| {
                    if b.predicate == "=" {
                        let g = bind(b, &vars, &vals);
                        g.args[0] == g.args[1]
                    } else {
                        all.contains(&bind(b, &vars, &vals))
                    }
                });
                if ok && all.insert(bind(&r.head, &vars, &vals)) {
                    grew = true;
                }
            }
        }
        if !grew {
            return all;
        }
    }
}

pub fn holds(lits: &[Literal], full: &State) -> bool {
    lits.iter().all(|l| full.contains(&l.atom) != l.negated)
}

pub struct NaiveAction {
    pub step: PlanStep,
    pub pre: Vec<Literal>,
    pub add: Vec<Atom>,
    pub del: Vec<Atom>,
}

pub fn naive_ground(d: &Domain, objects: &[(String, String)]) -> Vec<NaiveAction> {
    let mut out = vec![];
    for a in &d.actions {
        for vals in assignments(d, objects, &a.params) {
            let lit = |l: &Literal| Literal {
                negated: l.negated,
                atom: bind(&l.atom, &a.params, &vals),
            };
            out.push(NaiveAction {
                step: PlanStep::new(a.name.clone(), vals.iter().copied()),
                pre: a.precondition.iter().map(lit).collect(),
                add: a.add_effects().map(|x| bind(x, &a.params, &vals)).collect(),
                del: a.del_effects().map(|x| bind(x, &a.params, &vals)).collect(),
            });
        }
    }
    out
}

pub fn step_state(s: &State, a: &NaiveAction) -> State {
    let mut n = s.clone();
    for x in &a.del {
        n.remove(x);
    }
    n.extend(a.add.iter().cloned());
    n
}

/// Runs `plan` and reports `Err(step)` at the first inapplicable or unknown
/// step, `Err(len)` if the goal fails at the end.
pub fn naive_run(
    d: &Domain,
    objects: &[(String, String)],
    init: &State,
    goal: &[Literal],
    plan: &Plan,
) -> Result<(), usize> {
    let acts = naive_ground(d, objects);
    let mut s = init.clone();
    for (i, st) in plan.steps.iter().enumerate() {
        let Some(a) = acts.iter().find(|a| &a.step == st) else {
            return Err(i);
        };
        if !holds(&a.pre, &derive(d, objects, &s)) {
            return Err(i);
        }
        s = step_state(&s, a);
    }
    if holds(goal, &derive(d, objects, &s)) {
        Ok(())
    } else {
        Err(plan.len())
    }
}

/// Length of a shortest plan, or `None` if the goal is unreachable.
pub fn bfs_length(d: &Domain, p: &Problem) -> Option<usize> {
    let acts = naive_ground(d, &p.objects);
    let mut dist: HashMap<State, usize> = HashMap::new();
    let mut q = VecDeque::new();
    dist.insert(p.init.clone(), 0);
    q.push_back(p.init.clone());
    while let Some(s) = q.pop_front() {
        let k = dist[&s];
        let full = derive(d, &p.objects, &s);
        if holds(&p.goal, &full) {
            return Some(k);
        }
        for a in &acts {
            if holds(&a.pre, &full) {
                let n = step_state(&s, a);
                if !dist.contains_key(&n) {
                    dist.insert(n.clone(), k + 1);
                    q.push_back(n);
                }
            }
        }
    }
    None
}

pub struct ValidationCase {
    pub domain: Domain,
    pub objects: Vec<(String, String)>,
    pub init: State,
    pub goal: Vec<Literal>,
    pub plan: Plan,
}

fn pick<'a, T>(rng: &mut impl rand::Rng, v: &'a [T]) -> &'a T {
    &v[rng.random_range(0..v.len())]
}

/// Random init, goal and plan over three blocks or two disks. Plans mostly
/// follow applicable steps so failures happen at varying depths; some steps
/// are arbitrary or malformed.
pub fn random_validation_case(rng: &mut impl rand::Rng) -> ValidationCase {
    use groundplan::bench::DomainKind;
    let hanoi = rng.random_bool(0.5);
    let (domain, objects): (Domain, Vec<(String, String)>) = if hanoi {
        let o = [
            ("d1", "disk"),
            ("d2", "disk"),
            ("p1", "peg"),
            ("p2", "peg"),
            ("p3", "peg"),
        ];
        (
            DomainKind::Hanoi.domain(),
            o.iter()
                .map(|(a, b)| (a.to_string(), b.to_string()))
                .collect(),
        )
    } else {
        let o = ["b1", "b2", "b3"];
        (
            DomainKind::Blocksworld.domain(),
            o.iter()
                .map(|a| (a.to_string(), "block".to_string()))
                .collect(),
        )
    };
    let mut init = State::new();
    let candidates: Vec<Atom> = domain
        .predicates
        .iter()
        .filter(|p| p.is_observed() || domain.rules.iter().all(|r| r.head.predicate != p.name))
        .flat_map(|p| {
            assignments(&domain, &objects, &p.params)
                .into_iter()
                .map(move |v| Atom::new(p.name.clone(), v))
        })
        .collect();
    for a in &candidates {
        if rng.random_bool(0.25) {
            init.insert(a.clone());
        }
    }
    let atoms: Vec<Atom> = derive(&domain, &objects, &candidates.iter().cloned().collect())
        .into_iter()
        .collect();
    let goal = (0..rng.random_range(0..4))
        .map(|_| Literal {
            negated: rng.random_bool(0.4),
            atom: pick(rng, &atoms).clone(),
        })
        .collect();
    let acts = naive_ground(&domain, &objects);
    let mut s = init.clone();
    let mut plan = Plan::default();
    for _ in 0..rng.random_range(0..7) {
        let full = derive(&domain, &objects, &s);
        let ok: Vec<&NaiveAction> = acts.iter().filter(|a| holds(&a.pre, &full)).collect();
        let roll = rng.random_range(0..100);
        let step = if roll < 75 && !ok.is_empty() {
            let a = *pick(rng, &ok);
            s = step_state(&s, a);
            a.step.clone()
        } else if roll < 92 {
            let a = pick(rng, &acts);
            s = step_state(&s, a);
            a.step.clone()
        } else {
            let mut st = pick(rng, &acts).step.clone();
            match roll % 3 {
                0 => st.action = "teleport".into(),
                1 => {
                    st.args.pop();
                }
                _ => st.args[0] = "ghost".into(),
            }
            st
        };
        plan.steps.push(step);
    }
    ValidationCase {
        domain,
        objects,
        init,
        goal,
        plan,
    }
}
