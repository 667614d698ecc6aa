use std::collections::{BTreeSet, HashMap};

use super::ground::{ground_actions, substitute, TypeEnv};
use crate::pddl::{Domain, GroundAtom, PlanStep, Problem, EQUALITY};

#[derive(Debug, Clone)]
pub(crate) struct TaskAction {
    pub step: PlanStep,
    pub pre_pos: Vec<u32>,
    pub pre_neg: Vec<u32>,
    pub add: Vec<u32>,
    pub del: Vec<u32>,
}

#[derive(Debug, Clone)]
pub(crate) struct TaskAxiom {
    pub head: u32,
    pub body: Vec<u32>,
}

/// Problem compiled to integer atoms. Actions and axioms whose static
/// preconditions fail in the initial state are dropped.
#[derive(Debug, Clone)]
pub(crate) struct Task {
    pub atoms: Vec<GroundAtom>,
    pub actions: Vec<TaskAction>,
    pub axioms: Vec<TaskAxiom>,
    /// For each atom, the axioms having it in their body.
    pub axiom_uses: Vec<Vec<u32>>,
    /// For each atom, the operators using it positively: action `i` is `i`,
    /// axiom `j` is `actions.len() + j`.
    pub op_uses: Vec<Vec<u32>>,
    pub init: Vec<u32>,
    pub goal_pos: Vec<u32>,
    pub goal_neg: Vec<u32>,
}

struct Interner {
    atoms: Vec<GroundAtom>,
    index: HashMap<GroundAtom, u32>,
}

impl Interner {
    fn id(&mut self, a: GroundAtom) -> u32 {
        if let Some(&i) = self.index.get(&a) {
            return i;
        }
        let i = self.atoms.len() as u32;
        self.index.insert(a.clone(), i);
        self.atoms.push(a);
        i
    }
}

impl Task {
    pub fn compile(domain: &Domain, problem: &Problem) -> Task {
        let env = TypeEnv::new(&domain.types, &problem.objects);
        let changed: BTreeSet<&str> = domain
            .actions
            .iter()
            .flat_map(|a| a.effect.iter().map(|l| l.atom.predicate.as_str()))
            .collect();
        let is_static =
            |p: &str| !changed.contains(p) && !domain.is_axiom(p) && domain.predicate(p).is_some();
        let static_ok = |a: &GroundAtom, negated: bool| {
            !is_static(&a.predicate) || problem.init.contains(a) != negated
        };

        let mut it = Interner {
            atoms: Vec::new(),
            index: HashMap::new(),
        };
        let mut init: Vec<u32> = problem.init.iter().map(|a| it.id(a.clone())).collect();
        init.sort_unstable();

        let mut axioms = Vec::new();
        for r in &domain.rules {
            let vars: Vec<_> = r.variables().cloned().collect();
            'binding: for b in env.bindings(&vars) {
                let mut body = Vec::new();
                for a in &r.body {
                    if a.predicate == EQUALITY {
                        let g = substitute(a, &vars, &b);
                        if g.args[0] != g.args[1] {
                            continue 'binding;
                        }
                        continue;
                    }
                    let g = substitute(a, &vars, &b);
                    if !static_ok(&g, false) {
                        continue 'binding;
                    }
                    body.push(g);
                }
                let head = it.id(substitute(&r.head, &vars, &b));
                let body = body.into_iter().map(|g| it.id(g)).collect();
                axioms.push(TaskAxiom { head, body });
            }
        }

        let mut actions = Vec::new();
        for g in ground_actions(domain, &problem.objects) {
            if !g.precondition.iter().all(|l| static_ok(&l.atom, l.negated)) {
                continue;
            }
            let mut pre_pos = Vec::new();
            let mut pre_neg = Vec::new();
            for l in g.precondition {
                if is_static(&l.atom.predicate) {
                    continue;
                }
                let id = it.id(l.atom);
                if l.negated {
                    pre_neg.push(id);
                } else {
                    pre_pos.push(id);
                }
            }
            actions.push(TaskAction {
                step: PlanStep {
                    action: g.schema,
                    args: g.args,
                },
                pre_pos,
                pre_neg,
                add: g.add.into_iter().map(|a| it.id(a)).collect(),
                del: g.del.into_iter().map(|a| it.id(a)).collect(),
            });
        }

        let mut goal_pos = Vec::new();
        let mut goal_neg = Vec::new();
        for l in &problem.goal {
            let id = it.id(l.atom.clone());
            if l.negated {
                goal_neg.push(id);
            } else {
                goal_pos.push(id);
            }
        }

        let mut axiom_uses = vec![Vec::new(); it.atoms.len()];
        for (i, ax) in axioms.iter().enumerate() {
            for &b in &ax.body {
                axiom_uses[b as usize].push(i as u32);
            }
        }
        let mut op_uses = vec![Vec::new(); it.atoms.len()];
        for (i, a) in actions.iter().enumerate() {
            for &p in &a.pre_pos {
                op_uses[p as usize].push(i as u32);
            }
        }
        for (i, ax) in axioms.iter().enumerate() {
            for &b in &ax.body {
                op_uses[b as usize].push((actions.len() + i) as u32);
            }
        }
        Task {
            atoms: it.atoms,
            actions,
            axioms,
            axiom_uses,
            op_uses,
            init,
            goal_pos,
            goal_neg,
        }
    }

    /// Truth of every atom in the closure of `state` (sorted base atom ids).
    pub fn closure(&self, state: &[u32]) -> Vec<bool> {
        let mut truth = vec![false; self.atoms.len()];
        let mut missing: Vec<usize> = self.axioms.iter().map(|a| a.body.len()).collect();
        let mut queue: Vec<u32> = Vec::with_capacity(state.len());
        for &s in state {
            if !truth[s as usize] {
                truth[s as usize] = true;
                queue.push(s);
            }
        }
        for (i, ax) in self.axioms.iter().enumerate() {
            if missing[i] == 0 && !truth[ax.head as usize] {
                truth[ax.head as usize] = true;
                queue.push(ax.head);
            }
        }
        while let Some(a) = queue.pop() {
            for &u in &self.axiom_uses[a as usize] {
                let m = &mut missing[u as usize];
                *m -= 1;
                if *m == 0 {
                    let h = self.axioms[u as usize].head;
                    if !truth[h as usize] {
                        truth[h as usize] = true;
                        queue.push(h);
                    }
                }
            }
        }
        truth
    }

    pub fn applicable(&self, a: &TaskAction, truth: &[bool]) -> bool {
        a.pre_pos.iter().all(|&p| truth[p as usize])
            && a.pre_neg.iter().all(|&p| !truth[p as usize])
    }

    /// Delete effects first, then add effects.
    pub fn apply(&self, a: &TaskAction, state: &[u32]) -> Vec<u32> {
        let mut next: Vec<u32> = state
            .iter()
            .copied()
            .filter(|s| !a.del.contains(s))
            .collect();
        for &x in &a.add {
            if let Err(pos) = next.binary_search(&x) {
                next.insert(pos, x);
            }
        }
        next
    }

    pub fn is_goal(&self, truth: &[bool]) -> bool {
        self.goal_pos.iter().all(|&g| truth[g as usize])
            && self.goal_neg.iter().all(|&g| !truth[g as usize])
    }
}
