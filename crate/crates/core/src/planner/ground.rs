use std::collections::HashMap;

use crate::pddl::{Atom, Domain, GroundAtom, Literal, Param, TypeHierarchy, ROOT_TYPE};

/// Object names with their types, as seen by grounding.
#[derive(Debug, Clone)]
pub struct TypeEnv<'a> {
    pub hierarchy: &'a TypeHierarchy,
    objects: Vec<(String, String)>,
    index: HashMap<String, usize>,
}

impl<'a> TypeEnv<'a> {
    pub fn new(hierarchy: &'a TypeHierarchy, objects: &[(String, String)]) -> Self {
        let mut objects = objects.to_vec();
        objects.sort();
        objects.dedup_by(|a, b| a.0 == b.0);
        let index = objects
            .iter()
            .enumerate()
            .map(|(i, (n, _))| (n.clone(), i))
            .collect();
        TypeEnv {
            hierarchy,
            objects,
            index,
        }
    }

    pub fn objects(&self) -> &[(String, String)] {
        &self.objects
    }

    pub fn type_of(&self, name: &str) -> &str {
        self.index
            .get(name)
            .map_or(ROOT_TYPE, |&i| self.objects[i].1.as_str())
    }

    pub fn has_type(&self, name: &str, ty: &str) -> bool {
        if ty == ROOT_TYPE {
            return true;
        }
        self.index.contains_key(name) && self.hierarchy.is_subtype(self.type_of(name), ty)
    }

    /// Objects of type `ty` (or a subtype), sorted by name.
    pub fn of_type(&self, ty: &str) -> Vec<&str> {
        self.objects
            .iter()
            .filter(|(_, t)| self.hierarchy.is_subtype(t, ty))
            .map(|(n, _)| n.as_str())
            .collect()
    }

    /// Every type-valid assignment of objects to `params`, in lexicographic
    /// order of object names.
    pub fn bindings(&self, params: &[Param]) -> Vec<Vec<&str>> {
        let domains: Vec<Vec<&str>> = params.iter().map(|p| self.of_type(&p.ty)).collect();
        let mut out = Vec::new();
        if domains.iter().any(Vec::is_empty) {
            return out;
        }
        let mut idx = vec![0; domains.len()];
        loop {
            out.push(idx.iter().zip(&domains).map(|(&i, d)| d[i]).collect());
            let mut k = domains.len();
            loop {
                if k == 0 {
                    return out;
                }
                k -= 1;
                idx[k] += 1;
                if idx[k] < domains[k].len() {
                    break;
                }
                idx[k] = 0;
            }
        }
    }
}

pub(crate) fn substitute(a: &Atom, params: &[Param], binding: &[&str]) -> GroundAtom {
    GroundAtom {
        predicate: a.predicate.clone(),
        args: a
            .args
            .iter()
            .map(|v| {
                let i = params
                    .iter()
                    .position(|p| p.name == *v)
                    .expect("variables are checked at parse time");
                binding[i].to_string()
            })
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GroundAction {
    pub schema: String,
    pub args: Vec<String>,
    pub precondition: Vec<Literal>,
    pub add: Vec<GroundAtom>,
    pub del: Vec<GroundAtom>,
}

impl GroundAction {
    pub fn name(&self) -> String {
        let mut s = format!("({}", self.schema);
        for a in &self.args {
            s.push(' ');
            s.push_str(a);
        }
        s.push(')');
        s
    }
}

/// All type-valid bindings of every schema, schemas in declaration order.
pub fn ground_actions(domain: &Domain, objects: &[(String, String)]) -> Vec<GroundAction> {
    let env = TypeEnv::new(&domain.types, objects);
    let mut out = Vec::new();
    for a in &domain.actions {
        for b in env.bindings(&a.params) {
            let sub = |x: &Atom| substitute(x, &a.params, &b);
            out.push(GroundAction {
                schema: a.name.clone(),
                args: b.iter().map(|s| s.to_string()).collect(),
                precondition: a
                    .precondition
                    .iter()
                    .map(|l| Literal {
                        negated: l.negated,
                        atom: sub(&l.atom),
                    })
                    .collect(),
                add: a.add_effects().map(sub).collect(),
                del: a.del_effects().map(sub).collect(),
            });
        }
    }
    out
}
