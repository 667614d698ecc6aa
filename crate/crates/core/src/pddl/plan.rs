use std::fmt;

use super::sexpr::{ident, read_all, syntax};
use super::{Domain, PddlError};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PlanStep {
    pub action: String,
    pub args: Vec<String>,
}

impl PlanStep {
    pub fn new<S: Into<String>>(
        action: impl Into<String>,
        args: impl IntoIterator<Item = S>,
    ) -> Self {
        PlanStep {
            action: action.into(),
            args: args.into_iter().map(Into::into).collect(),
        }
    }
}

impl fmt::Display for PlanStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}", self.action)?;
        for a in &self.args {
            write!(f, " {a}")?;
        }
        write!(f, ")")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Plan {
    pub steps: Vec<PlanStep>,
}

impl Plan {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Fails on the first step naming an unknown action or with the wrong
    /// number of arguments.
    pub fn check(&self, domain: &Domain) -> Result<(), PddlError> {
        for s in &self.steps {
            let a = domain
                .action(&s.action)
                .ok_or_else(|| PddlError::UnknownAction(s.action.clone()))?;
            if a.params.len() != s.args.len() {
                return Err(PddlError::Arity {
                    name: s.action.clone(),
                    expected: a.params.len(),
                    found: s.args.len(),
                });
            }
        }
        Ok(())
    }
}

impl fmt::Display for Plan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.steps {
            writeln!(f, "{s}")?;
        }
        Ok(())
    }
}

/// One `(action arg...)` per step; `;` comments are ignored.
pub fn parse_plan(text: &str) -> Result<Plan, PddlError> {
    let mut steps = Vec::new();
    for e in read_all(text)? {
        let l = e
            .as_list()
            .ok_or_else(|| syntax(e.pos(), "expected (action args...)"))?;
        let (head, args) = l
            .split_first()
            .ok_or_else(|| syntax(e.pos(), "empty plan step"))?;
        steps.push(PlanStep {
            action: ident(head)?,
            args: args.iter().map(ident).collect::<Result<_, _>>()?,
        });
    }
    Ok(Plan { steps })
}
