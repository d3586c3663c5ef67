//! Single-predicate linear CHC systems and ground example instances.

use std::collections::HashSet;
use std::fmt;

use num_bigint::BigInt;
use thiserror::Error;

use super::formula::{Formula, Var};

/// `pre(x) => F(x)`, `trans(x, y) /\ F(x) => F(y)`, `F(x) => post(x)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChcSystem {
    vars: Vec<Var>,
    primed: Vec<Var>,
    pub pre: Formula,
    pub trans: Formula,
    pub post: Formula,
    /// Name of the unknown predicate, used when printing witnesses.
    pub pred_name: String,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ChcError {
    #[error("a CHC system needs at least one variable")]
    NoVariables,
    #[error("duplicate variable `{0}`")]
    Duplicate(String),
    #[error("{which} mentions undeclared variable `{var}`")]
    Undeclared { which: &'static str, var: String },
    #[error("{0} primed variables given for {1} variables")]
    PrimedArity(usize, usize),
}

/// Primed name used for `x` in transition formulas.
pub fn primed_name(v: &Var) -> Var {
    Var::new(&format!("{}!", v.name()))
}

impl ChcSystem {
    /// Builds a system whose primed variables are `x!` for each `x`.
    pub fn new(
        vars: Vec<Var>,
        pre: Formula,
        trans: Formula,
        post: Formula,
    ) -> Result<Self, ChcError> {
        let primed = vars.iter().map(primed_name).collect();
        Self::with_primed(vars, primed, pre, trans, post)
    }

    pub fn with_primed(
        vars: Vec<Var>,
        primed: Vec<Var>,
        pre: Formula,
        trans: Formula,
        post: Formula,
    ) -> Result<Self, ChcError> {
        if vars.is_empty() {
            return Err(ChcError::NoVariables);
        }
        if primed.len() != vars.len() {
            return Err(ChcError::PrimedArity(primed.len(), vars.len()));
        }
        let mut seen = HashSet::new();
        for v in vars.iter().chain(&primed) {
            if !seen.insert(v.clone()) {
                return Err(ChcError::Duplicate(v.name().to_string()));
            }
        }
        let check = |which: &'static str, f: &Formula, allowed: &dyn Fn(&Var) -> bool| {
            f.free_vars()
                .into_iter()
                .find(|v| !allowed(v))
                .map_or(Ok(()), |v| {
                    Err(ChcError::Undeclared {
                        which,
                        var: v.name().to_string(),
                    })
                })
        };
        check("pre", &pre, &|v| vars.contains(v))?;
        check("post", &post, &|v| vars.contains(v))?;
        check("trans", &trans, &|v| vars.contains(v) || primed.contains(v))?;
        Ok(ChcSystem {
            vars,
            primed,
            pre,
            trans,
            post,
            pred_name: "inv-f".into(),
        })
    }

    pub fn arity(&self) -> usize {
        self.vars.len()
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    pub fn primed(&self) -> &[Var] {
        &self.primed
    }

    /// Renders the native problem format.
    pub fn to_native(&self) -> String {
        let vars: Vec<String> = self.vars.iter().map(|v| v.to_string()).collect();
        let mut s = format!("(vars ({}))\n", vars.join(" "));
        if self.primed.iter().zip(&self.vars).any(|(p, v)| *p != primed_name(v)) {
            let ps: Vec<String> = self.primed.iter().map(|v| v.to_string()).collect();
            s.push_str(&format!("(primed ({}))\n", ps.join(" ")));
        }
        s.push_str(&format!("(pre {})\n(trans {})\n(post {})\n", self.pre, self.trans, self.post));
        s
    }
}

/// An integer tuple of the predicate's arity.
pub type Point = Vec<BigInt>;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum ExampleClause {
    /// `F(c)` must hold.
    Positive(Point),
    /// `F(c)` must not hold.
    Negative(Point),
    /// `F(c) => F(d)`.
    Implication(Point, Point),
}

fn fmt_point(f: &mut fmt::Formatter<'_>, p: &Point) -> fmt::Result {
    let parts: Vec<String> = p.iter().map(|c| c.to_string()).collect();
    write!(f, "({})", parts.join(","))
}

impl fmt::Display for ExampleClause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExampleClause::Positive(c) => {
                f.write_str("F")?;
                fmt_point(f, c)
            }
            ExampleClause::Negative(c) => {
                f.write_str("~F")?;
                fmt_point(f, c)
            }
            ExampleClause::Implication(c, d) => {
                f.write_str("F")?;
                fmt_point(f, c)?;
                f.write_str(" => F")?;
                fmt_point(f, d)
            }
        }
    }
}

impl ExampleClause {
    pub fn points(&self) -> Vec<&Point> {
        match self {
            ExampleClause::Positive(c) | ExampleClause::Negative(c) => vec![c],
            ExampleClause::Implication(c, d) => vec![c, d],
        }
    }

    /// Whether a predicate, given as a membership test, satisfies this clause.
    pub fn satisfied_by<E>(
        &self,
        mut holds: impl FnMut(&Point) -> Result<bool, E>,
    ) -> Result<bool, E> {
        Ok(match self {
            ExampleClause::Positive(c) => holds(c)?,
            ExampleClause::Negative(c) => !holds(c)?,
            ExampleClause::Implication(c, d) => !holds(c)? || holds(d)?,
        })
    }
}

/// Deduplicated, insertion-ordered set of example clauses.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ExampleInstance {
    clauses: Vec<ExampleClause>,
    seen: HashSet<ExampleClause>,
}

impl ExampleInstance {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a clause; returns false if it was already present.
    pub fn insert(&mut self, c: ExampleClause) -> bool {
        if self.seen.insert(c.clone()) {
            self.clauses.push(c);
            true
        } else {
            false
        }
    }

    pub fn clauses(&self) -> &[ExampleClause] {
        &self.clauses
    }

    pub fn len(&self) -> usize {
        self.clauses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clauses.is_empty()
    }
}

impl FromIterator<ExampleClause> for ExampleInstance {
    fn from_iter<I: IntoIterator<Item = ExampleClause>>(iter: I) -> Self {
        let mut e = ExampleInstance::new();
        for c in iter {
            e.insert(c);
        }
        e
    }
}

/// Shorthand for building points in tests and examples.
pub fn point(vals: &[i64]) -> Point {
    vals.iter().map(|&v| BigInt::from(v)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logic::Term;

    #[test]
    fn rejects_undeclared_in_trans() {
        let x = Var::new("x");
        let err = ChcSystem::new(
            vec![x.clone()],
            Formula::True,
            Formula::eq(Term::var("x!"), Term::var("w")),
            Formula::True,
        )
        .unwrap_err();
        assert_eq!(
            err,
            ChcError::Undeclared {
                which: "trans",
                var: "w".into()
            }
        );
    }

    #[test]
    fn post_may_not_mention_primed() {
        let err = ChcSystem::new(
            vec![Var::new("x")],
            Formula::True,
            Formula::True,
            Formula::ge(Term::var("x!"), Term::constant(0)),
        )
        .unwrap_err();
        assert!(matches!(err, ChcError::Undeclared { which: "post", .. }));
    }

    #[test]
    fn example_instance_dedups() {
        let mut e = ExampleInstance::new();
        assert!(e.insert(ExampleClause::Positive(point(&[0]))));
        assert!(!e.insert(ExampleClause::Positive(point(&[0]))));
        assert!(e.insert(ExampleClause::Negative(point(&[0]))));
        assert_eq!(e.len(), 2);
        assert_eq!(e.clauses()[1].to_string(), "~F(0)");
    }
}
