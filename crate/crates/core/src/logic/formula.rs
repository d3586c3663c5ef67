//! Quantifier-free linear integer arithmetic.
//!
//! Comparisons are normalized on construction to `t >= 0` or `t = 0` where
//! `t` is a linear combination of variables plus a constant.

use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};
use thiserror::Error;

use crate::sexp::smt_symbol;

/// A variable name. Cheap to clone.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(Arc<str>);

impl Var {
    pub fn new(name: &str) -> Self {
        Var(Arc::from(name))
    }

    pub fn name(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&smt_symbol(&self.0))
    }
}

impl From<&str> for Var {
    fn from(s: &str) -> Self {
        Var::new(s)
    }
}

/// Linear term `sum(coeff * var) + constant`. Zero coefficients are never stored.
#[derive(Clone, PartialEq, Eq, Hash, Debug, Default)]
pub struct Term {
    coeffs: BTreeMap<Var, BigInt>,
    constant: BigInt,
}

impl Term {
    pub fn constant(c: impl Into<BigInt>) -> Self {
        Term {
            coeffs: BTreeMap::new(),
            constant: c.into(),
        }
    }

    pub fn var(v: impl Into<Var>) -> Self {
        let mut coeffs = BTreeMap::new();
        coeffs.insert(v.into(), BigInt::one());
        Term {
            coeffs,
            constant: BigInt::zero(),
        }
    }

    pub fn from_parts(
        coeffs: impl IntoIterator<Item = (Var, BigInt)>,
        constant: impl Into<BigInt>,
    ) -> Self {
        let mut t = Term::constant(constant);
        for (v, c) in coeffs {
            t.add_monomial(v, c);
        }
        t
    }

    pub fn coeffs(&self) -> &BTreeMap<Var, BigInt> {
        &self.coeffs
    }

    pub fn constant_part(&self) -> &BigInt {
        &self.constant
    }

    /// `Some(c)` when the term has no variables.
    pub fn as_constant(&self) -> Option<&BigInt> {
        self.coeffs.is_empty().then_some(&self.constant)
    }

    pub fn add_monomial(&mut self, v: Var, c: BigInt) {
        if c.is_zero() {
            return;
        }
        match self.coeffs.entry(v) {
            Entry::Vacant(e) => {
                e.insert(c);
            }
            Entry::Occupied(mut e) => {
                *e.get_mut() += c;
                if e.get().is_zero() {
                    e.remove();
                }
            }
        }
    }

    pub fn add(&self, other: &Term) -> Term {
        let mut t = self.clone();
        for (v, c) in &other.coeffs {
            t.add_monomial(v.clone(), c.clone());
        }
        t.constant += &other.constant;
        t
    }

    pub fn scale(&self, k: &BigInt) -> Term {
        if k.is_zero() {
            return Term::default();
        }
        Term {
            coeffs: self.coeffs.iter().map(|(v, c)| (v.clone(), c * k)).collect(),
            constant: &self.constant * k,
        }
    }

    pub fn neg(&self) -> Term {
        self.scale(&-BigInt::one())
    }

    pub fn sub(&self, other: &Term) -> Term {
        self.add(&other.neg())
    }

    pub fn vars(&self) -> impl Iterator<Item = &Var> {
        self.coeffs.keys()
    }

    pub fn eval(&self, sigma: &VarAssignment) -> Result<BigInt, EvalError> {
        let mut acc = self.constant.clone();
        for (v, c) in &self.coeffs {
            let val = sigma.get(v).ok_or_else(|| EvalError::Unbound(v.clone()))?;
            acc += c * val;
        }
        Ok(acc)
    }

    /// Simultaneous substitution of variables by terms.
    pub fn substitute(&self, m: &BTreeMap<Var, Term>) -> Term {
        let mut out = Term::constant(self.constant.clone());
        for (v, c) in &self.coeffs {
            match m.get(v) {
                Some(t) => out = out.add(&t.scale(c)),
                None => out.add_monomial(v.clone(), c.clone()),
            }
        }
        out
    }

    /// SMT-LIB rendering of the variable part only, `0` when empty.
    fn fmt_linear(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        for (v, c) in &self.coeffs {
            parts.push(if c.is_one() {
                v.to_string()
            } else if *c == -BigInt::one() {
                format!("(- {})", v)
            } else {
                format!("(* {} {})", SmtInt(c), v)
            });
        }
        match parts.len() {
            0 => f.write_str("0"),
            1 => f.write_str(&parts[0]),
            _ => write!(f, "(+ {})", parts.join(" ")),
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.coeffs.is_empty() {
            return write!(f, "{}", SmtInt(&self.constant));
        }
        if self.constant.is_zero() {
            return self.fmt_linear(f);
        }
        f.write_str("(+ ")?;
        let linear = Term {
            coeffs: self.coeffs.clone(),
            constant: BigInt::zero(),
        };
        linear.fmt_linear(f)?;
        write!(f, " {})", SmtInt(&self.constant))
    }
}

/// SMT-LIB integer literal (`(- 5)` for negatives).
pub struct SmtInt<'a>(pub &'a BigInt);

impl fmt::Display for SmtInt<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_negative() {
            write!(f, "(- {})", self.0.abs())
        } else {
            write!(f, "{}", self.0)
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub enum Rel {
    /// `t >= 0`
    Ge,
    /// `t = 0`
    Eq,
}

#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct Atom {
    pub term: Term,
    pub rel: Rel,
}

impl Atom {
    pub fn eval(&self, sigma: &VarAssignment) -> Result<bool, EvalError> {
        let v = self.term.eval(sigma)?;
        Ok(match self.rel {
            Rel::Ge => !v.is_negative(),
            Rel::Eq => v.is_zero(),
        })
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let op = match self.rel {
            Rel::Ge => ">=",
            Rel::Eq => "=",
        };
        let lhs = Term {
            coeffs: self.term.coeffs.clone(),
            constant: BigInt::zero(),
        };
        let rhs = -&self.term.constant;
        write!(f, "({} ", op)?;
        lhs.fmt_linear(f)?;
        write!(f, " {})", SmtInt(&rhs))
    }
}

#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub enum Formula {
    True,
    False,
    Atom(Atom),
    Not(Box<Formula>),
    And(Vec<Formula>),
    Or(Vec<Formula>),
    Implies(Box<Formula>, Box<Formula>),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EvalError {
    #[error("unbound variable `{0}`")]
    Unbound(Var),
}

impl Formula {
    /// `lhs >= rhs`
    pub fn ge(lhs: Term, rhs: Term) -> Formula {
        Formula::Atom(Atom {
            term: lhs.sub(&rhs),
            rel: Rel::Ge,
        })
    }

    pub fn le(lhs: Term, rhs: Term) -> Formula {
        Formula::ge(rhs, lhs)
    }

    /// `lhs > rhs`, i.e. `lhs - rhs - 1 >= 0` over the integers.
    pub fn gt(lhs: Term, rhs: Term) -> Formula {
        Formula::ge(lhs, rhs.add(&Term::constant(1)))
    }

    pub fn lt(lhs: Term, rhs: Term) -> Formula {
        Formula::gt(rhs, lhs)
    }

    pub fn eq(lhs: Term, rhs: Term) -> Formula {
        Formula::Atom(Atom {
            term: lhs.sub(&rhs),
            rel: Rel::Eq,
        })
    }

    pub fn not(f: Formula) -> Formula {
        Formula::Not(Box::new(f))
    }

    pub fn implies(a: Formula, b: Formula) -> Formula {
        Formula::Implies(Box::new(a), Box::new(b))
    }

    pub fn eval(&self, sigma: &VarAssignment) -> Result<bool, EvalError> {
        Ok(match self {
            Formula::True => true,
            Formula::False => false,
            Formula::Atom(a) => a.eval(sigma)?,
            Formula::Not(f) => !f.eval(sigma)?,
            Formula::And(fs) => {
                for f in fs {
                    if !f.eval(sigma)? {
                        return Ok(false);
                    }
                }
                true
            }
            Formula::Or(fs) => {
                for f in fs {
                    if f.eval(sigma)? {
                        return Ok(true);
                    }
                }
                false
            }
            Formula::Implies(a, b) => !a.eval(sigma)? || b.eval(sigma)?,
        })
    }

    pub fn substitute(&self, m: &BTreeMap<Var, Term>) -> Formula {
        match self {
            Formula::True => Formula::True,
            Formula::False => Formula::False,
            Formula::Atom(a) => Formula::Atom(Atom {
                term: a.term.substitute(m),
                rel: a.rel,
            }),
            Formula::Not(f) => Formula::not(f.substitute(m)),
            Formula::And(fs) => Formula::And(fs.iter().map(|f| f.substitute(m)).collect()),
            Formula::Or(fs) => Formula::Or(fs.iter().map(|f| f.substitute(m)).collect()),
            Formula::Implies(a, b) => Formula::implies(a.substitute(m), b.substitute(m)),
        }
    }

    /// Renames variables (a substitution by variables).
    pub fn rename(&self, m: &BTreeMap<Var, Var>) -> Formula {
        let terms = m.iter().map(|(k, v)| (k.clone(), Term::var(v.clone()))).collect();
        self.substitute(&terms)
    }

    /// Negation normal form of `not self` over atoms: `>=` atoms flip to
    /// the strict complement, equalities split into two strict inequalities.
    pub fn negate_nnf(&self) -> Formula {
        match self {
            Formula::True => Formula::False,
            Formula::False => Formula::True,
            Formula::Atom(a) => match a.rel {
                // not (t >= 0)  <=>  -t - 1 >= 0
                Rel::Ge => Formula::Atom(Atom {
                    term: a.term.neg().sub(&Term::constant(1)),
                    rel: Rel::Ge,
                }),
                Rel::Eq => Formula::Or(vec![
                    Formula::gt(a.term.clone(), Term::default()),
                    Formula::lt(a.term.clone(), Term::default()),
                ]),
            },
            Formula::Not(f) => f.nnf(),
            Formula::And(fs) => Formula::Or(fs.iter().map(Formula::negate_nnf).collect()),
            Formula::Or(fs) => Formula::And(fs.iter().map(Formula::negate_nnf).collect()),
            Formula::Implies(a, b) => Formula::And(vec![a.nnf(), b.negate_nnf()]),
        }
    }

    /// Negation normal form: no `Not`, no `Implies`.
    pub fn nnf(&self) -> Formula {
        match self {
            Formula::True | Formula::False | Formula::Atom(_) => self.clone(),
            Formula::Not(f) => f.negate_nnf(),
            Formula::And(fs) => Formula::And(fs.iter().map(Formula::nnf).collect()),
            Formula::Or(fs) => Formula::Or(fs.iter().map(Formula::nnf).collect()),
            Formula::Implies(a, b) => Formula::Or(vec![a.negate_nnf(), b.nnf()]),
        }
    }

    /// Free variables in first-occurrence order.
    pub fn free_vars(&self) -> Vec<Var> {
        let mut out = Vec::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut Vec<Var>) {
        match self {
            Formula::True | Formula::False => {}
            Formula::Atom(a) => {
                for v in a.term.vars() {
                    if !out.contains(v) {
                        out.push(v.clone());
                    }
                }
            }
            Formula::Not(f) => f.collect_vars(out),
            Formula::And(fs) | Formula::Or(fs) => fs.iter().for_each(|f| f.collect_vars(out)),
            Formula::Implies(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let nary = |f: &mut fmt::Formatter<'_>, op: &str, fs: &[Formula], unit: &str| {
            match fs.len() {
                0 => f.write_str(unit),
                1 => write!(f, "{}", fs[0]),
                _ => {
                    write!(f, "({}", op)?;
                    for x in fs {
                        write!(f, " {}", x)?;
                    }
                    f.write_str(")")
                }
            }
        };
        match self {
            Formula::True => f.write_str("true"),
            Formula::False => f.write_str("false"),
            Formula::Atom(a) => write!(f, "{}", a),
            Formula::Not(x) => write!(f, "(not {})", x),
            Formula::And(fs) => nary(f, "and", fs, "true"),
            Formula::Or(fs) => nary(f, "or", fs, "false"),
            Formula::Implies(a, b) => write!(f, "(=> {} {})", a, b),
        }
    }
}

/// A value assignment to variables.
#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct VarAssignment(BTreeMap<Var, BigInt>);

impl VarAssignment {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, v: &Var) -> Option<&BigInt> {
        self.0.get(v)
    }

    pub fn insert(&mut self, v: Var, val: impl Into<BigInt>) {
        self.0.insert(v, val.into());
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Var, &BigInt)> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Values of `vars` in order; missing variables default to zero.
    pub fn values_of(&self, vars: &[Var]) -> Vec<BigInt> {
        vars.iter()
            .map(|v| self.get(v).cloned().unwrap_or_default())
            .collect()
    }

    pub fn from_values(vars: &[Var], vals: &[BigInt]) -> Self {
        VarAssignment(vars.iter().cloned().zip(vals.iter().cloned()).collect())
    }
}

impl FromIterator<(Var, BigInt)> for VarAssignment {
    fn from_iter<I: IntoIterator<Item = (Var, BigInt)>>(iter: I) -> Self {
        VarAssignment(iter.into_iter().collect())
    }
}

/// Substitution map sending each variable to a constant.
pub fn constant_substitution(vars: &[Var], vals: &[BigInt]) -> BTreeMap<Var, Term> {
    vars.iter()
        .cloned()
        .zip(vals.iter().map(|c| Term::constant(c.clone())))
        .collect()
}
