//! DNF-of-linear-inequalities templates with L1 coefficient and constant bounds.
//!
//! A shape `(N, P, Q)` denotes
//! `OR_i AND_{j<N_i} sum_k a_ijk * x_k >= c_ij`, subject to
//! `sum_k |a_ijk| <= P` and `|c_ij| <= Q` for every row `(i, j)`.
//! A disjunct with zero conjuncts contributes no rows and is left out.

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::logic::{ExampleClause, ExampleInstance, Formula, Point, Term, Var, VarAssignment};
use crate::sexp::smt_symbol;
use crate::smt::{LabeledConstraint, ParamRange};

/// A natural-number bound or infinity.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Serialize, Deserialize)]
pub enum Bound {
    Finite(u64),
    Infinite,
}

impl Bound {
    pub fn saturating_add(self, other: Bound) -> Bound {
        match (self, other) {
            (Bound::Finite(a), Bound::Finite(b)) => Bound::Finite(a.saturating_add(b)),
            _ => Bound::Infinite,
        }
    }

    pub fn finite(self) -> Option<u64> {
        match self {
            Bound::Finite(v) => Some(v),
            Bound::Infinite => None,
        }
    }

    pub fn is_infinite(self) -> bool {
        self == Bound::Infinite
    }

    /// `self >= k`, with infinity above every natural number.
    pub fn at_least(self, k: u64) -> bool {
        self >= Bound::Finite(k)
    }
}

impl fmt::Display for Bound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Bound::Finite(v) => write!(f, "{}", v),
            Bound::Infinite => f.write_str("inf"),
        }
    }
}

impl std::str::FromStr for Bound {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "inf" | "∞" => Ok(Bound::Infinite),
            _ => s
                .parse()
                .map(Bound::Finite)
                .map_err(|_| format!("invalid bound `{}`", s)),
        }
    }
}

#[derive(Clone, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
pub struct TemplateShape {
    conjuncts: Vec<u32>,
    pub p: Bound,
    pub q: Bound,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ShapeError {
    #[error("a template needs at least one inequality")]
    Empty,
}

impl TemplateShape {
    pub fn new(conjuncts: Vec<u32>, p: Bound, q: Bound) -> Result<Self, ShapeError> {
        if conjuncts.iter().all(|&n| n == 0) {
            return Err(ShapeError::Empty);
        }
        Ok(TemplateShape { conjuncts, p, q })
    }

    /// `((1), 1, 0)`: a single inequality with unit L1 norm and zero constant.
    pub fn initial() -> Self {
        TemplateShape::new(vec![1], Bound::Finite(1), Bound::Finite(0)).unwrap()
    }

    /// Conjunct counts per disjunct.
    pub fn conjuncts(&self) -> &[u32] {
        &self.conjuncts
    }

    /// Number of disjuncts `M`.
    pub fn disjuncts(&self) -> usize {
        self.conjuncts.len()
    }

    /// `Some(N)` when the shape is `[N]*M`.
    pub fn uniform(&self) -> Option<u32> {
        let n = self.conjuncts[0];
        self.conjuncts.iter().all(|&m| m == n).then_some(n)
    }

    /// `(i, j)` pairs of the rows, 1-based, in canonical order.
    pub fn rows(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.conjuncts
            .iter()
            .enumerate()
            .flat_map(|(i, &n)| (1..=n as usize).map(move |j| (i + 1, j)))
    }

    pub fn row_count(&self) -> usize {
        self.conjuncts.iter().map(|&n| n as usize).sum()
    }
}

impl fmt::Display for TemplateShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ns: Vec<String> = self.conjuncts.iter().map(|n| n.to_string()).collect();
        write!(f, "(({}),{},{})", ns.join(","), self.p, self.q)
    }
}

/// Names of the parameters of one inequality row.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RowParams {
    pub disjunct: usize,
    pub conjunct: usize,
    pub coeffs: Vec<Var>,
    pub constant: Var,
}

/// Parameter layout of a shape at a given arity.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamLayout {
    pub arity: usize,
    /// Rows grouped by disjunct; disjuncts with no rows are omitted.
    pub disjuncts: Vec<Vec<RowParams>>,
}

pub fn coeff_param(i: usize, j: usize, k: usize) -> Var {
    Var::new(&format!("a_{}_{}_{}", i, j, k))
}

pub fn const_param(i: usize, j: usize) -> Var {
    Var::new(&format!("c_{}_{}", i, j))
}

/// Auxiliary parameter standing for `|a_ijk|` in the L1 bound.
pub fn abs_param(i: usize, j: usize, k: usize) -> Var {
    Var::new(&format!("b_{}_{}_{}", i, j, k))
}

impl ParamLayout {
    pub fn new(shape: &TemplateShape, arity: usize) -> Self {
        let mut disjuncts: Vec<Vec<RowParams>> = Vec::new();
        for (i, &n) in shape.conjuncts().iter().enumerate() {
            if n == 0 {
                continue;
            }
            let i = i + 1;
            disjuncts.push(
                (1..=n as usize)
                    .map(|j| RowParams {
                        disjunct: i,
                        conjunct: j,
                        coeffs: (1..=arity).map(|k| coeff_param(i, j, k)).collect(),
                        constant: const_param(i, j),
                    })
                    .collect(),
            );
        }
        ParamLayout { arity, disjuncts }
    }

    pub fn rows(&self) -> impl Iterator<Item = &RowParams> {
        self.disjuncts.iter().flatten()
    }

    /// Coefficient and constant parameters in canonical order:
    /// for each row, `a_ij1..a_ijL` then `c_ij`.
    pub fn params(&self) -> Vec<Var> {
        self.rows()
            .flat_map(|r| r.coeffs.iter().cloned().chain(std::iter::once(r.constant.clone())))
            .collect()
    }
}

/// The parametric DNF `OR_i AND_j sum_k a_ijk x_k >= c_ij`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParametricDnf {
    pub layout: ParamLayout,
}

impl ParametricDnf {
    /// `psi(a, point)`: the DNF with `x` fixed to `point`, a formula over parameters.
    pub fn at_point(&self, point: &[BigInt]) -> Formula {
        debug_assert_eq!(point.len(), self.layout.arity);
        let disjuncts = self
            .layout
            .disjuncts
            .iter()
            .map(|rows| {
                Formula::And(
                    rows.iter()
                        .map(|r| {
                            let lhs = Term::from_parts(
                                r.coeffs.iter().cloned().zip(point.iter().cloned()),
                                0,
                            );
                            Formula::ge(lhs, Term::var(r.constant.clone()))
                        })
                        .collect(),
                )
            })
            .collect();
        Formula::Or(disjuncts)
    }
}

/// Builds the parametric DNF and the `P:i:j` / `Q:i:j` bound clauses.
pub fn materialize(shape: &TemplateShape, arity: usize) -> (ParametricDnf, LabeledConstraint) {
    let layout = ParamLayout::new(shape, arity);
    let mut bounds = LabeledConstraint::new();
    for r in layout.rows() {
        let (i, j) = (r.disjunct, r.conjunct);
        if let Bound::Finite(p) = shape.p {
            let mut parts = Vec::new();
            let mut sum = Term::default();
            for (k, a) in r.coeffs.iter().enumerate() {
                let b = abs_param(i, j, k + 1);
                parts.push(Formula::ge(Term::var(b.clone()), Term::var(a.clone())));
                parts.push(Formula::ge(Term::var(b.clone()), Term::var(a.clone()).neg()));
                sum = sum.add(&Term::var(b));
            }
            parts.push(Formula::le(sum, Term::constant(p)));
            bounds.push(format!("P:{}:{}", i, j), Formula::And(parts)).unwrap();
        }
        if let Bound::Finite(q) = shape.q {
            let c = Term::var(r.constant.clone());
            bounds
                .push(
                    format!("Q:{}:{}", i, j),
                    Formula::And(vec![
                        Formula::ge(c.clone(), Term::constant(-(q as i128))),
                        Formula::le(c, Term::constant(q)),
                    ]),
                )
                .unwrap();
        }
    }
    (ParametricDnf { layout }, bounds)
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TemplateError {
    #[error("example {index} has arity {found}, expected {expected}")]
    Arity {
        index: usize,
        found: usize,
        expected: usize,
    },
    #[error("assignment misses parameter `{0}`")]
    MissingParam(Var),
}

/// `C(a) = E(psi(a, x))` plus the bound clauses. Example clause `n` is labeled `E:n`.
pub fn build_constraint(
    shape: &TemplateShape,
    arity: usize,
    examples: &ExampleInstance,
) -> Result<LabeledConstraint, TemplateError> {
    let (dnf, bounds) = materialize(shape, arity);
    let mut c = LabeledConstraint::new();
    for v in dnf.layout.params() {
        c.declare(v);
    }
    for (index, ex) in examples.clauses().iter().enumerate() {
        for p in ex.points() {
            if p.len() != arity {
                return Err(TemplateError::Arity {
                    index,
                    found: p.len(),
                    expected: arity,
                });
            }
        }
        let clause = match ex {
            ExampleClause::Positive(pt) => dnf.at_point(pt),
            ExampleClause::Negative(pt) => dnf.at_point(pt).negate_nnf(),
            ExampleClause::Implication(from, to) => {
                Formula::Or(vec![dnf.at_point(from).negate_nnf(), dnf.at_point(to)])
            }
        };
        c.push(format!("E:{}", index), clause).unwrap();
    }
    for (label, f) in bounds.clauses() {
        c.push(label.clone(), f.clone()).unwrap();
    }
    Ok(c)
}

/// Per-parameter ranges implied by finite bounds, for exhaustive search.
/// `None` when `P` or `Q` is infinite.
pub fn finite_ranges(shape: &TemplateShape, arity: usize) -> Option<Vec<ParamRange>> {
    let p = shape.p.finite()? as i64;
    let q = shape.q.finite()? as i64;
    let layout = ParamLayout::new(shape, arity);
    let mut out = Vec::new();
    for r in layout.rows() {
        for (k, a) in r.coeffs.iter().enumerate() {
            out.push(ParamRange::new(a.clone(), -p, p));
            out.push(ParamRange::new(abs_param(r.disjunct, r.conjunct, k + 1), 0, p));
        }
        out.push(ParamRange::new(r.constant.clone(), -q, q));
    }
    Some(out)
}

/// One concrete inequality `sum_k coeffs[k] * x_k >= constant`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Inequality {
    pub coeffs: Vec<BigInt>,
    pub constant: BigInt,
}

impl Inequality {
    fn is_trivially_true(&self) -> bool {
        self.coeffs.iter().all(Zero::is_zero) && !self.constant.is_positive()
    }

    fn holds_at(&self, point: &[BigInt]) -> bool {
        let lhs: BigInt = self.coeffs.iter().zip(point).map(|(a, x)| a * x).sum();
        lhs >= self.constant
    }
}

/// A parameter-free instance of a template.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Candidate {
    pub formula: Formula,
    pub shape: TemplateShape,
    pub assignment: VarAssignment,
    /// Kept inequalities per disjunct, literally-true ones dropped.
    pub dnf: Vec<Vec<Inequality>>,
}

impl Candidate {
    /// Membership of a point, evaluated directly on the inequalities.
    pub fn holds_at(&self, point: &Point) -> bool {
        self.dnf.iter().any(|d| d.iter().all(|ineq| ineq.holds_at(point)))
    }

    /// SyGuS-style `define-fun` rendering.
    pub fn to_define_fun(&self, name: &str, vars: &[Var]) -> String {
        define_fun(name, vars, &self.formula)
    }
}

pub fn define_fun(name: &str, vars: &[Var], body: &Formula) -> String {
    let params: Vec<String> = vars.iter().map(|v| format!("({} Int)", v)).collect();
    format!("(define-fun {} ({}) Bool {})", smt_symbol(name), params.join(" "), body)
}

/// Replaces the parameters of the shape's DNF by their values under `sigma`.
pub fn instantiate(
    shape: &TemplateShape,
    vars: &[Var],
    sigma: &VarAssignment,
) -> Result<Candidate, TemplateError> {
    let layout = ParamLayout::new(shape, vars.len());
    let get = |v: &Var| sigma.get(v).cloned().ok_or_else(|| TemplateError::MissingParam(v.clone()));
    let mut dnf = Vec::new();
    let mut disjuncts = Vec::new();
    let mut kept = VarAssignment::new();
    for rows in &layout.disjuncts {
        let mut ineqs = Vec::new();
        let mut conj = Vec::new();
        for r in rows {
            let coeffs = r.coeffs.iter().map(get).collect::<Result<Vec<_>, _>>()?;
            let constant = get(&r.constant)?;
            for (v, c) in r.coeffs.iter().zip(&coeffs) {
                kept.insert(v.clone(), c.clone());
            }
            kept.insert(r.constant.clone(), constant.clone());
            let ineq = Inequality { coeffs, constant };
            if ineq.is_trivially_true() {
                continue;
            }
            let lhs = Term::from_parts(vars.iter().cloned().zip(ineq.coeffs.iter().cloned()), 0);
            conj.push(Formula::ge(lhs, Term::constant(ineq.constant.clone())));
            ineqs.push(ineq);
        }
        disjuncts.push(Formula::And(conj));
        dnf.push(ineqs);
    }
    Ok(Candidate {
        formula: Formula::Or(disjuncts),
        shape: shape.clone(),
        assignment: kept,
        dnf,
    })
}

/// Values of the canonical layout parameters, in layout order.
pub fn layout_values(shape: &TemplateShape, arity: usize, sigma: &VarAssignment) -> Vec<BigInt> {
    sigma.values_of(&ParamLayout::new(shape, arity).params())
}

/// Builds an assignment from canonical-order values; aux parameters are set to `|a|`.
pub fn assignment_from_values(shape: &TemplateShape, arity: usize, vals: &[i64]) -> VarAssignment {
    let layout = ParamLayout::new(shape, arity);
    let params = layout.params();
    assert_eq!(params.len(), vals.len(), "value count must match the layout");
    let mut sigma: VarAssignment = params
        .iter()
        .cloned()
        .zip(vals.iter().map(|&v| BigInt::from(v)))
        .collect();
    let mut abs = BTreeMap::new();
    for r in layout.rows() {
        for (k, a) in r.coeffs.iter().enumerate() {
            abs.insert(
                abs_param(r.disjunct, r.conjunct, k + 1),
                sigma.get(a).unwrap().abs(),
            );
        }
    }
    for (v, c) in abs {
        sigma.insert(v, c);
    }
    sigma
}
