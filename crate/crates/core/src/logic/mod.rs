//! Formulas, CHC systems and problem parsing.

mod chc;
mod formula;
mod parse;

pub use chc::{point, primed_name, ChcError, ChcSystem, ExampleClause, ExampleInstance, Point};
pub use formula::{
    constant_substitution, Atom, EvalError, Formula, Rel, SmtInt, Term, Var, VarAssignment,
};
pub use parse::{
    parse_formula, parse_native, parse_problem, parse_sygus_inv, parse_witness, ParseError,
};
