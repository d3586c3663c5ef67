//! Checks a candidate against the three clauses of a CHC system and turns
//! solver models into example clauses.

use std::collections::BTreeMap;
use std::fmt;
use std::time::{Duration, Instant};

use crate::logic::{ChcSystem, ExampleClause, Formula, Var, VarAssignment};
use crate::smt::{SmtResult, Solver, UnknownReason};

/// Which clause a counterexample violates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CexSource {
    Pre,
    Trans,
    Post,
}

impl fmt::Display for CexSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CexSource::Pre => "pre",
            CexSource::Trans => "trans",
            CexSource::Post => "post",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ValidationOutcome {
    Valid,
    Cex {
        clause: ExampleClause,
        source: CexSource,
    },
    Unknown(UnknownReason),
}

/// `F(x)` with `x` renamed to the primed variables.
pub fn to_primed(chc: &ChcSystem, f: &Formula) -> Formula {
    let m: BTreeMap<Var, Var> = chc
        .vars()
        .iter()
        .cloned()
        .zip(chc.primed().iter().cloned())
        .collect();
    f.rename(&m)
}

/// The three validity queries, each stated as a satisfiability check whose
/// models are counterexamples. Fixed order: pre, trans, post.
pub fn queries(chc: &ChcSystem, cand: &Formula) -> [(CexSource, Formula); 3] {
    let not_cand = Formula::not(cand.clone());
    [
        (CexSource::Pre, Formula::And(vec![chc.pre.clone(), not_cand.clone()])),
        (
            CexSource::Trans,
            Formula::And(vec![
                chc.trans.clone(),
                cand.clone(),
                Formula::not(to_primed(chc, cand)),
            ]),
        ),
        (
            CexSource::Post,
            Formula::And(vec![cand.clone(), Formula::not(chc.post.clone())]),
        ),
    ]
}

/// Evaluates `cand` on a point given in the system's variable order.
pub fn holds_at(chc: &ChcSystem, cand: &Formula, point: &[num_bigint::BigInt]) -> bool {
    cand.eval(&VarAssignment::from_values(chc.vars(), point))
        .unwrap_or(false)
}

/// Whether `cand` violates `clause`.
pub fn refutes(chc: &ChcSystem, cand: &Formula, clause: &ExampleClause) -> bool {
    !clause
        .satisfied_by::<()>(|p| Ok(holds_at(chc, cand, p)))
        .unwrap()
}

pub struct Validator {
    solver: Solver,
}

impl Validator {
    pub fn new(solver: Solver) -> Self {
        Validator { solver }
    }

    pub fn solver_restarts(&self) -> usize {
        self.solver.restarts
    }

    /// Checks `cand` against `pre`, `trans` and `post` in that order and
    /// returns the first counterexample found. `timeout` covers all three.
    pub fn validate(&mut self, chc: &ChcSystem, cand: &Formula, timeout: Duration) -> ValidationOutcome {
        let deadline = Instant::now() + timeout;
        let all_vars: Vec<Var> = chc.vars().iter().chain(chc.primed()).cloned().collect();
        for (source, query) in queries(chc, cand) {
            let timeout = deadline.saturating_duration_since(Instant::now());
            if timeout.is_zero() {
                return ValidationOutcome::Unknown(UnknownReason::Timeout);
            }
            let vars = if source == CexSource::Trans {
                &all_vars[..]
            } else {
                chc.vars()
            };
            match self.solver.check_formula(vars, &query, timeout) {
                SmtResult::Unsat(_) => continue,
                SmtResult::Unknown(r) => return ValidationOutcome::Unknown(r),
                SmtResult::Sat(model) => {
                    let c = model.values_of(chc.vars());
                    let clause = match source {
                        CexSource::Pre => ExampleClause::Positive(c),
                        CexSource::Trans => ExampleClause::Implication(c, model.values_of(chc.primed())),
                        CexSource::Post => ExampleClause::Negative(c),
                    };
                    if !refutes(chc, cand, &clause) {
                        return ValidationOutcome::Unknown(UnknownReason::SolverError(format!(
                            "counterexample {} does not refute the candidate",
                            clause
                        )));
                    }
                    return ValidationOutcome::Cex { clause, source };
                }
            }
        }
        ValidationOutcome::Valid
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logic::{parse_formula, parse_native};
    use num_bigint::BigInt;

    const C1: &str = "\
(vars (x y z))
(pre (and (= x 0) (= y z) (>= z 0)))
(trans (and (> y 0) (= x! (+ x 1)) (= y! (- y 1)) (= z! z)))
(post (or (> y 0) (= x z)))
";

    fn validator() -> Validator {
        Validator::new(Solver::from_env().unwrap())
    }

    const T: Duration = Duration::from_secs(5);

    #[test]
    fn known_invariant_is_valid() {
        let chc = parse_native(C1).unwrap();
        // x + y = z /\ y >= 0 written as four inequalities
        let inv = parse_formula(
            "(and (>= (+ x y (- z)) 0) (>= (+ (- x) (- y) z) 0) (>= y 0) (>= 0 0))",
            chc.vars(),
        )
        .unwrap();
        assert_eq!(validator().validate(&chc, &inv, T), ValidationOutcome::Valid);
    }

    #[test]
    fn literal_instantiation_of_the_template_example_is_refuted() {
        // x + y = z /\ z >= 0 admits y < 0 at loop exit
        let chc = parse_native(C1).unwrap();
        let inv = parse_formula("(and (>= (+ x y (- z)) 0) (>= (+ (- x) (- y) z) 0) (>= z 0))", chc.vars())
            .unwrap();
        match validator().validate(&chc, &inv, T) {
            ValidationOutcome::Cex {
                clause: clause @ ExampleClause::Negative(_),
                source: CexSource::Post,
            } => assert!(refutes(&chc, &inv, &clause)),
            r => panic!("{r:?}"),
        }
    }

    #[test]
    fn true_fails_post() {
        let chc = parse_native(C1).unwrap();
        match validator().validate(&chc, &Formula::True, T) {
            ValidationOutcome::Cex {
                clause: ExampleClause::Negative(c),
                source: CexSource::Post,
            } => {
                assert!(c[1] <= BigInt::from(0));
                assert_ne!(c[0], c[2]);
            }
            r => panic!("{r:?}"),
        }
    }

    #[test]
    fn false_fails_pre() {
        let chc = parse_native(C1).unwrap();
        match validator().validate(&chc, &Formula::False, T) {
            ValidationOutcome::Cex {
                clause: ExampleClause::Positive(c),
                source: CexSource::Pre,
            } => {
                assert_eq!(c[0], BigInt::from(0));
                assert_eq!(c[1], c[2]);
                assert!(c[2] >= BigInt::from(0));
            }
            r => panic!("{r:?}"),
        }
    }

    #[test]
    fn non_inductive_candidate_fails_trans() {
        let chc = parse_native(C1).unwrap();
        // implied by pre but not preserved by the loop
        let cand = parse_formula("(= x 0)", chc.vars()).unwrap();
        match validator().validate(&chc, &cand, T) {
            ValidationOutcome::Cex {
                clause: clause @ ExampleClause::Implication(..),
                source: CexSource::Trans,
            } => assert!(refutes(&chc, &cand, &clause)),
            r => panic!("{r:?}"),
        }
    }
}
