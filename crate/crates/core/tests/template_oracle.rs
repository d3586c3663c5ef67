use std::time::Duration;

use invsynth_core::logic::{point, ExampleClause, ExampleInstance};
use invsynth_core::policy::{apply_action, Action};
use invsynth_core::smt::{brute_force_search, SmtResult, Solver};
use invsynth_core::template::{build_constraint, finite_ranges, instantiate, Bound, TemplateShape};
use invsynth_core::logic::Var;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const T: Duration = Duration::from_secs(10);

fn random_shape(rng: &mut impl Rng) -> TemplateShape {
    let conj = match rng.gen_range(0..3) {
        0 => vec![1],
        1 => vec![2],
        _ => vec![1, 1],
    };
    TemplateShape::new(conj, Bound::Finite(rng.gen_range(0..=1)), Bound::Finite(rng.gen_range(0..=1))).unwrap()
}

fn random_point(rng: &mut impl Rng, arity: usize) -> Vec<i64> {
    (0..arity).map(|_| rng.gen_range(-2..=2)).collect()
}

fn random_examples(rng: &mut impl Rng, arity: usize) -> ExampleInstance {
    let n = rng.gen_range(1..=4);
    (0..n)
        .map(|_| {
            let a = point(&random_point(rng, arity));
            match rng.gen_range(0..3) {
                0 => ExampleClause::Positive(a),
                1 => ExampleClause::Negative(a),
                _ => ExampleClause::Implication(a, point(&random_point(rng, arity))),
            }
        })
        .collect()
}

fn vars(arity: usize) -> Vec<Var> {
    ["x", "y"][..arity].iter().map(|n| Var::new(n)).collect()
}

#[test]
fn solver_agrees_with_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut solver = Solver::from_env().unwrap();
    let (mut sat, mut unsat) = (0, 0);
    for i in 0..200 {
        let arity = rng.gen_range(1..=2);
        let shape = random_shape(&mut rng);
        let ex = random_examples(&mut rng, arity);
        let c = build_constraint(&shape, arity, &ex).unwrap();
        let ranges = finite_ranges(&shape, arity).unwrap();
        let brute = brute_force_search(&c, &ranges).unwrap();
        match solver.check_sat(&c, T) {
            SmtResult::Sat(model) => {
                assert!(brute.is_some(), "instance {i}: solver sat, brute force unsat ({shape}, {ex:?})");
                assert!(c.holds(&model));
                let cand = instantiate(&shape, &vars(arity), &model).unwrap();
                for cl in ex.clauses() {
                    assert!(cl.satisfied_by::<()>(|p| Ok(cand.holds_at(p))).unwrap(), "instance {i}: {cl}");
                }
                sat += 1;
            }
            SmtResult::Unsat(core) => {
                assert!(brute.is_none(), "instance {i}: solver unsat, brute force sat ({shape}, {ex:?})");
                assert!(!core.is_empty());
                unsat += 1;
            }
            SmtResult::Unknown(r) => panic!("instance {i}: unknown {r:?}"),
        }
    }
    // both verdicts are exercised
    assert!(sat > 20 && unsat > 20, "sat {sat} unsat {unsat}");
}

#[test]
fn growing_the_template_keeps_satisfiability() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut solver = Solver::from_env().unwrap();
    let mut checked = 0;
    while checked < 40 {
        let arity = rng.gen_range(1..=2);
        let shape = random_shape(&mut rng);
        let ex = random_examples(&mut rng, arity);
        let c = build_constraint(&shape, arity, &ex).unwrap();
        if !matches!(solver.check_sat(&c, T), SmtResult::Sat(_)) {
            continue;
        }
        let all = Action::all();
        let a = all[rng.gen_range(0..all.len())];
        let bigger = apply_action(&shape, &a);
        for (x, y) in shape.conjuncts().iter().zip(bigger.conjuncts()) {
            assert!(y >= x);
        }
        assert!(bigger.p >= shape.p && bigger.q >= shape.q);
        let c2 = build_constraint(&bigger, arity, &ex).unwrap();
        assert!(
            matches!(solver.check_sat(&c2, T), SmtResult::Sat(_)),
            "{shape} sat but {bigger} not on {ex:?}"
        );
        checked += 1;
    }
}

#[test]
fn raw_actions_never_exceed_four_disjuncts() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let all = Action::all();
    for _ in 0..200 {
        let mut s = TemplateShape::initial();
        for _ in 0..30 {
            s = apply_action(&s, &all[rng.gen_range(0..all.len())]);
            assert!(s.disjuncts() <= 4);
        }
    }
}
