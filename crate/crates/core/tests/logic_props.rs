use std::collections::BTreeMap;

use invsynth_core::logic::{parse_formula, Formula, Term, Var, VarAssignment};
use num_bigint::BigInt;
use proptest::prelude::*;

const NAMES: [&str; 3] = ["x", "y", "z"];

fn vars() -> Vec<Var> {
    NAMES.iter().map(|n| Var::new(n)).collect()
}

/// Linear term as coefficient list plus constant.
#[derive(Clone, Debug)]
struct Lin {
    coeffs: [i64; 3],
    k: i64,
}

#[derive(Clone, Debug)]
enum B {
    T,
    F,
    Cmp(u8, Lin, Lin),
    Not(Box<B>),
    And(Vec<B>),
    Or(Vec<B>),
    Imp(Box<B>, Box<B>),
}

fn lin() -> impl Strategy<Value = Lin> {
    (prop::array::uniform3(-3i64..=3), -5i64..=5).prop_map(|(coeffs, k)| Lin { coeffs, k })
}

fn boolean() -> impl Strategy<Value = B> {
    let leaf = prop_oneof![
        1 => Just(B::T),
        1 => Just(B::F),
        6 => (0u8..5, lin(), lin()).prop_map(|(op, a, b)| B::Cmp(op, a, b)),
    ];
    leaf.prop_recursive(4, 24, 3, |inner| {
        prop_oneof![
            inner.clone().prop_map(|b| B::Not(Box::new(b))),
            prop::collection::vec(inner.clone(), 0..3).prop_map(B::And),
            prop::collection::vec(inner.clone(), 0..3).prop_map(B::Or),
            (inner.clone(), inner).prop_map(|(a, b)| B::Imp(Box::new(a), Box::new(b))),
        ]
    })
}

fn eval_lin(l: &Lin, p: &[i64; 3]) -> i64 {
    l.coeffs.iter().zip(p).map(|(c, v)| c * v).sum::<i64>() + l.k
}

fn naive(b: &B, p: &[i64; 3]) -> bool {
    match b {
        B::T => true,
        B::F => false,
        B::Cmp(op, l, r) => {
            let (a, c) = (eval_lin(l, p), eval_lin(r, p));
            match op {
                0 => a >= c,
                1 => a <= c,
                2 => a > c,
                3 => a < c,
                _ => a == c,
            }
        }
        B::Not(x) => !naive(x, p),
        B::And(xs) => xs.iter().all(|x| naive(x, p)),
        B::Or(xs) => xs.iter().any(|x| naive(x, p)),
        B::Imp(a, c) => !naive(a, p) || naive(c, p),
    }
}

fn to_term(l: &Lin) -> Term {
    let mut t = Term::constant(l.k);
    for (i, &c) in l.coeffs.iter().enumerate() {
        t = t.add(&Term::var(NAMES[i]).scale(&BigInt::from(c)));
    }
    t
}

fn to_formula(b: &B) -> Formula {
    match b {
        B::T => Formula::True,
        B::F => Formula::False,
        B::Cmp(op, l, r) => {
            let (a, c) = (to_term(l), to_term(r));
            match op {
                0 => Formula::ge(a, c),
                1 => Formula::le(a, c),
                2 => Formula::gt(a, c),
                3 => Formula::lt(a, c),
                _ => Formula::eq(a, c),
            }
        }
        B::Not(x) => Formula::not(to_formula(x)),
        B::And(xs) => Formula::And(xs.iter().map(to_formula).collect()),
        B::Or(xs) => Formula::Or(xs.iter().map(to_formula).collect()),
        B::Imp(a, c) => Formula::implies(to_formula(a), to_formula(c)),
    }
}

fn sigma(p: &[i64; 3]) -> VarAssignment {
    let vals: Vec<BigInt> = p.iter().map(|&v| BigInt::from(v)).collect();
    VarAssignment::from_values(&vars(), &vals)
}

fn point() -> impl Strategy<Value = [i64; 3]> {
    prop::array::uniform3(-6i64..=6)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn eval_agrees_with_naive(b in boolean(), p in point()) {
        let f = to_formula(&b);
        prop_assert_eq!(f.eval(&sigma(&p)).unwrap(), naive(&b, &p));
        prop_assert_eq!(f.nnf().eval(&sigma(&p)).unwrap(), naive(&b, &p));
        prop_assert_eq!(f.negate_nnf().eval(&sigma(&p)).unwrap(), !naive(&b, &p));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn substitution_composes_with_eval(b in boolean(), t in lin(), which in 0usize..3, p in point()) {
        let f = to_formula(&b);
        let v = Var::new(NAMES[which]);
        let mut m = BTreeMap::new();
        m.insert(v.clone(), to_term(&t));
        let lhs = f.substitute(&m).eval(&sigma(&p)).unwrap();
        let mut q = p;
        q[which] = eval_lin(&t, &p);
        prop_assert_eq!(lhs, f.eval(&sigma(&q)).unwrap());
    }

    #[test]
    fn print_parse_round_trip(b in boolean(), pts in prop::collection::vec(point(), 10)) {
        let f = to_formula(&b);
        let text = f.to_string();
        let g = parse_formula(&text, &vars()).unwrap();
        for p in &pts {
            prop_assert_eq!(f.eval(&sigma(p)).unwrap(), g.eval(&sigma(p)).unwrap());
        }
        let again = parse_formula(&g.to_string(), &vars()).unwrap();
        for p in &pts {
            prop_assert_eq!(again.eval(&sigma(p)).unwrap(), g.eval(&sigma(p)).unwrap());
        }
    }
}
