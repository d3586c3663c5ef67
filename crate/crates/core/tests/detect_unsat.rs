use invsynth_core::engine::detect_unsat;
use invsynth_core::logic::{point, ExampleClause, ExampleInstance};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Tries every truth assignment of the atoms.
fn brute_force_consistent(atoms: usize, clauses: &[(u8, usize, usize)]) -> bool {
    (0u32..1 << atoms).any(|m| {
        clauses.iter().all(|&(kind, a, b)| {
            let va = m >> a & 1 == 1;
            let vb = m >> b & 1 == 1;
            match kind {
                0 => va,
                1 => !va,
                _ => !va || vb,
            }
        })
    })
}

#[test]
fn agrees_with_propositional_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut inconsistent = 0;
    for _ in 0..100 {
        let atoms = rng.gen_range(1..=20);
        let n = rng.gen_range(1..=2 * atoms + 2);
        let clauses: Vec<(u8, usize, usize)> = (0..n)
            .map(|_| {
                // implications are the common case
                let kind = match rng.gen_range(0..10) {
                    0 | 1 => 0,
                    2 | 3 => 1,
                    _ => 2,
                };
                (kind, rng.gen_range(0..atoms), rng.gen_range(0..atoms))
            })
            .collect();
        let ex: ExampleInstance = clauses
            .iter()
            .map(|&(kind, a, b)| match kind {
                0 => ExampleClause::Positive(point(&[a as i64])),
                1 => ExampleClause::Negative(point(&[a as i64])),
                _ => ExampleClause::Implication(point(&[a as i64]), point(&[b as i64])),
            })
            .collect();
        let expected = !brute_force_consistent(atoms, &clauses);
        assert_eq!(detect_unsat(&ex), expected, "{clauses:?}");
        inconsistent += expected as usize;
    }
    assert!(inconsistent > 10 && inconsistent < 90, "{inconsistent}");
}
