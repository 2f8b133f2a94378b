//! Checks behind the `verify` command: the length-4 matrix-cycle
//! probability, resolvability counts and the permutation property for `f_omega`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::gf::{FieldContext, MatrixLabel};
use crate::graph::{estimate_p4, exhaustive_p4};
use crate::representation::{basis_selection, count_spanning_subsets, f_omega};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckOutcome {
    fn new(name: impl Into<String>, passed: bool, detail: String) -> Self {
        CheckOutcome {
            name: name.into(),
            passed,
            detail,
        }
    }
}

/// Monte-Carlo estimates of the length-4 cycle probability for q = 4, 8, 16
/// against `1/(q-1)` within three standard errors, plus the exact q = 4 count.
pub fn cycle_probability(trials: u64, seed: u64) -> Result<Vec<CheckOutcome>> {
    let mut out = Vec::new();
    for p in [2u32, 3, 4] {
        let ctx = FieldContext::new(p)?;
        let est = estimate_p4(&ctx, trials, seed ^ u64::from(p))?;
        let expect = 1.0 / ctx.order() as f64;
        let dev = (est.estimate - expect).abs();
        out.push(CheckOutcome::new(
            format!("p4 q={}", ctx.q()),
            dev <= 3.0 * est.standard_error,
            format!(
                "estimate {:.5} (se {:.5}) vs 1/{} = {:.5}, {:.2} se",
                est.estimate,
                est.standard_error,
                ctx.order(),
                expect,
                dev / est.standard_error
            ),
        ));
    }
    let ctx = FieldContext::new(2)?;
    let (hits, total) = exhaustive_p4(&ctx);
    out.push(CheckOutcome::new(
        "p4 q=4 exhaustive",
        hits * 3 == total && total == 81,
        format!("{hits}/{total}"),
    ));
    Ok(out)
}

/// Exact spanning counts at q = 8.
pub fn resolvability() -> Vec<CheckOutcome> {
    let (a3, t3) = count_spanning_subsets(3, 3);
    let (a4, t4) = count_spanning_subsets(3, 4);
    vec![
        CheckOutcome::new("resolvable q=8 w=3", (a3, t3) == (28, 35), format!("{a3}/{t3}")),
        CheckOutcome::new("resolvable q=8 w=4", a4 == t4, format!("{a4}/{t4}")),
    ]
}

fn random_full_rank(rng: &mut ChaCha8Rng, p: usize) -> MatrixLabel {
    loop {
        let rows = (0..p).map(|_| rng.random_range(0..1u32 << p)).collect();
        let l = MatrixLabel::from_rows(p, rows).expect("p-bit rows");
        if l.is_full_rank() {
            return l;
        }
    }
}

/// `samples` random full-rank labels per p in 2..=4 give permutation
/// matrices, and `precedes` on selections matches `precedes` on their images.
pub fn permutation_property(samples: usize, seed: u64) -> Result<Vec<CheckOutcome>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for p in 2..=4usize {
        let q1 = (1u32 << p) - 1;
        let phi = basis_selection(p, 1..=q1);
        let mut bad = 0;
        for _ in 0..samples {
            if !f_omega(&phi, &random_full_rank(&mut rng, p))?.is_permutation() {
                bad += 1;
            }
        }
        out.push(CheckOutcome::new(
            format!("permutation p={p}"),
            bad == 0,
            format!("{} of {samples} labels gave permutations", samples - bad),
        ));
    }
    let (mut agree, mut related) = (0usize, 0usize);
    for t in 0..samples {
        let p = 2 + t % 3;
        let q1 = (1u32 << p) - 1;
        let label = random_full_rank(&mut rng, p);
        let big: Vec<u32> = (1..=q1).filter(|_| rng.random_bool(0.7)).collect();
        // half the pairs are nested by construction, the rest independent
        let small: Vec<u32> = if t % 2 == 0 {
            big.iter().copied().filter(|_| rng.random_bool(0.6)).collect()
        } else {
            (1..=q1).filter(|_| rng.random_bool(0.5)).collect()
        };
        let (b, b2) = (basis_selection(p, big), basis_selection(p, small));
        let lhs = b2.precedes(&b, false)?;
        let rhs = f_omega(&b2, &label)?.precedes(&f_omega(&b, &label)?, false)?;
        related += usize::from(lhs);
        agree += usize::from(lhs == rhs);
    }
    out.push(CheckOutcome::new(
        "precedes monotone",
        agree == samples,
        format!("{agree}/{samples} zeroing patterns agree ({related} nested)"),
    ));
    Ok(out)
}

/// All suites at their acceptance sizes.
pub fn run_all(seed: u64) -> Result<Vec<CheckOutcome>> {
    let mut out = cycle_probability(100_000, seed)?;
    out.extend(resolvability());
    out.extend(permutation_property(1000, seed)?);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_suites_pass() {
        let mut all = cycle_probability(20_000, 3).unwrap();
        all.extend(resolvability());
        all.extend(permutation_property(200, 3).unwrap());
        for c in &all {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
        assert_eq!(all.len(), 10);
    }
}
