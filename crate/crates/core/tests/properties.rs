use std::sync::Arc;

use proptest::prelude::*;

use eprldpc::channel::{CodeSpec, Mode};
use eprldpc::decoders::{decode_bec_hybrid, HybridSchedule};
use eprldpc::gf::FieldContext;
use eprldpc::representation::{
    binary_image, bits_to_symbols, extend_codeword, resolve_symbol, symbols_to_bits, GeneratorMatrix,
    NonBinaryMatrix,
};
use eprldpc::sim::qalist;

/// Schoolbook multiply-and-reduce, independent of the log tables.
fn slow_mul(a: u32, b: u32, p: u32, poly: u32) -> u32 {
    let mut acc = 0u32;
    for k in 0..p {
        if (b >> k) & 1 == 1 {
            acc ^= a << k;
        }
    }
    for k in (p..2 * p).rev() {
        if (acc >> k) & 1 == 1 {
            acc ^= poly << (k - p);
        }
    }
    acc
}

fn arb_code() -> impl Strategy<Value = NonBinaryMatrix> {
    (2u32..=3, 5usize..=10, 2usize..=4, any::<u64>()).prop_map(|(p, n, m, seed)| {
        let ctx = Arc::new(FieldContext::new(p).unwrap());
        let q = ctx.q();
        let mut s = seed;
        let mut next = move || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (s >> 33) as u32
        };
        let rows = (0..m)
            .map(|_| {
                let mut row: Vec<(u32, u32)> = Vec::new();
                for j in 0..n as u32 {
                    if next() % 2 == 0 {
                        row.push((j, 1 + next() % (q - 1)));
                    }
                }
                if row.len() < 2 {
                    row = vec![(0, 1), (n as u32 - 1, 1 + next() % (q - 1))];
                }
                row
            })
            .collect();
        NonBinaryMatrix::new(ctx, n, rows).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn field_tables_match_schoolbook(p in 2u32..=8, a in any::<u32>(), b in any::<u32>()) {
        let ctx = FieldContext::new(p).unwrap();
        let (a, b) = (a % ctx.q(), b % ctx.q());
        prop_assert_eq!(ctx.mul(a, b), slow_mul(a, b, p, ctx.prim_poly()));
        if a != 0 {
            prop_assert_eq!(ctx.mul(a, ctx.inv(a).unwrap()), 1);
        }
    }

    #[test]
    fn companion_multiplies(p in 2u32..=6, u in any::<u32>(), x in any::<u32>()) {
        let ctx = FieldContext::new(p).unwrap();
        let (u, x) = (u % ctx.q(), x % ctx.q());
        prop_assert_eq!(ctx.companion_label(u).apply(x), ctx.mul(u, x));
    }

    #[test]
    fn image_syndrome_agrees(h in arb_code(), seed in any::<u64>()) {
        let img = binary_image(&h);
        let q = h.q() as u64;
        let x: Vec<u32> = (0..h.n() as u64).map(|j| ((seed >> (j % 60)) ^ j.wrapping_mul(seed)) as u32 % q as u32).collect();
        let xbar = symbols_to_bits(&x, h.p());
        prop_assert_eq!(bits_to_symbols(&xbar, h.p()), x.clone());
        prop_assert_eq!(h.is_codeword(&x), img.matrix().annihilates(&xbar));
        let spec = CodeSpec::plain(h, Mode::Base).unwrap();
        let (c, cbar) = spec.random_codeword(seed, 0);
        prop_assert!(spec.h.is_codeword(&c));
        prop_assert!(img.matrix().annihilates(&cbar));
    }

    #[test]
    fn extended_symbols_are_simplex_words(p in 2usize..=5, x in any::<u32>()) {
        let q1 = (1usize << p) - 1;
        let x = x & q1 as u32;
        let xbar = symbols_to_bits(&[x], p);
        let v = extend_codeword(&xbar, p, None).unwrap().bits;
        for a in 1..=q1 {
            for b in 1..=q1 {
                if a != b {
                    prop_assert_eq!(v[a - 1] ^ v[b - 1], v[(a ^ b) - 1]);
                }
            }
        }
        prop_assert_eq!(resolve_symbol(&v, &GeneratorMatrix::full(0, p)).unwrap(), x);
    }

    #[test]
    fn qalist_round_trip(h in arb_code(), extended in any::<bool>()) {
        let mode = if extended { Mode::Extended } else { Mode::Base };
        let spec = CodeSpec::plain(h, mode).unwrap();
        let text = qalist::to_string(&spec);
        let back = qalist::parse(&text).unwrap();
        prop_assert_eq!(qalist::to_string(&back), text);
        prop_assert_eq!(back.omega_e.matrix(), spec.omega_e.matrix());
    }

    #[test]
    fn erasure_decoding_ignores_order(h in arb_code(), frame in 0u64..1000, a in any::<u64>(), b in any::<u64>()) {
        let spec = CodeSpec::plain(h, Mode::Extended).unwrap();
        let (_, xbar) = spec.random_codeword(1, frame);
        let v = extend_codeword(&xbar, spec.p(), Some(&spec.gens)).unwrap().bits;
        let erased: Vec<bool> = (0..v.len()).map(|i| (frame.wrapping_mul(31) + i as u64 * 7).is_multiple_of(3)).collect();
        let bits: Vec<u8> = v.iter().zip(&erased).map(|(&x, &e)| if e { 0 } else { x }).collect();
        let sched = HybridSchedule::standard();
        let r1 = decode_bec_hybrid(&spec.omega_e, &spec.gens, &bits, &erased, &sched, Some(a)).unwrap();
        let r2 = decode_bec_hybrid(&spec.omega_e, &spec.gens, &bits, &erased, &sched, Some(b)).unwrap();
        prop_assert_eq!(r1.residual_erasures, r2.residual_erasures);
        prop_assert_eq!(&r1.xbar_hat, &r2.xbar_hat);
        // anything the decoder claims as recovered must agree with the truth
        if r1.residual_erasures == Some(0) {
            prop_assert_eq!(&r1.xbar_hat, &xbar);
        }
    }
}
