//! Decoders: q-ary sum-product, binary BP, the extended hard-decision
//! decoder, the hybrid decoder and its erasure variant.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bitmatrix::BitMatrix;
use crate::channel::{saturate, LLR_SATURATION};
use crate::error::{Error, Result};
use crate::representation::{
    bits_to_symbols, resolve_symbol, symbols_to_bits, EPRMatrix, GeneratorSet, NonBinaryMatrix,
};

const TANH_GUARD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DecoderKind {
    Qspa,
    Seb,
    Hepr,
    Sepr,
    Ser,
    Bec,
}

impl DecoderKind {
    pub const ALL: [DecoderKind; 6] = [
        DecoderKind::Qspa,
        DecoderKind::Seb,
        DecoderKind::Hepr,
        DecoderKind::Sepr,
        DecoderKind::Ser,
        DecoderKind::Bec,
    ];
}

impl FromStr for DecoderKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "qspa" => DecoderKind::Qspa,
            "seb" => DecoderKind::Seb,
            "hepr" => DecoderKind::Hepr,
            "sepr" => DecoderKind::Sepr,
            "ser" => DecoderKind::Ser,
            "bec" => DecoderKind::Bec,
            _ => return Err(Error::InvalidArgument(format!("unknown decoder {s:?}"))),
        })
    }
}

impl fmt::Display for DecoderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DecoderKind::Qspa => "qspa",
            DecoderKind::Seb => "seb",
            DecoderKind::Hepr => "hepr",
            DecoderKind::Sepr => "sepr",
            DecoderKind::Ser => "ser",
            DecoderKind::Bec => "bec",
        })
    }
}

/// `mu` BP iterations and `nu` hard-decision iterations per round, for at
/// most `rounds` rounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HybridSchedule {
    pub mu: usize,
    pub nu: usize,
    pub rounds: usize,
    /// Flip threshold; `None` uses a majority of the bit's checks.
    pub flip_threshold: Option<usize>,
    /// Largest combination size searched by the flip rule (2 or 3).
    pub k_max: usize,
}

impl HybridSchedule {
    pub fn new(mu: usize, nu: usize, rounds: usize, flip_threshold: Option<usize>) -> Result<Self> {
        if mu == 0 || nu == 0 || rounds == 0 || flip_threshold == Some(0) {
            return Err(Error::InvalidArgument("mu, nu, rounds and b must be at least 1".into()));
        }
        Ok(HybridSchedule {
            mu,
            nu,
            rounds,
            flip_threshold,
            k_max: 2,
        })
    }

    /// 16 BP and 4 hard iterations per round, 40 iterations in total.
    pub fn standard() -> Self {
        HybridSchedule {
            mu: 16,
            nu: 4,
            rounds: 2,
            flip_threshold: None,
            k_max: 2,
        }
    }

    pub fn max_iter(&self) -> usize {
        self.rounds * (self.mu + self.nu)
    }
}

impl Default for HybridSchedule {
    fn default() -> Self {
        HybridSchedule::standard()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecodeStatus {
    Converged,
    MaxIter,
    Inconsistent,
}

/// Operation counts for the complexity bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct OpCounters {
    /// Most messages produced by one check in one iteration.
    pub max_check_ops: usize,
    /// Most active columns examined for one bit in one flip search.
    pub max_bit_ops: usize,
    pub check_updates: u64,
    pub bit_searches: u64,
    /// Largest row weight of the extended matrix.
    pub phi_e: usize,
    /// Largest generator weight.
    pub psi_e: usize,
}

impl OpCounters {
    pub fn bound(&self) -> usize {
        self.phi_e.max(self.psi_e)
    }

    pub fn within_bound(&self) -> bool {
        self.max_check_ops <= self.bound() && self.max_bit_ops <= self.bound()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeResult {
    pub status: DecodeStatus,
    pub x_hat: Vec<u32>,
    pub xbar_hat: Vec<u8>,
    pub iterations: usize,
    /// Syndrome weight before the first and after every iteration.
    pub syndrome_trace: Vec<usize>,
    /// Bits flipped in each iteration, aligned with `syndrome_trace[1..]`.
    pub flip_trace: Vec<usize>,
    /// Flips that undo a flip of the previous iteration.
    pub oscillations: usize,
    pub residual_erasures: Option<usize>,
    pub counters: Option<OpCounters>,
    /// Unsatisfied checks of the decoder's own matrix at the end; for the
    /// erasure decoder, checks that still touch an erased position.
    pub final_syndrome: Vec<bool>,
}

impl DecodeResult {
    pub fn converged(&self) -> bool {
        self.status == DecodeStatus::Converged
    }

    /// Per-iteration trace as CSV text.
    pub fn trace_csv(&self) -> String {
        let mut s = String::from("iteration,syndrome_weight,flips\n");
        for (i, w) in self.syndrome_trace.iter().enumerate() {
            let f = if i == 0 { 0 } else { self.flip_trace.get(i - 1).copied().unwrap_or(0) };
            s.push_str(&format!("{i},{w},{f}\n"));
        }
        s
    }
}

/// Compressed sparse form of a binary parity matrix.
struct Sparse {
    check_ptr: Vec<usize>,
    edge_var: Vec<u32>,
    var_edges: Vec<Vec<u32>>,
}

impl Sparse {
    fn new(m: &BitMatrix) -> Self {
        let mut check_ptr = vec![0];
        let mut edge_var = Vec::with_capacity(m.nnz());
        let mut var_edges = vec![Vec::new(); m.n_cols()];
        for row in m.rows() {
            for &v in row {
                var_edges[v as usize].push(edge_var.len() as u32);
                edge_var.push(v);
            }
            check_ptr.push(edge_var.len());
        }
        Sparse {
            check_ptr,
            edge_var,
            var_edges,
        }
    }

    fn n_checks(&self) -> usize {
        self.check_ptr.len() - 1
    }

    fn edges(&self, c: usize) -> std::ops::Range<usize> {
        self.check_ptr[c]..self.check_ptr[c + 1]
    }

    fn unsatisfied(&self, bits: &[u8]) -> Vec<bool> {
        (0..self.n_checks())
            .map(|c| self.edges(c).fold(0u8, |a, e| a ^ bits[self.edge_var[e] as usize]) == 1)
            .collect()
    }

    fn syndrome_weight(&self, bits: &[u8]) -> usize {
        self.unsatisfied(bits).iter().filter(|&&u| u).count()
    }

    fn max_row_weight(&self) -> usize {
        (0..self.n_checks()).map(|c| self.edges(c).len()).max().unwrap_or(0)
    }

    /// Tanh-rule check update; returns the most messages one check produced.
    fn check_update(&self, v2c: &[f64], c2v: &mut [f64], counters: Option<&mut OpCounters>) {
        let mut max_ops = 0;
        let mut prefix = Vec::new();
        for c in 0..self.n_checks() {
            let r = self.edges(c);
            let d = r.len();
            max_ops = max_ops.max(d);
            prefix.clear();
            let mut acc = 1.0;
            for e in r.clone() {
                prefix.push(acc);
                acc *= (v2c[e] / 2.0).tanh();
            }
            let mut suffix = 1.0;
            for (k, e) in r.clone().enumerate().rev() {
                let prod = (prefix[k] * suffix).clamp(-1.0 + TANH_GUARD, 1.0 - TANH_GUARD);
                c2v[e] = saturate(2.0 * prod.atanh());
                suffix *= (v2c[e] / 2.0).tanh();
            }
        }
        if let Some(ct) = counters {
            ct.max_check_ops = ct.max_check_ops.max(max_ops);
            ct.check_updates += self.n_checks() as u64;
        }
    }

    fn var_update(&self, ch: &[f64], c2v: &[f64], v2c: &mut [f64], total: &mut [f64]) {
        for (v, edges) in self.var_edges.iter().enumerate() {
            let t = ch[v] + edges.iter().map(|&e| c2v[e as usize]).sum::<f64>();
            total[v] = t;
            for &e in edges {
                v2c[e as usize] = saturate(t - c2v[e as usize]);
            }
        }
    }
}

fn hard(llr: &[f64]) -> Vec<u8> {
    llr.iter().map(|&l| u8::from(l < 0.0)).collect()
}

/// Binary sum-product decoding with a flooding schedule.
pub fn decode_binary_bp(hbar: &BitMatrix, llr: &[f64], max_iter: usize) -> Result<DecodeResult> {
    if llr.len() != hbar.n_cols() {
        return Err(Error::DimensionMismatch(format!("{} LLRs for {} columns", llr.len(), hbar.n_cols())));
    }
    let sp = Sparse::new(hbar);
    let ch: Vec<f64> = llr.iter().map(|&l| saturate(l)).collect();
    let mut v2c: Vec<f64> = sp.edge_var.iter().map(|&v| ch[v as usize]).collect();
    let mut c2v = vec![0.0; v2c.len()];
    let mut total = ch.clone();
    let mut bits = hard(&total);
    let mut trace = vec![sp.syndrome_weight(&bits)];
    let mut it = 0;
    while *trace.last().expect("nonempty") != 0 && it < max_iter {
        sp.check_update(&v2c, &mut c2v, None);
        sp.var_update(&ch, &c2v, &mut v2c, &mut total);
        bits = hard(&total);
        trace.push(sp.syndrome_weight(&bits));
        it += 1;
    }
    let status = if trace.last() == Some(&0) { DecodeStatus::Converged } else { DecodeStatus::MaxIter };
    Ok(DecodeResult {
        status,
        final_syndrome: sp.unsatisfied(&bits),
        x_hat: Vec::new(),
        xbar_hat: bits,
        iterations: it,
        flip_trace: vec![0; trace.len() - 1],
        syndrome_trace: trace,
        oscillations: 0,
        residual_erasures: None,
        counters: None,
    })
}

/// Symbol estimate maximizing the agreement with the extended LLRs of one
/// symbol, via a Walsh-Hadamard transform.
pub fn project_symbol(llr: &[f64], mask: &[bool]) -> u32 {
    let q = llr.len() + 1;
    let mut f = vec![0.0; q];
    for c in 1..q {
        if mask[c - 1] {
            f[c] = llr[c - 1];
        }
    }
    let mut h = 1;
    while h < q {
        for i in (0..q).step_by(2 * h) {
            for k in i..i + h {
                let (a, b) = (f[k], f[k + h]);
                f[k] = a + b;
                f[k + h] = a - b;
            }
        }
        h *= 2;
    }
    let mut best = 0;
    for x in 1..q {
        if f[x] > f[best] + 1e-12 {
            best = x;
        }
    }
    best as u32
}

/// State shared by the hard-decision, hybrid and erasure decoders.
struct Extended<'a> {
    sp: Sparse,
    gens: &'a GeneratorSet,
    p: usize,
    q1: usize,
    mask: Vec<bool>,
    threshold: Vec<usize>,
    active_by_symbol: Vec<Vec<u32>>,
    k_max: usize,
    counters: OpCounters,
}

impl<'a> Extended<'a> {
    fn new(omega_e: &EPRMatrix, gens: &'a GeneratorSet, sched: &HybridSchedule) -> Result<Self> {
        let p = gens.p();
        let q1 = (1usize << p) - 1;
        if omega_e.p() != p || omega_e.matrix().n_cols() != gens.n() * q1 {
            return Err(Error::DimensionMismatch("extended matrix and generators disagree".into()));
        }
        let sp = Sparse::new(omega_e.matrix());
        let mask = gens.column_mask();
        let threshold = sp
            .var_edges
            .iter()
            .map(|e| sched.flip_threshold.unwrap_or(e.len().div_ceil(2)).max(1))
            .collect();
        let active_by_symbol = gens.generators().iter().map(|g| g.active_columns()).collect();
        let counters = OpCounters {
            phi_e: sp.max_row_weight(),
            psi_e: gens.max_weight(),
            ..Default::default()
        };
        Ok(Extended {
            sp,
            gens,
            p,
            q1,
            mask,
            threshold,
            active_by_symbol,
            k_max: sched.k_max,
            counters,
        })
    }

    /// True when some active combination of other positions summing to `v`
    /// disagrees with the current value of `v`.
    fn disagrees(&mut self, bits: &[u8], v: usize) -> bool {
        let j = v / self.q1;
        let c = (v % self.q1 + 1) as u32;
        let base = j * self.q1;
        let act = &self.active_by_symbol[j];
        let val = |x: u32| bits[base + x as usize - 1];
        let mut ops = 0;
        let mut found = false;
        for &a in act {
            ops += 1;
            let b = a ^ c;
            if a == c || b < a || !self.mask[base + b as usize - 1] {
                continue;
            }
            if val(a) ^ val(b) != val(c) {
                found = true;
                break;
            }
        }
        if !found && self.k_max >= 3 {
            'outer: for (ia, &a) in act.iter().enumerate() {
                for &b in &act[ia + 1..] {
                    let d = a ^ b ^ c;
                    if d <= b || d == c || !self.mask[base + d as usize - 1] || a == c || b == c {
                        continue;
                    }
                    if val(a) ^ val(b) ^ val(d) != val(c) {
                        found = true;
                        break 'outer;
                    }
                }
            }
        }
        self.counters.max_bit_ops = self.counters.max_bit_ops.max(ops);
        self.counters.bit_searches += 1;
        found
    }

    /// Up to `iters` hard-decision iterations in place. Returns whether the
    /// syndrome reached zero and the iterations used.
    fn hard_iterations(
        &mut self,
        bits: &mut [u8],
        iters: usize,
        trace: &mut Vec<usize>,
        flip_trace: &mut Vec<usize>,
        oscillations: &mut usize,
    ) -> (bool, usize) {
        let n = bits.len();
        let mut s = vec![0usize; n];
        let mut last_flipped: Vec<u32> = Vec::new();
        let mut used = 0;
        loop {
            let unsat = self.sp.unsatisfied(bits);
            let w = unsat.iter().filter(|&&u| u).count();
            if used > 0 {
                trace.push(w);
            }
            if w == 0 {
                return (true, used);
            }
            if used == iters {
                return (false, used);
            }
            self.counters.check_updates += self.sp.n_checks() as u64;
            s.iter_mut().for_each(|x| *x = 0);
            for (c, &u) in unsat.iter().enumerate() {
                if u {
                    for e in self.sp.edges(c) {
                        s[self.sp.edge_var[e] as usize] += 1;
                    }
                }
            }
            let mut flips: Vec<u32> = Vec::new();
            for v in 0..n {
                if self.mask[v] && s[v] >= self.threshold[v] && self.disagrees(bits, v) {
                    flips.push(v as u32);
                }
            }
            if flips.is_empty() {
                // every flagged bit agrees with its symbol: fall back to
                // flipping the most-unsatisfied bits
                let max_s = (0..n).filter(|&v| self.mask[v]).map(|v| s[v]).max().unwrap_or(0);
                if max_s > 0 {
                    flips = (0..n).filter(|&v| self.mask[v] && s[v] == max_s).map(|v| v as u32).collect();
                }
            }
            for &v in &flips {
                bits[v as usize] ^= 1;
            }
            *oscillations += flips.iter().filter(|v| last_flipped.binary_search(v).is_ok()).count();
            flip_trace.push(flips.len());
            last_flipped = flips;
            used += 1;
        }
    }

    /// Resolves every symbol; `None` if any symbol is unresolvable or inconsistent.
    fn resolve_all(&self, bits: &[u8]) -> Option<Vec<u32>> {
        (0..self.gens.n())
            .map(|j| resolve_symbol(&bits[j * self.q1..(j + 1) * self.q1], self.gens.generator(j)).ok())
            .collect()
    }

    fn project_all(&self, llr: &[f64]) -> Vec<u32> {
        (0..self.gens.n())
            .map(|j| project_symbol(&llr[j * self.q1..(j + 1) * self.q1], &self.mask[j * self.q1..(j + 1) * self.q1]))
            .collect()
    }

    fn finish(&self, status: DecodeStatus, x: Vec<u32>, bits: &[u8], iterations: usize, trace: Vec<usize>, flip_trace: Vec<usize>, oscillations: usize) -> DecodeResult {
        DecodeResult {
            final_syndrome: self.sp.unsatisfied(bits),
            status,
            xbar_hat: symbols_to_bits(&x, self.p),
            x_hat: x,
            iterations,
            syndrome_trace: trace,
            flip_trace,
            oscillations,
            residual_erasures: None,
            counters: Some(self.counters),
        }
    }
}

fn signs(bits: &[u8]) -> Vec<f64> {
    bits.iter().map(|&b| if b == 0 { 1.0 } else { -1.0 }).collect()
}

/// Extended hard-decision decoding from an initial extended word.
pub fn decode_hard_epr(omega_e: &EPRMatrix, gens: &GeneratorSet, v_init: &[u8], sched: &HybridSchedule) -> Result<DecodeResult> {
    let mut dec = Extended::new(omega_e, gens, sched)?;
    if v_init.len() != dec.mask.len() {
        return Err(Error::DimensionMismatch("initial word length".into()));
    }
    let mut bits: Vec<u8> = v_init.iter().zip(&dec.mask).map(|(&b, &a)| if a { b & 1 } else { 0 }).collect();
    let mut trace = vec![dec.sp.syndrome_weight(&bits)];
    let mut flip_trace = Vec::new();
    let mut osc = 0;
    let (ok, used) = dec.hard_iterations(&mut bits, sched.max_iter(), &mut trace, &mut flip_trace, &mut osc);
    let (status, x) = match (ok, dec.resolve_all(&bits)) {
        (true, Some(x)) => (DecodeStatus::Converged, x),
        (true, None) => (DecodeStatus::Inconsistent, dec.project_all(&signs(&bits))),
        (false, _) => (DecodeStatus::MaxIter, dec.project_all(&signs(&bits))),
    };
    Ok(dec.finish(status, x, &bits, used, trace, flip_trace, osc))
}

/// Hybrid decoding: rounds of `mu` BP iterations, `nu` hard-decision
/// iterations and sign forcing of the variable-to-check messages.
pub fn decode_hybrid_sepr(omega_e: &EPRMatrix, gens: &GeneratorSet, llr: &[f64], sched: &HybridSchedule) -> Result<DecodeResult> {
    let mut dec = Extended::new(omega_e, gens, sched)?;
    if llr.len() != dec.mask.len() {
        return Err(Error::DimensionMismatch("LLR length".into()));
    }
    let ch: Vec<f64> = llr.iter().zip(&dec.mask).map(|(&l, &a)| if a { saturate(l) } else { 0.0 }).collect();
    let mut v2c: Vec<f64> = dec.sp.edge_var.iter().map(|&v| ch[v as usize]).collect();
    let mut c2v = vec![0.0; v2c.len()];
    let mut total = ch.clone();
    let mut bits = hard(&total);
    let mut trace = vec![dec.sp.syndrome_weight(&bits)];
    let mut flip_trace = Vec::new();
    let mut osc = 0;
    let mut iters = 0;
    if trace[0] == 0 {
        if let Some(x) = dec.resolve_all(&bits) {
            return Ok(dec.finish(DecodeStatus::Converged, x, &bits, 0, trace, flip_trace, osc));
        }
    }
    let mut zero_but_inconsistent = false;
    for _round in 0..sched.rounds {
        for _ in 0..sched.mu {
            dec.sp.check_update(&v2c, &mut c2v, Some(&mut dec.counters));
            dec.sp.var_update(&ch, &c2v, &mut v2c, &mut total);
            bits = hard(&total);
            let w = dec.sp.syndrome_weight(&bits);
            trace.push(w);
            flip_trace.push(0);
            iters += 1;
            if w == 0 {
                if let Some(x) = dec.resolve_all(&bits) {
                    return Ok(dec.finish(DecodeStatus::Converged, x, &bits, iters, trace, flip_trace, osc));
                }
                zero_but_inconsistent = true;
            }
        }
        let (ok, used) = dec.hard_iterations(&mut bits, sched.nu, &mut trace, &mut flip_trace, &mut osc);
        iters += used;
        if ok {
            if let Some(x) = dec.resolve_all(&bits) {
                return Ok(dec.finish(DecodeStatus::Converged, x, &bits, iters, trace, flip_trace, osc));
            }
            zero_but_inconsistent = true;
        }
        for (e, &v) in dec.sp.edge_var.iter().enumerate() {
            let m = v2c[e].abs();
            v2c[e] = if bits[v as usize] == 1 { -m } else { m };
        }
    }
    let status = if zero_but_inconsistent && trace.last() == Some(&0) {
        DecodeStatus::Inconsistent
    } else {
        DecodeStatus::MaxIter
    };
    let x = dec.project_all(&total);
    Ok(dec.finish(status, x, &bits, iters, trace, flip_trace, osc))
}

/// Erasure decoding: peeling on the extended matrix alternating with
/// completion inside each symbol from the span of its known positions.
/// `order_seed` shuffles the peeling order.
pub fn decode_bec_hybrid(
    omega_e: &EPRMatrix,
    gens: &GeneratorSet,
    bits: &[u8],
    erased: &[bool],
    sched: &HybridSchedule,
    order_seed: Option<u64>,
) -> Result<DecodeResult> {
    let dec = Extended::new(omega_e, gens, sched)?;
    let n = dec.mask.len();
    if bits.len() != n || erased.len() != n {
        return Err(Error::DimensionMismatch("received word length".into()));
    }
    let mut val: Vec<u8> = bits.iter().map(|&b| b & 1).collect();
    let mut er: Vec<bool> = erased.iter().zip(&dec.mask).map(|(&e, &a)| e && a).collect();
    for v in 0..n {
        if !dec.mask[v] {
            val[v] = 0;
        }
    }
    let count_erased = |er: &[bool]| er.iter().filter(|&&e| e).count();
    let mut trace = vec![count_erased(&er)];
    let mut flip_trace = Vec::new();
    let mut rng = order_seed.map(ChaCha8Rng::seed_from_u64);
    let mut rounds = 0;
    loop {
        let before = trace.last().copied().unwrap_or(0);
        if before == 0 {
            break;
        }
        // peeling
        let nc = dec.sp.n_checks();
        let mut cnt = vec![0usize; nc];
        let mut acc = vec![0u8; nc];
        for c in 0..nc {
            for e in dec.sp.edges(c) {
                let v = dec.sp.edge_var[e] as usize;
                if er[v] {
                    cnt[c] += 1;
                } else {
                    acc[c] ^= val[v];
                }
            }
        }
        let mut queue: Vec<usize> = (0..nc).filter(|&c| cnt[c] == 1).collect();
        if let Some(r) = rng.as_mut() {
            queue.shuffle(r);
        }
        while let Some(c) = queue.pop() {
            if cnt[c] != 1 {
                continue;
            }
            let Some(v) = dec.sp.edges(c).map(|e| dec.sp.edge_var[e] as usize).find(|&v| er[v]) else {
                continue;
            };
            val[v] = acc[c];
            er[v] = false;
            let mut touched: Vec<usize> = Vec::new();
            for &e in &dec.sp.var_edges[v] {
                let check = check_of_edge(&dec.sp, e as usize);
                cnt[check] -= 1;
                acc[check] ^= val[v];
                if cnt[check] == 1 {
                    touched.push(check);
                }
            }
            if let Some(r) = rng.as_mut() {
                touched.shuffle(r);
            }
            queue.extend(touched);
        }
        // completion within symbols
        for j in 0..gens.n() {
            let base = j * dec.q1;
            let act = &dec.active_by_symbol[j];
            if !act.iter().any(|&c| er[base + c as usize - 1]) {
                continue;
            }
            let basis = span_basis(act.iter().filter(|&&c| !er[base + c as usize - 1]).map(|&c| (c, val[base + c as usize - 1])), dec.p);
            for &c in act {
                let pos = base + c as usize - 1;
                if er[pos] {
                    if let Some(b) = reduce(&basis, c) {
                        val[pos] = b;
                        er[pos] = false;
                    }
                }
            }
        }
        rounds += 1;
        let after = count_erased(&er);
        flip_trace.push(before - after);
        trace.push(after);
        if after == before {
            break;
        }
    }
    // read off the base bits that are determined
    let mut x = Vec::with_capacity(gens.n());
    let mut residual = 0;
    for j in 0..gens.n() {
        let base = j * dec.q1;
        let act = &dec.active_by_symbol[j];
        let basis = span_basis(act.iter().filter(|&&c| !er[base + c as usize - 1]).map(|&c| (c, val[base + c as usize - 1])), dec.p);
        let mut s = 0u32;
        for k in 0..dec.p {
            match reduce(&basis, 1 << k) {
                Some(b) => s |= u32::from(b) << k,
                None => residual += 1,
            }
        }
        x.push(s);
    }
    let status = if residual == 0 { DecodeStatus::Converged } else { DecodeStatus::MaxIter };
    let mut res = dec.finish(status, x, &val, rounds, trace, flip_trace, 0);
    res.residual_erasures = Some(residual);
    res.final_syndrome = (0..dec.sp.n_checks())
        .map(|c| dec.sp.edges(c).any(|e| er[dec.sp.edge_var[e] as usize]))
        .collect();
    Ok(res)
}

fn check_of_edge(sp: &Sparse, e: usize) -> usize {
    sp.check_ptr.partition_point(|&start| start <= e) - 1
}

/// Echelon basis keyed by leading bit of `(mask, value)` pairs.
fn span_basis(items: impl Iterator<Item = (u32, u8)>, p: usize) -> Vec<Option<(u32, u8)>> {
    let mut basis = vec![None; p];
    for (mut m, mut v) in items {
        while m != 0 {
            let lead = 31 - m.leading_zeros() as usize;
            match basis[lead] {
                Some((bm, bv)) => {
                    m ^= bm;
                    v ^= bv;
                }
                None => {
                    basis[lead] = Some((m, v));
                    break;
                }
            }
        }
    }
    basis
}

/// Value of `<c, x>` if `c` lies in the span of the basis.
fn reduce(basis: &[Option<(u32, u8)>], mut c: u32) -> Option<u8> {
    let mut v = 0;
    while c != 0 {
        let lead = 31 - c.leading_zeros() as usize;
        let (bm, bv) = basis[lead]?;
        c ^= bm;
        v ^= bv;
    }
    Some(v)
}

/// Symbol probabilities from base-bit LLRs.
pub fn symbol_priors(llr: &[f64], p: usize) -> Vec<Vec<f64>> {
    let q = 1usize << p;
    llr.chunks(p)
        .map(|l| {
            let logs: Vec<f64> = (0..q)
                .map(|a| -(0..p).filter(|&k| (a >> k) & 1 == 1).map(|k| l[k]).sum::<f64>())
                .collect();
            let mx = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let w: Vec<f64> = logs.iter().map(|&x| (x - mx).exp()).collect();
            let s: f64 = w.iter().sum();
            w.into_iter().map(|x| x / s).collect()
        })
        .collect()
}

fn xor_conv(a: &[f64], b: &[f64], out: &mut [f64]) {
    out.iter_mut().for_each(|x| *x = 0.0);
    for (s, &x) in a.iter().enumerate() {
        if x == 0.0 {
            continue;
        }
        for (t, &y) in b.iter().enumerate() {
            out[s ^ t] += x * y;
        }
    }
}

fn normalize(v: &mut [f64]) {
    let s: f64 = v.iter().sum();
    if s > 0.0 && s.is_finite() {
        v.iter_mut().for_each(|x| *x /= s);
    } else {
        let u = 1.0 / v.len() as f64;
        v.iter_mut().for_each(|x| *x = u);
    }
}

/// Decision with a unique maximum, or `None` when the top two tie.
fn decide(post: &[f64]) -> (u32, bool) {
    let mut best = 0;
    for a in 1..post.len() {
        if post[a] > post[best] {
            best = a;
        }
    }
    let unique = post.iter().enumerate().all(|(a, &x)| a == best || x < post[best] * (1.0 - 1e-9));
    (best as u32, unique)
}

/// Sum-product decoding over `F_q` with direct convolution at the checks.
pub fn decode_qspa(h: &NonBinaryMatrix, priors: &[Vec<f64>], max_iter: usize) -> Result<DecodeResult> {
    let q = h.q();
    if q > 64 {
        return Err(Error::InvalidArgument(format!("q = {q} exceeds the reference decoder's limit of 64")));
    }
    if priors.len() != h.n() || priors.iter().any(|p| p.len() != q) {
        return Err(Error::DimensionMismatch("one prior of length q per symbol".into()));
    }
    let ctx = h.ctx().clone();
    // edges in check-major order
    let mut edges: Vec<(usize, usize, u32)> = Vec::new();
    let mut check_ptr = vec![0];
    for i in 0..h.m() {
        for &(j, v) in h.row(i) {
            edges.push((i, j as usize, v));
        }
        check_ptr.push(edges.len());
    }
    let mut var_edges = vec![Vec::new(); h.n()];
    for (e, &(_, j, _)) in edges.iter().enumerate() {
        var_edges[j].push(e);
    }
    let mut q_msg: Vec<Vec<f64>> = edges.iter().map(|&(_, j, _)| priors[j].clone()).collect();
    let mut r_msg: Vec<Vec<f64>> = vec![vec![1.0 / q as f64; q]; edges.len()];
    let mut post: Vec<Vec<f64>> = priors.to_vec();
    let decisions = |post: &[Vec<f64>]| -> (Vec<u32>, bool) {
        let mut all_unique = true;
        let x = post
            .iter()
            .map(|p| {
                let (a, u) = decide(p);
                all_unique &= u;
                a
            })
            .collect();
        (x, all_unique)
    };
    let (mut x, mut unique) = decisions(&post);
    let sw = |x: &[u32]| h.syndrome(x).expect("length checked").iter().filter(|&&s| s != 0).count();
    let mut trace = vec![sw(&x)];
    let mut it = 0;
    let mut tmp = vec![0.0; q];
    while !(unique && trace.last() == Some(&0)) && it < max_iter {
        for i in 0..h.m() {
            let r = check_ptr[i]..check_ptr[i + 1];
            let d = r.len();
            // distributions of h * x_j
            let shifted: Vec<Vec<f64>> = r
                .clone()
                .map(|e| {
                    let hv = edges[e].2;
                    let mut s = vec![0.0; q];
                    for (a, &pa) in q_msg[e].iter().enumerate() {
                        s[ctx.mul(hv, a as u32) as usize] += pa;
                    }
                    s
                })
                .collect();
            let mut delta = vec![0.0; q];
            delta[0] = 1.0;
            let mut prefix = vec![delta.clone()];
            for k in 0..d {
                xor_conv(&prefix[k], &shifted[k], &mut tmp);
                prefix.push(tmp.clone());
            }
            let mut suffix = delta;
            for k in (0..d).rev() {
                xor_conv(&prefix[k], &suffix, &mut tmp);
                let e = r.start + k;
                let hv = edges[e].2;
                for a in 0..q {
                    r_msg[e][a] = tmp[ctx.mul(hv, a as u32) as usize];
                }
                normalize(&mut r_msg[e]);
                let mut next = vec![0.0; q];
                xor_conv(&suffix, &shifted[k], &mut next);
                suffix = next;
            }
        }
        for (j, es) in var_edges.iter().enumerate() {
            let mut all = priors[j].clone();
            for &e in es {
                for a in 0..q {
                    all[a] *= r_msg[e][a];
                }
                normalize(&mut all);
            }
            post[j] = all;
            for &e in es {
                let mut m = priors[j].clone();
                for &e2 in es {
                    if e2 != e {
                        for a in 0..q {
                            m[a] *= r_msg[e2][a];
                        }
                        normalize(&mut m);
                    }
                }
                q_msg[e] = m;
            }
        }
        (x, unique) = decisions(&post);
        trace.push(sw(&x));
        it += 1;
    }
    let status = if unique && trace.last() == Some(&0) { DecodeStatus::Converged } else { DecodeStatus::MaxIter };
    let final_syndrome = h.syndrome(&x)?.iter().map(|&s| s != 0).collect();
    Ok(DecodeResult {
        final_syndrome,
        status,
        xbar_hat: symbols_to_bits(&x, h.p()),
        x_hat: x,
        iterations: it,
        flip_trace: vec![0; trace.len() - 1],
        syndrome_trace: trace,
        oscillations: 0,
        residual_erasures: None,
        counters: None,
    })
}

/// Fills the symbol view of a binary decoding result.
pub fn with_symbols(mut r: DecodeResult, p: usize) -> DecodeResult {
    r.x_hat = bits_to_symbols(&r.xbar_hat, p);
    r
}

/// Saturated LLR for a known bit.
pub fn certain_llr(bit: u8) -> f64 {
    if bit == 0 {
        LLR_SATURATION
    } else {
        -LLR_SATURATION
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{CodeSpec, Mode};
    use crate::gf::FieldContext;
    use crate::representation::extend_codeword;
    use std::sync::Arc;

    fn fixture(p: u32) -> CodeSpec {
        let ctx = Arc::new(FieldContext::new(p).unwrap());
        let mother = crate::fixtures::gallager12();
        let q1 = ctx.order() as u32;
        let rows = (0..mother.n_rows())
            .map(|i| mother.row(i).iter().map(|&j| (j, 1 + (3 * i as u32 + 5 * j) % q1)).collect())
            .collect();
        let h = NonBinaryMatrix::new(ctx, 12, rows).unwrap();
        CodeSpec::plain(h, Mode::Extended).unwrap()
    }

    #[test]
    fn noiseless_identity() {
        let spec = fixture(3);
        let sched = HybridSchedule::standard();
        let (x, xbar) = spec.random_codeword(1, 0);
        let ve = extend_codeword(&xbar, 3, Some(&spec.gens)).unwrap().bits;
        let llr: Vec<f64> = ve.iter().map(|&b| certain_llr(b)).collect();
        let base: Vec<f64> = xbar.iter().map(|&b| certain_llr(b)).collect();

        let r = decode_hybrid_sepr(&spec.omega_e, &spec.gens, &llr, &sched).unwrap();
        assert!(r.converged());
        assert_eq!(r.x_hat, x);
        assert_eq!(r.iterations, 0);

        let r = decode_hard_epr(&spec.omega_e, &spec.gens, &ve, &sched).unwrap();
        assert!(r.converged());
        assert_eq!(r.xbar_hat, xbar);
        assert_eq!(r.flip_trace.len(), 0);

        let r = with_symbols(decode_binary_bp(spec.img.matrix(), &base, 10).unwrap(), 3);
        assert!(r.converged());
        assert_eq!(r.x_hat, x);

        let r = decode_qspa(&spec.h, &symbol_priors(&base, 3), 10).unwrap();
        assert!(r.converged());
        assert!(r.iterations <= 1);
        assert_eq!(r.x_hat, x);

        let r = decode_bec_hybrid(&spec.omega_e, &spec.gens, &ve, &vec![false; ve.len()], &sched, None).unwrap();
        assert!(r.converged());
        assert_eq!(r.x_hat, x);
    }

    #[test]
    fn trivial_positions_read_base_bits() {
        // with every column active, positions 1, 2, 4, ... carry the base bits
        let spec = fixture(3);
        let (_, xbar) = spec.random_codeword(4, 2);
        let ve = extend_codeword(&xbar, 3, None).unwrap().bits;
        for j in 0..12 {
            for k in 0..3 {
                assert_eq!(ve[j * 7 + (1 << k) - 1], xbar[j * 3 + k]);
            }
        }
    }

    #[test]
    fn hepr_corrects_single_errors() {
        let spec = fixture(3);
        let sched = HybridSchedule::new(1, 5, 1, Some(2)).unwrap();
        let (_, xbar) = spec.random_codeword(2, 0);
        let ve = extend_codeword(&xbar, 3, Some(&spec.gens)).unwrap().bits;
        for pos in 0..ve.len() {
            let mut v = ve.clone();
            v[pos] ^= 1;
            let r = decode_hard_epr(&spec.omega_e, &spec.gens, &v, &sched).unwrap();
            assert!(r.converged(), "position {pos}");
            assert_eq!(r.xbar_hat, xbar);
            assert!(r.iterations <= 3);
        }
    }

    #[test]
    fn hepr_leaves_satisfied_bits() {
        let spec = fixture(2);
        let sched = HybridSchedule::standard();
        let (_, xbar) = spec.random_codeword(3, 0);
        let ve = extend_codeword(&xbar, 2, Some(&spec.gens)).unwrap().bits;
        let mut v = ve.clone();
        v[5] ^= 1;
        let r = decode_hard_epr(&spec.omega_e, &spec.gens, &v, &sched).unwrap();
        // bits outside the checks of position 5 must never move
        assert_eq!(r.flip_trace.iter().sum::<usize>(), 1);
    }

    #[test]
    fn qspa_corrects_weak_error() {
        let spec = fixture(2);
        let (x, xbar) = spec.random_codeword(5, 1);
        let mut llr: Vec<f64> = xbar.iter().map(|&b| if b == 0 { 4.0 } else { -4.0 }).collect();
        llr[0] = -llr[0] * 0.25;
        let r = decode_qspa(&spec.h, &symbol_priors(&llr, 2), 20).unwrap();
        assert!(r.converged());
        assert_eq!(r.x_hat, x);
        let uniform = vec![vec![0.25; 4]; 12];
        assert_eq!(decode_qspa(&spec.h, &uniform, 5).unwrap().status, DecodeStatus::MaxIter);
    }

    #[test]
    fn bp_corrects_weak_error() {
        let spec = fixture(2);
        let (_, xbar) = spec.random_codeword(6, 1);
        let ve = extend_codeword(&xbar, 2, Some(&spec.gens)).unwrap().bits;
        let mut llr: Vec<f64> = ve.iter().map(|&b| if b == 0 { 5.0 } else { -5.0 }).collect();
        llr[4] = -llr[4] * 0.2;
        let r = decode_binary_bp(spec.omega_e.matrix(), &llr, 20).unwrap();
        assert!(r.converged());
        assert_eq!(r.xbar_hat, ve);
    }

    #[test]
    fn bec_fills_simplex_partner() {
        let spec = fixture(3);
        let sched = HybridSchedule::standard();
        let (x, xbar) = spec.random_codeword(7, 0);
        let ve = extend_codeword(&xbar, 3, Some(&spec.gens)).unwrap().bits;
        let mut er = vec![false; ve.len()];
        er[2] = true;
        let r = decode_bec_hybrid(&spec.omega_e, &spec.gens, &ve, &er, &sched, None).unwrap();
        assert!(r.converged());
        assert_eq!(r.x_hat, x);
        assert_eq!(r.residual_erasures, Some(0));
    }

    #[test]
    fn bec_order_independent() {
        let spec = fixture(2);
        let sched = HybridSchedule::standard();
        let (_, xbar) = spec.random_codeword(8, 0);
        let ve = extend_codeword(&xbar, 2, Some(&spec.gens)).unwrap().bits;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let er: Vec<bool> = (0..ve.len()).map(|_| rand::Rng::random_bool(&mut rng, 0.55)).collect();
            let a = decode_bec_hybrid(&spec.omega_e, &spec.gens, &ve, &er, &sched, None).unwrap();
            for s in 0..4 {
                let b = decode_bec_hybrid(&spec.omega_e, &spec.gens, &ve, &er, &sched, Some(s)).unwrap();
                assert_eq!(a.residual_erasures, b.residual_erasures);
                assert_eq!(a.syndrome_trace.last(), b.syndrome_trace.last());
            }
            // monotone: the erasure count never grows
            assert!(a.syndrome_trace.windows(2).all(|w| w[1] <= w[0]));
        }
    }

    #[test]
    fn projection_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let llr: Vec<f64> = (0..7).map(|_| rand::Rng::random_range(&mut rng, -3.0..3.0)).collect();
            let mask = vec![true; 7];
            let score = |x: u32| -> f64 {
                (1..8u32).map(|c| if (c & x).count_ones().is_multiple_of(2) { llr[c as usize - 1] } else { -llr[c as usize - 1] }).sum()
            };
            let best = (0..8u32).max_by(|&a, &b| score(a).total_cmp(&score(b))).unwrap();
            assert!((score(project_symbol(&llr, &mask)) - score(best)).abs() < 1e-9);
        }
    }

    #[test]
    fn counters_within_bound() {
        let spec = fixture(3);
        let (_, xbar) = spec.random_codeword(1, 3);
        let ve = extend_codeword(&xbar, 3, Some(&spec.gens)).unwrap().bits;
        let llr: Vec<f64> = ve.iter().enumerate().map(|(i, &b)| certain_llr(b) * if i % 11 == 0 { -0.05 } else { 0.1 }).collect();
        let r = decode_hybrid_sepr(&spec.omega_e, &spec.gens, &llr, &HybridSchedule::new(3, 2, 3, None).unwrap()).unwrap();
        let c = r.counters.unwrap();
        assert!(c.within_bound(), "{c:?}");
        assert!(c.check_updates > 0);
    }

    #[test]
    fn schedule_validation() {
        assert!(HybridSchedule::new(0, 1, 1, None).is_err());
        assert!(HybridSchedule::new(1, 1, 1, Some(0)).is_err());
        assert_eq!(HybridSchedule::standard().max_iter(), 40);
        assert_eq!("sepr".parse::<DecoderKind>().unwrap(), DecoderKind::Sepr);
    }
}
