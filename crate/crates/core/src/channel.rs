//! Encoding, channels and LLR initialization.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::construction::Construction;
use crate::error::{Error, Result};
use crate::gf::FieldContext;
use crate::representation::{
    apply_f_e, binary_image, extend_codeword, fq_row_reduce, symbols_to_bits, BinaryImage,
    EPRMatrix, GeneratorSet, NonBinaryMatrix,
};

/// LLR magnitude standing in for certainty.
pub const LLR_SATURATION: f64 = 30.0;

/// Which word goes over the channel: the base bits or the extended bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    Base,
    Extended,
}

impl FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "base" => Ok(Mode::Base),
            "extended" => Ok(Mode::Extended),
            _ => Err(Error::InvalidArgument(format!("unknown mode {s:?}"))),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Base => "base",
            Mode::Extended => "extended",
        })
    }
}

/// Systematic encoder: information symbols sit at the free columns, the
/// pivot columns (chosen from the right) are solved for.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    /// Pivot column and its reduced row, restricted to the free columns.
    pivots: Vec<(usize, Vec<u32>)>,
    free: Vec<usize>,
}

impl Encoder {
    pub fn new(h: &NonBinaryMatrix) -> Self {
        let n = h.n();
        // reversed column order so pivots land on the rightmost columns
        let mut dense: Vec<Vec<u32>> = (0..h.m())
            .map(|i| {
                let mut r = vec![0u32; n];
                for &(j, v) in h.row(i) {
                    r[n - 1 - j as usize] = v;
                }
                r
            })
            .collect();
        let piv_rev = fq_row_reduce(h.ctx(), &mut dense);
        let mut is_pivot = vec![false; n];
        for &c in &piv_rev {
            is_pivot[n - 1 - c] = true;
        }
        let free: Vec<usize> = (0..n).filter(|&j| !is_pivot[j]).collect();
        let pivots = piv_rev
            .iter()
            .enumerate()
            .map(|(r, &c)| (n - 1 - c, free.iter().map(|&f| dense[r][n - 1 - f]).collect()))
            .collect();
        Encoder { pivots, free }
    }

    /// Number of information symbols.
    pub fn k(&self) -> usize {
        self.free.len()
    }

    pub fn rank(&self) -> usize {
        self.pivots.len()
    }

    /// Columns carrying information, in order.
    pub fn free_columns(&self) -> &[usize] {
        &self.free
    }

    pub fn encode(&self, ctx: &FieldContext, info: &[u32]) -> Result<Vec<u32>> {
        if info.len() != self.free.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} information symbols, expected {}",
                info.len(),
                self.free.len()
            )));
        }
        if let Some(&v) = info.iter().find(|&&v| v >= ctx.q()) {
            return Err(Error::ElementOutOfRange { value: v, q: ctx.q() });
        }
        let n = self.free.len() + self.pivots.len();
        let mut x = vec![0u32; n];
        for (&f, &v) in self.free.iter().zip(info) {
            x[f] = v;
        }
        for (c, coeffs) in &self.pivots {
            x[*c] = coeffs.iter().zip(info).fold(0, |acc, (&a, &v)| acc ^ ctx.mul(a, v));
        }
        Ok(x)
    }
}

/// A code with every representation needed by the decoders.
#[derive(Debug, Clone, PartialEq)]
pub struct CodeSpec {
    pub h: NonBinaryMatrix,
    pub img: BinaryImage,
    pub omega_e: EPRMatrix,
    pub gens: GeneratorSet,
    pub target_girth: usize,
    pub mode: Mode,
    encoder: Encoder,
}

impl CodeSpec {
    pub fn new(h: NonBinaryMatrix, omega_e: EPRMatrix, gens: GeneratorSet, target_girth: usize, mode: Mode) -> Result<Self> {
        let img = binary_image(&h);
        if omega_e.p() != h.p() || omega_e.n_symbols() != h.n() || gens.n() != h.n() || gens.p() != h.p() {
            return Err(Error::DimensionMismatch("extended matrix or generators do not match H".into()));
        }
        if gens.column_mask() != omega_e.column_mask() {
            return Err(Error::DimensionMismatch("generator masks differ from the extended matrix mask".into()));
        }
        let encoder = Encoder::new(&h);
        Ok(CodeSpec {
            h,
            img,
            omega_e,
            gens,
            target_girth,
            mode,
            encoder,
        })
    }

    /// Uses the full Omega with every column active as the extended matrix.
    pub fn plain(h: NonBinaryMatrix, mode: Mode) -> Result<Self> {
        let img = binary_image(&h);
        let gens = GeneratorSet::full(&img);
        let omega = apply_f_e(&img, &gens)?.compacted();
        CodeSpec::new(h, omega, gens, 0, mode)
    }

    pub fn from_construction(c: &Construction, mode: Mode) -> Result<Self> {
        let h = c
            .h
            .clone()
            .ok_or_else(|| Error::InvalidArgument("construction carries no field matrix".into()))?;
        CodeSpec::new(h, c.epr.clone(), c.gens.clone(), c.report.target_girth, mode)
    }

    /// The same code with the full Omega as its extended matrix.
    pub fn with_plain_omega(&self) -> Result<Self> {
        let mut s = CodeSpec::plain(self.h.clone(), self.mode)?;
        s.target_girth = self.target_girth;
        Ok(s)
    }

    pub fn p(&self) -> usize {
        self.h.p()
    }

    pub fn n(&self) -> usize {
        self.h.n()
    }

    /// Base bits `N p`.
    pub fn np(&self) -> usize {
        self.h.n() * self.h.p()
    }

    /// Active extended bits.
    pub fn m_s(&self) -> usize {
        self.omega_e.active_len()
    }

    pub fn k(&self) -> usize {
        self.encoder.k()
    }

    pub fn encoder(&self) -> &Encoder {
        &self.encoder
    }

    /// `(N - rank, N)`.
    pub fn rate_fraction(&self) -> (usize, usize) {
        (self.encoder.k(), self.h.n())
    }

    pub fn rate(&self) -> f64 {
        self.encoder.k() as f64 / self.h.n() as f64
    }

    /// `1 - rank(Omega^e) / M_s`.
    pub fn extended_rate(&self) -> f64 {
        let active = self.m_s();
        if active == 0 {
            return 0.0;
        }
        1.0 - self.omega_e.matrix().rank_f2() as f64 / active as f64
    }

    /// Rate used for Eb/N0 accounting in the given mode.
    pub fn rate_for(&self, mode: Mode) -> f64 {
        match mode {
            Mode::Base => self.rate(),
            Mode::Extended => self.extended_rate(),
        }
    }

    pub fn encode(&self, info: &[u32]) -> Result<(Vec<u32>, Vec<u8>)> {
        let x = self.encoder.encode(self.h.ctx(), info)?;
        let xbar = symbols_to_bits(&x, self.p());
        Ok((x, xbar))
    }

    /// Codeword from uniformly random information symbols.
    pub fn random_codeword(&self, seed: u64, frame: u64) -> (Vec<u32>, Vec<u8>) {
        let mut rng = stream_rng(seed, 0x696e_666f, frame);
        let q = self.h.q() as u32;
        let info: Vec<u32> = (0..self.k()).map(|_| rng.random_range(0..q)).collect();
        self.encode(&info).expect("info drawn in range")
    }

    /// Word placed on the channel in `mode`.
    pub fn channel_word(&self, xbar: &[u8], mode: Mode) -> Vec<u8> {
        match mode {
            Mode::Base => xbar.to_vec(),
            Mode::Extended => extend_codeword(xbar, self.p(), Some(&self.gens)).expect("consistent lengths").bits,
        }
    }
}

pub(crate) fn stream_rng(seed: u64, tag: u64, frame: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    rng.set_stream(frame);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ChannelKind {
    Bsc { eps: f64 },
    Bec { delta: f64 },
    BiAwgn { sigma: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelModel {
    pub kind: ChannelKind,
    pub seed: u64,
}

/// What the receiver sees.
#[derive(Debug, Clone, PartialEq)]
pub enum Received {
    Bits(Vec<u8>),
    Erasures { bits: Vec<u8>, erased: Vec<bool> },
    Reals(Vec<f64>),
}

impl Received {
    pub fn len(&self) -> usize {
        match self {
            Received::Bits(b) => b.len(),
            Received::Erasures { bits, .. } => bits.len(),
            Received::Reals(y) => y.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// `sigma^2 = 1 / (2 R 10^(EbN0/10))`.
pub fn sigma_from_ebn0(ebn0_db: f64, rate: f64) -> f64 {
    (1.0 / (2.0 * rate * 10f64.powf(ebn0_db / 10.0))).sqrt()
}

pub fn ebn0_from_sigma(sigma: f64, rate: f64) -> f64 {
    10.0 * (1.0 / (2.0 * rate * sigma * sigma)).log10()
}

impl ChannelModel {
    pub fn bsc(eps: f64, seed: u64) -> Result<Self> {
        if !(0.0..=0.5).contains(&eps) {
            return Err(Error::InvalidArgument(format!("crossover {eps} outside [0, 1/2]")));
        }
        Ok(ChannelModel { kind: ChannelKind::Bsc { eps }, seed })
    }

    pub fn bec(delta: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&delta) {
            return Err(Error::InvalidArgument(format!("erasure probability {delta} outside [0, 1]")));
        }
        Ok(ChannelModel { kind: ChannelKind::Bec { delta }, seed })
    }

    pub fn biawgn(sigma: f64, seed: u64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidArgument(format!("sigma {sigma} must be positive")));
        }
        Ok(ChannelModel { kind: ChannelKind::BiAwgn { sigma }, seed })
    }

    pub fn biawgn_ebn0(ebn0_db: f64, rate: f64, seed: u64) -> Result<Self> {
        if !(rate > 0.0 && rate <= 1.0) {
            return Err(Error::InvalidArgument(format!("rate {rate} outside (0, 1]")));
        }
        ChannelModel::biawgn(sigma_from_ebn0(ebn0_db, rate), seed)
    }

    pub fn sigma2(&self) -> Option<f64> {
        match self.kind {
            ChannelKind::BiAwgn { sigma } => Some(sigma * sigma),
            _ => None,
        }
    }

    /// Sends `bits` as frame `frame`. Each position consumes one draw, so
    /// the same (seed, frame, position) always sees the same noise.
    pub fn transmit(&self, bits: &[u8], frame: u64) -> Received {
        let mut rng = stream_rng(self.seed, 0x6368_616e, frame);
        match self.kind {
            ChannelKind::Bsc { eps } => Received::Bits(
                bits.iter()
                    .map(|&b| {
                        let u: f64 = rng.random();
                        b ^ u8::from(u < eps)
                    })
                    .collect(),
            ),
            ChannelKind::Bec { delta } => {
                let erased: Vec<bool> = bits
                    .iter()
                    .map(|_| {
                        let u: f64 = rng.random();
                        u < delta
                    })
                    .collect();
                let bits = bits.iter().zip(&erased).map(|(&b, &e)| if e { 0 } else { b }).collect();
                Received::Erasures { bits, erased }
            }
            ChannelKind::BiAwgn { sigma } => Received::Reals(
                bits.iter()
                    .map(|&b| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        1.0 - 2.0 * f64::from(b) + sigma * z
                    })
                    .collect(),
            ),
        }
    }

    /// Per-position LLRs with positive meaning bit 0.
    pub fn llrs(&self, rx: &Received) -> Result<Vec<f64>> {
        match (self.kind, rx) {
            (ChannelKind::BiAwgn { sigma }, Received::Reals(y)) => {
                let s2 = sigma * sigma;
                Ok(y.iter().map(|&v| saturate(2.0 * v / s2)).collect())
            }
            (ChannelKind::Bsc { eps }, Received::Bits(b)) => {
                let mag = if eps == 0.0 { LLR_SATURATION } else { saturate(((1.0 - eps) / eps).ln()) };
                Ok(b.iter().map(|&x| if x == 0 { mag } else { -mag }).collect())
            }
            (ChannelKind::Bec { .. }, Received::Erasures { bits, erased }) => Ok(bits
                .iter()
                .zip(erased)
                .map(|(&b, &e)| match (e, b) {
                    (true, _) => 0.0,
                    (false, 0) => LLR_SATURATION,
                    _ => -LLR_SATURATION,
                })
                .collect()),
            _ => Err(Error::ModeMismatch("received sequence does not match the channel kind".into())),
        }
    }
}

pub fn saturate(x: f64) -> f64 {
    x.clamp(-LLR_SATURATION, LLR_SATURATION)
}

/// Extended-mode LLRs `2y / sigma^2`, zero on inactive positions.
pub fn llr_init_direct(ch: &ChannelModel, y_e: &[f64], gens: &GeneratorSet) -> Result<Vec<f64>> {
    let q1 = (1usize << gens.p()) - 1;
    if y_e.len() != gens.n() * q1 {
        return Err(Error::ModeMismatch(format!(
            "extended mode expects {} values, got {}",
            gens.n() * q1,
            y_e.len()
        )));
    }
    let Some(s2) = ch.sigma2() else {
        return Err(Error::ModeMismatch("direct initialization needs a Gaussian channel".into()));
    };
    let mask = gens.column_mask();
    Ok(y_e
        .iter()
        .zip(&mask)
        .map(|(&y, &a)| if a { saturate(2.0 * y / s2) } else { 0.0 })
        .collect())
}

/// Base-mode Gaussian observations mapped onto extended positions.
pub fn llr_init_indirect(ch: &ChannelModel, ybar: &[f64], gens: &GeneratorSet) -> Result<Vec<f64>> {
    let Some(s2) = ch.sigma2() else {
        return Err(Error::ModeMismatch("indirect initialization needs a Gaussian channel".into()));
    };
    let base: Vec<f64> = ybar.iter().map(|&y| saturate(2.0 * y / s2)).collect();
    extend_llrs(&base, gens)
}

/// Extended LLRs from base-bit LLRs: for position `c` of symbol `j` the
/// magnitude is the smallest base magnitude among the bits set in `c`, the
/// sign is the parity of their hard decisions.
pub fn extend_llrs(base: &[f64], gens: &GeneratorSet) -> Result<Vec<f64>> {
    let p = gens.p();
    let q1 = (1usize << p) - 1;
    if base.len() != gens.n() * p {
        return Err(Error::ModeMismatch(format!(
            "base mode expects {} values, got {}",
            gens.n() * p,
            base.len()
        )));
    }
    let mask = gens.column_mask();
    let mut out = vec![0.0; gens.n() * q1];
    for j in 0..gens.n() {
        let l = &base[j * p..(j + 1) * p];
        for c in 1..=q1 {
            let pos = j * q1 + c - 1;
            if !mask[pos] {
                continue;
            }
            let mut mag = f64::INFINITY;
            let mut neg = false;
            for (k, &v) in l.iter().enumerate() {
                if (c >> k) & 1 == 1 {
                    mag = mag.min(v.abs());
                    neg ^= v < 0.0;
                }
            }
            out[pos] = if neg { -mag } else { mag };
        }
    }
    Ok(out)
}

/// Extended erasure pattern from base-bit erasures: a position is known
/// when every base bit it sums is known.
pub fn extend_erasures(bits: &[u8], erased: &[bool], gens: &GeneratorSet) -> Result<(Vec<u8>, Vec<bool>)> {
    let p = gens.p();
    let q1 = (1usize << p) - 1;
    if bits.len() != gens.n() * p || erased.len() != bits.len() {
        return Err(Error::ModeMismatch("base erasure pattern has the wrong length".into()));
    }
    let mask = gens.column_mask();
    let mut vb = vec![0u8; gens.n() * q1];
    let mut ve = vec![true; gens.n() * q1];
    for j in 0..gens.n() {
        for c in 1..=q1 {
            let pos = j * q1 + c - 1;
            if !mask[pos] {
                continue;
            }
            let mut known = true;
            let mut v = 0u8;
            for k in 0..p {
                if (c >> k) & 1 == 1 {
                    known &= !erased[j * p + k];
                    v ^= bits[j * p + k];
                }
            }
            if known {
                ve[pos] = false;
                vb[pos] = v;
            }
        }
    }
    Ok((vb, ve))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    fn gf4_single() -> NonBinaryMatrix {
        let ctx = Arc::new(FieldContext::new(2).unwrap());
        NonBinaryMatrix::new(ctx, 2, vec![vec![(0, 2), (1, 1)]]).unwrap()
    }

    #[test]
    fn encoder_single_parity() {
        let h = gf4_single();
        let enc = Encoder::new(&h);
        assert_eq!(enc.k(), 1);
        let x = enc.encode(h.ctx(), &[2]).unwrap();
        assert_eq!(x, vec![2, h.ctx().mul(2, 2)]);
        assert!(h.is_codeword(&x));
        assert_eq!(enc.encode(h.ctx(), &[0]).unwrap(), vec![0, 0]);
    }

    #[test]
    fn encoder_on_fixture() {
        let ctx = Arc::new(FieldContext::new(3).unwrap());
        let mother = crate::fixtures::gallager12();
        let rows = (0..mother.n_rows())
            .map(|i| mother.row(i).iter().map(|&j| (j, 1 + (i as u32 + j) % 7)).collect())
            .collect();
        let h = NonBinaryMatrix::new(ctx, 12, rows).unwrap();
        let spec = CodeSpec::plain(h, Mode::Base).unwrap();
        assert_eq!(spec.k(), 12 - spec.h.rank_fq());
        for f in 0..20 {
            let (x, xbar) = spec.random_codeword(9, f);
            assert!(spec.h.is_codeword(&x));
            assert!(spec.img.matrix().annihilates(&xbar));
        }
    }

    #[test]
    fn channel_edges() {
        let bits = vec![0u8, 1, 1, 0, 1];
        assert_eq!(ChannelModel::bsc(0.0, 1).unwrap().transmit(&bits, 0), Received::Bits(bits.clone()));
        match ChannelModel::bec(1.0, 1).unwrap().transmit(&bits, 0) {
            Received::Erasures { erased, .. } => assert!(erased.iter().all(|&e| e)),
            _ => unreachable!(),
        }
        match ChannelModel::biawgn(1e-9, 1).unwrap().transmit(&bits, 3) {
            Received::Reals(y) => {
                let hard: Vec<u8> = y.iter().map(|&v| u8::from(v < 0.0)).collect();
                assert_eq!(hard, bits);
            }
            _ => unreachable!(),
        }
        assert!(ChannelModel::bsc(0.6, 0).is_err());
        assert!(ChannelModel::biawgn(0.0, 0).is_err());
    }

    #[test]
    fn transmit_is_deterministic_and_monotone() {
        let bits = vec![0u8; 400];
        let a = ChannelModel::bec(0.2, 5).unwrap().transmit(&bits, 7);
        assert_eq!(a, ChannelModel::bec(0.2, 5).unwrap().transmit(&bits, 7));
        let (Received::Erasures { erased: e1, .. }, Received::Erasures { erased: e2, .. }) =
            (a, ChannelModel::bec(0.4, 5).unwrap().transmit(&bits, 7))
        else {
            unreachable!()
        };
        assert!(e1.iter().zip(&e2).all(|(&x, &y)| !x || y));
    }

    #[test]
    fn llr_rules() {
        let gens = GeneratorSet::full_generators(2, 1);
        let ch = ChannelModel::biawgn(1.0, 0).unwrap();
        let l = llr_init_direct(&ch, &[0.0, 1.7, -0.5], &gens).unwrap();
        assert_eq!(l[0], 0.0);
        assert!((l[1] - 3.4).abs() < 1e-12);
        assert!(llr_init_direct(&ch, &[0.0, 1.7], &gens).is_err());
        // positions 1 and 2 are single base bits, position 3 sums both
        let ind = llr_init_indirect(&ch, &[0.3, 1.1], &gens).unwrap();
        assert!((ind[0] - 0.6).abs() < 1e-12);
        assert!((ind[1] - 2.2).abs() < 1e-12);
        assert!((ind[2] - 0.6).abs() < 1e-12);
        let ind = llr_init_indirect(&ch, &[0.3, -1.1], &gens).unwrap();
        assert!((ind[2] + 0.6).abs() < 1e-12);
        let mut masked = gens.generators().to_vec();
        masked[0] = crate::representation::GeneratorMatrix::from_columns(0, 2, &[1, 2]).unwrap();
        let g2 = GeneratorSet::new(2, masked, Default::default()).unwrap();
        assert_eq!(llr_init_direct(&ch, &[0.4, 0.4, 0.4], &g2).unwrap()[2], 0.0);
    }

    #[test]
    fn mean_llr_of_zero_word() {
        let gens = GeneratorSet::full_generators(2, 2000);
        let ch = ChannelModel::biawgn(1.0, 3).unwrap();
        let Received::Reals(y) = ch.transmit(&vec![0u8; 6000], 0) else { unreachable!() };
        let l = llr_init_direct(&ch, &y, &gens).unwrap();
        let mean = l.iter().sum::<f64>() / l.len() as f64;
        assert!((mean - 2.0).abs() < 0.1, "{mean}");
    }

    #[test]
    fn ebn0_round_trip() {
        let s = sigma_from_ebn0(2.0, 0.5);
        assert!((ebn0_from_sigma(s, 0.5) - 2.0).abs() < 1e-12);
        assert!((sigma_from_ebn0(0.0, 0.5) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn erasure_extension() {
        let gens = GeneratorSet::full_generators(2, 1);
        let (v, e) = extend_erasures(&[1, 0], &[false, true], &gens).unwrap();
        assert_eq!(e, vec![false, true, true]);
        assert_eq!(v[0], 1);
    }
}
