//! GF(2^p) arithmetic, companion-matrix labels and the extender basis.
//!
//! Elements are stored as integers whose bit `i` is the coefficient of `x^i`
//! (LSB-first). The same convention fixes the column order of the extender
//! basis: column `j` is the binary expansion of `j`.

use crate::error::{Error, Result};

/// Default primitive polynomials, indexed by extension degree.
const DEFAULT_PRIMITIVE: [u32; 17] = [
    0, 0, 0x7, 0xb, 0x13, 0x25, 0x43, 0x83, 0x11d, 0x211, 0x409, 0x805, 0x1053, 0x201b, 0x4443,
    0x8003, 0x1100b,
];

/// Lookup tables for GF(2^p).
#[derive(Debug, Clone, PartialEq)]
pub struct FieldContext {
    p: u32,
    q: u32,
    prim_poly: u32,
    log: Vec<u32>,
    // doubled so that exp[a + b] needs no reduction
    exp: Vec<u32>,
}

/// Field operation selector for [`FieldContext::arith`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldOp {
    Add,
    Mul,
    /// `a * b^-1`
    InvMul,
}

impl FieldContext {
    /// Field with the default primitive polynomial for `p`.
    pub fn new(p: u32) -> Result<Self> {
        if !(2..=16).contains(&p) {
            return Err(Error::UnsupportedDegree(p));
        }
        Self::with_poly(p, DEFAULT_PRIMITIVE[p as usize])
    }

    /// Field defined by an explicit primitive polynomial (bit mask including `x^p`).
    pub fn with_poly(p: u32, prim_poly: u32) -> Result<Self> {
        if !(2..=16).contains(&p) {
            return Err(Error::UnsupportedDegree(p));
        }
        let q = 1u32 << p;
        if prim_poly >> p != 1 {
            return Err(Error::NotPrimitive { p, poly: prim_poly });
        }
        let n = (q - 1) as usize;
        let mut exp = vec![0u32; 2 * n];
        let mut log = vec![0u32; q as usize];
        let mut seen = vec![false; q as usize];
        let mut x = 1u32;
        for (i, slot) in exp.iter_mut().take(n).enumerate() {
            if seen[x as usize] {
                return Err(Error::NotPrimitive { p, poly: prim_poly });
            }
            seen[x as usize] = true;
            *slot = x;
            log[x as usize] = i as u32;
            x <<= 1;
            if x & q != 0 {
                x ^= prim_poly;
            }
        }
        if x != 1 {
            return Err(Error::NotPrimitive { p, poly: prim_poly });
        }
        for i in n..2 * n {
            exp[i] = exp[i - n];
        }
        Ok(FieldContext {
            p,
            q,
            prim_poly,
            log,
            exp,
        })
    }

    pub fn p(&self) -> u32 {
        self.p
    }

    pub fn q(&self) -> u32 {
        self.q
    }

    /// Number of nonzero elements, `q - 1`.
    pub fn order(&self) -> usize {
        (self.q - 1) as usize
    }

    pub fn prim_poly(&self) -> u32 {
        self.prim_poly
    }

    fn check(&self, a: u32) -> Result<()> {
        if a >= self.q {
            Err(Error::ElementOutOfRange {
                value: a,
                q: self.q,
            })
        } else {
            Ok(())
        }
    }

    /// Checked arithmetic on two elements.
    pub fn arith(&self, a: u32, b: u32, op: FieldOp) -> Result<u32> {
        self.check(a)?;
        self.check(b)?;
        match op {
            FieldOp::Add => Ok(a ^ b),
            FieldOp::Mul => Ok(self.mul(a, b)),
            FieldOp::InvMul => self.div(a, b),
        }
    }

    #[inline]
    pub fn add(&self, a: u32, b: u32) -> u32 {
        a ^ b
    }

    #[inline]
    pub fn mul(&self, a: u32, b: u32) -> u32 {
        if a == 0 || b == 0 {
            0
        } else {
            self.exp[(self.log[a as usize] + self.log[b as usize]) as usize]
        }
    }

    pub fn div(&self, a: u32, b: u32) -> Result<u32> {
        if b == 0 {
            return Err(Error::DivisionByZero);
        }
        if a == 0 {
            return Ok(0);
        }
        let n = self.q - 1;
        let e = (self.log[a as usize] + n - self.log[b as usize]) % n;
        Ok(self.exp[e as usize])
    }

    pub fn inv(&self, a: u32) -> Result<u32> {
        self.div(1, a)
    }

    /// `alpha^i` for the primitive element alpha.
    #[inline]
    pub fn exp(&self, i: usize) -> u32 {
        self.exp[i % self.order()]
    }

    /// Discrete logarithm of a nonzero element.
    pub fn log(&self, a: u32) -> Result<u32> {
        self.check(a)?;
        if a == 0 {
            return Err(Error::InvalidArgument("log of zero".into()));
        }
        Ok(self.log[a as usize])
    }

    /// The `p x p` binary matrix of multiplication by `u`.
    pub fn companion_label(&self, u: u32) -> MatrixLabel {
        let p = self.p as usize;
        let mut rows = vec![0u32; p];
        for k in 0..p {
            let col = self.mul(u, 1 << k);
            for (r, row) in rows.iter_mut().enumerate() {
                if (col >> r) & 1 == 1 {
                    *row |= 1 << k;
                }
            }
        }
        MatrixLabel { p, rows }
    }

    /// Companion labels of all nonzero elements, in the order `1, 2, ..., q-1`.
    pub fn nonzero_companions(&self) -> Vec<MatrixLabel> {
        (1..self.q).map(|u| self.companion_label(u)).collect()
    }

    pub fn extender_basis(&self) -> ExtenderBasis {
        ExtenderBasis { p: self.p as usize }
    }
}

/// A `p x p` binary matrix. Row `r` is a bit mask; bit `k` is the entry in column `k`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MatrixLabel {
    p: usize,
    rows: Vec<u32>,
}

impl MatrixLabel {
    pub fn from_rows(p: usize, rows: Vec<u32>) -> Result<Self> {
        if rows.len() != p || rows.iter().any(|&r| r >> p != 0) {
            return Err(Error::DimensionMismatch(format!(
                "label rows must be {p} masks of {p} bits"
            )));
        }
        Ok(MatrixLabel { p, rows })
    }

    /// Label whose column `k` is the bit vector `cols[k]`.
    pub fn from_columns(p: usize, cols: &[u32]) -> Result<Self> {
        if cols.len() != p || cols.iter().any(|&c| c >> p != 0) {
            return Err(Error::DimensionMismatch(format!(
                "label columns must be {p} masks of {p} bits"
            )));
        }
        let mut rows = vec![0u32; p];
        for (k, &c) in cols.iter().enumerate() {
            for (r, row) in rows.iter_mut().enumerate() {
                if (c >> r) & 1 == 1 {
                    *row |= 1 << k;
                }
            }
        }
        Ok(MatrixLabel { p, rows })
    }

    pub fn identity(p: usize) -> Self {
        MatrixLabel {
            p,
            rows: (0..p).map(|r| 1u32 << r).collect(),
        }
    }

    pub fn zero(p: usize) -> Self {
        MatrixLabel {
            p,
            rows: vec![0; p],
        }
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn rows(&self) -> &[u32] {
        &self.rows
    }

    pub fn get(&self, r: usize, c: usize) -> bool {
        (self.rows[r] >> c) & 1 == 1
    }

    /// Column `k` as a bit mask.
    pub fn column(&self, k: usize) -> u32 {
        self.rows
            .iter()
            .enumerate()
            .fold(0, |acc, (r, &row)| acc | (((row >> k) & 1) << r))
    }

    pub fn is_zero(&self) -> bool {
        self.rows.iter().all(|&r| r == 0)
    }

    /// `L * x` over GF(2).
    #[inline]
    pub fn apply(&self, x: u32) -> u32 {
        self.rows
            .iter()
            .enumerate()
            .fold(0, |acc, (r, &row)| acc | (((row & x).count_ones() & 1) << r))
    }

    /// `L^T * x` over GF(2): XOR of the rows selected by `x`.
    #[inline]
    pub fn apply_transpose(&self, x: u32) -> u32 {
        let mut acc = 0;
        let mut bits = x;
        while bits != 0 {
            let r = bits.trailing_zeros() as usize;
            acc ^= self.rows[r];
            bits &= bits - 1;
        }
        acc
    }

    /// Matrix product `self * other`.
    pub fn mul(&self, other: &MatrixLabel) -> MatrixLabel {
        // (A B)[r] = XOR over k in A[r] of B[k]
        let rows = self
            .rows
            .iter()
            .map(|&a| other.apply_transpose(a))
            .collect();
        MatrixLabel { p: self.p, rows }
    }

    pub fn transpose(&self) -> MatrixLabel {
        let cols: Vec<u32> = (0..self.p).map(|k| self.column(k)).collect();
        MatrixLabel {
            p: self.p,
            rows: cols,
        }
    }

    pub fn rank(&self) -> usize {
        rank_of_masks(&self.rows)
    }

    pub fn is_full_rank(&self) -> bool {
        self.rank() == self.p
    }
}

/// GF(2) rank of a set of bit-mask vectors.
pub fn rank_of_masks(vectors: &[u32]) -> usize {
    let mut basis: Vec<u32> = Vec::new();
    for &v in vectors {
        let mut x = v;
        for &b in &basis {
            x = x.min(x ^ b);
        }
        if x != 0 {
            basis.push(x);
            basis.sort_unstable_by(|a, b| b.cmp(a));
        }
    }
    basis.len()
}

/// The `p x (q-1)` matrix whose column `j` is the binary expansion of `j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExtenderBasis {
    p: usize,
}

impl ExtenderBasis {
    pub fn new(p: usize) -> Self {
        ExtenderBasis { p }
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn len(&self) -> usize {
        (1usize << self.p) - 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Column `j` (1-based) as a bit mask.
    pub fn column(&self, j: usize) -> u32 {
        assert!(j >= 1 && j <= self.len(), "column {j} out of range");
        j as u32
    }

    pub fn columns(&self) -> impl Iterator<Item = u32> {
        1..=(self.len() as u32)
    }

    pub fn to_bitmatrix(&self) -> crate::bitmatrix::BitMatrix {
        let n = self.len();
        let rows = (0..self.p)
            .map(|r| {
                (1..=n)
                    .filter(|&j| (j >> r) & 1 == 1)
                    .map(|j| (j - 1) as u32)
                    .collect()
            })
            .collect();
        crate::bitmatrix::BitMatrix::from_sorted_rows(n, rows)
    }
}

/// Bits of `value` as a length-`p` vector, LSB first.
pub fn to_bits(value: u32, p: usize) -> Vec<u8> {
    (0..p).map(|k| ((value >> k) & 1) as u8).collect()
}

/// Inverse of [`to_bits`].
pub fn from_bits(bits: &[u8]) -> u32 {
    bits.iter()
        .enumerate()
        .fold(0, |acc, (k, &b)| acc | (((b & 1) as u32) << k))
}

#[cfg(test)]
mod tests {
    use super::*;

    // schoolbook polynomial product reduced modulo the primitive polynomial
    fn poly_mul_mod(a: u32, b: u32, poly: u32, p: u32) -> u32 {
        let mut prod = 0u64;
        for i in 0..p {
            if (b >> i) & 1 == 1 {
                prod ^= (a as u64) << i;
            }
        }
        for d in (p..2 * p).rev() {
            if (prod >> d) & 1 == 1 {
                prod ^= (poly as u64) << (d - p);
            }
        }
        prod as u32
    }

    #[test]
    fn default_polynomials_are_primitive() {
        for p in 2..=16 {
            let ctx = FieldContext::new(p).unwrap();
            assert_eq!(ctx.q(), 1 << p);
        }
    }

    #[test]
    fn rejects_non_primitive() {
        // x^4 + x^3 + x^2 + x + 1 is irreducible but has order 5
        assert!(matches!(
            FieldContext::with_poly(4, 0x1f),
            Err(Error::NotPrimitive { .. })
        ));
        assert!(matches!(
            FieldContext::new(1),
            Err(Error::UnsupportedDegree(1))
        ));
    }

    #[test]
    fn log_antilog_roundtrip() {
        let ctx = FieldContext::new(6).unwrap();
        for u in 1..ctx.q() {
            assert_eq!(ctx.exp(ctx.log(u).unwrap() as usize), u);
        }
        for i in 0..ctx.order() {
            assert_eq!(ctx.log(ctx.exp(i)).unwrap() as usize, i);
        }
    }

    #[test]
    fn small_field_examples() {
        let gf4 = FieldContext::new(2).unwrap();
        assert_eq!(gf4.arith(2, 2, FieldOp::Add).unwrap(), 0);
        assert_eq!(gf4.arith(2, 2, FieldOp::Mul).unwrap(), 3);
        assert_eq!(poly_mul_mod(2, 2, 0x7, 2), 3);
        let gf8 = FieldContext::new(3).unwrap();
        let a3 = gf8.exp(3);
        let a4 = gf8.exp(4);
        assert_eq!(gf8.mul(a3, a4), 1);
        assert_eq!(gf8.arith(5, 0, FieldOp::InvMul), Err(Error::DivisionByZero));
        assert!(gf8.arith(8, 1, FieldOp::Add).is_err());
    }

    #[test]
    fn multiplication_matches_polynomial_oracle() {
        for p in 2..=6 {
            let ctx = FieldContext::new(p).unwrap();
            for a in 0..ctx.q() {
                for b in 0..ctx.q() {
                    assert_eq!(ctx.mul(a, b), poly_mul_mod(a, b, ctx.prim_poly(), p));
                }
            }
        }
    }

    #[test]
    fn division_inverts_multiplication() {
        let ctx = FieldContext::new(5).unwrap();
        for a in 0..ctx.q() {
            for b in 1..ctx.q() {
                assert_eq!(ctx.mul(ctx.div(a, b).unwrap(), b), a);
            }
        }
    }

    #[test]
    fn companion_examples() {
        let gf4 = FieldContext::new(2).unwrap();
        assert_eq!(gf4.companion_label(1), MatrixLabel::identity(2));
        let alpha = gf4.companion_label(2);
        assert_eq!(alpha.rows(), &[0b10, 0b11]);
        assert_eq!(alpha.column(0), 2);
        assert_eq!(alpha.column(1), 3);
        let gf8 = FieldContext::new(3).unwrap();
        assert_eq!(gf8.companion_label(0), MatrixLabel::zero(3));
    }

    #[test]
    fn companion_is_multiplication_and_homomorphism() {
        for p in 2..=4 {
            let ctx = FieldContext::new(p).unwrap();
            for u in 0..ctx.q() {
                let lu = ctx.companion_label(u);
                assert_eq!(lu.rank(), if u == 0 { 0 } else { p as usize });
                for w in 0..ctx.q() {
                    assert_eq!(lu.apply(w), ctx.mul(u, w));
                    let lw = ctx.companion_label(w);
                    assert_eq!(lu.mul(&lw), ctx.companion_label(ctx.mul(u, w)));
                }
            }
        }
    }

    #[test]
    fn extender_basis_columns() {
        let b2 = ExtenderBasis::new(2);
        assert_eq!(b2.columns().collect::<Vec<_>>(), vec![1, 2, 3]);
        assert_eq!(to_bits(b2.column(1), 2), vec![1, 0]);
        assert_eq!(to_bits(b2.column(2), 2), vec![0, 1]);
        assert_eq!(to_bits(b2.column(3), 2), vec![1, 1]);
        let b3 = ExtenderBasis::new(3);
        assert_eq!(b3.len(), 7);
        assert_eq!(to_bits(b3.column(5), 3), vec![1, 0, 1]);
        for p in 2..=8 {
            let b = ExtenderBasis::new(p);
            let mut seen = vec![false; 1 << p];
            for c in b.columns() {
                assert!(c != 0 && !seen[c as usize]);
                seen[c as usize] = true;
            }
            assert_eq!(seen.iter().filter(|&&s| s).count(), (1 << p) - 1);
        }
    }

    #[test]
    fn label_transpose_and_columns() {
        let l = MatrixLabel::from_columns(3, &[3, 6, 7]).unwrap();
        assert_eq!(l.column(0), 3);
        assert_eq!(l.column(2), 7);
        assert_eq!(l.transpose().transpose(), l);
        assert_eq!(l.apply_transpose(1), l.transpose().apply(1));
        assert_eq!(rank_of_masks(&[1, 2, 3]), 2);
    }
}
