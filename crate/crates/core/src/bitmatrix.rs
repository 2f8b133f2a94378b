//! Sparse binary matrices over GF(2).
//!
//! Rows are stored as strictly increasing column lists. Rank and products go
//! through a bit-packed dense representation built on demand.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::gf::rank_of_masks;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BitMatrix {
    n_rows: usize,
    n_cols: usize,
    rows: Vec<Vec<u32>>,
}

/// Uniform block partition of a matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockStructure {
    pub block_rows: usize,
    pub block_cols: usize,
    pub row_size: usize,
    pub col_size: usize,
}

impl BlockStructure {
    pub fn fits(&self, m: &BitMatrix) -> bool {
        self.block_rows * self.row_size == m.n_rows() && self.block_cols * self.col_size == m.n_cols()
    }
}

/// Counting mode for [`BitMatrix::weight`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightMode {
    NonzeroColumns,
    NonzeroEntries,
}

/// Dense packed rows, used internally for elimination.
struct Packed {
    words: usize,
    data: Vec<u64>,
}

impl Packed {
    fn row(&self, r: usize) -> &[u64] {
        &self.data[r * self.words..(r + 1) * self.words]
    }
}

impl BitMatrix {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        BitMatrix {
            n_rows,
            n_cols,
            rows: vec![Vec::new(); n_rows],
        }
    }

    pub fn identity(n: usize) -> Self {
        BitMatrix {
            n_rows: n,
            n_cols: n,
            rows: (0..n as u32).map(|i| vec![i]).collect(),
        }
    }

    /// Builds from row lists that are already sorted and in range.
    ///
    /// Panics in debug builds if the invariant is violated.
    pub fn from_sorted_rows(n_cols: usize, rows: Vec<Vec<u32>>) -> Self {
        debug_assert!(rows
            .iter()
            .all(|r| r.windows(2).all(|w| w[0] < w[1]) && r.last().is_none_or(|&c| (c as usize) < n_cols)));
        BitMatrix {
            n_rows: rows.len(),
            n_cols,
            rows,
        }
    }

    /// Validating constructor. Rows may be unsorted but must not repeat a column.
    pub fn from_rows(n_cols: usize, rows: Vec<Vec<u32>>) -> Result<Self> {
        let mut out = Vec::with_capacity(rows.len());
        for (r, mut row) in rows.into_iter().enumerate() {
            row.sort_unstable();
            if row.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::InvalidArgument(format!("row {r} repeats a column")));
            }
            if let Some(&c) = row.last() {
                if c as usize >= n_cols {
                    return Err(Error::IndexOutOfRange(format!(
                        "row {r} has column {c} >= {n_cols}"
                    )));
                }
            }
            out.push(row);
        }
        Ok(BitMatrix {
            n_rows: out.len(),
            n_cols,
            rows: out,
        })
    }

    pub fn from_dense(dense: &[Vec<u8>]) -> Self {
        let n_cols = dense.first().map_or(0, |r| r.len());
        let rows = dense
            .iter()
            .map(|r| {
                assert_eq!(r.len(), n_cols, "ragged dense matrix");
                r.iter()
                    .enumerate()
                    .filter(|(_, &b)| b & 1 == 1)
                    .map(|(c, _)| c as u32)
                    .collect()
            })
            .collect();
        BitMatrix {
            n_rows: dense.len(),
            n_cols,
            rows,
        }
    }

    /// Parses rows written as strings of '0' and '1'.
    pub fn from_strs(rows: &[&str]) -> Self {
        let dense: Vec<Vec<u8>> = rows
            .iter()
            .map(|s| s.bytes().map(|b| (b == b'1') as u8).collect())
            .collect();
        Self::from_dense(&dense)
    }

    pub fn to_dense(&self) -> Vec<Vec<u8>> {
        self.rows
            .iter()
            .map(|row| {
                let mut d = vec![0u8; self.n_cols];
                for &c in row {
                    d[c as usize] = 1;
                }
                d
            })
            .collect()
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn row(&self, r: usize) -> &[u32] {
        &self.rows[r]
    }

    pub fn rows(&self) -> &[Vec<u32>] {
        &self.rows
    }

    pub fn into_rows(self) -> Vec<Vec<u32>> {
        self.rows
    }

    pub fn get(&self, r: usize, c: usize) -> bool {
        self.rows[r].binary_search(&(c as u32)).is_ok()
    }

    /// Toggles entry `(r, c)`.
    pub fn flip(&mut self, r: usize, c: usize) {
        let row = &mut self.rows[r];
        match row.binary_search(&(c as u32)) {
            Ok(pos) => {
                row.remove(pos);
            }
            Err(pos) => row.insert(pos, c as u32),
        }
    }

    pub fn set_row(&mut self, r: usize, mut cols: Vec<u32>) {
        cols.sort_unstable();
        cols.dedup();
        self.rows[r] = cols;
    }

    pub fn push_row(&mut self, mut cols: Vec<u32>) {
        cols.sort_unstable();
        cols.dedup();
        self.rows.push(cols);
        self.n_rows += 1;
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn row_weights(&self) -> Vec<usize> {
        self.rows.iter().map(Vec::len).collect()
    }

    pub fn col_weights(&self) -> Vec<usize> {
        let mut w = vec![0usize; self.n_cols];
        for row in &self.rows {
            for &c in row {
                w[c as usize] += 1;
            }
        }
        w
    }

    pub fn is_zero(&self) -> bool {
        self.rows.iter().all(Vec::is_empty)
    }

    pub fn weight(&self, mode: WeightMode) -> usize {
        match mode {
            WeightMode::NonzeroColumns => self.col_weights().iter().filter(|&&w| w > 0).count(),
            WeightMode::NonzeroEntries => self.nnz(),
        }
    }

    pub fn transpose(&self) -> BitMatrix {
        let mut cols = vec![Vec::new(); self.n_cols];
        for (r, row) in self.rows.iter().enumerate() {
            for &c in row {
                cols[c as usize].push(r as u32);
            }
        }
        BitMatrix {
            n_rows: self.n_cols,
            n_cols: self.n_rows,
            rows: cols,
        }
    }

    /// Column `c` as a sorted list of row indices.
    pub fn column(&self, c: usize) -> Vec<u32> {
        (0..self.n_rows)
            .filter(|&r| self.get(r, c))
            .map(|r| r as u32)
            .collect()
    }

    fn packed(&self) -> Packed {
        let words = self.n_cols.div_ceil(64).max(1);
        let mut data = vec![0u64; words * self.n_rows];
        for (r, row) in self.rows.iter().enumerate() {
            for &c in row {
                data[r * words + (c as usize >> 6)] |= 1u64 << (c & 63);
            }
        }
        Packed { words, data }
    }

    /// Rank over GF(2).
    pub fn rank_f2(&self) -> usize {
        if self.n_rows == 0 || self.n_cols == 0 {
            return 0;
        }
        // eliminate along the shorter dimension to keep the packed form small
        if self.n_cols > self.n_rows {
            return self.transpose().rank_f2();
        }
        let mut p = self.packed();
        let words = p.words;
        let n = self.n_rows;
        let mut rank = 0;
        for col in 0..self.n_cols {
            let (w, bit) = (col >> 6, 1u64 << (col & 63));
            let Some(piv) = (rank..n).find(|&r| p.data[r * words + w] & bit != 0) else {
                continue;
            };
            if piv != rank {
                for k in 0..words {
                    p.data.swap(piv * words + k, rank * words + k);
                }
            }
            let pivot_row: Vec<u64> = p.row(rank)[w..].to_vec();
            for r in (rank + 1)..n {
                if p.data[r * words + w] & bit != 0 {
                    for (k, &v) in pivot_row.iter().enumerate() {
                        p.data[r * words + w + k] ^= v;
                    }
                }
            }
            rank += 1;
            if rank == n {
                break;
            }
        }
        rank
    }

    /// `self * other` over GF(2).
    pub fn gf2_mul(&self, other: &BitMatrix) -> Result<BitMatrix> {
        if self.n_cols != other.n_rows {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} times {}x{}",
                self.n_rows, self.n_cols, other.n_rows, other.n_cols
            )));
        }
        let pb = other.packed();
        let mut acc = vec![0u64; pb.words];
        let rows = self
            .rows
            .iter()
            .map(|row| {
                acc.iter_mut().for_each(|w| *w = 0);
                for &k in row {
                    for (a, &b) in acc.iter_mut().zip(pb.row(k as usize)) {
                        *a ^= b;
                    }
                }
                unpack(&acc, other.n_cols)
            })
            .collect();
        Ok(BitMatrix {
            n_rows: self.n_rows,
            n_cols: other.n_cols,
            rows,
        })
    }

    /// `self * x` for a 0/1 vector; returns the syndrome.
    pub fn mul_vec(&self, x: &[u8]) -> Result<Vec<u8>> {
        if x.len() != self.n_cols {
            return Err(Error::DimensionMismatch(format!(
                "vector of length {} for {} columns",
                x.len(),
                self.n_cols
            )));
        }
        Ok(self
            .rows
            .iter()
            .map(|row| row.iter().fold(0u8, |s, &c| s ^ (x[c as usize] & 1)))
            .collect())
    }

    /// True when `self * x = 0`.
    pub fn annihilates(&self, x: &[u8]) -> bool {
        self.rows
            .iter()
            .all(|row| row.iter().fold(0u8, |s, &c| s ^ (x[c as usize] & 1)) == 0)
    }

    pub fn kron(&self, other: &BitMatrix) -> BitMatrix {
        let mut rows = Vec::with_capacity(self.n_rows * other.n_rows);
        for ra in &self.rows {
            for rb in &other.rows {
                let mut row = Vec::with_capacity(ra.len() * rb.len());
                for &ca in ra {
                    let base = ca as usize * other.n_cols;
                    row.extend(rb.iter().map(|&cb| (base + cb as usize) as u32));
                }
                rows.push(row);
            }
        }
        BitMatrix {
            n_rows: self.n_rows * other.n_rows,
            n_cols: self.n_cols * other.n_cols,
            rows,
        }
    }

    pub fn block_diag(blocks: &[BitMatrix]) -> BitMatrix {
        let n_cols = blocks.iter().map(|b| b.n_cols).sum();
        let mut rows = Vec::new();
        let mut off = 0u32;
        for b in blocks {
            for row in &b.rows {
                rows.push(row.iter().map(|&c| c + off).collect());
            }
            off += b.n_cols as u32;
        }
        BitMatrix {
            n_rows: rows.len(),
            n_cols,
            rows,
        }
    }

    pub fn hstack(&self, other: &BitMatrix) -> Result<BitMatrix> {
        if self.n_rows != other.n_rows {
            return Err(Error::DimensionMismatch("hstack row counts differ".into()));
        }
        let off = self.n_cols as u32;
        let rows = self
            .rows
            .iter()
            .zip(&other.rows)
            .map(|(a, b)| a.iter().copied().chain(b.iter().map(|&c| c + off)).collect())
            .collect();
        Ok(BitMatrix {
            n_rows: self.n_rows,
            n_cols: self.n_cols + other.n_cols,
            rows,
        })
    }

    pub fn vstack(&self, other: &BitMatrix) -> Result<BitMatrix> {
        if self.n_cols != other.n_cols {
            return Err(Error::DimensionMismatch("vstack column counts differ".into()));
        }
        let mut rows = self.rows.clone();
        rows.extend(other.rows.iter().cloned());
        Ok(BitMatrix {
            n_rows: rows.len(),
            n_cols: self.n_cols,
            rows,
        })
    }

    /// Applies a row permutation and a column permutation: output row `r` is
    /// input row `row_perm[r]`, output column `c` is input column `col_perm[c]`.
    pub fn permute(&self, row_perm: &[usize], col_perm: &[usize]) -> Result<BitMatrix> {
        if row_perm.len() != self.n_rows || col_perm.len() != self.n_cols {
            return Err(Error::DimensionMismatch("permutation lengths".into()));
        }
        let mut inv = vec![u32::MAX; self.n_cols];
        for (new, &old) in col_perm.iter().enumerate() {
            if old >= self.n_cols || inv[old] != u32::MAX {
                return Err(Error::InvalidArgument("column map is not a permutation".into()));
            }
            inv[old] = new as u32;
        }
        let mut seen = vec![false; self.n_rows];
        let mut rows = Vec::with_capacity(self.n_rows);
        for &old in row_perm {
            if old >= self.n_rows || std::mem::replace(&mut seen[old], true) {
                return Err(Error::InvalidArgument("row map is not a permutation".into()));
            }
            let mut row: Vec<u32> = self.rows[old].iter().map(|&c| inv[c as usize]).collect();
            row.sort_unstable();
            rows.push(row);
        }
        Ok(BitMatrix {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            rows,
        })
    }

    /// Exactly one entry in every row and every column.
    pub fn is_permutation(&self) -> bool {
        self.n_rows == self.n_cols
            && self.rows.iter().all(|r| r.len() == 1)
            && self.col_weights().iter().all(|&w| w == 1)
    }

    /// The column-zeroing order: every nonzero column of `self` equals the
    /// same column of `other`. With `strict`, `self` must also have fewer
    /// nonzero columns.
    pub fn precedes(&self, other: &BitMatrix, strict: bool) -> Result<bool> {
        if self.n_rows != other.n_rows || self.n_cols != other.n_cols {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} vs {}x{}",
                self.n_rows, self.n_cols, other.n_rows, other.n_cols
            )));
        }
        let a = self.transpose();
        let b = other.transpose();
        let mut wa = 0;
        let mut wb = 0;
        for (ca, cb) in a.rows.iter().zip(&b.rows) {
            if !ca.is_empty() {
                wa += 1;
                if ca != cb {
                    return Ok(false);
                }
            }
            if !cb.is_empty() {
                wb += 1;
            }
        }
        Ok(!strict || wa < wb)
    }

    /// Partitions into `p x p` blocks and returns the block occupancy matrix
    /// together with whether every occupied block has full rank.
    pub fn extract_mother(&self, p: usize) -> Result<(BitMatrix, bool)> {
        let blocks = self.blocks(p)?;
        let m = self.n_rows / p;
        let n = self.n_cols / p;
        let mut rows = vec![Vec::new(); m];
        let mut full = true;
        let mut keys: Vec<_> = blocks.keys().copied().collect();
        keys.sort_unstable();
        for (bi, bj) in keys {
            let masks = &blocks[&(bi, bj)];
            rows[bi].push(bj as u32);
            if rank_of_masks(masks) != p {
                full = false;
            }
        }
        Ok((
            BitMatrix {
                n_rows: m,
                n_cols: n,
                rows,
            },
            full,
        ))
    }

    /// Nonzero `p x p` blocks keyed by block coordinates; each block is given
    /// as `p` row masks.
    pub fn blocks(&self, p: usize) -> Result<HashMap<(usize, usize), Vec<u32>>> {
        if p == 0 || p > 32 || !self.n_rows.is_multiple_of(p) || !self.n_cols.is_multiple_of(p) {
            return Err(Error::NotDivisible {
                p,
                rows: self.n_rows,
                cols: self.n_cols,
            });
        }
        let mut blocks: HashMap<(usize, usize), Vec<u32>> = HashMap::new();
        for (r, row) in self.rows.iter().enumerate() {
            for &c in row {
                let c = c as usize;
                let entry = blocks.entry((r / p, c / p)).or_insert_with(|| vec![0; p]);
                entry[r % p] |= 1 << (c % p);
            }
        }
        Ok(blocks)
    }

    /// Inverse of [`BitMatrix::blocks`]: places `p x p` masks on a block grid.
    pub fn from_blocks(
        block_rows: usize,
        block_cols: usize,
        p: usize,
        blocks: &HashMap<(usize, usize), Vec<u32>>,
    ) -> BitMatrix {
        let mut rows = vec![Vec::new(); block_rows * p];
        for (&(bi, bj), masks) in blocks {
            for (k, &mask) in masks.iter().enumerate() {
                for b in 0..p {
                    if (mask >> b) & 1 == 1 {
                        rows[bi * p + k].push((bj * p + b) as u32);
                    }
                }
            }
        }
        rows.iter_mut().for_each(|r| r.sort_unstable());
        BitMatrix {
            n_rows: block_rows * p,
            n_cols: block_cols * p,
            rows,
        }
    }

    /// p-reducible for block size `p` in the given alignment, and not
    /// p'-reducible for any other block size `p' > 1` dividing both dimensions.
    pub fn is_strictly_reducible(&self, p: usize) -> Result<bool> {
        if !self.extract_mother(p)?.1 {
            return Ok(false);
        }
        let limit = self.n_rows.min(self.n_cols).min(32);
        for d in (2..=limit).filter(|&d| d != p) {
            if self.n_rows.is_multiple_of(d) && self.n_cols.is_multiple_of(d) && self.extract_mother(d)?.1 {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

fn unpack(words: &[u64], n_cols: usize) -> Vec<u32> {
    let mut out = Vec::new();
    for (w, &word) in words.iter().enumerate() {
        let mut bits = word;
        while bits != 0 {
            let b = bits.trailing_zeros() as usize;
            let c = w * 64 + b;
            if c < n_cols {
                out.push(c as u32);
            }
            bits &= bits - 1;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn arb_matrix(max_r: usize, max_c: usize) -> impl Strategy<Value = BitMatrix> {
        (1..=max_r, 1..=max_c).prop_flat_map(|(r, c)| {
            proptest::collection::vec(proptest::collection::vec(0u8..2, c), r)
                .prop_map(|d| BitMatrix::from_dense(&d))
        })
    }

    #[test]
    fn rank_examples() {
        assert_eq!(BitMatrix::identity(3).rank_f2(), 3);
        assert_eq!(BitMatrix::zeros(2, 4).rank_f2(), 0);
        assert_eq!(BitMatrix::from_strs(&["110", "011", "101"]).rank_f2(), 2);
        let mut wide = BitMatrix::zeros(2, 130);
        wide.flip(0, 0);
        wide.flip(0, 129);
        wide.flip(1, 129);
        assert_eq!(wide.rank_f2(), 2);
        assert_eq!(wide.transpose().rank_f2(), 2);
    }

    #[test]
    fn kron_and_block_diag() {
        let b = BitMatrix::from_strs(&["101", "011"]);
        assert_eq!(BitMatrix::identity(2).kron(&b), BitMatrix::block_diag(&[b.clone(), b.clone()]));
        let a = BitMatrix::zeros(2, 3);
        let c = BitMatrix::zeros(4, 5);
        let k = a.kron(&c);
        assert_eq!((k.n_rows(), k.n_cols()), (8, 15));
    }

    #[test]
    fn permutation_orthogonality() {
        let p = BitMatrix::from_strs(&["010", "001", "100"]);
        assert!(p.is_permutation());
        assert_eq!(p.gf2_mul(&p.transpose()).unwrap(), BitMatrix::identity(3));
        assert!(p.gf2_mul(&BitMatrix::zeros(2, 2)).is_err());
    }

    #[test]
    fn weights() {
        let phi = BitMatrix::from_strs(&["101", "011"]);
        assert_eq!(phi.weight(WeightMode::NonzeroColumns), 3);
        assert_eq!(BitMatrix::zeros(3, 3).weight(WeightMode::NonzeroColumns), 0);
        let v = BitMatrix::from_strs(&["1011"]);
        assert_eq!(v.weight(WeightMode::NonzeroEntries), 3);
    }

    #[test]
    fn precedes_examples() {
        let b = BitMatrix::from_strs(&["101", "011"]);
        assert!(b.precedes(&b, false).unwrap());
        assert!(!b.precedes(&b, true).unwrap());
        let zeroed = BitMatrix::from_strs(&["001", "001"]);
        assert!(zeroed.precedes(&b, true).unwrap());
        let altered = BitMatrix::from_strs(&["100", "011"]);
        assert!(!altered.precedes(&b, false).unwrap());
        assert!(b.precedes(&BitMatrix::zeros(3, 3), false).is_err());
    }

    #[test]
    fn mother_extraction() {
        let singular = BitMatrix::from_strs(&["11", "11"]);
        let m = BitMatrix::block_diag(&[singular, BitMatrix::identity(2)]);
        let (mother, ok) = m.extract_mother(2).unwrap();
        assert!(!ok);
        assert_eq!(mother, BitMatrix::identity(2));
        assert!(matches!(m.extract_mother(3), Err(Error::NotDivisible { .. })));
    }

    #[test]
    fn gallager_length_12_is_strictly_3_reducible() {
        let h = crate::fixtures::gallager12_aligned();
        let (mother, ok) = h.extract_mother(3).unwrap();
        assert!(ok);
        assert_eq!((mother.n_rows(), mother.n_cols()), (3, 4));
        assert!(h.is_strictly_reducible(3).unwrap());
    }

    proptest! {
        #[test]
        fn precedes_is_a_partial_order(a in arb_matrix(4, 6), seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let t = a.transpose();
            let mut zero_cols = |m: &BitMatrix| {
                let mut rows: Vec<Vec<u32>> = m.transpose().into_rows();
                for col in rows.iter_mut() {
                    if rng.random_bool(0.3) { col.clear(); }
                }
                BitMatrix::from_sorted_rows(m.n_rows(), rows).transpose()
            };
            let b = zero_cols(&a);
            let c = zero_cols(&b);
            prop_assert!(a.precedes(&a, false).unwrap());
            prop_assert!(b.precedes(&a, false).unwrap());
            prop_assert!(c.precedes(&b, false).unwrap());
            prop_assert!(c.precedes(&a, false).unwrap());
            if a.precedes(&b, false).unwrap() {
                prop_assert_eq!(&a, &b);
            }
            prop_assert_eq!(t.n_cols(), a.n_rows());
        }

        #[test]
        fn rank_of_kron_is_product(a in arb_matrix(4, 4), b in arb_matrix(3, 5)) {
            prop_assert_eq!(a.kron(&b).rank_f2(), a.rank_f2() * b.rank_f2());
        }

        #[test]
        fn rank_bounded_and_transpose_invariant(a in arb_matrix(8, 70)) {
            let r = a.rank_f2();
            prop_assert!(r <= a.n_rows().min(a.n_cols()));
            prop_assert_eq!(r, a.transpose().rank_f2());
        }

        #[test]
        fn mother_round_trip(a in arb_matrix(3, 3).prop_map(|m| m.kron(&BitMatrix::from_strs(&["11", "01"])))) {
            let blocks = a.blocks(2).unwrap();
            let back = BitMatrix::from_blocks(a.n_rows() / 2, a.n_cols() / 2, 2, &blocks);
            prop_assert_eq!(back, a);
        }
    }
}
