//! Binary image, the matrix map `f_omega`, the extended matrix Omega, the
//! selector-driven extended matrix, extended codewords and symbol resolution.
//!
//! Index conventions: symbol `j` owns base bits `j*p .. j*p+p` and extended
//! bits `j*(q-1) .. j*(q-1)+q-1`. Extended position `c` (1-based, `1..q`)
//! stores `<c, xbar_j>`, i.e. column `c` of the extender basis applied to the
//! symbol's bits.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bitmatrix::{BitMatrix, BlockStructure};
use crate::error::{Error, Result};
use crate::gf::{rank_of_masks, FieldContext, MatrixLabel};

/// Sparse matrix over GF(2^p). Row entries are `(column, value)` with nonzero values.
#[derive(Debug, Clone, PartialEq)]
pub struct NonBinaryMatrix {
    ctx: Arc<FieldContext>,
    m: usize,
    n: usize,
    rows: Vec<Vec<(u32, u32)>>,
}

impl NonBinaryMatrix {
    pub fn new(ctx: Arc<FieldContext>, n: usize, rows: Vec<Vec<(u32, u32)>>) -> Result<Self> {
        if rows.is_empty() || n == 0 {
            return Err(Error::InvalidArgument("matrix dimensions must be positive".into()));
        }
        let mut clean = Vec::with_capacity(rows.len());
        for (i, mut row) in rows.into_iter().enumerate() {
            row.retain(|&(_, v)| v != 0);
            row.sort_unstable();
            for w in row.windows(2) {
                if w[0].0 == w[1].0 {
                    return Err(Error::InvalidArgument(format!(
                        "row {i} repeats column {}",
                        w[0].0
                    )));
                }
            }
            for &(c, v) in &row {
                if c as usize >= n {
                    return Err(Error::IndexOutOfRange(format!("row {i}: column {c} >= {n}")));
                }
                if v >= ctx.q() {
                    return Err(Error::ElementOutOfRange { value: v, q: ctx.q() });
                }
            }
            clean.push(row);
        }
        Ok(NonBinaryMatrix {
            ctx,
            m: clean.len(),
            n,
            rows: clean,
        })
    }

    pub fn from_dense(ctx: Arc<FieldContext>, dense: &[Vec<u32>]) -> Result<Self> {
        let n = dense.first().map_or(0, Vec::len);
        if dense.iter().any(|r| r.len() != n) {
            return Err(Error::DimensionMismatch("ragged dense matrix".into()));
        }
        let rows = dense
            .iter()
            .map(|r| {
                r.iter()
                    .enumerate()
                    .filter(|(_, &v)| v != 0)
                    .map(|(c, &v)| (c as u32, v))
                    .collect()
            })
            .collect();
        Self::new(ctx, n, rows)
    }

    pub fn ctx(&self) -> &Arc<FieldContext> {
        &self.ctx
    }

    pub fn p(&self) -> usize {
        self.ctx.p() as usize
    }

    pub fn q(&self) -> usize {
        self.ctx.q() as usize
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[(u32, u32)] {
        &self.rows[i]
    }

    pub fn rows(&self) -> &[Vec<(u32, u32)>] {
        &self.rows
    }

    pub fn get(&self, i: usize, j: usize) -> u32 {
        self.rows[i]
            .binary_search_by_key(&(j as u32), |&(c, _)| c)
            .map_or(0, |k| self.rows[i][k].1)
    }

    /// Occupancy pattern of the nonzero entries.
    pub fn mother(&self) -> BitMatrix {
        BitMatrix::from_sorted_rows(
            self.n,
            self.rows
                .iter()
                .map(|r| r.iter().map(|&(c, _)| c).collect())
                .collect(),
        )
    }

    pub fn syndrome(&self, x: &[u32]) -> Result<Vec<u32>> {
        if x.len() != self.n {
            return Err(Error::DimensionMismatch(format!(
                "word of length {} for {} columns",
                x.len(),
                self.n
            )));
        }
        Ok(self
            .rows
            .iter()
            .map(|row| {
                row.iter()
                    .fold(0, |s, &(c, v)| s ^ self.ctx.mul(v, x[c as usize]))
            })
            .collect())
    }

    pub fn is_codeword(&self, x: &[u32]) -> bool {
        self.syndrome(x).is_ok_and(|s| s.iter().all(|&v| v == 0))
    }

    /// Rank over GF(q) by dense elimination.
    pub fn rank_fq(&self) -> usize {
        let mut dense: Vec<Vec<u32>> = self
            .rows
            .iter()
            .map(|row| {
                let mut d = vec![0u32; self.n];
                for &(c, v) in row {
                    d[c as usize] = v;
                }
                d
            })
            .collect();
        fq_row_reduce(&self.ctx, &mut dense).len()
    }
}

/// Reduced row echelon form in place; returns the pivot columns in row order.
pub(crate) fn fq_row_reduce(ctx: &FieldContext, a: &mut [Vec<u32>]) -> Vec<usize> {
    let rows = a.len();
    let cols = a.first().map_or(0, Vec::len);
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..cols {
        if r == rows {
            break;
        }
        let Some(piv) = (r..rows).find(|&k| a[k][c] != 0) else {
            continue;
        };
        a.swap(r, piv);
        let inv = ctx.inv(a[r][c]).expect("nonzero pivot");
        for v in a[r].iter_mut() {
            *v = ctx.mul(*v, inv);
        }
        let pivot_row = a[r].clone();
        for (k, row) in a.iter_mut().enumerate() {
            if k != r && row[c] != 0 {
                let f = row[c];
                for (x, &y) in row.iter_mut().zip(&pivot_row) {
                    *x ^= ctx.mul(f, y);
                }
            }
        }
        pivots.push(c);
        r += 1;
    }
    pivots
}

/// Expands symbols into base bits, LSB first.
pub fn symbols_to_bits(x: &[u32], p: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(x.len() * p);
    for &s in x {
        out.extend((0..p).map(|k| ((s >> k) & 1) as u8));
    }
    out
}

pub fn bits_to_symbols(bits: &[u8], p: usize) -> Vec<u32> {
    bits.chunks(p).map(crate::gf::from_bits).collect()
}

/// The binary parity-check matrix obtained by replacing every entry with a
/// `p x p` full-rank label.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryImage {
    matrix: BitMatrix,
    blocks: BlockStructure,
    labels: Vec<Vec<(u32, MatrixLabel)>>,
    p: usize,
}

impl BinaryImage {
    /// Builds from arbitrary labels; every label must have full rank.
    pub fn from_labels(p: usize, n: usize, labels: Vec<Vec<(u32, MatrixLabel)>>) -> Result<Self> {
        let m = labels.len();
        let mut rows = vec![Vec::new(); m * p];
        let mut sorted_labels = Vec::with_capacity(m);
        for (i, mut row) in labels.into_iter().enumerate() {
            row.sort_by_key(|(c, _)| *c);
            for (j, lab) in &row {
                if *j as usize >= n {
                    return Err(Error::IndexOutOfRange(format!("label column {j} >= {n}")));
                }
                if lab.p() != p || !lab.is_full_rank() {
                    return Err(Error::DegenerateLabels(format!(
                        "label at ({i},{j}) is not a full-rank {p}x{p} matrix"
                    )));
                }
                for (r, &mask) in lab.rows().iter().enumerate() {
                    for k in 0..p {
                        if (mask >> k) & 1 == 1 {
                            rows[i * p + r].push((*j as usize * p + k) as u32);
                        }
                    }
                }
            }
            sorted_labels.push(row);
        }
        rows.iter_mut().for_each(|r| r.sort_unstable());
        Ok(BinaryImage {
            matrix: BitMatrix::from_sorted_rows(n * p, rows),
            blocks: BlockStructure {
                block_rows: m,
                block_cols: n,
                row_size: p,
                col_size: p,
            },
            labels: sorted_labels,
            p,
        })
    }

    pub fn matrix(&self) -> &BitMatrix {
        &self.matrix
    }

    pub fn blocks(&self) -> BlockStructure {
        self.blocks
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn m(&self) -> usize {
        self.blocks.block_rows
    }

    pub fn n(&self) -> usize {
        self.blocks.block_cols
    }

    /// Labels of block row `i` as `(column, label)` pairs.
    pub fn row_labels(&self, i: usize) -> &[(u32, MatrixLabel)] {
        &self.labels[i]
    }

    pub fn label(&self, i: usize, j: usize) -> Option<&MatrixLabel> {
        self.labels[i]
            .binary_search_by_key(&(j as u32), |(c, _)| *c)
            .ok()
            .map(|k| &self.labels[i][k].1)
    }

    pub fn mother(&self) -> BitMatrix {
        BitMatrix::from_sorted_rows(
            self.n(),
            self.labels
                .iter()
                .map(|r| r.iter().map(|(c, _)| *c).collect())
                .collect(),
        )
    }
}

/// Replaces each field entry by its companion label.
pub fn binary_image(h: &NonBinaryMatrix) -> BinaryImage {
    let ctx = h.ctx();
    let labels = h
        .rows()
        .iter()
        .map(|row| {
            row.iter()
                .map(|&(c, v)| (c, ctx.companion_label(v)))
                .collect()
        })
        .collect();
    BinaryImage::from_labels(h.p(), h.n(), labels).expect("companion labels have full rank")
}

/// The column each row of `f_omega(Phi, label)` maps to, 0-based:
/// row `i'` goes to column `label^T i'`.
pub fn omega_permutation(label: &MatrixLabel) -> Vec<u32> {
    let q = 1u32 << label.p();
    (1..q).map(|i| label.apply_transpose(i) - 1).collect()
}

fn check_below_extender(sel: &BitMatrix, p: usize) -> Result<Vec<bool>> {
    let q1 = (1usize << p) - 1;
    if sel.n_rows() != p || sel.n_cols() != q1 {
        return Err(Error::DimensionMismatch(format!(
            "basis selection must be {p}x{q1}, got {}x{}",
            sel.n_rows(),
            sel.n_cols()
        )));
    }
    let mut cols = vec![0u32; q1];
    for (r, row) in sel.rows().iter().enumerate() {
        for &c in row {
            cols[c as usize] |= 1 << r;
        }
    }
    let mut active = vec![false; q1];
    for (c, &v) in cols.iter().enumerate() {
        if v != 0 {
            if v as usize != c + 1 {
                return Err(Error::NotBelowExtender);
            }
            active[c] = true;
        }
    }
    Ok(active)
}

/// The matrix map: entry `(i', j')` is set when column `j'` of the selection
/// is nonzero and equals `label^T * Phi(i')`.
pub fn f_omega(basis_sel: &BitMatrix, label: &MatrixLabel) -> Result<BitMatrix> {
    let p = label.p();
    let active = check_below_extender(basis_sel, p)?;
    let q1 = active.len();
    if label.is_zero() {
        return Ok(BitMatrix::zeros(q1, q1));
    }
    if !label.is_full_rank() {
        return Err(Error::DegenerateLabels(
            "label must be zero or full rank".into(),
        ));
    }
    let rows = omega_permutation(label)
        .into_iter()
        .map(|c| if active[c as usize] { vec![c] } else { Vec::new() })
        .collect();
    Ok(BitMatrix::from_sorted_rows(q1, rows))
}

/// A basis selection keeping only the given 1-based columns of Phi.
pub fn basis_selection(p: usize, keep: impl IntoIterator<Item = u32>) -> BitMatrix {
    let q1 = (1usize << p) - 1;
    let mut rows = vec![Vec::new(); p];
    let mut cols: Vec<u32> = keep.into_iter().collect();
    cols.sort_unstable();
    cols.dedup();
    for c in cols {
        for (r, row) in rows.iter_mut().enumerate() {
            if (c >> r) & 1 == 1 {
                row.push(c - 1);
            }
        }
    }
    BitMatrix::from_sorted_rows(q1, rows)
}

/// The extended matrix: each label replaced by its `(q-1) x (q-1)` permutation.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedMatrix {
    matrix: BitMatrix,
    blocks: BlockStructure,
    p: usize,
}

impl ExtendedMatrix {
    pub fn matrix(&self) -> &BitMatrix {
        &self.matrix
    }

    pub fn blocks(&self) -> BlockStructure {
        self.blocks
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// Block `(i, j)` cut out of the matrix.
    pub fn block(&self, i: usize, j: usize) -> BitMatrix {
        let q1 = self.blocks.col_size;
        let lo = (j * q1) as u32;
        let hi = lo + q1 as u32;
        let rows = (0..q1)
            .map(|r| {
                self.matrix
                    .row(i * q1 + r)
                    .iter()
                    .filter(|&&c| c >= lo && c < hi)
                    .map(|&c| c - lo)
                    .collect()
            })
            .collect();
        BitMatrix::from_sorted_rows(q1, rows)
    }
}

pub fn build_omega(img: &BinaryImage) -> ExtendedMatrix {
    let p = img.p();
    let q1 = (1usize << p) - 1;
    let mut rows = vec![Vec::new(); img.m() * q1];
    for i in 0..img.m() {
        for (j, lab) in img.row_labels(i) {
            let base = *j as usize * q1;
            for (r, c) in omega_permutation(lab).into_iter().enumerate() {
                rows[i * q1 + r].push((base + c as usize) as u32);
            }
        }
    }
    ExtendedMatrix {
        matrix: BitMatrix::from_sorted_rows(img.n() * q1, rows),
        blocks: BlockStructure {
            block_rows: img.m(),
            block_cols: img.n(),
            row_size: q1,
            col_size: q1,
        },
        p,
    }
}

/// Per-symbol extended generator: which of the `q-1` extender columns are kept.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneratorMatrix {
    symbol: usize,
    p: usize,
    active: Vec<bool>,
}

impl GeneratorMatrix {
    pub fn full(symbol: usize, p: usize) -> Self {
        GeneratorMatrix {
            symbol,
            p,
            active: vec![true; (1 << p) - 1],
        }
    }

    /// Keeps the given 1-based extender columns.
    pub fn from_columns(symbol: usize, p: usize, cols: &[u32]) -> Result<Self> {
        let q1 = (1usize << p) - 1;
        let mut active = vec![false; q1];
        for &c in cols {
            if c == 0 || c as usize > q1 {
                return Err(Error::IndexOutOfRange(format!("extender column {c}")));
            }
            active[c as usize - 1] = true;
        }
        Ok(GeneratorMatrix { symbol, p, active })
    }

    pub fn from_mask(symbol: usize, p: usize, active: Vec<bool>) -> Result<Self> {
        if active.len() != (1 << p) - 1 {
            return Err(Error::DimensionMismatch("generator mask length".into()));
        }
        Ok(GeneratorMatrix { symbol, p, active })
    }

    pub fn symbol(&self) -> usize {
        self.symbol
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn mask(&self) -> &[bool] {
        &self.active
    }

    /// Whether 1-based column `c` is kept.
    pub fn is_active(&self, c: u32) -> bool {
        c >= 1 && self.active.get(c as usize - 1).copied().unwrap_or(false)
    }

    /// Kept 1-based column indices in increasing order.
    pub fn active_columns(&self) -> Vec<u32> {
        self.active
            .iter()
            .enumerate()
            .filter(|(_, &a)| a)
            .map(|(c, _)| c as u32 + 1)
            .collect()
    }

    pub fn weight(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }

    pub fn rank(&self) -> usize {
        rank_of_masks(&self.active_columns())
    }

    /// As a `p x (q-1)` binary matrix.
    pub fn to_bitmatrix(&self) -> BitMatrix {
        basis_selection(self.p, self.active_columns())
    }
}

/// Generators for every symbol plus, per nonzero block `(i, j)`, the kept
/// 1-based row indices of `f_omega(Phi, A_ij)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneratorSet {
    p: usize,
    gens: Vec<GeneratorMatrix>,
    selectors: BTreeMap<(usize, usize), Vec<u32>>,
}

impl GeneratorSet {
    pub fn new(
        p: usize,
        gens: Vec<GeneratorMatrix>,
        selectors: BTreeMap<(usize, usize), Vec<u32>>,
    ) -> Result<Self> {
        let q1 = (1u32 << p) - 1;
        for (j, g) in gens.iter().enumerate() {
            if g.p != p || g.symbol != j {
                return Err(Error::InvalidArgument(format!(
                    "generator {j} has wrong degree or owner"
                )));
            }
        }
        for (&(i, j), rows) in &selectors {
            if j >= gens.len() {
                return Err(Error::IndexOutOfRange(format!("selector ({i},{j})")));
            }
            if rows.iter().any(|&r| r == 0 || r > q1) {
                return Err(Error::IndexOutOfRange(format!(
                    "selector ({i},{j}) row outside 1..={q1}"
                )));
            }
        }
        let selectors = selectors
            .into_iter()
            .map(|(k, mut v)| {
                v.sort_unstable();
                v.dedup();
                (k, v)
            })
            .collect();
        Ok(GeneratorSet {
            p,
            gens,
            selectors,
        })
    }

    /// Full extender basis for every symbol and all rows selected.
    pub fn full(img: &BinaryImage) -> Self {
        let p = img.p();
        let q1 = (1u32 << p) - 1;
        let gens = (0..img.n()).map(|j| GeneratorMatrix::full(j, p)).collect();
        let mut selectors = BTreeMap::new();
        for i in 0..img.m() {
            for (j, _) in img.row_labels(i) {
                selectors.insert((i, *j as usize), (1..=q1).collect());
            }
        }
        GeneratorSet {
            p,
            gens,
            selectors,
        }
    }

    /// Generators only, every column active, no selectors.
    pub fn full_generators(p: usize, n: usize) -> Self {
        GeneratorSet {
            p,
            gens: (0..n).map(|j| GeneratorMatrix::full(j, p)).collect(),
            selectors: BTreeMap::new(),
        }
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn n(&self) -> usize {
        self.gens.len()
    }

    pub fn generator(&self, j: usize) -> &GeneratorMatrix {
        &self.gens[j]
    }

    pub fn generators(&self) -> &[GeneratorMatrix] {
        &self.gens
    }

    pub fn selectors(&self) -> &BTreeMap<(usize, usize), Vec<u32>> {
        &self.selectors
    }

    pub fn selector(&self, i: usize, j: usize) -> &[u32] {
        self.selectors.get(&(i, j)).map_or(&[], Vec::as_slice)
    }

    /// Active flags over all `N(q-1)` extended positions.
    pub fn column_mask(&self) -> Vec<bool> {
        self.gens.iter().flat_map(|g| g.active.iter().copied()).collect()
    }

    /// Number of active extended bits.
    pub fn active_len(&self) -> usize {
        self.gens.iter().map(GeneratorMatrix::weight).sum()
    }

    pub fn min_weight(&self) -> usize {
        self.gens.iter().map(GeneratorMatrix::weight).min().unwrap_or(0)
    }

    pub fn max_weight(&self) -> usize {
        self.gens.iter().map(GeneratorMatrix::weight).max().unwrap_or(0)
    }
}

/// Where a row of an extended parity matrix came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowTag {
    /// Row `index` (1-based) of block row `check` of Omega.
    OmegaRow { check: usize, index: u32 },
    /// The sum of two Omega rows; the target row was replaced by it.
    RowAddition {
        check: usize,
        index: u32,
        source_check: usize,
        source_index: u32,
    },
    /// A simplex parity on one symbol, or on two symbols for wide blocks.
    ReplacementBlock { symbol: usize, partner: Option<usize> },
}

/// Extended parity-check matrix together with its active-column mask.
#[derive(Debug, Clone, PartialEq)]
pub struct EPRMatrix {
    matrix: BitMatrix,
    blocks: BlockStructure,
    column_mask: Vec<bool>,
    provenance: Vec<RowTag>,
    p: usize,
}

impl EPRMatrix {
    pub fn new(
        p: usize,
        n_symbols: usize,
        matrix: BitMatrix,
        column_mask: Vec<bool>,
        provenance: Vec<RowTag>,
    ) -> Result<Self> {
        let q1 = (1usize << p) - 1;
        if matrix.n_cols() != n_symbols * q1 || column_mask.len() != matrix.n_cols() {
            return Err(Error::DimensionMismatch("extended matrix width".into()));
        }
        if provenance.len() != matrix.n_rows() {
            return Err(Error::DimensionMismatch("one provenance tag per row".into()));
        }
        for (r, row) in matrix.rows().iter().enumerate() {
            if let Some(&c) = row.iter().find(|&&c| !column_mask[c as usize]) {
                return Err(Error::SelectorMismatch(format!(
                    "row {r} touches inactive column {c}"
                )));
            }
        }
        Ok(EPRMatrix {
            blocks: BlockStructure {
                block_rows: matrix.n_rows(),
                block_cols: n_symbols,
                row_size: 1,
                col_size: q1,
            },
            matrix,
            column_mask,
            provenance,
            p,
        })
    }

    pub fn matrix(&self) -> &BitMatrix {
        &self.matrix
    }

    pub fn blocks(&self) -> BlockStructure {
        self.blocks
    }

    pub fn column_mask(&self) -> &[bool] {
        &self.column_mask
    }

    pub fn provenance(&self) -> &[RowTag] {
        &self.provenance
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn n_symbols(&self) -> usize {
        self.blocks.block_cols
    }

    pub fn active_len(&self) -> usize {
        self.column_mask.iter().filter(|&&a| a).count()
    }

    /// Generators implied by the column mask.
    pub fn generators(&self) -> GeneratorSet {
        let q1 = (1usize << self.p) - 1;
        let gens = self
            .column_mask
            .chunks(q1)
            .enumerate()
            .map(|(j, m)| GeneratorMatrix {
                symbol: j,
                p: self.p,
                active: m.to_vec(),
            })
            .collect();
        GeneratorSet {
            p: self.p,
            gens,
            selectors: BTreeMap::new(),
        }
    }

    /// Copy without all-zero rows.
    pub fn compacted(&self) -> EPRMatrix {
        let keep: Vec<usize> = (0..self.matrix.n_rows())
            .filter(|&r| !self.matrix.row(r).is_empty())
            .collect();
        let rows = keep.iter().map(|&r| self.matrix.row(r).to_vec()).collect();
        let tags = keep.iter().map(|&r| self.provenance[r]).collect();
        EPRMatrix::new(
            self.p,
            self.n_symbols(),
            BitMatrix::from_sorted_rows(self.matrix.n_cols(), rows),
            self.column_mask.clone(),
            tags,
        )
        .expect("subset of a valid matrix")
    }
}

/// Keeps the selected rows of every block and masks inactive columns.
///
/// Every block row must be kept or dropped consistently across the symbols
/// of its check, since a partial row is not a parity constraint.
pub fn apply_f_e(img: &BinaryImage, gens: &GeneratorSet) -> Result<EPRMatrix> {
    let p = img.p();
    let q1 = (1usize << p) - 1;
    if gens.p() != p || gens.n() != img.n() {
        return Err(Error::DimensionMismatch("generator set does not match image".into()));
    }
    for &(i, j) in gens.selectors().keys() {
        if i >= img.m() || img.label(i, j).is_none() {
            return Err(Error::SelectorMismatch(format!(
                "selector ({i},{j}) refers to a zero block"
            )));
        }
    }
    let mut rows = vec![Vec::new(); img.m() * q1];
    let mut tags = Vec::with_capacity(img.m() * q1);
    for i in 0..img.m() {
        let entries = img.row_labels(i);
        let perms: Vec<Vec<u32>> = entries.iter().map(|(_, l)| omega_permutation(l)).collect();
        for r in 1..=q1 as u32 {
            tags.push(RowTag::OmegaRow { check: i, index: r });
            let kept: Vec<bool> = entries
                .iter()
                .map(|(j, _)| gens.selector(i, *j as usize).binary_search(&r).is_ok())
                .collect();
            let n_kept = kept.iter().filter(|&&k| k).count();
            if n_kept == 0 {
                continue;
            }
            if n_kept != kept.len() {
                return Err(Error::SelectorMismatch(format!(
                    "row {r} of check {i} is kept for some symbols but not all"
                )));
            }
            let row = &mut rows[i * q1 + r as usize - 1];
            for ((j, _), perm) in entries.iter().zip(&perms) {
                let c = perm[r as usize - 1];
                let g = gens.generator(*j as usize);
                if !g.is_active(c + 1) {
                    return Err(Error::SelectorMismatch(format!(
                        "row {r} of check {i} needs inactive column {} of symbol {j}",
                        c + 1
                    )));
                }
                row.push((*j as usize * q1) as u32 + c);
            }
        }
    }
    EPRMatrix::new(
        p,
        img.n(),
        BitMatrix::from_sorted_rows(img.n() * q1, rows),
        gens.column_mask(),
        tags,
    )
    .map(|mut e| {
        e.blocks = BlockStructure {
            block_rows: img.m(),
            block_cols: img.n(),
            row_size: q1,
            col_size: q1,
        };
        e
    })
}

/// Extended bits of a codeword: `bits[j*(q-1) + c-1] = <c, xbar_j>` on active positions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtendedCodeword {
    pub bits: Vec<u8>,
    pub p: usize,
    pub mask: Vec<bool>,
}

impl ExtendedCodeword {
    pub fn symbol(&self, j: usize) -> &[u8] {
        let q1 = (1usize << self.p) - 1;
        &self.bits[j * q1..(j + 1) * q1]
    }

    pub fn active_len(&self) -> usize {
        self.mask.iter().filter(|&&a| a).count()
    }
}

/// Extends base bits; `gens = None` uses the full extender basis.
pub fn extend_codeword(xbar: &[u8], p: usize, gens: Option<&GeneratorSet>) -> Result<ExtendedCodeword> {
    if !xbar.len().is_multiple_of(p) {
        return Err(Error::DimensionMismatch(format!(
            "base word length {} is not a multiple of {p}",
            xbar.len()
        )));
    }
    let n = xbar.len() / p;
    let q1 = (1usize << p) - 1;
    let mask = match gens {
        Some(g) => {
            if g.n() != n || g.p() != p {
                return Err(Error::DimensionMismatch(format!(
                    "generator set for {} symbols, word has {n}",
                    g.n()
                )));
            }
            g.column_mask()
        }
        None => vec![true; n * q1],
    };
    let mut bits = vec![0u8; n * q1];
    for j in 0..n {
        let x = crate::gf::from_bits(&xbar[j * p..(j + 1) * p]);
        for c in 1..=q1 {
            let pos = j * q1 + c - 1;
            if mask[pos] {
                bits[pos] = ((c as u32 & x).count_ones() & 1) as u8;
            }
        }
    }
    Ok(ExtendedCodeword { bits, p, mask })
}

/// Solves `gen^T x = vj` for the `p` base bits of one symbol.
///
/// `vj` has length `q-1`; only active positions are read.
pub fn resolve_symbol(vj: &[u8], gen: &GeneratorMatrix) -> Result<u32> {
    let p = gen.p;
    if vj.len() != gen.active.len() {
        return Err(Error::DimensionMismatch("extended symbol length".into()));
    }
    // echelon basis keyed by leading bit, each entry (mask, value)
    let mut basis: Vec<Option<(u32, u8)>> = vec![None; p];
    let mut inconsistent = false;
    for c in gen.active_columns() {
        let mut m = c;
        let mut v = vj[c as usize - 1] & 1;
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
        if m == 0 && v == 1 {
            inconsistent = true;
        }
    }
    let rank = basis.iter().filter(|b| b.is_some()).count();
    if rank < p {
        return Err(Error::Unresolvable {
            symbol: gen.symbol,
            rank,
            p,
        });
    }
    if inconsistent {
        return Err(Error::Inconsistent { symbol: gen.symbol });
    }
    let mut x = 0u32;
    for (lead, b) in basis.iter().enumerate() {
        let (m, v) = b.expect("full rank");
        let rest = m & !(1 << lead);
        let bit = v ^ ((rest & x).count_ones() & 1) as u8;
        x |= (bit as u32) << lead;
    }
    Ok(x)
}

/// How a resolvability probability was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProbabilityMethod {
    ClosedForm,
    Exhaustive,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Resolvability {
    pub value: f64,
    /// `(favourable, total)` when the value is exact.
    pub exact: Option<(u128, u128)>,
    pub method: ProbabilityMethod,
}

fn binomial(n: u64, k: u64) -> u128 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul((n - i) as u128) / (i + 1) as u128;
    }
    acc
}

/// Counts `w`-subsets of the nonzero `p`-bit vectors that span GF(2)^p.
pub fn count_spanning_subsets(p: usize, w: usize) -> (u128, u128) {
    let q1 = (1u32 << p) - 1;
    fn rec(start: u32, q1: u32, left: usize, basis: &mut Vec<u32>, p: usize, hits: &mut u128) {
        if left == 0 {
            if basis.len() == p {
                *hits += 1;
            }
            return;
        }
        // not enough room left to reach rank p
        if basis.len() + left < p {
            return;
        }
        for c in start..=q1 {
            if q1 - c + 1 < left as u32 {
                break;
            }
            let mut x = c;
            for &b in basis.iter() {
                x = x.min(x ^ b);
            }
            let grew = x != 0;
            if grew {
                basis.push(x);
                basis.sort_unstable_by(|a, b| b.cmp(a));
            }
            rec(c + 1, q1, left - 1, basis, p, hits);
            if grew {
                let pos = basis.iter().position(|&b| b == x).expect("present");
                basis.remove(pos);
            }
        }
    }
    let mut hits = 0;
    rec(1, q1, w, &mut Vec::new(), p, &mut hits);
    (hits, binomial(q1 as u64, w as u64))
}

/// Probability that a uniformly random `w`-subset of the extender columns has rank `p`.
pub fn resolvability_probability(ctx: &FieldContext, w: usize, seed: u64) -> Result<Resolvability> {
    let p = ctx.p() as usize;
    let q1 = ctx.order();
    if w == 0 || w > q1 {
        return Err(Error::WeightOutOfRange { w, max: q1 });
    }
    let total = binomial(q1 as u64, w as u64);
    let half = q1.div_ceil(2) - 1;
    if w < p {
        return Ok(Resolvability {
            value: 0.0,
            exact: Some((0, total)),
            method: ProbabilityMethod::ClosedForm,
        });
    }
    if w > half {
        return Ok(Resolvability {
            value: 1.0,
            exact: Some((total, total)),
            method: ProbabilityMethod::ClosedForm,
        });
    }
    if w == half {
        // only the nonzero points of a hyperplane fail, and there are q-1 hyperplanes
        let good = total - q1 as u128;
        return Ok(Resolvability {
            value: good as f64 / total as f64,
            exact: Some((good, total)),
            method: ProbabilityMethod::ClosedForm,
        });
    }
    if total <= 1_000_000 {
        let (good, total) = count_spanning_subsets(p, w);
        return Ok(Resolvability {
            value: good as f64 / total as f64,
            exact: Some((good, total)),
            method: ProbabilityMethod::Exhaustive,
        });
    }
    let trials = 200_000u64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = 0u64;
    for _ in 0..trials {
        let cols: Vec<u32> = sample(&mut rng, q1, w).into_iter().map(|c| c as u32 + 1).collect();
        if rank_of_masks(&cols) == p {
            hits += 1;
        }
    }
    Ok(Resolvability {
        value: hits as f64 / trials as f64,
        exact: None,
        method: ProbabilityMethod::MonteCarlo,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn gf(p: u32) -> Arc<FieldContext> {
        Arc::new(FieldContext::new(p).unwrap())
    }

    #[test]
    fn image_examples() {
        let ctx = gf(2);
        let one = NonBinaryMatrix::from_dense(ctx.clone(), &[vec![1]]).unwrap();
        assert_eq!(binary_image(&one).matrix(), &BitMatrix::identity(2));
        let h = NonBinaryMatrix::from_dense(ctx, &[vec![2, 1]]).unwrap();
        assert_eq!(
            binary_image(&h).matrix(),
            &BitMatrix::from_strs(&["0110", "1101"])
        );
    }

    #[test]
    fn f_omega_examples() {
        let phi2 = basis_selection(2, 1..=3);
        assert_eq!(
            f_omega(&phi2, &MatrixLabel::identity(2)).unwrap(),
            BitMatrix::identity(3)
        );
        let alpha = gf(2).companion_label(2);
        // rows 1,2,3 go to columns 2,3,1
        assert_eq!(
            f_omega(&phi2, &alpha).unwrap(),
            BitMatrix::from_strs(&["010", "001", "100"])
        );
        assert!(matches!(
            f_omega(&BitMatrix::from_strs(&["110", "011"]), &alpha),
            Err(Error::NotBelowExtender)
        ));
    }

    #[test]
    fn zeroing_rows_matches_zeroing_columns() {
        let label = MatrixLabel::from_columns(3, &[3, 6, 7]).unwrap();
        let phi = basis_selection(3, 1..=7);
        let omega = f_omega(&phi, &label).unwrap();
        assert!(omega.is_permutation());
        // rows 1 and 3 land on columns 5 and 2
        assert_eq!(omega.row(0), &[4]);
        assert_eq!(omega.row(2), &[1]);
        let sel = basis_selection(3, [1, 3, 4, 6, 7]);
        assert!(sel.precedes(&phi, true).unwrap());
        let reduced = f_omega(&sel, &label).unwrap();
        for r in 0..7 {
            let expect: &[u32] = if r == 0 || r == 2 { &[] } else { omega.row(r) };
            assert_eq!(reduced.row(r), expect);
        }
    }

    #[test]
    fn omega_single_entry() {
        let ctx = gf(2);
        let h = NonBinaryMatrix::from_dense(ctx, &[vec![2]]).unwrap();
        let om = build_omega(&binary_image(&h));
        assert_eq!(om.matrix(), &BitMatrix::from_strs(&["010", "001", "100"]));
    }

    #[test]
    fn extend_and_resolve_examples() {
        let v = extend_codeword(&[1, 0], 2, None).unwrap();
        assert_eq!(v.bits, vec![1, 0, 1]);
        assert_eq!(extend_codeword(&[0, 0, 0], 3, None).unwrap().bits, vec![0; 7]);
        let full = GeneratorMatrix::full(0, 2);
        assert_eq!(resolve_symbol(&v.bits, &full).unwrap(), 1);
        let partial = GeneratorMatrix::from_columns(0, 3, &[1, 2]).unwrap();
        assert!(matches!(
            resolve_symbol(&[0; 7], &partial),
            Err(Error::Unresolvable { rank: 2, .. })
        ));
        let g13 = GeneratorMatrix::from_columns(0, 2, &[1, 3]).unwrap();
        assert_eq!(resolve_symbol(&[1, 0, 1], &g13).unwrap(), 0b01);
        assert!(matches!(
            resolve_symbol(&[1, 1, 1], &full),
            Err(Error::Inconsistent { .. })
        ));
    }

    #[test]
    fn resolvability_examples() {
        let gf8 = FieldContext::new(3).unwrap();
        let r4 = resolvability_probability(&gf8, 4, 0).unwrap();
        assert_eq!(r4.value, 1.0);
        let r3 = resolvability_probability(&gf8, 3, 0).unwrap();
        assert_eq!(r3.exact, Some((28, 35)));
        assert_eq!(count_spanning_subsets(3, 3), (28, 35));
        let gf4 = FieldContext::new(2).unwrap();
        assert_eq!(resolvability_probability(&gf4, 2, 0).unwrap().value, 1.0);
        assert_eq!(count_spanning_subsets(2, 2), (3, 3));
        assert!(resolvability_probability(&gf4, 4, 0).is_err());
        let gf16 = FieldContext::new(4).unwrap();
        let r = resolvability_probability(&gf16, 5, 0).unwrap();
        assert_eq!(r.method, ProbabilityMethod::Exhaustive);
        let (g, t) = count_spanning_subsets(4, 7);
        assert_eq!(t - g, 15);
    }

    #[test]
    fn trivial_selectors_reproduce_omega() {
        let ctx = gf(3);
        let h = NonBinaryMatrix::from_dense(ctx, &[vec![1, 3, 0, 5], vec![0, 2, 7, 4]]).unwrap();
        let img = binary_image(&h);
        let e = apply_f_e(&img, &GeneratorSet::full(&img)).unwrap();
        assert_eq!(e.matrix(), build_omega(&img).matrix());
        let empty = GeneratorSet::new(3, (0..4).map(|j| GeneratorMatrix::full(j, 3)).collect(), BTreeMap::new()).unwrap();
        assert!(apply_f_e(&img, &empty).unwrap().matrix().is_zero());
    }

    #[test]
    fn single_row_selector_gf4() {
        let ctx = gf(2);
        let h = NonBinaryMatrix::from_dense(ctx.clone(), &[vec![2, 1]]).unwrap();
        let img = binary_image(&h);
        let mut sel = BTreeMap::new();
        sel.insert((0, 0), vec![1]);
        sel.insert((0, 1), vec![1]);
        let gens = GeneratorSet::new(2, vec![GeneratorMatrix::full(0, 2), GeneratorMatrix::full(1, 2)], sel).unwrap();
        let e = apply_f_e(&img, &gens).unwrap();
        assert_eq!(e.compacted().matrix().n_rows(), 1);
        let mut codewords = 0;
        for a in 0..4 {
            for b in 0..4 {
                if h.is_codeword(&[a, b]) {
                    codewords += 1;
                    let v = extend_codeword(&symbols_to_bits(&[a, b], 2), 2, Some(&gens)).unwrap();
                    assert!(e.matrix().annihilates(&v.bits));
                }
            }
        }
        assert_eq!(codewords, 4);
        let mut bad = BTreeMap::new();
        bad.insert((0, 0), vec![1]);
        let gens = GeneratorSet::new(2, vec![GeneratorMatrix::full(0, 2), GeneratorMatrix::full(1, 2)], bad).unwrap();
        assert!(matches!(apply_f_e(&img, &gens), Err(Error::SelectorMismatch(_))));
    }

    #[test]
    fn encoder_example_parity() {
        let ctx = gf(2);
        let h = NonBinaryMatrix::from_dense(ctx.clone(), &[vec![2, 1]]).unwrap();
        let x = [2, ctx.mul(2, 2)];
        assert!(h.is_codeword(&x));
        let img = binary_image(&h);
        assert!(img.matrix().annihilates(&symbols_to_bits(&x, 2)));
        assert_eq!(h.rank_fq(), 1);
    }

    proptest! {
        #[test]
        fn omega_blocks_are_permutations(p in 2usize..=4, seed in any::<u64>()) {
            use rand::Rng;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let label = loop {
                let rows = (0..p).map(|_| rng.random_range(0..1u32 << p)).collect();
                let l = MatrixLabel::from_rows(p, rows).unwrap();
                if l.is_full_rank() { break l; }
            };
            let phi = basis_selection(p, 1..(1u32 << p));
            prop_assert!(f_omega(&phi, &label).unwrap().is_permutation());
            let keep: Vec<u32> = (1..(1u32 << p)).filter(|_| rng.random_bool(0.6)).collect();
            let sub = basis_selection(p, keep.iter().copied());
            let fo = f_omega(&sub, &label).unwrap();
            prop_assert!(fo.precedes(&f_omega(&phi, &label).unwrap(), false).unwrap());
        }

        #[test]
        fn simplex_identity(p in 2usize..=5, x in any::<u32>(), a in any::<u32>(), b in any::<u32>()) {
            let q1 = (1u32 << p) - 1;
            let xbar: Vec<u8> = (0..p).map(|k| ((x >> k) & 1) as u8).collect();
            let v = extend_codeword(&xbar, p, None).unwrap();
            let a = a % q1 + 1;
            let b = b % q1 + 1;
            prop_assume!(a != b);
            prop_assert_eq!(v.bits[a as usize - 1] ^ v.bits[b as usize - 1], v.bits[(a ^ b) as usize - 1]);
            prop_assert_eq!(resolve_symbol(&v.bits, &GeneratorMatrix::full(0, p)).unwrap(), x & q1);
        }
    }
}
