//! Tanner graphs, girth and short-cycle census, symbol-level and matrix
//! cycles, and Monte Carlo estimates of bit-cycle probabilities.

use std::collections::{BTreeMap, HashMap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::bitmatrix::BitMatrix;
use crate::error::{Error, Result};
use crate::gf::{FieldContext, MatrixLabel};
use crate::representation::{omega_permutation, EPRMatrix, ExtendedMatrix, RowTag};

const NONE: u32 = u32::MAX;

/// Bipartite graph of a parity-check matrix. Vertices `0..n_checks` are
/// checks, the rest are variables.
#[derive(Debug, Clone)]
pub struct TannerGraph {
    n_checks: usize,
    n_vars: usize,
    adj: Vec<Vec<u32>>,
    n_edges: usize,
}

impl TannerGraph {
    pub fn from_matrix(m: &BitMatrix) -> Self {
        let nc = m.n_rows();
        let mut adj = vec![Vec::new(); nc + m.n_cols()];
        for (r, row) in m.rows().iter().enumerate() {
            for &c in row {
                adj[r].push(nc as u32 + c);
                adj[nc + c as usize].push(r as u32);
            }
        }
        TannerGraph {
            n_checks: nc,
            n_vars: m.n_cols(),
            adj,
            n_edges: m.nnz(),
        }
    }

    pub fn n_checks(&self) -> usize {
        self.n_checks
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn n_edges(&self) -> usize {
        self.n_edges
    }

    pub fn n_vertices(&self) -> usize {
        self.adj.len()
    }

    pub fn neighbors(&self, v: usize) -> &[u32] {
        &self.adj[v]
    }

    pub fn check_degrees(&self) -> Vec<usize> {
        self.adj[..self.n_checks].iter().map(Vec::len).collect()
    }

    pub fn var_degrees(&self) -> Vec<usize> {
        self.adj[self.n_checks..].iter().map(Vec::len).collect()
    }

    /// Vertex id of variable `c`.
    pub fn var_vertex(&self, c: usize) -> usize {
        self.n_checks + c
    }

    fn has_cycle(&self) -> bool {
        let mut parent: Vec<usize> = (0..self.adj.len()).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for c in 0..self.n_checks {
            for &v in &self.adj[c] {
                let a = find(&mut parent, c);
                let b = find(&mut parent, v as usize);
                if a == b {
                    return true;
                }
                parent[a] = b;
            }
        }
        false
    }

    /// Shortest cycle through a BFS tree rooted at `root`, shorter than `bound`,
    /// returned as the pair of tree vertices joined by the closing edge.
    fn root_cycle(&self, root: usize, bound: usize, dist: &mut [u32], parent: &mut [u32], touched: &mut Vec<usize>) -> Option<(usize, usize, usize)> {
        let mut best: Option<(usize, usize, usize)> = None;
        let mut best_len = bound;
        let mut queue = VecDeque::new();
        dist[root] = 0;
        parent[root] = NONE;
        touched.push(root);
        queue.push_back(root);
        while let Some(u) = queue.pop_front() {
            let du = dist[u] as usize;
            if 2 * du + 1 >= best_len {
                break;
            }
            for &w in &self.adj[u] {
                let w = w as usize;
                if parent[u] == w as u32 {
                    continue;
                }
                if dist[w] == NONE {
                    dist[w] = du as u32 + 1;
                    parent[w] = u as u32;
                    touched.push(w);
                    queue.push_back(w);
                } else {
                    let len = du + dist[w] as usize + 1;
                    if len < best_len {
                        best_len = len;
                        best = Some((u, w, len));
                    }
                }
            }
        }
        best
    }

    /// Length of the shortest cycle if it is at most `cap`.
    fn shortest_length(&self, cap: usize) -> Option<usize> {
        let n = self.adj.len();
        let best = (0..n)
            .into_par_iter()
            .fold(
                || (vec![NONE; n], vec![NONE; n], Vec::new(), cap + 1),
                |(mut dist, mut parent, mut touched, best), root| {
                    let found = self.root_cycle(root, best, &mut dist, &mut parent, &mut touched);
                    for &t in &touched {
                        dist[t] = NONE;
                    }
                    touched.clear();
                    let best = found.map_or(best, |(_, _, l)| l.min(best));
                    (dist, parent, touched, best)
                },
            )
            .map(|t| t.3)
            .min()
            .unwrap_or(cap + 1);
        (best <= cap).then_some(best)
    }

    /// Some simple cycle of length below `bound`, as a closed vertex sequence
    /// (first vertex not repeated). Among roots scanned in order, returns the
    /// first short cycle found.
    pub fn find_cycle_below(&self, bound: usize) -> Option<Vec<usize>> {
        let n = self.adj.len();
        let mut dist = vec![NONE; n];
        let mut parent = vec![NONE; n];
        let mut touched = Vec::new();
        for root in 0..n {
            let found = self.root_cycle(root, bound, &mut dist, &mut parent, &mut touched);
            let result = found.map(|(u, w, _)| {
                let path_u = path_to_root(u, &parent);
                let path_w = path_to_root(w, &parent);
                // cut both paths at their lowest common ancestor
                let mut iu = path_u.len();
                let mut iw = path_w.len();
                while iu > 0 && iw > 0 && path_u[iu - 1] == path_w[iw - 1] {
                    iu -= 1;
                    iw -= 1;
                }
                let mut cyc: Vec<usize> = path_u[..=iu.min(path_u.len() - 1)].to_vec();
                cyc.reverse();
                cyc.extend(path_w[..iw].iter().copied());
                cyc
            });
            for &t in &touched {
                dist[t] = NONE;
            }
            touched.clear();
            if result.is_some() {
                return result;
            }
        }
        None
    }

    /// Number of shortest `v`-`c` paths that avoid edge `(c, v)`, when their
    /// length is exactly `target`.
    fn paths_avoiding_edge(&self, c: usize, v: usize, target: usize, dist: &mut [u32], count: &mut [u64], touched: &mut Vec<usize>) -> u64 {
        let mut queue = VecDeque::new();
        dist[v] = 0;
        count[v] = 1;
        touched.push(v);
        queue.push_back(v);
        while let Some(u) = queue.pop_front() {
            let du = dist[u] as usize;
            if du >= target {
                break;
            }
            for &w in &self.adj[u] {
                let w = w as usize;
                if (u == v && w == c) || (u == c && w == v) {
                    continue;
                }
                if dist[w] == NONE {
                    dist[w] = du as u32 + 1;
                    count[w] = count[u];
                    touched.push(w);
                    queue.push_back(w);
                } else if dist[w] as usize == du + 1 {
                    count[w] += count[u];
                }
            }
        }
        let res = if dist[c] as usize == target { count[c] } else { 0 };
        for &t in touched.iter() {
            dist[t] = NONE;
            count[t] = 0;
        }
        touched.clear();
        res
    }

    /// Edges in check-major order as `(check, variable vertex)`.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        (0..self.n_checks)
            .flat_map(|c| self.adj[c].iter().map(move |&v| (c, v as usize)))
            .collect()
    }
}

fn path_to_root(mut x: usize, parent: &[u32]) -> Vec<usize> {
    let mut p = vec![x];
    while parent[x] != NONE {
        x = parent[x] as usize;
        p.push(x);
    }
    p
}

/// Girth value with the cycle-free and above-cap cases kept distinct.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Girth {
    CycleFree,
    Exact(usize),
    /// No cycle of length at most the cap.
    AboveCap(usize),
}

impl Girth {
    /// Numeric girth with 0 for cycle-free; `None` when only a lower bound is known.
    pub fn value(&self) -> Option<usize> {
        match self {
            Girth::CycleFree => Some(0),
            Girth::Exact(g) => Some(*g),
            Girth::AboveCap(_) => None,
        }
    }

    /// True when every cycle has length at least `g`.
    pub fn at_least(&self, g: usize) -> bool {
        match self {
            Girth::CycleFree => true,
            Girth::Exact(x) => *x >= g,
            Girth::AboveCap(cap) => cap + 2 >= g,
        }
    }
}

impl std::fmt::Display for Girth {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Girth::CycleFree => write!(f, "0 (cycle-free)"),
            Girth::Exact(g) => write!(f, "{g}"),
            Girth::AboveCap(c) => write!(f, "> {c}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GirthReport {
    pub girth: Girth,
    /// Cycle counts by length. Only the girth length is counted.
    pub short_cycle_counts: BTreeMap<usize, u64>,
    /// Girth-length cycles through each edge, edges in check-major order.
    pub edge_participation: Vec<u64>,
}

/// Girth up to `cap` with an exact count of girth-length cycles.
pub fn girth(g: &TannerGraph, cap: usize) -> GirthReport {
    let cap = cap.max(4);
    if !g.has_cycle() {
        return GirthReport {
            girth: Girth::CycleFree,
            short_cycle_counts: BTreeMap::new(),
            edge_participation: vec![0; g.n_edges()],
        };
    }
    let Some(len) = g.shortest_length(cap) else {
        return GirthReport {
            girth: Girth::AboveCap(cap),
            short_cycle_counts: BTreeMap::new(),
            edge_participation: vec![0; g.n_edges()],
        };
    };
    let edges = g.edges();
    let n = g.n_vertices();
    let participation: Vec<u64> = edges
        .par_iter()
        .map_init(
            || (vec![NONE; n], vec![0u64; n], Vec::new()),
            |(dist, count, touched), &(c, v)| g.paths_avoiding_edge(c, v, len - 1, dist, count, touched),
        )
        .collect();
    let total: u64 = participation.iter().sum();
    let mut counts = BTreeMap::new();
    counts.insert(len, total / len as u64);
    GirthReport {
        girth: Girth::Exact(len),
        short_cycle_counts: counts,
        edge_participation: participation,
    }
}

/// Exact cycle counts by length up to `max_len`, by exhaustive search.
/// Exponential; meant for small graphs and as a cross-check.
pub fn count_cycles(g: &TannerGraph, max_len: usize) -> BTreeMap<usize, u64> {
    let n = g.n_vertices();
    let mut counts = BTreeMap::new();
    let mut on_path = vec![false; n];
    fn dfs(g: &TannerGraph, start: usize, u: usize, depth: usize, max_len: usize, second: usize, on_path: &mut [bool], counts: &mut BTreeMap<usize, u64>) {
        for &w in g.neighbors(u) {
            let w = w as usize;
            if w == start && depth >= 3 {
                // each cycle is seen in two directions; keep one
                if second < u {
                    *counts.entry(depth + 1).or_insert(0) += 1;
                }
                continue;
            }
            if w <= start || on_path[w] || depth + 1 >= max_len {
                continue;
            }
            on_path[w] = true;
            let second = if depth == 0 { w } else { second };
            dfs(g, start, w, depth + 1, max_len, second, on_path, counts);
            on_path[w] = false;
        }
    }
    for s in 0..n {
        on_path[s] = true;
        dfs(g, s, s, 0, max_len, usize::MAX, &mut on_path, &mut counts);
        on_path[s] = false;
    }
    counts
}

/// A symbol-level cycle `c0 v0 c1 v1 ... c_{k-1} v_{k-1} c0` in a mother
/// matrix: check `c_t` touches `v_{t-1}` and `v_t`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SymbolCycle {
    pub checks: Vec<usize>,
    pub vars: Vec<usize>,
}

impl SymbolCycle {
    pub fn len(&self) -> usize {
        2 * self.checks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.checks.is_empty()
    }

    /// Mother-matrix positions on the cycle, two per check.
    pub fn positions(&self) -> Vec<(usize, usize)> {
        let k = self.checks.len();
        (0..k)
            .flat_map(|t| {
                let prev = self.vars[(t + k - 1) % k];
                [(self.checks[t], prev), (self.checks[t], self.vars[t])]
            })
            .collect()
    }
}

/// All symbol-level cycles of length at most `max_len`. Fails with
/// [`Error::Exhausted`] when more than `limit` cycles exist.
pub fn symbol_cycles(mother: &BitMatrix, max_len: usize, limit: usize) -> Result<Vec<SymbolCycle>> {
    let m = mother.n_rows();
    let t = mother.transpose();
    let mut out = Vec::new();
    let k_max = max_len / 2;
    let mut checks = Vec::new();
    let mut vars = Vec::new();
    let mut check_used = vec![false; m];
    let mut var_used = vec![false; mother.n_cols()];
    #[allow(clippy::too_many_arguments)]
    fn extend(
        mother: &BitMatrix,
        t: &BitMatrix,
        k_max: usize,
        limit: usize,
        checks: &mut Vec<usize>,
        vars: &mut Vec<usize>,
        check_used: &mut [bool],
        var_used: &mut [bool],
        out: &mut Vec<SymbolCycle>,
    ) -> Result<()> {
        let c0 = checks[0];
        let ct = *checks.last().expect("nonempty");
        for &v in mother.row(ct) {
            let v = v as usize;
            if var_used[v] {
                continue;
            }
            var_used[v] = true;
            vars.push(v);
            for &c in t.row(v) {
                let c = c as usize;
                if c == ct {
                    continue;
                }
                if c == c0 && checks.len() >= 2 && vars[0] < v {
                    if out.len() >= limit {
                        return Err(Error::Exhausted(format!(
                            "more than {limit} symbol cycles of length <= {}",
                            2 * k_max
                        )));
                    }
                    out.push(SymbolCycle {
                        checks: checks.clone(),
                        vars: vars.clone(),
                    });
                } else if c > c0 && !check_used[c] && checks.len() < k_max {
                    check_used[c] = true;
                    checks.push(c);
                    extend(mother, t, k_max, limit, checks, vars, check_used, var_used, out)?;
                    checks.pop();
                    check_used[c] = false;
                }
            }
            vars.pop();
            var_used[v] = false;
        }
        Ok(())
    }
    for c0 in 0..m {
        checks.push(c0);
        check_used[c0] = true;
        extend(mother, &t, k_max, limit, &mut checks, &mut vars, &mut check_used, &mut var_used, &mut out)?;
        check_used[c0] = false;
        checks.pop();
    }
    Ok(out)
}

/// Row-to-column maps of the nonzero blocks of an extended matrix,
/// possibly partial when rows have been removed.
#[derive(Debug, Clone, Default)]
pub struct BlockPerms {
    q1: usize,
    fwd: HashMap<(usize, usize), Vec<u32>>,
    inv: HashMap<(usize, usize), Vec<u32>>,
}

impl BlockPerms {
    pub fn new(q1: usize) -> Self {
        BlockPerms {
            q1,
            ..Default::default()
        }
    }

    /// Records `row -> col` (both 0-based within block `(i, j)`).
    pub fn insert(&mut self, i: usize, j: usize, row: u32, col: u32) {
        let q1 = self.q1;
        self.fwd.entry((i, j)).or_insert_with(|| vec![NONE; q1])[row as usize] = col;
        self.inv.entry((i, j)).or_insert_with(|| vec![NONE; q1])[col as usize] = row;
    }

    pub fn remove_row(&mut self, i: usize, j: usize, row: u32) {
        if let Some(f) = self.fwd.get_mut(&(i, j)) {
            let col = f[row as usize];
            f[row as usize] = NONE;
            if col != NONE {
                self.inv.get_mut(&(i, j)).expect("paired")[col as usize] = NONE;
            }
        }
    }

    pub fn from_labels(q1: usize, labels: impl IntoIterator<Item = ((usize, usize), MatrixLabel)>) -> Self {
        let mut bp = BlockPerms::new(q1);
        for ((i, j), l) in labels {
            for (r, c) in omega_permutation(&l).into_iter().enumerate() {
                bp.insert(i, j, r as u32, c);
            }
        }
        bp
    }

    pub fn from_extended(ext: &ExtendedMatrix) -> Self {
        let q1 = ext.blocks().col_size;
        let mut bp = BlockPerms::new(q1);
        for (r, row) in ext.matrix().rows().iter().enumerate() {
            for &c in row {
                let c = c as usize;
                bp.insert(r / q1, c / q1, (r % q1) as u32, (c % q1) as u32);
            }
        }
        bp
    }

    /// Uses only rows tagged as plain Omega rows.
    pub fn from_epr(e: &EPRMatrix) -> Self {
        let q1 = e.blocks().col_size;
        let mut bp = BlockPerms::new(q1);
        for (r, tag) in e.provenance().iter().enumerate() {
            if let RowTag::OmegaRow { check, index } = *tag {
                for &c in e.matrix().row(r) {
                    let c = c as usize;
                    bp.insert(check, c / q1, index - 1, (c % q1) as u32);
                }
            }
        }
        bp
    }

    pub fn q1(&self) -> usize {
        self.q1
    }

    fn get(&self, i: usize, j: usize) -> Option<(&[u32], &[u32])> {
        Some((self.fwd.get(&(i, j))?.as_slice(), self.inv.get(&(i, j))?.as_slice()))
    }

    /// Bit cycles inside the blocks of a symbol cycle, each as its
    /// `(check, 1-based row index)` sequence.
    pub fn bit_cycles(&self, cyc: &SymbolCycle) -> Vec<Vec<(usize, u32)>> {
        let k = cyc.checks.len();
        let mut blocks = Vec::with_capacity(k);
        for t in 0..k {
            let prev = cyc.vars[(t + k - 1) % k];
            let (Some((_, inv)), Some((fwd, _))) = (self.get(cyc.checks[t], prev), self.get(cyc.checks[t], cyc.vars[t])) else {
                return Vec::new();
            };
            blocks.push((inv, fwd));
        }
        let mut found = Vec::new();
        'start: for a in 0..self.q1 as u32 {
            let mut cur = a;
            let mut rows = Vec::with_capacity(k);
            for (t, (inv, fwd)) in blocks.iter().enumerate() {
                let r = inv[cur as usize];
                if r == NONE {
                    continue 'start;
                }
                let c = fwd[r as usize];
                if c == NONE {
                    continue 'start;
                }
                rows.push((cyc.checks[t], r + 1));
                cur = c;
            }
            if cur == a {
                found.push(rows);
            }
        }
        found
    }

    /// Rows of the cycle's checks with entries in both cycle blocks.
    pub fn crossing_rows(&self, cyc: &SymbolCycle) -> Vec<(usize, u32)> {
        let k = cyc.checks.len();
        let mut out = Vec::new();
        for t in 0..k {
            let prev = cyc.vars[(t + k - 1) % k];
            if let (Some((a, _)), Some((b, _))) = (self.get(cyc.checks[t], prev), self.get(cyc.checks[t], cyc.vars[t])) {
                for r in 0..self.q1 {
                    if a[r] != NONE && b[r] != NONE {
                        out.push((cyc.checks[t], r as u32 + 1));
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatrixCycle {
    pub cycle: SymbolCycle,
    pub bit_cycles: Vec<Vec<(usize, u32)>>,
    pub crossing_rows: Vec<(usize, u32)>,
}

impl MatrixCycle {
    pub fn bit_cycle_present(&self) -> bool {
        !self.bit_cycles.is_empty()
    }
}

/// Symbol cycles of the mother matrix up to `max_len` with the bit cycles
/// they induce in the extended matrix.
pub fn matrix_cycles(mother: &BitMatrix, perms: &BlockPerms, max_len: usize, limit: usize) -> Result<Vec<MatrixCycle>> {
    let cycles = symbol_cycles(mother, max_len, limit)?;
    Ok(cycles
        .into_par_iter()
        .map(|cycle| MatrixCycle {
            bit_cycles: perms.bit_cycles(&cycle),
            crossing_rows: perms.crossing_rows(&cycle),
            cycle,
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CycleProbabilityEstimate {
    pub q: usize,
    pub cycle_length: usize,
    pub trials: u64,
    pub hits: u64,
    pub estimate: f64,
    pub standard_error: f64,
    /// Largest subset of pairwise disjoint label permutations.
    pub disjoint_labels: usize,
    pub labels: usize,
    /// Lower and upper bound on the length-4 probability, when `cycle_length == 4`.
    pub bounds: Option<(f64, f64)>,
}

fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

fn cycle_hit(perms: &[Vec<u32>], inverses: &[Vec<u32>], picks: &[usize], q1: usize) -> bool {
    // picks: 2k labels, two per check in order (prev var block, own var block)
    'start: for a in 0..q1 as u32 {
        let mut cur = a;
        for pair in picks.chunks(2) {
            let r = inverses[pair[0]][cur as usize];
            cur = perms[pair[1]][r as usize];
            if r == NONE {
                continue 'start;
            }
        }
        if cur == a {
            return true;
        }
    }
    false
}

fn estimate_over(label_set: &[MatrixLabel], q1: usize, g_c: usize, trials: u64, seed: u64) -> u64 {
    let perms: Vec<Vec<u32>> = label_set.iter().map(omega_permutation).collect();
    let inverses: Vec<Vec<u32>> = perms
        .iter()
        .map(|p| {
            let mut inv = vec![NONE; q1];
            for (r, &c) in p.iter().enumerate() {
                inv[c as usize] = r as u32;
            }
            inv
        })
        .collect();
    let n = label_set.len();
    (0..trials)
        .into_par_iter()
        .filter(|&t| {
            let mut rng = trial_rng(seed, t);
            let picks: Vec<usize> = (0..g_c).map(|_| rng.random_range(0..n)).collect();
            cycle_hit(&perms, &inverses, &picks, q1)
        })
        .count() as u64
}

/// Monte Carlo estimate of the probability that a length-4 symbol cycle
/// with i.i.d. uniform field labels yields a bit cycle.
pub fn estimate_p4(ctx: &FieldContext, trials: u64, seed: u64) -> Result<CycleProbabilityEstimate> {
    estimate_cycle_prob(ctx, &ctx.nonzero_companions(), 4, trials, seed)
}

/// Exact `(hits, total)` over all `(q-1)^4` field label assignments of a length-4 cycle.
pub fn exhaustive_p4(ctx: &FieldContext) -> (u64, u64) {
    let labels = ctx.nonzero_companions();
    let q1 = ctx.order();
    let perms: Vec<Vec<u32>> = labels.iter().map(omega_permutation).collect();
    let inverses: Vec<Vec<u32>> = perms
        .iter()
        .map(|p| {
            let mut inv = vec![0; q1];
            for (r, &c) in p.iter().enumerate() {
                inv[c as usize] = r as u32;
            }
            inv
        })
        .collect();
    let mut hits = 0;
    let mut total = 0;
    for a in 0..q1 {
        for b in 0..q1 {
            for c in 0..q1 {
                for d in 0..q1 {
                    total += 1;
                    if cycle_hit(&perms, &inverses, &[a, b, c, d], q1) {
                        hits += 1;
                    }
                }
            }
        }
    }
    (hits, total)
}

/// Two labels whose extended permutations never agree on a row.
pub fn labels_disjoint(a: &MatrixLabel, b: &MatrixLabel) -> bool {
    let pa = omega_permutation(a);
    let pb = omega_permutation(b);
    pa.iter().zip(&pb).all(|(x, y)| x != y)
}

/// Size of the largest pairwise-disjoint subset of the labels.
pub fn max_disjoint_subset(labels: &[MatrixLabel], cap: usize) -> usize {
    let n = labels.len();
    let perms: Vec<Vec<u32>> = labels.iter().map(omega_permutation).collect();
    let adj: Vec<Vec<bool>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| i != j && perms[i].iter().zip(&perms[j]).all(|(x, y)| x != y))
                .collect()
        })
        .collect();
    fn expand(adj: &[Vec<bool>], size: usize, cand: Vec<usize>, best: &mut usize, cap: usize) {
        if cand.is_empty() {
            *best = (*best).max(size);
            return;
        }
        if size + cand.len() <= *best || *best >= cap {
            return;
        }
        for (k, &v) in cand.iter().enumerate() {
            if size + cand.len() - k <= *best {
                return;
            }
            let next: Vec<usize> = cand[k + 1..].iter().copied().filter(|&u| adj[v][u]).collect();
            expand(adj, size + 1, next, best, cap);
            if *best >= cap {
                return;
            }
        }
    }
    let mut best = usize::from(n > 0);
    expand(&adj, 0, (0..n).collect(), &mut best, cap);
    best
}

/// Probability that a length-`g_c` symbol cycle whose labels are drawn
/// uniformly from `label_set` carries a bit cycle.
pub fn estimate_cycle_prob(ctx: &FieldContext, label_set: &[MatrixLabel], g_c: usize, trials: u64, seed: u64) -> Result<CycleProbabilityEstimate> {
    if label_set.is_empty() {
        return Err(Error::InvalidArgument("empty label set".into()));
    }
    if g_c < 4 || !g_c.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!("cycle length {g_c} must be even and >= 4")));
    }
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be positive".into()));
    }
    let p = ctx.p() as usize;
    if label_set.iter().any(|l| l.p() != p || !l.is_full_rank()) {
        return Err(Error::DegenerateLabels("labels must be full-rank p x p".into()));
    }
    let q1 = ctx.order();
    let hits = estimate_over(label_set, q1, g_c, trials, seed);
    let est = hits as f64 / trials as f64;
    let se = (est * (1.0 - est) / trials as f64).sqrt();
    let big_p = max_disjoint_subset(label_set, q1);
    let big_q = label_set.len();
    let bounds = (g_c == 4).then(|| {
        let d = (big_q - big_p) as f64;
        (1.0 / q1 as f64, ((1.0 + d * d) / (big_p as f64 + d * d)).min(1.0))
    });
    Ok(CycleProbabilityEstimate {
        q: q1 + 1,
        cycle_length: g_c,
        trials,
        hits,
        estimate: est,
        standard_error: se,
        disjoint_labels: big_p,
        labels: big_q,
        bounds,
    })
}

/// Edge-perspective degree distributions: `lambda[d]` (variables) and
/// `rho[d]` (checks) are the fractions of edges on degree-`d` nodes, i.e.
/// the coefficients of `x^(d-1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DegreeDistribution {
    pub lambda: BTreeMap<usize, f64>,
    pub rho: BTreeMap<usize, f64>,
}

impl DegreeDistribution {
    fn poly(name: &str, coeffs: &BTreeMap<usize, f64>) -> String {
        let terms: Vec<String> = coeffs
            .iter()
            .map(|(&d, &f)| match d {
                1 => format!("{f:.4}"),
                2 => format!("{f:.4}x"),
                _ => format!("{f:.4}x^{}", d - 1),
            })
            .collect();
        format!("{name}(x) = {}", terms.join(" + "))
    }

    pub fn lambda_string(&self) -> String {
        Self::poly("lambda", &self.lambda)
    }

    pub fn rho_string(&self) -> String {
        Self::poly("rho", &self.rho)
    }
}

pub fn degree_distributions(m: &BitMatrix) -> Result<DegreeDistribution> {
    let rw = m.row_weights();
    let cw = m.col_weights();
    if let Some(r) = rw.iter().position(|&w| w == 0) {
        return Err(Error::InvalidArgument(format!("row {r} is empty")));
    }
    if let Some(c) = cw.iter().position(|&w| w == 0) {
        return Err(Error::InvalidArgument(format!("column {c} is empty")));
    }
    let edges = m.nnz() as f64;
    let tally = |ws: &[usize]| {
        let mut t: BTreeMap<usize, usize> = BTreeMap::new();
        for &w in ws {
            *t.entry(w).or_insert(0) += w;
        }
        t.into_iter().map(|(d, e)| (d, e as f64 / edges)).collect()
    };
    Ok(DegreeDistribution {
        lambda: tally(&cw),
        rho: tally(&rw),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn girth_examples() {
        let g = TannerGraph::from_matrix(&BitMatrix::from_strs(&["11", "11"]));
        let r = girth(&g, 12);
        assert_eq!(r.girth, Girth::Exact(4));
        assert_eq!(r.short_cycle_counts[&4], 1);
        let tree = BitMatrix::from_strs(&["1100", "0111", "0001"]);
        assert_eq!(girth(&TannerGraph::from_matrix(&tree), 12).girth, Girth::CycleFree);
        let free = tree.kron(&BitMatrix::identity(3));
        assert_eq!(girth(&TannerGraph::from_matrix(&free), 12).girth.value(), Some(0));
    }

    #[test]
    fn girth_counts_match_exhaustive_search() {
        let h = crate::fixtures::gallager12();
        let g = TannerGraph::from_matrix(&h);
        let r = girth(&g, 12);
        let exact = count_cycles(&g, 8);
        let gl = r.girth.value().unwrap();
        assert_eq!(r.short_cycle_counts[&gl], exact[&gl]);
        assert_eq!(*exact.keys().next().unwrap(), gl);
    }

    #[test]
    fn cycle_above_cap() {
        // a single 8-cycle
        let h = BitMatrix::from_strs(&["1100", "0110", "0011", "1001"]);
        let g = TannerGraph::from_matrix(&h);
        assert_eq!(girth(&g, 6).girth, Girth::AboveCap(6));
        assert_eq!(girth(&g, 8).girth, Girth::Exact(8));
        let cyc = g.find_cycle_below(10).unwrap();
        assert_eq!(cyc.len(), 8);
        assert!(g.find_cycle_below(8).is_none());
    }

    #[test]
    fn symbol_cycles_of_complete_bipartite() {
        // K_{2,3}: three 4-cycles
        let m = BitMatrix::from_strs(&["111", "111"]);
        let cycles = symbol_cycles(&m, 4, 100).unwrap();
        assert_eq!(cycles.len(), 3);
        for c in &cycles {
            for (i, j) in c.positions() {
                assert!(m.get(i, j));
            }
        }
        // K_{3,3}: nine 4-cycles and six 6-cycles
        let k33 = BitMatrix::from_strs(&["111", "111", "111"]);
        let all = symbol_cycles(&k33, 6, 100).unwrap();
        assert_eq!(all.iter().filter(|c| c.len() == 4).count(), 9);
        assert_eq!(all.iter().filter(|c| c.len() == 6).count(), 6);
        assert!(symbol_cycles(&k33, 6, 5).is_err());
    }

    #[test]
    fn cycle_positions_are_nonzero() {
        let h = crate::fixtures::gallager12();
        for c in symbol_cycles(&h, 8, 100_000).unwrap() {
            for (i, j) in c.positions() {
                assert!(h.get(i, j));
            }
        }
    }

    #[test]
    fn identical_blocks_always_collide() {
        let ctx = FieldContext::new(2).unwrap();
        let l = ctx.companion_label(2);
        let perms = BlockPerms::from_labels(3, [((0, 0), l.clone()), ((0, 1), l.clone()), ((1, 0), l.clone()), ((1, 1), l)]);
        let mother = BitMatrix::from_strs(&["11", "11"]);
        let mc = matrix_cycles(&mother, &perms, 4, 10).unwrap();
        assert_eq!(mc.len(), 1);
        assert_eq!(mc[0].bit_cycles.len(), 3);
        let none = matrix_cycles(&BitMatrix::from_strs(&["10", "11"]), &perms, 12, 10).unwrap();
        assert!(none.is_empty());
    }

    #[test]
    fn fixed_point_free_composition() {
        // labels 1, alpha, 1, 1: composite is alpha, which has no fixed point
        let ctx = FieldContext::new(2).unwrap();
        let one = ctx.companion_label(1);
        let a = ctx.companion_label(2);
        let perms = BlockPerms::from_labels(3, [((0, 0), one.clone()), ((0, 1), a), ((1, 0), one.clone()), ((1, 1), one)]);
        let mc = matrix_cycles(&BitMatrix::from_strs(&["11", "11"]), &perms, 4, 10).unwrap();
        assert!(!mc[0].bit_cycle_present());
        assert_eq!(mc[0].crossing_rows.len(), 6);
    }

    #[test]
    fn exhaustive_q4() {
        let ctx = FieldContext::new(2).unwrap();
        assert_eq!(exhaustive_p4(&ctx), (27, 81));
    }

    #[test]
    fn p4_estimates() {
        for p in [2u32, 3] {
            let ctx = FieldContext::new(p).unwrap();
            let est = estimate_p4(&ctx, 20_000, 7).unwrap();
            let target = 1.0 / ctx.order() as f64;
            assert!((est.estimate - target).abs() < 4.0 * est.standard_error, "{est:?}");
            assert_eq!(est.disjoint_labels, ctx.order());
        }
    }

    #[test]
    fn single_label_always_cycles() {
        let ctx = FieldContext::new(3).unwrap();
        let est = estimate_cycle_prob(&ctx, &[ctx.companion_label(5)], 4, 1000, 1).unwrap();
        assert_eq!(est.estimate, 1.0);
        assert_eq!(est.disjoint_labels, 1);
        assert!(estimate_cycle_prob(&ctx, &[], 4, 10, 1).is_err());
    }

    #[test]
    fn degree_distribution_regular() {
        let h = crate::fixtures::gallager12();
        let d = degree_distributions(&h).unwrap();
        assert_eq!(d.lambda, BTreeMap::from([(3, 1.0)]));
        assert_eq!(d.rho, BTreeMap::from([(4, 1.0)]));
        assert!(degree_distributions(&BitMatrix::from_strs(&["10", "00"])).is_err());
    }
}
