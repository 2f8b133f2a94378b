//! Code construction: PEG mother matrices, label optimization, simplex
//! replacement blocks and the EPR construction with its outer loop over `p`.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bitmatrix::BitMatrix;
use crate::error::{Error, Result};
use crate::gf::{rank_of_masks, FieldContext, MatrixLabel};
use crate::graph::{self, BlockPerms, Girth, SymbolCycle, TannerGraph};
use crate::representation::{
    binary_image, omega_permutation, BinaryImage, EPRMatrix, GeneratorMatrix, GeneratorSet,
    NonBinaryMatrix, RowTag,
};

/// Degree targets for the mother matrix.
#[derive(Debug, Clone, PartialEq)]
pub enum DegreeSpec {
    Regular { dv: usize, dc: usize },
    /// Edge-perspective fractions keyed by node degree.
    Distribution {
        lambda: BTreeMap<usize, f64>,
        rho: BTreeMap<usize, f64>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstructionConfig {
    /// Starting extension degree.
    pub p: usize,
    /// Symbols (mother columns).
    pub n: usize,
    /// Checks (mother rows).
    pub m: usize,
    pub target_girth: usize,
    pub degrees: DegreeSpec,
    /// Minimum generator weight; `None` means `q/2`.
    pub psi: Option<usize>,
    /// Minimum kept rows per block row; `None` means `p`.
    pub phi: Option<usize>,
    /// Optional threshold ceiling in dB.
    pub t_b: Option<f64>,
    pub seed: u64,
    /// Use two-symbol replacement rows instead of single-symbol ones.
    pub wide_blocks: bool,
    pub max_p: usize,
    /// Most symbol cycles enumerated at one length bound before giving up.
    pub cycle_budget: usize,
    /// Largest `N(q-1)` attempted.
    pub max_extended_len: usize,
    /// Rounds of the girth-length repair pass.
    pub repair_rounds: usize,
}

impl ConstructionConfig {
    pub fn regular(n: usize, m: usize, dv: usize, dc: usize, p: usize, target_girth: usize, seed: u64) -> Self {
        ConstructionConfig {
            p,
            n,
            m,
            target_girth,
            degrees: DegreeSpec::Regular { dv, dc },
            psi: None,
            phi: None,
            t_b: None,
            seed,
            wide_blocks: false,
            max_p: 16,
            cycle_budget: 200_000,
            max_extended_len: 1 << 17,
            repair_rounds: 16,
        }
    }

    pub fn psi_for(&self, p: usize) -> usize {
        self.psi.unwrap_or(1 << (p - 1))
    }

    pub fn phi_for(&self, p: usize) -> usize {
        self.phi.unwrap_or(p).max(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(2..=16).contains(&self.p) {
            return Err(Error::UnsupportedDegree(self.p as u32));
        }
        if self.target_girth < 4 || !self.target_girth.is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!(
                "target girth {} must be even and at least 4",
                self.target_girth
            )));
        }
        if self.n == 0 || self.m == 0 {
            return Err(Error::InvalidArgument("empty mother matrix".into()));
        }
        let q = 1usize << self.p;
        let psi = self.psi_for(self.p);
        if psi < q / 2 || psi >= q {
            return Err(Error::InvalidArgument(format!(
                "psi = {psi} must lie in [{}, {}] to guarantee resolvability",
                q / 2,
                q - 1
            )));
        }
        Ok(())
    }

    fn degree_lists(&self) -> Result<(Vec<usize>, Vec<usize>)> {
        match &self.degrees {
            DegreeSpec::Regular { dv, dc } => {
                if dv * self.n != dc * self.m || *dv == 0 {
                    return Err(Error::InfeasibleDegrees(format!(
                        "N*dv = {} differs from M*dc = {}",
                        dv * self.n,
                        dc * self.m
                    )));
                }
                if *dv > self.m || *dc > self.n {
                    return Err(Error::InfeasibleDegrees("degree exceeds the other dimension".into()));
                }
                Ok((vec![*dv; self.n], vec![*dc; self.m]))
            }
            DegreeSpec::Distribution { lambda, rho } => {
                let vars = node_counts(lambda, self.n)?;
                let edges: usize = vars.iter().sum();
                let mut checks = node_counts(rho, self.m)?;
                // match the edge count by nudging check degrees
                let mut total: usize = checks.iter().sum();
                let mut k = 0;
                let mut guard = 0;
                while total != edges {
                    guard += 1;
                    if guard > 4 * edges + 4 * self.m {
                        return Err(Error::InfeasibleDegrees("cannot balance edge counts".into()));
                    }
                    let i = k % self.m;
                    if total < edges && checks[i] < self.n {
                        checks[i] += 1;
                        total += 1;
                    } else if total > edges && checks[i] > 1 {
                        checks[i] -= 1;
                        total -= 1;
                    }
                    k += 1;
                }
                if vars.iter().any(|&d| d > self.m) {
                    return Err(Error::InfeasibleDegrees("variable degree exceeds M".into()));
                }
                Ok((vars, checks))
            }
        }
    }
}

/// Node degree list (sorted ascending) from edge-perspective fractions.
fn node_counts(dist: &BTreeMap<usize, f64>, nodes: usize) -> Result<Vec<usize>> {
    if dist.is_empty() || dist.keys().any(|&d| d == 0) || dist.values().any(|&f| f < 0.0) {
        return Err(Error::InfeasibleDegrees("invalid degree distribution".into()));
    }
    let norm: f64 = dist.iter().map(|(&d, &f)| f / d as f64).sum();
    if norm <= 0.0 {
        return Err(Error::InfeasibleDegrees("degree distribution sums to zero".into()));
    }
    let mut counts: Vec<(usize, usize, f64)> = dist
        .iter()
        .map(|(&d, &f)| {
            let exact = nodes as f64 * (f / d as f64) / norm;
            (d, exact.floor() as usize, exact - exact.floor())
        })
        .collect();
    let mut assigned: usize = counts.iter().map(|c| c.1).sum();
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by(|&a, &b| counts[b].2.total_cmp(&counts[a].2).then(a.cmp(&b)));
    for &i in order.iter().cycle().take(nodes) {
        if assigned >= nodes {
            break;
        }
        counts[i].1 += 1;
        assigned += 1;
    }
    Ok(counts.iter().flat_map(|&(d, c, _)| std::iter::repeat_n(d, c)).collect())
}

/// Progressive edge growth with check-degree caps. Ties between equally
/// loaded candidate checks are broken by the seeded generator.
pub fn peg_mother(cfg: &ConstructionConfig) -> Result<BitMatrix> {
    let (var_deg, check_target) = cfg.degree_lists()?;
    let (n, m) = (cfg.n, cfg.m);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut var_adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut chk_adj: Vec<Vec<usize>> = vec![Vec::new(); m];
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&v| (var_deg[v], v));
    let mut reached = vec![false; m];
    let mut seen_var = vec![false; n];
    for &s in &order {
        for k in 0..var_deg[s] {
            let eligible = |c: usize, adj: &[Vec<usize>]| adj[c].len() < check_target[c];
            let candidates: Vec<usize> = if k == 0 {
                (0..m).filter(|&c| eligible(c, &chk_adj)).collect()
            } else {
                reached.iter_mut().for_each(|r| *r = false);
                seen_var.iter_mut().for_each(|r| *r = false);
                seen_var[s] = true;
                for &c in &var_adj[s] {
                    reached[c] = true;
                }
                let mut frontier = var_adj[s].clone();
                let unreached = |reached: &[bool]| {
                    (0..m).filter(|&c| !reached[c] && eligible(c, &chk_adj)).collect::<Vec<_>>()
                };
                let mut cands = unreached(&reached);
                if cands.is_empty() {
                    return Err(Error::InfeasibleDegrees(format!("no free check left for variable {s}")));
                }
                loop {
                    let mut new = Vec::new();
                    for &c in &frontier {
                        for &v in &chk_adj[c] {
                            if !seen_var[v] {
                                seen_var[v] = true;
                                for &c2 in &var_adj[v] {
                                    if !reached[c2] {
                                        reached[c2] = true;
                                        new.push(c2);
                                    }
                                }
                            }
                        }
                    }
                    if new.is_empty() {
                        break;
                    }
                    let next = unreached(&reached);
                    if next.is_empty() {
                        // everything is now reachable; the previous set is the farthest layer
                        break;
                    }
                    cands = next;
                    frontier = new;
                }
                cands
            };
            if candidates.is_empty() {
                return Err(Error::InfeasibleDegrees(format!("no free check left for variable {s}")));
            }
            let min_deg = candidates.iter().map(|&c| chk_adj[c].len()).min().expect("nonempty");
            let ties: Vec<usize> = candidates.into_iter().filter(|&c| chk_adj[c].len() == min_deg).collect();
            let c = ties[rng.random_range(0..ties.len())];
            var_adj[s].push(c);
            chk_adj[c].push(s);
        }
    }
    let to_matrix = |chk_adj: &[Vec<usize>]| {
        let rows = chk_adj
            .iter()
            .map(|r| {
                let mut r: Vec<u32> = r.iter().map(|&v| v as u32).collect();
                r.sort_unstable();
                r
            })
            .collect();
        BitMatrix::from_sorted_rows(n, rows)
    };
    let mut h = to_matrix(&chk_adj);
    swap_out_short_cycles(&mut h, 6, &mut rng);
    Ok(h)
}

/// Degree-preserving edge swaps that remove cycles shorter than `min_girth`
/// where the greedy placement was forced into them.
fn swap_out_short_cycles(h: &mut BitMatrix, min_girth: usize, rng: &mut ChaCha8Rng) {
    let score = |h: &BitMatrix| {
        let r = graph::girth(&TannerGraph::from_matrix(h), min_girth - 2);
        match r.girth {
            Girth::Exact(g) => (g, r.short_cycle_counts[&g]),
            _ => (usize::MAX, 0),
        }
    };
    let mut current = score(h);
    let edges_of = |h: &BitMatrix| -> Vec<(usize, usize)> {
        h.rows().iter().enumerate().flat_map(|(c, r)| r.iter().map(move |&v| (c, v as usize))).collect()
    };
    let mut stall = 0;
    while current.0 < min_girth && stall < 200 {
        let g = TannerGraph::from_matrix(h);
        let Some(cycle) = g.find_cycle_below(min_girth) else { break };
        let nc = g.n_checks();
        let k = rng.random_range(0..cycle.len());
        let (a, b) = (cycle[k], cycle[(k + 1) % cycle.len()]);
        let (c, v) = if a < nc { (a, b - nc) } else { (b, a - nc) };
        let edges = edges_of(h);
        let (c2, v2) = edges[rng.random_range(0..edges.len())];
        if c2 == c || v2 == v || h.get(c, v2) || h.get(c2, v) {
            stall += 1;
            continue;
        }
        let mut trial = h.clone();
        trial.flip(c, v);
        trial.flip(c2, v2);
        trial.flip(c, v2);
        trial.flip(c2, v);
        let s = score(&trial);
        if s.0 > current.0 || (s.0 == current.0 && s.1 < current.1) {
            *h = trial;
            current = s;
            stall = 0;
        } else {
            stall += 1;
        }
    }
}

/// Label statistics from [`optimize_field_labels`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelReport {
    /// Longest symbol-cycle length considered.
    pub cycle_length: usize,
    pub cycles: usize,
    pub colliding_before: usize,
    pub colliding_after: usize,
}

enum Collision {
    /// Field labels by discrete log: a cycle collides iff its exponent sum vanishes.
    Field { q1: usize },
    Generic { perms: Vec<Vec<u32>>, invs: Vec<Vec<u32>>, q1: usize },
}

impl Collision {
    fn collides(&self, steps: &[(usize, usize)], assign: &[usize]) -> bool {
        match self {
            Collision::Field { q1 } => {
                let mut e = 0usize;
                for &(own, prev) in steps {
                    e = (e + assign[own] + q1 - assign[prev]) % q1;
                }
                e == 0
            }
            Collision::Generic { perms, invs, q1 } => (0..*q1 as u32).any(|a| {
                let mut cur = a;
                for &(own, prev) in steps {
                    let r = invs[assign[prev]][cur as usize];
                    cur = perms[assign[own]][r as usize];
                }
                cur == a
            }),
        }
    }
}

/// Greedy re-draw of labels to break collisions on short symbol cycles.
/// `assign` holds one label index per nonzero mother position.
fn greedy_labels(
    cycles: &[Vec<(usize, usize)>],
    lengths: &[usize],
    n_positions: usize,
    n_labels: usize,
    coll: &Collision,
    assign: &mut [usize],
) -> (usize, usize) {
    let max_len = lengths.iter().copied().max().unwrap_or(4);
    let weight: Vec<f64> = lengths.iter().map(|&l| 4f64.powi(((max_len - l) / 2) as i32)).collect();
    let mut by_pos: Vec<Vec<usize>> = vec![Vec::new(); n_positions];
    for (k, cyc) in cycles.iter().enumerate() {
        for &(own, prev) in cyc {
            by_pos[own].push(k);
            by_pos[prev].push(k);
        }
    }
    for v in &mut by_pos {
        v.sort_unstable();
        v.dedup();
    }
    let count_bad = |assign: &[usize]| cycles.iter().filter(|c| coll.collides(c, assign)).count();
    let before = count_bad(assign);
    for _pass in 0..24 {
        let bad: Vec<bool> = cycles.iter().map(|c| coll.collides(c, assign)).collect();
        if !bad.iter().any(|&b| b) {
            break;
        }
        let mut load: Vec<(f64, usize)> = (0..n_positions)
            .map(|pos| (by_pos[pos].iter().filter(|&&k| bad[k]).map(|&k| weight[k]).sum(), pos))
            .filter(|&(w, _)| w > 0.0)
            .collect();
        load.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let mut improved = false;
        for &(_, pos) in &load {
            let score = |assign: &[usize]| -> f64 {
                by_pos[pos]
                    .iter()
                    .filter(|&&k| coll.collides(&cycles[k], assign))
                    .map(|&k| weight[k])
                    .sum()
            };
            let current = assign[pos];
            let mut best = (score(assign), current);
            for l in 0..n_labels {
                if l == current {
                    continue;
                }
                assign[pos] = l;
                let s = score(assign);
                if s < best.0 {
                    best = (s, l);
                }
            }
            assign[pos] = best.1;
            improved |= best.1 != current;
        }
        if !improved {
            break;
        }
    }
    (before, count_bad(assign))
}

/// Symbol cycles up to `max_len`, shrinking the bound while the budget is exceeded.
fn cycles_within_budget(mother: &BitMatrix, max_len: usize, budget: usize) -> (usize, Vec<SymbolCycle>) {
    let mut len = max_len;
    while len >= 4 {
        if let Ok(c) = graph::symbol_cycles(mother, len, budget) {
            return (len, c);
        }
        len -= 2;
    }
    (0, Vec::new())
}

fn cycle_steps(cycles: &[SymbolCycle], pos_index: &HashMap<(usize, usize), usize>) -> Vec<Vec<(usize, usize)>> {
    cycles
        .iter()
        .map(|cyc| {
            let k = cyc.checks.len();
            (0..k)
                .map(|t| {
                    let c = cyc.checks[t];
                    (pos_index[&(c, cyc.vars[t])], pos_index[&(c, cyc.vars[(t + k - 1) % k])])
                })
                .collect()
        })
        .collect()
}

fn positions(mother: &BitMatrix) -> (Vec<(usize, usize)>, HashMap<(usize, usize), usize>) {
    let list: Vec<(usize, usize)> = mother
        .rows()
        .iter()
        .enumerate()
        .flat_map(|(i, r)| r.iter().map(move |&j| (i, j as usize)))
        .collect();
    let index = list.iter().enumerate().map(|(k, &ij)| (ij, k)).collect();
    (list, index)
}

/// Field labels for every nonzero mother position, chosen so that symbol
/// cycles up to `max_len` avoid bit cycles where possible.
pub fn optimize_field_labels(
    mother: &BitMatrix,
    ctx: Arc<FieldContext>,
    max_len: usize,
    budget: usize,
    seed: u64,
) -> Result<(NonBinaryMatrix, LabelReport)> {
    let q1 = ctx.order();
    let (list, index) = positions(mother);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2);
    let mut assign: Vec<usize> = (0..list.len()).map(|_| rng.random_range(0..q1)).collect();
    let (len, cycles) = cycles_within_budget(mother, max_len.max(4), budget);
    let lengths: Vec<usize> = cycles.iter().map(SymbolCycle::len).collect();
    let steps = cycle_steps(&cycles, &index);
    let (before, after) = greedy_labels(&steps, &lengths, list.len(), q1, &Collision::Field { q1 }, &mut assign);
    let mut rows = vec![Vec::new(); mother.n_rows()];
    for (&(i, j), &a) in list.iter().zip(&assign) {
        rows[i].push((j as u32, ctx.exp(a)));
    }
    let h = NonBinaryMatrix::new(ctx, mother.n_cols(), rows)?;
    Ok((
        h,
        LabelReport {
            cycle_length: len,
            cycles: cycles.len(),
            colliding_before: before,
            colliding_after: after,
        },
    ))
}

/// Field labels with length-4 collisions broken.
pub fn optimize_labels(mother: &BitMatrix, ctx: Arc<FieldContext>, seed: u64) -> Result<BinaryImage> {
    let (h, _) = optimize_field_labels(mother, ctx, 4, 200_000, seed)?;
    Ok(binary_image(&h))
}

/// Labels drawn from an arbitrary full-rank label set. Sets without two
/// disjoint labels cannot avoid collisions and are rejected.
pub fn optimize_label_set(
    mother: &BitMatrix,
    p: usize,
    labels: &[MatrixLabel],
    max_len: usize,
    seed: u64,
) -> Result<(BinaryImage, LabelReport)> {
    if labels.is_empty() || labels.iter().any(|l| l.p() != p || !l.is_full_rank()) {
        return Err(Error::DegenerateLabels("labels must be full-rank p x p".into()));
    }
    let q1 = (1usize << p) - 1;
    let disjoint = graph::max_disjoint_subset(labels, 2);
    if disjoint < 2 {
        return Err(Error::DegenerateLabels(
            "no two labels are disjoint, so every short cycle collides".into(),
        ));
    }
    let perms: Vec<Vec<u32>> = labels.iter().map(omega_permutation).collect();
    let invs = perms
        .iter()
        .map(|pm| {
            let mut inv = vec![0u32; q1];
            for (r, &c) in pm.iter().enumerate() {
                inv[c as usize] = r as u32;
            }
            inv
        })
        .collect();
    let (list, index) = positions(mother);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(3);
    let mut assign: Vec<usize> = (0..list.len()).map(|_| rng.random_range(0..labels.len())).collect();
    let (len, cycles) = cycles_within_budget(mother, max_len.max(4), 200_000);
    let lengths: Vec<usize> = cycles.iter().map(SymbolCycle::len).collect();
    let steps = cycle_steps(&cycles, &index);
    let coll = Collision::Generic { perms, invs, q1 };
    let (before, after) = greedy_labels(&steps, &lengths, list.len(), labels.len(), &coll, &mut assign);
    let mut rows: Vec<Vec<(u32, MatrixLabel)>> = vec![Vec::new(); mother.n_rows()];
    for (&(i, j), &a) in list.iter().zip(&assign) {
        rows[i].push((j as u32, labels[a].clone()));
    }
    let img = BinaryImage::from_labels(p, mother.n_cols(), rows)?;
    Ok((
        img,
        LabelReport {
            cycle_length: len,
            cycles: cycles.len(),
            colliding_before: before,
            colliding_after: after,
        },
    ))
}

/// A replacement block: one or two rows, each a simplex parity given by
/// 1-based positions. Wide rows carry positions for two symbols, the
/// second set offset by `q - 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimplexBlock {
    pub rows: Vec<Vec<u32>>,
    pub wide: bool,
}

/// Candidate replacement blocks for one field size.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockSet {
    p: usize,
}

pub fn build_block_set(ctx: &FieldContext) -> BlockSet {
    BlockSet { p: ctx.p() as usize }
}

impl BlockSet {
    pub fn new(p: usize) -> Self {
        BlockSet { p }
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// All three-point simplex parities `{a, b, a ^ b}`.
    pub fn lines(&self) -> impl Iterator<Item = [u32; 3]> {
        let q1 = (1u32 << self.p) - 1;
        (1..=q1).flat_map(move |a| {
            (a + 1..=q1).filter_map(move |b| {
                let c = a ^ b;
                (c > b).then_some([a, b, c])
            })
        })
    }

    /// Narrow blocks: pairs of distinct lines, or the single line when `p = 2`.
    pub fn blocks(&self) -> Box<dyn Iterator<Item = SimplexBlock> + '_> {
        let lines: Vec<[u32; 3]> = self.lines().collect();
        if lines.len() == 1 {
            return Box::new(std::iter::once(SimplexBlock {
                rows: vec![lines[0].to_vec()],
                wide: false,
            }));
        }
        Box::new((0..lines.len()).flat_map(move |i| {
            let lines = lines.clone();
            (i + 1..lines.len()).map(move |j| SimplexBlock {
                rows: vec![lines[i].to_vec(), lines[j].to_vec()],
                wide: false,
            })
        }))
    }

    /// A row is a simplex parity when its positions XOR to zero.
    pub fn is_valid_row(&self, row: &[u32], wide: bool) -> bool {
        let q1 = (1u32 << self.p) - 1;
        let limit = if wide { 2 * q1 } else { q1 };
        if row.is_empty() || row.iter().any(|&c| c == 0 || c > limit) {
            return false;
        }
        let mut sorted = row.to_vec();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return false;
        }
        let fold = |it: &mut dyn Iterator<Item = u32>| it.fold(0, |a, c| a ^ c);
        if wide {
            let a = fold(&mut row.iter().copied().filter(|&c| c <= q1));
            let b = fold(&mut row.iter().copied().filter(|&c| c > q1).map(|c| c - q1));
            a == 0 && b == 0
        } else {
            fold(&mut row.iter().copied()) == 0
        }
    }

    /// Checks every row and that no two rows share two positions.
    pub fn validate(&self, block: &SimplexBlock) -> Result<()> {
        if block.rows.is_empty() || block.rows.len() > 2 {
            return Err(Error::InvalidArgument("a block has one or two rows".into()));
        }
        for row in &block.rows {
            if !self.is_valid_row(row, block.wide) {
                return Err(Error::InvalidArgument(format!("{row:?} is not a simplex parity")));
            }
        }
        if block.rows.len() == 2 {
            let shared = block.rows[0].iter().filter(|c| block.rows[1].contains(c)).count();
            if shared > 1 {
                return Err(Error::InvalidArgument(format!(
                    "rows share {shared} positions and would form a 4-cycle"
                )));
            }
        }
        Ok(())
    }
}

/// Counters and log lines describing one construction.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstructionReport {
    pub p: usize,
    pub target_girth: usize,
    pub mother_girth: Girth,
    pub girth: Girth,
    pub girth_length_cycles: Option<u64>,
    pub extended_rows: usize,
    pub active_bits: usize,
    pub zeroed_rows: usize,
    pub row_additions: usize,
    pub replacement_rows: usize,
    pub labels: Option<LabelReport>,
    pub log: Vec<String>,
}

impl fmt::Display for ConstructionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "p: {}", self.p)?;
        writeln!(f, "q: {}", 1usize << self.p)?;
        writeln!(f, "target girth: {}", self.target_girth)?;
        writeln!(f, "mother girth: {}", self.mother_girth)?;
        writeln!(f, "girth: {}", self.girth)?;
        if let Some(c) = self.girth_length_cycles {
            writeln!(f, "girth-length cycles: {c}")?;
        }
        writeln!(f, "extended rows: {}", self.extended_rows)?;
        writeln!(f, "active bits (M_s): {}", self.active_bits)?;
        writeln!(f, "zeroed rows: {}", self.zeroed_rows)?;
        writeln!(f, "row additions: {}", self.row_additions)?;
        writeln!(f, "replacement rows: {}", self.replacement_rows)?;
        for line in &self.log {
            writeln!(f, "log: {line}")?;
        }
        Ok(())
    }
}

/// Mutable extended matrix during construction. The first `m(q-1)` slots
/// are Omega rows; replacement rows are appended.
struct Work {
    p: usize,
    q1: usize,
    m: usize,
    n_sym: usize,
    g_s: usize,
    rows: Vec<Vec<u32>>,
    tags: Vec<RowTag>,
    zeroed: Vec<bool>,
    pinned: Vec<bool>,
    col_rows: Vec<Vec<u32>>,
    phi: usize,
    log: Vec<String>,
    zero_count: usize,
    additions: usize,
    stamp: Vec<u32>,
    generation: u32,
}

impl Work {
    fn new(img: &BinaryImage, g_s: usize, phi: usize) -> Self {
        let p = img.p();
        let q1 = (1usize << p) - 1;
        let m = img.m();
        let n_sym = img.n();
        let mut rows = vec![Vec::new(); m * q1];
        let mut tags = Vec::with_capacity(m * q1);
        for i in 0..m {
            let perms: Vec<(usize, Vec<u32>)> = img
                .row_labels(i)
                .iter()
                .map(|(j, l)| (*j as usize, omega_permutation(l)))
                .collect();
            for r in 0..q1 {
                tags.push(RowTag::OmegaRow { check: i, index: r as u32 + 1 });
                rows[i * q1 + r] = perms.iter().map(|(j, pm)| (j * q1) as u32 + pm[r]).collect();
            }
        }
        let mut col_rows = vec![Vec::new(); n_sym * q1];
        for (r, row) in rows.iter().enumerate() {
            for &c in row {
                col_rows[c as usize].push(r as u32);
            }
        }
        let n_slots = rows.len();
        Work {
            p,
            q1,
            m,
            n_sym,
            g_s,
            rows,
            tags,
            zeroed: vec![false; n_slots],
            pinned: vec![false; n_slots],
            col_rows,
            phi,
            log: Vec::new(),
            zero_count: 0,
            additions: 0,
            stamp: vec![0; n_sym * q1],
            generation: 0,
        }
    }

    fn check_of(&self, slot: usize) -> usize {
        slot / self.q1
    }

    fn set_row(&mut self, slot: usize, new: Vec<u32>) {
        for &c in &self.rows[slot] {
            self.col_rows[c as usize].retain(|&r| r as usize != slot);
        }
        for &c in &new {
            self.col_rows[c as usize].push(slot as u32);
        }
        self.rows[slot] = new;
    }

    fn push_row(&mut self, row: Vec<u32>, tag: RowTag) {
        let slot = self.rows.len();
        for &c in &row {
            self.col_rows[c as usize].push(slot as u32);
        }
        self.rows.push(row);
        self.tags.push(tag);
        self.zeroed.push(false);
        self.pinned.push(true);
    }

    /// An Omega slot can be zeroed if its block row keeps rank `p` and at
    /// least `phi` rows afterwards.
    fn zeroable(&self, slot: usize) -> bool {
        if slot >= self.m * self.q1 || self.zeroed[slot] || self.pinned[slot] {
            return false;
        }
        let i = self.check_of(slot);
        let kept: Vec<u32> = (i * self.q1..(i + 1) * self.q1)
            .filter(|&s| s != slot && !self.zeroed[s])
            .map(|s| (s - i * self.q1 + 1) as u32)
            .collect();
        kept.len() >= self.phi && rank_of_masks(&kept) == self.p
    }

    fn zero(&mut self, slot: usize) {
        self.set_row(slot, Vec::new());
        self.zeroed[slot] = true;
        self.zero_count += 1;
    }

    fn block_perms(&self) -> BlockPerms {
        let mut bp = BlockPerms::new(self.q1);
        for (slot, tag) in self.tags.iter().enumerate() {
            if let RowTag::OmegaRow { check, index } = *tag {
                if self.zeroed[slot] {
                    continue;
                }
                for &c in &self.rows[slot] {
                    let c = c as usize;
                    bp.insert(check, c / self.q1, index - 1, (c % self.q1) as u32);
                }
            }
        }
        bp
    }

    fn slot_of(&self, check: usize, index: u32) -> usize {
        check * self.q1 + index as usize - 1
    }

    /// True if some pair of `cols` is within `hops` column-to-column steps.
    fn any_pair_close(&mut self, cols: &[u32], hops: usize) -> bool {
        if hops == 0 {
            return false;
        }
        for (k, &a) in cols.iter().enumerate() {
            if k + 1 == cols.len() {
                break;
            }
            self.generation += 1;
            let gen = self.generation;
            self.stamp[a as usize] = gen;
            let mut frontier = vec![a];
            for _ in 0..hops {
                let mut next = Vec::new();
                for &c in &frontier {
                    for &r in &self.col_rows[c as usize] {
                        for &c2 in &self.rows[r as usize] {
                            if self.stamp[c2 as usize] != gen {
                                self.stamp[c2 as usize] = gen;
                                next.push(c2);
                            }
                        }
                    }
                }
                frontier = next;
            }
            if cols[k + 1..].iter().any(|&b| self.stamp[b as usize] == gen) {
                return true;
            }
        }
        false
    }

    fn tanner(&self) -> TannerGraph {
        TannerGraph::from_matrix(&BitMatrix::from_sorted_rows(self.n_sym * self.q1, self.sorted_rows()))
    }

    fn sorted_rows(&self) -> Vec<Vec<u32>> {
        self.rows
            .iter()
            .map(|r| {
                let mut r = r.clone();
                r.sort_unstable();
                r
            })
            .collect()
    }

    /// Row-addition repair for weight-3 rows on length-4 bit cycles.
    fn row_additions(&mut self, budget: usize) -> Result<()> {
        let mother = self.current_mother();
        let perms = self.block_perms();
        let cycles = match graph::matrix_cycles(&mother, &perms, 4, budget) {
            Ok(c) => c,
            Err(_) => {
                self.log.push("row addition skipped: too many 4-cycles".into());
                return Ok(());
            }
        };
        let mut partners: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for mc in &cycles {
            for bc in &mc.bit_cycles {
                let a = self.slot_of(bc[0].0, bc[0].1);
                let b = self.slot_of(bc[1].0, bc[1].1);
                partners.entry(a).or_default().push(b);
                partners.entry(b).or_default().push(a);
            }
        }
        for (a, mut cands) in partners {
            if self.pinned[a] || self.zeroed[a] || self.rows[a].len() != 3 {
                continue;
            }
            cands.sort_unstable();
            cands.dedup();
            let mut options: Vec<(usize, usize)> = cands
                .into_iter()
                .filter(|&b| !self.pinned[b] && !self.zeroed[b])
                .map(|b| (xor_rows(&self.rows[a], &self.rows[b]).len(), b))
                .filter(|&(w, _)| w >= 2)
                .collect();
            options.sort_unstable();
            for (_, b) in options {
                // add the lighter row into the heavier one
                let (src, dst) = if self.rows[b].len() >= self.rows[a].len() { (a, b) } else { (b, a) };
                let sum = xor_rows(&self.rows[src], &self.rows[dst]);
                let old = self.rows[dst].clone();
                self.set_row(dst, Vec::new());
                let hops = usize::from(self.g_s >= 6);
                if self.any_pair_close(&sum, hops) {
                    self.set_row(dst, old);
                    continue;
                }
                self.set_row(dst, sum);
                let (RowTag::OmegaRow { check, index }, RowTag::OmegaRow { check: sc, index: si }) = (self.tags[dst], self.tags[src]) else {
                    unreachable!("only Omega rows take part");
                };
                self.tags[dst] = RowTag::RowAddition {
                    check,
                    index,
                    source_check: sc,
                    source_index: si,
                };
                self.pinned[dst] = true;
                self.pinned[src] = true;
                self.additions += 1;
                break;
            }
        }
        Ok(())
    }

    fn current_mother(&self) -> BitMatrix {
        let mut rows = vec![Vec::new(); self.m];
        for (slot, tag) in self.tags.iter().enumerate() {
            if let RowTag::OmegaRow { check, .. } = *tag {
                if !self.zeroed[slot] {
                    rows[check].extend(self.rows[slot].iter().map(|&c| c / self.q1 as u32));
                }
            }
        }
        for r in &mut rows {
            r.sort_unstable();
            r.dedup();
        }
        BitMatrix::from_sorted_rows(self.n_sym, rows)
    }

    /// Zeroes rows on bit cycles of matrix cycles shorter than `g_s`.
    fn zero_matrix_cycles(&mut self, budget: usize) -> Result<()> {
        let mother = self.current_mother();
        let perms = self.block_perms();
        let cycles = graph::matrix_cycles(&mother, &perms, self.g_s - 2, budget).map_err(|_| Error::GirthInfeasible {
            target: self.g_s,
            p: self.p as u32,
            reason: format!("more than {budget} symbol cycles shorter than the target"),
        })?;
        let q1 = self.q1;
        let mut bit: Vec<(usize, Vec<usize>)> = cycles
            .iter()
            .flat_map(|mc| {
                let len = mc.cycle.len();
                mc.bit_cycles
                    .iter()
                    .map(move |bc| (len, bc.iter().map(|&(c, r)| c * q1 + r as usize - 1).collect::<Vec<_>>()))
            })
            .collect();
        bit.sort_by_key(|(len, _)| *len);
        let mut freq: HashMap<usize, usize> = HashMap::new();
        for (_, slots) in &bit {
            for &s in slots {
                *freq.entry(s).or_insert(0) += 1;
            }
        }
        let total = bit.len();
        let mut unresolved = 0;
        for (_, slots) in &bit {
            if slots.iter().any(|&s| self.zeroed[s]) {
                continue;
            }
            let choice = slots
                .iter()
                .copied()
                .filter(|&s| self.zeroable(s))
                .max_by(|&a, &b| freq[&a].cmp(&freq[&b]).then(b.cmp(&a)));
            match choice {
                Some(s) => self.zero(s),
                None => unresolved += 1,
            }
        }
        self.log.push(format!(
            "{} symbol cycles shorter than {}, {total} bit cycles, {} rows zeroed, {unresolved} left for cleanup",
            cycles.len(),
            self.g_s,
            self.zero_count
        ));
        Ok(())
    }

    /// Repeatedly breaks any remaining cycle shorter than `g_s`.
    fn cleanup(&mut self) -> Result<()> {
        let mut rounds = 0;
        loop {
            let g = self.tanner();
            let Some(cycle) = g.find_cycle_below(self.g_s) else {
                break;
            };
            let slot = cycle
                .iter()
                .copied()
                .filter(|&v| v < g.n_checks() && self.zeroable(v))
                .max_by_key(|&v| (self.rows[v].len(), std::cmp::Reverse(v)));
            match slot {
                Some(s) => self.zero(s),
                None => {
                    return Err(Error::GirthInfeasible {
                        target: self.g_s,
                        p: self.p as u32,
                        reason: format!("a length-{} cycle has no removable row", cycle.len()),
                    })
                }
            }
            rounds += 1;
        }
        if rounds > 0 {
            self.log.push(format!("cleanup zeroed {rounds} more rows"));
        }
        Ok(())
    }

    fn active_weights(&self) -> Vec<usize> {
        (0..self.n_sym)
            .map(|j| (j * self.q1..(j + 1) * self.q1).filter(|&c| !self.col_rows[c].is_empty()).count())
            .collect()
    }

    /// Places simplex rows into the zeroed slots, deficit-first.
    fn fill_blocks(&mut self, blocks: &BlockSet, psi: usize, wide: bool, seed: u64) {
        let lines: Vec<[u32; 3]> = blocks.lines().collect();
        let mut slots = self.zero_count;
        if slots == 0 {
            return;
        }
        let hops = (self.g_s - 4) / 2;
        let mut placed_lines: Vec<Vec<[u32; 3]>> = vec![Vec::new(); self.n_sym];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(4);
        let mut placed = 0;

        let weights = self.active_weights();
        let mut deficit: Vec<(usize, usize)> = weights
            .iter()
            .enumerate()
            .filter(|&(_, &w)| w < psi)
            .map(|(j, &w)| (psi - w, j))
            .collect();
        deficit.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        for &(_, j) in &deficit {
            while slots > 0 && self.active_weights()[j] < psi {
                let base = (j * self.q1) as u32;
                let mut order: Vec<(usize, usize)> = lines
                    .iter()
                    .enumerate()
                    .map(|(k, l)| (l.iter().filter(|&&c| self.col_rows[(base + c - 1) as usize].is_empty()).count(), k))
                    .filter(|&(gain, _)| gain > 0)
                    .collect();
                order.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
                let mut done = false;
                for (_, k) in order {
                    if self.try_line(j, lines[k], &mut placed_lines, hops, None) {
                        slots -= 1;
                        placed += 1;
                        done = true;
                        break;
                    }
                }
                if !done {
                    break;
                }
            }
        }

        // remaining slots: one block per symbol per sweep while anything fits
        let mut progress = true;
        while slots > 0 && progress {
            progress = false;
            for j in 0..self.n_sym {
                if slots == 0 {
                    break;
                }
                let partner = wide.then(|| (j + 1) % self.n_sym).filter(|&k| k != j);
                let start = rng.random_range(0..lines.len());
                let mut in_block = 0;
                for t in 0..lines.len().min(64) {
                    let line = lines[(start + t) % lines.len()];
                    let extra = partner.map(|k| (k, lines[(start + 2 * t + 1) % lines.len()]));
                    if self.try_line(j, line, &mut placed_lines, hops, extra) {
                        slots -= 1;
                        placed += 1;
                        progress = true;
                        in_block += 1;
                        if in_block == 2 || slots == 0 || lines.len() == 1 {
                            break;
                        }
                    }
                }
            }
        }
        self.log.push(format!("placed {placed} replacement rows into {} zeroed slots", self.zero_count));
    }

    fn try_line(
        &mut self,
        j: usize,
        line: [u32; 3],
        placed: &mut [Vec<[u32; 3]>],
        hops: usize,
        partner: Option<(usize, [u32; 3])>,
    ) -> bool {
        if placed[j].iter().any(|l| l.iter().filter(|c| line.contains(c)).count() > 1) {
            return false;
        }
        let base = (j * self.q1) as u32;
        let mut cols: Vec<u32> = line.iter().map(|&c| base + c - 1).collect();
        if let Some((k, l2)) = partner {
            if placed[k].iter().any(|l| l.iter().filter(|c| l2.contains(c)).count() > 1) {
                return false;
            }
            let b2 = (k * self.q1) as u32;
            cols.extend(l2.iter().map(|&c| b2 + c - 1));
        }
        if self.any_pair_close(&cols, hops) {
            return false;
        }
        cols.sort_unstable();
        self.push_row(
            cols,
            RowTag::ReplacementBlock {
                symbol: j,
                partner: partner.map(|(k, _)| k),
            },
        );
        placed[j].push(line);
        if let Some((k, l2)) = partner {
            placed[k].push(l2);
        }
        true
    }

    /// Zeroes rows lying on several girth-length cycles while it stays legal.
    fn repair(&mut self, rounds: usize) -> (Option<u64>, Option<u64>) {
        let count = |w: &Work| {
            let r = graph::girth(&w.tanner(), w.g_s);
            match r.girth {
                Girth::Exact(g) if g == w.g_s => (r.short_cycle_counts.get(&g).copied(), r.edge_participation),
                _ => (None, Vec::new()),
            }
        };
        let (before, mut part) = count(self);
        let mut after = before;
        for _ in 0..rounds {
            if after.is_none() {
                break;
            }
            let g = self.tanner();
            let mut per_check = vec![0u64; g.n_checks()];
            for ((c, _), n) in g.edges().into_iter().zip(&part) {
                per_check[c] += n;
            }
            let best = (0..per_check.len())
                .filter(|&s| per_check[s] >= 4 && self.zeroable(s) && self.keeps_columns(s))
                .max_by_key(|&s| (per_check[s], std::cmp::Reverse(s)));
            let Some(s) = best else { break };
            self.zero(s);
            let (a, p) = count(self);
            after = a;
            part = p;
        }
        self.log.push(format!(
            "repair: girth-length cycles {} -> {}",
            before.map_or("none".into(), |c| c.to_string()),
            after.map_or("none".into(), |c| c.to_string())
        ));
        (before, after)
    }

    fn keeps_columns(&self, slot: usize) -> bool {
        self.rows[slot].iter().all(|&c| self.col_rows[c as usize].len() > 1)
    }

    fn finish(self, img: &BinaryImage, psi: usize) -> Result<(EPRMatrix, GeneratorSet, Girth, Option<u64>, Vec<String>, [usize; 3])> {
        let q1 = self.q1;
        let mask: Vec<bool> = self.col_rows.iter().map(|r| !r.is_empty()).collect();
        for j in 0..self.n_sym {
            let cols: Vec<u32> = (1..=q1 as u32).filter(|&c| mask[j * q1 + c as usize - 1]).collect();
            if cols.len() < psi || rank_of_masks(&cols) < self.p {
                return Err(Error::GirthInfeasible {
                    target: self.g_s,
                    p: self.p as u32,
                    reason: format!("symbol {j} keeps {} active bits, fewer than psi = {psi} or rank-deficient", cols.len()),
                });
            }
        }
        let g = self.tanner();
        let report = graph::girth(&g, self.g_s.max(4));
        let ok = match report.girth {
            Girth::Exact(x) => x >= self.g_s,
            _ => true,
        };
        if !ok {
            return Err(Error::GirthInfeasible {
                target: self.g_s,
                p: self.p as u32,
                reason: format!("final girth {}", report.girth),
            });
        }
        let girth_cycles = report.short_cycle_counts.values().next().copied();
        // compact: surviving Omega rows, then replacement rows
        let mut rows = Vec::new();
        let mut tags = Vec::new();
        let mut replacement = 0;
        for (slot, row) in self.sorted_rows().into_iter().enumerate() {
            if row.is_empty() {
                continue;
            }
            if matches!(self.tags[slot], RowTag::ReplacementBlock { .. }) {
                replacement += 1;
            }
            rows.push(row);
            tags.push(self.tags[slot]);
        }
        let epr = EPRMatrix::new(
            self.p,
            self.n_sym,
            BitMatrix::from_sorted_rows(self.n_sym * q1, rows),
            mask.clone(),
            tags,
        )?;
        let gens = (0..self.n_sym)
            .map(|j| GeneratorMatrix::from_mask(j, self.p, mask[j * q1..(j + 1) * q1].to_vec()))
            .collect::<Result<Vec<_>>>()?;
        let mut selectors = BTreeMap::new();
        for i in 0..self.m {
            let kept: Vec<u32> = (0..q1)
                .filter(|&r| {
                    let s = i * q1 + r;
                    !self.zeroed[s] && matches!(self.tags[s], RowTag::OmegaRow { .. })
                })
                .map(|r| r as u32 + 1)
                .collect();
            for (j, _) in img.row_labels(i) {
                selectors.insert((i, *j as usize), kept.clone());
            }
        }
        let gens = GeneratorSet::new(self.p, gens, selectors)?;
        let counts = [self.zero_count, self.additions, replacement];
        Ok((epr, gens, report.girth, girth_cycles, self.log, counts))
    }
}

fn xor_rows(a: &[u32], b: &[u32]) -> Vec<u32> {
    let mut out: Vec<u32> = a.iter().filter(|c| !b.contains(c)).chain(b.iter().filter(|c| !a.contains(c))).copied().collect();
    out.sort_unstable();
    out
}

/// Result of a construction.
#[derive(Debug, Clone)]
pub struct Construction {
    pub h: Option<NonBinaryMatrix>,
    pub img: BinaryImage,
    pub epr: EPRMatrix,
    pub gens: GeneratorSet,
    pub report: ConstructionReport,
}

fn build_work(img: &BinaryImage, cfg: &ConstructionConfig, blocks: &BlockSet) -> Result<Work> {
    let p = img.p();
    if blocks.p() != p {
        return Err(Error::DimensionMismatch("block set built for another field".into()));
    }
    let mut w = Work::new(img, cfg.target_girth, cfg.phi_for(p));
    w.row_additions(cfg.cycle_budget)?;
    w.zero_matrix_cycles(cfg.cycle_budget)?;
    w.cleanup()?;
    w.fill_blocks(blocks, cfg.psi_for(p), cfg.wide_blocks, cfg.seed);
    Ok(w)
}

fn assemble(w: Work, img: &BinaryImage, cfg: &ConstructionConfig, h: Option<NonBinaryMatrix>, labels: Option<LabelReport>) -> Result<Construction> {
    let p = img.p();
    let mother_girth = graph::girth(&TannerGraph::from_matrix(&img.mother()), 64).girth;
    let (epr, gens, girth, cycles, log, [zeroed, additions, replacement]) = w.finish(img, cfg.psi_for(p))?;
    let report = ConstructionReport {
        p,
        target_girth: cfg.target_girth,
        mother_girth,
        girth,
        girth_length_cycles: cycles,
        extended_rows: epr.matrix().n_rows(),
        active_bits: epr.active_len(),
        zeroed_rows: zeroed,
        row_additions: additions,
        replacement_rows: replacement,
        labels,
        log,
    };
    Ok(Construction {
        h,
        img: img.clone(),
        epr,
        gens,
        report,
    })
}

/// Builds the extended matrix for a fixed binary image.
pub fn epr_construct(img: &BinaryImage, cfg: &ConstructionConfig, blocks: &BlockSet) -> Result<Construction> {
    let w = build_work(img, cfg, blocks)?;
    assemble(w, img, cfg, None, None)
}

/// Outer loop: PEG mother, optimized labels, EPR construction, raising `p`
/// until the target girth is met.
pub fn optimize_code(cfg: &ConstructionConfig) -> Result<Construction> {
    cfg.validate()?;
    let mother = peg_mother(cfg)?;
    optimize_code_with_mother(cfg, &mother)
}

pub fn optimize_code_with_mother(cfg: &ConstructionConfig, mother: &BitMatrix) -> Result<Construction> {
    let mut attempts = Vec::new();
    for p in cfg.p..=cfg.max_p.min(16) {
        let q1 = (1usize << p) - 1;
        if mother.n_cols() * q1 > cfg.max_extended_len {
            attempts.push(format!("p = {p}: extended length {} over the limit", mother.n_cols() * q1));
            break;
        }
        let ctx = Arc::new(FieldContext::new(p as u32)?);
        let (h, lrep) = optimize_field_labels(
            mother,
            ctx.clone(),
            cfg.target_girth - 2,
            cfg.cycle_budget,
            cfg.seed.wrapping_add(p as u64),
        )?;
        let img = binary_image(&h);
        let blocks = build_block_set(&ctx);
        let pcfg = ConstructionConfig { p, ..cfg.clone() };
        let mut w = match build_work(&img, &pcfg, &blocks) {
            Ok(w) => w,
            Err(Error::GirthInfeasible { reason, .. }) => {
                attempts.push(format!("p = {p}: {reason}"));
                continue;
            }
            Err(e) => return Err(e),
        };
        w.repair(cfg.repair_rounds);
        let mut built = match assemble(w, &img, &pcfg, Some(h), Some(lrep)) {
            Ok(b) => b,
            Err(Error::GirthInfeasible { reason, .. }) => {
                attempts.push(format!("p = {p}: {reason}"));
                continue;
            }
            Err(e) => return Err(e),
        };
        if let Some(tb) = cfg.t_b {
            if built.epr.active_len() < crate::sim::threshold::GATE_MIN_BITS {
                built.report.log.push("threshold gate skipped for a short code".into());
            } else {
                let est = crate::sim::threshold::gate_estimate(&built.epr, cfg.seed)?;
                built.report.log.push(format!("estimated threshold {est:.3} dB against ceiling {tb:.3} dB"));
                if est > tb {
                    attempts.push(format!("p = {p}: estimated threshold {est:.3} dB exceeds {tb:.3} dB"));
                    continue;
                }
            }
        }
        let mut log = attempts;
        log.append(&mut built.report.log);
        built.report.log = log;
        return Ok(built);
    }
    Err(Error::Exhausted(format!(
        "no p in {}..={} reached girth {}: {}",
        cfg.p,
        cfg.max_p,
        cfg.target_girth,
        attempts.join("; ")
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::representation::build_omega;

    fn ctx(p: u32) -> Arc<FieldContext> {
        Arc::new(FieldContext::new(p).unwrap())
    }

    #[test]
    fn peg_small_regular() {
        let cfg = ConstructionConfig::regular(12, 6, 3, 6, 2, 6, 5);
        let h = peg_mother(&cfg).unwrap();
        assert!(h.row_weights().iter().all(|&w| w == 6));
        assert!(h.col_weights().iter().all(|&w| w == 3));
        assert_eq!(h, peg_mother(&cfg).unwrap());
        let g = graph::girth(&TannerGraph::from_matrix(&h), 20).girth;
        assert!(g.at_least(4));
    }

    #[test]
    fn peg_medium_has_girth_six() {
        for seed in 0..6 {
            let cfg = ConstructionConfig::regular(60, 30, 3, 6, 2, 6, seed);
            let h = peg_mother(&cfg).unwrap();
            assert!(h.row_weights().iter().all(|&w| w == 6));
            assert!(h.col_weights().iter().all(|&w| w == 3));
            let g = graph::girth(&TannerGraph::from_matrix(&h), 20).girth;
            assert!(g.at_least(6), "{g}");
        }
    }

    #[test]
    fn peg_rejects_bad_degrees() {
        let cfg = ConstructionConfig::regular(12, 6, 3, 5, 2, 6, 5);
        assert!(matches!(peg_mother(&cfg), Err(Error::InfeasibleDegrees(_))));
    }

    #[test]
    fn peg_irregular_distribution() {
        let mut cfg = ConstructionConfig::regular(40, 20, 3, 6, 2, 6, 5);
        cfg.degrees = DegreeSpec::Distribution {
            lambda: BTreeMap::from([(2, 0.4), (3, 0.6)]),
            rho: BTreeMap::from([(5, 1.0)]),
        };
        let h = peg_mother(&cfg).unwrap();
        assert_eq!(h.row_weights().iter().sum::<usize>(), h.col_weights().iter().sum::<usize>());
        assert!(h.col_weights().iter().all(|&w| w == 2 || w == 3));
    }

    #[test]
    fn field_pairs_all_disjoint() {
        for p in [2u32, 3] {
            let c = FieldContext::new(p).unwrap();
            let labels = c.nonzero_companions();
            for a in 0..labels.len() {
                for b in a + 1..labels.len() {
                    assert!(graph::labels_disjoint(&labels[a], &labels[b]));
                }
            }
            assert_eq!(graph::max_disjoint_subset(&labels, 64), c.order());
        }
    }

    #[test]
    fn optimized_four_cycle_has_no_bit_cycle() {
        let mother = BitMatrix::from_strs(&["11", "11"]);
        for seed in 0..10 {
            let img = optimize_labels(&mother, ctx(3), seed).unwrap();
            let perms = BlockPerms::from_extended(&build_omega(&img));
            let mc = graph::matrix_cycles(&mother, &perms, 4, 10).unwrap();
            assert!(!mc[0].bit_cycle_present());
        }
    }

    #[test]
    fn field_and_generic_collision_agree() {
        let c = ctx(3);
        let labels: Vec<MatrixLabel> = (0..7).map(|e| c.companion_label(c.exp(e))).collect();
        let perms: Vec<Vec<u32>> = labels.iter().map(omega_permutation).collect();
        let invs: Vec<Vec<u32>> = perms
            .iter()
            .map(|pm| {
                let mut inv = vec![0; 7];
                for (r, &x) in pm.iter().enumerate() {
                    inv[x as usize] = r as u32;
                }
                inv
            })
            .collect();
        let field = Collision::Field { q1: 7 };
        let generic = Collision::Generic { perms, invs, q1: 7 };
        let steps = [(0, 1), (2, 3)];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..500 {
            let a: Vec<usize> = (0..4).map(|_| rng.random_range(0..7)).collect();
            assert_eq!(field.collides(&steps, &a), generic.collides(&steps, &a));
        }
    }

    #[test]
    fn single_label_set_rejected() {
        let c = FieldContext::new(3).unwrap();
        let mother = BitMatrix::from_strs(&["11", "11"]);
        let res = optimize_label_set(&mother, 3, &[c.companion_label(3)], 4, 0);
        assert!(matches!(res, Err(Error::DegenerateLabels(_))));
    }

    #[test]
    fn block_set_rules() {
        let bs = BlockSet::new(2);
        assert!(bs.is_valid_row(&[1, 2, 3], false));
        assert_eq!(bs.blocks().count(), 1);
        let same = SimplexBlock {
            rows: vec![vec![1, 2, 3], vec![1, 2, 3]],
            wide: false,
        };
        assert!(bs.validate(&same).is_err());
        let bs3 = BlockSet::new(3);
        let ok = SimplexBlock {
            rows: vec![vec![1, 2, 3], vec![4, 5, 1]],
            wide: false,
        };
        assert!(bs3.validate(&ok).is_ok());
        assert_eq!(bs3.lines().count(), 7);
        for b in bs3.blocks() {
            bs3.validate(&b).unwrap();
        }
        assert!(!bs3.is_valid_row(&[1, 2, 4], false));
        assert!(bs3.is_valid_row(&[1, 2, 3, 8, 9, 10], true));
    }

    #[test]
    fn cycle_free_mother_keeps_omega() {
        let mother = BitMatrix::from_strs(&["1100", "0111", "0001"]);
        let img = optimize_labels(&mother, ctx(3), 1).unwrap();
        let cfg = ConstructionConfig::regular(4, 3, 1, 1, 3, 12, 0);
        let out = epr_construct(&img, &cfg, &BlockSet::new(3)).unwrap();
        let omega = build_omega(&img);
        assert_eq!(out.epr.matrix(), omega.matrix());
        assert_eq!(out.report.zeroed_rows, 0);
        assert_eq!(out.report.replacement_rows, 0);
        assert_eq!(out.epr.active_len(), 28);
    }

    #[test]
    fn four_cycle_removed_at_bit_level() {
        // same label everywhere forces bit cycles that must be zeroed
        let c = FieldContext::new(3).unwrap();
        let l = c.companion_label(1);
        let rows = vec![
            vec![(0, l.clone()), (1, l.clone()), (2, l.clone()), (3, l.clone())],
            vec![(0, l.clone()), (1, l.clone()), (4, l.clone()), (5, l.clone())],
        ];
        let img = BinaryImage::from_labels(3, 6, rows).unwrap();
        let cfg = ConstructionConfig::regular(6, 2, 1, 1, 3, 6, 0);
        let out = epr_construct(&img, &cfg, &BlockSet::new(3)).unwrap();
        assert!(out.report.zeroed_rows > 0);
        assert!(out.report.girth.at_least(6));
        assert!(out.gens.min_weight() >= 4);
    }

    #[test]
    fn weight_three_rows_are_added() {
        // checks of weight 3 sharing two symbols with equal labels
        let c = FieldContext::new(2).unwrap();
        let l = c.companion_label(1);
        let rows = vec![
            vec![(0, l.clone()), (1, l.clone()), (2, l.clone())],
            vec![(0, l.clone()), (1, l.clone()), (3, l.clone())],
        ];
        let img = BinaryImage::from_labels(2, 4, rows).unwrap();
        let mut w = Work::new(&img, 6, 2);
        w.row_additions(100).unwrap();
        assert!(w.additions > 0);
        for (row, tag) in w.rows.iter().zip(&w.tags) {
            if matches!(tag, RowTag::RowAddition { .. }) {
                assert!(row.len() >= 2);
            }
        }
    }

    #[test]
    fn small_optimize_code() {
        let cfg = ConstructionConfig::regular(24, 12, 3, 6, 3, 6, 11);
        let out = optimize_code(&cfg).unwrap();
        assert!(out.report.girth.at_least(6));
        assert!(out.gens.min_weight() >= 4);
    }

    #[test]
    fn impossible_girth_exhausts() {
        let mut cfg = ConstructionConfig::regular(20, 10, 3, 6, 3, 20, 0);
        cfg.cycle_budget = 20_000;
        assert!(matches!(optimize_code(&cfg), Err(Error::Exhausted(_))));
    }
}
