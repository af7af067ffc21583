//! Item-graph construction and symmetric normalization.
//!
//! Three builders produce a weighted undirected item graph:
//!
//! - co-occurrence over interaction sequences within a sliding window,
//!   weighting pairs either uniformly (`frequency`) or by inverse hop
//!   distance (`distance`);
//! - shared category membership (unit weights);
//! - k-nearest-neighbour search over teacher embeddings under cosine
//!   distance with a Gaussian kernel.
//!
//! All builders return a [`SparseGraph`] holding the raw adjacency `A`, the
//! weighted degree vector, and the symmetric normalization
//! `A~ = D^{-1/2} A D^{-1/2}`. Nodes with zero degree would make the
//! normalization undefined, so a unit self-loop is injected for every
//! isolated node before degrees are computed; the spectrum of `A~` then stays
//! inside [-1, 1] and each self-loop row is an exact identity row.
//!
//! Construction is deterministic: ties in neighbour selection break by
//! ascending node index, and accumulation happens in ordered maps.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Result, SevoError};
use crate::sparse::{CsrMatrix, DenseMatrix, SYMMETRY_TOL};

/// Interaction sequences grouped per user, each sorted by timestamp.
#[derive(Debug, Clone)]
pub struct InteractionLog {
    user_sequences: BTreeMap<u64, Vec<usize>>,
    n_items: usize,
}

impl InteractionLog {
    /// Wraps pre-grouped sequences. Every item id must be below `n_items`
    /// and every sequence must be non-empty.
    pub fn new(user_sequences: BTreeMap<u64, Vec<usize>>, n_items: usize) -> Result<Self> {
        for (user, seq) in &user_sequences {
            if seq.is_empty() {
                return Err(SevoError::Validation(format!(
                    "user {user} has an empty sequence"
                )));
            }
            if let Some(&bad) = seq.iter().find(|&&i| i >= n_items) {
                return Err(SevoError::Validation(format!(
                    "user {user} references item {bad}, but n_items = {n_items}"
                )));
            }
        }
        Ok(InteractionLog {
            user_sequences,
            n_items,
        })
    }

    /// Parses tab-separated `user item timestamp` lines. Interactions are
    /// grouped per user and stably sorted by timestamp, so same-timestamp
    /// rows keep file order. Item ids are used as-is; `n_items` becomes
    /// `max id + 1`. Blank lines are skipped.
    pub fn from_tsv<R: BufRead>(reader: R) -> Result<Self> {
        let mut rows: Vec<(u64, usize, i64)> = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            let mut parts = trimmed.split('\t');
            fn parse<'a>(field: Option<&'a str>, name: &str, line: usize) -> Result<&'a str> {
                field.ok_or_else(|| SevoError::Parse {
                    line,
                    message: format!("missing {name} field"),
                })
            }
            let user: u64 = parse(parts.next(), "user", idx + 1)?
                .parse()
                .map_err(|e| SevoError::Parse {
                    line: idx + 1,
                    message: format!("bad user id: {e}"),
                })?;
            let item: usize = parse(parts.next(), "item", idx + 1)?
                .parse()
                .map_err(|e| SevoError::Parse {
                    line: idx + 1,
                    message: format!("bad item id: {e}"),
                })?;
            let ts: i64 = parse(parts.next(), "timestamp", idx + 1)?
                .parse()
                .map_err(|e| SevoError::Parse {
                    line: idx + 1,
                    message: format!("bad timestamp: {e}"),
                })?;
            if parts.next().is_some() {
                return Err(SevoError::Parse {
                    line: idx + 1,
                    message: "expected exactly 3 tab-separated fields".into(),
                });
            }
            rows.push((user, item, ts));
        }
        if rows.is_empty() {
            return Err(SevoError::Validation(
                "interaction file contains no rows".into(),
            ));
        }
        let n_items = rows.iter().map(|r| r.1).max().unwrap() + 1;
        let mut grouped: BTreeMap<u64, Vec<(usize, i64)>> = BTreeMap::new();
        for (user, item, ts) in rows {
            grouped.entry(user).or_default().push((item, ts));
        }
        let mut user_sequences = BTreeMap::new();
        for (user, mut pairs) in grouped {
            pairs.sort_by_key(|&(_, ts)| ts);
            user_sequences.insert(user, pairs.into_iter().map(|(i, _)| i).collect());
        }
        InteractionLog::new(user_sequences, n_items)
    }

    /// Drops users whose sequence is shorter than `min_len`.
    pub fn filter_min_len(self, min_len: usize) -> InteractionLog {
        let user_sequences = self
            .user_sequences
            .into_iter()
            .filter(|(_, seq)| seq.len() >= min_len)
            .collect();
        InteractionLog {
            user_sequences,
            n_items: self.n_items,
        }
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn n_users(&self) -> usize {
        self.user_sequences.len()
    }

    pub fn n_interactions(&self) -> usize {
        self.user_sequences.values().map(|s| s.len()).sum()
    }

    pub fn sequences(&self) -> &BTreeMap<u64, Vec<usize>> {
        &self.user_sequences
    }
}

/// Which end of each sequence the window keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SequenceSlice {
    /// Keep the first `window` interactions.
    FirstK,
    /// Keep the last `window` interactions.
    LastK,
}

/// How a co-occurring pair at hop distance `h` is weighted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EdgeWeighting {
    /// Every pair inside the walk contributes 1.
    Frequency,
    /// A pair at hop distance `h` contributes `1 / h`.
    Distance,
}

/// Parameters of the sequence co-occurrence builder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimilarityConfig {
    /// Slice length `K`; `None` keeps whole sequences.
    pub window: Option<usize>,
    /// Which end of the sequence the slice keeps.
    pub slice: SequenceSlice,
    /// Maximum hop distance `H >= 1` between paired items.
    pub max_walk: usize,
    /// Pair weighting scheme.
    pub weighting: EdgeWeighting,
}

impl Default for SimilarityConfig {
    fn default() -> Self {
        SimilarityConfig {
            window: None,
            slice: SequenceSlice::LastK,
            max_walk: 1,
            weighting: EdgeWeighting::Frequency,
        }
    }
}

impl SimilarityConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(k) = self.window {
            if k == 0 {
                return Err(SevoError::Validation("window must be >= 1".into()));
            }
        }
        if self.max_walk == 0 {
            return Err(SevoError::Validation("max_walk must be >= 1".into()));
        }
        Ok(())
    }
}

/// Parameters of the embedding k-nearest-neighbour builder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnGraphConfig {
    /// Neighbours kept per node (ties break by ascending node index).
    pub k_neighbors: usize,
    /// Gaussian kernel bandwidth `tau > 0`.
    pub bandwidth: f64,
}

impl KnnGraphConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_neighbors == 0 {
            return Err(SevoError::Validation("k_neighbors must be >= 1".into()));
        }
        if !(self.bandwidth > 0.0) || !self.bandwidth.is_finite() {
            return Err(SevoError::Validation(format!(
                "bandwidth must be a positive finite number, got {}",
                self.bandwidth
            )));
        }
        Ok(())
    }
}

/// Undirected weighted graph with its symmetric normalization.
#[derive(Debug, Clone)]
pub struct SparseGraph {
    adjacency: CsrMatrix,
    degrees: Vec<f64>,
    normalized: CsrMatrix,
}

impl SparseGraph {
    /// Validates `adjacency` (square, symmetric within [`SYMMETRY_TOL`],
    /// non-negative weights), injects a unit self-loop on every zero-degree
    /// node, and computes `D^{-1/2} A D^{-1/2}`. Degrees are recorded after
    /// self-loop injection.
    pub fn normalize(adjacency: CsrMatrix) -> Result<Self> {
        if adjacency.n_rows() != adjacency.n_cols() {
            return Err(SevoError::ShapeMismatch(format!(
                "adjacency must be square, got {}x{}",
                adjacency.n_rows(),
                adjacency.n_cols()
            )));
        }
        let asym = adjacency.max_asymmetry();
        if asym > SYMMETRY_TOL {
            return Err(SevoError::Asymmetric { max_diff: asym });
        }
        if let Some((i, j, v)) = adjacency.iter().find(|&(_, _, v)| v < 0.0) {
            return Err(SevoError::Validation(format!(
                "negative edge weight {v} at ({i}, {j})"
            )));
        }
        let n = adjacency.n_rows();
        let mut degrees = vec![0.0f64; n];
        for (i, _, v) in adjacency.iter() {
            degrees[i] += v;
        }
        let isolated: Vec<usize> = (0..n).filter(|&i| degrees[i] == 0.0).collect();
        let adjacency = if isolated.is_empty() {
            adjacency
        } else {
            let mut triplets: Vec<(usize, usize, f64)> = adjacency.iter().collect();
            for &i in &isolated {
                triplets.push((i, i, 1.0));
                degrees[i] = 1.0;
            }
            CsrMatrix::from_triplets(n, n, &triplets)?
        };
        let inv_sqrt: Vec<f64> = degrees.iter().map(|d| 1.0 / d.sqrt()).collect();
        let norm_triplets: Vec<(usize, usize, f64)> = adjacency
            .iter()
            .map(|(i, j, v)| (i, j, v * inv_sqrt[i] * inv_sqrt[j]))
            .collect();
        let normalized = CsrMatrix::from_triplets(n, n, &norm_triplets)?;
        Ok(SparseGraph {
            adjacency,
            degrees,
            normalized,
        })
    }

    /// Graph of `n` nodes and no edges; after self-loop injection its
    /// normalized adjacency is the identity, so transforms through it are
    /// identity maps.
    pub fn isolated(n: usize) -> Self {
        SparseGraph {
            adjacency: CsrMatrix::identity(n),
            degrees: vec![1.0; n],
            normalized: CsrMatrix::identity(n),
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.adjacency.n_rows()
    }

    /// Raw adjacency after self-loop injection.
    pub fn adjacency(&self) -> &CsrMatrix {
        &self.adjacency
    }

    /// Weighted degrees after self-loop injection.
    pub fn degrees(&self) -> &[f64] {
        &self.degrees
    }

    /// Symmetric normalization `D^{-1/2} A D^{-1/2}`.
    pub fn normalized(&self) -> &CsrMatrix {
        &self.normalized
    }
}

/// Summary statistics of an adjacency matrix, for logging and sweeps.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphStats {
    pub n_nodes: usize,
    /// Stored entries, counting both directions of each edge.
    pub nnz: usize,
    /// Undirected edge count excluding self-loops.
    pub n_edges: usize,
    pub n_self_loops: usize,
    pub n_isolated: usize,
    pub mean_weighted_degree: f64,
    pub max_weighted_degree: f64,
    /// Neighbor count (self-loops excluded) -> number of such nodes.
    pub degree_histogram: BTreeMap<usize, usize>,
}

/// Computes [`GraphStats`] for a symmetric adjacency matrix.
pub fn adjacency_stats(a: &CsrMatrix) -> GraphStats {
    let n = a.n_rows();
    let mut degrees = vec![0.0f64; n];
    let mut neighbors = vec![0usize; n];
    let mut off_diag = 0usize;
    let mut self_loops = 0usize;
    for (i, j, v) in a.iter() {
        degrees[i] += v;
        if i == j {
            self_loops += 1;
        } else {
            neighbors[i] += 1;
            if i < j {
                off_diag += 1;
            }
        }
    }
    let n_isolated = degrees.iter().filter(|&&d| d == 0.0).count();
    let mean = if n == 0 {
        0.0
    } else {
        degrees.iter().sum::<f64>() / n as f64
    };
    let max = degrees.iter().cloned().fold(0.0f64, f64::max);
    let mut degree_histogram = BTreeMap::new();
    for &d in &neighbors {
        *degree_histogram.entry(d).or_insert(0) += 1;
    }
    GraphStats {
        n_nodes: n,
        nnz: a.nnz(),
        n_edges: off_diag,
        n_self_loops: self_loops,
        n_isolated,
        mean_weighted_degree: mean,
        max_weighted_degree: max,
        degree_histogram,
    }
}

/// Builds the co-occurrence adjacency from interaction sequences.
///
/// Each sequence is first sliced to its first or last `window` interactions.
/// Within the slice, every ordered position pair `(i, j)` with hop distance
/// `h = j - i <= max_walk` contributes weight 1 (`frequency`) or `1/h`
/// (`distance`) to both `A[s_i][s_j]` and `A[s_j][s_i]`. Pairs of equal
/// items (repeats in a sequence) would land on the diagonal and are dropped;
/// self-loops enter only through the isolated-node rule in
/// [`SparseGraph::normalize`].
pub fn build_from_sequences(
    log: &InteractionLog,
    config: &SimilarityConfig,
) -> Result<SparseGraph> {
    config.validate()?;
    let n = log.n_items();
    let mut weights: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for seq in log.sequences().values() {
        let sliced: &[usize] = match config.window {
            None => seq,
            Some(k) => {
                let k = k.min(seq.len());
                match config.slice {
                    SequenceSlice::FirstK => &seq[..k],
                    SequenceSlice::LastK => &seq[seq.len() - k..],
                }
            }
        };
        for i in 0..sliced.len().saturating_sub(1) {
            let upper = (i + config.max_walk + 1).min(sliced.len());
            for (h, j) in (i + 1..upper).enumerate() {
                let hop = h + 1;
                let (a, b) = (sliced[i], sliced[j]);
                if a == b {
                    continue;
                }
                let w = match config.weighting {
                    EdgeWeighting::Frequency => 1.0,
                    EdgeWeighting::Distance => 1.0 / hop as f64,
                };
                *weights.entry((a, b)).or_insert(0.0) += w;
                *weights.entry((b, a)).or_insert(0.0) += w;
            }
        }
    }
    let triplets: Vec<(usize, usize, f64)> =
        weights.into_iter().map(|((i, j), v)| (i, j, v)).collect();
    SparseGraph::normalize(CsrMatrix::from_triplets(n, n, &triplets)?)
}

/// Builds the shared-category adjacency: `A[i][j] = 1` exactly when `i != j`
/// and the two items share at least one category id. Items absent from
/// `labels` have no categories.
pub fn build_from_categories(
    labels: &BTreeMap<usize, BTreeSet<usize>>,
    n_items: usize,
) -> Result<SparseGraph> {
    if let Some((&bad, _)) = labels.iter().find(|(&i, _)| i >= n_items) {
        return Err(SevoError::Validation(format!(
            "label references item {bad}, but n_items = {n_items}"
        )));
    }
    let mut by_category: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (&item, cats) in labels {
        for &c in cats {
            by_category.entry(c).or_default().push(item);
        }
    }
    let mut pairs: BTreeSet<(usize, usize)> = BTreeSet::new();
    for members in by_category.values() {
        for (a_idx, &a) in members.iter().enumerate() {
            for &b in &members[a_idx + 1..] {
                if a != b {
                    pairs.insert((a.min(b), a.max(b)));
                }
            }
        }
    }
    let mut triplets = Vec::with_capacity(pairs.len() * 2);
    for (i, j) in pairs {
        triplets.push((i, j, 1.0));
        triplets.push((j, i, 1.0));
    }
    SparseGraph::normalize(CsrMatrix::from_triplets(n_items, n_items, &triplets)?)
}

/// Builds a k-nearest-neighbour graph over teacher embeddings.
///
/// Distance is `d_ij = 2 - 2 cos(e_i, e_j)`; each node selects its
/// `k_neighbors` nearest other nodes (ties by ascending index), and a
/// selected pair receives kernel weight `exp(-d_ij / bandwidth)` from each
/// side that selected it, so mutually selected pairs carry twice the kernel
/// weight. The result is symmetric by construction.
pub fn build_knn_from_embeddings(
    teacher: &DenseMatrix,
    config: &KnnGraphConfig,
) -> Result<SparseGraph> {
    config.validate()?;
    let n = teacher.rows();
    if n < 2 {
        return Err(SevoError::Validation(format!(
            "knn graph needs at least 2 nodes, got {n}"
        )));
    }
    if config.k_neighbors > n - 1 {
        return Err(SevoError::Validation(format!(
            "k_neighbors = {} but only {} candidate neighbours exist",
            config.k_neighbors,
            n - 1
        )));
    }
    let norms: Vec<f64> = (0..n)
        .map(|i| teacher.row(i).iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    if let Some(i) = norms.iter().position(|&v| v == 0.0) {
        return Err(SevoError::Validation(format!(
            "embedding row {i} has zero norm; cosine distance undefined"
        )));
    }
    let cosine_distance = |i: usize, j: usize| -> f64 {
        let dot: f64 = teacher
            .row(i)
            .iter()
            .zip(teacher.row(j))
            .map(|(a, b)| a * b)
            .sum();
        2.0 - 2.0 * dot / (norms[i] * norms[j])
    };
    let mut weights: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for i in 0..n {
        let mut candidates: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| (cosine_distance(i, j), j))
            .collect();
        candidates.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
        for &(d, j) in candidates.iter().take(config.k_neighbors) {
            let w = (-d / config.bandwidth).exp();
            *weights.entry((i, j)).or_insert(0.0) += w;
            *weights.entry((j, i)).or_insert(0.0) += w;
        }
    }
    let triplets: Vec<(usize, usize, f64)> =
        weights.into_iter().map(|((i, j), v)| (i, j, v)).collect();
    SparseGraph::normalize(CsrMatrix::from_triplets(n, n, &triplets)?)
}

/// Writes a symmetric adjacency in the plain-text triplet format: a header
/// line `n nnz`, then one `i j w` line per stored upper-triangle entry
/// (`i <= j`). Weights use the shortest round-tripping decimal form.
pub fn write_graph<W: Write>(mut w: W, adjacency: &CsrMatrix) -> Result<()> {
    if adjacency.n_rows() != adjacency.n_cols() {
        return Err(SevoError::ShapeMismatch(
            "graph file stores square matrices only".into(),
        ));
    }
    let asym = adjacency.max_asymmetry();
    if asym > SYMMETRY_TOL {
        return Err(SevoError::Asymmetric { max_diff: asym });
    }
    let upper: Vec<(usize, usize, f64)> =
        adjacency.iter().filter(|&(i, j, _)| i <= j).collect();
    writeln!(w, "{} {}", adjacency.n_rows(), upper.len())?;
    for (i, j, v) in upper {
        writeln!(w, "{i} {j} {v}")?;
    }
    Ok(())
}

/// Reads the triplet format written by [`write_graph`], mirroring each
/// off-diagonal entry. The caller normalizes the result.
pub fn read_graph<R: BufRead>(reader: R) -> Result<CsrMatrix> {
    let mut lines = reader.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| SevoError::Parse {
        line: 1,
        message: "empty graph file".into(),
    })?;
    let header = header?;
    let mut head = header.split_whitespace();
    let n: usize = head
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| SevoError::Parse {
            line: 1,
            message: "header must be `n nnz`".into(),
        })?;
    let nnz: usize = head
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| SevoError::Parse {
            line: 1,
            message: "header must be `n nnz`".into(),
        })?;
    let mut triplets: Vec<(usize, usize, f64)> = Vec::with_capacity(nnz * 2);
    let mut seen = 0usize;
    for (idx, line) in lines {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let mut parts = trimmed.split_whitespace();
        let mut field = |name: &str| -> Result<&str> {
            parts.next().ok_or_else(|| SevoError::Parse {
                line: idx + 1,
                message: format!("missing {name}"),
            })
        };
        let i: usize = field("row")?.parse().map_err(|e| SevoError::Parse {
            line: idx + 1,
            message: format!("bad row index: {e}"),
        })?;
        let j: usize = field("col")?.parse().map_err(|e| SevoError::Parse {
            line: idx + 1,
            message: format!("bad col index: {e}"),
        })?;
        let v: f64 = field("weight")?.parse().map_err(|e| SevoError::Parse {
            line: idx + 1,
            message: format!("bad weight: {e}"),
        })?;
        if i > j {
            return Err(SevoError::Parse {
                line: idx + 1,
                message: format!("entry ({i}, {j}) is below the diagonal; store i <= j"),
            });
        }
        if i >= n || j >= n {
            return Err(SevoError::Parse {
                line: idx + 1,
                message: format!("entry ({i}, {j}) out of range for n = {n}"),
            });
        }
        if !v.is_finite() {
            return Err(SevoError::Parse {
                line: idx + 1,
                message: "non-finite weight".into(),
            });
        }
        triplets.push((i, j, v));
        if i != j {
            triplets.push((j, i, v));
        }
        seen += 1;
    }
    if seen != nnz {
        return Err(SevoError::Incompatible(format!(
            "header promises {nnz} entries, file contains {seen}"
        )));
    }
    CsrMatrix::from_triplets(n, n, &triplets)
}
