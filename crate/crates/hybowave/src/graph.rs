//! Graph ingestion, edge splitting, negative sampling, and the self-loop
//! random-walk matrix `P = D^-1 (A + I)`.
//!
//! Graphs are undirected, unweighted, with contiguous 0-based node indices
//! assigned in first-appearance order. Edges are stored canonically as
//! `(min, max)` pairs. All sampling takes an explicit seed and uses ChaCha20,
//! a documented, platform-independent generator, so splits and negative draws
//! are bit-reproducible.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Train/validation/test fractions used throughout: 85% / 5% / 10%.
pub const SPLIT_FRACTIONS: (f64, f64, f64) = (0.85, 0.05, 0.10);

/// Compressed sparse row matrix with `f64` values.
#[derive(Debug, Clone)]
pub struct Csr {
    pub n_rows: usize,
    pub n_cols: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub data: Vec<f64>,
}

impl Csr {
    /// Sparse-dense product `self * x`, accumulating each row in index order
    /// so results are deterministic.
    pub fn spmm(&self, x: &Array2<f64>) -> Array2<f64> {
        assert_eq!(self.n_cols, x.nrows(), "spmm dimension mismatch");
        let d = x.ncols();
        let mut out = Array2::zeros((self.n_rows, d));
        for r in 0..self.n_rows {
            for k in self.indptr[r]..self.indptr[r + 1] {
                let col = self.indices[k];
                let v = self.data[k];
                for j in 0..d {
                    out[[r, j]] += v * x[[col, j]];
                }
            }
        }
        out
    }

    /// Transposed copy with sorted column indices per row.
    pub fn transpose(&self) -> Csr {
        let nnz = self.indices.len();
        let mut counts = vec![0usize; self.n_cols + 1];
        for &c in &self.indices {
            counts[c + 1] += 1;
        }
        for i in 0..self.n_cols {
            counts[i + 1] += counts[i];
        }
        let indptr = counts.clone();
        let mut indices = vec![0usize; nnz];
        let mut data = vec![0f64; nnz];
        let mut next = counts;
        for r in 0..self.n_rows {
            for k in self.indptr[r]..self.indptr[r + 1] {
                let c = self.indices[k];
                let slot = next[c];
                next[c] += 1;
                indices[slot] = r;
                data[slot] = self.data[k];
            }
        }
        Csr {
            n_rows: self.n_cols,
            n_cols: self.n_rows,
            indptr,
            indices,
            data,
        }
    }

    /// Dense copy, for small oracles and tests.
    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.n_rows, self.n_cols));
        for r in 0..self.n_rows {
            for k in self.indptr[r]..self.indptr[r + 1] {
                out[[r, self.indices[k]]] = self.data[k];
            }
        }
        out
    }
}

/// Immutable undirected graph with CSR adjacency and a label table.
#[derive(Debug, Clone)]
pub struct Graph {
    num_nodes: usize,
    edges: Vec<(u32, u32)>,
    edge_set: HashSet<(u32, u32)>,
    adjacency: Csr,
    degrees: Vec<usize>,
    labels: Vec<String>,
    label_index: HashMap<String, u32>,
}

impl Graph {
    /// Builds a graph from a label table and canonical index edges.
    ///
    /// Edges must reference valid indices and contain no self-loops or
    /// duplicates. Isolated nodes are permitted here (the edge-list loader
    /// cannot produce them, but synthetic constructions may).
    pub fn from_parts(labels: Vec<String>, edges: Vec<(u32, u32)>) -> Result<Graph> {
        let n = labels.len();
        let mut edge_set = HashSet::with_capacity(edges.len());
        let mut canonical = Vec::with_capacity(edges.len());
        for &(a, b) in &edges {
            if a == b {
                return Err(Error::Contract(format!("self-loop edge ({a}, {b})")));
            }
            if a as usize >= n || b as usize >= n {
                return Err(Error::Contract(format!(
                    "edge ({a}, {b}) references a node >= {n}"
                )));
            }
            let e = (a.min(b), a.max(b));
            if !edge_set.insert(e) {
                return Err(Error::Contract(format!("duplicate edge ({}, {})", e.0, e.1)));
            }
            canonical.push(e);
        }
        let mut label_index = HashMap::with_capacity(n);
        for (i, l) in labels.iter().enumerate() {
            if label_index.insert(l.clone(), i as u32).is_some() {
                return Err(Error::Contract(format!("duplicate node label {l:?}")));
            }
        }
        let mut neighbors: Vec<Vec<usize>> = vec![Vec::new(); n];
        for &(a, b) in &canonical {
            neighbors[a as usize].push(b as usize);
            neighbors[b as usize].push(a as usize);
        }
        let mut indptr = Vec::with_capacity(n + 1);
        let mut indices = Vec::with_capacity(2 * canonical.len());
        indptr.push(0);
        let mut degrees = Vec::with_capacity(n);
        for list in &mut neighbors {
            list.sort_unstable();
            degrees.push(list.len());
            indices.extend_from_slice(list);
            indptr.push(indices.len());
        }
        let data = vec![1.0; indices.len()];
        Ok(Graph {
            num_nodes: n,
            edges: canonical,
            edge_set,
            adjacency: Csr {
                n_rows: n,
                n_cols: n,
                indptr,
                indices,
                data,
            },
            degrees,
            labels,
            label_index,
        })
    }

    /// Test/synthetic constructor: node labels are the stringified indices.
    pub fn from_index_edges(num_nodes: usize, edges: &[(u32, u32)]) -> Result<Graph> {
        let labels = (0..num_nodes).map(|i| i.to_string()).collect();
        Graph::from_parts(labels, edges.to_vec())
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn edges(&self) -> &[(u32, u32)] {
        &self.edges
    }

    pub fn has_edge(&self, a: u32, b: u32) -> bool {
        self.edge_set.contains(&(a.min(b), a.max(b)))
    }

    pub fn degree(&self, i: usize) -> usize {
        self.degrees[i]
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adjacency.indices[self.adjacency.indptr[i]..self.adjacency.indptr[i + 1]]
    }

    pub fn adjacency(&self) -> &Csr {
        &self.adjacency
    }

    pub fn label(&self, i: u32) -> &str {
        &self.labels[i as usize]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn index_of(&self, label: &str) -> Option<u32> {
        self.label_index.get(label).copied()
    }

    /// Number of unordered non-adjacent pairs (excluding self-pairs).
    pub fn non_edge_count(&self) -> usize {
        self.num_nodes * (self.num_nodes.saturating_sub(1)) / 2 - self.edges.len()
    }
}

/// Outcome of parsing an edge-list file.
#[derive(Debug)]
pub struct LoadSummary {
    pub graph: Graph,
    /// Lines rejected because both endpoints were the same label.
    pub self_loops_skipped: usize,
    /// Duplicate (including reversed) edge lines collapsed.
    pub duplicates_collapsed: usize,
}

/// Parses a UTF-8 edge list: one `label<TAB>label` pair per line, `#`-prefixed
/// comment lines and blank lines skipped, LF or CRLF endings accepted.
///
/// Node indices are assigned in first-appearance order over accepted lines,
/// so the graph cannot contain isolated nodes. Self-loop lines are skipped
/// and counted; duplicate and reversed-duplicate edges are collapsed.
pub fn load_edge_list(path: impl AsRef<Path>) -> Result<LoadSummary> {
    let text = fs::read_to_string(path.as_ref())?;
    parse_edge_list(&text)
}

fn parse_edge_list(text: &str) -> Result<LoadSummary> {
    let mut label_index: HashMap<String, u32> = HashMap::new();
    let mut labels: Vec<String> = Vec::new();
    let mut edges: Vec<(u32, u32)> = Vec::new();
    let mut seen: HashSet<(u32, u32)> = HashSet::new();
    let mut self_loops = 0usize;
    let mut duplicates = 0usize;

    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split('\t');
        let a = parts.next().unwrap_or("");
        let b = parts.next();
        let extra = parts.next();
        let b = match (b, extra) {
            (Some(b), None) if !a.is_empty() && !b.is_empty() => b,
            _ => {
                return Err(Error::Parse {
                    line: lineno + 1,
                    message: format!("expected exactly 2 tab-separated fields, got {line:?}"),
                })
            }
        };
        if a == b {
            self_loops += 1;
            continue;
        }
        let mut intern = |l: &str| -> u32 {
            if let Some(&i) = label_index.get(l) {
                i
            } else {
                let i = labels.len() as u32;
                labels.push(l.to_string());
                label_index.insert(l.to_string(), i);
                i
            }
        };
        let ia = intern(a);
        let ib = intern(b);
        let e = (ia.min(ib), ia.max(ib));
        if seen.insert(e) {
            edges.push(e);
        } else {
            duplicates += 1;
        }
    }

    let graph = Graph::from_parts(labels, edges)?;
    Ok(LoadSummary {
        graph,
        self_loops_skipped: self_loops,
        duplicates_collapsed: duplicates,
    })
}

/// Disjoint edge partitions plus fixed negative samples for validation/test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeSplit {
    pub seed: u64,
    pub fractions: (f64, f64, f64),
    pub train_pos: Vec<(u32, u32)>,
    pub val_pos: Vec<(u32, u32)>,
    pub test_pos: Vec<(u32, u32)>,
    pub val_neg: Vec<(u32, u32)>,
    pub test_neg: Vec<(u32, u32)>,
}

impl EdgeSplit {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<EdgeSplit> {
        let text = fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Checks that the manifest is consistent with `g`: positives partition
    /// the edge set and negatives are non-edges without self-pairs.
    pub fn validate_against(&self, g: &Graph) -> Result<()> {
        let mut seen = HashSet::new();
        for &(a, b) in self
            .train_pos
            .iter()
            .chain(&self.val_pos)
            .chain(&self.test_pos)
        {
            if !g.has_edge(a, b) {
                return Err(Error::Contract(format!(
                    "split positive ({a}, {b}) is not an edge of the graph"
                )));
            }
            if !seen.insert((a.min(b), a.max(b))) {
                return Err(Error::Contract(format!(
                    "split partitions overlap on ({a}, {b})"
                )));
            }
        }
        if seen.len() != g.edges().len() {
            return Err(Error::Contract(format!(
                "split covers {} edges but the graph has {}",
                seen.len(),
                g.edges().len()
            )));
        }
        for &(a, b) in self.val_neg.iter().chain(&self.test_neg) {
            if a == b || g.has_edge(a, b) || a as usize >= g.num_nodes() {
                return Err(Error::Contract(format!(
                    "split negative ({a}, {b}) is not a valid non-edge"
                )));
            }
        }
        Ok(())
    }
}

/// Shuffles the edge list with a seeded ChaCha20 stream and cuts at floor
/// boundaries: `|train| = floor(f0 m)`, `|val| = floor(f1 m)`, the remainder
/// is test. Validation and test negatives are drawn once, uniformly without
/// replacement from the non-edges of the full graph.
pub fn split_edges(g: &Graph, fractions: (f64, f64, f64), seed: u64) -> Result<EdgeSplit> {
    let m = g.edges().len();
    if m < 20 {
        return Err(Error::Contract(format!(
            "need at least 20 edges to split, got {m}"
        )));
    }
    let (f0, f1, f2) = fractions;
    if !(f0 > 0.0 && f1 > 0.0 && f2 > 0.0 && (f0 + f1 + f2 - 1.0).abs() < 1e-9) {
        return Err(Error::Contract(format!(
            "fractions must be positive and sum to 1, got {fractions:?}"
        )));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut edges = g.edges().to_vec();
    edges.shuffle(&mut rng);
    let n_train = (f0 * m as f64).floor() as usize;
    let n_val = (f1 * m as f64).floor() as usize;
    let train_pos = edges[..n_train].to_vec();
    let val_pos = edges[n_train..n_train + n_val].to_vec();
    let test_pos = edges[n_train + n_val..].to_vec();

    let negatives = sample_non_edges(g, val_pos.len() + test_pos.len(), &mut rng)?;
    let val_neg = negatives[..val_pos.len()].to_vec();
    let test_neg = negatives[val_pos.len()..].to_vec();

    Ok(EdgeSplit {
        seed,
        fractions,
        train_pos,
        val_pos,
        test_pos,
        val_neg,
        test_neg,
    })
}

/// Per-epoch training negatives: `count` distinct uniform non-edges drawn from
/// the stream seeded with `seed ^ epoch`. Draws are independent across epochs
/// and may overlap the fixed validation/test negatives.
pub fn sample_training_negatives(
    g: &Graph,
    count: usize,
    seed: u64,
    epoch: u64,
) -> Result<Vec<(u32, u32)>> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ epoch);
    sample_non_edges(g, count, &mut rng)
}

/// Uniform sample of `count` distinct non-edges. Uses rejection sampling while
/// the target is a small share of the pool and falls back to enumerating and
/// shuffling the full pool otherwise.
fn sample_non_edges(g: &Graph, count: usize, rng: &mut ChaCha20Rng) -> Result<Vec<(u32, u32)>> {
    let pool = g.non_edge_count();
    if count > pool {
        return Err(Error::Contract(format!(
            "requested {count} negatives but only {pool} non-edges exist"
        )));
    }
    if count == 0 {
        return Ok(Vec::new());
    }
    let n = g.num_nodes() as u32;
    if 2 * count >= pool {
        let mut all = Vec::with_capacity(pool);
        for a in 0..n {
            for b in (a + 1)..n {
                if !g.has_edge(a, b) {
                    all.push((a, b));
                }
            }
        }
        all.shuffle(rng);
        all.truncate(count);
        return Ok(all);
    }
    let mut chosen: HashSet<(u32, u32)> = HashSet::with_capacity(count);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        if a == b {
            continue;
        }
        let e = (a.min(b), a.max(b));
        if g.has_edge(e.0, e.1) || !chosen.insert(e) {
            continue;
        }
        out.push(e);
    }
    Ok(out)
}

/// Row-stochastic random-walk matrix `P = D^-1 (A + I_N)` in CSR form.
/// Row `i` has `deg(i) + 1` nonzeros, all equal to `1/(deg(i)+1)`.
#[derive(Debug, Clone)]
pub struct RandomWalkMatrix {
    csr: Csr,
}

impl RandomWalkMatrix {
    pub fn csr(&self) -> &Csr {
        &self.csr
    }

    pub fn num_nodes(&self) -> usize {
        self.csr.n_rows
    }

    pub fn transpose(&self) -> Csr {
        self.csr.transpose()
    }
}

/// Builds `P = D^-1 (A + I)` with `D_ii = sum_j (A + I)_ij`. Column indices
/// are sorted within each row.
pub fn random_walk_matrix(g: &Graph) -> RandomWalkMatrix {
    let n = g.num_nodes();
    let mut indptr = Vec::with_capacity(n + 1);
    let mut indices = Vec::new();
    let mut data = Vec::new();
    indptr.push(0);
    for i in 0..n {
        let nbrs = g.neighbors(i);
        let w = 1.0 / (nbrs.len() + 1) as f64;
        // merge the self-loop into the sorted neighbor list
        let mut inserted = false;
        for &j in nbrs {
            if !inserted && i < j {
                indices.push(i);
                data.push(w);
                inserted = true;
            }
            indices.push(j);
            data.push(w);
        }
        if !inserted {
            indices.push(i);
            data.push(w);
        }
        indptr.push(indices.len());
    }
    RandomWalkMatrix {
        csr: Csr {
            n_rows: n,
            n_cols: n,
            indptr,
            indices,
            data,
        },
    }
}
