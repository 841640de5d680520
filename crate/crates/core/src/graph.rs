//! The two graphs of the dual-graph framework: the sampled heterogeneous
//! user-item interaction graph and the homogeneous item-item semantic graph.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::dense::{dot, DenseMatrix};
use crate::error::{CoreError, Result};
use crate::math;
use crate::rng::SeededRng;
use crate::sparse::{blocked_cosine_topk, row_norms, CompressedSparseMatrix};

/// Bipartite user-item interaction structure with precomputed degrees and
/// sorted neighbor lists.
#[derive(Debug, Clone)]
pub struct InteractionGraph {
    pub adjacency: CompressedSparseMatrix,
    pub user_degrees: Vec<f64>,
    pub item_degrees: Vec<f64>,
    pub user_neighbors: Vec<Vec<u32>>,
    pub item_neighbors: Vec<Vec<u32>>,
}

impl InteractionGraph {
    pub fn n_users(&self) -> usize {
        self.adjacency.n_rows()
    }

    pub fn n_items(&self) -> usize {
        self.adjacency.n_cols()
    }

    pub fn n_edges(&self) -> usize {
        self.adjacency.nnz()
    }
}

/// One epoch's sampled interaction graph in symmetric block layout, already
/// normalized by the original degrees.
#[derive(Debug, Clone)]
pub struct SampledGraph {
    /// (M+N) x (M+N) symmetric matrix [[0, A~], [A~^T, 0]], sym-normalized.
    pub adjacency_sym: CompressedSparseMatrix,
    /// Per original edge (in adjacency nnz order): retained this epoch?
    pub retained_mask: Vec<bool>,
}

impl SampledGraph {
    pub fn retained_edges(&self) -> usize {
        self.retained_mask.iter().filter(|&&b| b).count()
    }
}

/// Row-normalized top-k item similarity graph.
#[derive(Debug, Clone)]
pub struct SemanticGraph {
    /// Row-normalized similarity weights; the sparsity pattern is the frozen
    /// neighbor support.
    pub s_tilde: CompressedSparseMatrix,
    pub k: usize,
    pub source_epoch: usize,
}

/// Build the interaction graph from deduplicated (user, item) pairs.
pub fn build_interaction_graph(
    train_pairs: &[(u32, u32)],
    n_users: usize,
    n_items: usize,
) -> Result<InteractionGraph> {
    if train_pairs.is_empty() {
        return Err(CoreError::InvalidInput(
            "interaction graph needs at least one edge".into(),
        ));
    }
    let rows: Vec<usize> = train_pairs.iter().map(|&(u, _)| u as usize).collect();
    let cols: Vec<usize> = train_pairs.iter().map(|&(_, i)| i as usize).collect();
    let vals = vec![1.0; train_pairs.len()];
    let adjacency = CompressedSparseMatrix::from_triplets(&rows, &cols, &vals, n_users, n_items)?;
    // duplicate pairs would have been summed; the contract is binary
    if adjacency.values().iter().any(|&v| v != 1.0) {
        return Err(CoreError::InvalidInput(
            "duplicate (user, item) pairs must be removed upstream".into(),
        ));
    }

    let mut user_neighbors: Vec<Vec<u32>> = Vec::with_capacity(n_users);
    for u in 0..n_users {
        user_neighbors.push(adjacency.row(u).0.to_vec());
    }
    let mut item_neighbors: Vec<Vec<u32>> = vec![Vec::new(); n_items];
    for u in 0..n_users {
        for &i in adjacency.row(u).0 {
            item_neighbors[i as usize].push(u as u32);
        }
    }
    let user_degrees: Vec<f64> = user_neighbors.iter().map(|n| n.len() as f64).collect();
    let item_degrees: Vec<f64> = item_neighbors.iter().map(|n| n.len() as f64).collect();
    Ok(InteractionGraph {
        adjacency,
        user_degrees,
        item_degrees,
        user_neighbors,
        item_neighbors,
    })
}

/// Degree-adaptive retention probability for edge (u, i).
#[inline]
pub fn retention_probability(d_u: f64, d_i: f64) -> f64 {
    1.0 / math::sqrt(d_u * d_i)
}

fn assemble_sym(
    g: &InteractionGraph,
    retained_mask: &[bool],
) -> SampledGraph {
    let m = g.n_users();
    let n = g.n_items();
    let mut rows: Vec<Vec<(u32, f64)>> = vec![Vec::new(); m + n];
    let mut edge_idx = 0usize;
    for u in 0..m {
        let (cols, _) = g.adjacency.row(u);
        for &i in cols {
            if retained_mask[edge_idx] {
                let w = 1.0
                    / math::sqrt(g.user_degrees[u] * g.item_degrees[i as usize]);
                rows[u].push((m as u32 + i, w));
                rows[m + i as usize].push((u as u32, w));
            }
            edge_idx += 1;
        }
    }
    // user rows come out column-sorted already; item rows collect users in
    // ascending order because the outer loop walks users in order
    let adjacency_sym = CompressedSparseMatrix::from_sorted_rows(m + n, m + n, &rows);
    SampledGraph {
        adjacency_sym,
        retained_mask: retained_mask.to_vec(),
    }
}

/// Independently retain each edge with probability `1/sqrt(d_u d_i)` and
/// assemble the normalized symmetric block matrix. Normalization always uses
/// the original degrees.
pub fn dropedge_sample(g: &InteractionGraph, rng: &mut SeededRng) -> SampledGraph {
    let m = g.n_users();
    let mut mask = Vec::with_capacity(g.n_edges());
    for u in 0..m {
        let (cols, _) = g.adjacency.row(u);
        for &i in cols {
            let p = retention_probability(g.user_degrees[u], g.item_degrees[i as usize]);
            mask.push(rng.next_f64() < p);
        }
    }
    assemble_sym(g, &mask)
}

/// The unsampled graph in the same normalized symmetric layout; used for
/// validation/test forward passes and when edge sampling is disabled.
pub fn full_graph(g: &InteractionGraph) -> SampledGraph {
    let mask = vec![true; g.n_edges()];
    assemble_sym(g, &mask)
}

/// Recompute cosine similarities on a frozen sparsity pattern.
///
/// Returns a matrix with `pattern`'s structure whose values are the cosine
/// similarities between the row pairs of `x`. Zero-norm rows yield 0.
pub fn cosine_on_support(
    x: &DenseMatrix,
    pattern: &CompressedSparseMatrix,
) -> Result<CompressedSparseMatrix> {
    if x.n_rows() != pattern.n_rows() || pattern.n_rows() != pattern.n_cols() {
        return Err(CoreError::ShapeMismatch(format!(
            "cosine_on_support: {} feature rows vs {}x{} pattern",
            x.n_rows(),
            pattern.n_rows(),
            pattern.n_cols()
        )));
    }
    let norms = row_norms(x);
    let mut out = pattern.clone();
    for i in 0..out.n_rows() {
        let lo = out.row_offsets()[i];
        let hi = out.row_offsets()[i + 1];
        for p in lo..hi {
            let j = out.col_indices()[p] as usize;
            let v = if norms[i] == 0.0 || norms[j] == 0.0 {
                0.0
            } else {
                dot(x.row(i), x.row(j)) / (norms[i] * norms[j])
            };
            out.values_mut()[p] = v;
        }
    }
    Ok(out)
}

/// Build the semantic graph: blocked top-k cosine neighbors, row-normalized.
pub fn build_semantic_graph(
    x_att_items: &DenseMatrix,
    k: usize,
    block: usize,
    source_epoch: usize,
) -> Result<SemanticGraph> {
    let raw = blocked_cosine_topk(x_att_items, k, block)?;
    Ok(SemanticGraph {
        s_tilde: raw.row_normalize(),
        k,
        source_epoch,
    })
}

/// Semantic graph from the average of two per-modality similarity maps,
/// `(S^v + S^t) / 2`, sparsified after averaging.
pub fn build_semantic_graph_avg(
    x_visual: &DenseMatrix,
    x_textual: &DenseMatrix,
    k: usize,
    block: usize,
    source_epoch: usize,
) -> Result<SemanticGraph> {
    if x_visual.n_rows() != x_textual.n_rows() {
        return Err(CoreError::ShapeMismatch(format!(
            "modality row counts differ: {} vs {}",
            x_visual.n_rows(),
            x_textual.n_rows()
        )));
    }
    let n = x_visual.n_rows();
    if k >= n {
        return Err(CoreError::InvalidInput(format!(
            "k = {k} must be smaller than the item count {n}"
        )));
    }
    // Average in a widened feature space: cos is not linear in features, so
    // compute both maps blockwise and average the similarity values.
    let nv = row_norms(x_visual);
    let nt = row_norms(x_textual);
    let block = block.max(1);
    let mut rows: Vec<Vec<(u32, f64)>> = Vec::with_capacity(n);
    let mut sims = vec![0.0f64; block * n];
    let mut start = 0;
    while start < n {
        let end = (start + block).min(n);
        for b in 0..end - start {
            let i = start + b;
            let out = &mut sims[b * n..(b + 1) * n];
            for (j, ov) in out.iter_mut().enumerate() {
                let sv = if nv[i] == 0.0 || nv[j] == 0.0 {
                    0.0
                } else {
                    dot(x_visual.row(i), x_visual.row(j)) / (nv[i] * nv[j])
                };
                let st = if nt[i] == 0.0 || nt[j] == 0.0 {
                    0.0
                } else {
                    dot(x_textual.row(i), x_textual.row(j)) / (nt[i] * nt[j])
                };
                *ov = 0.5 * (sv + st);
            }
        }
        for b in 0..end - start {
            let i = start + b;
            rows.push(crate::sparse::select_topk_row(
                &sims[b * n..(b + 1) * n],
                i,
                k,
            ));
        }
        start = end;
    }
    let raw = CompressedSparseMatrix::from_sorted_rows(n, n, &rows);
    Ok(SemanticGraph {
        s_tilde: raw.row_normalize(),
        k,
        source_epoch,
    })
}

/// Average-of-modalities similarity values on a frozen pattern.
pub fn avg_cosine_on_support(
    x_visual: &DenseMatrix,
    x_textual: &DenseMatrix,
    pattern: &CompressedSparseMatrix,
) -> Result<CompressedSparseMatrix> {
    let sv = cosine_on_support(x_visual, pattern)?;
    let st = cosine_on_support(x_textual, pattern)?;
    let mut out = sv;
    for (a, &b) in out.values_mut().iter_mut().zip(st.values()) {
        *a = 0.5 * (*a + b);
    }
    Ok(out)
}
