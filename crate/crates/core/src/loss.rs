//! Training objective: pairwise ranking loss, the two contrastive alignment
//! terms and L2 regularization over the parameters a batch actually touches.

use alloc::vec::Vec;

use crate::config::{Aggregation, TrainConfig, Variant};
use crate::dense::{dot, DenseMatrix};
use crate::error::{CoreError, Result};
use crate::forward::{BranchMode, ForwardTrace};
use crate::math;
use crate::params::ParamBlocks;

/// One training batch of (user, positive, negative) triplets.
#[derive(Debug, Clone, Default)]
pub struct Batch {
    pub users: Vec<u32>,
    pub pos: Vec<u32>,
    pub neg: Vec<u32>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }

    /// Sorted, deduplicated user list.
    pub fn unique_users(&self) -> Vec<u32> {
        let mut u = self.users.clone();
        u.sort_unstable();
        u.dedup();
        u
    }

    /// Sorted, deduplicated positive-item list.
    pub fn unique_pos(&self) -> Vec<u32> {
        let mut p = self.pos.clone();
        p.sort_unstable();
        p.dedup();
        p
    }

    /// Sorted, deduplicated entity rows (users and both item roles).
    pub fn unique_entities(&self, n_users: usize) -> Vec<usize> {
        let mut rows: Vec<usize> = self
            .users
            .iter()
            .map(|&u| u as usize)
            .chain(self.pos.iter().map(|&i| n_users + i as usize))
            .chain(self.neg.iter().map(|&i| n_users + i as usize))
            .collect();
        rows.sort_unstable();
        rows.dedup();
        rows
    }
}

/// Loss value decomposition for one batch.
#[derive(Debug, Clone, Copy, Default)]
pub struct LossTerms {
    pub total: f64,
    pub bpr: f64,
    pub cl_user: f64,
    pub cl_item: f64,
    pub l2: f64,
}

/// Sum of softplus(-(s_pos - s_neg)) over the batch triplets.
pub fn bpr_loss(z: &DenseMatrix, n_users: usize, batch: &Batch) -> Result<f64> {
    if batch.users.len() != batch.pos.len() || batch.users.len() != batch.neg.len() {
        return Err(CoreError::ShapeMismatch(
            "bpr: triplet arrays differ in length".into(),
        ));
    }
    let mut acc = 0.0;
    for ((&u, &p), &n) in batch.users.iter().zip(&batch.pos).zip(&batch.neg) {
        let zu = z.row(u as usize);
        let margin = dot(zu, z.row(n_users + p as usize)) - dot(zu, z.row(n_users + n as usize));
        acc += math::softplus(-margin);
    }
    Ok(acc)
}

/// Cosine similarity with the zero-vector convention (either norm zero -> 0).
fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = math::sqrt(dot(a, a));
    let nb = math::sqrt(dot(b, b));
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot(a, b) / (na * nb)
}

/// InfoNCE over two aligned views.
///
/// `rows_a[i]` in `a` and `rows_b[i]` in `b` are the i-th positive pair; all
/// other pairs in the index lists act as in-batch negatives. Returns the sum
/// of per-anchor losses (anchors live in `a`).
pub fn infonce_loss(
    a: &DenseMatrix,
    b: &DenseMatrix,
    rows_a: &[usize],
    rows_b: &[usize],
    tau: f64,
) -> Result<f64> {
    if rows_a.len() != rows_b.len() {
        return Err(CoreError::ShapeMismatch(
            "infonce: index lists differ in length".into(),
        ));
    }
    if tau <= 0.0 {
        return Err(CoreError::InvalidInput("infonce: tau must be > 0".into()));
    }
    let n = rows_a.len();
    let mut acc = 0.0;
    let mut sims = Vec::with_capacity(n);
    for i in 0..n {
        sims.clear();
        let anchor = a.row(rows_a[i]);
        for j in 0..n {
            sims.push(cosine(anchor, b.row(rows_b[j])) / tau);
        }
        let max = sims.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + math::ln(sims.iter().map(|&s| math::exp(s - max)).sum::<f64>());
        acc += lse - sims[i];
    }
    Ok(acc)
}

/// Whether a named weight block participates in this configuration.
/// Gradients and the L2 term must agree on this set.
pub(crate) fn weight_in_use(name: &str, cfg: &TrainConfig) -> bool {
    let v = cfg.variant;
    let semantic = v.uses_semantic_graph();
    let rca = cfg.effective_r() > 0;
    match name {
        "id_emb" => true,
        "proj_v" => semantic && v != Variant::CraneT,
        "proj_t" => semantic && v != Variant::CraneV,
        "w_tr" | "b_tr" | "w_m_v" | "w_m_t" | "w_a_v" | "w_a_t" | "w_f_v" | "w_f_t" => rca,
        "q_att_v" | "q_att_t" => rca && cfg.aggregation == Aggregation::Attention,
        "w_gcn" => cfg.trainable_gcn && v != Variant::WoGcn,
        _ => false,
    }
}

/// Squared L2 norm of the batch-touched parameters: the embedding rows of the
/// batch entities plus every weight block the configuration uses.
pub fn l2_term(p: &ParamBlocks, cfg: &TrainConfig, entity_rows: &[usize]) -> f64 {
    let mut acc = 0.0;
    for &r in entity_rows {
        let row = p.id_emb.row(r);
        acc += dot(row, row);
    }
    for (name, block) in p.blocks() {
        if name != "id_emb" && weight_in_use(name, cfg) {
            acc += dot(block, block);
        }
    }
    acc
}

/// Whether the contrastive terms apply to this trace.
pub fn contrastive_active(cfg: &TrainConfig, trace: &ForwardTrace) -> bool {
    cfg.beta > 0.0
        && cfg.variant != Variant::WoCl
        && trace.mode == BranchMode::Joint
        && trace.h_users.is_some()
}

/// Full batch objective on a completed forward trace.
pub fn total_loss(
    p: &ParamBlocks,
    trace: &ForwardTrace,
    batch: &Batch,
    cfg: &TrainConfig,
    n_users: usize,
) -> Result<LossTerms> {
    let bpr = bpr_loss(&trace.z, n_users, batch)?;
    let (cl_user, cl_item) = if contrastive_active(cfg, trace) {
        let h_users = trace.h_users.as_ref().unwrap();
        let h_items = trace.h_items.as_ref().unwrap();
        let users: Vec<usize> = batch.unique_users().iter().map(|&u| u as usize).collect();
        let items: Vec<usize> = batch.unique_pos().iter().map(|&i| i as usize).collect();
        let e_user_rows: Vec<usize> = users.clone();
        let e_item_rows: Vec<usize> = items.iter().map(|&i| n_users + i).collect();
        let cu = infonce_loss(&trace.e_bar, h_users, &e_user_rows, &users, cfg.tau)?;
        let ci = infonce_loss(&trace.e_bar, h_items, &e_item_rows, &items, cfg.tau)?;
        (cu, ci)
    } else {
        (0.0, 0.0)
    };
    let l2 = l2_term(p, cfg, &batch.unique_entities(n_users));
    let beta = if cfg.variant == Variant::WoCl { 0.0 } else { cfg.beta };
    let total = bpr + beta * (cl_user + cl_item) + cfg.lambda * l2;
    if !total.is_finite() {
        return Err(CoreError::NonFinite("batch loss".into()));
    }
    Ok(LossTerms {
        total,
        bpr,
        cl_user,
        cl_item,
        l2,
    })
}
