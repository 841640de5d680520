//! Forward computation: modality projection, user modality profiles, the
//! recursive cross-modal attention stack, both graph convolutions, semantic
//! user profiles, fusion and scoring.
//!
//! Every intermediate needed by the exact backward pass is recorded in a
//! [`ForwardTrace`].

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::config::{Activation, Aggregation, LayerReadout, TrainConfig, Variant, LEAKY_SLOPE};
use crate::dense::{dot, DenseMatrix};
use crate::error::{CoreError, Result};
use crate::graph::{avg_cosine_on_support, cosine_on_support, InteractionGraph};
use crate::math;
use crate::params::{ParamBlocks, TEXTUAL, VISUAL};
use crate::sparse::CompressedSparseMatrix;

/// Correlation matrices are cached in the trace only below this entity count;
/// above it the backward pass recomputes them blockwise.
pub const C_CACHE_LIMIT: usize = 4096;

/// Precomputed per-item modality feature matrices.
#[derive(Debug, Clone)]
pub struct ModalityFeatures {
    /// N x d_v
    pub x_visual: DenseMatrix,
    /// N x d_t
    pub x_textual: DenseMatrix,
}

impl ModalityFeatures {
    pub fn n_items(&self) -> usize {
        self.x_visual.n_rows()
    }
}

/// Which sub-network a forward pass runs. `Joint` is the normal model; the
/// split modes exist for the late-fusion variant that trains the
/// collaborative and semantic branches independently.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BranchMode {
    Joint,
    CollabOnly,
    SemanticOnly,
}

/// Everything a forward pass reads besides the parameters.
pub struct ForwardCtx<'a> {
    pub graph: &'a InteractionGraph,
    /// Normalized symmetric interaction matrix for this pass (sampled during
    /// training, full for evaluation).
    pub adj_sym: &'a CompressedSparseMatrix,
    /// Frozen semantic neighbor support; values are recomputed from the
    /// current parameters on every pass.
    pub support: Option<&'a CompressedSparseMatrix>,
    pub feats: &'a ModalityFeatures,
    pub cfg: &'a TrainConfig,
}

/// Item-side feature input to the semantic graph.
#[derive(Debug, Clone)]
pub enum GraphInput {
    /// One fused feature matrix (attention output, concat, sum, single modality).
    Single(DenseMatrix),
    /// Separate per-modality matrices, similarities averaged afterwards.
    Pair(DenseMatrix, DenseMatrix),
}

/// Cached per-round attention intermediates.
#[derive(Debug, Clone)]
pub struct RcaRound {
    pub eprime: DenseMatrix,
    /// Modality anchors P^m.
    pub p: [DenseMatrix; 2],
    /// X^{m(r-1)} W_a^m.
    pub t: [DenseMatrix; 2],
    /// Correlation matrices, cached only at small scale.
    pub c: Option<[DenseMatrix; 2]>,
    /// Post-ReLU refinements F^m.
    pub f: [DenseMatrix; 2],
    /// Round outputs X^{m(r)}.
    pub x: [DenseMatrix; 2],
}

#[derive(Debug, Clone)]
pub struct RcaTrace {
    pub rounds: Vec<RcaRound>,
}

/// Aggregation-specific bookkeeping for user modality profiles.
#[derive(Debug, Clone)]
pub enum AggTrace {
    Sum,
    Mean,
    /// argmax item per (user, dim), u32::MAX when the user has no neighbors.
    Max(Vec<u32>),
    /// Softmax weights aligned with `user_neighbors`.
    Attention(Vec<Vec<f64>>),
}

/// Modality pipeline intermediates (projection through attention).
#[derive(Debug, Clone)]
pub struct ModalityTrace {
    /// Projected item features, N x d_lat, per modality.
    pub xi: [DenseMatrix; 2],
    /// User profile aggregation details, per modality (attention path only).
    pub agg: Option<[AggTrace; 2]>,
    /// Initial stacked matrices, (M+N) x d_lat, per modality.
    pub x0: Option<[DenseMatrix; 2]>,
    pub rca: Option<RcaTrace>,
    /// Item-side semantic graph input.
    pub graph_input: GraphInput,
}

#[derive(Debug, Clone)]
pub struct UiTrace {
    /// Layer outputs e^{(0)} .. e^{(L)}.
    pub layers: Vec<DenseMatrix>,
    /// Pre-activation inputs `A e^{(l)}` (trainable convolution only).
    pub pre: Vec<DenseMatrix>,
    /// Readout.
    pub e_bar: DenseMatrix,
}

#[derive(Debug, Clone)]
pub struct IiTrace {
    /// h^{(0)} .. h^{(L_II)} over items.
    pub layers: Vec<DenseMatrix>,
}

/// All cached activations of one forward pass.
pub struct ForwardTrace {
    pub modality: Option<ModalityTrace>,
    /// Raw similarity values on the frozen support.
    pub sem_raw: Option<CompressedSparseMatrix>,
    /// Row-normalized semantic weights actually used for propagation.
    pub sem: Option<CompressedSparseMatrix>,
    pub ui: Option<UiTrace>,
    pub ii: Option<IiTrace>,
    /// Collaborative readout (M+N) x d; equals `id_emb` when propagation is off.
    pub e_bar: DenseMatrix,
    pub h_users: Option<DenseMatrix>,
    pub h_items: Option<DenseMatrix>,
    /// Final representations, (M+N) x d.
    pub z: DenseMatrix,
    pub mode: BranchMode,
}

fn broadcast_add_row(m: &mut DenseMatrix, bias: &[f64]) {
    for i in 0..m.n_rows() {
        for (v, &b) in m.row_mut(i).iter_mut().zip(bias) {
            *v += b;
        }
    }
}

/// Project raw modality features into the latent space.
pub fn project_modalities(
    feats: &ModalityFeatures,
    p: &ParamBlocks,
) -> Result<[DenseMatrix; 2]> {
    Ok([
        feats.x_visual.matmul(&p.proj_v)?,
        feats.x_textual.matmul(&p.proj_t)?,
    ])
}

/// Aggregate interacted-item features into per-user modality profiles.
pub fn user_modality_profiles(
    g: &InteractionGraph,
    item_feats: &DenseMatrix,
    aggregation: Aggregation,
    query: &[f64],
) -> Result<(DenseMatrix, AggTrace)> {
    if item_feats.n_rows() != g.n_items() {
        return Err(CoreError::ShapeMismatch(format!(
            "profiles: {} feature rows for {} items",
            item_feats.n_rows(),
            g.n_items()
        )));
    }
    match aggregation {
        Aggregation::Sum => {
            let out = g.adjacency.spmm(item_feats)?;
            Ok((out, AggTrace::Sum))
        }
        Aggregation::Mean => {
            let mut out = g.adjacency.spmm(item_feats)?;
            for u in 0..g.n_users() {
                let deg = g.user_degrees[u];
                if deg > 0.0 {
                    for v in out.row_mut(u) {
                        *v /= deg;
                    }
                }
            }
            Ok((out, AggTrace::Mean))
        }
        Aggregation::Max => {
            let d = item_feats.n_cols();
            let mut out = DenseMatrix::zeros(g.n_users(), d);
            let mut argmax = vec![u32::MAX; g.n_users() * d];
            for u in 0..g.n_users() {
                let neigh = &g.user_neighbors[u];
                if neigh.is_empty() {
                    continue;
                }
                let row = out.row_mut(u);
                for c in 0..d {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_i = u32::MAX;
                    for &i in neigh {
                        let v = item_feats.get(i as usize, c);
                        if v > best {
                            best = v;
                            best_i = i;
                        }
                    }
                    row[c] = best;
                    argmax[u * d + c] = best_i;
                }
            }
            Ok((out, AggTrace::Max(argmax)))
        }
        Aggregation::Attention => {
            let d = item_feats.n_cols();
            let scale = 1.0 / math::sqrt(d as f64);
            let mut out = DenseMatrix::zeros(g.n_users(), d);
            let mut alphas = Vec::with_capacity(g.n_users());
            for u in 0..g.n_users() {
                let neigh = &g.user_neighbors[u];
                if neigh.is_empty() {
                    alphas.push(Vec::new());
                    continue;
                }
                let scores: Vec<f64> = neigh
                    .iter()
                    .map(|&i| dot(item_feats.row(i as usize), query) * scale)
                    .collect();
                let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mut weights: Vec<f64> = scores.iter().map(|&s| math::exp(s - max)).collect();
                let sum: f64 = weights.iter().sum();
                for w in &mut weights {
                    *w /= sum;
                }
                let row = out.row_mut(u);
                for (&i, &a) in neigh.iter().zip(&weights) {
                    for (o, &v) in row.iter_mut().zip(item_feats.row(i as usize)) {
                        *o += a * v;
                    }
                }
                alphas.push(weights);
            }
            Ok((out, AggTrace::Attention(alphas)))
        }
    }
}

/// Compute F^m = ReLU(C^m t) blockwise, optionally retaining C^m.
/// `x_prev` drives C^m = tanh(x_prev p^T).
fn rca_refine(
    x_prev: &DenseMatrix,
    p_anchor: &DenseMatrix,
    t: &DenseMatrix,
    block: usize,
    cache_c: bool,
) -> (DenseMatrix, Option<DenseMatrix>) {
    let n = x_prev.n_rows();
    let d = t.n_cols();
    let mut f = DenseMatrix::zeros(n, d);
    let mut c_full = cache_c.then(|| DenseMatrix::zeros(n, n));
    let block = block.max(1);
    let mut start = 0;
    while start < n {
        let end = (start + block).min(n);
        let xb = x_prev.row_slice(start, end);
        let mut cb = xb.matmul_bt(p_anchor).expect("rca shapes");
        for v in cb.values_mut() {
            *v = math::tanh(*v);
        }
        let yb = cb.matmul(t).expect("rca shapes");
        for (bi, i) in (start..end).enumerate() {
            let dst = f.row_mut(i);
            for (o, &y) in dst.iter_mut().zip(yb.row(bi)) {
                *o = if y > 0.0 { y } else { 0.0 };
            }
            if let Some(cf) = c_full.as_mut() {
                cf.row_mut(i).copy_from_slice(cb.row(bi));
            }
        }
        start = end;
    }
    (f, c_full)
}

/// Run the recursive attention stack for `r_rounds` rounds.
///
/// With zero rounds the inputs pass through untouched and the trace is empty.
pub fn rca_forward(
    x0: &[DenseMatrix; 2],
    p: &ParamBlocks,
    r_rounds: usize,
    block: usize,
) -> Result<RcaTrace> {
    let n = x0[0].n_rows();
    let cache_c = n <= C_CACHE_LIMIT;
    let mut rounds = Vec::with_capacity(r_rounds);
    let mut current: [DenseMatrix; 2] = [x0[0].clone(), x0[1].clone()];
    for r in 1..=r_rounds {
        let e = DenseMatrix::hstack(&current[0], &current[1])?;
        let mut eprime = e.matmul(&p.w_tr)?;
        broadcast_add_row(&mut eprime, &p.b_tr);

        let mut p_anchor = Vec::with_capacity(2);
        let mut t = Vec::with_capacity(2);
        for m in [VISUAL, TEXTUAL] {
            p_anchor.push(eprime.matmul(&p.w_m[m])?);
            t.push(current[m].matmul(&p.w_a[m])?);
        }

        let mut f = Vec::with_capacity(2);
        let mut c = Vec::with_capacity(2);
        let mut x = Vec::with_capacity(2);
        for m in [VISUAL, TEXTUAL] {
            let (fm, cm) = rca_refine(&current[m], &p_anchor[m], &t[m], block, cache_c);
            let mut xm = current[m].matmul(&p.w_f[m])?;
            xm.add_assign(&fm)?;
            if !xm.is_finite() {
                return Err(CoreError::NonFinite(format!(
                    "attention round {r}, modality {m}, refinement stage"
                )));
            }
            f.push(fm);
            c.push(cm);
            x.push(xm);
        }
        let c = match (c.remove(0), c.remove(0)) {
            (Some(a), Some(b)) => Some([a, b]),
            _ => None,
        };
        let x = [x.remove(0), x.remove(0)];
        current = [x[0].clone(), x[1].clone()];
        rounds.push(RcaRound {
            eprime,
            p: [p_anchor.remove(0), p_anchor.remove(0)],
            t: [t.remove(0), t.remove(0)],
            c,
            f: [f.remove(0), f.remove(0)],
            x,
        });
    }
    Ok(RcaTrace { rounds })
}

/// Final attention outputs per modality (the inputs when no rounds ran).
pub fn rca_outputs<'a>(
    x0: &'a [DenseMatrix; 2],
    trace: &'a RcaTrace,
) -> [&'a DenseMatrix; 2] {
    match trace.rounds.last() {
        Some(r) => [&r.x[0], &r.x[1]],
        None => [&x0[0], &x0[1]],
    }
}

/// Collaborative propagation over the (sampled) interaction graph.
pub fn ui_gcn_forward(
    adj_sym: &CompressedSparseMatrix,
    p: &ParamBlocks,
    cfg: &TrainConfig,
) -> Result<UiTrace> {
    let mut layers = vec![p.id_emb.clone()];
    let mut pre = Vec::new();
    for l in 0..cfg.l_ui {
        let propagated = adj_sym.spmm(layers.last().unwrap())?;
        let next = if cfg.trainable_gcn {
            let u = propagated;
            let v = u.matmul(&p.w_gcn[l])?;
            pre.push(u);
            match cfg.gcn_activation {
                Activation::None => v,
                Activation::LeakyRelu => {
                    v.map(|x| if x > 0.0 { x } else { LEAKY_SLOPE * x })
                }
            }
        } else {
            propagated
        };
        layers.push(next);
    }
    let e_bar = match cfg.layer_readout {
        LayerReadout::Last => layers.last().unwrap().clone(),
        LayerReadout::Mean => {
            let mut acc = layers[0].clone();
            for l in &layers[1..] {
                acc.add_assign(l)?;
            }
            acc.scale(1.0 / layers.len() as f64);
            acc
        }
    };
    Ok(UiTrace { layers, pre, e_bar })
}

/// Semantic propagation: repeated weighted aggregation, no weights, no
/// activation.
pub fn ii_gcn_forward(
    s_tilde: &CompressedSparseMatrix,
    e_items: &DenseMatrix,
    l_ii: usize,
) -> Result<IiTrace> {
    let mut layers = vec![e_items.clone()];
    for _ in 0..l_ii {
        layers.push(s_tilde.spmm(layers.last().unwrap())?);
    }
    Ok(IiTrace { layers })
}

/// Semantic user profiles: plain sum of interacted items' embeddings.
pub fn user_semantic_profiles(
    g: &InteractionGraph,
    h_items: &DenseMatrix,
) -> Result<DenseMatrix> {
    g.adjacency.spmm(h_items)
}

/// z = e + [h_users; h_items].
pub fn fuse(
    e: &DenseMatrix,
    h_users: &DenseMatrix,
    h_items: &DenseMatrix,
) -> Result<DenseMatrix> {
    let h = DenseMatrix::vstack(h_users, h_items)?;
    let mut z = e.clone();
    z.add_assign(&h)?;
    Ok(z)
}

/// Preference score for (user, item): inner product of the fused rows.
pub fn score(z: &DenseMatrix, n_users: usize, user: usize, item: usize) -> f64 {
    dot(z.row(user), z.row(n_users + item))
}

/// Run the modality pipeline up to the semantic-graph feature input.
/// Returns `None` for variants that do not build the semantic graph.
pub fn graph_feature_input(
    p: &ParamBlocks,
    g: &InteractionGraph,
    feats: &ModalityFeatures,
    cfg: &TrainConfig,
) -> Result<Option<ModalityTrace>> {
    let variant = cfg.variant;
    if !variant.uses_semantic_graph() {
        return Ok(None);
    }
    let xi = project_modalities(feats, p)?;
    if variant.uses_rca() {
        let mut x0 = Vec::with_capacity(2);
        let mut agg = Vec::with_capacity(2);
        for m in [VISUAL, TEXTUAL] {
            let (profile, trace) =
                user_modality_profiles(g, &xi[m], cfg.aggregation, &p.q_att[m])?;
            x0.push(DenseMatrix::vstack(&profile, &xi[m])?);
            agg.push(trace);
        }
        let x0 = [x0.remove(0), x0.remove(0)];
        let rca = rca_forward(&x0, p, cfg.effective_r(), cfg.block)?;
        let outs = rca_outputs(&x0, &rca);
        let m = g.n_users();
        let n = g.n_items();
        let items_v = outs[VISUAL].row_slice(m, m + n);
        let items_t = outs[TEXTUAL].row_slice(m, m + n);
        let graph_input = GraphInput::Single(DenseMatrix::hstack(&items_v, &items_t)?);
        return Ok(Some(ModalityTrace {
            xi,
            agg: Some([agg.remove(0), agg.remove(0)]),
            x0: Some(x0),
            rca: Some(rca),
            graph_input,
        }));
    }
    let graph_input = match variant {
        Variant::CraneV => GraphInput::Single(xi[VISUAL].clone()),
        Variant::CraneT => GraphInput::Single(xi[TEXTUAL].clone()),
        Variant::CraneS => {
            let mut s = xi[VISUAL].clone();
            s.add_assign(&xi[TEXTUAL])?;
            GraphInput::Single(s)
        }
        Variant::CraneA => GraphInput::Pair(xi[VISUAL].clone(), xi[TEXTUAL].clone()),
        // plain concatenation bypasses the attention stack
        _ => GraphInput::Single(DenseMatrix::hstack(&xi[VISUAL], &xi[TEXTUAL])?),
    };
    Ok(Some(ModalityTrace {
        xi,
        agg: None,
        x0: None,
        rca: None,
        graph_input,
    }))
}

/// Full forward pass with trace.
pub fn forward_full(
    p: &ParamBlocks,
    ctx: &ForwardCtx<'_>,
    mode: BranchMode,
) -> Result<ForwardTrace> {
    let cfg = ctx.cfg;
    let g = ctx.graph;
    let m = g.n_users();
    let variant = cfg.variant;
    let propagate_ui = variant != Variant::WoGcn && mode != BranchMode::SemanticOnly;

    let (ui, e_bar) = if propagate_ui {
        let ui = ui_gcn_forward(ctx.adj_sym, p, cfg)?;
        let e_bar = ui.e_bar.clone();
        (Some(ui), e_bar)
    } else {
        (None, p.id_emb.clone())
    };

    let semantic_active = mode != BranchMode::CollabOnly
        && variant != Variant::WoItemGraph
        && !(mode == BranchMode::Joint && variant == Variant::WoDualFusion);

    if !semantic_active || (variant == Variant::WoGcn && mode == BranchMode::Joint) {
        if variant == Variant::WoGcn {
            // raw features: h_i = e_i, h_u aggregates interacted items
            let e_items = e_bar.row_slice(m, m + g.n_items());
            let h_users = user_semantic_profiles(g, &e_items)?;
            let z = fuse(&e_bar, &h_users, &e_items)?;
            return Ok(ForwardTrace {
                modality: None,
                sem_raw: None,
                sem: None,
                ui,
                ii: None,
                e_bar,
                h_users: Some(h_users),
                h_items: Some(e_items),
                z,
                mode,
            });
        }
        // collaborative-only path: z = e
        let z = e_bar.clone();
        return Ok(ForwardTrace {
            modality: None,
            sem_raw: None,
            sem: None,
            ui,
            ii: None,
            e_bar,
            h_users: None,
            h_items: None,
            z,
            mode,
        });
    }

    let support = ctx.support.ok_or_else(|| {
        CoreError::InvalidInput("semantic support required for this variant".into())
    })?;
    let modality = graph_feature_input(p, g, ctx.feats, cfg)?.ok_or_else(|| {
        CoreError::InvalidInput("variant disables the semantic graph".into())
    })?;
    let sem_raw = match &modality.graph_input {
        GraphInput::Single(x) => cosine_on_support(x, support)?,
        GraphInput::Pair(xv, xt) => avg_cosine_on_support(xv, xt, support)?,
    };
    let sem = sem_raw.row_normalize();

    let e_items = e_bar.row_slice(m, m + g.n_items());
    let ii = ii_gcn_forward(&sem, &e_items, cfg.l_ii)?;
    let h_items = ii.layers.last().unwrap().clone();
    let h_users = user_semantic_profiles(g, &h_items)?;

    let z = match mode {
        BranchMode::SemanticOnly => {
            // semantic branch alone: z = [h_u; h_i]
            DenseMatrix::vstack(&h_users, &h_items)?
        }
        _ => fuse(&e_bar, &h_users, &h_items)?,
    };
    if !z.is_finite() {
        return Err(CoreError::NonFinite("fused representations".into()));
    }
    Ok(ForwardTrace {
        modality: Some(modality),
        sem_raw: Some(sem_raw),
        sem: Some(sem),
        ui,
        ii: Some(ii),
        e_bar,
        h_users: Some(h_users),
        h_items: Some(h_items),
        z,
        mode,
    })
}
