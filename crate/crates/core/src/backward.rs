//! Exact reverse-mode gradients for the full batch objective.
//!
//! Every formula here mirrors one forward stage in `forward.rs`; the pair is
//! validated end to end against a central finite-difference oracle. The
//! semantic graph's neighbor support is frozen between rebuilds, but its
//! similarity values are recomputed from the current parameters each pass and
//! differentiated through.

use alloc::vec;
use alloc::vec::Vec;

use crate::config::{Activation, LayerReadout, TrainConfig, Variant, LEAKY_SLOPE};
use crate::dense::{dot, DenseMatrix};
use crate::error::{CoreError, Result};
use crate::forward::{
    forward_full, AggTrace, BranchMode, ForwardCtx, ForwardTrace, GraphInput, ModalityTrace,
    RcaTrace, UiTrace,
};
use crate::graph::InteractionGraph;
use crate::loss::{contrastive_active, total_loss, weight_in_use, Batch};
use crate::math;
use crate::params::ParamBlocks;
use crate::sparse::{row_norms, CompressedSparseMatrix, ROW_SUM_EPS};

/// Objective value for a frozen-support context. This is the exact function
/// [`backward_full`] differentiates, and what the finite-difference oracle
/// probes.
pub fn batch_loss(
    p: &ParamBlocks,
    ctx: &ForwardCtx<'_>,
    batch: &Batch,
    mode: BranchMode,
) -> Result<f64> {
    let trace = forward_full(p, ctx, mode)?;
    Ok(total_loss(p, &trace, batch, ctx.cfg, ctx.graph.n_users())?.total)
}

/// Central finite difference of [`batch_loss`] in flat coordinate `idx`.
pub fn finite_diff_grad(
    p: &ParamBlocks,
    ctx: &ForwardCtx<'_>,
    batch: &Batch,
    mode: BranchMode,
    idx: usize,
    eps: f64,
) -> Result<f64> {
    let mut plus = p.clone();
    plus.add_flat(idx, eps);
    let mut minus = p.clone();
    minus.add_flat(idx, -eps);
    Ok((batch_loss(&plus, ctx, batch, mode)? - batch_loss(&minus, ctx, batch, mode)?)
        / (2.0 * eps))
}

fn add_rows(dst: &mut DenseMatrix, dst_start: usize, src: &DenseMatrix) {
    for i in 0..src.n_rows() {
        for (d, &s) in dst.row_mut(dst_start + i).iter_mut().zip(src.row(i)) {
            *d += s;
        }
    }
}

/// dL/dz of the pairwise ranking term.
fn bpr_backward(
    z: &DenseMatrix,
    n_users: usize,
    batch: &Batch,
    g_z: &mut DenseMatrix,
) -> Result<()> {
    if batch.users.len() != batch.pos.len() || batch.users.len() != batch.neg.len() {
        return Err(CoreError::ShapeMismatch(
            "bpr backward: triplet arrays differ in length".into(),
        ));
    }
    let d = z.n_cols();
    for ((&u, &pi), &ni) in batch.users.iter().zip(&batch.pos).zip(&batch.neg) {
        let (u, pi, ni) = (u as usize, n_users + pi as usize, n_users + ni as usize);
        let margin = dot(z.row(u), z.row(pi)) - dot(z.row(u), z.row(ni));
        // d softplus(-x)/dx = -sigmoid(-x)
        let c = -math::sigmoid(-margin);
        for col in 0..d {
            let zu = z.get(u, col);
            let zp = z.get(pi, col);
            let zn = z.get(ni, col);
            *g_z.row_mut(u).get_mut(col).unwrap() += c * (zp - zn);
            *g_z.row_mut(pi).get_mut(col).unwrap() += c * zu;
            *g_z.row_mut(ni).get_mut(col).unwrap() -= c * zu;
        }
    }
    Ok(())
}

/// Backward of the InfoNCE sum with cosine similarities; adds `scale` times
/// the gradient into `g_a` (anchor view) and `g_b` (contrast view).
fn infonce_backward(
    a: &DenseMatrix,
    b: &DenseMatrix,
    rows_a: &[usize],
    rows_b: &[usize],
    tau: f64,
    scale: f64,
    g_a: &mut DenseMatrix,
    g_b: &mut DenseMatrix,
) {
    let n = rows_a.len();
    let d = a.n_cols();
    let mut sims = vec![0.0; n];
    for i in 0..n {
        let ai = a.row(rows_a[i]);
        let na = math::sqrt(dot(ai, ai));
        for j in 0..n {
            let bj = b.row(rows_b[j]);
            let nb = math::sqrt(dot(bj, bj));
            sims[j] = if na == 0.0 || nb == 0.0 {
                0.0
            } else {
                dot(ai, bj) / (na * nb * tau)
            };
        }
        let max = sims.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut soft: Vec<f64> = sims.iter().map(|&s| math::exp(s - max)).collect();
        let sum: f64 = soft.iter().sum();
        for s in &mut soft {
            *s /= sum;
        }
        for j in 0..n {
            let mut w = soft[j];
            if j == i {
                w -= 1.0;
            }
            let w = w * scale / tau;
            if w == 0.0 {
                continue;
            }
            let bj = b.row(rows_b[j]);
            let nb = math::sqrt(dot(bj, bj));
            let ai = a.row(rows_a[i]);
            let na = math::sqrt(dot(ai, ai));
            if na == 0.0 || nb == 0.0 {
                // similarity pinned at zero; no gradient by convention
                continue;
            }
            let cos = dot(ai, bj) / (na * nb);
            let inv = 1.0 / (na * nb);
            for c in 0..d {
                let av = a.get(rows_a[i], c);
                let bv = b.get(rows_b[j], c);
                *g_a.row_mut(rows_a[i]).get_mut(c).unwrap() +=
                    w * (bv * inv - cos * av / (na * na));
                *g_b.row_mut(rows_b[j]).get_mut(c).unwrap() +=
                    w * (av * inv - cos * bv / (nb * nb));
            }
        }
    }
}

/// Backward of row normalization on the frozen support.
/// Rows that hit the uniform fallback are locally constant.
fn row_normalize_backward(
    raw: &CompressedSparseMatrix,
    normalized: &CompressedSparseMatrix,
    g_norm: &[f64],
) -> Vec<f64> {
    let mut g_raw = vec![0.0; raw.nnz()];
    for i in 0..raw.n_rows() {
        let lo = raw.row_offsets()[i];
        let hi = raw.row_offsets()[i + 1];
        if lo == hi {
            continue;
        }
        let sum: f64 = raw.values()[lo..hi].iter().sum();
        if sum <= ROW_SUM_EPS {
            continue;
        }
        let inner: f64 = (lo..hi).map(|p| g_norm[p] * normalized.values()[p]).sum();
        for p in lo..hi {
            g_raw[p] = (g_norm[p] - inner) / sum;
        }
    }
    g_raw
}

/// Backward of cosine similarities on a support into the feature rows.
/// `g_vals[p] * d cos(x_i, x_j) / d x` for every stored entry (i, j).
fn cosine_support_backward(
    x: &DenseMatrix,
    support: &CompressedSparseMatrix,
    g_vals: &[f64],
    g_x: &mut DenseMatrix,
) {
    let norms = row_norms(x);
    let d = x.n_cols();
    for i in 0..support.n_rows() {
        let lo = support.row_offsets()[i];
        let hi = support.row_offsets()[i + 1];
        for p in lo..hi {
            let gv = g_vals[p];
            if gv == 0.0 {
                continue;
            }
            let j = support.col_indices()[p] as usize;
            let (ni, nj) = (norms[i], norms[j]);
            if ni == 0.0 || nj == 0.0 {
                continue;
            }
            let cos = dot(x.row(i), x.row(j)) / (ni * nj);
            let inv = 1.0 / (ni * nj);
            for c in 0..d {
                let xi = x.get(i, c);
                let xj = x.get(j, c);
                *g_x.row_mut(i).get_mut(c).unwrap() += gv * (xj * inv - cos * xi / (ni * ni));
                *g_x.row_mut(j).get_mut(c).unwrap() += gv * (xi * inv - cos * xj / (nj * nj));
            }
        }
    }
}

/// Backward through the recursive attention stack. Consumes the gradient of
/// the final round outputs and returns the gradient of the round-0 inputs,
/// accumulating weight gradients along the way.
fn rca_backward(
    x0: &[DenseMatrix; 2],
    rca: &RcaTrace,
    p: &ParamBlocks,
    mut g_out: [DenseMatrix; 2],
    block: usize,
    grads: &mut ParamBlocks,
) -> Result<[DenseMatrix; 2]> {
    let d_lat = x0[0].n_cols();
    let block = block.max(1);
    for r in (0..rca.rounds.len()).rev() {
        let round = &rca.rounds[r];
        let x_prev: [&DenseMatrix; 2] = if r == 0 {
            [&x0[0], &x0[1]]
        } else {
            [&rca.rounds[r - 1].x[0], &rca.rounds[r - 1].x[1]]
        };
        let n_ent = x_prev[0].n_rows();
        let mut g_prev = [
            DenseMatrix::zeros(n_ent, d_lat),
            DenseMatrix::zeros(n_ent, d_lat),
        ];
        let mut g_eprime = DenseMatrix::zeros(n_ent, round.eprime.n_cols());
        for m in 0..2 {
            let g_x = &g_out[m];
            // x = f + x_prev w_f
            grads.w_f[m].add_assign(&x_prev[m].t_matmul(g_x)?)?;
            g_prev[m].add_assign(&g_x.matmul_bt(&p.w_f[m])?)?;

            // f = relu(C t), C = tanh(x_prev p^T), processed in row blocks
            let mut g_t = DenseMatrix::zeros(n_ent, d_lat);
            let mut g_p = DenseMatrix::zeros(n_ent, d_lat);
            let mut start = 0;
            while start < n_ent {
                let end = (start + block).min(n_ent);
                let rows = end - start;
                let x_prev_blk = x_prev[m].row_slice(start, end);
                let c_blk = match &round.c {
                    Some(c) => c[m].row_slice(start, end),
                    None => {
                        let mut cb = x_prev_blk.matmul_bt(&round.p[m])?;
                        for v in cb.values_mut() {
                            *v = math::tanh(*v);
                        }
                        cb
                    }
                };
                // relu mask from the stored activations
                let mut g_y = DenseMatrix::zeros(rows, d_lat);
                for (bi, i) in (start..end).enumerate() {
                    for ((gy, &gx), &fv) in g_y
                        .row_mut(bi)
                        .iter_mut()
                        .zip(g_x.row(i))
                        .zip(round.f[m].row(i))
                    {
                        if fv > 0.0 {
                            *gy = gx;
                        }
                    }
                }
                g_t.add_assign(&c_blk.t_matmul(&g_y)?)?;
                let mut g_zc = g_y.matmul_bt(&round.t[m])?;
                for (gz, &cv) in g_zc.values_mut().iter_mut().zip(c_blk.values()) {
                    *gz *= 1.0 - cv * cv;
                }
                let g_prev_blk = g_zc.matmul(&round.p[m])?;
                add_rows(&mut g_prev[m], start, &g_prev_blk);
                g_p.add_assign(&g_zc.t_matmul(&x_prev_blk)?)?;
                start = end;
            }
            // t = x_prev w_a
            grads.w_a[m].add_assign(&x_prev[m].t_matmul(&g_t)?)?;
            g_prev[m].add_assign(&g_t.matmul_bt(&p.w_a[m])?)?;
            // p = eprime w_m
            grads.w_m[m].add_assign(&round.eprime.t_matmul(&g_p)?)?;
            g_eprime.add_assign(&g_p.matmul_bt(&p.w_m[m])?)?;
        }
        // eprime = [xv, xt] w_tr + b_tr
        let e = DenseMatrix::hstack(x_prev[0], x_prev[1])?;
        grads.w_tr.add_assign(&e.t_matmul(&g_eprime)?)?;
        for i in 0..g_eprime.n_rows() {
            for (gb, &ge) in grads.b_tr.iter_mut().zip(g_eprime.row(i)) {
                *gb += ge;
            }
        }
        let g_e = g_eprime.matmul_bt(&p.w_tr)?;
        let (ge_v, ge_t) = g_e.hsplit(d_lat);
        g_prev[0].add_assign(&ge_v)?;
        g_prev[1].add_assign(&ge_t)?;
        g_out = g_prev;
    }
    Ok(g_out)
}

/// Backward of one modality's user-profile aggregation.
fn aggregation_backward(
    g: &InteractionGraph,
    xi: &DenseMatrix,
    profile: &DenseMatrix,
    agg: &AggTrace,
    query: &[f64],
    g_profile: &DenseMatrix,
    g_xi: &mut DenseMatrix,
    g_q: &mut [f64],
) -> Result<()> {
    let d = xi.n_cols();
    match agg {
        AggTrace::Sum => {
            g_xi.add_assign(&g.adjacency.spmm_t(g_profile)?)?;
        }
        AggTrace::Mean => {
            let mut scaled = g_profile.clone();
            for u in 0..g.n_users() {
                let deg = g.user_degrees[u];
                if deg > 0.0 {
                    for v in scaled.row_mut(u) {
                        *v /= deg;
                    }
                }
            }
            g_xi.add_assign(&g.adjacency.spmm_t(&scaled)?)?;
        }
        AggTrace::Max(argmax) => {
            for u in 0..g.n_users() {
                for c in 0..d {
                    let src = argmax[u * d + c];
                    if src != u32::MAX {
                        *g_xi.row_mut(src as usize).get_mut(c).unwrap() +=
                            g_profile.get(u, c);
                    }
                }
            }
        }
        AggTrace::Attention(alphas) => {
            let scale = 1.0 / math::sqrt(d as f64);
            for u in 0..g.n_users() {
                let neigh = &g.user_neighbors[u];
                if neigh.is_empty() {
                    continue;
                }
                let gu = g_profile.row(u);
                let out_u = profile.row(u);
                for (&i, &alpha) in neigh.iter().zip(&alphas[u]) {
                    let xi_row = xi.row(i as usize);
                    // softmax jacobian applied to the score of neighbor i
                    let mut gs = 0.0;
                    for c in 0..d {
                        gs += alpha * (xi_row[c] - out_u[c]) * gu[c];
                    }
                    for c in 0..d {
                        *g_xi.row_mut(i as usize).get_mut(c).unwrap() +=
                            alpha * gu[c] + gs * query[c] * scale;
                        // accumulated after the row borrow ends
                    }
                    for c in 0..d {
                        g_q[c] += gs * xi.get(i as usize, c) * scale;
                    }
                }
            }
        }
    }
    Ok(())
}

/// Backward through the collaborative propagation into the base embeddings.
fn ui_gcn_backward(
    adj_sym: &CompressedSparseMatrix,
    ui: &UiTrace,
    p: &ParamBlocks,
    cfg: &TrainConfig,
    g_e_bar: &DenseMatrix,
    grads: &mut ParamBlocks,
) -> Result<()> {
    let l_total = ui.layers.len() - 1;
    let coeff = |l: usize| match cfg.layer_readout {
        LayerReadout::Mean => 1.0 / (l_total + 1) as f64,
        LayerReadout::Last => {
            if l == l_total {
                1.0
            } else {
                0.0
            }
        }
    };
    let mut g_cur = g_e_bar.clone();
    g_cur.scale(coeff(l_total));
    for l in (0..l_total).rev() {
        let g_u = if cfg.trainable_gcn {
            let v = ui.pre[l].matmul(&p.w_gcn[l])?;
            let mut g_v = g_cur;
            if cfg.gcn_activation == Activation::LeakyRelu {
                for (gv, &vv) in g_v.values_mut().iter_mut().zip(v.values()) {
                    if vv <= 0.0 {
                        *gv *= LEAKY_SLOPE;
                    }
                }
            }
            grads.w_gcn[l].add_assign(&ui.pre[l].t_matmul(&g_v)?)?;
            g_v.matmul_bt(&p.w_gcn[l])?
        } else {
            g_cur
        };
        // the symmetric matrix is its own transpose
        g_cur = adj_sym.spmm(&g_u)?;
        g_cur.add_scaled_assign(g_e_bar, coeff(l))?;
    }
    grads.id_emb.add_assign(&g_cur)?;
    Ok(())
}

/// Backward through the modality pipeline, from the semantic-graph feature
/// gradient down to the projection matrices.
fn modality_backward(
    p: &ParamBlocks,
    ctx: &ForwardCtx<'_>,
    mt: &ModalityTrace,
    g_input: GraphInput,
    grads: &mut ParamBlocks,
) -> Result<()> {
    let cfg = ctx.cfg;
    let g = ctx.graph;
    let m = g.n_users();
    let n = g.n_items();
    let d_lat = cfg.d_lat;
    let mut g_xi = [
        DenseMatrix::zeros(n, d_lat),
        DenseMatrix::zeros(n, d_lat),
    ];

    if let (Some(x0), Some(rca)) = (&mt.x0, &mt.rca) {
        // graph input was hstack of the item rows of both modality outputs
        let g_single = match g_input {
            GraphInput::Single(gm) => gm,
            GraphInput::Pair(..) => {
                return Err(CoreError::InvalidInput(
                    "paired gradient for an attention-stack variant".into(),
                ))
            }
        };
        let (gi_v, gi_t) = g_single.hsplit(d_lat);
        let mut g_out = [
            DenseMatrix::zeros(m + n, d_lat),
            DenseMatrix::zeros(m + n, d_lat),
        ];
        add_rows(&mut g_out[0], m, &gi_v);
        add_rows(&mut g_out[1], m, &gi_t);
        let g_x0 = rca_backward(x0, rca, p, g_out, cfg.block, grads)?;
        let aggs = mt.agg.as_ref().expect("attention path stores agg traces");
        for md in 0..2 {
            // x0 = [profile; xi]
            let g_profile = g_x0[md].row_slice(0, m);
            let g_items = g_x0[md].row_slice(m, m + n);
            g_xi[md].add_assign(&g_items)?;
            let profile = x0[md].row_slice(0, m);
            let mut g_q = vec![0.0; d_lat];
            aggregation_backward(
                g,
                &mt.xi[md],
                &profile,
                &aggs[md],
                &p.q_att[md],
                &g_profile,
                &mut g_xi[md],
                &mut g_q,
            )?;
            for (gq, q) in grads.q_att[md].iter_mut().zip(&g_q) {
                *gq += q;
            }
        }
    } else {
        match (g_input, cfg.variant) {
            (GraphInput::Single(gm), Variant::CraneV) => {
                g_xi[0].add_assign(&gm)?;
            }
            (GraphInput::Single(gm), Variant::CraneT) => {
                g_xi[1].add_assign(&gm)?;
            }
            (GraphInput::Single(gm), Variant::CraneS) => {
                g_xi[0].add_assign(&gm)?;
                g_xi[1].add_assign(&gm)?;
            }
            (GraphInput::Pair(gv, gt), Variant::CraneA) => {
                g_xi[0].add_assign(&gv)?;
                g_xi[1].add_assign(&gt)?;
            }
            (GraphInput::Single(gm), _) => {
                // plain concatenation
                let (gv, gt) = gm.hsplit(d_lat);
                g_xi[0].add_assign(&gv)?;
                g_xi[1].add_assign(&gt)?;
            }
            (GraphInput::Pair(..), v) => {
                return Err(CoreError::InvalidInput(alloc::format!(
                    "paired gradient for variant {}",
                    v.name()
                )))
            }
        }
    }

    grads.proj_v.add_assign(&ctx.feats.x_visual.t_matmul(&g_xi[0])?)?;
    grads.proj_t.add_assign(&ctx.feats.x_textual.t_matmul(&g_xi[1])?)?;
    Ok(())
}

/// Gradient of the full batch objective with respect to every parameter.
pub fn backward_full(
    p: &ParamBlocks,
    ctx: &ForwardCtx<'_>,
    trace: &ForwardTrace,
    batch: &Batch,
) -> Result<ParamBlocks> {
    let cfg = ctx.cfg;
    let g = ctx.graph;
    let m = g.n_users();
    let n = g.n_items();
    let d = cfg.d;
    let mut grads = p.zeros_like();

    let mut g_z = DenseMatrix::zeros(m + n, d);
    bpr_backward(&trace.z, m, batch, &mut g_z)?;

    // split the score gradient into the two fused summands
    let z_has_e = trace.mode != BranchMode::SemanticOnly;
    let z_has_h =
        trace.h_users.is_some() && (trace.mode == BranchMode::SemanticOnly
            || (trace.mode == BranchMode::Joint && trace.h_items.is_some()));
    let mut g_e_bar = if z_has_e {
        g_z.clone()
    } else {
        DenseMatrix::zeros(m + n, d)
    };
    let (mut g_h_users, mut g_h_items) = if z_has_h {
        (g_z.row_slice(0, m), g_z.row_slice(m, m + n))
    } else {
        (DenseMatrix::zeros(m, d), DenseMatrix::zeros(n, d))
    };

    let beta = if cfg.variant == Variant::WoCl { 0.0 } else { cfg.beta };
    if contrastive_active(cfg, trace) {
        let h_users = trace.h_users.as_ref().unwrap();
        let h_items = trace.h_items.as_ref().unwrap();
        let users: Vec<usize> = batch.unique_users().iter().map(|&u| u as usize).collect();
        let items: Vec<usize> = batch.unique_pos().iter().map(|&i| i as usize).collect();
        infonce_backward(
            &trace.e_bar,
            h_users,
            &users,
            &users,
            cfg.tau,
            beta,
            &mut g_e_bar,
            &mut g_h_users,
        );
        let e_item_rows: Vec<usize> = items.iter().map(|&i| m + i).collect();
        infonce_backward(
            &trace.e_bar,
            h_items,
            &e_item_rows,
            &items,
            cfg.tau,
            beta,
            &mut g_e_bar,
            &mut g_h_items,
        );
    }

    if trace.h_users.is_some() {
        // h_users = A h_items
        g_h_items.add_assign(&g.adjacency.spmm_t(&g_h_users)?)?;

        if let (Some(ii), Some(sem), Some(sem_raw)) = (&trace.ii, &trace.sem, &trace.sem_raw) {
            // chain back through the semantic propagation layers
            let mut g_sem_vals = vec![0.0; sem.nnz()];
            let mut g_cur = g_h_items;
            for l in (1..ii.layers.len()).rev() {
                let h_prev = &ii.layers[l - 1];
                for i in 0..n {
                    let lo = sem.row_offsets()[i];
                    let hi = sem.row_offsets()[i + 1];
                    for pos in lo..hi {
                        let j = sem.col_indices()[pos] as usize;
                        g_sem_vals[pos] += dot(g_cur.row(i), h_prev.row(j));
                    }
                }
                g_cur = sem.spmm_t(&g_cur)?;
            }
            // h^{(0)} came from the item rows of the collaborative readout
            add_rows(&mut g_e_bar, m, &g_cur);

            let g_raw = row_normalize_backward(sem_raw, sem, &g_sem_vals);
            let mt = trace.modality.as_ref().expect("semantic path has modality");
            let support = ctx.support.expect("semantic path has support");
            let g_input = match &mt.graph_input {
                GraphInput::Single(x) => {
                    let mut gx = DenseMatrix::zeros(x.n_rows(), x.n_cols());
                    cosine_support_backward(x, support, &g_raw, &mut gx);
                    GraphInput::Single(gx)
                }
                GraphInput::Pair(xv, xt) => {
                    // averaged similarities: half the gradient to each map
                    let half: Vec<f64> = g_raw.iter().map(|&v| 0.5 * v).collect();
                    let mut gv = DenseMatrix::zeros(xv.n_rows(), xv.n_cols());
                    let mut gt = DenseMatrix::zeros(xt.n_rows(), xt.n_cols());
                    cosine_support_backward(xv, support, &half, &mut gv);
                    cosine_support_backward(xt, support, &half, &mut gt);
                    GraphInput::Pair(gv, gt)
                }
            };
            modality_backward(p, ctx, mt, g_input, &mut grads)?;
        } else {
            // no propagation: h_items were the raw item embeddings
            add_rows(&mut g_e_bar, m, &g_h_items);
        }
    }

    match &trace.ui {
        Some(ui) => ui_gcn_backward(ctx.adj_sym, ui, p, cfg, &g_e_bar, &mut grads)?,
        None => grads.id_emb.add_assign(&g_e_bar)?,
    }

    // L2 over the touched embedding rows and the in-use weight blocks
    let two_lambda = 2.0 * cfg.lambda;
    if two_lambda != 0.0 {
        for r in batch.unique_entities(m) {
            for (gv, &pv) in grads.id_emb.row_mut(r).iter_mut().zip(p.id_emb.row(r)) {
                *gv += two_lambda * pv;
            }
        }
        let sources: Vec<(&'static str, Vec<f64>)> = p
            .blocks()
            .iter()
            .map(|(name, vals)| (*name, vals.to_vec()))
            .collect();
        for ((name, dst), (_, src)) in grads.blocks_mut().into_iter().zip(sources) {
            if name == "id_emb" || !weight_in_use(name, cfg) {
                continue;
            }
            for (gv, pv) in dst.iter_mut().zip(src) {
                *gv += two_lambda * pv;
            }
        }
    }

    if !grads.is_finite() {
        return Err(CoreError::NonFinite("parameter gradients".into()));
    }
    Ok(grads)
}
