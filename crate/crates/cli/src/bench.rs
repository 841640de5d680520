//! Scaling benchmark: per-size epoch timing with the dense attention stage
//! and the sparse propagation stage timed separately, plus memory accounting.

use std::fs;
use std::time::Instant;

use anyhow::{anyhow, bail, Result};
use crane_core::adam::AdamState;
use crane_core::backward::backward_full;
use crane_core::forward::{forward_full, graph_feature_input, BranchMode, ForwardCtx, GraphInput};
use crane_core::graph::{build_interaction_graph, build_semantic_graph, build_semantic_graph_avg, dropedge_sample, full_graph};
use crane_core::loss::total_loss;
use crane_core::params::{ModelDims, ParamBlocks};
use crane_core::sampler::sample_triplets;
use crane_core::synth::bench_dataset;
use crane_core::{SeededRng, TrainConfig};
use serde::Serialize;

use crate::config_file::ExperimentConfig;

/// Measurements for one problem size.
#[derive(Debug, Clone, Serialize)]
pub struct BenchRow {
    pub n_items: usize,
    pub n_users: usize,
    pub n_edges: usize,
    /// One full training epoch: graph rebuild, edge sampling, one mini-batch
    /// forward/backward/update.
    pub epoch_seconds: f64,
    /// Dense cross-modal attention stage alone.
    pub attention_seconds: f64,
    /// Sparse propagation on both graphs alone.
    pub sparse_seconds: f64,
    /// Logical size of the symmetric adjacency in single-precision CSR form.
    pub csr_f32_bytes: usize,
    /// Process peak resident set, from /proc/self/status VmHWM (0 when the
    /// platform does not expose it).
    pub peak_rss_bytes: usize,
}

/// Lean model settings used for scaling runs, so the measured trend reflects
/// graph size rather than embedding width.
fn bench_train_config(seed: u64) -> TrainConfig {
    let mut cfg = TrainConfig::default();
    cfg.d = 16;
    cfg.d_lat = 8;
    cfg.d_joint = 8;
    cfg.r = 1;
    cfg.l_ui = 2;
    cfg.l_ii = 1;
    cfg.k = 10;
    cfg.batch_size = 1024;
    cfg.seed = seed;
    cfg
}

/// Peak resident set size in bytes, read from the kernel's VmHWM counter.
pub fn peak_rss_bytes() -> usize {
    let Ok(status) = fs::read_to_string("/proc/self/status") else {
        return 0;
    };
    for line in status.lines() {
        if let Some(rest) = line.strip_prefix("VmHWM:") {
            let kb: usize = rest
                .trim()
                .trim_end_matches("kB")
                .trim()
                .parse()
                .unwrap_or(0);
            return kb * 1024;
        }
    }
    0
}

/// Run the scaling benchmark over the configured item counts.
pub fn run_bench(cfg: &ExperimentConfig) -> Result<Vec<BenchRow>> {
    let mut rows = Vec::new();
    for (idx, &n_items) in cfg.bench.item_counts.iter().enumerate() {
        if n_items == 0 {
            bail!("bench item counts must be positive");
        }
        let n_users = ((n_items as f64 * cfg.bench.users_per_item).round() as usize).max(1);
        let tcfg = bench_train_config(cfg.train.seed);
        let mut rng = SeededRng::new(tcfg.seed).fork(128 + idx as u64);
        let data = bench_dataset(
            n_users,
            n_items,
            cfg.bench.interactions_per_user,
            8,
            8,
            &mut rng,
        )
        .map_err(|e| anyhow!("{e}"))?;
        let graph = build_interaction_graph(&data.pairs, n_users, n_items)
            .map_err(|e| anyhow!("{e}"))?;
        let full = full_graph(&graph);
        let dims = ModelDims {
            n_users,
            n_items,
            d_visual: data.feats.x_visual.n_cols(),
            d_textual: data.feats.x_textual.n_cols(),
        };
        let mut init_rng = SeededRng::new(tcfg.seed).fork(1);
        let mut params = ParamBlocks::init(&tcfg, &dims, &mut init_rng);

        // stage: dense attention stack over all entities
        let t0 = Instant::now();
        let mt = graph_feature_input(&params, &graph, &data.feats, &tcfg)
            .map_err(|e| anyhow!("{e}"))?
            .expect("full variant builds graph features");
        let attention_seconds = t0.elapsed().as_secs_f64();

        let sem = match &mt.graph_input {
            GraphInput::Single(x) => build_semantic_graph(x, tcfg.k, tcfg.block, 0),
            GraphInput::Pair(xv, xt) => {
                build_semantic_graph_avg(xv, xt, tcfg.k, tcfg.block, 0)
            }
        }
        .map_err(|e| anyhow!("{e}"))?;
        let support = sem.s_tilde;

        // stage: sparse propagation on both graphs
        let t1 = Instant::now();
        let ui = crane_core::forward::ui_gcn_forward(&full.adjacency_sym, &params, &tcfg)
            .map_err(|e| anyhow!("{e}"))?;
        let e_items = ui.e_bar.row_slice(n_users, n_users + n_items);
        let _ii = crane_core::forward::ii_gcn_forward(&support, &e_items, tcfg.l_ii)
            .map_err(|e| anyhow!("{e}"))?;
        let sparse_seconds = t1.elapsed().as_secs_f64();

        // one full training epoch with a single mini-batch
        let mut opt = AdamState::new(&params);
        let mut drop_rng = SeededRng::new(tcfg.seed).fork(2);
        let mut samp_rng = SeededRng::new(tcfg.seed).fork(3);
        let t2 = Instant::now();
        let sampled = dropedge_sample(&graph, &mut drop_rng);
        let batch =
            sample_triplets(&graph, tcfg.batch_size, &mut samp_rng).map_err(|e| anyhow!("{e}"))?;
        let ctx = ForwardCtx {
            graph: &graph,
            adj_sym: &sampled.adjacency_sym,
            support: Some(&support),
            feats: &data.feats,
            cfg: &tcfg,
        };
        let trace =
            forward_full(&params, &ctx, BranchMode::Joint).map_err(|e| anyhow!("{e}"))?;
        let _terms =
            total_loss(&params, &trace, &batch, &tcfg, n_users).map_err(|e| anyhow!("{e}"))?;
        let grads =
            backward_full(&params, &ctx, &trace, &batch).map_err(|e| anyhow!("{e}"))?;
        opt.step(&mut params, &grads, tcfg.lr)
            .map_err(|e| anyhow!("{e}"))?;
        let epoch_seconds = t2.elapsed().as_secs_f64() + attention_seconds;

        rows.push(BenchRow {
            n_items,
            n_users,
            n_edges: graph.n_edges(),
            epoch_seconds,
            attention_seconds,
            sparse_seconds,
            csr_f32_bytes: full.adjacency_sym.to_f32_storage().heap_bytes(),
            peak_rss_bytes: peak_rss_bytes(),
        });
    }
    Ok(rows)
}
