//! Orchestration shared by the CLI subcommands: dataset assembly, the
//! preprocess/split pipeline, training runs and artifact writing.

use std::path::Path;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use crane_core::eval::{evaluate_topk, preprocess, split_811};
use crane_core::forward::ModalityFeatures;
use crane_core::graph::build_interaction_graph;
use crane_core::synth::planted_blocks;
use crane_core::train::{train, Clock, TrainData, TrainOutcome};
use crane_core::{DenseMatrix, InteractionGraph, SeededRng, TrainConfig, Variant};
use serde::Serialize;

use crate::config_file::ExperimentConfig;
use crate::data::{load_crnf, load_interactions, save_crnf, CrnfDtype};
use crate::report::MetricsReport;

/// Monotonic wall clock for epoch timing.
pub struct RealClock(Instant);

impl RealClock {
    pub fn new() -> Self {
        RealClock(Instant::now())
    }
}

impl Default for RealClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for RealClock {
    fn now(&mut self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

/// Raw interactions plus aligned per-item modality features.
pub struct Dataset {
    pub name: String,
    pub pairs: Vec<(u32, u32)>,
    pub n_users: usize,
    pub n_items: usize,
    pub feats: ModalityFeatures,
}

/// Generate the synthetic planted-block dataset described by the config.
pub fn synthetic_dataset(cfg: &ExperimentConfig) -> Result<Dataset> {
    let s = &cfg.synth;
    // a stream well away from the trainer's forks of the same seed
    let mut rng = SeededRng::new(cfg.train.seed).fork(64);
    let d = planted_blocks(
        s.users_per_block,
        s.items_per_block,
        s.blocks,
        s.p_in,
        s.p_cross,
        crane_core::eval::MIN_USER_INTERACTIONS,
        s.d_visual,
        s.d_textual,
        s.noise,
        &mut rng,
    )
    .map_err(|e| anyhow!("{e}"))?;
    Ok(Dataset {
        name: cfg.dataset.clone(),
        pairs: d.pairs,
        n_users: d.n_users,
        n_items: d.n_items,
        feats: d.feats,
    })
}

/// Load `interactions.tsv`, `visual.crnf` and `textual.crnf` from a dataset
/// directory.
pub fn dataset_from_dir(cfg: &ExperimentConfig, dir: &Path) -> Result<Dataset> {
    let inter = load_interactions(&dir.join("interactions.tsv"))?;
    let x_visual = load_crnf(&dir.join("visual.crnf"))?;
    let x_textual = load_crnf(&dir.join("textual.crnf"))?;
    for (name, m) in [("visual", &x_visual), ("textual", &x_textual)] {
        if m.n_rows() != inter.n_items() {
            bail!(
                "{name} features have {} rows but the log names {} items",
                m.n_rows(),
                inter.n_items()
            );
        }
    }
    Ok(Dataset {
        name: cfg.dataset.clone(),
        n_users: inter.n_users(),
        n_items: inter.n_items(),
        pairs: inter.pairs,
        feats: ModalityFeatures { x_visual, x_textual },
    })
}

/// Resolve the dataset for a run: an explicit directory wins, otherwise the
/// synthetic generator is used.
pub fn resolve_dataset(
    cfg: &ExperimentConfig,
    data_dir: Option<&Path>,
    synthetic: bool,
) -> Result<Dataset> {
    match data_dir {
        Some(dir) if !synthetic => dataset_from_dir(cfg, dir),
        _ => synthetic_dataset(cfg),
    }
}

fn select_rows(m: &DenseMatrix, rows: &[u32]) -> Result<DenseMatrix> {
    let d = m.n_cols();
    let mut values = Vec::with_capacity(rows.len() * d);
    for &r in rows {
        if r as usize >= m.n_rows() {
            bail!("feature row {r} out of range");
        }
        values.extend_from_slice(m.row(r as usize));
    }
    DenseMatrix::from_vec(rows.len(), d, values).map_err(|e| anyhow!("{e}"))
}

/// A dataset after filtering, reindexing and the per-user 8:1:1 split.
pub struct Prepared {
    pub graph: InteractionGraph,
    pub feats: ModalityFeatures,
    /// Sorted held-out validation items per user.
    pub valid_relevant: Vec<Vec<u32>>,
    /// Sorted held-out test items per user.
    pub test_relevant: Vec<Vec<u32>>,
    /// Sorted train+valid items per user, the test-time ranking mask.
    pub test_exclude: Vec<Vec<u32>>,
    pub n_users: usize,
}

fn bucket(pairs: &[(u32, u32)], n_users: usize, sort: bool) -> Vec<Vec<u32>> {
    let mut out = vec![Vec::new(); n_users];
    for &(u, i) in pairs {
        out[u as usize].push(i);
    }
    if sort {
        for v in &mut out {
            v.sort_unstable();
        }
    }
    out
}

/// Filter, reindex, split and build the training graph.
pub fn prepare(ds: &Dataset, split_seed: u64) -> Result<Prepared> {
    let pre =
        preprocess(&ds.pairs, ds.n_users, ds.n_items).map_err(|e| anyhow!("{e}"))?;
    if pre.pairs.is_empty() {
        bail!("no interactions survive preprocessing");
    }
    let feats = ModalityFeatures {
        x_visual: select_rows(&ds.feats.x_visual, &pre.item_origin)?,
        x_textual: select_rows(&ds.feats.x_textual, &pre.item_origin)?,
    };
    let split = split_811(&pre.pairs, pre.n_users, split_seed);
    let graph = build_interaction_graph(&split.train, pre.n_users, pre.n_items)
        .map_err(|e| anyhow!("{e}"))?;
    let valid_relevant = bucket(&split.valid, pre.n_users, true);
    let test_relevant = bucket(&split.test, pre.n_users, true);
    let mut test_exclude = bucket(&split.train, pre.n_users, false);
    for (u, items) in valid_relevant.iter().enumerate() {
        test_exclude[u].extend_from_slice(items);
        test_exclude[u].sort_unstable();
    }
    Ok(Prepared {
        graph,
        feats,
        valid_relevant,
        test_relevant,
        test_exclude,
        n_users: pre.n_users,
    })
}

/// Train on the prepared split.
pub fn run_training(
    prep: &Prepared,
    cfg: &TrainConfig,
    clock: &mut dyn Clock,
) -> Result<TrainOutcome> {
    let data = TrainData {
        graph: &prep.graph,
        feats: &prep.feats,
        valid_relevant: &prep.valid_relevant,
    };
    train(&data, cfg, clock).map_err(|e| anyhow!("{e}"))
}

/// Metrics of a finished run on one phase at the configured cutoff.
pub fn phase_metrics(
    prep: &Prepared,
    outcome: &TrainOutcome,
    cfg: &ExperimentConfig,
    phase: &str,
) -> Result<MetricsReport> {
    let (exclude, relevant): (&[Vec<u32>], &[Vec<u32>]) = match phase {
        "valid" => (&prep.graph.user_neighbors, &prep.valid_relevant),
        "test" => (&prep.test_exclude, &prep.test_relevant),
        _ => bail!("unknown phase '{phase}'"),
    };
    let m = evaluate_topk(&outcome.best_z, prep.n_users, exclude, relevant, cfg.eval_k)
        .map_err(|e| anyhow!("{e}"))?;
    Ok(MetricsReport {
        dataset: cfg.dataset.clone(),
        split_seed: cfg.train.seed,
        phase: phase.to_string(),
        k: cfg.eval_k,
        recall: m.recall,
        ndcg: m.ndcg,
        n_users: m.n_users,
    })
}

/// Save model parameters as a flat 1xP CRNF matrix.
pub fn save_checkpoint(dir: &Path, outcome: &TrainOutcome) -> Result<()> {
    let flat = outcome.params.flat();
    let n = flat.len();
    let m = DenseMatrix::from_vec(1, n, flat).map_err(|e| anyhow!("{e}"))?;
    save_crnf(&dir.join("checkpoint.crnf"), &m, CrnfDtype::F64)?;
    if let Some(pb) = &outcome.params_b {
        let flat_b = pb.flat();
        let nb = flat_b.len();
        let mb = DenseMatrix::from_vec(1, nb, flat_b).map_err(|e| anyhow!("{e}"))?;
        save_crnf(&dir.join("checkpoint_b.crnf"), &mb, CrnfDtype::F64)?;
    }
    Ok(())
}

/// One ablation-grid result row.
#[derive(Debug, Clone, Serialize)]
pub struct GridRow {
    /// Variant name, or `full` for aggregation rows.
    pub variant: String,
    pub aggregation: String,
    pub dataset: String,
    pub split_seed: u64,
    pub phase: String,
    #[serde(rename = "K")]
    pub k: usize,
    pub recall: f64,
    pub ndcg: f64,
    pub n_users: usize,
}

/// Train one grid cell and report test metrics.
pub fn grid_cell(
    prep: &Prepared,
    base: &ExperimentConfig,
    variant: Variant,
    aggregation: crane_core::Aggregation,
) -> Result<GridRow> {
    let mut cfg = base.clone();
    cfg.train.variant = variant;
    cfg.train.aggregation = aggregation;
    cfg.train.validate().map_err(|e| anyhow!("{e}"))?;
    let mut clock = RealClock::new();
    let outcome = run_training(prep, &cfg.train, &mut clock)
        .with_context(|| format!("training variant {}", variant.name()))?;
    let m = phase_metrics(prep, &outcome, &cfg, "test")?;
    Ok(GridRow {
        variant: variant.name().to_string(),
        aggregation: aggregation.name().to_string(),
        dataset: m.dataset,
        split_seed: m.split_seed,
        phase: m.phase,
        k: m.k,
        recall: m.recall,
        ndcg: m.ndcg,
        n_users: m.n_users,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config_file::ExperimentConfig;
    use crane_core::train::NullClock;

    fn tiny_cfg() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.train.d = 8;
        cfg.train.d_lat = 8;
        cfg.train.d_joint = 8;
        cfg.train.r = 2;
        cfg.train.k = 4;
        cfg.train.lr = 5e-3;
        cfg.train.batch_size = 64;
        cfg.train.max_epochs = 3;
        cfg.train.block = 32;
        cfg.eval_k = 10;
        cfg.synth.users_per_block = 8;
        cfg.synth.items_per_block = 12;
        cfg
    }

    #[test]
    fn synthetic_pipeline_trains_and_reports_both_phases() {
        let cfg = tiny_cfg();
        let ds = synthetic_dataset(&cfg).unwrap();
        assert_eq!(ds.n_users, 16);
        assert_eq!(ds.n_items, 24);
        let prep = prepare(&ds, cfg.train.seed).unwrap();
        let outcome = run_training(&prep, &cfg.train, &mut NullClock).unwrap();
        let valid = phase_metrics(&prep, &outcome, &cfg, "valid").unwrap();
        let test = phase_metrics(&prep, &outcome, &cfg, "test").unwrap();
        assert_eq!(valid.phase, "valid");
        assert_eq!(test.phase, "test");
        assert!(valid.n_users > 0);
        assert!(test.recall.is_finite() && test.ndcg.is_finite());
        assert!(phase_metrics(&prep, &outcome, &cfg, "bogus").is_err());
    }

    #[test]
    fn prepare_masks_are_sorted_partitions() {
        let cfg = tiny_cfg();
        let ds = synthetic_dataset(&cfg).unwrap();
        let prep = prepare(&ds, 672).unwrap();
        for u in 0..prep.n_users {
            let ex = &prep.test_exclude[u];
            assert!(ex.windows(2).all(|w| w[0] < w[1]), "user {u} mask unsorted");
            // held-out test items never appear in the mask
            for i in &prep.test_relevant[u] {
                assert!(ex.binary_search(i).is_err());
            }
        }
    }

    #[test]
    fn dataset_directory_round_trip_matches_synthetic() {
        let cfg = tiny_cfg();
        let ds = synthetic_dataset(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let mut tsv = String::new();
        // feature rows must follow the loader's first-appearance item order
        let mut item_order: Vec<u32> = Vec::new();
        for &(u, i) in &ds.pairs {
            tsv.push_str(&format!("u{u}\ti{i}\t1.0\n"));
            if !item_order.contains(&i) {
                item_order.push(i);
            }
        }
        std::fs::write(dir.path().join("interactions.tsv"), tsv).unwrap();
        save_crnf(
            &dir.path().join("visual.crnf"),
            &select_rows(&ds.feats.x_visual, &item_order).unwrap(),
            CrnfDtype::F64,
        )
        .unwrap();
        save_crnf(
            &dir.path().join("textual.crnf"),
            &select_rows(&ds.feats.x_textual, &item_order).unwrap(),
            CrnfDtype::F64,
        )
        .unwrap();
        let loaded = dataset_from_dir(&cfg, dir.path()).unwrap();
        assert_eq!(loaded.n_users, ds.n_users);
        assert_eq!(loaded.pairs.len(), ds.pairs.len());
        assert_eq!(loaded.n_items, item_order.len());
    }

    #[test]
    fn grid_cell_runs_an_ablation_variant() {
        let mut cfg = tiny_cfg();
        cfg.train.max_epochs = 1;
        let ds = synthetic_dataset(&cfg).unwrap();
        let prep = prepare(&ds, cfg.train.seed).unwrap();
        let row = grid_cell(
            &prep,
            &cfg,
            Variant::WoRca,
            crane_core::Aggregation::Sum,
        )
        .unwrap();
        assert_eq!(row.variant, "wo_rca");
        assert!(row.recall.is_finite());
    }
}
