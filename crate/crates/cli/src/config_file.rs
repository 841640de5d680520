//! Line-based experiment configuration: `key = value` entries under
//! `[section]` headers. Unknown sections or keys are rejected so a typo can
//! never silently fall back to a default. `serialize` emits the canonical
//! form (every key, fixed order), and `parse(serialize(c)) == c`.

use std::fmt::Write as _;

use anyhow::{anyhow, bail, Context, Result};
use crane_core::{Activation, Aggregation, LayerReadout, TrainConfig, Variant};

/// Synthetic dataset generator knobs.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub users_per_block: usize,
    pub items_per_block: usize,
    pub blocks: usize,
    pub p_in: f64,
    pub p_cross: f64,
    pub noise: f64,
    pub d_visual: usize,
    pub d_textual: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            users_per_block: 25,
            items_per_block: 40,
            blocks: 2,
            p_in: 0.3,
            p_cross: 0.02,
            noise: 0.2,
            d_visual: 32,
            d_textual: 16,
        }
    }
}

/// Scaling benchmark knobs.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub item_counts: Vec<usize>,
    pub users_per_item: f64,
    pub interactions_per_user: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            item_counts: vec![1000, 2000, 4000, 8000],
            users_per_item: 0.25,
            interactions_per_user: 8,
        }
    }
}

/// Full experiment configuration: core training knobs plus harness settings.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub train: TrainConfig,
    pub dataset: String,
    pub eval_k: usize,
    pub ablate_variants: Vec<Variant>,
    pub synth: SynthConfig,
    pub bench: BenchConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            train: TrainConfig::default(),
            dataset: "synthetic".into(),
            eval_k: 20,
            ablate_variants: Variant::ABLATION_SET.to_vec(),
            synth: SynthConfig::default(),
            bench: BenchConfig::default(),
        }
    }
}

fn parse_bool(v: &str) -> Result<bool> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => bail!("expected true/false, got '{v}'"),
    }
}

fn parse_usize(v: &str) -> Result<usize> {
    v.parse().with_context(|| format!("bad integer '{v}'"))
}

fn parse_f64(v: &str) -> Result<f64> {
    let x: f64 = v.parse().with_context(|| format!("bad number '{v}'"))?;
    if !x.is_finite() {
        bail!("non-finite number '{v}'");
    }
    Ok(x)
}

fn parse_list_usize(v: &str) -> Result<Vec<usize>> {
    v.split(',').map(|s| parse_usize(s.trim())).collect()
}

fn parse_variants(v: &str) -> Result<Vec<Variant>> {
    v.split(',')
        .map(|s| Variant::parse(s.trim()).map_err(|e| anyhow!("{e}")))
        .collect()
}

/// Parse configuration text. Missing keys keep their defaults.
pub fn parse(text: &str) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    let mut section = String::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        let line = match line.find('#') {
            Some(p) => &line[..p],
            None => line,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| anyhow!("line {}: malformed section header", lineno + 1))?;
            match name {
                "model" | "training" | "experiment" | "synthetic" | "bench" => {
                    section = name.to_string();
                }
                _ => bail!("line {}: unknown section [{name}]", lineno + 1),
            }
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("line {}: expected key = value", lineno + 1))?;
        let key = key.trim();
        let v = value.trim();
        let t = &mut cfg.train;
        let err = |_: ()| -> Result<()> { Ok(()) };
        err(())?;
        let applied: Result<()> = (|| {
            match (section.as_str(), key) {
                ("model", "d") => t.d = parse_usize(v)?,
                ("model", "d_lat") => t.d_lat = parse_usize(v)?,
                ("model", "d_joint") => t.d_joint = parse_usize(v)?,
                ("model", "l_ui") => t.l_ui = parse_usize(v)?,
                ("model", "l_ii") => t.l_ii = parse_usize(v)?,
                ("model", "r") => t.r = parse_usize(v)?,
                ("model", "k") => t.k = parse_usize(v)?,
                ("model", "trainable_gcn") => t.trainable_gcn = parse_bool(v)?,
                ("model", "gcn_activation") => {
                    t.gcn_activation = Activation::parse(v).map_err(|e| anyhow!("{e}"))?
                }
                ("model", "layer_readout") => {
                    t.layer_readout = LayerReadout::parse(v).map_err(|e| anyhow!("{e}"))?
                }
                ("model", "variant") => {
                    t.variant = Variant::parse(v).map_err(|e| anyhow!("{e}"))?
                }
                ("model", "aggregation") => {
                    t.aggregation = Aggregation::parse(v).map_err(|e| anyhow!("{e}"))?
                }
                ("training", "lr") => t.lr = parse_f64(v)?,
                ("training", "lambda") => t.lambda = parse_f64(v)?,
                ("training", "tau") => t.tau = parse_f64(v)?,
                ("training", "beta") => t.beta = parse_f64(v)?,
                ("training", "batch_size") => t.batch_size = parse_usize(v)?,
                ("training", "max_epochs") => t.max_epochs = parse_usize(v)?,
                ("training", "patience") => t.patience = parse_usize(v)?,
                ("training", "rebuild_interval") => t.rebuild_interval = parse_usize(v)?,
                ("training", "seed") => t.seed = parse_usize(v)? as u64,
                ("training", "deterministic") => t.deterministic = parse_bool(v)?,
                ("training", "block") => t.block = parse_usize(v)?,
                ("training", "use_dropedge") => t.use_dropedge = parse_bool(v)?,
                ("experiment", "dataset") => cfg.dataset = v.to_string(),
                ("experiment", "eval_k") => cfg.eval_k = parse_usize(v)?,
                ("experiment", "ablate_variants") => cfg.ablate_variants = parse_variants(v)?,
                ("synthetic", "users_per_block") => cfg.synth.users_per_block = parse_usize(v)?,
                ("synthetic", "items_per_block") => cfg.synth.items_per_block = parse_usize(v)?,
                ("synthetic", "blocks") => cfg.synth.blocks = parse_usize(v)?,
                ("synthetic", "p_in") => cfg.synth.p_in = parse_f64(v)?,
                ("synthetic", "p_cross") => cfg.synth.p_cross = parse_f64(v)?,
                ("synthetic", "noise") => cfg.synth.noise = parse_f64(v)?,
                ("synthetic", "d_visual") => cfg.synth.d_visual = parse_usize(v)?,
                ("synthetic", "d_textual") => cfg.synth.d_textual = parse_usize(v)?,
                ("bench", "item_counts") => cfg.bench.item_counts = parse_list_usize(v)?,
                ("bench", "users_per_item") => cfg.bench.users_per_item = parse_f64(v)?,
                ("bench", "interactions_per_user") => {
                    cfg.bench.interactions_per_user = parse_usize(v)?
                }
                (s, k) => bail!("unknown key '{k}' in section [{s}]"),
            }
            Ok(())
        })();
        applied.with_context(|| format!("line {}", lineno + 1))?;
    }
    cfg.train.validate().map_err(|e| anyhow!("{e}"))?;
    if cfg.eval_k == 0 {
        bail!("eval_k must be positive");
    }
    if cfg.ablate_variants.is_empty() {
        bail!("ablate_variants must not be empty");
    }
    Ok(cfg)
}

/// Canonical text form: every key in a fixed order.
pub fn serialize(cfg: &ExperimentConfig) -> String {
    let t = &cfg.train;
    let mut s = String::new();
    let w = &mut s;
    let _ = writeln!(w, "[model]");
    let _ = writeln!(w, "d = {}", t.d);
    let _ = writeln!(w, "d_lat = {}", t.d_lat);
    let _ = writeln!(w, "d_joint = {}", t.d_joint);
    let _ = writeln!(w, "l_ui = {}", t.l_ui);
    let _ = writeln!(w, "l_ii = {}", t.l_ii);
    let _ = writeln!(w, "r = {}", t.r);
    let _ = writeln!(w, "k = {}", t.k);
    let _ = writeln!(w, "trainable_gcn = {}", t.trainable_gcn);
    let _ = writeln!(w, "gcn_activation = {}", t.gcn_activation.name());
    let _ = writeln!(w, "layer_readout = {}", t.layer_readout.name());
    let _ = writeln!(w, "variant = {}", t.variant.name());
    let _ = writeln!(w, "aggregation = {}", t.aggregation.name());
    let _ = writeln!(w, "\n[training]");
    let _ = writeln!(w, "lr = {}", t.lr);
    let _ = writeln!(w, "lambda = {}", t.lambda);
    let _ = writeln!(w, "tau = {}", t.tau);
    let _ = writeln!(w, "beta = {}", t.beta);
    let _ = writeln!(w, "batch_size = {}", t.batch_size);
    let _ = writeln!(w, "max_epochs = {}", t.max_epochs);
    let _ = writeln!(w, "patience = {}", t.patience);
    let _ = writeln!(w, "rebuild_interval = {}", t.rebuild_interval);
    let _ = writeln!(w, "seed = {}", t.seed);
    let _ = writeln!(w, "deterministic = {}", t.deterministic);
    let _ = writeln!(w, "block = {}", t.block);
    let _ = writeln!(w, "use_dropedge = {}", t.use_dropedge);
    let _ = writeln!(w, "\n[experiment]");
    let _ = writeln!(w, "dataset = {}", cfg.dataset);
    let _ = writeln!(w, "eval_k = {}", cfg.eval_k);
    let variants: Vec<&str> = cfg.ablate_variants.iter().map(|v| v.name()).collect();
    let _ = writeln!(w, "ablate_variants = {}", variants.join(","));
    let _ = writeln!(w, "\n[synthetic]");
    let _ = writeln!(w, "users_per_block = {}", cfg.synth.users_per_block);
    let _ = writeln!(w, "items_per_block = {}", cfg.synth.items_per_block);
    let _ = writeln!(w, "blocks = {}", cfg.synth.blocks);
    let _ = writeln!(w, "p_in = {}", cfg.synth.p_in);
    let _ = writeln!(w, "p_cross = {}", cfg.synth.p_cross);
    let _ = writeln!(w, "noise = {}", cfg.synth.noise);
    let _ = writeln!(w, "d_visual = {}", cfg.synth.d_visual);
    let _ = writeln!(w, "d_textual = {}", cfg.synth.d_textual);
    let _ = writeln!(w, "\n[bench]");
    let counts: Vec<String> = cfg.bench.item_counts.iter().map(|n| n.to_string()).collect();
    let _ = writeln!(w, "item_counts = {}", counts.join(","));
    let _ = writeln!(w, "users_per_item = {}", cfg.bench.users_per_item);
    let _ = writeln!(
        w,
        "interactions_per_user = {}",
        cfg.bench.interactions_per_user
    );
    s
}
