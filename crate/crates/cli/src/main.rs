use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use crane_core::Aggregation;

use crane_cli::bench::run_bench;
use crane_cli::config_file::{self, ExperimentConfig};
use crane_cli::report::{render_metrics, write_log, write_metrics, LogLine};
use crane_cli::runner::{
    grid_cell, phase_metrics, prepare, resolve_dataset, run_training, save_checkpoint, RealClock,
};
use crane_cli::svg::write_convergence;

#[derive(Parser)]
#[command(name = "crane", about = "Dual-graph multimodal recommender", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Directory holding interactions.tsv, visual.crnf and textual.crnf.
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Output directory for run artifacts.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Use the synthetic generator even when --data-dir is given.
    #[arg(long)]
    synthetic: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model; writes a checkpoint, a convergence log and its plot.
    Train(RunArgs),
    /// Train and report held-out test metrics.
    Eval(RunArgs),
    /// Run the structural-variant and aggregation grids.
    Ablate(RunArgs),
    /// Measure epoch time and memory across synthetic graph sizes.
    Bench(RunArgs),
}

fn load_config(args: &RunArgs) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(&args.config)
        .with_context(|| format!("reading config {}", args.config.display()))?;
    let mut cfg = config_file::parse(&text)
        .with_context(|| format!("parsing config {}", args.config.display()))?;
    if let Some(seed) = args.seed {
        cfg.train.seed = seed;
    }
    if std::env::var_os("CRANE_THREADS").is_some() {
        if cfg.train.deterministic {
            eprintln!("note: CRANE_THREADS is ignored in deterministic mode");
        } else {
            eprintln!("note: CRANE_THREADS set, but kernels run sequentially");
        }
    }
    fs::create_dir_all(&args.out)
        .with_context(|| format!("creating output directory {}", args.out.display()))?;
    Ok(cfg)
}

fn cmd_train(args: &RunArgs) -> Result<()> {
    let cfg = load_config(args)?;
    let ds = resolve_dataset(&cfg, args.data_dir.as_deref(), args.synthetic)?;
    let prep = prepare(&ds, cfg.train.seed)?;
    let mut clock = RealClock::new();
    let outcome = run_training(&prep, &cfg.train, &mut clock)?;
    save_checkpoint(&args.out, &outcome)?;
    write_log(&args.out.join("convergence.jsonl"), &outcome.history)?;
    let log: Vec<LogLine> = outcome.history.iter().map(LogLine::from).collect();
    write_convergence(&args.out.join("convergence.svg"), &log)?;
    let metrics = phase_metrics(&prep, &outcome, &cfg, "valid")?;
    write_metrics(&args.out.join("metrics.json"), &metrics)?;
    println!(
        "trained {} epochs (best {}); valid recall@{} = {:.6}, ndcg@{} = {:.6}",
        outcome.history.len(),
        outcome.best_epoch,
        metrics.k,
        metrics.recall,
        metrics.k,
        metrics.ndcg
    );
    Ok(())
}

fn cmd_eval(args: &RunArgs) -> Result<()> {
    let cfg = load_config(args)?;
    let ds = resolve_dataset(&cfg, args.data_dir.as_deref(), args.synthetic)?;
    let prep = prepare(&ds, cfg.train.seed)?;
    let mut clock = RealClock::new();
    let outcome = run_training(&prep, &cfg.train, &mut clock)?;
    let metrics = phase_metrics(&prep, &outcome, &cfg, "test")?;
    write_metrics(&args.out.join("metrics.json"), &metrics)?;
    print!("{}", render_metrics(&metrics));
    Ok(())
}

fn cmd_ablate(args: &RunArgs) -> Result<()> {
    let cfg = load_config(args)?;
    let ds = resolve_dataset(&cfg, args.data_dir.as_deref(), args.synthetic)?;
    let prep = prepare(&ds, cfg.train.seed)?;

    let mut ablation = String::new();
    for &variant in &cfg.ablate_variants {
        let row = grid_cell(&prep, &cfg, variant, cfg.train.aggregation)?;
        let line = serde_json::to_string(&row)?;
        println!("{line}");
        ablation.push_str(&line);
        ablation.push('\n');
    }
    fs::write(args.out.join("ablation.jsonl"), ablation)?;

    let mut agg_rows = String::new();
    for agg in Aggregation::ALL {
        let row = grid_cell(&prep, &cfg, cfg.train.variant, agg)?;
        let line = serde_json::to_string(&row)?;
        println!("{line}");
        agg_rows.push_str(&line);
        agg_rows.push('\n');
    }
    fs::write(args.out.join("aggregation.jsonl"), agg_rows)?;
    Ok(())
}

fn cmd_bench(args: &RunArgs) -> Result<()> {
    let cfg = load_config(args)?;
    let rows = run_bench(&cfg)?;
    let mut text = serde_json::to_string_pretty(&rows)?;
    text.push('\n');
    fs::write(args.out.join("bench.json"), &text)?;
    for r in &rows {
        println!(
            "n_items {:>6}  epoch {:.3}s  attention {:.3}s  sparse {:.3}s  csr {} B  peak {} B",
            r.n_items,
            r.epoch_seconds,
            r.attention_seconds,
            r.sparse_seconds,
            r.csr_f32_bytes,
            r.peak_rss_bytes
        );
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Ablate(a) => cmd_ablate(a),
        Command::Bench(a) => cmd_bench(a),
    }
}
