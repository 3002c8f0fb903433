//! `imvc`: simulate missing views, train and evaluate, and run the ablation matrix.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use imvc::checkpoint::save_checkpoint;
use imvc::config::{RecLoss, TrainConfig};
use imvc::experiment::{prepare, run, summarize, ResultRow, RunOutcome, Variant};
use imvc::graph::fuse_global_graph;
use imvc::synthetic::{gaussian_blobs, BlobSpec};
use imvc::trainer::EpochRecord;
use imvc::{load_dataset, save_dataset, simulate_missing, MultiViewDataset};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "imvc", version, about = "Incomplete multi-view clustering experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a Gaussian-blob multi-view dataset.
    Synth(SynthArgs),
    /// Write masked copies of a complete dataset, one per (delta, seed).
    Simulate(SimulateArgs),
    /// Train and evaluate once per (delta, seed).
    Train(TrainArgs),
    /// Run the component and loss-variant ablations per (delta, seed).
    Ablate(AblateArgs),
}

#[derive(Args)]
struct OutArg {
    /// Output directory.
    #[arg(long, env = "IMVC_OUT", default_value = "imvc-out")]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 200)]
    samples: usize,
    #[arg(long, default_value_t = 4)]
    clusters: usize,
    /// Feature width of every view.
    #[arg(long, value_delimiter = ',', default_value = "10,10,10")]
    dims: Vec<usize>,
    /// Distance between cluster means in noise units.
    #[arg(long, default_value_t = 5.0)]
    separation: f64,
    #[arg(long, default_value_t = 1.0)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Missing rate; repeat for several.
    #[arg(long = "delta", required = true)]
    deltas: Vec<f64>,
    /// Seed; repeat for several.
    #[arg(long = "seed", default_values_t = [0])]
    seeds: Vec<u64>,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Component {
    Rec,
    Embed,
    Kl,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Missing rate; repeat for several. 0 trains on the dataset's own mask.
    #[arg(long = "delta", default_values_t = [0.0])]
    deltas: Vec<f64>,
    /// Seed; repeat for several.
    #[arg(long = "seed", default_values_t = [0])]
    seeds: Vec<u64>,
    /// `key=value` training setting; repeatable.
    #[arg(long = "config", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, value_enum, default_value = "masked")]
    loss: LossArg,
    /// Switch a component off; repeatable.
    #[arg(long = "disable", value_enum)]
    disabled: Vec<Component>,
    /// Also write a checkpoint per run.
    #[arg(long)]
    checkpoint: bool,
}

#[derive(Args)]
struct AblateArgs {
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum LossArg {
    Masked,
    Traditional,
}

#[derive(Serialize)]
struct HistoryRow {
    epoch: usize,
    rec: f64,
    con: f64,
    kl: f64,
    total: f64,
    acc: Option<f64>,
    nmi: Option<f64>,
    ari: Option<f64>,
}

impl From<&EpochRecord> for HistoryRow {
    fn from(r: &EpochRecord) -> Self {
        Self {
            epoch: r.epoch,
            rec: r.loss.rec,
            con: r.loss.con,
            kl: r.loss.kl,
            total: r.loss.total,
            acc: r.scores.map(|s| s.acc),
            nmi: r.scores.map(|s| s.nmi),
            ari: r.scores.map(|s| s.ari),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => synth(a),
        Command::Simulate(a) => simulate(a),
        Command::Train(a) => train(a),
        Command::Ablate(a) => ablate(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dataset_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into())
}

fn run_tag(delta: f64, seed: u64) -> String {
    format!("delta{delta}_seed{seed}")
}

fn check_deltas(deltas: &[f64]) -> Result<()> {
    for &d in deltas {
        if !(0.0..1.0).contains(&d) {
            bail!("missing rate {d} outside [0, 1)");
        }
    }
    Ok(())
}

fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for row in rows {
        w.serialize(row).with_context(|| format!("writing {}", path.display()))?;
    }
    w.flush().with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn synth(a: SynthArgs) -> Result<bool> {
    let ds = gaussian_blobs(&BlobSpec {
        n_samples: a.samples,
        n_clusters: a.clusters,
        view_dims: a.dims,
        separation: a.separation,
        noise: a.noise,
        seed: a.seed,
    })?;
    save_dataset(&ds, &a.out.out)?;
    println!("wrote {}", a.out.out.display());
    Ok(true)
}

fn simulate(a: SimulateArgs) -> Result<bool> {
    check_deltas(&a.deltas)?;
    let ds = load_dataset(&a.dataset)?;
    let name = dataset_name(&a.dataset);
    for &delta in &a.deltas {
        for &seed in &a.seeds {
            let masked = simulate_missing(&ds, delta, seed)?;
            let dir = a.out.out.join(format!("{name}_{}", run_tag(delta, seed)));
            save_dataset(&masked, &dir)?;
            println!("wrote {} ({} incomplete samples)", dir.display(), masked.n_incomplete());
        }
    }
    Ok(true)
}

/// Base config: defaults, cluster count from the labels, then the overrides.
fn base_config(ds: &MultiViewDataset, overrides: &[String]) -> Result<TrainConfig> {
    let mut cfg = TrainConfig::default();
    if let Some(labels) = ds.labels() {
        cfg.n_clusters = labels.iter().max().map_or(1, |m| m + 1);
    }
    for o in overrides {
        cfg.set(o).with_context(|| format!("--config {o}"))?;
    }
    if ds.labels().is_none() && !overrides.iter().any(|o| o.starts_with("n_clusters=")) {
        bail!("dataset has no labels; set the cluster count with --config n_clusters=K");
    }
    Ok(cfg)
}

fn load_for_runs(args: &RunArgs) -> Result<(MultiViewDataset, TrainConfig)> {
    check_deltas(&args.deltas)?;
    if args.seeds.is_empty() {
        bail!("at least one --seed is required");
    }
    let ds = load_dataset(&args.dataset)?;
    if ds.labels().is_none() {
        eprintln!("warning: {} has no labels.csv; evaluation is skipped", args.dataset.display());
    }
    let cfg = base_config(&ds, &args.overrides)?;
    fs::create_dir_all(&args.out.out).with_context(|| format!("creating {}", args.out.out.display()))?;
    Ok((ds, cfg))
}

fn finite(outcome: &RunOutcome) -> bool {
    outcome
        .scores
        .is_none_or(|s| s.acc.is_finite() && s.nmi.is_finite() && s.ari.is_finite())
}

fn report(row: &ResultRow) {
    let fmt = |x: Option<f64>| x.map_or("-".into(), |v| format!("{v:.4}"));
    println!(
        "{} delta={} seed={} {}: acc {} nmi {} ari {} ({:.1}s)",
        row.dataset,
        row.delta,
        row.seed,
        row.variant,
        fmt(row.acc),
        fmt(row.nmi),
        fmt(row.ari),
        row.wall_seconds
    );
}

fn train(a: TrainArgs) -> Result<bool> {
    let (ds, mut cfg) = load_for_runs(&a.run)?;
    cfg.rec_loss = match a.loss {
        LossArg::Masked => RecLoss::Masked,
        LossArg::Traditional => RecLoss::Traditional,
    };
    for c in &a.disabled {
        match c {
            Component::Rec => cfg.components.rec = false,
            Component::Embed => cfg.components.embed = false,
            Component::Kl => cfg.components.kl = false,
        }
    }
    let variant = variant_label(&cfg);
    let name = dataset_name(&a.run.dataset);
    let out = &a.run.out.out;
    let mut rows = Vec::new();
    let mut ok = true;
    for &delta in &a.run.deltas {
        for &seed in &a.run.seeds {
            let tag = run_tag(delta, seed);
            let mut history = Vec::new();
            let outcome = match run(&ds, delta, seed, &cfg, |r| history.push(HistoryRow::from(r))) {
                Ok(o) => o,
                Err(e) => {
                    eprintln!("error: {name} {tag}: {e}");
                    ok = false;
                    continue;
                }
            };
            write_csv(&out.join(format!("history_{tag}.csv")), history)?;
            write_labels(&out.join(format!("labels_{tag}.csv")), &outcome.labels)?;
            write_global_graph(&out.join(format!("graph_{tag}.csv")), &ds, delta, seed, &cfg)?;
            if a.checkpoint {
                let run_cfg = TrainConfig { seed, ..cfg.clone() };
                save_checkpoint(out.join(format!("checkpoint_{tag}.json")), &outcome.state, &run_cfg, &ds.view_dims())?;
            }
            ok &= finite(&outcome);
            let row = ResultRow::from_outcome(&name, delta, seed, &variant, &outcome);
            report(&row);
            rows.push(row);
        }
    }
    write_results(&out.join("results.csv"), &rows)?;
    Ok(ok)
}

fn ablate(a: AblateArgs) -> Result<bool> {
    let (ds, cfg) = load_for_runs(&a.run)?;
    let name = dataset_name(&a.run.dataset);
    let mut rows = Vec::new();
    let mut ok = true;
    for &delta in &a.run.deltas {
        for &seed in &a.run.seeds {
            for variant in Variant::ABLATION {
                match run(&ds, delta, seed, &variant.apply(&cfg), |_| {}) {
                    Ok(outcome) => {
                        ok &= finite(&outcome);
                        let row = ResultRow::from_outcome(&name, delta, seed, variant.name(), &outcome);
                        report(&row);
                        rows.push(row);
                    }
                    Err(e) => {
                        eprintln!("error: {name} {} {variant}: {e}", run_tag(delta, seed));
                        ok = false;
                    }
                }
            }
        }
    }
    write_results(&a.run.out.out.join("ablation.csv"), &rows)?;
    Ok(ok)
}

/// Name of a single train configuration in the result table.
fn variant_label(cfg: &TrainConfig) -> String {
    let mut parts = vec![cfg.rec_loss.to_string()];
    for (on, name) in [
        (cfg.components.rec, "no_rec"),
        (cfg.components.embed, "no_embed"),
        (cfg.components.kl, "no_kl"),
    ] {
        if !on {
            parts.push(name.into());
        }
    }
    parts.join("+")
}

fn write_results(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let summary = summarize(rows);
    write_csv(path, rows.iter().chain(&summary))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn write_labels(path: &Path, labels: &[usize]) -> Result<()> {
    let body: String = labels.iter().map(|l| format!("{l}\n")).collect();
    fs::write(path, body).with_context(|| format!("writing {}", path.display()))
}

/// Edge list of the global graph the run trained on, one `i,j` per line.
fn write_global_graph(path: &Path, ds: &MultiViewDataset, delta: f64, seed: u64, cfg: &TrainConfig) -> Result<()> {
    let data = prepare(ds, delta, seed)?;
    let graph = fuse_global_graph(data.views(), data.mask().view(), cfg.rbf_scale, cfg.n_neighbors)?;
    let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    graph
        .write_edge_list(std::io::BufWriter::new(file))
        .with_context(|| format!("writing {}", path.display()))
}
