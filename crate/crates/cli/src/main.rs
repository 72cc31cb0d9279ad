//! Single-binary pipeline driver.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure
//! (non-finite loss or a failed gradient check).

use std::fs;
use std::io::Write;
use std::path::{Component, Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use stegonet::data::{
    self, DatasetManifest, EmbedParams, ImageStore, PairRecord, Split,
};
use stegonet::net::{self, YedroudjConfig};
use stegonet::srm;
use stegonet::train::{self, TrainConfig};
use stegonet::Error;

#[derive(Parser)]
#[command(
    name = "stegonet",
    about = "Spatial-domain CNN steganalysis pipeline",
    version,
    disable_help_subcommand = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate seeded synthetic textured covers (PGM) for desk-scale runs.
    Synth(SynthArgs),
    /// Simulate ±1 embedding over a cover directory and write a manifest.
    Embed(EmbedArgs),
    /// Assign train/val/test splits in a manifest (rewrites the split column).
    Split(SplitArgs),
    /// Materialize the 8 dihedral transforms for the train split.
    Augment(AugmentArgs),
    /// Train a network and write metrics plus min/max-loss snapshots.
    Train(TrainArgs),
    /// Evaluate checkpoints on the test split and print JSON results.
    Eval(EvalArgs),
    /// Run the finite-difference gradient suite over every layer primitive.
    Gradcheck(GradcheckArgs),
    /// Dump the 30 fixed residual kernels as plain text.
    ExportFilters(ExportFiltersArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 100)]
    count: usize,
    #[arg(long, default_value_t = 64)]
    height: usize,
    #[arg(long, default_value_t = 64)]
    width: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct EmbedArgs {
    #[arg(long)]
    cover_dir: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    /// Payload in bits per pixel, within [0, log2(3)].
    #[arg(long)]
    bpp: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Source tag recorded in the manifest.
    #[arg(long, default_value = "synthetic")]
    source: String,
    /// Manifest path; defaults to <out-dir>/manifest.csv.
    #[arg(long)]
    manifest_out: Option<PathBuf>,
}

#[derive(Args)]
struct SplitArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 4000)]
    train_pairs: usize,
    #[arg(long, default_value_t = 1000)]
    val_pairs: usize,
    /// Source tags assigned to the train split only (repeatable).
    #[arg(long)]
    train_only_source: Vec<String>,
}

#[derive(Args)]
struct AugmentArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
#[command(next_help_heading = "Training overrides")]
struct TrainArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Network config (TOML); defaults to the reference topology.
    #[arg(long)]
    net_config: Option<PathBuf>,
    /// Train config (TOML); flags below override individual fields.
    #[arg(long)]
    train_config: Option<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long)]
    lr0: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    step_fraction: Option<f64>,
    #[arg(long)]
    momentum: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    snapshot_window: Option<usize>,
    #[arg(long)]
    early_stop: Option<bool>,
    #[arg(long)]
    patience: Option<usize>,
    /// Data-loading workers; 1 is the determinism-safe default.
    #[arg(long)]
    workers: Option<usize>,
    /// Record wall_time as 0.0 for bitwise-reproducible metrics logs.
    #[arg(long)]
    deterministic_timing: Option<bool>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Checkpoint to evaluate (repeatable; results are averaged).
    #[arg(long, required = true)]
    checkpoint: Vec<PathBuf>,
    #[arg(long, default_value_t = 16)]
    batch_size: usize,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
}

#[derive(Args)]
struct ExportFiltersArgs {
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help/version requests are successes, anything else is usage
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let result = match cli.command {
        Command::Synth(args) => cmd_synth(args),
        Command::Embed(args) => cmd_embed(args),
        Command::Split(args) => cmd_split(args),
        Command::Augment(args) => cmd_augment(args),
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Gradcheck(args) => cmd_gradcheck(args),
        Command::ExportFilters(args) => cmd_export_filters(args),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = match e.downcast_ref::<Error>() {
                Some(Error::NonFiniteLoss { .. }) => 3,
                _ => 2,
            };
            ExitCode::from(code)
        }
    }
}

fn banner(cmd: &str, fields: &[(&str, String)]) {
    let joined: Vec<String> = fields.iter().map(|(k, v)| format!("{k}={v}")).collect();
    eprintln!("[stegonet {cmd}] {}", joined.join(" "));
}

/// Relative path from `base` to `target`, or the absolute target when they
/// share no prefix. Manifest entries stay relative to the manifest file.
fn rel_path(base: &Path, target: &Path) -> PathBuf {
    let base = std::path::absolute(base).unwrap_or_else(|_| base.to_path_buf());
    let target = std::path::absolute(target).unwrap_or_else(|_| target.to_path_buf());
    let b: Vec<Component> = base.components().collect();
    let t: Vec<Component> = target.components().collect();
    let common = b.iter().zip(&t).take_while(|(x, y)| x == y).count();
    if common == 0 {
        return target;
    }
    let mut out = PathBuf::new();
    for _ in common..b.len() {
        out.push("..");
    }
    for c in &t[common..] {
        out.push(c);
    }
    out
}

fn list_pgms(dir: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "pgm"))
        .collect();
    files.sort();
    if files.is_empty() {
        anyhow::bail!("no .pgm files in {}", dir.display());
    }
    Ok(files)
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

fn cmd_synth(args: SynthArgs) -> anyhow::Result<ExitCode> {
    banner(
        "synth",
        &[
            ("out_dir", args.out_dir.display().to_string()),
            ("count", args.count.to_string()),
            ("size", format!("{}x{}", args.height, args.width)),
            ("seed", args.seed.to_string()),
        ],
    );
    fs::create_dir_all(&args.out_dir)?;
    for i in 0..args.count {
        let img = data::textured_cover(
            args.height,
            args.width,
            splitmix64(args.seed.wrapping_add(i as u64)),
        );
        data::save_pgm(&img, args.out_dir.join(format!("cover_{i:05}.pgm")))?;
    }
    eprintln!("wrote {} covers", args.count);
    Ok(ExitCode::SUCCESS)
}

fn cmd_embed(args: EmbedArgs) -> anyhow::Result<ExitCode> {
    banner(
        "embed",
        &[
            ("cover_dir", args.cover_dir.display().to_string()),
            ("out_dir", args.out_dir.display().to_string()),
            ("bpp", args.bpp.to_string()),
            ("seed", args.seed.to_string()),
            ("source", args.source.clone()),
        ],
    );
    let covers = list_pgms(&args.cover_dir)?;
    fs::create_dir_all(&args.out_dir)?;
    let manifest_path = args
        .manifest_out
        .unwrap_or_else(|| args.out_dir.join("manifest.csv"));
    let manifest_dir = manifest_path.parent().unwrap_or(Path::new("."));
    let beta = data::change_rate_for_payload(args.bpp).map_err(anyhow::Error::from)?;
    eprintln!("change rate beta = {beta:.6}");

    let mut pairs = Vec::with_capacity(covers.len());
    for (i, cover_path) in covers.iter().enumerate() {
        let cover = data::load_pgm(cover_path)?;
        let params = EmbedParams {
            rate_bpp: args.bpp,
            beta,
            seed: splitmix64(args.seed ^ (i as u64).wrapping_mul(0x2545f4914f6cdd1d)),
        };
        let stego = data::lsbm_embed(&cover, &params);
        let name = cover_path
            .file_name()
            .expect("listed files have names")
            .to_string_lossy()
            .into_owned();
        let stego_path = args.out_dir.join(&name);
        data::save_pgm(&stego, &stego_path)?;
        pairs.push(PairRecord {
            id: format!("pair-{i:05}"),
            cover_path: rel_path(manifest_dir, cover_path).to_string_lossy().into_owned(),
            stego_path: rel_path(manifest_dir, &stego_path).to_string_lossy().into_owned(),
            split: Split::Train,
            source: args.source.clone(),
        });
    }
    let manifest = DatasetManifest::new(manifest_dir, pairs)?;
    manifest.save(&manifest_path)?;
    eprintln!(
        "embedded {} pairs, manifest at {}",
        covers.len(),
        manifest_path.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_split(args: SplitArgs) -> anyhow::Result<ExitCode> {
    banner(
        "split",
        &[
            ("manifest", args.manifest.display().to_string()),
            ("seed", args.seed.to_string()),
            ("train_pairs", args.train_pairs.to_string()),
            ("val_pairs", args.val_pairs.to_string()),
            ("train_only_sources", format!("{:?}", args.train_only_source)),
        ],
    );
    let manifest = DatasetManifest::load(&args.manifest)?;
    let pairs = data::make_splits(
        manifest.pairs().to_vec(),
        args.seed,
        args.train_pairs,
        args.val_pairs,
        &args.train_only_source,
    )?;
    let manifest = manifest.with_pairs(pairs)?;
    manifest.save(&args.manifest)?;
    let count = |s: Split| manifest.split_pairs(s).len();
    eprintln!(
        "splits: train={} val={} test={}",
        count(Split::Train),
        count(Split::Val),
        count(Split::Test)
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_augment(args: AugmentArgs) -> anyhow::Result<ExitCode> {
    banner(
        "augment",
        &[
            ("manifest", args.manifest.display().to_string()),
            ("out_dir", args.out_dir.display().to_string()),
        ],
    );
    let manifest = DatasetManifest::load(&args.manifest)?;
    fs::create_dir_all(&args.out_dir)?;
    let mut pairs = Vec::new();
    let mut materialized = 0usize;
    for rec in manifest.pairs() {
        if rec.split != Split::Train {
            // referenced in place, relative to the new manifest location
            let mut pass = rec.clone();
            pass.cover_path = rel_path(&args.out_dir, &manifest.resolve(&rec.cover_path))
                .to_string_lossy()
                .into_owned();
            pass.stego_path = rel_path(&args.out_dir, &manifest.resolve(&rec.stego_path))
                .to_string_lossy()
                .into_owned();
            pairs.push(pass);
            continue;
        }
        let cover = data::load_pgm(manifest.resolve(&rec.cover_path))?;
        let stego = data::load_pgm(manifest.resolve(&rec.stego_path))?;
        for t in 0..data::DIHEDRAL_COUNT {
            let name = data::transform_name(t);
            let cover_name = format!("{}_{}_c.pgm", rec.id, name);
            let stego_name = format!("{}_{}_s.pgm", rec.id, name);
            data::save_pgm(&data::dihedral(&cover, t), args.out_dir.join(&cover_name))?;
            data::save_pgm(&data::dihedral(&stego, t), args.out_dir.join(&stego_name))?;
            pairs.push(PairRecord {
                id: format!("{}-{}", rec.id, name),
                cover_path: cover_name,
                stego_path: stego_name,
                split: Split::Train,
                source: rec.source.clone(),
            });
            materialized += 1;
        }
    }
    let out_manifest = DatasetManifest::new(&args.out_dir, pairs)?;
    let path = args.out_dir.join("manifest.csv");
    out_manifest.save(&path)?;
    eprintln!(
        "materialized {materialized} augmented pairs, manifest at {}",
        path.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_train(args: TrainArgs) -> anyhow::Result<ExitCode> {
    let net_cfg = match &args.net_config {
        Some(path) => YedroudjConfig::from_toml(&fs::read_to_string(path)?)?,
        None => YedroudjConfig::default(),
    };
    let mut cfg = match &args.train_config {
        Some(path) => TrainConfig::from_toml(&fs::read_to_string(path)?)?,
        None => TrainConfig::default(),
    };
    macro_rules! override_field {
        ($($field:ident),*) => {
            $(if let Some(v) = args.$field { cfg.$field = v; })*
        };
    }
    override_field!(
        lr0,
        gamma,
        step_fraction,
        momentum,
        weight_decay,
        batch_size,
        max_epochs,
        seed,
        snapshot_window,
        early_stop,
        patience,
        workers,
        deterministic_timing
    );
    cfg.validate()?;
    banner(
        "train",
        &[
            ("manifest", args.manifest.display().to_string()),
            ("out_dir", args.out_dir.display().to_string()),
            ("seed", cfg.seed.to_string()),
            ("net_config", net_cfg.to_toml().replace('\n', " ").trim().to_string()),
            ("train_config", cfg.to_toml().replace('\n', " ").trim().to_string()),
        ],
    );

    let manifest = DatasetManifest::load(&args.manifest)?;
    fs::create_dir_all(&args.out_dir)?;
    fs::write(args.out_dir.join("net_config.toml"), net_cfg.to_toml())?;
    fs::write(args.out_dir.join("train_config.toml"), cfg.to_toml())?;

    let mut graph = net::build_yedroudj::<f32>(&net_cfg)?;
    graph.init_xavier(cfg.seed);
    let store = ImageStore::new();

    let metrics_path = args.out_dir.join("metrics.jsonl");
    let mut metrics_file = fs::File::create(&metrics_path)?;
    let output = train::train(&mut graph, &manifest, &store, &cfg, |record| {
        let line = serde_json::to_string(record).expect("record serializes");
        writeln!(metrics_file, "{line}").expect("metrics write");
        eprintln!(
            "epoch {:>4}  lr {:.6}  train_loss {:.4}  val_loss {:.4}  val_acc {:.3}",
            record.epoch, record.lr, record.train_loss, record.val_loss, record.val_accuracy
        );
    })?;
    metrics_file.flush()?;

    let min_path = args.out_dir.join("snapshot_min.ckpt");
    let max_path = args.out_dir.join("snapshot_max.ckpt");
    fs::write(&min_path, &output.snapshot_min)?;
    fs::write(&max_path, &output.snapshot_max)?;
    let summary = serde_json::json!({
        "epochs_run": output.metrics.len(),
        "snapshot_min": {"epoch": output.min_epoch, "path": min_path},
        "snapshot_max": {"epoch": output.max_epoch, "path": max_path},
        "metrics": metrics_path,
    });
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(ExitCode::SUCCESS)
}

fn cmd_eval(args: EvalArgs) -> anyhow::Result<ExitCode> {
    banner(
        "eval",
        &[
            ("manifest", args.manifest.display().to_string()),
            ("checkpoints", args.checkpoint.len().to_string()),
            ("batch_size", args.batch_size.to_string()),
        ],
    );
    let manifest = DatasetManifest::load(&args.manifest)?;
    let store = ImageStore::new();
    let checkpoints: Vec<Vec<u8>> = args
        .checkpoint
        .iter()
        .map(fs::read)
        .collect::<std::io::Result<_>>()?;
    let result = train::evaluate_snapshots(&checkpoints, &manifest, &store, args.batch_size)?;
    println!("{}", serde_json::to_string_pretty(&result)?);
    Ok(ExitCode::SUCCESS)
}

fn cmd_gradcheck(args: GradcheckArgs) -> anyhow::Result<ExitCode> {
    banner("gradcheck", &[("tol", args.tol.to_string())]);
    let suite = stegonet::gradcheck::run_suite(args.tol);
    for report in &suite.reports {
        let status = if report.passes(args.tol) { "PASS" } else { "FAIL" };
        println!("{status} {report}");
        if !report.passes(args.tol) {
            for g in &report.groups {
                for o in &g.worst {
                    println!(
                        "      {}[{}]: analytic {:.6e} numeric {:.6e} rel {:.3e}",
                        g.group, o.index, o.analytic, o.numeric, o.rel_err
                    );
                }
            }
        }
    }
    if suite.all_pass() {
        println!("gradcheck: all {} ops within {:.1e}", suite.reports.len(), args.tol);
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("gradcheck failed");
        Ok(ExitCode::from(3))
    }
}

fn cmd_export_filters(args: ExportFiltersArgs) -> anyhow::Result<ExitCode> {
    banner("export-filters", &[("out", args.out.display().to_string())]);
    let bank = srm::build_filter_bank();
    fs::write(&args.out, bank.export_text())?;
    eprintln!("wrote {} kernels to {}", bank.kernels().len(), args.out.display());
    Ok(ExitCode::SUCCESS)
}
