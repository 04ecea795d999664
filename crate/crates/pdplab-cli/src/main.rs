//! Command-line front end for the pdplab channel-modeling toolkit.
//!
//! Subcommands cover the full workflow: `simulate` draws synthetic
//! power-delay-profile datasets, `train` fits (or fine-tunes) a WGAN-GP on a
//! dataset, `generate` samples profiles from a trained checkpoint, `eval`
//! compares a generated set against a reference, and `pipeline` runs the
//! whole chain from a JSON manifest.
//!
//! Exit codes: 0 success, 2 invalid input (bad arguments, malformed or
//! missing files, contract violations), 3 training divergence (the last
//! finite checkpoint is saved and its path printed), 1 unexpected I/O or
//! serialization failure. Errors print a single machine-readable JSON line
//! on stderr: `{"error":{"kind":...,"message":...}}`.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pdplab::channel::DelayGrid;
use pdplab::dataset::{load_dataset, save_dataset};
use pdplab::evaluation::{evaluate_sets, save_eval_report, Pairing, DEFAULT_SSIM_THRESHOLD};
use pdplab::gan::{generate_pdps, load_checkpoint, save_checkpoint};
use pdplab::pipeline::{load_manifest, run_manifest};
use pdplab::synth::{fit_params, generate_dataset, DatasetSpec, StochasticChannelParams};
use pdplab::training::{
    fine_tune, save_report_csv, save_report_json, train_with_snapshots, TrainConfig, TrainReport,
};
use pdplab::{Error, Result};

/// Prints a line to stdout, ignoring a closed pipe instead of panicking, so
/// piping the output through `head` or a dying pager ends the stream quietly.
macro_rules! say {
    ($($arg:tt)*) => {{
        use std::io::Write;
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

#[derive(Parser)]
#[command(
    name = "pdplab",
    version,
    about = "Simulate, learn, and evaluate wireless power delay profile distributions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a synthetic profile dataset from a stochastic multipath model.
    Simulate(SimulateArgs),
    /// Train a WGAN-GP on a dataset, or fine-tune from a checkpoint.
    Train(TrainArgs),
    /// Sample profiles from a trained generator checkpoint.
    Generate(GenerateArgs),
    /// Compare a generated dataset against a reference set.
    Eval(EvalArgs),
    /// Run a simulate/train/generate/eval experiment from a manifest.
    Pipeline(PipelineArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// JSON file with stochastic channel parameters.
    #[arg(
        long,
        value_name = "FILE",
        conflicts_with = "fit_from",
        required_unless_present = "fit_from"
    )]
    params: Option<PathBuf>,
    /// Fit channel parameters from an existing dataset instead.
    #[arg(long, value_name = "DATASET")]
    fit_from: Option<PathBuf>,
    /// Number of profiles to draw.
    #[arg(long)]
    count: usize,
    /// RNG seed; every run must be seeded explicitly.
    #[arg(long)]
    seed: u64,
    /// Output dataset path (.csv or .bin; a JSON sidecar is written next to it).
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    /// Number of delay bins (default 401, or the source grid with --fit-from).
    #[arg(long, value_name = "N")]
    grid_points: Option<usize>,
    /// Delay-bin spacing in seconds (default 1e-9, or the source grid with --fit-from).
    #[arg(long, value_name = "SECONDS")]
    grid_spacing_s: Option<f64>,
}

#[derive(Args)]
struct TrainArgs {
    /// Training dataset (.csv or .bin with its sidecar).
    #[arg(long, value_name = "DATASET")]
    data: PathBuf,
    /// RNG seed; overrides any seed in --config.
    #[arg(long)]
    seed: u64,
    /// Output checkpoint path; the loss history CSV and run summary JSON are
    /// written next to it.
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    /// Number of epochs (overrides --config).
    #[arg(long)]
    epochs: Option<usize>,
    /// Checkpoint to fine-tune from. Both networks' parameters transfer;
    /// optimizer state starts fresh.
    #[arg(long, value_name = "FILE")]
    init: Option<PathBuf>,
    /// JSON training configuration; --seed and --epochs override it.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Directory for periodic checkpoint snapshots (not supported with --init).
    #[arg(long, value_name = "DIR")]
    snapshot_dir: Option<PathBuf>,
    /// Epochs between snapshots; requires --snapshot-dir.
    #[arg(long, value_name = "N", requires = "snapshot_dir")]
    snapshot_every: Option<usize>,
}

#[derive(Args)]
struct GenerateArgs {
    /// Trained checkpoint to sample from.
    #[arg(long, value_name = "FILE")]
    ckpt: PathBuf,
    /// Number of profiles to sample.
    #[arg(long)]
    count: usize,
    /// RNG seed for the noise draws.
    #[arg(long)]
    seed: u64,
    /// Output dataset path (.csv or .bin).
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    /// Standard deviation of the generator's input noise.
    #[arg(long, default_value_t = 1.0)]
    noise_sigma: f64,
}

#[derive(Args)]
struct EvalArgs {
    /// Reference dataset.
    #[arg(long, value_name = "DATASET")]
    reference: PathBuf,
    /// Generated dataset to score.
    #[arg(long, value_name = "DATASET")]
    generated: PathBuf,
    /// Output report directory.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Similarity score counted as "high" in the reported fraction.
    #[arg(long, default_value_t = DEFAULT_SSIM_THRESHOLD)]
    ssim_threshold: f64,
    /// Seed for random reference/generated pairing. Without it the sets are
    /// paired by index, which requires equal sizes.
    #[arg(long)]
    pairing_seed: Option<u64>,
}

#[derive(Args)]
struct PipelineArgs {
    /// Experiment manifest (JSON).
    #[arg(long, value_name = "FILE")]
    manifest: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let line = serde_json::json!({
                "error": { "kind": error_kind(&err), "message": err.to_string() }
            });
            {
                use std::io::Write;
                let _ = writeln!(std::io::stderr(), "{line}");
            }
            ExitCode::from(exit_code(&err))
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Train(args) => cmd_train(args),
        Command::Generate(args) => cmd_generate(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Pipeline(args) => cmd_pipeline(args),
    }
}

/// Stable machine-readable tag for the stderr error line.
fn error_kind(err: &Error) -> &'static str {
    match err {
        Error::ShapeMismatch { .. } => "shape_mismatch",
        Error::PathOutsideGrid { .. } => "path_outside_grid",
        Error::ZeroTotalPower => "zero_total_power",
        Error::InvalidInput(_) => "invalid_input",
        Error::BandOutsideSpan { .. } => "band_outside_span",
        Error::EmptyFitSupport => "empty_fit_support",
        Error::ArchitectureMismatch(_) => "architecture_mismatch",
        Error::Divergence { .. } => "divergence",
        Error::FileFormat { .. } => "file_format",
        Error::UnsupportedVersion { .. } => "unsupported_version",
        Error::MissingFile(_) => "missing_file",
        Error::Io(_) => "io",
        Error::Json(_) => "json",
    }
}

/// 2 for anything the caller can fix in their inputs, 3 for divergence,
/// 1 for environment failures.
fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Divergence { .. } => 3,
        Error::Io(_) | Error::Json(_) => 1,
        _ => 2,
    }
}

/// Rejects nonexistent input paths up front so they map to `missing_file`
/// (exit 2) rather than a raw I/O error.
fn require_file(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::MissingFile(path.display().to_string()))
    }
}

fn parse_json_file<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    require_file(path)?;
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::FileFormat {
        path: path.display().to_string(),
        row: None,
        message: e.to_string(),
    })
}

/// `model.ckpt` -> `model_<suffix>` in the same directory.
fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let stem = out
        .file_stem()
        .and_then(|s| s.to_str())
        .filter(|s| !s.is_empty())
        .unwrap_or("out");
    out.with_file_name(format!("{stem}_{suffix}"))
}

fn cmd_simulate(args: SimulateArgs) -> Result<()> {
    let (params, source_grid) = match (&args.params, &args.fit_from) {
        (Some(path), None) => (parse_json_file::<StochasticChannelParams>(path)?, None),
        (None, Some(path)) => {
            require_file(path)?;
            let source = load_dataset(path)?;
            let pdps = source.pdps()?;
            (fit_params(&pdps)?, Some(source.grid))
        }
        // clap enforces exactly one of --params/--fit-from.
        _ => unreachable!("argument group"),
    };
    let base = source_grid.unwrap_or_default();
    let grid = DelayGrid::new(
        args.grid_points.unwrap_or(base.num_points()),
        args.grid_spacing_s.unwrap_or(base.spacing_s()),
    )?;
    let spec = DatasetSpec { params, count: args.count, grid, rng_seed: args.seed };
    let dataset = generate_dataset(&spec)?;
    save_dataset(&dataset, &args.out)?;
    say!(
        "wrote {} profiles ({} delay bins) to {}",
        dataset.len(),
        grid.num_points(),
        args.out.display()
    );
    Ok(())
}

fn print_train_outcome(report: &TrainReport, out: &Path) {
    match (report.g_loss.last(), report.d_loss.last()) {
        (Some(g), Some(d)) => say!(
            "trained {} epochs: final g_loss {g:.6}, d_loss {d:.6}, convergence estimate {}",
            report.epochs_run, report.convergence_epoch_estimate
        ),
        _ => say!("no epochs run; parameters carried over unchanged"),
    }
    say!("checkpoint {} -> {}", report.checkpoint_fingerprint, out.display());
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    require_file(&args.data)?;
    let mut config = match &args.config {
        Some(path) => parse_json_file::<TrainConfig>(path)?,
        None => TrainConfig::new(args.seed),
    };
    config.seed = args.seed;
    if let Some(epochs) = args.epochs {
        config.epochs = epochs;
    }
    if let Some(every) = args.snapshot_every {
        config.snapshot_every = Some(every);
    }
    let data = load_dataset(&args.data)?;

    let result = match &args.init {
        Some(init_path) => {
            if args.snapshot_dir.is_some() {
                return Err(Error::InvalidInput(
                    "snapshots are not supported when fine-tuning with --init".into(),
                ));
            }
            require_file(init_path)?;
            let init = load_checkpoint(init_path)?;
            if args.config.is_none() {
                // Without an explicit config, adopt the checkpoint's
                // architecture rather than demanding it match the default.
                config.architecture = init.architecture.clone();
                config.noise.dim = init.architecture.noise_dim;
            }
            fine_tune(&config, &data, &init)
        }
        None => train_with_snapshots(&config, &data, None, args.snapshot_dir.as_deref()),
    };

    match result {
        Ok((ckpt, report)) => {
            save_checkpoint(&ckpt, &args.out)?;
            save_report_csv(&report, &sibling(&args.out, "history.csv"))?;
            save_report_json(&report, &sibling(&args.out, "summary.json"))?;
            print_train_outcome(&report, &args.out);
            Ok(())
        }
        Err(Error::Divergence { epoch, last_checkpoint }) => {
            let rescue = sibling(&args.out, "last_finite.ckpt");
            save_checkpoint(&last_checkpoint, &rescue)?;
            say!(
                "training diverged at epoch {epoch}; last finite checkpoint saved to {}",
                rescue.display()
            );
            Err(Error::Divergence { epoch, last_checkpoint })
        }
        Err(err) => Err(err),
    }
}

fn cmd_generate(args: GenerateArgs) -> Result<()> {
    require_file(&args.ckpt)?;
    let ckpt = load_checkpoint(&args.ckpt)?;
    let dataset = generate_pdps(&ckpt, args.count, args.seed, args.noise_sigma)?;
    save_dataset(&dataset, &args.out)?;
    say!(
        "generated {} profiles from {} (epoch {}) to {}",
        dataset.len(),
        args.ckpt.display(),
        ckpt.epoch,
        args.out.display()
    );
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    require_file(&args.reference)?;
    require_file(&args.generated)?;
    let reference = load_dataset(&args.reference)?;
    let generated = load_dataset(&args.generated)?;
    let pairing = match args.pairing_seed {
        Some(seed) => Pairing::Random { seed },
        None if reference.len() == generated.len() => Pairing::Identity,
        None => {
            return Err(Error::InvalidInput(format!(
                "reference ({}) and generated ({}) sizes differ; pass --pairing-seed to \
                 choose the similarity pairing explicitly",
                reference.len(),
                generated.len()
            )))
        }
    };
    let report = evaluate_sets(&reference, &generated, args.ssim_threshold, pairing)?;
    save_eval_report(&report, &args.out)?;
    say!(
        "rmse_linear {:.6e}  rmse_db {:.3}  ssim_fraction_above({}) {:.4}  w1_total_power {:.6e}",
        report.rmse_linear, report.rmse_db, report.ssim_threshold, report.ssim_fraction_above,
        report.wasserstein_total_power
    );
    say!("report written to {}", args.out.display());
    Ok(())
}

fn cmd_pipeline(args: PipelineArgs) -> Result<()> {
    let manifest = load_manifest(&args.manifest)?;
    let run_dir = PathBuf::from(&manifest.run_dir);
    match run_manifest(&manifest, &run_dir, Some(&args.manifest)) {
        Ok(outcome) => {
            let report = &outcome.report;
            say!(
                "rmse_linear {:.6e}  rmse_db {:.3}  ssim_fraction_above({}) {:.4}  w1_total_power {:.6e}",
                report.rmse_linear, report.rmse_db, report.ssim_threshold,
                report.ssim_fraction_above, report.wasserstein_total_power
            );
            say!("pipeline complete; artifacts in {}", outcome.run_dir.display());
            Ok(())
        }
        Err(Error::Divergence { epoch, last_checkpoint }) => {
            let rescue = run_dir.join("last_finite.ckpt");
            save_checkpoint(&last_checkpoint, &rescue)?;
            say!(
                "training diverged at epoch {epoch}; last finite checkpoint saved to {}",
                rescue.display()
            );
            Err(Error::Divergence { epoch, last_checkpoint })
        }
        Err(err) => Err(err),
    }
}
