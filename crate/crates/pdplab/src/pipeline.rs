//! Manifest-driven experiment runner: simulate or load a source dataset,
//! pretrain, optionally fine-tune on a target dataset, generate, evaluate.
//!
//! Every referenced file is checked before any artifact is written, so a
//! broken manifest fails without leaving a partial run directory behind.
//! All artifacts land under a single run directory together with a copy of
//! the manifest.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::channel::DelayGrid;
use crate::dataset::{load_dataset, save_dataset, PdpDataset};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate_sets, save_eval_report, EvalReport, Pairing};
use crate::gan::{generate_pdps, save_checkpoint, Checkpoint};
use crate::synth::{generate_dataset, DatasetSpec, StochasticChannelParams};
use crate::training::{
    fine_tune, save_report_csv, save_report_json, train_with_snapshots, TrainConfig, TrainReport,
};

/// Where one stage's dataset comes from: an existing file or a fresh
/// simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSource {
    File {
        path: String,
    },
    Simulate {
        params: StochasticChannelParams,
        #[serde(default)]
        grid: DelayGrid,
        count: usize,
        seed: u64,
    },
}

fn default_threshold() -> f64 {
    crate::evaluation::DEFAULT_SSIM_THRESHOLD
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalSettings {
    #[serde(default = "default_threshold")]
    pub ssim_threshold: f64,
    /// Seed for the random SSIM pairing.
    pub pairing_seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerateSettings {
    pub count: usize,
    pub seed: u64,
}

/// Declarative description of a full experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentManifest {
    #[serde(default)]
    pub label: String,
    /// Directory all artifacts are written under.
    pub run_dir: String,
    pub source: DatasetSource,
    #[serde(default)]
    pub target: Option<DatasetSource>,
    pub pretrain: TrainConfig,
    #[serde(default)]
    pub finetune: Option<TrainConfig>,
    pub generate: GenerateSettings,
    pub eval: EvalSettings,
}

/// Paths of the artifacts a run produced, plus the final evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutcome {
    pub run_dir: PathBuf,
    pub pretrain_checkpoint: PathBuf,
    pub finetune_checkpoint: Option<PathBuf>,
    pub generated_path: PathBuf,
    pub eval_dir: PathBuf,
    pub report: EvalReport,
    pub pretrain_report: TrainReport,
    pub finetune_report: Option<TrainReport>,
}

/// Reads and parses a manifest file.
pub fn load_manifest(path: &Path) -> Result<ExperimentManifest> {
    if !path.exists() {
        return Err(Error::MissingFile(path.display().to_string()));
    }
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::FileFormat {
        path: path.display().to_string(),
        row: None,
        message: format!("malformed manifest: {e}"),
    })
}

fn check_source(name: &str, source: &DatasetSource) -> Result<()> {
    match source {
        DatasetSource::File { path } => {
            if !Path::new(path).exists() {
                return Err(Error::MissingFile(path.clone()));
            }
            let sidecar = crate::dataset::sidecar_path(Path::new(path));
            if !sidecar.exists() {
                return Err(Error::MissingFile(sidecar.display().to_string()));
            }
            Ok(())
        }
        DatasetSource::Simulate { params, grid, count, .. } => {
            // Re-run the constructor so hand-written grids are validated.
            DelayGrid::new(grid.num_points(), grid.spacing_s())?;
            params.validate()?;
            if *count == 0 {
                return Err(Error::InvalidInput(format!(
                    "{name} simulation count must be at least 1"
                )));
            }
            Ok(())
        }
    }
}

/// Validates the whole manifest without touching the filesystem beyond
/// existence checks.
pub fn validate_manifest(manifest: &ExperimentManifest) -> Result<()> {
    if manifest.run_dir.is_empty() {
        return Err(Error::InvalidInput("manifest run_dir must not be empty".into()));
    }
    check_source("source", &manifest.source)?;
    if let Some(target) = &manifest.target {
        check_source("target", target)?;
    }
    manifest.pretrain.validate(true)?;
    if let Some(ft) = &manifest.finetune {
        if manifest.target.is_none() {
            return Err(Error::InvalidInput(
                "manifest declares a fine-tune stage but no target dataset".into(),
            ));
        }
        ft.validate(false)?;
    }
    if manifest.generate.count == 0 {
        return Err(Error::InvalidInput("generation count must be at least 1".into()));
    }
    if !manifest.eval.ssim_threshold.is_finite() {
        return Err(Error::InvalidInput("ssim threshold must be finite".into()));
    }
    Ok(())
}

fn resolve_source(source: &DatasetSource, save_as: &Path) -> Result<PdpDataset> {
    match source {
        DatasetSource::File { path } => load_dataset(Path::new(path)),
        DatasetSource::Simulate { params, grid, count, seed } => {
            let spec = DatasetSpec {
                params: params.clone(),
                count: *count,
                grid: *grid,
                rng_seed: *seed,
            };
            let data = generate_dataset(&spec)?;
            save_dataset(&data, save_as)?;
            Ok(data)
        }
    }
}

fn snapshot_dir_for(config: &TrainConfig, run_dir: &Path, stage: &str) -> Result<Option<PathBuf>> {
    if config.snapshot_every.is_none() {
        return Ok(None);
    }
    let dir = run_dir.join(format!("{stage}_snapshots"));
    fs::create_dir_all(&dir)?;
    Ok(Some(dir))
}

/// Executes `manifest` with all artifacts under `run_dir`. When
/// `manifest_path` is given, the original manifest file is copied in
/// verbatim; otherwise the parsed manifest is serialized.
pub fn run_manifest(
    manifest: &ExperimentManifest,
    run_dir: &Path,
    manifest_path: Option<&Path>,
) -> Result<PipelineOutcome> {
    validate_manifest(manifest)?;
    fs::create_dir_all(run_dir)?;
    match manifest_path {
        Some(src) => {
            fs::copy(src, run_dir.join("manifest.json"))?;
        }
        None => {
            let mut bytes = serde_json::to_vec_pretty(manifest)?;
            bytes.push(b'\n');
            crate::dataset::write_atomic(&run_dir.join("manifest.json"), &bytes)?;
        }
    }

    let source = resolve_source(&manifest.source, &run_dir.join("source_dataset.csv"))?;
    let pretrain_snap = snapshot_dir_for(&manifest.pretrain, run_dir, "pretrain")?;
    let (pre_ckpt, pre_report) = train_with_snapshots(
        &manifest.pretrain,
        &source,
        None,
        pretrain_snap.as_deref(),
    )?;
    let pretrain_checkpoint = run_dir.join("pretrain.ckpt");
    save_checkpoint(&pre_ckpt, &pretrain_checkpoint)?;
    save_report_csv(&pre_report, &run_dir.join("pretrain_history.csv"))?;
    save_report_json(&pre_report, &run_dir.join("pretrain_summary.json"))?;

    let target = match &manifest.target {
        Some(t) => Some(resolve_source(t, &run_dir.join("target_dataset.csv"))?),
        None => None,
    };

    let mut finetune_checkpoint = None;
    let mut finetune_report = None;
    let final_ckpt: Checkpoint = match (&manifest.finetune, &target) {
        (Some(cfg), Some(target_data)) => {
            let (ft_ckpt, ft_report) = fine_tune(cfg, target_data, &pre_ckpt)?;
            let path = run_dir.join("finetune.ckpt");
            save_checkpoint(&ft_ckpt, &path)?;
            save_report_csv(&ft_report, &run_dir.join("finetune_history.csv"))?;
            save_report_json(&ft_report, &run_dir.join("finetune_summary.json"))?;
            finetune_checkpoint = Some(path);
            finetune_report = Some(ft_report);
            ft_ckpt
        }
        _ => pre_ckpt,
    };

    let generated = generate_pdps(&final_ckpt, manifest.generate.count, manifest.generate.seed, 1.0)?;
    let generated_path = run_dir.join("generated.csv");
    save_dataset(&generated, &generated_path)?;

    let reference = target.as_ref().unwrap_or(&source);
    let report = evaluate_sets(
        reference,
        &generated,
        manifest.eval.ssim_threshold,
        Pairing::Random { seed: manifest.eval.pairing_seed },
    )?;
    let eval_dir = run_dir.join("eval");
    save_eval_report(&report, &eval_dir)?;

    Ok(PipelineOutcome {
        run_dir: run_dir.to_path_buf(),
        pretrain_checkpoint,
        finetune_checkpoint,
        generated_path,
        eval_dir,
        report,
        pretrain_report: pre_report,
        finetune_report,
    })
}
