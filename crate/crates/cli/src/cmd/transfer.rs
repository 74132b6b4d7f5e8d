use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use lrdecay::ndgrad::{MlpConfig, ParamVector};
use lrdecay::ps10::Ps10Dataset;
use lrdecay::trainer::Optimizer;
use lrdecay::transfer::{
    compute_table, stage_transfer, write_accuracies, Mode, TransferSettings, TransferabilityReport,
};
use serde::{Deserialize, Serialize};

use crate::config::{emit, manifest_path, merge, open, required, write_file, write_json, Manifest};
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeArg {
    Fix,
    Finetune,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Fix => Mode::Fix,
            ModeArg::Finetune => Mode::Finetune,
        }
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransferArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Accuracy table (dataset,mode,stage,acc); selects table mode
    #[arg(long, conflicts_with = "run_dir")]
    pub accs: Option<PathBuf>,
    /// Source dataset name (default: the first dataset in the table)
    #[arg(long)]
    pub source: Option<String>,
    /// Training run directory with model.json and snapshots/; selects snapshot mode
    #[arg(long)]
    pub run_dir: Option<PathBuf>,
    /// Snapshot mode: dataset for source accuracies
    #[arg(long)]
    pub source_eval: Option<PathBuf>,
    /// Snapshot mode: target training set
    #[arg(long)]
    pub target_train: Option<PathBuf>,
    /// Snapshot mode: target evaluation set
    #[arg(long)]
    pub target_eval: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Snapshot mode: retraining epochs on the target
    #[arg(long)]
    pub epochs: Option<u64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Snapshot mode: write the measured accuracies in table format
    #[arg(long)]
    pub accs_out: Option<PathBuf>,
    /// JSON report
    #[arg(short, long)]
    pub out: Option<PathBuf>,
    /// Markdown table (default: printed to stdout)
    #[arg(long)]
    pub markdown: Option<PathBuf>,
}

pub fn run(args: &TransferArgs) -> CliResult<()> {
    let mut r: TransferArgs = merge(args, args.config.as_deref())?;
    let mut manifest;
    let report = if let Some(accs) = r.accs.clone() {
        let report = compute_table(open(&accs)?, r.source.as_deref())?;
        manifest = Manifest::new(&r, None)?;
        manifest.hash(&accs)?;
        report
    } else if let Some(dir) = r.run_dir.clone() {
        let mode: Mode = required(&r.mode, "mode")?.into();
        let d = TransferSettings::default();
        let settings = TransferSettings {
            epochs: *r.epochs.get_or_insert(d.epochs),
            lr: *r.lr.get_or_insert(d.lr),
            optimizer: Optimizer::Sgd {
                batch_size: *r.batch_size.get_or_insert(32),
            },
            seed: *r.seed.get_or_insert(d.seed),
        };
        let source_eval = load(&required(&r.source_eval, "source-eval")?)?;
        let target_train = load(&required(&r.target_train, "target-train")?)?;
        let target_eval = load(&required(&r.target_eval, "target-eval")?)?;
        let model_path = dir.join("model.json");
        let model: MlpConfig = serde_json::from_reader(open(&model_path)?)
            .map_err(|e| CliError::usage(format!("{}: {e}", model_path.display())))?;
        let stages = load_snapshots(&dir)?;
        let refs: Vec<&ParamVector> = stages.iter().map(|(_, p)| p).collect();
        let out = stage_transfer(
            &refs,
            &model,
            &source_eval,
            &target_train,
            &target_eval,
            mode,
            &settings,
        )?;
        if out.single_class_target {
            eprintln!(
                "warning: target training set has a single class; its accuracies are trivial"
            );
        }
        manifest = Manifest::new(&r, Some(settings.seed))?;
        manifest.hash(&model_path)?;
        for (path, _) in &stages {
            manifest.hash(path)?;
        }
        if let Some(path) = &r.accs_out {
            let mut buf = Vec::new();
            write_accuracies(&out.accuracies, &mut buf)?;
            write_file(path, &buf)?;
            manifest.hash(path)?;
        }
        TransferabilityReport::from_accuracies(&out.accuracies)?
    } else {
        return Err(CliError::usage("one of --accs or --run-dir is required"));
    };

    let md = report.to_markdown();
    match &r.markdown {
        Some(path) => {
            write_file(path, md.as_bytes())?;
            manifest.hash(path)?;
        }
        None => emit(&md),
    }
    if let Some(out) = &r.out {
        write_json(out, &report)?;
        manifest.hash(out)?;
        manifest.write(&manifest_path(out))?;
    }
    Ok(())
}

fn load(path: &Path) -> CliResult<Ps10Dataset> {
    Ok(Ps10Dataset::read_from(open(path)?)?)
}

/// `snapshots/stage-<k>.params` files in stage order.
fn load_snapshots(dir: &Path) -> CliResult<Vec<(PathBuf, ParamVector)>> {
    let snap_dir = dir.join("snapshots");
    let entries = fs::read_dir(&snap_dir).map_err(|e| CliError::io(&snap_dir, e))?;
    let mut found = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| CliError::io(&snap_dir, e))?.path();
        let stage = path.file_name().and_then(|n| n.to_str()).and_then(|n| {
            n.strip_prefix("stage-")?
                .strip_suffix(".params")?
                .parse::<u32>()
                .ok()
        });
        if let Some(stage) = stage {
            found.push((stage, path));
        }
    }
    found.sort();
    found
        .into_iter()
        .map(|(_, path)| {
            let params = ParamVector::read_from(open(&path)?)?;
            Ok((path, params))
        })
        .collect()
}
