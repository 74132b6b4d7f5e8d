//! Transferability of the patterns learned in each learning-rate stage.
//!
//! For a source model snapshotted at the end of stages `1..=S`, with source
//! accuracies `acc_i` and target accuracies `tacc_i`, the transferability of the
//! patterns added in stage `i >= 2` is
//! `(tacc_i - tacc_{i-1}) / (acc_i - acc_{i-1})`.

use std::collections::BTreeMap;
use std::fmt::{self, Debug, Write as _};
use std::io::Read;

use num_rational::Ratio;
use num_traits::{Num, ToPrimitive};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ndgrad::{MlpConfig, ParamVector};
use crate::ps10::{Ps10Dataset, CHANNELS};
use crate::trainer::{
    evaluate_subsets, train_from, MlpClassifier, Optimizer, RunResult, Schedule, TrainConfig,
    Trainable,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Finetune,
    Fix,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Finetune => "finetune",
            Mode::Fix => "fix",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "finetune" => Ok(Mode::Finetune),
            "fix" => Ok(Mode::Fix),
            other => Err(Error::validation(format!(
                "unknown transfer mode `{other}`"
            ))),
        }
    }
}

/// Decimal places accepted by the exact parser. With accuracies bounded by 100
/// this keeps every intermediate product of the ratio well inside `i128`.
pub const MAX_DECIMALS: usize = 12;

/// Percent accuracies, exact or floating.
pub trait Accuracy: Num + Clone + PartialOrd + Debug {
    /// Parses a plain decimal such as `82.73` or `-0.5`.
    fn parse_decimal(s: &str) -> Option<Self>;
    fn to_f64(&self) -> f64;
}

impl Accuracy for f64 {
    fn parse_decimal(s: &str) -> Option<Self> {
        s.trim().parse::<f64>().ok().filter(|x| x.is_finite())
    }

    fn to_f64(&self) -> f64 {
        *self
    }
}

impl Accuracy for Ratio<i128> {
    fn parse_decimal(s: &str) -> Option<Self> {
        let s = s.trim();
        let (neg, body) = match s.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, s.strip_prefix('+').unwrap_or(s)),
        };
        let (int, frac) = body.split_once('.').unwrap_or((body, ""));
        if int.is_empty() && frac.is_empty()
            || !int.bytes().all(|b| b.is_ascii_digit())
            || !frac.bytes().all(|b| b.is_ascii_digit())
            || frac.len() > MAX_DECIMALS
        {
            return None;
        }
        let digits = format!("{int}{frac}");
        let numer: i128 = if digits.is_empty() {
            0
        } else {
            digits.parse().ok()?
        };
        let denom = 10i128.checked_pow(frac.len() as u32)?;
        let r = Ratio::new(numer, denom);
        Some(if neg { -r } else { r })
    }

    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
}

/// Per-stage source accuracies and per-(target, mode) target accuracies, in percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageAccuracies<T> {
    pub source: String,
    pub source_acc: Vec<T>,
    /// In order of first appearance.
    pub targets: Vec<TargetAccuracies<T>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetAccuracies<T> {
    pub target: String,
    pub mode: Mode,
    pub tacc: Vec<T>,
}

impl<T: Accuracy> StageAccuracies<T> {
    pub fn stages(&self) -> usize {
        self.source_acc.len()
    }

    pub fn validate(&self) -> Result<()> {
        let hundred = T::parse_decimal("100").expect("literal");
        let in_range = |v: &T| *v >= T::zero() && *v <= hundred;
        if !self.source_acc.iter().all(in_range) {
            return Err(Error::validation("source accuracies must lie in [0, 100]"));
        }
        for t in &self.targets {
            if t.tacc.len() != self.stages() {
                return Err(Error::validation(format!(
                    "{} / {} has {} stages, source has {}",
                    t.target,
                    t.mode,
                    t.tacc.len(),
                    self.stages()
                )));
            }
            if !t.tacc.iter().all(in_range) {
                return Err(Error::validation(format!(
                    "{} / {} accuracies must lie in [0, 100]",
                    t.target, t.mode
                )));
            }
        }
        Ok(())
    }

    fn find(&self, target: &str, mode: Mode) -> Result<&TargetAccuracies<T>> {
        self.targets
            .iter()
            .find(|t| t.target == target && t.mode == mode)
            .ok_or_else(|| Error::validation(format!("no accuracies for {target} / {mode}")))
    }
}

/// `(tacc_i - tacc_{i-1}) / (acc_i - acc_{i-1})` for a 1-based `stage >= 2`.
pub fn transferability<T: Accuracy>(
    accs: &StageAccuracies<T>,
    target: &str,
    mode: Mode,
    stage: usize,
) -> Result<T> {
    if stage < 2 || stage > accs.stages() {
        return Err(Error::validation(format!(
            "stage must lie in [2, {}], got {stage}",
            accs.stages()
        )));
    }
    let t = accs.find(target, mode)?;
    ratio(&accs.source_acc, &t.tacc, stage)
}

fn ratio<T: Accuracy>(acc: &[T], tacc: &[T], stage: usize) -> Result<T> {
    let (i, j) = (stage - 1, stage - 2);
    let den = acc[i].clone() - acc[j].clone();
    if den.is_zero() {
        return Err(Error::DegenerateStage { stage });
    }
    Ok((tacc[i].clone() - tacc[j].clone()) / den)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferEntry {
    pub target: String,
    pub mode: Mode,
    pub stage: usize,
    /// Full-precision ratio; absent when the source accuracy did not change.
    pub ratio: Option<f64>,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferabilityReport {
    pub source: String,
    pub stages: usize,
    pub source_acc: Vec<f64>,
    pub targets: Vec<TargetAccuracies<f64>>,
    /// One entry per (target, mode, stage >= 2).
    pub entries: Vec<TransferEntry>,
}

impl TransferabilityReport {
    pub fn from_accuracies<T: Accuracy>(accs: &StageAccuracies<T>) -> Result<Self> {
        accs.validate()?;
        let mut entries = Vec::new();
        for t in &accs.targets {
            for stage in 2..=accs.stages() {
                let (ratio, degenerate) = match ratio(&accs.source_acc, &t.tacc, stage) {
                    Ok(r) => (Some(r.to_f64()), false),
                    Err(Error::DegenerateStage { .. }) => (None, true),
                    Err(e) => return Err(e),
                };
                entries.push(TransferEntry {
                    target: t.target.clone(),
                    mode: t.mode,
                    stage,
                    ratio,
                    degenerate,
                });
            }
        }
        Ok(Self {
            source: accs.source.clone(),
            stages: accs.stages(),
            source_acc: accs.source_acc.iter().map(Accuracy::to_f64).collect(),
            targets: accs
                .targets
                .iter()
                .map(|t| TargetAccuracies {
                    target: t.target.clone(),
                    mode: t.mode,
                    tacc: t.tacc.iter().map(Accuracy::to_f64).collect(),
                })
                .collect(),
            entries,
        })
    }

    pub fn ratio(&self, target: &str, mode: Mode, stage: usize) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| e.target == target && e.mode == mode && e.stage == stage)
            .and_then(|e| e.ratio)
    }

    /// Table with one row per target and, per mode, each stage's accuracy
    /// followed by its transferability in bold.
    pub fn to_markdown(&self) -> String {
        let mut modes: Vec<Mode> = self.targets.iter().map(|t| t.mode).collect();
        modes.sort();
        modes.dedup();
        let mut names: Vec<&str> = Vec::new();
        for t in &self.targets {
            if !names.contains(&t.target.as_str()) {
                names.push(&t.target);
            }
        }
        let mut header = vec!["Dataset".to_string()];
        for m in &modes {
            for s in 1..=self.stages {
                header.push(format!("{m} stage{s}"));
                if s >= 2 {
                    header.push(format!("**{m} stage{s}**"));
                }
            }
        }
        let mut out = String::new();
        let _ = writeln!(out, "| {} |", header.join(" | "));
        let _ = writeln!(out, "|{}", "---|".repeat(header.len()));
        for name in names {
            let mut row = vec![name.to_string()];
            for &m in &modes {
                let t = self
                    .targets
                    .iter()
                    .find(|t| t.target == name && t.mode == m);
                for s in 1..=self.stages {
                    row.push(t.map_or("".into(), |t| format!("{:.2}", t.tacc[s - 1])));
                    if s >= 2 {
                        let cell = match self
                            .entries
                            .iter()
                            .find(|e| e.target == name && e.mode == m && e.stage == s)
                        {
                            Some(TransferEntry { ratio: Some(r), .. }) => format!("**{r:.2}**"),
                            Some(_) => "degenerate".into(),
                            None => String::new(),
                        };
                        row.push(cell);
                    }
                }
            }
            let _ = writeln!(out, "| {} |", row.join(" | "));
        }
        out
    }
}

const COLUMNS: [&str; 4] = ["dataset", "mode", "stage", "acc"];

/// Reads the accuracy CSV (`dataset,mode,stage,acc`). The source dataset is
/// `source`, or the first dataset listed when `None`. Source rows are also
/// treated as a target, giving transferability 1.
pub fn parse_accuracies<T: Accuracy, R: Read>(
    input: R,
    source: Option<&str>,
) -> Result<StageAccuracies<T>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(input);
    let headers = rdr.headers()?.clone();
    for (i, want) in COLUMNS.iter().enumerate() {
        if headers.get(i).map(str::to_ascii_lowercase).as_deref() != Some(*want) {
            return Err(Error::Parse {
                row: 1,
                column: i + 1,
                message: format!("expected header `{}`", COLUMNS.join(",")),
            });
        }
    }
    if headers.len() != COLUMNS.len() {
        return Err(Error::Parse {
            row: 1,
            column: COLUMNS.len() + 1,
            message: "unexpected extra column".into(),
        });
    }

    // (dataset, mode) -> stage -> acc, with datasets in order of appearance
    let mut order: Vec<(String, Mode)> = Vec::new();
    let mut cells: BTreeMap<(String, Mode), BTreeMap<usize, T>> = BTreeMap::new();
    let mut first_dataset: Option<String> = None;
    for rec in rdr.records() {
        let rec = rec?;
        let row = rec.position().map_or(0, |p| p.line() as usize);
        let bad = |column: usize, message: String| Error::Parse {
            row,
            column,
            message,
        };
        if rec.len() != COLUMNS.len() {
            return Err(bad(
                rec.len().min(COLUMNS.len()) + 1,
                format!("expected {} fields", COLUMNS.len()),
            ));
        }
        let dataset = rec[0].to_string();
        if dataset.is_empty() {
            return Err(bad(1, "empty dataset name".into()));
        }
        let mode: Mode = rec[1]
            .parse()
            .map_err(|_| bad(2, format!("unknown mode `{}`", &rec[1])))?;
        let stage: usize = rec[2].parse().ok().filter(|&s| s >= 1).ok_or_else(|| {
            bad(
                3,
                format!("stage must be a positive integer, got `{}`", &rec[2]),
            )
        })?;
        let acc = T::parse_decimal(&rec[3])
            .ok_or_else(|| bad(4, format!("not a number: `{}`", &rec[3])))?;
        let hundred = T::parse_decimal("100").expect("literal");
        if acc < T::zero() || acc > hundred {
            return Err(bad(4, format!("accuracy `{}` outside [0, 100]", &rec[3])));
        }
        first_dataset.get_or_insert_with(|| dataset.clone());
        let key = (dataset, mode);
        if !order.contains(&key) {
            order.push(key.clone());
        }
        if cells.entry(key).or_default().insert(stage, acc).is_some() {
            return Err(bad(3, format!("duplicate stage {stage}")));
        }
    }

    let source = match source {
        Some(s) => s.to_string(),
        None => first_dataset.ok_or_else(|| Error::validation("accuracy table is empty"))?,
    };
    let to_list = |key: &(String, Mode), stages: &BTreeMap<usize, T>| -> Result<Vec<T>> {
        if stages.keys().copied().ne(1..=stages.len()) {
            return Err(Error::validation(format!(
                "{} / {}: stages must be numbered 1..=n without gaps",
                key.0, key.1
            )));
        }
        Ok(stages.values().cloned().collect())
    };
    let mut source_acc: Option<Vec<T>> = None;
    let mut targets = Vec::new();
    for key in &order {
        let list = to_list(key, &cells[key])?;
        if key.0 == source {
            match &source_acc {
                Some(prev) if *prev != list => {
                    return Err(Error::validation(format!(
                        "source {source} lists different accuracies per mode"
                    )))
                }
                _ => source_acc = Some(list.clone()),
            }
        }
        targets.push(TargetAccuracies {
            target: key.0.clone(),
            mode: key.1,
            tacc: list,
        });
    }
    let source_acc =
        source_acc.ok_or_else(|| Error::validation(format!("no rows for source `{source}`")))?;
    let accs = StageAccuracies {
        source,
        source_acc,
        targets,
    };
    accs.validate()?;
    Ok(accs)
}

/// Writes accuracies in the `dataset,mode,stage,acc` schema read by
/// [`parse_accuracies`], source rows first (under every target mode).
pub fn write_accuracies<W: std::io::Write>(accs: &StageAccuracies<f64>, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(COLUMNS)?;
    let mut modes: Vec<Mode> = accs.targets.iter().map(|t| t.mode).collect();
    modes.sort();
    modes.dedup();
    let mut rows: Vec<(&str, Mode, &[f64])> = modes
        .iter()
        .filter(|&&m| {
            !accs
                .targets
                .iter()
                .any(|t| t.target == accs.source && t.mode == m)
        })
        .map(|&m| (accs.source.as_str(), m, accs.source_acc.as_slice()))
        .collect();
    rows.extend(
        accs.targets
            .iter()
            .map(|t| (t.target.as_str(), t.mode, t.tacc.as_slice())),
    );
    for (name, mode, values) in rows {
        for (i, v) in values.iter().enumerate() {
            w.write_record([name, mode.as_str(), &(i + 1).to_string(), &decimal(*v)])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// At most [`MAX_DECIMALS`] places, so the exact parser always accepts it.
fn decimal(v: f64) -> String {
    let s = format!("{v:.MAX_DECIMALS$}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

/// Parses the CSV with exact rational arithmetic and computes every ratio.
pub fn compute_table<R: Read>(input: R, source: Option<&str>) -> Result<TransferabilityReport> {
    let accs: StageAccuracies<Ratio<i128>> = parse_accuracies(input, source)?;
    TransferabilityReport::from_accuracies(&accs)
}

/// Head (and optionally body) retraining budget on the target dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferSettings {
    pub epochs: u64,
    pub lr: f64,
    pub optimizer: Optimizer,
    /// Seed of the fresh classifier head and of the minibatch order.
    pub seed: u64,
}

impl Default for TransferSettings {
    fn default() -> Self {
        Self {
            epochs: 100,
            lr: 0.1,
            optimizer: Optimizer::Sgd { batch_size: 32 },
            seed: 0,
        }
    }
}

/// Result of transferring every stage snapshot of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotTransfer {
    pub accuracies: StageAccuracies<f64>,
    /// Target training data has a single class, so any accuracy is trivial.
    pub single_class_target: bool,
}

/// Target accuracy (percent) of `params` after re-initializing the head and
/// retraining on `target_train`: only the head in fix mode, everything in
/// finetune mode. Evaluated on the clean examples of `target_eval`.
pub fn transfer_accuracy(
    model: &MlpConfig,
    params: &ParamVector,
    target_train: &Ps10Dataset,
    target_eval: &Ps10Dataset,
    mode: Mode,
    settings: &TransferSettings,
) -> Result<f64> {
    if model.input_dim != CHANNELS {
        return Err(Error::validation(format!(
            "model input_dim {} is incompatible with the {CHANNELS}-channel target",
            model.input_dim
        )));
    }
    if params.len() != model.param_count() {
        return Err(Error::validation("snapshot does not match the model"));
    }
    // the body is reused as-is; the head is rebuilt for the target's classes
    let target_model = MlpConfig {
        num_classes: target_train.num_classes(),
        ..model.clone()
    }
    .with_seed(settings.seed ^ 0xA5A5_5A5A);
    let fresh = target_model.init_params()?;
    let body = model.head_range().start;
    let mut start = fresh.clone();
    start.as_mut_slice()[..body].copy_from_slice(&params.as_slice()[..body]);
    let cfg = TrainConfig {
        trainable: match mode {
            Mode::Fix => Trainable::Head,
            Mode::Finetune => Trainable::All,
        },
        ..TrainConfig::new(
            settings.optimizer,
            settings.epochs,
            Schedule::Constant { lr: settings.lr },
        )
        .with_seed(settings.seed)
    };
    let run = train_from(&target_model, start, target_train, &cfg)?;
    let acc = evaluate_subsets(
        &MlpClassifier {
            model: &target_model,
            params: &run.final_params,
        },
        target_eval,
    )?;
    Ok(100.0 * acc.total.unwrap_or(0.0))
}

/// Source accuracy (percent) of `params` on the clean examples of `data`.
pub fn source_accuracy(model: &MlpConfig, params: &ParamVector, data: &Ps10Dataset) -> Result<f64> {
    let acc = evaluate_subsets(&MlpClassifier { model, params }, data)?;
    Ok(100.0 * acc.total.unwrap_or(0.0))
}

/// Transfers each stage snapshot of `run` to the target dataset.
pub fn snapshot_transfer(
    run: &RunResult,
    model: &MlpConfig,
    source_eval: &Ps10Dataset,
    target_train: &Ps10Dataset,
    target_eval: &Ps10Dataset,
    mode: Mode,
    settings: &TransferSettings,
) -> Result<SnapshotTransfer> {
    let params: Vec<&ParamVector> = run.snapshots.iter().map(|s| &s.params).collect();
    stage_transfer(
        &params,
        model,
        source_eval,
        target_train,
        target_eval,
        mode,
        settings,
    )
}

/// [`snapshot_transfer`] over stage parameters in stage order.
pub fn stage_transfer(
    stages: &[&ParamVector],
    model: &MlpConfig,
    source_eval: &Ps10Dataset,
    target_train: &Ps10Dataset,
    target_eval: &Ps10Dataset,
    mode: Mode,
    settings: &TransferSettings,
) -> Result<SnapshotTransfer> {
    if stages.len() < 2 {
        return Err(Error::validation(
            "snapshot transfer needs at least two stage snapshots",
        ));
    }
    let mut source_acc = Vec::with_capacity(stages.len());
    let mut tacc = Vec::with_capacity(stages.len());
    for params in stages {
        source_acc.push(source_accuracy(model, params, source_eval)?);
        tacc.push(transfer_accuracy(
            model,
            params,
            target_train,
            target_eval,
            mode,
            settings,
        )?);
    }
    let mut labels: Vec<usize> = target_train.labels();
    labels.sort_unstable();
    labels.dedup();
    Ok(SnapshotTransfer {
        accuracies: StageAccuracies {
            source: "source".into(),
            source_acc,
            targets: vec![TargetAccuracies {
                target: "target".into(),
                mode,
                tacc,
            }],
        },
        single_class_target: labels.len() < 2,
    })
}
