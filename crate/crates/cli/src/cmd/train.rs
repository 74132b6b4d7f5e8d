use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::{Args, ValueEnum};
use lrdecay::ndgrad::MlpConfig;
use lrdecay::ps10::{Ps10Dataset, CHANNELS};
use lrdecay::trainer::{
    train, write_metrics, Optimizer, RunResult, Schedule, Termination, TrainConfig, Trainable,
    HE_UNIFORM_SCALE,
};
use lrdecay::{autodecay, AutoDecayConfig};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::{emit, merge, open, required, write_file, write_json, Manifest};
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleKind {
    Constant,
    Step,
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Gd,
    Sgd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainableKind {
    All,
    Head,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainArgs {
    /// JSON config file (or a previous run's manifest); flags override its values
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// PS10 dataset file written by gen-ps10
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Output directory; one subdirectory per seed when --seeds is used
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Seed for model initialization and minibatch order
    #[arg(long, conflicts_with = "seeds")]
    pub seed: Option<u64>,
    /// Seed sweep, e.g. 0,1,2
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    /// Concurrent runs in a seed sweep
    #[arg(long)]
    #[serde(skip)]
    pub jobs: Option<usize>,
    /// Hidden layer widths, e.g. 64,64
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    /// Weight init bound is init_scale / sqrt(fan_in)
    #[arg(long)]
    pub init_scale: Option<f64>,
    #[arg(long, value_enum)]
    pub optimizer: Option<OptimizerKind>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Epoch budget (auto schedules may stop earlier)
    #[arg(long)]
    pub epochs: Option<u64>,
    #[arg(long, value_enum)]
    pub schedule: Option<ScheduleKind>,
    /// Initial (or constant) learning rate
    #[arg(long)]
    pub lr: Option<f64>,
    /// Step-schedule milestone epochs, e.g. 30,60
    #[arg(long, value_delimiter = ',')]
    pub milestones: Option<Vec<u64>>,
    /// Learning rate is divided by this at each decay
    #[arg(long)]
    pub factor: Option<f64>,
    /// AutoDecay: EDMA decay factor
    #[arg(long)]
    pub beta: Option<f64>,
    /// AutoDecay: stability window length
    #[arg(long)]
    pub window: Option<usize>,
    /// AutoDecay: relative spread tolerance
    #[arg(long)]
    pub eta_tol: Option<f64>,
    /// AutoDecay: drop threshold
    #[arg(long)]
    pub zeta: Option<f64>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub min_lr: Option<f64>,
    #[arg(long, value_enum)]
    pub trainable: Option<TrainableKind>,
    /// Reshuffle minibatches every epoch
    #[arg(long)]
    pub shuffle: Option<bool>,
    /// Test mode: the AutoDecay controller observes this constant loss
    #[arg(long)]
    pub synthetic_loss: Option<f64>,
}

impl TrainArgs {
    pub fn resolve(&self) -> CliResult<Self> {
        let mut r: Self = merge(self, self.config.as_deref())?;
        let auto = AutoDecayConfig::default();
        r.data = Some(required(&r.data, "data")?);
        r.out_dir = Some(required(&r.out_dir, "out-dir")?);
        if r.seeds.is_none() {
            r.seed.get_or_insert(0);
        } else if r.seed.is_some() {
            return Err(CliError::usage("--seed and --seeds are mutually exclusive"));
        }
        r.jobs = self.jobs;
        r.hidden.get_or_insert_with(|| vec![64, 64]);
        r.init_scale.get_or_insert(HE_UNIFORM_SCALE);
        r.optimizer.get_or_insert(OptimizerKind::Sgd);
        r.batch_size.get_or_insert(32);
        r.epochs.get_or_insert(350);
        let schedule = *r.schedule.get_or_insert(ScheduleKind::Step);
        r.lr.get_or_insert(0.5);
        if schedule == ScheduleKind::Step {
            r.milestones.get_or_insert_with(|| vec![200, 300]);
        }
        r.factor.get_or_insert(auto.decay_factor);
        if schedule == ScheduleKind::Auto {
            r.beta.get_or_insert(auto.beta);
            r.window.get_or_insert(auto.window);
            r.eta_tol.get_or_insert(auto.eta_tol);
            r.zeta.get_or_insert(auto.zeta);
            r.eps.get_or_insert(auto.eps);
            r.min_lr.get_or_insert(auto.min_lr);
        }
        r.trainable.get_or_insert(TrainableKind::All);
        r.shuffle.get_or_insert(true);
        Ok(r)
    }

    fn schedule(&self) -> Schedule {
        let lr = self.lr.unwrap_or_default();
        let factor = self.factor.unwrap_or_default();
        match self.schedule.unwrap_or(ScheduleKind::Step) {
            ScheduleKind::Constant => Schedule::Constant { lr },
            ScheduleKind::Step => Schedule::Step {
                lr0: lr,
                milestones: self.milestones.clone().unwrap_or_default(),
                factor,
            },
            ScheduleKind::Auto => {
                let d = AutoDecayConfig::default();
                Schedule::Auto {
                    lr0: lr,
                    config: autodecay::AutoDecayConfig {
                        beta: self.beta.unwrap_or(d.beta),
                        window: self.window.unwrap_or(d.window),
                        eta_tol: self.eta_tol.unwrap_or(d.eta_tol),
                        zeta: self.zeta.unwrap_or(d.zeta),
                        eps: self.eps.unwrap_or(d.eps),
                        decay_factor: factor,
                        min_lr: self.min_lr.unwrap_or(d.min_lr),
                    },
                }
            }
        }
    }

    fn train_config(&self, seed: u64) -> TrainConfig {
        let optimizer = match self.optimizer.unwrap_or(OptimizerKind::Sgd) {
            OptimizerKind::Gd => Optimizer::Gd,
            OptimizerKind::Sgd => Optimizer::Sgd {
                batch_size: self.batch_size.unwrap_or_default(),
            },
        };
        TrainConfig {
            shuffle: self.shuffle.unwrap_or(true),
            trainable: match self.trainable.unwrap_or(TrainableKind::All) {
                TrainableKind::All => Trainable::All,
                TrainableKind::Head => Trainable::Head,
            },
            synthetic_loss: self.synthetic_loss,
            ..TrainConfig::new(optimizer, self.epochs.unwrap_or_default(), self.schedule())
                .with_seed(seed)
        }
    }

    fn model(&self, num_classes: usize, seed: u64) -> MlpConfig {
        MlpConfig::new(
            CHANNELS,
            self.hidden.clone().unwrap_or_default(),
            num_classes,
        )
        .with_seed(seed)
        .with_scale(self.init_scale.unwrap_or(HE_UNIFORM_SCALE))
    }
}

pub fn run(args: &TrainArgs) -> CliResult<()> {
    let r = args.resolve()?;
    let data_path = r.data.clone().expect("resolved");
    let data = Ps10Dataset::read_from(open(&data_path)?)?;
    let out_dir = r.out_dir.clone().expect("resolved");

    let runs: Vec<(u64, PathBuf, TrainArgs)> = match &r.seeds {
        None => vec![(r.seed.unwrap_or_default(), out_dir, r.clone())],
        Some(seeds) => seeds
            .iter()
            .map(|&s| {
                let dir = out_dir.join(format!("seed-{s}"));
                let echo = TrainArgs {
                    seed: Some(s),
                    seeds: None,
                    out_dir: Some(dir.clone()),
                    ..r.clone()
                };
                (s, dir, echo)
            })
            .collect(),
    };
    // fail fast on bad settings before any run starts
    for (seed, _, echo) in &runs {
        echo.train_config(*seed).validate()?;
        echo.model(data.num_classes(), *seed).validate()?;
    }

    let jobs = r.jobs.unwrap_or(1).clamp(1, runs.len());
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<(usize, CliResult<RunResult>)>> = Mutex::new(Vec::new());
    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some((seed, dir, echo)) = runs.get(i) else {
                    break;
                };
                let res = run_one(echo, *seed, &data, &data_path, dir);
                results
                    .lock()
                    .expect("no panics while holding the lock")
                    .push((i, res));
            });
        }
    });
    let mut results = results.into_inner().expect("threads joined");
    results.sort_by_key(|(i, _)| *i);

    let mut diverged = Vec::new();
    for (i, res) in results {
        let (seed, dir, _) = &runs[i];
        let run = res?;
        let last = run.last();
        emit(&format!(
            "seed {seed}: {} after {} epochs, loss {:.6}, total_acc {}, decays at {:?} -> {}\n",
            status(&run.termination),
            run.epochs_run(),
            last.train_loss,
            last.total_acc.map_or("n/a".into(), |a| format!("{a:.4}")),
            run.decay_epochs(),
            dir.display()
        ));
        if let Termination::Diverged { epoch } = run.termination {
            diverged.push(format!("seed {seed} at epoch {epoch}"));
        }
    }
    if diverged.is_empty() {
        Ok(())
    } else {
        Err(CliError::Diverged(diverged.join(", ")))
    }
}

fn status(t: &Termination) -> &'static str {
    match t {
        Termination::EpochLimit => "epoch limit",
        Termination::AutoTerminated => "auto-terminated",
        Termination::Diverged { .. } => "diverged",
    }
}

fn run_one(
    echo: &TrainArgs,
    seed: u64,
    data: &Ps10Dataset,
    data_path: &Path,
    dir: &Path,
) -> CliResult<RunResult> {
    let model = echo.model(data.num_classes(), seed);
    let cfg = echo.train_config(seed);
    let run = train(&model, data, &cfg)?;

    let mut manifest = Manifest::new(echo, Some(seed))?;
    manifest.hash_as("data", data_path)?;

    let mut csv = Vec::new();
    write_metrics(&run.records, &mut csv)?;
    let metrics = dir.join("metrics.csv");
    write_file(&metrics, &csv)?;
    manifest.hash_as("metrics.csv", &metrics)?;

    if !run.trace.is_empty() {
        let mut buf = Vec::new();
        autodecay::write_trace(&run.trace, &mut buf)?;
        let trace = dir.join("trace.csv");
        write_file(&trace, &buf)?;
        manifest.hash_as("trace.csv", &trace)?;
    }

    let model_path = dir.join("model.json");
    write_json(&model_path, &model)?;
    manifest.hash_as("model.json", &model_path)?;

    let mut snapshots = Vec::new();
    for snap in &run.snapshots {
        let name = format!("snapshots/stage-{}.params", snap.stage);
        let mut buf = Vec::new();
        snap.params.write_to(&mut buf)?;
        let path = dir.join(&name);
        write_file(&path, &buf)?;
        manifest.hash_as(name.clone(), &path)?;
        snapshots.push(json!({"stage": snap.stage, "epoch": snap.epoch, "file": name}));
    }
    let mut buf = Vec::new();
    run.final_params.write_to(&mut buf)?;
    let final_path = dir.join("final.params");
    write_file(&final_path, &buf)?;
    manifest.hash_as("final.params", &final_path)?;

    manifest.outcome = Some(json!({
        "termination": run.termination,
        "epochs_run": run.epochs_run(),
        "decay_epochs": run.decay_epochs(),
        "snapshots": snapshots,
        "final": run.last(),
    }));
    manifest.write(&dir.join("manifest.json"))?;
    Ok(run)
}
