//! Full-batch and minibatch training of the MLP on PS10 under constant, step
//! and AutoDecay learning-rate schedules, with per-subset accuracy tracking.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodecay::{AutoDecayConfig, Controller, Decision, TraceRow};
use crate::error::{Error, Result};
use crate::ndgrad::{loss, loss_and_grad, predict, MlpConfig, ParamVector, Tensor};
use crate::ps10::{Example, Ps10Dataset, Subset, CHANNELS};

/// Loss above which a run is declared divergent.
pub const DIVERGENCE_LOSS: f64 = 1e6;

/// He-uniform initialization scale for ReLU layers: weights in
/// `(-sqrt(6 / fan_in), sqrt(6 / fan_in))`.
pub const HE_UNIFORM_SCALE: f64 = 2.449_489_742_783_178;

/// The standard PS10 classifier: two hidden ReLU layers of width 64 with
/// He-uniform initialization.
pub fn default_model(num_classes: usize, seed: u64) -> MlpConfig {
    MlpConfig::new(CHANNELS, vec![64, 64], num_classes)
        .with_seed(seed)
        .with_scale(HE_UNIFORM_SCALE)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Schedule {
    Constant {
        lr: f64,
    },
    /// `lr0 / factor^k` where `k` is the number of milestones `<= epoch`.
    Step {
        lr0: f64,
        milestones: Vec<u64>,
        factor: f64,
    },
    Auto {
        lr0: f64,
        config: AutoDecayConfig<f64>,
    },
}

impl Schedule {
    pub fn validate(&self) -> Result<()> {
        let positive = |x: f64, what: &str| {
            if x > 0.0 && x.is_finite() {
                Ok(())
            } else {
                Err(Error::validation(format!(
                    "{what} must be positive, got {x}"
                )))
            }
        };
        match self {
            Schedule::Constant { lr } => positive(*lr, "learning rate"),
            Schedule::Step {
                lr0,
                milestones,
                factor,
            } => {
                positive(*lr0, "initial learning rate")?;
                positive(*factor, "decay factor")?;
                if milestones.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(Error::validation("milestones must be strictly increasing"));
                }
                Ok(())
            }
            Schedule::Auto { lr0, config } => {
                positive(*lr0, "initial learning rate")?;
                config.validate()
            }
        }
    }

    pub fn initial_lr(&self) -> f64 {
        match self {
            Schedule::Constant { lr } => *lr,
            Schedule::Step { lr0, .. } | Schedule::Auto { lr0, .. } => *lr0,
        }
    }

    /// Learning rate used during `epoch`; a step decay takes effect at the
    /// milestone epoch itself. Auto schedules are event-driven and have no
    /// closed form.
    pub fn lr_at(&self, epoch: u64) -> Result<f64> {
        match self {
            Schedule::Constant { lr } => Ok(*lr),
            Schedule::Step {
                lr0,
                milestones,
                factor,
            } => {
                let k = milestones.iter().take_while(|&&m| m <= epoch).count();
                Ok(lr0 / factor.powi(k as i32))
            }
            Schedule::Auto { .. } => Err(Error::Unsupported(
                "auto schedules have no static learning rate".into(),
            )),
        }
    }

    /// Stage (1-based) of `epoch` for static schedules.
    pub fn stage_at(&self, epoch: u64) -> Result<u32> {
        match self {
            Schedule::Constant { .. } => Ok(1),
            Schedule::Step { milestones, .. } => {
                Ok(1 + milestones.iter().take_while(|&&m| m <= epoch).count() as u32)
            }
            Schedule::Auto { .. } => Err(Error::Unsupported(
                "auto schedules have no static stage".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Optimizer {
    /// One step on the whole dataset per epoch.
    Gd,
    Sgd {
        batch_size: usize,
    },
}

/// Which parameters receive updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trainable {
    #[default]
    All,
    /// Only the final linear layer.
    Head,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub optimizer: Optimizer,
    /// Epoch budget; auto schedules may stop earlier.
    pub epochs: u64,
    pub schedule: Schedule,
    pub seed: u64,
    pub shuffle: bool,
    #[serde(default)]
    pub trainable: Trainable,
    /// Test hook: the AutoDecay controller observes this constant instead of
    /// the epoch's mean minibatch loss.
    #[serde(default)]
    pub synthetic_loss: Option<f64>,
}

impl TrainConfig {
    pub fn new(optimizer: Optimizer, epochs: u64, schedule: Schedule) -> Self {
        Self {
            optimizer,
            epochs,
            schedule,
            seed: 0,
            shuffle: true,
            trainable: Trainable::All,
            synthetic_loss: None,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if let Optimizer::Sgd { batch_size: 0 } = self.optimizer {
            return Err(Error::validation("batch_size must be >= 1"));
        }
        if let Some(l) = self.synthetic_loss {
            if !l.is_finite() {
                return Err(Error::validation("synthetic loss must be finite"));
            }
        }
        self.schedule.validate()
    }
}

/// Accuracies over each subset; `None` when the subset is empty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubsetAccuracy {
    /// Over all non-noise examples.
    pub total: Option<f64>,
    pub simple: Option<f64>,
    pub complex: Option<f64>,
    /// Fraction of noise examples predicted as their corrupted label.
    pub noise_fit: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub epoch: u64,
    pub lr: f64,
    pub train_loss: f64,
    pub total_acc: Option<f64>,
    pub simple_acc: Option<f64>,
    pub complex_acc: Option<f64>,
    pub noise_fit_acc: Option<f64>,
    pub stage: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub stage: u32,
    /// Last epoch trained in this stage.
    pub epoch: u64,
    pub params: ParamVector,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Termination {
    EpochLimit,
    AutoTerminated,
    Diverged { epoch: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    /// Entry 0 is the evaluation before any training.
    pub records: Vec<MetricsRecord>,
    pub snapshots: Vec<Snapshot>,
    pub termination: Termination,
    /// Controller trace; empty for static schedules.
    pub trace: Vec<TraceRow>,
    pub final_params: ParamVector,
}

impl RunResult {
    pub fn last(&self) -> &MetricsRecord {
        self.records.last().expect("at least the initial record")
    }

    /// Number of training epochs run.
    pub fn epochs_run(&self) -> u64 {
        self.last().epoch
    }

    /// Epochs at which the learning rate changed (first epoch of each new stage).
    pub fn decay_epochs(&self) -> Vec<u64> {
        self.records
            .windows(2)
            .filter(|w| w[1].stage > w[0].stage)
            .map(|w| w[1].epoch)
            .collect()
    }
}

/// Anything that labels PS10 examples.
pub trait Classifier {
    fn predict(&self, data: &Ps10Dataset) -> Result<Vec<usize>>;
}

impl<F: Fn(&Example) -> usize> Classifier for F {
    fn predict(&self, data: &Ps10Dataset) -> Result<Vec<usize>> {
        Ok(data.examples.iter().map(self).collect())
    }
}

pub struct MlpClassifier<'a> {
    pub model: &'a MlpConfig,
    pub params: &'a ParamVector,
}

impl Classifier for MlpClassifier<'_> {
    fn predict(&self, data: &Ps10Dataset) -> Result<Vec<usize>> {
        predict(self.model, self.params, &data.features())
    }
}

pub fn evaluate_subsets(clf: &impl Classifier, data: &Ps10Dataset) -> Result<SubsetAccuracy> {
    let preds = clf.predict(data)?;
    Ok(accuracy_from_predictions(&preds, data))
}

fn accuracy_from_predictions(preds: &[usize], data: &Ps10Dataset) -> SubsetAccuracy {
    // hits, count for simple / complex / noise
    let mut tally = [(0usize, 0usize); 3];
    for (p, e) in preds.iter().zip(&data.examples) {
        let slot = match e.subset {
            Subset::SimpleOnly => 0,
            Subset::ComplexOnly => 1,
            Subset::Noise => 2,
        };
        tally[slot].1 += 1;
        tally[slot].0 += usize::from(*p == e.label);
    }
    let frac = |(h, n): (usize, usize)| (n > 0).then(|| h as f64 / n as f64);
    SubsetAccuracy {
        total: frac((tally[0].0 + tally[1].0, tally[0].1 + tally[1].1)),
        simple: frac(tally[0]),
        complex: frac(tally[1]),
        noise_fit: frac(tally[2]),
    }
}

fn check_model(model: &MlpConfig, data: &Ps10Dataset) -> Result<()> {
    model.validate()?;
    if data.is_empty() {
        return Err(Error::validation("training set is empty"));
    }
    if model.input_dim != CHANNELS {
        return Err(Error::dimension(format!(
            "model input_dim {} does not match the {CHANNELS} PS10 channels",
            model.input_dim
        )));
    }
    if model.num_classes != data.num_classes() {
        return Err(Error::dimension(format!(
            "model has {} classes, dataset has {}",
            model.num_classes,
            data.num_classes()
        )));
    }
    Ok(())
}

/// Trains from the model's own initialization.
pub fn train(model: &MlpConfig, data: &Ps10Dataset, cfg: &TrainConfig) -> Result<RunResult> {
    let init = model.init_params()?;
    train_from(model, init, data, cfg)
}

/// Trains starting from `params`.
pub fn train_from(
    model: &MlpConfig,
    mut params: ParamVector,
    data: &Ps10Dataset,
    cfg: &TrainConfig,
) -> Result<RunResult> {
    check_model(model, data)?;
    cfg.validate()?;
    if params.len() != model.param_count() {
        return Err(Error::dimension(format!(
            "parameter vector has {} entries, model needs {}",
            params.len(),
            model.param_count()
        )));
    }
    let x = data.features();
    let y = data.labels();
    let n = y.len();
    let head = model.head_range();

    let mut controller = match &cfg.schedule {
        Schedule::Auto { lr0, config } => Some(Controller::new(*config, *lr0)?),
        _ => None,
    };
    let lr_for = |epoch: u64, c: &Option<Controller<f64>>| -> Result<(f64, u32)> {
        match c {
            Some(c) => Ok((c.current_lr(), c.state().stage())),
            None => Ok((cfg.schedule.lr_at(epoch)?, cfg.schedule.stage_at(epoch)?)),
        }
    };

    let evaluate = |params: &ParamVector| -> (f64, SubsetAccuracy) {
        // non-finite logits surface as an error from the forward pass
        match (loss(model, params, &x, &y), predict(model, params, &x)) {
            (Ok(l), Ok(p)) => (l, accuracy_from_predictions(&p, data)),
            _ => (f64::INFINITY, accuracy_from_predictions(&[], data)),
        }
    };
    let record = |epoch, lr, stage, (l, acc): (f64, SubsetAccuracy)| MetricsRecord {
        epoch,
        lr,
        train_loss: l,
        total_acc: acc.total,
        simple_acc: acc.simple,
        complex_acc: acc.complex,
        noise_fit_acc: acc.noise_fit,
        stage,
    };

    let (lr0, stage0) = lr_for(0, &controller)?;
    let mut records = vec![record(0, lr0, stage0, evaluate(&params))];
    let mut snapshots = Vec::new();
    let mut trace = Vec::new();
    let mut termination = Termination::EpochLimit;
    let mut order: Vec<usize> = (0..n).collect();

    for epoch in 1..=cfg.epochs {
        let (lr, stage) = lr_for(epoch, &controller)?;
        let batch = match cfg.optimizer {
            Optimizer::Gd => n,
            Optimizer::Sgd { batch_size } => batch_size.min(n),
        };
        if cfg.shuffle && batch < n {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(epoch);
            order.shuffle(&mut rng);
        }
        let mut loss_sum = 0.0;
        for chunk in order.chunks(batch) {
            let (batch_loss, mut grad) = if chunk.len() == n {
                loss_and_grad(model, &params, &x, &y)?
            } else {
                let rows: Vec<&[f64]> = chunk.iter().map(|&i| x.row(i)).collect();
                let by: Vec<usize> = chunk.iter().map(|&i| y[i]).collect();
                loss_and_grad(model, &params, &Tensor::from_rows(&rows)?, &by)?
            };
            if cfg.trainable == Trainable::Head {
                let g = grad.as_mut_slice();
                g[..head.start].fill(0.0);
                g[head.end..].fill(0.0);
            }
            loss_sum += batch_loss * chunk.len() as f64;
            params.axpy(-lr, &grad);
            if !params.is_finite() {
                break;
            }
        }

        let eval = evaluate(&params);
        let train_loss = eval.0;
        records.push(record(epoch, lr, stage, eval));
        let epoch_loss = loss_sum / n as f64;
        if !params.is_finite()
            || !train_loss.is_finite()
            || train_loss > DIVERGENCE_LOSS
            || !epoch_loss.is_finite()
        {
            termination = Termination::Diverged { epoch };
            break;
        }

        match controller.as_mut() {
            Some(c) => {
                let observed = cfg.synthetic_loss.unwrap_or(epoch_loss);
                let report = c.observe(observed)?;
                trace.push(TraceRow::from_report(epoch, &report));
                match report.decision {
                    Decision::Continue => {}
                    Decision::Decay { .. } => snapshots.push(Snapshot {
                        stage,
                        epoch,
                        params: params.clone(),
                    }),
                    Decision::Terminate => {
                        termination = Termination::AutoTerminated;
                        break;
                    }
                }
            }
            None => {
                if epoch < cfg.epochs && cfg.schedule.stage_at(epoch + 1)? > stage {
                    snapshots.push(Snapshot {
                        stage,
                        epoch,
                        params: params.clone(),
                    });
                }
            }
        }
    }

    let last = records.last().expect("initial record");
    if params.is_finite() && snapshots.last().is_none_or(|s| s.epoch != last.epoch) {
        snapshots.push(Snapshot {
            stage: last.stage,
            epoch: last.epoch,
            params: params.clone(),
        });
    }
    Ok(RunResult {
        records,
        snapshots,
        termination,
        trace,
        final_params: params,
    })
}

/// Writes records as CSV with the columns of [`MetricsRecord`]; absent
/// accuracies are empty cells.
pub fn write_metrics<W: std::io::Write>(records: &[MetricsRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
