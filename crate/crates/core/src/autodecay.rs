//! AutoDecay: decay the learning rate when the smoothed training loss has
//! plateaued after a significant drop, terminate when it plateaus without one.
//!
//! Every epoch the controller folds the epoch's mean training loss into an
//! [`EdmaState`], appends the corrected value to a window of the last `W`
//! values, and then:
//!
//! * fewer than `W` values in the current stage, or the window is not stable: `Continue`;
//! * stable and the smoothed loss fell to at most `zeta` times the stage
//!   reference: `Decay` (EDMA, window and reference are reset);
//! * stable without such a drop, or the decayed rate would fall below `min_lr`: `Terminate`.
//!
//! The stage reference is the first corrected value of the stage.

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::edma::EdmaState;
use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AutoDecayConfig<T> {
    /// EDMA decay factor, in (0, 1).
    pub beta: T,
    /// Stability window length `W`, at least 2.
    pub window: usize,
    /// Relative spread tolerance for the stability test.
    pub eta_tol: T,
    /// Drop threshold, in (0, 1).
    pub zeta: T,
    /// Zero-division guard.
    pub eps: T,
    /// Learning rate is divided by this on each decay; > 1.
    pub decay_factor: T,
    pub min_lr: T,
}

impl<T: Real> Default for AutoDecayConfig<T> {
    fn default() -> Self {
        Self {
            beta: T::lit(0.9),
            window: 10,
            eta_tol: T::lit(0.02),
            zeta: T::lit(0.9),
            eps: T::lit(1e-8),
            decay_factor: T::lit(10.0),
            min_lr: T::lit(1e-5),
        }
    }
}

impl<T: Real> AutoDecayConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let zero = T::zero();
        let one = T::one();
        let fail = |what: &str| Err(Error::validation(format!("autodecay config: {what}")));
        if !(self.beta > zero && self.beta < one) {
            return fail("beta must lie in (0, 1)");
        }
        if self.window < 2 {
            return fail("window must be >= 2");
        }
        if !(self.eta_tol > zero) || !self.eta_tol.is_finite() {
            return fail("eta_tol must be positive");
        }
        if !(self.zeta > zero && self.zeta < one) {
            return fail("zeta must lie in (0, 1)");
        }
        if !(self.eps > zero) || !self.eps.is_finite() {
            return fail("eps must be positive");
        }
        if !(self.decay_factor > one) || !self.decay_factor.is_finite() {
            return fail("decay_factor must be > 1");
        }
        if !(self.min_lr > zero) || !self.min_lr.is_finite() {
            return fail("min_lr must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Decision<T> {
    Continue,
    Decay { new_lr: T },
    Terminate,
}

impl<T> Decision<T> {
    pub fn label(&self) -> &'static str {
        match self {
            Decision::Continue => "continue",
            Decision::Decay { .. } => "decay",
            Decision::Terminate => "terminate",
        }
    }
}

impl<T> fmt::Display for Decision<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerState<T> {
    edma: EdmaState<T>,
    window: VecDeque<T>,
    g_ref: Option<T>,
    stage: u32,
    current_lr: T,
    terminated: bool,
}

impl<T: Real> ControllerState<T> {
    pub fn new(cfg: &AutoDecayConfig<T>, initial_lr: T) -> Result<Self> {
        cfg.validate()?;
        if !(initial_lr > T::zero()) || !initial_lr.is_finite() {
            return Err(Error::validation(format!(
                "initial learning rate must be positive, got {initial_lr}"
            )));
        }
        Ok(Self {
            edma: EdmaState::new(cfg.beta)?,
            window: VecDeque::with_capacity(cfg.window),
            g_ref: None,
            stage: 1,
            current_lr: initial_lr,
            terminated: false,
        })
    }

    pub fn edma(&self) -> &EdmaState<T> {
        &self.edma
    }

    /// Corrected values of the current stage, oldest first.
    pub fn window(&self) -> impl ExactSizeIterator<Item = T> + '_ {
        self.window.iter().copied()
    }

    pub fn g_ref(&self) -> Option<T> {
        self.g_ref
    }

    pub fn stage(&self) -> u32 {
        self.stage
    }

    pub fn current_lr(&self) -> T {
        self.current_lr
    }

    pub fn is_terminated(&self) -> bool {
        self.terminated
    }
}

/// Stability test on the last `w` values: `(max - min) / (min + eps) < eta_tol`.
/// Fewer than `w` values is never stable.
pub fn is_stable<T: Real>(window: &[T], w: usize, eta_tol: T, eps: T) -> bool {
    if w == 0 || window.len() < w {
        return false;
    }
    let tail = &window[window.len() - w..];
    let (lo, hi) = tail
        .iter()
        .fold((T::infinity(), T::neg_infinity()), |(lo, hi), &g| {
            (lo.min(g), hi.max(g))
        });
    (hi - lo) / (lo + eps) < eta_tol
}

/// Drop test: `(g_t + eps) / (g_ref + eps) <= zeta`.
pub fn has_significant_drop<T: Real>(g_t: T, g_ref: T, zeta: T, eps: T) -> bool {
    (g_t + eps) / (g_ref + eps) <= zeta
}

/// Everything the controller computed for one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepReport<T> {
    pub raw_loss: T,
    pub g_hat: T,
    pub stable: bool,
    pub drop: bool,
    pub decision: Decision<T>,
    /// Learning rate in effect during the observed epoch.
    pub lr: T,
    /// Stage the observed epoch belonged to.
    pub stage: u32,
}

/// Advances the controller by one epoch.
pub fn observe<T: Real>(
    state: ControllerState<T>,
    cfg: &AutoDecayConfig<T>,
    epoch_loss: T,
) -> Result<(ControllerState<T>, Decision<T>)> {
    let (state, report) = step(state, cfg, epoch_loss)?;
    Ok((state, report.decision))
}

/// [`observe`] that also returns the intermediate quantities for tracing.
pub fn step<T: Real>(
    mut state: ControllerState<T>,
    cfg: &AutoDecayConfig<T>,
    epoch_loss: T,
) -> Result<(ControllerState<T>, StepReport<T>)> {
    if state.terminated {
        return Err(Error::InvalidTransition(
            "controller already terminated".into(),
        ));
    }
    if !epoch_loss.is_finite() {
        return Err(Error::validation(format!(
            "epoch loss must be finite, got {epoch_loss}"
        )));
    }
    let lr = state.current_lr;
    let stage = state.stage;

    state.edma = state.edma.push(epoch_loss)?;
    let g_hat = state.edma.corrected()?;
    if state.window.len() == cfg.window {
        state.window.pop_front();
    }
    state.window.push_back(g_hat);
    let g_ref = *state.g_ref.get_or_insert(g_hat);

    let stable = is_stable(
        state.window.make_contiguous(),
        cfg.window,
        cfg.eta_tol,
        cfg.eps,
    );
    let drop = has_significant_drop(g_hat, g_ref, cfg.zeta, cfg.eps);

    let decision = if !stable {
        Decision::Continue
    } else if drop {
        let new_lr = state.current_lr / cfg.decay_factor;
        if new_lr < cfg.min_lr {
            Decision::Terminate
        } else {
            Decision::Decay { new_lr }
        }
    } else {
        Decision::Terminate
    };

    match decision {
        Decision::Continue => {}
        Decision::Decay { new_lr } => {
            state.edma = state.edma.reset();
            state.window.clear();
            state.g_ref = None;
            state.stage += 1;
            state.current_lr = new_lr;
        }
        Decision::Terminate => state.terminated = true,
    }

    Ok((
        state,
        StepReport {
            raw_loss: epoch_loss,
            g_hat,
            stable,
            drop,
            decision,
            lr,
            stage,
        },
    ))
}

/// Owning convenience wrapper around [`ControllerState`] and its config.
#[derive(Debug, Clone)]
pub struct Controller<T> {
    cfg: AutoDecayConfig<T>,
    state: Option<ControllerState<T>>,
}

impl<T: Real> Controller<T> {
    pub fn new(cfg: AutoDecayConfig<T>, initial_lr: T) -> Result<Self> {
        let state = ControllerState::new(&cfg, initial_lr)?;
        Ok(Self {
            cfg,
            state: Some(state),
        })
    }

    pub fn config(&self) -> &AutoDecayConfig<T> {
        &self.cfg
    }

    pub fn state(&self) -> &ControllerState<T> {
        self.state
            .as_ref()
            .expect("controller state present between steps")
    }

    pub fn current_lr(&self) -> T {
        self.state().current_lr()
    }

    pub fn observe(&mut self, epoch_loss: T) -> Result<StepReport<T>> {
        let state = self
            .state
            .take()
            .expect("controller state present between steps");
        match step(state.clone(), &self.cfg, epoch_loss) {
            Ok((next, report)) => {
                self.state = Some(next);
                Ok(report)
            }
            Err(e) => {
                self.state = Some(state);
                Err(e)
            }
        }
    }
}

/// One row of the controller trace CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub epoch: u64,
    pub raw_loss: f64,
    pub g_hat: f64,
    pub stable: u8,
    pub drop: u8,
    pub decision: String,
    pub lr: f64,
    pub stage: u32,
}

impl TraceRow {
    pub fn from_report<T: Real>(epoch: u64, r: &StepReport<T>) -> Self {
        Self {
            epoch,
            raw_loss: r.raw_loss.to_f64_lossy(),
            g_hat: r.g_hat.to_f64_lossy(),
            stable: r.stable as u8,
            drop: r.drop as u8,
            decision: r.decision.label().to_string(),
            lr: r.lr.to_f64_lossy(),
            stage: r.stage,
        }
    }
}

pub fn write_trace<W: std::io::Write>(rows: &[TraceRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}
