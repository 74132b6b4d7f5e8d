//! Exponential-decay moving average (EDMA) with bias correction.
//!
//! The accumulator follows `f(t) = beta * f(t-1) + (1 - beta) * loss(t)` with
//! `f(0) = 0`, and the corrected estimate is `f(t) / (1 - beta^t)`. Under
//! i.i.d. zero-mean observation noise of variance `sigma2`, the corrected
//! estimate is unbiased and its variance is `variance_factor(beta, t) * sigma2`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// One observed per-epoch training loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossObservation<T> {
    pub value: T,
    pub epoch: u64,
}

impl<T: Real> LossObservation<T> {
    pub fn new(value: T, epoch: u64) -> Self {
        Self { value, epoch }
    }
}

/// Additive observation noise: zero mean, variance `sigma2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel<T> {
    sigma2: T,
}

impl<T: Real> NoiseModel<T> {
    pub fn new(sigma2: T) -> Result<Self> {
        if !(sigma2 >= T::zero()) || !sigma2.is_finite() {
            return Err(Error::validation(format!(
                "noise variance must be finite and >= 0, got {sigma2}"
            )));
        }
        Ok(Self { sigma2 })
    }

    pub fn sigma2(&self) -> T {
        self.sigma2
    }

    pub fn mean(&self) -> T {
        T::zero()
    }

    /// Predicted variance of the corrected estimate after `t` observations.
    pub fn predicted_variance(&self, beta: T, t: u64) -> Result<T> {
        Ok(variance_factor(beta, t)? * self.sigma2)
    }
}

/// Running EDMA state. Value-semantics: `update` returns the successor state.
///
/// Besides the accumulator `f`, the corrected value is carried incrementally as
/// `g(t) = g(t-1) + w(t) * (loss(t) - g(t-1))` with `w(t) = (1-beta)/(1-beta^t)`.
/// This equals `f(t) / (1 - beta^t)` algebraically, and is exact at `t = 1` and on
/// constant streams.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdmaState<T> {
    beta: T,
    t: u64,
    f: T,
    g: T,
}

impl<T: Real> EdmaState<T> {
    /// Fresh state with `t = 0` and an empty accumulator.
    pub fn new(beta: T) -> Result<Self> {
        check_beta(beta)?;
        Ok(Self {
            beta,
            t: 0,
            f: T::zero(),
            g: T::zero(),
        })
    }

    pub fn beta(&self) -> T {
        self.beta
    }

    /// Number of observations folded in since the last reset.
    pub fn t(&self) -> u64 {
        self.t
    }

    /// Uncorrected accumulator.
    pub fn accumulator(&self) -> T {
        self.f
    }

    pub fn update(self, obs: LossObservation<T>) -> Result<Self> {
        self.push(obs.value)
    }

    /// `update` for a bare value.
    pub fn push(self, value: T) -> Result<Self> {
        if !value.is_finite() {
            return Err(Error::validation(format!(
                "loss observation must be finite, got {value}"
            )));
        }
        let t = self.t + 1;
        let one = T::one();
        let w = (one - self.beta) / (one - pow_u64(self.beta, t));
        Ok(Self {
            beta: self.beta,
            t,
            f: self.beta * self.f + (one - self.beta) * value,
            g: self.g + w * (value - self.g),
        })
    }

    /// Bias-corrected estimate `f(t) / (1 - beta^t)`.
    pub fn corrected(&self) -> Result<T> {
        if self.t == 0 {
            return Err(Error::UndefinedState(
                "corrected EDMA value is undefined before the first observation".into(),
            ));
        }
        Ok(self.g)
    }

    /// State after the reset applied on a learning-rate decay.
    pub fn reset(self) -> Self {
        Self {
            beta: self.beta,
            t: 0,
            f: T::zero(),
            g: T::zero(),
        }
    }
}

/// `Var[corrected(t)] / sigma2 = (1-b)/(1+b) * (1+b^t)/(1-b^t)`.
pub fn variance_factor<T: Real>(beta: T, t: u64) -> Result<T> {
    check_beta(beta)?;
    if t == 0 {
        return Err(Error::UndefinedState(
            "variance factor is undefined at t = 0".into(),
        ));
    }
    let one = T::one();
    let bt = pow_u64(beta, t);
    Ok((one - beta) / (one + beta) * (one + bt) / (one - bt))
}

/// Limit of [`variance_factor`] as `t -> inf`.
pub fn asymptotic_variance_factor<T: Real>(beta: T) -> Result<T> {
    check_beta(beta)?;
    Ok((T::one() - beta) / (T::one() + beta))
}

fn check_beta<T: Real>(beta: T) -> Result<()> {
    if beta > T::zero() && beta < T::one() {
        Ok(())
    } else {
        Err(Error::validation(format!(
            "beta must lie in (0, 1), got {beta}"
        )))
    }
}

fn pow_u64<T: Real>(base: T, exp: u64) -> T {
    match i32::try_from(exp) {
        Ok(e) => base.powi(e),
        // beta^t underflows to zero long before t leaves i32 range
        Err(_) => T::zero(),
    }
}

/// One row of the Monte Carlo variance check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceSample {
    pub t: u64,
    pub predicted: f64,
    pub empirical: f64,
}

/// Monte Carlo estimate of `Var[corrected(t)]` for `t = 1..=horizon`.
///
/// Each trial feeds `horizon` observations of pure Gaussian noise with variance
/// `sigma2` through a fresh EDMA state. `predicted` is `variance_factor * sigma2`.
pub fn simulate_variance(
    beta: f64,
    sigma2: f64,
    horizon: u64,
    trials: usize,
    seed: u64,
) -> Result<Vec<VarianceSample>> {
    let noise = NoiseModel::new(sigma2)?;
    check_beta(beta)?;
    if horizon == 0 || trials < 2 {
        return Err(Error::validation(
            "simulation needs horizon >= 1 and at least 2 trials",
        ));
    }
    let normal =
        Normal::new(noise.mean(), sigma2.sqrt()).map_err(|e| Error::validation(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = horizon as usize;
    // Welford accumulators per step
    let mut mean = vec![0.0f64; h];
    let mut m2 = vec![0.0f64; h];
    for trial in 0..trials {
        let mut state = EdmaState::new(beta)?;
        let n = (trial + 1) as f64;
        for step in 0..h {
            state = state.push(normal.sample(&mut rng))?;
            let g = state.corrected()?;
            let delta = g - mean[step];
            mean[step] += delta / n;
            m2[step] += delta * (g - mean[step]);
        }
    }
    (0..h)
        .map(|step| {
            let t = step as u64 + 1;
            Ok(VarianceSample {
                t,
                predicted: noise.predicted_variance(beta, t)?,
                empirical: m2[step] / (trials as f64 - 1.0),
            })
        })
        .collect()
}
