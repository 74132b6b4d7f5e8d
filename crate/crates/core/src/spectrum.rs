//! Top eigenvalues of a symmetric operator and gradient descent on quadratics.
//!
//! Along an eigendirection with eigenvalue `lambda > 0`, one GD step with rate
//! `lr` multiplies the coordinate by `1 - lr * lambda`, so the coordinate
//! contracts iff `0 < lr < 2 / lambda`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operator::LinearOperator;
use crate::scalar::{dot, norm, Real};

/// One eigenpair estimate from [`top_k_eigs`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EigenPair<T> {
    pub value: T,
    #[serde(skip)]
    pub vector: Vec<T>,
    /// `||H v - value v||` for the unit vector `v`.
    pub residual: T,
    pub iterations: usize,
    pub converged: bool,
    /// Rayleigh quotient after each iteration.
    #[serde(skip)]
    pub history: Vec<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumReport<T> {
    /// Sorted by decreasing magnitude.
    pub pairs: Vec<EigenPair<T>>,
}

impl<T: Real> SpectrumReport<T> {
    pub fn eigenvalues(&self) -> Vec<T> {
        self.pairs.iter().map(|p| p.value).collect()
    }

    pub fn residuals(&self) -> Vec<T> {
        self.pairs.iter().map(|p| p.residual).collect()
    }

    /// `(0, 2/lambda)` per eigenvalue; `None` where `lambda <= 0`.
    pub fn intervals(&self) -> Vec<Option<(T, T)>> {
        self.pairs
            .iter()
            .map(|p| convergence_interval(p.value))
            .collect()
    }

    pub fn iterations_used(&self) -> usize {
        self.pairs.iter().map(|p| p.iterations).sum()
    }

    pub fn all_converged(&self) -> bool {
        self.pairs.iter().all(|p| p.converged)
    }
}

/// Open interval of learning rates for which the direction contracts.
pub fn convergence_interval<T: Real>(lambda: T) -> Option<(T, T)> {
    (lambda > T::zero()).then(|| (T::zero(), T::lit(2.0) / lambda))
}

/// Power iteration with Gram-Schmidt deflation.
///
/// Each eigenvector is found by iterating the operator on a random start vector
/// kept orthogonal to all previously found vectors. A pair counts as converged
/// once `||H v - lambda v|| <= tol * |lambda|`; pairs that hit `max_iters` without
/// meeting that bound are returned with `converged = false`.
pub fn top_k_eigs<T: Real, O: LinearOperator<T> + ?Sized>(
    op: &O,
    k: usize,
    max_iters: usize,
    tol: T,
    seed: u64,
) -> Result<SpectrumReport<T>> {
    let n = op.dim();
    if k == 0 || k > n {
        return Err(Error::validation(format!(
            "k must lie in [1, {n}], got {k}"
        )));
    }
    if !(tol > T::zero()) || !tol.is_finite() {
        return Err(Error::validation("tol must be positive"));
    }
    if max_iters == 0 {
        return Err(Error::validation("max_iters must be >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs: Vec<EigenPair<T>> = Vec::with_capacity(k);
    let polish = tol * T::lit(1e-2);

    for _ in 0..k {
        let mut v: Vec<T> = (0..n)
            .map(|_| T::lit(rng.random_range(-1.0..1.0)))
            .collect();
        deflate(&mut v, &pairs);
        if !normalize(&mut v) {
            return Err(Error::validation(
                "random start vector vanished after deflation",
            ));
        }
        let mut history = Vec::new();
        let mut value = T::zero();
        let mut residual = T::infinity();
        let mut converged = false;
        let mut iterations = 0;
        let mut previous = T::infinity();
        while iterations < max_iters {
            iterations += 1;
            let hv = op.apply(&v)?;
            value = dot(&v, &hv);
            history.push(value);
            residual = hv
                .iter()
                .zip(&v)
                .map(|(&a, &b)| (a - value * b) * (a - value * b))
                .fold(T::zero(), |acc, x| acc + x)
                .sqrt();
            let met = residual <= tol * value.abs();
            // Polish past `tol` so later pairs are not limited by the deflation error
            // of this one; stop once the residual stops shrinking.
            if met && (residual <= polish * value.abs() || residual >= previous) {
                converged = true;
                break;
            }
            converged = met;
            previous = residual;
            let mut next = hv;
            deflate(&mut next, &pairs);
            if !normalize(&mut next) {
                // v lies in the null space of the deflated operator
                value = T::zero();
                converged = residual == T::zero();
                break;
            }
            v = next;
        }
        pairs.push(EigenPair {
            value,
            vector: v,
            residual,
            iterations,
            converged,
            history,
        });
    }
    pairs.sort_by(|a, b| {
        b.value
            .abs()
            .partial_cmp(&a.value.abs())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    Ok(SpectrumReport { pairs })
}

/// Two passes of classical Gram-Schmidt against the found vectors.
fn deflate<T: Real>(v: &mut [T], found: &[EigenPair<T>]) {
    for _ in 0..2 {
        for p in found {
            let c = dot(v, &p.vector);
            for (x, &q) in v.iter_mut().zip(&p.vector) {
                *x = *x - c * q;
            }
        }
    }
}

fn normalize<T: Real>(v: &mut [T]) -> bool {
    let nv = norm(v);
    if !(nv > T::zero()) || !nv.is_finite() {
        return false;
    }
    for x in v.iter_mut() {
        *x = *x / nv;
    }
    true
}

/// A quadratic loss in its eigenbasis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticSpec<T> {
    pub eigenvalues: Vec<T>,
    /// Initial coordinate along each eigendirection.
    pub init: Vec<T>,
}

impl<T: Real> QuadraticSpec<T> {
    pub fn new(eigenvalues: Vec<T>, init: Vec<T>) -> Result<Self> {
        if eigenvalues.len() != init.len() {
            return Err(Error::dimension(format!(
                "{} eigenvalues but {} initial coefficients",
                eigenvalues.len(),
                init.len()
            )));
        }
        if let Some(bad) = eigenvalues
            .iter()
            .find(|&&l| !(l > T::zero()) || !l.is_finite())
        {
            return Err(Error::validation(format!(
                "eigenvalue {bad} must be positive"
            )));
        }
        Ok(Self { eigenvalues, init })
    }

    /// Unit initial coefficient along every direction.
    pub fn unit(eigenvalues: Vec<T>) -> Result<Self> {
        let init = vec![T::one(); eigenvalues.len()];
        Self::new(eigenvalues, init)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    MonotoneConverge,
    OscillatingConverge,
    Neutral,
    Diverge,
}

impl Regime {
    pub fn classify<T: Real>(factor: T) -> Self {
        let a = factor.abs();
        if a < T::one() {
            if factor < T::zero() {
                Regime::OscillatingConverge
            } else {
                Regime::MonotoneConverge
            }
        } else if a == T::one() {
            Regime::Neutral
        } else {
            Regime::Diverge
        }
    }

    pub fn converges(self) -> bool {
        matches!(self, Regime::MonotoneConverge | Regime::OscillatingConverge)
    }
}

/// Behavior of the whole landscape under one learning rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Overall {
    /// Every direction contracts.
    Converge,
    /// Some directions contract and some do not: the iterate leaves the basin.
    Mixed,
    /// No direction contracts.
    Diverge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionTrajectory<T> {
    pub lambda: T,
    pub factor: T,
    pub regime: Regime,
    /// Coordinate after `0..=steps` updates.
    pub coefficients: Vec<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryReport<T> {
    pub lr: T,
    pub steps: usize,
    pub directions: Vec<DirectionTrajectory<T>>,
}

impl<T: Real> TrajectoryReport<T> {
    pub fn overall(&self) -> Overall {
        let converging = self
            .directions
            .iter()
            .filter(|d| d.regime.converges())
            .count();
        if converging == self.directions.len() {
            Overall::Converge
        } else if converging == 0 {
            Overall::Diverge
        } else {
            Overall::Mixed
        }
    }
}

/// Closed-form GD trajectory: coordinate `i` after `k` steps is `init_i * (1 - lr * lambda_i)^k`.
pub fn simulate_quadratic_gd<T: Real>(
    spec: &QuadraticSpec<T>,
    lr: T,
    steps: usize,
) -> Result<TrajectoryReport<T>> {
    if !(lr > T::zero()) || !lr.is_finite() {
        return Err(Error::validation("learning rate must be positive"));
    }
    if steps == 0 {
        return Err(Error::validation("steps must be >= 1"));
    }
    let exp_limit = i32::try_from(steps).map_err(|_| Error::validation("too many steps"))?;
    let directions = spec
        .eigenvalues
        .iter()
        .zip(&spec.init)
        .map(|(&lambda, &init)| {
            let factor = T::one() - lr * lambda;
            DirectionTrajectory {
                lambda,
                factor,
                regime: Regime::classify(factor),
                coefficients: (0..=exp_limit).map(|k| init * factor.powi(k)).collect(),
            }
        })
        .collect();
    Ok(TrajectoryReport {
        lr,
        steps,
        directions,
    })
}
