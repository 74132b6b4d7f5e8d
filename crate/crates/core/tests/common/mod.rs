//! Independent oracles shared by the integration and acceptance suites.
//! Nothing here calls into the code paths it is used to check.
#![allow(dead_code)]

use lrdecay::ndgrad::{loss, loss_and_grad, MlpConfig, ParamVector, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `|a - b| / max(|a|, |b|, floor)`; the floor keeps near-zero components from
/// turning finite-difference round-off into huge relative errors.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

pub fn vec_rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt();
    let scale = a
        .iter()
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt()
        .max(b.iter().map(|x| x * x).sum::<f64>().sqrt());
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

/// Central finite differences of the loss, one coordinate at a time.
pub fn fd_gradient(
    cfg: &MlpConfig,
    params: &ParamVector,
    x: &Tensor,
    y: &[usize],
    h: f64,
) -> Vec<f64> {
    (0..params.len())
        .map(|i| {
            let mut plus = params.clone();
            plus.as_mut_slice()[i] += h;
            let mut minus = params.clone();
            minus.as_mut_slice()[i] -= h;
            (loss(cfg, &plus, x, y).unwrap() - loss(cfg, &minus, x, y).unwrap()) / (2.0 * h)
        })
        .collect()
}

/// `(grad(p + h v) - grad(p - h v)) / 2h`.
pub fn fd_hvp(
    cfg: &MlpConfig,
    params: &ParamVector,
    x: &Tensor,
    y: &[usize],
    v: &[f64],
    h: f64,
) -> Vec<f64> {
    let shifted = |s: f64| {
        let mut p = params.clone();
        for (pi, vi) in p.as_mut_slice().iter_mut().zip(v) {
            *pi += s * h * vi;
        }
        loss_and_grad(cfg, &p, x, y).unwrap().1.into_vec()
    };
    let (gp, gm) = (shifted(1.0), shifted(-1.0));
    gp.iter()
        .zip(&gm)
        .map(|(a, b)| (a - b) / (2.0 * h))
        .collect()
}

pub struct Instance {
    pub cfg: MlpConfig,
    pub params: ParamVector,
    pub x: Tensor,
    pub y: Vec<usize>,
}

/// Small random MLP, parameters and batch.
pub fn random_instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let input = rng.random_range(2..=5);
    let depth = rng.random_range(1..=2);
    let hidden: Vec<usize> = (0..depth).map(|_| rng.random_range(3..=7)).collect();
    let classes = rng.random_range(2..=4);
    let batch = rng.random_range(2..=6);
    let cfg = MlpConfig::new(input, hidden, classes)
        .with_seed(seed)
        .with_scale(1.5);
    let mut params = cfg.init_params().unwrap();
    for p in params.as_mut_slice() {
        *p += rng.random_range(-0.2..0.2);
    }
    let rows: Vec<Vec<f64>> = (0..batch)
        .map(|_| (0..input).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let y = (0..batch).map(|_| rng.random_range(0..classes)).collect();
    Instance {
        cfg,
        params,
        x: Tensor::from_rows(&rows).unwrap(),
        y,
    }
}

pub fn random_vector(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Explicit weighted average `(1-b)/(1-b^t) * sum_i b^i l(t-i)`.
pub fn explicit_edma(beta: f64, stream: &[f64]) -> f64 {
    let t = stream.len();
    let weighted: f64 = (0..t)
        .map(|i| beta.powi(i as i32) * stream[t - 1 - i])
        .sum();
    (1.0 - beta) / (1.0 - beta.powi(t as i32)) * weighted
}

/// Cyclic Jacobi eigenvalue sweep for a dense symmetric matrix (row-major).
/// Returns eigenvalues sorted by decreasing magnitude.
pub fn jacobi_eigenvalues(n: usize, mut a: Vec<f64>) -> Vec<f64> {
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i * n + j].powi(2))
            .sum();
        if off < 1e-22 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..n).map(|i| a[i * n + i]).collect();
    eig.sort_by(|x, y| y.abs().partial_cmp(&x.abs()).unwrap());
    eig
}

/// Random symmetric matrix with entries uniform in (-1, 1).
pub fn random_symmetric(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let v = rng.random_range(-1.0..1.0);
            a[i * n + j] = v;
            a[j * n + i] = v;
        }
    }
    a
}

/// Straight-line reimplementation of the plateau controller: recomputes the
/// smoothed loss from the whole stage history each epoch. Returns one
/// `(decision, lr_during_epoch, stage)` per observed epoch, stopping after
/// `terminate`.
#[allow(clippy::too_many_arguments)]
pub fn naive_controller(
    stream: &[f64],
    lr0: f64,
    beta: f64,
    w: usize,
    eta_tol: f64,
    zeta: f64,
    eps: f64,
    factor: f64,
    min_lr: f64,
) -> Vec<(&'static str, f64, u32)> {
    let mut out = Vec::new();
    let (mut lr, mut stage) = (lr0, 1u32);
    let mut history: Vec<f64> = Vec::new();
    let mut smoothed: Vec<f64> = Vec::new();
    for &loss in stream {
        history.push(loss);
        let g = explicit_edma(beta, &history);
        smoothed.push(g);
        let stable = smoothed.len() >= w && {
            let tail = &smoothed[smoothed.len() - w..];
            let lo = tail.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = tail.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            (hi - lo) / (lo + eps) < eta_tol
        };
        let dropped = (g + eps) / (smoothed[0] + eps) <= zeta;
        let decision = match (stable, dropped) {
            (false, _) => "continue",
            (true, true) if lr / factor >= min_lr => "decay",
            (true, _) => "terminate",
        };
        out.push((decision, lr, stage));
        match decision {
            "decay" => {
                lr /= factor;
                stage += 1;
                history.clear();
                smoothed.clear();
            }
            "terminate" => break,
            _ => {}
        }
    }
    out
}
