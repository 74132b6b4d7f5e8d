use std::io::{Read, Write};
use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dual::AdScalar;
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub num_classes: usize,
    #[serde(default)]
    pub activation: Activation,
    pub init_seed: u64,
    pub init_scale: f64,
}

impl MlpConfig {
    pub fn new(input_dim: usize, hidden_dims: Vec<usize>, num_classes: usize) -> Self {
        Self {
            input_dim,
            hidden_dims,
            num_classes,
            activation: Activation::Relu,
            init_seed: 0,
            init_scale: 1.0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.init_seed = seed;
        self
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.init_scale = scale;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::validation("num_classes must be >= 2"));
        }
        if self.input_dim == 0 || self.hidden_dims.contains(&0) {
            return Err(Error::validation("all layer widths must be >= 1"));
        }
        if !(self.init_scale > 0.0) || !self.init_scale.is_finite() {
            return Err(Error::validation("init_scale must be positive"));
        }
        Ok(())
    }

    /// Layer widths from input to logits.
    pub fn widths(&self) -> Vec<usize> {
        let mut w = Vec::with_capacity(self.hidden_dims.len() + 2);
        w.push(self.input_dim);
        w.extend_from_slice(&self.hidden_dims);
        w.push(self.num_classes);
        w
    }

    pub fn num_layers(&self) -> usize {
        self.hidden_dims.len() + 1
    }

    pub fn param_count(&self) -> usize {
        self.widths().windows(2).map(|p| p[1] * (p[0] + 1)).sum()
    }

    /// Index ranges of `(weights, bias)` of layer `l` inside the flat vector.
    pub fn layer_ranges(&self, l: usize) -> (Range<usize>, Range<usize>) {
        let widths = self.widths();
        let offset: usize = widths[..l + 1].windows(2).map(|p| p[1] * (p[0] + 1)).sum();
        let (fan_in, fan_out) = (widths[l], widths[l + 1]);
        let w_end = offset + fan_in * fan_out;
        (offset..w_end, w_end..w_end + fan_out)
    }

    /// Parameters of the final (classifier) layer.
    pub fn head_range(&self) -> Range<usize> {
        let (w, b) = self.layer_ranges(self.num_layers() - 1);
        w.start..b.end
    }

    /// Weights uniform in `(-s, s)` with `s = init_scale / sqrt(fan_in)`, biases zero.
    pub fn init_params(&self) -> Result<ParamVector> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.init_seed);
        let mut data = Vec::with_capacity(self.param_count());
        for pair in self.widths().windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let s = self.init_scale / (fan_in as f64).sqrt();
            data.extend((0..fan_in * fan_out).map(|_| rng.random_range(-s..s)));
            data.extend(std::iter::repeat_n(0.0, fan_out));
        }
        Ok(ParamVector(data))
    }
}

/// All model parameters as one flat vector.
///
/// Layout: for each layer from input to output, the weight matrix in
/// row-major `[fan_out][fan_in]` order followed by the `fan_out` biases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamVector(pub Vec<f64>);

const PARAM_MAGIC: &[u8; 4] = b"PVEC";
const PARAM_VERSION: u32 = 1;

impl ParamVector {
    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &ParamVector) {
        for (p, g) in self.0.iter_mut().zip(&other.0) {
            *p += alpha * g;
        }
    }

    /// Splits into per-layer `(weights, bias)` tensors.
    pub fn unflatten(&self, cfg: &MlpConfig) -> Result<Vec<(Tensor, Vec<f64>)>> {
        check_len(cfg, self.len())?;
        let widths = cfg.widths();
        (0..cfg.num_layers())
            .map(|l| {
                let (w, b) = cfg.layer_ranges(l);
                Ok((
                    Tensor::new(vec![widths[l + 1], widths[l]], self.0[w].to_vec())?,
                    self.0[b].to_vec(),
                ))
            })
            .collect()
    }

    /// Inverse of [`unflatten`](Self::unflatten).
    pub fn flatten(layers: &[(Tensor, Vec<f64>)]) -> Self {
        let mut data = Vec::new();
        for (w, b) in layers {
            data.extend_from_slice(w.data());
            data.extend_from_slice(b);
        }
        Self(data)
    }

    /// Binary snapshot: `"PVEC"`, version u32, count u64, then `count` f64, all little-endian.
    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(PARAM_MAGIC)?;
        out.write_all(&PARAM_VERSION.to_le_bytes())?;
        out.write_all(&(self.0.len() as u64).to_le_bytes())?;
        for x in &self.0 {
            out.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut input: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        input.read_exact(&mut magic)?;
        if &magic != PARAM_MAGIC {
            return Err(Error::Format("not a parameter snapshot".into()));
        }
        let mut b4 = [0u8; 4];
        input.read_exact(&mut b4)?;
        let version = u32::from_le_bytes(b4);
        if version != PARAM_VERSION {
            return Err(Error::Format(format!(
                "unsupported snapshot version {version}"
            )));
        }
        let mut b8 = [0u8; 8];
        input.read_exact(&mut b8)?;
        let n = u64::from_le_bytes(b8) as usize;
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            input.read_exact(&mut b8)?;
            data.push(f64::from_le_bytes(b8));
        }
        Ok(Self(data))
    }
}

impl From<Vec<f64>> for ParamVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

pub(crate) fn check_len(cfg: &MlpConfig, n: usize) -> Result<()> {
    let expected = cfg.param_count();
    if n != expected {
        return Err(Error::dimension(format!(
            "parameter vector has {n} entries, model needs {expected}"
        )));
    }
    Ok(())
}

fn check_inputs(cfg: &MlpConfig, inputs: &Tensor) -> Result<usize> {
    match inputs.shape() {
        [batch, dim] if *dim == cfg.input_dim => Ok(*batch),
        shape => Err(Error::dimension(format!(
            "inputs of shape {shape:?} do not match input_dim {}",
            cfg.input_dim
        ))),
    }
}

fn check_labels(cfg: &MlpConfig, labels: &[usize], batch: usize) -> Result<()> {
    if labels.len() != batch {
        return Err(Error::dimension(format!(
            "{} labels for a batch of {batch}",
            labels.len()
        )));
    }
    if batch == 0 {
        return Err(Error::validation("empty batch"));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= cfg.num_classes) {
        return Err(Error::validation(format!(
            "label {bad} outside [0, {})",
            cfg.num_classes
        )));
    }
    Ok(())
}

/// Logits of shape `batch x num_classes`.
pub fn forward(cfg: &MlpConfig, params: &ParamVector, inputs: &Tensor) -> Result<Tensor> {
    cfg.validate()?;
    check_len(cfg, params.len())?;
    let batch = check_inputs(cfg, inputs)?;
    let widths = cfg.widths();
    let acts = forward_pass(&widths, params.as_slice(), inputs.data(), batch);
    let logits = acts.into_iter().last().expect("at least one layer");
    Tensor::new(vec![batch, cfg.num_classes], logits)
}

/// Arg-max class per row.
pub fn predict(cfg: &MlpConfig, params: &ParamVector, inputs: &Tensor) -> Result<Vec<usize>> {
    let logits = forward(cfg, params, inputs)?;
    Ok((0..logits.shape()[0])
        .map(|i| argmax(logits.row(i)))
        .collect())
}

/// Mean softmax cross-entropy and its gradient.
pub fn loss_and_grad(
    cfg: &MlpConfig,
    params: &ParamVector,
    inputs: &Tensor,
    labels: &[usize],
) -> Result<(f64, ParamVector)> {
    cfg.validate()?;
    check_len(cfg, params.len())?;
    let batch = check_inputs(cfg, inputs)?;
    check_labels(cfg, labels, batch)?;
    let (loss, grad) = loss_grad_kernel(&cfg.widths(), params.as_slice(), inputs.data(), labels);
    Ok((loss, ParamVector(grad)))
}

/// Mean softmax cross-entropy only.
pub fn loss(
    cfg: &MlpConfig,
    params: &ParamVector,
    inputs: &Tensor,
    labels: &[usize],
) -> Result<f64> {
    let logits = forward(cfg, params, inputs)?;
    check_labels(cfg, labels, logits.shape()[0])?;
    let total: f64 = labels
        .iter()
        .enumerate()
        .map(|(i, &y)| cross_entropy::<f64>(logits.row(i), y).0)
        .sum();
    Ok(total / labels.len() as f64)
}

pub(crate) fn validate_for_hvp(
    cfg: &MlpConfig,
    params: &ParamVector,
    inputs: &Tensor,
    labels: &[usize],
) -> Result<()> {
    cfg.validate()?;
    check_len(cfg, params.len())?;
    let batch = check_inputs(cfg, inputs)?;
    check_labels(cfg, labels, batch)
}

pub(crate) fn argmax(row: &[f64]) -> usize {
    row.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (j, &v)| {
            if v > best.1 {
                (j, v)
            } else {
                best
            }
        })
        .0
}

/// Activations of every layer; entry 0 is the input, the last is the logits.
fn forward_pass<S: AdScalar>(
    widths: &[usize],
    params: &[S],
    inputs: &[f64],
    batch: usize,
) -> Vec<Vec<S>> {
    let layers = widths.len() - 1;
    let mut acts: Vec<Vec<S>> = Vec::with_capacity(layers + 1);
    acts.push(inputs.iter().map(|&x| S::from_f64(x)).collect());
    let mut offset = 0;
    for l in 0..layers {
        let (fan_in, fan_out) = (widths[l], widths[l + 1]);
        let w = &params[offset..offset + fan_in * fan_out];
        let b = &params[offset + fan_in * fan_out..offset + fan_in * fan_out + fan_out];
        offset += fan_out * (fan_in + 1);
        let prev = &acts[l];
        let mut out = Vec::with_capacity(batch * fan_out);
        let hidden = l + 1 < layers;
        for i in 0..batch {
            let x = &prev[i * fan_in..(i + 1) * fan_in];
            for o in 0..fan_out {
                let row = &w[o * fan_in..(o + 1) * fan_in];
                let mut z = b[o];
                for (wk, xk) in row.iter().zip(x) {
                    z += *wk * *xk;
                }
                out.push(if hidden && z.primal() <= 0.0 {
                    S::zero()
                } else {
                    z
                });
            }
        }
        acts.push(out);
    }
    acts
}

/// Per-example loss and the logit gradient `softmax - onehot`.
///
/// The loss is computed as `(z_k - z_y) + ln(1 + sum_{j != k} exp(z_j - z_k))`
/// with `k` the arg-max logit, which stays accurate for large margins.
fn cross_entropy<S: AdScalar>(z: &[S], y: usize) -> (S, Vec<S>) {
    let k = z
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (j, v)| {
            if v.primal() > best.1 {
                (j, v.primal())
            } else {
                best
            }
        })
        .0;
    let zk = z[k];
    let shifted: Vec<S> = z.iter().map(|&v| (v - zk).exp()).collect();
    let mut rest = S::zero();
    for (j, &e) in shifted.iter().enumerate() {
        if j != k {
            rest += e;
        }
    }
    let loss = (zk - z[y]) + rest.ln_1p();
    let denom = S::from_f64(1.0) + rest;
    let mut dz: Vec<S> = shifted.iter().map(|&e| e / denom).collect();
    dz[y] = dz[y] - S::from_f64(1.0);
    (loss, dz)
}

pub(crate) fn loss_grad_kernel<S: AdScalar>(
    widths: &[usize],
    params: &[S],
    inputs: &[f64],
    labels: &[usize],
) -> (S, Vec<S>) {
    let batch = labels.len();
    let layers = widths.len() - 1;
    let acts = forward_pass(widths, params, inputs, batch);
    let classes = widths[layers];
    let inv_b = 1.0 / batch as f64;

    let mut total = S::zero();
    let mut delta: Vec<S> = Vec::with_capacity(batch * classes);
    for (i, &y) in labels.iter().enumerate() {
        let (l, dz) = cross_entropy(&acts[layers][i * classes..(i + 1) * classes], y);
        total += l;
        delta.extend(dz.into_iter().map(|d| d.scale(inv_b)));
    }

    let mut grad = vec![S::zero(); params.len()];
    let mut offset = params.len();
    for l in (0..layers).rev() {
        let (fan_in, fan_out) = (widths[l], widths[l + 1]);
        offset -= fan_out * (fan_in + 1);
        let w_range = offset..offset + fan_in * fan_out;
        let b_start = w_range.end;
        let prev = &acts[l];
        let mut prev_delta = if l > 0 {
            vec![S::zero(); batch * fan_in]
        } else {
            Vec::new()
        };
        {
            let (gw, gb) = grad[offset..b_start + fan_out].split_at_mut(fan_in * fan_out);
            let w = &params[w_range];
            for i in 0..batch {
                let x = &prev[i * fan_in..(i + 1) * fan_in];
                for o in 0..fan_out {
                    let d = delta[i * fan_out + o];
                    gb[o] += d;
                    let grow = &mut gw[o * fan_in..(o + 1) * fan_in];
                    for (g, xk) in grow.iter_mut().zip(x) {
                        *g += d * *xk;
                    }
                    if l > 0 {
                        let wrow = &w[o * fan_in..(o + 1) * fan_in];
                        let pd = &mut prev_delta[i * fan_in..(i + 1) * fan_in];
                        for (p, wk) in pd.iter_mut().zip(wrow) {
                            *p += d * *wk;
                        }
                    }
                }
            }
        }
        if l > 0 {
            // ReLU mask: stored activations are zero exactly where the unit is off
            for (p, a) in prev_delta.iter_mut().zip(prev) {
                if a.primal() <= 0.0 {
                    *p = S::zero();
                }
            }
            delta = prev_delta;
        }
    }
    (total.scale(inv_b), grad)
}
