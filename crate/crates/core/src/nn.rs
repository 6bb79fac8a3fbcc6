//! Multi-head regression network: one shared ReLU trunk layer, then one
//! ReLU hidden layer and a linear scalar output per target.
//!
//! Parameters live in one flat vector so the optimiser and the
//! finite-difference checks can treat them uniformly. Layout:
//! `W1 (trunk × input), b1, then per head: W2 (head × trunk), b2, w3, b3`.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_dim: usize,
    pub trunk_units: usize,
    pub head_units: usize,
    pub outputs: usize,
}

impl Architecture {
    fn trunk_len(&self) -> usize {
        self.trunk_units * (self.input_dim + 1)
    }

    fn head_len(&self) -> usize {
        self.head_units * (self.trunk_units + 1) + self.head_units + 1
    }

    pub fn parameter_count(&self) -> usize {
        self.trunk_len() + self.outputs * self.head_len()
    }

    fn head_offset(&self, t: usize) -> usize {
        self.trunk_len() + t * self.head_len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupNetwork {
    pub arch: Architecture,
    pub dropout: f64,
    pub params: Vec<f64>,
}

/// Activations kept from a forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct Trace {
    input: Vec<f64>,
    trunk_pre: Vec<f64>,
    trunk_mask: Vec<f64>,
    trunk_out: Vec<f64>,
    head_pre: Vec<f64>,
    head_mask: Vec<f64>,
    head_out: Vec<f64>,
    pub outputs: Vec<f64>,
}

impl GroupNetwork {
    pub fn zeros(arch: Architecture) -> Self {
        GroupNetwork { arch, dropout: 0.0, params: vec![0.0; arch.parameter_count()] }
    }

    /// He-normal hidden weights, Glorot-normal output weights, zero biases.
    pub fn init(arch: Architecture, dropout: f64, rng: &mut impl Rng) -> Self {
        let mut net = GroupNetwork::zeros(arch);
        net.dropout = dropout;
        let he_trunk = Normal::new(0.0, (2.0 / arch.input_dim.max(1) as f64).sqrt()).unwrap();
        let he_head = Normal::new(0.0, (2.0 / arch.trunk_units.max(1) as f64).sqrt()).unwrap();
        let out = Normal::new(0.0, (1.0 / arch.head_units.max(1) as f64).sqrt()).unwrap();
        let (d, h1, h2) = (arch.input_dim, arch.trunk_units, arch.head_units);
        for w in &mut net.params[..h1 * d] {
            *w = he_trunk.sample(rng);
        }
        for t in 0..arch.outputs {
            let o = arch.head_offset(t);
            for w in &mut net.params[o..o + h2 * h1] {
                *w = he_head.sample(rng);
            }
            let w3 = o + h2 * h1 + h2;
            for w in &mut net.params[w3..w3 + h2] {
                *w = out.sample(rng);
            }
        }
        net
    }

    /// Forward pass. `dropout_rng = None` is evaluation mode.
    pub fn forward_trace(&self, input: &[f64], dropout_rng: Option<&mut ChaCha8Rng>) -> Result<Trace> {
        let a = self.arch;
        if input.len() != a.input_dim {
            return Err(Error::ShapeMismatch { expected: a.input_dim, got: input.len() });
        }
        let (d, h1, h2) = (a.input_dim, a.trunk_units, a.head_units);
        let p = &self.params;
        let keep = 1.0 - self.dropout;
        let mut rng = dropout_rng.filter(|_| self.dropout > 0.0);
        let mask = |rng: &mut Option<&mut ChaCha8Rng>| match rng {
            Some(r) => {
                if r.random::<f64>() < keep {
                    1.0 / keep
                } else {
                    0.0
                }
            }
            None => 1.0,
        };

        let mut trunk_pre = vec![0.0; h1];
        let mut trunk_mask = vec![1.0; h1];
        let mut trunk_out = vec![0.0; h1];
        let b1 = h1 * d;
        for i in 0..h1 {
            let row = &p[i * d..(i + 1) * d];
            let z = row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>() + p[b1 + i];
            trunk_pre[i] = z;
            trunk_mask[i] = mask(&mut rng);
            trunk_out[i] = z.max(0.0) * trunk_mask[i];
        }

        let mut head_pre = vec![0.0; a.outputs * h2];
        let mut head_mask = vec![1.0; a.outputs * h2];
        let mut head_out = vec![0.0; a.outputs * h2];
        let mut outputs = vec![0.0; a.outputs];
        for t in 0..a.outputs {
            let o = a.head_offset(t);
            let (b2, w3, b3) = (o + h2 * h1, o + h2 * h1 + h2, o + h2 * h1 + 2 * h2);
            let mut y = p[b3];
            for j in 0..h2 {
                let row = &p[o + j * h1..o + (j + 1) * h1];
                let z = row.iter().zip(&trunk_out).map(|(w, x)| w * x).sum::<f64>() + p[b2 + j];
                let k = t * h2 + j;
                head_pre[k] = z;
                head_mask[k] = mask(&mut rng);
                head_out[k] = z.max(0.0) * head_mask[k];
                y += p[w3 + j] * head_out[k];
            }
            outputs[t] = y;
        }
        Ok(Trace { input: input.to_vec(), trunk_pre, trunk_mask, trunk_out, head_pre, head_mask, head_out, outputs })
    }

    /// Evaluation-mode prediction, one value per target.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_trace(input, None)?.outputs)
    }

    /// Adds the gradient of a loss with `dL/dy = output_grad` to `grad`.
    pub fn backward(&self, trace: &Trace, output_grad: &[f64], grad: &mut [f64]) {
        let a = self.arch;
        let (d, h1, h2) = (a.input_dim, a.trunk_units, a.head_units);
        let p = &self.params;
        let mut d_trunk = vec![0.0; h1];
        for t in 0..a.outputs {
            let o = a.head_offset(t);
            let (b2, w3, b3) = (o + h2 * h1, o + h2 * h1 + h2, o + h2 * h1 + 2 * h2);
            let dy = output_grad[t];
            grad[b3] += dy;
            for j in 0..h2 {
                let k = t * h2 + j;
                grad[w3 + j] += dy * trace.head_out[k];
                if trace.head_pre[k] <= 0.0 {
                    continue;
                }
                let dz = dy * p[w3 + j] * trace.head_mask[k];
                if dz == 0.0 {
                    continue;
                }
                grad[b2 + j] += dz;
                let row = o + j * h1;
                for i in 0..h1 {
                    grad[row + i] += dz * trace.trunk_out[i];
                    d_trunk[i] += dz * p[row + i];
                }
            }
        }
        let b1 = h1 * d;
        for i in 0..h1 {
            if trace.trunk_pre[i] <= 0.0 {
                continue;
            }
            let dz = d_trunk[i] * trace.trunk_mask[i];
            if dz == 0.0 {
                continue;
            }
            grad[b1 + i] += dz;
            for (g, x) in grad[i * d..(i + 1) * d].iter_mut().zip(&trace.input) {
                *g += dz * x;
            }
        }
    }

    /// Mean squared error over a batch (mean over rows and targets) and its
    /// exact gradient.
    pub fn loss_and_gradient(
        &self,
        inputs: &[f64],
        targets: &[f64],
        mut dropout_rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(f64, Vec<f64>)> {
        let (d, t) = (self.arch.input_dim, self.arch.outputs);
        let n = targets.len() / t.max(1);
        if inputs.len() != n * d {
            return Err(Error::ShapeMismatch { expected: n * d, got: inputs.len() });
        }
        if n == 0 {
            return Err(Error::EmptyDataset);
        }
        let scale = 1.0 / (n * t) as f64;
        let mut grad = vec![0.0; self.params.len()];
        let mut loss = 0.0;
        let mut dy = vec![0.0; t];
        for (x, y) in inputs.chunks_exact(d).zip(targets.chunks_exact(t)) {
            let trace = self.forward_trace(x, dropout_rng.as_deref_mut())?;
            for k in 0..t {
                let e = trace.outputs[k] - y[k];
                loss += e * e * scale;
                dy[k] = 2.0 * e * scale;
            }
            self.backward(&trace, &dy, &mut grad);
        }
        Ok((loss, grad))
    }

    pub fn mse(&self, data: &Dataset) -> Result<f64> {
        let mut sum = 0.0;
        for (x, y) in data.rows() {
            let out = self.forward(x)?;
            sum += out.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        }
        Ok(sum / (data.len() * data.outputs).max(1) as f64)
    }
}

/// Row-major inputs and targets.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub inputs: Vec<f64>,
    pub targets: Vec<f64>,
    pub input_dim: usize,
    pub outputs: usize,
}

impl Dataset {
    pub fn new(input_dim: usize, outputs: usize) -> Self {
        Dataset { inputs: Vec::new(), targets: Vec::new(), input_dim, outputs }
    }

    pub fn push(&mut self, input: &[f64], target: &[f64]) {
        assert_eq!(input.len(), self.input_dim);
        assert_eq!(target.len(), self.outputs);
        self.inputs.extend_from_slice(input);
        self.targets.extend_from_slice(target);
    }

    pub fn len(&self) -> usize {
        self.targets.len() / self.outputs.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn rows(&self) -> impl Iterator<Item = (&[f64], &[f64])> {
        self.inputs.chunks_exact(self.input_dim).zip(self.targets.chunks_exact(self.outputs))
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        let mut out = Dataset::new(self.input_dim, self.outputs);
        for &i in idx {
            out.push(
                &self.inputs[i * self.input_dim..(i + 1) * self.input_dim],
                &self.targets[i * self.outputs..(i + 1) * self.outputs],
            );
        }
        out
    }
}

/// Per-column affine standardisation with stored statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Columns with zero spread get unit scale.
    pub fn fit(values: &[f64], cols: usize) -> Self {
        let n = (values.len() / cols.max(1)).max(1) as f64;
        let mut mean = vec![0.0; cols];
        for row in values.chunks_exact(cols) {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v / n;
            }
        }
        let mut var = vec![0.0; cols];
        for row in values.chunks_exact(cols) {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m).powi(2) / n;
            }
        }
        let std = var.into_iter().map(|v| if v > 1e-24 { v.sqrt() } else { 1.0 }).collect();
        Standardizer { mean, std }
    }

    pub fn identity(cols: usize) -> Self {
        Standardizer { mean: vec![0.0; cols], std: vec![1.0; cols] }
    }

    pub fn apply(&self, row: &mut [f64]) {
        for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
            *v = (*v - m) / s;
        }
    }

    pub fn invert(&self, row: &mut [f64]) {
        for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
            *v = *v * s + m;
        }
    }

    pub fn apply_all(&self, values: &mut [f64]) {
        for row in values.chunks_exact_mut(self.mean.len()) {
            self.apply(row);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub dropout: f64,
    pub trunk_units: usize,
    pub head_units: usize,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams { learning_rate: 0.01, batch_size: 64, dropout: 0.0, trunk_units: 32, head_units: 16 }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && self.batch_size > 0
            && (0.0..1.0).contains(&self.dropout)
            && self.trunk_units > 0
            && self.head_units > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid hyperparameters {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub patience: usize,
    pub momentum: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { max_epochs: 200, patience: 10, momentum: 0.9 }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub net: GroupNetwork,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub best_validation: f64,
    pub epochs: usize,
}

/// Mini-batch SGD with momentum and early stopping on `valid` (or on the
/// training loss when no validation set is given). Returns the best
/// parameters seen.
pub fn train(
    data: &Dataset,
    valid: Option<&Dataset>,
    hp: &HyperParams,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<TrainOutcome> {
    hp.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let arch = Architecture {
        input_dim: data.input_dim,
        trunk_units: hp.trunk_units,
        head_units: hp.head_units,
        outputs: data.outputs,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = GroupNetwork::init(arch, hp.dropout, &mut rng);
    let initial_loss = net.mse(data)?;
    let score = |net: &GroupNetwork| net.mse(valid.unwrap_or(data));

    let mut best = (score(&net)?, net.params.clone());
    let mut velocity = vec![0.0; net.params.len()];
    let mut order: Vec<usize> = (0..data.len()).collect();
    let (d, t) = (data.input_dim, data.outputs);
    let mut stale = 0;
    let mut epochs = 0;
    let mut xb = Vec::with_capacity(hp.batch_size * d);
    let mut yb = Vec::with_capacity(hp.batch_size * t);

    for _ in 0..cfg.max_epochs {
        epochs += 1;
        order.shuffle(&mut rng);
        for batch in order.chunks(hp.batch_size) {
            xb.clear();
            yb.clear();
            for &i in batch {
                xb.extend_from_slice(&data.inputs[i * d..(i + 1) * d]);
                yb.extend_from_slice(&data.targets[i * t..(i + 1) * t]);
            }
            let (loss, grad) = net.loss_and_gradient(&xb, &yb, Some(&mut rng))?;
            if !loss.is_finite() {
                return Err(Error::DivergedLoss);
            }
            for ((p, v), g) in net.params.iter_mut().zip(&mut velocity).zip(&grad) {
                *v = cfg.momentum * *v - hp.learning_rate * g;
                *p += *v;
            }
        }
        let s = score(&net)?;
        if !s.is_finite() {
            return Err(Error::DivergedLoss);
        }
        if s < best.0 {
            best = (s, net.params.clone());
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    net.params = best.1;
    let final_loss = net.mse(data)?;
    Ok(TrainOutcome { net, initial_loss, final_loss, best_validation: best.0, epochs })
}

/// Outcome of comparing analytic gradients with central finite differences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GradientCheck {
    pub points: usize,
    pub coordinates: usize,
    pub max_relative_error: f64,
}

/// Denominator floor of the relative error, so gradients that are zero up to
/// round-off do not count as mismatches.
pub const GRADIENT_FLOOR: f64 = 1e-6;

/// Checks `coords_per_point` random parameters (all when larger than the
/// parameter count) at `points` random parameter vectors, with a random
/// three-row batch each. Points whose ReLU pre-activations sit within reach
/// of the perturbation are redrawn, since the loss is not differentiable
/// there.
pub fn gradient_check(
    arch: Architecture,
    points: usize,
    coords_per_point: usize,
    epsilon: f64,
    seed: u64,
) -> Result<GradientCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let batch = 3;
    let n_params = arch.parameter_count();
    let mut max_rel: f64 = 0.0;
    let mut coordinates = 0;
    let mut done = 0;
    while done < points {
        let mut net = GroupNetwork::init(arch, 0.0, &mut rng);
        for p in net.params.iter_mut() {
            *p += rng.random_range(-0.1..0.1);
        }
        let x: Vec<f64> = (0..batch * arch.input_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..batch * arch.outputs).map(|_| rng.random_range(-1.0..1.0)).collect();
        let margin = 1e3 * epsilon;
        let mut near_kink = false;
        for row in x.chunks_exact(arch.input_dim) {
            let t = net.forward_trace(row, None)?;
            near_kink |= t.trunk_pre.iter().chain(&t.head_pre).any(|z| z.abs() < margin);
        }
        if near_kink {
            continue;
        }
        let (_, grad) = net.loss_and_gradient(&x, &y, None)?;
        let coords: Vec<usize> = if coords_per_point >= n_params {
            (0..n_params).collect()
        } else {
            rand::seq::index::sample(&mut rng, n_params, coords_per_point).into_vec()
        };
        for k in coords {
            let base = net.params[k];
            net.params[k] = base + epsilon;
            let plus = net.loss_and_gradient(&x, &y, None)?.0;
            net.params[k] = base - epsilon;
            let minus = net.loss_and_gradient(&x, &y, None)?.0;
            net.params[k] = base;
            let fd = (plus - minus) / (2.0 * epsilon);
            let rel = (grad[k] - fd).abs() / grad[k].abs().max(fd.abs()).max(GRADIENT_FLOOR);
            max_rel = max_rel.max(rel);
            coordinates += 1;
        }
        done += 1;
    }
    Ok(GradientCheck { points, coordinates, max_relative_error: max_rel })
}
