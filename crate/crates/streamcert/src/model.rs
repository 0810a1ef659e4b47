//! Window classifiers with analytic input gradients and a minimal trainer.
//!
//! Two architectures are supported: a linear map and a one-hidden-layer tanh
//! MLP. Windows shorter than `w` (the first steps of a stream) are zero-padded
//! at the front so a single parameter set serves every time step. Gradients
//! with respect to the window features are computed analytically; the oracle
//! module checks them against central finite differences.

use crate::error::{Error, Result};
use crate::rng::{substream, tag};
use crate::stream::{window_at, window_label, LabeledStream, WindowView};
use crate::vecops;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Classifier architecture.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    Linear,
    Mlp1 { hidden: usize },
}

/// Trained classifier parameters for windows of size `w` over `dim`-dimensional
/// items, producing `num_classes` scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub format_version: u32,
    pub arch: Architecture,
    pub w: usize,
    pub dim: usize,
    pub num_classes: usize,
    pub weights: Weights,
}

/// Flattened weight storage. Matrices are row-major: `w1[u * input + k]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weights {
    Linear {
        // num_classes x (w * dim)
        wmat: Vec<f64>,
        bias: Vec<f64>,
    },
    Mlp1 {
        // hidden x (w * dim)
        w1: Vec<f64>,
        b1: Vec<f64>,
        // num_classes x hidden
        w2: Vec<f64>,
        b2: Vec<f64>,
    },
}

/// Per-step performance scorer; values always land in `[0, 1]`.
#[derive(Clone)]
pub enum PerformanceFn {
    /// 1 when the argmax prediction matches the label, else 0.
    ZeroOne,
    /// Custom bounded scorer over (scores, label); outputs are clamped.
    Custom(std::sync::Arc<dyn Fn(&[f64], usize) -> f64 + Send + Sync>),
}

impl PerformanceFn {
    pub fn score(&self, scores: &[f64], label: usize) -> f64 {
        match self {
            PerformanceFn::ZeroOne => {
                if argmax(scores) == label {
                    1.0
                } else {
                    0.0
                }
            }
            PerformanceFn::Custom(f) => f(scores, label).clamp(0.0, 1.0),
        }
    }
}

impl std::fmt::Debug for PerformanceFn {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PerformanceFn::ZeroOne => write!(f, "ZeroOne"),
            PerformanceFn::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

/// Argmax with ties broken toward the smallest class id.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

impl ModelParams {
    pub fn input_len(&self) -> usize {
        self.w * self.dim
    }

    /// Initializes parameters with Xavier-uniform weights, deterministic per seed.
    pub fn init(arch: Architecture, w: usize, dim: usize, num_classes: usize, seed: u64) -> Result<Self> {
        if w == 0 || dim == 0 || num_classes == 0 {
            return Err(Error::domain("model shape parameters must be positive"));
        }
        let input = w * dim;
        let mut rng = substream(seed, &[tag::TRAIN_INIT]);
        let xavier = |fan_in: usize, fan_out: usize, n: usize, rng: &mut dyn FnMut() -> f64| {
            let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
            (0..n).map(|_| (rng() * 2.0 - 1.0) * a).collect::<Vec<f64>>()
        };
        let mut draw = move || rng.random::<f64>();
        let weights = match arch {
            Architecture::Linear => Weights::Linear {
                wmat: xavier(input, num_classes, num_classes * input, &mut draw),
                bias: vec![0.0; num_classes],
            },
            Architecture::Mlp1 { hidden } => {
                if hidden == 0 {
                    return Err(Error::domain("hidden width must be positive"));
                }
                Weights::Mlp1 {
                    w1: xavier(input, hidden, hidden * input, &mut draw),
                    b1: vec![0.0; hidden],
                    w2: xavier(hidden, num_classes, num_classes * hidden, &mut draw),
                    b2: vec![0.0; num_classes],
                }
            }
        };
        Ok(ModelParams {
            format_version: 1,
            arch,
            w,
            dim,
            num_classes,
            weights,
        })
    }

    /// Serializes to the versioned JSON parameter format.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Validation(format!("serializing model: {e}")))?;
        std::fs::write(path.as_ref(), text)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        let model: ModelParams = serde_json::from_str(&text)
            .map_err(|e| Error::Validation(format!("parsing model file: {e}")))?;
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != 1 {
            return Err(Error::Validation(format!(
                "unsupported model format version {}",
                self.format_version
            )));
        }
        let input = self.input_len();
        let shapes_ok = match (&self.arch, &self.weights) {
            (Architecture::Linear, Weights::Linear { wmat, bias }) => {
                wmat.len() == self.num_classes * input && bias.len() == self.num_classes
            }
            (Architecture::Mlp1 { hidden }, Weights::Mlp1 { w1, b1, w2, b2 }) => {
                w1.len() == hidden * input
                    && b1.len() == *hidden
                    && w2.len() == self.num_classes * hidden
                    && b2.len() == self.num_classes
            }
            _ => false,
        };
        if !shapes_ok {
            return Err(Error::Validation("weight shapes do not match architecture".into()));
        }
        let finite = match &self.weights {
            Weights::Linear { wmat, bias } => all_finite(wmat) && all_finite(bias),
            Weights::Mlp1 { w1, b1, w2, b2 } => {
                all_finite(w1) && all_finite(b1) && all_finite(w2) && all_finite(b2)
            }
        };
        if !finite {
            return Err(Error::Validation("model has non-finite parameters".into()));
        }
        Ok(())
    }
}

fn all_finite(xs: &[f64]) -> bool {
    xs.iter().all(|x| x.is_finite())
}

/// Flattens a window into the model input, zero-padding short windows at the
/// front (oldest side).
fn flatten_window(model: &ModelParams, window: &WindowView) -> Result<Vec<f64>> {
    let s = window.len();
    if s > model.w {
        return Err(Error::domain(format!(
            "window has {s} items but the model expects at most {}",
            model.w
        )));
    }
    let mut input = vec![0.0; model.input_len()];
    for (k, item) in window.items.iter().enumerate() {
        if item.features.len() != model.dim {
            return Err(Error::domain(format!(
                "window item has dimension {}, model expects {}",
                item.features.len(),
                model.dim
            )));
        }
        let slot = model.w - s + k;
        input[slot * model.dim..(slot + 1) * model.dim].copy_from_slice(&item.features);
    }
    Ok(input)
}

struct ForwardPass {
    input: Vec<f64>,
    hidden: Vec<f64>, // tanh activations; empty for linear
    scores: Vec<f64>,
}

fn forward_pass(model: &ModelParams, window: &WindowView) -> Result<ForwardPass> {
    let input = flatten_window(model, window)?;
    let (hidden, scores) = match &model.weights {
        Weights::Linear { wmat, bias } => {
            let scores = (0..model.num_classes)
                .map(|c| {
                    bias[c] + vecops::dot(&wmat[c * input.len()..(c + 1) * input.len()], &input)
                })
                .collect();
            (Vec::new(), scores)
        }
        Weights::Mlp1 { w1, b1, w2, b2 } => {
            let hidden: Vec<f64> = (0..b1.len())
                .map(|u| {
                    (b1[u] + vecops::dot(&w1[u * input.len()..(u + 1) * input.len()], &input))
                        .tanh()
                })
                .collect();
            let scores = (0..model.num_classes)
                .map(|c| b2[c] + vecops::dot(&w2[c * hidden.len()..(c + 1) * hidden.len()], &hidden))
                .collect();
            (hidden, scores)
        }
    };
    Ok(ForwardPass {
        input,
        hidden,
        scores,
    })
}

/// Class scores for a window (shorter windows are front-padded with zeros).
pub fn forward(model: &ModelParams, window: &WindowView) -> Result<Vec<f64>> {
    Ok(forward_pass(model, window)?.scores)
}

/// Numerically stable softmax.
fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|&s| (s - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Cross-entropy of the scores against `target`.
pub fn cross_entropy(scores: &[f64], target: usize) -> f64 {
    let probs = softmax(scores);
    -probs[target].max(1e-300).ln()
}

/// Analytic gradient of the cross-entropy loss (against `target`) with
/// respect to the window features, shaped like the given window.
pub fn input_gradient(
    model: &ModelParams,
    window: &WindowView,
    target: usize,
) -> Result<Vec<Vec<f64>>> {
    if target >= model.num_classes {
        return Err(Error::domain(format!(
            "target label {target} out of range for {} classes",
            model.num_classes
        )));
    }
    let pass = forward_pass(model, window)?;
    let mut g_scores = softmax(&pass.scores);
    g_scores[target] -= 1.0;

    let input_len = pass.input.len();
    let mut g_input = vec![0.0; input_len];
    match &model.weights {
        Weights::Linear { wmat, .. } => {
            for (c, &gc) in g_scores.iter().enumerate() {
                for k in 0..input_len {
                    g_input[k] += gc * wmat[c * input_len + k];
                }
            }
        }
        Weights::Mlp1 { w1, w2, .. } => {
            let hidden_len = pass.hidden.len();
            let mut g_pre = vec![0.0; hidden_len];
            for (c, &gc) in g_scores.iter().enumerate() {
                for u in 0..hidden_len {
                    g_pre[u] += gc * w2[c * hidden_len + u];
                }
            }
            for (u, g) in g_pre.iter_mut().enumerate() {
                *g *= 1.0 - pass.hidden[u] * pass.hidden[u];
            }
            for (u, &gp) in g_pre.iter().enumerate() {
                for k in 0..input_len {
                    g_input[k] += gp * w1[u * input_len + k];
                }
            }
        }
    }

    // Drop the gradient over padding slots; return one vector per real item.
    let s = window.len();
    let grads = (0..s)
        .map(|k| {
            let slot = model.w - s + k;
            g_input[slot * model.dim..(slot + 1) * model.dim].to_vec()
        })
        .collect();
    Ok(grads)
}

/// The 0/1 performance `f_i`: 1 iff the argmax prediction equals `label`.
pub fn zero_one_performance(model: &ModelParams, window: &WindowView, label: usize) -> Result<f64> {
    let scores = forward(model, window)?;
    Ok(PerformanceFn::ZeroOne.score(&scores, label))
}

/// Average clean performance over every step of a stream.
pub fn stream_performance(model: &ModelParams, stream: &LabeledStream, w: usize) -> Result<f64> {
    let t = stream.len();
    let mut total = 0.0;
    for i in 1..=t {
        let window = window_at(stream, i, w)?;
        let label = window_label(stream, i, w)?;
        total += zero_one_performance(model, &window, label)?;
    }
    Ok(total / t as f64)
}

/// Training hyperparameters for [`train_sgd`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// When set, Gaussian noise of this std-dev is added to every window
    /// during training (noise augmentation for smoothed deployment).
    pub noise_sigma: Option<f64>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 32,
            learning_rate: 0.1,
            momentum: 0.9,
            weight_decay: 1e-4,
            noise_sigma: None,
            seed: 0,
        }
    }
}

fn params_mut(weights: &mut Weights) -> Vec<&mut Vec<f64>> {
    match weights {
        Weights::Linear { wmat, bias } => vec![wmat, bias],
        Weights::Mlp1 { w1, b1, w2, b2 } => vec![w1, b1, w2, b2],
    }
}

/// Gradient of the cross-entropy loss with respect to all parameters, as a
/// parallel structure to the weights.
fn param_gradient(model: &ModelParams, input: &[f64], target: usize) -> Vec<Vec<f64>> {
    let input_len = input.len();
    match &model.weights {
        Weights::Linear { wmat, bias } => {
            let scores: Vec<f64> = (0..model.num_classes)
                .map(|c| bias[c] + vecops::dot(&wmat[c * input_len..(c + 1) * input_len], input))
                .collect();
            let mut g_scores = softmax(&scores);
            g_scores[target] -= 1.0;
            let mut g_w = vec![0.0; wmat.len()];
            for (c, &gc) in g_scores.iter().enumerate() {
                for k in 0..input_len {
                    g_w[c * input_len + k] = gc * input[k];
                }
            }
            vec![g_w, g_scores]
        }
        Weights::Mlp1 { w1, b1, w2, b2 } => {
            let hidden_len = b1.len();
            let hidden: Vec<f64> = (0..hidden_len)
                .map(|u| (b1[u] + vecops::dot(&w1[u * input_len..(u + 1) * input_len], input)).tanh())
                .collect();
            let scores: Vec<f64> = (0..model.num_classes)
                .map(|c| b2[c] + vecops::dot(&w2[c * hidden_len..(c + 1) * hidden_len], &hidden))
                .collect();
            let mut g_scores = softmax(&scores);
            g_scores[target] -= 1.0;
            let mut g_w2 = vec![0.0; w2.len()];
            for (c, &gc) in g_scores.iter().enumerate() {
                for u in 0..hidden_len {
                    g_w2[c * hidden_len + u] = gc * hidden[u];
                }
            }
            let mut g_pre = vec![0.0; hidden_len];
            for (c, &gc) in g_scores.iter().enumerate() {
                for u in 0..hidden_len {
                    g_pre[u] += gc * w2[c * hidden_len + u];
                }
            }
            for (u, g) in g_pre.iter_mut().enumerate() {
                *g *= 1.0 - hidden[u] * hidden[u];
            }
            let mut g_w1 = vec![0.0; w1.len()];
            for (u, &gp) in g_pre.iter().enumerate() {
                for k in 0..input_len {
                    g_w1[u * input_len + k] = gp * input[k];
                }
            }
            vec![g_w1, g_pre, g_w2, g_scores]
        }
    }
}

fn mean_loss(model: &ModelParams, examples: &[(Vec<f64>, usize)]) -> f64 {
    let mut total = 0.0;
    for (input, target) in examples {
        let scores = match &model.weights {
            Weights::Linear { wmat, bias } => (0..model.num_classes)
                .map(|c| bias[c] + vecops::dot(&wmat[c * input.len()..(c + 1) * input.len()], input))
                .collect::<Vec<f64>>(),
            Weights::Mlp1 { w1, b1, w2, b2 } => {
                let hidden: Vec<f64> = (0..b1.len())
                    .map(|u| {
                        (b1[u] + vecops::dot(&w1[u * input.len()..(u + 1) * input.len()], input))
                            .tanh()
                    })
                    .collect();
                (0..model.num_classes)
                    .map(|c| b2[c] + vecops::dot(&w2[c * hidden.len()..(c + 1) * hidden.len()], &hidden))
                    .collect()
            }
        };
        total += cross_entropy(&scores, *target);
    }
    total / examples.len() as f64
}

/// Trains a model with momentum SGD on cross-entropy over all windows of the
/// training stream. Deterministic given the config seed. Returns an error if
/// the loss turns non-finite or the final loss exceeds the initial loss.
pub fn train_sgd(
    train_stream: &LabeledStream,
    w: usize,
    arch: Architecture,
    config: &TrainConfig,
) -> Result<ModelParams> {
    if train_stream.len() < w {
        return Err(Error::domain(format!(
            "training stream of length {} is shorter than the window {w}",
            train_stream.len()
        )));
    }
    if config.epochs == 0 || config.batch_size == 0 {
        return Err(Error::domain("epochs and batch size must be positive"));
    }
    if let Some(sigma) = config.noise_sigma {
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(Error::domain("augmentation sigma must be nonnegative"));
        }
    }
    let mut model = ModelParams::init(arch, w, train_stream.dim(), train_stream.num_classes(), config.seed)?;

    // Base (clean) training examples: one per time step, padded windows.
    let t = train_stream.len();
    let base: Vec<(Vec<f64>, usize)> = (1..=t)
        .map(|i| {
            let window = window_at(train_stream, i, w)?;
            let input = flatten_window(&model, &window)?;
            Ok((input, window_label(train_stream, i, w)?))
        })
        .collect::<Result<_>>()?;

    let initial_loss = mean_loss(&model, &base);

    let mut velocity: Vec<Vec<f64>> = params_mut(&mut model.weights)
        .iter()
        .map(|p| vec![0.0; p.len()])
        .collect();
    let mut order: Vec<usize> = (0..t).collect();

    for epoch in 0..config.epochs {
        let mut shuffle_rng = substream(config.seed, &[tag::TRAIN_SHUFFLE, epoch as u64]);
        order.shuffle(&mut shuffle_rng);
        let mut aug_rng = substream(config.seed, &[tag::TRAIN_AUG, epoch as u64]);

        for batch in order.chunks(config.batch_size) {
            let mut grads: Vec<Vec<f64>> = velocity.iter().map(|v| vec![0.0; v.len()]).collect();
            for &idx in batch {
                let (input, target) = &base[idx];
                let input = match config.noise_sigma {
                    Some(sigma) if sigma > 0.0 => input
                        .iter()
                        .map(|&x| x + sigma * aug_rng.sample::<f64, _>(rand_distr::StandardNormal))
                        .collect(),
                    _ => input.clone(),
                };
                let g = param_gradient(&model, &input, *target);
                for (acc, gi) in grads.iter_mut().zip(g) {
                    for (a, b) in acc.iter_mut().zip(gi) {
                        *a += b;
                    }
                }
            }
            let scale = 1.0 / batch.len() as f64;
            let mut params = params_mut(&mut model.weights);
            for ((param, vel), grad) in params.iter_mut().zip(&mut velocity).zip(&grads) {
                for k in 0..param.len() {
                    let g = grad[k] * scale + config.weight_decay * param[k];
                    vel[k] = config.momentum * vel[k] + g;
                    param[k] -= config.learning_rate * vel[k];
                    if !param[k].is_finite() {
                        return Err(Error::Diverged(format!(
                            "non-finite parameter at epoch {epoch}"
                        )));
                    }
                }
            }
        }
    }

    let final_loss = mean_loss(&model, &base);
    if !final_loss.is_finite() {
        return Err(Error::Diverged(format!("final loss is {final_loss}")));
    }
    if final_loss > initial_loss {
        return Err(Error::Diverged(format!(
            "training did not reduce the loss ({initial_loss} -> {final_loss}); \
             lower the learning rate"
        )));
    }
    Ok(model)
}
