//! Finite-difference verification of analytic input gradients.

use crate::error::Result;
use crate::model::{cross_entropy, forward, input_gradient, Architecture, ModelParams, Weights};
use crate::rng::substream;
use crate::stream::WindowView;
use crate::vecops;
use rand::Rng;
use rand_distr::StandardNormal;

const FD_STEP: f64 = 1e-5;

/// Maximum relative error between the analytic input gradient and central
/// finite differences of the cross-entropy loss, at step 1e-5.
///
/// The error is norm-relative: `|a - n| / max(|a|, |n|, 1e-8)` over the
/// stacked gradient vectors, which avoids blowing up single near-zero
/// coordinates while still catching any real disagreement.
pub fn finite_diff_check(model: &ModelParams, window: &WindowView, target: usize) -> Result<f64> {
    let analytic: Vec<f64> = input_gradient(model, window, target)?
        .into_iter()
        .flatten()
        .collect();

    let mut numeric = Vec::with_capacity(analytic.len());
    let mut perturbed = window.clone();
    for item_idx in 0..window.items.len() {
        for coord in 0..window.items[item_idx].features.len() {
            let original = window.items[item_idx].features[coord];
            perturbed.items[item_idx].features[coord] = original + FD_STEP;
            let plus = cross_entropy(&forward(model, &perturbed)?, target);
            perturbed.items[item_idx].features[coord] = original - FD_STEP;
            let minus = cross_entropy(&forward(model, &perturbed)?, target);
            perturbed.items[item_idx].features[coord] = original;
            numeric.push((plus - minus) / (2.0 * FD_STEP));
        }
    }

    let diff: Vec<f64> = analytic.iter().zip(&numeric).map(|(a, n)| a - n).collect();
    let denom = vecops::l2_norm(&analytic)
        .max(vecops::l2_norm(&numeric))
        .max(1e-8);
    Ok(vecops::l2_norm(&diff) / denom)
}

/// A fully randomized model (weights and biases) for exercising the check.
pub fn random_model(
    arch: Architecture,
    w: usize,
    dim: usize,
    num_classes: usize,
    seed: u64,
) -> Result<ModelParams> {
    let mut model = ModelParams::init(arch, w, dim, num_classes, seed)?;
    let mut rng = substream(seed, &[0xF0, 1]);
    match &mut model.weights {
        Weights::Linear { bias, .. } => {
            for b in bias.iter_mut() {
                *b = rng.sample::<f64, _>(StandardNormal) * 0.5;
            }
        }
        Weights::Mlp1 { b1, b2, .. } => {
            for b in b1.iter_mut().chain(b2.iter_mut()) {
                *b = rng.sample::<f64, _>(StandardNormal) * 0.5;
            }
        }
    }
    Ok(model)
}

/// A random window of standard-normal features with `s` items.
pub fn random_window(s: usize, dim: usize, w: usize, seed: u64) -> WindowView {
    let mut rng = substream(seed, &[0xF0, 2]);
    let features = (0..s)
        .map(|_| (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
        .collect();
    WindowView::from_features(features, s.max(w), w)
}
