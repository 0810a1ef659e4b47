//! Projected gradient descent inside an l2 ball over selected window slots.

use crate::error::{Error, Result};
use crate::vecops;

/// Minimizes an objective over the features of the `mutable` slots of a
/// window, subject to the l2 norm of the concatenated perturbation staying
/// within `radius`.
///
/// The objective returns `(value, gradient)` where the gradient is shaped
/// like the window (one vector per slot); gradients over immutable slots are
/// ignored. Steps follow the normalized gradient with step size
/// `step_factor * radius / steps` and the perturbation is projected back onto
/// the ball after every step. Returns the best iterate found; if no iterate
/// improves on the start, the start is returned unchanged.
pub fn pgd_l2(
    start: &[Vec<f64>],
    mutable: &[usize],
    radius: f64,
    steps: usize,
    step_factor: f64,
    mut objective: impl FnMut(&[Vec<f64>]) -> (f64, Vec<Vec<f64>>),
) -> Result<Vec<Vec<f64>>> {
    if !(radius >= 0.0 && radius.is_finite()) {
        return Err(Error::domain(format!("radius must be nonnegative, got {radius}")));
    }
    if steps == 0 || step_factor <= 0.0 {
        return Err(Error::domain("pgd needs steps >= 1 and a positive step factor"));
    }
    if mutable.iter().any(|&s| s >= start.len()) {
        return Err(Error::domain("mutable slot index out of range"));
    }
    if radius == 0.0 || mutable.is_empty() {
        return Ok(start.to_vec());
    }

    let step_size = step_factor * radius / steps as f64;
    let mut current = start.to_vec();
    let mut delta: Vec<Vec<f64>> = mutable
        .iter()
        .map(|&slot| vec![0.0; start[slot].len()])
        .collect();

    let (start_value, _) = objective(start);
    let mut best_value = start_value;
    let mut best: Option<Vec<Vec<f64>>> = None;

    for _ in 0..steps {
        let (value, grad) = objective(&current);
        if value < best_value {
            best_value = value;
            best = Some(current.clone());
        }
        // Normalized gradient step over the mutable coordinates only.
        let flat_norm = {
            let sq: f64 = mutable
                .iter()
                .map(|&slot| vecops::dot(&grad[slot], &grad[slot]))
                .sum();
            sq.sqrt()
        };
        if flat_norm == 0.0 || !flat_norm.is_finite() {
            break;
        }
        for (d, &slot) in delta.iter_mut().zip(mutable) {
            for (dv, gv) in d.iter_mut().zip(&grad[slot]) {
                *dv -= step_size * gv / flat_norm;
            }
        }
        // Project the concatenated perturbation onto the radius ball.
        let norm = delta_norm(&delta);
        if norm > radius {
            let scale = radius / norm;
            for d in &mut delta {
                for dv in d.iter_mut() {
                    *dv *= scale;
                }
            }
        }
        for (d, &slot) in delta.iter().zip(mutable) {
            for (cv, (&sv, &dv)) in current[slot].iter_mut().zip(start[slot].iter().zip(d)) {
                *cv = sv + dv;
            }
        }
    }
    let (value, _) = objective(&current);
    if value < best_value {
        best = Some(current);
    }
    Ok(best.unwrap_or_else(|| start.to_vec()))
}

fn delta_norm(delta: &[Vec<f64>]) -> f64 {
    delta
        .iter()
        .map(|d| vecops::dot(d, d))
        .sum::<f64>()
        .sqrt()
}

/// l2 norm of the perturbation of `candidate` against `start` over `mutable`.
pub fn perturbation_norm(start: &[Vec<f64>], candidate: &[Vec<f64>], mutable: &[usize]) -> f64 {
    mutable
        .iter()
        .map(|&slot| {
            let d = vecops::l2_distance(&start[slot], &candidate[slot]);
            d * d
        })
        .sum::<f64>()
        .sqrt()
}
