//! Attack-quality and budget-compliance checks against brute-force oracles
//! on tiny one-dimensional streams, where exhaustive search is feasible.

use streamcert::adversary::{
    greedy_once_attack, per_window_attack, run_attack, validate_trace_budget, AttackConfig,
    AttackMode, AttackTarget, TracePerturbations,
};
use streamcert::model::{zero_one_performance, Architecture, ModelParams, Weights};
use streamcert::oracle::gradcheck::random_model;
use streamcert::rng::substream;
use streamcert::smoothing::{Metric, SmoothingSpec};
use streamcert::stream::{LabeledStream, StreamItem, WindowView};
use rand::Rng;

/// Two-class 1-D classifier that looks only at the newest window slot:
/// positive values predict class 1.
fn newest_sign_model(w: usize) -> ModelParams {
    let mut wmat = vec![0.0; 2 * w];
    wmat[w - 1] = -1.0;
    wmat[2 * w - 1] = 1.0;
    ModelParams {
        format_version: 1,
        arch: Architecture::Linear,
        w,
        dim: 1,
        num_classes: 2,
        weights: Weights::Linear {
            wmat,
            bias: vec![0.0, 0.0],
        },
    }
}

/// Two-class 1-D classifier on the window mean (both slots weighted).
fn mean_sign_model() -> ModelParams {
    ModelParams {
        format_version: 1,
        arch: Architecture::Linear,
        w: 2,
        dim: 1,
        num_classes: 2,
        weights: Weights::Linear {
            wmat: vec![-0.5, -0.5, 0.5, 0.5],
            bias: vec![0.0, 0.0],
        },
    }
}

fn stream_1d(values: &[f64]) -> LabeledStream {
    let items = values
        .iter()
        .enumerate()
        .map(|(k, &v)| StreamItem {
            features: vec![v],
            index: k + 1,
        })
        .collect();
    LabeledStream::new(items, vec![1; values.len()], 2).unwrap()
}

fn attacked_performance(model: &ModelParams, perturbed: &[f64], w: usize) -> f64 {
    let t = perturbed.len();
    let mut total = 0.0;
    for j in 1..=t {
        let s = j.min(w);
        let feats: Vec<Vec<f64>> = (j - s..j).map(|k| vec![perturbed[k]]).collect();
        let view = WindowView::from_features(feats, j, w);
        total += zero_one_performance(model, &view, 1).unwrap();
    }
    total / t as f64
}

/// Exhaustive attack oracle: every item may move down by any grid amount;
/// keep the assignment with minimal performance among those within the
/// average budget.
fn brute_force_attacked_z(model: &ModelParams, values: &[f64], w: usize, eps: f64) -> f64 {
    let grid: Vec<f64> = (0..=10).map(|i| i as f64 * 0.1).collect();
    let t = values.len();
    let mut choice = vec![0usize; t];
    let mut best = f64::INFINITY;
    loop {
        let cost: f64 = choice.iter().map(|&c| grid[c]).sum();
        if cost / t as f64 <= eps + 1e-12 {
            let perturbed: Vec<f64> = values
                .iter()
                .zip(&choice)
                .map(|(&v, &c)| v - grid[c])
                .collect();
            best = best.min(attacked_performance(model, &perturbed, w));
        }
        // odometer increment
        let mut pos = 0;
        loop {
            if pos == t {
                return best;
            }
            choice[pos] += 1;
            if choice[pos] < grid.len() {
                break;
            }
            choice[pos] = 0;
            pos += 1;
        }
    }
}

#[test]
fn greedy_once_attack_matches_exhaustive_search_on_toy() {
    let values = [0.5, 0.5, 0.5, 0.5, 0.5];
    let stream = stream_1d(&values);
    let model = newest_sign_model(1);
    for eps in [0.0, 0.12, 0.22, 0.35, 0.6, 1.2] {
        let config = AttackConfig {
            epsilon: eps,
            alpha: 20,
            pgd_steps: 50,
            ..AttackConfig::default()
        };
        let trace =
            greedy_once_attack(&stream, &AttackTarget::Undefended(&model), 1, &config).unwrap();
        let greedy_z = match &trace.perturbations {
            TracePerturbations::Once(items) => {
                let flat: Vec<f64> = items.iter().map(|i| i[0]).collect();
                attacked_performance(&model, &flat, 1)
            }
            _ => unreachable!(),
        };
        let brute_z = brute_force_attacked_z(&model, &values, 1, eps);
        assert!(
            (greedy_z - brute_z).abs() <= 0.02,
            "eps={eps}: greedy {greedy_z} vs brute force {brute_z}"
        );
        assert!(validate_trace_budget(&trace).unwrap().compliant);
    }
}

#[test]
fn per_window_attack_is_at_least_as_strong_as_once_mode() {
    // Window-mean model, w = 2: the once attacker pays once per item but the
    // perturbation is shared across windows; the per-window attacker may
    // re-attack per window with a proportionally larger raw budget.
    let values = [0.4, 0.6, 0.5, 0.7, 0.4, 0.6];
    let stream = stream_1d(&values);
    let model = mean_sign_model();
    for eps in [0.2, 0.4, 0.8] {
        let config = AttackConfig {
            epsilon: eps,
            alpha: 12,
            pgd_steps: 50,
            ..AttackConfig::default()
        };
        let target = AttackTarget::Undefended(&model);
        let once = greedy_once_attack(&stream, &target, 2, &config).unwrap();
        let per = per_window_attack(&stream, &target, 2, &config).unwrap();
        let z_once: f64 =
            once.outcomes.iter().map(|o| o.f_after).sum::<f64>() / values.len() as f64;
        let z_per: f64 =
            per.outcomes.iter().map(|o| o.f_after).sum::<f64>() / values.len() as f64;
        assert!(
            z_per <= z_once + 1e-9,
            "eps={eps}: per-window {z_per} vs once {z_once}"
        );
        assert!(validate_trace_budget(&once).unwrap().compliant);
        assert!(validate_trace_budget(&per).unwrap().compliant);
    }
}

#[test]
fn every_trace_from_random_configs_passes_the_audit() {
    for case in 0..50u64 {
        let mut rng = substream(4242, &[case]);
        let t = rng.random_range(6..=12usize);
        let dim = rng.random_range(1..=3usize);
        let w = rng.random_range(1..=3usize);
        let values: Vec<Vec<f64>> = (0..t)
            .map(|_| (0..dim).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect())
            .collect();
        let labels: Vec<usize> = (0..t).map(|_| rng.random_range(0..2)).collect();
        let items = values
            .into_iter()
            .enumerate()
            .map(|(k, f)| StreamItem {
                features: f,
                index: k + 1,
            })
            .collect();
        let stream = LabeledStream::new(items, labels, 2).unwrap();
        let arch = if case % 3 == 0 {
            Architecture::Mlp1 { hidden: 4 }
        } else {
            Architecture::Linear
        };
        let model = random_model(arch, w, dim, 2, 1000 + case).unwrap();
        let eps = rng.random::<f64>() * 1.2;
        let config = AttackConfig {
            epsilon: eps,
            alpha: rng.random_range(1..=6),
            pgd_steps: 10,
            smoothed_noise_draws: 3,
            seed: case,
            ..AttackConfig::default()
        };
        let mode = if case % 2 == 0 {
            AttackMode::OncePerItem
        } else {
            AttackMode::PerWindow
        };
        let spec = SmoothingSpec::gaussian_iso(0.4).unwrap();
        let target = if case % 5 == 0 {
            AttackTarget::Smoothed {
                model: &model,
                spec: &spec,
            }
        } else {
            AttackTarget::Undefended(&model)
        };
        let trace = run_attack(&stream, &target, w, mode, &config).unwrap();
        assert_eq!(trace.metric, Metric::L2);
        let audit = validate_trace_budget(&trace).unwrap();
        assert!(
            audit.compliant,
            "case {case}: average {} over eps {eps}",
            audit.average
        );
        assert!(
            audit.worst_prefix_average <= eps + 1e-9,
            "case {case}: worst prefix {} over eps {eps}",
            audit.worst_prefix_average
        );
    }
}
