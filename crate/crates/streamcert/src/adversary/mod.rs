//! Budget-constrained streaming attackers.
//!
//! Both attackers walk the stream once and greedily spend an average
//! perturbation budget. At each step the remaining budget is split into an
//! ascending grid of candidate radii; a PGD candidate is accepted at the
//! smallest radius whose window the target misclassifies, otherwise the step
//! is left unperturbed. The two attackers differ in what they may touch:
//!
//! * once-per-item: only the newest item is perturbed and the perturbation
//!   persists into later windows (earlier items are frozen);
//! * per-window: every slot of the current window is re-attacked from the
//!   clean items, with the budget normalized per (item, window) pair.
//!
//! Every trace carries a ledger and enough raw data for an independent
//! audit: [`validate_trace_budget`] recomputes all distances from the raw
//! streams and checks the average-budget constraint at every prefix.

pub mod pgd;

pub use crate::certificate::AttackMode;
pub use pgd::pgd_l2;

use crate::error::{Error, Result};
use crate::model::{cross_entropy, forward, input_gradient, zero_one_performance, ModelParams};
use crate::rng::{substream, tag};
use crate::smoothing::{sample_noise, Metric, SmoothingSpec};
use crate::stream::{window_label, LabeledStream, WindowView};
use serde::{Deserialize, Serialize};
use std::path::Path;

const BUDGET_SLACK: f64 = 1e-9;

/// Attack hyperparameters. The grid index runs `0..=alpha` so that zero
/// perturbation and the full remaining budget are always candidates; the PGD
/// step size is `pgd_step_factor * radius / pgd_steps`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    pub epsilon: f64,
    pub alpha: usize,
    pub pgd_steps: usize,
    pub pgd_step_factor: f64,
    /// Noise draws the attacker averages over when the target is smoothed.
    pub smoothed_noise_draws: usize,
    pub metric: Metric,
    pub seed: u64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig {
            epsilon: 0.0,
            alpha: 15,
            pgd_steps: 100,
            pgd_step_factor: 2.0,
            smoothed_noise_draws: 8,
            metric: Metric::L2,
            seed: 0,
        }
    }
}

impl AttackConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::domain(format!("epsilon must be >= 0, got {}", self.epsilon)));
        }
        if self.alpha == 0 || self.pgd_steps == 0 || self.smoothed_noise_draws == 0 {
            return Err(Error::domain(
                "alpha, pgd_steps and smoothed_noise_draws must be at least 1",
            ));
        }
        if !(self.pgd_step_factor > 0.0) {
            return Err(Error::domain("pgd_step_factor must be positive"));
        }
        Ok(())
    }
}

/// The model as deployed: raw, or wrapped in input smoothing. Against a
/// smoothed target the attacker optimizes the loss averaged over a fixed set
/// of noise draws per step, and calls a window misclassified when the
/// 0/1 performance over those draws falls below one half.
#[derive(Debug, Clone, Copy)]
pub enum AttackTarget<'a> {
    Undefended(&'a ModelParams),
    Smoothed {
        model: &'a ModelParams,
        spec: &'a SmoothingSpec,
    },
}

impl<'a> AttackTarget<'a> {
    pub fn model(&self) -> &'a ModelParams {
        match self {
            AttackTarget::Undefended(m) => m,
            AttackTarget::Smoothed { model, .. } => model,
        }
    }

    /// Fixed noise vectors for the step: `[draw][slot][coord]`, addressed by
    /// the item's stream index so the same item sees the same noise in both
    /// attack modes.
    fn step_noise(
        &self,
        seed: u64,
        step: usize,
        item_indices: &[usize],
        draws: usize,
    ) -> Result<Option<Vec<Vec<Vec<f64>>>>> {
        match self {
            AttackTarget::Undefended(_) => Ok(None),
            AttackTarget::Smoothed { spec, model } => {
                let zero = vec![0.0; model.dim];
                let mut all = Vec::with_capacity(draws);
                for draw in 0..draws {
                    let mut per_slot = Vec::with_capacity(item_indices.len());
                    for &idx in item_indices {
                        let mut rng = substream(
                            seed,
                            &[tag::ATTACK_NOISE, step as u64, draw as u64, idx as u64],
                        );
                        per_slot.push(sample_noise(spec, &zero, &mut rng)?);
                    }
                    all.push(per_slot);
                }
                Ok(Some(all))
            }
        }
    }
}

fn noised(feats: &[Vec<f64>], noise: &[Vec<f64>]) -> Vec<Vec<f64>> {
    feats
        .iter()
        .zip(noise)
        .map(|(f, n)| f.iter().zip(n).map(|(a, b)| a + b).collect())
        .collect()
}

/// Performance of the target on a window: 0/1 for the undefended model, the
/// mean 0/1 over the fixed draws for a smoothed target.
fn target_performance(
    target: &AttackTarget,
    feats: &[Vec<f64>],
    step: usize,
    w: usize,
    label: usize,
    noise: &Option<Vec<Vec<Vec<f64>>>>,
) -> f64 {
    let model = target.model();
    match noise {
        None => {
            let view = WindowView::from_features(feats.to_vec(), step, w);
            zero_one_performance(model, &view, label).expect("window shape checked upfront")
        }
        Some(draws) => {
            let total: f64 = draws
                .iter()
                .map(|n| {
                    let view = WindowView::from_features(noised(feats, n), step, w);
                    zero_one_performance(model, &view, label).expect("window shape checked upfront")
                })
                .sum();
            total / draws.len() as f64
        }
    }
}

/// PGD objective: the negated cross-entropy of the true label (averaged over
/// the fixed draws for smoothed targets), so minimizing drives
/// misclassification.
fn attack_objective(
    target: &AttackTarget,
    feats: &[Vec<f64>],
    step: usize,
    w: usize,
    label: usize,
    noise: &Option<Vec<Vec<Vec<f64>>>>,
) -> (f64, Vec<Vec<f64>>) {
    let model = target.model();
    let eval = |window_feats: Vec<Vec<f64>>| {
        let view = WindowView::from_features(window_feats, step, w);
        let scores = forward(model, &view).expect("window shape checked upfront");
        let value = cross_entropy(&scores, label);
        let grad = input_gradient(model, &view, label).expect("window shape checked upfront");
        (value, grad)
    };
    match noise {
        None => {
            let (ce, grad) = eval(feats.to_vec());
            (-ce, grad.into_iter().map(|g| g.iter().map(|v| -v).collect()).collect())
        }
        Some(draws) => {
            let mut value = 0.0;
            let mut acc: Vec<Vec<f64>> = feats.iter().map(|f| vec![0.0; f.len()]).collect();
            for n in draws {
                let (ce, grad) = eval(noised(feats, n));
                value += ce;
                for (a, g) in acc.iter_mut().zip(grad) {
                    for (av, gv) in a.iter_mut().zip(g) {
                        *av += gv;
                    }
                }
            }
            let scale = -1.0 / draws.len() as f64;
            (
                -value / draws.len() as f64,
                acc.into_iter()
                    .map(|a| a.into_iter().map(|v| v * scale).collect())
                    .collect(),
            )
        }
    }
}

/// Running account of perturbation distances under one threat model.
///
/// For the once model every step records a single distance; for the
/// per-window model a step records one distance per window slot. Averages
/// use the threat model's own normalization (`t` or `w * t`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetLedger {
    mode: AttackMode,
    w: usize,
    records: Vec<Vec<f64>>,
}

impl BudgetLedger {
    pub fn new(mode: AttackMode, w: usize) -> Self {
        BudgetLedger {
            mode,
            w,
            records: Vec::new(),
        }
    }

    pub fn record_step(&mut self, distances: Vec<f64>) {
        debug_assert!(distances.iter().all(|&d| d >= 0.0));
        self.records.push(distances);
    }

    pub fn mode(&self) -> AttackMode {
        self.mode
    }

    pub fn steps_seen(&self) -> usize {
        self.records.len()
    }

    pub fn step_distances(&self) -> &[Vec<f64>] {
        &self.records
    }

    fn normalizer(&self, steps: usize) -> f64 {
        match self.mode {
            AttackMode::OncePerItem => steps as f64,
            AttackMode::PerWindow => (self.w * steps) as f64,
        }
    }

    pub fn total(&self) -> f64 {
        self.records.iter().flatten().sum()
    }

    /// Average after the first `steps` steps.
    pub fn prefix_average(&self, steps: usize) -> f64 {
        if steps == 0 {
            return 0.0;
        }
        let total: f64 = self.records[..steps].iter().flatten().sum();
        total / self.normalizer(steps)
    }

    pub fn average(&self) -> f64 {
        self.prefix_average(self.steps_seen())
    }

    pub fn worst_prefix_average(&self) -> f64 {
        (1..=self.steps_seen())
            .map(|j| self.prefix_average(j))
            .fold(0.0, f64::max)
    }
}

/// Per-step target performance before and after the step's perturbation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub f_before: f64,
    pub f_after: f64,
}

/// The perturbations of a trace, matching its threat model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TracePerturbations {
    /// The perturbed stream, one item per step.
    Once(Vec<Vec<f64>>),
    /// For each step, the attacked window contents (oldest first).
    PerWindow(Vec<Vec<Vec<f64>>>),
}

/// A replayable record of one attack run.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackTrace {
    pub mode: AttackMode,
    pub epsilon: f64,
    pub w: usize,
    pub metric: Metric,
    pub seed: u64,
    /// Noise draws the attacker averaged over (smoothed targets).
    pub noise_draws: usize,
    pub clean: LabeledStream,
    pub perturbations: TracePerturbations,
    pub ledger: BudgetLedger,
    pub outcomes: Vec<StepOutcome>,
}

impl AttackTrace {
    /// Feature vectors of the attacked window ending at step `i`.
    pub fn window_features(&self, i: usize) -> Vec<Vec<f64>> {
        let s = i.min(self.w);
        match &self.perturbations {
            TracePerturbations::Once(items) => items[i - s..i].to_vec(),
            TracePerturbations::PerWindow(windows) => windows[i - 1].clone(),
        }
    }

    /// Stream indices of the items in the window ending at step `i`.
    pub fn window_item_indices(&self, i: usize) -> Vec<usize> {
        let s = i.min(self.w);
        (i - s + 1..=i).collect()
    }

    /// The attacked stream as arrived (each item's first-seen version): the
    /// perturbed items for once mode, the newest window slot per step for
    /// per-window mode.
    pub fn as_arrived_stream(&self) -> Result<LabeledStream> {
        let features: Vec<Vec<f64>> = match &self.perturbations {
            TracePerturbations::Once(items) => items.clone(),
            TracePerturbations::PerWindow(windows) => windows
                .iter()
                .map(|win| win.last().expect("nonempty window").clone())
                .collect(),
        };
        let items = features
            .into_iter()
            .enumerate()
            .map(|(k, f)| crate::stream::StreamItem {
                features: f,
                index: k + 1,
            })
            .collect();
        LabeledStream::new(items, self.clean.labels().to_vec(), self.clean.num_classes())
    }

    /// Writes the perturbed stream CSV and a JSON sidecar holding the mode,
    /// budget, seed, per-step distances, outcomes and (for per-window mode)
    /// the full per-window perturbations.
    pub fn write_files(&self, csv_path: impl AsRef<Path>, meta_path: impl AsRef<Path>) -> Result<()> {
        crate::stream::emit_csv_stream_to_path(&self.as_arrived_stream()?, csv_path)?;
        let sidecar = TraceSidecar {
            mode: self.mode,
            epsilon: self.epsilon,
            w: self.w,
            metric: self.metric,
            seed: self.seed,
            step_distances: self.ledger.step_distances().to_vec(),
            outcomes: self.outcomes.clone(),
            per_window: match &self.perturbations {
                TracePerturbations::Once(_) => None,
                TracePerturbations::PerWindow(windows) => Some(windows.clone()),
            },
        };
        let text = serde_json::to_string_pretty(&sidecar)
            .map_err(|e| Error::Validation(format!("serializing trace sidecar: {e}")))?;
        std::fs::write(meta_path.as_ref(), text)?;
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct TraceSidecar {
    mode: AttackMode,
    epsilon: f64,
    w: usize,
    metric: Metric,
    seed: u64,
    step_distances: Vec<Vec<f64>>,
    outcomes: Vec<StepOutcome>,
    per_window: Option<Vec<Vec<Vec<f64>>>>,
}

fn check_shapes(stream: &LabeledStream, target: &AttackTarget, w: usize) -> Result<()> {
    let model = target.model();
    if model.w != w {
        return Err(Error::domain(format!(
            "model expects window {}, attack uses {w}",
            model.w
        )));
    }
    if model.dim != stream.dim() || model.num_classes < stream.num_classes() {
        return Err(Error::domain(
            "model dimensions do not match the stream".to_string(),
        ));
    }
    Ok(())
}

/// The attack-once adversary: at each step the remaining average budget is
/// gridded, PGD perturbs only the newest item (earlier perturbations are
/// frozen), and the smallest radius that misclassifies is kept. Steps whose
/// window already misclassifies are covered by the zero-radius candidate, so
/// they conserve budget.
pub fn greedy_once_attack(
    stream: &LabeledStream,
    target: &AttackTarget,
    w: usize,
    config: &AttackConfig,
) -> Result<AttackTrace> {
    config.validate()?;
    check_shapes(stream, target, w)?;
    let t = stream.len();
    let draws = config.smoothed_noise_draws;
    let mut perturbed: Vec<Vec<f64>> = stream.items().iter().map(|it| it.features.clone()).collect();
    let mut ledger = BudgetLedger::new(AttackMode::OncePerItem, w);
    let mut outcomes = Vec::with_capacity(t);
    let mut used = 0.0;

    for j in 1..=t {
        let s = j.min(w);
        let label = window_label(stream, j, w)?;
        let item_indices: Vec<usize> = (j - s + 1..=j).collect();
        let noise = target.step_noise(config.seed, j, &item_indices, draws)?;

        // Frozen perturbed prefix, clean newest item.
        let feats: Vec<Vec<f64>> = item_indices
            .iter()
            .map(|&idx| {
                if idx == j {
                    stream.features_at(j).to_vec()
                } else {
                    perturbed[idx - 1].clone()
                }
            })
            .collect();
        let f_before = target_performance(target, &feats, j, w, label, &noise);

        let budget = (j as f64 * config.epsilon - used).max(0.0);
        let mut accepted: Option<(Vec<f64>, f64, f64)> = None;
        for i in 0..=config.alpha {
            let radius = budget * i as f64 / config.alpha as f64;
            let candidate = if radius == 0.0 {
                feats.clone()
            } else {
                pgd_l2(
                    &feats,
                    &[s - 1],
                    radius,
                    config.pgd_steps,
                    config.pgd_step_factor,
                    |window| attack_objective(target, window, j, w, label, &noise),
                )?
            };
            let perf = target_performance(target, &candidate, j, w, label, &noise);
            if perf < 0.5 {
                let d = config.metric.distance(stream.features_at(j), &candidate[s - 1]);
                if used + d <= j as f64 * config.epsilon + BUDGET_SLACK {
                    accepted = Some((candidate[s - 1].clone(), d, perf));
                    break;
                }
            }
            if budget == 0.0 {
                break;
            }
        }

        let (distance, f_after) = match accepted {
            Some((item, d, perf)) => {
                perturbed[j - 1] = item;
                used += d;
                (d, perf)
            }
            None => (0.0, f_before),
        };
        ledger.record_step(vec![distance]);
        outcomes.push(StepOutcome { f_before, f_after });
    }

    Ok(AttackTrace {
        mode: AttackMode::OncePerItem,
        epsilon: config.epsilon,
        w,
        metric: config.metric,
        seed: config.seed,
        noise_draws: config.smoothed_noise_draws,
        clean: stream.clone(),
        perturbations: TracePerturbations::Once(perturbed),
        ledger,
        outcomes,
    })
}

/// The per-window adversary: every slot of the current window is re-attacked
/// jointly from the clean items, with the budget normalized per (item, slot)
/// pair. A window that cannot be pushed to misclassification within the
/// remaining budget is left clean.
pub fn per_window_attack(
    stream: &LabeledStream,
    target: &AttackTarget,
    w: usize,
    config: &AttackConfig,
) -> Result<AttackTrace> {
    config.validate()?;
    check_shapes(stream, target, w)?;
    let t = stream.len();
    let draws = config.smoothed_noise_draws;
    let mut windows: Vec<Vec<Vec<f64>>> = Vec::with_capacity(t);
    let mut ledger = BudgetLedger::new(AttackMode::PerWindow, w);
    let mut outcomes = Vec::with_capacity(t);
    let mut used = 0.0;

    for j in 1..=t {
        let s = j.min(w);
        let label = window_label(stream, j, w)?;
        let item_indices: Vec<usize> = (j - s + 1..=j).collect();
        let noise = target.step_noise(config.seed, j, &item_indices, draws)?;

        let clean_feats: Vec<Vec<f64>> = item_indices
            .iter()
            .map(|&idx| stream.features_at(idx).to_vec())
            .collect();
        let f_before = target_performance(target, &clean_feats, j, w, label, &noise);

        let cap = w as f64 * j as f64 * config.epsilon;
        let budget = (cap - used).max(0.0);
        let mutable: Vec<usize> = (0..s).collect();
        let mut accepted: Option<(Vec<Vec<f64>>, Vec<f64>, f64)> = None;
        for i in 0..=config.alpha {
            let radius = budget * i as f64 / config.alpha as f64;
            let candidate = if radius == 0.0 {
                clean_feats.clone()
            } else {
                pgd_l2(
                    &clean_feats,
                    &mutable,
                    radius,
                    config.pgd_steps,
                    config.pgd_step_factor,
                    |window| attack_objective(target, window, j, w, label, &noise),
                )?
            };
            let perf = target_performance(target, &candidate, j, w, label, &noise);
            if perf < 0.5 {
                let slot_distances: Vec<f64> = clean_feats
                    .iter()
                    .zip(&candidate)
                    .map(|(a, b)| config.metric.distance(a, b))
                    .collect();
                let sum: f64 = slot_distances.iter().sum();
                if used + sum <= cap + BUDGET_SLACK {
                    accepted = Some((candidate, slot_distances, perf));
                    break;
                }
            }
            if budget == 0.0 {
                break;
            }
        }

        let (window, distances, f_after) = match accepted {
            Some((window, distances, perf)) => {
                used += distances.iter().sum::<f64>();
                (window, distances, perf)
            }
            None => (clean_feats, vec![0.0; s], f_before),
        };
        windows.push(window);
        ledger.record_step(distances);
        outcomes.push(StepOutcome { f_before, f_after });
    }

    Ok(AttackTrace {
        mode: AttackMode::PerWindow,
        epsilon: config.epsilon,
        w,
        metric: config.metric,
        seed: config.seed,
        noise_draws: config.smoothed_noise_draws,
        clean: stream.clone(),
        perturbations: TracePerturbations::PerWindow(windows),
        ledger,
        outcomes,
    })
}

/// Dispatches to the attacker for `mode`.
pub fn run_attack(
    stream: &LabeledStream,
    target: &AttackTarget,
    w: usize,
    mode: AttackMode,
    config: &AttackConfig,
) -> Result<AttackTrace> {
    match mode {
        AttackMode::OncePerItem => greedy_once_attack(stream, target, w, config),
        AttackMode::PerWindow => per_window_attack(stream, target, w, config),
    }
}

/// Independent budget audit of a trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetAudit {
    /// Final average within `epsilon + 1e-9`.
    pub compliant: bool,
    pub average: f64,
    pub worst_prefix_average: f64,
}

/// Recomputes every distance from the raw streams — never trusting the
/// trace's own ledger — and checks the average-budget constraint.
pub fn validate_trace_budget(trace: &AttackTrace) -> Result<BudgetAudit> {
    let t = trace.clean.len();
    let groups: Vec<Vec<f64>> = match &trace.perturbations {
        TracePerturbations::Once(items) => {
            if items.len() != t {
                return Err(Error::Validation(format!(
                    "trace has {} items for a stream of length {t}",
                    items.len()
                )));
            }
            (1..=t)
                .map(|i| {
                    let d = trace.metric.distance(trace.clean.features_at(i), &items[i - 1]);
                    vec![d]
                })
                .collect()
        }
        TracePerturbations::PerWindow(windows) => {
            if windows.len() != t {
                return Err(Error::Validation(format!(
                    "trace has {} windows for a stream of length {t}",
                    windows.len()
                )));
            }
            (1..=t)
                .map(|j| {
                    let s = j.min(trace.w);
                    let window = &windows[j - 1];
                    if window.len() != s {
                        return Err(Error::Validation(format!(
                            "window at step {j} has {} slots, expected {s}",
                            window.len()
                        )));
                    }
                    Ok((j - s + 1..=j)
                        .zip(window)
                        .map(|(idx, slot)| trace.metric.distance(trace.clean.features_at(idx), slot))
                        .collect())
                })
                .collect::<Result<_>>()?
        }
    };

    let per_step_norm = match trace.mode {
        AttackMode::OncePerItem => 1.0,
        AttackMode::PerWindow => trace.w as f64,
    };
    let mut running = 0.0;
    let mut worst_prefix: f64 = 0.0;
    let mut average = 0.0;
    for (j, group) in groups.iter().enumerate() {
        running += group.iter().sum::<f64>();
        average = running / (per_step_norm * (j + 1) as f64);
        worst_prefix = worst_prefix.max(average);
    }
    Ok(BudgetAudit {
        compliant: average <= trace.epsilon + BUDGET_SLACK,
        average,
        worst_prefix_average: worst_prefix,
    })
}

/// Re-evaluates the recorded windows against the target, reproducing the
/// per-step `f_after` outcomes (same model, same noise substreams).
pub fn replay_outcomes(trace: &AttackTrace, target: &AttackTarget) -> Result<Vec<f64>> {
    check_shapes(&trace.clean, target, trace.w)?;
    let mut replayed = Vec::with_capacity(trace.clean.len());
    for j in 1..=trace.clean.len() {
        let label = window_label(&trace.clean, j, trace.w)?;
        let indices = trace.window_item_indices(j);
        let noise = target.step_noise(trace.seed, j, &indices, trace.noise_draws)?;
        let feats = trace.window_features(j);
        replayed.push(target_performance(target, &feats, j, trace.w, label, &noise));
    }
    Ok(replayed)
}
