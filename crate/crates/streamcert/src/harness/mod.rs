//! Experiment orchestration: smoothed Monte Carlo evaluation, certificate
//! sweeps, attack runs and result emission.
//!
//! A run is fully described by an [`ExperimentConfig`]; identical configs
//! (including the seed) produce bit-identical results. All randomness flows
//! through named substreams, so estimates are independent of evaluation
//! order and the clean and attacked evaluations share noise where that makes
//! them exactly comparable (at `eps = 0` the attacked rows equal the clean
//! ones).

use crate::adversary::{
    run_attack, validate_trace_budget, AttackConfig, AttackTarget, AttackTrace,
};
use crate::certificate::{certified_lower_bound, AttackMode};
use crate::error::{Error, Result};
use crate::model::{
    stream_performance, train_sgd, zero_one_performance, Architecture, ModelParams, TrainConfig,
};
use crate::rng::{substream, substream_seed, tag};
use crate::smoothing::{sample_noise, SmoothingSpec};
use crate::stream::{
    generate_synthetic_stream, load_csv_stream, window_label, GeneratorConfig, LabeledStream,
    WindowView,
};
use crate::vecops;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

/// Where the evaluation stream comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamSource {
    Csv {
        path: PathBuf,
        dim: usize,
        num_classes: Option<usize>,
    },
    Synthetic(GeneratorConfig),
}

/// Where the model comes from: trained inside the run or loaded from disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelSource {
    Train(TrainSettings),
    Load { path: PathBuf },
}

/// Training settings for models trained inside a run. Synthetic sources
/// train on a fresh stream drawn from the same generator (substream-seeded,
/// `train_len` steps); CSV sources train on the loaded stream itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSettings {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub noise_sigma: Option<f64>,
    pub train_len: Option<usize>,
}

impl Default for TrainSettings {
    fn default() -> Self {
        TrainSettings {
            epochs: 30,
            batch_size: 32,
            learning_rate: 0.05,
            momentum: 0.9,
            weight_decay: 1e-4,
            noise_sigma: None,
            train_len: None,
        }
    }
}

/// Grid-search and PGD settings shared by every eps point of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackSettings {
    pub alpha: usize,
    pub pgd_steps: usize,
    pub pgd_step_factor: f64,
    pub smoothed_noise_draws: usize,
}

impl Default for AttackSettings {
    fn default() -> Self {
        AttackSettings {
            alpha: 15,
            pgd_steps: 100,
            pgd_step_factor: 2.0,
            smoothed_noise_draws: 8,
        }
    }
}

/// How evaluation noise is shared between overlapping windows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseReuse {
    /// One draw per stream item per repetition, reused across the windows
    /// containing it (matches deployment: each arriving item is noised once).
    PerItemOnce,
    /// Independent noise per (window, slot) per repetition.
    FreshPerWindow,
}

/// Everything that defines a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub stream: StreamSource,
    pub window: usize,
    pub spec: SmoothingSpec,
    pub eps_grid: Vec<f64>,
    pub attack_mode: AttackMode,
    pub attack: AttackSettings,
    pub mc_reps: usize,
    pub reuse: NoiseReuse,
    pub arch: Architecture,
    pub model: ModelSource,
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 {
            return Err(Error::domain("window size must be at least 1"));
        }
        if self.mc_reps == 0 {
            return Err(Error::domain("mc_reps must be at least 1"));
        }
        if self.eps_grid.is_empty() {
            return Err(Error::domain("eps grid must be nonempty"));
        }
        let mut prev = -1.0;
        for &eps in &self.eps_grid {
            if !(eps >= 0.0 && eps.is_finite()) || eps < prev {
                return Err(Error::domain(
                    "eps grid must be nonnegative and ascending".to_string(),
                ));
            }
            prev = eps;
        }
        if self.attack.alpha == 0
            || self.attack.pgd_steps == 0
            || self.attack.smoothed_noise_draws == 0
            || !(self.attack.pgd_step_factor > 0.0)
        {
            return Err(Error::domain("invalid attack settings"));
        }
        Ok(())
    }

    /// SHA-256 over the canonical JSON serialization.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// A smoothed-performance estimate with its Monte Carlo standard error.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedEstimate {
    pub z_tilde: f64,
    pub stderr: f64,
    pub per_step: Vec<f64>,
}

fn evaluate_windows(
    t: usize,
    w: usize,
    model: &ModelParams,
    spec: &SmoothingSpec,
    mc_reps: usize,
    reuse: NoiseReuse,
    seed: u64,
    feats_of: &dyn Fn(usize) -> Vec<Vec<f64>>,
    label_of: &dyn Fn(usize) -> usize,
) -> Result<SmoothedEstimate> {
    if mc_reps == 0 {
        return Err(Error::domain("mc_reps must be at least 1"));
    }
    let mut z_samples = Vec::with_capacity(mc_reps);
    let mut per_step = vec![0.0; t];
    for rep in 0..mc_reps {
        // Per-item noise is drawn once per repetition and indexed by the
        // item's stream position, so overlapping windows share it.
        let item_noise: Option<Vec<Vec<f64>>> = match reuse {
            NoiseReuse::PerItemOnce => Some(
                (1..=t)
                    .map(|idx| {
                        let zero = vec![0.0; model.dim];
                        let mut rng =
                            substream(seed, &[tag::EVAL_NOISE, 1, rep as u64, idx as u64]);
                        sample_noise(spec, &zero, &mut rng)
                    })
                    .collect::<Result<_>>()?,
            ),
            NoiseReuse::FreshPerWindow => None,
        };
        let mut total = 0.0;
        for j in 1..=t {
            let s = j.min(w);
            let feats = feats_of(j);
            let noised: Vec<Vec<f64>> = feats
                .iter()
                .enumerate()
                .map(|(pos, f)| {
                    let noise = match (&item_noise, reuse) {
                        (Some(per_item), NoiseReuse::PerItemOnce) => {
                            per_item[j - s + pos].clone()
                        }
                        _ => {
                            let zero = vec![0.0; model.dim];
                            let mut rng = substream(
                                seed,
                                &[tag::EVAL_NOISE, 2, rep as u64, j as u64, pos as u64],
                            );
                            sample_noise(spec, &zero, &mut rng)
                                .expect("spec sampling checked upfront")
                        }
                    };
                    f.iter().zip(&noise).map(|(a, b)| a + b).collect()
                })
                .collect();
            let view = WindowView::from_features(noised, j, w);
            let perf = zero_one_performance(model, &view, label_of(j))?;
            per_step[j - 1] += perf;
            total += perf;
        }
        z_samples.push(total / t as f64);
    }
    for p in &mut per_step {
        *p /= mc_reps as f64;
    }
    let (z_tilde, stderr) = vecops::mean_stderr(&z_samples);
    Ok(SmoothedEstimate {
        z_tilde,
        stderr,
        per_step,
    })
}

/// Monte Carlo estimate of the smoothed performance of a clean stream.
pub fn evaluate_smoothed_stream(
    stream: &LabeledStream,
    model: &ModelParams,
    w: usize,
    spec: &SmoothingSpec,
    mc_reps: usize,
    reuse: NoiseReuse,
    seed: u64,
) -> Result<SmoothedEstimate> {
    let feats_of = |j: usize| {
        let s = j.min(w);
        (j - s + 1..=j)
            .map(|idx| stream.features_at(idx).to_vec())
            .collect::<Vec<_>>()
    };
    let label_of = |j: usize| window_label(stream, j, w).expect("step in range");
    evaluate_windows(
        stream.len(),
        w,
        model,
        spec,
        mc_reps,
        reuse,
        seed,
        &feats_of,
        &label_of,
    )
}

/// Monte Carlo estimate of the smoothed performance under an attack trace.
/// Ground-truth labels always come from the clean stream.
pub fn evaluate_smoothed_trace(
    trace: &AttackTrace,
    model: &ModelParams,
    spec: &SmoothingSpec,
    mc_reps: usize,
    reuse: NoiseReuse,
    seed: u64,
) -> Result<SmoothedEstimate> {
    let feats_of = |j: usize| trace.window_features(j);
    let label_of = |j: usize| window_label(&trace.clean, j, trace.w).expect("step in range");
    evaluate_windows(
        trace.clean.len(),
        trace.w,
        model,
        spec,
        mc_reps,
        reuse,
        seed,
        &feats_of,
        &label_of,
    )
}

/// Deterministic (unsmoothed) performance over a trace's windows.
pub fn deterministic_trace_performance(trace: &AttackTrace, model: &ModelParams) -> Result<f64> {
    let t = trace.clean.len();
    let mut total = 0.0;
    for j in 1..=t {
        let view = WindowView::from_features(trace.window_features(j), j, trace.w);
        let label = window_label(&trace.clean, j, trace.w)?;
        total += zero_one_performance(model, &view, label)?;
    }
    Ok(total / t as f64)
}

/// One row of the result table (the stable 8-column CSV schema).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub eps: f64,
    pub clean_z: f64,
    pub clean_z_tilde: f64,
    pub clean_z_tilde_stderr: f64,
    pub certified_lower: f64,
    pub attacked_z: Option<f64>,
    pub attacked_z_tilde: Option<f64>,
    pub attacked_z_tilde_stderr: Option<f64>,
}

/// Which deployment a trace attacked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    Undefended,
    Smoothed,
}

impl std::fmt::Display for TargetKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TargetKind::Undefended => write!(f, "undefended"),
            TargetKind::Smoothed => write!(f, "smoothed"),
        }
    }
}

/// Audited ledger numbers for one emitted trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetAuditRecord {
    pub eps: f64,
    pub mode: AttackMode,
    pub target: TargetKind,
    pub average: f64,
    pub worst_prefix_average: f64,
    pub compliant: bool,
}

/// Complete result of a run, with provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub rows: Vec<RunRow>,
    pub audits: Vec<BudgetAuditRecord>,
    pub config_hash: String,
    pub seed: u64,
}

/// A run result together with the raw traces behind its attacked columns.
#[derive(Debug, Clone)]
pub struct AttackRun {
    pub result: RunResult,
    pub traces: Vec<(f64, TargetKind, AttackTrace)>,
}

/// Loads or generates the evaluation stream.
pub fn prepare_stream(config: &ExperimentConfig) -> Result<LabeledStream> {
    match &config.stream {
        StreamSource::Csv {
            path,
            dim,
            num_classes,
        } => load_csv_stream(path, *dim, *num_classes),
        StreamSource::Synthetic(gen) => generate_synthetic_stream(gen),
    }
}

/// Loads or trains the model for a run.
pub fn prepare_model(config: &ExperimentConfig, eval_stream: &LabeledStream) -> Result<ModelParams> {
    match &config.model {
        ModelSource::Load { path } => {
            let model = ModelParams::load(path)?;
            if model.w != config.window || model.dim != eval_stream.dim() {
                return Err(Error::Validation(format!(
                    "loaded model (w={}, dim={}) does not fit the run (w={}, dim={})",
                    model.w,
                    model.dim,
                    config.window,
                    eval_stream.dim()
                )));
            }
            Ok(model)
        }
        ModelSource::Train(settings) => {
            let train_stream = match &config.stream {
                StreamSource::Synthetic(gen) => {
                    let train_gen = GeneratorConfig {
                        seed: substream_seed(config.seed, &[tag::TRAIN_STREAM]),
                        len: settings.train_len.unwrap_or(gen.len),
                        ..gen.clone()
                    };
                    generate_synthetic_stream(&train_gen)?
                }
                StreamSource::Csv { .. } => eval_stream.clone(),
            };
            let tc = TrainConfig {
                epochs: settings.epochs,
                batch_size: settings.batch_size,
                learning_rate: settings.learning_rate,
                momentum: settings.momentum,
                weight_decay: settings.weight_decay,
                noise_sigma: settings.noise_sigma,
                seed: substream_seed(config.seed, &[tag::TRAIN_SEED]),
            };
            train_sgd(&train_stream, config.window, config.arch, &tc)
        }
    }
}

fn attack_config_for(config: &ExperimentConfig, eps: f64) -> AttackConfig {
    AttackConfig {
        epsilon: eps,
        alpha: config.attack.alpha,
        pgd_steps: config.attack.pgd_steps,
        pgd_step_factor: config.attack.pgd_step_factor,
        smoothed_noise_draws: config.attack.smoothed_noise_draws,
        metric: config.spec.metric(),
        seed: substream_seed(config.seed, &[tag::ATTACK_SEED]),
    }
}

fn certify_rows(
    config: &ExperimentConfig,
    stream: &LabeledStream,
    model: &ModelParams,
) -> Result<(Vec<RunRow>, SmoothedEstimate)> {
    let clean_z = stream_performance(model, stream, config.window)?;
    let estimate = evaluate_smoothed_stream(
        stream,
        model,
        config.window,
        &config.spec,
        config.mc_reps,
        config.reuse,
        config.seed,
    )?;
    let rows = config
        .eps_grid
        .iter()
        .map(|&eps| {
            let report = certified_lower_bound(
                estimate.z_tilde,
                estimate.stderr,
                config.window,
                &config.spec,
                eps,
                config.attack_mode,
            )?;
            Ok(RunRow {
                eps,
                clean_z,
                clean_z_tilde: estimate.z_tilde,
                clean_z_tilde_stderr: estimate.stderr,
                certified_lower: report.certified_lower,
                attacked_z: None,
                attacked_z_tilde: None,
                attacked_z_tilde_stderr: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((rows, estimate))
}

/// Certificate sweep over the eps grid: clean performance, smoothed estimate
/// and certified lower bound per eps. Attack columns are left empty.
pub fn run_certify_experiment(config: &ExperimentConfig) -> Result<RunResult> {
    config.validate()?;
    let stream = prepare_stream(config)?;
    let model = prepare_model(config, &stream)?;
    let (rows, _) = certify_rows(config, &stream, &model)?;
    Ok(RunResult {
        rows,
        audits: Vec::new(),
        config_hash: config.hash(),
        seed: config.seed,
    })
}

/// Full sweep: certificates plus attacks on the undefended and smoothed
/// deployments at every eps, with independently audited traces.
pub fn run_attack_experiment_full(config: &ExperimentConfig) -> Result<AttackRun> {
    run_attack_experiment_observed(config, |_| {})
}

/// As [`run_attack_experiment_full`], invoking `on_row` as each eps row
/// completes so callers can flush partial results if a later step fails.
pub fn run_attack_experiment_observed(
    config: &ExperimentConfig,
    mut on_row: impl FnMut(&RunRow),
) -> Result<AttackRun> {
    config.validate()?;
    let stream = prepare_stream(config)?;
    let model = prepare_model(config, &stream)?;
    let (mut rows, _) = certify_rows(config, &stream, &model)?;

    let mut audits = Vec::new();
    let mut traces = Vec::new();
    for (row, &eps) in rows.iter_mut().zip(&config.eps_grid) {
        let attack = attack_config_for(config, eps);

        let undefended = run_attack(
            &stream,
            &AttackTarget::Undefended(&model),
            config.window,
            config.attack_mode,
            &attack,
        )?;
        row.attacked_z = Some(deterministic_trace_performance(&undefended, &model)?);
        let audit = validate_trace_budget(&undefended)?;
        audits.push(BudgetAuditRecord {
            eps,
            mode: config.attack_mode,
            target: TargetKind::Undefended,
            average: audit.average,
            worst_prefix_average: audit.worst_prefix_average,
            compliant: audit.compliant,
        });
        traces.push((eps, TargetKind::Undefended, undefended));

        let smoothed = run_attack(
            &stream,
            &AttackTarget::Smoothed {
                model: &model,
                spec: &config.spec,
            },
            config.window,
            config.attack_mode,
            &attack,
        )?;
        let estimate = evaluate_smoothed_trace(
            &smoothed,
            &model,
            &config.spec,
            config.mc_reps,
            config.reuse,
            config.seed,
        )?;
        row.attacked_z_tilde = Some(estimate.z_tilde);
        row.attacked_z_tilde_stderr = Some(estimate.stderr);
        let audit = validate_trace_budget(&smoothed)?;
        audits.push(BudgetAuditRecord {
            eps,
            mode: config.attack_mode,
            target: TargetKind::Smoothed,
            average: audit.average,
            worst_prefix_average: audit.worst_prefix_average,
            compliant: audit.compliant,
        });
        traces.push((eps, TargetKind::Smoothed, smoothed));
        on_row(row);
    }

    Ok(AttackRun {
        result: RunResult {
            rows,
            audits,
            config_hash: config.hash(),
            seed: config.seed,
        },
        traces,
    })
}

/// As [`run_attack_experiment_full`], returning only the result table.
pub fn run_attack_experiment(config: &ExperimentConfig) -> Result<RunResult> {
    Ok(run_attack_experiment_full(config)?.result)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.16e}")).unwrap_or_default()
}

/// Header of the stable 8-column results schema.
pub const RESULTS_CSV_HEADER: &str = "eps,clean_z,clean_z_tilde,clean_z_tilde_stderr,\
certified_lower,attacked_z,attacked_z_tilde,attacked_z_tilde_stderr";

/// One results row in the emitted CSV encoding (no trailing newline).
pub fn format_results_row(row: &RunRow) -> String {
    format!(
        "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{},{},{}",
        row.eps,
        row.clean_z,
        row.clean_z_tilde,
        row.clean_z_tilde_stderr,
        row.certified_lower,
        fmt_opt(row.attacked_z),
        fmt_opt(row.attacked_z_tilde),
        fmt_opt(row.attacked_z_tilde_stderr),
    )
}

/// Writes `results.csv`, `audits.csv`, `manifest.json` and per-curve plot
/// files under `dir`. Returns the paths written.
pub fn emit_results(
    result: &RunResult,
    config: &ExperimentConfig,
    dir: impl AsRef<Path>,
) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();

    let results_path = dir.join("results.csv");
    {
        let mut out = String::from(RESULTS_CSV_HEADER);
        out.push('\n');
        for row in &result.rows {
            out.push_str(&format_results_row(row));
            out.push('\n');
        }
        std::fs::write(&results_path, out)?;
    }
    written.push(results_path);

    let audits_path = dir.join("audits.csv");
    {
        let mut out = String::new();
        out.push_str("eps,mode,target,average,worst_prefix_average,compliant\n");
        for a in &result.audits {
            out.push_str(&format!(
                "{:.16e},{},{},{:.16e},{:.16e},{}\n",
                a.eps, a.mode, a.target, a.average, a.worst_prefix_average, a.compliant
            ));
        }
        std::fs::write(&audits_path, out)?;
    }
    written.push(audits_path);

    let manifest_path = dir.join("manifest.json");
    {
        let manifest = serde_json::json!({
            "schema_version": 1,
            "config_hash": result.config_hash,
            "seed": result.seed,
            "config": config,
        });
        let text = serde_json::to_string_pretty(&manifest)
            .map_err(|e| Error::Validation(format!("serializing manifest: {e}")))?;
        std::fs::write(&manifest_path, text)?;
    }
    written.push(manifest_path);

    // Plot data: eps paired with each curve, one file per curve.
    let curves: [(&str, Box<dyn Fn(&RunRow) -> Option<f64>>); 4] = [
        ("certified_lower", Box::new(|r| Some(r.certified_lower))),
        ("clean_smoothed", Box::new(|r| Some(r.clean_z_tilde))),
        ("attacked_undefended", Box::new(|r| r.attacked_z)),
        ("attacked_smoothed", Box::new(|r| r.attacked_z_tilde)),
    ];
    for (name, extract) in curves {
        let points: Vec<(f64, f64)> = result
            .rows
            .iter()
            .filter_map(|r| extract(r).map(|v| (r.eps, v)))
            .collect();
        if points.is_empty() {
            continue;
        }
        let path = dir.join(format!("plot_{name}.csv"));
        let mut out = String::from("eps,value\n");
        for (eps, v) in points {
            out.push_str(&format!("{eps:.16e},{v:.16e}\n"));
        }
        std::fs::write(&path, out)?;
        written.push(path);
    }

    Ok(written)
}

fn parse_field(field: &str, row: usize) -> Result<f64> {
    field.trim().parse().map_err(|_| Error::Parse {
        row,
        msg: format!("non-numeric field {field:?}"),
    })
}

fn parse_opt_field(field: &str, row: usize) -> Result<Option<f64>> {
    if field.trim().is_empty() {
        Ok(None)
    } else {
        parse_field(field, row).map(Some)
    }
}

/// Reads back a `results.csv` written by [`emit_results`].
pub fn parse_results_csv(path: impl AsRef<Path>) -> Result<Vec<RunRow>> {
    let text = std::fs::read_to_string(path.as_ref())?;
    let mut rows = Vec::new();
    for (idx, line) in text.lines().enumerate().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            return Err(Error::Parse {
                row: idx,
                msg: format!("expected 8 columns, found {}", fields.len()),
            });
        }
        rows.push(RunRow {
            eps: parse_field(fields[0], idx)?,
            clean_z: parse_field(fields[1], idx)?,
            clean_z_tilde: parse_field(fields[2], idx)?,
            clean_z_tilde_stderr: parse_field(fields[3], idx)?,
            certified_lower: parse_field(fields[4], idx)?,
            attacked_z: parse_opt_field(fields[5], idx)?,
            attacked_z_tilde: parse_opt_field(fields[6], idx)?,
            attacked_z_tilde_stderr: parse_opt_field(fields[7], idx)?,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smoothing::special;
    use crate::stream::SegmentLen;

    fn small_config() -> ExperimentConfig {
        ExperimentConfig {
            stream: StreamSource::Synthetic(GeneratorConfig {
                num_classes: 2,
                dim: 2,
                len: 30,
                segment_len: SegmentLen::Fixed(6),
                separation: 4.0,
                within_noise: 0.5,
                seed: 9,
            }),
            window: 2,
            spec: SmoothingSpec::gaussian_iso(0.5).unwrap(),
            eps_grid: vec![0.0, 0.25, 0.5],
            attack_mode: AttackMode::OncePerItem,
            attack: AttackSettings {
                alpha: 4,
                pgd_steps: 20,
                pgd_step_factor: 2.0,
                smoothed_noise_draws: 4,
            },
            mc_reps: 30,
            reuse: NoiseReuse::PerItemOnce,
            arch: Architecture::Linear,
            model: ModelSource::Train(TrainSettings {
                epochs: 10,
                ..TrainSettings::default()
            }),
            seed: 1234,
        }
    }

    #[test]
    fn vanishing_noise_recovers_the_clean_performance() {
        let config = small_config();
        let stream = prepare_stream(&config).unwrap();
        let model = prepare_model(&config, &stream).unwrap();
        let spec = SmoothingSpec::gaussian_iso(1e-12).unwrap();
        let est =
            evaluate_smoothed_stream(&stream, &model, 2, &spec, 5, NoiseReuse::PerItemOnce, 7)
                .unwrap();
        let clean = stream_performance(&model, &stream, 2).unwrap();
        assert_eq!(est.z_tilde, clean);
        assert_eq!(est.stderr, 0.0);
    }

    #[test]
    fn reuse_policies_agree_within_stderr() {
        let config = small_config();
        let stream = prepare_stream(&config).unwrap();
        let model = prepare_model(&config, &stream).unwrap();
        let spec = SmoothingSpec::gaussian_iso(0.8).unwrap();
        let a = evaluate_smoothed_stream(&stream, &model, 2, &spec, 200, NoiseReuse::PerItemOnce, 3)
            .unwrap();
        let b =
            evaluate_smoothed_stream(&stream, &model, 2, &spec, 200, NoiseReuse::FreshPerWindow, 4)
                .unwrap();
        let margin = 3.0 * (a.stderr * a.stderr + b.stderr * b.stderr).sqrt();
        assert!(
            (a.z_tilde - b.z_tilde).abs() <= margin.max(1e-3),
            "{} vs {} (margin {margin})",
            a.z_tilde,
            b.z_tilde
        );
    }

    #[test]
    fn smoothed_estimate_matches_closed_form_on_sign_model() {
        // 1-D sign classifier under Gaussian noise: the exact smoothed
        // performance per step is Phi(x/sigma) for label 1 and Phi(-x/sigma)
        // for label 0. Cross-check the Monte Carlo estimator against it.
        let model = crate::model::ModelParams {
            format_version: 1,
            arch: Architecture::Linear,
            w: 1,
            dim: 1,
            num_classes: 2,
            weights: crate::model::Weights::Linear {
                wmat: vec![-1.0, 1.0],
                bias: vec![0.0, 0.0],
            },
        };
        let values = [0.6, -0.4, 1.2, 0.1, -0.9, 0.3];
        let labels = [1usize, 0, 1, 0, 0, 1];
        let items = values
            .iter()
            .enumerate()
            .map(|(k, &v)| crate::stream::StreamItem {
                features: vec![v],
                index: k + 1,
            })
            .collect();
        let stream = LabeledStream::new(items, labels.to_vec(), 2).unwrap();
        let sigma = 0.7;
        let spec = SmoothingSpec::gaussian_iso(sigma).unwrap();
        let reps = 4000;
        let est = evaluate_smoothed_stream(
            &stream,
            &model,
            1,
            &spec,
            reps,
            NoiseReuse::PerItemOnce,
            11,
        )
        .unwrap();
        let exact: f64 = values
            .iter()
            .zip(&labels)
            .map(|(&x, &y)| {
                let sign = if y == 1 { 1.0 } else { -1.0 };
                special::std_normal_cdf(sign * x / sigma).unwrap()
            })
            .sum::<f64>()
            / values.len() as f64;
        assert!(
            (est.z_tilde - exact).abs() <= 3.0 * est.stderr.max(1e-4),
            "mc {} vs exact {exact} (stderr {})",
            est.z_tilde,
            est.stderr
        );
    }

    #[test]
    fn certify_experiment_zero_eps_certifies_the_estimate() {
        let mut config = small_config();
        config.eps_grid = vec![0.0];
        let result = run_certify_experiment(&config).unwrap();
        let row = &result.rows[0];
        assert_eq!(row.certified_lower, row.clean_z_tilde);
        assert!(row.attacked_z.is_none());
    }

    #[test]
    fn certified_row_recomposes_from_raw_fields() {
        let config = small_config();
        let result = run_certify_experiment(&config).unwrap();
        for row in &result.rows {
            let bound =
                crate::certificate::theorem_bound(config.window, &config.spec, row.eps).unwrap();
            let expect = (row.clean_z_tilde - bound).max(0.0);
            assert!((row.certified_lower - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn attack_experiment_is_reproducible_bitwise() {
        let mut config = small_config();
        config.eps_grid = vec![0.0, 0.4];
        config.mc_reps = 10;
        let a = run_attack_experiment(&config).unwrap();
        let b = run_attack_experiment(&config).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn attack_experiment_zero_eps_equals_clean() {
        let mut config = small_config();
        config.eps_grid = vec![0.0];
        config.mc_reps = 10;
        let result = run_attack_experiment(&config).unwrap();
        let row = &result.rows[0];
        assert_eq!(row.attacked_z, Some(row.clean_z));
        assert_eq!(row.attacked_z_tilde, Some(row.clean_z_tilde));
        for audit in &result.audits {
            assert!(audit.compliant);
            assert_eq!(audit.average, 0.0);
        }
    }

    #[test]
    fn undefended_attacked_performance_is_near_monotone_in_eps() {
        let mut config = small_config();
        config.eps_grid = vec![0.0, 0.2, 0.5, 1.0];
        config.mc_reps = 5;
        let result = run_attack_experiment(&config).unwrap();
        let attacked: Vec<f64> = result.rows.iter().map(|r| r.attacked_z.unwrap()).collect();
        for pair in attacked.windows(2) {
            assert!(
                pair[1] <= pair[0] + 0.02,
                "attacked Z went up: {attacked:?}"
            );
        }
    }

    #[test]
    fn emitted_files_round_trip_and_hash_is_config_sensitive() {
        let mut config = small_config();
        config.eps_grid = vec![0.0, 0.3];
        config.mc_reps = 8;
        let result = run_attack_experiment(&config).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let files = emit_results(&result, &config, dir.path()).unwrap();
        assert!(files.iter().any(|p| p.ends_with("results.csv")));
        assert!(files.iter().any(|p| p.ends_with("manifest.json")));

        let parsed = parse_results_csv(dir.path().join("results.csv")).unwrap();
        assert_eq!(parsed, result.rows);

        let mut other = config.clone();
        other.mc_reps += 1;
        assert_ne!(config.hash(), other.hash());
        assert_eq!(config.hash(), config.clone().hash());
    }

    #[test]
    fn config_validation_catches_bad_grids() {
        let mut config = small_config();
        config.eps_grid = vec![0.5, 0.2];
        assert!(config.validate().is_err());
        let mut config = small_config();
        config.eps_grid = vec![];
        assert!(config.validate().is_err());
        let mut config = small_config();
        config.mc_reps = 0;
        assert!(config.validate().is_err());
    }
}
