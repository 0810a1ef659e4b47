//! Command-line driver: generate streams, compute certificates, run attacks,
//! and run the verification oracle suite.

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use streamcert::certificate::AttackMode;
use streamcert::harness::{
    emit_results, run_attack_experiment_observed, run_certify_experiment, ExperimentConfig,
};
use streamcert::oracle;
use streamcert::stream::{emit_csv_stream_to_path, generate_synthetic_stream, GeneratorConfig, SegmentLen};

#[derive(Parser)]
#[command(
    name = "streamcert",
    about = "Certificates and budget-constrained attacks for sliding-window streaming classifiers",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic labeled stream CSV.
    Gen(GenArgs),
    /// Certificate sweep over an eps grid (no attacks).
    Certify(RunArgs),
    /// Certificates plus attacks on the undefended and smoothed deployments.
    Attack(RunArgs),
    /// End-to-end run: train, certify, attack, emit.
    Simulate(RunArgs),
    /// Run the verification oracle suite.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct GenArgs {
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 3)]
    classes: usize,
    #[arg(long, default_value_t = 4)]
    dim: usize,
    #[arg(long, default_value_t = 300)]
    len: usize,
    /// Fixed label segment length.
    #[arg(long, default_value_t = 20)]
    segment: usize,
    #[arg(long, default_value_t = 6.0)]
    separation: f64,
    #[arg(long, default_value_t = 1.0)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct RunArgs {
    /// TOML experiment config; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Window size.
    #[arg(long)]
    window: Option<usize>,
    /// Gaussian smoothing sigma (shorthand for an isotropic l2 spec).
    #[arg(long)]
    sigma: Option<f64>,
    /// Comma-separated ascending eps grid, e.g. "0,0.25,0.5,1".
    #[arg(long, value_delimiter = ',')]
    eps: Option<Vec<f64>>,
    /// Attack mode: once | per-window.
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    mc_reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Evaluation stream CSV (overrides the config's stream source).
    #[arg(long)]
    stream: Option<PathBuf>,
    /// Feature count of the CSV stream.
    #[arg(long)]
    dim: Option<usize>,
    /// Load model parameters from this JSON file instead of training.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Save the model used by the run (trained or loaded) to this path.
    #[arg(long)]
    save_model: Option<PathBuf>,
    /// Output directory for results.csv, audits.csv, manifest.json, plots.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Also write the attack traces (CSV + sidecar) under the output dir.
    #[arg(long, default_value_t = false)]
    traces: bool,
}

#[derive(Args)]
struct VerifyArgs {
    /// Number of random discrete instances to check.
    #[arg(long, default_value_t = 200)]
    instances: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn default_config() -> ExperimentConfig {
    use streamcert::harness::*;
    use streamcert::model::Architecture;
    use streamcert::smoothing::SmoothingSpec;
    ExperimentConfig {
        stream: StreamSource::Synthetic(GeneratorConfig {
            num_classes: 3,
            dim: 4,
            len: 300,
            segment_len: SegmentLen::Fixed(20),
            separation: 6.0,
            within_noise: 1.0,
            seed: 7,
        }),
        window: 2,
        spec: SmoothingSpec::gaussian_iso(1.0).expect("valid sigma"),
        eps_grid: vec![0.0, 0.25, 0.5, 1.0],
        attack_mode: AttackMode::OncePerItem,
        attack: AttackSettings::default(),
        mc_reps: 200,
        reuse: NoiseReuse::PerItemOnce,
        arch: Architecture::Mlp1 { hidden: 32 },
        model: ModelSource::Train(TrainSettings {
            noise_sigma: Some(1.0),
            ..TrainSettings::default()
        }),
        seed: 0,
    }
}

fn load_run_config(args: &RunArgs) -> anyhow::Result<ExperimentConfig> {
    let mut config = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?
        }
        None => default_config(),
    };
    if let Some(path) = &args.stream {
        let dim = args.dim.context("--stream requires --dim")?;
        config.stream = streamcert::harness::StreamSource::Csv {
            path: path.clone(),
            dim,
            num_classes: None,
        };
    }
    if let Some(w) = args.window {
        config.window = w;
    }
    if let Some(sigma) = args.sigma {
        config.spec = streamcert::smoothing::SmoothingSpec::gaussian_iso(sigma)
            .map_err(|e| anyhow::anyhow!("{e}"))?;
    }
    if let Some(eps) = &args.eps {
        config.eps_grid = eps.clone();
    }
    if let Some(mode) = &args.mode {
        config.attack_mode = match mode.as_str() {
            "once" | "once-per-item" | "once_per_item" => AttackMode::OncePerItem,
            "per-window" | "per_window" => AttackMode::PerWindow,
            other => bail!("unknown attack mode {other:?} (use once | per-window)"),
        };
    }
    if let Some(reps) = args.mc_reps {
        config.mc_reps = reps;
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(path) = &args.model {
        config.model = streamcert::harness::ModelSource::Load { path: path.clone() };
    }
    if let Some(path) = &args.save_model {
        // Train (or load) now, persist, and point the run at the saved file
        // so the results provably come from exactly those parameters.
        let stream =
            streamcert::harness::prepare_stream(&config).map_err(|e| anyhow::anyhow!("{e}"))?;
        let model = streamcert::harness::prepare_model(&config, &stream)
            .map_err(|e| anyhow::anyhow!("{e}"))?;
        model.save(path).map_err(|e| anyhow::anyhow!("{e}"))?;
        config.model = streamcert::harness::ModelSource::Load { path: path.clone() };
    }
    Ok(config)
}

fn print_rows(result: &streamcert::harness::RunResult) {
    println!(
        "{:>8} {:>10} {:>12} {:>10} {:>12} {:>12} {:>14}",
        "eps", "clean_z", "clean_z~", "stderr", "certified", "attacked_z", "attacked_z~"
    );
    for row in &result.rows {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into());
        println!(
            "{:>8.3} {:>10.4} {:>12.4} {:>10.4} {:>12.4} {:>12} {:>14}",
            row.eps,
            row.clean_z,
            row.clean_z_tilde,
            row.clean_z_tilde_stderr,
            row.certified_lower,
            opt(row.attacked_z),
            opt(row.attacked_z_tilde),
        );
    }
}

fn cmd_gen(args: &GenArgs) -> anyhow::Result<()> {
    let config = GeneratorConfig {
        num_classes: args.classes,
        dim: args.dim,
        len: args.len,
        segment_len: SegmentLen::Fixed(args.segment),
        separation: args.separation,
        within_noise: args.noise,
        seed: args.seed,
    };
    let stream = generate_synthetic_stream(&config).map_err(|e| anyhow::anyhow!("{e}"))?;
    emit_csv_stream_to_path(&stream, &args.out).map_err(|e| anyhow::anyhow!("{e}"))?;
    println!(
        "wrote {} steps ({} classes, dim {}) to {}",
        args.len,
        args.classes,
        args.dim,
        args.out.display()
    );
    Ok(())
}

fn cmd_certify(args: &RunArgs) -> anyhow::Result<()> {
    let config = load_run_config(args)?;
    let result = run_certify_experiment(&config).map_err(|e| anyhow::anyhow!("{e}"))?;
    emit_results(&result, &config, &args.out).map_err(|e| anyhow::anyhow!("{e}"))?;
    print_rows(&result);
    println!("results written to {}", args.out.display());
    Ok(())
}

/// Returns false when a trace failed its budget audit.
fn cmd_attack(args: &RunArgs) -> anyhow::Result<bool> {
    let config = load_run_config(args)?;
    // Partial rows are appended as they complete; the file survives a
    // mid-run failure and is removed after a successful full emission.
    std::fs::create_dir_all(&args.out)?;
    let partial_path = args.out.join("results.partial.csv");
    std::fs::write(
        &partial_path,
        format!("{}\n", streamcert::harness::RESULTS_CSV_HEADER),
    )?;
    let run = run_attack_experiment_observed(&config, |row| {
        use std::io::Write;
        if let Ok(mut file) = std::fs::OpenOptions::new().append(true).open(&partial_path) {
            let _ = writeln!(file, "{}", streamcert::harness::format_results_row(row));
        }
    })
    .map_err(|e| anyhow::anyhow!("{e}"))?;
    emit_results(&run.result, &config, &args.out).map_err(|e| anyhow::anyhow!("{e}"))?;
    let _ = std::fs::remove_file(&partial_path);
    if args.traces {
        let trace_dir = args.out.join("traces");
        std::fs::create_dir_all(&trace_dir)?;
        for (eps, target, trace) in &run.traces {
            let stem = format!("trace_{target}_{}_eps{eps}", trace.mode);
            trace
                .write_files(
                    trace_dir.join(format!("{stem}.csv")),
                    trace_dir.join(format!("{stem}.meta.json")),
                )
                .map_err(|e| anyhow::anyhow!("{e}"))?;
        }
    }
    print_rows(&run.result);
    let mut ok = true;
    for audit in &run.result.audits {
        if !audit.compliant {
            ok = false;
            eprintln!(
                "budget audit FAILED: eps={} target={} average={}",
                audit.eps, audit.target, audit.average
            );
        }
    }
    println!("results written to {}", args.out.display());
    Ok(ok)
}

fn cmd_verify(args: &VerifyArgs) -> bool {
    let report = oracle::run_verification_suite(args.instances, args.seed);
    for section in &report.sections {
        let status = if section.passed { "PASS" } else { "FAIL" };
        println!("[{status}] {}: {}", section.name, section.detail);
    }
    report.passed()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Gen(args) => cmd_gen(args).map(|_| true),
        Command::Certify(args) => cmd_certify(args).map(|_| true),
        Command::Attack(args) | Command::Simulate(args) => cmd_attack(args),
        Command::Verify(args) => Ok(cmd_verify(args)),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}
