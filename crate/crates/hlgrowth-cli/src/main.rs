//! `hlgrowth` — command-line front end for the cluster simulator.
//!
//! Subcommands: `grow` (simulate and persist a run record), `render-cluster`
//! and `render-flow` (deterministic SVG figures from a record), `analyze`
//! (run a statistical experiment and write its report), and `replay`
//! (regrow a record from its seed and compare bit for bit).
//!
//! Exit codes: 0 success (for `analyze`: all checks passed), 1 replay
//! mismatch or failed experiment checks, 2 usage/config errors (including
//! unknown experiment ids and unreadable inputs), 3 numerical failures
//! (reported with the step index where evaluation broke down).

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use hlgrowth::analysis::{
    run_experiment, write_report, BranchLawConfig, CapacityConvergenceConfig,
    DiskConvergenceConfig, ExperimentConfig, FlowRegimeConfig, RhoLimitConfig,
    StarredUniformityConfig,
};
use hlgrowth::growth::{grow, GrowthParams, Horizon, Regularization, RngSeed};
use hlgrowth::record::{read_record, replay, write_record, ReplayOutcome, RunRecord};
use hlgrowth::render::{render_cluster, render_flow, RenderStyle};
use hlgrowth::Error;

const EXIT_MISMATCH: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser)]
#[command(
    name = "hlgrowth",
    version,
    about = "Simulate, render, and statistically verify random conformal growth"
)]
struct Cli {
    /// Cap the worker thread count (overrides HLGROWTH_THREADS).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Grow a cluster and write its run record (JSON header + CSV events).
    Grow(GrowArgs),
    /// Draw a recorded cluster as an SVG of slit images, colored by epoch.
    RenderCluster(RenderClusterArgs),
    /// Draw the boundary flow of a recorded cluster as an SVG tracer fan.
    RenderFlow(RenderFlowArgs),
    /// Run a statistical experiment and write its report.
    Analyze(AnalyzeArgs),
    /// Regrow a record from its header and compare bit for bit.
    Replay(ReplayArgs),
}

#[derive(Args)]
struct GrowArgs {
    /// Base logarithmic capacity c.
    #[arg(long)]
    c: f64,
    /// Regularization strength α.
    #[arg(long)]
    alpha: f64,
    /// Derivative regularization distance σ (evaluate |Φ′| at radius e^σ).
    #[arg(long, conflicts_with = "sigma_mode", required_unless_present = "sigma_mode")]
    sigma: Option<f64>,
    /// Deterministic capacity rule replacing the derivative feedback.
    #[arg(long, value_enum)]
    sigma_mode: Option<SigmaMode>,
    /// Number of particles to grow.
    #[arg(long, conflicts_with = "time", required_unless_present = "time")]
    particles: Option<usize>,
    /// Capacity-time horizon (grows ⌊time/c⌋ particles).
    #[arg(long)]
    time: Option<f64>,
    /// RNG seed (the record stores it for exact replay).
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory of the run record.
    #[arg(long, default_value = "hlgrowth-run")]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum SigmaMode {
    /// c_k = c / (1 + αc(k−1))
    Starred,
    /// c_k = c·q(k) with the closed-form capacity factor at infinity
    Infinity,
}

#[derive(Args)]
struct StyleArgs {
    /// Image width and height in pixels.
    #[arg(long, default_value_t = 1024)]
    size: u32,
    /// Particles per color band.
    #[arg(long, default_value_t = 2500)]
    epoch_size: usize,
    /// Boundary samples per slit (cluster rendering).
    #[arg(long, default_value_t = 6)]
    samples_per_slit: usize,
    /// Subsample to at most this many drawn particles.
    #[arg(long, default_value_t = 25_000)]
    particle_budget: usize,
    /// Seed of the subsampling draw (recorded in the SVG metadata).
    #[arg(long, default_value_t = 0)]
    subsample_seed: u64,
}

impl StyleArgs {
    fn style(&self) -> RenderStyle {
        RenderStyle {
            width: self.size,
            height: self.size,
            epoch_size: self.epoch_size,
            samples_per_slit: self.samples_per_slit,
            particle_budget: self.particle_budget,
            subsample_seed: self.subsample_seed,
            ..RenderStyle::default()
        }
    }
}

#[derive(Args)]
struct RenderClusterArgs {
    /// Run-record directory produced by `grow`.
    #[arg(long)]
    record: PathBuf,
    /// Output SVG path (default: cluster.svg inside the record directory).
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    style: StyleArgs,
}

#[derive(Args)]
struct RenderFlowArgs {
    /// Run-record directory produced by `grow`.
    #[arg(long)]
    record: PathBuf,
    /// Output SVG path (default: flow.svg inside the record directory).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Number of equispaced boundary tracers.
    #[arg(long, default_value_t = 64)]
    tracers: usize,
    /// Record every k-th step of each tracer path (default: N/1024).
    #[arg(long)]
    stride: Option<usize>,
    #[command(flatten)]
    style: StyleArgs,
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct AnalyzeSource {
    /// Experiment config file (JSON with an "experiment" id field).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run a named experiment at its committed default configuration.
    #[arg(long, value_enum)]
    experiment: Option<ExperimentId>,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    source: AnalyzeSource,
    /// Report output path (default: derived from the config path or id).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ExperimentId {
    RhoLimit,
    CapacityConvergence,
    DiskConvergence,
    FlowDiffusivity,
    BranchLaw,
    StarredUniformity,
}

impl ExperimentId {
    fn default_config(self) -> ExperimentConfig {
        match self {
            ExperimentId::RhoLimit => ExperimentConfig::RhoLimit(RhoLimitConfig::default()),
            ExperimentId::CapacityConvergence => {
                ExperimentConfig::CapacityConvergence(CapacityConvergenceConfig::default())
            }
            ExperimentId::DiskConvergence => {
                ExperimentConfig::DiskConvergence(DiskConvergenceConfig::default())
            }
            ExperimentId::FlowDiffusivity => {
                ExperimentConfig::FlowDiffusivity(FlowRegimeConfig::default())
            }
            ExperimentId::BranchLaw => ExperimentConfig::BranchLaw(BranchLawConfig::default()),
            ExperimentId::StarredUniformity => {
                ExperimentConfig::StarredUniformity(StarredUniformityConfig::default())
            }
        }
    }

    fn id(self) -> &'static str {
        match self {
            ExperimentId::RhoLimit => "rho-limit",
            ExperimentId::CapacityConvergence => "capacity-convergence",
            ExperimentId::DiskConvergence => "disk-convergence",
            ExperimentId::FlowDiffusivity => "flow-diffusivity",
            ExperimentId::BranchLaw => "branch-law",
            ExperimentId::StarredUniformity => "starred-uniformity",
        }
    }
}

#[derive(Args)]
struct ReplayArgs {
    /// Run-record directory to verify.
    #[arg(long)]
    record: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(msg) = init_threads(cli.threads) {
        eprintln!("error: {msg}");
        return ExitCode::from(EXIT_USAGE);
    }
    let outcome = match cli.command {
        Command::Grow(args) => cmd_grow(&args),
        Command::RenderCluster(args) => cmd_render_cluster(&args),
        Command::RenderFlow(args) => cmd_render_flow(&args),
        Command::Analyze(args) => cmd_analyze(&args),
        Command::Replay(args) => cmd_replay(&args),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(classify(&err))
        }
    }
}

/// Map library errors onto the documented exit codes: numerical breakdowns
/// (with their step index in the message) are 3, everything that amounts to
/// a bad input is 2.
fn classify(err: &Error) -> u8 {
    match err {
        Error::Numerical { .. } | Error::Singular { .. } | Error::QuadratureNonConvergence { .. } => {
            EXIT_NUMERICAL
        }
        Error::Domain(_) | Error::Config(_) | Error::Io(_) | Error::Format(_) => EXIT_USAGE,
    }
}

/// Cap the rayon worker count from --threads or HLGROWTH_THREADS.
fn init_threads(flag: Option<usize>) -> Result<(), String> {
    let requested = match flag {
        Some(n) => Some(n),
        None => match std::env::var("HLGROWTH_THREADS") {
            Ok(v) => Some(
                v.parse::<usize>()
                    .map_err(|_| format!("HLGROWTH_THREADS must be a positive integer, got {v:?}"))?,
            ),
            Err(_) => None,
        },
    };
    match requested {
        None => Ok(()),
        Some(0) => Err("worker thread count must be at least 1".into()),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| format!("thread pool setup failed: {e}")),
    }
}

fn cmd_grow(args: &GrowArgs) -> Result<u8, Error> {
    let regularization = match (args.sigma, args.sigma_mode) {
        (Some(sigma), None) => Regularization::Sigma { sigma },
        (None, Some(SigmaMode::Starred)) => Regularization::Starred,
        (None, Some(SigmaMode::Infinity)) => Regularization::Infinity,
        _ => unreachable!("clap enforces exactly one of --sigma / --sigma-mode"),
    };
    let horizon = match (args.particles, args.time) {
        (Some(n), None) => Horizon::Particles(n),
        (None, Some(t)) => Horizon::CapacityTime(t),
        _ => unreachable!("clap enforces exactly one of --particles / --time"),
    };
    let params = GrowthParams {
        base_capacity: args.c,
        alpha: args.alpha,
        regularization,
        horizon,
    };

    let started = Instant::now();
    let state = grow(&params, RngSeed::new(args.seed))?;
    let elapsed = started.elapsed();
    let n = state.len();
    let total: f64 = state.events().iter().map(|e| e.capacity).sum();
    // the derivative rule evaluates the k−1 accumulated map kernels once
    // per new particle; the deterministic rules never evaluate the map
    let map_evals = match params.regularization {
        Regularization::Sigma { .. } => n * n.saturating_sub(1) / 2,
        Regularization::Starred | Regularization::Infinity => 0,
    };

    let record = RunRecord::from_state(&state, RngSeed::new(args.seed));
    write_record(&args.out, &record)?;

    println!("grew N={n} particles in {elapsed:.2?}");
    println!("total capacity C_N = {total:.12e}");
    println!("map-kernel evaluations during growth: {map_evals}");
    println!("record written to {}", args.out.display());
    Ok(0)
}

fn cmd_render_cluster(args: &RenderClusterArgs) -> Result<u8, Error> {
    let record = read_record(&args.record)?;
    let state = record.to_state()?;
    let rendered = render_cluster(&state, &args.style.style())?;
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| args.record.join("cluster.svg"));
    write_svg(&out, &rendered.svg)?;
    let m = &rendered.meta;
    println!(
        "cluster figure: {} of {} particles drawn, {} polylines, {} singular samples skipped",
        m.particles_drawn, m.particles_total, m.polylines_emitted, m.singular_skips
    );
    println!(
        "outer radius {:.6} (rim median {:.6}); written to {}",
        m.max_radius,
        m.rim_radius,
        out.display()
    );
    Ok(0)
}

fn cmd_render_flow(args: &RenderFlowArgs) -> Result<u8, Error> {
    let record = read_record(&args.record)?;
    let state = record.to_state()?;
    let stride = args
        .stride
        .unwrap_or_else(|| (state.len() / 1024).max(1));
    let rendered = render_flow(&state, args.tracers, stride, &args.style.style())?;
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| args.record.join("flow.svg"));
    write_svg(&out, &rendered.svg)?;
    let m = &rendered.meta;
    println!(
        "flow figure: {} tracers over {} steps, {} distinct final angles; written to {}",
        m.tracers,
        m.steps,
        m.distinct_final_angles,
        out.display()
    );
    Ok(0)
}

fn cmd_analyze(args: &AnalyzeArgs) -> Result<u8, Error> {
    let (config, default_out) = match (&args.source.config, args.source.experiment) {
        (Some(path), None) => {
            let text = std::fs::read_to_string(path)?;
            let config: ExperimentConfig = serde_json::from_str(&text).map_err(|e| {
                Error::Config(format!("unusable experiment config {}: {e}", path.display()))
            })?;
            let stem = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "experiment".into());
            let out = path
                .parent()
                .unwrap_or(Path::new("."))
                .join(format!("{stem}-report.json"));
            (config, out)
        }
        (None, Some(id)) => (id.default_config(), PathBuf::from(format!("{}-report.json", id.id()))),
        _ => unreachable!("clap enforces exactly one of --config / --experiment"),
    };
    config.validate()?;

    let report = run_experiment(&config)?;
    let out = args.out.clone().unwrap_or(default_out);
    write_report(&out, &report)?;
    print!("{}", report.summary());
    println!("report written to {}", out.display());
    Ok(if report.passed { 0 } else { EXIT_MISMATCH })
}

fn cmd_replay(args: &ReplayArgs) -> Result<u8, Error> {
    let record = read_record(&args.record)?;
    match replay(&record)? {
        ReplayOutcome::Match => {
            println!(
                "replay match: {} events reproduced bit-for-bit",
                record.events.len()
            );
            Ok(0)
        }
        ReplayOutcome::Mismatch { index, field } => {
            println!("replay mismatch at event {index} (field {field})");
            Ok(EXIT_MISMATCH)
        }
    }
}

/// Atomic SVG write through the record module's temp-file + rename path.
fn write_svg(path: &Path, svg: &str) -> Result<(), Error> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    hlgrowth::record::write_atomic(path, svg.as_bytes())
}
