use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use vmark_core::attack::{
    forgery_init_unrelated, parse_frame_mask, pgd_bounded, removal_init_gaussian, square_attack, subset_arbitrary,
    triangle_attack, AttackMode, AttackTrace, Detector, LabelOracle, SquareConfig, TraceSummary, TriangleConfig,
    WhiteboxConfig,
};
use vmark_core::container::{read_container, write_atomic, write_container};
use vmark_core::harness::{run_benchmark, BenchConfig, PerturbationSweep};
use vmark_core::perturb::{apply_with_encoder, EncoderCommand};
use vmark_core::plot::{render_svg, PlotSpec};
use vmark_core::threshold::{fpr_of_tau, select_k, threshold_report, DEFAULT_ETA};
use vmark_core::{
    detect, synth_video, Activation, AggregationStrategy, CodecKey, CodecParams, Motion, Perturbation, StrategyKind,
    SynthSpec, Tau, Video, Watermark, WatermarkCodec,
};

#[derive(Parser)]
#[command(name = "vmark", version, about = "Robustness evaluation for frame-level video watermarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic video.
    Gen(GenArgs),
    /// Embed a watermark into every frame of a video.
    Embed(EmbedArgs),
    /// Decode a video and aggregate per-frame detections into a verdict.
    Detect(DetectArgs),
    /// Apply one perturbation to a video.
    Perturb(PerturbArgs),
    /// Run a white-box or black-box attack on a video.
    Attack(AttackArgs),
    /// Select the bitwise-accuracy threshold and frame threshold.
    Threshold(ThresholdArgs),
    /// Run a benchmark sweep and write report.csv plus manifest.json.
    Bench(BenchArgs),
    /// Draw an SVG line chart from a report CSV.
    Plot(PlotArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ActivationArg {
    Sigmoid,
    Identity,
}

/// Codec, watermark and detector settings shared by several subcommands.
#[derive(Args)]
struct KeyArgs {
    /// JSON benchmark config; its codec, tau, eta and k are used unless
    /// overridden by flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Watermark length in bits.
    #[arg(long)]
    n: Option<usize>,
    /// Watermark as hex; generated from --seed when absent.
    #[arg(long)]
    watermark: Option<String>,
    #[arg(long, value_enum)]
    activation: Option<ActivationArg>,
    /// Seed for the watermark and any randomness of the subcommand.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// Detector settings on top of [`KeyArgs`].
#[derive(Args)]
struct DetectorArgs {
    #[arg(long, default_value = "ba-mean")]
    strategy: StrategyKind,
    /// Bitwise-accuracy threshold as a fraction such as 27/32.
    #[arg(long)]
    tau: Option<Tau>,
    #[arg(long)]
    eta: Option<f64>,
    /// Frame threshold for detection-threshold.
    #[arg(long)]
    k: Option<usize>,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value_t = 14)]
    frames: usize,
    #[arg(long, default_value_t = 64)]
    height: usize,
    #[arg(long, default_value_t = 64)]
    width: usize,
    #[arg(long, default_value_t = 3)]
    channels: usize,
    #[arg(long, default_value = "slow")]
    motion: Motion,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct EmbedArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[command(flatten)]
    key: KeyArgs,
}

#[derive(Args)]
struct DetectArgs {
    #[arg(long)]
    input: PathBuf,
    /// Also write the JSON result here.
    #[arg(long)]
    output: Option<PathBuf>,
    #[command(flatten)]
    key: KeyArgs,
    #[command(flatten)]
    detector: DetectorArgs,
}

#[derive(Args)]
struct PerturbArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// Perturbation as kind:param, e.g. jpeg:50.
    #[arg(long)]
    perturb: Perturbation,
    /// Shell template for the mpeg4 kind.
    #[arg(long)]
    encoder: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AttackArg {
    Pgd,
    Subset,
    Square,
    Triangle,
}

#[derive(Args)]
struct AttackArgs {
    #[arg(long, value_enum)]
    attack: AttackArg,
    #[arg(long, default_value = "removal")]
    mode: AttackMode,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// ℓ∞ budget for pgd and square.
    #[arg(long, default_value_t = 0.05)]
    eps: f64,
    /// Iterations for pgd (default 200) and subset (default 500).
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    step_size: Option<f64>,
    /// Attacked frames for subset, e.g. 0-2,7.
    #[arg(long)]
    frames: Option<String>,
    /// Query budget for square and triangle.
    #[arg(long, default_value_t = 1000)]
    queries: u64,
    /// Write the query trace of black-box attacks as CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[command(flatten)]
    key: KeyArgs,
    #[command(flatten)]
    detector: DetectorArgs,
}

#[derive(Args)]
struct ThresholdArgs {
    #[arg(long, default_value_t = 32)]
    n: u64,
    #[arg(long, default_value_t = DEFAULT_ETA)]
    eta: f64,
    /// Frame count; adds the frame threshold k to the output.
    #[arg(long)]
    frames: Option<u64>,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; overrides the config.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    tau: Option<Tau>,
    #[arg(long)]
    eta: Option<f64>,
    /// Replaces the strategy list; repeatable.
    #[arg(long)]
    strategy: Vec<StrategyKind>,
    /// Replaces the perturbation grid; repeatable kind:param.
    #[arg(long)]
    perturb: Vec<Perturbation>,
    #[arg(long)]
    encoder: Option<String>,
}

#[derive(Args)]
struct PlotArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value = "parameter")]
    x: String,
    #[arg(long, default_value = "fnr")]
    y: String,
    #[arg(long, default_value = "strategy")]
    series: String,
    /// Keep rows with column=value; repeatable.
    #[arg(long)]
    filter: Vec<String>,
    /// Shorthand for --filter perturbation=KIND.
    #[arg(long)]
    perturbation: Option<String>,
    #[arg(long)]
    title: Option<String>,
}

fn load_config(path: Option<&Path>) -> Result<BenchConfig> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("cannot read config {}", p.display()))?;
            BenchConfig::from_json(&text).with_context(|| format!("invalid config {}", p.display()))
        }
        None => Ok(BenchConfig::default()),
    }
}

struct Keyed {
    key: CodecKey,
    wg: Watermark,
    config: BenchConfig,
}

fn keyed(args: &KeyArgs, video: &Video) -> Result<Keyed> {
    let config = load_config(args.config.as_deref())?;
    let mut params: CodecParams = config.codec;
    if let Some(n) = args.n {
        params.bits = n;
    }
    if let Some(a) = args.activation {
        params.activation = match a {
            ActivationArg::Sigmoid => Activation::Sigmoid,
            ActivationArg::Identity => Activation::Identity,
        };
    }
    let key = CodecKey::new(params, video.shape())?;
    let wg = match &args.watermark {
        Some(hex) => Watermark::from_hex(hex, params.bits)?,
        None => Watermark::random(params.bits, args.seed)?,
    };
    Ok(Keyed { key, wg, config })
}

fn strategy(args: &DetectorArgs, keyed: &Keyed, frames: usize) -> Result<AggregationStrategy> {
    let n = keyed.wg.len() as u64;
    let eta = args.eta.unwrap_or(keyed.config.eta);
    let tau = match args.tau.or(keyed.config.tau) {
        Some(t) => t,
        None => vmark_core::select_tau(n, eta)?,
    };
    let k = match args.k.or(keyed.config.k) {
        Some(k) => k,
        None => select_k(frames as u64, fpr_of_tau(n, tau)?, eta)? as usize,
    };
    Ok(AggregationStrategy::with_default_k(args.strategy, tau, k)?)
}

fn emit(value: &serde_json::Value, output: Option<&Path>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    print!("{text}");
    if let Some(path) = output {
        write_atomic(path, text.as_bytes())?;
    }
    Ok(())
}

fn gen(args: &GenArgs) -> Result<()> {
    let spec = SynthSpec::new(args.frames, args.height, args.width, args.channels, args.motion);
    write_container(&synth_video(&spec, args.seed)?, &args.output)?;
    Ok(())
}

fn embed(args: &EmbedArgs) -> Result<()> {
    let video = read_container(&args.input)?;
    let k = keyed(&args.key, &video)?;
    write_container(&k.key.embed(&video, &k.wg)?, &args.output)?;
    Ok(())
}

fn run_detect(args: &DetectArgs) -> Result<()> {
    let video = read_container(&args.input)?;
    let k = keyed(&args.key, &video)?;
    let s = strategy(&args.detector, &k, video.num_frames())?;
    let result = detect(&k.key.decode_video(&video)?, &k.wg, &s)?;
    emit(
        &json!({
            "verdict": result.verdict,
            "strategy": result.strategy,
            "statistic": result.statistic,
            "tau": s.tau,
            "k": s.k,
            "frames": video.num_frames(),
            "watermark": k.wg.to_hex(),
            "per_frame_decisions": result.per_frame_decisions,
        }),
        args.output.as_deref(),
    )
}

fn perturb(args: &PerturbArgs) -> Result<()> {
    let video = read_container(&args.input)?;
    let encoder = args.encoder.as_ref().map(EncoderCommand::new);
    let out = apply_with_encoder(&args.perturb.with_seed(args.seed), &video, encoder.as_ref())?;
    write_container(&out, &args.output)?;
    Ok(())
}

fn trace_summary(name: &str, args: &AttackArgs, det: &Detector, trace: &AttackTrace, input: &Video) -> Result<TraceSummary> {
    Ok(TraceSummary {
        attack: name.into(),
        mode: args.mode.to_string(),
        final_verdict: LabelOracle::label(det, &trace.best_video)?,
        queries: trace.queries_used,
        final_linf: trace.best_video.linf_distance(input),
        final_value: trace.final_value(),
    })
}

fn attack(args: &AttackArgs) -> Result<()> {
    let video = read_container(&args.input)?;
    let k = keyed(&args.key, &video)?;
    let s = strategy(&args.detector, &k, video.num_frames())?;
    let (out, summary) = match args.attack {
        AttackArg::Pgd | AttackArg::Subset => {
            let out = if args.attack == AttackArg::Pgd {
                let mut cfg = WhiteboxConfig::pgd_with_steps(args.mode, args.eps, args.steps.unwrap_or(200));
                if let Some(step) = args.step_size {
                    cfg.step_size = step;
                }
                pgd_bounded(&video, &k.key, &k.wg, &cfg)?.video
            } else {
                let Some(expr) = &args.frames else { bail!("subset attack needs --frames") };
                let mut cfg = WhiteboxConfig::subset(args.mode, parse_frame_mask(expr, video.num_frames())?);
                if let Some(steps) = args.steps {
                    cfg.steps = steps;
                }
                if let Some(step) = args.step_size {
                    cfg.step_size = step;
                }
                subset_arbitrary(&video, &k.key, &k.wg, &cfg)?
            };
            let result = detect(&k.key.decode_video(&out)?, &k.wg, &s)?;
            let summary = json!({
                "attack": if args.attack == AttackArg::Pgd { "pgd" } else { "subset" },
                "mode": args.mode,
                "final_verdict": result.verdict,
                "statistic": result.statistic,
                "final_linf": out.linf_distance(&video),
            });
            (out, summary)
        }
        AttackArg::Square | AttackArg::Triangle => {
            let det = Detector::new(&k.key, k.wg.clone(), s);
            let (name, trace) = if args.attack == AttackArg::Square {
                let cfg = SquareConfig::new(args.mode, args.eps, args.queries, args.seed_value());
                ("square", square_attack(&video, &det, &cfg)?)
            } else {
                let init = match args.mode {
                    AttackMode::Removal => removal_init_gaussian(&video, &det, args.seed_value())?.video,
                    AttackMode::Forgery => {
                        forgery_init_unrelated(video.shape(), video.num_frames(), &k.key, &k.wg, args.seed_value())?
                    }
                };
                let cfg = TriangleConfig::new(args.queries, args.seed_value());
                ("triangle", triangle_attack(&video, &det, &init, args.mode.goal(), &cfg)?)
            };
            if let Some(path) = &args.trace {
                trace.save_csv(path)?;
            }
            let summary = serde_json::to_value(trace_summary(name, args, &det, &trace, &video)?)?;
            (trace.best_video, summary)
        }
    };
    write_container(&out, &args.output)?;
    emit(&summary, None)
}

impl AttackArgs {
    fn seed_value(&self) -> u64 {
        self.key.seed
    }
}

fn threshold(args: &ThresholdArgs) -> Result<()> {
    let report = threshold_report(args.n, args.eta, args.frames)?;
    emit(&serde_json::to_value(report)?, args.output.as_deref())
}

fn bench(args: &BenchArgs) -> Result<()> {
    let mut cfg = load_config(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(n) = args.n {
        cfg.codec.bits = n;
    }
    if args.tau.is_some() {
        cfg.tau = args.tau;
    }
    if let Some(eta) = args.eta {
        cfg.eta = eta;
    }
    if !args.strategy.is_empty() {
        cfg.strategies = args.strategy.clone();
    }
    if !args.perturb.is_empty() {
        let mut sweeps: Vec<PerturbationSweep> = Vec::new();
        for p in &args.perturb {
            match sweeps.iter_mut().find(|s| s.kind == p.kind) {
                Some(s) => s.parameters.push(p.parameter),
                None => sweeps.push(PerturbationSweep { kind: p.kind, parameters: vec![p.parameter] }),
            }
        }
        cfg.perturbations = sweeps;
    }
    if args.encoder.is_some() {
        cfg.mpeg4_encoder = args.encoder.clone();
    }
    if args.output.is_some() {
        cfg.output_dir = args.output.clone();
    }
    if cfg.output_dir.is_none() {
        bail!("bench needs --output or output_dir in the config");
    }
    let report = run_benchmark(&cfg)?;
    for e in report.errors() {
        eprintln!("cell error: {}: {}", e.scope, e.message);
    }
    emit(
        &json!({
            "output_dir": cfg.output_dir,
            "cells": report.cells.len(),
            "errors": report.errors().len(),
            "config_sha256": report.manifest.config_sha256,
        }),
        None,
    )
}

fn plot(args: &PlotArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.input).with_context(|| format!("cannot read {}", args.input.display()))?;
    let mut spec = PlotSpec::new(&args.x, &args.y);
    spec.series = (!args.series.is_empty()).then(|| args.series.clone());
    let mut filters: BTreeMap<String, String> = BTreeMap::new();
    for f in &args.filter {
        let Some((col, value)) = f.split_once('=') else { bail!("filter must look like column=value, got {f:?}") };
        filters.insert(col.to_string(), value.to_string());
    }
    if let Some(p) = &args.perturbation {
        filters.insert("perturbation".into(), p.clone());
    }
    spec.filters = filters.into_iter().collect();
    spec.title = args.title.clone().or_else(|| args.perturbation.clone());
    write_atomic(&args.output, render_svg(&text, &spec)?.as_bytes())?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Gen(a) => gen(a),
        Command::Embed(a) => embed(a),
        Command::Detect(a) => run_detect(a),
        Command::Perturb(a) => perturb(a),
        Command::Attack(a) => attack(a),
        Command::Threshold(a) => threshold(a),
        Command::Bench(a) => bench(a),
        Command::Plot(a) => plot(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // core errors already embed their source text
            let mut message = e.to_string();
            for cause in e.chain().skip(1) {
                let text = cause.to_string();
                if !message.contains(&text) {
                    message = format!("{message}: {text}");
                }
            }
            eprintln!("error: {message}");
            ExitCode::from(1)
        }
    }
}
