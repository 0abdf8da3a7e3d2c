//! Implementations behind every subcommand of the `tscm` binary.

use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use clap::Args;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use tscm_core::{
    analyze, compare, evaluate, evaluate_greedy, generate, train, ConvWeights, DataConfig,
    Dataset, EpochLog, KernelDims, ModelInstance, NetworkSpec, ShiftMode, Split, Tensor,
    TrainConfig,
};
use tscm_core::tscm::{stacked_equivalence_control, stacked_equivalence_reference};
use tscm_core::TemporalVariant;

use crate::artifacts;
use crate::report::{self, Series};
use crate::usage;

const ALL_VARIANTS: [TemporalVariant; 4] = [
    TemporalVariant::Tscm,
    TemporalVariant::Plain2d,
    TemporalVariant::Conv2Plus1d,
    TemporalVariant::Conv3d,
];

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Args)]
pub struct Global {
    /// Seed for every random choice the command makes
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Directory receiving generated files
    #[arg(long, global = true, default_value = "out", value_name = "DIR")]
    pub out_dir: PathBuf,
    /// Training configuration file of `key value` lines
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
}

impl Global {
    fn seed_or(&self, fallback: u64) -> u64 {
        self.seed.unwrap_or(fallback)
    }
}

pub fn parse_hw(s: &str) -> std::result::Result<(usize, usize), String> {
    let (h, w) = s
        .split_once('x')
        .ok_or_else(|| format!("\"{s}\" is not HxW (for example 224x224)"))?;
    let h: usize = h.parse().map_err(|_| format!("\"{h}\" is not a size"))?;
    let w: usize = w.parse().map_err(|_| format!("\"{w}\" is not a size"))?;
    if h == 0 || w == 0 {
        return Err(String::from("input sides must be positive"));
    }
    Ok((h, w))
}

pub fn parse_variant(s: &str) -> std::result::Result<TemporalVariant, String> {
    TemporalVariant::parse(s).map_err(|e| e.to_string())
}

pub fn parse_shift_mode(s: &str) -> std::result::Result<ShiftMode, String> {
    ShiftMode::parse(s).map_err(|e| e.to_string())
}

pub fn parse_positive(s: &str) -> std::result::Result<usize, String> {
    let v: usize = s.parse().map_err(|_| format!("\"{s}\" is not a count"))?;
    if v == 0 {
        return Err(String::from("value must be at least 1"));
    }
    Ok(v)
}

fn load_train_config(global: &Global) -> Result<TrainConfig> {
    match &global.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            TrainConfig::parse(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
        }
        None => Ok(TrainConfig::default()),
    }
}

fn resolve_spec(preset: &str, spec_file: &Option<PathBuf>) -> Result<NetworkSpec> {
    match spec_file {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            NetworkSpec::parse(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
        }
        None => NetworkSpec::preset(preset).map_err(|e| usage(format!("{e}"))),
    }
}

// ---------------------------------------------------------------------------
// generate

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Vocabulary size (even, between 4 and 16)
    #[arg(long, default_value_t = 8)]
    pub vocab: usize,
    /// Number of sentences to render
    #[arg(long, default_value_t = 200)]
    pub sentences: usize,
    /// Square canvas side in pixels
    #[arg(long, default_value_t = 32)]
    pub resolution: usize,
    /// Fewest glosses per sentence
    #[arg(long, default_value_t = 2)]
    pub min_glosses: usize,
    /// Most glosses per sentence
    #[arg(long, default_value_t = 5)]
    pub max_glosses: usize,
}

pub fn cmd_generate(global: &Global, args: &GenerateArgs) -> Result<()> {
    let config = DataConfig {
        vocab: args.vocab,
        sentences: args.sentences,
        resolution: args.resolution,
        seed: global.seed_or(0),
        min_glosses: args.min_glosses,
        max_glosses: args.max_glosses,
    };
    config.validate().map_err(|e| usage(format!("{e}")))?;
    let data: Dataset<f32> = generate(&config).map_err(|e| anyhow!("{e}"))?;
    let out = artifacts::prepare_out_dir(&global.out_dir)?;
    artifacts::write_dataset(&out, &data)?;

    let count = |s: Split| data.split(s).count();
    let frames: usize = data.samples.iter().map(|s| s.video.shape()[0]).sum();
    let summary = json!({
        "vocab": data.glosses.len(),
        "sentences": data.samples.len(),
        "resolution": data.resolution,
        "seed": config.seed,
        "train": count(Split::Train),
        "dev": count(Split::Dev),
        "test": count(Split::Test),
        "mean_frames": frames as f64 / data.samples.len() as f64,
    });
    fs::write(out.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    println!(
        "wrote {} sentences ({} train / {} dev / {} test) over {} glosses at {}x{} to {}",
        data.samples.len(),
        count(Split::Train),
        count(Split::Dev),
        count(Split::Test),
        data.glosses.len(),
        data.resolution,
        data.resolution,
        out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// train

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset directory produced by `generate`
    #[arg(long, value_name = "DIR")]
    pub data: PathBuf,
    /// Architecture preset
    #[arg(long, default_value = "resnett34-desk")]
    pub preset: String,
    /// Network spec file overriding the preset
    #[arg(long, conflicts_with = "preset", value_name = "FILE")]
    pub spec_file: Option<PathBuf>,
    /// Temporal variant: tscm, plain2d, 2+1d, or 3d
    #[arg(long, value_parser = parse_variant, default_value = "tscm")]
    pub temporal: TemporalVariant,
    /// Shift pattern: crossover, superposition, random_crossover, tsm, identity
    #[arg(long, value_parser = parse_shift_mode)]
    pub mode: Option<ShiftMode>,
    /// Epochs override
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Learning-rate override
    #[arg(long)]
    pub lr: Option<f64>,
    /// Gradient-stop probability override
    #[arg(long)]
    pub p_stop: Option<f64>,
    /// Loss-level count override (1-3)
    #[arg(long)]
    pub levels: Option<usize>,
    /// Batch-size override
    #[arg(long)]
    pub batch: Option<usize>,
}

pub fn cmd_train(global: &Global, args: &TrainArgs) -> Result<()> {
    let data = artifacts::load_dataset(&args.data)?;
    let mut config = load_train_config(global)?;
    if let Some(v) = args.epochs {
        config.epochs = v;
    }
    if let Some(v) = args.lr {
        config.lr = v;
    }
    if let Some(v) = args.p_stop {
        config.p_stop = v;
    }
    if let Some(v) = args.levels {
        config.levels = v;
    }
    if let Some(v) = args.batch {
        config.batch_size = v;
    }
    if let Some(s) = global.seed {
        config.seed = s;
    }
    config.validate().map_err(|e| usage(format!("{e}")))?;

    let mut spec = resolve_spec(&args.preset, &args.spec_file)?;
    spec.variant = args.temporal;
    if let Some(mode) = args.mode {
        spec.tscm.mode = mode;
    }
    spec.vocab = data.glosses.len();
    spec.input_hw = (data.resolution, data.resolution);
    spec.validate().map_err(|e| usage(format!("{e}")))?;

    let out = artifacts::prepare_out_dir(&global.out_dir)?;
    let mut model: ModelInstance<f32> =
        ModelInstance::init(spec, config.seed).map_err(|e| usage(format!("{e}")))?;
    println!(
        "training {} ({}, shift {}) on {} train sentences, {} epochs, seed {}",
        model.spec.name,
        model.spec.variant.name(),
        model.spec.tscm.mode,
        data.split(Split::Train).count(),
        config.epochs,
        config.seed
    );
    let outcome = train(&mut model, &data, &config).map_err(|e| anyhow!("{e}"))?;
    for log in &outcome.logs {
        println!(
            "epoch {:>3}  lr {:.6}  train loss {:>8.4}  dev WER {:>6.2}%",
            log.epoch, log.lr, log.train_loss, log.dev_wer
        );
    }

    artifacts::write_metrics_csv(&out.join("metrics.csv"), &outcome)?;
    artifacts::save_checkpoint(&out.join("checkpoint"), &outcome.best)?;
    fs::write(out.join("train_config.txt"), config.to_text())?;
    let summary = json!({
        "network": outcome.best.spec.name,
        "variant": outcome.best.spec.variant.name(),
        "shift_mode": outcome.best.spec.tscm.mode.name(),
        "params": outcome.best.param_count(),
        "epochs": outcome.logs.len(),
        "best_epoch": outcome.best_epoch,
        "best_dev_wer": outcome.best_dev_wer,
        "seed": config.seed,
    });
    fs::write(out.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    println!(
        "best dev WER {:.2}% at epoch {}; checkpoint and metrics in {}",
        outcome.best_dev_wer,
        outcome.best_epoch,
        out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// eval

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Dataset directory produced by `generate`
    #[arg(long, value_name = "DIR")]
    pub data: PathBuf,
    /// Checkpoint directory produced by `train`
    #[arg(long, value_name = "DIR")]
    pub checkpoint: PathBuf,
    /// Split to score: train, dev, or test
    #[arg(long, default_value = "test")]
    pub split: String,
    /// Beam width for decoding
    #[arg(long, default_value_t = 10, value_parser = parse_positive)]
    pub beam: usize,
    /// Use greedy best-path decoding instead of the beam
    #[arg(long)]
    pub greedy: bool,
}

pub fn cmd_eval(global: &Global, args: &EvalArgs) -> Result<()> {
    let split = artifacts::parse_split(&args.split).map_err(|e| usage(format!("{e}")))?;
    let data = artifacts::load_dataset(&args.data)?;
    let mut model = artifacts::load_checkpoint(&args.checkpoint)?;
    if model.spec.vocab != data.glosses.len() {
        bail!(
            "checkpoint was trained over {} glosses, dataset has {}",
            model.spec.vocab,
            data.glosses.len()
        );
    }
    let report = if args.greedy {
        evaluate_greedy(&mut model, &data, split)
    } else {
        evaluate(&mut model, &data, split, args.beam)
    }
    .map_err(|e| anyhow!("{e}"))?;

    let out = artifacts::prepare_out_dir(&global.out_dir)?;
    artifacts::write_eval_csv(&out.join("eval.csv"), &report, &data.glosses)?;
    let summary = json!({
        "split": args.split,
        "decoder": if args.greedy { "greedy" } else { "beam" },
        "beam": args.beam,
        "sentences": report.sentences,
        "wer": report.wer,
        "insertions": report.ops.ins,
        "deletions": report.ops.del,
        "substitutions": report.ops.sub,
    });
    fs::write(out.join("eval_summary.json"), serde_json::to_string_pretty(&summary)?)?;
    println!(
        "{} WER {:.2}% over {} sentences (ins {}, del {}, sub {}); report in {}",
        args.split,
        report.wer,
        report.sentences,
        report.ops.ins,
        report.ops.del,
        report.ops.sub,
        out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// analyze / compare

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Architecture preset
    #[arg(long, default_value = "resnett34")]
    pub preset: String,
    /// Network spec file overriding the preset
    #[arg(long, conflicts_with = "preset", value_name = "FILE")]
    pub spec_file: Option<PathBuf>,
    /// Input size as HxW (defaults to the spec's own)
    #[arg(long, value_parser = parse_hw)]
    pub input: Option<(usize, usize)>,
    /// Clip length in frames
    #[arg(long, default_value_t = 200, value_parser = parse_positive)]
    pub frames: usize,
    /// Temporal variant override
    #[arg(long, value_parser = parse_variant)]
    pub temporal: Option<TemporalVariant>,
}

pub fn cmd_analyze(global: &Global, args: &AnalyzeArgs) -> Result<()> {
    let mut spec = resolve_spec(&args.preset, &args.spec_file)?;
    if let Some(v) = args.temporal {
        spec.variant = v;
    }
    let input = args.input.unwrap_or(spec.input_hw);
    let report = analyze(&spec, input, args.frames).map_err(|e| usage(format!("{e}")))?;
    let out = artifacts::prepare_out_dir(&global.out_dir)?;
    fs::write(out.join("analyze.json"), report::analyze_json(&report)?)?;
    fs::write(out.join("analyze.csv"), report::analyze_csv(&report))?;
    println!("{}", report::summary_line(&report));
    println!(
        "input {}x{}, {} frames; per-layer breakdown in {}",
        input.0,
        input.1,
        args.frames,
        out.display()
    );
    Ok(())
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Architecture preset shared by every variant
    #[arg(long, default_value = "resnett34")]
    pub preset: String,
    /// Input size as HxW (defaults to the spec's own)
    #[arg(long, value_parser = parse_hw)]
    pub input: Option<(usize, usize)>,
    /// Clip length in frames
    #[arg(long, default_value_t = 200, value_parser = parse_positive)]
    pub frames: usize,
}

pub fn cmd_compare(global: &Global, args: &CompareArgs) -> Result<()> {
    let base = resolve_spec(&args.preset, &None)?;
    let input = args.input.unwrap_or(base.input_hw);
    let specs: Vec<NetworkSpec> = ALL_VARIANTS
        .iter()
        .map(|&v| {
            let mut s = base.clone();
            s.variant = v;
            s
        })
        .collect();
    let reports = compare(&specs, input, args.frames).map_err(|e| usage(format!("{e}")))?;
    let out = artifacts::prepare_out_dir(&global.out_dir)?;
    fs::write(out.join("compare.csv"), report::compare_csv(&reports))?;
    let rows: Vec<serde_json::Value> = reports
        .iter()
        .map(|r| {
            json!({
                "variant": r.variant,
                "params": r.params,
                "memory_mib": r.memory_mib(),
                "gflops": r.gflops(),
            })
        })
        .collect();
    fs::write(
        out.join("compare.json"),
        serde_json::to_string_pretty(&json!({
            "network": base.name,
            "input": format!("{}x{}", input.0, input.1),
            "frames": args.frames,
            "rows": rows,
        }))?,
    )?;
    for r in &reports {
        println!("{}", report::summary_line(r));
    }
    println!("table written to {}", out.join("compare.csv").display());
    Ok(())
}

// ---------------------------------------------------------------------------
// bench

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Architecture preset to time
    #[arg(long, default_value = "resnett34-desk")]
    pub preset: String,
    /// Clip length in frames
    #[arg(long, default_value_t = 8, value_parser = parse_positive)]
    pub frames: usize,
    /// Timed repeats per variant (after one warmup)
    #[arg(long, default_value_t = 20, value_parser = parse_positive)]
    pub repeats: usize,
    /// Input size as HxW (defaults to the preset's own)
    #[arg(long, value_parser = parse_hw)]
    pub input: Option<(usize, usize)>,
}

struct BenchRow {
    variant: &'static str,
    median_ms: f64,
    mean_ms: f64,
    min_ms: f64,
    max_ms: f64,
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

pub fn cmd_bench(global: &Global, args: &BenchArgs) -> Result<()> {
    let seed = global.seed_or(0);
    let mut rows = Vec::new();
    for &variant in &ALL_VARIANTS {
        let mut spec = resolve_spec(&args.preset, &None)?;
        spec.variant = variant;
        if let Some(hw) = args.input {
            spec.input_hw = hw;
        }
        let input_hw = spec.input_hw;
        let mut model: ModelInstance<f32> =
            ModelInstance::init(spec, seed).map_err(|e| usage(format!("{e}")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let count = args.frames * 3 * input_hw.0 * input_hw.1;
        let clip: Vec<f32> = (0..count).map(|_| rng.gen_range(0.0..1.0)).collect();
        let clip = Tensor::new(&[args.frames, 3, input_hw.0, input_hw.1], clip)
            .map_err(|e| anyhow!("{e}"))?;

        let run_once = |model: &mut ModelInstance<f32>| -> Result<f64> {
            let start = Instant::now();
            let mut tape = tscm_core::Tape::new();
            let binding = model.bind(&mut tape, tscm_core::BindMode::Eval);
            let x = tape.leaf(&clip);
            let heads = model.forward(&mut tape, &binding, x).map_err(|e| anyhow!("{e}"))?;
            std::hint::black_box(tape.value(*heads.last().unwrap()));
            Ok(start.elapsed().as_secs_f64() * 1e3)
        };
        run_once(&mut model)?;
        let mut times = Vec::with_capacity(args.repeats);
        for _ in 0..args.repeats {
            times.push(run_once(&mut model)?);
        }
        times.sort_by(|a, b| a.partial_cmp(b).unwrap());
        rows.push(BenchRow {
            variant: variant.name(),
            median_ms: median(&times),
            mean_ms: times.iter().sum::<f64>() / times.len() as f64,
            min_ms: times[0],
            max_ms: times[times.len() - 1],
        });
    }

    let out = artifacts::prepare_out_dir(&global.out_dir)?;
    let mut csv = String::from("variant,repeats,median_ms,mean_ms,min_ms,max_ms\n");
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{:.3},{:.3},{:.3},{:.3}\n",
            r.variant, args.repeats, r.median_ms, r.mean_ms, r.min_ms, r.max_ms
        ));
    }
    fs::write(out.join("bench.csv"), &csv)?;
    let json_rows: Vec<serde_json::Value> = rows
        .iter()
        .map(|r| {
            json!({
                "variant": r.variant,
                "median_ms": r.median_ms,
                "mean_ms": r.mean_ms,
                "min_ms": r.min_ms,
                "max_ms": r.max_ms,
            })
        })
        .collect();
    fs::write(
        out.join("bench.json"),
        serde_json::to_string_pretty(&json!({
            "preset": args.preset,
            "frames": args.frames,
            "repeats": args.repeats,
            "rows": json_rows,
        }))?,
    )?;

    for r in &rows {
        println!(
            "{:<12} median {:>9.3} ms  mean {:>9.3} ms  ({} repeats)",
            r.variant, r.median_ms, r.mean_ms, args.repeats
        );
    }
    let mut observed: Vec<&BenchRow> = rows.iter().collect();
    observed.sort_by(|a, b| a.median_ms.partial_cmp(&b.median_ms).unwrap());
    let order: Vec<&str> = observed.iter().map(|r| r.variant).collect();
    println!(
        "observed latency order: {} (informational; plain2d <= tscm <= conv2plus1d <= conv3d expected, hardware-dependent)",
        order.join(" <= ")
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// equivcheck

#[derive(Debug, Args)]
pub struct EquivcheckArgs {
    /// Randomized trials to run
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    /// Corrupt the stacked weight arrangement on purpose
    #[arg(long)]
    pub negative_control: bool,
}

pub fn cmd_equivcheck(global: &Global, args: &EquivcheckArgs) -> Result<()> {
    const TOLERANCE: f64 = 1e-10;
    let out = artifacts::prepare_out_dir(&global.out_dir)?;
    if args.trials == 0 {
        println!("warning: 0 trials requested — equivalence trivially passes without evidence");
        fs::write(
            out.join("equivcheck.json"),
            serde_json::to_string_pretty(&json!({
                "trials": 0,
                "mode": "reference",
                "equivalent": true,
                "warning": "no trials were run",
            }))?,
        )?;
        return Ok(());
    }

    let mut rng = ChaCha8Rng::seed_from_u64(global.seed_or(0));
    let mut worst_diff: f64 = 0.0;
    let mut smallest_trial_diff = f64::INFINITY;
    for _ in 0..args.trials {
        let t = rng.gen_range(3..=12);
        let cin = rng.gen_range(1..=6);
        let cout = rng.gen_range(1..=6);
        let x: Vec<f64> = (0..t * cin).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x = Tensor::new(&[t, cin], x).map_err(|e| anyhow!("{e}"))?;
        let wv: Vec<f64> = (0..cout * cin * 3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let w = ConvWeights::new(cout, cin, KernelDims::temporal(3), wv)
            .map_err(|e| anyhow!("{e}"))?;
        let (direct, stacked) = if args.negative_control {
            stacked_equivalence_control(&x, &w)
        } else {
            stacked_equivalence_reference(&x, &w)
        }
        .map_err(|e| anyhow!("{e}"))?;
        let trial_diff = direct
            .data()
            .iter()
            .zip(stacked.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        worst_diff = worst_diff.max(trial_diff);
        smallest_trial_diff = smallest_trial_diff.min(trial_diff);
    }

    let mode = if args.negative_control { "negative-control" } else { "reference" };
    let equivalent = worst_diff < TOLERANCE;
    fs::write(
        out.join("equivcheck.json"),
        serde_json::to_string_pretty(&json!({
            "trials": args.trials,
            "mode": mode,
            "tolerance": TOLERANCE,
            "max_abs_diff": worst_diff,
            "min_trial_max_diff": smallest_trial_diff,
            "equivalent": equivalent,
        }))?,
    )?;

    if args.negative_control {
        if smallest_trial_diff <= 1e-6 {
            bail!(
                "negative control failed to diverge (a trial agreed to {smallest_trial_diff:.2e}) — \
                 the corrupted arrangement should never match"
            );
        }
        println!(
            "negative control: equivalence broken in every one of {} trials as intended \
             (smallest divergence {:.3e})",
            args.trials, smallest_trial_diff
        );
    } else {
        if !equivalent {
            bail!(
                "temporal and stacked-pointwise paths disagree: max abs diff {worst_diff:.3e} \
                 over {} trials (tolerance {TOLERANCE:.0e})",
                args.trials
            );
        }
        println!(
            "temporal convolution == stacked pointwise convolution on {} trials \
             (max abs diff {:.3e} < {TOLERANCE:.0e})",
            args.trials, worst_diff
        );
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// ablate

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    ResblocktCount,
    ModelSize,
    Superposition,
    ChannelSpan,
    TemporalPools,
    CtcLevels,
}

impl Axis {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "resblockt_count" => Ok(Axis::ResblocktCount),
            "model_size" => Ok(Axis::ModelSize),
            "superposition" => Ok(Axis::Superposition),
            "channel_span" => Ok(Axis::ChannelSpan),
            "temporal_pools" => Ok(Axis::TemporalPools),
            "ctc_levels" => Ok(Axis::CtcLevels),
            other => Err(usage(format!(
                "unknown ablation axis \"{other}\" (expected resblockt_count, model_size, \
                 superposition, channel_span, temporal_pools, or ctc_levels)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Axis::ResblocktCount => "resblockt_count",
            Axis::ModelSize => "model_size",
            Axis::Superposition => "superposition",
            Axis::ChannelSpan => "channel_span",
            Axis::TemporalPools => "temporal_pools",
            Axis::CtcLevels => "ctc_levels",
        }
    }
}

#[derive(Debug, Clone)]
pub struct AblationPlan {
    pub axis: Axis,
    pub values: Vec<String>,
    pub preset: String,
    pub temporal: TemporalVariant,
    pub data: DataConfig,
    pub train: TrainConfig,
}

pub fn parse_plan(text: &str) -> Result<AblationPlan> {
    let mut axis = None;
    let mut values = Vec::new();
    let mut preset = String::from("resnett34-desk");
    let mut temporal = TemporalVariant::Tscm;
    let mut data = DataConfig::default();
    let mut train_lines = String::new();
    for raw in text.lines() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, rest) = line
            .split_once(char::is_whitespace)
            .ok_or_else(|| usage(format!("malformed plan line \"{line}\"")))?;
        let rest = rest.trim();
        let num = |what: &str, v: &str| -> Result<usize> {
            v.parse().map_err(|_| usage(format!("{what}: \"{v}\" is not a count")))
        };
        match key {
            "axis" => axis = Some(Axis::parse(rest)?),
            "values" => {
                values = rest.split_whitespace().map(str::to_string).collect();
            }
            "preset" => preset = rest.to_string(),
            "temporal" => {
                temporal = TemporalVariant::parse(rest).map_err(|e| usage(format!("{e}")))?;
            }
            "data_vocab" => data.vocab = num(key, rest)?,
            "data_sentences" => data.sentences = num(key, rest)?,
            "data_resolution" => data.resolution = num(key, rest)?,
            "data_seed" => {
                data.seed = rest.parse().map_err(|_| usage(format!("bad data_seed \"{rest}\"")))?;
            }
            "data_min_glosses" => data.min_glosses = num(key, rest)?,
            "data_max_glosses" => data.max_glosses = num(key, rest)?,
            _ => {
                train_lines.push_str(line);
                train_lines.push('\n');
            }
        }
    }
    let axis = axis.ok_or_else(|| usage("plan is missing an \"axis\" line".to_string()))?;
    if values.is_empty() {
        return Err(usage("plan is missing a \"values\" line".to_string()));
    }
    data.validate().map_err(|e| usage(format!("{e}")))?;
    let train = TrainConfig::parse(&train_lines).map_err(|e| usage(format!("{e}")))?;
    Ok(AblationPlan { axis, values, preset, temporal, data, train })
}

/// Builds the per-run network and training configuration for one axis value.
pub fn apply_axis(
    plan: &AblationPlan,
    value: &str,
    spec: &mut NetworkSpec,
    config: &mut TrainConfig,
) -> Result<()> {
    let numeric = |v: &str| -> Result<usize> {
        v.parse().map_err(|_| usage(format!("axis value \"{v}\" is not a number")))
    };
    match plan.axis {
        Axis::ResblocktCount => {
            let v = numeric(value)?;
            if !(4..=8).contains(&v) {
                return Err(usage(format!("resblockt_count {v} outside the studied 4-8")));
            }
            spec.replaced_tail = v;
        }
        Axis::ModelSize => {
            let v = numeric(value)?;
            if ![34, 50, 101].contains(&v) {
                return Err(usage(format!("model_size {v} is not one of 34, 50, 101")));
            }
            let donor = if v == 34 {
                NetworkSpec::preset("resnett34")
            } else {
                NetworkSpec::preset(&format!("resnett{v}"))
            }
            .map_err(|e| anyhow!("{e}"))?;
            spec.stages = donor.stages;
            spec.replaced_tail = donor.replaced_tail;
            spec.name = format!("{}-{v}", plan.preset);
        }
        Axis::Superposition => {
            let mode = ShiftMode::parse(value).map_err(|e| usage(format!("{e}")))?;
            if mode == ShiftMode::Identity {
                return Err(usage(
                    "identity is the baseline, not one of the studied shift arrangements"
                        .to_string(),
                ));
            }
            spec.tscm.mode = mode;
        }
        Axis::ChannelSpan => {
            let v = numeric(value)?;
            if ![3, 5, 7].contains(&v) {
                return Err(usage(format!("channel_span {v} is not one of 3, 5, 7")));
            }
            spec.tscm.span = v;
        }
        Axis::TemporalPools => {
            let v = numeric(value)?;
            if v > 3 {
                return Err(usage(format!("temporal_pools {v} outside the studied 0-3")));
            }
            spec.temporal_pools =
                NetworkSpec::pools_for_count(v, spec.stages.len()).map_err(|e| anyhow!("{e}"))?;
            let levels = config.levels.min(v + 1);
            config.levels = levels;
            spec.heads =
                NetworkSpec::heads_for_levels(levels, v).map_err(|e| anyhow!("{e}"))?;
        }
        Axis::CtcLevels => {
            let v = numeric(value)?;
            if !(1..=3).contains(&v) {
                return Err(usage(format!("ctc_levels {v} is not one of 1, 2, 3")));
            }
            config.levels = v;
        }
    }
    spec.validate().map_err(|e| usage(format!("{e}")))?;
    config.validate().map_err(|e| usage(format!("{e}")))?;
    Ok(())
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    /// Ablation plan file
    #[arg(long, value_name = "FILE")]
    pub plan: PathBuf,
    /// Reuse a dataset directory instead of generating from the plan
    #[arg(long, value_name = "DIR")]
    pub data: Option<PathBuf>,
    /// Train the axis values on separate threads
    #[arg(long)]
    pub parallel: bool,
}

struct RunOutcome {
    value: String,
    seed: u64,
    params: u64,
    logs: Vec<EpochLog>,
    best_epoch: usize,
    best_dev_wer: f64,
}

fn run_ablation_value(
    spec: NetworkSpec,
    config: TrainConfig,
    data: &Dataset<f32>,
    value: &str,
) -> Result<RunOutcome> {
    let mut model: ModelInstance<f32> =
        ModelInstance::init(spec, config.seed).map_err(|e| anyhow!("{value}: {e}"))?;
    let params = model.param_count();
    let outcome = train(&mut model, data, &config).map_err(|e| anyhow!("{value}: {e}"))?;
    Ok(RunOutcome {
        value: value.to_string(),
        seed: config.seed,
        params,
        logs: outcome.logs,
        best_epoch: outcome.best_epoch,
        best_dev_wer: outcome.best_dev_wer,
    })
}

pub fn cmd_ablate(global: &Global, args: &AblateArgs) -> Result<()> {
    let text = fs::read_to_string(&args.plan)
        .with_context(|| format!("reading {}", args.plan.display()))?;
    let mut plan = parse_plan(&text)?;
    if let Some(seed) = global.seed {
        plan.train.seed = seed;
        plan.data.seed = seed;
    }
    let data: Dataset<f32> = match &args.data {
        Some(dir) => artifacts::load_dataset(dir)?,
        None => generate(&plan.data).map_err(|e| anyhow!("{e}"))?,
    };

    let mut prepared = Vec::new();
    for (i, value) in plan.values.iter().enumerate() {
        let mut spec = resolve_spec(&plan.preset, &None)?;
        spec.variant = plan.temporal;
        spec.vocab = data.glosses.len();
        spec.input_hw = (data.resolution, data.resolution);
        let mut config = plan.train.clone();
        config.seed = plan.train.seed + i as u64;
        apply_axis(&plan, value, &mut spec, &mut config)?;
        prepared.push((value.clone(), spec, config));
    }

    println!(
        "ablating {} over {:?} ({} runs, {})",
        plan.axis.name(),
        plan.values,
        prepared.len(),
        if args.parallel { "parallel" } else { "sequential" }
    );
    let outcomes: Vec<RunOutcome> = if args.parallel {
        std::thread::scope(|scope| {
            let handles: Vec<_> = prepared
                .iter()
                .map(|(value, spec, config)| {
                    let (spec, config) = (spec.clone(), config.clone());
                    let data = &data;
                    scope.spawn(move || run_ablation_value(spec, config, data, value))
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().map_err(|_| anyhow!("an ablation thread panicked"))?)
                .collect::<Result<Vec<_>>>()
        })?
    } else {
        prepared
            .iter()
            .map(|(value, spec, config)| {
                run_ablation_value(spec.clone(), config.clone(), &data, value)
            })
            .collect::<Result<Vec<_>>>()?
    };

    let out = artifacts::prepare_out_dir(&global.out_dir)?;
    let mut table = String::from("axis,value,seed,params,epochs,best_epoch,best_dev_wer\n");
    for r in &outcomes {
        table.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            plan.axis.name(),
            r.value,
            r.seed,
            r.params,
            r.logs.len(),
            r.best_epoch,
            r.best_dev_wer
        ));
    }
    fs::write(out.join("ablate.csv"), &table)?;

    let mut curves = String::from("axis,value,epoch,lr,train_loss,dev_wer\n");
    for r in &outcomes {
        for log in &r.logs {
            curves.push_str(&format!(
                "{},{},{},{},{},{}\n",
                plan.axis.name(),
                r.value,
                log.epoch,
                log.lr,
                log.train_loss,
                log.dev_wer
            ));
        }
    }
    fs::write(out.join("curves.csv"), &curves)?;

    let series: Vec<Series> = outcomes
        .iter()
        .map(|r| Series {
            label: format!("{}={}", plan.axis.name(), r.value),
            points: r.logs.iter().map(|l| (l.epoch as f64, l.dev_wer)).collect(),
        })
        .collect();
    fs::write(
        out.join("curves.svg"),
        report::line_chart(
            &format!("dev WER by {}", plan.axis.name()),
            "epoch",
            "dev WER (%)",
            &series,
        ),
    )?;

    for r in &outcomes {
        println!(
            "{}={:<16} params {:>9}  best dev WER {:>6.2}% (epoch {})",
            plan.axis.name(),
            r.value,
            r.params,
            r.best_dev_wer,
            r.best_epoch
        );
    }
    println!("table, curves, and chart in {}", out.display());
    Ok(())
}
