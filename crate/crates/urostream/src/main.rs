//! Command-line pipeline: generate traces, train, evaluate, stream, bench.

use std::io::{BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use urostream::checkpoint::{make_checkpoint, Checkpoint, CheckpointHeader, FORMAT_VERSION};
use urostream::cost::{bench_latency, count_flops, format_kb};
use urostream::engine::{run_trace, Engine, EngineMode, PREDICTION_CSV_HEADER};
use urostream::error::Error;
use urostream::features::{fit_norm, trace_features, NormStats};
use urostream::label::{multi_hot_to_set, LabelSet};
use urostream::model::{HeadMode, ModelConfig, ModelWeights, Preset};
use urostream::quant::{dequantize, quantize, weight_payload_bytes};
use urostream::runconfig::RunConfig;
use urostream::synth::{
    generate, long_memory_task_with_layout, read_trace, write_trace, LabeledTrace,
    LongMemoryLayout,
};
use urostream::train::{
    build_dataset, evaluate, loss_curve_csv, train, union_labels, vote_single_label,
};

#[derive(Parser)]
#[command(name = "urostream", version, about = "Streaming transformer toolkit for bladder-pressure state classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labeled synthetic pressure trace.
    Gen(GenArgs),
    /// Train a model on labeled traces and write a checkpoint.
    Train(TrainArgs),
    /// Evaluate a checkpoint on labeled traces (non-overlapping segments).
    Eval(EvalArgs),
    /// Stream per-segment predictions for a trace or standard input.
    Stream(StreamArgs),
    /// Print per-component FLOPs/memory and measure per-segment latency.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum GenPreset {
    Standard,
    LongMemory,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum VariantArg {
    Segment,
    Streaming,
}

impl From<VariantArg> for EngineMode {
    fn from(v: VariantArg) -> EngineMode {
        match v {
            VariantArg::Segment => EngineMode::SegmentLevel,
            VariantArg::Streaming => EngineMode::Streaming,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum HeadArg {
    Softmax,
    Sigmoid,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModelPresetArg {
    Equation,
    Table,
}

#[derive(Args)]
struct ConfigArg {
    /// Flat key-value run configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl ConfigArg {
    fn load(&self) -> Result<RunConfig, Error> {
        match &self.config {
            Some(path) => RunConfig::load(path),
            None => Ok(RunConfig::default()),
        }
    }
}

#[derive(Args)]
struct GenArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Output trace CSV path (the event log lands next to it).
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    length: Option<usize>,
    /// Trace family: ordinary events or the long-memory task.
    #[arg(long, value_enum, default_value = "standard")]
    preset: GenPreset,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Labeled trace CSV files (training split).
    #[arg(long, required = true, num_args = 1..)]
    trace: Vec<PathBuf>,
    /// Output checkpoint path; the loss curve CSV lands next to it.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "segment")]
    variant: VariantArg,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Learning rate override (defaults: 1e-3 segment, 1e-6 streaming).
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long, value_enum)]
    head: Option<HeadArg>,
    #[arg(long, value_enum)]
    preset: Option<ModelPresetArg>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, required = true, num_args = 1..)]
    trace: Vec<PathBuf>,
    /// Score warm-up segments too (excluded by default).
    #[arg(long)]
    include_warmup: bool,
    /// Directory for metrics.csv / metrics.md (stdout only when absent).
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct StreamArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Input CSV (`t,pressure`); standard input when absent or `-`.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Override the checkpoint's inference mode.
    #[arg(long, value_enum)]
    mode: Option<VariantArg>,
    /// Run int8-quantized weights; label agreement with the float run is
    /// reported on exit.
    #[arg(long)]
    quantized: bool,
    /// Abort on malformed input lines instead of skipping them.
    #[arg(long)]
    strict: bool,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Model shape preset to account for.
    #[arg(long, value_enum, default_value = "table")]
    preset: ModelPresetArg,
    /// Take config and weights from a checkpoint instead of the preset.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Segments to time (at least 100).
    #[arg(long, default_value = "1000")]
    segments: usize,
    /// Optional CSV output path for the cost rows.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version are not usage errors.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Gen(args) => cmd_gen(args),
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Stream(args) => cmd_stream(args),
        Command::Bench(args) => cmd_bench(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e {
                Error::Diverged(_) | Error::NonFinite(_) => 3,
                _ => 2,
            };
            ExitCode::from(code)
        }
    }
}

fn cmd_gen(args: GenArgs) -> Result<(), Error> {
    let mut run = args.config.load()?;
    if let Some(seed) = args.seed {
        run.seed = seed;
    }
    if let Some(length) = args.length {
        run.gen_length = length;
    }
    let trace_cfg = run.trace_config();
    let trace = match args.preset {
        GenPreset::Standard => generate(&trace_cfg)?,
        GenPreset::LongMemory => {
            long_memory_task_with_layout(&trace_cfg, &LongMemoryLayout::with_delay(run.lm_delay))?
        }
    };
    write_trace(&args.out, &trace)?;
    println!(
        "wrote {} samples, {} events -> {}",
        trace.len(),
        trace.events.len(),
        args.out.display()
    );
    Ok(())
}

/// Per-sample features for a list of traces plus fitted normalization.
fn fit_norm_over(
    traces: &[LabeledTrace],
    run: &RunConfig,
) -> Result<NormStats, Error> {
    let mut all = Vec::new();
    for t in traces {
        all.extend(trace_features(&t.samples, &run.ratio_pairs, run.ratio_eps)?);
    }
    fit_norm(&all)
}

fn cmd_train(args: TrainArgs) -> Result<(), Error> {
    let mut run = args.config.load()?;
    if let Some(seed) = args.seed {
        run.seed = seed;
    }
    if let Some(epochs) = args.epochs {
        run.epochs = epochs;
    }
    if let Some(head) = args.head {
        run.head_mode = match head {
            HeadArg::Softmax => HeadMode::Softmax,
            HeadArg::Sigmoid => HeadMode::Sigmoid,
        };
    }
    if let Some(preset) = args.preset {
        run.preset = match preset {
            ModelPresetArg::Equation => Preset::Equation,
            ModelPresetArg::Table => Preset::Table,
        };
    }
    let variant: EngineMode = args.variant.into();
    let mut train_cfg = run.train_config(variant);
    if let Some(lr) = args.lr {
        train_cfg.learning_rate = lr;
    }
    let model_cfg = run.model_config()?;

    let traces: Vec<LabeledTrace> = args
        .trace
        .iter()
        .map(|p| read_trace(p))
        .collect::<Result<_, _>>()?;
    let norm = fit_norm_over(&traces, &run)?;

    let mut dataset = Vec::new();
    for trace in &traces {
        dataset.extend(build_dataset(
            trace,
            1,
            variant,
            &model_cfg,
            &norm,
            &run.ratio_pairs,
            run.ratio_eps,
            train_cfg.voting_threshold,
        )?);
    }
    if dataset.is_empty() {
        return Err(Error::InvalidInput(
            "training traces yielded no segments".into(),
        ));
    }

    let (weights, curve) = train(&dataset, &model_cfg, &train_cfg, variant)?;
    let header = CheckpointHeader {
        format_version: FORMAT_VERSION,
        model: model_cfg,
        variant,
        ratio_pairs: run.ratio_pairs.clone(),
        ratio_eps: run.ratio_eps,
        norm,
        train: train_cfg,
        decode_threshold: run.decode_threshold,
    };
    let ckpt = make_checkpoint(header, weights);
    ckpt.save(&args.out)?;
    let curve_path = args.out.with_extension("loss.csv");
    std::fs::write(&curve_path, loss_curve_csv(&curve))?;
    println!(
        "trained {} epochs on {} segments; loss {} -> {}; checkpoint {}",
        curve.len(),
        dataset.len(),
        curve.first().map(|v| format!("{v:.6}")).unwrap_or_else(|| "-".into()),
        curve.last().map(|v| format!("{v:.6}")).unwrap_or_else(|| "-".into()),
        args.out.display()
    );
    Ok(())
}

fn engine_from_checkpoint(ckpt: &Checkpoint, mode: EngineMode) -> Result<Engine, Error> {
    Engine::new(
        ckpt.header.model.clone(),
        ckpt.header.norm.clone(),
        mode,
        ckpt.header.ratio_pairs.clone(),
        ckpt.header.ratio_eps,
        ckpt.header.decode_threshold,
    )
}

/// Ground-truth label set for one evaluation segment.
fn segment_target(
    trace: &LabeledTrace,
    start: usize,
    len: usize,
    head: HeadMode,
    voting_threshold: f64,
) -> LabelSet {
    let rows = &trace.labels[start..start + len];
    match head {
        HeadMode::Softmax => [vote_single_label(rows, voting_threshold)]
            .into_iter()
            .collect(),
        HeadMode::Sigmoid => multi_hot_to_set(&union_labels(rows)),
    }
}

fn cmd_eval(args: EvalArgs) -> Result<(), Error> {
    let ckpt = Checkpoint::load(&args.checkpoint)?;
    let t_len = ckpt.header.model.segment_len;
    let head = ckpt.header.model.head_mode;
    let voting = ckpt.header.train.voting_threshold;

    let mut preds_all: Vec<LabelSet> = Vec::new();
    let mut targets_all: Vec<LabelSet> = Vec::new();
    let mut preds_steady: Vec<LabelSet> = Vec::new();
    let mut targets_steady: Vec<LabelSet> = Vec::new();

    for path in &args.trace {
        let trace = read_trace(path)?;
        if trace.len() < t_len {
            return Err(Error::InvalidInput(format!(
                "{}: no segments (trace has {} samples, a segment needs {})",
                path.display(),
                trace.len(),
                t_len
            )));
        }
        let mut engine = engine_from_checkpoint(&ckpt, ckpt.header.variant)?;
        let preds = run_trace(&mut engine, &trace.samples, &ckpt.weights)?;
        for (k, p) in preds.iter().enumerate() {
            let target = segment_target(&trace, k * t_len, t_len, head, voting);
            preds_all.push(p.labels.clone());
            targets_all.push(target.clone());
            if !p.warmup {
                preds_steady.push(p.labels.clone());
                targets_steady.push(target);
            }
        }
    }

    let full = evaluate(&preds_all, &targets_all)?;
    println!(
        "all segments: {} scored, overall accuracy {:.2}%",
        full.total, full.overall_accuracy
    );
    let report = if args.include_warmup {
        full
    } else {
        let steady = evaluate(&preds_steady, &targets_steady).map_err(|_| {
            Error::InvalidInput(
                "no segments left after warm-up exclusion; rerun with --include-warmup".into(),
            )
        })?;
        println!(
            "steady state: {} scored ({} warm-up excluded), overall accuracy {:.2}%",
            steady.total,
            full.total - steady.total,
            steady.overall_accuracy
        );
        steady
    };

    print!("{}", report.to_markdown());
    if let Some(dir) = &args.out_dir {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("metrics.csv"), report.to_csv())?;
        std::fs::write(dir.join("metrics.md"), report.to_markdown())?;
        println!("metrics written to {}", dir.display());
    }
    Ok(())
}

fn parse_pressure_line(line: &str) -> Result<f64, Error> {
    let mut fields = line.split(',');
    let _t = fields
        .next()
        .ok_or_else(|| Error::InvalidInput("empty line".into()))?;
    let p = fields
        .next()
        .ok_or_else(|| Error::InvalidInput(format!("no pressure field in '{line}'")))?;
    p.trim()
        .parse::<f64>()
        .map_err(|_| Error::InvalidInput(format!("bad pressure value '{p}'")))
}

fn cmd_stream(args: StreamArgs) -> Result<(), Error> {
    let ckpt = Checkpoint::load(&args.checkpoint)?;
    let mode = args
        .mode
        .map(EngineMode::from)
        .unwrap_or(ckpt.header.variant);
    let mut engine = engine_from_checkpoint(&ckpt, mode)?;
    let float_weights = ckpt.weights.clone();
    // With --quantized the primary engine runs dequantized int8 weights and
    // a shadow engine runs the float weights for the agreement report.
    let (weights, mut shadow) = if args.quantized {
        let q = quantize(&ckpt.weights)?;
        (dequantize(&q)?, Some(engine_from_checkpoint(&ckpt, mode)?))
    } else {
        (ckpt.weights.clone(), None)
    };

    let stdin = std::io::stdin();
    let reader: Box<dyn BufRead> = match args.input.as_deref() {
        None => Box::new(stdin.lock()),
        Some(p) if p == Path::new("-") => Box::new(stdin.lock()),
        Some(p) => Box::new(std::io::BufReader::new(std::fs::File::open(p)?)),
    };
    let stdout = std::io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    // A closed downstream pipe (e.g. `| head`) ends the stream cleanly.
    let emit = |out: &mut BufWriter<std::io::StdoutLock>, line: &str| -> Result<bool, Error> {
        match writeln!(out, "{line}").and_then(|()| out.flush()) {
            Ok(()) => Ok(true),
            Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(false),
            Err(e) => Err(e.into()),
        }
    };
    if !emit(&mut out, PREDICTION_CSV_HEADER)? {
        return Ok(());
    }

    let mut agree = 0usize;
    let mut total = 0usize;
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('t') {
            continue; // header or blank
        }
        let x = match parse_pressure_line(trimmed) {
            Ok(x) => x,
            Err(e) => {
                if args.strict {
                    return Err(Error::parse(lineno, e.to_string()));
                }
                eprintln!("warning: line {lineno}: {e}; skipped");
                continue;
            }
        };
        let pred = engine.step(x, &weights)?;
        let float_pred = match shadow.as_mut() {
            Some(float_engine) => float_engine.step(x, &float_weights)?,
            None => None,
        };
        if let Some(p) = pred {
            // One CSV line per completed segment, flushed for pipelines.
            if !emit(&mut out, &urostream::engine::prediction_csv_row(&p))? {
                break;
            }
            if let Some(fp) = float_pred {
                total += 1;
                if fp.labels == p.labels {
                    agree += 1;
                }
            }
        }
    }
    if args.quantized && total > 0 {
        eprintln!(
            "quantized/float label agreement: {agree}/{total} segments ({:.2}%)",
            100.0 * agree as f64 / total as f64
        );
    }
    Ok(())
}

fn cmd_bench(args: BenchArgs) -> Result<(), Error> {
    let run = args.config.load()?;
    let (model_cfg, weights, norm, pairs, eps, threshold) = match &args.checkpoint {
        Some(path) => {
            let ckpt = Checkpoint::load(path)?;
            (
                ckpt.header.model.clone(),
                ckpt.weights.clone(),
                ckpt.header.norm.clone(),
                ckpt.header.ratio_pairs.clone(),
                ckpt.header.ratio_eps,
                ckpt.header.decode_threshold,
            )
        }
        None => {
            let cfg = match args.preset {
                ModelPresetArg::Equation => ModelConfig::equation(),
                ModelPresetArg::Table => ModelConfig::table(),
            };
            let weights = ModelWeights::init(&cfg, run.seed);
            (
                cfg,
                weights,
                NormStats::identity(),
                run.ratio_pairs.clone(),
                run.ratio_eps,
                run.decode_threshold,
            )
        }
    };

    let report = count_flops(&model_cfg)?;
    println!("{}", report.to_markdown());
    if model_cfg.preset == Preset::Equation {
        println!(
            "note: the equation preset narrows the MLP (64->64->16), so its \
             rows differ from the published table-shape arithmetic."
        );
    }
    let payload = weight_payload_bytes(&quantize(&weights)?);
    println!(
        "quantized weight payload: {} kB (int8 weights + scales + f32 biases)\n",
        format_kb(payload as u64)
    );

    let mut engine = Engine::new(
        model_cfg.clone(),
        norm,
        EngineMode::Streaming,
        pairs,
        eps,
        threshold,
    )?;
    if args.segments < 100 {
        return Err(Error::InvalidInput(
            "latency benchmark needs --segments >= 100".into(),
        ));
    }
    let trace_cfg = urostream::synth::TraceConfig {
        length: args.segments * model_cfg.segment_len + 512,
        seed: run.seed,
        ..Default::default()
    };
    let trace = generate(&trace_cfg)?;
    let lat = bench_latency(&mut engine, &weights, &trace.samples, 5)?;
    println!("{}", lat.summary());

    if let Some(out) = &args.out {
        let mut csv = report.to_csv();
        csv.push_str(&format!(
            "LATENCY_MS,mean,{:.6}\nLATENCY_MS,p50,{:.6}\nLATENCY_MS,p99,{:.6}\nLATENCY_MS,max,{:.6}\n",
            lat.mean_ms, lat.p50_ms, lat.p99_ms, lat.max_ms
        ));
        std::fs::write(out, csv)?;
        println!("cost rows written to {}", out.display());
    }
    Ok(())
}
