//! Command-line front end: training, evaluation, prediction, counting,
//! benchmarking and the receptive-field analyses.

pub mod config;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};

use crate::analysis::{
    branch_weight_stats, dump_feature_heatmaps, erf_map, network_rf, support_box, ErfTap,
};
use crate::data::{read_ppm, write_pgm, Mask, ShapesSpec};
use crate::engine::{save_nt, Tensor};
use crate::error::{Error, Result};
use crate::network::{
    benchmark_forward, build, count_report, infer, load_checkpoint, save_checkpoint, NetworkConfig, Variant,
    REFERENCE_INPUT,
};
use crate::params::ParamStore;
use crate::training::{argmax_labels, evaluate, train_loop, MiouReport};

pub use config::{DataConfig, ManifestData, RunConfig, ShapesData, TrainSection};

#[derive(Debug, Parser)]
#[command(name = "dwrseg", version, about = "DWR/SIR real-time segmentation networks on a deterministic CPU engine")]
pub struct Cli {
    /// Run configuration (JSON). Built-in defaults are used when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configuration seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads. Results are bitwise identical for any value.
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,
    /// Output directory (overrides `out_dir` of the configuration).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train; writes model.ckpt, metrics.jsonl, eval.json and config.json.
    Train {
        /// Overrides `train.iters`; 0 writes the untrained model.
        #[arg(long)]
        iters: Option<usize>,
    },
    /// mIoU report of a checkpoint, as JSON.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Directory of image/mask pairs; defaults to the configured validation data.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value_t = 4)]
        batch: usize,
    },
    /// Writes the argmax label map of one PPM image as PGM.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Parameter and multiply-accumulate counts.
    Count(CountArgs),
    /// Forward latency of a freshly initialized model.
    Bench(BenchArgs),
    /// Receptive-field and weight analyses.
    #[command(subcommand)]
    Analyze(Analyze),
    /// Prints the resolved run configuration.
    Config,
}

#[derive(Debug, Args)]
pub struct CountArgs {
    pub variant: Variant,
    #[arg(long, default_value_t = REFERENCE_INPUT.0)]
    pub height: usize,
    #[arg(long, default_value_t = REFERENCE_INPUT.1)]
    pub width: usize,
    #[arg(long, default_value_t = 19)]
    pub classes: usize,
    /// List every layer, not only stage totals.
    #[arg(long)]
    pub per_layer: bool,
    /// Print JSON instead of the table.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    pub variant: Variant,
    pub height: usize,
    pub width: usize,
    #[arg(long, default_value_t = 2)]
    pub warmup: usize,
    #[arg(long, default_value_t = 10)]
    pub iters: usize,
    #[arg(long, default_value_t = 1)]
    pub batch: usize,
    #[arg(long, default_value_t = 19)]
    pub classes: usize,
    #[arg(long)]
    pub json: bool,
}

/// Model source for the analyses: a checkpoint, or a freshly seeded preset.
#[derive(Debug, Args)]
pub struct ModelArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, default_value = "tiny")]
    pub variant: Variant,
    #[arg(long, default_value_t = 4)]
    pub classes: usize,
}

/// Analysis input: a PPM image, or a synthetic sample of the given size.
#[derive(Debug, Args)]
pub struct InputArgs {
    #[arg(long)]
    pub image: Option<PathBuf>,
    #[arg(long, default_value_t = 128)]
    pub height: usize,
    #[arg(long, default_value_t = 128)]
    pub width: usize,
}

#[derive(Debug, Subcommand)]
pub enum Analyze {
    /// Theoretical receptive field of every block.
    Rf {
        variant: Variant,
        #[arg(long)]
        json: bool,
    },
    /// Input-gradient map of one output unit (writes erf.nt, erf.pgm, erf.json).
    Erf {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        input: InputArgs,
        /// s2, s3, s4 or logits.
        #[arg(long, default_value = "s4")]
        tap: ErfTap,
        /// Unit row; defaults to the centre.
        #[arg(long)]
        y: Option<usize>,
        #[arg(long)]
        x: Option<usize>,
    },
    /// Pointwise weight PMF/CDF per branch of a probe model (writes weights.json).
    Weights {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 20)]
        bins: usize,
    },
    /// Region and semantic feature maps of one block as PGM and .nt.
    Heatmaps {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        input: InputArgs,
        /// Block name, e.g. s3.1.
        #[arg(long)]
        block: String,
    },
}

/// Parses the process arguments; `--help` lists the default configuration.
pub fn parse_args() -> Cli {
    let help = format!("Default configuration (--config):\n{}", RunConfig::default().to_json());
    let matches = Cli::command().after_long_help(help).get_matches();
    Cli::from_arg_matches(&matches).unwrap_or_else(|e| e.exit())
}

/// 2 for configuration and input problems, 3 for numeric failures, 1 otherwise.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::NonFinite { .. } => 3,
        Error::InvalidConfig(_) | Error::Json(_) | Error::EmptyDataset | Error::Unpaired(_) => 2,
        _ => 1,
    }
}

impl Cli {
    /// The configuration file (or defaults) with command-line overrides applied.
    pub fn run_config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.out_dir = out.clone();
        }
        Ok(cfg)
    }
}

/// Executes `cli`, writing human-readable output to `stdout`.
pub fn run(cli: &Cli, stdout: &mut (dyn Write + Send)) -> Result<()> {
    if cli.threads == 0 {
        return Err(Error::InvalidConfig("--threads must be positive".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    pool.install(|| dispatch(cli, stdout))
}

fn dispatch(cli: &Cli, stdout: &mut (dyn Write + Send)) -> Result<()> {
    let cfg = cli.run_config()?;
    match &cli.command {
        Command::Train { iters } => {
            let mut cfg = cfg;
            if let Some(n) = iters {
                cfg.train.iters = *n;
            }
            let summary = cmd_train(&cfg)?;
            writeln!(stdout, "{summary}")?;
        }
        Command::Eval { checkpoint, data, batch } => {
            let report = cmd_eval(&cfg, checkpoint, data.as_deref(), *batch)?;
            writeln!(stdout, "{}", serde_json::to_string_pretty(&report)?)?;
            if cli.out.is_some() {
                write_json(&cfg.out_dir.join("eval.json"), &report)?;
            }
        }
        Command::Predict { checkpoint, image, output } => {
            let mask = cmd_predict(checkpoint, image, output)?;
            writeln!(stdout, "wrote {} ({}x{})", output.display(), mask.w, mask.h)?;
        }
        Command::Count(a) => {
            let report = count_report(&NetworkConfig::preset(a.variant, a.classes), a.height, a.width)?;
            if a.json {
                writeln!(stdout, "{}", report.to_json())?;
            } else {
                write!(stdout, "{}", report.to_text(a.per_layer))?;
            }
            if cli.out.is_some() {
                write_json(&cfg.out_dir.join("count.json"), &report)?;
            }
        }
        Command::Bench(a) => {
            let net = NetworkConfig::preset(a.variant, a.classes);
            let store = build(&net, cfg.seed)?;
            let report = benchmark_forward(&store, &net, [a.batch, 3, a.height, a.width], a.warmup, a.iters)?;
            if a.json {
                writeln!(stdout, "{}", serde_json::to_string_pretty(&report)?)?;
            } else {
                write!(stdout, "{}", report.to_text())?;
            }
        }
        Command::Analyze(what) => analyze(what, &cfg, stdout)?,
        Command::Config => writeln!(stdout, "{}", cfg.to_json())?,
    }
    Ok(())
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

/// Trains as configured and writes the run artifacts to `cfg.out_dir`.
/// Returns a one-line summary.
pub fn cmd_train(cfg: &RunConfig) -> Result<String> {
    cfg.validate()?;
    let net = cfg.network();
    let (train, val) = cfg.datasets()?;
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let dir = &cfg.out_dir;
    std::fs::create_dir_all(dir)?;
    write_json(&dir.join("config.json"), cfg)?;

    let mut store = build(&net, cfg.seed)?;
    let mut log = BufWriter::new(File::create(dir.join("metrics.jsonl"))?);
    let outcome = train_loop(&net, &mut store, &train, &val, &cfg.train_config(), &mut |r| {
        writeln!(log, "{}", serde_json::to_string(r)?)?;
        log.flush()?;
        Ok(())
    })?;
    drop(log);
    save_checkpoint(dir.join("model.ckpt"), &net, &store)?;
    let report = match outcome.final_eval {
        Some(r) => r,
        None => evaluate(&net, &store, &train, cfg.train.batch)?,
    };
    write_json(&dir.join("eval.json"), &report)?;
    Ok(format!(
        "trained {} iters; final loss {}; mIoU {:.4}; artifacts in {}",
        cfg.train.iters,
        outcome.final_loss.map_or("n/a".to_string(), |l| format!("{l:.4}")),
        report.miou,
        dir.display()
    ))
}

/// mIoU of a checkpoint on a manifest directory, or on the configured
/// validation split.
pub fn cmd_eval(cfg: &RunConfig, checkpoint: &Path, data: Option<&Path>, batch: usize) -> Result<MiouReport> {
    let (net, store) = load_checkpoint(checkpoint)?;
    let samples = match data {
        Some(dir) => crate::data::load_dataset(dir)?,
        None => cfg.datasets()?.1,
    };
    evaluate(&net, &store, &samples, batch)
}

/// Label map of an image of any size: the image is zero-padded on the
/// bottom and right to a multiple of 32 and the prediction cropped back.
pub fn predict_mask(store: &ParamStore, net: &NetworkConfig, image: &Tensor) -> Result<Mask> {
    let [n, c, h, w] = image.shape();
    if n != 1 || c != 3 {
        return Err(Error::InvalidConfig(format!("expected one RGB image, got {:?}", image.shape())));
    }
    let (ph, pw) = (h.div_ceil(32) * 32, w.div_ceil(32) * 32);
    let mut padded = Tensor::zeros([1, 3, ph, pw]);
    for ch in 0..3 {
        for y in 0..h {
            for x in 0..w {
                padded.set(0, ch, y, x, image.at(0, ch, y, x));
            }
        }
    }
    let (logits, _) = infer(store, net, &padded)?;
    let labels = argmax_labels(&logits);
    let mut mask = Mask::new(h, w, 0);
    for y in 0..h {
        for x in 0..w {
            mask.set(y, x, labels[y * pw + x]);
        }
    }
    Ok(mask)
}

pub fn cmd_predict(checkpoint: &Path, image: &Path, output: &Path) -> Result<Mask> {
    let (net, store) = load_checkpoint(checkpoint)?;
    let mask = predict_mask(&store, &net, &read_ppm(image)?)?;
    write_pgm(output, &mask)?;
    Ok(mask)
}

fn load_model(m: &ModelArgs, seed: u64) -> Result<(NetworkConfig, ParamStore)> {
    match &m.checkpoint {
        Some(p) => load_checkpoint(p),
        None => {
            let net = NetworkConfig::preset(m.variant, m.classes);
            let store = build(&net, seed)?;
            Ok((net, store))
        }
    }
}

fn load_input(i: &InputArgs, seed: u64) -> Result<Tensor> {
    match &i.image {
        Some(p) => read_ppm(p),
        None => Ok(ShapesSpec {
            height: i.height,
            width: i.width,
            seed,
            ..ShapesSpec::default()
        }
        .generate(0)?
        .image),
    }
}

fn analyze(what: &Analyze, cfg: &RunConfig, stdout: &mut (dyn Write + Send)) -> Result<()> {
    let dir = &cfg.out_dir;
    match what {
        Analyze::Rf { variant, json } => {
            let rf = network_rf(&NetworkConfig::preset(*variant, 19))?;
            if *json {
                writeln!(stdout, "{}", serde_json::to_string_pretty(&rf)?)?;
            } else {
                write!(stdout, "{}", rf.to_text())?;
            }
        }
        Analyze::Erf { model, input, tap, y, x } => {
            let (net, store) = load_model(model, cfg.seed)?;
            let image = load_input(input, cfg.seed)?;
            let (h, w) = (image.h(), image.w());
            let (stride, rf) = match tap {
                ErfTap::Logits => (1, None),
                t => {
                    let i = *t as usize;
                    let state = network_rf(&net)?.taps[i].clone();
                    (state.jump, Some(state))
                }
            };
            let unit = (y.unwrap_or(h / stride / 2), x.unwrap_or(w / stride / 2));
            let map = erf_map(&store, &net, &image, *tap, unit)?;
            std::fs::create_dir_all(dir)?;
            save_nt(dir.join("erf.nt"), &map)?;
            let peak = map.max_abs();
            let mut grey = Mask::new(h, w, 0);
            for yy in 0..h {
                for xx in 0..w {
                    let v = if peak > 0.0 { map.at(0, 0, yy, xx) / peak } else { 0.0 };
                    grey.set(yy, xx, (v * 255.0).round() as u8);
                }
            }
            write_pgm(dir.join("erf.pgm"), &grey)?;
            let summary = serde_json::json!({
                "tap": tap,
                "unit": [unit.0, unit.1],
                "theoretical_rf": rf.as_ref().map(|s| s.rf),
                "jump": rf.as_ref().map(|s| s.jump),
                "window_y": rf.as_ref().map(|s| s.window(unit.0)),
                "window_x": rf.as_ref().map(|s| s.window(unit.1)),
                "support": support_box(&map),
            });
            write_json(&dir.join("erf.json"), &summary)?;
            writeln!(stdout, "{}", serde_json::to_string_pretty(&summary)?)?;
        }
        Analyze::Weights { checkpoint, bins } => {
            let (net, store) = load_checkpoint(checkpoint)?;
            let stats = branch_weight_stats(&store, &net, *bins)?;
            write_json(&dir.join("weights.json"), &stats)?;
            writeln!(stdout, "{:<6} {:>6} {:>8} {:>8} {:>10}", "stage", "branch", "dilation", "weights", "mean|w|")?;
            for h in &stats {
                let mean: f64 = h
                    .pmf
                    .iter()
                    .enumerate()
                    .map(|(k, p)| p * (h.bin_edges[k] + h.bin_edges[k + 1]) / 2.0)
                    .sum();
                writeln!(stdout, "{:<6} {:>6} {:>8} {:>8} {:>10.5}", h.stage, h.branch, h.dilation, h.count, mean)?;
            }
        }
        Analyze::Heatmaps { model, input, block } => {
            let (net, store) = load_model(model, cfg.seed)?;
            let image = load_input(input, cfg.seed)?;
            let export = dump_feature_heatmaps(&store, &net, &image, block, dir)?;
            for (key, t) in &export.maps {
                writeln!(stdout, "{key}: {} channels of {}x{}", t.c(), t.h(), t.w())?;
            }
            writeln!(stdout, "{} files in {}", export.files.len(), dir.display())?;
        }
    }
    Ok(())
}
