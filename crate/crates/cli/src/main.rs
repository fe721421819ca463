//! `evgnn`: run, verify and benchmark event-driven GNN models on event
//! streams.
//!
//! Exit codes: 0 success, 1 verification divergence, 2 I/O, parse or
//! configuration error.

mod commands;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use evgnn_core::gnn_engine::model::SearchConfig;
use evgnn_core::graph_builder::SearchShape;

#[derive(Parser)]
#[command(name = "evgnn", version, about = "Event-driven graph neural network inference on event-camera streams")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a quantized model over one or more event streams.
    Infer(InferArgs),
    /// Check that the layer-parallel, layer-sequential and whole-graph
    /// paths produce bit-identical features and predictions.
    Verify(VerifyArgs),
    /// Instrument a run and evaluate the accelerator latency/energy model.
    Bench(BenchArgs),
    /// Generate a seeded synthetic event stream.
    Gen(GenArgs),
    /// Fold batch norm and quantize a floating-point model to INT8.
    Quantize(QuantizeArgs),
    /// Write a model with seeded random parameters.
    InitModel(InitModelArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum StreamFormat {
    Text,
    Bin,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ShapeArg {
    Prism,
    Cylinder,
}

/// Overrides of the neighbor-search settings stored in the model.
#[derive(Args, Clone, Debug, Default)]
pub struct SearchOverrides {
    #[arg(long, value_enum)]
    pub shape: Option<ShapeArg>,
    /// Spatial radius in pixels.
    #[arg(long)]
    pub r_s: Option<u32>,
    /// Temporal radius in microseconds.
    #[arg(long)]
    pub r_t: Option<u32>,
    /// Maximum in-degree per event.
    #[arg(long)]
    pub d_max: Option<usize>,
    /// Per-pixel event queue depth.
    #[arg(long)]
    pub queue_depth: Option<usize>,
}

impl SearchOverrides {
    pub fn apply(&self, search: &mut SearchConfig) {
        if let Some(shape) = self.shape {
            search.params.shape = match shape {
                ShapeArg::Prism => SearchShape::Prism,
                ShapeArg::Cylinder => SearchShape::Cylinder,
            };
        }
        if let Some(v) = self.r_s {
            search.params.r_s = v;
        }
        if let Some(v) = self.r_t {
            search.params.r_t = v;
        }
        if let Some(v) = self.d_max {
            search.params.d_max = v;
        }
        if let Some(v) = self.queue_depth {
            search.queue_depth = v;
        }
    }
}

#[derive(Args)]
pub struct InferArgs {
    pub model: PathBuf,
    #[arg(required = true)]
    pub streams: Vec<PathBuf>,
    /// Stream format; inferred from the extension (`.bin` is binary) if omitted.
    #[arg(long, value_enum)]
    pub format: Option<StreamFormat>,
    /// Use the layer-sequential schedule.
    #[arg(long)]
    pub sequential: bool,
    #[command(flatten)]
    pub search: SearchOverrides,
    /// Prediction trace file; a directory when several streams are given.
    #[arg(long)]
    pub trace_out: Option<PathBuf>,
    /// Streams processed concurrently.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Args)]
pub struct VerifyArgs {
    pub model: PathBuf,
    #[arg(required = true)]
    pub streams: Vec<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<StreamFormat>,
    #[command(flatten)]
    pub search: SearchOverrides,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Args)]
pub struct BenchArgs {
    pub model: PathBuf,
    pub stream: PathBuf,
    #[arg(long, value_enum)]
    pub format: Option<StreamFormat>,
    /// Hardware config (JSON with an "hw" section). Falls back to an "hw"
    /// section in the model file, then to built-in defaults.
    #[arg(long)]
    pub hw: Option<PathBuf>,
    #[arg(long)]
    pub sequential: bool,
    #[command(flatten)]
    pub search: SearchOverrides,
    /// Per-event instrumentation (degree, scans, bytes) as CSV.
    #[arg(long)]
    pub trace_out: Option<PathBuf>,
    /// Report file: per-event CSV if the name ends in `.csv`, JSON summary
    /// otherwise.
    #[arg(long)]
    pub report_out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum GenKind {
    Uniform,
    MovingDot,
}

#[derive(Args)]
pub struct GenArgs {
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = GenKind::Uniform)]
    pub kind: GenKind,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 120)]
    pub width: u16,
    #[arg(long, default_value_t = 100)]
    pub height: u16,
    #[arg(long, default_value_t = 5000)]
    pub count: usize,
    #[arg(long, default_value_t = 100_000)]
    pub span_us: u32,
    /// Moving dot velocity in px/ms.
    #[arg(long, default_value_t = 0.6, allow_negative_numbers = true)]
    pub vx: f64,
    #[arg(long, default_value_t = 0.3, allow_negative_numbers = true)]
    pub vy: f64,
    /// Moving dot radius in pixels.
    #[arg(long, default_value_t = 12.0)]
    pub radius: f64,
    #[arg(long, value_enum)]
    pub format: Option<StreamFormat>,
}

#[derive(Args)]
pub struct QuantizeArgs {
    /// Floating-point model (JSON).
    pub fp_model: PathBuf,
    /// Calibration stream used to size activation scales.
    #[arg(long)]
    pub calib: PathBuf,
    #[arg(long, short)]
    pub out: PathBuf,
    #[arg(long, value_enum)]
    pub format: Option<StreamFormat>,
}

#[derive(Args)]
pub struct InitModelArgs {
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write a floating-point model instead of a quantized one.
    #[arg(long)]
    pub fp: bool,
    /// Give each layer of a floating-point model a random batch norm.
    #[arg(long, requires = "fp")]
    pub bn: bool,
    /// Use the calibration architecture and search settings.
    #[arg(long)]
    pub calibration: bool,
    #[arg(long)]
    pub width: Option<u16>,
    #[arg(long)]
    pub height: Option<u16>,
    /// Output widths of the convolution layers.
    #[arg(long, value_delimiter = ',')]
    pub channels: Option<Vec<usize>>,
    /// Readout patch size in pixels.
    #[arg(long)]
    pub patch: Option<u16>,
    #[arg(long, value_delimiter = ',')]
    pub classes: Option<Vec<String>>,
    #[command(flatten)]
    pub search: SearchOverrides,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("EVGNN_LOG", "warn"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Infer(a) => commands::infer(&a),
        Command::Verify(a) => commands::verify(&a),
        Command::Bench(a) => commands::bench(&a),
        Command::Gen(a) => commands::gen(&a),
        Command::Quantize(a) => commands::quantize(&a),
        Command::InitModel(a) => commands::init_model(&a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
