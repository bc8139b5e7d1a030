//! `hairgan` command-line tool: dataset generation, training, inference,
//! strand synthesis, evaluation and previews.
//!
//! Exit codes: 0 success, 2 invalid configuration or arguments, 3 data
//! error, 4 numeric fault. `HAIRGAN_THREADS` caps the worker pool.

mod commands;
mod config;
mod images;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hairgan::HairError;

use config::PipelineConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numeric fault: {0}")]
    Numeric(String),
}

impl CliError {
    pub fn config(e: HairError) -> Self {
        CliError::Config(e.to_string())
    }

    pub fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }
}

impl From<HairError> for CliError {
    fn from(e: HairError) -> Self {
        match e {
            HairError::NumericFault(_) => CliError::Numeric(e.to_string()),
            HairError::InvalidArgument(_) => CliError::Config(e.to_string()),
            HairError::AmbiguityUnresolved(_) => CliError::Data(format!(
                "{e}; supply a hint map (--hint) with at least one direction stroke inside the mask"
            )),
            _ => CliError::Data(e.to_string()),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "hairgan", version, about = "Single-view 3D hair: data, training, inference, strands")]
struct Cli {
    /// TOML configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Scale divisor (1, 2, 4 or 8).
    #[arg(long, global = true)]
    k: Option<usize>,
    /// Network channel divisor.
    #[arg(long, global = true)]
    chan_div: Option<usize>,
    /// Run seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate procedural styles and their training pairs.
    MakeData(MakeDataArgs),
    /// Train the networks on a dataset; resumable.
    Train(TrainArgs),
    /// Predict an orientation volume from an aligned image.
    Infer(InferArgs),
    /// Grow strands from an orientation volume.
    Synthesize(SynthArgs),
    /// Compare a result with reference maps or a ground-truth volume.
    Eval(EvalArgs),
    /// Write PPM previews and OBJ meshes.
    Export(ExportArgs),
}

#[derive(Args, Debug)]
pub struct MakeDataArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub styles: Option<usize>,
    #[arg(long)]
    pub n_rot: Option<usize>,
    #[arg(long)]
    pub n_strands: Option<usize>,
    /// Skip the mirrored copies.
    #[arg(long)]
    pub no_flips: bool,
    /// Bust mesh (OFF); the built-in bust otherwise.
    #[arg(long)]
    pub bust: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Output directory for `checkpoint.ckpt` and `metrics.csv`.
    #[arg(long)]
    pub out: PathBuf,
    /// Iterations to run in this invocation.
    #[arg(long)]
    pub iters: Option<u64>,
    #[arg(long)]
    pub checkpoint_every: Option<u64>,
    /// Continue from this checkpoint.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Generator objective: feature_match or wasserstein.
    #[arg(long)]
    pub objective: Option<String>,
}

#[derive(Args, Debug)]
pub struct InferArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Gray image (`.map2d` or an image file).
    #[arg(long)]
    pub image: PathBuf,
    #[arg(long)]
    pub mask: PathBuf,
    /// Two-channel direction hints (encoded, 0.5 = none).
    #[arg(long)]
    pub hint: Option<PathBuf>,
    /// Bust depth map; computed from the bust mesh when absent.
    #[arg(long)]
    pub depth: Option<PathBuf>,
    #[arg(long)]
    pub bust: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the assembled 4-channel input maps here.
    #[arg(long)]
    pub maps_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long)]
    pub volume: PathBuf,
    #[arg(long)]
    pub bust: Option<PathBuf>,
    /// 4-channel input maps whose orientation refines the surface field
    /// and deforms the strands.
    #[arg(long)]
    pub maps: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// OBJ of the smoothed rough shape.
    #[arg(long)]
    pub shape_obj: Option<PathBuf>,
    /// OBJ polylines of the strands.
    #[arg(long)]
    pub strands_obj: Option<PathBuf>,
    #[arg(long)]
    pub seeds: Option<usize>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Strand model to evaluate against `--maps`.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Reference 4-channel input maps (mask and orientation).
    #[arg(long)]
    pub maps: Option<PathBuf>,
    /// Reference mask overriding the one implied by `--maps`.
    #[arg(long)]
    pub mask: Option<PathBuf>,
    /// Orientation difference image (PPM).
    #[arg(long)]
    pub diff_map: Option<PathBuf>,
    /// Predicted volume to compare with `--truth`.
    #[arg(long)]
    pub volume: Option<PathBuf>,
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ExportArgs {
    #[arg(long)]
    pub volume: Option<PathBuf>,
    #[arg(long)]
    pub map: Option<PathBuf>,
    #[arg(long)]
    pub strands: Option<PathBuf>,
    /// PPM preview of `--volume` or `--map`.
    #[arg(long)]
    pub ppm: Option<PathBuf>,
    /// OBJ of `--strands`, or the iso-surface of `--volume`.
    #[arg(long)]
    pub obj: Option<PathBuf>,
}

fn configure(cli: &Cli) -> Result<PipelineConfig, CliError> {
    let mut c = PipelineConfig::load(cli.config.as_deref())?;
    if let Some(k) = cli.k {
        c.space.k = k;
    }
    if let Some(d) = cli.chan_div {
        c.space.chan_div = d;
    }
    if let Some(s) = cli.seed {
        c.seed = s;
        c.data.seed = s;
        c.synth.seed = s;
    }
    Ok(c)
}

fn init_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("HAIRGAN_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("HAIRGAN_THREADS must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(e.to_string()))
}

fn run(cli: Cli) -> Result<(), CliError> {
    init_threads()?;
    let mut cfg = configure(&cli)?;
    match cli.cmd {
        Command::MakeData(a) => commands::make_data(&mut cfg, &a),
        Command::Train(a) => commands::train(&mut cfg, &a),
        Command::Infer(a) => commands::infer(&mut cfg, &a),
        Command::Synthesize(a) => commands::synthesize(&mut cfg, &a),
        Command::Eval(a) => commands::eval(&mut cfg, &a),
        Command::Export(a) => commands::export(&mut cfg, &a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
