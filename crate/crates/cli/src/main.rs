mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

/// Plate super-resolution: train, evaluate, upscale and report.
#[derive(Parser, Debug)]
#[command(name = "platesr", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a generator from a TOML run config.
    Train(TrainArgs),
    /// Score a checkpoint (or plain bicubic) on whole test images.
    Eval(EvalArgs),
    /// Upscale one PNG, tiling large inputs.
    Infer(InferArgs),
    /// Draw curves, contrast and complexity plots from run directories.
    Plots(PlotsArgs),
    /// Write HR and SR embeddings of test patches, optionally with a t-SNE map.
    ExportEmbeddings(ExportArgs),
    /// Count parameters and multiply-accumulates of a generator.
    CountFlops(FlopsArgs),
    /// Render a synthetic plate dataset with a manifest.
    Synth(SynthArgs),
}

#[derive(Args, Debug, Serialize)]
struct TrainArgs {
    #[arg(long)]
    config: PathBuf,
    /// Continue from the last checkpoint in the run directory.
    #[arg(long)]
    resume: bool,
    /// Override `out_dir` from the config.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[command(flatten)]
    overrides: TrainOverrides,
}

/// Per-run overrides of the `[train]` section; they land in the config snapshot.
#[derive(Args, Debug, Serialize)]
struct TrainOverrides {
    #[arg(long)]
    total_iters: Option<u64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr_init: Option<f64>,
    #[arg(long)]
    val_every: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// `mse`, `mae` or `pecl`; a `[pecl]` section is needed for `pecl`.
    #[arg(long)]
    loss: Option<String>,
    #[arg(long)]
    grad_clip: Option<f64>,
    #[arg(long)]
    log_every: Option<u64>,
}

#[derive(Args, Debug, Serialize)]
struct EvalArgs {
    /// Checkpoint to evaluate; omit together with `--bicubic`.
    #[arg(long, required_unless_present = "bicubic", conflicts_with = "bicubic")]
    checkpoint: Option<PathBuf>,
    /// Evaluate bicubic interpolation at `--scale` instead of a model.
    #[arg(long, requires = "scale")]
    bicubic: bool,
    #[arg(long)]
    scale: Option<usize>,
    /// Manifest whose `test` records are evaluated.
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Program that prints the plate text of the PNG given as its last argument.
    #[arg(long)]
    ocr_cmd: Option<PathBuf>,
    #[arg(long = "ocr-arg", allow_hyphen_values = true)]
    ocr_args: Vec<String>,
    /// Program that prints a perceptual distance for two PNG paths.
    #[arg(long)]
    lpips_cmd: Option<PathBuf>,
    #[arg(long = "lpips-arg", allow_hyphen_values = true)]
    lpips_args: Vec<String>,
}

#[derive(Args, Debug, Serialize)]
struct InferArgs {
    #[arg(long, required_unless_present = "bicubic", conflicts_with = "bicubic")]
    checkpoint: Option<PathBuf>,
    #[arg(long, requires = "scale")]
    bicubic: bool,
    #[arg(long)]
    scale: Option<usize>,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// LR tile side; the whole image is processed at once when absent.
    #[arg(long)]
    tile: Option<usize>,
    #[arg(long, default_value_t = 8)]
    overlap: usize,
}

#[derive(Args, Debug, Serialize)]
struct PlotsArgs {
    /// Run directories holding `curves.csv`.
    #[arg(long = "run", required = true)]
    runs: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct ExportArgs {
    /// Checkpoint with Siamese encoder weights.
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value_t = 64)]
    patch_size: usize,
    /// Stop after this many patches.
    #[arg(long)]
    limit: Option<usize>,
    #[arg(long)]
    out: PathBuf,
    /// Also project the embeddings to 2-D.
    #[arg(long)]
    tsne: bool,
    #[arg(long, default_value_t = 30.0)]
    perplexity: f64,
}

#[derive(Clone, Copy, Debug, Serialize, ValueEnum)]
enum Preset {
    Reference,
    Tiny,
}

#[derive(Args, Debug, Serialize)]
struct FlopsArgs {
    #[arg(long, default_value_t = 4)]
    scale: usize,
    #[arg(long, value_enum, default_value_t = Preset::Reference)]
    preset: Preset,
    /// Take the model section of a run config instead of a preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// LR input height.
    #[arg(long, default_value_t = 64)]
    height: usize,
    #[arg(long, default_value_t = 64)]
    width: usize,
}

#[derive(Args, Debug, Serialize)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 64)]
    train: usize,
    #[arg(long, default_value_t = 8)]
    val: usize,
    #[arg(long, default_value_t = 8)]
    test: usize,
    #[arg(long, default_value_t = 64)]
    height: usize,
    #[arg(long, default_value_t = 192)]
    width: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let res = match cli.command {
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Infer(a) => commands::infer(a),
        Command::Plots(a) => commands::plots(a),
        Command::ExportEmbeddings(a) => commands::export(a),
        Command::CountFlops(a) => commands::count_flops(a),
        Command::Synth(a) => commands::synth(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
