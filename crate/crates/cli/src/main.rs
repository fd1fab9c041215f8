//! `seisr`: encode strong-motion records as RGB tiles, train and run the
//! super-resolution GAN, and compare it against linear interpolation.
//!
//! Exit codes: 0 success, 1 usage, 2 data error, 3 training divergence.

mod commands;
mod config;
mod store;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::SsimWindowMode;
use config::RunConfig;

/// Why a command failed; decides the exit code.
#[derive(Debug)]
pub enum Failure {
    Usage(anyhow::Error),
    Data(anyhow::Error),
    Diverged(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Data(e)
    }
}

macro_rules! data_errors {
    ($($t:ty),*) => {$(
        impl From<$t> for Failure {
            fn from(e: $t) -> Self {
                Failure::Data(e.into())
            }
        }
    )*};
}
data_errors!(seisr::codec::CodecError, seisr::analysis::AnalysisError, std::io::Error);

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Diverged(_) => 3,
        }
    }

    fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Usage(e) | Failure::Data(e) | Failure::Diverged(e) => e,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "seisr", version, about = "Seismic time-history super-resolution pipeline")]
struct Cli {
    /// Root for outputs of commands run without --out; each command writes
    /// to <root>/<command>. Defaults to ./seisr-out.
    #[arg(long, env = "SEISR_OUTPUT_ROOT", global = true, value_name = "DIR")]
    output_root: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse PEER .AT2/.VT2/.DT2 triplets and write HR/LR tiles, sidecars and series.
    Ingest(IngestArgs),
    /// Generate synthetic records and write them like `ingest` does.
    Synth(SynthArgs),
    /// Encode `time_s,acceleration,velocity,displacement` CSV files into tiles.
    Encode(EncodeArgs),
    /// Train the GAN on a dataset directory; writes loss CSVs and checkpoints.
    Train(Box<TrainArgs>),
    /// Run a trained generator on the LR tiles of a dataset.
    Infer(InferArgs),
    /// Compare generated records and the interpolation baseline with the real ones.
    Evaluate(EvaluateArgs),
    /// Fourier amplitude spectra of records, optionally beside generated ones.
    Spectrum(SpectrumArgs),
}

#[derive(Args, Debug)]
struct IngestArgs {
    /// PEER files or directories holding them; the three files of a record
    /// share a stem and differ in extension.
    #[arg(required = true, value_name = "PATH")]
    paths: Vec<PathBuf>,
    /// Dataset directory to write.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Seed of the first record; record i uses seed + i.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of records.
    #[arg(long, default_value_t = 16)]
    count: usize,
    /// Samples per record.
    #[arg(long, default_value_t = 18_496)]
    samples: usize,
    /// Time step in seconds.
    #[arg(long, default_value_t = 0.005)]
    dt: f64,
    /// Damped modes per record.
    #[arg(long, default_value_t = 3)]
    modes: usize,
    /// Dataset directory to write.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EncodeArgs {
    /// Series CSV files; the file stem (minus `_series`) becomes the record id.
    #[arg(required = true, value_name = "CSV")]
    inputs: Vec<PathBuf>,
    /// Time step in seconds; inferred from the time column when absent.
    #[arg(long)]
    dt: Option<f64>,
    /// Dataset directory to write.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

/// Flags mirroring the config-file keys; each overrides the file.
#[derive(Args, Debug, Default)]
struct ConfigFlags {
    /// Adam learning rate [learning_rate].
    #[arg(long)]
    learning_rate: Option<String>,
    /// Tiles per batch [batch_size].
    #[arg(long)]
    batch_size: Option<String>,
    /// Adam β1 [beta1].
    #[arg(long)]
    beta1: Option<String>,
    /// Adam β2 [beta2].
    #[arg(long)]
    beta2: Option<String>,
    /// First epoch of the linear decay, or `auto` for half the run [decay_start_epoch].
    #[arg(long)]
    decay_start_epoch: Option<String>,
    /// Number of epochs [total_epochs].
    #[arg(long)]
    total_epochs: Option<String>,
    /// Adversarial weight λ [lambda_adv].
    #[arg(long)]
    lambda_adv: Option<String>,
    /// Pixel weight β [beta_pixel].
    #[arg(long)]
    beta_pixel: Option<String>,
    /// least_squares or binary_cross_entropy [adversarial_mode].
    #[arg(long)]
    adversarial_mode: Option<String>,
    /// Seed for initialization, shuffling and the split [seed].
    #[arg(long)]
    seed: Option<String>,
    /// Width/block divisor; 1 is the full network [model_divisor].
    #[arg(long)]
    model_divisor: Option<String>,
    /// Save a checkpoint every N epochs, 0 to disable [checkpoint_every].
    #[arg(long)]
    checkpoint_every: Option<String>,
    /// Dataset directory [dataset].
    #[arg(long)]
    dataset: Option<String>,
    /// VGG-19 safetensors for the content loss [vgg_weights].
    #[arg(long)]
    vgg_weights: Option<String>,
    /// Fraction of records held out for testing [test_fraction].
    #[arg(long)]
    test_fraction: Option<String>,
}

impl ConfigFlags {
    fn pairs(&self) -> [(&'static str, &Option<String>); 15] {
        [
            ("learning_rate", &self.learning_rate),
            ("batch_size", &self.batch_size),
            ("beta1", &self.beta1),
            ("beta2", &self.beta2),
            ("decay_start_epoch", &self.decay_start_epoch),
            ("total_epochs", &self.total_epochs),
            ("lambda_adv", &self.lambda_adv),
            ("beta_pixel", &self.beta_pixel),
            ("adversarial_mode", &self.adversarial_mode),
            ("seed", &self.seed),
            ("model_divisor", &self.model_divisor),
            ("checkpoint_every", &self.checkpoint_every),
            ("dataset", &self.dataset),
            ("vgg_weights", &self.vgg_weights),
            ("test_fraction", &self.test_fraction),
        ]
    }
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// `key = value` config file; keys are the RunConfig field names.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(flatten)]
    flags: ConfigFlags,
    /// Output directory [output_dir].
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct InferArgs {
    /// Checkpoint directory written by `train`.
    #[arg(long, value_name = "DIR")]
    checkpoint: PathBuf,
    /// Dataset or record directory with LR tiles.
    #[arg(long, value_name = "DIR")]
    input: PathBuf,
    /// Tiles per forward pass.
    #[arg(long, default_value_t = 8)]
    batch: usize,
    /// Directory for the generated tiles.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    /// Dataset with the real records and their LR tiles.
    #[arg(long, value_name = "DIR")]
    dataset: PathBuf,
    /// Output of `infer` (or any dataset holding the same record ids).
    #[arg(long, value_name = "DIR")]
    generated: PathBuf,
    /// SSIM variant in the metric tables: full or sliding (8×8 windows).
    #[arg(long, default_value = "full")]
    ssim_window: String,
    /// Directory for the reports.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SpectrumArgs {
    /// A series CSV, a record directory or a dataset.
    #[arg(long, value_name = "PATH")]
    input: PathBuf,
    /// Generated counterpart; writes `freq_hz,amp_real,amp_generated` per channel.
    #[arg(long, value_name = "PATH")]
    generated: Option<PathBuf>,
    /// Directory for the spectra.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

/// `--out`, else `<root>/<command>`, else `./seisr-out/<command>`.
fn output_dir(out: Option<PathBuf>, root: Option<&Path>, command: &str) -> PathBuf {
    out.unwrap_or_else(|| root.unwrap_or(Path::new("seisr-out")).join(command))
}

fn run_config(args: &TrainArgs, root: Option<&Path>) -> Result<(RunConfig, PathBuf), Failure> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &args.config {
        cfg.apply_file(path).map_err(Failure::Usage)?;
    }
    for (key, value) in args.flags.pairs() {
        if let Some(v) = value {
            cfg.set(key, v).map_err(Failure::Usage)?;
        }
    }
    if let Some(out) = &args.out {
        cfg.output_dir = Some(out.clone());
    }
    let out = output_dir(cfg.output_dir.clone(), root, "train");
    cfg.output_dir = Some(out.clone());
    Ok((cfg, out))
}

fn run(cli: Cli) -> Result<(), Failure> {
    let root = cli.output_root.as_deref();
    match cli.command {
        Command::Ingest(a) => commands::ingest(&a.paths, &output_dir(a.out, root, "ingest")),
        Command::Synth(a) => {
            let o =
                commands::SynthOptions { seed: a.seed, count: a.count, samples: a.samples, dt: a.dt, modes: a.modes };
            commands::synth(&o, &output_dir(a.out, root, "synth"))
        }
        Command::Encode(a) => commands::encode(&a.inputs, a.dt, &output_dir(a.out, root, "encode")),
        Command::Train(a) => {
            let (cfg, out) = run_config(&a, root)?;
            commands::train_cmd(&cfg, &out)
        }
        Command::Infer(a) => commands::infer(&a.checkpoint, &a.input, a.batch, &output_dir(a.out, root, "infer")),
        Command::Evaluate(a) => {
            let window: SsimWindowMode = a.ssim_window.parse().map_err(Failure::Usage)?;
            commands::evaluate(&a.dataset, &a.generated, window, &output_dir(a.out, root, "evaluate"))
        }
        Command::Spectrum(a) => {
            commands::spectrum(&a.input, a.generated.as_deref(), &output_dir(a.out, root, "spectrum"))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error());
            ExitCode::from(f.exit_code())
        }
    }
}
