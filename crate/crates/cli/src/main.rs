//! Command-line entry point: generate | train | enhance | evaluate | allan.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use herosgan_cli::commands::{
    cmd_allan, cmd_enhance, cmd_evaluate_dirs, cmd_generate, cmd_train, write_json,
};
use herosgan_cli::config::RunConfig;
use herosgan_cli::CliResult;

#[derive(Parser)]
#[command(
    name = "herosgan",
    version,
    about = "Accelerometer signal enhancement: synthetic data, unpaired GAN training with \
             optimal-transport supervision and Laplace-energy regularization, and metrics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArg {
    /// JSON run configuration; omitted fields use documented defaults.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl ConfigArg {
    fn load(&self) -> CliResult<RunConfig> {
        match &self.config {
            Some(path) => RunConfig::load(path),
            None => Ok(RunConfig::default()),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a paired synthetic dataset (clean high/, degraded low/).
    Generate {
        #[command(flatten)]
        config: ConfigArg,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Override dataset.episodes.
        #[arg(long)]
        episodes: Option<usize>,
        /// Override dataset.seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train on unpaired low/high directories.
    Train {
        #[command(flatten)]
        config: ConfigArg,
        /// Directory of low-cost CSVs (overrides train.data_low).
        #[arg(long)]
        data_low: Option<PathBuf>,
        /// Directory of high-cost CSVs (overrides train.data_high).
        #[arg(long)]
        data_high: Option<PathBuf>,
        /// Checkpoint output path (overrides train.checkpoint_out).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Step-report JSON-lines path (overrides train.report_path).
        #[arg(long)]
        report: Option<PathBuf>,
        /// Override train.steps.
        #[arg(long)]
        steps: Option<usize>,
        /// Override train.seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override train.batch.
        #[arg(long)]
        batch: Option<usize>,
        /// Disable transport-supervised feature alignment.
        #[arg(long)]
        no_ots: bool,
        /// Disable Laplace-energy regularization.
        #[arg(long)]
        no_mle: bool,
        /// Replace transport supervision with direct elementwise feature
        /// alignment (requires --no-ots).
        #[arg(long)]
        l1_substitute: bool,
    },
    /// Enhance a low-cost signal with a trained checkpoint.
    Enhance {
        /// Checkpoint file.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Input CSV.
        #[arg(long)]
        input: PathBuf,
        /// Output CSV.
        #[arg(long)]
        output: PathBuf,
    },
    /// Compare reconstructions against references (matched by name).
    Evaluate {
        #[command(flatten)]
        config: ConfigArg,
        /// Reference signal directory.
        #[arg(long = "ref")]
        reference: PathBuf,
        /// Reconstruction signal directory.
        #[arg(long)]
        recon: PathBuf,
        /// Write the JSON report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Allan deviation analysis of a static recording.
    Allan {
        #[command(flatten)]
        config: ConfigArg,
        /// Input CSV.
        #[arg(long)]
        input: PathBuf,
        /// Axis to analyze (overrides metrics.allan_axis).
        #[arg(long)]
        axis: Option<usize>,
        /// Write the JSON report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the (tau, adev) curve as a two-column CSV.
        #[arg(long)]
        curve_csv: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Generate {
            config,
            out,
            episodes,
            seed,
        } => {
            let mut cfg = config.load()?;
            if let Some(n) = episodes {
                cfg.dataset.episodes = n;
            }
            if let Some(s) = seed {
                cfg.dataset.seed = s;
            }
            let manifest = cmd_generate(&cfg, &out)?;
            println!(
                "generated {} episodes under {}",
                manifest.episodes.len(),
                out.display()
            );
            Ok(())
        }
        Command::Train {
            config,
            data_low,
            data_high,
            out,
            report,
            steps,
            seed,
            batch,
            no_ots,
            no_mle,
            l1_substitute,
        } => {
            let mut cfg = config.load()?;
            if let Some(p) = data_low {
                cfg.train.data_low = Some(p.display().to_string());
            }
            if let Some(p) = data_high {
                cfg.train.data_high = Some(p.display().to_string());
            }
            if let Some(p) = out {
                cfg.train.checkpoint_out = Some(p.display().to_string());
            }
            if let Some(p) = report {
                cfg.train.report_path = Some(p.display().to_string());
            }
            if let Some(n) = steps {
                cfg.train.steps = n;
            }
            if let Some(s) = seed {
                cfg.train.seed = s;
            }
            if let Some(b) = batch {
                cfg.train.batch = b;
            }
            if no_ots {
                cfg.train.ots = false;
            }
            if no_mle {
                cfg.train.mle = false;
            }
            if l1_substitute {
                cfg.train.l1_substitute = true;
            }
            let path = cmd_train(&cfg)?;
            println!("checkpoint written to {}", path.display());
            Ok(())
        }
        Command::Enhance {
            checkpoint,
            input,
            output,
        } => {
            cmd_enhance(&checkpoint, &input, &output)?;
            println!("enhanced signal written to {}", output.display());
            Ok(())
        }
        Command::Evaluate {
            config,
            reference,
            recon,
            out,
        } => {
            let cfg = config.load()?;
            let report = cmd_evaluate_dirs(&cfg, &reference, &recon)?;
            write_json(&report, out.as_deref())
        }
        Command::Allan {
            config,
            input,
            axis,
            out,
            curve_csv,
        } => {
            let cfg = config.load()?;
            let axis = axis.unwrap_or(cfg.metrics.allan_axis);
            let report = cmd_allan(&cfg, &input, axis, curve_csv.as_deref())?;
            write_json(&report, out.as_deref())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
