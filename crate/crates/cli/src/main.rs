use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tmsi_cli::config::TableFormat;
use tmsi_cli::{rerun, run, CliError, Experiment, ExperimentConfig};

#[derive(Parser)]
#[command(name = "tmsi", version, about = "Two-mode squeezed interferometer readout experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Output noise versus relative pump phase for several entangler gains.
    NoiseSweep(RunArgs),
    /// Output noise versus pump phase for both qubit states, with matched points.
    QubitNoiseSweep(RunArgs),
    /// Conditional z maps of noise-only records.
    Bullseye(RunArgs),
    /// Power SNR versus pump phase relative to the entangler-off baseline.
    SnrSweep(RunArgs),
    /// Signal-port transmission versus pump phase.
    SparamSweep(RunArgs),
    /// Back-action tomography round trip: strength and efficiency fits.
    Backaction(RunArgs),
    /// Efficiency budget from the noise-visibility ratio.
    Nvr(RunArgs),
    /// Fit arm losses and analyzer efficiency to noise and SNR targets.
    Calibrate(RunArgs),
    /// Repeat a recorded run and verify its outputs are byte-identical.
    Rerun {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    shots: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

impl RunArgs {
    fn resolve(self, experiment: Experiment) -> Result<ExperimentConfig, CliError> {
        let mut c = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        c.experiment = experiment;
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = self.shots {
            c.shots = v;
        }
        if let Some(v) = self.out {
            c.output = v;
        }
        if let Some(v) = self.workers {
            c.workers = v;
        }
        if let Some(f) = self.format {
            c.format = match f {
                Format::Csv => TableFormat::Csv,
                Format::Json => TableFormat::Json,
            };
        }
        c.validate()?;
        Ok(c)
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let (experiment, args) = match cli.command {
        Command::Rerun { manifest, out, workers } => {
            let out = out.unwrap_or_else(|| manifest.parent().unwrap_or(&PathBuf::from(".")).join("rerun"));
            let outcome = rerun(&manifest, &out, workers)?;
            println!(
                "rerun reproduced {} files in {}",
                outcome.manifest.outputs.len(),
                outcome.dir.display()
            );
            return Ok(());
        }
        Command::NoiseSweep(a) => (Experiment::NoiseSweep, a),
        Command::QubitNoiseSweep(a) => (Experiment::QubitNoiseSweep, a),
        Command::Bullseye(a) => (Experiment::Bullseye, a),
        Command::SnrSweep(a) => (Experiment::SnrSweep, a),
        Command::SparamSweep(a) => (Experiment::SparamSweep, a),
        Command::Backaction(a) => (Experiment::Backaction, a),
        Command::Nvr(a) => (Experiment::Nvr, a),
        Command::Calibrate(a) => (Experiment::Calibrate, a),
    };
    let config = args.resolve(experiment)?;
    let outcome = run(&config)?;
    println!(
        "{} wrote {} files to {}",
        experiment,
        outcome.manifest.outputs.len() + 1,
        outcome.dir.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
