use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use selbo::data::Split;

mod commands;
mod config;
mod error;

use commands::{DerivePriorArgs, EvalArgs, HistogramArgs};
use error::CliError;

#[derive(Parser)]
#[command(name = "selbo", version, about = "Bayesian neural networks with summary-statistic priors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Val,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Split {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Val => Split::Val,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train a model from a run configuration.
    Train {
        config: PathBuf,
        #[arg(long)]
        force: bool,
    },
    /// Evaluate a checkpoint, optionally under corruption and against OOD data.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Data configuration (the `data` section of a run configuration).
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Comma-separated mix-noise strengths.
        #[arg(long, value_delimiter = ',')]
        corrupt: Vec<f64>,
        #[arg(long, default_value_t = 0)]
        corrupt_seed: u64,
        /// Data configuration of an out-of-distribution set.
        #[arg(long)]
        ood: Option<PathBuf>,
        #[arg(long, default_value_t = 32)]
        mc_samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
        #[arg(long)]
        force: bool,
    },
    /// Solve for a Beta base measure from a minority fraction and an expected accuracy.
    DerivePrior {
        #[arg(long)]
        minority_fraction: f64,
        #[arg(long)]
        expected_accuracy: f64,
        /// Partition as inline JSON or a JSON file; writes a prior file with --out.
        #[arg(long)]
        partition: Option<String>,
        #[arg(long, default_value_t = 1000.0)]
        alpha: f64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        force: bool,
    },
    /// Hard and soft histograms of a checkpoint's predictions.
    Histogram {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        partition: String,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, value_enum, default_value = "train")]
        split: SplitArg,
        #[arg(long, default_value_t = 32)]
        mc_samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 500.0)]
        slope: f64,
        #[arg(long)]
        force: bool,
    },
    /// Grid search over the summary hyperparameters by validation NLL.
    Cv {
        config: PathBuf,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long)]
        force: bool,
    },
}

fn run(cli: Cli) -> Result<serde_json::Value, CliError> {
    match cli.command {
        Command::Train { config, force } => commands::cmd_train(&config, force),
        Command::Eval {
            checkpoint,
            data,
            output,
            corrupt,
            corrupt_seed,
            ood,
            mc_samples,
            seed,
            split,
            force,
        } => commands::cmd_eval(&EvalArgs {
            checkpoint: &checkpoint,
            data: &data,
            output: &output,
            force,
            corrupt: &corrupt,
            corrupt_seed,
            ood: ood.as_deref(),
            mc_samples,
            seed,
            split: split.into(),
        }),
        Command::DerivePrior {
            minority_fraction,
            expected_accuracy,
            partition,
            alpha,
            out,
            force,
        } => commands::cmd_derive_prior(&DerivePriorArgs {
            minority_fraction,
            expected_accuracy,
            partition: partition.as_deref().map(config::partition_arg).transpose()?,
            alpha,
            out: out.as_deref(),
            force,
        }),
        Command::Histogram {
            checkpoint,
            data,
            partition,
            output,
            split,
            mc_samples,
            seed,
            slope,
            force,
        } => commands::cmd_histogram(&HistogramArgs {
            checkpoint: &checkpoint,
            data: &data,
            partition: config::partition_arg(&partition)?,
            output: &output,
            force,
            split: split.into(),
            mc_samples,
            seed,
            slope,
        }),
        Command::Cv { config, jobs, force } => commands::cmd_cv(&config, jobs, force),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            if code == 0 {
                let _ = e.print();
            } else {
                let err = CliError::Config(e.to_string().trim().replace('\n', " "));
                eprintln!("{}", err.to_json_line());
            }
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json_line());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
