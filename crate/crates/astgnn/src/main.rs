//! Command-line front end; all behaviour lives in `astgnn::harness`.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use astgnn::harness;

#[derive(Parser)]
#[command(name = "astgnn", version, about = "Adaptive spatial-temporal graph networks: train, sparsify, measure")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset from a spec file
    Generate {
        /// Synthetic spec JSON
        spec: PathBuf,
        /// Directory for data.csv + meta.json
        #[arg(long)]
        out: PathBuf,
    },
    /// Pretrain a dense model from an experiment config
    Train {
        /// Experiment config JSON
        config: PathBuf,
        /// Output directory for the checkpoint and training log
        #[arg(long)]
        out: PathBuf,
        /// Training seed; defaults to the config's first seed
        #[arg(long)]
        seed: Option<u64>,
        /// Continue from an existing checkpoint (fresh optimiser state)
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Sparsify a pretrained checkpoint at one or more levels
    Sparsify {
        config: PathBuf,
        /// Pretrained parent checkpoint
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated sparsity levels; defaults to the config's sweep
        #[arg(long, value_delimiter = ',')]
        sweep: Option<Vec<f64>>,
    },
    /// Reinitialise a localised checkpoint and retrain against its mask
    Retrain {
        config: PathBuf,
        /// Localised checkpoint whose mask to keep
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Fresh seed; defaults to the checkpoint seed plus a fixed offset
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate a checkpoint on dataset splits (raw-scale metrics)
    Eval {
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Comma-separated split names from train, val, test
        #[arg(long, value_delimiter = ',', default_value = "test")]
        splits: Vec<String>,
    },
    /// Cost accounting for a checkpoint, with a dense reference
    Flops {
        checkpoint: PathBuf,
        /// Dense reference checkpoint; omitted, an analytic dense model of
        /// the same shape is used
        #[arg(long)]
        dense: Option<PathBuf>,
        /// Emit JSON instead of the text table
        #[arg(long)]
        json: bool,
    },
    /// Run the full pretrain / sparsify / retrain sweep from a config
    Experiment {
        config: PathBuf,
        /// Run directory; overrides the config's output field
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Export a checkpoint's adjacency, gate states and weight histogram
    Inspect {
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Histogram bins over [0, 1]
        #[arg(long, default_value_t = 20)]
        bins: usize,
    },
}

/// Print to stdout, treating a closed pipe (e.g. `astgnn ... | head`) as a
/// clean end of output rather than a panic.
fn out(text: &str) {
    use std::io::Write;
    let mut stdout = std::io::stdout().lock();
    if stdout.write_all(text.as_bytes()).is_err() {
        std::process::exit(0);
    }
}

fn emit<T: serde::Serialize>(value: &T) -> astgnn::Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| astgnn::Error::artifact(format!("rendering output: {e}")))?;
    out(&text);
    out("\n");
    Ok(())
}

fn run(command: Command) -> astgnn::Result<()> {
    match command {
        Command::Generate { spec, out } => emit(&harness::cmd_generate(&spec, &out)?),
        Command::Train { config, out, seed, resume } => {
            emit(&harness::cmd_train(&config, &out, seed, resume.as_deref())?)
        }
        Command::Sparsify { config, checkpoint, out, sweep } => {
            emit(&harness::cmd_sparsify(&config, &checkpoint, &out, sweep)?)
        }
        Command::Retrain { config, checkpoint, out, seed } => {
            emit(&harness::cmd_retrain(&config, &checkpoint, &out, seed)?)
        }
        Command::Eval { config, checkpoint, splits } => {
            emit(&harness::cmd_eval(&config, &checkpoint, &splits)?)
        }
        Command::Flops { checkpoint, dense, json } => {
            let outcome = harness::cmd_flops(&checkpoint, dense.as_deref())?;
            if json {
                emit(&outcome)?;
            } else {
                out(&harness::render_flops_table(&outcome));
            }
            Ok(())
        }
        Command::Experiment { config, out: out_dir } => {
            let outcome = harness::cmd_experiment(&config, out_dir.as_deref())?;
            out(&format!("run directory: {}\n", outcome.out_dir.display()));
            out(&format!("curves: {} ({} rows)\n", outcome.curves.display(), outcome.rows.len()));
            out(&format!("summary: {}\n", outcome.summary.display()));
            out(&format!("manifest: {}\n", outcome.manifest.display()));
            if !outcome.failures.is_empty() {
                out(&format!("failed cells: {}\n", outcome.failures.len()));
                for f in &outcome.failures {
                    out(&format!(
                        "  sparsity {} seed {} {}: {}\n",
                        f.sparsity, f.seed, f.variant, f.error
                    ));
                }
            }
            Ok(())
        }
        Command::Inspect { checkpoint, out, bins } => {
            emit(&harness::cmd_inspect(&checkpoint, &out, bins)?)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
