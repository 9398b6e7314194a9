//! `fakesent`: generate fake sentences, train the detector, export
//! encodings, evaluate and probe, all from one binary.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::Settings;
use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "fakesent", version, about = "Fake sentence detection and encoder probing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a labeled dataset of real sentences and their corruptions.
    GenFakes(GenFakesArgs),
    /// Train the detector on labeled datasets and save a checkpoint.
    Train(TrainArgs),
    /// Write the sentence encoding of every corpus line.
    Encode(EncodeArgs),
    /// Report detection accuracy of a checkpoint on a labeled dataset.
    Evaluate(EvaluateArgs),
    /// Fit linear probes on frozen encodings.
    Probe(ProbeArgs),
    /// Compare analytic and finite-difference gradients of a small model.
    Gradcheck(GradcheckArgs),
}

/// Collects the flags that were given into `key -> value` settings.
macro_rules! settings {
    ($args:expr; $($field:ident),+ $(,)?) => {{
        let mut s = Settings::new();
        $(
            if let Some(v) = &$args.$field {
                s.insert(stringify!($field).to_string(), v.to_string());
            }
        )+
        s
    }};
}

#[derive(Debug, Args)]
struct GenFakesArgs {
    /// key = value file; flags override it
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long = "in")]
    input: Option<String>,
    #[arg(long)]
    out: Option<String>,
    /// shuffle or drop
    #[arg(long)]
    strategy: Option<String>,
    #[arg(long)]
    fakes_per_real: Option<String>,
    #[arg(long)]
    seed: Option<String>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: Option<String>,
    #[arg(long)]
    valid: Option<String>,
    /// pretrained word vectors, `token v1 .. vd` per line
    #[arg(long)]
    embeddings: Option<String>,
    /// embedding width when no vectors file is given
    #[arg(long)]
    embed_dim: Option<String>,
    #[arg(long)]
    hidden: Option<String>,
    /// hidden layer widths of the head, e.g. 1024,512
    #[arg(long)]
    mlp: Option<String>,
    #[arg(long)]
    epochs: Option<String>,
    #[arg(long)]
    batch: Option<String>,
    #[arg(long)]
    lr: Option<String>,
    #[arg(long)]
    lr_decay: Option<String>,
    /// gradient norm clip, or "none"
    #[arg(long)]
    max_grad_norm: Option<String>,
    /// sum or mean
    #[arg(long)]
    loss_reduction: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    metrics: Option<String>,
    /// f32 or f64
    #[arg(long)]
    precision: Option<String>,
    #[arg(long)]
    freeze_embeddings: Option<String>,
    #[arg(long)]
    min_count: Option<String>,
}

#[derive(Debug, Args)]
struct EncodeArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long = "in")]
    input: Option<String>,
    #[arg(long)]
    out: Option<String>,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    data: Option<String>,
    /// also write the metrics JSON here
    #[arg(long)]
    report: Option<String>,
}

#[derive(Debug, Args)]
struct ProbeArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    corpus: Option<String>,
    /// comma-separated subset of sentlen,wc,bshift
    #[arg(long)]
    tasks: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    report: Option<String>,
    #[arg(long)]
    l2_grid: Option<String>,
    #[arg(long)]
    max_iterations: Option<String>,
    #[arg(long)]
    tolerance: Option<String>,
}

#[derive(Debug, Args)]
struct GradcheckArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// LSTM hidden size
    #[arg(long)]
    h: Option<String>,
    /// embedding width
    #[arg(long)]
    d: Option<String>,
    #[arg(long)]
    vocab: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    samples: Option<String>,
    #[arg(long)]
    eps: Option<String>,
    #[arg(long)]
    batch: Option<String>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::GenFakes(a) => {
            let mut flags = settings!(a; out, strategy, fakes_per_real, seed);
            if let Some(v) = a.input {
                flags.insert("in".into(), v);
            }
            commands::gen_fakes(commands::resolve("gen-fakes", a.config.as_deref(), flags)?)
        }
        Command::Train(a) => {
            let flags = settings!(a; data, valid, embeddings, embed_dim, hidden, mlp, epochs, batch, lr,
                lr_decay, max_grad_norm, loss_reduction, seed, out, metrics, precision,
                freeze_embeddings, min_count);
            commands::train(commands::resolve("train", a.config.as_deref(), flags)?)
        }
        Command::Encode(a) => {
            let mut flags = settings!(a; model, out);
            if let Some(v) = a.input {
                flags.insert("in".into(), v);
            }
            commands::encode(commands::resolve("encode", a.config.as_deref(), flags)?)
        }
        Command::Evaluate(a) => {
            let flags = settings!(a; model, data, report);
            commands::evaluate(commands::resolve("evaluate", a.config.as_deref(), flags)?)
        }
        Command::Probe(a) => {
            let flags = settings!(a; model, corpus, tasks, seed, report, l2_grid, max_iterations, tolerance);
            commands::probe(commands::resolve("probe", a.config.as_deref(), flags)?)
        }
        Command::Gradcheck(a) => {
            let flags = settings!(a; h, d, vocab, seed, samples, eps, batch);
            commands::gradcheck(commands::resolve("gradcheck", a.config.as_deref(), flags)?)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let _ = e.print();
            let kind = e.kind().as_str().unwrap_or("invalid arguments");
            eprintln!("{}", CliError::usage(kind));
            return ExitCode::from(error::Category::Usage.exit_code());
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}
