//! `kgrr`: prepare datasets, retrieve contexts, train, evaluate and ablate
//! the retrieve-and-read reader.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::Overrides;

#[derive(Debug, Parser)]
#[command(name = "kgrr", version, about = "Retrieve-and-read link prediction over knowledge graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build the vocabulary and graph summary, and fill the context cache
    /// when one is configured.
    Prepare(Overrides),
    /// Write retrieved contexts as JSON Lines.
    Retrieve(RetrieveArgs),
    /// Train a reader; writes checkpoints, loss.csv and the config snapshot.
    Train(Overrides),
    /// Score a checkpoint with filtered ranking; writes metrics JSON.
    Eval(EvalArgs),
    /// Every reader variant against every listed retriever.
    Ablate(AblateArgs),
    /// Write a synthetic compositional dataset, or the desk fixture.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
struct RetrieveArgs {
    #[command(flatten)]
    run: Overrides,
    /// Output JSON Lines file.
    #[arg(long, short = 'o')]
    out: PathBuf,
    /// A single query by name: source entity, then relation.
    #[arg(long, num_args = 2, value_names = ["SOURCE", "RELATION"])]
    query: Option<Vec<String>>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Run directory written by `train`; its config snapshot is the base.
    #[arg(long)]
    run_dir: Option<PathBuf>,
    /// Checkpoint to score; defaults to the run directory's model.ckpt.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Score these contexts (each with a target) instead of retrieving.
    #[arg(long)]
    contexts: Option<PathBuf>,
    /// Metrics output; defaults to metrics-<split>.json in the run directory.
    #[arg(long)]
    metrics: Option<PathBuf>,
    /// Keep per-query ranks in the metrics file.
    #[arg(long)]
    per_query: bool,
    #[command(flatten)]
    run: Overrides,
}

#[derive(Debug, Args)]
struct AblateArgs {
    #[command(flatten)]
    run: Overrides,
    /// Retrievers to compare, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "bfs,onehop,beam")]
    strategies: Vec<kgrr_core::retriever::Strategy>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Output dataset directory.
    #[arg(long, short = 'o')]
    out: PathBuf,
    /// Write the 6-entity desk fixture instead of a generated graph.
    #[arg(long)]
    desk: bool,
    #[arg(long)]
    entities: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Number of composition rules.
    #[arg(long)]
    rules: Option<usize>,
    #[arg(long)]
    noise_relations: Option<usize>,
    /// Share of goal facts also given a one-hop alias edge.
    #[arg(long)]
    alias_fraction: Option<f64>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.render().to_string();
            eprintln!("kgrr: {}", text.lines().next().unwrap_or("bad arguments").trim_start_matches("error: "));
            return ExitCode::from(2);
        }
    };
    let result = match cli.command {
        Command::Prepare(o) => commands::prepare(&o),
        Command::Retrieve(a) => commands::retrieve(&a.run, &a.out, a.query.as_deref()),
        Command::Train(o) => commands::train(&o).map(|_| ()),
        Command::Eval(a) => commands::eval(&commands::EvalRequest {
            run_dir: a.run_dir,
            checkpoint: a.checkpoint,
            contexts: a.contexts,
            metrics: a.metrics,
            per_query: a.per_query,
            overrides: a.run,
        }),
        Command::Ablate(a) => commands::ablate(&a.run, &a.strategies),
        Command::Synth(a) => commands::synth(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("kgrr: {}", format!("{e:#}").replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}
