//! `clem`: network-log embeddings from synthetic or Zeek conn logs.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use clem_cli::config::RunConfig;
use clem_cli::stages::{self, Ctx};
use clem_core::embedding::EntityKind;

#[derive(Parser)]
#[command(
    name = "clem",
    version,
    about = "Language-model embeddings of network connection logs"
)]
struct Cli {
    /// TOML configuration; built-in full-scale defaults when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Run directory holding every artifact.
    #[arg(long, global = true, default_value = "run")]
    out: PathBuf,
    /// Overwrite existing artifacts.
    #[arg(long, global = true)]
    force: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a four-role synthetic conn log with truth labels.
    Synth,
    /// Parse a Zeek conn log (TSV or JSON lines) into the training corpus.
    Ingest {
        #[arg(long)]
        input: PathBuf,
    },
    /// Train the WordPiece vocabulary on the corpus.
    TrainTokenizer,
    /// Overfit the encoder window by window over the corpus.
    Train,
    /// Embed connections, addresses and ports with a window checkpoint.
    Embed {
        /// Checkpoint to use; the last window by default.
        #[arg(long)]
        window: Option<usize>,
    },
    /// Project one embedding table to 2 or 3 dimensions.
    Reduce {
        #[arg(long)]
        kind: EntityKind,
    },
    /// K-means over one table, scored against expert labels.
    Cluster {
        #[arg(long)]
        kind: EntityKind,
        /// Expert labels as `key<TAB>label`; the synthetic truth by default.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Rand index and ARI between two label files.
    Eval {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
    },
    /// Nearest neighbors of base - subtract + add.
    Analogy {
        #[arg(long)]
        base: String,
        #[arg(long)]
        subtract: String,
        #[arg(long)]
        add: String,
        #[arg(long, default_value = "connection")]
        candidates: EntityKind,
    },
    /// Scatter plot by expert label and the ARI-vs-k curve.
    Report {
        #[arg(long)]
        kind: EntityKind,
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Every stage in order.
    Run {
        /// Conn log to ingest instead of synthesizing one.
        #[arg(long)]
        input: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let ctx = Ctx::new(cfg, cli.out, cli.force);
    match cli.command {
        Command::Synth => {
            let s = stages::synth(&ctx)?;
            println!(
                "{} lines, {} addresses, {} planted anomalies",
                s.lines, s.addresses, s.injected
            );
        }
        Command::Ingest { input } => println!("{} records", stages::ingest(&ctx, &input)?),
        Command::TrainTokenizer => println!("{} tokens", stages::train_tokenizer(&ctx)?),
        Command::Train => {
            let m = stages::train(&ctx)?;
            for w in &m.windows {
                println!(
                    "window {} [{}, {}): {} epochs, loss {:.4}{}",
                    w.window_index,
                    w.start,
                    w.end,
                    w.epochs_used,
                    w.final_loss,
                    if w.converged { "" } else { " (not converged)" }
                );
            }
            println!(
                "masked-token accuracy on last window {:.4}",
                m.last_window_masked_accuracy
            );
        }
        Command::Embed { window } => {
            let s = stages::embed(&ctx, window)?;
            println!(
                "window {}: {} connections, {} addresses, {} ports",
                s.window_index, s.connections, s.addresses, s.ports
            );
        }
        Command::Reduce { kind } => {
            let p = stages::reduce(&ctx, kind)?;
            println!(
                "{} {kind} points reduced with {}",
                p.keys.len(),
                p.method.as_str()
            );
        }
        Command::Cluster { kind, truth } => {
            let m = stages::cluster(&ctx, kind, truth.as_deref())?;
            println!(
                "{kind}: best k {} of {} expert labels, ARI {:.4} over {} embeddings",
                m.best_k, m.expert_label_count, m.ari, m.n_embeddings
            );
        }
        Command::Eval { a, b } => {
            let m = stages::eval(&ctx, &a, &b)?;
            println!("n {} RI {:.6} ARI {:.6}", m.n, m.ri, m.ari);
        }
        Command::Analogy {
            base,
            subtract,
            add,
            candidates,
        } => {
            let r = stages::analogy(&ctx, &base, &subtract, &add, candidates)?;
            for (rank, hit) in r.results.iter().enumerate() {
                println!("{}\t{:.4}\t{}", rank + 1, hit.cosine, hit.key);
            }
        }
        Command::Report { kind, truth } => {
            let groups = stages::report(&ctx, kind, truth.as_deref())?;
            println!("{kind} report with {groups} label groups written");
        }
        Command::Run { input } => {
            let s = stages::pipeline(&ctx, input.as_deref())?;
            println!(
                "{} lines, {} windows; address ARI {:.4} (k={}), connection ARI {:.4} (k={})",
                s.lines,
                s.train.windows.len(),
                s.address.ari,
                s.address.best_k,
                s.connection.ari,
                s.connection.best_k
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CLEM_LOG", "info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
