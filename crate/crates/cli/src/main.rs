//! `tomita`: file-mediated pipeline for the Tomita RNN experiments.

mod config;
mod io;
mod report;
mod stages;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use tomita_core::metrics::DistanceMode;
use tomita_core::rnn::CellKind;
use tomita_core::GrammarId;

use config::{ExperimentConfig, PRESETS};
use stages::{Ctx, Status, VerifyOptions};

#[derive(Parser)]
#[command(name = "tomita", version, about = "Train, extract, verify and measure RNNs on the Tomita grammars")]
struct Cli {
    /// TOML experiment configuration; fields left out take preset defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Named preset to start from (see `tomita config --list`).
    #[arg(long, global = true, conflicts_with = "config")]
    preset: Option<String>,
    /// Output directory; overrides `out_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Master seed; overrides `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Restrict to these grammars (comma separated ids).
    #[arg(long, global = true, value_delimiter = ',')]
    grammars: Option<Vec<GrammarId>>,
    /// Restrict to these cells (comma separated, e.g. second_order,elman).
    #[arg(long, global = true, value_delimiter = ',')]
    cells: Option<Vec<CellKind>>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw labeled datasets from each grammar's oracle.
    Gen,
    /// Train one model per grammar, cell and hidden seed (resumable).
    Train,
    /// Extract a DFA for every trained model and K.
    Extract,
    /// Score the extracted DFAs; writes trials.csv and summary.csv.
    Evaluate,
    /// Adversarial accuracy of trained models (resumable per model).
    Verify {
        /// Verify each grammar's own DFA instead of the trained models.
        #[arg(long)]
        oracle_as_model: bool,
        /// Center string length N.
        #[arg(long)]
        length: Option<usize>,
        /// Centers per trial.
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        trials: Option<usize>,
        /// Grammars to verify (comma separated ids).
        #[arg(long, value_delimiter = ',')]
        verify_grammars: Option<Vec<GrammarId>>,
        /// Also report gamma at these lengths (comma separated).
        #[arg(long, value_delimiter = ',')]
        sweep_lengths: Option<Vec<usize>>,
    },
    /// Average edit distance between each grammar's classes.
    Distance {
        /// same-length or levenshtein.
        #[arg(long)]
        metric: Option<DistanceMode>,
        /// String lengths (comma separated).
        #[arg(long, value_delimiter = ',')]
        lengths: Option<Vec<usize>>,
    },
    /// Rebuild summaries from raw results and print them.
    Report,
    /// Every stage in order: gen, train, extract, evaluate, verify, distance, report.
    Run,
    /// Print the resolved configuration as TOML.
    Config {
        /// List the presets instead.
        #[arg(long)]
        list: bool,
    },
}

fn resolve(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match (&cli.config, &cli.preset) {
        (Some(path), _) => {
            let text = io::read_to_string(path)?;
            ExperimentConfig::from_toml(&text).with_context(|| format!("in {}", path.display()))?
        }
        (None, Some(name)) => ExperimentConfig::preset(name)?,
        (None, None) => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out_dir = o.clone();
    }
    if let Some(g) = &cli.grammars {
        cfg.verification.grammars.retain(|v| g.contains(v));
        cfg.grammars = g.clone();
    }
    if let Some(c) = &cli.cells {
        cfg.cells = c.clone();
    }
    match &cli.command {
        Command::Verify { length, samples, trials, verify_grammars, sweep_lengths, .. } => {
            let v = &mut cfg.verification;
            v.length = length.unwrap_or(v.length);
            v.samples = samples.unwrap_or(v.samples);
            v.trials = trials.unwrap_or(v.trials);
            if let Some(g) = verify_grammars {
                v.grammars = g.clone();
            }
            if let Some(l) = sweep_lengths {
                v.sweep_lengths = l.clone();
            }
        }
        Command::Distance { metric, lengths } => {
            if let Some(m) = metric {
                cfg.distance.metric = *m;
            }
            if let Some(l) = lengths {
                cfg.distance.lengths = l.clone();
            }
        }
        _ => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<Status> {
    if let Command::Config { list: true } = cli.command {
        for (name, about) in PRESETS {
            println!("{name:<14}{about}");
        }
        return Ok(Status::Complete);
    }
    let cfg = resolve(cli)?;
    let ctx = Ctx::new(cfg);
    let no_oracle = VerifyOptions { oracle_as_model: false };
    match &cli.command {
        Command::Gen => stages::gen(&ctx),
        Command::Train => stages::train(&ctx),
        Command::Extract => stages::extract(&ctx),
        Command::Evaluate => stages::evaluate(&ctx),
        Command::Verify { oracle_as_model, .. } => {
            stages::verify(&ctx, &VerifyOptions { oracle_as_model: *oracle_as_model })
        }
        Command::Distance { .. } => stages::distance(&ctx),
        Command::Report => stages::report(&ctx),
        Command::Run => {
            let mut status = stages::gen(&ctx)?;
            status = status.merge(stages::train(&ctx)?);
            status = status.merge(stages::extract(&ctx)?);
            status = status.merge(stages::evaluate(&ctx)?);
            status = status.merge(stages::verify(&ctx, &no_oracle)?);
            status = status.merge(stages::distance(&ctx)?);
            Ok(status.merge(stages::report(&ctx)?))
        }
        Command::Config { .. } => {
            print!("{}", ctx.cfg.to_toml());
            Ok(Status::Complete)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(Status::Complete) => ExitCode::SUCCESS,
        Ok(Status::Partial(failures)) => {
            eprintln!("{} requested cell(s) did not succeed:", failures.len());
            for f in &failures {
                eprintln!("  {f}");
            }
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
