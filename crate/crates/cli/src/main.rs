//! `lipmap`: command-line driver for the viseme-map experiment pipeline.
//!
//! Exit codes: 0 success, 1 configuration error, 2 missing input,
//! 3 runtime failure.

mod artifacts;
mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::RunConfig;
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "lipmap",
    version,
    about = "Phoneme-to-viseme map experiments on lipreading corpora"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Global {
    /// Flat `key = value` configuration file; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    folds: Option<usize>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Minimum mutual confusion count that merges two phonemes.
    #[arg(long, global = true)]
    threshold: Option<u64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    lm_scale: Option<f64>,
    /// Prune tokens more than this far below the best; omit for exact search.
    #[arg(long, global = true, allow_negative_numbers = true)]
    beam: Option<f64>,
    /// Output directory; also where downstream commands look for inputs.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Corpus manifest; defaults to `<out>/corpus/manifest.tsv`.
    #[arg(long, global = true)]
    corpus: Option<PathBuf>,
    /// Decode the phoneme pass against a free phoneme loop.
    #[arg(long, global = true)]
    free_loop: bool,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the synthetic desk-scale corpus into `<out>/corpus`.
    Synth,
    /// Assign utterances to cross-validation folds.
    Folds,
    /// Train phoneme models for every speaker and fold.
    TrainPhonemes,
    /// Decode held-out folds with the phoneme models and pool confusions per speaker.
    Confuse,
    /// Cluster confusions into speaker-dependent, multi-speaker and speaker-independent maps.
    DeriveMaps,
    /// Train viseme models for every map a grid cell needs.
    TrainVisemes {
        /// Restrict training to these map ids.
        #[arg(long)]
        map: Vec<String>,
    },
    /// Decode grid cells with trained viseme models and score them.
    Decode {
        /// Grid manifest (`protocol,map_id,train,test`); defaults to the full grid.
        #[arg(long)]
        cells: Option<PathBuf>,
    },
    /// Run both passes and the whole grid from a corpus and fold split.
    Grid {
        #[arg(long)]
        cells: Option<PathBuf>,
    },
    /// Weighting table, difference table and plot data from a summary CSV.
    Report {
        /// Defaults to `<out>/summary.csv`.
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// synth, folds, grid and report in sequence.
    Pipeline,
}

fn resolve(g: &Global) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &g.config {
        cfg.apply_file(path)?;
    }
    let mut flags: Vec<(&str, String)> = Vec::new();
    let mut push = |k, v: Option<String>| {
        if let Some(v) = v {
            flags.push((k, v));
        }
    };
    push("seed", g.seed.map(|v| v.to_string()));
    push("folds", g.folds.map(|v| v.to_string()));
    push("jobs", g.jobs.map(|v| v.to_string()));
    push("threshold", g.threshold.map(|v| v.to_string()));
    push("lm_scale", g.lm_scale.map(|v| v.to_string()));
    push("beam", g.beam.map(|v| v.to_string()));
    push("out", g.out.as_ref().map(|p| p.display().to_string()));
    push("corpus", g.corpus.as_ref().map(|p| p.display().to_string()));
    push("free_loop", g.free_loop.then(|| "true".to_string()));
    for (k, v) in flags {
        cfg.set(k, &v)?;
    }
    cfg.validate()?;
    for o in cfg.overrides() {
        log::info!("override {o}");
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = resolve(&cli.global)?;
    match &cli.command {
        Command::Synth => commands::synth(&cfg),
        Command::Folds => commands::folds(&cfg),
        Command::TrainPhonemes => commands::train_phonemes(&cfg),
        Command::Confuse => commands::confuse(&cfg),
        Command::DeriveMaps => commands::derive_maps(&cfg),
        Command::TrainVisemes { map } => commands::train_visemes(&cfg, map),
        Command::Decode { cells } => commands::decode(&cfg, cells.as_deref()),
        Command::Grid { cells } => commands::grid(&cfg, cells.as_deref()),
        Command::Report { summary } => commands::report(&cfg, summary.as_deref()),
        Command::Pipeline => commands::pipeline(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // Usage errors are configuration errors, not missing inputs.
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("lipmap: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
