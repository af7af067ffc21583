//! `sevo` — batch CLI for structure-aware embedding evolution.
//!
//! Five subcommands cover the pipeline end to end: `gen-synthetic` makes
//! a clustered interaction log, `build-graph` turns a log into an item
//! graph, `train` fits matrix factorization with smoothed updates,
//! `bench-quadratic` measures operator convergence in isolation, and
//! `verify` runs the library invariant suite.
//!
//! One TOML file configures everything; `--seed` and a few training
//! overrides exist for sweeps. Exit codes: 0 success, 1 validation
//! error, 2 numerical failure, 3 failed invariant. Worker count follows
//! `RAYON_NUM_THREADS`; no other environment is consulted.

mod commands;
mod config;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};

use sevo::graph::SequenceSlice;
use sevo::transform::TransformVariant;
use sevo::verify::FaultMode;
use sevo::SevoError;

use config::{RunConfig, Seed};

#[derive(Parser)]
#[command(name = "sevo", version, about = "Graph-smoothed embedding training")]
struct Cli {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed for this run.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SliceArg {
    /// Keep the first `window` interactions of each sequence.
    First,
    /// Keep the last `window` interactions of each sequence.
    Last,
}

impl From<SliceArg> for SequenceSlice {
    fn from(s: SliceArg) -> Self {
        match s {
            SliceArg::First => SequenceSlice::FirstK,
            SliceArg::Last => SequenceSlice::LastK,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Exact,
    Iterative,
    Neumann,
    RescaledNeumann,
}

impl From<VariantArg> for TransformVariant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Exact => TransformVariant::Exact,
            VariantArg::Iterative => TransformVariant::Iterative,
            VariantArg::Neumann => TransformVariant::Neumann,
            VariantArg::RescaledNeumann => TransformVariant::RescaledNeumann,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FaultArg {
    /// Silently use the unscaled operator where the rescaled one is
    /// expected; the benchmark-ordering check must catch it.
    DropRescale,
}

#[derive(Subcommand)]
enum Command {
    /// Build the item co-occurrence graph from an interaction TSV.
    BuildGraph {
        /// Output directory for graph.txt and graph_stats.json.
        #[arg(long)]
        out: PathBuf,
        /// Which end of each sequence the window keeps.
        #[arg(long, value_enum)]
        slice: Option<SliceArg>,
        /// Sweep both slice ends over these window sizes and write
        /// slice_sweep.csv instead of a single graph.
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        sweep_slice: Option<Vec<usize>>,
    },
    /// Generate a clustered synthetic interaction log.
    GenSynthetic {
        /// Output directory for interactions.tsv and clusters.json.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train matrix factorization with graph-smoothed updates.
    Train {
        /// Output directory for metrics, traces, manifest, and checkpoint.
        #[arg(long)]
        out: PathBuf,
        /// Overrides [sevo] beta.
        #[arg(long)]
        beta: Option<f64>,
        /// Overrides [sevo] layers.
        #[arg(long)]
        layers: Option<usize>,
        /// Overrides [sevo] variant.
        #[arg(long, value_enum)]
        variant: Option<VariantArg>,
    },
    /// Time the smoothing operators on a seeded quadratic objective.
    BenchQuadratic {
        /// Output directory for bench.csv.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the invariant suite and report each check.
    Verify {
        /// Write the per-check JSON report to this file.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Inject a deliberate defect to prove the suite can fail.
        #[arg(long, value_enum)]
        fault: Option<FaultArg>,
    },
}

fn load_config(cli: &Cli) -> anyhow::Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            RunConfig::from_toml(&text)
                .with_context(|| format!("parsing config {}", path.display()))?
        }
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = Seed(seed);
    }
    Ok(cfg)
}

fn run(cli: Cli) -> anyhow::Result<u8> {
    let mut cfg = load_config(&cli)?;
    match cli.command {
        Command::BuildGraph {
            out,
            slice,
            sweep_slice,
        } => {
            commands::cmd_build_graph(&cfg, &out, slice.map(Into::into), sweep_slice)?;
            Ok(0)
        }
        Command::GenSynthetic { out } => {
            commands::cmd_gen_synthetic(&cfg, &out)?;
            Ok(0)
        }
        Command::Train {
            out,
            beta,
            layers,
            variant,
        } => {
            if let Some(b) = beta {
                cfg.sevo.beta = b;
            }
            if let Some(l) = layers {
                cfg.sevo.layers = l;
            }
            if let Some(v) = variant {
                cfg.sevo.variant = v.into();
            }
            commands::cmd_train(&cfg, &out)?;
            Ok(0)
        }
        Command::BenchQuadratic { out } => {
            commands::cmd_bench_quadratic(&cfg, &out)?;
            Ok(0)
        }
        Command::Verify { out, fault } => {
            let fault = fault.map(|FaultArg::DropRescale| FaultMode::DropRescale);
            let all_passed = commands::cmd_verify(cfg.seed.0, fault, out.as_deref())?;
            Ok(if all_passed { 0 } else { 3 })
        }
    }
}

/// 1 for anything the user can fix in inputs or config, 2 for numerical
/// failures discovered mid-run.
fn exit_code_for(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<SevoError>() {
        Some(SevoError::Numerical(_)) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
