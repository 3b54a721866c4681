//! `seuler`: generate fields, assemble stochastic solutions, verify and certify them.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod artifacts;
mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::commands::Control;
use crate::config::{Overrides, RunConfig};
use crate::error::CliResult;

#[derive(Parser)]
#[command(name = "seuler", version, about = "Stochastic compressible Euler solutions from incompressible fields")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML config, or a manifest.json written by an earlier run.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Noise seed; repeat for several.
    #[arg(long = "seed")]
    seeds: Vec<u64>,
    #[arg(long)]
    data_seed: Option<u64>,
    #[arg(long)]
    field_seed: Option<u64>,
    /// Branch seed; repeat for several.
    #[arg(long = "branch-seed")]
    branch_seeds: Vec<u64>,
    /// Global cells, `N` or `NxM`.
    #[arg(long, value_parser = parse_cells)]
    cells: Option<[usize; 2]>,
    /// Noise time steps.
    #[arg(long)]
    steps: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Build the incompressible field and its certificates.
    Generate(Common),
    /// Assemble solutions for each noise seed and write paths, snapshots and energy ledgers.
    Assemble {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t)]
        mutation: Control,
    },
    /// Evaluate every weak residual and the causality check.
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t)]
        mutation: Control,
        /// Also run a refinement ladder with this many rungs.
        #[arg(long)]
        refine: Option<usize>,
    },
    /// Build a branch family and certify pairwise non-uniqueness.
    Certify(Common),
    /// Summarize verify and certify results.
    Report {
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn parse_cells(s: &str) -> Result<[usize; 2], String> {
    let parse = |t: &str| t.trim().parse::<usize>().map_err(|e| format!("bad cell count {t:?}: {e}"));
    match s.split_once(['x', 'X']) {
        Some((a, b)) => Ok([parse(a)?, parse(b)?]),
        None => {
            let n = parse(s)?;
            Ok([n, n])
        }
    }
}

impl Common {
    fn config(&self) -> CliResult<RunConfig> {
        let mut config = match &self.config {
            Some(path) => artifacts::load_config(path)?,
            None => RunConfig::default(),
        };
        config.apply(&Overrides {
            noise_seeds: self.seeds.clone(),
            data_seed: self.data_seed,
            field_seed: self.field_seed,
            branch_seeds: self.branch_seeds.clone(),
            cells: self.cells,
            steps: self.steps,
        });
        config.validate()?;
        Ok(config)
    }
}

fn run(cli: Cli) -> CliResult<i32> {
    match cli.command {
        Command::Generate(c) => commands::generate(&c.config()?, &c.out),
        Command::Assemble { common, mutation } => commands::assemble_cmd(&common.config()?, &common.out, mutation),
        Command::Verify { common, mutation, refine } => {
            commands::verify(&common.config()?, &common.out, mutation, refine)
        }
        Command::Certify(c) => commands::certify(&c.config()?, &c.out),
        Command::Report { out } => commands::report(&out),
    }
}

fn main() -> ExitCode {
    let code = match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(u8::try_from(code).unwrap_or(1))
}
