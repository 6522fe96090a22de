//! `grr`: sensitivity analysis for proxy-SVARs under generalized ranking
//! restrictions.
//!
//! Library half of the `grr` binary: argument types and subcommands, so
//! the workflow can also be driven in-process.

pub mod commands;
pub mod config;
pub mod output;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "grr", version, about = "Set-identified proxy-SVAR impulse responses under ranking restrictions")]
pub struct Cli {
    /// Run configuration (TOML).
    #[arg(long, short, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides `solver.seed` (or the DGP seed for `simulate`).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Output directory (overrides `output.dir`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Configuration override, e.g. `--set var.lags=4`; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate the reduced form and proxy moments.
    Estimate,
    /// Bound the proxy-quality parameter (τ̄).
    Taubar {
        /// Sphere-grid oracle size (used for n ≤ 3).
        #[arg(long, default_value_t = 100_000)]
        oracle_points: usize,
    },
    /// Identified sets on the τ grid, with the sign-only baseline.
    Bounds,
    /// Breakdown values for the claims file.
    Breakdown {
        #[arg(long)]
        claims: Option<PathBuf>,
        /// Report grid values only, without bisection.
        #[arg(long)]
        no_refine: bool,
    },
    /// Proxy-zoo information κ at one τ.
    Info {
        #[arg(long)]
        tau: Option<f64>,
    },
    /// Leave-one-proxy-out information deltas.
    Lopo {
        #[arg(long)]
        tau: Option<f64>,
    },
    /// Correlation-significance map of the proxies.
    Corrmap,
    /// Point-identified responses of one proxy against the bounds.
    Benchmark {
        #[arg(long)]
        proxy: Option<String>,
        /// Variable (name or index) whose impact response is normalized to one.
        #[arg(long)]
        normalize: Option<String>,
    },
    /// Simulate a synthetic SVAR with contaminated proxies.
    Simulate {
        /// DGP specification (TOML); defaults to the built-in three-variable design.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Sample length.
        #[arg(long)]
        t: Option<usize>,
    },
}

pub use commands::{run, Infeasible};
