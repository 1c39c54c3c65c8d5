use std::path::PathBuf;

use anyhow::Result;
use clap::{Parser, Subcommand};
use serde::Serialize;

mod commands;
mod config;
mod io;
mod presets;

use config::{Overrides, WorkflowConfig};

#[derive(Parser)]
#[command(name = "cig", version, about = "Information geometry of the extended multinomial: batch workflows")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON workflow config; flags given here override its values
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Named parameter bundle for the subcommand
    #[arg(long, global = true)]
    preset: Option<String>,
    /// Data file (CSV with header; JSON family spec for `limits`)
    #[arg(long, global = true)]
    input: Option<PathBuf>,
    /// JSON output path (stdout when absent)
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// Table output path
    #[arg(long, global = true)]
    csv: Option<PathBuf>,
    /// Seed for simulation and Monte Carlo
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long = "tol.grouping", global = true, value_name = "TOL")]
    tol_grouping: Option<f64>,
    #[arg(long = "tol.near-replicate", global = true, value_name = "TOL")]
    tol_near_replicate: Option<f64>,
    #[arg(long = "tol.newton", global = true, value_name = "TOL")]
    tol_newton: Option<f64>,
    /// Polygon-to-curve distance target for the mixture grid
    #[arg(long = "tol.epsilon", global = true, value_name = "TOL")]
    tol_epsilon: Option<f64>,
    /// Directional-derivative tolerance per observation
    #[arg(long = "tol.dd", global = true, value_name = "TOL")]
    tol_dd: Option<f64>,
    #[arg(long = "tol.prune", global = true, value_name = "TOL")]
    tol_prune: Option<f64>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Fisher information spectrum of a probability vector
    Spectrum,
    /// Reachable vertices and redundant components of a family
    Limits,
    /// Mixture NPMLE over a binomial component curve
    FitMixture,
    /// Discretization loss for continuous families
    Discretize,
    /// Edgeworth versus exact lattice distribution
    Edgeworth,
    /// Saddlepoint versus exact lattice distribution, or an MLE density
    Saddlepoint,
    /// Logistic regression as a family on binary sequences
    EmbedLogistic,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Spectrum => "spectrum",
            Command::Limits => "limits",
            Command::FitMixture => "fit-mixture",
            Command::Discretize => "discretize",
            Command::Edgeworth => "edgeworth",
            Command::Saddlepoint => "saddlepoint",
            Command::EmbedLogistic => "embed-logistic",
        }
    }
}

#[derive(Serialize)]
struct Tool {
    name: &'static str,
    version: &'static str,
}

#[derive(Serialize)]
struct Report<'a> {
    tool: Tool,
    config: &'a WorkflowConfig,
    result: serde_json::Value,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let overrides = Overrides {
        preset: cli.preset,
        input: cli.input,
        output: cli.output,
        csv: cli.csv,
        seed: cli.seed,
        grouping: cli.tol_grouping,
        near_replicate: cli.tol_near_replicate,
        newton: cli.tol_newton,
        epsilon: cli.tol_epsilon,
        dd_per_n: cli.tol_dd,
        prune: cli.tol_prune,
    };
    let mut cfg = WorkflowConfig::load(cli.command.name(), cli.config.as_ref(), overrides)?;
    commands::resolve(&mut cfg)?;
    let outcome = commands::run(&mut cfg)?;
    if let Some(path) = &cfg.csv {
        io::write_csv(path, &outcome.csv.header, &outcome.csv.rows)?;
    }
    let report = Report {
        tool: Tool {
            name: "cig",
            version: env!("CARGO_PKG_VERSION"),
        },
        config: &cfg,
        result: outcome.result,
    };
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    io::write_text(cfg.output.as_deref(), &text)
}
