//! Batch driver for the treelets crate.
//!
//! Four subcommands: `treelet` fits a tree to a data CSV, `eiv-sweep`
//! benchmarks predictors over a grid of signal loadings, `ident-demo`
//! checks the covariance-equality construction, and `hier` runs the
//! hierarchical feature selection. Every run writes a `manifest.json`
//! with the fully resolved parameters and seed; rerunning a manifest
//! reproduces all outputs byte for byte.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

mod commands;
mod csvio;

/// CLI failure split by exit code: usage/parse errors exit 2, runtime
/// failures exit 1.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Failure(String),
}

impl From<treelets::Error> for CliError {
    fn from(e: treelets::Error) -> Self {
        CliError::Failure(e.to_string())
    }
}

#[derive(Parser)]
#[command(
    name = "treelets",
    version,
    about = "Treelet transforms, factor-model identifiability checks, EIV benchmarks and hierarchical feature selection"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a treelet tree to the columns of a numeric CSV
    Treelet(commands::treelet::TreeletArgs),
    /// Sweep the signal loading c and compare oracle, PCA and treelet predictors
    EivSweep(commands::eiv_sweep::EivSweepArgs),
    /// Build two factor models with identical covariances and compare their trees
    IdentDemo(commands::ident_demo::IdentDemoArgs),
    /// Hierarchical feature construction on a CSV with a response column
    Hier(commands::hier::HierArgs),
}

/// Flags shared by every subcommand.
#[derive(Args, Debug)]
pub struct CommonArgs {
    /// Output directory (created if missing)
    #[arg(long)]
    pub out: PathBuf,
    /// Base seed for all randomized steps
    #[arg(long)]
    pub seed: Option<u64>,
    /// JSON config with the same schema as manifest.json; explicit flags
    /// override its values
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// On-disk record of a run: subcommand, seed and fully resolved params.
#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest<P> {
    pub subcommand: String,
    pub seed: u64,
    pub params: P,
}

pub fn load_manifest<P: DeserializeOwned>(
    path: &Path,
    expect: &str,
) -> Result<Manifest<P>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    let manifest: Manifest<P> = serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
    if manifest.subcommand != expect {
        return Err(CliError::Usage(format!(
            "config {} is for subcommand {:?}, expected {:?}",
            path.display(),
            manifest.subcommand,
            expect
        )));
    }
    Ok(manifest)
}

/// Serializes a value as pretty JSON with a trailing newline.
pub fn to_json(value: &impl Serialize) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("report serializes");
    text.push('\n');
    text
}

pub fn write_output(dir: &Path, name: &str, content: &str) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Failure(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    std::fs::write(&path, content)
        .map_err(|e| CliError::Failure(format!("cannot write {}: {e}", path.display())))
}

fn main() {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Treelet(args) => commands::treelet::run(args),
        Command::EivSweep(args) => commands::eiv_sweep::run(args),
        Command::IdentDemo(args) => commands::ident_demo::run(args),
        Command::Hier(args) => commands::hier::run(args),
    };
    let code = match outcome {
        Ok(code) => code,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            2
        }
        Err(CliError::Failure(msg)) => {
            eprintln!("error: {msg}");
            1
        }
    };
    std::process::exit(code);
}
