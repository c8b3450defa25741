//! `treelet` subcommand: CSV in, model JSON (and optional basis CSV) out.

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use treelets::sample_covariance;
use treelets::treelet::{build_treelet, PairScore, DEFAULT_TIE_TOLERANCE};

use crate::csvio::{matrix_to_csv, read_numeric_csv};
use crate::{load_manifest, to_json, write_output, CliError, CommonArgs, Manifest};

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PairScoreArg {
    Correlation,
    Covariance,
}

impl From<PairScoreArg> for PairScore {
    fn from(v: PairScoreArg) -> Self {
        match v {
            PairScoreArg::Correlation => PairScore::Correlation,
            PairScoreArg::Covariance => PairScore::Covariance,
        }
    }
}

#[derive(Args, Debug)]
pub struct TreeletArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Input CSV with a header row and one sample per row
    #[arg(long)]
    input: Option<String>,
    /// Number of merge levels (default: p - 1, the full tree)
    #[arg(long)]
    max_level: Option<usize>,
    /// Pair score driving the merges
    #[arg(long, value_enum)]
    pair_score: Option<PairScoreArg>,
    /// Two pair scores within this distance count as tied
    #[arg(long)]
    tie_tolerance: Option<f64>,
    /// Also write the level-L orthonormal basis as CSV
    #[arg(long)]
    basis_level: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TreeletParams {
    pub input: String,
    pub max_level: usize,
    pub pair_score: PairScore,
    pub tie_tolerance: f64,
    pub basis_level: Option<usize>,
}

pub fn run(args: TreeletArgs) -> Result<i32, CliError> {
    let config: Option<Manifest<TreeletParams>> = args
        .common
        .config
        .as_deref()
        .map(|p| load_manifest(p, "treelet"))
        .transpose()?;
    let (cfg_seed, cfg_params) = match config {
        Some(m) => (Some(m.seed), Some(m.params)),
        None => (None, None),
    };
    let seed = args.common.seed.or(cfg_seed).unwrap_or(0);

    let input = args
        .input
        .or(cfg_params.as_ref().map(|p| p.input.clone()))
        .ok_or_else(|| CliError::Usage("--input is required".into()))?;
    let csv = read_numeric_csv(std::path::Path::new(&input))?;
    if csv.data.rows() < 2 {
        return Err(CliError::Usage(format!(
            "{input}: need at least 2 data rows"
        )));
    }
    let p = csv.data.cols();
    let params = TreeletParams {
        input,
        max_level: args
            .max_level
            .or(cfg_params.as_ref().map(|c| c.max_level))
            .unwrap_or_else(|| p.saturating_sub(1)),
        pair_score: args
            .pair_score
            .map(PairScore::from)
            .or(cfg_params.as_ref().map(|c| c.pair_score))
            .unwrap_or_default(),
        tie_tolerance: args
            .tie_tolerance
            .or(cfg_params.as_ref().map(|c| c.tie_tolerance))
            .unwrap_or(DEFAULT_TIE_TOLERANCE),
        basis_level: args
            .basis_level
            .or(cfg_params.as_ref().and_then(|c| c.basis_level)),
    };
    if params.max_level == 0 || params.max_level > p.saturating_sub(1) {
        return Err(CliError::Usage(format!(
            "--max-level must be in 1..={} for {p} columns",
            p.saturating_sub(1)
        )));
    }
    if params.basis_level.is_some_and(|l| l > params.max_level) {
        return Err(CliError::Usage(format!(
            "--basis-level must be at most --max-level ({})",
            params.max_level
        )));
    }

    let cov = sample_covariance(&csv.data)?;
    let model = build_treelet(
        &cov,
        params.max_level,
        params.pair_score,
        params.tie_tolerance,
    )
    .map_err(|e| match e {
        // Report degenerate columns by their CSV name.
        treelets::Error::DegenerateVariance {
            column, variance, ..
        } => CliError::Failure(format!(
            "column {:?} is degenerate (variance {variance:e})",
            csv.columns[column - 1]
        )),
        other => other.into(),
    })?;

    let out = &args.common.out;
    let mut model_json = model.to_json_string();
    model_json.push('\n');
    write_output(out, "model.json", &model_json)?;
    if let Some(level) = params.basis_level {
        let basis = model.basis_at_level(level)?;
        write_output(
            out,
            &format!("basis_level_{level}.csv"),
            &matrix_to_csv(&csv.columns, &basis),
        )?;
    }
    write_output(
        out,
        "manifest.json",
        &to_json(&Manifest {
            subcommand: "treelet".to_string(),
            seed,
            params,
        }),
    )?;
    println!(
        "treelet: p={p}, levels={}, ties at {:?} -> {}",
        model.max_level(),
        model.tie_log(),
        out.join("model.json").display()
    );
    Ok(0)
}
