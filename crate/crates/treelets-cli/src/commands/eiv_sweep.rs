//! `eiv-sweep` subcommand: benchmark table over a grid of signal loadings.

use clap::Args;
use serde::{Deserialize, Serialize};

use treelets::eiv::{sweep_cp, sweep_to_csv, SweepConfig, SweepReport, SweepRow};

use crate::{load_manifest, to_json, write_output, CliError, CommonArgs, Manifest};

#[derive(Args, Debug)]
pub struct EivSweepArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Number of predictors
    #[arg(long)]
    p: Option<usize>,
    /// Regression coefficient of the latent signal
    #[arg(long)]
    gamma: Option<f64>,
    /// Common measurement-noise variance sigma_i^2
    #[arg(long)]
    noise_var: Option<f64>,
    /// Comma-separated grid of c values (default straddles p^{-1/2})
    #[arg(long, value_delimiter = ',')]
    c_grid: Option<Vec<f64>>,
    #[arg(long)]
    n_train: Option<usize>,
    #[arg(long)]
    n_test: Option<usize>,
    /// Monte Carlo replicates per grid point (at least 2)
    #[arg(long)]
    reps: Option<usize>,
    /// Principal components for the PCA baseline
    #[arg(long)]
    q: Option<usize>,
    /// Features kept by the treelet screens (default ceil(sqrt(n_train)))
    #[arg(long)]
    k_features: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EivSweepParams {
    pub p: usize,
    pub gamma: f64,
    pub noise_var: f64,
    pub c_grid: Vec<f64>,
    pub n_train: usize,
    pub n_test: usize,
    pub replicates: usize,
    pub q: usize,
    pub k_features: Option<usize>,
}

pub fn run(args: EivSweepArgs) -> Result<i32, CliError> {
    let config: Option<Manifest<EivSweepParams>> = args
        .common
        .config
        .as_deref()
        .map(|p| load_manifest(p, "eiv-sweep"))
        .transpose()?;
    let (cfg_seed, cfg) = match config {
        Some(m) => (Some(m.seed), Some(m.params)),
        None => (None, None),
    };
    let seed = args.common.seed.or(cfg_seed).unwrap_or(0);
    let p = args.p.or(cfg.as_ref().map(|c| c.p)).unwrap_or(50);
    let params = EivSweepParams {
        p,
        gamma: args.gamma.or(cfg.as_ref().map(|c| c.gamma)).unwrap_or(1.0),
        noise_var: args
            .noise_var
            .or(cfg.as_ref().map(|c| c.noise_var))
            .unwrap_or(1.0),
        c_grid: args
            .c_grid
            .or(cfg.as_ref().map(|c| c.c_grid.clone()))
            .unwrap_or_else(|| SweepConfig::default_c_grid(p)),
        n_train: args
            .n_train
            .or(cfg.as_ref().map(|c| c.n_train))
            .unwrap_or(500),
        n_test: args
            .n_test
            .or(cfg.as_ref().map(|c| c.n_test))
            .unwrap_or(2000),
        replicates: args
            .reps
            .or(cfg.as_ref().map(|c| c.replicates))
            .unwrap_or(20),
        q: args.q.or(cfg.as_ref().map(|c| c.q)).unwrap_or(1),
        k_features: args.k_features.or(cfg.as_ref().and_then(|c| c.k_features)),
    };
    if params.replicates < 2 {
        return Err(CliError::Usage(
            "--reps must be at least 2; a single replicate has no Monte Carlo standard error"
                .into(),
        ));
    }
    if params.noise_var <= 0.0 || !params.noise_var.is_finite() {
        return Err(CliError::Usage("--noise-var must be positive".into()));
    }

    let sweep_config = SweepConfig {
        p: params.p,
        gamma: params.gamma,
        noise_vars: vec![params.noise_var; params.p],
        c_grid: params.c_grid.clone(),
        n_train: params.n_train,
        n_test: params.n_test,
        replicates: params.replicates,
        seed,
        q: params.q,
        k_features: params.k_features,
    };
    let table = sweep_cp(&sweep_config).map_err(|e| match e {
        treelets::Error::InvalidSpec(msg) => CliError::Usage(msg),
        other => other.into(),
    })?;

    for &c in &params.c_grid {
        let cell: Vec<&SweepRow> = table.rows.iter().filter(|r| r.c == c).collect();
        let fmt = |r: Option<&&SweepRow>| -> String {
            match r.and_then(|row| row.mse_mean) {
                Some(m) => format!("{m:.4}"),
                None => "missing".to_string(),
            }
        };
        println!(
            "c={c:.6}: oracle={} pca={} treelet/single={} treelet/union={}",
            fmt(cell.iter().find(|r| r.method == "oracle")),
            fmt(cell.iter().find(|r| r.method == "pca")),
            fmt(cell.iter().find(|r| r.mode == "single_level")),
            fmt(cell.iter().find(|r| r.mode == "union")),
        );
    }
    if !table.failures.is_empty() {
        eprintln!(
            "warning: {} replicate fits failed; see report.json",
            table.failures.len()
        );
    }

    let out = &args.common.out;
    write_output(out, "sweep.csv", &sweep_to_csv(&table))?;
    let report = SweepReport {
        k_features_resolved: sweep_config.resolved_k_features(),
        config: sweep_config,
        rows: table.rows,
        failures: table.failures,
    };
    write_output(out, "report.json", &to_json(&report))?;
    write_output(
        out,
        "manifest.json",
        &to_json(&Manifest {
            subcommand: "eiv-sweep".to_string(),
            seed,
            params,
        }),
    )?;
    Ok(0)
}
