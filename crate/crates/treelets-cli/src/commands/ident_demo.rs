//! `ident-demo` subcommand: builds the two observationally equivalent
//! factor models and verifies their covariances and treelet trees agree.
//! Exit status 0 only when both checks pass.

use clap::Args;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use treelets::factor::{example2_pair, population_covariance, FactorSpec};
use treelets::treelet::{build_treelet, PairScore, DEFAULT_TIE_TOLERANCE};

use crate::{load_manifest, to_json, write_output, CliError, CommonArgs, Manifest};

const COVARIANCE_TOLERANCE: f64 = 1e-12;
const TREE_TOLERANCE: f64 = 1e-8;

#[derive(Args, Debug)]
pub struct IdentDemoArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Dimension of the loading vectors
    #[arg(long)]
    p: Option<usize>,
    /// Coefficient of v1 in the absorbed third loading
    #[arg(long)]
    c1: Option<f64>,
    /// Coefficient of v2 in the absorbed third loading
    #[arg(long)]
    c2: Option<f64>,
    /// Isotropic noise level
    #[arg(long)]
    sigma: Option<f64>,
    /// Negative control: perturb one loading of spec B so the check fails
    #[arg(long, hide = true)]
    perturb: bool,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct IdentDemoParams {
    pub p: usize,
    pub c1: f64,
    pub c2: f64,
    pub sigma: f64,
    pub perturb: bool,
}

#[derive(Debug, Serialize)]
struct IdentReport {
    params: IdentDemoParams,
    seed: u64,
    factor_vars: [f64; 3],
    spec_a: serde_json::Value,
    spec_b: serde_json::Value,
    max_abs_covariance_difference: f64,
    covariance_tolerance: f64,
    trees_identical: bool,
    pass: bool,
}

pub fn run(args: IdentDemoArgs) -> Result<i32, CliError> {
    let config: Option<Manifest<IdentDemoParams>> = args
        .common
        .config
        .as_deref()
        .map(|p| load_manifest(p, "ident-demo"))
        .transpose()?;
    let (cfg_seed, cfg) = match config {
        Some(m) => (Some(m.seed), Some(m.params)),
        None => (None, None),
    };
    let seed = args.common.seed.or(cfg_seed).unwrap_or(0);
    let params = IdentDemoParams {
        p: args.p.or(cfg.as_ref().map(|c| c.p)).unwrap_or(4),
        c1: args.c1.or(cfg.as_ref().map(|c| c.c1)).unwrap_or(1.0),
        c2: args.c2.or(cfg.as_ref().map(|c| c.c2)).unwrap_or(1.0),
        sigma: args.sigma.or(cfg.as_ref().map(|c| c.sigma)).unwrap_or(1.0),
        perturb: args.perturb || cfg.as_ref().is_some_and(|c| c.perturb),
    };
    if params.p < 2 {
        return Err(CliError::Usage("--p must be at least 2".into()));
    }

    // Seeded loading vectors and factor variances.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v1: Vec<f64> = (0..params.p).map(|_| rng.random_range(-1.0..1.0)).collect();
    let v2: Vec<f64> = (0..params.p).map(|_| rng.random_range(-1.0..1.0)).collect();
    let factor_vars = [
        rng.random_range(0.2..2.0),
        rng.random_range(0.2..2.0),
        rng.random_range(0.2..2.0),
    ];

    let (spec_a, spec_b) =
        example2_pair(&v1, &v2, params.c1, params.c2, factor_vars, params.sigma)?;
    let spec_b = if params.perturb {
        let mut loadings = spec_b.loadings().clone();
        loadings.set(0, 0, loadings.get(0, 0) + 1e-6);
        FactorSpec::new(
            loadings,
            spec_b.factor_dists().to_vec(),
            spec_b.noise_sigma(),
        )?
    } else {
        spec_b
    };

    let cov_a = population_covariance(&spec_a);
    let cov_b = population_covariance(&spec_b);
    let diff = cov_a.max_abs_diff(&cov_b);

    let tree_a = build_treelet(
        &cov_a,
        params.p - 1,
        PairScore::Correlation,
        DEFAULT_TIE_TOLERANCE,
    )?;
    let tree_b = build_treelet(
        &cov_b,
        params.p - 1,
        PairScore::Correlation,
        DEFAULT_TIE_TOLERANCE,
    )?;
    let trees_identical = tree_a.structurally_equal(&tree_b, TREE_TOLERANCE);
    let pass = diff <= COVARIANCE_TOLERANCE && trees_identical;

    let spec_json = |s: &FactorSpec| -> serde_json::Value {
        serde_json::from_str(&s.to_json_string()).expect("spec JSON parses")
    };
    let report = IdentReport {
        seed,
        factor_vars,
        spec_a: spec_json(&spec_a),
        spec_b: spec_json(&spec_b),
        max_abs_covariance_difference: diff,
        covariance_tolerance: COVARIANCE_TOLERANCE,
        trees_identical,
        pass,
        params,
    };
    let out = &args.common.out;
    write_output(out, "report.json", &to_json(&report))?;
    write_output(
        out,
        "manifest.json",
        &to_json(&Manifest {
            subcommand: "ident-demo".to_string(),
            seed,
            params: report.params,
        }),
    )?;

    if pass {
        println!(
            "ident-demo: covariance difference {diff:.3e} <= {COVARIANCE_TOLERANCE:.0e}, trees identical"
        );
        Ok(0)
    } else {
        println!(
            "ident-demo: FAILED (covariance difference {diff:.3e}, trees identical: {trees_identical})"
        );
        Ok(1)
    }
}
