//! `hier` subcommand: hierarchical feature construction on a CSV whose
//! response lives in a named column.

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use treelets::eiv::format_g17;
use treelets::hier::{
    run_hierarchical, GenerationRecord, NoImprovement, OperatorKind, SelectionScope,
    SelectorConfig, SelectorKind,
};
use treelets::Mat;

use crate::csvio::read_numeric_csv;
use crate::{load_manifest, to_json, write_output, CliError, CommonArgs, Manifest};

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum OpArg {
    Product,
    #[value(name = "pair_pca")]
    PairPca,
}

impl From<OpArg> for OperatorKind {
    fn from(v: OpArg) -> Self {
        match v {
            OpArg::Product => OperatorKind::Product,
            OpArg::PairPca => OperatorKind::PairPca,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SelectorArg {
    Marginal,
    Stepwise,
}

impl From<SelectorArg> for SelectorKind {
    fn from(v: SelectorArg) -> Self {
        match v {
            SelectorArg::Marginal => SelectorKind::MarginalCorrelation,
            SelectorArg::Stepwise => SelectorKind::ForwardStepwise,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ScopeArg {
    /// Screen the full accumulated dictionary
    Full,
    /// Screen only the newest generation's features (contrast mode)
    Newest,
}

impl From<ScopeArg> for SelectionScope {
    fn from(v: ScopeArg) -> Self {
        match v {
            ScopeArg::Full => SelectionScope::FullDictionary,
            ScopeArg::Newest => SelectionScope::NewestGeneration,
        }
    }
}

#[derive(Args, Debug)]
pub struct HierArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Input CSV with a header row; all columns but the response are
    /// base features
    #[arg(long)]
    input: Option<String>,
    /// Name of the response column
    #[arg(long)]
    y_col: Option<String>,
    /// Pair-combination operator
    #[arg(long, value_enum)]
    op: Option<OpArg>,
    /// Capacity exponent g: select K = ceil(n^g) features per generation
    #[arg(long, alias = "K-exponent")]
    k_exponent: Option<f64>,
    /// Explicit capacity K (overrides --k-exponent)
    #[arg(long)]
    k: Option<usize>,
    /// Maximum number of expansion generations
    #[arg(long)]
    max_gen: Option<usize>,
    #[arg(long, value_enum)]
    selector: Option<SelectorArg>,
    /// Candidate pool per generation
    #[arg(long, value_enum)]
    scope: Option<ScopeArg>,
    /// Generations without improvement before convergence is declared
    #[arg(long)]
    patience: Option<usize>,
    /// Minimum held-out risk improvement that counts
    #[arg(long)]
    min_delta: Option<f64>,
    /// Fraction of rows held out for risk tracking
    #[arg(long)]
    holdout_fraction: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct HierParams {
    pub input: String,
    pub y_col: String,
    pub op: OperatorKind,
    pub k: usize,
    pub selector: SelectorKind,
    pub scope: SelectionScope,
    pub max_generations: usize,
    pub patience: usize,
    pub min_delta: f64,
    pub holdout_fraction: f64,
}

#[derive(Debug, Serialize)]
struct TraceDoc<'a> {
    op: OperatorKind,
    k: usize,
    seed: u64,
    selector: SelectorKind,
    scope: SelectionScope,
    best_generation: usize,
    converged: bool,
    sparsity_warning: bool,
    /// Base-feature column names; expression `x<i>` refers to
    /// `columns[i - 1]`.
    columns: &'a [String],
    generations: &'a [GenerationRecord],
}

pub fn run(args: HierArgs) -> Result<i32, CliError> {
    let config: Option<Manifest<HierParams>> = args
        .common
        .config
        .as_deref()
        .map(|p| load_manifest(p, "hier"))
        .transpose()?;
    let (cfg_seed, cfg) = match config {
        Some(m) => (Some(m.seed), Some(m.params)),
        None => (None, None),
    };
    let seed = args.common.seed.or(cfg_seed).unwrap_or(0);

    let input = args
        .input
        .or(cfg.as_ref().map(|c| c.input.clone()))
        .ok_or_else(|| CliError::Usage("--input is required".into()))?;
    let y_col = args
        .y_col
        .or(cfg.as_ref().map(|c| c.y_col.clone()))
        .ok_or_else(|| CliError::Usage("--y-col is required".into()))?;

    let csv = read_numeric_csv(std::path::Path::new(&input))?;
    let y_idx = csv
        .columns
        .iter()
        .position(|c| *c == y_col)
        .ok_or_else(|| {
            CliError::Usage(format!("{input}: no column named {y_col:?} in the header"))
        })?;
    let n = csv.data.rows();
    let feature_columns: Vec<String> = csv
        .columns
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != y_idx)
        .map(|(_, c)| c.clone())
        .collect();
    if feature_columns.is_empty() {
        return Err(CliError::Usage(format!(
            "{input}: no feature columns besides the response"
        )));
    }
    let y = csv.data.column(y_idx);
    let data = Mat::from_fn(n, feature_columns.len(), |r, c| {
        let src = if c < y_idx { c } else { c + 1 };
        csv.data.get(r, src)
    });

    let k = match (args.k, args.k_exponent, cfg.as_ref()) {
        (Some(k), _, _) => k,
        (None, Some(g), _) => (n as f64).powf(g).ceil().max(1.0) as usize,
        (None, None, Some(c)) => c.k,
        (None, None, None) => (n as f64).sqrt().ceil() as usize,
    };
    let params = HierParams {
        input,
        y_col,
        op: args
            .op
            .map(OperatorKind::from)
            .or(cfg.as_ref().map(|c| c.op))
            .unwrap_or(OperatorKind::Product),
        k,
        selector: args
            .selector
            .map(SelectorKind::from)
            .or(cfg.as_ref().map(|c| c.selector))
            .unwrap_or(SelectorKind::MarginalCorrelation),
        scope: args
            .scope
            .map(SelectionScope::from)
            .or(cfg.as_ref().map(|c| c.scope))
            .unwrap_or_default(),
        max_generations: args
            .max_gen
            .or(cfg.as_ref().map(|c| c.max_generations))
            .unwrap_or(10),
        patience: args
            .patience
            .or(cfg.as_ref().map(|c| c.patience))
            .unwrap_or(2),
        min_delta: args
            .min_delta
            .or(cfg.as_ref().map(|c| c.min_delta))
            .unwrap_or(1e-4),
        holdout_fraction: args
            .holdout_fraction
            .or(cfg.as_ref().map(|c| c.holdout_fraction))
            .unwrap_or(0.2),
    };
    let selector_config = SelectorConfig {
        k: params.k,
        selector: params.selector,
        scope: params.scope,
        max_generations: params.max_generations,
        convergence: NoImprovement {
            patience: params.patience,
            min_delta: params.min_delta,
        },
        holdout_fraction: params.holdout_fraction,
    };

    let output =
        run_hierarchical(&data, &y, params.op, &selector_config, seed).map_err(|e| match e {
            treelets::Error::InvalidSpec(msg) => CliError::Usage(msg),
            treelets::Error::InsufficientData { needed, got } => {
                CliError::Usage(format!("need at least {needed} data rows, got {got}"))
            }
            other => other.into(),
        })?;

    if output.sparsity_warning {
        eprintln!(
            "warning: selected {} features, above the n/ln(n) budget of {:.1}",
            output.selected.len(),
            n as f64 / (n as f64).ln()
        );
    }

    let out = &args.common.out;
    let trace = TraceDoc {
        op: params.op,
        k: params.k,
        seed,
        selector: params.selector,
        scope: params.scope,
        best_generation: output.best_generation,
        converged: output.converged,
        sparsity_warning: output.sparsity_warning,
        columns: &feature_columns,
        generations: &output.trace,
    };
    write_output(out, "trace.json", &to_json(&trace))?;

    let mut selected_csv = String::from("expression,coefficient\n");
    selected_csv.push_str(&format!(
        "intercept,{}\n",
        format_g17(output.coefficients[0])
    ));
    for (i, expr) in output.selected_expressions().iter().enumerate() {
        selected_csv.push_str(&format!(
            "{expr},{}\n",
            format_g17(output.coefficients[i + 1])
        ));
    }
    write_output(out, "selected.csv", &selected_csv)?;
    write_output(
        out,
        "manifest.json",
        &to_json(&Manifest {
            subcommand: "hier".to_string(),
            seed,
            params,
        }),
    )?;

    println!(
        "hier: best generation {} ({}), selected [{}]",
        output.best_generation,
        if output.converged {
            "converged"
        } else {
            "generation cap"
        },
        output.selected_expressions().join(", ")
    );
    Ok(0)
}
