//! Errors-in-variables prediction benchmark.
//!
//! The model observes `Y = gamma Z + eps` through noisy proxies
//! `X_i = c Z + eta_i`. The conditional expectation `E[Y | X]` has a
//! closed form, which gives an exact Bayes floor every learned method can
//! be compared against. `sweep_cp` scans the signal loading `c` and pits
//! the oracle against PCA regression and two treelet feature selections.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::eigh::reference_eigh;
use crate::error::{Error, Result};
use crate::linalg::sample_covariance;
use crate::mat::{
    least_squares, least_squares_dropping, mean, mean_squared_error, sample_variance, Mat,
};
use crate::treelet::{build_treelet, PairScore, TreeletModel, DEFAULT_TIE_TOLERANCE};

/// Parameters of the errors-in-variables model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EivSpec {
    p: usize,
    gamma: f64,
    c: f64,
    noise_vars: Vec<f64>,
}

impl EivSpec {
    pub fn new(p: usize, gamma: f64, c: f64, noise_vars: Vec<f64>) -> Result<Self> {
        if p == 0 {
            return Err(Error::InvalidSpec("need p >= 1".into()));
        }
        if noise_vars.len() != p {
            return Err(Error::InvalidSpec(format!(
                "expected {p} noise variances, got {}",
                noise_vars.len()
            )));
        }
        if !(gamma.is_finite() && c.is_finite()) {
            return Err(Error::InvalidSpec("gamma and c must be finite".into()));
        }
        for &v in &noise_vars {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::InvalidSpec(format!(
                    "noise variances must be positive, got {v}"
                )));
            }
        }
        Ok(EivSpec {
            p,
            gamma,
            c,
            noise_vars,
        })
    }

    pub fn dim(&self) -> usize {
        self.p
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn noise_vars(&self) -> &[f64] {
        &self.noise_vars
    }

    /// `S = sum of 1 / sigma_i^2`.
    pub fn precision_sum(&self) -> f64 {
        self.noise_vars.iter().map(|v| 1.0 / v).sum()
    }

    /// The best predictor `E[Y | X = x]`:
    /// `gamma c / (1 + c^2 S) * sum_i x_i / sigma_i^2`.
    pub fn oracle_predict(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.p, "oracle_predict dimension mismatch");
        let s = self.precision_sum();
        let w = self.gamma * self.c / (1.0 + self.c * self.c * s);
        w * x
            .iter()
            .zip(&self.noise_vars)
            .map(|(xi, v)| xi / v)
            .sum::<f64>()
    }

    /// Mean squared error of the best predictor:
    /// `gamma^2 / (1 + c^2 S) + 1`.
    pub fn oracle_mse(&self) -> f64 {
        let s = self.precision_sum();
        self.gamma * self.gamma / (1.0 + self.c * self.c * s) + 1.0
    }
}

/// A drawn response vector with its predictor matrix.
#[derive(Debug, Clone)]
pub struct Sample {
    pub y: Vec<f64>,
    pub x: Mat,
}

impl Sample {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// Splits off the trailing `fraction` of rows (at least one row each
    /// side). Used for held-out level selection.
    pub fn split_tail(&self, fraction: f64) -> (Sample, Sample) {
        let n = self.len();
        assert!(n >= 2, "cannot split fewer than two rows");
        let tail = ((n as f64 * fraction).ceil() as usize).clamp(1, n - 1);
        let head = n - tail;
        let take = |range: std::ops::Range<usize>| Sample {
            y: self.y[range.clone()].to_vec(),
            x: Mat::from_fn(range.len(), self.x.cols(), |r, c| {
                self.x.get(range.start + r, c)
            }),
        };
        (take(0..head), take(head..n))
    }
}

/// Draws `n` i.i.d. replicates of `(Y, X)`, deterministically for a seed.
///
/// Per row the draw order is `z`, `eps`, then `eta_1..eta_p`.
pub fn sample_eiv(spec: &EivSpec, n: usize, seed: u64) -> Result<Sample> {
    if n == 0 {
        return Err(Error::InvalidSpec("need n >= 1 samples".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sds: Vec<f64> = spec.noise_vars.iter().map(|v| v.sqrt()).collect();
    let mut y = Vec::with_capacity(n);
    let mut x = Mat::zeros(n, spec.p);
    for r in 0..n {
        let z: f64 = rng.sample(StandardNormal);
        let eps: f64 = rng.sample(StandardNormal);
        y.push(spec.gamma * z + eps);
        let row = x.row_mut(r);
        for (value, sd) in row.iter_mut().zip(&sds) {
            let eta: f64 = rng.sample(StandardNormal);
            *value = spec.c * z + sd * eta;
        }
    }
    Ok(Sample { y, x })
}

/// Named method performance over one or more replicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub method: String,
    /// Test mean squared error of each replicate.
    pub replicate_mses: Vec<f64>,
    pub mse_mean: f64,
    /// Sample standard deviation over replicates divided by
    /// `sqrt(replicates)`; zero for a single replicate.
    pub mse_se: f64,
}

impl MethodResult {
    pub fn from_replicates(method: impl Into<String>, replicate_mses: Vec<f64>) -> Result<Self> {
        if replicate_mses.is_empty() {
            return Err(Error::InvalidSpec("no replicate MSEs".into()));
        }
        for &m in &replicate_mses {
            if !m.is_finite() || m < 0.0 {
                return Err(Error::InvalidSpec(format!(
                    "MSE values must be finite and nonnegative, got {m}"
                )));
            }
        }
        let mse_mean = mean(&replicate_mses);
        let mse_se = if replicate_mses.len() >= 2 {
            (sample_variance(&replicate_mses) / replicate_mses.len() as f64).sqrt()
        } else {
            0.0
        };
        Ok(MethodResult {
            method: method.into(),
            replicate_mses,
            mse_mean,
            mse_se,
        })
    }

    pub fn replicates(&self) -> usize {
        self.replicate_mses.len()
    }
}

/// Principal-component regression: project centered predictors on the
/// top `q` eigenvectors of the training covariance, regress `y` on the
/// scores with an intercept, and evaluate on the test set.
pub fn pca_regress(train: &Sample, test: &Sample, q: usize) -> Result<MethodResult> {
    let p = train.x.cols();
    if q == 0 || q > p {
        return Err(Error::InvalidSpec(format!(
            "component count {q} out of range 1..={p}"
        )));
    }
    if train.len() < q + 2 {
        return Err(Error::InsufficientData {
            needed: q + 2,
            got: train.len(),
        });
    }
    if test.x.cols() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            got: test.x.cols(),
        });
    }
    let cov = sample_covariance(&train.x)?;
    let (_, vectors) = reference_eigh(&cov)?;
    let means = train.x.column_means();

    let scores = |data: &Mat| -> Vec<Vec<f64>> {
        (0..q)
            .map(|k| {
                (0..data.rows())
                    .map(|r| {
                        (0..p)
                            .map(|j| (data.get(r, j) - means[j]) * vectors.get(j, k))
                            .sum()
                    })
                    .collect()
            })
            .collect()
    };

    let mut design = vec![vec![1.0; train.len()]];
    design.extend(scores(&train.x));
    let beta = least_squares(&design, &train.y)?;

    let mut test_design = vec![vec![1.0; test.len()]];
    test_design.extend(scores(&test.x));
    let pred: Vec<f64> = (0..test.len())
        .map(|r| {
            beta.iter()
                .zip(&test_design)
                .map(|(b, col)| b * col[r])
                .sum()
        })
        .collect();
    let mse = mean_squared_error(&pred, &test.y);
    MethodResult::from_replicates("pca", vec![mse])
}

/// Which treelet coordinates are offered to the feature screen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LevelMode {
    /// All `p` coordinates of one level (chosen on a held-out fifth of
    /// the training data when no level is given).
    SingleLevel,
    /// Coordinates of every level, deduplicated by rotation path: a
    /// coordinate enters once at level 0 and again only at the levels
    /// whose rotation touches it.
    Union,
}

impl LevelMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            LevelMode::SingleLevel => "single_level",
            LevelMode::Union => "union",
        }
    }
}

/// Candidate treelet coordinate: the value of coordinate `coord` after
/// applying rotations `1..=level`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Candidate {
    level: usize,
    coord: usize,
}

fn candidate_list(model: &TreeletModel, mode: LevelMode, level: usize) -> Vec<Candidate> {
    match mode {
        LevelMode::SingleLevel => (0..model.dim())
            .map(|coord| Candidate { level, coord })
            .collect(),
        LevelMode::Union => {
            let mut cands: Vec<Candidate> = (0..model.dim())
                .map(|coord| Candidate { level: 0, coord })
                .collect();
            for step in model.rotations() {
                cands.push(Candidate {
                    level: step.level,
                    coord: step.rotation.i,
                });
                cands.push(Candidate {
                    level: step.level,
                    coord: step.rotation.j,
                });
            }
            cands
        }
    }
}

/// Evaluates candidate coordinates for every row of `data` by walking the
/// rotation sequence once per row.
fn candidate_values(model: &TreeletModel, cands: &[Candidate], data: &Mat) -> Vec<Vec<f64>> {
    let n = data.rows();
    let mut values = vec![vec![0.0; n]; cands.len()];
    // Candidates indexed by level for the single walk.
    let mut by_level: Vec<Vec<(usize, usize)>> = vec![Vec::new(); model.max_level() + 1];
    for (idx, cand) in cands.iter().enumerate() {
        by_level[cand.level].push((idx, cand.coord));
    }
    let mut work = vec![0.0; model.dim()];
    for r in 0..n {
        work.copy_from_slice(data.row(r));
        for &(idx, coord) in &by_level[0] {
            values[idx][r] = work[coord];
        }
        for step in model.rotations() {
            step.rotation.apply(&mut work);
            for &(idx, coord) in &by_level[step.level] {
                values[idx][r] = work[coord];
            }
        }
    }
    values
}

/// Treelet-feature regression.
///
/// Builds the full tree on the training covariance, screens candidate
/// coordinates by absolute correlation with `y`, fits least squares on
/// the top `k_features` (plus intercept), and reports the test MSE.
/// In `SingleLevel` mode with `level = None` the level minimizing risk on
/// the trailing fifth of the training rows is selected first.
pub fn treelet_regress(
    train: &Sample,
    test: &Sample,
    mode: LevelMode,
    level: Option<usize>,
    k_features: usize,
) -> Result<MethodResult> {
    let p = train.x.cols();
    if p < 2 {
        return Err(Error::InvalidSpec("treelet regression needs p >= 2".into()));
    }
    if test.x.cols() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            got: test.x.cols(),
        });
    }
    let cov = sample_covariance(&train.x)?;
    let model = build_treelet(&cov, p - 1, PairScore::Correlation, DEFAULT_TIE_TOLERANCE)?;

    let available = candidate_list(&model, mode, 0).len();
    if k_features == 0 || k_features > available {
        return Err(Error::InvalidSpec(format!(
            "k_features {k_features} out of range 1..={available}"
        )));
    }

    let chosen_level = match (mode, level) {
        (LevelMode::Union, _) => 0,
        (LevelMode::SingleLevel, Some(l)) => {
            if l > model.max_level() {
                return Err(Error::LevelOutOfRange {
                    level: l,
                    max_level: model.max_level(),
                });
            }
            l
        }
        (LevelMode::SingleLevel, None) => {
            let (fit_part, holdout) = train.split_tail(0.2);
            let mut best = (0usize, f64::INFINITY);
            for l in 0..=model.max_level() {
                let cands = candidate_list(&model, mode, l);
                match fit_and_score(&model, &cands, &fit_part, &holdout, k_features) {
                    Ok(risk) => {
                        if risk < best.1 {
                            best = (l, risk);
                        }
                    }
                    Err(Error::SingularFit(_)) | Err(Error::EmptySelection) => continue,
                    Err(e) => return Err(e),
                }
            }
            if !best.1.is_finite() {
                return Err(Error::SingularFit(
                    "no treelet level produced a usable fit".into(),
                ));
            }
            best.0
        }
    };

    let cands = candidate_list(&model, mode, chosen_level);
    let mse = fit_and_score(&model, &cands, train, test, k_features)?;
    MethodResult::from_replicates("treelet", vec![mse])
}

/// Screens candidates on `train`, fits, and returns the MSE on `eval`.
fn fit_and_score(
    model: &TreeletModel,
    cands: &[Candidate],
    train: &Sample,
    eval: &Sample,
    k_features: usize,
) -> Result<f64> {
    let train_vals = candidate_values(model, cands, &train.x);

    // Rank by |correlation with y|; degenerate coordinates are excluded.
    let y_var = sample_variance(&train.y);
    let y_mean = mean(&train.y);
    let mut scored: Vec<(usize, f64)> = Vec::new();
    for (idx, vals) in train_vals.iter().enumerate() {
        let v = sample_variance(vals);
        if v <= 1e-12 || y_var <= 0.0 {
            continue;
        }
        let m = mean(vals);
        let cov: f64 = vals
            .iter()
            .zip(&train.y)
            .map(|(a, b)| (a - m) * (b - y_mean))
            .sum::<f64>()
            / (vals.len() - 1) as f64;
        scored.push((idx, (cov / (v * y_var).sqrt()).abs()));
    }
    if scored.is_empty() {
        return Err(Error::SingularFit(
            "all candidate coordinates are degenerate".into(),
        ));
    }
    scored.sort_by(|a, b| {
        b.1.partial_cmp(&a.1).unwrap().then_with(|| {
            (cands[a.0].level, cands[a.0].coord).cmp(&(cands[b.0].level, cands[b.0].coord))
        })
    });
    let selected: Vec<usize> = scored
        .iter()
        .take(k_features.min(scored.len()))
        .map(|(idx, _)| *idx)
        .collect();

    let mut design = vec![vec![1.0; train.len()]];
    for &idx in &selected {
        design.push(train_vals[idx].clone());
    }
    let fit = least_squares_dropping(&design, &train.y)?;

    let sel_cands: Vec<Candidate> = selected.iter().map(|&idx| cands[idx]).collect();
    let eval_vals = candidate_values(model, &sel_cands, &eval.x);
    let mut eval_design = vec![vec![1.0; eval.len()]];
    eval_design.extend(eval_vals);
    let mut pred = Vec::new();
    fit.predict(&eval_design, &mut pred);
    Ok(mean_squared_error(&pred, &eval.y))
}

/// Configuration of a `c_p` sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub p: usize,
    pub gamma: f64,
    pub noise_vars: Vec<f64>,
    pub c_grid: Vec<f64>,
    pub n_train: usize,
    pub n_test: usize,
    pub replicates: usize,
    pub seed: u64,
    /// Principal components for the PCA baseline.
    pub q: usize,
    /// Features kept by the treelet screens; `ceil(sqrt(n_train))` when
    /// unset.
    pub k_features: Option<usize>,
}

impl SweepConfig {
    /// The default grid straddles the analyzed point `c = p^{-1/2}`:
    /// `{1/4, 1/2, 1, 2, 4, 8} * p^{-1/2}`.
    pub fn default_c_grid(p: usize) -> Vec<f64> {
        let base = 1.0 / (p as f64).sqrt();
        [0.25, 0.5, 1.0, 2.0, 4.0, 8.0]
            .iter()
            .map(|m| m * base)
            .collect()
    }

    pub fn resolved_k_features(&self) -> usize {
        self.k_features
            .unwrap_or_else(|| (self.n_train as f64).sqrt().ceil() as usize)
    }

    fn validate(&self) -> Result<()> {
        EivSpec::new(self.p, self.gamma, 0.0, self.noise_vars.clone())?;
        if self.c_grid.is_empty() {
            return Err(Error::InvalidSpec("empty c grid".into()));
        }
        for &c in &self.c_grid {
            if !c.is_finite() {
                return Err(Error::InvalidSpec("c grid must be finite".into()));
            }
        }
        if self.replicates < 2 {
            return Err(Error::InvalidSpec(
                "need at least 2 replicates for a Monte Carlo standard error".into(),
            ));
        }
        if self.n_train < 4 || self.n_test < 2 {
            return Err(Error::InvalidSpec("train/test sizes too small".into()));
        }
        Ok(())
    }
}

/// One aggregated cell of the sweep table. `mse_mean`/`mse_se` are `None`
/// when every replicate of the cell failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub c: f64,
    pub method: String,
    /// `single_level` / `union` for the treelet rows, empty otherwise.
    pub mode: String,
    pub mse_mean: Option<f64>,
    pub mse_se: Option<f64>,
    pub replicates: usize,
}

/// A replicate whose fit failed; kept for auditability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepFailure {
    pub c: f64,
    pub method: String,
    pub mode: String,
    pub replicate: usize,
    pub error: String,
}

/// Sweep output: one row per `(c, method, mode)` in deterministic order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    pub failures: Vec<SweepFailure>,
}

/// Full report mirroring the CSV plus the configuration that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub config: SweepConfig,
    pub k_features_resolved: usize,
    pub rows: Vec<SweepRow>,
    pub failures: Vec<SweepFailure>,
}

const METHODS: [(&str, &str); 4] = [
    ("oracle", ""),
    ("pca", ""),
    ("treelet", "single_level"),
    ("treelet", "union"),
];

/// Runs the sweep: for every grid value and replicate, draw fresh
/// train/test sets, evaluate the oracle, PCA regression and both treelet
/// modes, and aggregate per cell. Failed fits become missing cells, not
/// aborts. Deterministic for a given seed; replicate `r` derives its
/// seeds from `seed + r`.
pub fn sweep_cp(config: &SweepConfig) -> Result<SweepTable> {
    config.validate()?;
    let k_features = config.resolved_k_features();
    let mut rows = Vec::new();
    let mut failures = Vec::new();

    for (g, &c) in config.c_grid.iter().enumerate() {
        let spec = EivSpec::new(config.p, config.gamma, c, config.noise_vars.clone())?;
        let mut cell_mses: Vec<Vec<f64>> = vec![Vec::new(); METHODS.len()];
        for r in 0..config.replicates {
            let rep_base = config.seed.wrapping_add(r as u64);
            let train_seed = derive_seed(rep_base, 2 * g as u64);
            let test_seed = derive_seed(rep_base, 2 * g as u64 + 1);
            let train = sample_eiv(&spec, config.n_train, train_seed)?;
            let test = sample_eiv(&spec, config.n_test, test_seed)?;

            let oracle_pred: Vec<f64> = (0..test.len())
                .map(|row| spec.oracle_predict(test.x.row(row)))
                .collect();
            cell_mses[0].push(mean_squared_error(&oracle_pred, &test.y));

            let outcomes: [std::result::Result<MethodResult, Error>; 3] = [
                pca_regress(&train, &test, config.q),
                treelet_regress(&train, &test, LevelMode::SingleLevel, None, k_features),
                treelet_regress(&train, &test, LevelMode::Union, None, k_features),
            ];
            for (m, outcome) in outcomes.into_iter().enumerate() {
                match outcome {
                    Ok(res) => cell_mses[m + 1].push(res.mse_mean),
                    Err(e) => failures.push(SweepFailure {
                        c,
                        method: METHODS[m + 1].0.to_string(),
                        mode: METHODS[m + 1].1.to_string(),
                        replicate: r,
                        error: e.to_string(),
                    }),
                }
            }
        }
        for ((method, mode), mses) in METHODS.iter().zip(cell_mses) {
            let row = if mses.is_empty() {
                SweepRow {
                    c,
                    method: method.to_string(),
                    mode: mode.to_string(),
                    mse_mean: None,
                    mse_se: None,
                    replicates: 0,
                }
            } else {
                let agg = MethodResult::from_replicates(*method, mses)?;
                SweepRow {
                    c,
                    method: method.to_string(),
                    mode: mode.to_string(),
                    mse_mean: Some(agg.mse_mean),
                    mse_se: Some(agg.mse_se),
                    replicates: agg.replicates(),
                }
            };
            rows.push(row);
        }
    }
    Ok(SweepTable { rows, failures })
}

/// SplitMix64 step used to derive per-stream seeds from `base + r`.
fn derive_seed(rep_base: u64, stream: u64) -> u64 {
    let mut z = rep_base ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Formats a float with 17 significant digits, enough to round-trip f64.
pub fn format_g17(v: f64) -> String {
    format!("{v:.16e}")
}

/// Renders the sweep as CSV with the fixed header
/// `c,method,mode,mse_mean,mse_se,replicates`.
pub fn sweep_to_csv(table: &SweepTable) -> String {
    let mut out = String::from("c,method,mode,mse_mean,mse_se,replicates\n");
    for row in &table.rows {
        let fmt_opt = |v: Option<f64>| v.map(format_g17).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            format_g17(row.c),
            row.method,
            row.mode,
            fmt_opt(row.mse_mean),
            fmt_opt(row.mse_se),
            row.replicates
        ));
    }
    out
}
