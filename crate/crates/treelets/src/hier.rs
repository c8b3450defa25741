//! Hierarchical feature construction and selection.
//!
//! Starting from the base variables, each generation selects at most K
//! features, combines every selected pair with an operator (elementwise
//! product, or pair-PCA which contributes both rotated coordinates), adds
//! the combinations to the dictionary, and repeats until the held-out
//! risk stops improving. Selection screens the full accumulated
//! dictionary by default; a newest-generation-only scope exists as a
//! contrast mode.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{jacobi_rotate, SymMatrix};
use crate::mat::{
    least_squares_dropping, mean, mean_squared_error, sample_cov, sample_variance, standardize, Mat,
};

/// Variance at or below this floor marks a feature as degenerate.
const DEGENERACY_FLOOR: f64 = 1e-12;

/// Stable identifier of a feature in its arena.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FeatureId(pub usize);

/// How two selected features are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorKind {
    /// Elementwise product; one child per unordered pair, self-pairs
    /// included.
    Product,
    /// PCA on the pair: two children per unordered pair of distinct
    /// features, the larger-variance rotated coordinate (primary) and the
    /// other (secondary).
    PairPca,
}

/// Which of the two pair-PCA coordinates this feature is.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Primary,
    Secondary,
}

/// Node payload: a base column or a combination of two parents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FeatureNode {
    Base {
        index: usize,
    },
    Combined {
        op: OperatorKind,
        left: FeatureId,
        right: FeatureId,
        branch: Branch,
    },
}

/// A node of the feature DAG.
#[derive(Debug, Clone)]
pub struct Feature {
    pub id: FeatureId,
    pub node: FeatureNode,
    /// Structural depth: zero for base features, one more than the
    /// deeper parent otherwise, so parents always sit strictly below
    /// their children.
    pub depth: usize,
}

/// Append-only store of features with structural deduplication: the same
/// operator applied to the same unordered parents (and branch) always
/// returns the existing id.
#[derive(Debug, Clone, Default)]
pub struct FeatureArena {
    features: Vec<Feature>,
    interned: HashMap<FeatureNode, FeatureId>,
}

impl FeatureArena {
    pub fn new() -> Self {
        Self::default()
    }

    /// Creates the base features `0..p` and returns their ids.
    pub fn with_base_features(p: usize) -> (Self, Vec<FeatureId>) {
        let mut arena = Self::new();
        let ids = (0..p).map(|i| arena.intern_base(i)).collect();
        (arena, ids)
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn get(&self, id: FeatureId) -> &Feature {
        &self.features[id.0]
    }

    pub fn intern_base(&mut self, index: usize) -> FeatureId {
        self.intern(FeatureNode::Base { index })
    }

    /// Canonicalizes the parent order and returns the existing id when
    /// the node was seen before.
    pub fn intern_combined(
        &mut self,
        op: OperatorKind,
        a: FeatureId,
        b: FeatureId,
        branch: Branch,
    ) -> FeatureId {
        let (left, right) = if a <= b { (a, b) } else { (b, a) };
        self.intern(FeatureNode::Combined {
            op,
            left,
            right,
            branch,
        })
    }

    fn intern(&mut self, node: FeatureNode) -> FeatureId {
        if let Some(&id) = self.interned.get(&node) {
            return id;
        }
        let depth = match node {
            FeatureNode::Base { .. } => 0,
            FeatureNode::Combined { left, right, .. } => {
                1 + self.get(left).depth.max(self.get(right).depth)
            }
        };
        let id = FeatureId(self.features.len());
        self.features.push(Feature { id, node, depth });
        self.interned.insert(node, id);
        id
    }

    /// Human-readable expression: `x3`, `(x1*x2)`, `pc1(x1,(x2*x2))`.
    /// Base variables are 1-based.
    pub fn expression(&self, id: FeatureId) -> String {
        match self.get(id).node {
            FeatureNode::Base { index } => format!("x{}", index + 1),
            FeatureNode::Combined {
                op,
                left,
                right,
                branch,
            } => {
                let l = self.expression(left);
                let r = self.expression(right);
                match op {
                    OperatorKind::Product => format!("({l}*{r})"),
                    OperatorKind::PairPca => {
                        let name = match branch {
                            Branch::Primary => "pc1",
                            Branch::Secondary => "pc2",
                        };
                        format!("{name}({l},{r})")
                    }
                }
            }
        }
    }
}

/// Evaluated feature column, standardized to mean 0 and unit sample
/// variance over all rows of the data. Degenerate features keep their
/// centered values and are excluded from selection.
#[derive(Debug, Clone)]
pub struct EvalEntry {
    pub values: Vec<f64>,
    pub degenerate: bool,
}

/// Memo of feature evaluations against one fixed data matrix.
///
/// Lookups take `&self` and insertion takes `&mut self`, so shared
/// concurrent readers and exclusive writers are enforced by the borrow
/// rules; wrap in a lock to share across threads.
#[derive(Debug, Default)]
pub struct FeatureCache {
    entries: HashMap<FeatureId, EvalEntry>,
}

impl FeatureCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, id: FeatureId) -> Option<&EvalEntry> {
        self.entries.get(&id)
    }
}

/// Evaluates a feature over every row of `data`, memoizing by id.
///
/// Base features read their column; products multiply the parents
/// elementwise; pair-PCA rotates the two parent columns with the Jacobi
/// rotation fitted to their 2x2 sample covariance and keeps the branch
/// coordinate. Every result is standardized afterwards; a variance at or
/// below the floor flags the feature as degenerate instead of aborting.
pub fn evaluate_feature<'a>(
    arena: &FeatureArena,
    id: FeatureId,
    data: &Mat,
    cache: &'a mut FeatureCache,
) -> Result<&'a EvalEntry> {
    ensure_evaluated(arena, id, data, cache)?;
    Ok(cache.entries.get(&id).expect("just evaluated"))
}

fn ensure_evaluated(
    arena: &FeatureArena,
    id: FeatureId,
    data: &Mat,
    cache: &mut FeatureCache,
) -> Result<()> {
    if cache.entries.contains_key(&id) {
        return Ok(());
    }
    let raw = match arena.get(id).node {
        FeatureNode::Base { index } => {
            if index >= data.cols() {
                return Err(Error::DimensionMismatch {
                    expected: data.cols(),
                    got: index + 1,
                });
            }
            data.column(index)
        }
        FeatureNode::Combined {
            op,
            left,
            right,
            branch,
        } => {
            ensure_evaluated(arena, left, data, cache)?;
            ensure_evaluated(arena, right, data, cache)?;
            let lv = &cache.entries[&left].values;
            let rv = &cache.entries[&right].values;
            match op {
                OperatorKind::Product => lv.iter().zip(rv).map(|(a, b)| a * b).collect(),
                OperatorKind::PairPca => pair_pca_branch(lv, rv, branch)?,
            }
        }
    };
    let entry = match standardize(&raw, DEGENERACY_FLOOR) {
        Some(values) => EvalEntry {
            values,
            degenerate: false,
        },
        None => {
            let m = mean(&raw);
            EvalEntry {
                values: raw.iter().map(|v| v - m).collect(),
                degenerate: true,
            }
        }
    };
    cache.entries.insert(id, entry);
    Ok(())
}

/// Rotated coordinate of the 2x2 pair PCA: primary is the coordinate
/// with the larger post-rotation variance.
fn pair_pca_branch(u: &[f64], v: &[f64], branch: Branch) -> Result<Vec<f64>> {
    let mut cov = SymMatrix::zeros(2);
    cov.set(0, 0, sample_variance(u));
    cov.set(1, 1, sample_variance(v));
    cov.set(0, 1, sample_cov(u, v));
    let (rot, rotated) = jacobi_rotate(&cov, 0, 1)?;
    let primary_first = rotated.get(0, 0) >= rotated.get(1, 1);
    let take_first = match branch {
        Branch::Primary => primary_first,
        Branch::Secondary => !primary_first,
    };
    Ok(u.iter()
        .zip(v)
        .map(|(&a, &b)| {
            if take_first {
                rot.c * a + rot.s * b
            } else {
                -rot.s * a + rot.c * b
            }
        })
        .collect())
}

/// Selection rule used by `ms_k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectorKind {
    /// Top K by absolute correlation with the response.
    MarginalCorrelation,
    /// Greedy forward selection: repeatedly add the feature that most
    /// reduces the training MSE, stopping at K features or when the best
    /// reduction falls below the convergence `min_delta`.
    ForwardStepwise,
}

/// Convergence rule: stop when the held-out risk has not improved by at
/// least `min_delta` for `patience` consecutive generations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoImprovement {
    pub patience: usize,
    pub min_delta: f64,
}

/// Which part of the dictionary each generation's selection sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionScope {
    /// Screen the full accumulated dictionary (the default).
    #[default]
    FullDictionary,
    /// Screen only the newest generation's features; a contrast mode
    /// that mimics selecting from one level instead of the union.
    NewestGeneration,
}

/// Capacity, selector and stopping configuration of a hierarchical run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectorConfig {
    /// Select at most this many features per generation.
    pub k: usize,
    pub selector: SelectorKind,
    pub scope: SelectionScope,
    pub max_generations: usize,
    pub convergence: NoImprovement,
    /// Fraction of rows held out for risk tracking, strictly in (0, 1).
    pub holdout_fraction: f64,
}

impl SelectorConfig {
    /// Defaults for a given sample size: `K = ceil(n^0.5)`, marginal
    /// correlation screening, at most 10 generations, patience 2 at
    /// `min_delta = 1e-4`, one fifth held out.
    pub fn for_sample_size(n: usize) -> Self {
        Self::with_capacity_exponent(n, 0.5)
    }

    /// `K = ceil(n^g)` for a capacity exponent `g`.
    pub fn with_capacity_exponent(n: usize, g: f64) -> Self {
        SelectorConfig {
            k: (n as f64).powf(g).ceil().max(1.0) as usize,
            selector: SelectorKind::MarginalCorrelation,
            scope: SelectionScope::FullDictionary,
            max_generations: 10,
            convergence: NoImprovement {
                patience: 2,
                min_delta: 1e-4,
            },
            holdout_fraction: 0.2,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidSpec("capacity K must be >= 1".into()));
        }
        if !(self.holdout_fraction > 0.0 && self.holdout_fraction < 1.0) {
            return Err(Error::InvalidSpec(
                "holdout fraction must be strictly between 0 and 1".into(),
            ));
        }
        if self.convergence.patience == 0 {
            return Err(Error::InvalidSpec("patience must be >= 1".into()));
        }
        if self.convergence.min_delta.is_nan() || self.convergence.min_delta < 0.0 {
            return Err(Error::InvalidSpec("min_delta must be >= 0".into()));
        }
        Ok(())
    }
}

/// Selects at most `config.k` usable features from `candidates`.
///
/// Scores are computed over the given row subset. Returns
/// [`Error::EmptySelection`] when every candidate is degenerate.
pub fn ms_k(
    arena: &FeatureArena,
    candidates: &[FeatureId],
    data: &Mat,
    y: &[f64],
    rows: &[usize],
    config: &SelectorConfig,
    cache: &mut FeatureCache,
) -> Result<Vec<FeatureId>> {
    config.validate()?;
    if candidates.is_empty() {
        return Err(Error::EmptySelection);
    }
    let usable = usable_candidates(arena, candidates, data, cache)?;
    if usable.is_empty() {
        return Err(Error::EmptySelection);
    }
    match config.selector {
        SelectorKind::MarginalCorrelation => {
            let y_sub = gather(y, rows);
            let mut scored: Vec<(FeatureId, f64)> = usable
                .iter()
                .map(|&id| {
                    let vals = gather(&cache.entries[&id].values, rows);
                    let score = crate::mat::pearson(&vals, &y_sub)
                        .map(f64::abs)
                        .unwrap_or(0.0);
                    (id, score)
                })
                .collect();
            scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
            Ok(scored
                .into_iter()
                .take(config.k)
                .map(|(id, _)| id)
                .collect())
        }
        SelectorKind::ForwardStepwise => forward_stepwise(&usable, y, rows, config, cache),
    }
}

fn usable_candidates(
    arena: &FeatureArena,
    candidates: &[FeatureId],
    data: &Mat,
    cache: &mut FeatureCache,
) -> Result<Vec<FeatureId>> {
    let mut usable = Vec::with_capacity(candidates.len());
    for &id in candidates {
        ensure_evaluated(arena, id, data, cache)?;
        if !cache.entries[&id].degenerate {
            usable.push(id);
        }
    }
    Ok(usable)
}

fn gather(v: &[f64], rows: &[usize]) -> Vec<f64> {
    rows.iter().map(|&r| v[r]).collect()
}

fn forward_stepwise(
    usable: &[FeatureId],
    y: &[f64],
    rows: &[usize],
    config: &SelectorConfig,
    cache: &mut FeatureCache,
) -> Result<Vec<FeatureId>> {
    let y_sub = gather(y, rows);
    let n = y_sub.len() as f64;
    let mut selected: Vec<FeatureId> = Vec::new();
    let mut design: Vec<Vec<f64>> = vec![vec![1.0; y_sub.len()]];
    let mut current_mse = {
        let m = mean(&y_sub);
        y_sub.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n
    };
    let mut remaining: Vec<FeatureId> = usable.to_vec();
    let mut pred = Vec::new();

    while selected.len() < config.k && !remaining.is_empty() {
        let mut best: Option<(usize, f64)> = None;
        for (pos, &id) in remaining.iter().enumerate() {
            design.push(gather(&cache.entries[&id].values, rows));
            let mse = least_squares_dropping(&design, &y_sub).ok().map(|fit| {
                fit.predict(&design, &mut pred);
                mean_squared_error(&pred, &y_sub)
            });
            design.pop();
            let Some(mse) = mse else { continue };
            if best.is_none_or(|(_, b)| mse < b) {
                best = Some((pos, mse));
            }
        }
        let Some((pos, mse)) = best else { break };
        if current_mse - mse < config.convergence.min_delta {
            break;
        }
        let id = remaining.remove(pos);
        design.push(gather(&cache.entries[&id].values, rows));
        selected.push(id);
        current_mse = mse;
    }
    if selected.is_empty() {
        // No candidate reduced the risk; fall back to the single best to
        // keep |MS_K| >= 1.
        selected.push(usable[0]);
    }
    Ok(selected)
}

/// Grows the dictionary: `dict` plus every operator combination of
/// unordered pairs from `selected`, structurally deduplicated. Product
/// includes self-pairs and adds one child per pair; pair-PCA skips
/// self-pairs and adds both branches.
pub fn expand(
    arena: &mut FeatureArena,
    dict: &[FeatureId],
    selected: &[FeatureId],
    op: OperatorKind,
) -> Vec<FeatureId> {
    let mut out = dict.to_vec();
    let mut present: std::collections::HashSet<FeatureId> = dict.iter().copied().collect();
    let mut push = |id: FeatureId, out: &mut Vec<FeatureId>| {
        if present.insert(id) {
            out.push(id);
        }
    };
    for (a_pos, &a) in selected.iter().enumerate() {
        for &b in &selected[a_pos..] {
            match op {
                OperatorKind::Product => {
                    let id = arena.intern_combined(op, a, b, Branch::Primary);
                    push(id, &mut out);
                }
                OperatorKind::PairPca => {
                    if a == b {
                        continue;
                    }
                    for branch in [Branch::Primary, Branch::Secondary] {
                        let id = arena.intern_combined(op, a, b, branch);
                        push(id, &mut out);
                    }
                }
            }
        }
    }
    out
}

/// One generation of the run trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub m: usize,
    pub dict_size: usize,
    /// Selected features as expressions, e.g. `"(x1*x2)"`.
    pub selected: Vec<String>,
    pub train_mse: f64,
    pub holdout_mse: f64,
}

/// Result of a hierarchical run.
#[derive(Debug)]
pub struct RunOutput {
    pub arena: FeatureArena,
    /// Selection of the best generation (by held-out risk).
    pub selected: Vec<FeatureId>,
    /// Intercept first, then one coefficient per selected feature.
    pub coefficients: Vec<f64>,
    pub best_generation: usize,
    /// False when the run stopped at `max_generations` instead of by the
    /// no-improvement rule; a normal outcome, not an error.
    pub converged: bool,
    pub trace: Vec<GenerationRecord>,
    /// Set when the final selection exceeds the `n / ln(n)` budget.
    pub sparsity_warning: bool,
}

impl RunOutput {
    pub fn selected_expressions(&self) -> Vec<String> {
        self.selected
            .iter()
            .map(|&id| self.arena.expression(id))
            .collect()
    }
}

/// Runs the full hierarchical procedure.
///
/// Rows are shuffled once with the seed and split into a training part
/// and a held-out part. Generation 0 screens the base variables; each
/// later generation expands the dictionary with operator combinations of
/// the previous selection. The reported result is the generation with
/// the lowest held-out risk.
pub fn run_hierarchical(
    data: &Mat,
    y: &[f64],
    op: OperatorKind,
    config: &SelectorConfig,
    seed: u64,
) -> Result<RunOutput> {
    config.validate()?;
    let n = data.rows();
    if n < 10 {
        return Err(Error::InsufficientData { needed: 10, got: n });
    }
    if y.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: y.len(),
        });
    }
    if !y.iter().all(|v| v.is_finite()) || !data.is_finite() {
        return Err(Error::NonFinite {
            context: "hierarchical run input".into(),
        });
    }

    let mut rows: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rows.shuffle(&mut rng);
    let n_hold = ((n as f64 * config.holdout_fraction).ceil() as usize).clamp(1, n - 2);
    let (holdout_rows, train_rows) = rows.split_at(n_hold);
    let holdout_rows = holdout_rows.to_vec();
    let train_rows = train_rows.to_vec();

    let (mut arena, base_ids) = FeatureArena::with_base_features(data.cols());
    let mut cache = FeatureCache::new();
    let mut dict = base_ids.clone();
    // In the contrast mode only the newest crop of features is screened.
    let mut newest = base_ids;
    let mut trace: Vec<GenerationRecord> = Vec::new();

    let mut best: Option<(usize, f64, Vec<FeatureId>, Vec<f64>)> = None;
    let mut stale = 0usize;
    let mut converged = false;

    for m in 0..=config.max_generations {
        let pool = match config.scope {
            SelectionScope::FullDictionary => &dict,
            SelectionScope::NewestGeneration => &newest,
        };
        let selected = ms_k(&arena, pool, data, y, &train_rows, config, &mut cache)?;

        // Fit on the training rows, score both splits.
        let mut design = vec![vec![1.0; train_rows.len()]];
        for &id in &selected {
            design.push(gather(&cache.entries[&id].values, &train_rows));
        }
        let y_train = gather(y, &train_rows);
        let fit = least_squares_dropping(&design, &y_train)?;
        let mut pred = Vec::new();
        fit.predict(&design, &mut pred);
        let train_mse = mean_squared_error(&pred, &y_train);

        let mut holdout_design = vec![vec![1.0; holdout_rows.len()]];
        for &id in &selected {
            holdout_design.push(gather(&cache.entries[&id].values, &holdout_rows));
        }
        let y_hold = gather(y, &holdout_rows);
        fit.predict(&holdout_design, &mut pred);
        let holdout_mse = mean_squared_error(&pred, &y_hold);

        trace.push(GenerationRecord {
            m,
            dict_size: dict.len(),
            selected: selected.iter().map(|&id| arena.expression(id)).collect(),
            train_mse,
            holdout_mse,
        });

        let improved = best
            .as_ref()
            .is_none_or(|(_, b, _, _)| holdout_mse <= b - config.convergence.min_delta);
        if best.as_ref().is_none_or(|(_, b, _, _)| holdout_mse < *b) {
            best = Some((m, holdout_mse, selected.clone(), fit.coefficients.clone()));
        }
        if improved {
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.convergence.patience {
                converged = true;
                break;
            }
        }

        if m < config.max_generations {
            let grown = expand(&mut arena, &dict, &selected, op);
            newest = grown[dict.len()..].to_vec();
            if newest.is_empty() {
                // Nothing new to screen; keep the last crop so the
                // contrast mode cannot run out of candidates.
                newest = selected.clone();
            }
            dict = grown;
        }
    }

    let (best_generation, _, selected, coefficients) = best.expect("at least one generation ran");
    let budget = n as f64 / (n as f64).ln();
    let sparsity_warning = selected.len() as f64 > budget;
    Ok(RunOutput {
        arena,
        selected,
        coefficients,
        best_generation,
        converged,
        trace,
        sparsity_warning,
    })
}
