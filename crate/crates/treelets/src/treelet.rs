//! Treelet construction: greedy Jacobi rotations on the most correlated
//! active pair, one merge per level.
//!
//! The tree is a function of the covariance matrix alone. At every level
//! the active pair with the largest absolute pair score is rotated; the
//! coordinate that keeps the larger variance (the sum variable) stays
//! active, the other (the difference variable) is frozen. Near-ties in
//! the pair score are recorded in `tie_log` rather than hidden, since a
//! tied maximum makes the tree non-unique.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{apply_jacobi, jacobi_rotate, JacobiRotation, SymMatrix, VARIANCE_FLOOR};
use crate::mat::Mat;

/// Score used to pick the pair merged at each level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairScore {
    /// Absolute correlation of the running covariance (the default).
    #[default]
    Correlation,
    /// Absolute covariance; useful when block structure lives on the
    /// covariance scale.
    Covariance,
}

/// Default tolerance below which two competing pair scores count as tied.
pub const DEFAULT_TIE_TOLERANCE: f64 = 1e-12;

/// One merge step of the tree.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelRotation {
    /// 1-based level at which this rotation is applied.
    pub level: usize,
    pub rotation: JacobiRotation,
    /// Index that keeps the larger post-rotation variance and stays active.
    pub sum_index: usize,
    /// Index frozen after this level.
    pub diff_index: usize,
}

/// Ordered Jacobi rotation sequence plus per-level active sets.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeletModel {
    dim: usize,
    max_level: usize,
    rotations: Vec<LevelRotation>,
    /// `active_sets[l]` lists the active (sum) indices after level `l`;
    /// level 0 is all coordinates.
    active_sets: Vec<Vec<usize>>,
    /// Levels at which the winning score and the runner-up were within
    /// the tie tolerance.
    tie_log: Vec<usize>,
}

/// Builds the treelet tree for `sigma`.
///
/// At each of `max_level <= p - 1` levels the active pair maximizing the
/// absolute pair score is selected, ties broken by lexicographically
/// smallest `(i, j)`. The running covariance is updated in place by the
/// rotation, never re-estimated, so the result depends on `sigma` alone.
pub fn build_treelet(
    sigma: &SymMatrix,
    max_level: usize,
    score: PairScore,
    tie_tolerance: f64,
) -> Result<TreeletModel> {
    let p = sigma.dim();
    if max_level == 0 || max_level > p.saturating_sub(1) {
        return Err(Error::LevelOutOfRange {
            level: max_level,
            max_level: p.saturating_sub(1),
        });
    }
    if tie_tolerance.is_nan() || tie_tolerance < 0.0 {
        return Err(Error::InvalidSpec("tie tolerance must be >= 0".into()));
    }
    for i in 0..p {
        let v = sigma.get(i, i);
        if v <= VARIANCE_FLOOR {
            return Err(Error::DegenerateVariance {
                column: i + 1,
                variance: v,
                floor: VARIANCE_FLOOR,
            });
        }
    }

    let mut cov = sigma.clone();
    let mut active: Vec<usize> = (0..p).collect();
    let mut rotations = Vec::with_capacity(max_level);
    let mut active_sets = Vec::with_capacity(max_level + 1);
    let mut tie_log = Vec::new();
    active_sets.push(active.clone());

    for level in 1..=max_level {
        let (best_pair, best, runner_up) = select_pair(&cov, &active, score)?;
        let (i, j) = best_pair;
        if best - runner_up <= tie_tolerance {
            tie_log.push(level);
        }

        let (rotation, rotated) = jacobi_rotate(&cov, i, j)?;
        let (sum_index, diff_index) = if rotated.get(i, i) >= rotated.get(j, j) {
            (i, j)
        } else {
            (j, i)
        };
        cov = rotated;
        active.retain(|&k| k != diff_index);
        active_sets.push(active.clone());
        rotations.push(LevelRotation {
            level,
            rotation,
            sum_index,
            diff_index,
        });
    }

    Ok(TreeletModel {
        dim: p,
        max_level,
        rotations,
        active_sets,
        tie_log,
    })
}

/// Scans all active pairs and returns the winner (lexicographic smallest
/// among exact ties), its score, and the runner-up score. With a single
/// candidate pair the runner-up defaults to zero.
fn select_pair(
    cov: &SymMatrix,
    active: &[usize],
    score: PairScore,
) -> Result<((usize, usize), f64, f64)> {
    let mut best = f64::NEG_INFINITY;
    let mut runner_up = 0.0_f64;
    let mut best_pair = None;
    for (a, &i) in active.iter().enumerate() {
        for &j in &active[a + 1..] {
            let s = pair_score(cov, i, j, score)?;
            if s > best {
                if best_pair.is_some() {
                    runner_up = best;
                }
                best = s;
                best_pair = Some((i, j));
            } else if s > runner_up {
                runner_up = s;
            }
        }
    }
    let pair = best_pair.ok_or_else(|| Error::InvalidSpec("no active pair left".into()))?;
    Ok((pair, best, runner_up))
}

fn pair_score(cov: &SymMatrix, i: usize, j: usize, score: PairScore) -> Result<f64> {
    match score {
        PairScore::Covariance => Ok(cov.get(i, j).abs()),
        PairScore::Correlation => {
            let vi = cov.get(i, i);
            let vj = cov.get(j, j);
            for (idx, v) in [(i, vi), (j, vj)] {
                if v <= VARIANCE_FLOOR {
                    return Err(Error::DegenerateVariance {
                        column: idx + 1,
                        variance: v,
                        floor: VARIANCE_FLOOR,
                    });
                }
            }
            Ok(cov.get(i, j).abs() / (vi * vj).sqrt())
        }
    }
}

impl TreeletModel {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn max_level(&self) -> usize {
        self.max_level
    }

    pub fn rotations(&self) -> &[LevelRotation] {
        &self.rotations
    }

    /// Active (sum) indices after the given level; level 0 is everything.
    pub fn active_set(&self, level: usize) -> Result<&[usize]> {
        self.check_level(level)?;
        Ok(&self.active_sets[level])
    }

    pub fn tie_log(&self) -> &[usize] {
        &self.tie_log
    }

    fn check_level(&self, level: usize) -> Result<()> {
        if level > self.max_level {
            return Err(Error::LevelOutOfRange {
                level,
                max_level: self.max_level,
            });
        }
        Ok(())
    }

    /// Coordinates of `x` in the level-`level` basis. Level 0 is the
    /// identity; the Euclidean norm is preserved at every level.
    pub fn transform(&self, x: &[f64], level: usize) -> Result<Vec<f64>> {
        self.check_level(level)?;
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        let mut y = x.to_vec();
        for step in &self.rotations[..level] {
            step.rotation.apply(&mut y);
        }
        Ok(y)
    }

    /// Exact inverse of [`TreeletModel::transform`] at the same level.
    pub fn inverse_transform(&self, coeffs: &[f64], level: usize) -> Result<Vec<f64>> {
        self.check_level(level)?;
        if coeffs.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: coeffs.len(),
            });
        }
        let mut x = coeffs.to_vec();
        for step in self.rotations[..level].iter().rev() {
            step.rotation.apply_inverse(&mut x);
        }
        Ok(x)
    }

    /// Orthonormal basis at a level, as rows: row `k` dotted with a raw
    /// vector gives coordinate `k` of [`TreeletModel::transform`].
    pub fn basis_at_level(&self, level: usize) -> Result<Mat> {
        self.check_level(level)?;
        let mut basis = Mat::identity(self.dim);
        for step in &self.rotations[..level] {
            let JacobiRotation { i, j, c, s } = step.rotation;
            for k in 0..self.dim {
                let bi = basis.get(i, k);
                let bj = basis.get(j, k);
                basis.set(i, k, c * bi + s * bj);
                basis.set(j, k, -s * bi + c * bj);
            }
        }
        Ok(basis)
    }

    /// Replays the stored rotations on `sigma`, yielding the running
    /// covariance the construction held after `level` merges.
    pub fn covariance_at_level(&self, sigma: &SymMatrix, level: usize) -> Result<SymMatrix> {
        self.check_level(level)?;
        if sigma.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: sigma.dim(),
            });
        }
        let mut cov = sigma.clone();
        for step in &self.rotations[..level] {
            cov = apply_jacobi(&cov, &step.rotation);
        }
        Ok(cov)
    }

    /// Structural tree equality: same merge pairs, same sum/difference
    /// assignment at every level, rotation coefficients within `tol`.
    /// Tie logs are not compared; near-tie bookkeeping is allowed to
    /// differ between numerically equal trees.
    pub fn structurally_equal(&self, other: &TreeletModel, tol: f64) -> bool {
        if self.dim != other.dim || self.max_level != other.max_level {
            return false;
        }
        self.rotations.iter().zip(&other.rotations).all(|(a, b)| {
            a.rotation.i == b.rotation.i
                && a.rotation.j == b.rotation.j
                && a.sum_index == b.sum_index
                && a.diff_index == b.diff_index
                && (a.rotation.c - b.rotation.c).abs() <= tol
                && (a.rotation.s - b.rotation.s).abs() <= tol
        })
    }

    pub fn to_json_string(&self) -> String {
        let doc = ModelDoc::from(self);
        serde_json::to_string_pretty(&doc).expect("treelet model serializes")
    }

    pub fn from_json_str(text: &str) -> Result<TreeletModel> {
        let doc: ModelDoc =
            serde_json::from_str(text).map_err(|e| Error::Parse(format!("treelet model: {e}")))?;
        doc.try_into()
    }
}

/// Serialized form of a treelet model. Indices are zero-based.
#[derive(Debug, Serialize, Deserialize)]
struct ModelDoc {
    dim: usize,
    rotations: Vec<RotationDoc>,
    tie_log: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RotationDoc {
    level: usize,
    i: usize,
    j: usize,
    c: f64,
    s: f64,
    sum: usize,
    diff: usize,
}

impl From<&TreeletModel> for ModelDoc {
    fn from(model: &TreeletModel) -> Self {
        ModelDoc {
            dim: model.dim,
            rotations: model
                .rotations
                .iter()
                .map(|r| RotationDoc {
                    level: r.level,
                    i: r.rotation.i,
                    j: r.rotation.j,
                    c: r.rotation.c,
                    s: r.rotation.s,
                    sum: r.sum_index,
                    diff: r.diff_index,
                })
                .collect(),
            tie_log: model.tie_log.clone(),
        }
    }
}

impl TryFrom<ModelDoc> for TreeletModel {
    type Error = Error;

    fn try_from(doc: ModelDoc) -> Result<TreeletModel> {
        let p = doc.dim;
        if p == 0 {
            return Err(Error::Parse("treelet model: dim must be positive".into()));
        }
        let max_level = doc.rotations.len();
        if max_level > p.saturating_sub(1) {
            return Err(Error::Parse("treelet model: too many rotations".into()));
        }
        let mut active: Vec<usize> = (0..p).collect();
        let mut active_sets = vec![active.clone()];
        let mut rotations = Vec::with_capacity(max_level);
        for (idx, r) in doc.rotations.into_iter().enumerate() {
            if r.level != idx + 1 {
                return Err(Error::Parse(format!(
                    "treelet model: rotation {} has level {}",
                    idx, r.level
                )));
            }
            if r.i >= r.j || r.j >= p {
                return Err(Error::Parse(format!(
                    "treelet model: invalid pair ({}, {})",
                    r.i, r.j
                )));
            }
            if !(r.c.is_finite() && r.s.is_finite()) || (r.c * r.c + r.s * r.s - 1.0).abs() > 1e-12
            {
                return Err(Error::Parse(
                    "treelet model: rotation is not orthonormal".into(),
                ));
            }
            let pair_ok = (r.sum == r.i && r.diff == r.j) || (r.sum == r.j && r.diff == r.i);
            if !pair_ok {
                return Err(Error::Parse(
                    "treelet model: sum/diff do not match the rotation pair".into(),
                ));
            }
            if !active.contains(&r.i) || !active.contains(&r.j) {
                return Err(Error::Parse(
                    "treelet model: rotation touches a frozen index".into(),
                ));
            }
            active.retain(|&k| k != r.diff);
            active_sets.push(active.clone());
            rotations.push(LevelRotation {
                level: r.level,
                rotation: JacobiRotation {
                    i: r.i,
                    j: r.j,
                    c: r.c,
                    s: r.s,
                },
                sum_index: r.sum,
                diff_index: r.diff,
            });
        }
        Ok(TreeletModel {
            dim: p,
            max_level,
            rotations,
            active_sets,
            tie_log: doc.tie_log,
        })
    }
}
