//! Symmetric-matrix primitives: covariance estimation, correlation
//! normalization and single Jacobi plane rotations.
//!
//! Everything here is a pure function of its inputs, so the treelet
//! construction built on top depends on the covariance matrix alone.

use crate::error::{Error, Result};
use crate::mat::Mat;

/// Diagonal entries at or below this floor are treated as zero variance.
pub const VARIANCE_FLOOR: f64 = 1e-12;

/// Symmetric `p x p` matrix with packed upper-triangle storage.
///
/// Storing only `i <= j` makes symmetry structural: there is no way to
/// hold a skew entry.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(dim: usize) -> Self {
        assert!(dim >= 1, "dimension must be positive");
        SymMatrix {
            dim,
            data: vec![0.0; dim * (dim + 1) / 2],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = SymMatrix::zeros(dim);
        for i in 0..dim {
            m.set(i, i, 1.0);
        }
        m
    }

    /// Builds from dense rows, reading the upper triangle. Rejects
    /// non-square, non-finite, or visibly asymmetric input.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        if dim == 0 {
            return Err(Error::InvalidSpec("empty matrix".into()));
        }
        let mut scale = 0.0_f64;
        for row in rows {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: row.len(),
                });
            }
            for &v in row {
                if !v.is_finite() {
                    return Err(Error::NonFinite {
                        context: "symmetric matrix entry".into(),
                    });
                }
                scale = scale.max(v.abs());
            }
        }
        let tol = 1e-9 * scale.max(1.0);
        let mut m = SymMatrix::zeros(dim);
        for i in 0..dim {
            for j in i..dim {
                if (rows[i][j] - rows[j][i]).abs() > tol {
                    return Err(Error::InvalidSpec(format!(
                        "matrix is not symmetric at ({i}, {j})"
                    )));
                }
                m.set(i, j, rows[i][j]);
            }
        }
        Ok(m)
    }

    #[inline]
    fn offset(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.dim && j < self.dim);
        let (a, b) = if i <= j { (i, j) } else { (j, i) };
        a * self.dim - a * (a + 1) / 2 + b
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[self.offset(i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let o = self.offset(i, j);
        self.data[o] = v;
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        let mut s = 0.0;
        for i in 0..self.dim {
            for j in 0..self.dim {
                let v = self.get(i, j);
                s += v * v;
            }
        }
        s.sqrt()
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Largest absolute entrywise difference to `other`.
    pub fn max_abs_diff(&self, other: &SymMatrix) -> f64 {
        assert_eq!(self.dim, other.dim);
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
    }

    /// `true` when every stored entry is bitwise equal to `other`'s.
    pub fn bitwise_eq(&self, other: &SymMatrix) -> bool {
        self.dim == other.dim
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }

    pub fn to_dense(&self) -> Mat {
        Mat::from_fn(self.dim, self.dim, |i, j| self.get(i, j))
    }
}

/// Plane rotation in coordinates `(i, j)`, `i < j`, chosen to zero the
/// `(i, j)` entry of a symmetric matrix.
///
/// The transported vector is `y_i = c*x_i + s*x_j`, `y_j = -s*x_i + c*x_j`.
/// The angle is folded into `|theta| <= pi/4`, which keeps each rotated
/// coordinate close to the variable it started as.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JacobiRotation {
    pub i: usize,
    pub j: usize,
    pub c: f64,
    pub s: f64,
}

impl JacobiRotation {
    /// Rotation angle `theta = atan2(s, c)`.
    pub fn angle(&self) -> f64 {
        self.s.atan2(self.c)
    }

    pub fn is_identity(&self) -> bool {
        self.c == 1.0 && self.s == 0.0
    }

    /// Applies the rotation to a coordinate vector in place.
    #[inline]
    pub fn apply(&self, x: &mut [f64]) {
        let (xi, xj) = (x[self.i], x[self.j]);
        x[self.i] = self.c * xi + self.s * xj;
        x[self.j] = -self.s * xi + self.c * xj;
    }

    /// Applies the inverse rotation to a coordinate vector in place.
    #[inline]
    pub fn apply_inverse(&self, x: &mut [f64]) {
        let (xi, xj) = (x[self.i], x[self.j]);
        x[self.i] = self.c * xi - self.s * xj;
        x[self.j] = self.s * xi + self.c * xj;
    }
}

/// Unbiased sample covariance (divisor `n - 1`) of the columns of `data`.
pub fn sample_covariance(data: &Mat) -> Result<SymMatrix> {
    let n = data.rows();
    let p = data.cols();
    if n < 2 {
        return Err(Error::InsufficientData { needed: 2, got: n });
    }
    if !data.is_finite() {
        return Err(Error::NonFinite {
            context: "covariance input".into(),
        });
    }
    let means = data.column_means();
    let mut cov = SymMatrix::zeros(p);
    let denom = (n - 1) as f64;
    for i in 0..p {
        for j in i..p {
            let mut s = 0.0;
            for r in 0..n {
                s += (data.get(r, i) - means[i]) * (data.get(r, j) - means[j]);
            }
            cov.set(i, j, s / denom);
        }
    }
    Ok(cov)
}

/// Normalizes a covariance matrix to a correlation matrix.
///
/// The diagonal of the result is exactly 1 and off-diagonal entries are
/// clamped into `[-1, 1]` against rounding. Any variance at or below
/// [`VARIANCE_FLOOR`] is rejected, naming the offending column (1-based).
pub fn correlation_from_covariance(sigma: &SymMatrix) -> Result<SymMatrix> {
    let p = sigma.dim();
    let mut inv_sd = vec![0.0; p];
    for i in 0..p {
        let v = sigma.get(i, i);
        if v <= VARIANCE_FLOOR {
            return Err(Error::DegenerateVariance {
                column: i + 1,
                variance: v,
                floor: VARIANCE_FLOOR,
            });
        }
        inv_sd[i] = 1.0 / v.sqrt();
    }
    let mut corr = SymMatrix::zeros(p);
    for i in 0..p {
        corr.set(i, i, 1.0);
        for j in (i + 1)..p {
            let r = sigma.get(i, j) * inv_sd[i] * inv_sd[j];
            corr.set(i, j, r.clamp(-1.0, 1.0));
        }
    }
    Ok(corr)
}

/// Computes the Jacobi rotation that zeroes `sigma[(i, j)]`.
///
/// The angle is `theta = atan2(2*sigma_ij, sigma_ii - sigma_jj) / 2`,
/// folded into `|theta| <= pi/4`. An exactly zero off-diagonal entry
/// yields the identity rotation.
pub fn jacobi_rotation_for(sigma: &SymMatrix, i: usize, j: usize) -> Result<JacobiRotation> {
    let p = sigma.dim();
    if i >= j || j >= p {
        return Err(Error::InvalidPair { i, j, dim: p });
    }
    let a_ij = sigma.get(i, j);
    if a_ij == 0.0 {
        return Ok(JacobiRotation {
            i,
            j,
            c: 1.0,
            s: 0.0,
        });
    }
    let mut theta = 0.5 * (2.0 * a_ij).atan2(sigma.get(i, i) - sigma.get(j, j));
    if theta > std::f64::consts::FRAC_PI_4 {
        theta -= std::f64::consts::FRAC_PI_2;
    } else if theta < -std::f64::consts::FRAC_PI_4 {
        theta += std::f64::consts::FRAC_PI_2;
    }
    Ok(JacobiRotation {
        i,
        j,
        c: theta.cos(),
        s: theta.sin(),
    })
}

/// Similarity-transforms `sigma` by `rot`: `R * sigma * R^T`.
///
/// The `(i, j)` entry is set to exactly zero; the rotation is constructed
/// to annihilate it and this keeps downstream scans exact. All entries
/// outside rows/columns `i`, `j` are untouched.
pub fn apply_jacobi(sigma: &SymMatrix, rot: &JacobiRotation) -> SymMatrix {
    let (i, j, c, s) = (rot.i, rot.j, rot.c, rot.s);
    let mut out = sigma.clone();
    let a_ii = sigma.get(i, i);
    let a_jj = sigma.get(j, j);
    let a_ij = sigma.get(i, j);
    out.set(i, i, c * c * a_ii + 2.0 * c * s * a_ij + s * s * a_jj);
    out.set(j, j, s * s * a_ii - 2.0 * c * s * a_ij + c * c * a_jj);
    out.set(i, j, 0.0);
    for k in 0..sigma.dim() {
        if k == i || k == j {
            continue;
        }
        let a_ik = sigma.get(i, k);
        let a_jk = sigma.get(j, k);
        out.set(i, k, c * a_ik + s * a_jk);
        out.set(j, k, -s * a_ik + c * a_jk);
    }
    out
}

/// One greedy Jacobi step: builds the rotation for the pair `(i, j)` and
/// returns it together with the rotated matrix.
pub fn jacobi_rotate(sigma: &SymMatrix, i: usize, j: usize) -> Result<(JacobiRotation, SymMatrix)> {
    let rot = jacobi_rotation_for(sigma, i, j)?;
    let rotated = apply_jacobi(sigma, &rot);
    Ok((rot, rotated))
}
