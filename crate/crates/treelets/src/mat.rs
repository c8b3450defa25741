//! Minimal dense row-major matrix, summary statistics, and least-squares
//! fitting used by the regression benchmarks.

use crate::error::{Error, Result};

/// Dense row-major matrix of `f64`.
///
/// Rows are samples, columns are variables, throughout the crate.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    /// Builds a matrix from row slices. All rows must have equal length
    /// and every entry must be finite.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidSpec("matrix needs at least one row".into()));
        }
        let cols = rows[0].len();
        if cols == 0 {
            return Err(Error::InvalidSpec(
                "matrix needs at least one column".into(),
            ));
        }
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            if row.len() != cols {
                return Err(Error::DimensionMismatch {
                    expected: cols,
                    got: row.len(),
                });
            }
            for &v in row {
                if !v.is_finite() {
                    return Err(Error::NonFinite {
                        context: "matrix entry".into(),
                    });
                }
                data.push(v);
            }
        }
        Ok(Mat {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Mat::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m.set(i, j, f(i, j));
            }
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `self * other`.
    pub fn matmul(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.rows, "inner dimensions must agree");
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other.get(k, j);
                }
            }
        }
        out
    }

    pub fn transpose(&self) -> Mat {
        Mat::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    /// Per-column means.
    pub fn column_means(&self) -> Vec<f64> {
        let mut means = vec![0.0; self.cols];
        for i in 0..self.rows {
            for (j, m) in means.iter_mut().enumerate() {
                *m += self.get(i, j);
            }
        }
        let n = self.rows as f64;
        for m in &mut means {
            *m /= n;
        }
        means
    }
}

/// Arithmetic mean.
pub fn mean(v: &[f64]) -> f64 {
    assert!(!v.is_empty());
    v.iter().sum::<f64>() / v.len() as f64
}

/// Unbiased sample variance (divisor `n - 1`); zero for a single value.
pub fn sample_variance(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64
}

/// Unbiased sample covariance of two equally long slices.
pub fn sample_cov(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    if a.len() < 2 {
        return 0.0;
    }
    let (ma, mb) = (mean(a), mean(b));
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - ma) * (y - mb))
        .sum::<f64>()
        / (a.len() - 1) as f64
}

/// Pearson correlation; `None` when either side has (near-)zero variance.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let va = sample_variance(a);
    let vb = sample_variance(b);
    if va <= 0.0 || vb <= 0.0 {
        return None;
    }
    Some(sample_cov(a, b) / (va * vb).sqrt())
}

/// Centers and scales to unit sample variance (divisor `n - 1`).
/// Returns `None` when the variance is at or below `floor`.
pub fn standardize(v: &[f64], floor: f64) -> Option<Vec<f64>> {
    let var = sample_variance(v);
    if var <= floor {
        return None;
    }
    let m = mean(v);
    let s = var.sqrt();
    Some(v.iter().map(|x| (x - m) / s).collect())
}

/// Mean squared difference between predictions and observations.
pub fn mean_squared_error(pred: &[f64], obs: &[f64]) -> f64 {
    assert_eq!(pred.len(), obs.len());
    assert!(!pred.is_empty());
    pred.iter()
        .zip(obs)
        .map(|(p, o)| (p - o) * (p - o))
        .sum::<f64>()
        / pred.len() as f64
}

/// Ordinary least squares of `y` on the given design columns.
///
/// Solves the normal equations by Cholesky factorization. A pivot at or
/// below `1e-10` times the largest diagonal of the Gram matrix is treated
/// as rank deficiency and reported as [`Error::SingularFit`].
pub fn least_squares(columns: &[Vec<f64>], y: &[f64]) -> Result<Vec<f64>> {
    match solve_normal_equations(columns, y, false)? {
        FitResult {
            coefficients,
            dropped,
        } if dropped.is_empty() => Ok(coefficients),
        FitResult { dropped, .. } => Err(Error::SingularFit(format!(
            "rank-deficient design: column {} is linearly dependent",
            dropped[0]
        ))),
    }
}

/// Least squares that tolerates collinear columns by dropping them.
///
/// Columns are processed in order; a column whose pivot vanishes after
/// projection on the earlier ones gets coefficient zero and is reported
/// in `dropped`. Fails only when no column carries any signal.
pub fn least_squares_dropping(columns: &[Vec<f64>], y: &[f64]) -> Result<FitResult> {
    solve_normal_equations(columns, y, true)
}

/// Outcome of a tolerant least-squares fit.
#[derive(Debug, Clone)]
pub struct FitResult {
    /// One coefficient per input column (zero for dropped columns).
    pub coefficients: Vec<f64>,
    /// Indices of columns dropped as linearly dependent.
    pub dropped: Vec<usize>,
}

impl FitResult {
    pub fn predict(&self, columns: &[Vec<f64>], out: &mut Vec<f64>) {
        let n = columns.first().map_or(0, |c| c.len());
        out.clear();
        out.resize(n, 0.0);
        for (coef, col) in self.coefficients.iter().zip(columns) {
            if *coef == 0.0 {
                continue;
            }
            for (o, v) in out.iter_mut().zip(col) {
                *o += coef * v;
            }
        }
    }
}

const PIVOT_REL_TOL: f64 = 1e-10;

fn solve_normal_equations(columns: &[Vec<f64>], y: &[f64], drop: bool) -> Result<FitResult> {
    let k = columns.len();
    if k == 0 {
        return Err(Error::SingularFit("empty design".into()));
    }
    let n = y.len();
    for c in columns {
        if c.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: c.len(),
            });
        }
    }

    // Gram matrix and right-hand side.
    let mut gram = vec![0.0; k * k];
    let mut rhs = vec![0.0; k];
    for i in 0..k {
        for j in i..k {
            let g: f64 = columns[i].iter().zip(&columns[j]).map(|(a, b)| a * b).sum();
            gram[i * k + j] = g;
            gram[j * k + i] = g;
        }
        rhs[i] = columns[i].iter().zip(y).map(|(a, b)| a * b).sum();
    }
    let scale = (0..k)
        .map(|i| gram[i * k + i])
        .fold(0.0_f64, f64::max)
        .max(f64::MIN_POSITIVE);
    let tol = PIVOT_REL_TOL * scale;

    // Cholesky with column dropping: a dependent column gets a zero row/column
    // in the factor and a zero coefficient.
    let mut chol = vec![0.0; k * k];
    let mut active = vec![true; k];
    let mut dropped = Vec::new();
    for i in 0..k {
        let mut d = gram[i * k + i];
        for t in 0..i {
            d -= chol[i * k + t] * chol[i * k + t];
        }
        if d <= tol {
            active[i] = false;
            dropped.push(i);
            if !drop {
                return Ok(FitResult {
                    coefficients: vec![0.0; k],
                    dropped,
                });
            }
            continue;
        }
        let li = d.sqrt();
        chol[i * k + i] = li;
        for j in (i + 1)..k {
            let mut s = gram[j * k + i];
            for t in 0..i {
                s -= chol[j * k + t] * chol[i * k + t];
            }
            chol[j * k + i] = s / li;
        }
    }
    if dropped.len() == k {
        return Err(Error::SingularFit(
            "all design columns are degenerate".into(),
        ));
    }

    // Forward then backward substitution, skipping dropped columns.
    let mut z = vec![0.0; k];
    for i in 0..k {
        if !active[i] {
            continue;
        }
        let mut s = rhs[i];
        for t in 0..i {
            if active[t] {
                s -= chol[i * k + t] * z[t];
            }
        }
        z[i] = s / chol[i * k + i];
    }
    let mut beta = vec![0.0; k];
    for i in (0..k).rev() {
        if !active[i] {
            continue;
        }
        let mut s = z[i];
        for t in (i + 1)..k {
            if active[t] {
                s -= chol[t * k + i] * beta[t];
            }
        }
        beta[i] = s / chol[i * k + i];
    }
    Ok(FitResult {
        coefficients: beta,
        dropped,
    })
}
