//! Latent factor model generators and the covariance-equality
//! counterexample showing that Gaussian factor structure is not
//! identifiable beyond the covariance matrix.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::SymMatrix;
use crate::mat::Mat;

/// Mean-zero one-dimensional factor distribution, parameterized so its
/// variance is explicit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FactorDist {
    Gaussian { var: f64 },
    Uniform { half_width: f64 },
    Rademacher,
    Laplace { scale: f64 },
}

impl FactorDist {
    pub fn variance(&self) -> f64 {
        match *self {
            FactorDist::Gaussian { var } => var,
            FactorDist::Uniform { half_width } => half_width * half_width / 3.0,
            FactorDist::Rademacher => 1.0,
            FactorDist::Laplace { scale } => 2.0 * scale * scale,
        }
    }

    fn validate(&self) -> Result<()> {
        let v = self.variance();
        if !v.is_finite() || v <= 0.0 {
            return Err(Error::InvalidSpec(format!(
                "factor distribution must have positive finite variance, got {v}"
            )));
        }
        Ok(())
    }

    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        match *self {
            FactorDist::Gaussian { var } => {
                let z: f64 = rng.sample(StandardNormal);
                z * var.sqrt()
            }
            FactorDist::Uniform { half_width } => rng.random_range(-half_width..half_width),
            FactorDist::Rademacher => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            FactorDist::Laplace { scale } => {
                let u: f64 = rng.random::<f64>() - 0.5;
                let t = (1.0 - 2.0 * u.abs()).max(f64::MIN_POSITIVE);
                -scale * u.signum() * t.ln()
            }
        }
    }
}

/// Latent factor model `X = C e + sigma Z` with independent mean-zero
/// factors `e` and isotropic Gaussian noise.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorSpec {
    p: usize,
    k: usize,
    loadings: Mat,
    factor_dists: Vec<FactorDist>,
    noise_sigma: f64,
}

impl FactorSpec {
    /// `loadings` is `p x k`: column `l` is the loading vector of factor `l`.
    pub fn new(loadings: Mat, factor_dists: Vec<FactorDist>, noise_sigma: f64) -> Result<Self> {
        let p = loadings.rows();
        let k = loadings.cols();
        if p == 0 || k == 0 {
            return Err(Error::InvalidSpec(
                "factor model needs p >= 1 and K >= 1".into(),
            ));
        }
        if factor_dists.len() != k {
            return Err(Error::InvalidSpec(format!(
                "expected {k} factor distributions, got {}",
                factor_dists.len()
            )));
        }
        if !loadings.is_finite() {
            return Err(Error::NonFinite {
                context: "factor loadings".into(),
            });
        }
        for d in &factor_dists {
            d.validate()?;
        }
        if !noise_sigma.is_finite() || noise_sigma < 0.0 {
            return Err(Error::InvalidSpec(format!(
                "noise sigma must be finite and >= 0, got {noise_sigma}"
            )));
        }
        Ok(FactorSpec {
            p,
            k,
            loadings,
            factor_dists,
            noise_sigma,
        })
    }

    pub fn dim(&self) -> usize {
        self.p
    }

    pub fn n_factors(&self) -> usize {
        self.k
    }

    pub fn loadings(&self) -> &Mat {
        &self.loadings
    }

    pub fn factor_dists(&self) -> &[FactorDist] {
        &self.factor_dists
    }

    pub fn noise_sigma(&self) -> f64 {
        self.noise_sigma
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&SpecDoc::from(self)).expect("factor spec serializes")
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let doc: SpecDoc =
            serde_json::from_str(text).map_err(|e| Error::Parse(format!("factor spec: {e}")))?;
        doc.try_into()
    }
}

/// Serialized factor spec; `loadings` is row-major `p x K`.
#[derive(Debug, Serialize, Deserialize)]
struct SpecDoc {
    p: usize,
    #[serde(rename = "K")]
    k: usize,
    loadings: Vec<f64>,
    factor_dists: Vec<FactorDist>,
    noise_sigma: f64,
}

impl From<&FactorSpec> for SpecDoc {
    fn from(spec: &FactorSpec) -> Self {
        SpecDoc {
            p: spec.p,
            k: spec.k,
            loadings: spec.loadings.data().to_vec(),
            factor_dists: spec.factor_dists.clone(),
            noise_sigma: spec.noise_sigma,
        }
    }
}

impl TryFrom<SpecDoc> for FactorSpec {
    type Error = Error;

    fn try_from(doc: SpecDoc) -> Result<FactorSpec> {
        if doc.loadings.len() != doc.p * doc.k {
            return Err(Error::Parse(format!(
                "factor spec: expected {} loading entries, got {}",
                doc.p * doc.k,
                doc.loadings.len()
            )));
        }
        let loadings = Mat::from_fn(doc.p, doc.k, |i, j| doc.loadings[i * doc.k + j]);
        FactorSpec::new(loadings, doc.factor_dists, doc.noise_sigma)
    }
}

/// Draws `n` rows from the factor model, deterministically for a seed.
///
/// Row `i` is `C e_i + sigma z_i` with factor draws first and the noise
/// vector second, so the stream layout is part of the reproducibility
/// contract. Concurrent replicates should derive seeds as `base + r`.
pub fn sample_factor_data(spec: &FactorSpec, n: usize, seed: u64) -> Result<Mat> {
    if n == 0 {
        return Err(Error::InvalidSpec("need n >= 1 samples".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Mat::zeros(n, spec.p);
    let mut factors = vec![0.0; spec.k];
    for r in 0..n {
        for (l, d) in spec.factor_dists.iter().enumerate() {
            factors[l] = d.sample(&mut rng);
        }
        let row = out.row_mut(r);
        for (j, value) in row.iter_mut().enumerate() {
            let mut s = 0.0;
            for l in 0..spec.k {
                s += spec.loadings.get(j, l) * factors[l];
            }
            let z: f64 = rng.sample(StandardNormal);
            *value = s + spec.noise_sigma * z;
        }
    }
    Ok(out)
}

/// Exact population covariance `C diag(var) C^T + sigma^2 I`.
pub fn population_covariance(spec: &FactorSpec) -> SymMatrix {
    let p = spec.p;
    let mut cov = SymMatrix::zeros(p);
    let vars: Vec<f64> = spec.factor_dists.iter().map(|d| d.variance()).collect();
    let s2 = spec.noise_sigma * spec.noise_sigma;
    for i in 0..p {
        for j in i..p {
            let mut v = 0.0;
            for l in 0..spec.k {
                v += spec.loadings.get(i, l) * vars[l] * spec.loadings.get(j, l);
            }
            if i == j {
                v += s2;
            }
            cov.set(i, j, v);
        }
    }
    cov
}

/// Builds two observationally equivalent Gaussian factor models.
///
/// Spec A has three factors with loadings `(v1, v2, c1*v1 + c2*v2)` and
/// variances `factor_vars`. Spec B has two unit-variance factors whose
/// loading matrix is `[v1 v2] L`, where `L L^T = diag(t1, t2) +
/// t3 (c1, c2)(c1, c2)^T` (lower-triangular Cholesky factor). The two
/// population covariances agree entrywise to machine precision, so any
/// statistic that is a function of the covariance alone, the treelet
/// tree included, cannot tell them apart.
pub fn example2_pair(
    v1: &[f64],
    v2: &[f64],
    c1: f64,
    c2: f64,
    factor_vars: [f64; 3],
    sigma: f64,
) -> Result<(FactorSpec, FactorSpec)> {
    let p = v1.len();
    if v2.len() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            got: v2.len(),
        });
    }
    if p < 2 {
        return Err(Error::InvalidSpec(
            "need p >= 2 for two independent loadings".into(),
        ));
    }
    for v in v1.iter().chain(v2).chain(&[c1, c2, sigma]) {
        if !v.is_finite() {
            return Err(Error::NonFinite {
                context: "example2 inputs".into(),
            });
        }
    }
    for t in factor_vars {
        if !t.is_finite() || t <= 0.0 {
            return Err(Error::InvalidSpec(format!(
                "factor variances must be positive, got {t}"
            )));
        }
    }
    // Collinearity via the Gram determinant.
    let g11: f64 = v1.iter().map(|x| x * x).sum();
    let g22: f64 = v2.iter().map(|x| x * x).sum();
    let g12: f64 = v1.iter().zip(v2).map(|(a, b)| a * b).sum();
    let det = g11 * g22 - g12 * g12;
    if det <= 1e-12 * g11 * g22 || g11 == 0.0 || g22 == 0.0 {
        return Err(Error::DegenerateConstruction(
            "v1 and v2 are (near-)collinear".into(),
        ));
    }

    let [t1, t2, t3] = factor_vars;
    let spec_a = {
        let loadings = Mat::from_fn(p, 3, |i, l| match l {
            0 => v1[i],
            1 => v2[i],
            _ => c1 * v1[i] + c2 * v2[i],
        });
        FactorSpec::new(
            loadings,
            vec![
                FactorDist::Gaussian { var: t1 },
                FactorDist::Gaussian { var: t2 },
                FactorDist::Gaussian { var: t3 },
            ],
            sigma,
        )?
    };

    // M = diag(t1, t2) + t3 (c1, c2)(c1, c2)^T, factored as L L^T.
    let m11 = t1 + t3 * c1 * c1;
    let m21 = t3 * c1 * c2;
    let m22 = t2 + t3 * c2 * c2;
    let l11 = m11.sqrt();
    let l21 = m21 / l11;
    let l22 = (m22 - l21 * l21).sqrt();
    let spec_b = {
        let loadings = Mat::from_fn(p, 2, |i, l| match l {
            0 => v1[i] * l11 + v2[i] * l21,
            _ => v2[i] * l22,
        });
        FactorSpec::new(
            loadings,
            vec![
                FactorDist::Gaussian { var: 1.0 },
                FactorDist::Gaussian { var: 1.0 },
            ],
            sigma,
        )?
    };

    Ok((spec_a, spec_b))
}
