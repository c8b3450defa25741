//! Monte Carlo validation of the closed-form quantities: the best
//! predictor and its risk, the factor-model covariance, and the
//! covariance structure of the errors-in-variables design.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use treelets::eiv::{sample_eiv, EivSpec};
use treelets::factor::{population_covariance, sample_factor_data, FactorDist, FactorSpec};
use treelets::linalg::sample_covariance;
use treelets::mat::{least_squares, mean, sample_variance, Mat};

/// Empirical mean and Monte Carlo standard error of a sequence.
fn mean_and_se(values: &[f64]) -> (f64, f64) {
    (
        mean(values),
        (sample_variance(values) / values.len() as f64).sqrt(),
    )
}

#[test]
fn oracle_mse_matches_monte_carlo_on_random_specs() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for trial in 0..6 {
        let p = rng.random_range(1..=15);
        let gamma = rng.random_range(-2.0..2.0);
        let c = rng.random_range(0.0..2.0);
        let noise_vars: Vec<f64> = (0..p).map(|_| rng.random_range(0.5..2.0)).collect();
        let spec = EivSpec::new(p, gamma, c, noise_vars).unwrap();
        let n = 100_000;
        let sample = sample_eiv(&spec, n, 7000 + trial).unwrap();
        let sq: Vec<f64> = (0..n)
            .map(|r| {
                let e = sample.y[r] - spec.oracle_predict(sample.x.row(r));
                e * e
            })
            .collect();
        let (m, se) = mean_and_se(&sq);
        assert!(
            (m - spec.oracle_mse()).abs() <= 3.0 * se,
            "trial {trial}: empirical {m} vs closed form {} (se {se})",
            spec.oracle_mse()
        );
    }
}

#[test]
fn oracle_prediction_matches_large_sample_regression() {
    // E[Y | X] is linear in the jointly Gaussian model, so ordinary least
    // squares on a large sample is an independent estimate of the best
    // predictor. p = 2, gamma = 2, c = 1, noise (1, 4): at x = (1, 1) the
    // closed form gives 10/9.
    let spec = EivSpec::new(2, 2.0, 1.0, vec![1.0, 4.0]).unwrap();
    let n = 200_000;
    let s = sample_eiv(&spec, n, 99).unwrap();
    let design = vec![vec![1.0; n], s.x.column(0), s.x.column(1)];
    let beta = least_squares(&design, &s.y).unwrap();
    let fitted_at_ones = beta[0] + beta[1] + beta[2];
    let closed = spec.oracle_predict(&[1.0, 1.0]);
    assert!((closed - 10.0 / 9.0).abs() < 1e-12);
    assert!(
        (fitted_at_ones - closed).abs() < 0.02,
        "regression {fitted_at_ones} vs closed form {closed}"
    );
}

#[test]
fn eiv_covariance_has_the_advertised_structure() {
    // c = p^{-1/2} with unit noise: diagonal 1 + 1/p, off-diagonal 1/p.
    let p = 10;
    let spec = EivSpec::new(p, 1.0, 1.0 / (p as f64).sqrt(), vec![1.0; p]).unwrap();
    let n = 200_000;
    let s = sample_eiv(&spec, n, 321).unwrap();
    let cov = sample_covariance(&s.x).unwrap();
    let means = s.x.column_means();
    for i in 0..p {
        for j in i..p {
            let expected = if i == j {
                1.0 + 1.0 / p as f64
            } else {
                1.0 / p as f64
            };
            let prods: Vec<f64> = (0..n)
                .map(|r| (s.x.get(r, i) - means[i]) * (s.x.get(r, j) - means[j]))
                .collect();
            let (_, se) = mean_and_se(&prods);
            let diff = (cov.get(i, j) - expected).abs();
            assert!(
                diff <= 4.0 * se,
                "entry ({i},{j}): diff {diff} exceeds 4 se {se}"
            );
            assert!(cov.get(i, i) > 1.0);
        }
    }
}

#[test]
fn mixed_factor_model_covariance_converges() {
    // Non-Gaussian factors share the same second-moment structure.
    let loadings = Mat::from_rows(&[
        vec![1.0, 0.2, 0.0],
        vec![0.8, -0.5, 0.3],
        vec![0.0, 1.0, -0.7],
        vec![0.4, 0.4, 1.0],
    ])
    .unwrap();
    let spec = FactorSpec::new(
        loadings,
        vec![
            FactorDist::Uniform { half_width: 2.0 },
            FactorDist::Rademacher,
            FactorDist::Laplace { scale: 0.7 },
        ],
        0.6,
    )
    .unwrap();
    let n = 200_000;
    let data = sample_factor_data(&spec, n, 17).unwrap();
    let sample = sample_covariance(&data).unwrap();
    let pop = population_covariance(&spec);
    let means = data.column_means();
    for i in 0..4 {
        for j in i..4 {
            let prods: Vec<f64> = (0..n)
                .map(|r| (data.get(r, i) - means[i]) * (data.get(r, j) - means[j]))
                .collect();
            let (_, se) = mean_and_se(&prods);
            let diff = (sample.get(i, j) - pop.get(i, j)).abs();
            assert!(diff <= 4.0 * se, "entry ({i},{j}): diff {diff} vs se {se}");
        }
    }
}

#[test]
fn seed_offsets_give_independent_replicates() {
    // The replicate seed rule base + r must actually decorrelate draws.
    let spec = EivSpec::new(3, 1.0, 0.5, vec![1.0; 3]).unwrap();
    let base = 5u64;
    let a = sample_eiv(&spec, 5_000, base).unwrap();
    let b = sample_eiv(&spec, 5_000, base + 1).unwrap();
    let r = treelets::mat::pearson(&a.y, &b.y).unwrap();
    assert!(r.abs() < 0.05, "replicates correlate: {r}");
}
