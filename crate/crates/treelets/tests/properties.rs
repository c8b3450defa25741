//! Property tests for the linear-algebra core and the treelet transform.

#![allow(clippy::needless_range_loop)]

use proptest::prelude::*;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use treelets::eiv::EivSpec;
use treelets::factor::{example2_pair, population_covariance};
use treelets::linalg::{jacobi_rotate, sample_covariance, SymMatrix};
use treelets::mat::Mat;
use treelets::reference_eigh;
use treelets::treelet::{build_treelet, PairScore};

/// Random positive semi-definite matrix with unit-scale entries.
fn random_psd(p: usize, seed: u64) -> SymMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = Mat::from_fn(p + 4, p, |_, _| rng.sample(StandardNormal));
    sample_covariance(&g).expect("gaussian data is well formed")
}

/// Iterates cyclic Jacobi sweeps until the off-diagonal mass vanishes and
/// returns the sorted diagonal. Independent route to the spectrum built
/// only on single rotations.
fn jacobi_sweep_eigenvalues(sigma: &SymMatrix) -> Vec<f64> {
    let p = sigma.dim();
    let mut work = sigma.clone();
    let scale = work.max_abs().max(1.0);
    for _ in 0..100 {
        let mut off = 0.0_f64;
        for i in 0..p {
            for j in (i + 1)..p {
                off = off.max(work.get(i, j).abs());
            }
        }
        if off <= 1e-13 * scale {
            break;
        }
        for i in 0..p {
            for j in (i + 1)..p {
                let (_, next) = jacobi_rotate(&work, i, j).unwrap();
                work = next;
            }
        }
    }
    let mut diag: Vec<f64> = (0..p).map(|i| work.get(i, i)).collect();
    diag.sort_by(|a, b| b.partial_cmp(a).unwrap());
    diag
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn jacobi_preserves_trace_norm_and_zeroes_entry(
        seed in 0u64..1_000_000,
        p in 2usize..20,
        pair_seed in 0u64..10_000,
    ) {
        let sigma = random_psd(p, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(pair_seed);
        let i = rng.random_range(0..p - 1);
        let j = rng.random_range(i + 1..p);
        let (rot, rotated) = jacobi_rotate(&sigma, i, j).unwrap();
        prop_assert!((rot.c * rot.c + rot.s * rot.s - 1.0).abs() <= 1e-12);
        prop_assert!(rot.angle().abs() <= std::f64::consts::FRAC_PI_4 + 1e-12);
        prop_assert!(rotated.get(i, j).abs() <= 1e-12);
        prop_assert!((rotated.trace() - sigma.trace()).abs() <= 1e-10);
        prop_assert!(
            (rotated.frobenius_norm() - sigma.frobenius_norm()).abs() <= 1e-10
        );
        // Rows and columns away from (i, j) keep their mutual entries.
        for a in 0..p {
            for b in a..p {
                if a != i && a != j && b != i && b != j {
                    prop_assert_eq!(rotated.get(a, b), sigma.get(a, b));
                }
            }
        }
        // Rotating the same pair again is a no-op.
        let (second, _) = jacobi_rotate(&rotated, i, j).unwrap();
        prop_assert!(second.is_identity());
    }

    #[test]
    fn jacobi_sweep_agrees_with_reference_eigh(seed in 0u64..100_000, p in 2usize..12) {
        let sigma = random_psd(p, seed);
        let sweep = jacobi_sweep_eigenvalues(&sigma);
        let (reference, _) = reference_eigh(&sigma).unwrap();
        let scale = sigma.max_abs().max(1.0);
        for (a, b) in sweep.iter().zip(&reference) {
            prop_assert!((a - b).abs() <= 1e-8 * scale, "sweep {a} vs eigh {b}");
        }
    }

    #[test]
    fn covariance_ignores_column_shifts(
        log_n in 1u32..6,
        row_seed in 0u64..1_000_000,
        shift in -1000i32..1000,
        col in 0usize..4,
    ) {
        // Integer data with a power-of-two row count keeps the column
        // means exactly representable, so the invariance holds bitwise.
        let n = 1usize << log_n;
        let mut rng = ChaCha8Rng::seed_from_u64(row_seed);
        let base: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..4).map(|_| rng.random_range(-50..50) as f64).collect())
            .collect();
        let mut shifted = base.clone();
        for row in &mut shifted {
            row[col] += shift as f64;
        }
        let a = sample_covariance(&Mat::from_rows(&base).unwrap()).unwrap();
        let b = sample_covariance(&Mat::from_rows(&shifted).unwrap()).unwrap();
        prop_assert!(a.bitwise_eq(&b));
    }

    #[test]
    fn covariance_shift_invariance_general_sizes(
        n in 3usize..40,
        row_seed in 0u64..1_000_000,
        shift in -100.0f64..100.0,
        col in 0usize..4,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(row_seed);
        let base: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..4).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
            .collect();
        let mut shifted = base.clone();
        for row in &mut shifted {
            row[col] += shift;
        }
        let a = sample_covariance(&Mat::from_rows(&base).unwrap()).unwrap();
        let b = sample_covariance(&Mat::from_rows(&shifted).unwrap()).unwrap();
        let scale = a.max_abs().max(1.0) * (1.0 + shift.abs());
        prop_assert!(a.max_abs_diff(&b) <= 1e-12 * scale);
    }

    #[test]
    fn eigh_reconstructs_random_matrices(seed in 0u64..100_000, p in 1usize..16) {
        let sigma = random_psd(p, seed);
        let (vals, vecs) = reference_eigh(&sigma).unwrap();
        let scale = sigma.max_abs().max(1.0);
        for i in 0..p {
            for j in 0..p {
                let mut s = 0.0;
                for k in 0..p {
                    s += vecs.get(i, k) * vals[k] * vecs.get(j, k);
                }
                prop_assert!((s - sigma.get(i, j)).abs() <= 1e-8 * scale);
            }
        }
    }

    #[test]
    fn transform_preserves_norm_and_inverts(
        seed in 0u64..100_000,
        p in 2usize..12,
        x_seed in 0u64..100_000,
    ) {
        let sigma = random_psd(p, seed);
        let model = build_treelet(&sigma, p - 1, PairScore::Correlation, 1e-12).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(x_seed);
        for _ in 0..4 {
            let x: Vec<f64> = (0..p).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
            for level in 0..=model.max_level() {
                let y = model.transform(&x, level).unwrap();
                prop_assert!((norm(&y) - norm(&x)).abs() <= 1e-10);
                let back = model.inverse_transform(&y, level).unwrap();
                for (a, b) in back.iter().zip(&x) {
                    prop_assert!((a - b).abs() <= 1e-10);
                }
            }
        }
    }

    #[test]
    fn bases_are_orthonormal_and_match_the_transform(
        seed in 0u64..100_000,
        p in 2usize..12,
        x_seed in 0u64..100_000,
    ) {
        let sigma = random_psd(p, seed);
        let model = build_treelet(&sigma, p - 1, PairScore::Correlation, 1e-12).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(x_seed);
        let x: Vec<f64> = (0..p).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        for level in 0..=model.max_level() {
            let b = model.basis_at_level(level).unwrap();
            for i in 0..p {
                for j in 0..p {
                    let mut dot = 0.0;
                    for k in 0..p {
                        dot += b.get(i, k) * b.get(j, k);
                    }
                    let expect = if i == j { 1.0 } else { 0.0 };
                    prop_assert!((dot - expect).abs() <= 1e-8);
                }
            }
            // Row k of B dotted with x is coordinate k of the transform.
            let y = model.transform(&x, level).unwrap();
            for k in 0..p {
                let dot: f64 = (0..p).map(|c| b.get(k, c) * x[c]).sum();
                prop_assert!((dot - y[k]).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn oracle_predictor_is_linear(
        gamma in -3.0f64..3.0,
        c in 0.01f64..3.0,
        a in -4.0f64..4.0,
        b in -4.0f64..4.0,
        x_seed in 0u64..100_000,
    ) {
        let spec = EivSpec::new(4, gamma, c, vec![0.5, 1.0, 2.0, 1.5]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(x_seed);
        let x1: Vec<f64> = (0..4).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let x2: Vec<f64> = (0..4).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let combo: Vec<f64> = x1.iter().zip(&x2).map(|(u, v)| a * u + b * v).collect();
        let lhs = spec.oracle_predict(&combo);
        let rhs = a * spec.oracle_predict(&x1) + b * spec.oracle_predict(&x2);
        prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + rhs.abs()));
    }

    #[test]
    fn treelet_json_round_trips_exactly(
        seed in 0u64..100_000,
        p in 2usize..12,
        level_fraction in 0.1f64..1.0,
    ) {
        let sigma = random_psd(p, seed);
        let max_level = ((p - 1) as f64 * level_fraction).ceil().max(1.0) as usize;
        let model = build_treelet(&sigma, max_level, PairScore::Correlation, 1e-12).unwrap();
        let parsed = treelets::TreeletModel::from_json_str(&model.to_json_string()).unwrap();
        prop_assert_eq!(&model, &parsed);
        // Serializing the parse again is byte-stable.
        prop_assert_eq!(model.to_json_string(), parsed.to_json_string());
    }

    #[test]
    fn factor_spec_json_round_trips_exactly(
        seed in 0u64..100_000,
        p in 1usize..8,
        k in 1usize..4,
        sigma in 0.0f64..2.0,
    ) {
        use treelets::factor::{FactorDist, FactorSpec};
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let loadings = Mat::from_fn(p, k, |_, _| rng.random_range(-2.0..2.0));
        let dists: Vec<FactorDist> = (0..k)
            .map(|_| match rng.random_range(0..4) {
                0 => FactorDist::Gaussian { var: rng.random_range(0.1..3.0) },
                1 => FactorDist::Uniform { half_width: rng.random_range(0.1..3.0) },
                2 => FactorDist::Rademacher,
                _ => FactorDist::Laplace { scale: rng.random_range(0.1..3.0) },
            })
            .collect();
        let spec = FactorSpec::new(loadings, dists, sigma).unwrap();
        let parsed = FactorSpec::from_json_str(&spec.to_json_string()).unwrap();
        prop_assert_eq!(&spec, &parsed);
    }

    #[test]
    fn example2_guarantee_holds_for_arbitrary_inputs(
        seed in 0u64..100_000,
        p in 2usize..9,
        c1 in -2.0f64..2.0,
        c2 in -2.0f64..2.0,
        t1 in 0.2f64..2.0,
        t2 in 0.2f64..2.0,
        t3 in 0.2f64..2.0,
        sigma in 0.0f64..1.5,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v1: Vec<f64> = (0..p).map(|_| rng.random_range(-1.0..1.0)).collect();
        let v2: Vec<f64> = (0..p).map(|_| rng.random_range(-1.0..1.0)).collect();
        if let Ok((a, b)) = example2_pair(&v1, &v2, c1, c2, [t1, t2, t3], sigma) {
            let diff = population_covariance(&a).max_abs_diff(&population_covariance(&b));
            prop_assert!(diff <= 1e-12, "covariance difference {diff}");
        }
    }
}

#[test]
fn tree_depends_only_on_the_covariance() {
    // Negating a dataset changes every observation but leaves the sample
    // covariance bitwise identical, so the tree must match exactly.
    let mut rng = ChaCha8Rng::seed_from_u64(40);
    let data = Mat::from_fn(60, 7, |_, _| rng.sample(StandardNormal));
    let negated = Mat::from_fn(60, 7, |i, j| -data.get(i, j));
    let cov_a = sample_covariance(&data).unwrap();
    let cov_b = sample_covariance(&negated).unwrap();
    assert!(cov_a.bitwise_eq(&cov_b));
    let tree_a = build_treelet(&cov_a, 6, PairScore::Correlation, 1e-12).unwrap();
    let tree_b = build_treelet(&cov_b, 6, PairScore::Correlation, 1e-12).unwrap();
    assert_eq!(tree_a, tree_b);
    assert_eq!(tree_a.to_json_string(), tree_b.to_json_string());
}

#[test]
fn selected_pair_is_annihilated_at_every_level() {
    for seed in 0..20 {
        let p = 9;
        let sigma = random_psd(p, 500 + seed);
        let model = build_treelet(&sigma, p - 1, PairScore::Correlation, 1e-12).unwrap();
        for (idx, step) in model.rotations().iter().enumerate() {
            let after = model.covariance_at_level(&sigma, idx + 1).unwrap();
            assert!(after.get(step.rotation.i, step.rotation.j).abs() <= 1e-12);
        }
    }
}

#[test]
fn transformed_data_covariance_matches_replayed_covariance() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let data = Mat::from_fn(300, 6, |_, _| rng.sample(StandardNormal));
    let cov = sample_covariance(&data).unwrap();
    let model = build_treelet(&cov, 5, PairScore::Correlation, 1e-12).unwrap();
    for level in 0..=model.max_level() {
        let transformed = Mat::from_rows(
            &(0..data.rows())
                .map(|r| model.transform(data.row(r), level).unwrap())
                .collect::<Vec<_>>(),
        )
        .unwrap();
        let observed = sample_covariance(&transformed).unwrap();
        let replayed = model.covariance_at_level(&cov, level).unwrap();
        assert!(
            observed.max_abs_diff(&replayed) <= 1e-8,
            "level {level}: {}",
            observed.max_abs_diff(&replayed)
        );
    }
}

#[test]
fn replayed_covariance_matches_dense_conjugation() {
    // Two algebraic routes to the level-l covariance: replaying the
    // stored rotations, and conjugating by the explicit basis matrix.
    for seed in 0..10 {
        let p = 8;
        let sigma = random_psd(p, 700 + seed);
        let model = build_treelet(&sigma, p - 1, PairScore::Correlation, 1e-12).unwrap();
        let dense = sigma.to_dense();
        for level in 0..=model.max_level() {
            let replayed = model.covariance_at_level(&sigma, level).unwrap();
            let b = model.basis_at_level(level).unwrap();
            let conjugated = b.matmul(&dense).matmul(&b.transpose());
            for i in 0..p {
                for j in 0..p {
                    let diff = (conjugated.get(i, j) - replayed.get(i, j)).abs();
                    assert!(diff <= 1e-10, "level {level} entry ({i},{j}): {diff}");
                }
            }
        }
    }
}

#[test]
fn tie_free_trees_are_permutation_equivariant() {
    let p = 7;
    let perm = [3usize, 0, 6, 2, 5, 1, 4];
    let mut checked = 0;
    for seed in 0..12 {
        let sigma = random_psd(p, 900 + seed);
        let model = build_treelet(&sigma, p - 1, PairScore::Correlation, 1e-12).unwrap();
        if !model.tie_log().is_empty() {
            continue;
        }
        checked += 1;
        let mut permuted = SymMatrix::zeros(p);
        for i in 0..p {
            for j in i..p {
                permuted.set(perm[i], perm[j], sigma.get(i, j));
            }
        }
        let relabeled = build_treelet(&permuted, p - 1, PairScore::Correlation, 1e-12).unwrap();
        for (a, b) in model.rotations().iter().zip(relabeled.rotations()) {
            let expect_pair = {
                let (u, v) = (perm[a.rotation.i], perm[a.rotation.j]);
                if u < v {
                    (u, v)
                } else {
                    (v, u)
                }
            };
            assert_eq!((b.rotation.i, b.rotation.j), expect_pair);
            assert_eq!(b.sum_index, perm[a.sum_index]);
            assert_eq!(b.diff_index, perm[a.diff_index]);
            assert!((a.rotation.c - b.rotation.c).abs() <= 1e-12);
            assert!((a.rotation.s.abs() - b.rotation.s.abs()).abs() <= 1e-12);
        }
    }
    assert!(checked >= 8, "only {checked} tie-free draws");
}

#[test]
fn active_sets_shrink_by_one_per_level() {
    let p = 8;
    let sigma = random_psd(p, 77);
    let model = build_treelet(&sigma, p - 1, PairScore::Correlation, 1e-12).unwrap();
    for level in 0..=model.max_level() {
        assert_eq!(model.active_set(level).unwrap().len(), p - level);
    }
    // A frozen difference index never shows up again.
    for (idx, step) in model.rotations().iter().enumerate() {
        for later in &model.rotations()[idx + 1..] {
            assert_ne!(later.rotation.i, step.diff_index);
            assert_ne!(later.rotation.j, step.diff_index);
        }
        assert!(!model
            .active_set(step.level)
            .unwrap()
            .contains(&step.diff_index));
    }
}

#[test]
fn basis_determinant_is_plus_minus_one() {
    // |det B| = 1 for an orthogonal matrix; measured through the product
    // of LU pivots on a few sizes.
    for (p, seed) in [(2usize, 1u64), (3, 2), (5, 3)] {
        let sigma = random_psd(p, 1000 + seed);
        let model = build_treelet(&sigma, p - 1, PairScore::Correlation, 1e-12).unwrap();
        for level in 0..=model.max_level() {
            let b = model.basis_at_level(level).unwrap();
            let det = lu_determinant(&b);
            assert!(
                (det.abs() - 1.0).abs() <= 1e-8,
                "p={p} level={level} det={det}"
            );
        }
    }
}

fn lu_determinant(m: &Mat) -> f64 {
    let n = m.rows();
    let mut a: Vec<Vec<f64>> = (0..n).map(|i| m.row(i).to_vec()).collect();
    let mut det = 1.0;
    for k in 0..n {
        let (pivot_row, pivot) = (k..n)
            .map(|r| (r, a[r][k]))
            .max_by(|x, y| x.1.abs().partial_cmp(&y.1.abs()).unwrap())
            .unwrap();
        if pivot == 0.0 {
            return 0.0;
        }
        if pivot_row != k {
            a.swap(pivot_row, k);
            det = -det;
        }
        det *= a[k][k];
        for r in (k + 1)..n {
            let f = a[r][k] / a[k][k];
            for c in k..n {
                a[r][c] -= f * a[k][c];
            }
        }
    }
    det
}
