//! Treelets: adaptive multiscale bases from greedy pairwise Jacobi
//! rotations on covariance matrices, plus the simulation benchmarks that
//! probe where such covariance-only constructions succeed and fail.
//!
//! The crate has five parts:
//!
//! * [`linalg`] / [`eigh`] — dense symmetric-matrix primitives: covariance
//!   estimation, correlation normalization, single Jacobi rotations, and a
//!   reference eigensolver used as an independent oracle.
//! * [`treelet`] — the treelet tree `T(Sigma)`: greedy pair merges, the
//!   per-level orthonormal bases, and forward/inverse transforms.
//! * [`factor`] — latent factor model generators and the two-spec
//!   construction with identical covariances that makes Gaussian factor
//!   structure unidentifiable.
//! * [`eiv`] — an errors-in-variables prediction benchmark with the
//!   closed-form Bayes predictor and PCA / treelet regression baselines.
//! * [`hier`] — generic hierarchical feature construction: select K
//!   features, combine the selected pairs with an operator, repeat until
//!   held-out risk stops improving.
//!
//! # Example
//!
//! Build a tree from data, inspect the first merge, and run a coordinate
//! through the level-1 basis and back:
//!
//! ```
//! use treelets::{build_treelet, sample_covariance, Mat, PairScore};
//!
//! // Two strongly correlated columns and an independent third.
//! let data = Mat::from_rows(&[
//!     vec![1.0, 1.1, 0.3],
//!     vec![2.0, 2.1, -0.2],
//!     vec![3.0, 2.9, 0.1],
//!     vec![4.0, 4.2, -0.4],
//!     vec![5.0, 4.8, 0.2],
//! ])?;
//! let cov = sample_covariance(&data)?;
//! let model = build_treelet(&cov, 2, PairScore::Correlation, 1e-12)?;
//!
//! // The first rotation merges the correlated pair (0, 1).
//! let first = &model.rotations()[0];
//! assert_eq!((first.rotation.i, first.rotation.j), (0, 1));
//!
//! // Transforms are orthogonal: round trips are exact to rounding.
//! let x = [0.5, -1.0, 2.0];
//! let coeffs = model.transform(&x, 1)?;
//! let back = model.inverse_transform(&coeffs, 1)?;
//! for (a, b) in back.iter().zip(&x) {
//!     assert!((a - b).abs() < 1e-12);
//! }
//! # Ok::<(), treelets::Error>(())
//! ```

// Indexed loops mirror the matrix subscripts throughout.
#![allow(clippy::needless_range_loop)]

pub mod eigh;
pub mod eiv;
pub mod error;
pub mod factor;
pub mod hier;
pub mod linalg;
pub mod mat;
pub mod treelet;

pub use eigh::reference_eigh;
pub use error::{Error, Result};
pub use linalg::{
    correlation_from_covariance, jacobi_rotate, sample_covariance, JacobiRotation, SymMatrix,
};
pub use mat::Mat;
pub use treelet::{build_treelet, PairScore, TreeletModel};
