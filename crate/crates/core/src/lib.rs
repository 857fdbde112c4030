//! Latent (overlapping) group lasso for linear and logistic regression.
//!
//! Overlapping groups are handled by giving every group its own latent
//! coefficient block and duplicating shared predictor columns, which turns the
//! problem into an ordinary non-overlapping group lasso on an expanded design.
//! The crate also ships a permutation-based gene set enrichment analysis
//! (GSEA) engine and a simulation harness that compares the two approaches
//! (and the ordinary lasso) on synthetic pathway designs.
//!
//! Module map:
//!
//! - [`model`]: group structures, the expanded design and coefficient collapse
//! - [`solver`]: group descent over a decreasing λ path, KKT audit, cross-validation
//! - [`gsea`]: ranking, running-sum enrichment score, permutation null, NES and FDR
//! - [`metrics`]: RMSE, misclassification error, TDR and top-m group selection
//! - [`simulate`]: synthetic settings and replicated experiments
//! - [`io`]: GMT, expression and phenotype CSV readers and writers
//! - [`cli`]: the `oglasso` command line front end

// `!(x > 0.0)` is used on purpose so that NaN fails the check too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod gsea;
pub mod io;
pub mod metrics;
pub mod model;
pub mod simulate;
pub mod solver;

pub use error::{Error, Result};
pub use model::{ExpandedDesign, GroupStructure, LatentCoefficients};
pub use solver::{Family, FitConfig, PathFit};
