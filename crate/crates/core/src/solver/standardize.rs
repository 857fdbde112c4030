//! Within-group orthonormalization.
//!
//! Each latent block `X̃_j` (centered when the model has an intercept) is
//! rotated and rescaled so that `Z_jᵀZ_j / n = I`. The block update of group
//! descent then has a closed form. Rank-deficient blocks (duplicated or
//! constant columns) are represented in the reduced basis of their row space,
//! which leaves fitted values unchanged.

use std::ops::Range;

use log::warn;
use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView1};

use crate::error::{Error, Result};
use crate::model::{ExpandedDesign, GroupStructure, LatentCoefficients};

/// Eigenvalues of the block Gram below this fraction of the largest are dropped.
const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct WorkingBlock {
    /// `Z_j`, n × r.
    pub columns: Array2<f64>,
    /// `T_j` (K × r) with `γ_j = T_j θ_j`.
    pub transform: Array2<f64>,
    /// `T_j⁺` (r × K) with `θ_j = T_j⁺ γ_j` on the block's row space.
    pub inverse: Array2<f64>,
    /// Largest eigenvalue of `Z_jᵀZ_j / n` (1 for orthonormalized blocks, 0 for empty ones).
    pub lipschitz: f64,
    pub weight: f64,
    pub range: Range<usize>,
}

impl WorkingBlock {
    pub fn rank(&self) -> usize {
        self.columns.ncols()
    }
}

/// The design the solver actually iterates on.
#[derive(Clone, Debug)]
pub struct WorkingDesign {
    pub n: usize,
    pub blocks: Vec<WorkingBlock>,
    /// Column means of `X̃` removed before transforming; `None` without intercept.
    pub center: Option<Array1<f64>>,
    pub standardized: bool,
}

/// Orthonormalizes every group block of `ed`.
pub fn standardize_groups(ed: &ExpandedDesign, gs: &GroupStructure) -> Result<WorkingDesign> {
    WorkingDesign::new(ed, gs.weights(), true)
}

impl WorkingDesign {
    pub fn new(ed: &ExpandedDesign, weights: &[f64], standardize: bool) -> Result<Self> {
        if weights.len() != ed.n_groups() {
            return Err(Error::Dimension(format!("{} weights for {} groups", weights.len(), ed.n_groups())));
        }
        let n = ed.n();
        if n == 0 {
            return Err(Error::Dimension("design has no rows".into()));
        }
        let nf = n as f64;
        let center = ed.has_intercept().then(|| ed.matrix().mean_axis(ndarray::Axis(0)).unwrap());
        let mut blocks = Vec::with_capacity(ed.n_groups());
        for (j, range) in ed.group_ranges().iter().enumerate() {
            let raw = ed.block(j);
            for (col, v) in raw.columns().into_iter().enumerate() {
                let degenerate =
                    if ed.has_intercept() { v.iter().all(|&a| a == v[0]) } else { v.iter().all(|&a| a == 0.0) };
                if degenerate {
                    let pred = ed.column_map()[range.start + col].predictor;
                    warn!("predictor {pred} has zero variance and is dropped from group {j}");
                }
            }
            let mut xb = raw.to_owned();
            if let Some(c) = &center {
                xb -= &c.slice(ndarray::s![range.clone()]);
            }
            let k = xb.ncols();
            let gram = xb.t().dot(&xb) / nf;
            let eig = SymmetricEigen::new(DMatrix::from_fn(k, k, |a, b| gram[[a, b]]));
            let raw_scale = raw.iter().map(|v| v * v).sum::<f64>() / (nf * k as f64);
            let floor = RANK_TOLERANCE * raw_scale;
            let mut max_eig = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
            if max_eig <= floor {
                max_eig = 0.0;
            }
            let block = if standardize {
                let keep: Vec<usize> = (0..k)
                    .filter(|&i| max_eig > 0.0 && eig.eigenvalues[i] > (RANK_TOLERANCE * max_eig).max(floor))
                    .collect();
                let r = keep.len();
                let mut transform = Array2::zeros((k, r));
                let mut inverse = Array2::zeros((r, k));
                for (c, &i) in keep.iter().enumerate() {
                    let d = eig.eigenvalues[i].sqrt();
                    for a in 0..k {
                        let v = eig.eigenvectors[(a, i)];
                        transform[[a, c]] = v / d;
                        inverse[[c, a]] = v * d;
                    }
                }
                WorkingBlock {
                    columns: xb.dot(&transform),
                    transform,
                    inverse,
                    lipschitz: if r > 0 { 1.0 } else { 0.0 },
                    weight: weights[j],
                    range: range.clone(),
                }
            } else {
                WorkingBlock {
                    columns: xb,
                    transform: Array2::eye(k),
                    inverse: Array2::eye(k),
                    lipschitz: max_eig,
                    weight: weights[j],
                    range: range.clone(),
                }
            };
            blocks.push(block);
        }
        Ok(Self { n, blocks, center, standardized: standardize })
    }

    pub fn latent_dim(&self) -> usize {
        self.blocks.last().map_or(0, |b| b.range.end)
    }

    pub fn has_intercept(&self) -> bool {
        self.center.is_some()
    }

    /// Maps working coefficients back to latent coefficients on the original scale.
    pub fn unstandardize(&self, intercept: f64, theta: &[Array1<f64>]) -> LatentCoefficients {
        let mut gamma = Array1::zeros(self.latent_dim());
        for (b, t) in self.blocks.iter().zip(theta) {
            if b.rank() > 0 {
                gamma.slice_mut(ndarray::s![b.range.clone()]).assign(&b.transform.dot(t));
            }
        }
        let intercept = match &self.center {
            Some(c) => intercept - c.dot(&gamma),
            None => intercept,
        };
        LatentCoefficients { intercept, gamma }
    }

    /// Inverse of [`WorkingDesign::unstandardize`] on the blocks' row spaces.
    pub fn to_working(&self, lc: &LatentCoefficients) -> (f64, Vec<Array1<f64>>) {
        let theta = self.blocks.iter().map(|b| b.inverse.dot(&lc.gamma.slice(ndarray::s![b.range.clone()]))).collect();
        let intercept = match &self.center {
            Some(c) => lc.intercept + c.dot(&lc.gamma),
            None => lc.intercept,
        };
        (intercept, theta)
    }

    /// `b₀ + Σ_j Z_j θ_j`.
    pub fn linear_predictor(&self, intercept: f64, theta: &[Array1<f64>]) -> Array1<f64> {
        let mut eta = Array1::from_elem(self.n, intercept);
        for (b, t) in self.blocks.iter().zip(theta) {
            if b.rank() > 0 && t.iter().any(|&v| v != 0.0) {
                eta += &b.columns.dot(t);
            }
        }
        eta
    }

    pub fn zero_theta(&self) -> Vec<Array1<f64>> {
        self.blocks.iter().map(|b| Array1::zeros(b.rank())).collect()
    }

    /// `Z_jᵀ v / n`.
    pub fn block_inner(&self, j: usize, v: ArrayView1<'_, f64>) -> Array1<f64> {
        self.blocks[j].columns.t().dot(&v) / self.n as f64
    }
}
