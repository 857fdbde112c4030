//! Post-hoc optimality audit of a path fit.

use ndarray::ArrayView1;

use super::loss::response_residual;
use super::path::{group_violation, validate_response};
use super::standardize::WorkingDesign;
use super::PathFit;
use crate::error::Result;
use crate::model::{ExpandedDesign, GroupStructure};

/// Relative KKT violations per λ and per group.
///
/// For a zero group the violation is `max(0, ‖∇_j L‖ / (λ w_j) − 1)`; for an
/// active group it is `‖∇_j L + λ w_j γ^j/‖γ^j‖‖ / (λ w_j)`. Gradients are taken
/// in the coordinates the fit was computed in (orthonormalized blocks when the
/// fit was standardized).
#[derive(Clone, Debug)]
pub struct KktReport {
    pub tol: f64,
    pub violations: Vec<Vec<f64>>,
    /// `|∂L/∂β₀| / λ`, zero for models without intercept.
    pub intercept: Vec<f64>,
}

impl KktReport {
    pub fn worst_at(&self, i: usize) -> f64 {
        self.violations[i].iter().copied().fold(self.intercept[i], f64::max)
    }

    pub fn worst(&self) -> f64 {
        (0..self.violations.len()).map(|i| self.worst_at(i)).fold(0.0, f64::max)
    }

    pub fn passes_at(&self, i: usize) -> bool {
        self.worst_at(i) <= self.tol
    }

    pub fn passes(&self) -> bool {
        (0..self.violations.len()).all(|i| self.passes_at(i))
    }
}

pub fn check_kkt(
    fit: &PathFit,
    ed: &ExpandedDesign,
    y: ArrayView1<'_, f64>,
    gs: &GroupStructure,
    tol_kkt: f64,
) -> Result<KktReport> {
    validate_response(fit.family, y, ed.n())?;
    let wd = WorkingDesign::new(ed, gs.weights(), fit.standardized)?;
    let mut violations = Vec::with_capacity(fit.len());
    let mut intercept = Vec::with_capacity(fit.len());
    for (lc, &lambda) in fit.coefficients.iter().zip(&fit.lambdas) {
        let eta = ed.linear_predictor(lc)?;
        let r = response_residual(fit.family, y, eta.view());
        let (_, theta) = wd.to_working(lc);
        let per_group = wd
            .blocks
            .iter()
            .enumerate()
            .map(|(j, b)| {
                if b.rank() == 0 {
                    return 0.0;
                }
                let neg_grad = wd.block_inner(j, r.view());
                group_violation(neg_grad.view(), theta[j].view(), lambda * b.weight)
            })
            .collect();
        violations.push(per_group);
        intercept.push(if ed.has_intercept() { (r.sum() / ed.n() as f64).abs() / lambda } else { 0.0 });
    }
    Ok(KktReport { tol: tol_kkt, violations, intercept })
}
