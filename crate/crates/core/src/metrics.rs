//! Evaluation statistics: RMSE, misclassification error, true discovery rate,
//! and fixed-count group selection from a path.

use std::collections::BTreeSet;

use ndarray::ArrayView1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ExpandedDesign, GroupStructure, LatentCoefficients};
use crate::solver::PathFit;

/// `√((1/p) Σ (β_k − β̂_k)²)`, intercept excluded.
pub fn rmse(beta_hat: ArrayView1<'_, f64>, beta_true: ArrayView1<'_, f64>) -> Result<f64> {
    if beta_hat.len() != beta_true.len() {
        return Err(Error::Dimension(format!("coefficient lengths differ: {} vs {}", beta_hat.len(), beta_true.len())));
    }
    if beta_hat.is_empty() {
        return Err(Error::Dimension("empty coefficient vector".into()));
    }
    let ss: f64 = beta_hat.iter().zip(beta_true).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((ss / beta_hat.len() as f64).sqrt())
}

/// Fraction of `y` misclassified by predicting 1 iff the fitted probability is
/// at least 1/2 (equivalently η ≥ 0).
pub fn misclassification_from_eta(eta: ArrayView1<'_, f64>, y: ArrayView1<'_, f64>) -> Result<f64> {
    if eta.len() != y.len() || y.is_empty() {
        return Err(Error::Dimension(format!("{} predictions for {} responses", eta.len(), y.len())));
    }
    let wrong = eta.iter().zip(y).filter(|(&e, &t)| (e >= 0.0) != (t == 1.0)).count();
    Ok(wrong as f64 / y.len() as f64)
}

pub fn misclassification_error(
    lc: &LatentCoefficients,
    ed_test: &ExpandedDesign,
    y_test: ArrayView1<'_, f64>,
) -> Result<f64> {
    misclassification_from_eta(ed_test.linear_predictor(lc)?.view(), y_test)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TopGroups {
    pub groups: Vec<usize>,
    /// Fewer than the requested number of groups ever became active.
    pub short: bool,
}

/// The first `m` distinct groups to activate along the path.
pub fn select_top_groups_oglasso(fit: &PathFit, m: usize) -> Result<TopGroups> {
    if m == 0 {
        return Err(Error::Config("number of groups to select must be positive".into()));
    }
    let mut seen = BTreeSet::new();
    let groups: Vec<usize> = fit.entry_order.iter().copied().filter(|&g| seen.insert(g)).take(m).collect();
    let short = groups.len() < m;
    Ok(TopGroups { groups, short })
}

/// `|selected ∩ truth| / |selected|`.
pub fn tdr<T: Ord>(selected: &[T], truth: &[T]) -> Result<f64> {
    if selected.is_empty() {
        return Err(Error::Config("true discovery rate of an empty selection is undefined".into()));
    }
    let truth: BTreeSet<&T> = truth.iter().collect();
    let distinct: BTreeSet<&T> = selected.iter().collect();
    let hits = distinct.iter().filter(|g| truth.contains(*g)).count();
    Ok(hits as f64 / distinct.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionOutcome {
    pub method: String,
    pub selected_groups: Vec<String>,
    pub truth: Vec<String>,
    pub tdr: f64,
    /// Mean nominal size K^j of the selected groups.
    pub mean_selected_size: f64,
}

impl SelectionOutcome {
    pub fn new(method: &str, selected: &[usize], truth: &[usize], gs: &GroupStructure) -> Result<Self> {
        let tdr = tdr(selected, truth)?;
        let mean_selected_size =
            selected.iter().map(|&j| gs.group(j).len() as f64).sum::<f64>() / selected.len() as f64;
        let name = |j: &usize| gs.group(*j).name.clone();
        Ok(Self {
            method: method.to_string(),
            selected_groups: selected.iter().map(name).collect(),
            truth: truth.iter().map(name).collect(),
            tdr,
            mean_selected_size,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::Family;
    use ndarray::array;

    #[test]
    fn rmse_examples() {
        let b = array![1.0, -2.0, 0.5];
        assert_eq!(rmse(b.view(), b.view()).unwrap(), 0.0);
        assert_eq!(rmse(array![0.0, 0.0, 0.0, 0.0].view(), array![1.0, 1.0, 1.0, 1.0].view()).unwrap(), 1.0);
        let v = rmse(array![0.0, 4.0].view(), array![3.0, 0.0].view()).unwrap();
        assert!((v - (12.5f64).sqrt()).abs() < 1e-15);
        assert!(rmse(array![1.0].view(), array![1.0, 2.0].view()).is_err());
    }

    #[test]
    fn intercept_only_error_is_minority_rate() {
        // 17 of 50 in class 1, intercept logit(0.34) < 0 predicts 0 everywhere
        let y: ndarray::Array1<f64> = (0..50).map(|i| if i < 17 { 1.0 } else { 0.0 }).collect();
        let eta = ndarray::Array1::from_elem(50, (0.34f64 / 0.66).ln());
        assert!((misclassification_from_eta(eta.view(), y.view()).unwrap() - 0.34).abs() < 1e-15);
        // balanced with η = 0: ties predict 1
        let yb = array![1.0, 0.0, 1.0, 0.0];
        let e0 = ndarray::Array1::zeros(4);
        assert_eq!(misclassification_from_eta(e0.view(), yb.view()).unwrap(), 0.5);
    }

    #[test]
    fn tdr_examples() {
        let truth = [0, 3, 6, 9, 12];
        assert_eq!(tdr(&truth, &truth).unwrap(), 1.0);
        assert_eq!(tdr(&[1, 2], &truth).unwrap(), 0.0);
        assert_eq!(tdr(&[0, 3, 6, 9, 1], &truth).unwrap(), 0.8);
        assert!(tdr::<usize>(&[], &truth).is_err());
    }

    fn path_with_entries(entries: Vec<usize>) -> PathFit {
        PathFit {
            family: Family::Logistic,
            standardized: true,
            lambda_max: 1.0,
            lambdas: vec![],
            coefficients: vec![],
            loss_values: vec![],
            converged: vec![],
            saturated: vec![],
            iterations: vec![],
            entry_order: entries,
            objective_traces: vec![],
        }
    }

    #[test]
    fn top_groups_follow_entry_order() {
        let fit = path_with_entries(vec![4, 1, 4, 7, 2]);
        assert_eq!(select_top_groups_oglasso(&fit, 3).unwrap(), TopGroups { groups: vec![4, 1, 7], short: false });
        let short = select_top_groups_oglasso(&fit, 6).unwrap();
        assert!(short.short);
        assert_eq!(short.groups, vec![4, 1, 7, 2]);
    }

    #[test]
    fn outcome_uses_nominal_sizes() {
        let gs = GroupStructure::new(5, vec![("a", vec![0, 1]), ("b", vec![1, 2, 3, 4])]).unwrap();
        let o = SelectionOutcome::new("oglasso", &[0, 1], &[0], &gs).unwrap();
        assert_eq!(o.mean_selected_size, 3.0);
        assert_eq!(o.tdr, 0.5);
        assert_eq!(o.selected_groups, vec!["a", "b"]);
    }
}
