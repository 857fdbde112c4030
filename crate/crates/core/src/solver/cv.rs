//! K-fold cross-validation over the λ path.

use ndarray::{Array2, ArrayView1};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::loss::deviance_term;
use super::path::{fit_path, validate_response};
use super::{CvRule, Family, FitConfig, LambdaPath, PathFit};
use crate::error::{Error, Result};
use crate::model::{ExpandedDesign, GroupStructure, LatentCoefficients};

#[derive(Clone, Debug)]
pub struct CvResult {
    pub lambdas: Vec<f64>,
    /// Mean held-out loss per λ: deviance (logistic) or squared error (linear).
    pub mean_loss: Vec<f64>,
    /// Standard error of the per-observation held-out loss.
    pub se_loss: Vec<f64>,
    /// Held-out misclassification rate per λ (logistic only).
    pub misclassification: Option<Vec<f64>>,
    pub selected: usize,
    pub selected_lambda: f64,
    /// Fold id of every observation.
    pub folds: Vec<usize>,
    /// Path fitted on all observations.
    pub fit: PathFit,
}

impl CvResult {
    pub fn selected_coefficients(&self) -> &LatentCoefficients {
        &self.fit.coefficients[self.selected]
    }

    pub fn selected_misclassification(&self) -> Option<f64> {
        self.misclassification.as_ref().map(|m| m[self.selected])
    }
}

/// Seeded fold ids. For logistic responses each class is shuffled separately
/// and dealt round-robin so that every fold keeps the class ratio.
pub fn fold_assignment(y: ArrayView1<'_, f64>, k: usize, family: Family, seed: u64) -> Result<Vec<usize>> {
    let n = y.len();
    if k < 2 || k > n {
        return Err(Error::Config(format!("number of folds must lie in [2, {n}], got {k}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let order: Vec<usize> = match family {
        Family::Linear => {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(&mut rng);
            idx
        }
        Family::Logistic => {
            let mut zeros: Vec<usize> = (0..n).filter(|&i| y[i] == 0.0).collect();
            let mut ones: Vec<usize> = (0..n).filter(|&i| y[i] != 0.0).collect();
            zeros.shuffle(&mut rng);
            ones.shuffle(&mut rng);
            zeros.into_iter().chain(ones).collect()
        }
    };
    let mut folds = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        folds[i] = pos % k;
    }
    Ok(folds)
}

/// Cross-validates the path of `cfg` with `k` folds seeded by `cfg.seed`.
///
/// The λ sequence is taken from the full-data fit and reused in every fold.
pub fn cross_validate(
    ed: &ExpandedDesign,
    y: ArrayView1<'_, f64>,
    gs: &GroupStructure,
    cfg: &FitConfig,
    k: usize,
) -> Result<CvResult> {
    validate_response(cfg.family, y, ed.n())?;
    let folds = fold_assignment(y, k, cfg.family, cfg.seed)?;
    let fit = fit_path(ed, y, gs, cfg)?;

    let mut fold_cfg = cfg.clone();
    fold_cfg.lambda = LambdaPath::Explicit(fit.lambdas.clone());
    fold_cfg.stop_after_entries = None;
    fold_cfg.record_trace = false;

    let n = ed.n();
    let n_lambda = fit.lambdas.len();
    let per_fold: Vec<(Vec<usize>, Array2<f64>)> = (0..k)
        .into_par_iter()
        .map(|f| -> Result<(Vec<usize>, Array2<f64>)> {
            let (test, train): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| folds[i] == f);
            let y_train = y.select(ndarray::Axis(0), &train);
            if cfg.family == Family::Logistic {
                let ones = y_train.iter().filter(|&&v| v == 1.0).count();
                if ones == 0 || ones == train.len() {
                    return Err(Error::Config(format!(
                        "training data of fold {f} contains a single class; use fewer folds"
                    )));
                }
            }
            let fold_fit = fit_path(&ed.select_rows(&train), y_train.view(), gs, &fold_cfg)?;
            let ed_test = ed.select_rows(&test);
            // Columns [0, n_lambda) hold the loss, [n_lambda, 2 n_lambda) misclassification.
            let width = if cfg.family == Family::Logistic { 2 * n_lambda } else { n_lambda };
            let mut losses = Array2::zeros((test.len(), width));
            for (l, lc) in fold_fit.coefficients.iter().enumerate() {
                let eta = ed_test.linear_predictor(lc)?;
                for (t, &i) in test.iter().enumerate() {
                    losses[[t, l]] = deviance_term(cfg.family, y[i], eta[t]);
                    if cfg.family == Family::Logistic {
                        let pred = if eta[t] >= 0.0 { 1.0 } else { 0.0 };
                        losses[[t, n_lambda + l]] = f64::from(u8::from(pred != y[i]));
                    }
                }
            }
            Ok((test, losses))
        })
        .collect::<Result<_>>()?;

    let width = if cfg.family == Family::Logistic { 2 * n_lambda } else { n_lambda };
    let mut table = Array2::<f64>::zeros((n, width));
    for (test, losses) in &per_fold {
        for (t, &i) in test.iter().enumerate() {
            table.row_mut(i).assign(&losses.row(t));
        }
    }
    let nf = n as f64;
    let column_mean = |c: usize| table.column(c).sum() / nf;
    let mean_loss: Vec<f64> = (0..n_lambda).map(column_mean).collect();
    let se_loss: Vec<f64> = (0..n_lambda)
        .map(|c| {
            let m = mean_loss[c];
            let var = table.column(c).iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (nf - 1.0);
            (var / nf).sqrt()
        })
        .collect();
    let misclassification =
        (cfg.family == Family::Logistic).then(|| (n_lambda..2 * n_lambda).map(column_mean).collect());
    let best = mean_loss.iter().enumerate().fold(0, |best, (i, &v)| if v < mean_loss[best] { i } else { best });
    let selected = match cfg.cv_rule {
        CvRule::MinLoss => best,
        CvRule::OneStandardError => {
            let bound = mean_loss[best] + se_loss[best];
            mean_loss.iter().position(|&v| v <= bound).unwrap_or(best)
        }
    };

    Ok(CvResult {
        lambdas: fit.lambdas.clone(),
        mean_loss,
        se_loss,
        misclassification,
        selected,
        selected_lambda: fit.lambdas[selected],
        folds,
        fit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{Array1, Array2};
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn stratified_folds_keep_class_ratio() {
        let y: Array1<f64> = (0..40).map(|i| if i < 10 { 1.0 } else { 0.0 }).collect();
        let folds = fold_assignment(y.view(), 5, Family::Logistic, 3).unwrap();
        for f in 0..5 {
            let ones = (0..40).filter(|&i| folds[i] == f && y[i] == 1.0).count();
            let total = folds.iter().filter(|&&g| g == f).count();
            assert_eq!(ones, 2);
            assert_eq!(total, 8);
        }
        assert_eq!(folds, fold_assignment(y.view(), 5, Family::Logistic, 3).unwrap());
        assert!(fold_assignment(y.view(), 1, Family::Logistic, 3).is_err());
        assert!(fold_assignment(y.view(), 41, Family::Logistic, 3).is_err());
    }

    #[test]
    fn leave_one_out_runs() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 12;
        let x = Array2::from_shape_fn((n, 3), |_| StandardNormal.sample(&mut rng));
        let y: Array1<f64> = (0..n).map(|i| x[[i, 0]] + 0.1 * rng.random::<f64>()).collect();
        let gs = GroupStructure::new(3, vec![("a", vec![0, 1]), ("b", vec![1, 2])]).unwrap();
        let ed = ExpandedDesign::new(x.view(), &gs, true).unwrap();
        let mut cfg = FitConfig::linear();
        cfg.lambda = LambdaPath::Auto { count: 10, min_ratio: Some(0.01) };
        let cv = cross_validate(&ed, y.view(), &gs, &cfg, n).unwrap();
        assert_eq!(cv.mean_loss.len(), 10);
        let mut ids = cv.folds.clone();
        ids.sort_unstable();
        assert_eq!(ids, (0..n).collect::<Vec<_>>());
        // the informative predictor should beat the null model
        assert!(cv.selected > 0);
    }

    #[test]
    fn single_class_fold_is_reported() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = Array2::from_shape_fn((6, 2), |_| StandardNormal.sample(&mut rng));
        let y = Array1::from(vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let gs = GroupStructure::new(2, vec![("a", vec![0, 1])]).unwrap();
        let ed = ExpandedDesign::new(x.view(), &gs, true).unwrap();
        let err = cross_validate(&ed, y.view(), &gs, &FitConfig::logistic(), 3).unwrap_err();
        assert!(err.to_string().contains("single class"));
    }
}
