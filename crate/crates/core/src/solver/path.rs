use log::warn;
use ndarray::{Array1, ArrayView1, Zip};

use super::loss::{self, response_residual, SATURATION_ETA};
use super::prox::group_soft_threshold;
use super::standardize::WorkingDesign;
use super::{Family, FitConfig, LambdaPath, PathFit};
use crate::error::{Error, Result};
use crate::model::{group_norms, selected_groups, ExpandedDesign, GroupStructure, LatentCoefficients};

/// Upper bound on the logistic curvature `π(1 − π)`.
const LOGISTIC_CURVATURE: f64 = 0.25;

pub(crate) fn validate_response(family: Family, y: ArrayView1<'_, f64>, n: usize) -> Result<()> {
    if y.len() != n {
        return Err(Error::Dimension(format!("response has length {}, design has {n} rows", y.len())));
    }
    if n < 2 {
        return Err(Error::Dimension("at least two observations are required".into()));
    }
    match family {
        Family::Linear => {
            if let Some(&v) = y.iter().find(|v| !v.is_finite()) {
                return Err(Error::Numerical(format!("non-finite response value {v}")));
            }
        }
        Family::Logistic => {
            if let Some(&v) = y.iter().find(|&&v| v != 0.0 && v != 1.0) {
                return Err(Error::NonBinary(v));
            }
            let ones = y.iter().filter(|&&v| v == 1.0).count();
            if ones == 0 || ones == n {
                return Err(Error::SingleClass);
            }
        }
    }
    Ok(())
}

/// Intercept of the all-groups-zero fit.
fn null_intercept(wd: &WorkingDesign, family: Family, y: ArrayView1<'_, f64>) -> f64 {
    if !wd.has_intercept() {
        return 0.0;
    }
    let ybar = y.mean().unwrap_or(0.0);
    match family {
        Family::Linear => ybar,
        Family::Logistic => (ybar / (1.0 - ybar)).ln(),
    }
}

fn lambda_max_working(wd: &WorkingDesign, family: Family, y: ArrayView1<'_, f64>) -> f64 {
    let eta = Array1::from_elem(wd.n, null_intercept(wd, family, y));
    let r = response_residual(family, y, eta.view());
    wd.blocks
        .iter()
        .enumerate()
        .filter(|(_, b)| b.rank() > 0)
        .map(|(j, b)| {
            let g = wd.block_inner(j, r.view());
            g.dot(&g).sqrt() / b.weight
        })
        .fold(0.0, f64::max)
}

/// Smallest λ at which the all-zero (intercept-only) solution is optimal:
/// `max_j ‖∇_j L(γ⁰)‖ / w_j`, evaluated in the solver's working coordinates.
pub fn compute_lambda_max(
    ed: &ExpandedDesign,
    y: ArrayView1<'_, f64>,
    gs: &GroupStructure,
    family: Family,
    standardize: bool,
) -> Result<f64> {
    validate_response(family, y, ed.n())?;
    let wd = WorkingDesign::new(ed, gs.weights(), standardize)?;
    Ok(lambda_max_working(&wd, family, y))
}

/// Penalized objective on the original latent scale.
pub fn objective(
    ed: &ExpandedDesign,
    y: ArrayView1<'_, f64>,
    gs: &GroupStructure,
    family: Family,
    lc: &LatentCoefficients,
    lambda: f64,
) -> Result<f64> {
    let eta = ed.linear_predictor(lc)?;
    let norms = group_norms(lc, gs)?;
    let penalty: f64 = norms.iter().zip(gs.weights()).map(|(a, w)| a * w).sum();
    Ok(loss::loss(family, y, eta.view()) + lambda * penalty)
}

/// Mutable descent state for one path fit.
struct Descent<'a> {
    wd: &'a WorkingDesign,
    y: ArrayView1<'a, f64>,
    family: Family,
    intercept: f64,
    theta: Vec<Array1<f64>>,
    eta: Array1<f64>,
}

impl<'a> Descent<'a> {
    fn new(wd: &'a WorkingDesign, y: ArrayView1<'a, f64>, family: Family) -> Self {
        let intercept = null_intercept(wd, family, y);
        Self { wd, y, family, intercept, theta: wd.zero_theta(), eta: Array1::from_elem(wd.n, intercept) }
    }

    /// Intercept-only state with every block zero.
    fn is_null(&self) -> bool {
        self.theta.iter().all(|t| t.iter().all(|&v| v == 0.0))
    }

    /// One cycle over the intercept and every block (or only the blocks
    /// flagged in `active`). Returns the largest scaled coefficient change
    /// `|Δ| / (1 + |new|)`.
    fn cycle(&mut self, lambda: f64, active: Option<&[bool]>) -> f64 {
        let n = self.wd.n as f64;
        // Quadratic surrogate: curvature `v` and working residual r.
        let (v, mut r) = match self.family {
            Family::Linear => (1.0, &self.y - &self.eta),
            Family::Logistic => {
                let mut r = response_residual(self.family, self.y, self.eta.view());
                r /= LOGISTIC_CURVATURE;
                (LOGISTIC_CURVATURE, r)
            }
        };
        let mut change: f64 = 0.0;
        if self.wd.has_intercept() {
            let d = r.sum() / n;
            if d != 0.0 {
                self.intercept += d;
                r -= d;
                self.eta += d;
                change = change.max(d.abs() / (1.0 + self.intercept.abs()));
            }
        }
        for (j, b) in self.wd.blocks.iter().enumerate() {
            if b.rank() == 0 || b.lipschitz == 0.0 || active.is_some_and(|a| !a[j]) {
                continue;
            }
            let g = b.columns.t().dot(&r) / n;
            let theta = &self.theta[j];
            let curvature = v * b.lipschitz;
            let z = theta * curvature + &g * v;
            let new = group_soft_threshold(z.view(), lambda * b.weight) / curvature;
            let delta = &new - theta;
            if delta.iter().any(|&d| d != 0.0) {
                for (k, &d) in delta.iter().enumerate() {
                    if d != 0.0 {
                        let col = b.columns.column(k);
                        Zip::from(&mut r).and(&mut self.eta).and(col).for_each(|ri, ei, &c| {
                            *ri -= d * c;
                            *ei += d * c;
                        });
                        change = change.max(d.abs() / (1.0 + new[k].abs()));
                    }
                }
                self.theta[j] = new;
            }
        }
        change
    }

    /// Worst relative KKT violation over the groups and the intercept.
    fn kkt_violation(&self, lambda: f64) -> f64 {
        let r = response_residual(self.family, self.y, self.eta.view());
        let mut worst: f64 = 0.0;
        if self.wd.has_intercept() {
            worst = worst.max((r.sum() / self.wd.n as f64).abs() / lambda);
        }
        for (j, b) in self.wd.blocks.iter().enumerate() {
            if b.rank() == 0 {
                continue;
            }
            let neg_grad = self.wd.block_inner(j, r.view());
            worst = worst.max(group_violation(neg_grad.view(), self.theta[j].view(), lambda * b.weight));
        }
        worst
    }

    fn objective(&self, lambda: f64) -> f64 {
        let penalty: f64 = self.wd.blocks.iter().zip(&self.theta).map(|(b, t)| b.weight * t.dot(t).sqrt()).sum();
        loss::loss(self.family, self.y, self.eta.view()) + lambda * penalty
    }
}

/// Relative KKT violation of one block given `−∇_j L` and the block's coefficients.
pub(crate) fn group_violation(neg_grad: ArrayView1<'_, f64>, theta: ArrayView1<'_, f64>, threshold: f64) -> f64 {
    let norm = theta.dot(&theta).sqrt();
    if norm == 0.0 {
        (neg_grad.dot(&neg_grad).sqrt() / threshold - 1.0).max(0.0)
    } else {
        // ∇ + t θ/‖θ‖ = −(neg_grad) + t θ/‖θ‖
        let s: f64 = neg_grad
            .iter()
            .zip(theta)
            .map(|(&g, &t)| {
                let e = -g + threshold * t / norm;
                e * e
            })
            .sum();
        s.sqrt() / threshold
    }
}

fn auto_lambdas(lambda_max: f64, count: usize, min_ratio: f64) -> Vec<f64> {
    if count == 1 {
        return vec![lambda_max];
    }
    let (hi, lo) = (lambda_max.ln(), (lambda_max * min_ratio).ln());
    (0..count)
        .map(|i| if i == 0 { lambda_max } else { (hi + (lo - hi) * i as f64 / (count - 1) as f64).exp() })
        .collect()
}

/// Fits the penalized model along a decreasing λ path with warm starts.
///
/// Non-convergence at a λ is flagged in [`PathFit::converged`] rather than
/// returned as an error.
pub fn fit_path(ed: &ExpandedDesign, y: ArrayView1<'_, f64>, gs: &GroupStructure, cfg: &FitConfig) -> Result<PathFit> {
    cfg.validate()?;
    validate_response(cfg.family, y, ed.n())?;
    if gs.latent_dim() != ed.latent_dim() {
        return Err(Error::Dimension("group structure does not match expanded design".into()));
    }
    let wd = WorkingDesign::new(ed, gs.weights(), cfg.standardize)?;
    fit_working(&wd, y, gs, cfg)
}

pub(crate) fn fit_working(
    wd: &WorkingDesign,
    y: ArrayView1<'_, f64>,
    gs: &GroupStructure,
    cfg: &FitConfig,
) -> Result<PathFit> {
    let lambda_max = lambda_max_working(wd, cfg.family, y);
    let lambdas = match &cfg.lambda {
        LambdaPath::Explicit(l) => l.clone(),
        LambdaPath::Auto { count, min_ratio } => {
            if !(lambda_max > 0.0) {
                return Err(Error::Numerical("lambda_max is zero: the response is orthogonal to every group".into()));
            }
            let ratio = min_ratio.unwrap_or(if wd.n >= wd.latent_dim() { 1e-3 } else { 0.05 });
            auto_lambdas(lambda_max, *count, ratio)
        }
    };

    let mut state = Descent::new(wd, y, cfg.family);
    let mut fit = PathFit {
        family: cfg.family,
        standardized: cfg.standardize,
        lambda_max,
        lambdas: Vec::with_capacity(lambdas.len()),
        coefficients: Vec::with_capacity(lambdas.len()),
        loss_values: Vec::with_capacity(lambdas.len()),
        converged: Vec::with_capacity(lambdas.len()),
        saturated: Vec::with_capacity(lambdas.len()),
        iterations: Vec::with_capacity(lambdas.len()),
        entry_order: Vec::new(),
        objective_traces: Vec::new(),
    };
    let mut entered = vec![false; gs.n_groups()];

    for &lambda in &lambdas {
        let mut trace = Vec::new();
        if cfg.record_trace {
            trace.push(state.objective(lambda));
        }
        let mut iters = 0;
        // At or above λ_max the null model is the exact solution; descending
        // from it would only add rounding noise.
        let mut converged = lambda >= lambda_max && state.is_null();
        // Full sweeps decide convergence; in between, only the nonzero
        // blocks are cycled until they settle.
        'outer: while !converged && iters < cfg.max_iters {
            let change = state.cycle(lambda, None);
            iters += 1;
            if cfg.record_trace {
                trace.push(state.objective(lambda));
            }
            if change < cfg.tol && state.kkt_violation(lambda) <= cfg.kkt_tol {
                converged = true;
                break;
            }
            let active: Vec<bool> = state.theta.iter().map(|t| t.iter().any(|&v| v != 0.0)).collect();
            while iters < cfg.max_iters {
                let change = state.cycle(lambda, Some(&active));
                iters += 1;
                if cfg.record_trace {
                    trace.push(state.objective(lambda));
                }
                if change < cfg.tol {
                    continue 'outer;
                }
            }
        }
        if !converged {
            warn!("no convergence at lambda = {lambda:.6e} after {iters} cycles");
        }
        let saturated = cfg.family == Family::Logistic && state.eta.iter().any(|e| e.abs() > SATURATION_ETA);

        let lc = wd.unstandardize(state.intercept, &state.theta);
        let norms = group_norms(&lc, gs)?;
        let mut fresh: Vec<usize> = selected_groups(&norms)
            .into_iter()
            .enumerate()
            .filter(|&(j, sel)| sel && !entered[j])
            .map(|(j, _)| j)
            .collect();
        fresh.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]).then(a.cmp(&b)));
        for &j in &fresh {
            entered[j] = true;
        }
        fit.entry_order.extend(fresh);

        fit.lambdas.push(lambda);
        fit.loss_values.push(loss::loss(cfg.family, y, state.eta.view()));
        fit.coefficients.push(lc);
        fit.converged.push(converged);
        fit.saturated.push(saturated);
        fit.iterations.push(iters);
        if cfg.record_trace {
            fit.objective_traces.push(trace);
        }
        if cfg.stop_after_entries.is_some_and(|m| fit.entry_order.len() >= m) {
            break;
        }
    }
    Ok(fit)
}
