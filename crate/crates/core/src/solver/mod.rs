//! Group descent for the group lasso on the expanded design.
//!
//! The objective is `L(γ | y, X̃) + λ Σ_j w_j ‖γ^j‖` with squared-error or
//! logistic loss. Blocks are orthonormalized (see [`standardize`]) so each
//! block update is a closed-form group soft-threshold; the logistic loss is
//! handled by majorizing its curvature with the bound 1/4.

mod cv;
mod kkt;
mod loss;
mod path;
mod prox;
pub mod standardize;

use serde::{Deserialize, Serialize};

pub use cv::{cross_validate, fold_assignment, CvResult};
pub use kkt::{check_kkt, KktReport};
pub use loss::{deviance_term, gradient, loss, mean_response, sigmoid, PROB_CLAMP, SATURATION_ETA};
pub use path::{compute_lambda_max, fit_path, objective};
pub use prox::{group_soft_threshold, soft_threshold};
pub use standardize::{standardize_groups, WorkingDesign};

use crate::error::{Error, Result};
use crate::model::LatentCoefficients;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Linear,
    Logistic,
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" | "gaussian" => Ok(Family::Linear),
            "logistic" | "binomial" => Ok(Family::Logistic),
            other => Err(Error::Config(format!("unknown family `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaPath {
    /// Strictly decreasing, positive.
    Explicit(Vec<f64>),
    /// `count` log-spaced values from λ_max down to `min_ratio · λ_max`.
    /// Without a ratio, 0.001 is used when n ≥ L and 0.05 otherwise.
    Auto { count: usize, min_ratio: Option<f64> },
}

impl Default for LambdaPath {
    fn default() -> Self {
        LambdaPath::Auto { count: 100, min_ratio: None }
    }
}

/// How cross-validation picks λ from the mean held-out loss curve.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CvRule {
    /// First λ attaining the minimum.
    #[default]
    MinLoss,
    /// Largest λ whose loss is within one standard error of the minimum.
    OneStandardError,
}

impl std::str::FromStr for CvRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "min" => Ok(CvRule::MinLoss),
            "1se" | "one-se" => Ok(CvRule::OneStandardError),
            other => Err(Error::Config(format!("unknown CV rule `{other}` (expected min or 1se)"))),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FitConfig {
    pub family: Family,
    pub lambda: LambdaPath,
    /// Maximum full cycles per λ.
    pub max_iters: usize,
    /// Convergence threshold on the scaled coefficient change over a cycle.
    pub tol: f64,
    /// Relative KKT tolerance a converged point must meet.
    pub kkt_tol: f64,
    pub standardize: bool,
    /// Stop the path once this many distinct groups have entered.
    pub stop_after_entries: Option<usize>,
    /// Record the objective after every cycle (for diagnostics).
    pub record_trace: bool,
    /// Seed for CV fold assignment.
    pub seed: u64,
    pub cv_rule: CvRule,
}

impl FitConfig {
    pub fn new(family: Family) -> Self {
        Self {
            family,
            lambda: LambdaPath::default(),
            max_iters: 10_000,
            tol: match family {
                Family::Linear => 1e-7,
                Family::Logistic => 1e-6,
            },
            kkt_tol: 1e-4,
            standardize: true,
            stop_after_entries: None,
            record_trace: false,
            seed: 0,
            cv_rule: CvRule::MinLoss,
        }
    }

    pub fn linear() -> Self {
        Self::new(Family::Linear)
    }

    pub fn logistic() -> Self {
        Self::new(Family::Logistic)
    }

    pub fn with_lambdas(mut self, lambdas: Vec<f64>) -> Self {
        self.lambda = LambdaPath::Explicit(lambdas);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return Err(Error::Config(format!("tol must lie in (0, 1), got {}", self.tol)));
        }
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters must be at least 1".into()));
        }
        if !(self.kkt_tol > 0.0) {
            return Err(Error::Config("kkt_tol must be positive".into()));
        }
        match &self.lambda {
            LambdaPath::Explicit(l) => {
                if l.is_empty() {
                    return Err(Error::Config("empty lambda sequence".into()));
                }
                if l.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
                    return Err(Error::Config("lambda values must be positive and finite".into()));
                }
                if l.windows(2).any(|w| w[1] >= w[0]) {
                    return Err(Error::Config("lambda sequence must be strictly decreasing".into()));
                }
            }
            LambdaPath::Auto { count, min_ratio } => {
                if *count == 0 {
                    return Err(Error::Config("lambda count must be at least 1".into()));
                }
                if let Some(r) = min_ratio {
                    if !(*r > 0.0 && *r < 1.0) {
                        return Err(Error::Config(format!("lambda min ratio must lie in (0, 1), got {r}")));
                    }
                }
            }
        }
        if self.stop_after_entries == Some(0) {
            return Err(Error::Config("stop_after_entries must be positive".into()));
        }
        Ok(())
    }
}

/// Solution path over a decreasing λ sequence.
#[derive(Clone, Debug)]
pub struct PathFit {
    pub family: Family,
    pub standardized: bool,
    pub lambda_max: f64,
    pub lambdas: Vec<f64>,
    /// Latent coefficients on the original predictor scale, one per λ.
    pub coefficients: Vec<LatentCoefficients>,
    pub loss_values: Vec<f64>,
    pub converged: Vec<bool>,
    /// Some |linear predictor| exceeded the saturation threshold.
    pub saturated: Vec<bool>,
    pub iterations: Vec<usize>,
    /// Groups in order of first activation along the path.
    pub entry_order: Vec<usize>,
    /// Penalized objective after each cycle, per λ; empty unless requested.
    pub objective_traces: Vec<Vec<f64>>,
}

impl PathFit {
    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }
}
