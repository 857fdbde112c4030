//! Loss functions on a linear predictor.

use ndarray::{Array1, ArrayView1, ArrayView2};

use super::Family;

/// Probabilities are clamped to this distance from 0 and 1.
pub const PROB_CLAMP: f64 = 1e-10;
/// A linear predictor beyond this magnitude marks a fit as saturated.
pub const SATURATION_ETA: f64 = 30.0;

pub fn sigmoid(eta: f64) -> f64 {
    let p = if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    };
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

/// `log(1 + e^η)` without overflow.
fn softplus(eta: f64) -> f64 {
    if eta > 0.0 {
        eta + (-eta).exp().ln_1p()
    } else {
        eta.exp().ln_1p()
    }
}

/// Mean response given the linear predictor.
pub fn mean_response(family: Family, eta: f64) -> f64 {
    match family {
        Family::Linear => eta,
        Family::Logistic => sigmoid(eta),
    }
}

/// `‖y − η‖²/2n` for linear, the scaled negative log-likelihood for logistic.
pub fn loss(family: Family, y: ArrayView1<'_, f64>, eta: ArrayView1<'_, f64>) -> f64 {
    let n = y.len() as f64;
    match family {
        Family::Linear => y.iter().zip(eta).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / (2.0 * n),
        Family::Logistic => y.iter().zip(eta).map(|(&yi, &e)| softplus(e) - yi * e).sum::<f64>() / n,
    }
}

/// `y − μ(η)`; the gradient of the loss with respect to `η` is `−resid/n`.
pub fn response_residual(family: Family, y: ArrayView1<'_, f64>, eta: ArrayView1<'_, f64>) -> Array1<f64> {
    y.iter().zip(eta).map(|(&yi, &e)| yi - mean_response(family, e)).collect()
}

/// Gradient of the loss with respect to the coefficients of `x`.
pub fn gradient(
    family: Family,
    x: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    eta: ArrayView1<'_, f64>,
) -> Array1<f64> {
    let r = response_residual(family, y, eta);
    x.t().dot(&r) / -(y.len() as f64)
}

/// Per-observation deviance contribution used as the CV loss.
pub fn deviance_term(family: Family, y: f64, eta: f64) -> f64 {
    match family {
        Family::Linear => (y - eta) * (y - eta),
        Family::Logistic => {
            let p = sigmoid(eta);
            -2.0 * (y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sigmoid_symmetry_and_clamp() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((sigmoid(2.0) + sigmoid(-2.0) - 1.0).abs() < 1e-15);
        assert_eq!(sigmoid(1e6), 1.0 - PROB_CLAMP);
        assert_eq!(sigmoid(-1e6), PROB_CLAMP);
    }

    #[test]
    fn logistic_loss_at_zero_is_ln2() {
        let y = array![0.0, 1.0, 1.0];
        let eta = Array1::zeros(3);
        assert!((loss(Family::Logistic, y.view(), eta.view()) - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn softplus_large_arguments() {
        assert_eq!(softplus(800.0), 800.0);
        assert!(softplus(-800.0) >= 0.0);
    }

    // Central differences, step 1e-5.
    #[test]
    fn logistic_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let (n, l) = (15, 4);
            let x = Array2::from_shape_fn((n, l), |_| rng.random_range(-1.5..1.5));
            let y: Array1<f64> = (0..n).map(|_| f64::from(rng.random_bool(0.5))).collect();
            let g0: Array1<f64> = (0..l).map(|_| rng.random_range(-1.0..1.0)).collect();
            let f = |g: &Array1<f64>| loss(Family::Logistic, y.view(), x.dot(g).view());
            let analytic = gradient(Family::Logistic, x.view(), y.view(), x.dot(&g0).view());
            let h = 1e-5;
            for k in 0..l {
                let mut up = g0.clone();
                up[k] += h;
                let mut dn = g0.clone();
                dn[k] -= h;
                let fd = (f(&up) - f(&dn)) / (2.0 * h);
                let rel = (fd - analytic[k]).abs() / analytic[k].abs().max(1e-8);
                assert!(rel < 1e-5, "coordinate {k}: fd {fd} analytic {}", analytic[k]);
            }
        }
    }
}
