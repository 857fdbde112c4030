//! Independent reference implementations used by the integration tests.
//! None of these call into the solver or GSEA code they check.
#![allow(dead_code)]

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn gaussian(n: usize, p: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((n, p), |_| StandardNormal.sample(&mut rng))
}

fn sigmoid(e: f64) -> f64 {
    1.0 / (1.0 + (-e).exp())
}

/// Penalized objective on a plain design with contiguous blocks.
pub fn oracle_objective(
    x: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    blocks: &[(usize, usize, f64)],
    logistic: bool,
    intercept: f64,
    gamma: &Array1<f64>,
    lambda: f64,
) -> f64 {
    let n = y.len() as f64;
    let eta = x.dot(gamma) + intercept;
    let loss = if logistic {
        y.iter().zip(&eta).map(|(&yi, &e)| (1.0 + e.exp()).ln() - yi * e).sum::<f64>() / n
    } else {
        y.iter().zip(&eta).map(|(&yi, &e)| (yi - e).powi(2)).sum::<f64>() / (2.0 * n)
    };
    let pen: f64 =
        blocks.iter().map(|&(s, e, w)| w * gamma.slice(ndarray::s![s..e]).mapv(|v| v * v).sum().sqrt()).sum();
    loss + lambda * pen
}

/// Proximal gradient descent with fixed step 1/Lip. `blocks` are
/// (start, end, weight) in column order. Returns (intercept, gamma).
#[allow(clippy::too_many_arguments)]
pub fn prox_gradient(
    x: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    blocks: &[(usize, usize, f64)],
    logistic: bool,
    with_intercept: bool,
    lambda: f64,
    iters: usize,
    warm: Option<(f64, Array1<f64>)>,
) -> (f64, Array1<f64>) {
    let (n, l) = x.dim();
    let nf = n as f64;
    // Lipschitz constant of the loss gradient by power iteration on [1 X]ᵀ[1 X]/n.
    let mut a = Array2::ones((n, l + 1));
    a.slice_mut(ndarray::s![.., 1..]).assign(&x);
    let gram = a.t().dot(&a) / nf;
    let mut v = Array1::from_elem(l + 1, 1.0);
    let mut top = 0.0;
    for _ in 0..500 {
        let w = gram.dot(&v);
        top = w.dot(&w).sqrt();
        v = w / top;
    }
    let lip = if logistic { 0.25 * top } else { top } * 1.01;
    let step = 1.0 / lip;
    let (mut b0, mut g) = warm.unwrap_or((0.0, Array1::zeros(l)));
    for _ in 0..iters {
        let eta = x.dot(&g) + b0;
        let resid: Array1<f64> =
            if logistic { y.iter().zip(&eta).map(|(&yi, &e)| sigmoid(e) - yi).collect() } else { &eta - &y };
        let grad = x.t().dot(&resid) / nf;
        if with_intercept {
            b0 -= step * resid.sum() / nf;
        }
        let mut next = &g - &(grad * step);
        for &(s, e, w) in blocks {
            let mut blk = next.slice_mut(ndarray::s![s..e]);
            let norm = blk.mapv(|u| u * u).sum().sqrt();
            let t = step * lambda * w;
            if norm <= t {
                blk.fill(0.0);
            } else {
                blk *= 1.0 - t / norm;
            }
        }
        let diff = (&next - &g).mapv(f64::abs).fold(0.0, |m: f64, &u| m.max(u));
        g = next;
        if diff < 1e-15 {
            break;
        }
    }
    (b0, g)
}

/// Materializes every running-sum increment and walks the list.
/// `scores` sorted descending, `members` are ranked positions.
pub fn brute_force_es(scores: &[f64], members: &[usize], alpha: f64) -> (f64, Vec<f64>) {
    let p = scores.len();
    let in_set: Vec<bool> = (0..p).map(|i| members.contains(&i)).collect();
    let norm: f64 = members.iter().map(|&i| scores[i].abs().powf(alpha)).sum();
    let miss = 1.0 / (p - members.len()) as f64;
    let increments: Vec<f64> =
        (0..p).map(|i| if in_set[i] { scores[i].abs().powf(alpha) / norm } else { -miss }).collect();
    let mut running = Vec::with_capacity(p);
    let mut s = 0.0;
    for inc in increments {
        s += inc;
        running.push(s);
    }
    let mut es = 0.0f64;
    for &v in &running {
        if v.abs() > es.abs() || (v.abs() == es.abs() && v > es) {
            es = v;
        }
    }
    (es, running)
}
