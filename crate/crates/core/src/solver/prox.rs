use ndarray::{Array1, ArrayView1};

/// Block soft-thresholding, the proximal map of `t‖·‖₂`:
/// `max(0, 1 − t/‖z‖) z`, exactly zero when `‖z‖ ≤ t`.
pub fn group_soft_threshold(z: ArrayView1<'_, f64>, t: f64) -> Array1<f64> {
    debug_assert!(t >= 0.0);
    let norm = z.dot(&z).sqrt();
    if norm <= t {
        return Array1::zeros(z.len());
    }
    let shrink = 1.0 - t / norm;
    z.mapv(|v| v * shrink)
}

/// Scalar soft-thresholding `sign(z) max(|z| − t, 0)`.
pub fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn no_shrinkage_at_zero_threshold() {
        assert_eq!(group_soft_threshold(array![3.0, 4.0].view(), 0.0), array![3.0, 4.0]);
    }

    #[test]
    fn zero_at_boundary() {
        assert_eq!(group_soft_threshold(array![3.0, 4.0].view(), 5.0), array![0.0, 0.0]);
    }

    #[test]
    fn half_shrinkage() {
        // max(0, 1 - 2.5/5) = 0.5
        let out = group_soft_threshold(array![3.0, 4.0].view(), 2.5);
        assert!((out[0] - 1.5).abs() < 1e-15 && (out[1] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn scalar_matches_block_of_one() {
        for &(z, t) in &[(2.0, 0.5), (-2.0, 0.5), (0.3, 0.5), (-0.3, 0.0)] {
            assert_eq!(soft_threshold(z, t), group_soft_threshold(array![z].view(), t)[0]);
        }
    }

    proptest! {
        // The prox output minimizes ½‖u − z‖² + t‖u‖: check against random competitors.
        #[test]
        fn prox_is_minimizer(z in prop::collection::vec(-5.0f64..5.0, 1..6), t in 0.0f64..6.0,
                             d in prop::collection::vec(-0.5f64..0.5, 6)) {
            let z = Array1::from(z);
            let u = group_soft_threshold(z.view(), t);
            let obj = |u: &Array1<f64>| 0.5 * (u - &z).mapv(|v| v * v).sum() + t * u.dot(u).sqrt();
            let cand = &u + &Array1::from(d[..z.len()].to_vec());
            prop_assert!(obj(&u) <= obj(&cand) + 1e-12);
            prop_assert!(u.dot(&u).sqrt() <= z.dot(&z).sqrt() + 1e-12);
        }
    }
}
