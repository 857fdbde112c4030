mod common;

use common::{brute_force_es, gaussian};
use ndarray::{Array1, Array2};
use oglasso::gsea::{enrichment_score, permutation_test, rank_genes, GeneSet, GseaConfig, RankedList, RankingMetric};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// All subsets of `0..p` with between 1 and `max_size` elements.
fn subsets(p: usize, max_size: usize) -> Vec<Vec<usize>> {
    (1u32..(1 << p))
        .filter(|mask| (mask.count_ones() as usize) <= max_size)
        .map(|mask| (0..p).filter(|&i| mask & (1 << i) != 0).collect())
        .collect()
}

/// Descending scores, rounded so that ties and zeros occur.
fn descending_scores(p: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut s: Vec<f64> = (0..p).map(|_| (rng.random_range(-2.0f64..2.0) * 4.0).round() / 4.0).collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

fn same_es(ours: f64, reference: f64, running: &[f64]) -> bool {
    if (ours - reference).abs() <= 1e-12 {
        return true;
    }
    // A near tie between the two extremes may resolve either way under rounding.
    let hi = running.iter().copied().fold(0.0f64, f64::max);
    let lo = running.iter().copied().fold(0.0f64, f64::min);
    (hi + lo).abs() <= 1e-12 && (ours + reference).abs() <= 1e-12
}

#[test]
fn es_matches_brute_force_on_small_lists() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut checked = 0;
    for _ in 0..200 {
        for p in 2..=8 {
            let scores = descending_scores(p, &mut rng);
            let rl = RankedList::from_scores(&scores);
            assert_eq!(rl.order, (0..p).collect::<Vec<_>>());
            for members in subsets(p, 3.min(p - 1)) {
                for alpha in [0.0, 1.0, 2.0] {
                    let (reference, ref_running) = brute_force_es(&scores, &members, alpha);
                    let ours = match enrichment_score(&rl, &members, alpha) {
                        Ok(prof) => prof,
                        Err(_) => {
                            assert!(ref_running.iter().any(|v| v.is_nan()), "rejected a set with positive weight");
                            continue;
                        }
                    };
                    assert!(same_es(ours.es, reference, &ref_running), "p={p} S={members:?} α={alpha}");
                    for (a, b) in ours.running.iter().zip(&ref_running) {
                        assert!((a - b).abs() <= 1e-12);
                    }
                    assert_eq!(*ours.running.last().unwrap(), 0.0);
                    assert!(ours.es.abs() <= 1.0);
                    checked += 1;
                }
            }
        }
    }
    assert!(checked > 100_000);
}

#[test]
fn es_unweighted_is_rank_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..200 {
        let p = rng.random_range(5..40);
        let scores: Vec<f64> = (0..p).map(|_| rng.random_range(-3.0..3.0)).collect();
        let transformed: Vec<f64> = scores.iter().map(|s| s * s * s + 2.0 * s - 7.0).collect();
        let m = rng.random_range(1..p);
        let mut members: Vec<usize> = (0..p).collect();
        members.shuffle(&mut rng);
        members.truncate(m);
        let a = enrichment_score(&RankedList::from_scores(&scores), &members, 0.0).unwrap();
        let b = enrichment_score(&RankedList::from_scores(&transformed), &members, 0.0).unwrap();
        assert_eq!(a.es, b.es);
    }
}

#[test]
fn es_extremes() {
    let scores = [4.0, 3.0, 2.0, 1.0, 0.5, -1.0];
    let rl = RankedList::from_scores(&scores);
    assert_eq!(enrichment_score(&rl, &[0, 1], 1.0).unwrap().es, 1.0);
    assert_eq!(enrichment_score(&rl, &[4, 5], 1.0).unwrap().es, -1.0);
    assert!(enrichment_score(&rl, &[], 1.0).is_err());
    assert!(enrichment_score(&rl, &[0, 1, 2, 3, 4, 5], 1.0).is_err());
    assert!(enrichment_score(&rl, &[9], 1.0).is_err());
}

fn toy_data(seed: u64) -> (Array2<f64>, Array1<f64>, Vec<GeneSet>) {
    let (n, p) = (30, 40);
    let mut x = gaussian(n, p, seed);
    let y: Array1<f64> = (0..n).map(|i| (i % 2) as f64).collect();
    for i in 0..n {
        for g in 0..5 {
            x[[i, g]] += 3.0 * y[i];
        }
    }
    let sets = vec![
        GeneSet { name: "up".into(), members: (0..5).collect() },
        GeneSet { name: "mixed".into(), members: vec![3, 10, 20, 30] },
        GeneSet { name: "null".into(), members: (20..32).collect() },
    ];
    (x, y, sets)
}

#[test]
fn permutation_test_reports_observed_es() {
    let (x, y, sets) = toy_data(3);
    let cfg = GseaConfig { n_perm: 200, seed: 9, ..GseaConfig::default() };
    let res = permutation_test(x.view(), y.view(), &sets, &cfg).unwrap();
    let rl = rank_genes(x.view(), y.view(), RankingMetric::Pearson).unwrap();
    for (r, s) in res.iter().zip(&sets) {
        assert_eq!(r.es, enrichment_score(&rl, &s.members, 1.0).unwrap().es);
        assert!((0.0..=1.0).contains(&r.p_nominal));
        assert!((0.0..=1.0).contains(&r.q_fdr));
        assert_eq!(r.es.signum(), r.nes.signum());
    }
    assert!(res[0].es > 0.9);
    assert!(res[0].p_nominal < 0.05);
}

#[test]
fn permutations_are_reproducible() {
    let (x, y, sets) = toy_data(4);
    let cfg = GseaConfig { n_perm: 40, seed: 123, ..GseaConfig::default() };
    let a = permutation_test(x.view(), y.view(), &sets, &cfg).unwrap();
    let b = permutation_test(x.view(), y.view(), &sets, &cfg).unwrap();
    assert_eq!(a, b);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
    let c = pool.install(|| permutation_test(x.view(), y.view(), &sets, &cfg).unwrap());
    assert_eq!(a, c);
    let other = GseaConfig { seed: 124, ..cfg };
    let d = permutation_test(x.view(), y.view(), &sets, &other).unwrap();
    assert_ne!(a, d);
}

#[test]
fn single_permutation_gives_extreme_p() {
    let (x, y, sets) = toy_data(5);
    for seed in 0..10 {
        let cfg = GseaConfig { n_perm: 1, seed, ..GseaConfig::default() };
        for r in permutation_test(x.view(), y.view(), &sets, &cfg).unwrap() {
            assert!(r.p_nominal == 0.0 || r.p_nominal == 1.0);
        }
    }
    let zero = GseaConfig { n_perm: 0, ..GseaConfig::default() };
    assert!(permutation_test(x.view(), y.view(), &sets, &zero).is_err());
}

proptest! {
    #[test]
    fn es_bounded_and_walk_closes(
        raw in prop::collection::vec(-5.0f64..5.0, 3..60),
        pick in prop::collection::vec(any::<bool>(), 60),
        alpha in 0.0f64..3.0,
    ) {
        let p = raw.len();
        let members: Vec<usize> = (0..p).filter(|&i| pick[i]).collect();
        prop_assume!(!members.is_empty() && members.len() < p);
        let prof = enrichment_score(&RankedList::from_scores(&raw), &members, alpha).unwrap();
        prop_assert!(prof.es.abs() <= 1.0);
        prop_assert_eq!(*prof.running.last().unwrap(), 0.0);
        prop_assert!(prof.running.iter().all(|v| v.abs() <= prof.es.abs()));
    }
}
