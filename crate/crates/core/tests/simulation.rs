use std::path::Path;

use ndarray::{Array1, Array2};
use oglasso::io::{write_expression, write_gmt, GmtSet};
use oglasso::simulate::{
    gen_logistic_response, gen_setting1, replicate_data, run_experiment, setting4_effects, setting5_design,
    ExternalDesign, Method, Setting, SimConfig, TRUE_GROUPS,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn group_layouts() {
    let s1 = Setting::S1.group_structure().unwrap();
    assert_eq!((s1.p(), s1.n_groups()), (135, 15));
    assert!(s1.groups().iter().all(|g| g.len() == 10));
    let s3 = Setting::S3.group_structure().unwrap();
    assert_eq!((s3.p(), s3.n_groups()), (152, 15));
    let sizes: Vec<usize> = TRUE_GROUPS.iter().map(|&j| s3.group(j).len()).collect();
    assert_eq!(sizes, vec![3, 6, 9, 15, 24]);
    // The first two groups of a triple overlap; the third and other triples are disjoint.
    let shared = |a: usize, b: usize| s3.group(a).members.iter().filter(|k| s3.group(b).members.contains(k)).count();
    assert_eq!(shared(9, 10), 5);
    assert_eq!(shared(10, 11), 0);
    assert_eq!(shared(9, 11), 0);
    assert_eq!(shared(8, 9), 0);
}

#[test]
fn equal_effects_collapse_over_overlaps() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let sim = gen_setting1(20, 5.0, &mut rng);
    let unit = 5.0 / 10f64.sqrt();
    for (k, &b) in sim.beta.iter().enumerate() {
        let in_truth = TRUE_GROUPS.iter().any(|&j| sim.gs.group(j).members.contains(&k));
        assert_eq!(b, if in_truth { unit } else { 0.0 });
    }
    let ranges = sim.gs.latent_ranges();
    for &j in &TRUE_GROUPS {
        let norm: f64 = sim.gamma.gamma.slice(ndarray::s![ranges[j].clone()]).iter().map(|v| v * v).sum();
        assert!((norm.sqrt() - 5.0).abs() < 1e-12);
    }
}

#[test]
fn heterogeneous_effects_keep_mean_squared_norm() {
    let gs = Setting::S4.group_structure().unwrap();
    let ranges = gs.latent_ranges();
    let (effect, sigma) = (5.0, 2.0);
    let mu = (effect * effect / 10.0 - sigma * sigma / 3.0f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut sq, mut draws, mut norms, mut redraws) = (0.0, 0usize, 0.0, 0usize);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for _ in 0..20_000 {
        let lc = setting4_effects(&gs, effect, sigma, &mut rng).unwrap();
        for &j in &TRUE_GROUPS {
            let block = lc.gamma.slice(ndarray::s![ranges[j].clone()]);
            for &v in block {
                sq += v * v;
                lo = lo.min(v);
                hi = hi.max(v);
            }
            draws += block.len();
            norms += block.iter().map(|v| v * v).sum::<f64>();
            redraws += 1;
        }
    }
    assert!(draws >= 1_000_000);
    let second_moment = sq / draws as f64;
    assert!((second_moment / (effect * effect / 10.0) - 1.0).abs() < 0.005);
    assert!((norms / redraws as f64 / (effect * effect) - 1.0).abs() < 0.01);
    assert!(lo >= mu - sigma && hi <= mu + sigma);
    assert!(setting4_effects(&gs, effect, 2.8, &mut rng).is_err());
}

#[test]
fn correlated_blocks_have_target_covariance() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 100_000;
    let x = setting5_design(n, 0.5, &mut rng).unwrap();
    let cov = |a: usize, b: usize| x.column(a).dot(&x.column(b)) / n as f64;
    for (a, b) in [(0, 1), (5, 26), (27, 40), (108, 134)] {
        assert!((cov(a, b) - 0.5).abs() < 0.01, "cov({a},{b}) = {}", cov(a, b));
    }
    for a in [0, 30, 134] {
        assert!((cov(a, a) - 1.0).abs() < 0.02);
    }
    for (a, b) in [(0, 27), (26, 27), (60, 120)] {
        assert!(cov(a, b).abs() < 0.01);
    }
    assert!(setting5_design(5, 1.0, &mut rng).is_err());
}

#[test]
fn logistic_response_rate() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let n = 100_000;
    let x = Array2::from_elem((n, 1), 1.0);
    let y = gen_logistic_response(x.view(), Array1::from_elem(1, 1.0).view(), 0.0, &mut rng);
    let rate = y.sum() / n as f64;
    assert!((rate - 1.0 / (1.0 + (-1.0f64).exp())).abs() < 0.005, "rate {rate}");
    assert!(y.iter().all(|&v| v == 0.0 || v == 1.0));
}

#[test]
fn replications_use_independent_streams() {
    let cfg = SimConfig { setting: Setting::S1, seed: 9, ..SimConfig::default() };
    let layout = cfg.layout().unwrap();
    assert!(layout.design.is_none());
    let (a, ya, _, _) = replicate_data(&cfg, &layout, 0).unwrap();
    let (a2, ya2, _, _) = replicate_data(&cfg, &layout, 0).unwrap();
    let (b, _, _, _) = replicate_data(&cfg, &layout, 1).unwrap();
    assert_eq!(a.x, a2.x);
    assert_eq!(ya, ya2);
    assert_ne!(a.x, b.x);

    let fixed = SimConfig { redraw_design: false, ..cfg };
    let layout = fixed.layout().unwrap();
    let (c, yc, _, _) = replicate_data(&fixed, &layout, 0).unwrap();
    let (d, yd, _, _) = replicate_data(&fixed, &layout, 1).unwrap();
    assert_eq!(c.x, d.x);
    assert_ne!(yc, yd);
}

/// Writes an S1 design with its groups as expression and GMT files, plus one
/// gene outside every set and one set member missing from the design.
fn external_files(dir: &Path) -> ExternalDesign {
    let mut rng = ChaCha8Rng::seed_from_u64(30);
    let sim = gen_setting1(40, 5.0, &mut rng);
    let p = sim.x.ncols();
    let mut x = Array2::zeros((40, p + 1));
    x.slice_mut(ndarray::s![.., ..p]).assign(&sim.x);
    x.column_mut(p).fill(1.0);
    let samples: Vec<String> = (0..40).map(|i| format!("s{i}")).collect();
    let genes: Vec<String> = (0..=p).map(|k| format!("g{k}")).collect();
    let mut sets: Vec<GmtSet> = sim
        .gs
        .groups()
        .iter()
        .map(|g| GmtSet {
            name: g.name.clone(),
            description: String::new(),
            genes: g.members.iter().map(|&k| genes[k].clone()).collect(),
        })
        .collect();
    sets[2].genes.push("not_measured".into());
    let design = dir.join("design.csv");
    let gmt = dir.join("sets.gmt");
    write_expression(&design, &samples, &genes, x.view()).unwrap();
    write_gmt(&gmt, &sets).unwrap();
    let true_groups = ["G1", "G4", "G7", "G10", "G13"].map(String::from).to_vec();
    ExternalDesign { design, sets: gmt, true_groups }
}

#[test]
fn external_design_is_fixed_and_restricted_to_grouped_genes() {
    let dir = tempfile::tempdir().unwrap();
    let ext = external_files(dir.path());
    let cfg = SimConfig {
        setting: Setting::External,
        external: Some(ext.clone()),
        n_reps: 3,
        n_perm: 20,
        seed: 4,
        ..SimConfig::default()
    };
    let layout = cfg.layout().unwrap();
    assert_eq!(layout.gs.p(), 135);
    assert_eq!(layout.gs.n_groups(), 15);
    assert_eq!(layout.truth, TRUE_GROUPS.to_vec());
    let (a, _, _, _) = replicate_data(&cfg, &layout, 0).unwrap();
    let (b, _, _, _) = replicate_data(&cfg, &layout, 1).unwrap();
    assert_eq!(a.x, b.x);
    assert_eq!(a.x.dim(), (40, 135));
    let res = run_experiment(&cfg).unwrap();
    assert_eq!(res.config.n, Some(40));
    assert!(res.records.iter().all(|r| r.error.is_none()));

    let bad_truth = ExternalDesign { true_groups: vec!["G99".into()], ..ext.clone() };
    let cfg_bad = SimConfig { external: Some(bad_truth), ..cfg.clone() };
    assert!(run_experiment(&cfg_bad).is_err());
    let wrong_n = SimConfig { n: Some(41), ..cfg.clone() };
    assert!(run_experiment(&wrong_n).is_err());
    let missing = SimConfig { external: None, ..cfg.clone() };
    assert!(run_experiment(&missing).is_err());
    let misplaced = SimConfig { setting: Setting::S1, ..cfg };
    assert!(run_experiment(&misplaced).is_err());
}

fn small_config() -> SimConfig {
    SimConfig { setting: Setting::S3, n_reps: 6, seed: 21, n_perm: 50, ..SimConfig::default() }
}

#[test]
fn experiments_are_deterministic_across_thread_counts() {
    let cfg = small_config();
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
    let a = one.install(|| run_experiment(&cfg).unwrap());
    let b = four.install(|| run_experiment(&cfg).unwrap());
    assert_eq!(a, b);
    assert_eq!(a.records.len(), 12);
    assert!(a.records.iter().all(|r| r.error.is_none()));
    assert_eq!(a.summary_rows(), b.summary_rows());
    assert_eq!(a.frequency_rows(), b.frequency_rows());
}

#[test]
fn single_group_selection_is_usually_true() {
    let cfg = SimConfig {
        setting: Setting::S1,
        n_reps: 20,
        seed: 5,
        top_m: 1,
        methods: vec![Method::Oglasso],
        ..SimConfig::default()
    };
    let res = run_experiment(&cfg).unwrap();
    let tdr = res.mean(Method::Oglasso, "tdr").unwrap();
    assert!(tdr >= 0.7, "first entering group true in only {tdr} of replications");
    assert!(res.records.iter().all(|r| r.selected.len() == 1));
}

#[test]
fn invalid_configs_are_rejected() {
    let bad = [
        SimConfig { n_reps: 0, ..SimConfig::default() },
        SimConfig { methods: vec![Method::Lasso], ..SimConfig::default() },
        SimConfig { setting: Setting::S4, sigma: 10.0, ..SimConfig::default() },
        SimConfig { setting: Setting::S5, rho: 1.0, ..SimConfig::default() },
        SimConfig { top_m: 0, ..SimConfig::default() },
    ];
    for cfg in bad {
        assert!(run_experiment(&cfg).is_err());
    }
}

#[test]
fn config_parses_with_defaults() {
    let cfg: SimConfig = serde_json::from_str(r#"{"setting": "S4", "sigma": 1.0, "methods": ["oglasso"]}"#).unwrap();
    assert_eq!(cfg.n(), 100);
    assert_eq!(cfg.n_reps, 100);
    assert!(serde_json::from_str::<SimConfig>(r#"{"settng": "S4"}"#).is_err());
}
