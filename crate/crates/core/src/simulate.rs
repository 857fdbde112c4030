//! Synthetic pathway designs and replicated method comparisons.
//!
//! Every setting is built from five "triples" of groups. In each triple the
//! first two groups share a few predictors and the third is disjoint; the
//! first group of each triple (groups 1, 4, 7, 10, 13) is truly active.
//! Responses follow a logistic model with zero intercept.
//!
//! The external setting takes the design and gene sets from files instead and
//! keeps the design fixed across replications.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gsea::{gsea_select_indices, permutation_test, GeneSet, GseaConfig, RankingMetric, SelectionRule};
use crate::io::{self, fmt_f64};
use crate::metrics::{misclassification_error, rmse, select_top_groups_oglasso, tdr};
use crate::model::{ExpandedDesign, GroupStructure, LatentCoefficients};
use crate::solver::{check_kkt, cross_validate, fit_path, sigmoid, FitConfig, LambdaPath, PathFit};

/// Indices of the active groups (the first of every triple).
pub const TRUE_GROUPS: [usize; 5] = [0, 3, 6, 9, 12];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Setting {
    /// 15 groups of 10, overlap 3, i.i.d. N(0,1) design.
    S1,
    /// Unequal sizes 3…24 with overlaps 1, 2, 3, 5, 8.
    S3,
    /// Setting 1 design with heterogeneous uniform effects.
    S4,
    /// Setting 1 groups with compound-symmetric correlated blocks.
    S5,
    /// Design and gene sets read from files (see [`ExternalDesign`]).
    #[serde(alias = "S2")]
    External,
}

impl Setting {
    pub fn default_n(self) -> usize {
        match self {
            Setting::S1 => 50,
            Setting::External => 0,
            _ => 100,
        }
    }

    /// `(size, overlap)` for each of the five triples.
    fn triples(self) -> [(usize, usize); 5] {
        match self {
            Setting::S3 => [(3, 1), (6, 2), (9, 3), (15, 5), (24, 8)],
            _ => [(10, 3); 5],
        }
    }

    /// Built-in groups of a synthetic setting; the external setting has none.
    pub fn group_structure(self) -> Result<GroupStructure> {
        if self == Setting::External {
            return Err(Error::Config("the external setting takes its groups from the `external` files".into()));
        }
        let mut groups = Vec::with_capacity(15);
        let mut start = 0;
        for (size, overlap) in self.triples() {
            let b = start + size - overlap;
            let c = b + size;
            groups.push((start..start + size).collect::<Vec<_>>());
            groups.push((b..b + size).collect());
            groups.push((c..c + size).collect());
            start = c + size;
        }
        let p = start;
        Ok(GroupStructure::new(p, groups.into_iter().enumerate().map(|(j, g)| (format!("G{}", j + 1), g)))
            .expect("built-in group structure is valid"))
    }
}

impl FromStr for Setting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().trim_start_matches("setting").trim_start_matches(['_', ' ']) {
            "s1" | "1" => Ok(Setting::S1),
            "s3" | "3" => Ok(Setting::S3),
            "s4" | "4" => Ok(Setting::S4),
            "s5" | "5" => Ok(Setting::S5),
            "external" | "s2" | "2" => Ok(Setting::External),
            _ => Err(Error::Config(format!("unknown setting `{s}` (expected S1, S3, S4, S5 or external)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Oglasso,
    Lasso,
    Gsea,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Oglasso => "oglasso",
            Method::Lasso => "lasso",
            Method::Gsea => "gsea",
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "oglasso" => Ok(Method::Oglasso),
            "lasso" => Ok(Method::Lasso),
            "gsea" => Ok(Method::Gsea),
            _ => Err(Error::Config(format!("unknown method `{s}`"))),
        }
    }
}

/// Files for the external setting.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalDesign {
    /// Samples × genes CSV in the expression format; values are used as given.
    pub design: PathBuf,
    /// GMT gene sets. Genes outside every set are dropped.
    pub sets: PathBuf,
    /// Names of the truly active sets.
    pub true_groups: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub setting: Setting,
    /// Sample size; the setting's default when absent.
    pub n: Option<usize>,
    /// Target ‖γ^j‖ of every true group (root mean square for S4).
    pub group_effect: f64,
    /// Effect heterogeneity (S4).
    pub sigma: f64,
    /// Within-block correlation (S5).
    pub rho: f64,
    pub n_reps: usize,
    pub seed: u64,
    pub methods: Vec<Method>,
    /// Groups selected per method for TDR.
    pub top_m: usize,
    pub n_perm: usize,
    pub alpha: f64,
    pub metric: RankingMetric,
    /// Folds for choosing λ by held-out deviance; needed for RMSE and ME.
    pub cv_folds: Option<usize>,
    pub n_lambda: usize,
    /// Draw a fresh design every replication (otherwise one design is shared).
    pub redraw_design: bool,
    /// Audit every converged λ of the full-data fits.
    pub audit_kkt: bool,
    /// Required by, and only used with, the external setting.
    pub external: Option<ExternalDesign>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            setting: Setting::S3,
            n: None,
            group_effect: 5.0,
            sigma: 0.0,
            rho: 0.0,
            n_reps: 100,
            seed: 0,
            methods: vec![Method::Oglasso, Method::Gsea],
            top_m: 5,
            n_perm: 1000,
            alpha: 1.0,
            metric: RankingMetric::Pearson,
            cv_folds: None,
            n_lambda: 100,
            redraw_design: true,
            audit_kkt: false,
            external: None,
        }
    }
}

impl SimConfig {
    pub fn n(&self) -> usize {
        self.n.unwrap_or(self.setting.default_n())
    }

    /// Largest σ keeping `μ² = effect²/K − σ²/3` non-negative.
    pub fn sigma_max(&self) -> f64 {
        (3.0 * self.group_effect * self.group_effect / 10.0).sqrt()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_reps == 0 {
            return Err(Error::Config("n_reps must be at least 1".into()));
        }
        match (self.setting, &self.external) {
            (Setting::External, None) => {
                return Err(Error::Config("the external setting needs `external` design and set files".into()))
            }
            (Setting::External, Some(ext)) if ext.true_groups.is_empty() => {
                return Err(Error::Config("the external setting needs at least one true group".into()))
            }
            (Setting::External, Some(_)) => {}
            (_, Some(_)) => return Err(Error::Config("`external` files only apply to the external setting".into())),
            (_, None) => {}
        }
        if self.setting != Setting::External && self.n() < 4 {
            return Err(Error::Config("sample size must be at least 4".into()));
        }
        if !(self.group_effect > 0.0 && self.group_effect.is_finite()) {
            return Err(Error::Config(format!("group_effect must be positive, got {}", self.group_effect)));
        }
        if self.setting == Setting::S4 && !(self.sigma >= 0.0 && self.sigma <= self.sigma_max()) {
            return Err(Error::Config(format!(
                "sigma must lie in [0, {:.6}] for group effect {}, got {}",
                self.sigma_max(),
                self.group_effect,
                self.sigma
            )));
        }
        if self.setting == Setting::S5 && !(self.rho >= 0.0 && self.rho < 1.0) {
            return Err(Error::Config(format!("rho must lie in [0, 1), got {}", self.rho)));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("no methods requested".into()));
        }
        if self.methods.contains(&Method::Lasso) && self.cv_folds.is_none() {
            return Err(Error::Config("the lasso comparison needs cv_folds".into()));
        }
        if self.methods.contains(&Method::Gsea) && self.n_perm == 0 {
            return Err(Error::Config("n_perm must be at least 1".into()));
        }
        if self.top_m == 0 {
            return Err(Error::Config("top_m must be at least 1".into()));
        }
        if self.n_lambda == 0 {
            return Err(Error::Config("n_lambda must be at least 1".into()));
        }
        Ok(())
    }
}

/// Groups, active groups and (when fixed) the design of an experiment.
#[derive(Clone, Debug)]
pub struct Layout {
    pub gs: GroupStructure,
    pub truth: Vec<usize>,
    /// Shared by every replication when present.
    pub design: Option<Array2<f64>>,
}

impl SimConfig {
    /// Resolves the groups and truth, loading the external files or drawing
    /// the shared design (stream `u64::MAX`) when the design is not redrawn.
    pub fn layout(&self) -> Result<Layout> {
        if self.setting == Setting::External {
            let ext = self
                .external
                .as_ref()
                .ok_or_else(|| Error::Config("the external setting needs `external` design and set files".into()))?;
            let layout = load_external(ext)?;
            if let Some(n) = self.n {
                let rows = layout.design.as_ref().map_or(0, |x| x.nrows());
                if n != rows {
                    return Err(Error::Dimension(format!("config gives n = {n} but the design has {rows} rows")));
                }
            }
            return Ok(layout);
        }
        let gs = self.setting.group_structure()?;
        let design = if self.redraw_design {
            None
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
            rng.set_stream(u64::MAX);
            Some(design_for(self, gs.p(), &mut rng)?)
        };
        Ok(Layout { gs, truth: TRUE_GROUPS.to_vec(), design })
    }
}

fn load_external(ext: &ExternalDesign) -> Result<Layout> {
    let expr = io::read_expression(&ext.design)?;
    let gmt = io::read_gmt(&ext.sets)?;
    let mut sets = io::resolve_sets(&gmt, &expr.genes).sets;
    if sets.is_empty() {
        return Err(Error::Dimension("no gene set shares a gene with the design".into()));
    }
    let keep = io::restrict_to_grouped(&mut sets);
    let gs = GroupStructure::new(keep.len(), sets)?;
    let mut truth = ext
        .true_groups
        .iter()
        .map(|name| {
            gs.index_of(name).ok_or_else(|| Error::Config(format!("true group `{name}` is not a usable gene set")))
        })
        .collect::<Result<Vec<_>>>()?;
    truth.sort_unstable();
    truth.dedup();
    Ok(Layout { gs, truth, design: Some(expr.x.select(Axis(1), &keep)) })
}

/// One simulated data set and its truth.
#[derive(Clone, Debug)]
pub struct SimData {
    pub x: Array2<f64>,
    pub gs: GroupStructure,
    pub gamma: LatentCoefficients,
    pub beta: Array1<f64>,
    pub truth: Vec<usize>,
}

/// `β_k = Σ_j γ^j_k`.
pub fn collapse_latent(gs: &GroupStructure, gamma: &LatentCoefficients) -> Array1<f64> {
    let mut beta = Array1::zeros(gs.p());
    let mut pos = 0;
    for g in gs.groups() {
        for &k in &g.members {
            beta[k] += gamma.gamma[pos];
            pos += 1;
        }
    }
    beta
}

fn equal_effects(gs: &GroupStructure, truth: &[usize], effect: f64) -> LatentCoefficients {
    let mut lc = LatentCoefficients::zeros(gs.latent_dim());
    let ranges = gs.latent_ranges();
    for &j in truth {
        let k = gs.group(j).len() as f64;
        lc.gamma.slice_mut(ndarray::s![ranges[j].clone()]).fill(effect / k.sqrt());
    }
    lc
}

fn gaussian_design<R: Rng>(n: usize, p: usize, rng: &mut R) -> Array2<f64> {
    Array2::from_shape_fn((n, p), |_| StandardNormal.sample(rng))
}

fn data(x: Array2<f64>, gs: GroupStructure, gamma: LatentCoefficients, truth: Vec<usize>) -> SimData {
    let beta = collapse_latent(&gs, &gamma);
    SimData { x, gs, gamma, beta, truth }
}

fn builtin(setting: Setting) -> GroupStructure {
    setting.group_structure().expect("synthetic setting")
}

pub fn gen_setting1<R: Rng>(n: usize, effect: f64, rng: &mut R) -> SimData {
    let gs = builtin(Setting::S1);
    let x = gaussian_design(n, gs.p(), rng);
    let gamma = equal_effects(&gs, &TRUE_GROUPS, effect);
    data(x, gs, gamma, TRUE_GROUPS.to_vec())
}

pub fn gen_setting3<R: Rng>(n: usize, effect: f64, rng: &mut R) -> SimData {
    let gs = builtin(Setting::S3);
    let x = gaussian_design(n, gs.p(), rng);
    let gamma = equal_effects(&gs, &TRUE_GROUPS, effect);
    data(x, gs, gamma, TRUE_GROUPS.to_vec())
}

/// Uniform latent effects on `[μ − σ, μ + σ]` with `μ = √(effect²/K − σ²/3)`,
/// so that `E‖γ^j‖² = effect²`.
pub fn setting4_effects<R: Rng>(
    gs: &GroupStructure,
    effect: f64,
    sigma: f64,
    rng: &mut R,
) -> Result<LatentCoefficients> {
    let mut lc = LatentCoefficients::zeros(gs.latent_dim());
    let ranges = gs.latent_ranges();
    for &j in &TRUE_GROUPS {
        let k = gs.group(j).len() as f64;
        let mu2 = effect * effect / k - sigma * sigma / 3.0;
        if mu2 < -1e-12 || sigma < 0.0 {
            return Err(Error::Config(format!("sigma {sigma} too large for group effect {effect}")));
        }
        let mu = mu2.max(0.0).sqrt();
        for i in ranges[j].clone() {
            lc.gamma[i] = if sigma > 0.0 {
                Uniform::new_inclusive(mu - sigma, mu + sigma).map_err(|e| Error::Config(e.to_string()))?.sample(rng)
            } else {
                mu
            };
        }
    }
    Ok(lc)
}

pub fn gen_setting4<R: Rng>(n: usize, effect: f64, sigma: f64, rng: &mut R) -> Result<SimData> {
    let gs = builtin(Setting::S4);
    let x = gaussian_design(n, gs.p(), rng);
    let gamma = setting4_effects(&gs, effect, sigma, rng)?;
    Ok(data(x, gs, gamma, TRUE_GROUPS.to_vec()))
}

/// Rows are N(0, Σ) with five 27 × 27 compound-symmetric blocks, drawn as
/// `x = √ρ f + √(1−ρ) z` with one shared factor per block.
pub fn setting5_design<R: Rng>(n: usize, rho: f64, rng: &mut R) -> Result<Array2<f64>> {
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::Config(format!("rho must lie in [0, 1), got {rho}")));
    }
    const BLOCKS: usize = 5;
    const WIDTH: usize = 27;
    let (a, b) = (rho.sqrt(), (1.0 - rho).sqrt());
    let mut x = Array2::zeros((n, BLOCKS * WIDTH));
    for i in 0..n {
        for blk in 0..BLOCKS {
            let f: f64 = StandardNormal.sample(rng);
            for c in 0..WIDTH {
                let z: f64 = StandardNormal.sample(rng);
                x[[i, blk * WIDTH + c]] = a * f + b * z;
            }
        }
    }
    Ok(x)
}

pub fn gen_setting5<R: Rng>(n: usize, effect: f64, rho: f64, rng: &mut R) -> Result<SimData> {
    let gs = builtin(Setting::S5);
    let x = setting5_design(n, rho, rng)?;
    let gamma = equal_effects(&gs, &TRUE_GROUPS, effect);
    Ok(data(x, gs, gamma, TRUE_GROUPS.to_vec()))
}

/// `y_i ~ Bernoulli(σ(b₀ + x_iᵀβ))`.
pub fn gen_logistic_response<R: Rng>(
    x: ArrayView2<'_, f64>,
    beta: ArrayView1<'_, f64>,
    intercept: f64,
    rng: &mut R,
) -> Array1<f64> {
    x.dot(&beta).mapv(|e| if rng.random_bool(sigmoid(intercept + e)) { 1.0 } else { 0.0 })
}

fn design_for<R: Rng>(cfg: &SimConfig, p: usize, rng: &mut R) -> Result<Array2<f64>> {
    match cfg.setting {
        Setting::S5 => setting5_design(cfg.n(), cfg.rho, rng),
        _ => Ok(gaussian_design(cfg.n(), p, rng)),
    }
}

fn effects_for<R: Rng>(cfg: &SimConfig, layout: &Layout, rng: &mut R) -> Result<LatentCoefficients> {
    match cfg.setting {
        Setting::S4 => setting4_effects(&layout.gs, cfg.group_effect, cfg.sigma, rng),
        _ => Ok(equal_effects(&layout.gs, &layout.truth, cfg.group_effect)),
    }
}

/// Generates the data of replication `rep`: design (unless the layout fixes
/// it), effects, training response and an independent test response.
pub fn replicate_data(
    cfg: &SimConfig,
    layout: &Layout,
    rep: usize,
) -> Result<(SimData, Array1<f64>, Array1<f64>, ChaCha8Rng)> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(rep as u64);
    let x = match &layout.design {
        Some(x) => x.clone(),
        None => design_for(cfg, layout.gs.p(), &mut rng)?,
    };
    let gamma = effects_for(cfg, layout, &mut rng)?;
    let sim = data(x, layout.gs.clone(), gamma, layout.truth.clone());
    let y = gen_logistic_response(sim.x.view(), sim.beta.view(), 0.0, &mut rng);
    let y_star = gen_logistic_response(sim.x.view(), sim.beta.view(), 0.0, &mut rng);
    Ok((sim, y, y_star, rng))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepRecord {
    pub rep: usize,
    pub method: Method,
    pub tdr: Option<f64>,
    /// Mean nominal size of the selected groups.
    pub selected_size: Option<f64>,
    pub rmse: Option<f64>,
    pub me: Option<f64>,
    pub selected: Vec<usize>,
    /// Fewer than `top_m` groups became active.
    pub short: bool,
    /// Worst relative KKT violation over converged λ (when audited).
    pub kkt_worst: Option<f64>,
    /// λ values that hit the iteration limit.
    pub unconverged: usize,
    pub error: Option<String>,
}

impl RepRecord {
    fn failed(rep: usize, method: Method, e: &Error) -> Self {
        Self {
            rep,
            method,
            tdr: None,
            selected_size: None,
            rmse: None,
            me: None,
            selected: vec![],
            short: false,
            kkt_worst: None,
            unconverged: 0,
            error: Some(e.to_string()),
        }
    }
}

fn worst_converged_kkt(
    fit: &PathFit,
    ed: &ExpandedDesign,
    y: ArrayView1<'_, f64>,
    gs: &GroupStructure,
    tol: f64,
) -> Result<f64> {
    let report = check_kkt(fit, ed, y, gs, tol)?;
    Ok((0..fit.len()).filter(|&i| fit.converged[i]).map(|i| report.worst_at(i)).fold(0.0, f64::max))
}

fn mean_size(gs: &GroupStructure, selected: &[usize]) -> Option<f64> {
    (!selected.is_empty())
        .then(|| selected.iter().map(|&j| gs.group(j).len() as f64).sum::<f64>() / selected.len() as f64)
}

struct RepInputs<'a> {
    cfg: &'a SimConfig,
    sim: &'a SimData,
    y: &'a Array1<f64>,
    y_star: &'a Array1<f64>,
    fit_seed: u64,
    gsea_seed: u64,
}

fn fit_config(inp: &RepInputs<'_>) -> FitConfig {
    let mut fc = FitConfig::logistic();
    fc.lambda = LambdaPath::Auto { count: inp.cfg.n_lambda, min_ratio: None };
    fc.seed = inp.fit_seed;
    fc
}

fn run_penalized(inp: &RepInputs<'_>, rep: usize, method: Method) -> Result<RepRecord> {
    let cfg = inp.cfg;
    let sim = inp.sim;
    let gs = match method {
        Method::Lasso => GroupStructure::singletons(sim.gs.p())?,
        _ => sim.gs.clone(),
    };
    let ed = ExpandedDesign::new(sim.x.view(), &gs, true)?;
    let mut fc = fit_config(inp);
    let (fit, chosen) = match cfg.cv_folds {
        Some(k) => {
            let cv = cross_validate(&ed, inp.y.view(), &gs, &fc, k)?;
            let lc = cv.selected_coefficients().clone();
            (cv.fit, Some(lc))
        }
        None => {
            fc.stop_after_entries = Some(cfg.top_m);
            (fit_path(&ed, inp.y.view(), &gs, &fc)?, None)
        }
    };
    let kkt_worst =
        if cfg.audit_kkt { Some(worst_converged_kkt(&fit, &ed, inp.y.view(), &gs, fc.kkt_tol)?) } else { None };
    let (rmse_v, me_v) = match &chosen {
        Some(lc) => {
            let (beta_hat, _) = ed.collapse(lc)?;
            (Some(rmse(beta_hat.view(), sim.beta.view())?), Some(misclassification_error(lc, &ed, inp.y_star.view())?))
        }
        None => (None, None),
    };
    let (selected, short, tdr_v, size) = if method == Method::Oglasso {
        let top = select_top_groups_oglasso(&fit, cfg.top_m)?;
        let t = if top.groups.is_empty() { None } else { Some(tdr(&top.groups, &sim.truth)?) };
        let size = mean_size(&gs, &top.groups);
        (top.groups, top.short, t, size)
    } else {
        (vec![], false, None, None)
    };
    Ok(RepRecord {
        rep,
        method,
        tdr: tdr_v,
        selected_size: size,
        rmse: rmse_v,
        me: me_v,
        selected,
        short,
        kkt_worst,
        unconverged: fit.converged.iter().filter(|c| !**c).count(),
        error: None,
    })
}

fn run_gsea(inp: &RepInputs<'_>, rep: usize) -> Result<RepRecord> {
    let cfg = inp.cfg;
    let sets: Vec<GeneSet> =
        inp.sim.gs.groups().iter().map(|g| GeneSet { name: g.name.clone(), members: g.members.clone() }).collect();
    let gcfg = GseaConfig { alpha: cfg.alpha, n_perm: cfg.n_perm, seed: inp.gsea_seed, metric: cfg.metric };
    let results = permutation_test(inp.sim.x.view(), inp.y.view(), &sets, &gcfg)?;
    let selected = gsea_select_indices(&results, SelectionRule::TopM(cfg.top_m))?;
    Ok(RepRecord {
        rep,
        method: Method::Gsea,
        tdr: Some(tdr(&selected, &inp.sim.truth)?),
        selected_size: mean_size(&inp.sim.gs, &selected),
        rmse: None,
        me: None,
        selected,
        short: false,
        kkt_worst: None,
        unconverged: 0,
        error: None,
    })
}

fn run_replication(cfg: &SimConfig, layout: &Layout, rep: usize) -> Vec<RepRecord> {
    let mut methods = cfg.methods.clone();
    methods.sort();
    methods.dedup();
    let (sim, y, y_star, mut rng) = match replicate_data(cfg, layout, rep) {
        Ok(v) => v,
        Err(e) => return methods.iter().map(|&m| RepRecord::failed(rep, m, &e)).collect(),
    };
    let inp = RepInputs { cfg, sim: &sim, y: &y, y_star: &y_star, fit_seed: rng.random(), gsea_seed: rng.random() };
    methods
        .iter()
        .map(|&m| {
            let out = match m {
                Method::Gsea => run_gsea(&inp, rep),
                _ => run_penalized(&inp, rep, m),
            };
            out.unwrap_or_else(|e| RepRecord::failed(rep, m, &e))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatSummary {
    pub statistic: String,
    pub mean: f64,
    /// Sample SD / √count; absent for a single value.
    pub se: Option<f64>,
    pub median: f64,
    pub count: usize,
}

impl StatSummary {
    pub fn from_values(statistic: &str, values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let se = (values.len() > 1).then(|| {
            let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
            (var / n).sqrt()
        });
        Some(Self { statistic: statistic.to_string(), mean, se, median: median(values), count: values.len() })
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub stats: Vec<StatSummary>,
    /// Fraction of successful replications selecting each group; empty for
    /// methods that do not select groups.
    pub frequencies: Vec<f64>,
    pub failures: usize,
    pub short_selections: usize,
}

impl MethodSummary {
    pub fn stat(&self, name: &str) -> Option<&StatSummary> {
        self.stats.iter().find(|s| s.statistic == name)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicationSummary {
    pub config: SimConfig,
    pub group_names: Vec<String>,
    pub group_sizes: Vec<usize>,
    pub truth: Vec<usize>,
    pub methods: Vec<MethodSummary>,
    /// Sorted by (replication, method).
    pub records: Vec<RepRecord>,
}

impl ReplicationSummary {
    pub fn method(&self, m: Method) -> Option<&MethodSummary> {
        self.methods.iter().find(|s| s.method == m)
    }

    pub fn mean(&self, m: Method, stat: &str) -> Option<f64> {
        self.method(m)?.stat(stat).map(|s| s.mean)
    }

    pub fn median(&self, m: Method, stat: &str) -> Option<f64> {
        self.method(m)?.stat(stat).map(|s| s.median)
    }
}

fn summarize(cfg: &SimConfig, layout: &Layout, records: Vec<RepRecord>) -> ReplicationSummary {
    let gs = &layout.gs;
    let mut by_method: BTreeMap<Method, Vec<&RepRecord>> = BTreeMap::new();
    for r in &records {
        by_method.entry(r.method).or_default().push(r);
    }
    let methods = by_method
        .into_iter()
        .map(|(method, recs)| {
            let ok: Vec<&&RepRecord> = recs.iter().filter(|r| r.error.is_none()).collect();
            let collect = |f: fn(&RepRecord) -> Option<f64>| -> Vec<f64> { ok.iter().filter_map(|r| f(r)).collect() };
            let stats = [
                ("tdr", collect(|r| r.tdr)),
                ("selected_size", collect(|r| r.selected_size)),
                ("rmse", collect(|r| r.rmse)),
                ("me", collect(|r| r.me)),
            ]
            .iter()
            .filter_map(|(name, v)| StatSummary::from_values(name, v))
            .collect();
            let selecting: Vec<&&&RepRecord> = ok.iter().filter(|r| !r.selected.is_empty()).collect();
            let frequencies = if selecting.is_empty() {
                vec![]
            } else {
                let mut counts = vec![0usize; gs.n_groups()];
                for r in &selecting {
                    for &j in &r.selected {
                        counts[j] += 1;
                    }
                }
                counts.iter().map(|&c| c as f64 / selecting.len() as f64).collect()
            };
            MethodSummary {
                method,
                stats,
                frequencies,
                failures: recs.len() - ok.len(),
                short_selections: ok.iter().filter(|r| r.short).count(),
            }
        })
        .collect();
    ReplicationSummary {
        config: cfg.clone(),
        group_names: gs.groups().iter().map(|g| g.name.clone()).collect(),
        group_sizes: gs.groups().iter().map(|g| g.len()).collect(),
        truth: layout.truth.clone(),
        methods,
        records,
    }
}

/// Runs all replications (in parallel) and aggregates them. Results do not
/// depend on the number of worker threads.
pub fn run_experiment(cfg: &SimConfig) -> Result<ReplicationSummary> {
    cfg.validate()?;
    let layout = cfg.layout()?;
    let mut cfg = cfg.clone();
    if let (Setting::External, Some(x)) = (cfg.setting, &layout.design) {
        if x.nrows() < 4 {
            return Err(Error::Config("sample size must be at least 4".into()));
        }
        cfg.n = Some(x.nrows());
    }
    if cfg.top_m > layout.gs.n_groups() {
        return Err(Error::Config(format!("top_m must lie in [1, {}], got {}", layout.gs.n_groups(), cfg.top_m)));
    }
    let cfg = &cfg;
    let mut records: Vec<RepRecord> =
        (0..cfg.n_reps).into_par_iter().flat_map_iter(|rep| run_replication(cfg, &layout, rep)).collect();
    records.sort_by(|a, b| a.rep.cmp(&b.rep).then(a.method.cmp(&b.method)));
    Ok(summarize(cfg, &layout, records))
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn setting_columns(cfg: &SimConfig) -> Vec<String> {
    vec![
        format!("{:?}", cfg.setting),
        cfg.n().to_string(),
        fmt_f64(cfg.group_effect),
        if cfg.setting == Setting::S4 { fmt_f64(cfg.sigma) } else { String::new() },
        if cfg.setting == Setting::S5 { fmt_f64(cfg.rho) } else { String::new() },
    ]
}

const SETTING_HEADER: [&str; 5] = ["setting", "n", "group_effect", "sigma", "rho"];

impl ReplicationSummary {
    pub fn summary_header() -> Vec<String> {
        let mut h: Vec<String> = SETTING_HEADER.iter().map(|s| s.to_string()).collect();
        h.extend(["method", "statistic", "mean", "se", "median", "count"].map(String::from));
        h
    }

    /// One row per (method, statistic).
    pub fn summary_rows(&self) -> Vec<Vec<String>> {
        let mut rows = Vec::new();
        for m in &self.methods {
            for s in &m.stats {
                let mut row = setting_columns(&self.config);
                row.extend([
                    m.method.as_str().to_string(),
                    s.statistic.clone(),
                    fmt_f64(s.mean),
                    opt(s.se),
                    fmt_f64(s.median),
                    s.count.to_string(),
                ]);
                rows.push(row);
            }
        }
        rows
    }

    pub fn per_rep_header() -> Vec<String> {
        let mut h: Vec<String> = SETTING_HEADER.iter().map(|s| s.to_string()).collect();
        h.extend(
            [
                "rep",
                "method",
                "tdr",
                "selected_size",
                "rmse",
                "me",
                "selected",
                "short",
                "kkt_worst",
                "unconverged",
                "error",
            ]
            .map(String::from),
        );
        h
    }

    pub fn per_rep_rows(&self) -> Vec<Vec<String>> {
        self.records
            .iter()
            .map(|r| {
                let mut row = setting_columns(&self.config);
                let names: Vec<&str> = r.selected.iter().map(|&j| self.group_names[j].as_str()).collect();
                row.extend([
                    r.rep.to_string(),
                    r.method.as_str().to_string(),
                    opt(r.tdr),
                    opt(r.selected_size),
                    opt(r.rmse),
                    opt(r.me),
                    names.join(";"),
                    r.short.to_string(),
                    opt(r.kkt_worst),
                    r.unconverged.to_string(),
                    r.error.clone().unwrap_or_default(),
                ]);
                row
            })
            .collect()
    }

    pub fn frequency_header() -> Vec<String> {
        let mut h: Vec<String> = SETTING_HEADER.iter().map(|s| s.to_string()).collect();
        h.extend(["method", "group", "size", "true_group", "frequency"].map(String::from));
        h
    }

    pub fn frequency_rows(&self) -> Vec<Vec<String>> {
        let mut rows = Vec::new();
        for m in &self.methods {
            for (j, &f) in m.frequencies.iter().enumerate() {
                let mut row = setting_columns(&self.config);
                row.extend([
                    m.method.as_str().to_string(),
                    self.group_names[j].clone(),
                    self.group_sizes[j].to_string(),
                    self.truth.contains(&j).to_string(),
                    fmt_f64(f),
                ]);
                rows.push(row);
            }
        }
        rows
    }
}
