//! Gene set enrichment analysis with a phenotype-permutation null.
//!
//! Genes are ranked by their association with a binary phenotype; each set is
//! scored by a weighted running sum that steps up by `|r_i|^α / Σ_{S}|r_j|^α` at
//! members and down by `1/(p − |S|)` elsewhere. Significance comes from
//! re-ranking under permuted labels, with normalized scores and FDR q-values
//! computed separately for positive and negative enrichment.

use std::cmp::Ordering;

use log::warn;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Below this many permutations p and q values are coarse.
pub const MIN_RESOLVING_PERMUTATIONS: usize = 100;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankingMetric {
    /// Pearson correlation with the 0/1 phenotype.
    #[default]
    Pearson,
    /// `(μ₁ − μ₀) / (σ₁ + σ₀)` with each σ floored at `0.2|μ|`.
    SignalToNoise,
}

impl std::str::FromStr for RankingMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pearson" | "correlation" => Ok(Self::Pearson),
            "snr" | "signal_to_noise" | "signal-to-noise" => Ok(Self::SignalToNoise),
            other => Err(Error::Config(format!("unknown ranking metric `{other}`"))),
        }
    }
}

/// Genes sorted by descending score (ties by gene index).
#[derive(Clone, Debug, PartialEq)]
pub struct RankedList {
    /// Gene index at each rank.
    pub order: Vec<usize>,
    /// Score at each rank, non-increasing.
    pub scores: Vec<f64>,
}

impl RankedList {
    pub fn from_scores(scores: &[f64]) -> Self {
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        let sorted = order.iter().map(|&g| scores[g]).collect();
        Self { order, scores: sorted }
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// Rank position of every gene.
    pub fn positions(&self) -> Vec<usize> {
        let mut pos = vec![0; self.order.len()];
        for (rank, &g) in self.order.iter().enumerate() {
            pos[g] = rank;
        }
        pos
    }
}

/// Precomputed per-gene quantities so that re-scoring a permuted phenotype is
/// a single matrix-vector product.
struct Scorer<'a> {
    metric: RankingMetric,
    x: ArrayView2<'a, f64>,
    /// Centered, unit-norm columns (zero for constant genes).
    unit: Array2<f64>,
    y_mean: f64,
    y_norm: f64,
}

impl<'a> Scorer<'a> {
    fn new(x: ArrayView2<'a, f64>, y: ArrayView1<'_, f64>, metric: RankingMetric) -> Result<Self> {
        let n = x.nrows();
        if y.len() != n {
            return Err(Error::Dimension(format!("phenotype has {} entries, expression has {n} samples", y.len())));
        }
        if let Some(&v) = y.iter().find(|&&v| v != 0.0 && v != 1.0) {
            return Err(Error::NonBinary(v));
        }
        let ones = y.iter().filter(|&&v| v == 1.0).count();
        if ones == 0 || ones == n {
            return Err(Error::SingleClass);
        }
        let y_mean = ones as f64 / n as f64;
        let y_norm = y.iter().map(|v| (v - y_mean) * (v - y_mean)).sum::<f64>().sqrt();
        let mut unit = Array2::zeros(x.dim());
        if metric == RankingMetric::Pearson {
            for (k, col) in x.columns().into_iter().enumerate() {
                let m = col.mean().unwrap_or(0.0);
                let ss: f64 = col.iter().map(|v| (v - m) * (v - m)).sum();
                if ss > 0.0 {
                    let s = ss.sqrt();
                    unit.column_mut(k).assign(&col.mapv(|v| (v - m) / s));
                }
            }
        }
        Ok(Self { metric, x, unit, y_mean, y_norm })
    }

    fn scores(&self, y: &[f64]) -> Vec<f64> {
        match self.metric {
            RankingMetric::Pearson => {
                let yc: Array1<f64> = y.iter().map(|v| v - self.y_mean).collect();
                self.unit.t().dot(&yc).iter().map(|v| (v / self.y_norm).clamp(-1.0, 1.0)).collect()
            }
            RankingMetric::SignalToNoise => self.x.columns().into_iter().map(|col| signal_to_noise(col, y)).collect(),
        }
    }
}

fn signal_to_noise(col: ArrayView1<'_, f64>, y: &[f64]) -> f64 {
    let (mut s1, mut s0, mut n1, mut n0) = (0.0, 0.0, 0.0, 0.0);
    for (&v, &c) in col.iter().zip(y) {
        if c == 1.0 {
            s1 += v;
            n1 += 1.0;
        } else {
            s0 += v;
            n0 += 1.0;
        }
    }
    let (m1, m0) = (s1 / n1, s0 / n0);
    let (mut v1, mut v0) = (0.0, 0.0);
    for (&v, &c) in col.iter().zip(y) {
        if c == 1.0 {
            v1 += (v - m1) * (v - m1);
        } else {
            v0 += (v - m0) * (v - m0);
        }
    }
    let sd = |ss: f64, cnt: f64| if cnt > 1.0 { (ss / (cnt - 1.0)).sqrt() } else { 0.0 };
    let sd1 = sd(v1, n1).max(0.2 * m1.abs());
    let sd0 = sd(v0, n0).max(0.2 * m0.abs());
    let denom = sd1 + sd0;
    if denom > 0.0 {
        (m1 - m0) / denom
    } else {
        0.0
    }
}

/// Scores every gene column of `x` (samples × genes) against `y` and sorts.
pub fn rank_genes(x: ArrayView2<'_, f64>, y: ArrayView1<'_, f64>, metric: RankingMetric) -> Result<RankedList> {
    let scorer = Scorer::new(x, y, metric)?;
    Ok(RankedList::from_scores(&scorer.scores(&y.to_vec())))
}

#[derive(Clone, Debug, PartialEq)]
pub struct EsProfile {
    pub es: f64,
    /// Running-sum value after each ranked position.
    pub running: Vec<f64>,
}

/// Signed maximum-deviation enrichment score of the genes `members`.
pub fn enrichment_score(rl: &RankedList, members: &[usize], alpha: f64) -> Result<EsProfile> {
    let p = rl.len();
    let positions = rl.positions();
    let mut hits = vec![false; p];
    for &g in members {
        if g >= p {
            return Err(Error::Dimension(format!("gene {g} outside ranked list of {p}")));
        }
        hits[positions[g]] = true;
    }
    let m = hits.iter().filter(|&&h| h).count();
    if m == 0 || m >= p {
        return Err(Error::Config(format!("gene set size {m} must lie in [1, {})", p)));
    }
    let total: f64 = (0..p).filter(|&i| hits[i]).map(|i| rl.scores[i].abs().powf(alpha)).sum();
    if !(total > 0.0) {
        return Err(Error::Numerical("gene set has zero total weight".into()));
    }
    let miss_total = (p - m) as f64;
    let mut running = Vec::with_capacity(p);
    let (mut cum, mut misses) = (0.0, 0usize);
    for (&hit, score) in hits.iter().zip(&rl.scores) {
        if hit {
            cum += score.abs().powf(alpha);
        } else {
            misses += 1;
        }
        running.push(cum / total - misses as f64 / miss_total);
    }
    let es = signed_extreme(running.iter().copied());
    Ok(EsProfile { es, running })
}

/// The value of largest magnitude, positive on ties; 0 for an empty walk.
fn signed_extreme(values: impl Iterator<Item = f64>) -> f64 {
    let (mut hi, mut lo) = (0.0f64, 0.0f64);
    for v in values {
        hi = hi.max(v);
        lo = lo.min(v);
    }
    if hi >= -lo {
        hi
    } else {
        lo
    }
}

/// ES from the sorted rank positions of a set's members, visiting only the
/// points where the running sum can peak. Same arithmetic as
/// [`enrichment_score`], so results agree bit for bit.
fn fast_es(scores_sorted: &[f64], member_positions: &[usize], alpha: f64) -> Option<f64> {
    let p = scores_sorted.len();
    let m = member_positions.len();
    let total: f64 = member_positions.iter().map(|&i| scores_sorted[i].abs().powf(alpha)).sum();
    if !(total > 0.0) {
        return None;
    }
    let miss_total = (p - m) as f64;
    let mut cum = 0.0;
    let candidates = member_positions.iter().enumerate().flat_map(|(h, &pos)| {
        // Misses strictly before this hit.
        let misses = (pos - h) as f64;
        let before = cum / total - misses / miss_total;
        cum += scores_sorted[pos].abs().powf(alpha);
        let after = cum / total - misses / miss_total;
        [before, after]
    });
    Some(signed_extreme(candidates))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneSet {
    pub name: String,
    /// Gene (column) indices.
    pub members: Vec<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GseaConfig {
    pub alpha: f64,
    pub n_perm: usize,
    pub seed: u64,
    pub metric: RankingMetric,
}

impl Default for GseaConfig {
    fn default() -> Self {
        Self { alpha: 1.0, n_perm: 1000, seed: 0, metric: RankingMetric::Pearson }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SetResult {
    pub name: String,
    pub size: usize,
    pub es: f64,
    pub nes: f64,
    pub p_nominal: f64,
    pub q_fdr: f64,
}

/// Warns when `n_perm` limits the resolution of p and q values.
pub fn warn_coarse_permutations(n_perm: usize) {
    if n_perm < MIN_RESOLVING_PERMUTATIONS {
        warn!("{n_perm} permutations give p and q values no finer than {:.3}", 1.0 / n_perm as f64);
    }
}

/// Runs the permutation test for every set.
pub fn permutation_test(
    x: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    sets: &[GeneSet],
    cfg: &GseaConfig,
) -> Result<Vec<SetResult>> {
    if cfg.n_perm == 0 {
        return Err(Error::Config("number of permutations must be at least 1".into()));
    }
    if !(cfg.alpha >= 0.0 && cfg.alpha.is_finite()) {
        return Err(Error::Config(format!("alpha must be a non-negative number, got {}", cfg.alpha)));
    }
    let p = x.ncols();
    for s in sets {
        let mut m = s.members.clone();
        m.sort_unstable();
        m.dedup();
        if m.is_empty() || m.len() >= p || m.last().is_some_and(|&g| g >= p) {
            return Err(Error::Config(format!("gene set `{}` must hold between 1 and {} valid genes", s.name, p - 1)));
        }
    }
    let scorer = Scorer::new(x, y, cfg.metric)?;
    let score_sets = |yv: &[f64]| -> Vec<Option<f64>> {
        let rl = RankedList::from_scores(&scorer.scores(yv));
        let pos = rl.positions();
        sets.iter()
            .map(|s| {
                let mut mp: Vec<usize> = s.members.iter().map(|&g| pos[g]).collect();
                mp.sort_unstable();
                mp.dedup();
                fast_es(&rl.scores, &mp, cfg.alpha)
            })
            .collect()
    };

    let y_obs = y.to_vec();
    let observed = score_sets(&y_obs);
    let null: Vec<Vec<Option<f64>>> = (0..cfg.n_perm)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(b as u64);
            let mut yp = y_obs.clone();
            yp.shuffle(&mut rng);
            score_sets(&yp)
        })
        .collect();

    let n_sets = sets.len();
    let mut es = Vec::with_capacity(n_sets);
    let mut nes = Vec::with_capacity(n_sets);
    let mut p_nominal = Vec::with_capacity(n_sets);
    let mut null_nes: Vec<f64> = Vec::with_capacity(n_sets * cfg.n_perm);
    for (s, set) in sets.iter().enumerate() {
        let obs = observed[s].ok_or_else(|| {
            Error::Numerical(format!("gene set `{}` has zero total weight under alpha = {}", set.name, cfg.alpha))
        })?;
        let draws: Vec<f64> = null.iter().filter_map(|row| row[s]).collect();
        let pos: Vec<f64> = draws.iter().copied().filter(|&v| v >= 0.0).collect();
        let neg: Vec<f64> = draws.iter().copied().filter(|&v| v < 0.0).collect();
        let mean_abs = |v: &[f64]| v.iter().map(|a| a.abs()).sum::<f64>() / v.len() as f64;
        let overall = if draws.is_empty() { 1.0 } else { mean_abs(&draws) };
        let pos_scale = if pos.is_empty() { overall } else { mean_abs(&pos) };
        let neg_scale = if neg.is_empty() { overall } else { mean_abs(&neg) };
        let normalize = |v: f64| if v >= 0.0 { v / pos_scale } else { v / neg_scale };
        let pval = if obs >= 0.0 {
            if pos.is_empty() {
                1.0
            } else {
                pos.iter().filter(|&&v| v >= obs).count() as f64 / pos.len() as f64
            }
        } else if neg.is_empty() {
            1.0
        } else {
            neg.iter().filter(|&&v| v <= obs).count() as f64 / neg.len() as f64
        };
        es.push(obs);
        nes.push(normalize(obs));
        p_nominal.push(pval);
        null_nes.extend(draws.iter().map(|&v| normalize(v)));
    }

    let q_fdr = fdr_q_values(&nes, &null_nes);
    Ok(sets
        .iter()
        .enumerate()
        .map(|(s, set)| {
            let mut m = set.members.clone();
            m.sort_unstable();
            m.dedup();
            SetResult {
                name: set.name.clone(),
                size: m.len(),
                es: es[s],
                nes: nes[s],
                p_nominal: p_nominal[s],
                q_fdr: q_fdr[s],
            }
        })
        .collect())
}

/// Sign-pooled FDR: for NES* ≥ 0,
/// `q = [#{null ≥ NES*} / #{null ≥ 0}] / [#{obs ≥ NES*} / #{obs ≥ 0}]`, mirrored
/// for negative scores, clipped to [0, 1].
fn fdr_q_values(observed: &[f64], null: &[f64]) -> Vec<f64> {
    let mut null_pos: Vec<f64> = null.iter().copied().filter(|&v| v >= 0.0).collect();
    let mut null_neg: Vec<f64> = null.iter().copied().filter(|&v| v < 0.0).collect();
    let mut obs_pos: Vec<f64> = observed.iter().copied().filter(|&v| v >= 0.0).collect();
    let mut obs_neg: Vec<f64> = observed.iter().copied().filter(|&v| v < 0.0).collect();
    for v in [&mut null_pos, &mut null_neg, &mut obs_pos, &mut obs_neg] {
        v.sort_by(f64::total_cmp);
    }
    // Counts of sorted values ≥ t and ≤ t.
    let at_least = |v: &[f64], t: f64| v.len() - v.partition_point(|&a| a < t);
    let at_most = |v: &[f64], t: f64| v.partition_point(|&a| a <= t);
    observed
        .iter()
        .map(|&t| {
            let (null_frac, obs_frac) = if t >= 0.0 {
                if null_pos.is_empty() {
                    return 1.0;
                }
                (
                    at_least(&null_pos, t) as f64 / null_pos.len() as f64,
                    at_least(&obs_pos, t) as f64 / obs_pos.len() as f64,
                )
            } else {
                if null_neg.is_empty() {
                    return 1.0;
                }
                (
                    at_most(&null_neg, t) as f64 / null_neg.len() as f64,
                    at_most(&obs_neg, t) as f64 / obs_neg.len() as f64,
                )
            };
            (null_frac / obs_frac).clamp(0.0, 1.0)
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionRule {
    TopM(usize),
    FdrCutoff(f64),
}

impl std::str::FromStr for SelectionRule {
    type Err = Error;

    /// `top:5` or `fdr:0.25`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("selection rule must be `top:<m>` or `fdr:<q>`, got `{s}`"));
        let (kind, value) = s.split_once(':').ok_or_else(bad)?;
        match kind {
            "top" => value.parse().map(SelectionRule::TopM).map_err(|_| bad()),
            "fdr" => value.parse().map(SelectionRule::FdrCutoff).map_err(|_| bad()),
            _ => Err(bad()),
        }
    }
}

/// Ranking used by the top-m rule: nominal p ascending, |NES| descending, name.
fn selection_order(a: &SetResult, b: &SetResult) -> Ordering {
    a.p_nominal.total_cmp(&b.p_nominal).then(b.nes.abs().total_cmp(&a.nes.abs())).then_with(|| a.name.cmp(&b.name))
}

/// Indices of the selected sets, in selection order.
pub fn gsea_select_indices(results: &[SetResult], rule: SelectionRule) -> Result<Vec<usize>> {
    if results.is_empty() {
        return Err(Error::Config("no gene set results to select from".into()));
    }
    let mut idx: Vec<usize> = (0..results.len()).collect();
    idx.sort_by(|&a, &b| selection_order(&results[a], &results[b]));
    match rule {
        SelectionRule::TopM(m) => {
            if m == 0 || m > results.len() {
                return Err(Error::Config(format!("cannot select {m} of {} gene sets", results.len())));
            }
            idx.truncate(m);
            Ok(idx)
        }
        SelectionRule::FdrCutoff(q) => Ok(idx.into_iter().filter(|&i| results[i].q_fdr <= q).collect()),
    }
}

pub fn gsea_select(results: &[SetResult], rule: SelectionRule) -> Result<Vec<String>> {
    Ok(gsea_select_indices(results, rule)?.into_iter().map(|i| results[i].name.clone()).collect())
}
