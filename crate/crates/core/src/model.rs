//! Group structures, the duplicated-column design and the latent ↔ original
//! coefficient maps.
//!
//! A predictor that belongs to several groups gets one latent coefficient per
//! group. The original coefficient is the sum of its latent copies, and the
//! expanded design repeats the predictor's column once per copy, so
//! `X̃ γ = X β` holds for every latent vector.

use std::ops::Range;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};

/// Relative threshold below which a group norm is treated as zero.
pub const SELECTION_TOLERANCE: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct Group {
    pub name: String,
    /// Strictly increasing predictor indices.
    pub members: Vec<usize>,
}

impl Group {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Named, possibly overlapping groups over `p` predictors.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupStructure {
    p: usize,
    groups: Vec<Group>,
    weights: Vec<f64>,
    ungrouped: Vec<usize>,
}

impl GroupStructure {
    /// Validates raw groups and assigns the default `√K` weights.
    ///
    /// Member lists may come in any order; they are sorted. Predictors that
    /// appear in no group are recorded in [`GroupStructure::ungrouped`].
    pub fn new<S, I>(p: usize, raw_groups: I) -> Result<Self>
    where
        S: Into<String>,
        I: IntoIterator<Item = (S, Vec<usize>)>,
    {
        let mut groups = Vec::new();
        let mut covered = vec![false; p];
        for (name, mut members) in raw_groups {
            let name = name.into();
            if members.is_empty() {
                return Err(Error::EmptyGroup { group: name });
            }
            members.sort_unstable();
            for w in members.windows(2) {
                if w[0] == w[1] {
                    return Err(Error::DuplicateIndex { group: name, index: w[0] });
                }
            }
            if let Some(&last) = members.last() {
                if last >= p {
                    return Err(Error::IndexOutOfRange { group: name, index: last, p });
                }
            }
            for &k in &members {
                covered[k] = true;
            }
            groups.push(Group { name, members });
        }
        if groups.is_empty() {
            return Err(Error::NoGroups);
        }
        let weights = groups.iter().map(|g| (g.len() as f64).sqrt()).collect();
        let ungrouped = (0..p).filter(|&k| !covered[k]).collect();
        Ok(Self { p, groups, weights, ungrouped })
    }

    /// Replaces the penalty weights. Every weight must be positive and finite.
    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != self.groups.len() {
            return Err(Error::Dimension(format!("{} weights for {} groups", weights.len(), self.groups.len())));
        }
        for (g, &w) in self.groups.iter().zip(&weights) {
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::InvalidWeight { group: g.name.clone(), weight: w });
            }
        }
        self.weights = weights;
        Ok(self)
    }

    /// Appends every ungrouped predictor as its own singleton group with
    /// weight 1, so that it is penalized like an ℓ1 term.
    ///
    /// `names` supplies predictor names for the new groups; without it the
    /// groups are called `ungrouped_<k>`.
    pub fn with_implicit_singletons(&self, names: Option<&[String]>) -> Self {
        let mut out = self.clone();
        for &k in &self.ungrouped {
            let name = match names {
                Some(n) => n[k].clone(),
                None => format!("ungrouped_{k}"),
            };
            out.groups.push(Group { name, members: vec![k] });
            out.weights.push(1.0);
        }
        out.ungrouped.clear();
        out
    }

    /// One singleton group of weight 1 per predictor: the plain lasso.
    pub fn singletons(p: usize) -> Result<Self> {
        Self::new(p, (0..p).map(|k| (format!("x{k}"), vec![k])))
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn n_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn groups(&self) -> &[Group] {
        &self.groups
    }

    pub fn group(&self, j: usize) -> &Group {
        &self.groups[j]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn ungrouped(&self) -> &[usize] {
        &self.ungrouped
    }

    /// Total latent dimension, the sum of the group sizes.
    pub fn latent_dim(&self) -> usize {
        self.groups.iter().map(Group::len).sum()
    }

    /// Latent index range of each group in group-major order.
    pub fn latent_ranges(&self) -> Vec<Range<usize>> {
        let mut start = 0;
        self.groups
            .iter()
            .map(|g| {
                let r = start..start + g.len();
                start = r.end;
                r
            })
            .collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.groups.iter().position(|g| g.name == name)
    }
}

/// A latent column: which group it belongs to and which original predictor it copies.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LatentColumn {
    pub group: usize,
    pub predictor: usize,
}

/// The duplicated-column design `X̃` (n × L).
///
/// When `has_intercept` is set the model carries an unpenalized all-ones
/// column in front of the latent columns; it is kept implicit rather than
/// stored in `matrix`.
#[derive(Clone, Debug)]
pub struct ExpandedDesign {
    p: usize,
    matrix: Array2<f64>,
    column_map: Vec<LatentColumn>,
    ranges: Vec<Range<usize>>,
    has_intercept: bool,
}

impl ExpandedDesign {
    /// Builds `X̃` by copying each original column once per containing group.
    pub fn new(x: ArrayView2<'_, f64>, gs: &GroupStructure, has_intercept: bool) -> Result<Self> {
        if x.ncols() != gs.p() {
            return Err(Error::Dimension(format!(
                "design has {} columns, group structure expects {}",
                x.ncols(),
                gs.p()
            )));
        }
        for ((row, col), v) in x.indexed_iter() {
            if !v.is_finite() {
                return Err(Error::NonFinite { row, col });
            }
        }
        let column_map: Vec<LatentColumn> = gs
            .groups()
            .iter()
            .enumerate()
            .flat_map(|(j, g)| g.members.iter().map(move |&k| LatentColumn { group: j, predictor: k }))
            .collect();
        let mut matrix = Array2::zeros((x.nrows(), column_map.len()));
        for (l, c) in column_map.iter().enumerate() {
            matrix.column_mut(l).assign(&x.column(c.predictor));
        }
        Ok(Self { p: gs.p(), matrix, column_map, ranges: gs.latent_ranges(), has_intercept })
    }

    /// Restricts the design to a subset of rows (used for CV folds).
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            p: self.p,
            matrix: self.matrix.select(Axis(0), rows),
            column_map: self.column_map.clone(),
            ranges: self.ranges.clone(),
            has_intercept: self.has_intercept,
        }
    }

    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn latent_dim(&self) -> usize {
        self.column_map.len()
    }

    pub fn n_groups(&self) -> usize {
        self.ranges.len()
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }

    pub fn column_map(&self) -> &[LatentColumn] {
        &self.column_map
    }

    pub fn has_intercept(&self) -> bool {
        self.has_intercept
    }

    pub fn group_range(&self, j: usize) -> Range<usize> {
        self.ranges[j].clone()
    }

    pub fn group_ranges(&self) -> &[Range<usize>] {
        &self.ranges
    }

    /// Columns of group `j`.
    pub fn block(&self, j: usize) -> ArrayView2<'_, f64> {
        self.matrix.slice(ndarray::s![.., self.ranges[j].clone()])
    }

    /// Linear predictor `β₀ + X̃γ`.
    pub fn linear_predictor(&self, lc: &LatentCoefficients) -> Result<Array1<f64>> {
        self.check_aligned(lc)?;
        Ok(self.matrix.dot(&lc.gamma) + lc.intercept)
    }

    fn check_aligned(&self, lc: &LatentCoefficients) -> Result<()> {
        if lc.gamma.len() != self.latent_dim() {
            return Err(Error::Dimension(format!(
                "latent vector has length {}, design has {} latent columns",
                lc.gamma.len(),
                self.latent_dim()
            )));
        }
        Ok(())
    }

    /// Sums latent copies back onto the original predictors.
    pub fn collapse(&self, lc: &LatentCoefficients) -> Result<(Array1<f64>, f64)> {
        self.check_aligned(lc)?;
        let mut beta = Array1::zeros(self.p);
        for (c, &g) in self.column_map.iter().zip(lc.gamma.iter()) {
            beta[c.predictor] += g;
        }
        Ok((beta, lc.intercept))
    }
}

/// Latent coefficients `γ` (group-major, aligned with the column map) plus the
/// unpenalized intercept.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentCoefficients {
    pub intercept: f64,
    pub gamma: Array1<f64>,
}

impl LatentCoefficients {
    pub fn zeros(latent_dim: usize) -> Self {
        Self { intercept: 0.0, gamma: Array1::zeros(latent_dim) }
    }

    pub fn block(&self, range: Range<usize>) -> ArrayView1<'_, f64> {
        self.gamma.slice(ndarray::s![range])
    }
}

/// Euclidean norm of each group's latent block.
pub fn group_norms(lc: &LatentCoefficients, gs: &GroupStructure) -> Result<Vec<f64>> {
    if lc.gamma.len() != gs.latent_dim() {
        return Err(Error::Dimension(format!(
            "latent vector has length {}, group structure needs {}",
            lc.gamma.len(),
            gs.latent_dim()
        )));
    }
    Ok(gs.latent_ranges().into_iter().map(|r| lc.block(r).iter().map(|v| v * v).sum::<f64>().sqrt()).collect())
}

/// Selected flag per group: `‖γ^j‖ > SELECTION_TOLERANCE · max_j ‖γ^j‖`.
pub fn selected_groups(norms: &[f64]) -> Vec<bool> {
    let max = norms.iter().copied().fold(0.0, f64::max);
    norms.iter().map(|&v| max > 0.0 && v > SELECTION_TOLERANCE * max).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn fig1() -> GroupStructure {
        GroupStructure::new(4, vec![("S1", vec![0, 1]), ("S2", vec![1, 2]), ("S3", vec![0, 2]), ("S4", vec![2, 3])])
            .unwrap()
    }

    #[test]
    fn fig1_structure() {
        let gs = fig1();
        assert_eq!(gs.n_groups(), 4);
        assert!(gs.groups().iter().all(|g| g.len() == 2));
        assert!(gs.weights().iter().all(|&w| (w - 2f64.sqrt()).abs() < 1e-15));
        assert!(gs.ungrouped().is_empty());
    }

    #[test]
    fn disjoint_singletons_have_latent_dim_p() {
        let gs = GroupStructure::new(3, vec![("a", vec![0]), ("b", vec![1]), ("c", vec![2])]).unwrap();
        assert_eq!(gs.latent_dim(), 3);
    }

    #[test]
    fn validation_errors() {
        assert!(matches!(
            GroupStructure::new(2, vec![("S1", vec![0, 2])]),
            Err(Error::IndexOutOfRange { index: 2, .. })
        ));
        assert!(matches!(GroupStructure::new(2, vec![("S1", vec![])]), Err(Error::EmptyGroup { .. })));
        assert!(matches!(
            GroupStructure::new(3, vec![("S1", vec![1, 0, 1])]),
            Err(Error::DuplicateIndex { index: 1, .. })
        ));
        assert!(matches!(GroupStructure::new::<&str, _>(3, Vec::<(&str, Vec<usize>)>::new()), Err(Error::NoGroups)));
        assert!(fig1().with_weights(vec![1.0, 0.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn ungrouped_become_singletons() {
        let gs = GroupStructure::new(5, vec![("a", vec![0, 1]), ("b", vec![1, 3])]).unwrap();
        assert_eq!(gs.ungrouped(), &[2, 4]);
        let full = gs.with_implicit_singletons(None);
        assert_eq!(full.n_groups(), 4);
        assert_eq!(full.group(2).members, vec![2]);
        assert_eq!(full.group(3).name, "ungrouped_4");
        assert_eq!(full.weights()[3], 1.0);
        assert!(full.ungrouped().is_empty());
    }

    #[test]
    fn fig1_expansion_duplicates_shared_predictor() {
        let gs = fig1();
        let x = Array2::from_shape_fn((5, 4), |(i, k)| (i * 4 + k) as f64);
        let ed = ExpandedDesign::new(x.view(), &gs, false).unwrap();
        assert_eq!(ed.latent_dim(), 8);
        let copies: Vec<usize> = ed.column_map().iter().filter(|c| c.predictor == 2).map(|c| c.group).collect();
        assert_eq!(copies, vec![1, 2, 3]);
        for (l, c) in ed.column_map().iter().enumerate() {
            assert_eq!(ed.matrix().column(l), x.column(c.predictor));
        }
    }

    #[test]
    fn disjoint_expansion_is_column_permutation() {
        let gs = GroupStructure::new(3, vec![("a", vec![2]), ("b", vec![0, 1])]).unwrap();
        let x = array![[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]];
        let ed = ExpandedDesign::new(x.view(), &gs, false).unwrap();
        assert_eq!(ed.matrix(), &array![[3.0, 1.0, 2.0], [6.0, 4.0, 5.0]]);
    }

    #[test]
    fn full_overlap_single_predictor() {
        let gs = GroupStructure::new(1, vec![("a", vec![0]), ("b", vec![0])]).unwrap();
        let x = Array2::ones((3, 1));
        let ed = ExpandedDesign::new(x.view(), &gs, false).unwrap();
        assert_eq!(ed.matrix(), &Array2::<f64>::ones((3, 2)));
        let lc = LatentCoefficients { intercept: 0.0, gamma: array![0.3, -0.3] };
        let (beta, _) = ed.collapse(&lc).unwrap();
        assert_eq!(beta, array![0.0]);
    }

    #[test]
    fn non_finite_design_rejected() {
        let gs = fig1();
        let mut x = Array2::zeros((2, 4));
        x[[1, 3]] = f64::NAN;
        assert!(matches!(ExpandedDesign::new(x.view(), &gs, false), Err(Error::NonFinite { row: 1, col: 3 })));
    }

    #[test]
    fn fig1_collapse_selects_group_one() {
        let gs = fig1();
        let ed = ExpandedDesign::new(Array2::zeros((1, 4)).view(), &gs, false).unwrap();
        let mut gamma = Array1::zeros(8);
        gamma[0] = 1.0;
        gamma[1] = 2.0;
        let lc = LatentCoefficients { intercept: 0.5, gamma };
        let (beta, b0) = ed.collapse(&lc).unwrap();
        assert_eq!(beta, array![1.0, 2.0, 0.0, 0.0]);
        assert_eq!(b0, 0.5);
        let (zero, _) = ed.collapse(&LatentCoefficients::zeros(8)).unwrap();
        assert_eq!(zero, Array1::<f64>::zeros(4));
        assert!(ed.collapse(&LatentCoefficients::zeros(7)).is_err());
    }

    #[test]
    fn norms_and_selection() {
        let gs = fig1();
        let mut gamma = Array1::zeros(8);
        gamma[0] = 3.0;
        gamma[1] = 4.0;
        let norms = group_norms(&LatentCoefficients { intercept: 0.0, gamma }, &gs).unwrap();
        assert_eq!(norms, vec![5.0, 0.0, 0.0, 0.0]);
        assert_eq!(selected_groups(&norms), vec![true, false, false, false]);
        assert_eq!(group_norms(&LatentCoefficients::zeros(8), &gs).unwrap(), vec![0.0; 4]);
        assert_eq!(selected_groups(&[1.0, 1e-9, 2e-8]), vec![true, false, true]);
        assert_eq!(selected_groups(&[0.0, 0.0]), vec![false, false]);
    }
}
