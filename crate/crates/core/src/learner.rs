//! Model-based recursive partitioning over the species index, and the
//! generative tree process used as an explicit prior.
//!
//! Each node holding a species set `S` fits a pooled least-squares
//! regression of the pseudo-response on the predictors (no intercept; the
//! species intercepts are already removed). The node's coefficients are
//! tested for instability across species with a likelihood-ratio statistic
//!
//! ```text
//! LR = N * ln(RSS_pooled / RSS_species)  ~  chi^2((|S| - 1) K)
//! ```
//!
//! and the node is split when the p-value falls below `alpha`. Splits
//! minimise the summed residual sum of squares of the two child pooled
//! fits.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::cholesky;
use crate::stats::chi_square_sf;
use crate::tree::{GuildTree, TreeNode};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearnerConfig {
    /// Split significance threshold in `[0, 1]`. Zero never splits; one
    /// splits every node down to single species.
    pub alpha: f64,
    pub min_node_species: usize,
    /// Above this many species the exhaustive subset search is replaced by
    /// contiguous splits of species ordered by their own slope estimates.
    pub max_exhaustive_subset: usize,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            min_node_species: 1,
            max_exhaustive_subset: 12,
        }
    }
}

impl LearnerConfig {
    pub fn with_alpha(alpha: f64) -> Self {
        Self {
            alpha,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidConfig(format!("alpha {} outside [0, 1]", self.alpha)));
        }
        if self.min_node_species == 0 {
            return Err(Error::InvalidConfig("min_node_species must be >= 1".into()));
        }
        if self.max_exhaustive_subset < 2 || self.max_exhaustive_subset > 24 {
            return Err(Error::InvalidConfig("max_exhaustive_subset must lie in 2..=24".into()));
        }
        Ok(())
    }
}

/// Observations `(species, x, r)` fed to the learner.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoData {
    n_species: usize,
    n_predictors: usize,
    species: Vec<usize>,
    x: Vec<f64>,
    r: Vec<f64>,
}

impl PseudoData {
    pub fn new(n_species: usize, n_predictors: usize) -> Self {
        Self {
            n_species,
            n_predictors,
            species: Vec::new(),
            x: Vec::new(),
            r: Vec::new(),
        }
    }

    pub fn push(&mut self, species: usize, x: &[f64], r: f64) -> Result<()> {
        if species >= self.n_species || x.len() != self.n_predictors {
            return Err(Error::Dimension("pseudo-observation shape".into()));
        }
        if !r.is_finite() || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("non-finite pseudo-observation".into()));
        }
        self.species.push(species);
        self.x.extend_from_slice(x);
        self.r.push(r);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }

    pub fn n_species(&self) -> usize {
        self.n_species
    }

    pub(crate) fn stats(&self) -> Result<Vec<SpeciesStats>> {
        let mut stats = vec![SpeciesStats::new(self.n_predictors); self.n_species];
        for (o, &j) in self.species.iter().enumerate() {
            let x = &self.x[o * self.n_predictors..(o + 1) * self.n_predictors];
            stats[j].add(x, self.r[o]);
        }
        if let Some(j) = stats.iter().position(|s| s.n == 0) {
            return Err(Error::InvalidData(format!(
                "species {} has no pseudo-observations",
                j + 1
            )));
        }
        Ok(stats)
    }
}

/// Least-squares sufficient statistics of one species.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct SpeciesStats {
    pub xtx: DMatrix<f64>,
    pub xtr: DVector<f64>,
    pub rtr: f64,
    pub n: usize,
}

impl SpeciesStats {
    pub fn new(k: usize) -> Self {
        Self {
            xtx: DMatrix::zeros(k, k),
            xtr: DVector::zeros(k),
            rtr: 0.0,
            n: 0,
        }
    }

    pub fn add(&mut self, x: &[f64], r: f64) {
        let k = x.len();
        for a in 0..k {
            self.xtr[a] += x[a] * r;
            for b in a..k {
                self.xtx[(a, b)] += x[a] * x[b];
            }
        }
        self.rtr += r * r;
        self.n += 1;
    }

    /// Mirrors the upper triangle filled by `add`.
    pub fn finish(&mut self) {
        let k = self.xtr.len();
        for a in 0..k {
            for b in 0..a {
                self.xtx[(a, b)] = self.xtx[(b, a)];
            }
        }
    }

    fn accumulate<'a>(k: usize, parts: impl Iterator<Item = &'a SpeciesStats>) -> Self {
        let mut out = Self::new(k);
        for p in parts {
            out.xtx += &p.xtx;
            out.xtr += &p.xtr;
            out.rtr += p.rtr;
            out.n += p.n;
        }
        out
    }

    /// Least-squares fit; `None` when `X'X` is singular.
    fn ols(&self) -> Option<(DVector<f64>, f64)> {
        let chol = cholesky(&self.xtx)?;
        let b = chol.solve(&self.xtr);
        let rss = (self.rtr - b.dot(&self.xtr)).max(0.0);
        Some((b, rss))
    }
}

fn finished(mut stats: Vec<SpeciesStats>) -> Vec<SpeciesStats> {
    for s in &mut stats {
        s.finish();
    }
    stats
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LearnerWarning {
    /// Singular design in the pooled or a per-species fit; node left terminal.
    DegenerateDesign { species: Vec<usize> },
}

impl fmt::Display for LearnerWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LearnerWarning::DegenerateDesign { species } => {
                let s: Vec<String> = species.iter().map(|j| (j + 1).to_string()).collect();
                write!(f, "degenerate design in node {{{}}}; left terminal", s.join(","))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeFit {
    pub tree: GuildTree,
    /// Least-squares coefficients of each terminal node, left to right.
    pub terminal_coefficients: Vec<Vec<f64>>,
    pub warnings: Vec<LearnerWarning>,
}

impl TreeFit {
    /// Total residual sum of squares of the terminal fits.
    pub fn terminal_rss(&self, data: &PseudoData) -> Result<f64> {
        let stats = finished(data.stats()?);
        let k = data.n_predictors;
        Ok(self
            .tree
            .terminals()
            .iter()
            .zip(&self.terminal_coefficients)
            .map(|(species, b)| {
                let s = SpeciesStats::accumulate(k, species.iter().map(|&j| &stats[j]));
                let b = DVector::from_column_slice(b);
                (s.rtr - 2.0 * b.dot(&s.xtr) + (b.transpose() * &s.xtx * &b)[(0, 0)]).max(0.0)
            })
            .sum())
    }
}

/// Grows a guild tree on pseudo-data. Deterministic in its inputs.
pub fn fit_tree(data: &PseudoData, cfg: &LearnerConfig) -> Result<TreeFit> {
    cfg.validate()?;
    if data.n_predictors == 0 {
        return Err(Error::InvalidData("no predictors".into()));
    }
    let stats = finished(data.stats()?);
    Ok(fit_tree_from_stats(&stats, cfg))
}

pub(crate) fn fit_tree_from_stats(stats: &[SpeciesStats], cfg: &LearnerConfig) -> TreeFit {
    let mut warnings = Vec::new();
    let mut coefs = Vec::new();
    let all: Vec<usize> = (0..stats.len()).collect();
    let root = grow(stats, all, cfg, &mut coefs, &mut warnings);
    TreeFit {
        tree: GuildTree::new(stats.len(), root).expect("learner produces valid trees"),
        terminal_coefficients: coefs,
        warnings,
    }
}

fn grow(
    stats: &[SpeciesStats],
    species: Vec<usize>,
    cfg: &LearnerConfig,
    coefs: &mut Vec<Vec<f64>>,
    warnings: &mut Vec<LearnerWarning>,
) -> TreeNode {
    let k = stats[0].xtr.len();
    let pooled = SpeciesStats::accumulate(k, species.iter().map(|&j| &stats[j]));
    let Some((b_pooled, rss_pooled)) = pooled.ols() else {
        warnings.push(LearnerWarning::DegenerateDesign {
            species: species.clone(),
        });
        coefs.push(vec![0.0; k]);
        return TreeNode::terminal(species);
    };
    let terminal = |coefs: &mut Vec<Vec<f64>>, species: Vec<usize>| {
        coefs.push(b_pooled.iter().copied().collect());
        TreeNode::terminal(species)
    };
    if species.len() < 2 || species.len() < 2 * cfg.min_node_species || cfg.alpha <= 0.0 {
        return terminal(coefs, species);
    }
    let Some(p_value) = instability_p_value(stats, &species, rss_pooled, pooled.n) else {
        warnings.push(LearnerWarning::DegenerateDesign {
            species: species.clone(),
        });
        return terminal(coefs, species);
    };
    // alpha = 1 accepts every split, including p-values that round to one.
    if !(cfg.alpha >= 1.0 || p_value < cfg.alpha) {
        return terminal(coefs, species);
    }
    let search = split_search(stats, &species, cfg);
    let Some(best) = search.best else {
        return terminal(coefs, species);
    };
    let left = grow(stats, best.left, cfg, coefs, warnings);
    let right = grow(stats, best.right, cfg, coefs, warnings);
    TreeNode::split(left, right)
}

/// p-value of the species-heterogeneity test at a node, or `None` when a
/// species-level fit is singular.
fn instability_p_value(stats: &[SpeciesStats], species: &[usize], rss_pooled: f64, n: usize) -> Option<f64> {
    let k = stats[0].xtr.len();
    let mut rss_species = 0.0;
    for &j in species {
        rss_species += stats[j].ols()?.1;
    }
    let df = ((species.len() - 1) * k) as f64;
    let stat = if rss_pooled <= rss_species {
        0.0
    } else if rss_species <= 0.0 {
        f64::INFINITY
    } else {
        n as f64 * (rss_pooled / rss_species).ln()
    };
    Some(chi_square_sf(stat, df))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinarySplit {
    /// Child holding the smallest species index.
    pub left: Vec<usize>,
    pub right: Vec<usize>,
    pub rss: f64,
    pub rss_reduction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitSearch {
    pub best: Option<BinarySplit>,
    pub candidates: usize,
    pub exhaustive: bool,
}

/// Finds the binary partition of `species` minimising the summed RSS of
/// the two child pooled fits. Exact up to `max_exhaustive_subset` species;
/// beyond that only contiguous splits along an ordering by per-species
/// slope are scanned. Equal-RSS ties go to the lexicographically smallest
/// left subset.
pub(crate) fn split_search(stats: &[SpeciesStats], species: &[usize], cfg: &LearnerConfig) -> SplitSearch {
    let k = stats[0].xtr.len();
    let mut sorted = species.to_vec();
    sorted.sort_unstable();
    let parent_rss = SpeciesStats::accumulate(k, sorted.iter().map(|&j| &stats[j]))
        .ols()
        .map_or(f64::INFINITY, |(_, rss)| rss);
    let mut best: Option<BinarySplit> = None;
    let mut candidates = 0;
    let mut consider = |left: Vec<usize>, right: Vec<usize>| {
        candidates += 1;
        if left.len() < cfg.min_node_species || right.len() < cfg.min_node_species {
            return;
        }
        let fit = |set: &[usize]| SpeciesStats::accumulate(k, set.iter().map(|&j| &stats[j])).ols();
        let (Some((_, rl)), Some((_, rr))) = (fit(&left), fit(&right)) else {
            return;
        };
        let rss = rl + rr;
        let better = match &best {
            None => true,
            Some(b) => {
                let tol = 1e-12 * b.rss.abs().max(1.0);
                rss < b.rss - tol || (rss <= b.rss + tol && left < b.left)
            }
        };
        if better {
            best = Some(BinarySplit {
                left,
                right,
                rss,
                rss_reduction: parent_rss - rss,
            });
        }
    };
    let m = sorted.len();
    let exhaustive = m <= cfg.max_exhaustive_subset;
    if exhaustive {
        // smallest species always on the left; mask selects right members
        let rest = &sorted[1..];
        for mask in 1u32..(1u32 << (m - 1)) {
            let mut left = vec![sorted[0]];
            let mut right = Vec::new();
            for (b, &j) in rest.iter().enumerate() {
                if mask & (1 << b) != 0 {
                    right.push(j);
                } else {
                    left.push(j);
                }
            }
            consider(left, right);
        }
    } else {
        let order = slope_order(stats, &sorted);
        for cut in 1..m {
            let mut a: Vec<usize> = order[..cut].to_vec();
            let mut b: Vec<usize> = order[cut..].to_vec();
            a.sort_unstable();
            b.sort_unstable();
            if a[0] > b[0] {
                std::mem::swap(&mut a, &mut b);
            }
            consider(a, b);
        }
    }
    SplitSearch {
        best,
        candidates,
        exhaustive,
    }
}

/// Species ordered by their own estimate of the most heterogeneous
/// coefficient (largest standardized spread around the pooled estimate).
fn slope_order(stats: &[SpeciesStats], species: &[usize]) -> Vec<usize> {
    let k = stats[0].xtr.len();
    let pooled = SpeciesStats::accumulate(k, species.iter().map(|&j| &stats[j]));
    let b_pooled = pooled.ols().map(|(b, _)| b).unwrap_or_else(|| DVector::zeros(k));
    let fits: Vec<Option<(DVector<f64>, DVector<f64>, f64)>> = species
        .iter()
        .map(|&j| {
            let chol = cholesky(&stats[j].xtx)?;
            let b = chol.solve(&stats[j].xtr);
            let rss = (stats[j].rtr - b.dot(&stats[j].xtr)).max(0.0);
            let diag_inv = chol.inverse().diagonal();
            Some((b, diag_inv, rss))
        })
        .collect();
    let (rss_sum, dof) = fits.iter().zip(species).fold((0.0, 0usize), |(r, d), (f, &j)| match f {
        Some((_, _, rss)) => (r + rss, d + stats[j].n.saturating_sub(k)),
        None => (r, d),
    });
    let s2 = if dof > 0 && rss_sum > 0.0 {
        rss_sum / dof as f64
    } else {
        1.0
    };
    let key_coef = (0..k)
        .map(|c| {
            let h: f64 = fits
                .iter()
                .flatten()
                .map(|(b, d, _)| (b[c] - b_pooled[c]).powi(2) / (s2 * d[c]).max(f64::MIN_POSITIVE))
                .sum();
            (c, h)
        })
        .fold(
            (0, f64::NEG_INFINITY),
            |acc, (c, h)| if h > acc.1 { (c, h) } else { acc },
        )
        .0;
    let mut keyed: Vec<(f64, usize)> = species
        .iter()
        .zip(&fits)
        .map(|(&j, f)| (f.as_ref().map_or(b_pooled[key_coef], |(b, _, _)| b[key_coef]), j))
        .collect();
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    keyed.into_iter().map(|(_, j)| j).collect()
}

/// Hyperparameters of the generative tree process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreePriorConfig {
    pub p_split: f64,
    pub max_depth: usize,
}

impl Default for TreePriorConfig {
    fn default() -> Self {
        Self {
            p_split: 0.5,
            max_depth: usize::MAX,
        }
    }
}

impl TreePriorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p_split) {
            return Err(Error::InvalidConfig(format!("p_split {} outside [0, 1]", self.p_split)));
        }
        Ok(())
    }
}

/// Draws a tree from the splitting / assignment process: every node with
/// at least two species above `max_depth` splits with probability
/// `p_split`; species then go left or right with probability one half,
/// redrawn until both children are nonempty.
pub fn sample_tree_prior<R: Rng + ?Sized>(n_species: usize, cfg: &TreePriorConfig, rng: &mut R) -> Result<GuildTree> {
    cfg.validate()?;
    if n_species == 0 {
        return Err(Error::InvalidConfig("at least one species required".into()));
    }
    let root = grow_prior((0..n_species).collect(), 0, cfg, rng);
    GuildTree::new(n_species, root)
}

fn grow_prior<R: Rng + ?Sized>(species: Vec<usize>, depth: usize, cfg: &TreePriorConfig, rng: &mut R) -> TreeNode {
    if species.len() < 2 || depth >= cfg.max_depth || !rng.random_bool(cfg.p_split) {
        return TreeNode::terminal(species);
    }
    let (left, right) = loop {
        let (l, r): (Vec<usize>, Vec<usize>) = species.iter().partition(|_| rng.random_bool(0.5));
        if !l.is_empty() && !r.is_empty() {
            break (l, r);
        }
    };
    TreeNode::split(
        grow_prior(left, depth + 1, cfg, rng),
        grow_prior(right, depth + 1, cfg, rng),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::partition_from_tree;
    use crate::ChainRng;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal, StandardNormal};

    /// `n` sites per species, `r = slope_j * x + noise`.
    fn simulated(slopes: &[f64], n: usize, noise: f64, seed: u64) -> PseudoData {
        let mut rng = ChainRng::seed_from_u64(seed);
        let eps = Normal::new(0.0, noise).unwrap();
        let mut d = PseudoData::new(slopes.len(), 1);
        for (j, s) in slopes.iter().enumerate() {
            for _ in 0..n {
                let x: f64 = StandardNormal.sample(&mut rng);
                d.push(j, &[x], s * x + eps.sample(&mut rng)).unwrap();
            }
        }
        d
    }

    #[test]
    fn alpha_zero_never_splits() {
        let d = simulated(&[-3.0, 0.0, 3.0], 50, 0.1, 1);
        let fit = fit_tree(&d, &LearnerConfig::with_alpha(0.0)).unwrap();
        assert_eq!(fit.tree.n_guilds(), 1);
    }

    #[test]
    fn alpha_one_splits_to_singletons() {
        let d = simulated(&[-1.0, -0.5, 0.0, 0.5, 1.0, 1.5], 30, 0.5, 2);
        let fit = fit_tree(&d, &LearnerConfig::with_alpha(1.0)).unwrap();
        assert_eq!(fit.tree.n_guilds(), 6);
        assert_eq!(fit.terminal_coefficients.len(), 6);
    }

    #[test]
    fn homogeneous_slopes_split_at_nominal_rate() {
        let reps = 1000;
        let splits = (0..reps)
            .filter(|&r| {
                let d = simulated(&[-1.0, -1.0, -1.0], 100, 1.0, 1000 + r);
                fit_tree(&d, &LearnerConfig::with_alpha(0.05)).unwrap().tree.n_guilds() > 1
            })
            .count();
        let rate = splits as f64 / reps as f64;
        let se = (0.05f64 * 0.95 / reps as f64).sqrt();
        assert!((rate - 0.05).abs() < 3.0 * se, "rejection rate {rate}");
    }

    #[test]
    fn recovers_two_slope_groups() {
        let d = simulated(&[-1.0, -1.0, -1.0, 1.0, 1.0, 1.0], 200, 0.5, 3);
        let fit = fit_tree(&d, &LearnerConfig::with_alpha(0.05)).unwrap();
        match fit.tree.root() {
            TreeNode::Split { left, right, .. } => {
                assert_eq!(left.species(), &[0, 1, 2]);
                assert_eq!(right.species(), &[3, 4, 5]);
            }
            TreeNode::Terminal { .. } => panic!("root not split"),
        }
        assert_eq!(partition_from_tree(&fit.tree).encode(), "1+2+3|4+5+6");
    }

    #[test]
    fn degenerate_design_is_terminal_with_warning() {
        let mut d = PseudoData::new(2, 1);
        for i in 0..5 {
            d.push(0, &[0.0], i as f64).unwrap();
            d.push(1, &[0.0], -(i as f64)).unwrap();
        }
        let fit = fit_tree(&d, &LearnerConfig::with_alpha(1.0)).unwrap();
        assert_eq!(fit.tree.n_guilds(), 1);
        assert_eq!(fit.warnings.len(), 1);
    }

    #[test]
    fn missing_species_rejected() {
        let mut d = PseudoData::new(2, 1);
        d.push(0, &[1.0], 1.0).unwrap();
        assert!(fit_tree(&d, &LearnerConfig::default()).is_err());
        assert!(fit_tree(&simulated(&[1.0], 3, 1.0, 0), &LearnerConfig::with_alpha(1.5)).is_err());
    }

    #[test]
    fn two_species_split() {
        let d = simulated(&[-2.0, 2.0], 20, 0.1, 4);
        let stats = finished(d.stats().unwrap());
        let s = split_search(&stats, &[0, 1], &LearnerConfig::default());
        assert_eq!(s.candidates, 1);
        let best = s.best.unwrap();
        assert_eq!((best.left, best.right), (vec![0], vec![1]));
        assert!(best.rss_reduction > 0.0);
    }

    #[test]
    fn four_species_enumerate_seven_candidates() {
        let d = simulated(&[-2.0, 2.0, 0.0, 1.0], 20, 0.1, 5);
        let stats = finished(d.stats().unwrap());
        let s = split_search(&stats, &[0, 1, 2, 3], &LearnerConfig::default());
        assert_eq!(s.candidates, 7);
        assert!(s.exhaustive);
    }

    #[test]
    fn ties_take_smallest_left_subset() {
        // identical species: every split has the same RSS
        let mut d = PseudoData::new(3, 1);
        for j in 0..3 {
            for i in 0..4 {
                d.push(j, &[1.0 + i as f64], i as f64).unwrap();
            }
        }
        let stats = finished(d.stats().unwrap());
        let s = split_search(&stats, &[0, 1, 2], &LearnerConfig::default());
        // candidates {0}|{1,2}, {0,2}|{1}, {0,1}|{2}
        assert_eq!(s.best.unwrap().left, vec![0]);
    }

    #[test]
    fn heuristic_matches_exhaustive() {
        let exhaustive = LearnerConfig::default();
        let heuristic = LearnerConfig {
            max_exhaustive_subset: 2,
            ..LearnerConfig::default()
        };
        let mut rng = ChainRng::seed_from_u64(77);
        for inst in 0..50 {
            let slopes: Vec<f64> = (0..8)
                .map(|_| 2.0 * Distribution::<f64>::sample(&StandardNormal, &mut rng))
                .collect();
            let d = simulated(&slopes, 15 + inst % 7, 1.0, 1000 + inst as u64);
            let stats = finished(d.stats().unwrap());
            let all: Vec<usize> = (0..8).collect();
            let a = split_search(&stats, &all, &exhaustive).best.unwrap();
            let h = split_search(&stats, &all, &heuristic);
            assert!(!h.exhaustive);
            assert_eq!(h.candidates, 7);
            let h = h.best.unwrap();
            assert!((a.rss - h.rss).abs() <= 1e-9 * a.rss.max(1.0), "instance {inst}");
            assert_eq!(a.left, h.left, "instance {inst}");
        }
    }

    #[test]
    fn deterministic_and_rss_never_increases() {
        let d = simulated(&[0.3, -0.2, 1.0, 1.1, -1.0], 40, 1.0, 6);
        for alpha in [0.0, 0.01, 0.2, 0.7, 1.0] {
            let cfg = LearnerConfig::with_alpha(alpha);
            let a = fit_tree(&d, &cfg).unwrap();
            let b = fit_tree(&d, &cfg).unwrap();
            assert_eq!(a, b);
            let root = fit_tree(&d, &LearnerConfig::with_alpha(0.0)).unwrap();
            assert!(a.terminal_rss(&d).unwrap() <= root.terminal_rss(&d).unwrap() + 1e-9);
        }
    }

    #[test]
    fn guild_count_bounded_by_endpoints() {
        for seed in 0..10 {
            let d = simulated(&[0.5, -0.5, 0.0, 0.2], 25, 1.0, 100 + seed);
            let g0 = fit_tree(&d, &LearnerConfig::with_alpha(0.0)).unwrap().tree.n_guilds();
            let g1 = fit_tree(&d, &LearnerConfig::with_alpha(1.0)).unwrap().tree.n_guilds();
            assert_eq!((g0, g1), (1, 4));
            for alpha in [0.01, 0.1, 0.5, 0.9] {
                let g = fit_tree(&d, &LearnerConfig::with_alpha(alpha)).unwrap().tree.n_guilds();
                assert!(g0 <= g && g <= g1);
            }
        }
    }

    #[test]
    fn prior_extremes() {
        let mut rng = ChainRng::seed_from_u64(8);
        let none = TreePriorConfig {
            p_split: 0.0,
            max_depth: 10,
        };
        assert_eq!(sample_tree_prior(6, &none, &mut rng).unwrap().n_guilds(), 1);
        let all = TreePriorConfig {
            p_split: 1.0,
            max_depth: 6,
        };
        for _ in 0..200 {
            assert_eq!(sample_tree_prior(6, &all, &mut rng).unwrap().n_guilds(), 6);
        }
        let shallow = TreePriorConfig {
            p_split: 1.0,
            max_depth: 1,
        };
        assert_eq!(sample_tree_prior(6, &shallow, &mut rng).unwrap().n_guilds(), 2);
    }

    #[test]
    fn prior_two_species_split_probability() {
        let mut rng = ChainRng::seed_from_u64(9);
        let cfg = TreePriorConfig {
            p_split: 0.3,
            max_depth: 8,
        };
        let n = 100_000;
        let hits = (0..n)
            .filter(|_| sample_tree_prior(2, &cfg, &mut rng).unwrap().n_guilds() == 2)
            .count();
        let p = hits as f64 / n as f64;
        let se = (0.3f64 * 0.7 / n as f64).sqrt();
        assert!((p - 0.3).abs() < 3.0 * se, "{p}");
    }

    #[test]
    fn prior_three_species_branching() {
        // G=1: 1-p; G=2: p(1-p); G=3: p^2 (the two-species child splits again)
        let p = 0.6;
        let cfg = TreePriorConfig {
            p_split: p,
            max_depth: 8,
        };
        let mut rng = ChainRng::seed_from_u64(10);
        let n = 100_000;
        let mut counts = [0usize; 4];
        for _ in 0..n {
            counts[sample_tree_prior(3, &cfg, &mut rng).unwrap().n_guilds()] += 1;
        }
        for (g, target) in [(1, 1.0 - p), (2, p * (1.0 - p)), (3, p * p)] {
            let f = counts[g] as f64 / n as f64;
            let se = (target * (1.0 - target) / n as f64).sqrt();
            assert!((f - target).abs() < 3.5 * se, "G={g}: {f} vs {target}");
        }
    }
}
