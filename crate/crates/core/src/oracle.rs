//! Exact small-instance references for the presence-absence model:
//! enumeration of species partitions with their prior weights, a
//! fixed-structure sampler that draws all coefficients jointly, and
//! Bayesian model averaging over partitions with Chib marginal likelihoods.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{CommunityData, Family};
use crate::learner::TreePriorConfig;
use crate::linalg::cholesky;
use crate::probit::ProbitPriors;
use crate::stats::{batch_means_se, log_normal_cdf, log_sum_exp, mean, sample_truncated_normal, Side};
use crate::tree::GuildPartition;
use crate::{ChainRng, Error, Result};

/// Largest species count enumerated unless the caller raises the cap.
pub const DEFAULT_CAP: usize = 6;

/// Prior over partitions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PartitionPrior {
    /// Induced by the splitting / assignment tree process.
    TreeProcess(TreePriorConfig),
    /// Every partition equally likely.
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionEnumeration {
    pub n_species: usize,
    /// Canonical partitions in encoding order.
    pub partitions: Vec<GuildPartition>,
    pub weights: Vec<f64>,
}

type Blocks = Vec<Vec<usize>>;

fn canonical_blocks(mut blocks: Blocks) -> Blocks {
    for b in &mut blocks {
        b.sort_unstable();
    }
    blocks.sort();
    blocks
}

/// Distribution over partitions of `species` induced by the tree process.
fn tree_process(species: &[usize], depth: usize, cfg: &TreePriorConfig) -> BTreeMap<Blocks, f64> {
    let mut out = BTreeMap::new();
    let m = species.len();
    let p = if m < 2 || depth >= cfg.max_depth {
        0.0
    } else {
        cfg.p_split
    };
    if p < 1.0 {
        out.insert(vec![species.to_vec()], 1.0 - p);
    }
    if p == 0.0 {
        return out;
    }
    // ordered left/right assignments with both sides nonempty are equally likely
    let n_assign = (1u64 << m) - 2;
    let each = p / n_assign as f64;
    for mask in 1..(1u64 << m) - 1 {
        let (l, r): (Vec<(usize, usize)>, Vec<(usize, usize)>) = species
            .iter()
            .copied()
            .enumerate()
            .partition(|(i, _)| mask >> i & 1 == 1);
        let l: Vec<usize> = l.into_iter().map(|(_, s)| s).collect();
        let r: Vec<usize> = r.into_iter().map(|(_, s)| s).collect();
        let left = tree_process(&l, depth + 1, cfg);
        let right = tree_process(&r, depth + 1, cfg);
        for (lb, lp) in &left {
            for (rb, rp) in &right {
                let key = canonical_blocks(lb.iter().chain(rb).cloned().collect());
                *out.entry(key).or_insert(0.0) += each * lp * rp;
            }
        }
    }
    out
}

/// All set partitions of `0..n` in canonical form.
fn set_partitions(n: usize) -> Vec<Blocks> {
    let mut out: Vec<Blocks> = vec![Vec::new()];
    for s in 0..n {
        let mut next = Vec::new();
        for p in &out {
            for b in 0..p.len() {
                let mut q = p.clone();
                q[b].push(s);
                next.push(q);
            }
            let mut q = p.clone();
            q.push(vec![s]);
            next.push(q);
        }
        out = next;
    }
    let mut out: Vec<Blocks> = out.into_iter().map(canonical_blocks).collect();
    out.sort();
    out
}

/// Enumerates every partition of `n_species` species with its prior weight.
/// Every set partition is reachable by recursive binary splitting, so the
/// support is all set partitions (the Bell number of them).
pub fn enumerate_partitions(n_species: usize, cap: usize, prior: PartitionPrior) -> Result<PartitionEnumeration> {
    if n_species == 0 {
        return Err(Error::InvalidConfig("at least one species required".into()));
    }
    if n_species > cap {
        return Err(Error::OracleRefused(format!(
            "exact enumeration over {n_species} species exceeds the cap of {cap}"
        )));
    }
    let species: Vec<usize> = (0..n_species).collect();
    let (blocks, weights): (Vec<Blocks>, Vec<f64>) = match prior {
        PartitionPrior::TreeProcess(cfg) => {
            cfg.validate()?;
            let dist = tree_process(&species, 0, &cfg);
            set_partitions(n_species)
                .into_iter()
                .map(|b| {
                    let w = dist.get(&b).copied().unwrap_or(0.0);
                    (b, w)
                })
                .unzip()
        }
        PartitionPrior::Uniform => {
            let all = set_partitions(n_species);
            let w = 1.0 / all.len() as f64;
            let n = all.len();
            (all, vec![w; n])
        }
    };
    let partitions = blocks
        .iter()
        .map(|b| GuildPartition::from_guilds(n_species, b).map(|p| p.canonical()))
        .collect::<Result<Vec<_>>>()?;
    let mut order: Vec<usize> = (0..partitions.len()).collect();
    order.sort_by_key(|&i| partitions[i].encode());
    Ok(PartitionEnumeration {
        n_species,
        partitions: order.iter().map(|&i| partitions[i].clone()).collect(),
        weights: order.iter().map(|&i| weights[i]).collect(),
    })
}

/// Run length of reference chains.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSettings {
    pub iterations: usize,
    pub burn: usize,
    pub seed: u64,
}

impl Default for ReferenceSettings {
    fn default() -> Self {
        Self {
            iterations: 20_000,
            burn: 2_000,
            seed: 1,
        }
    }
}

/// Linear model of the latent surface for a fixed partition. Parameters
/// are the `J` intercepts followed by guild coefficients in predictor-major
/// order.
struct FixedDesign<'a> {
    data: &'a CommunityData,
    partition: &'a GuildPartition,
    dim: usize,
}

impl FixedDesign<'_> {
    fn row(&self, i: usize, j: usize, out: &mut [(usize, f64)]) -> usize {
        let j_n = self.data.n_species();
        let g_n = self.partition.n_guilds();
        out[0] = (j, 1.0);
        for (k, &x) in self.data.x(i).iter().enumerate() {
            out[1 + k] = (j_n + k * g_n + self.partition.guild_of(j), x);
        }
        1 + self.data.n_predictors()
    }

    fn eta(&self, i: usize, j: usize, theta: &[f64], buf: &mut [(usize, f64)]) -> f64 {
        let n = self.row(i, j, buf);
        buf[..n].iter().map(|&(c, v)| v * theta[c]).sum()
    }

    fn gram(&self) -> DMatrix<f64> {
        let mut g = DMatrix::zeros(self.dim, self.dim);
        let mut buf = vec![(0, 0.0); 1 + self.data.n_predictors()];
        for i in 0..self.data.n_sites() {
            for j in 0..self.data.n_species() {
                let n = self.row(i, j, &mut buf);
                for a in 0..n {
                    for b in 0..n {
                        g[(buf[a].0, buf[b].0)] += buf[a].1 * buf[b].1;
                    }
                }
            }
        }
        g
    }

    fn cross(&self, aux: &[f64]) -> DVector<f64> {
        let j_n = self.data.n_species();
        let mut v = DVector::zeros(self.dim);
        let mut buf = vec![(0, 0.0); 1 + self.data.n_predictors()];
        for i in 0..self.data.n_sites() {
            for j in 0..j_n {
                let n = self.row(i, j, &mut buf);
                for &(c, x) in &buf[..n] {
                    v[c] += x * aux[i * j_n + j];
                }
            }
        }
        v
    }

    fn prior_precision(&self, priors: &ProbitPriors) -> DVector<f64> {
        let j_n = self.data.n_species();
        DVector::from_fn(self.dim, |c, _| {
            if c < j_n {
                1.0 / priors.intercept_variance
            } else {
                1.0 / priors.gamma_variance
            }
        })
    }

    fn log_likelihood(&self, theta: &[f64]) -> f64 {
        let mut buf = vec![(0, 0.0); 1 + self.data.n_predictors()];
        let mut ll = 0.0;
        for i in 0..self.data.n_sites() {
            for j in 0..self.data.n_species() {
                let eta = self.eta(i, j, theta, &mut buf);
                ll += if self.data.response(i, j) > 0 {
                    log_normal_cdf(eta)
                } else {
                    log_normal_cdf(-eta)
                };
            }
        }
        ll
    }
}

/// Output of a fixed-structure reference chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedStructureFit {
    pub partition: GuildPartition,
    /// Posterior means: intercepts then guild coefficients (predictor-major).
    pub means: Vec<f64>,
    /// Batch-means Monte Carlo standard errors of `means`.
    pub mcse: Vec<f64>,
    /// Posterior means of species-level slopes, `J x K` row-major.
    pub species_slope_means: Vec<f64>,
    pub species_slope_mcse: Vec<f64>,
    /// Chib estimate of the log marginal likelihood.
    pub log_marginal: f64,
    pub retained: usize,
}

/// Auxiliary-variable probit Gibbs sampler with the partition held fixed and
/// intercepts and guild coefficients drawn jointly in one block.
pub fn fixed_structure_reference(
    data: &CommunityData,
    partition: &GuildPartition,
    priors: &ProbitPriors,
    settings: &ReferenceSettings,
) -> Result<FixedStructureFit> {
    if data.family() != Family::Probit {
        return Err(Error::InvalidConfig(
            "the reference sampler needs presence-absence data".into(),
        ));
    }
    if partition.n_species() != data.n_species() {
        return Err(Error::InvalidPartition(
            "partition does not cover the data's species".into(),
        ));
    }
    if data.n_periods() > 1 {
        return Err(Error::InvalidConfig(
            "the reference sampler handles a single period".into(),
        ));
    }
    if settings.burn >= settings.iterations {
        return Err(Error::InvalidConfig("burn leaves no reference draws".into()));
    }
    let (j_n, k_n, g_n) = (data.n_species(), data.n_predictors(), partition.n_guilds());
    let design = FixedDesign {
        data,
        partition,
        dim: j_n + g_n * k_n,
    };
    let prior_prec = design.prior_precision(priors);
    let mut precision = design.gram();
    for c in 0..design.dim {
        precision[(c, c)] += prior_prec[c];
    }
    let chol = cholesky(&precision).ok_or_else(|| Error::NonFinite {
        what: "reference posterior precision".into(),
        iteration: 0,
    })?;
    let l_t = chol.l().transpose();
    let mut rng = ChainRng::seed_from_u64(settings.seed);
    let mut theta = vec![0.0; design.dim];
    let mut aux = vec![0.0; data.n_sites() * j_n];
    let mut buf = vec![(0, 0.0); 1 + k_n];
    let kept = settings.iterations - settings.burn;
    let mut trace: Vec<Vec<f64>> = vec![Vec::with_capacity(kept); design.dim];
    // conditional means of theta given each retained aux draw
    let mut cond_means: Vec<DVector<f64>> = Vec::with_capacity(kept);
    for it in 0..settings.iterations {
        for i in 0..data.n_sites() {
            for j in 0..j_n {
                let eta = design.eta(i, j, &theta, &mut buf);
                let side = if data.response(i, j) > 0 {
                    Side::Positive
                } else {
                    Side::Negative
                };
                aux[i * j_n + j] = sample_truncated_normal(eta, 1.0, side, &mut rng);
            }
        }
        let m = chol.solve(&design.cross(&aux));
        let eps = DVector::from_fn(design.dim, |_, _| StandardNormal.sample(&mut rng));
        let u = l_t
            .solve_upper_triangular(&eps)
            .expect("triangular factor is nonsingular");
        let draw = &m + u;
        theta.copy_from_slice(draw.as_slice());
        if it >= settings.burn {
            for (c, t) in trace.iter_mut().enumerate() {
                t.push(theta[c]);
            }
            cond_means.push(m);
        }
    }
    let means: Vec<f64> = trace.iter().map(|t| mean(t)).collect();
    let mcse: Vec<f64> = trace.iter().map(|t| batch_means_se(t)).collect();
    let mut species_slope_means = Vec::with_capacity(j_n * k_n);
    let mut species_slope_mcse = Vec::with_capacity(j_n * k_n);
    for j in 0..j_n {
        for k in 0..k_n {
            let c = j_n + k * g_n + partition.guild_of(j);
            species_slope_means.push(means[c]);
            species_slope_mcse.push(mcse[c]);
        }
    }

    // Chib: log m(y) = log p(y | t*) + log p(t*) - log p(t* | y), with the
    // posterior ordinate averaged over the auxiliary draws.
    let star = DVector::from_vec(means.clone());
    let log_det_prec: f64 = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let half_log_2pi = 0.5 * (2.0 * std::f64::consts::PI).ln();
    let ordinates: Vec<f64> = cond_means
        .iter()
        .map(|m| {
            let d = &star - m;
            let q = (d.transpose() * &precision * &d)[(0, 0)];
            0.5 * log_det_prec - design.dim as f64 * half_log_2pi - 0.5 * q
        })
        .collect();
    let log_post = log_sum_exp(&ordinates) - (ordinates.len() as f64).ln();
    let log_prior: f64 = (0..design.dim)
        .map(|c| 0.5 * prior_prec[c].ln() - half_log_2pi - 0.5 * prior_prec[c] * star[c] * star[c])
        .sum();
    let log_marginal = design.log_likelihood(star.as_slice()) + log_prior - log_post;
    Ok(FixedStructureFit {
        partition: partition.clone(),
        means,
        mcse,
        species_slope_means,
        species_slope_mcse,
        log_marginal,
        retained: kept,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AveragedComponent {
    pub fit: FixedStructureFit,
    pub prior_weight: f64,
    pub posterior_weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelAverage {
    pub components: Vec<AveragedComponent>,
    /// Model-averaged species-level slope means, `J x K` row-major.
    pub species_slope_means: Vec<f64>,
    /// Model-averaged intercept means.
    pub intercept_means: Vec<f64>,
    /// Partitions excluded because their marginal likelihood was not finite.
    pub excluded: Vec<String>,
}

impl ModelAverage {
    /// Posterior probability that two species share a guild.
    pub fn cooccurrence(&self, a: usize, b: usize) -> f64 {
        self.components
            .iter()
            .filter(|c| c.fit.partition.same_guild(a, b))
            .map(|c| c.posterior_weight)
            .sum()
    }
}

/// Exact Bayesian model averaging over partitions with prior times marginal
/// likelihood weights. Partition chains run on separate threads with seeds
/// offset by their position in the enumeration.
pub fn exact_model_average_probit(
    data: &CommunityData,
    enumeration: &PartitionEnumeration,
    priors: &ProbitPriors,
    settings: &ReferenceSettings,
) -> Result<ModelAverage> {
    if enumeration.n_species != data.n_species() {
        return Err(Error::InvalidConfig(
            "enumeration does not match the data's species".into(),
        ));
    }
    let support: Vec<(usize, &GuildPartition)> = enumeration
        .partitions
        .iter()
        .enumerate()
        .filter(|(i, _)| enumeration.weights[*i] > 0.0)
        .collect();
    let fits: Vec<Result<FixedStructureFit>> = std::thread::scope(|scope| {
        let handles: Vec<_> = support
            .iter()
            .map(|&(i, p)| {
                let s = ReferenceSettings {
                    seed: settings.seed.wrapping_add(i as u64),
                    ..*settings
                };
                scope.spawn(move || fixed_structure_reference(data, p, priors, &s))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("reference chain panicked"))
            .collect()
    });
    let mut kept = Vec::new();
    let mut excluded = Vec::new();
    for ((i, p), fit) in support.iter().zip(fits) {
        let fit = fit?;
        if fit.log_marginal.is_finite() {
            kept.push((enumeration.weights[*i], fit));
        } else {
            excluded.push(p.encode());
        }
    }
    if kept.is_empty() {
        return Err(Error::NonFinite {
            what: "every partition's marginal likelihood".into(),
            iteration: 0,
        });
    }
    let logs: Vec<f64> = kept.iter().map(|(w, f)| w.ln() + f.log_marginal).collect();
    let norm = log_sum_exp(&logs);
    let components: Vec<AveragedComponent> = kept
        .into_iter()
        .zip(&logs)
        .map(|((w, fit), l)| AveragedComponent {
            fit,
            prior_weight: w,
            posterior_weight: (l - norm).exp(),
        })
        .collect();
    let j_n = data.n_species();
    let slope_len = j_n * data.n_predictors();
    let mut species_slope_means = vec![0.0; slope_len];
    let mut intercept_means = vec![0.0; j_n];
    for c in &components {
        for (acc, v) in species_slope_means.iter_mut().zip(&c.fit.species_slope_means) {
            *acc += c.posterior_weight * v;
        }
        for (acc, v) in intercept_means.iter_mut().zip(&c.fit.means[..j_n]) {
            *acc += c.posterior_weight * v;
        }
    }
    Ok(ModelAverage {
        components,
        species_slope_means,
        intercept_means,
        excluded,
    })
}
