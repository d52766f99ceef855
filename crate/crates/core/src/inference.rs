//! Posterior summaries of retained draws: guild counts, co-occurrence, the
//! mode partition, coefficient posteriors and predictive scores.

use std::collections::{BTreeMap, HashMap};

use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{CommunityData, Family};
use crate::stats::{
    lag1_autocorrelation, log_normal_cdf, log_sum_exp, mean, poisson_log_pmf, quantile_sorted, sample_variance,
    split_rhat,
};
use crate::tree::{GuildPartition, GuildTree};
use crate::{ChainRng, Error, PosteriorDraw, Result};

/// Latent draws per cell and posterior draw for the abundance predictive density.
pub const ZIP_PREDICTIVE_DRAWS: usize = 32;

/// Seed of the Monte Carlo stream behind abundance predictive densities.
pub const PREDICTIVE_SEED: u64 = 0x5eed;

fn check_period(draws: &[PosteriorDraw], period: usize) -> Result<()> {
    if draws.is_empty() {
        return Err(Error::Insufficient("no posterior draws".into()));
    }
    if draws.iter().any(|d| d.periods.len() <= period) {
        return Err(Error::InvalidConfig(format!("draws have no period {}", period + 1)));
    }
    Ok(())
}

/// Posterior probability of each number of guilds in one period.
pub fn guild_count_distribution(draws: &[PosteriorDraw], period: usize) -> Result<BTreeMap<usize, f64>> {
    check_period(draws, period)?;
    let mut counts = BTreeMap::new();
    for d in draws {
        *counts.entry(d.periods[period].tree.n_guilds()).or_insert(0usize) += 1;
    }
    let n = draws.len() as f64;
    Ok(counts.into_iter().map(|(g, c)| (g, c as f64 / n)).collect())
}

/// Posterior probability that each pair of species shares a guild.
pub fn cooccurrence_matrix(draws: &[PosteriorDraw], period: usize) -> Result<Vec<Vec<f64>>> {
    check_period(draws, period)?;
    let j_n = draws[0].alpha.len();
    let mut m = vec![vec![0.0; j_n]; j_n];
    for d in draws {
        let p = d.periods[period].partition();
        for a in 0..j_n {
            for b in 0..j_n {
                if p.same_guild(a, b) {
                    m[a][b] += 1.0;
                }
            }
        }
    }
    let n = draws.len() as f64;
    m.iter_mut().flatten().for_each(|v| *v /= n);
    Ok(m)
}

/// Most frequent induced partition and a tree realising it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModePartition {
    pub tree: GuildTree,
    pub partition: GuildPartition,
    pub probability: f64,
}

/// Mode of the induced partitions; ties go to the partition seen first.
pub fn mode_tree(draws: &[PosteriorDraw], period: usize) -> Result<ModePartition> {
    check_period(draws, period)?;
    let mut counts: HashMap<String, (usize, usize)> = HashMap::new();
    for (i, d) in draws.iter().enumerate() {
        let key = d.periods[period].partition().encode();
        counts.entry(key).or_insert((0, i)).0 += 1;
    }
    let (_, &(count, first)) = counts
        .iter()
        .max_by(|a, b| a.1 .0.cmp(&b.1 .0).then(b.1 .1.cmp(&a.1 .1)))
        .expect("nonempty");
    let tree = draws[first].periods[period].tree.clone();
    Ok(ModePartition {
        partition: crate::partition_from_tree(&tree).canonical(),
        tree,
        probability: count as f64 / draws.len() as f64,
    })
}

/// Mean, sd and central 95% interval of a scalar posterior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub mean: f64,
    pub sd: f64,
    pub q025: f64,
    pub q500: f64,
    pub q975: f64,
}

impl ParamSummary {
    pub fn of(values: &[f64]) -> Self {
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Self {
            mean: mean(values),
            sd: sample_variance(values).sqrt(),
            q025: quantile_sorted(&sorted, 0.025),
            q500: quantile_sorted(&sorted, 0.5),
            q975: quantile_sorted(&sorted, 0.975),
        }
    }
}

/// Species-level slope `beta_{j,k}` of every draw in one period.
pub fn species_slope_draws(draws: &[PosteriorDraw], period: usize, species: usize, predictor: usize) -> Vec<f64> {
    draws
        .iter()
        .map(|d| {
            let pd = &d.periods[period];
            let g = crate::partition_from_tree(&pd.tree).guild_of(species);
            pd.gamma.get(g, predictor)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeciesCoefficientSummary {
    pub species: usize,
    pub predictor: usize,
    pub summary: ParamSummary,
}

/// Guild coefficient summary conditional on the mode partition. Guilds are
/// numbered canonically (by smallest member).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuildCoefficientSummary {
    pub guild: usize,
    pub members: Vec<usize>,
    pub predictor: usize,
    /// Draws whose partition equals the mode.
    pub n_draws: usize,
    pub summary: ParamSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientPosteriors {
    /// Mixture over all sampled trees.
    pub species: Vec<SpeciesCoefficientSummary>,
    /// Conditional on the mode partition only.
    pub mode_guilds: Vec<GuildCoefficientSummary>,
}

pub fn coefficient_posteriors(draws: &[PosteriorDraw], period: usize) -> Result<CoefficientPosteriors> {
    let mode = mode_tree(draws, period)?;
    let j_n = draws[0].alpha.len();
    let k_n = draws[0].periods[period].gamma.n_predictors();
    let mut species = Vec::with_capacity(j_n * k_n);
    for j in 0..j_n {
        for k in 0..k_n {
            species.push(SpeciesCoefficientSummary {
                species: j,
                predictor: k,
                summary: ParamSummary::of(&species_slope_draws(draws, period, j, k)),
            });
        }
    }
    let key = mode.partition.encode();
    let g_n = mode.partition.n_guilds();
    let mut by_guild = vec![vec![Vec::new(); k_n]; g_n];
    for d in draws {
        let pd = &d.periods[period];
        let p = pd.partition();
        if p.canonical().encode() != key {
            continue;
        }
        let gamma = pd.gamma.reordered(&p.canonical_order());
        for (g, row) in by_guild.iter_mut().enumerate() {
            for (k, vals) in row.iter_mut().enumerate() {
                vals.push(gamma.get(g, k));
            }
        }
    }
    let guilds = mode.partition.guilds();
    let mut mode_guilds = Vec::new();
    for (g, row) in by_guild.iter().enumerate() {
        for (k, vals) in row.iter().enumerate() {
            mode_guilds.push(GuildCoefficientSummary {
                guild: g,
                members: guilds[g].clone(),
                predictor: k,
                n_draws: vals.len(),
                summary: ParamSummary::of(vals),
            });
        }
    }
    Ok(CoefficientPosteriors { species, mode_guilds })
}

/// Frequency and conditional species-slope means of each sampled partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionComponent {
    pub partition: String,
    pub frequency: f64,
    /// Conditional means of `beta`, `J x K` row-major.
    pub slope_means: Vec<f64>,
}

pub fn partition_breakdown(draws: &[PosteriorDraw], period: usize) -> Result<Vec<PartitionComponent>> {
    check_period(draws, period)?;
    let j_n = draws[0].alpha.len();
    let k_n = draws[0].periods[period].gamma.n_predictors();
    let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, d) in draws.iter().enumerate() {
        groups
            .entry(d.periods[period].partition().encode())
            .or_default()
            .push(i);
    }
    Ok(groups
        .into_iter()
        .map(|(partition, idx)| {
            let subset: Vec<PosteriorDraw> = idx.iter().map(|&i| draws[i].clone()).collect();
            let slope_means = (0..j_n)
                .flat_map(|j| (0..k_n).map(move |k| (j, k)))
                .map(|(j, k)| mean(&species_slope_draws(&subset, period, j, k)))
                .collect();
            PartitionComponent {
                partition,
                frequency: idx.len() as f64 / draws.len() as f64,
                slope_means,
            }
        })
        .collect())
}

/// Log density of every cell of `data` under one draw, row-major.
fn draw_cell_log_densities(draw: &PosteriorDraw, data: &CommunityData, rng: &mut ChainRng, out: &mut [f64]) {
    let j_n = data.n_species();
    let partitions: Vec<GuildPartition> = draw.periods.iter().map(|p| p.partition()).collect();
    for i in 0..data.n_sites() {
        let t = data.period_of(i);
        let (p, gamma) = (&partitions[t], &draw.periods[t].gamma);
        let x = data.x(i);
        for j in 0..j_n {
            let eta = draw.alpha[j] + gamma.linear_predictor(p.guild_of(j), x);
            let y = data.response(i, j);
            out[i * j_n + j] = match data.family() {
                Family::Probit => {
                    if y > 0 {
                        log_normal_cdf(eta)
                    } else {
                        log_normal_cdf(-eta)
                    }
                }
                Family::Zip => zip_log_density(y, eta, draw.phi.unwrap_or(0.0), draw.sigma2.unwrap_or(0.0), rng),
            };
        }
    }
}

/// Monte Carlo log marginal density of a zero-inflated Poisson-log-normal count.
fn zip_log_density(y: u32, eta: f64, phi: f64, sigma2: f64, rng: &mut ChainRng) -> f64 {
    let sd = sigma2.sqrt();
    let mut terms = [0.0; ZIP_PREDICTIVE_DRAWS];
    for t in terms.iter_mut() {
        let e: f64 = StandardNormal.sample(rng);
        *t = poisson_log_pmf(y, eta + sd * e);
    }
    let poisson = log_sum_exp(&terms) - (ZIP_PREDICTIVE_DRAWS as f64).ln();
    if y == 0 {
        log_sum_exp(&[phi.ln(), (1.0 - phi).ln() + poisson])
    } else {
        (1.0 - phi).ln() + poisson
    }
}

/// Per-cell accumulators over draws: log mean density and the variance of
/// the log density.
struct CellAccumulator {
    lse_max: Vec<f64>,
    lse_sum: Vec<f64>,
    mean: Vec<f64>,
    m2: Vec<f64>,
    n: usize,
}

fn accumulate(draws: &[PosteriorDraw], data: &CommunityData) -> Result<CellAccumulator> {
    if draws.is_empty() {
        return Err(Error::Insufficient("no posterior draws".into()));
    }
    if draws
        .iter()
        .any(|d| d.periods.len() < data.n_periods() || d.alpha.len() != data.n_species())
    {
        return Err(Error::Dimension(
            "draws do not match the data's species or periods".into(),
        ));
    }
    if draws
        .iter()
        .any(|d| d.periods.iter().any(|p| p.gamma.n_predictors() != data.n_predictors()))
    {
        return Err(Error::Dimension("draws do not match the data's predictors".into()));
    }
    let cells = data.n_sites() * data.n_species();
    let mut acc = CellAccumulator {
        lse_max: vec![f64::NEG_INFINITY; cells],
        lse_sum: vec![0.0; cells],
        mean: vec![0.0; cells],
        m2: vec![0.0; cells],
        n: 0,
    };
    let mut rng = ChainRng::seed_from_u64(PREDICTIVE_SEED);
    let mut ll = vec![0.0; cells];
    for d in draws {
        draw_cell_log_densities(d, data, &mut rng, &mut ll);
        acc.n += 1;
        let n = acc.n as f64;
        for c in 0..cells {
            let v = ll[c];
            // streaming log-sum-exp
            if v > acc.lse_max[c] {
                acc.lse_sum[c] = acc.lse_sum[c] * (acc.lse_max[c] - v).exp() + 1.0;
                acc.lse_max[c] = v;
            } else {
                acc.lse_sum[c] += (v - acc.lse_max[c]).exp();
            }
            let delta = v - acc.mean[c];
            acc.mean[c] += delta / n;
            acc.m2[c] += delta * (v - acc.mean[c]);
        }
    }
    Ok(acc)
}

impl CellAccumulator {
    fn lppd(&self) -> f64 {
        let ln_n = (self.n as f64).ln();
        self.lse_max
            .iter()
            .zip(&self.lse_sum)
            .map(|(m, s)| if *m == f64::NEG_INFINITY { *m } else { m + s.ln() - ln_n })
            .sum()
    }

    fn p_eff(&self) -> f64 {
        let denom = (self.n - 1) as f64;
        self.m2.iter().map(|m| m / denom).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waic {
    pub waic: f64,
    pub lppd: f64,
    pub p_eff: f64,
}

/// `waic = -2 (lppd - p_eff)`, with `p_eff` the summed sample variance of
/// the pointwise log densities.
pub fn waic(draws: &[PosteriorDraw], data: &CommunityData) -> Result<Waic> {
    if draws.len() < 2 {
        return Err(Error::Insufficient("WAIC needs at least two draws".into()));
    }
    let acc = accumulate(draws, data)?;
    let (lppd, p_eff) = (acc.lppd(), acc.p_eff());
    Ok(Waic {
        waic: -2.0 * (lppd - p_eff),
        lppd,
        p_eff,
    })
}

/// `-2` times the log posterior predictive density of held-out sites.
pub fn lppd_holdout(draws: &[PosteriorDraw], holdout: &CommunityData) -> Result<f64> {
    if holdout.n_sites() == 0 {
        return Err(Error::Insufficient("empty holdout".into()));
    }
    Ok(-2.0 * accumulate(draws, holdout)?.lppd())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub waic: f64,
    pub lppd: f64,
    pub p_eff: f64,
    /// `-2 x LPPD` on the holdout sites, when there are any.
    pub holdout_neg2_lppd: Option<f64>,
}

pub fn scores(draws: &[PosteriorDraw], fit: &CommunityData, holdout: Option<&CommunityData>) -> Result<Scores> {
    let w = waic(draws, fit)?;
    Ok(Scores {
        waic: w.waic,
        lppd: w.lppd,
        p_eff: w.p_eff,
        holdout_neg2_lppd: holdout.map(|h| lppd_holdout(draws, h)).transpose()?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodSummary {
    pub guild_count_pmf: BTreeMap<usize, f64>,
    pub cooccurrence: Vec<Vec<f64>>,
    pub mode: ModePartition,
    pub coefficients: CoefficientPosteriors,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub n_draws: usize,
    pub intercepts: Vec<ParamSummary>,
    pub periods: Vec<PeriodSummary>,
    pub phi: Option<ParamSummary>,
    pub sigma2: Option<ParamSummary>,
    pub scores: Option<Scores>,
}

/// Full summary of a set of draws; scores are computed when `fit` is given.
pub fn summarize(
    draws: &[PosteriorDraw],
    fit: Option<&CommunityData>,
    holdout: Option<&CommunityData>,
) -> Result<PosteriorSummary> {
    check_period(draws, 0)?;
    let j_n = draws[0].alpha.len();
    let periods = (0..draws[0].periods.len())
        .map(|t| {
            Ok(PeriodSummary {
                guild_count_pmf: guild_count_distribution(draws, t)?,
                cooccurrence: cooccurrence_matrix(draws, t)?,
                mode: mode_tree(draws, t)?,
                coefficients: coefficient_posteriors(draws, t)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let scalar = |f: fn(&PosteriorDraw) -> Option<f64>| {
        let v: Option<Vec<f64>> = draws.iter().map(f).collect();
        v.map(|v| ParamSummary::of(&v))
    };
    let scores = match fit {
        Some(f) if draws.len() >= 2 => Some(scores(draws, f, holdout)?),
        _ => None,
    };
    Ok(PosteriorSummary {
        n_draws: draws.len(),
        intercepts: (0..j_n)
            .map(|j| ParamSummary::of(&draws.iter().map(|d| d.alpha[j]).collect::<Vec<_>>()))
            .collect(),
        periods,
        phi: scalar(|d| d.phi),
        sigma2: scalar(|d| d.sigma2),
        scores,
    })
}

/// Scalar trace summary over all chains: pooled mean and sd, lag-1
/// autocorrelation averaged over chains and split potential scale reduction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceDiagnostic {
    pub parameter: String,
    pub mean: f64,
    pub sd: f64,
    pub lag1: f64,
    pub rhat: Option<f64>,
}

/// Diagnostics for intercepts, species slopes, guild counts and family
/// scalars, one entry per scalar, from one or more chains.
pub fn trace_diagnostics(
    chains: &[Vec<PosteriorDraw>],
    species: &[String],
    predictors: &[String],
) -> Vec<TraceDiagnostic> {
    let Some(first) = chains.iter().find_map(|c| c.first()) else {
        return Vec::new();
    };
    let mut out = Vec::new();
    let mut push = |name: String, f: &dyn Fn(&[PosteriorDraw]) -> Vec<f64>| {
        let traces: Vec<Vec<f64>> = chains.iter().filter(|c| !c.is_empty()).map(|c| f(c)).collect();
        let pooled = traces.concat();
        out.push(TraceDiagnostic {
            parameter: name,
            mean: mean(&pooled),
            sd: sample_variance(&pooled).sqrt(),
            lag1: mean(&traces.iter().map(|t| lag1_autocorrelation(t)).collect::<Vec<_>>()),
            rhat: split_rhat(&traces),
        })
    };
    for (j, s) in species.iter().enumerate() {
        push(format!("alpha[{s}]"), &|d| d.iter().map(|d| d.alpha[j]).collect());
    }
    for t in 0..first.periods.len() {
        for (j, s) in species.iter().enumerate() {
            for (k, p) in predictors.iter().enumerate() {
                push(format!("beta[{s},{p},{}]", t + 1), &|d| species_slope_draws(d, t, j, k));
            }
        }
        push(format!("guilds[{}]", t + 1), &|d| {
            d.iter().map(|d| d.periods[t].tree.n_guilds() as f64).collect()
        });
    }
    if first.phi.is_some() {
        push("phi".into(), &|d| d.iter().map(|d| d.phi.unwrap_or(f64::NAN)).collect());
    }
    if first.sigma2.is_some() {
        push("sigma2".into(), &|d| {
            d.iter().map(|d| d.sigma2.unwrap_or(f64::NAN)).collect()
        });
    }
    out
}
