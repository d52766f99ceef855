//! Conditional updates shared by the probit and abundance samplers: the
//! learner-driven guild update with a conjugate draw of the guild
//! coefficients, and the conjugate intercept update. Both treat the latent
//! surface as `latent_ij = alpha_j + x_i' gamma_{t(i), g(j)} + N(0, noise_var)`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::chain::{StepContext, WarningLog};
use crate::design::GuildCoefficients;
use crate::learner::{fit_tree_from_stats, SpeciesStats};
use crate::linalg::sample_gaussian_canonical;
use crate::tree::{partition_from_tree, GuildPartition, GuildTree};
use crate::{Error, Result};

/// Linear predictor `mu_ij` for every cell, row-major.
pub(crate) fn mean_surface(
    ctx: &StepContext<'_>,
    alpha: &[f64],
    partitions: &[GuildPartition],
    gammas: &[GuildCoefficients],
) -> Vec<f64> {
    let data = ctx.data;
    let j_n = data.n_species();
    let mut mu = vec![0.0; data.n_sites() * j_n];
    for i in 0..data.n_sites() {
        let t = data.period_of(i);
        let x = data.x(i);
        let (p, g) = (&partitions[t], &gammas[t]);
        // one linear predictor per guild, then broadcast to members
        let per_guild: Vec<f64> = (0..p.n_guilds()).map(|gi| g.linear_predictor(gi, x)).collect();
        for j in 0..j_n {
            mu[i * j_n + j] = alpha[j] + per_guild[p.guild_of(j)];
        }
    }
    mu
}

fn period_stats(ctx: &StepContext<'_>, latent: &[f64], alpha: &[f64], sites: &[usize]) -> Vec<SpeciesStats> {
    let data = ctx.data;
    let j_n = data.n_species();
    let mut stats = vec![SpeciesStats::new(data.n_predictors()); j_n];
    for &i in sites {
        let x = data.x(i);
        for (j, s) in stats.iter_mut().enumerate() {
            s.add(x, latent[i * j_n + j] - alpha[j]);
        }
    }
    for s in &mut stats {
        s.finish();
    }
    stats
}

/// Guild trees fitted by the learner for every period, given the latent
/// surface and intercepts. `None` for periods without sites.
pub(crate) fn fit_period_trees(
    ctx: &StepContext<'_>,
    latent: &[f64],
    alpha: &[f64],
    log: &mut WarningLog,
) -> Vec<Option<GuildTree>> {
    ctx.period_sites
        .iter()
        .zip(&ctx.learners)
        .enumerate()
        .map(|(t, (sites, learner))| {
            if sites.is_empty() {
                log.push(format!("period {} has no sites; tree retained", t + 1));
                return None;
            }
            let fit = fit_tree_from_stats(&period_stats(ctx, latent, alpha, sites), learner);
            for w in &fit.warnings {
                log.push(format!("period {}: {w}", t + 1));
            }
            Some(fit.tree)
        })
        .collect()
}

/// Learner step followed by a conjugate draw of every period's guild
/// coefficients under a `N(0, gamma_variance I)` prior.
#[allow(clippy::too_many_arguments)]
pub(crate) fn update_guilds<R: Rng + ?Sized>(
    ctx: &StepContext<'_>,
    latent: &[f64],
    alpha: &[f64],
    noise_var: f64,
    gamma_variance: f64,
    trees: &mut [GuildTree],
    gammas: &mut [GuildCoefficients],
    rng: &mut R,
    log: &mut WarningLog,
) -> Result<()> {
    if !ctx.clamp.tree {
        for (t, fitted) in fit_period_trees(ctx, latent, alpha, log).into_iter().enumerate() {
            if let Some(tree) = fitted {
                trees[t] = tree;
            }
        }
    }
    let k = ctx.data.n_predictors();
    for t in 0..trees.len() {
        let partition = partition_from_tree(&trees[t]);
        let stats = period_stats(ctx, latent, alpha, &ctx.period_sites[t]);
        gammas[t] = draw_guild_coefficients(&stats, &partition, k, noise_var, gamma_variance, rng)?;
    }
    Ok(())
}

/// Guilds are conditionally independent given the partition, so each
/// guild's `K` coefficients are drawn from their own Gaussian conditional.
pub(crate) fn draw_guild_coefficients<R: Rng + ?Sized>(
    stats: &[SpeciesStats],
    partition: &GuildPartition,
    k: usize,
    noise_var: f64,
    gamma_variance: f64,
    rng: &mut R,
) -> Result<GuildCoefficients> {
    let mut out = GuildCoefficients::zeros(partition.n_guilds(), k);
    for (g, members) in partition.guilds().iter().enumerate() {
        let mut precision = DMatrix::<f64>::identity(k, k) / gamma_variance;
        let mut b = DVector::<f64>::zeros(k);
        for &j in members {
            precision += &stats[j].xtx / noise_var;
            b += &stats[j].xtr / noise_var;
        }
        let draw = sample_gaussian_canonical(&precision, &b, rng).ok_or_else(|| Error::NonFinite {
            what: format!("guild {} coefficient precision", g + 1),
            iteration: 0,
        })?;
        for c in 0..k {
            out.set(g, c, draw[c]);
        }
    }
    Ok(out)
}

/// Conjugate normal update of every species intercept.
#[allow(clippy::too_many_arguments)]
pub(crate) fn update_intercepts<R: Rng + ?Sized>(
    ctx: &StepContext<'_>,
    latent: &[f64],
    partitions: &[GuildPartition],
    gammas: &[GuildCoefficients],
    noise_var: f64,
    intercept_variance: f64,
    alpha: &mut [f64],
    rng: &mut R,
) -> Result<()> {
    let data = ctx.data;
    let j_n = data.n_species();
    let zero = vec![0.0; j_n];
    let offsets = mean_surface(ctx, &zero, partitions, gammas);
    let mut sums = vec![0.0; j_n];
    for i in 0..data.n_sites() {
        for j in 0..j_n {
            sums[j] += latent[i * j_n + j] - offsets[i * j_n + j];
        }
    }
    let n = data.n_sites() as f64;
    for j in 0..j_n {
        let precision = n / noise_var + 1.0 / intercept_variance;
        let mean = sums[j] / noise_var / precision;
        let d = Normal::new(mean, precision.recip().sqrt()).map_err(|_| Error::NonFinite {
            what: format!("intercept of species {}", j + 1),
            iteration: 0,
        })?;
        alpha[j] = d.sample(rng);
    }
    Ok(())
}

pub(crate) fn partitions_of(trees: &[GuildTree]) -> Vec<GuildPartition> {
    trees.iter().map(partition_from_tree).collect()
}
