//! Abundance sampler: zero-inflated Poisson counts over a log-normal latent
//! process, Metropolis within Gibbs, with one guild tree per period.
//!
//! `phi` is the probability of a structural zero, so
//! `P(y = 0) = phi + (1 - phi) exp(-e^z)`.

use rand::Rng;
use rand_distr::{Beta, Distribution, Gamma, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::chain::{StepContext, WarningLog, ZipTuning};
use crate::data::CommunityData;
use crate::design::GuildCoefficients;
use crate::gibbs::{mean_surface, partitions_of, update_guilds, update_intercepts};
use crate::stats::mean;
use crate::tree::GuildTree;
use crate::{Error, PeriodDraw, PosteriorDraw, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZipPriors {
    pub intercept_variance: f64,
    pub gamma_variance: f64,
    /// Inverse-gamma shape and scale for the process variance.
    pub sigma2_shape: f64,
    pub sigma2_scale: f64,
}

impl Default for ZipPriors {
    fn default() -> Self {
        Self {
            intercept_variance: 1000.0,
            gamma_variance: 10.0,
            sigma2_shape: 2.01,
            sigma2_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZipState {
    /// Log-scale latent process, row-major `n x J`.
    pub z: Vec<f64>,
    /// Structural-zero indicators.
    pub w: Vec<bool>,
    pub phi: f64,
    pub sigma2: f64,
    pub alpha: Vec<f64>,
    pub trees: Vec<GuildTree>,
    pub gammas: Vec<GuildCoefficients>,
    /// Per-cell random-walk proposal sd.
    pub proposal_sd: Vec<f64>,
    batch_accepts: Vec<u32>,
    batch_proposals: Vec<u32>,
    batch_iterations: usize,
    batches_done: usize,
    accepts: u64,
    proposals: u64,
}

impl ZipState {
    /// `z = ln(y + 1/2)`, no structural zeros, `phi = 1/2`, unit process
    /// variance, intercepts at species means of `z`, one guild per period.
    pub fn initial(data: &CommunityData) -> Self {
        let (n, j_n) = (data.n_sites(), data.n_species());
        let z: Vec<f64> = data.responses().iter().map(|&y| (y as f64 + 0.5).ln()).collect();
        let alpha = (0..j_n)
            .map(|j| mean(&(0..n).map(|i| z[i * j_n + j]).collect::<Vec<_>>()))
            .collect();
        // roughly the conditional sd of z at unit process variance
        let proposal_sd = data
            .responses()
            .iter()
            .map(|&y| (2.0 + y as f64).sqrt().recip())
            .collect();
        let cells = n * j_n;
        Self {
            z,
            w: vec![false; cells],
            phi: 0.5,
            sigma2: 1.0,
            alpha,
            trees: vec![GuildTree::single(j_n); data.n_periods()],
            gammas: vec![GuildCoefficients::zeros(1, data.n_predictors()); data.n_periods()],
            proposal_sd,
            batch_accepts: vec![0; cells],
            batch_proposals: vec![0; cells],
            batch_iterations: 0,
            batches_done: 0,
            accepts: 0,
            proposals: 0,
        }
    }

    pub fn draw(&self, index: usize) -> PosteriorDraw {
        PosteriorDraw {
            index,
            alpha: self.alpha.clone(),
            periods: self
                .trees
                .iter()
                .zip(&self.gammas)
                .map(|(tree, gamma)| PeriodDraw {
                    tree: tree.clone(),
                    gamma: gamma.clone(),
                })
                .collect(),
            phi: Some(self.phi),
            sigma2: Some(self.sigma2),
        }
    }

    /// Clears the running acceptance counters.
    pub fn reset_acceptance(&mut self) {
        self.accepts = 0;
        self.proposals = 0;
    }

    /// Metropolis acceptance rate since the last reset.
    pub fn acceptance_rate(&self) -> Option<f64> {
        (self.proposals > 0).then(|| self.accepts as f64 / self.proposals as f64)
    }
}

/// `P(w = 1 | y = 0, z, phi)`.
pub fn inflation_probability(phi: f64, z: f64) -> f64 {
    let poisson_zero = (-z.exp()).exp();
    phi / (phi + (1.0 - phi) * poisson_zero)
}

pub fn update_inflation_indicators<R: Rng + ?Sized>(w: &mut [bool], y: &[u32], z: &[f64], phi: f64, rng: &mut R) {
    for ((wi, &yi), &zi) in w.iter_mut().zip(y).zip(z) {
        *wi = yi == 0 && rng.random::<f64>() < inflation_probability(phi, zi);
    }
    debug_assert!(w.iter().zip(y).all(|(&wi, &yi)| !(wi && yi > 0)));
}

/// Beta parameters of `phi` given the indicators under a uniform prior.
pub fn phi_posterior(w: &[bool]) -> (f64, f64) {
    let ones = w.iter().filter(|&&b| b).count() as f64;
    (1.0 + ones, 1.0 + w.len() as f64 - ones)
}

pub fn update_phi<R: Rng + ?Sized>(w: &[bool], rng: &mut R) -> f64 {
    let (a, b) = phi_posterior(w);
    let phi: f64 = Beta::new(a, b).expect("positive beta parameters").sample(rng);
    // keep strictly inside (0, 1) so the indicator update stays defined
    phi.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON)
}

/// Inverse-gamma shape and scale of the process variance given residuals.
pub fn sigma2_posterior(shape: f64, scale: f64, residuals: impl IntoIterator<Item = f64>) -> (f64, f64) {
    let (mut n, mut ss) = (0usize, 0.0);
    for r in residuals {
        n += 1;
        ss += r * r;
    }
    (shape + 0.5 * n as f64, scale + 0.5 * ss)
}

/// Draws from an inverse gamma with the given shape and scale.
pub fn sample_inverse_gamma<R: Rng + ?Sized>(shape: f64, scale: f64, rng: &mut R) -> f64 {
    let g: f64 = Gamma::new(shape, scale.recip())
        .expect("positive gamma parameters")
        .sample(rng);
    g.recip()
}

/// One random-walk Metropolis step for a latent value with prior
/// `N(mu, sigma2)` and log-likelihood `loglik`. Returns the new value and
/// whether the proposal was accepted.
pub fn metropolis_step<R: Rng + ?Sized>(
    z: f64,
    mu: f64,
    sigma2: f64,
    proposal_sd: f64,
    loglik: impl Fn(f64) -> f64,
    rng: &mut R,
) -> (f64, bool) {
    let eps: f64 = StandardNormal.sample(rng);
    let cand = z + proposal_sd * eps;
    let log_target = |v: f64| -0.5 * (v - mu).powi(2) / sigma2 + loglik(v);
    let log_ratio = log_target(cand) - log_target(z);
    if log_ratio >= 0.0 || rng.random::<f64>().ln() < log_ratio {
        (cand, true)
    } else {
        (z, false)
    }
}

/// Poisson log-likelihood in `z` up to a constant.
fn poisson_kernel(y: u32) -> impl Fn(f64) -> f64 {
    move |z: f64| y as f64 * z - z.exp()
}

/// Latent process update: exact prior draws where `w = 1`, one Metropolis
/// step per cell elsewhere.
pub fn update_latent_z<R: Rng + ?Sized>(state: &mut ZipState, y: &[u32], mu: &[f64], rng: &mut R) {
    let sd = state.sigma2.sqrt();
    for c in 0..state.z.len() {
        if state.w[c] {
            let e: f64 = StandardNormal.sample(rng);
            state.z[c] = mu[c] + sd * e;
            continue;
        }
        let (z, ok) = metropolis_step(
            state.z[c],
            mu[c],
            state.sigma2,
            state.proposal_sd[c],
            poisson_kernel(y[c]),
            rng,
        );
        state.z[c] = z;
        state.batch_proposals[c] += 1;
        state.proposals += 1;
        if ok {
            state.batch_accepts[c] += 1;
            state.accepts += 1;
        }
    }
}

/// Closes an adaptation batch once `tuning.adapt_batch` iterations have
/// accumulated: each cell's proposal sd moves on the log scale toward the
/// target acceptance rate by `min(0.5, 1/sqrt(batch))`.
fn adapt_proposals(state: &mut ZipState, tuning: &ZipTuning) {
    state.batch_iterations += 1;
    if state.batch_iterations < tuning.adapt_batch {
        return;
    }
    state.batches_done += 1;
    let step = (1.0 / (state.batches_done as f64).sqrt()).min(0.5);
    for c in 0..state.proposal_sd.len() {
        let p = state.batch_proposals[c];
        if p > 0 {
            let rate = state.batch_accepts[c] as f64 / p as f64;
            let dir = if rate > tuning.target_acceptance { step } else { -step };
            state.proposal_sd[c] *= dir.exp();
        }
    }
    state.batch_accepts.iter_mut().for_each(|v| *v = 0);
    state.batch_proposals.iter_mut().for_each(|v| *v = 0);
    state.batch_iterations = 0;
}

/// One full sweep: indicators, `phi`, latent process, process variance,
/// per-period trees and coefficients, then the shared intercepts.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gibbs_step_zip<R: Rng + ?Sized>(
    state: &mut ZipState,
    ctx: &StepContext<'_>,
    priors: &ZipPriors,
    tuning: &ZipTuning,
    adapt: bool,
    rng: &mut R,
    log: &mut WarningLog,
) -> Result<()> {
    let y = ctx.data.responses();
    update_inflation_indicators(&mut state.w, y, &state.z, state.phi, rng);
    state.phi = update_phi(&state.w, rng);

    let mu = mean_surface(ctx, &state.alpha, &partitions_of(&state.trees), &state.gammas);
    update_latent_z(state, y, &mu, rng);
    if adapt {
        adapt_proposals(state, tuning);
    }
    if state.z.iter().any(|z| !z.is_finite()) {
        return Err(Error::NonFinite {
            what: "latent process".into(),
            iteration: 0,
        });
    }

    if !ctx.clamp.sigma2 {
        let (a, b) = sigma2_posterior(
            priors.sigma2_shape,
            priors.sigma2_scale,
            state.z.iter().zip(&mu).map(|(z, m)| z - m),
        );
        state.sigma2 = sample_inverse_gamma(a, b, rng);
    }
    debug_assert!(state.sigma2 > 0.0 && state.phi > 0.0 && state.phi < 1.0);

    if !ctx.clamp.coefficients {
        update_guilds(
            ctx,
            &state.z,
            &state.alpha,
            state.sigma2,
            priors.gamma_variance,
            &mut state.trees,
            &mut state.gammas,
            rng,
            log,
        )?;
        update_intercepts(
            ctx,
            &state.z,
            &partitions_of(&state.trees),
            &state.gammas,
            state.sigma2,
            priors.intercept_variance,
            &mut state.alpha,
            rng,
        )?;
    }
    if !state.sigma2.is_finite() || state.alpha.iter().any(|a| !a.is_finite()) {
        return Err(Error::NonFinite {
            what: "process variance or intercepts".into(),
            iteration: 0,
        });
    }
    Ok(())
}

/// Draws `z ~ N(mu, sigma2)` (exposed for moment checks).
pub fn sample_latent_prior<R: Rng + ?Sized>(mu: f64, sigma2: f64, rng: &mut R) -> f64 {
    Normal::new(mu, sigma2.sqrt()).expect("positive variance").sample(rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{collect_draws, ChainConfig, ChainSettings, Clamp};
    use crate::data::Family;
    use crate::stats::{batch_means_se, sample_variance};
    use crate::ChainRng;
    use rand::SeedableRng;

    #[test]
    fn inflation_probability_arithmetic() {
        let p = inflation_probability(0.5, 0.0);
        assert!((p - 1.0 / (1.0 + (-1.0f64).exp())).abs() < 1e-15);
        assert!((p - 0.7311).abs() < 5e-5);
        let mut rng = ChainRng::seed_from_u64(1);
        let n = 200_000;
        let mut w = vec![false; n];
        update_inflation_indicators(&mut w, &vec![0; n], &vec![0.0; n], 0.5, &mut rng);
        let freq = w.iter().filter(|&&b| b).count() as f64 / n as f64;
        assert!((freq - p).abs() < 3.0 * (p * (1.0 - p) / n as f64).sqrt() + 1e-3);
    }

    #[test]
    fn positive_counts_never_inflated() {
        let mut rng = ChainRng::seed_from_u64(2);
        let mut w = vec![true; 3];
        update_inflation_indicators(&mut w, &[5, 0, 1], &[0.0, 0.0, 0.0], 0.99, &mut rng);
        assert!(!w[0] && !w[2]);
        let mut w = vec![true; 100];
        update_inflation_indicators(&mut w, &[0; 100], &[0.0; 100], 0.0, &mut rng);
        assert!(w.iter().all(|&b| !b));
    }

    #[test]
    fn phi_conjugacy() {
        let mut w = vec![false; 10];
        w[..3].iter_mut().for_each(|b| *b = true);
        assert_eq!(phi_posterior(&w), (4.0, 8.0));
        assert_eq!(phi_posterior(&[true; 7]), (8.0, 1.0));
        let mut rng = ChainRng::seed_from_u64(3);
        let draws: Vec<f64> = (0..100_000).map(|_| update_phi(&w, &mut rng)).collect();
        assert!((mean(&draws) - 1.0 / 3.0).abs() < 0.003);
        let half: Vec<bool> = (0..100_000).map(|i| i % 2 == 0).collect();
        assert!((update_phi(&half, &mut rng) - 0.5).abs() < 0.01);
    }

    #[test]
    fn sigma2_conjugacy() {
        // two residuals with squared sum 2
        let (a, b) = sigma2_posterior(2.01, 1.0, [1.0, -1.0]);
        assert!((a - 3.01).abs() < 1e-12 && (b - 2.0).abs() < 1e-12);
        assert_eq!(sigma2_posterior(2.01, 1.0, std::iter::empty()), (2.01, 1.0));
        let mut rng = ChainRng::seed_from_u64(4);
        let draws: Vec<f64> = (0..200_000).map(|_| sample_inverse_gamma(a, b, &mut rng)).collect();
        // inverse gamma mean b / (a - 1)
        assert!((mean(&draws) - 2.0 / 2.01).abs() < 0.01, "{}", mean(&draws));
        let v: f64 = 2.5;
        let resid: Vec<f64> = (0..50_000)
            .map(|_| v.sqrt() * Distribution::<f64>::sample(&StandardNormal, &mut rng))
            .collect();
        let (a, b) = sigma2_posterior(2.01, 1.0, resid);
        assert!((b / (a - 1.0) - v).abs() < 0.05);
    }

    /// Posterior mean of `z` given `y`, prior `N(mu, s2)`, by dense quadrature.
    fn quadrature_mean(y: u32, mu: f64, s2: f64) -> f64 {
        let (lo, hi, n) = (mu - 12.0, mu + 12.0, 200_001);
        let h = (hi - lo) / (n - 1) as f64;
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..n {
            let z = lo + i as f64 * h;
            let wgt = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
            let d = wgt * (-0.5 * (z - mu).powi(2) / s2 + y as f64 * z - z.exp()).exp();
            num += z * d;
            den += d;
        }
        num / den
    }

    #[test]
    fn single_cell_latent_matches_quadrature() {
        let oracle = quadrature_mean(3, 0.0, 1.0);
        let mut rng = ChainRng::seed_from_u64(5);
        let (mut z, mut acc) = (0.0, 0usize);
        let n = 400_000;
        let mut xs = Vec::with_capacity(n);
        for _ in 0..n {
            let (nz, ok) = metropolis_step(z, 0.0, 1.0, 1.2, poisson_kernel(3), &mut rng);
            z = nz;
            acc += ok as usize;
            xs.push(z);
        }
        assert!((mean(&xs) - oracle).abs() < 0.02, "{} vs {oracle}", mean(&xs));
        assert!(acc > n / 5);
    }

    #[test]
    fn gaussian_pseudo_likelihood_is_exact() {
        // prior N(1, 2), pseudo-observation 3 with unit variance:
        // posterior precision 1.5, mean (0.5 + 3) / 1.5
        let mut rng = ChainRng::seed_from_u64(6);
        let mut z = 0.0;
        let xs: Vec<f64> = (0..300_000)
            .map(|_| {
                z = metropolis_step(z, 1.0, 2.0, 1.5, |v| -0.5 * (3.0 - v).powi(2), &mut rng).0;
                z
            })
            .collect();
        let se = batch_means_se(&xs);
        assert!((mean(&xs) - 3.5 / 1.5).abs() < 4.0 * se);
        assert!((sample_variance(&xs) - 1.0 / 1.5).abs() < 0.02);
    }

    #[test]
    fn large_count_concentrates_near_log_count() {
        let mut rng = ChainRng::seed_from_u64(7);
        let mut z = 0.0;
        let mut xs = Vec::new();
        for it in 0..60_000 {
            z = metropolis_step(z, 0.0, 1000.0, 0.03, poisson_kernel(1000), &mut rng).0;
            if it > 10_000 {
                xs.push(z);
            }
        }
        assert!((mean(&xs) - 1000f64.ln()).abs() < 0.01);
    }

    #[test]
    fn inflated_cells_draw_from_prior() {
        let mut rng = ChainRng::seed_from_u64(8);
        let xs: Vec<f64> = (0..200_000).map(|_| sample_latent_prior(-1.0, 0.5, &mut rng)).collect();
        assert!((mean(&xs) + 1.0).abs() < 0.01);
        assert!((sample_variance(&xs) - 0.5).abs() < 0.01);
    }

    fn counts(seed: u64) -> CommunityData {
        use crate::simulate::{simulate, SimSpec};
        let slopes = vec![vec![vec![0.6], vec![0.6], vec![-0.4]]];
        let mut spec = SimSpec::from_species_slopes(Family::Zip, 40, vec![1.0, 0.5, 0.8], &slopes).unwrap();
        spec.seed = seed;
        simulate(&spec).unwrap().data
    }

    fn zip_cfg(iterations: usize, burn: usize) -> ChainConfig {
        ChainConfig::new(
            Family::Zip,
            ChainSettings {
                iterations,
                thin: 1,
                burn,
                seed: 11,
            },
            0.01,
        )
    }

    #[test]
    fn chain_keeps_state_invariants_and_adapts() {
        let data = counts(1);
        let cfg = zip_cfg(2000, 1000);
        let (draws, report) = collect_draws(&data, &cfg).unwrap();
        assert_eq!(draws.len(), 1000);
        for d in &draws {
            let (phi, s2) = (d.phi.unwrap(), d.sigma2.unwrap());
            assert!(phi > 0.0 && phi < 1.0 && s2 > 0.0);
        }
        let rate = report.acceptance_rate.unwrap();
        assert!((rate - 0.44).abs() < 0.08, "{rate}");
    }

    #[test]
    fn clamped_blocks_stay_fixed() {
        let data = counts(2);
        let mut cfg = zip_cfg(300, 100);
        cfg.clamp = Clamp {
            tree: true,
            coefficients: true,
            sigma2: true,
        };
        let (draws, _) = collect_draws(&data, &cfg).unwrap();
        let first = &draws[0];
        assert!(draws.iter().all(|d| d.alpha == first.alpha && d.sigma2 == Some(1.0)));
        assert!(draws.iter().any(|d| d.phi != first.phi));
    }
}
