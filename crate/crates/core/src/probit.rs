//! Presence-absence sampler: probit link through unit-variance auxiliary
//! variables, with the guild tree re-learned every iteration.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::chain::{ChainConfig, StepContext, WarningLog};
use crate::data::{CommunityData, Family};
use crate::design::GuildCoefficients;
use crate::gibbs::{mean_surface, partitions_of, update_guilds, update_intercepts};
use crate::stats::{normal_quantile, sample_truncated_normal, Side};
use crate::tree::GuildTree;
use crate::{Error, PeriodDraw, PosteriorDraw, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbitPriors {
    pub intercept_variance: f64,
    pub gamma_variance: f64,
}

impl Default for ProbitPriors {
    fn default() -> Self {
        Self {
            intercept_variance: 1.0,
            gamma_variance: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbitState {
    /// Auxiliary latent variables, row-major `n x J`.
    pub aux: Vec<f64>,
    pub alpha: Vec<f64>,
    pub trees: Vec<GuildTree>,
    pub gammas: Vec<GuildCoefficients>,
}

impl ProbitState {
    /// Intercepts at the probit of each species' prevalence, one guild per
    /// period, zero slopes. Auxiliaries start at a unit step on the observed side.
    pub fn initial(data: &CommunityData) -> Self {
        let alpha: Vec<f64> = data
            .prevalence()
            .into_iter()
            .map(|p| normal_quantile(p.clamp(0.01, 0.99)))
            .collect();
        let aux = data
            .responses()
            .iter()
            .map(|&y| if y > 0 { 1.0 } else { -1.0 })
            .collect();
        let (j, k, t) = (data.n_species(), data.n_predictors(), data.n_periods());
        Self {
            aux,
            alpha,
            trees: vec![GuildTree::single(j); t],
            gammas: vec![GuildCoefficients::zeros(1, k); t],
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
            phi: None,
            sigma2: None,
        }
    }
}

/// Redraws every auxiliary variable from its truncated normal conditional.
pub(crate) fn update_auxiliary<R: Rng + ?Sized>(
    aux: &mut [f64],
    responses: &[u32],
    mu: &[f64],
    rng: &mut R,
) -> Result<()> {
    for ((a, &y), &m) in aux.iter_mut().zip(responses).zip(mu) {
        if !m.is_finite() {
            return Err(Error::NonFinite {
                what: "linear predictor".into(),
                iteration: 0,
            });
        }
        let side = if y > 0 { Side::Positive } else { Side::Negative };
        *a = sample_truncated_normal(m, 1.0, side, rng);
    }
    debug_assert!(aux.iter().zip(responses).all(|(&a, &y)| (a > 0.0) == (y > 0)));
    Ok(())
}

/// One full sweep: auxiliaries, guild trees, guild coefficients, intercepts.
pub(crate) fn gibbs_step_probit<R: Rng + ?Sized>(
    state: &mut ProbitState,
    ctx: &StepContext<'_>,
    priors: &ProbitPriors,
    rng: &mut R,
    log: &mut WarningLog,
) -> Result<()> {
    let data = ctx.data;
    let mu = mean_surface(ctx, &state.alpha, &partitions_of(&state.trees), &state.gammas);
    update_auxiliary(&mut state.aux, data.responses(), &mu, rng)?;
    if ctx.clamp.coefficients {
        return Ok(());
    }
    update_guilds(
        ctx,
        &state.aux,
        &state.alpha,
        1.0,
        priors.gamma_variance,
        &mut state.trees,
        &mut state.gammas,
        rng,
        log,
    )?;
    update_intercepts(
        ctx,
        &state.aux,
        &partitions_of(&state.trees),
        &state.gammas,
        1.0,
        priors.intercept_variance,
        &mut state.alpha,
        rng,
    )?;
    if state.alpha.iter().any(|a| !a.is_finite()) {
        return Err(Error::NonFinite {
            what: "intercepts".into(),
            iteration: 0,
        });
    }
    Ok(())
}

/// Runs a presence-absence chain and returns its retained draws.
pub fn run_chain_probit(data: &CommunityData, cfg: &ChainConfig) -> Result<Vec<PosteriorDraw>> {
    if cfg.family != Family::Probit {
        return Err(Error::InvalidConfig("run_chain_probit needs the probit family".into()));
    }
    crate::chain::collect_draws(data, cfg).map(|(d, _)| d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::ChainSettings;
    use crate::simulate::{simulate, SimSpec};
    use crate::stats::mean;
    use crate::ChainRng;
    use rand::SeedableRng;

    fn small(seed: u64) -> CommunityData {
        let slopes = vec![vec![vec![1.0], vec![1.0], vec![-1.0]]];
        let mut spec = SimSpec::from_species_slopes(Family::Probit, 60, vec![0.0, 0.2, -0.2], &slopes).unwrap();
        spec.seed = seed;
        simulate(&spec).unwrap().data
    }

    fn cfg(alpha: f64, iterations: usize, seed: u64) -> ChainConfig {
        ChainConfig::new(
            Family::Probit,
            ChainSettings {
                iterations,
                thin: 1,
                burn: iterations / 5,
                seed,
            },
            alpha,
        )
    }

    #[test]
    fn initial_state_uses_prevalence() {
        let data = CommunityData::new(
            Family::Probit,
            vec![1, 0, 1, 0, 1, 1, 0, 0],
            vec![0.0, 1.0, 2.0, 3.0],
            vec!["a".into(), "b".into()],
            vec!["x".into()],
            None,
            None,
        )
        .unwrap();
        let s = ProbitState::initial(&data);
        assert_eq!(s.alpha[0], normal_quantile(0.75));
        assert_eq!(s.alpha[1], normal_quantile(0.25));
        assert_eq!(s.trees[0].n_guilds(), 1);
        assert!(s.gammas[0].as_flat().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn auxiliaries_respect_observations() {
        let mut rng = ChainRng::seed_from_u64(3);
        let y = [1u32, 0, 1, 0];
        let mu = [-6.0, 6.0, 0.0, -40.0];
        let mut aux = vec![0.0; 4];
        for _ in 0..1000 {
            update_auxiliary(&mut aux, &y, &mu, &mut rng).unwrap();
            assert!(aux[0] > 0.0 && aux[1] < 0.0 && aux[2] > 0.0 && aux[3] < 0.0);
        }
        assert!(update_auxiliary(&mut aux, &y, &[f64::NAN, 0.0, 0.0, 0.0], &mut rng).is_err());
    }

    #[test]
    fn all_present_species_has_positive_intercept() {
        let mut data = small(5);
        let j = data.n_species();
        let mut y = data.responses().to_vec();
        for i in 0..data.n_sites() {
            y[i * j] = 1;
        }
        data = CommunityData::new(
            Family::Probit,
            y,
            data.predictors().to_vec(),
            data.species_names().to_vec(),
            data.predictor_names().to_vec(),
            None,
            None,
        )
        .unwrap();
        let draws = run_chain_probit(&data, &cfg(0.05, 1500, 2)).unwrap();
        let a0: Vec<f64> = draws.iter().map(|d| d.alpha[0]).collect();
        assert!(mean(&a0) > 1.0, "{}", mean(&a0));
    }

    #[test]
    fn same_seed_same_draws() {
        let data = small(1);
        let a = run_chain_probit(&data, &cfg(0.05, 200, 9)).unwrap();
        let b = run_chain_probit(&data, &cfg(0.05, 200, 9)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 160);
        let c = run_chain_probit(&data, &cfg(0.05, 200, 10)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn extreme_alphas_fix_guild_count() {
        let data = small(2);
        let pooled = run_chain_probit(&data, &cfg(0.0, 100, 1)).unwrap();
        assert!(pooled.iter().all(|d| d.periods[0].tree.n_guilds() == 1));
        let split = run_chain_probit(&data, &cfg(1.0, 100, 1)).unwrap();
        assert!(split.iter().all(|d| d.periods[0].tree.n_guilds() == 3));
    }

    #[test]
    fn wrong_family_rejected() {
        let data = small(1);
        let mut c = cfg(0.05, 100, 1);
        c.family = Family::Zip;
        assert!(run_chain_probit(&data, &c).is_err());
    }
}
