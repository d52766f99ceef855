//! Chain configuration, the shared run loop, draw sinks and checkpoints.

use std::collections::BTreeMap;

use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::data::{CommunityData, Family};
use crate::learner::LearnerConfig;
use crate::probit::{ProbitPriors, ProbitState};
use crate::zip::{ZipPriors, ZipState};
use crate::{ChainRng, Error, PosteriorDraw, Result};

/// Iteration bookkeeping. `burn` counts retained (thinned) draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainSettings {
    pub iterations: usize,
    pub thin: usize,
    pub burn: usize,
    pub seed: u64,
}

impl Default for ChainSettings {
    fn default() -> Self {
        Self {
            iterations: 100_000,
            thin: 10,
            burn: 500,
            seed: 1,
        }
    }
}

impl ChainSettings {
    pub fn validate(&self) -> Result<()> {
        if self.thin == 0 || self.iterations < self.thin {
            return Err(Error::InvalidConfig(format!(
                "need iterations >= thin >= 1, got iterations={} thin={}",
                self.iterations, self.thin
            )));
        }
        if self.burn >= self.iterations / self.thin {
            return Err(Error::InvalidConfig(format!(
                "burn {} leaves no retained draws out of {}",
                self.burn,
                self.iterations / self.thin
            )));
        }
        Ok(())
    }

    /// `floor(iterations / thin) - burn`.
    pub fn retained(&self) -> usize {
        self.iterations / self.thin - self.burn
    }

    /// Iterations spent before the first retained draw.
    pub fn burn_in_iterations(&self) -> usize {
        self.burn * self.thin
    }
}

/// Prior hyperparameters shared by both families. The intercept variance
/// defaults to 1 (probit) or 1000 (abundance).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Priors {
    pub gamma_variance: f64,
    pub intercept_variance: Option<f64>,
    pub sigma2_shape: f64,
    pub sigma2_scale: f64,
}

impl Default for Priors {
    fn default() -> Self {
        Self {
            gamma_variance: 10.0,
            intercept_variance: None,
            sigma2_shape: 2.01,
            sigma2_scale: 1.0,
        }
    }
}

impl Priors {
    pub fn probit(&self) -> ProbitPriors {
        ProbitPriors {
            intercept_variance: self.intercept_variance.unwrap_or(1.0),
            gamma_variance: self.gamma_variance,
        }
    }

    pub fn zip(&self) -> ZipPriors {
        ZipPriors {
            intercept_variance: self.intercept_variance.unwrap_or(1000.0),
            gamma_variance: self.gamma_variance,
            sigma2_shape: self.sigma2_shape,
            sigma2_scale: self.sigma2_scale,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.gamma_variance > 0.0
            && self.intercept_variance.is_none_or(|v| v > 0.0)
            && self.sigma2_shape > 0.0
            && self.sigma2_scale > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig("prior hyperparameters must be positive".into()))
        }
    }
}

/// Blocks held at their current values instead of being updated.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Clamp {
    /// Skip the learner and keep the current trees.
    pub tree: bool,
    /// Keep intercepts and guild coefficients; trees are then kept as well.
    pub coefficients: bool,
    pub sigma2: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ZipTuning {
    pub target_acceptance: f64,
    /// Iterations per adaptation batch during burn-in.
    pub adapt_batch: usize,
}

impl Default for ZipTuning {
    fn default() -> Self {
        Self {
            target_acceptance: 0.44,
            adapt_batch: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub family: Family,
    pub chain: ChainSettings,
    pub learner: LearnerConfig,
    /// Optional per-period learner thresholds overriding `learner.alpha`.
    pub period_alpha: Option<Vec<f64>>,
    pub priors: Priors,
    pub zip: ZipTuning,
    pub clamp: Clamp,
    /// Emit a checkpoint every this many retained draws; zero disables.
    pub checkpoint_every: usize,
    /// Generator stream under `chain.seed`; chains with distinct streams
    /// are independent.
    #[serde(default)]
    pub stream: u64,
}

impl ChainConfig {
    pub fn new(family: Family, chain: ChainSettings, alpha: f64) -> Self {
        Self {
            family,
            chain,
            learner: LearnerConfig::with_alpha(alpha),
            period_alpha: None,
            priors: Priors::default(),
            zip: ZipTuning::default(),
            clamp: Clamp::default(),
            checkpoint_every: 0,
            stream: 0,
        }
    }

    /// Learner settings for each of `n_periods` periods.
    pub fn learners(&self, n_periods: usize) -> Result<Vec<LearnerConfig>> {
        match &self.period_alpha {
            None => Ok(vec![self.learner; n_periods]),
            Some(a) if a.len() == n_periods => {
                Ok(a.iter().map(|&alpha| LearnerConfig { alpha, ..self.learner }).collect())
            }
            Some(a) => Err(Error::InvalidConfig(format!(
                "{} per-period alphas for {} periods",
                a.len(),
                n_periods
            ))),
        }
    }

    pub fn validate(&self, data: &CommunityData) -> Result<()> {
        self.chain.validate()?;
        self.priors.validate()?;
        for l in self.learners(data.n_periods())? {
            l.validate()?;
        }
        if data.family() != self.family {
            return Err(Error::InvalidConfig(format!(
                "config family {} but data family {}",
                self.family.name(),
                data.family().name()
            )));
        }
        if !(0.0..1.0).contains(&self.zip.target_acceptance) || self.zip.adapt_batch == 0 {
            return Err(Error::InvalidConfig("bad Metropolis tuning".into()));
        }
        Ok(())
    }
}

/// Receives retained draws as they are produced.
pub trait DrawSink {
    fn accept(&mut self, draw: PosteriorDraw) -> Result<()>;

    fn checkpoint(&mut self, _checkpoint: &ChainCheckpoint) -> Result<()> {
        Ok(())
    }
}

impl DrawSink for Vec<PosteriorDraw> {
    fn accept(&mut self, draw: PosteriorDraw) -> Result<()> {
        self.push(draw);
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FamilyState {
    Probit(ProbitState),
    Zip(ZipState),
}

impl FamilyState {
    pub fn draw(&self, index: usize) -> PosteriorDraw {
        match self {
            FamilyState::Probit(s) => s.draw(index),
            FamilyState::Zip(s) => s.draw(index),
        }
    }
}

/// Everything needed to continue a chain exactly where it stopped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainCheckpoint {
    pub iteration: usize,
    pub emitted: usize,
    pub rng: ChainRng,
    pub state: FamilyState,
    pub warnings: BTreeMap<String, usize>,
}

/// Deduplicated warning counts.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WarningLog(pub BTreeMap<String, usize>);

impl WarningLog {
    pub fn push(&mut self, msg: impl Into<String>) {
        *self.0.entry(msg.into()).or_insert(0) += 1;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainReport {
    pub retained: usize,
    pub warnings: BTreeMap<String, usize>,
    /// Metropolis acceptance rate over retained-phase iterations (abundance only).
    pub acceptance_rate: Option<f64>,
}

/// Precomputed per-iteration context.
pub(crate) struct StepContext<'a> {
    pub data: &'a CommunityData,
    pub period_sites: Vec<Vec<usize>>,
    pub learners: Vec<LearnerConfig>,
    pub clamp: Clamp,
}

impl<'a> StepContext<'a> {
    pub fn new(data: &'a CommunityData, cfg: &ChainConfig) -> Result<Self> {
        Ok(Self {
            data,
            period_sites: (0..data.n_periods()).map(|t| data.sites_in_period(t)).collect(),
            learners: cfg.learners(data.n_periods())?,
            clamp: cfg.clamp,
        })
    }
}

pub fn initial_state(data: &CommunityData, cfg: &ChainConfig) -> FamilyState {
    match cfg.family {
        Family::Probit => FamilyState::Probit(ProbitState::initial(data)),
        Family::Zip => FamilyState::Zip(ZipState::initial(data)),
    }
}

fn chain_rng(cfg: &ChainConfig) -> ChainRng {
    let mut rng = ChainRng::seed_from_u64(cfg.chain.seed);
    rng.set_stream(cfg.stream);
    rng
}

/// Runs a chain from its initial state, streaming retained draws to `sink`.
pub fn run_chain(data: &CommunityData, cfg: &ChainConfig, sink: &mut dyn DrawSink) -> Result<ChainReport> {
    cfg.validate(data)?;
    let checkpoint = ChainCheckpoint {
        iteration: 0,
        emitted: 0,
        rng: chain_rng(cfg),
        state: initial_state(data, cfg),
        warnings: BTreeMap::new(),
    };
    continue_chain(data, cfg, checkpoint, sink)
}

/// Continues a chain from a checkpoint. Draws already emitted before the
/// checkpoint are not re-emitted.
pub fn resume_chain(
    data: &CommunityData,
    cfg: &ChainConfig,
    checkpoint: ChainCheckpoint,
    sink: &mut dyn DrawSink,
) -> Result<ChainReport> {
    cfg.validate(data)?;
    let family_matches = matches!(
        (&checkpoint.state, cfg.family),
        (FamilyState::Probit(_), Family::Probit) | (FamilyState::Zip(_), Family::Zip)
    );
    if !family_matches || checkpoint.iteration > cfg.chain.iterations {
        return Err(Error::InvalidConfig("checkpoint does not match configuration".into()));
    }
    continue_chain(data, cfg, checkpoint, sink)
}

fn continue_chain(
    data: &CommunityData,
    cfg: &ChainConfig,
    checkpoint: ChainCheckpoint,
    sink: &mut dyn DrawSink,
) -> Result<ChainReport> {
    let ctx = StepContext::new(data, cfg)?;
    let probit_priors = cfg.priors.probit();
    let zip_priors = cfg.priors.zip();
    let ChainCheckpoint {
        iteration: start,
        mut emitted,
        mut rng,
        mut state,
        warnings,
    } = checkpoint;
    let mut log = WarningLog(warnings);
    let settings = cfg.chain;
    let burn_iters = settings.burn_in_iterations();
    for it in start + 1..=settings.iterations {
        let step = match &mut state {
            FamilyState::Probit(s) => crate::probit::gibbs_step_probit(s, &ctx, &probit_priors, &mut rng, &mut log),
            FamilyState::Zip(s) => {
                let adapt = it <= burn_iters;
                if it == burn_iters + 1 {
                    s.reset_acceptance();
                }
                crate::zip::gibbs_step_zip(s, &ctx, &zip_priors, &cfg.zip, adapt, &mut rng, &mut log)
            }
        };
        step.map_err(|e| match e {
            Error::NonFinite { what, .. } => Error::NonFinite { what, iteration: it },
            other => other,
        })?;
        if it % settings.thin == 0 && it / settings.thin > settings.burn {
            sink.accept(state.draw(emitted))?;
            emitted += 1;
            if cfg.checkpoint_every > 0 && emitted % cfg.checkpoint_every == 0 {
                sink.checkpoint(&ChainCheckpoint {
                    iteration: it,
                    emitted,
                    rng: rng.clone(),
                    state: state.clone(),
                    warnings: log.0.clone(),
                })?;
            }
        }
    }
    let acceptance_rate = match &state {
        FamilyState::Zip(s) => s.acceptance_rate(),
        FamilyState::Probit(_) => None,
    };
    Ok(ChainReport {
        retained: emitted,
        warnings: log.0,
        acceptance_rate,
    })
}

/// Runs a chain and collects its retained draws.
pub fn collect_draws(data: &CommunityData, cfg: &ChainConfig) -> Result<(Vec<PosteriorDraw>, ChainReport)> {
    let mut draws = Vec::with_capacity(cfg.chain.retained());
    let report = run_chain(data, cfg, &mut draws)?;
    Ok((draws, report))
}

/// Runs `n_chains` chains concurrently on streams `0..n_chains` and
/// collects their draws in stream order.
pub fn collect_chains(
    data: &CommunityData,
    cfg: &ChainConfig,
    n_chains: usize,
) -> Result<Vec<(Vec<PosteriorDraw>, ChainReport)>> {
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..n_chains as u64)
            .map(|c| {
                let cfg = ChainConfig {
                    stream: c,
                    ..cfg.clone()
                };
                scope.spawn(move || collect_draws(data, &cfg))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("chain thread panicked"))
            .collect()
    })
}
