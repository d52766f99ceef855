//! Bayesian multi-species distribution models with a tree shrinkage prior.
//!
//! Species are grouped into guilds by a binary tree that is re-estimated
//! inside every Gibbs iteration by a model-based recursive partitioning
//! learner. Members of a guild share regression coefficients, so a model
//! with `J` species and `K` predictors carries `G * K` slopes instead of
//! `J * K`.
//!
//! Two data families are supported: presence-absence data through a probit
//! link ([`probit`]) and relative abundance through a zero-inflated Poisson
//! with a log-normal latent process ([`zip`]). Posterior draws are
//! summarised by [`inference`]; small problems can be checked against exact
//! model averaging in [`oracle`].

pub mod chain;
pub mod data;
pub mod design;
mod error;
mod gibbs;
pub mod inference;
pub mod learner;
mod linalg;
pub mod oracle;
pub mod probit;
pub mod simulate;
pub mod stats;
pub mod tree;
pub mod zip;

pub use chain::{ChainCheckpoint, ChainConfig, ChainSettings, DrawSink, FamilyState, Priors};
pub use data::{CommunityData, Family, Standardization};
pub use design::{
    count_guild_compositions, expand_guild_design, model_dimension, species_coefficients, GuildCoefficients,
    ModelDimension, SpeciesCoefficients,
};
pub use error::{Error, Result};
pub use inference::{PosteriorSummary, Scores};
pub use learner::{fit_tree, sample_tree_prior, LearnerConfig, PseudoData, TreeFit, TreePriorConfig};
pub use tree::{partition_from_tree, GuildPartition, GuildTree, TreeNode};

/// One retained MCMC state.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PosteriorDraw {
    pub index: usize,
    /// Per-species intercepts.
    pub alpha: Vec<f64>,
    /// Guild tree and guild coefficients, one entry per period.
    pub periods: Vec<PeriodDraw>,
    /// Zero-inflation probability (abundance family only).
    pub phi: Option<f64>,
    /// Latent process variance (abundance family only).
    pub sigma2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PeriodDraw {
    pub tree: GuildTree,
    pub gamma: GuildCoefficients,
}

impl PeriodDraw {
    pub fn partition(&self) -> GuildPartition {
        partition_from_tree(&self.tree)
    }
}

/// Rng used by every sampler; seeded streams are reproducible across
/// platforms and serialisable for checkpoints.
pub type ChainRng = rand_chacha::ChaCha8Rng;
