//! Declarative run configuration (TOML).

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use guildtree::chain::{Clamp, ZipTuning};
use guildtree::{ChainConfig, ChainSettings, Family, LearnerConfig, Priors};
use serde::{Deserialize, Serialize};

/// One threshold for every period or one per period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AlphaSetting {
    Single(f64),
    PerPeriod(Vec<f64>),
}

impl AlphaSetting {
    /// 0.05 for presence-absence, 0.01 for abundance.
    pub fn family_default(family: Family) -> Self {
        AlphaSetting::Single(match family {
            Family::Probit => LearnerConfig::default().alpha,
            Family::Zip => 0.01,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    /// Site table; relative paths resolve against the config file.
    pub path: PathBuf,
    /// Response columns. When omitted every column that is not a predictor
    /// or a reserved column is a species.
    #[serde(default)]
    pub species: Option<Vec<String>>,
    pub predictors: Vec<String>,
    #[serde(default = "yes")]
    pub standardize: bool,
    /// Randomly hold out this fraction of sites (seeded by the chain seed).
    #[serde(default)]
    pub holdout_fraction: Option<f64>,
    /// Separate holdout site table with the same columns.
    #[serde(default)]
    pub holdout_path: Option<PathBuf>,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChainSection {
    pub iterations: usize,
    pub thin: usize,
    /// Counted in retained (thinned) draws.
    pub burn: usize,
    pub seed: u64,
    /// Persist a resumable checkpoint every this many retained draws.
    pub checkpoint_every: usize,
    /// Independent chains, run concurrently and pooled for summaries.
    pub chains: usize,
}

impl Default for ChainSection {
    fn default() -> Self {
        let c = ChainSettings::default();
        Self {
            iterations: c.iterations,
            thin: c.thin,
            burn: c.burn,
            seed: c.seed,
            checkpoint_every: 500,
            chains: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnerSection {
    pub min_node_species: usize,
    pub max_exhaustive_subset: usize,
}

impl Default for LearnerSection {
    fn default() -> Self {
        let l = LearnerConfig::default();
        Self {
            min_node_species: l.min_node_species,
            max_exhaustive_subset: l.max_exhaustive_subset,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub family: Family,
    /// Defaults by family; see [`AlphaSetting::family_default`].
    #[serde(default)]
    pub alpha: Option<AlphaSetting>,
    /// Output directory; relative paths resolve against the config file.
    #[serde(default = "default_output")]
    pub output: PathBuf,
    pub data: DataSection,
    #[serde(default)]
    pub chain: ChainSection,
    #[serde(default)]
    pub priors: Priors,
    #[serde(default)]
    pub learner: LearnerSection,
    #[serde(default)]
    pub zip: ZipTuning,
    #[serde(default)]
    pub clamp: Clamp,
}

fn default_output() -> PathBuf {
    PathBuf::from("run")
}

impl RunConfig {
    /// Reads a config file and resolves its relative paths.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: RunConfig = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let parent = path
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .unwrap_or(Path::new("."));
        let base = std::path::absolute(parent)?;
        cfg.resolve_paths(&base);
        cfg.check()?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output);
        fix(&mut self.data.path);
        if let Some(h) = &mut self.data.holdout_path {
            fix(h);
        }
    }

    /// Fills family-dependent defaults so the echoed config is complete.
    pub fn resolved(mut self) -> Self {
        self.alpha = Some(self.alpha());
        if self.priors.intercept_variance.is_none() {
            self.priors.intercept_variance = Some(match self.family {
                Family::Probit => 1.0,
                Family::Zip => 1000.0,
            });
        }
        self
    }

    pub fn alpha(&self) -> AlphaSetting {
        self.alpha
            .clone()
            .unwrap_or_else(|| AlphaSetting::family_default(self.family))
    }

    pub fn check(&self) -> Result<()> {
        if self.chain.chains == 0 {
            bail!("chains must be at least 1");
        }
        if let Some(f) = self.data.holdout_fraction {
            if !(0.0..1.0).contains(&f) {
                bail!("holdout_fraction must lie in [0, 1), got {f}");
            }
            if self.data.holdout_path.is_some() {
                bail!("give either holdout_fraction or holdout_path, not both");
            }
        }
        if self.data.predictors.is_empty() {
            bail!("at least one predictor must be declared");
        }
        self.chain_settings().validate()?;
        self.priors.validate()?;
        Ok(())
    }

    pub fn chain_settings(&self) -> ChainSettings {
        ChainSettings {
            iterations: self.chain.iterations,
            thin: self.chain.thin,
            burn: self.chain.burn,
            seed: self.chain.seed,
        }
    }

    pub fn chain_config(&self) -> ChainConfig {
        let alpha = self.alpha();
        let base = match &alpha {
            AlphaSetting::Single(a) => *a,
            AlphaSetting::PerPeriod(v) => v.first().copied().unwrap_or(0.0),
        };
        let mut cfg = ChainConfig::new(self.family, self.chain_settings(), base);
        cfg.learner.min_node_species = self.learner.min_node_species;
        cfg.learner.max_exhaustive_subset = self.learner.max_exhaustive_subset;
        if let AlphaSetting::PerPeriod(v) = &alpha {
            cfg.period_alpha = Some(v.clone());
        }
        cfg.priors = self.priors;
        cfg.zip = self.zip;
        cfg.clamp = self.clamp;
        cfg.checkpoint_every = self.chain.checkpoint_every;
        cfg
    }
}
