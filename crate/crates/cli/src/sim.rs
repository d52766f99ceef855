//! Simulation spec files and the `simulate` verb.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use guildtree::simulate::{simulate, SimSpec, Simulated};
use guildtree::Family;
use serde::{Deserialize, Serialize};

use crate::ingest::write_sites;

/// TOML simulation spec. `slopes` holds one `J x K` table per period;
/// species with identical rows share a guild.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimFile {
    pub family: Family,
    pub n_sites: usize,
    #[serde(default)]
    pub n_holdout: usize,
    pub intercepts: Vec<f64>,
    pub slopes: Vec<Vec<Vec<f64>>>,
    #[serde(default = "default_phi")]
    pub phi: f64,
    #[serde(default = "default_sigma2")]
    pub sigma2: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn default_phi() -> f64 {
    0.2
}

fn default_sigma2() -> f64 {
    0.25
}

fn default_seed() -> u64 {
    1
}

impl SimFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn spec(&self) -> Result<SimSpec> {
        let mut spec = SimSpec::from_species_slopes(self.family, self.n_sites, self.intercepts.clone(), &self.slopes)?;
        spec.n_holdout = self.n_holdout;
        spec.phi = self.phi;
        spec.sigma2 = self.sigma2;
        spec.seed = self.seed;
        spec.validate()?;
        Ok(spec)
    }
}

/// Named built-in designs.
pub fn preset(name: &str, seed: u64) -> Result<SimSpec> {
    match name {
        "two-guild" => Ok(SimSpec::two_guild_probit(seed)),
        other => anyhow::bail!("unknown preset `{other}` (available: two-guild)"),
    }
}

/// Writes the site table and a JSON truth sidecar.
pub fn write_simulation(spec: &SimSpec, out: &Path, truth: Option<PathBuf>) -> Result<Simulated> {
    let sim = simulate(spec)?;
    let mut buf = Vec::new();
    write_sites(&mut buf, &sim.data)?;
    std::fs::write(out, buf).with_context(|| format!("writing {}", out.display()))?;
    let truth_path = truth.unwrap_or_else(|| out.with_extension("truth.json"));
    std::fs::write(&truth_path, serde_json::to_vec_pretty(&sim.truth)?)
        .with_context(|| format!("writing {}", truth_path.display()))?;
    Ok(sim)
}
