//! Fit orchestration, run manifests and resume.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use guildtree::chain::{resume_chain, run_chain, ChainReport};
use guildtree::inference::{trace_diagnostics, TraceDiagnostic};
use guildtree::{ChainConfig, CommunityData, Family, PosteriorDraw, PosteriorSummary, Standardization};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::draws::{read_checkpoint, read_draws, write_atomic, RunSink, CHECKPOINT_FILE, DRAWS_FILE};
use crate::ingest::{prepare, Prepared};
use crate::report::write_summary;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Running,
    Complete,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub engine: String,
    pub engine_version: String,
    pub status: RunStatus,
    pub error: Option<String>,
    /// Resolved configuration, every default filled in.
    pub config: RunConfig,
    pub data_sha256: String,
    pub n_sites: usize,
    pub n_holdout_sites: usize,
    pub n_species: usize,
    pub n_predictors: usize,
    pub n_periods: usize,
    pub standardization: Option<Standardization>,
    /// Total over all chains.
    pub retained: usize,
    /// Summed over the original run and any resumes.
    pub wall_time_seconds: f64,
    pub warnings: BTreeMap<String, usize>,
    pub acceptance_rate: Option<f64>,
    pub trace: Vec<TraceDiagnostic>,
}

impl RunManifest {
    fn new(cfg: &RunConfig, data: &Prepared) -> Self {
        Self {
            engine: "guildtree".into(),
            engine_version: env!("CARGO_PKG_VERSION").into(),
            status: RunStatus::Running,
            error: None,
            config: cfg.clone().resolved(),
            data_sha256: data.checksum.clone(),
            n_sites: data.fit.n_sites(),
            n_holdout_sites: data.holdout.as_ref().map_or(0, |h| h.n_sites()),
            n_species: data.fit.n_species(),
            n_predictors: data.fit.n_predictors(),
            n_periods: data.fit.n_periods(),
            standardization: data.standardization.clone(),
            retained: 0,
            wall_time_seconds: 0.0,
            warnings: BTreeMap::new(),
            acceptance_rate: None,
            trace: Vec::new(),
        }
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let bytes = std::fs::read(&path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_slice(&bytes).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let json = serde_json::to_vec_pretty(self)?;
        write_atomic(&dir.join(MANIFEST_FILE), &json).with_context(|| format!("writing manifest in {}", dir.display()))
    }
}

pub struct FitOutcome {
    pub dir: PathBuf,
    pub manifest: RunManifest,
    pub summary: PosteriorSummary,
    pub species: Vec<String>,
    pub predictors: Vec<String>,
}

/// Draw directories of a run: the run directory itself for one chain,
/// `chain-1`, `chain-2`, ... below it otherwise.
pub fn chain_dirs(dir: &Path, n_chains: usize) -> Vec<PathBuf> {
    if n_chains <= 1 {
        vec![dir.to_path_buf()]
    } else {
        (1..=n_chains).map(|c| dir.join(format!("chain-{c}"))).collect()
    }
}

/// Runs one chain into `dir`, continuing from its checkpoint when resuming.
fn sample_chain(
    dir: &Path,
    data: &CommunityData,
    cfg: &ChainConfig,
    resume: bool,
    halt_after: Option<usize>,
) -> Result<ChainReport> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let report = if resume && dir.join(CHECKPOINT_FILE).exists() {
        let cp = read_checkpoint(dir)?;
        let mut sink = RunSink::reopen(dir, cp.emitted)?;
        sink.halt_after = halt_after;
        let r = resume_chain(data, cfg, cp, &mut sink)?;
        sink.finish()?;
        r
    } else {
        let abundance = cfg.family == Family::Zip;
        let mut sink = RunSink::create(dir, data.species_names(), data.n_periods(), abundance)?;
        sink.halt_after = halt_after;
        let r = run_chain(data, cfg, &mut sink)?;
        sink.finish()?;
        r
    };
    Ok(report)
}

/// Runs (or resumes) every chain and writes draws, summaries and the manifest.
pub fn fit(cfg: &RunConfig, resume: bool, halt_after: Option<usize>) -> Result<FitOutcome> {
    let start = Instant::now();
    let data = prepare(cfg)?;
    let dir = cfg.output.clone();
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let chain_cfg = cfg.chain_config();
    chain_cfg.validate(&data.fit)?;
    let mut manifest = RunManifest::new(cfg, &data);
    if resume {
        let old = RunManifest::load(&dir)?;
        if old.data_sha256 != data.checksum {
            bail!(
                "data checksum {} does not match the run being resumed ({})",
                data.checksum,
                old.data_sha256
            );
        }
        if old.config != manifest.config {
            bail!("configuration differs from the run being resumed");
        }
        manifest.wall_time_seconds = old.wall_time_seconds;
    }
    let prior_wall = manifest.wall_time_seconds;
    manifest.save(&dir)?;
    let dirs = chain_dirs(&dir, cfg.chain.chains);
    let result = (|| -> Result<_> {
        let reports = dirs
            .par_iter()
            .enumerate()
            .map(|(c, d)| {
                let cfg = ChainConfig {
                    stream: c as u64,
                    ..chain_cfg.clone()
                };
                sample_chain(d, &data.fit, &cfg, resume, halt_after).with_context(|| format!("chain {}", c + 1))
            })
            .collect::<Result<Vec<_>>>()?;
        let chains = dirs
            .iter()
            .map(|d| read_draws(&d.join(DRAWS_FILE)))
            .collect::<Result<Vec<_>>>()?;
        let summary = write_summary(&dir, &chains.concat(), &data.fit, data.holdout.as_ref())?;
        Ok((reports, chains, summary))
    })();
    manifest.wall_time_seconds = prior_wall + start.elapsed().as_secs_f64();
    match result {
        Ok((reports, chains, summary)) => {
            manifest.status = RunStatus::Complete;
            manifest.retained = chains.iter().map(Vec::len).sum();
            for r in &reports {
                for (w, n) in &r.warnings {
                    *manifest.warnings.entry(w.clone()).or_default() += n;
                }
            }
            let rates: Vec<f64> = reports.iter().filter_map(|r| r.acceptance_rate).collect();
            manifest.acceptance_rate = (!rates.is_empty()).then(|| rates.iter().sum::<f64>() / rates.len() as f64);
            manifest.trace = trace_diagnostics(&chains, data.fit.species_names(), data.fit.predictor_names());
            manifest.save(&dir)?;
            Ok(FitOutcome {
                dir,
                manifest,
                summary,
                species: data.fit.species_names().to_vec(),
                predictors: data.fit.predictor_names().to_vec(),
            })
        }
        Err(e) => {
            manifest.status = RunStatus::Failed;
            manifest.error = Some(format!("{e:#}"));
            manifest.save(&dir)?;
            Err(e)
        }
    }
}

/// A finished run reloaded from disk.
pub struct LoadedRun {
    pub manifest: RunManifest,
    pub data: Prepared,
    pub draws: Vec<PosteriorDraw>,
}

/// Reloads a run directory, re-ingesting its data and checking the checksum.
pub fn load_run(dir: &Path) -> Result<LoadedRun> {
    let manifest = RunManifest::load(dir)?;
    let data = prepare(&manifest.config)?;
    if data.checksum != manifest.data_sha256 {
        bail!(
            "data files changed since the run: checksum {} but manifest records {}",
            data.checksum,
            manifest.data_sha256
        );
    }
    let mut draws = Vec::new();
    for d in chain_dirs(dir, manifest.config.chain.chains) {
        let path = d.join(DRAWS_FILE);
        let chain = read_draws(&path)?;
        if chain.is_empty() {
            bail!("{} holds no draws", path.display());
        }
        draws.extend(chain);
    }
    Ok(LoadedRun { manifest, data, draws })
}
