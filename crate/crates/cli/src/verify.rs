//! Engine against exact model averaging on a small synthetic community.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::Result;
use guildtree::chain::collect_draws;
use guildtree::inference::species_slope_draws;
use guildtree::oracle::{
    enumerate_partitions, exact_model_average_probit, ModelAverage, PartitionPrior, ReferenceSettings, DEFAULT_CAP,
};
use guildtree::simulate::{simulate, SimSpec};
use guildtree::stats::mean;
use guildtree::{ChainConfig, ChainSettings, Family, Priors, TreePriorConfig};

#[derive(Debug, Clone, Copy)]
pub struct VerifySettings {
    pub seed: u64,
    pub n_sites: usize,
    pub alpha: f64,
    pub chain: ChainSettings,
    pub reference: ReferenceSettings,
    pub tolerance: f64,
}

pub struct VerifyReport {
    pub engine_slopes: Vec<f64>,
    pub average: ModelAverage,
    pub max_difference: f64,
    pub passed: bool,
}

/// Three species, one predictor, slopes (-1, -1, 1).
pub fn verify(s: &VerifySettings) -> Result<VerifyReport> {
    let slopes: Vec<Vec<f64>> = [-1.0, -1.0, 1.0].iter().map(|&b| vec![b]).collect();
    let mut spec = SimSpec::from_species_slopes(Family::Probit, s.n_sites, vec![0.0, 0.3, -0.3], &[slopes])?;
    spec.seed = s.seed;
    let data = simulate(&spec)?.data;
    let cfg = ChainConfig::new(Family::Probit, s.chain, s.alpha);
    let (draws, _) = collect_draws(&data, &cfg)?;
    let engine_slopes: Vec<f64> = (0..3).map(|j| mean(&species_slope_draws(&draws, 0, j, 0))).collect();
    let enumeration = enumerate_partitions(3, DEFAULT_CAP, PartitionPrior::TreeProcess(TreePriorConfig::default()))?;
    let average = exact_model_average_probit(&data, &enumeration, &Priors::default().probit(), &s.reference)?;
    let max_difference = engine_slopes
        .iter()
        .zip(&average.species_slope_means)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok(VerifyReport {
        passed: max_difference <= s.tolerance,
        engine_slopes,
        average,
        max_difference,
    })
}

pub fn write_report(dir: &Path, r: &VerifyReport) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join("verify_slopes.csv"))?;
    w.write_record(["species", "engine_mean", "averaged_mean", "abs_difference"])?;
    for (j, (e, o)) in r.engine_slopes.iter().zip(&r.average.species_slope_means).enumerate() {
        w.write_record([
            (j + 1).to_string(),
            e.to_string(),
            o.to_string(),
            (e - o).abs().to_string(),
        ])?;
    }
    w.flush()?;
    let mut w = csv::Writer::from_path(dir.join("verify_partitions.csv"))?;
    w.write_record(["partition", "prior_weight", "posterior_weight", "log_marginal"])?;
    for c in &r.average.components {
        w.write_record([
            c.fit.partition.encode(),
            c.prior_weight.to_string(),
            c.posterior_weight.to_string(),
            c.fit.log_marginal.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn render(r: &VerifyReport, tolerance: f64) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "species  engine    averaged  |diff|");
    for (j, (e, o)) in r.engine_slopes.iter().zip(&r.average.species_slope_means).enumerate() {
        let _ = writeln!(out, "{:<8} {e:>8.4} {o:>9.4} {:>7.4}", j + 1, (e - o).abs());
    }
    let _ = writeln!(out, "\npartition  prior   posterior");
    for c in &r.average.components {
        let _ = writeln!(
            out,
            "{:<10} {:.4}  {:.4}",
            c.fit.partition.encode(),
            c.prior_weight,
            c.posterior_weight
        );
    }
    let _ = writeln!(
        out,
        "\nmax |diff| {:.4} (tolerance {tolerance}): {}",
        r.max_difference,
        if r.passed { "agree" } else { "DISAGREE" }
    );
    out
}
