//! Browser bindings: tree prior exploration, a small simulate-and-fit run
//! and model dimension of a guild partition. Every export returns JSON.

use std::collections::BTreeMap;

use guildtree::chain::collect_draws;
use guildtree::inference::summarize;
use guildtree::simulate::{simulate, SimSpec};
use guildtree::{
    count_guild_compositions, model_dimension, sample_tree_prior, ChainConfig, ChainRng, ChainSettings, Family,
    GuildPartition, TreePriorConfig,
};
use rand::SeedableRng;
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Debug, Serialize)]
pub struct PriorReport {
    pub n_species: usize,
    pub compositions: u64,
    pub guild_count_pmf: BTreeMap<usize, f64>,
    pub mean_guilds: f64,
    pub examples: Vec<String>,
}

/// Monte Carlo guild-count distribution under the generative tree process.
pub fn prior_report(n_species: usize, p_split: f64, n_draws: usize, seed: u64) -> Result<PriorReport, String> {
    if n_draws == 0 {
        return Err("need at least one draw".into());
    }
    let cfg = TreePriorConfig {
        p_split,
        ..TreePriorConfig::default()
    };
    let compositions = count_guild_compositions(n_species).map_err(|e| e.to_string())?;
    let mut rng = ChainRng::seed_from_u64(seed);
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    let mut examples = Vec::new();
    for i in 0..n_draws {
        let tree = sample_tree_prior(n_species, &cfg, &mut rng).map_err(|e| e.to_string())?;
        *counts.entry(tree.n_guilds()).or_default() += 1;
        if i < 5 {
            examples.push(guildtree::partition_from_tree(&tree).encode());
        }
    }
    let n = n_draws as f64;
    let guild_count_pmf: BTreeMap<usize, f64> = counts.into_iter().map(|(g, c)| (g, c as f64 / n)).collect();
    let mean_guilds = guild_count_pmf.iter().map(|(g, p)| *g as f64 * p).sum();
    Ok(PriorReport {
        n_species,
        compositions,
        guild_count_pmf,
        mean_guilds,
        examples,
    })
}

#[derive(Debug, Serialize)]
pub struct SlopeRow {
    pub species: String,
    pub truth: f64,
    pub mean: f64,
    pub q025: f64,
    pub q975: f64,
}

#[derive(Debug, Serialize)]
pub struct FitReport {
    pub truth: String,
    pub draws: usize,
    pub guild_count_pmf: BTreeMap<usize, f64>,
    pub mode: String,
    pub mode_probability: f64,
    pub cooccurrence: Vec<Vec<f64>>,
    pub slopes: Vec<SlopeRow>,
    pub waic: Option<f64>,
    pub p_eff: Option<f64>,
    pub holdout_neg2_lppd: Option<f64>,
}

/// Simulates the six-species two-guild probit design and fits it.
pub fn fit_report(seed: u64, alpha: f64, iterations: usize) -> Result<FitReport, String> {
    let spec = SimSpec::two_guild_probit(seed);
    let sim = simulate(&spec).map_err(|e| e.to_string())?;
    let settings = ChainSettings {
        iterations,
        thin: 5,
        burn: iterations / 50,
        seed: seed.wrapping_add(100),
    };
    let cfg = ChainConfig::new(Family::Probit, settings, alpha);
    let (fit, holdout) = sim.data.split_holdout().map_err(|e| e.to_string())?;
    let (draws, _) = collect_draws(&fit, &cfg).map_err(|e| e.to_string())?;
    let summary = summarize(&draws, Some(&fit), holdout.as_ref()).map_err(|e| e.to_string())?;
    let period = &summary.periods[0];
    let truth = &spec.periods[0];
    let slopes = period
        .coefficients
        .species
        .iter()
        .map(|c| SlopeRow {
            species: fit.species_names()[c.species].clone(),
            truth: truth.gamma.get(truth.partition.guild_of(c.species), c.predictor),
            mean: c.summary.mean,
            q025: c.summary.q025,
            q975: c.summary.q975,
        })
        .collect();
    Ok(FitReport {
        truth: truth.partition.encode(),
        draws: summary.n_draws,
        guild_count_pmf: period.guild_count_pmf.clone(),
        mode: period.mode.partition.encode(),
        mode_probability: period.mode.probability,
        cooccurrence: period.cooccurrence.clone(),
        slopes,
        waic: summary.scores.as_ref().map(|s| s.waic),
        p_eff: summary.scores.as_ref().map(|s| s.p_eff),
        holdout_neg2_lppd: summary.scores.as_ref().and_then(|s| s.holdout_neg2_lppd),
    })
}

#[derive(Debug, Serialize)]
pub struct DimensionReport {
    pub partition: String,
    pub guilds: usize,
    pub intercepts: usize,
    pub regression_coefficients: usize,
    pub family_scalars: usize,
    pub total: usize,
    pub species_level_total: usize,
}

/// Parameter count of a partition such as `1+2|3`, against one guild per species.
pub fn dimension_report(
    partition: &str,
    n_species: usize,
    n_predictors: usize,
    family: &str,
) -> Result<DimensionReport, String> {
    let family = match family {
        "probit" => Family::Probit,
        "zip" => Family::Zip,
        other => return Err(format!("unknown family `{other}`")),
    };
    let p = GuildPartition::decode(partition, n_species).map_err(|e| e.to_string())?;
    let d = model_dimension(std::slice::from_ref(&p), n_species, n_predictors, family).map_err(|e| e.to_string())?;
    let full = model_dimension(&[GuildPartition::identity(n_species)], n_species, n_predictors, family)
        .map_err(|e| e.to_string())?;
    Ok(DimensionReport {
        partition: p.encode(),
        guilds: p.n_guilds(),
        intercepts: d.intercepts,
        regression_coefficients: d.regression_coefficients,
        family_scalars: d.family_scalars,
        total: d.total(),
        species_level_total: full.total(),
    })
}

fn to_js<T: Serialize>(r: Result<T, String>) -> Result<String, JsValue> {
    r.and_then(|v| serde_json::to_string(&v).map_err(|e| e.to_string()))
        .map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn tree_prior(n_species: usize, p_split: f64, n_draws: usize, seed: u64) -> Result<String, JsValue> {
    to_js(prior_report(n_species, p_split, n_draws, seed))
}

#[wasm_bindgen]
pub fn simulate_and_fit(seed: u64, alpha: f64, iterations: usize) -> Result<String, JsValue> {
    to_js(fit_report(seed, alpha, iterations))
}

#[wasm_bindgen]
pub fn dimension(partition: &str, n_species: usize, n_predictors: usize, family: &str) -> Result<String, JsValue> {
    to_js(dimension_report(partition, n_species, n_predictors, family))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prior_without_splits_is_one_guild() {
        let r = prior_report(5, 0.0, 50, 1).unwrap();
        assert_eq!(r.guild_count_pmf, BTreeMap::from([(1, 1.0)]));
        assert_eq!(r.compositions, 31);
        assert_eq!(r.examples[0], "1+2+3+4+5");
    }

    #[test]
    fn prior_with_certain_splits_separates_every_species() {
        let r = prior_report(4, 1.0, 20, 2).unwrap();
        assert_eq!(r.guild_count_pmf, BTreeMap::from([(4, 1.0)]));
        assert_eq!(r.mean_guilds, 4.0);
    }

    #[test]
    fn dimension_of_two_guilds() {
        let r = dimension_report("3|1+2", 3, 2, "zip").unwrap();
        assert_eq!(r.partition, "1+2|3");
        assert_eq!((r.intercepts, r.regression_coefficients, r.family_scalars), (3, 4, 2));
        assert_eq!(r.total, 9);
        assert_eq!(r.species_level_total, 11);
        assert!(dimension_report("1|2", 3, 1, "probit").is_err());
        assert!(dimension_report("1|2|3", 3, 1, "gamma").is_err());
    }

    #[test]
    fn short_fit_reports_all_species() {
        let r = fit_report(1, 0.05, 400).unwrap();
        assert_eq!(r.truth, "1+2+3|4+5+6");
        assert_eq!(r.slopes.len(), 6);
        assert_eq!(r.cooccurrence.len(), 6);
        let total: f64 = r.guild_count_pmf.values().sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(r.waic.is_some() && r.holdout_neg2_lppd.is_some());
    }
}
