//! Plot-ready summary tables and the text report.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::Result;
use guildtree::inference::{partition_breakdown, summarize, ParamSummary};
use guildtree::{CommunityData, PosteriorDraw, PosteriorSummary, Scores};
use serde::Serialize;

pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Serialize)]
struct SummaryFile<'a> {
    species: &'a [String],
    predictors: &'a [String],
    summary: &'a PosteriorSummary,
}

fn csv_writer(dir: &Path, name: &str) -> Result<csv::Writer<std::fs::File>> {
    Ok(csv::Writer::from_path(dir.join(name))?)
}

fn summary_fields(s: &ParamSummary) -> [String; 5] {
    [s.mean, s.sd, s.q025, s.q500, s.q975].map(|v| v.to_string())
}

const SUMMARY_HEADER: [&str; 5] = ["mean", "sd", "q025", "q500", "q975"];

/// Summarizes draws and writes every summary table into `dir`.
pub fn write_summary(
    dir: &Path,
    draws: &[PosteriorDraw],
    fit: &CommunityData,
    holdout: Option<&CommunityData>,
) -> Result<PosteriorSummary> {
    let summary = summarize(draws, Some(fit), holdout)?;
    let species = fit.species_names();
    let predictors = fit.predictor_names();
    let json = serde_json::to_vec_pretty(&SummaryFile {
        species,
        predictors,
        summary: &summary,
    })?;
    std::fs::write(dir.join(SUMMARY_FILE), json)?;

    let mut w = csv_writer(dir, "parameters.csv")?;
    w.write_record(["parameter"].iter().chain(&SUMMARY_HEADER))?;
    for (s, p) in species.iter().zip(&summary.intercepts) {
        w.write_record([format!("alpha[{s}]")].iter().cloned().chain(summary_fields(p)))?;
    }
    for (name, p) in [("phi", &summary.phi), ("sigma2", &summary.sigma2)] {
        if let Some(p) = p {
            w.write_record([name.to_string()].into_iter().chain(summary_fields(p)))?;
        }
    }
    w.flush()?;

    let mut counts = csv_writer(dir, "guild_counts.csv")?;
    counts.write_record(["period", "guilds", "probability"])?;
    let mut co = csv_writer(dir, "cooccurrence.csv")?;
    co.write_record(["period", "species_a", "species_b", "probability"])?;
    let mut coef = csv_writer(dir, "coefficients.csv")?;
    coef.write_record(["period", "species", "predictor"].iter().chain(&SUMMARY_HEADER))?;
    let mut guilds = csv_writer(dir, "mode_guilds.csv")?;
    guilds.write_record(
        ["period", "guild", "members", "predictor", "n_draws"]
            .iter()
            .chain(&SUMMARY_HEADER),
    )?;
    let mut parts = csv_writer(dir, "partitions.csv")?;
    parts.write_record(["period", "partition", "frequency"])?;
    for (t, p) in summary.periods.iter().enumerate() {
        let period = (t + 1).to_string();
        for (g, prob) in &p.guild_count_pmf {
            counts.write_record([period.clone(), g.to_string(), prob.to_string()])?;
        }
        for (a, row) in p.cooccurrence.iter().enumerate() {
            for (b, v) in row.iter().enumerate() {
                co.write_record([period.clone(), species[a].clone(), species[b].clone(), v.to_string()])?;
            }
        }
        for c in &p.coefficients.species {
            let head = [
                period.clone(),
                species[c.species].clone(),
                predictors[c.predictor].clone(),
            ];
            coef.write_record(head.into_iter().chain(summary_fields(&c.summary)))?;
        }
        for c in &p.coefficients.mode_guilds {
            let members: Vec<&str> = c.members.iter().map(|&j| species[j].as_str()).collect();
            let head = [
                period.clone(),
                (c.guild + 1).to_string(),
                members.join("+"),
                predictors[c.predictor].clone(),
                c.n_draws.to_string(),
            ];
            guilds.write_record(head.into_iter().chain(summary_fields(&c.summary)))?;
        }
        for c in partition_breakdown(draws, t)? {
            parts.write_record([period.clone(), c.partition, c.frequency.to_string()])?;
        }
    }
    for w in [&mut counts, &mut co, &mut coef, &mut guilds, &mut parts] {
        w.flush()?;
    }
    if let Some(s) = &summary.scores {
        write_scores(dir, s)?;
    }
    Ok(summary)
}

pub fn write_scores(dir: &Path, s: &Scores) -> Result<()> {
    let mut w = csv_writer(dir, "scores.csv")?;
    w.write_record(["waic", "lppd", "p_eff", "holdout_neg2_lppd"])?;
    w.write_record([
        s.waic.to_string(),
        s.lppd.to_string(),
        s.p_eff.to_string(),
        s.holdout_neg2_lppd.map_or(String::new(), |v| v.to_string()),
    ])?;
    w.flush()?;
    Ok(())
}

/// Renders guild indices as species names, e.g. `a+b | c`.
pub fn named_partition(encoded: &str, species: &[String]) -> String {
    encoded
        .split('|')
        .map(|g| {
            g.split('+')
                .map(|i| {
                    i.parse::<usize>()
                        .ok()
                        .and_then(|i| species.get(i - 1))
                        .map_or(i, String::as_str)
                })
                .collect::<Vec<_>>()
                .join("+")
        })
        .collect::<Vec<_>>()
        .join(" | ")
}

pub fn text_report(summary: &PosteriorSummary, species: &[String], predictors: &[String]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "retained draws: {}", summary.n_draws);
    for (t, p) in summary.periods.iter().enumerate() {
        let _ = writeln!(out, "\nperiod {}", t + 1);
        let pmf: Vec<String> = p.guild_count_pmf.iter().map(|(g, v)| format!("{g}: {v:.3}")).collect();
        let _ = writeln!(out, "  guild count pmf    {}", pmf.join(", "));
        let _ = writeln!(
            out,
            "  mode partition     {} (posterior frequency {:.3})",
            named_partition(&p.mode.partition.encode(), species),
            p.mode.probability
        );
        let _ = writeln!(out, "  species slopes (mean [2.5%, 97.5%])");
        for c in &p.coefficients.species {
            let s = &c.summary;
            let _ = writeln!(
                out,
                "    {:<16} {:<16} {:>9.3} [{:.3}, {:.3}]",
                species[c.species], predictors[c.predictor], s.mean, s.q025, s.q975
            );
        }
    }
    for (name, p) in [("phi", &summary.phi), ("sigma2", &summary.sigma2)] {
        if let Some(p) = p {
            let _ = writeln!(out, "\n{name:<6} {:.4} [{:.4}, {:.4}]", p.mean, p.q025, p.q975);
        }
    }
    if let Some(s) = &summary.scores {
        let _ = writeln!(out, "\nWAIC {:.3}  lppd {:.3}  p_eff {:.3}", s.waic, s.lppd, s.p_eff);
        if let Some(h) = s.holdout_neg2_lppd {
            let _ = writeln!(out, "holdout -2 x LPPD {h:.3}");
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partition_names() {
        let names: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        assert_eq!(named_partition("1+3|2", &names), "a+c | b");
        assert_eq!(named_partition("1+2+3", &names), "a+b+c");
    }
}
