//! `guildtree` command-line interface.

mod config;
mod draws;
mod ingest;
mod report;
mod run;
mod sim;
mod verify;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use guildtree::inference::scores;
use guildtree::oracle::ReferenceSettings;
use guildtree::ChainSettings;
use rayon::prelude::*;

use crate::config::{AlphaSetting, RunConfig};
use crate::ingest::{read_sites, Schema};
use crate::report::{text_report, write_scores, write_summary};
use crate::run::{fit, load_run};

#[derive(Parser)]
#[command(
    name = "guildtree",
    version,
    about = "Multi-species distribution models with a tree shrinkage prior"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a chain and write draws, summaries and a manifest.
    Fit {
        #[arg(long)]
        config: PathBuf,
        /// Override the configured output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Continue an interrupted run from its last checkpoint.
        #[arg(long)]
        resume: bool,
        /// Stop at the first checkpoint after this many draws, as if interrupted.
        #[arg(long, hide = true)]
        halt_after_draws: Option<usize>,
    },
    /// Write a synthetic site table and its truth sidecar.
    Simulate {
        /// TOML simulation spec.
        #[arg(long, conflicts_with = "preset")]
        spec: Option<PathBuf>,
        /// Built-in design (`two-guild`).
        #[arg(long)]
        preset: Option<String>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Truth sidecar path; defaults to `<out>.truth.json`.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Compute WAIC and holdout -2 x LPPD for a finished run.
    Score {
        #[arg(long)]
        run: PathBuf,
        /// Score against this site table instead of the run's own holdout.
        #[arg(long)]
        holdout: Option<PathBuf>,
    },
    /// Rewrite summary tables for a finished run and print a report.
    Summarize {
        #[arg(long)]
        run: PathBuf,
    },
    /// Compare the engine with exact model averaging on three species.
    Verify {
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 41)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        sites: usize,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long, default_value_t = 100_000)]
        iterations: usize,
        #[arg(long, default_value_t = 10)]
        thin: usize,
        #[arg(long, default_value_t = 500)]
        burn: usize,
        #[arg(long, default_value_t = 40_000)]
        reference_iterations: usize,
        #[arg(long, default_value_t = 0.1)]
        tolerance: f64,
    },
    /// Fit once per alpha value and tabulate scores.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated alpha values.
        #[arg(long, value_delimiter = ',', default_value = "0,0.025,0.1,0.3,0.6,1")]
        alphas: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads; defaults to the number of cores.
        #[arg(long)]
        jobs: Option<usize>,
    },
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

/// Returns `Ok(false)` when the command ran but its check failed.
fn dispatch(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Fit {
            config,
            out,
            resume,
            halt_after_draws,
        } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(o) = out {
                cfg.output = std::path::absolute(o)?;
            }
            let outcome = fit(&cfg, resume, halt_after_draws)?;
            print!(
                "{}",
                text_report(&outcome.summary, &outcome.species, &outcome.predictors)
            );
            if let Some(a) = outcome.manifest.acceptance_rate {
                println!("latent Metropolis acceptance rate {a:.3}");
            }
            for (w, n) in &outcome.manifest.warnings {
                println!("warning ({n}x): {w}");
            }
            println!("\nwrote {}", outcome.dir.display());
        }
        Command::Simulate {
            spec,
            preset,
            seed,
            out,
            truth,
        } => {
            let spec = match (spec, preset) {
                (Some(path), None) => sim::SimFile::load(&path)?.spec()?,
                (None, Some(name)) => sim::preset(&name, seed)?,
                _ => bail!("give --spec or --preset"),
            };
            let sim = sim::write_simulation(&spec, &out, truth)?;
            println!(
                "wrote {} ({} sites, {} species, {} predictors, {} periods)",
                out.display(),
                sim.data.n_sites(),
                sim.data.n_species(),
                sim.data.n_predictors(),
                sim.data.n_periods()
            );
        }
        Command::Score { run, holdout } => {
            let loaded = load_run(&run)?;
            let hold = match holdout {
                Some(path) => {
                    let fit = &loaded.data.fit;
                    let schema = Schema {
                        family: fit.family(),
                        species: Some(fit.species_names()),
                        predictors: fit.predictor_names(),
                    };
                    let mut h = read_sites(&path, &schema)?;
                    if let Some(s) = &loaded.manifest.standardization {
                        h.apply_standardization(s)?;
                    }
                    Some(h)
                }
                None => loaded.data.holdout.clone(),
            };
            let s = scores(&loaded.draws, &loaded.data.fit, hold.as_ref())?;
            write_scores(&run, &s)?;
            println!("waic,lppd,p_eff,holdout_neg2_lppd");
            println!(
                "{},{},{},{}",
                s.waic,
                s.lppd,
                s.p_eff,
                s.holdout_neg2_lppd.map_or(String::new(), |v| v.to_string())
            );
        }
        Command::Summarize { run } => {
            let loaded = load_run(&run)?;
            let fit = &loaded.data.fit;
            let summary = write_summary(&run, &loaded.draws, fit, loaded.data.holdout.as_ref())?;
            print!("{}", text_report(&summary, fit.species_names(), fit.predictor_names()));
        }
        Command::Verify {
            out,
            seed,
            sites,
            alpha,
            iterations,
            thin,
            burn,
            reference_iterations,
            tolerance,
        } => {
            let settings = verify::VerifySettings {
                seed,
                n_sites: sites,
                alpha,
                chain: ChainSettings {
                    iterations,
                    thin,
                    burn,
                    seed: seed + 1,
                },
                reference: ReferenceSettings {
                    iterations: reference_iterations,
                    burn: reference_iterations / 10,
                    seed: seed + 2,
                },
                tolerance,
            };
            let r = verify::verify(&settings)?;
            if let Some(dir) = out {
                verify::write_report(&dir, &r)?;
            }
            print!("{}", verify::render(&r, tolerance));
            return Ok(r.passed);
        }
        Command::Sweep {
            config,
            alphas,
            out,
            jobs,
        } => {
            let mut base = RunConfig::load(&config)?;
            if let Some(o) = out {
                base.output = std::path::absolute(o)?;
            }
            if alphas.is_empty() {
                bail!("no alpha values given");
            }
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(jobs.unwrap_or(0))
                .build()
                .context("building thread pool")?;
            let results: Vec<Result<run::FitOutcome>> = pool.install(|| {
                alphas
                    .par_iter()
                    .map(|&a| {
                        let mut cfg = base.clone();
                        cfg.alpha = Some(AlphaSetting::Single(a));
                        cfg.output = base.output.join(format!("alpha-{a}"));
                        fit(&cfg, false, None).with_context(|| format!("alpha {a}"))
                    })
                    .collect()
            });
            let outcomes = results.into_iter().collect::<Result<Vec<_>>>()?;
            std::fs::create_dir_all(&base.output)?;
            let table = sweep_table(&alphas, &outcomes);
            std::fs::write(base.output.join("sweep.csv"), &table)?;
            print!("{table}");
        }
    }
    Ok(true)
}

fn sweep_table(alphas: &[f64], outcomes: &[run::FitOutcome]) -> String {
    let n_periods = outcomes.first().map_or(0, |o| o.summary.periods.len());
    let mut header = vec!["alpha", "waic", "lppd", "p_eff", "holdout_neg2_lppd"]
        .into_iter()
        .map(String::from)
        .collect::<Vec<_>>();
    for t in 1..=n_periods {
        header.push(format!("mean_guilds[{t}]"));
        header.push(format!("mode_partition[{t}]"));
    }
    let mut out = header.join(",") + "\n";
    for (a, o) in alphas.iter().zip(outcomes) {
        let s = o.summary.scores.as_ref();
        let mut row = vec![
            a.to_string(),
            s.map_or(String::new(), |s| s.waic.to_string()),
            s.map_or(String::new(), |s| s.lppd.to_string()),
            s.map_or(String::new(), |s| s.p_eff.to_string()),
            s.and_then(|s| s.holdout_neg2_lppd)
                .map_or(String::new(), |v| v.to_string()),
        ];
        for p in &o.summary.periods {
            let mean_g: f64 = p.guild_count_pmf.iter().map(|(g, v)| *g as f64 * v).sum();
            row.push(mean_g.to_string());
            row.push(p.mode.partition.encode());
        }
        out += &(row.join(",") + "\n");
    }
    out
}
