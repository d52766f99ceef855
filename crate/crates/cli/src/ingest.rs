//! Site-table CSV ingestion and export.
//!
//! One row per site. Reserved columns: `site` (free-text id, ignored),
//! `period` (positive integer, one-based) and `holdout` (0/1). Every other
//! column is a declared species or predictor.

use std::io::Write;
use std::path::{Path, PathBuf};

use guildtree::{ChainRng, CommunityData, Family, Standardization};
use rand::SeedableRng;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::RunConfig;

pub const SITE_COLUMN: &str = "site";
pub const PERIOD_COLUMN: &str = "period";
pub const HOLDOUT_COLUMN: &str = "holdout";

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: malformed CSV")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{0}: empty file")]
    Empty(PathBuf),
    #[error("{0}: header but no site rows")]
    NoRows(PathBuf),
    #[error("{path}: unknown column `{column}` (position {position}); declare it as a species or predictor")]
    UnknownColumn {
        path: PathBuf,
        column: String,
        position: usize,
    },
    #[error("{path}: declared column `{column}` not found in header")]
    MissingColumn { path: PathBuf, column: String },
    #[error("{path}: column `{column}` appears more than once")]
    DuplicateColumn { path: PathBuf, column: String },
    #[error("{path}: line {line}, column `{column}`: {reason} (value `{value}`)")]
    BadValue {
        path: PathBuf,
        line: u64,
        column: String,
        value: String,
        reason: &'static str,
    },
    #[error("{path}: line {line}: expected {expected} fields, found {found}")]
    Ragged {
        path: PathBuf,
        line: u64,
        expected: usize,
        found: usize,
    },
    #[error("{path}: site table rejected")]
    Model {
        path: PathBuf,
        #[source]
        source: guildtree::Error,
    },
}

/// Column layout expected in a site table.
#[derive(Debug, Clone)]
pub struct Schema<'a> {
    pub family: Family,
    pub species: Option<&'a [String]>,
    pub predictors: &'a [String],
}

enum Role {
    Ignored,
    Period,
    Holdout,
    Species(usize),
    Predictor(usize),
}

/// Reads a site table. Period labels in the returned data are zero-based.
pub fn read_sites(path: &Path, schema: &Schema) -> Result<CommunityData, IngestError> {
    let bytes = std::fs::read(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_sites(&bytes, path, schema)
}

pub fn parse_sites(bytes: &[u8], path: &Path, schema: &Schema) -> Result<CommunityData, IngestError> {
    let p = || path.to_path_buf();
    if bytes.iter().all(u8::is_ascii_whitespace) {
        return Err(IngestError::Empty(p()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(bytes);
    let csv_err = |source| IngestError::Csv { path: p(), source };
    let header: Vec<String> = reader.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    for (i, h) in header.iter().enumerate() {
        if header[..i].contains(h) {
            return Err(IngestError::DuplicateColumn {
                path: p(),
                column: h.clone(),
            });
        }
    }
    let species: Vec<String> = match schema.species {
        Some(s) => s.to_vec(),
        None => header
            .iter()
            .filter(|h| {
                ![SITE_COLUMN, PERIOD_COLUMN, HOLDOUT_COLUMN].contains(&h.as_str()) && !schema.predictors.contains(h)
            })
            .cloned()
            .collect(),
    };
    let mut roles = Vec::with_capacity(header.len());
    for (position, h) in header.iter().enumerate() {
        let role = if let Some(j) = species.iter().position(|s| s == h) {
            Role::Species(j)
        } else if let Some(k) = schema.predictors.iter().position(|s| s == h) {
            Role::Predictor(k)
        } else if h == SITE_COLUMN {
            Role::Ignored
        } else if h == PERIOD_COLUMN {
            Role::Period
        } else if h == HOLDOUT_COLUMN {
            Role::Holdout
        } else {
            return Err(IngestError::UnknownColumn {
                path: p(),
                column: h.clone(),
                position: position + 1,
            });
        };
        roles.push(role);
    }
    for name in species.iter().chain(schema.predictors) {
        if !header.contains(name) {
            return Err(IngestError::MissingColumn {
                path: p(),
                column: name.clone(),
            });
        }
    }
    let has_period = header.iter().any(|h| h == PERIOD_COLUMN);
    let has_holdout = header.iter().any(|h| h == HOLDOUT_COLUMN);
    let (j_n, k_n) = (species.len(), schema.predictors.len());
    let mut responses = Vec::new();
    let mut predictors = Vec::new();
    let mut periods = Vec::new();
    let mut holdout = Vec::new();
    for record in reader.records() {
        let record = record.map_err(csv_err)?;
        let line = record.position().map_or(0, |pos| pos.line());
        if record.len() != header.len() {
            return Err(IngestError::Ragged {
                path: p(),
                line,
                expected: header.len(),
                found: record.len(),
            });
        }
        let mut y = vec![0u32; j_n];
        let mut x = vec![0.0; k_n];
        for (c, value) in record.iter().enumerate() {
            let bad = |reason| IngestError::BadValue {
                path: p(),
                line,
                column: header[c].clone(),
                value: value.to_string(),
                reason,
            };
            match roles[c] {
                Role::Ignored => {}
                Role::Species(j) => y[j] = parse_response(value, schema.family).map_err(bad)?,
                Role::Predictor(k) => {
                    x[k] = value
                        .parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| bad("predictor is not a finite number"))?
                }
                Role::Period => match value.parse::<usize>() {
                    Ok(t) if t >= 1 => periods.push(t - 1),
                    _ => return Err(bad("period must be a positive integer")),
                },
                Role::Holdout => match value {
                    "0" => holdout.push(false),
                    "1" => holdout.push(true),
                    _ => return Err(bad("holdout flag must be 0 or 1")),
                },
            }
        }
        responses.extend(y);
        predictors.extend(x);
    }
    if responses.is_empty() && j_n > 0 {
        return Err(IngestError::NoRows(p()));
    }
    CommunityData::new(
        schema.family,
        responses,
        predictors,
        species,
        schema.predictors.to_vec(),
        has_period.then_some(periods),
        has_holdout.then_some(holdout),
    )
    .map_err(|source| IngestError::Model { path: p(), source })
}

fn parse_response(value: &str, family: Family) -> Result<u32, &'static str> {
    match family {
        Family::Probit => match value {
            "0" => Ok(0),
            "1" => Ok(1),
            _ => Err("presence-absence response must be 0 or 1"),
        },
        Family::Zip => {
            if value.starts_with('-') {
                return Err("negative count");
            }
            value.parse::<u32>().map_err(|_| "count must be a non-negative integer")
        }
    }
}

/// Writes a site table that `read_sites` reads back exactly. Predictor
/// values use the shortest representation that round-trips.
pub fn write_sites(out: &mut dyn Write, data: &CommunityData) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec![SITE_COLUMN.to_string()];
    if data.periods().is_some() {
        header.push(PERIOD_COLUMN.into());
    }
    if data.holdout_mask().is_some() {
        header.push(HOLDOUT_COLUMN.into());
    }
    header.extend(data.species_names().iter().cloned());
    header.extend(data.predictor_names().iter().cloned());
    w.write_record(&header)?;
    for i in 0..data.n_sites() {
        let mut row = vec![(i + 1).to_string()];
        if data.periods().is_some() {
            row.push((data.period_of(i) + 1).to_string());
        }
        if let Some(h) = data.holdout_mask() {
            row.push(u8::from(h[i]).to_string());
        }
        row.extend((0..data.n_species()).map(|j| data.response(i, j).to_string()));
        row.extend(data.x(i).iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()
}

pub fn sha256_hex(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Fitting and holdout data ready for the sampler.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub fit: CommunityData,
    pub holdout: Option<CommunityData>,
    pub standardization: Option<Standardization>,
    /// SHA-256 of the site table, followed by the holdout table if any.
    pub checksum: String,
}

/// Ingests the configured data, splits off holdout sites and standardizes
/// predictors with constants computed on the fitting sites.
pub fn prepare(cfg: &RunConfig) -> anyhow::Result<Prepared> {
    let schema = Schema {
        family: cfg.family,
        species: cfg.data.species.as_deref(),
        predictors: &cfg.data.predictors,
    };
    let main_bytes = std::fs::read(&cfg.data.path).map_err(|source| IngestError::Io {
        path: cfg.data.path.clone(),
        source,
    })?;
    let mut data = parse_sites(&main_bytes, &cfg.data.path, &schema)?;
    let mut checksum_parts = vec![main_bytes.clone()];
    if let Some(f) = cfg.data.holdout_fraction {
        if data.holdout_mask().is_some() {
            anyhow::bail!("site table has a holdout column and holdout_fraction is also set");
        }
        let n = data.n_sites();
        let m = (f * n as f64).round() as usize;
        let mut rng = ChainRng::seed_from_u64(cfg.chain.seed);
        let mut mask = vec![false; n];
        for i in rand::seq::index::sample(&mut rng, n, m) {
            mask[i] = true;
        }
        data = data.with_holdout(Some(mask))?;
    }
    let (mut fit, mut holdout) = data.split_holdout()?;
    if let Some(path) = &cfg.data.holdout_path {
        if holdout.is_some() {
            anyhow::bail!("site table has a holdout column and holdout_path is also set");
        }
        let schema = Schema {
            species: Some(fit.species_names()),
            ..schema
        };
        let bytes = std::fs::read(path).map_err(|source| IngestError::Io {
            path: path.clone(),
            source,
        })?;
        let h = parse_sites(&bytes, path, &schema)?;
        if h.n_periods() > fit.n_periods() {
            anyhow::bail!(
                "{}: holdout has period labels up to {} but the fitting data has {} periods",
                path.display(),
                h.n_periods(),
                fit.n_periods()
            );
        }
        checksum_parts.push(bytes);
        holdout = Some(h);
    }
    let standardization = if cfg.data.standardize {
        let s = fit.standardize();
        if let Some(h) = &mut holdout {
            h.apply_standardization(&s)?;
        }
        Some(s)
    } else {
        None
    };
    let refs: Vec<&[u8]> = checksum_parts.iter().map(Vec::as_slice).collect();
    Ok(Prepared {
        fit,
        holdout,
        standardization,
        checksum: sha256_hex(&refs),
    })
}
