//! Retained-draw table and checkpoint persistence.
//!
//! `draws.csv` has one row per retained draw:
//! `draw, alpha[<species>]..., tree[t], partition[t], gamma[t]... [, phi, sigma2]`
//! where `t` is the one-based period, `gamma[t]` is the semicolon-joined
//! predictor-major guild coefficient vector of the tree's guilds (guild `g`
//! is the `g`-th terminal of `tree[t]` from the left) and `partition[t]` is
//! the canonical partition string.

use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use guildtree::chain::ChainCheckpoint;
use guildtree::{DrawSink, GuildCoefficients, GuildTree, PeriodDraw, PosteriorDraw};

pub const DRAWS_FILE: &str = "draws.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";

pub fn header(species: &[String], n_periods: usize, abundance: bool) -> Vec<String> {
    let mut h = vec!["draw".to_string()];
    h.extend(species.iter().map(|s| format!("alpha[{s}]")));
    for t in 1..=n_periods {
        h.push(format!("tree[{t}]"));
        h.push(format!("partition[{t}]"));
        h.push(format!("gamma[{t}]"));
    }
    if abundance {
        h.push("phi".into());
        h.push("sigma2".into());
    }
    h
}

pub fn row(d: &PosteriorDraw) -> Vec<String> {
    let mut r = vec![d.index.to_string()];
    r.extend(d.alpha.iter().map(f64::to_string));
    for p in &d.periods {
        r.push(p.tree.encode());
        r.push(p.partition().encode());
        r.push(
            p.gamma
                .as_flat()
                .iter()
                .map(f64::to_string)
                .collect::<Vec<_>>()
                .join(";"),
        );
    }
    if let (Some(phi), Some(s2)) = (d.phi, d.sigma2) {
        r.push(phi.to_string());
        r.push(s2.to_string());
    }
    r
}

/// Streams draws to `draws.csv` and checkpoints to `checkpoint.json`.
pub struct RunSink {
    writer: csv::Writer<BufWriter<File>>,
    checkpoint_path: PathBuf,
    /// Abort at the first checkpoint at or beyond this many draws.
    pub halt_after: Option<usize>,
}

impl RunSink {
    /// Starts a fresh draws table.
    pub fn create(dir: &Path, species: &[String], n_periods: usize, abundance: bool) -> Result<Self> {
        let path = dir.join(DRAWS_FILE);
        let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        let mut writer = csv::Writer::from_writer(BufWriter::new(file));
        writer.write_record(header(species, n_periods, abundance))?;
        Ok(Self {
            writer,
            checkpoint_path: dir.join(CHECKPOINT_FILE),
            halt_after: None,
        })
    }

    /// Reopens a draws table, dropping rows written after the checkpoint.
    pub fn reopen(dir: &Path, keep_rows: usize) -> Result<Self> {
        let path = dir.join(DRAWS_FILE);
        let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        let lines: Vec<&str> = text.lines().collect();
        if lines.len() < keep_rows + 1 {
            bail!(
                "{} has {} draws but the checkpoint expects {keep_rows}",
                path.display(),
                lines.len().saturating_sub(1)
            );
        }
        let mut kept = lines[..=keep_rows].join("\n");
        kept.push('\n');
        std::fs::write(&path, kept)?;
        let file = OpenOptions::new().append(true).open(&path)?;
        Ok(Self {
            writer: csv::WriterBuilder::new()
                .has_headers(false)
                .from_writer(BufWriter::new(file)),
            checkpoint_path: dir.join(CHECKPOINT_FILE),
            halt_after: None,
        })
    }

    pub fn finish(mut self) -> Result<()> {
        self.writer.flush()?;
        Ok(())
    }
}

impl DrawSink for RunSink {
    fn accept(&mut self, draw: PosteriorDraw) -> guildtree::Result<()> {
        self.writer.write_record(row(&draw)).map_err(sink_error)
    }

    fn checkpoint(&mut self, cp: &ChainCheckpoint) -> guildtree::Result<()> {
        self.writer.flush().map_err(|e| guildtree::Error::Sink(e.to_string()))?;
        let json = serde_json::to_vec(cp).map_err(|e| guildtree::Error::Sink(e.to_string()))?;
        write_atomic(&self.checkpoint_path, &json).map_err(|e| guildtree::Error::Sink(e.to_string()))?;
        match self.halt_after {
            Some(n) if cp.emitted >= n => Err(guildtree::Error::Sink(format!(
                "halted after {} draws; continue with --resume",
                cp.emitted
            ))),
            _ => Ok(()),
        }
    }
}

fn sink_error(e: csv::Error) -> guildtree::Error {
    guildtree::Error::Sink(e.to_string())
}

/// Writes through a temporary file so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(tmp, path)
}

pub fn read_checkpoint(dir: &Path) -> Result<ChainCheckpoint> {
    let path = dir.join(CHECKPOINT_FILE);
    let bytes = std::fs::read(&path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_slice(&bytes).with_context(|| format!("parsing {}", path.display()))
}

/// Reads a draws table written by [`RunSink`].
pub fn read_draws(path: &Path) -> Result<Vec<PosteriorDraw>> {
    let mut reader = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let n_species = header.iter().filter(|h| h.starts_with("alpha[")).count();
    let n_periods = header.iter().filter(|h| h.starts_with("tree[")).count();
    let abundance = header.iter().any(|h| h == "phi");
    if header != self::header(&species_from_header(&header), n_periods, abundance) || n_species == 0 || n_periods == 0 {
        bail!("{}: not a draws table", path.display());
    }
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let ctx = || format!("{}: line {line}", path.display());
        let num = |s: &str| s.parse::<f64>().with_context(ctx);
        let index = record[0].parse::<usize>().with_context(ctx)?;
        let alpha = (1..=n_species).map(|c| num(&record[c])).collect::<Result<Vec<_>>>()?;
        let mut periods = Vec::with_capacity(n_periods);
        for t in 0..n_periods {
            let base = 1 + n_species + 3 * t;
            let tree = GuildTree::decode(&record[base], n_species).with_context(ctx)?;
            let gamma: Vec<f64> = record[base + 2].split(';').map(num).collect::<Result<_>>()?;
            let g = tree.n_guilds();
            if !gamma.len().is_multiple_of(g) {
                bail!("{}: {} coefficients for {g} guilds", ctx(), gamma.len());
            }
            let gamma = GuildCoefficients::from_flat(g, gamma.len() / g, gamma).with_context(ctx)?;
            periods.push(PeriodDraw { tree, gamma });
        }
        let (phi, sigma2) = if abundance {
            let b = 1 + n_species + 3 * n_periods;
            (Some(num(&record[b])?), Some(num(&record[b + 1])?))
        } else {
            (None, None)
        };
        out.push(PosteriorDraw {
            index,
            alpha,
            periods,
            phi,
            sigma2,
        });
    }
    Ok(out)
}

fn species_from_header(header: &[String]) -> Vec<String> {
    header
        .iter()
        .filter_map(|h| h.strip_prefix("alpha[").and_then(|s| s.strip_suffix(']')))
        .map(str::to_string)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use guildtree::GuildPartition;

    fn draw(index: usize, zip: bool) -> PosteriorDraw {
        let p = GuildPartition::from_membership(vec![0, 1, 0]).unwrap();
        PosteriorDraw {
            index,
            alpha: vec![0.1, -2.0 / 3.0, 1e-300],
            periods: vec![
                PeriodDraw {
                    tree: GuildTree::from_partition(&p),
                    gamma: GuildCoefficients::from_flat(2, 2, vec![1.5, -0.25, 3.0, 1.0 / 7.0]).unwrap(),
                },
                PeriodDraw {
                    tree: GuildTree::single(3),
                    gamma: GuildCoefficients::from_flat(1, 2, vec![0.0, 2.0]).unwrap(),
                },
            ],
            phi: zip.then_some(0.3),
            sigma2: zip.then_some(0.125),
        }
    }

    #[test]
    fn round_trip_both_families() {
        let dir = tempfile::tempdir().unwrap();
        let species: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        for zip in [false, true] {
            let mut sink = RunSink::create(dir.path(), &species, 2, zip).unwrap();
            let draws: Vec<PosteriorDraw> = (0..3).map(|i| draw(i, zip)).collect();
            for d in &draws {
                sink.accept(d.clone()).unwrap();
            }
            sink.finish().unwrap();
            assert_eq!(read_draws(&dir.path().join(DRAWS_FILE)).unwrap(), draws);
        }
        let text = std::fs::read_to_string(dir.path().join(DRAWS_FILE)).unwrap();
        assert!(text.starts_with("draw,alpha[a],alpha[b],alpha[c],tree[1],partition[1],gamma[1],tree[2]"));
        assert!(text.contains(",1+3|2,1.5;-0.25;3;0.14285714285714285,"), "{text}");
    }

    #[test]
    fn reopen_truncates_to_checkpoint() {
        let dir = tempfile::tempdir().unwrap();
        let species = vec!["a".to_string(), "b".into(), "c".into()];
        let mut sink = RunSink::create(dir.path(), &species, 2, false).unwrap();
        for i in 0..5 {
            sink.accept(draw(i, false)).unwrap();
        }
        sink.finish().unwrap();
        let mut sink = RunSink::reopen(dir.path(), 2).unwrap();
        sink.accept(draw(2, false)).unwrap();
        sink.finish().unwrap();
        let back = read_draws(&dir.path().join(DRAWS_FILE)).unwrap();
        assert_eq!(back.iter().map(|d| d.index).collect::<Vec<_>>(), vec![0, 1, 2]);
        assert!(RunSink::reopen(dir.path(), 9).is_err());
    }
}
