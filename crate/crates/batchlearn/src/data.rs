//! Batches, datasets with hidden provenance, and the plain-text file formats
//! shared by the CLI: batch files, provenance sidecars, and distribution
//! vectors.
//!
//! Batch file format: a header line `# n=<n> k=<k>`, then one batch per line
//! as k space-separated 1-based indices. Provenance lives in a separate
//! sidecar (`good`/`bad`, one per line) so estimators cannot accidentally
//! read it.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::dist::DiscreteDistribution;
use crate::{Error, Result};

/// One data source's contribution: an ordered k-tuple of elements of `[n]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    samples: Vec<usize>,
}

impl Batch {
    pub fn new(samples: Vec<usize>, n: usize, k: usize) -> Result<Self> {
        if samples.len() != k {
            return Err(Error::InvalidBatch(format!(
                "batch has {} samples, expected k = {k}",
                samples.len()
            )));
        }
        if let Some(&s) = samples.iter().find(|&&s| s == 0 || s > n) {
            return Err(Error::InvalidBatch(format!("sample {s} outside [1, {n}]")));
        }
        Ok(Self { samples })
    }

    pub fn samples(&self) -> &[usize] {
        &self.samples
    }

    pub fn k(&self) -> usize {
        self.samples.len()
    }
}

/// Whether a batch was produced by a good source or by the adversary.
/// Simulation-only metadata for scoring; estimators never see it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Good,
    Bad,
}

/// A full simulated dataset: m batches plus per-batch provenance flags.
#[derive(Debug, Clone)]
pub struct Dataset {
    batches: Vec<Batch>,
    provenance: Vec<Provenance>,
    n: usize,
    k: usize,
    eps: f64,
    eta: f64,
}

impl Dataset {
    pub fn new(
        batches: Vec<Batch>,
        provenance: Vec<Provenance>,
        n: usize,
        k: usize,
        eta: f64,
    ) -> Result<Self> {
        if batches.is_empty() {
            return Err(Error::InvalidBatch("dataset with no batches".into()));
        }
        if batches.len() != provenance.len() {
            return Err(Error::InvalidBatch(format!(
                "{} batches but {} provenance flags",
                batches.len(),
                provenance.len()
            )));
        }
        if !(0.0..1.0).contains(&eta) {
            return Err(Error::InvalidParameter(format!(
                "eta = {eta} outside [0, 1)"
            )));
        }
        for b in &batches {
            if b.k() != k {
                return Err(Error::InvalidBatch(format!(
                    "batch of length {} in a dataset with k = {k}",
                    b.k()
                )));
            }
            if let Some(&s) = b.samples().iter().find(|&&s| s == 0 || s > n) {
                return Err(Error::InvalidBatch(format!("sample {s} outside [1, {n}]")));
            }
        }
        let bad = provenance.iter().filter(|p| **p == Provenance::Bad).count();
        let eps = bad as f64 / batches.len() as f64;
        Ok(Self {
            batches,
            provenance,
            n,
            k,
            eps,
            eta,
        })
    }

    pub fn batches(&self) -> &[Batch] {
        &self.batches
    }

    pub fn provenance(&self) -> &[Provenance] {
        &self.provenance
    }

    pub fn m(&self) -> usize {
        self.batches.len()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Realized fraction of adversarial batches.
    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

/// Serialize a real with 17 significant digits, enough to round-trip f64.
pub fn fmt_real(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_batch_file(path: &Path, n: usize, k: usize, batches: &[Batch]) -> Result<()> {
    let mut out = String::new();
    out.push_str(&format!("# n={n} k={k}\n"));
    for b in batches {
        let line: Vec<String> = b.samples().iter().map(|s| s.to_string()).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

pub fn read_batch_file(path: &Path) -> Result<(usize, usize, Vec<Batch>)> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "empty batch file"))?;
    let (n, k) = parse_batch_header(header).ok_or_else(|| {
        parse_err(
            path,
            1,
            format!("bad header {header:?}, expected `# n=<n> k=<k>`"),
        )
    })?;
    let mut batches = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let samples: std::result::Result<Vec<usize>, _> =
            line.split_whitespace().map(str::parse::<usize>).collect();
        let samples =
            samples.map_err(|e| parse_err(path, idx + 1, format!("bad sample index: {e}")))?;
        let batch =
            Batch::new(samples, n, k).map_err(|e| parse_err(path, idx + 1, e.to_string()))?;
        batches.push(batch);
    }
    Ok((n, k, batches))
}

fn parse_batch_header(header: &str) -> Option<(usize, usize)> {
    let rest = header.strip_prefix('#')?.trim();
    let mut n = None;
    let mut k = None;
    for part in rest.split_whitespace() {
        if let Some(v) = part.strip_prefix("n=") {
            n = v.parse().ok();
        } else if let Some(v) = part.strip_prefix("k=") {
            k = v.parse().ok();
        }
    }
    match (n, k) {
        (Some(n), Some(k)) if n >= 1 && k >= 1 => Some((n, k)),
        _ => None,
    }
}

/// The conventional sidecar path for a batch file's provenance flags.
pub fn provenance_path(batch_path: &Path) -> PathBuf {
    let mut os = batch_path.as_os_str().to_os_string();
    os.push(".prov");
    PathBuf::from(os)
}

pub fn write_provenance(path: &Path, provenance: &[Provenance]) -> Result<()> {
    let mut out = String::new();
    for p in provenance {
        out.push_str(match p {
            Provenance::Good => "good\n",
            Provenance::Bad => "bad\n",
        });
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

pub fn read_provenance(path: &Path) -> Result<Vec<Provenance>> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(idx, l)| match l.trim() {
            "good" => Ok(Provenance::Good),
            "bad" => Ok(Provenance::Bad),
            other => Err(parse_err(path, idx + 1, format!("bad flag {other:?}"))),
        })
        .collect()
}

/// Write a probability vector as n lines of 17-digit reals.
pub fn write_distribution(path: &Path, dist: &DiscreteDistribution) -> Result<()> {
    let mut out = String::new();
    for &p in dist.probs() {
        writeln!(out, "{}", fmt_real(p)).expect("string write");
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

pub fn read_distribution(path: &Path) -> Result<DiscreteDistribution> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut probs = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let v: f64 = line
            .trim()
            .parse()
            .map_err(|e| parse_err(path, idx + 1, format!("bad real: {e}")))?;
        probs.push(v);
    }
    DiscreteDistribution::new(probs)
}
