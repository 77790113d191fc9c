//! Experiment orchestration: configuration, seeded Monte Carlo trials
//! comparing estimators against the pooled-empirical baseline, and CSV
//! persistence.
//!
//! Determinism contract: a given [`ExperimentConfig`] produces byte-identical
//! results regardless of thread schedule. Per-trial randomness comes from
//! the master seed through fixed stream ids (`trial * 4 + stage`), trials
//! are gathered in index order, and reals are serialized with 17 significant
//! digits. Wall-clock timing is recorded only when explicitly requested,
//! since measured times would break byte-reproducibility.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;

use crate::adversary::{
    assemble_dataset, bad_batch_count, generate_adversarial_batches, sample_good_batches,
    seeded_rng, AdversaryStrategy, GoodBatchSpec, InstanceSide, Perturbation,
};
use crate::data::{fmt_real, read_distribution, Batch, Dataset};
use crate::dist::{tv_distance, DiscreteDistribution};
use crate::dist_set::learn_tensor;
use crate::subset_lp::learn_subset_lp;
use crate::{Error, Result};

/// Streams consumed per trial: truth draw, good batches, adversary, shuffle.
pub const STREAMS_PER_TRIAL: u64 = 4;
const STREAM_TRUTH: u64 = 0;
const STREAM_GOOD: u64 = 1;
const STREAM_ADVERSARY: u64 = 2;
const STREAM_SHUFFLE: u64 = 3;

/// Hard cap on the derived batch count.
pub const MAX_DERIVED_M: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Empirical,
    SubsetLp,
    DistSet,
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::Empirical => "empirical",
            Algorithm::SubsetLp => "subsetlp",
            Algorithm::DistSet => "distset",
        })
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "empirical" => Ok(Algorithm::Empirical),
            "subsetlp" => Ok(Algorithm::SubsetLp),
            "distset" => Ok(Algorithm::DistSet),
            other => Err(Error::InvalidConfig(format!("unknown algorithm {other:?}"))),
        }
    }
}

/// Experiment configuration, readable from flat `key=value` text.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub n: usize,
    pub k: usize,
    /// Batch count; when absent it is derived as
    /// `sample_multiplier * (n + k + ln(1/delta)) / eps^2`, capped.
    pub m: Option<usize>,
    pub trials: usize,
    pub eps: f64,
    pub eta: f64,
    pub delta: f64,
    /// Adversary id: `point_mass:<t>`, `mass_shift:<file>`, `replay_worst`,
    /// `lemma1`, `lemma1:p`, or `lemma1:q`.
    pub adversary: String,
    pub algorithms: Vec<Algorithm>,
    pub seed: u64,
    pub output_path: Option<PathBuf>,
    pub sample_multiplier: f64,
    /// Fixed ground truth; absent means a fresh uniform-simplex draw per
    /// trial.
    pub truth: Option<Vec<f64>>,
    /// Good-batch perturbation: `none`, `fixed_shift:<donor>,<receiver>`,
    /// or `per_batch_random` (the default whenever eta > 0).
    pub perturbation: Option<String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n: 2,
            k: 1,
            m: None,
            trials: 1,
            eps: 0.01,
            eta: 0.0,
            delta: 0.1,
            adversary: "point_mass:1".into(),
            algorithms: vec![Algorithm::Empirical],
            seed: 0,
            output_path: None,
            sample_multiplier: 40.0,
            truth: None,
            perturbation: None,
        }
    }
}

impl ExperimentConfig {
    pub fn parse_str(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        let mut seen_algorithms = false;
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::InvalidConfig(format!(
                    "line {}: expected key=value, got {line:?}",
                    idx + 1
                ))
            })?;
            let (key, value) = (key.trim(), value.trim());
            let bad = |what: &str| {
                Error::InvalidConfig(format!("line {}: bad {what} value {value:?}", idx + 1))
            };
            match key {
                "n" => cfg.n = value.parse().map_err(|_| bad("n"))?,
                "k" => cfg.k = value.parse().map_err(|_| bad("k"))?,
                "m" => cfg.m = Some(value.parse().map_err(|_| bad("m"))?),
                "trials" => cfg.trials = value.parse().map_err(|_| bad("trials"))?,
                "eps" => cfg.eps = value.parse().map_err(|_| bad("eps"))?,
                "eta" => cfg.eta = value.parse().map_err(|_| bad("eta"))?,
                "delta" => cfg.delta = value.parse().map_err(|_| bad("delta"))?,
                "adversary" => cfg.adversary = value.to_string(),
                "algorithms" => {
                    cfg.algorithms = value
                        .split(',')
                        .map(|s| s.trim().parse())
                        .collect::<Result<_>>()?;
                    seen_algorithms = true;
                }
                "seed" => cfg.seed = value.parse().map_err(|_| bad("seed"))?,
                "output_path" => cfg.output_path = Some(PathBuf::from(value)),
                "sample_multiplier" => {
                    cfg.sample_multiplier = value.parse().map_err(|_| bad("sample_multiplier"))?
                }
                "p" => {
                    cfg.truth = Some(
                        value
                            .split(',')
                            .map(|s| s.trim().parse::<f64>().map_err(|_| bad("p")))
                            .collect::<Result<_>>()?,
                    )
                }
                "perturbation" => cfg.perturbation = Some(value.to_string()),
                other => {
                    return Err(Error::InvalidConfig(format!(
                        "line {}: unknown key {other:?}",
                        idx + 1
                    )))
                }
            }
        }
        if !seen_algorithms {
            cfg.algorithms = vec![
                Algorithm::Empirical,
                Algorithm::SubsetLp,
                Algorithm::DistSet,
            ];
        }
        Ok(cfg)
    }

    pub fn parse_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse_str(&text)
    }

    /// Validate every parameter range before any work happens.
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n == 0 || self.k == 0 {
            return fail(format!(
                "n = {} and k = {} must be positive",
                self.n, self.k
            ));
        }
        if self.trials == 0 {
            return fail("trials must be >= 1".into());
        }
        if !(0.0..1.0).contains(&self.eps) {
            return fail(format!("eps = {} outside [0, 1)", self.eps));
        }
        if !(0.0..1.0).contains(&self.eta) {
            return fail(format!("eta = {} outside [0, 1)", self.eta));
        }
        if !(0.0 < self.delta && self.delta < 1.0) {
            return fail(format!("delta = {} outside (0, 1)", self.delta));
        }
        if self.sample_multiplier <= 0.0 {
            return fail(format!(
                "sample_multiplier = {} must be positive",
                self.sample_multiplier
            ));
        }
        if self.m == Some(0) {
            return fail("m must be >= 1".into());
        }
        if self.m.is_none() && self.eps == 0.0 {
            return fail("m must be given explicitly when eps = 0".into());
        }
        if self.algorithms.is_empty() {
            return fail("at least one algorithm is required".into());
        }
        if let Some(p) = &self.truth {
            if p.len() != self.n {
                return fail(format!(
                    "p has {} entries, expected n = {}",
                    p.len(),
                    self.n
                ));
            }
            DiscreteDistribution::new(p.clone())?;
        }
        if self.algorithms.contains(&Algorithm::SubsetLp) {
            if self.eps == 0.0 || self.eps >= crate::subset_lp::EPS_HARD_CAP {
                return fail(format!(
                    "subsetlp needs eps in (0, {}), got {}",
                    crate::subset_lp::EPS_HARD_CAP,
                    self.eps
                ));
            }
            if self.eta > crate::subset_lp::ETA_CAP {
                return fail(format!(
                    "subsetlp needs eta <= {}, got {}",
                    crate::subset_lp::ETA_CAP,
                    self.eta
                ));
            }
            if self.n > crate::subset_lp::DEFAULT_SUBSET_N_CAP {
                return fail(format!(
                    "subsetlp enumerates 2^n subsets; n = {} exceeds the cap of {}",
                    self.n,
                    crate::subset_lp::DEFAULT_SUBSET_N_CAP
                ));
            }
        }
        if self.algorithms.contains(&Algorithm::DistSet) {
            let mut size: usize = 1;
            for _ in 0..self.k {
                size = match size.checked_mul(self.n) {
                    Some(s) if s <= crate::tensor::DEFAULT_DENSE_CAP => s,
                    _ => {
                        return fail(format!(
                            "distset needs n^k within {}, got n = {}, k = {}",
                            crate::tensor::DEFAULT_DENSE_CAP,
                            self.n,
                            self.k
                        ))
                    }
                };
            }
        }
        resolve_adversary_syntax(&self.adversary)?;
        self.resolved_perturbation()?;
        Ok(())
    }

    /// The batch count actually used.
    pub fn resolved_m(&self) -> usize {
        match self.m {
            Some(m) => m,
            None => {
                let raw = self.sample_multiplier
                    * (self.n as f64 + self.k as f64 + (1.0 / self.delta).ln())
                    / (self.eps * self.eps);
                (raw.round() as usize).clamp(1, MAX_DERIVED_M)
            }
        }
    }

    pub fn resolved_perturbation(&self) -> Result<Perturbation> {
        match self.perturbation.as_deref() {
            None => Ok(if self.eta > 0.0 {
                Perturbation::PerBatchRandom
            } else {
                Perturbation::None
            }),
            Some("none") => Ok(Perturbation::None),
            Some("per_batch_random") => Ok(Perturbation::PerBatchRandom),
            Some(other) => {
                if let Some(rest) = other.strip_prefix("fixed_shift:") {
                    let parts: Vec<&str> = rest.split(',').collect();
                    if parts.len() == 2 {
                        let donor = parts[0].trim().parse().ok();
                        let receiver = parts[1].trim().parse().ok();
                        if let (Some(donor), Some(receiver)) = (donor, receiver) {
                            return Ok(Perturbation::FixedShift { donor, receiver });
                        }
                    }
                }
                Err(Error::InvalidConfig(format!(
                    "bad perturbation {other:?}; expected none, per_batch_random, \
                     or fixed_shift:<donor>,<receiver>"
                )))
            }
        }
    }
}

/// Check adversary syntax without touching the filesystem.
fn resolve_adversary_syntax(id: &str) -> Result<()> {
    let (kind, _arg) = match id.split_once(':') {
        Some((k, a)) => (k, Some(a)),
        None => (id, None),
    };
    match kind {
        "point_mass" | "mass_shift" | "replay_worst" | "lemma1" => Ok(()),
        other => Err(Error::InvalidConfig(format!("unknown adversary {other:?}"))),
    }
}

/// Turn an adversary id into a strategy; reads the decoy distribution file
/// for `mass_shift:<file>`.
pub fn resolve_adversary(id: &str, eta: f64) -> Result<AdversaryStrategy> {
    if let Some(rest) = id.strip_prefix("point_mass:") {
        let target: usize = rest
            .parse()
            .map_err(|_| Error::InvalidConfig(format!("bad point_mass target {rest:?}")))?;
        return Ok(AdversaryStrategy::PointMass { target });
    }
    if let Some(rest) = id.strip_prefix("mass_shift:") {
        let toward = read_distribution(Path::new(rest))?;
        return Ok(AdversaryStrategy::MassShift { toward });
    }
    match id {
        "replay_worst" => Ok(AdversaryStrategy::ReplayWorst { subset_mask: 0b1 }),
        "lemma1" | "lemma1:p" => Ok(AdversaryStrategy::Lemma1Optimal {
            eta,
            side: InstanceSide::P,
        }),
        "lemma1:q" => Ok(AdversaryStrategy::Lemma1Optimal {
            eta,
            side: InstanceSide::Q,
        }),
        other => Err(Error::InvalidConfig(format!("unknown adversary {other:?}"))),
    }
}

/// One row of the results CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub trial_index: usize,
    pub algorithm: String,
    pub n: usize,
    pub k: usize,
    pub m: usize,
    pub eps: f64,
    pub eta: f64,
    pub adversary: String,
    pub seed_used: u64,
    pub tv_error: f64,
    pub runtime_ms: f64,
    pub degraded: bool,
}

/// Ground truth and estimate persisted per (trial, algorithm) when
/// `dump_distributions` is on; lets the scoring be re-derived offline.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionDump {
    pub trial_index: usize,
    pub algorithm: String,
    pub truth: Vec<f64>,
    pub estimate: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    pub dump_distributions: bool,
    /// Record wall-clock runtime per estimator call. Off by default: the
    /// results CSV is byte-reproducible, and measured times are not.
    pub measure_time: bool,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub records: Vec<TrialRecord>,
    pub distributions: Vec<DistributionDump>,
}

/// Pooled empirical frequency over all `m * k` samples: the non-robust
/// baseline an adversary shifts by about `eps * (1 - p(target))`.
pub fn empirical_baseline(batches: &[Batch], n: usize) -> Result<DiscreteDistribution> {
    if batches.is_empty() {
        return Err(Error::InvalidParameter("empty dataset".into()));
    }
    let mut counts = vec![0usize; n];
    let mut total = 0usize;
    for b in batches {
        for &s in b.samples() {
            if s == 0 || s > n {
                return Err(Error::InvalidBatch(format!("sample {s} outside [1, {n}]")));
            }
            counts[s - 1] += 1;
            total += 1;
        }
    }
    DiscreteDistribution::new(
        counts
            .into_iter()
            .map(|c| c as f64 / total as f64)
            .collect(),
    )
}

fn dirichlet_uniform(n: usize, rng: &mut rand_chacha::ChaCha8Rng) -> Result<DiscreteDistribution> {
    use rand::Rng;
    let raw: Vec<f64> = (0..n)
        .map(|_| {
            let u: f64 = rng.random();
            -(1.0 - u).ln()
        })
        .collect();
    let total: f64 = raw.iter().sum();
    DiscreteDistribution::new(raw.into_iter().map(|x| x / total).collect())
}

fn run_algorithm(
    algorithm: Algorithm,
    batches: &[Batch],
    cfg: &ExperimentConfig,
) -> Result<(DiscreteDistribution, bool)> {
    match algorithm {
        Algorithm::Empirical => Ok((empirical_baseline(batches, cfg.n)?, false)),
        Algorithm::SubsetLp => {
            let out = learn_subset_lp(batches, cfg.n, cfg.k, cfg.eps, cfg.eta, cfg.delta)?;
            Ok((out.estimate, out.degraded))
        }
        Algorithm::DistSet => {
            let fit = learn_tensor(batches, cfg.n, cfg.k)?;
            Ok((fit.chosen, false))
        }
    }
}

/// Build the dataset for one trial of the experiment, exactly as
/// [`run_experiment`] would.
pub fn build_trial_dataset(
    cfg: &ExperimentConfig,
    trial: usize,
    strategy: &AdversaryStrategy,
    truth: &DiscreteDistribution,
) -> Result<Dataset> {
    let m = cfg.resolved_m();
    let bad_count = bad_batch_count(m, cfg.eps);
    let good_count = m - bad_count;
    let spec = GoodBatchSpec::new(truth.clone(), cfg.eta, cfg.resolved_perturbation()?)?;
    let base = trial as u64 * STREAMS_PER_TRIAL;
    let good = sample_good_batches(
        &spec,
        cfg.k,
        good_count,
        &mut seeded_rng(cfg.seed, base + STREAM_GOOD),
    )?;
    let bad = generate_adversarial_batches(
        strategy,
        &good,
        truth,
        cfg.eps,
        cfg.k,
        bad_count,
        &mut seeded_rng(cfg.seed, base + STREAM_ADVERSARY),
    )?;
    assemble_dataset(
        good,
        bad,
        cfg.n,
        cfg.k,
        cfg.eta,
        &mut seeded_rng(cfg.seed, base + STREAM_SHUFFLE),
    )
}

/// The per-trial ground truth: the configured vector, or a fresh
/// uniform-simplex draw on the trial's truth stream.
pub fn trial_truth(cfg: &ExperimentConfig, trial: usize) -> Result<DiscreteDistribution> {
    match &cfg.truth {
        Some(p) => DiscreteDistribution::new(p.clone()),
        None => dirichlet_uniform(
            cfg.n,
            &mut seeded_rng(cfg.seed, trial as u64 * STREAMS_PER_TRIAL + STREAM_TRUTH),
        ),
    }
}

/// Run every trial of the configured experiment. Trials execute in parallel
/// but results are gathered in trial order; estimator failures become
/// degraded records (tv_error pinned to 1) instead of aborting the sweep.
pub fn run_experiment(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let strategy = resolve_adversary(&cfg.adversary, cfg.eta)?;
    let m = cfg.resolved_m();

    let per_trial: Vec<(Vec<TrialRecord>, Vec<DistributionDump>)> = (0..cfg.trials)
        .into_par_iter()
        .map(
            |trial| -> Result<(Vec<TrialRecord>, Vec<DistributionDump>)> {
                let truth = trial_truth(cfg, trial)?;
                let dataset = build_trial_dataset(cfg, trial, &strategy, &truth)?;
                let mut records = Vec::with_capacity(cfg.algorithms.len());
                let mut dumps = Vec::new();
                for &algorithm in &cfg.algorithms {
                    let started = Instant::now();
                    let outcome = run_algorithm(algorithm, dataset.batches(), cfg);
                    let runtime_ms = if opts.measure_time {
                        started.elapsed().as_secs_f64() * 1e3
                    } else {
                        0.0
                    };
                    let (tv_error, degraded) = match &outcome {
                        Ok((estimate, degraded)) => {
                            let tv = tv_distance(&truth, estimate)?;
                            if opts.dump_distributions {
                                dumps.push(DistributionDump {
                                    trial_index: trial,
                                    algorithm: algorithm.to_string(),
                                    truth: truth.probs().to_vec(),
                                    estimate: estimate.probs().to_vec(),
                                });
                            }
                            (tv, *degraded)
                        }
                        Err(err) => {
                            log::warn!("trial {trial}, {algorithm}: estimator failed: {err}");
                            (1.0, true)
                        }
                    };
                    records.push(TrialRecord {
                        trial_index: trial,
                        algorithm: algorithm.to_string(),
                        n: cfg.n,
                        k: cfg.k,
                        m,
                        eps: cfg.eps,
                        eta: cfg.eta,
                        adversary: cfg.adversary.clone(),
                        seed_used: cfg.seed,
                        tv_error,
                        runtime_ms,
                        degraded,
                    });
                }
                Ok((records, dumps))
            },
        )
        .collect::<Result<_>>()?;

    let mut records = Vec::with_capacity(cfg.trials * cfg.algorithms.len());
    let mut distributions = Vec::new();
    for (r, d) in per_trial {
        records.extend(r);
        distributions.extend(d);
    }
    Ok(ExperimentOutput {
        records,
        distributions,
    })
}

const RESULT_HEADER: [&str; 12] = [
    "trial_index",
    "algorithm",
    "n",
    "k",
    "m",
    "eps",
    "eta",
    "adversary",
    "seed_used",
    "tv_error",
    "runtime_ms",
    "degraded",
];

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn write_results(records: &[TrialRecord], path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| csv_to_err(path, e))?;
    writer
        .write_record(RESULT_HEADER)
        .map_err(|e| csv_to_err(path, e))?;
    for r in records {
        writer
            .write_record([
                r.trial_index.to_string(),
                r.algorithm.clone(),
                r.n.to_string(),
                r.k.to_string(),
                r.m.to_string(),
                fmt_real(r.eps),
                fmt_real(r.eta),
                r.adversary.clone(),
                r.seed_used.to_string(),
                fmt_real(r.tv_error),
                fmt_real(r.runtime_ms),
                r.degraded.to_string(),
            ])
            .map_err(|e| csv_to_err(path, e))?;
    }
    writer.flush().map_err(|e| io_err(path, e))
}

fn csv_to_err(path: &Path, e: csv::Error) -> Error {
    match e.kind() {
        csv::ErrorKind::Io(_) => {
            if let csv::ErrorKind::Io(io) = e.into_kind() {
                io_err(path, io)
            } else {
                unreachable!()
            }
        }
        _ => Error::Parse {
            path: path.to_path_buf(),
            line: e.position().map(|p| p.line() as usize).unwrap_or_default(),
            msg: e.to_string(),
        },
    }
}

pub fn read_results(path: &Path) -> Result<Vec<TrialRecord>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_to_err(path, e))?;
    {
        let headers = reader.headers().map_err(|e| csv_to_err(path, e))?;
        if headers.iter().ne(RESULT_HEADER) {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: 1,
                msg: format!("unexpected header {headers:?}"),
            });
        }
    }
    let mut records = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| csv_to_err(path, e))?;
        let line = row.position().map(|p| p.line() as usize).unwrap_or(0);
        let field = |i: usize| -> Result<&str> {
            row.get(i).ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                line,
                msg: format!("missing column {}", RESULT_HEADER[i]),
            })
        };
        fn parse<T: FromStr>(path: &Path, line: usize, name: &str, s: &str) -> Result<T> {
            s.parse().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line,
                msg: format!("bad {name} value {s:?}"),
            })
        }
        records.push(TrialRecord {
            trial_index: parse(path, line, "trial_index", field(0)?)?,
            algorithm: field(1)?.to_string(),
            n: parse(path, line, "n", field(2)?)?,
            k: parse(path, line, "k", field(3)?)?,
            m: parse(path, line, "m", field(4)?)?,
            eps: parse(path, line, "eps", field(5)?)?,
            eta: parse(path, line, "eta", field(6)?)?,
            adversary: field(7)?.to_string(),
            seed_used: parse(path, line, "seed_used", field(8)?)?,
            tv_error: parse(path, line, "tv_error", field(9)?)?,
            runtime_ms: parse(path, line, "runtime_ms", field(10)?)?,
            degraded: parse(path, line, "degraded", field(11)?)?,
        });
    }
    Ok(records)
}

/// Conventional sidecar path for the distribution dump of a results file.
pub fn distributions_path(results_path: &Path) -> PathBuf {
    let mut os = results_path.as_os_str().to_os_string();
    os.push(".distributions");
    PathBuf::from(os)
}

pub fn write_distributions(dumps: &[DistributionDump], path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| csv_to_err(path, e))?;
    writer
        .write_record(["trial_index", "algorithm", "kind", "values"])
        .map_err(|e| csv_to_err(path, e))?;
    for d in dumps {
        for (kind, values) in [("truth", &d.truth), ("estimate", &d.estimate)] {
            let joined: Vec<String> = values.iter().map(|&v| fmt_real(v)).collect();
            writer
                .write_record([
                    d.trial_index.to_string(),
                    d.algorithm.clone(),
                    kind.to_string(),
                    joined.join(" "),
                ])
                .map_err(|e| csv_to_err(path, e))?;
        }
    }
    writer.flush().map_err(|e| io_err(path, e))
}

type PartialDump = (usize, String, Option<Vec<f64>>, Option<Vec<f64>>);

pub fn read_distributions(path: &Path) -> Result<Vec<DistributionDump>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_to_err(path, e))?;
    let mut partial: Vec<PartialDump> = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| csv_to_err(path, e))?;
        let line = row.position().map(|p| p.line() as usize).unwrap_or(0);
        let err = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            msg,
        };
        if row.len() != 4 {
            return Err(err(format!("expected 4 columns, got {}", row.len())));
        }
        let trial: usize = row[0]
            .parse()
            .map_err(|_| err(format!("bad trial_index {:?}", &row[0])))?;
        let algorithm = row[1].to_string();
        let values: Vec<f64> = row[3]
            .split_whitespace()
            .map(|s| s.parse::<f64>().map_err(|_| err(format!("bad real {s:?}"))))
            .collect::<Result<_>>()?;
        let slot = match partial
            .iter_mut()
            .find(|(t, a, _, _)| *t == trial && *a == algorithm)
        {
            Some(slot) => slot,
            None => {
                partial.push((trial, algorithm.clone(), None, None));
                partial.last_mut().unwrap()
            }
        };
        match &row[2] {
            "truth" => slot.2 = Some(values),
            "estimate" => slot.3 = Some(values),
            other => return Err(err(format!("bad kind {other:?}"))),
        }
    }
    partial
        .into_iter()
        .map(|(trial_index, algorithm, truth, estimate)| {
            let missing = |what: &str, algorithm: &str| Error::Parse {
                path: path.to_path_buf(),
                line: 0,
                msg: format!("trial {trial_index} {algorithm}: missing {what} row"),
            };
            Ok(DistributionDump {
                truth: truth.ok_or_else(|| missing("truth", &algorithm))?,
                estimate: estimate.ok_or_else(|| missing("estimate", &algorithm))?,
                trial_index,
                algorithm,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_parses_flat_keys() {
        let cfg = ExperimentConfig::parse_str(
            "n=3\nk=4\nm=100\ntrials=2\neps=0.05\neta=0\ndelta=0.1\n\
             adversary=point_mass:1\nalgorithms=empirical,distset\nseed=7\n\
             sample_multiplier=40\np=0.5,0.3,0.2\n",
        )
        .unwrap();
        assert_eq!(cfg.n, 3);
        assert_eq!(cfg.m, Some(100));
        assert_eq!(
            cfg.algorithms,
            vec![Algorithm::Empirical, Algorithm::DistSet]
        );
        assert_eq!(cfg.truth, Some(vec![0.5, 0.3, 0.2]));
        cfg.validate().unwrap();
    }

    #[test]
    fn config_rejects_unknown_keys_and_values() {
        assert!(ExperimentConfig::parse_str("bogus=1\n").is_err());
        assert!(ExperimentConfig::parse_str("n=x\n").is_err());
        assert!(ExperimentConfig::parse_str("algorithms=nope\n").is_err());
    }

    #[test]
    fn derived_m_follows_the_rate() {
        let mut cfg = ExperimentConfig {
            n: 5,
            k: 25,
            eps: 0.1,
            delta: 0.1,
            sample_multiplier: 40.0,
            ..ExperimentConfig::default()
        };
        cfg.m = None;
        let want = (40.0 * (5.0 + 25.0 + 10.0f64.ln()) / 0.01).round() as usize;
        assert_eq!(cfg.resolved_m(), want);
        cfg.eps = 1e-6;
        assert_eq!(cfg.resolved_m(), MAX_DERIVED_M);
    }

    #[test]
    fn empirical_baseline_counts_samples() {
        let batches = vec![
            Batch::new(vec![1, 1, 2], 2, 3).unwrap(),
            Batch::new(vec![2, 1, 1], 2, 3).unwrap(),
        ];
        let p = empirical_baseline(&batches, 2).unwrap();
        assert!((p.prob(1) - 4.0 / 6.0).abs() < 1e-15);

        let single = vec![Batch::new(vec![1, 1], 2, 2).unwrap()];
        let p = empirical_baseline(&single, 2).unwrap();
        assert_eq!(p.probs(), &[1.0, 0.0]);
    }

    #[test]
    fn experiment_is_deterministic_across_runs() {
        let cfg = ExperimentConfig {
            n: 2,
            k: 3,
            m: Some(200),
            trials: 3,
            eps: 0.1,
            eta: 0.0,
            adversary: "point_mass:1".into(),
            algorithms: vec![Algorithm::Empirical, Algorithm::DistSet],
            seed: 99,
            ..ExperimentConfig::default()
        };
        let a = run_experiment(&cfg, &RunOptions::default()).unwrap();
        let b = run_experiment(&cfg, &RunOptions::default()).unwrap();
        assert_eq!(a.records, b.records);
    }

    #[test]
    fn single_trial_error_matches_recomputation() {
        let cfg = ExperimentConfig {
            n: 3,
            k: 2,
            m: Some(500),
            trials: 1,
            eps: 0.0,
            eta: 0.0,
            adversary: "point_mass:1".into(),
            algorithms: vec![Algorithm::Empirical],
            seed: 5,
            truth: Some(vec![0.2, 0.3, 0.5]),
            ..ExperimentConfig::default()
        };
        let out = run_experiment(
            &cfg,
            &RunOptions {
                dump_distributions: true,
                measure_time: false,
            },
        )
        .unwrap();
        assert_eq!(out.records.len(), 1);
        let dump = &out.distributions[0];
        let truth = DiscreteDistribution::new(dump.truth.clone()).unwrap();
        let est = DiscreteDistribution::new(dump.estimate.clone()).unwrap();
        let tv = tv_distance(&truth, &est).unwrap();
        assert!((tv - out.records[0].tv_error).abs() < 1e-12);
        assert_eq!(out.records[0].runtime_ms, 0.0);
    }

    #[test]
    fn results_round_trip_and_line_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("results.csv");
        let records: Vec<TrialRecord> = (0..100)
            .map(|i| TrialRecord {
                trial_index: i,
                algorithm: "empirical".into(),
                n: 2,
                k: 3,
                m: 10,
                eps: 0.1,
                eta: 0.05,
                adversary: "point_mass:1".into(),
                seed_used: 42,
                tv_error: (i as f64) / 300.0,
                runtime_ms: 0.0,
                degraded: i % 7 == 0,
            })
            .collect();
        write_results(&records, &path).unwrap();
        assert_eq!(read_results(&path).unwrap(), records);

        // Header-only file round-trips to empty.
        let empty = dir.path().join("empty.csv");
        write_results(&[], &empty).unwrap();
        assert!(read_results(&empty).unwrap().is_empty());

        // A malformed row names its line.
        let bad = dir.path().join("bad.csv");
        let mut text = std::fs::read_to_string(&path).unwrap();
        text.push_str("1,empirical,2,3,10,xx,0.05,point_mass:1,42,0.1,0,false\n");
        std::fs::write(&bad, text).unwrap();
        let err = read_results(&bad).unwrap_err();
        assert!(err.to_string().contains(":102:"), "{err}");
    }

    #[test]
    fn distribution_dump_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("results.csv.distributions");
        let dumps = vec![DistributionDump {
            trial_index: 0,
            algorithm: "distset".into(),
            truth: vec![0.25, 0.75],
            estimate: vec![0.3, 0.7],
        }];
        write_distributions(&dumps, &path).unwrap();
        assert_eq!(read_distributions(&path).unwrap(), dumps);
    }
}
