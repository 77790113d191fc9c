//! Batch generation: eta-perturbed good sources, adaptive adversaries, and
//! the exactly indistinguishable pair of contaminated binary instances.
//!
//! The threat model: the adversary sees every realized good batch before
//! choosing its own, so generation is ordered good-first and the adversary
//! interface receives the good batches even when a strategy ignores them.
//!
//! All randomness flows through a named, seedable generator (ChaCha8) so
//! experiments are bit-reproducible across platforms; every stochastic
//! operation takes an explicit rng stream.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{Batch, Dataset, Provenance};
use crate::dist::DiscreteDistribution;
use crate::tensor::FrequencyTensor;
use crate::{Error, Result};

/// The crate-wide deterministic generator: ChaCha8 keyed by a 64-bit seed,
/// with a 64-bit stream id separating independent uses of the same seed.
pub fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// How a good source's distribution deviates from the target within the
/// eta ball.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Perturbation {
    /// Every good batch draws from the target itself.
    None,
    /// Every good batch draws from the target with `eta` mass moved from
    /// `donor` to `receiver` (1-based elements).
    FixedShift { donor: usize, receiver: usize },
    /// Each batch independently picks a random donor/receiver pair and moves
    /// exactly `eta` mass, so the source distribution varies per batch.
    /// Donors are drawn among elements holding at least `eta` mass; it is an
    /// error when no element does.
    PerBatchRandom,
}

#[derive(Debug, Clone)]
pub struct GoodBatchSpec {
    pub target: DiscreteDistribution,
    pub eta: f64,
    pub perturbation: Perturbation,
}

impl GoodBatchSpec {
    pub fn new(target: DiscreteDistribution, eta: f64, perturbation: Perturbation) -> Result<Self> {
        if !(0.0..1.0).contains(&eta) {
            return Err(Error::InvalidParameter(format!(
                "eta = {eta} outside [0, 1)"
            )));
        }
        if let Perturbation::FixedShift { donor, receiver } = perturbation {
            let n = target.n();
            if donor == 0 || donor > n || receiver == 0 || receiver > n || donor == receiver {
                return Err(Error::InvalidParameter(format!(
                    "fixed shift {donor} -> {receiver} invalid for n = {n}"
                )));
            }
        }
        Ok(Self {
            target,
            eta,
            perturbation,
        })
    }
}

/// Move `eta` mass from `donor` to `receiver`. Errors when the donor lacks
/// the mass: the perturbed vector would leave the simplex, and clamping
/// silently would hide the configuration bug.
fn shifted(
    p: &DiscreteDistribution,
    donor: usize,
    receiver: usize,
    eta: f64,
) -> Result<DiscreteDistribution> {
    let mut probs = p.probs().to_vec();
    if probs[donor - 1] < eta {
        return Err(Error::InvalidParameter(format!(
            "cannot shift {eta} mass from element {donor} holding only {}",
            probs[donor - 1]
        )));
    }
    probs[donor - 1] -= eta;
    probs[receiver - 1] += eta;
    DiscreteDistribution::new(probs)
}

/// Draw `count` good batches of k i.i.d. samples each; every batch's source
/// distribution is within `eta` of the configured target in total variation.
pub fn sample_good_batches(
    spec: &GoodBatchSpec,
    k: usize,
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Batch>> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be >= 1".into()));
    }
    let n = spec.target.n();
    let mut batches = Vec::with_capacity(count);
    match &spec.perturbation {
        Perturbation::None => {
            let sampler = spec.target.sampler();
            for _ in 0..count {
                let samples = (0..k).map(|_| sampler.sample(rng)).collect();
                batches.push(Batch::new(samples, n, k)?);
            }
        }
        Perturbation::FixedShift { donor, receiver } => {
            let tilted = if spec.eta == 0.0 {
                spec.target.clone()
            } else {
                shifted(&spec.target, *donor, *receiver, spec.eta)?
            };
            let sampler = tilted.sampler();
            for _ in 0..count {
                let samples = (0..k).map(|_| sampler.sample(rng)).collect();
                batches.push(Batch::new(samples, n, k)?);
            }
        }
        Perturbation::PerBatchRandom => {
            if n < 2 && spec.eta > 0.0 {
                return Err(Error::InvalidParameter(
                    "per-batch perturbation needs n >= 2".into(),
                ));
            }
            let donors: Vec<usize> = (1..=n)
                .filter(|&i| spec.target.prob(i) >= spec.eta)
                .collect();
            if donors.is_empty() {
                return Err(Error::InvalidParameter(format!(
                    "no element of the target holds eta = {} mass to donate",
                    spec.eta
                )));
            }
            for _ in 0..count {
                let tilted = if spec.eta == 0.0 {
                    spec.target.clone()
                } else {
                    let donor = donors[rng.random_range(0..donors.len())];
                    let mut receiver = rng.random_range(1..=n - 1);
                    if receiver >= donor {
                        receiver += 1;
                    }
                    shifted(&spec.target, donor, receiver, spec.eta)?
                };
                let sampler = tilted.sampler();
                let samples = (0..k).map(|_| sampler.sample(rng)).collect();
                batches.push(Batch::new(samples, n, k)?);
            }
        }
    }
    Ok(batches)
}

/// Which side of the indistinguishable pair the adversary completes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InstanceSide {
    P,
    Q,
}

/// Adversarial batch strategies. All are adaptive in interface: they receive
/// the realized good batches, even when they ignore them.
#[derive(Debug, Clone)]
pub enum AdversaryStrategy {
    /// Every bad batch is `(t, t, ..., t)`.
    PointMass { target: usize },
    /// Bad batches are k i.i.d. draws from a fixed decoy distribution.
    MassShift { toward: DiscreteDistribution },
    /// Replays the good batch whose count on a target subset deviates most
    /// from its expectation under the true distribution.
    ReplayWorst { subset_mask: u64 },
    /// Draws bad batches from the contamination tensor of the
    /// indistinguishable-pair construction (binary alphabet only); mixed
    /// (1-eps):eps with good batches from the matching perturbed source it
    /// reproduces the common mixture exactly.
    Lemma1Optimal { eta: f64, side: InstanceSide },
}

impl AdversaryStrategy {
    /// Stable identifier used in results CSV and config files.
    pub fn id(&self) -> String {
        match self {
            AdversaryStrategy::PointMass { target } => format!("point_mass:{target}"),
            AdversaryStrategy::MassShift { .. } => "mass_shift".into(),
            AdversaryStrategy::ReplayWorst { .. } => "replay_worst".into(),
            AdversaryStrategy::Lemma1Optimal { side, .. } => match side {
                InstanceSide::P => "lemma1:p".into(),
                InstanceSide::Q => "lemma1:q".into(),
            },
        }
    }
}

/// Produce `count` adversarial batches, chosen after the good batches.
pub fn generate_adversarial_batches(
    strategy: &AdversaryStrategy,
    good_batches: &[Batch],
    truth: &DiscreteDistribution,
    eps: f64,
    k: usize,
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Batch>> {
    let n = truth.n();
    match strategy {
        AdversaryStrategy::PointMass { target } => {
            if *target == 0 || *target > n {
                return Err(Error::InvalidParameter(format!(
                    "point mass target {target} outside [1, {n}]"
                )));
            }
            (0..count)
                .map(|_| Batch::new(vec![*target; k], n, k))
                .collect()
        }
        AdversaryStrategy::MassShift { toward } => {
            if toward.n() != n {
                return Err(Error::ShapeMismatch(format!(
                    "mass shift target over [{}] against alphabet [{n}]",
                    toward.n()
                )));
            }
            let sampler = toward.sampler();
            (0..count)
                .map(|_| {
                    let samples = (0..k).map(|_| sampler.sample(rng)).collect();
                    Batch::new(samples, n, k)
                })
                .collect()
        }
        AdversaryStrategy::ReplayWorst { subset_mask } => {
            if count > 0 && good_batches.is_empty() {
                return Err(Error::InvalidParameter(
                    "replay adversary with no good batches to replay".into(),
                ));
            }
            let expected = truth.subset_mass(*subset_mask) * k as f64;
            let worst = good_batches
                .iter()
                .enumerate()
                .map(|(i, b)| {
                    let cnt = b
                        .samples()
                        .iter()
                        .filter(|&&s| subset_mask & (1 << (s - 1)) != 0)
                        .count() as f64;
                    (i, (cnt - expected).abs())
                })
                .max_by(|(ia, va), (ib, vb)| {
                    va.partial_cmp(vb).unwrap().then(ib.cmp(ia)) // ties: keep the earliest batch
                })
                .map(|(i, _)| i);
            match worst {
                Some(i) => Ok(vec![good_batches[i].clone(); count]),
                None => Ok(Vec::new()),
            }
        }
        AdversaryStrategy::Lemma1Optimal { eta, side } => {
            if n != 2 {
                return Err(Error::InvalidParameter(format!(
                    "the optimal-pair adversary is defined for n = 2 only, got n = {n}"
                )));
            }
            let instance = lower_bound_instance(eps, *eta, k)?;
            let tensor = match side {
                InstanceSide::P => &instance.n_p,
                InstanceSide::Q => &instance.n_q,
            };
            let sampler = tensor.sampler();
            (0..count)
                .map(|_| Batch::new(sampler.sample(rng), n, k))
                .collect()
        }
    }
}

/// Number of adversarial batches in a dataset of `m` batches with corruption
/// fraction `eps`: nearest integer, ties rounded down.
pub fn bad_batch_count(m: usize, eps: f64) -> usize {
    let x = m as f64 * eps;
    let fl = x.floor();
    let count = if x - fl > 0.5 { fl + 1.0 } else { fl };
    count as usize
}

/// Concatenate good and bad batches, shuffle deterministically, and record
/// provenance. The realized eps is `|bad| / m`.
pub fn assemble_dataset(
    good: Vec<Batch>,
    bad: Vec<Batch>,
    n: usize,
    k: usize,
    eta: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Dataset> {
    let mut tagged: Vec<(Batch, Provenance)> = good
        .into_iter()
        .map(|b| (b, Provenance::Good))
        .chain(bad.into_iter().map(|b| (b, Provenance::Bad)))
        .collect();
    tagged.shuffle(rng);
    let (batches, provenance): (Vec<Batch>, Vec<Provenance>) = tagged.into_iter().unzip();
    Dataset::new(batches, provenance, n, k, eta)
}

/// The certified error floor: a pair of contaminated instances, one with
/// truth `p` and one with truth `q`, whose observable batch distributions
/// are exactly identical.
///
/// Construction on the binary alphabet: `p'` and `q'` are Bernoulli with
/// means `(1 -+ eps/sqrt(2k))/2`; `p` and `q` move a further `eta` outward.
/// `A` is the entrywise maximum of the two k-fold products, `alpha` its
/// total mass, and the contamination tensors are
/// `N = [A/alpha - (1 - eps) * (tensor power)]/eps` for each side. Then
/// `(1-eps) p'^(x)k + eps N_p = (1-eps) q'^(x)k + eps N_q = A/alpha`
/// entrywise, while `tv(p, q) = 2 eta + eps/sqrt(2k)`.
#[derive(Debug, Clone)]
pub struct LowerBoundInstance {
    pub p: DiscreteDistribution,
    pub q: DiscreteDistribution,
    pub p_prime: DiscreteDistribution,
    pub q_prime: DiscreteDistribution,
    pub n_p: FrequencyTensor,
    pub n_q: FrequencyTensor,
    /// The common observable mixture `A / alpha`.
    pub mixture: FrequencyTensor,
    pub eps: f64,
    pub eta: f64,
    pub k: usize,
}

impl LowerBoundInstance {
    /// The separation no estimator can beat on average over the pair.
    pub fn separation(&self) -> f64 {
        2.0 * self.eta + self.eps / (2.0 * self.k as f64).sqrt()
    }
}

pub fn lower_bound_instance(eps: f64, eta: f64, k: usize) -> Result<LowerBoundInstance> {
    if !(0.0 < eps && eps < 0.5) {
        return Err(Error::InvalidParameter(format!(
            "eps = {eps} outside (0, 1/2)"
        )));
    }
    if !(0.0..0.25).contains(&eta) {
        return Err(Error::InvalidParameter(format!(
            "eta = {eta} outside [0, 1/4)"
        )));
    }
    if k == 0 {
        return Err(Error::InvalidParameter("k must be >= 1".into()));
    }

    let gap = eps / (2.0 * k as f64).sqrt();
    let p_prime = DiscreteDistribution::bernoulli((1.0 - gap) / 2.0)?;
    let q_prime = DiscreteDistribution::bernoulli((1.0 + gap) / 2.0)?;
    let p = DiscreteDistribution::bernoulli((1.0 - gap) / 2.0 - eta)?;
    let q = DiscreteDistribution::bernoulli((1.0 + gap) / 2.0 + eta)?;

    let tp = FrequencyTensor::tensor_power(&p_prime, k)?;
    let tq = FrequencyTensor::tensor_power(&q_prime, k)?;

    let alpha: f64 = tp
        .entries()
        .iter()
        .zip(tq.entries())
        .map(|(&a, &b)| a.max(b))
        .sum();
    let mut mix = Vec::with_capacity(tp.entries().len());
    let mut np = Vec::with_capacity(tp.entries().len());
    let mut nq = Vec::with_capacity(tp.entries().len());
    for (&a, &b) in tp.entries().iter().zip(tq.entries()) {
        let common = a.max(b) / alpha;
        mix.push(common);
        np.push((common - (1.0 - eps) * a) / eps);
        nq.push((common - (1.0 - eps) * b) / eps);
    }

    Ok(LowerBoundInstance {
        p,
        q,
        p_prime,
        q_prime,
        n_p: FrequencyTensor::from_entries(2, k, np)?,
        n_q: FrequencyTensor::from_entries(2, k, nq)?,
        mixture: FrequencyTensor::from_entries(2, k, mix)?,
        eps,
        eta,
        k,
    })
}
