//! The tensor estimator: recursively enumerate candidate distributions from
//! the empirical frequency tensor (normalized slices, depth first, then the
//! marginal), and return the candidate whose k-th tensor power is closest
//! to the tensor in elementwise l1.
//!
//! Rank-1 l1 approximation of a general tensor is NP-hard; this works
//! because the candidate set provably contains a vector close to the true
//! distribution whenever the tensor is a (1-eps) product-measure mixture,
//! so the argmin only has to choose among `(n^k - 1)/(n - 1)` candidates.

use rayon::prelude::*;

use crate::data::Batch;
use crate::dist::DiscreteDistribution;
use crate::tensor::FrequencyTensor;
use crate::{Error, Result, PROB_SUM_TOL};

/// Candidates closer than this in max-abs difference are considered equal.
pub const CANDIDATE_DEDUP_TOL: f64 = 1e-12;

/// Candidate distributions harvested from a tensor.
#[derive(Debug, Clone)]
pub struct CandidateSet {
    /// Deduplicated, in deterministic enumeration order: slice recursion in
    /// index order, marginal last at every level.
    pub candidates: Vec<DiscreteDistribution>,
    /// Where each kept candidate came from: a dot-joined trail of slice
    /// indices, ending in `m` when the marginal was taken at that depth
    /// (the bare root marginal is `m`, a fully sliced path is `i1.i2...`).
    pub origins: Vec<String>,
    /// Count before deduplication. With no zero-mass slice this equals
    /// `(n^k - 1)/(n - 1)` (`k` when n = 1).
    pub raw_count: usize,
    /// How many candidates were off the simplex by more than the sum
    /// tolerance and had to be renormalized (flagged, never silent).
    pub renormalized: usize,
}

fn push_candidate(
    entries: &[f64],
    trail: &[usize],
    is_marginal: bool,
    out: &mut Vec<(DiscreteDistribution, String)>,
    renormalized: &mut usize,
) -> Result<()> {
    let sum: f64 = entries.iter().sum();
    let dist = if (sum - 1.0).abs() > PROB_SUM_TOL {
        if sum <= 0.0 {
            return Err(Error::InvalidDistribution(format!(
                "candidate with total mass {sum}"
            )));
        }
        log::warn!(
            "candidate off the simplex by {:.3e}; renormalizing",
            sum - 1.0
        );
        *renormalized += 1;
        DiscreteDistribution::new(entries.iter().map(|&e| e / sum).collect())?
    } else {
        DiscreteDistribution::new(entries.to_vec())?
    };
    let mut origin: Vec<String> = trail.iter().map(|i| i.to_string()).collect();
    if is_marginal {
        origin.push("m".into());
    }
    out.push((dist, origin.join(".")));
    Ok(())
}

fn collect(
    tensor: &FrequencyTensor,
    trail: &mut Vec<usize>,
    out: &mut Vec<(DiscreteDistribution, String)>,
    renormalized: &mut usize,
) -> Result<()> {
    if tensor.k() == 1 {
        push_candidate(tensor.entries(), trail, false, out, renormalized)?;
        return Ok(());
    }
    for i in 1..=tensor.n() {
        let (mass, normalized) = tensor.slice(i)?;
        if let Some(sub) = normalized {
            trail.push(i);
            collect(&sub, trail, out, renormalized)?;
            trail.pop();
        } else {
            debug_assert_eq!(mass, 0.0);
        }
    }
    push_candidate(tensor.marginal()?.probs(), trail, true, out, renormalized)?;
    Ok(())
}

/// Enumerate candidates from a probability tensor. Zero-mass slices are
/// skipped (visible in `raw_count`); no other pruning happens.
pub fn dist_set(tensor: &FrequencyTensor) -> Result<CandidateSet> {
    let mut raw = Vec::new();
    let mut renormalized = 0usize;
    collect(tensor, &mut Vec::new(), &mut raw, &mut renormalized)?;
    let raw_count = raw.len();

    let mut candidates: Vec<DiscreteDistribution> = Vec::with_capacity(raw.len());
    let mut origins: Vec<String> = Vec::with_capacity(raw.len());
    for (cand, origin) in raw {
        let duplicate = candidates.iter().any(|c| {
            c.probs()
                .iter()
                .zip(cand.probs())
                .all(|(a, b)| (a - b).abs() <= CANDIDATE_DEDUP_TOL)
        });
        if !duplicate {
            candidates.push(cand);
            origins.push(origin);
        }
    }
    Ok(CandidateSet {
        candidates,
        origins,
        raw_count,
        renormalized,
    })
}

/// The selected candidate and the evidence behind the selection.
#[derive(Debug, Clone)]
pub struct Rank1Fit {
    pub chosen: DiscreteDistribution,
    /// `tv(A, chosen^(x)k)`, the minimized objective.
    pub objective: f64,
    /// Objective value per candidate, in candidate order.
    pub candidate_objectives: Vec<f64>,
    pub candidates: CandidateSet,
}

/// Pick the candidate whose tensor power best fits `A`; ties go to the
/// earliest candidate in enumeration order.
pub fn best_rank1_fit(tensor: &FrequencyTensor) -> Result<Rank1Fit> {
    let set = dist_set(tensor)?;
    let k = tensor.k();
    let candidate_objectives: Vec<f64> = set
        .candidates
        .par_iter()
        .map(|c| {
            let power = FrequencyTensor::tensor_power(c, k)?;
            tensor.tv_distance(&power)
        })
        .collect::<Result<_>>()?;
    let (best_idx, &objective) = candidate_objectives
        .iter()
        .enumerate()
        .min_by(|(ia, va), (ib, vb)| va.partial_cmp(vb).unwrap().then(ia.cmp(ib)))
        .expect("dist_set never returns an empty candidate list");
    Ok(Rank1Fit {
        chosen: set.candidates[best_idx].clone(),
        objective,
        candidate_objectives,
        candidates: set,
    })
}

/// Learn a distribution from batches: build the frequency tensor and fit.
/// Assumes the good batches are drawn from the target itself (the eta = 0
/// regime); contamination is what the candidate construction absorbs.
pub fn learn_tensor(batches: &[Batch], n: usize, k: usize) -> Result<Rank1Fit> {
    if batches.is_empty() {
        return Err(Error::InvalidParameter("empty dataset".into()));
    }
    let tensor = FrequencyTensor::from_batches(batches, n, k)?;
    best_rank1_fit(&tensor)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dist(p: &[f64]) -> DiscreteDistribution {
        DiscreteDistribution::new(p.to_vec()).unwrap()
    }

    #[test]
    fn k1_returns_the_vector_itself() {
        let p = dist(&[0.3, 0.7]);
        let t = FrequencyTensor::tensor_power(&p, 1).unwrap();
        let set = dist_set(&t).unwrap();
        assert_eq!(set.candidates.len(), 1);
        assert_eq!(set.raw_count, 1);
        assert_eq!(set.candidates[0].probs(), p.probs());
    }

    #[test]
    fn product_tensor_collapses_to_one_candidate() {
        let p = dist(&[0.3, 0.7]);
        let t = FrequencyTensor::tensor_power(&p, 2).unwrap();
        let set = dist_set(&t).unwrap();
        assert_eq!(set.raw_count, 3); // two slices + marginal
        assert_eq!(set.candidates.len(), 1);
        for (a, b) in set.candidates[0].probs().iter().zip(p.probs()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn disjoint_mixture_yields_components_and_average() {
        let p = dist(&[1.0, 0.0]);
        let q = dist(&[0.0, 1.0]);
        let tp = FrequencyTensor::tensor_power(&p, 2).unwrap();
        let tq = FrequencyTensor::tensor_power(&q, 2).unwrap();
        let a = FrequencyTensor::mix(&[(0.5, &tp), (0.5, &tq)]).unwrap();
        let set = dist_set(&a).unwrap();
        let probs: Vec<&[f64]> = set.candidates.iter().map(|c| c.probs()).collect();
        assert_eq!(probs, vec![&[1.0, 0.0][..], &[0.0, 1.0], &[0.5, 0.5]]);
    }

    #[test]
    fn candidate_count_recurrence_on_positive_tensors() {
        // With every slice mass positive, raw_count = (n^k - 1)/(n - 1).
        for n in 2..=4usize {
            for k in 1..=5usize {
                let probs: Vec<f64> = (1..=n).map(|i| i as f64).collect();
                let total: f64 = probs.iter().sum();
                let p = dist(&probs.iter().map(|v| v / total).collect::<Vec<_>>());
                let t = FrequencyTensor::tensor_power(&p, k).unwrap();
                let set = dist_set(&t).unwrap();
                let expected = (n.pow(k as u32) - 1) / (n - 1);
                assert_eq!(set.raw_count, expected, "n={n} k={k}");
            }
        }
    }

    #[test]
    fn uniform_tensor_gives_uniform_candidates() {
        let p = dist(&[0.5, 0.5]);
        let t = FrequencyTensor::tensor_power(&p, 2).unwrap();
        let fit = best_rank1_fit(&t).unwrap();
        assert_eq!(fit.candidates.candidates.len(), 1);
        assert_eq!(fit.chosen.probs(), &[0.5, 0.5]);
        assert!(fit.objective < 1e-12);
    }

    #[test]
    fn rank1_input_is_recovered_exactly() {
        let p = dist(&[0.5, 0.3, 0.2]);
        let t = FrequencyTensor::tensor_power(&p, 3).unwrap();
        let fit = best_rank1_fit(&t).unwrap();
        assert!(fit.objective < 1e-12);
        for (a, b) in fit.chosen.probs().iter().zip(p.probs()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn contaminated_mixture_keeps_a_close_candidate() {
        // A = 0.9 p⊗3 + 0.1 q⊗3: some candidate is within 6*eps/k = 0.2.
        let p = dist(&[0.5, 0.3, 0.2]);
        let q = dist(&[0.1, 0.1, 0.8]);
        let tp = FrequencyTensor::tensor_power(&p, 3).unwrap();
        let tq = FrequencyTensor::tensor_power(&q, 3).unwrap();
        let a = FrequencyTensor::mix(&[(0.9, &tp), (0.1, &tq)]).unwrap();
        let fit = best_rank1_fit(&a).unwrap();
        let min_dist = fit
            .candidates
            .candidates
            .iter()
            .map(|c| crate::dist::tv_distance(&p, c).unwrap())
            .fold(f64::INFINITY, f64::min);
        assert!(min_dist <= 0.2 + 1e-9, "min candidate distance {min_dist}");
        // And the argmin-selected candidate is itself decent here.
        assert!(crate::dist::tv_distance(&p, &fit.chosen).unwrap() < 0.2);
    }

    #[test]
    fn selection_is_optimal_over_the_candidate_list() {
        let p = dist(&[0.6, 0.4]);
        let q = dist(&[0.1, 0.9]);
        let tp = FrequencyTensor::tensor_power(&p, 3).unwrap();
        let tq = FrequencyTensor::tensor_power(&q, 3).unwrap();
        let a = FrequencyTensor::mix(&[(0.8, &tp), (0.2, &tq)]).unwrap();
        let fit = best_rank1_fit(&a).unwrap();
        for &obj in &fit.candidate_objectives {
            assert!(fit.objective <= obj + 1e-15);
        }
        // Re-evaluate the chosen candidate independently.
        let power = FrequencyTensor::tensor_power(&fit.chosen, 3).unwrap();
        assert!((a.tv_distance(&power).unwrap() - fit.objective).abs() < 1e-15);
    }

    #[test]
    fn learner_is_batch_order_invariant() {
        let batches: Vec<Batch> = [[1, 2], [2, 2], [1, 1], [2, 1], [2, 2], [1, 2]]
            .iter()
            .map(|s| Batch::new(s.to_vec(), 2, 2).unwrap())
            .collect();
        let a = learn_tensor(&batches, 2, 2).unwrap();
        let mut rev = batches.clone();
        rev.reverse();
        let b = learn_tensor(&rev, 2, 2).unwrap();
        assert_eq!(a.chosen.probs(), b.chosen.probs());
        assert_eq!(a.objective, b.objective);
    }

    #[test]
    fn empty_dataset_is_an_error() {
        assert!(learn_tensor(&[], 2, 2).is_err());
    }
}
