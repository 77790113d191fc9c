//! Dense probability tensors on `[n]^k`: tensor powers, marginals, slices,
//! empirical batch frequencies, and total variation between tensors.
//!
//! Storage is a flat row-major array of `n^k` entries with the first index
//! slowest, so the i-th slice is a contiguous chunk of length `n^(k-1)`.
//! Construction is rejected above a configurable entry cap; this is a
//! desk-scale dense representation by design.

use rand::Rng;

use crate::data::Batch;
use crate::dist::DiscreteDistribution;
use crate::{Error, Result, PROB_NEG_TOL, PROB_SUM_TOL};

/// Default cap on the number of dense entries `n^k`.
pub const DEFAULT_DENSE_CAP: usize = 10_000_000;

/// A probability tensor `A` on `[n]^k`: nonnegative entries summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyTensor {
    n: usize,
    k: usize,
    entries: Vec<f64>,
}

fn dense_len(n: usize, k: usize, cap: usize) -> Result<usize> {
    if n == 0 || k == 0 {
        return Err(Error::InvalidParameter(format!(
            "tensor dimensions n = {n}, k = {k} must be positive"
        )));
    }
    let mut len: usize = 1;
    for _ in 0..k {
        len = len
            .checked_mul(n)
            .filter(|&l| l <= cap)
            .ok_or(Error::TensorTooLarge { n, k, cap })?;
    }
    Ok(len)
}

impl FrequencyTensor {
    /// Wrap raw entries, validating the probability-tensor invariants.
    pub fn from_entries(n: usize, k: usize, entries: Vec<f64>) -> Result<Self> {
        Self::from_entries_with_cap(n, k, entries, DEFAULT_DENSE_CAP)
    }

    pub fn from_entries_with_cap(
        n: usize,
        k: usize,
        entries: Vec<f64>,
        cap: usize,
    ) -> Result<Self> {
        let len = dense_len(n, k, cap)?;
        if entries.len() != len {
            return Err(Error::ShapeMismatch(format!(
                "expected {len} entries for n = {n}, k = {k}, got {}",
                entries.len()
            )));
        }
        let mut sum = 0.0;
        for &e in &entries {
            if !e.is_finite() || e < -PROB_NEG_TOL {
                return Err(Error::InvalidDistribution(format!(
                    "tensor entry {e} below zero tolerance"
                )));
            }
            sum += e;
        }
        if (sum - 1.0).abs() > PROB_SUM_TOL {
            return Err(Error::InvalidDistribution(format!(
                "tensor entries sum to {sum}, expected 1 within {PROB_SUM_TOL:e}"
            )));
        }
        Ok(Self { n, k, entries })
    }

    /// The k-th tensor power of `p`: entry `(i1, ..., ik)` is the product of
    /// the component probabilities, i.e. the distribution of k i.i.d. draws.
    pub fn tensor_power(p: &DiscreteDistribution, k: usize) -> Result<Self> {
        Self::tensor_power_with_cap(p, k, DEFAULT_DENSE_CAP)
    }

    pub fn tensor_power_with_cap(p: &DiscreteDistribution, k: usize, cap: usize) -> Result<Self> {
        let n = p.n();
        let len = dense_len(n, k, cap)?;
        let mut entries = vec![1.0];
        for _ in 0..k {
            let mut next = Vec::with_capacity(entries.len() * n);
            for &e in &entries {
                for &pi in p.probs() {
                    next.push(e * pi);
                }
            }
            entries = next;
        }
        debug_assert_eq!(entries.len(), len);
        Ok(Self { n, k, entries })
    }

    /// Empirical frequency tensor of a set of batches: the entry at a tuple
    /// is the fraction of batches equal to that tuple. Batches are ordered
    /// tuples; no within-batch sorting takes place.
    pub fn from_batches(batches: &[Batch], n: usize, k: usize) -> Result<Self> {
        if batches.is_empty() {
            return Err(Error::InvalidParameter(
                "frequency tensor of an empty dataset".into(),
            ));
        }
        let len = dense_len(n, k, DEFAULT_DENSE_CAP)?;
        let mut counts = vec![0usize; len];
        for batch in batches {
            let mut idx = 0usize;
            if batch.k() != k {
                return Err(Error::InvalidBatch(format!(
                    "batch of length {} in a dataset with k = {k}",
                    batch.k()
                )));
            }
            for &s in batch.samples() {
                if s == 0 || s > n {
                    return Err(Error::InvalidBatch(format!("sample {s} outside [1, {n}]")));
                }
                idx = idx * n + (s - 1);
            }
            counts[idx] += 1;
        }
        let m = batches.len() as f64;
        let entries = counts.iter().map(|&c| c as f64 / m).collect();
        Ok(Self { n, k, entries })
    }

    /// Convex combination of probability tensors with matching shape.
    pub fn mix(parts: &[(f64, &FrequencyTensor)]) -> Result<Self> {
        let (n, k) = match parts.first() {
            Some((_, t)) => (t.n, t.k),
            None => return Err(Error::InvalidParameter("empty tensor mixture".into())),
        };
        let mut entries = vec![0.0; parts[0].1.entries.len()];
        let mut wsum = 0.0;
        for &(w, t) in parts {
            if t.n != n || t.k != k {
                return Err(Error::ShapeMismatch("tensor mixture shapes differ".into()));
            }
            if !w.is_finite() || w < -PROB_NEG_TOL {
                return Err(Error::InvalidParameter(format!("negative weight {w}")));
            }
            wsum += w;
            for (o, &e) in entries.iter_mut().zip(&t.entries) {
                *o += w * e;
            }
        }
        if (wsum - 1.0).abs() > PROB_SUM_TOL {
            return Err(Error::InvalidParameter(format!(
                "tensor mixture weights sum to {wsum}"
            )));
        }
        Ok(Self { n, k, entries })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    /// Flat index of a 1-based tuple `(i1, ..., ik)`.
    pub fn flat_index(&self, tuple: &[usize]) -> Result<usize> {
        if tuple.len() != self.k {
            return Err(Error::ShapeMismatch(format!(
                "tuple of length {} for a tensor with k = {}",
                tuple.len(),
                self.k
            )));
        }
        let mut idx = 0usize;
        for &i in tuple {
            if i == 0 || i > self.n {
                return Err(Error::InvalidParameter(format!(
                    "index {i} outside [1, {}]",
                    self.n
                )));
            }
            idx = idx * self.n + (i - 1);
        }
        Ok(idx)
    }

    pub fn entry(&self, tuple: &[usize]) -> Result<f64> {
        Ok(self.entries[self.flat_index(tuple)?])
    }

    /// Marginal of the first coordinate: `a_i = sum over the i-th slice`.
    pub fn marginal(&self) -> Result<DiscreteDistribution> {
        let stride = self.entries.len() / self.n;
        let sums: Vec<f64> = self
            .entries
            .chunks(stride)
            .map(|chunk| chunk.iter().sum())
            .collect();
        DiscreteDistribution::new(sums)
    }

    /// The i-th slice (1-based): its total mass and, when the mass is
    /// positive, the normalized conditional tensor on `[n]^(k-1)`.
    ///
    /// A zero-mass slice is signalled by `(0, None)`; conditioning on a null
    /// event has no normalized form.
    pub fn slice(&self, i: usize) -> Result<(f64, Option<FrequencyTensor>)> {
        if self.k < 2 {
            return Err(Error::InvalidParameter("slice requires k >= 2".into()));
        }
        if i == 0 || i > self.n {
            return Err(Error::InvalidParameter(format!(
                "slice index {i} outside [1, {}]",
                self.n
            )));
        }
        let stride = self.entries.len() / self.n;
        let chunk = &self.entries[(i - 1) * stride..i * stride];
        let mass: f64 = chunk.iter().sum();
        if mass <= 0.0 {
            return Ok((0.0, None));
        }
        let normalized = chunk.iter().map(|&e| e / mass).collect();
        Ok((
            mass,
            Some(FrequencyTensor {
                n: self.n,
                k: self.k - 1,
                entries: normalized,
            }),
        ))
    }

    /// Half the l1 distance over all `n^k` entries.
    pub fn tv_distance(&self, other: &FrequencyTensor) -> Result<f64> {
        if self.n != other.n || self.k != other.k {
            return Err(Error::ShapeMismatch(format!(
                "tensor tv between ({}, {}) and ({}, {})",
                self.n, self.k, other.n, other.k
            )));
        }
        Ok(crate::dist::half_l1(&self.entries, &other.entries))
    }

    /// Precompute the flat CDF for sampling k-tuples from this tensor.
    pub fn sampler(&self) -> TensorSampler {
        let mut cdf = Vec::with_capacity(self.entries.len());
        let mut acc = 0.0;
        for &e in &self.entries {
            acc += e.max(0.0);
            cdf.push(acc);
        }
        TensorSampler {
            cdf,
            n: self.n,
            k: self.k,
        }
    }
}

/// Inverse-CDF sampler over `[n]^k`, returning 1-based tuples.
#[derive(Debug, Clone)]
pub struct TensorSampler {
    cdf: Vec<f64>,
    n: usize,
    k: usize,
}

impl TensorSampler {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<usize> {
        let u: f64 = rng.random();
        let mut idx = self.cdf.partition_point(|&c| c <= u);
        idx = idx.min(self.cdf.len() - 1);
        let mut tuple = vec![0usize; self.k];
        for slot in tuple.iter_mut().rev() {
            *slot = idx % self.n + 1;
            idx /= self.n;
        }
        tuple
    }
}
