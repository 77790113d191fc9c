//! Probability vectors on `[n]` and distributions over counts `{0, ..., k}`.
//!
//! These are the scalar building blocks of everything else: total variation
//! distance, binomial pmfs (stable up to at least k = 500), convex mixtures,
//! and inverse-CDF sampling.

use rand::Rng;

use crate::{Error, Result, PROB_NEG_TOL, PROB_SUM_TOL};

/// A probability vector over the alphabet `[n] = {1, ..., n}`.
///
/// Entries are validated at construction: each in `[0, 1]` (up to
/// [`PROB_NEG_TOL`] undershoot) and summing to one within [`PROB_SUM_TOL`].
/// Constructors never renormalize; out-of-tolerance input is an error.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDistribution {
    probs: Vec<f64>,
}

impl DiscreteDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidDistribution("empty support".into()));
        }
        let mut sum = 0.0;
        for (i, &p) in probs.iter().enumerate() {
            if !p.is_finite() || !(-PROB_NEG_TOL..=1.0 + PROB_NEG_TOL).contains(&p) {
                return Err(Error::InvalidDistribution(format!(
                    "entry {} = {p} outside [0, 1]",
                    i + 1
                )));
            }
            sum += p;
        }
        if (sum - 1.0).abs() > PROB_SUM_TOL {
            return Err(Error::InvalidDistribution(format!(
                "entries sum to {sum}, expected 1 within {PROB_SUM_TOL:e}"
            )));
        }
        Ok(Self { probs })
    }

    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidDistribution("empty support".into()));
        }
        Ok(Self {
            probs: vec![1.0 / n as f64; n],
        })
    }

    /// All mass on a single element (1-based).
    pub fn point_mass(n: usize, element: usize) -> Result<Self> {
        if n == 0 || element == 0 || element > n {
            return Err(Error::InvalidDistribution(format!(
                "point mass at {element} outside [1, {n}]"
            )));
        }
        let mut probs = vec![0.0; n];
        probs[element - 1] = 1.0;
        Ok(Self { probs })
    }

    /// Two-element distribution `[1 - mean, mean]`; element 2 carries `mean`.
    pub fn bernoulli(mean: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&mean) {
            return Err(Error::InvalidDistribution(format!(
                "bernoulli mean {mean} outside [0, 1]"
            )));
        }
        Ok(Self {
            probs: vec![1.0 - mean, mean],
        })
    }

    pub fn n(&self) -> usize {
        self.probs.len()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Probability of a single element (1-based).
    pub fn prob(&self, element: usize) -> f64 {
        self.probs[element - 1]
    }

    /// Total mass of the subset encoded as a bitmask: bit `i - 1` selects
    /// element `i`.
    pub fn subset_mass(&self, mask: u64) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .filter(|(i, _)| mask & (1 << i) != 0)
            .map(|(_, &p)| p)
            .sum()
    }

    /// Precompute the CDF for repeated inverse-transform sampling.
    pub fn sampler(&self) -> CategoricalSampler {
        CategoricalSampler::new(&self.probs)
    }
}

/// Inverse-CDF sampler over `[n]`, returning 1-based elements.
#[derive(Debug, Clone)]
pub struct CategoricalSampler {
    cdf: Vec<f64>,
}

impl CategoricalSampler {
    fn new(probs: &[f64]) -> Self {
        let mut cdf = Vec::with_capacity(probs.len());
        let mut acc = 0.0;
        for &p in probs {
            acc += p.max(0.0);
            cdf.push(acc);
        }
        Self { cdf }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let idx = self.cdf.partition_point(|&c| c <= u);
        idx.min(self.cdf.len() - 1) + 1
    }
}

/// Total variation distance between two probability vectors on the same
/// alphabet: half the l1 distance. Equals `max_S [u(S) - v(S)]` over subsets.
pub fn tv_distance(u: &DiscreteDistribution, v: &DiscreteDistribution) -> Result<f64> {
    if u.n() != v.n() {
        return Err(Error::ShapeMismatch(format!(
            "tv_distance on supports of size {} and {}",
            u.n(),
            v.n()
        )));
    }
    Ok(half_l1(u.probs(), v.probs()))
}

pub(crate) fn half_l1(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a
        .iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs())
        .sum::<f64>()
}

/// A probability distribution over counts `{0, 1, ..., k}`.
///
/// Carries the empirical per-batch count histograms, binomial pmfs, and
/// their mixtures.
#[derive(Debug, Clone, PartialEq)]
pub struct CountDistribution {
    weights: Vec<f64>,
}

impl CountDistribution {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidDistribution(
                "count distribution needs k >= 0".into(),
            ));
        }
        let mut sum = 0.0;
        for (t, &w) in weights.iter().enumerate() {
            if !w.is_finite() || w < -PROB_NEG_TOL {
                return Err(Error::InvalidDistribution(format!(
                    "count weight at {t} is {w}"
                )));
            }
            sum += w;
        }
        if (sum - 1.0).abs() > PROB_SUM_TOL {
            return Err(Error::InvalidDistribution(format!(
                "count weights sum to {sum}, expected 1 within {PROB_SUM_TOL:e}"
            )));
        }
        Ok(Self { weights })
    }

    /// All mass on one count value.
    pub fn point_mass(k: usize, count: usize) -> Result<Self> {
        if count > k {
            return Err(Error::InvalidParameter(format!(
                "point mass at count {count} > k = {k}"
            )));
        }
        let mut weights = vec![0.0; k + 1];
        weights[count] = 1.0;
        Ok(Self { weights })
    }

    pub fn k(&self) -> usize {
        self.weights.len() - 1
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// CDF at `t`: total mass on counts `{0, ..., t}`.
    pub fn prefix_mass(&self, t: usize) -> f64 {
        self.weights.iter().take(t + 1).sum()
    }

    /// Distribution of `k - X`: the count histogram of the complementary
    /// subset.
    pub fn reversed(&self) -> Self {
        let mut weights = self.weights.clone();
        weights.reverse();
        Self { weights }
    }

    pub fn tv_distance(&self, other: &Self) -> Result<f64> {
        if self.k() != other.k() {
            return Err(Error::ShapeMismatch(format!(
                "count distributions with k = {} and k = {}",
                self.k(),
                other.k()
            )));
        }
        Ok(half_l1(&self.weights, &other.weights))
    }
}

/// Above this k the binomial pmf is evaluated in log space instead of by the
/// multiplicative recurrence.
const BINOMIAL_LOG_SPACE_THRESHOLD: usize = 100;

/// Binomial pmf `B(k, theta)` over counts `{0, ..., k}`.
///
/// For k up to [`BINOMIAL_LOG_SPACE_THRESHOLD`] the pmf is built by the
/// multiplicative recurrence from the lighter tail, which avoids both
/// overflow of the binomial coefficients and underflow of the starting term.
/// Beyond that each weight is `exp(ln C(k,t) + t ln theta + (k-t) ln(1-theta))`;
/// far-tail terms may underflow to zero, losing at most ~1e-300 of mass.
pub fn binomial_pmf(k: usize, theta: f64) -> Result<CountDistribution> {
    if k == 0 {
        return Err(Error::InvalidParameter("binomial needs k >= 1".into()));
    }
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::InvalidParameter(format!(
            "binomial success probability {theta} outside [0, 1]"
        )));
    }
    if theta == 0.0 {
        return CountDistribution::point_mass(k, 0);
    }
    if theta == 1.0 {
        return CountDistribution::point_mass(k, k);
    }

    let weights = if k <= BINOMIAL_LOG_SPACE_THRESHOLD {
        // Work from the side with the larger failure probability so the
        // starting term (1 - th)^k cannot underflow for k <= 100.
        let flip = theta > 0.5;
        let th = if flip { 1.0 - theta } else { theta };
        let ratio = th / (1.0 - th);
        let mut w = Vec::with_capacity(k + 1);
        let mut cur = (1.0 - th).powi(k as i32);
        w.push(cur);
        for t in 0..k {
            cur *= ratio * (k - t) as f64 / (t + 1) as f64;
            w.push(cur);
        }
        if flip {
            w.reverse();
        }
        w
    } else {
        use statrs::function::gamma::ln_gamma;
        let ln_k_fact = ln_gamma(k as f64 + 1.0);
        let (ln_th, ln_1mth) = (theta.ln(), (1.0 - theta).ln());
        (0..=k)
            .map(|t| {
                let ln_w = ln_k_fact - ln_gamma(t as f64 + 1.0) - ln_gamma((k - t) as f64 + 1.0)
                    + t as f64 * ln_th
                    + (k - t) as f64 * ln_1mth;
                ln_w.exp()
            })
            .collect()
    };

    CountDistribution::new(weights)
}

/// Convex combination of count distributions sharing the same k.
pub fn mixture(weights: &[f64], components: &[CountDistribution]) -> Result<CountDistribution> {
    if weights.len() != components.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} weights for {} components",
            weights.len(),
            components.len()
        )));
    }
    if components.is_empty() {
        return Err(Error::InvalidParameter("empty mixture".into()));
    }
    let k = components[0].k();
    if components.iter().any(|c| c.k() != k) {
        return Err(Error::ShapeMismatch(
            "mixture components with differing k".into(),
        ));
    }
    let mut sum = 0.0;
    for &w in weights {
        if !w.is_finite() || w < -PROB_NEG_TOL {
            return Err(Error::InvalidParameter(format!("negative weight {w}")));
        }
        sum += w;
    }
    if (sum - 1.0).abs() > PROB_SUM_TOL {
        return Err(Error::InvalidParameter(format!(
            "mixture weights sum to {sum}, expected 1 within {PROB_SUM_TOL:e}"
        )));
    }
    let mut out = vec![0.0; k + 1];
    for (w, comp) in weights.iter().zip(components.iter()) {
        for (o, &c) in out.iter_mut().zip(comp.weights()) {
            *o += w * c;
        }
    }
    CountDistribution::new(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dist(p: &[f64]) -> DiscreteDistribution {
        DiscreteDistribution::new(p.to_vec()).unwrap()
    }

    #[test]
    fn tv_identity_is_zero() {
        let p = dist(&[0.2, 0.3, 0.5]);
        assert_eq!(tv_distance(&p, &p).unwrap(), 0.0);
    }

    #[test]
    fn tv_half_l1() {
        let u = dist(&[0.5, 0.5]);
        let v = dist(&[0.8, 0.2]);
        assert!((tv_distance(&u, &v).unwrap() - 0.3).abs() < 1e-15);
    }

    #[test]
    fn tv_disjoint_supports() {
        let u = dist(&[1.0, 0.0]);
        let v = dist(&[0.0, 1.0]);
        assert_eq!(tv_distance(&u, &v).unwrap(), 1.0);
    }

    #[test]
    fn tv_length_mismatch_errors() {
        let u = dist(&[1.0]);
        let v = dist(&[0.5, 0.5]);
        assert!(tv_distance(&u, &v).is_err());
    }

    #[test]
    fn constructor_rejects_bad_sum() {
        assert!(DiscreteDistribution::new(vec![0.5, 0.6]).is_err());
        assert!(DiscreteDistribution::new(vec![0.5, -0.5, 1.0]).is_err());
    }

    #[test]
    fn subset_mass_by_mask() {
        let p = dist(&[0.1, 0.2, 0.7]);
        assert!((p.subset_mass(0b101) - 0.8).abs() < 1e-15);
        assert_eq!(p.subset_mass(0), 0.0);
        assert!((p.subset_mass(0b111) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn binomial_fair_coin() {
        let b = binomial_pmf(2, 0.5).unwrap();
        assert_eq!(b.weights(), &[0.25, 0.5, 0.25]);
    }

    #[test]
    fn binomial_theta_zero_is_point_mass() {
        let b = binomial_pmf(7, 0.0).unwrap();
        assert_eq!(b.weights()[0], 1.0);
        assert_eq!(b.prefix_mass(0), 1.0);
    }

    #[test]
    fn binomial_direct_evaluation() {
        let b = binomial_pmf(3, 0.2).unwrap();
        let expected = [0.512, 0.384, 0.096, 0.008];
        for (w, e) in b.weights().iter().zip(expected) {
            assert!((w - e).abs() < 1e-12, "{w} vs {e}");
        }
    }

    /// Brute-force oracle: enumerate {0,1}^k and accumulate the product
    /// weights per count. Independent of the recurrence implementation.
    fn binomial_by_enumeration(k: usize, theta: f64) -> Vec<f64> {
        let mut w = vec![0.0; k + 1];
        for bits in 0u32..(1 << k) {
            let ones = bits.count_ones() as usize;
            w[ones] += theta.powi(ones as i32) * (1.0 - theta).powi((k - ones) as i32);
        }
        w
    }

    #[test]
    fn binomial_matches_bruteforce_enumeration() {
        for k in 1..=12 {
            for &theta in &[0.03, 0.2, 0.5, 0.77, 0.98] {
                let b = binomial_pmf(k, theta).unwrap();
                let oracle = binomial_by_enumeration(k, theta);
                for (w, o) in b.weights().iter().zip(oracle) {
                    assert!((w - o).abs() < 1e-12, "k={k} theta={theta}: {w} vs {o}");
                }
            }
        }
    }

    #[test]
    fn binomial_stable_at_large_k() {
        for &k in &[101, 250, 500] {
            for &theta in &[0.001, 0.37, 0.95, 0.999] {
                let b = binomial_pmf(k, theta).unwrap();
                let sum: f64 = b.weights().iter().sum();
                assert!((sum - 1.0).abs() < 1e-9, "k={k} theta={theta} sum={sum}");
                assert!(b.weights().iter().all(|&w| w >= 0.0));
            }
        }
    }

    #[test]
    fn binomial_log_space_agrees_with_recurrence() {
        // Same k evaluated through both paths by nudging the threshold via
        // direct comparison at k = 100 (recurrence) vs explicit log-space.
        use statrs::function::gamma::ln_gamma;
        let k = 100usize;
        let theta = 0.42;
        let b = binomial_pmf(k, theta).unwrap();
        for (t, &w) in b.weights().iter().enumerate() {
            let ln_w = ln_gamma(k as f64 + 1.0)
                - ln_gamma(t as f64 + 1.0)
                - ln_gamma((k - t) as f64 + 1.0)
                + t as f64 * theta.ln()
                + (k - t) as f64 * (1.0 - theta).ln();
            assert!((w - ln_w.exp()).abs() < 1e-12 * (1.0 + w));
        }
    }

    #[test]
    fn mixture_single_component() {
        let b = binomial_pmf(4, 0.3).unwrap();
        let m = mixture(&[1.0], std::slice::from_ref(&b)).unwrap();
        assert_eq!(m, b);
    }

    #[test]
    fn mixture_direct_average() {
        let c0 = binomial_pmf(1, 0.0).unwrap();
        let c1 = binomial_pmf(1, 1.0).unwrap();
        let m = mixture(&[0.5, 0.5], &[c0, c1]).unwrap();
        assert_eq!(m.weights(), &[0.5, 0.5]);
    }

    #[test]
    fn mixture_rejects_negative_weight() {
        let b = binomial_pmf(2, 0.5).unwrap();
        assert!(mixture(&[1.5, -0.5], &[b.clone(), b]).is_err());
    }

    #[test]
    fn reversed_histogram() {
        let b = binomial_pmf(3, 0.2).unwrap();
        let r = b.reversed();
        let back = binomial_pmf(3, 0.8).unwrap();
        for (x, y) in r.weights().iter().zip(back.weights()) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn sampler_hits_support_and_is_seeded() {
        use rand::SeedableRng;
        let p = dist(&[0.25, 0.25, 0.5]);
        let s = p.sampler();
        let mut r1 = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut r2 = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let a: Vec<usize> = (0..100).map(|_| s.sample(&mut r1)).collect();
        let b: Vec<usize> = (0..100).map(|_| s.sample(&mut r2)).collect();
        assert_eq!(a, b);
        assert!(a.iter().all(|&x| (1..=3).contains(&x)));
    }
}
