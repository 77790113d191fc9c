//! The subset-mass estimator: for each subset S of the alphabet, estimate
//! p(S) by testing whether the empirical per-batch count histogram is close
//! in total variation to some mixture of binomials whose success
//! probabilities lie in a sliding window `[i*eta, (i+4)*eta]`, then recover
//! a distribution consistent with all 2^n estimates via one more LP.
//!
//! The window sweep runs i = 0, 1, ... upward and returns `(i+2)*eta` for
//! the first feasible window. Each feasibility test is the linear program
//!
//! ```text
//! find    a_0 ... a_tot >= 0,  sum a_j = 1
//! s.t.    tv( sum_j a_j B(k, i*eta + j*eps/k),  f_S ) <= 2*eps
//! ```
//!
//! with the tv constraint linearized through per-count slacks
//! (`sum_t s_t <= 4*eps` bounds the l1 distance).
//!
//! The grid resolution `eps/k` keeps every success probability in the
//! window within `eps/(2k)` of a grid point, which costs at most `eps/2`
//! in total variation per component; `tot = ceil(4*eta*k/eps)` grid steps
//! cover the whole window.

use rayon::prelude::*;

use crate::data::Batch;
use crate::dist::{binomial_pmf, CountDistribution, DiscreteDistribution};
use crate::lp::{lp_feasible, lp_minimize, LpProblem, LpStatus, Relation, FEASIBILITY_TOL};
use crate::{Error, Result};

/// Above the nominal cap the guarantee constants are not backed by the
/// analysis; the estimator still runs, with a warning, up to the hard cap.
pub const EPS_NOMINAL_CAP: f64 = 1.0 / 900.0;
pub const EPS_HARD_CAP: f64 = 1.0 / 15.0;
/// The window sweep needs `floor(1/eta) - 4 >= 0` and the analysis
/// needs slack below it; eta above 1/8 is rejected.
pub const ETA_CAP: f64 = 0.125;
/// Default cap on the alphabet size for the full-subset learner; 2^n
/// estimates beyond this are a configuration error, not a long wait.
pub const DEFAULT_SUBSET_N_CAP: usize = 12;

/// Validated parameters for the window sweep.
#[derive(Debug, Clone, Copy)]
pub struct BinomialEstParams {
    eps: f64,
    eta: f64,
    k: usize,
}

impl BinomialEstParams {
    pub fn new(eps: f64, eta: f64, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidParameter("k must be >= 1".into()));
        }
        if !(eps > 0.0 && eps < EPS_HARD_CAP) {
            return Err(Error::InvalidParameter(format!(
                "eps = {eps} outside (0, {EPS_HARD_CAP})"
            )));
        }
        if eps > EPS_NOMINAL_CAP {
            log::warn!(
                "eps = {eps} exceeds the analyzed cap {EPS_NOMINAL_CAP:.6}; \
                 the proven error constants no longer apply"
            );
        }
        if !(eta > 0.0 && eta <= ETA_CAP) {
            return Err(Error::InvalidParameter(format!(
                "eta = {eta} outside (0, {ETA_CAP}]"
            )));
        }
        Ok(Self { eps, eta, k })
    }

    /// Like [`BinomialEstParams::new`] but substituting `eta = eps/sqrt(k)`
    /// when the caller has no perturbation (`eta = 0`). The sweep divides by
    /// eta; this is the smallest substitute that leaves the overall error
    /// at the `eps/sqrt(k)` scale.
    pub fn with_eta_fallback(eps: f64, eta: f64, k: usize) -> Result<Self> {
        if eta == 0.0 {
            if k == 0 {
                return Err(Error::InvalidParameter("k must be >= 1".into()));
            }
            Self::new(eps, eps / (k as f64).sqrt(), k)
        } else {
            Self::new(eps, eta, k)
        }
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Number of grid steps covering one window: `ceil(4*eta*k/eps)`.
    /// A relative epsilon keeps exactly-integral decimal ratios (for
    /// example 4*0.05*20/0.02 = 200) from ceiling up through float error.
    pub fn tot(&self) -> usize {
        let raw = 4.0 * self.eta * self.k as f64 / self.eps;
        (raw * (1.0 - 1e-12)).ceil() as usize
    }

    /// Largest window index: `floor(1/eta) - 4`, with the same guard so a
    /// reciprocal landing a hair under an integer does not lose a window.
    pub fn max_window(&self) -> usize {
        let raw = 1.0 / self.eta;
        (((raw * (1.0 + 1e-12)).floor()) as usize).saturating_sub(4)
    }

    /// Grid success probability `i*eta + j*eps/k`, clamped into [0, 1] when
    /// the ceiling in `tot` overshoots the window top.
    pub fn grid_theta(&self, window: usize, j: usize) -> f64 {
        (window as f64 * self.eta + j as f64 * self.eps / self.k as f64).min(1.0)
    }

    /// The estimate error the consistency LP tolerates per subset:
    /// `3*eta + 60*eps/sqrt(k)`.
    pub fn estimate_tolerance(&self) -> f64 {
        3.0 * self.eta + 60.0 * self.eps / (self.k as f64).sqrt()
    }
}

/// Number of samples of the batch that land in the subset (bitmask).
pub fn count_in_subset(batch: &Batch, subset_mask: u64) -> usize {
    batch
        .samples()
        .iter()
        .filter(|&&s| subset_mask & (1u64 << (s - 1)) != 0)
        .count()
}

/// Empirical distribution of per-batch subset counts over `{0, ..., k}`.
pub fn empirical_count_distribution(
    batches: &[Batch],
    subset_mask: u64,
    k: usize,
) -> Result<CountDistribution> {
    if batches.is_empty() {
        return Err(Error::InvalidParameter(
            "count distribution of zero batches".into(),
        ));
    }
    let mut counts = vec![0usize; k + 1];
    for b in batches {
        let c = count_in_subset(b, subset_mask);
        if c > k {
            return Err(Error::InvalidBatch(format!(
                "batch of length {} in a dataset with k = {k}",
                b.k()
            )));
        }
        counts[c] += 1;
    }
    let m = batches.len() as f64;
    CountDistribution::new(counts.into_iter().map(|c| c as f64 / m).collect())
}

/// Outcome of the window sweep for one subset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SubsetEstimate {
    /// `(i+2)*eta` for the first feasible window i.
    Estimate { value: f64, window: usize },
    /// No window admits a close binomial mixture: the data is inconsistent
    /// with the contamination model (or eta is too large).
    Failed,
}

impl SubsetEstimate {
    pub fn value(&self) -> Option<f64> {
        match self {
            SubsetEstimate::Estimate { value, .. } => Some(*value),
            SubsetEstimate::Failed => None,
        }
    }
}

/// Is some mixture of binomials on this window's grid within tv `2*eps`
/// of `f_s`? One LP feasibility solve.
fn window_feasible(
    f_s: &CountDistribution,
    params: &BinomialEstParams,
    window: usize,
) -> Result<bool> {
    let k = params.k;
    let tot = params.tot();
    let n_alpha = tot + 1;
    let n_slack = k + 1;
    let nv = n_alpha + n_slack;

    let components: Vec<CountDistribution> = (0..=tot)
        .map(|j| binomial_pmf(k, params.grid_theta(window, j)))
        .collect::<Result<_>>()?;

    let mut problem = LpProblem::new(nv);
    // |mixture(t) - f_s(t)| <= s_t, per count t.
    for t in 0..=k {
        let mut pos = vec![0.0; nv];
        let mut neg = vec![0.0; nv];
        for (j, comp) in components.iter().enumerate() {
            pos[j] = comp.weights()[t];
            neg[j] = -comp.weights()[t];
        }
        pos[n_alpha + t] = -1.0;
        neg[n_alpha + t] = -1.0;
        let f_t = f_s.weights()[t];
        problem.add_constraint(pos, Relation::Le, f_t);
        problem.add_constraint(neg, Relation::Le, -f_t);
    }
    // l1 budget: sum_t s_t <= 4*eps  (tv <= 2*eps).
    let mut budget = vec![0.0; nv];
    for t in 0..=k {
        budget[n_alpha + t] = 1.0;
    }
    problem.add_constraint(budget, Relation::Le, 4.0 * params.eps);
    // Mixture weights on the simplex.
    let mut simplex = vec![0.0; nv];
    for c in simplex.iter_mut().take(n_alpha) {
        *c = 1.0;
    }
    problem.add_constraint(simplex, Relation::Eq, 1.0);

    let solution = lp_feasible(&problem)?;
    Ok(solution.status == LpStatus::Feasible)
}

/// Sweep windows in ascending order against a precomputed count histogram.
pub fn binomial_est_from_counts(
    f_s: &CountDistribution,
    params: &BinomialEstParams,
) -> Result<SubsetEstimate> {
    if f_s.k() != params.k {
        return Err(Error::ShapeMismatch(format!(
            "histogram over {} counts for k = {}",
            f_s.k(),
            params.k
        )));
    }
    for window in 0..=params.max_window() {
        if window_feasible(f_s, params, window)? {
            return Ok(SubsetEstimate::Estimate {
                value: (window as f64 + 2.0) * params.eta,
                window,
            });
        }
    }
    Ok(SubsetEstimate::Failed)
}

/// Estimate the probability mass of one subset from batches.
pub fn binomial_est(
    batches: &[Batch],
    subset_mask: u64,
    params: &BinomialEstParams,
) -> Result<SubsetEstimate> {
    let f_s = empirical_count_distribution(batches, subset_mask, params.k)?;
    binomial_est_from_counts(&f_s, params)
}

/// One subset's record in the learner output.
#[derive(Debug, Clone, Copy)]
pub struct SubsetEstimateRecord {
    pub mask: u64,
    pub estimate: f64,
    pub window: usize,
    /// Wall time spent in the window sweep for this subset (diagnostic).
    pub lp_solve_ms: f64,
}

/// Output of the full-subset learner.
#[derive(Debug, Clone)]
pub struct SubsetLearnOutcome {
    pub estimate: DiscreteDistribution,
    /// True when no distribution satisfied every subset constraint at the
    /// stated tolerance; the returned estimate then minimizes the worst
    /// deviation instead.
    pub degraded: bool,
    /// The minimized worst deviation `max_S |q(S) - est(S)|`.
    pub max_deviation: f64,
    /// The per-subset tolerance `3*eta + 60*eps/sqrt(k)`.
    pub tolerance: f64,
    /// Subsets whose constraint the returned estimate still violates.
    pub conflicting: Vec<u64>,
    pub subset_estimates: Vec<SubsetEstimateRecord>,
}

/// Learn the full distribution: estimate every proper nonempty subset's
/// mass in parallel, then fit a distribution to the estimates.
///
/// The empty set and the full alphabet are pinned analytically to 0 and 1,
/// so they never spend an LP solve. The fit minimizes the maximum subset
/// deviation subject to the simplex constraints and reports degraded mode
/// when the optimum exceeds the tolerance; any estimator failure is an
/// error.
pub fn learn_subset_lp(
    batches: &[Batch],
    n: usize,
    k: usize,
    eps: f64,
    eta: f64,
    _delta: f64,
) -> Result<SubsetLearnOutcome> {
    learn_subset_lp_capped(batches, n, k, eps, eta, DEFAULT_SUBSET_N_CAP)
}

pub fn learn_subset_lp_capped(
    batches: &[Batch],
    n: usize,
    k: usize,
    eps: f64,
    eta: f64,
    n_cap: usize,
) -> Result<SubsetLearnOutcome> {
    if n == 0 {
        return Err(Error::InvalidParameter("n must be >= 1".into()));
    }
    if n > n_cap {
        return Err(Error::InvalidParameter(format!(
            "n = {n} exceeds the subset enumeration cap {n_cap}"
        )));
    }
    let params = BinomialEstParams::with_eta_fallback(eps, eta, k)?;
    if n == 1 {
        // The simplex constraint pins the answer regardless of data.
        return Ok(SubsetLearnOutcome {
            estimate: DiscreteDistribution::point_mass(1, 1)?,
            degraded: false,
            max_deviation: 0.0,
            tolerance: params.estimate_tolerance(),
            conflicting: Vec::new(),
            subset_estimates: Vec::new(),
        });
    }

    let masks: Vec<u64> = (1..((1u64 << n) - 1)).collect();
    let estimates: Vec<(u64, SubsetEstimate, f64)> = masks
        .par_iter()
        .map(|&mask| {
            let started = std::time::Instant::now();
            let est = binomial_est(batches, mask, &params)?;
            Ok((mask, est, started.elapsed().as_secs_f64() * 1e3))
        })
        .collect::<Result<_>>()?;

    let mut records = Vec::with_capacity(estimates.len());
    let mut failed = Vec::new();
    for (mask, est, lp_solve_ms) in &estimates {
        match est {
            SubsetEstimate::Estimate { value, window } => records.push(SubsetEstimateRecord {
                mask: *mask,
                estimate: *value,
                window: *window,
                lp_solve_ms: *lp_solve_ms,
            }),
            SubsetEstimate::Failed => failed.push(*mask),
        }
    }
    if !failed.is_empty() {
        return Err(Error::EstimationFailed(format!(
            "no feasible window for subset masks {failed:?}"
        )));
    }

    let pairs: Vec<(u64, f64)> = records.iter().map(|r| (r.mask, r.estimate)).collect();
    let fit = fit_distribution_to_subset_estimates(&pairs, n, params.estimate_tolerance())?;

    Ok(SubsetLearnOutcome {
        estimate: fit.estimate,
        degraded: fit.degraded,
        max_deviation: fit.max_deviation,
        tolerance: params.estimate_tolerance(),
        conflicting: fit.conflicting,
        subset_estimates: records,
    })
}

pub struct SubsetFit {
    pub estimate: DiscreteDistribution,
    pub degraded: bool,
    pub max_deviation: f64,
    pub conflicting: Vec<u64>,
}

/// Fit a distribution to subset-mass estimates by minimizing the worst
/// deviation `max_S |q(S) - est(S)|` over the simplex.
///
/// Any q with deviation within `tolerance` satisfies the consistency
/// constraints as stated, so a sub-tolerance optimum is a feasible witness;
/// the minimax choice makes the witness deterministic and centers the
/// window-sweep's systematic bias across complementary subsets. When even
/// the optimum exceeds the tolerance the same point is returned with the
/// degraded flag and the list of conflicting subsets.
pub fn fit_distribution_to_subset_estimates(
    estimates: &[(u64, f64)],
    n: usize,
    tolerance: f64,
) -> Result<SubsetFit> {
    let nv = n + 1; // q_1 ... q_n, s
    let mut problem = LpProblem::new(nv);
    for &(mask, est) in estimates {
        let mut pos = vec![0.0; nv];
        let mut neg = vec![0.0; nv];
        for i in 0..n {
            if mask & (1u64 << i) != 0 {
                pos[i] = 1.0;
                neg[i] = -1.0;
            }
        }
        pos[n] = -1.0;
        neg[n] = -1.0;
        problem.add_constraint(pos, Relation::Le, est);
        problem.add_constraint(neg, Relation::Le, -est);
    }
    let mut simplex = vec![1.0; nv];
    simplex[n] = 0.0;
    problem.add_constraint(simplex, Relation::Eq, 1.0);

    let mut objective = vec![0.0; nv];
    objective[n] = 1.0;
    let solution = lp_minimize(&problem, &objective)?;
    let max_deviation = solution.objective.unwrap_or(f64::INFINITY);

    let mut probs = solution.assignment[..n].to_vec();
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > crate::PROB_SUM_TOL {
        if (sum - 1.0).abs() <= 1e-6 && sum > 0.0 {
            // The LP holds the simplex row only to its own feasibility
            // tolerance; rescale and say so rather than failing.
            log::debug!("rescaling LP witness with mass {sum}");
            for p in probs.iter_mut() {
                *p /= sum;
            }
        } else {
            return Err(Error::InvalidDistribution(format!(
                "consistency fit returned mass {sum}"
            )));
        }
    }
    for p in probs.iter_mut() {
        if *p < 0.0 && *p >= -crate::PROB_NEG_TOL {
            *p = 0.0;
        }
    }
    let estimate = DiscreteDistribution::new(probs)?;

    let degraded = max_deviation > tolerance + FEASIBILITY_TOL;
    let conflicting: Vec<u64> = estimates
        .iter()
        .filter(|(mask, est)| {
            (estimate.subset_mass(*mask) - est).abs() > tolerance + FEASIBILITY_TOL
        })
        .map(|(mask, _)| *mask)
        .collect();

    Ok(SubsetFit {
        estimate,
        degraded,
        max_deviation,
        conflicting,
    })
}
