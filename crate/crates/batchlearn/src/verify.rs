//! Numeric verification of the technical inequalities behind the error
//! analysis, using exact binomial total variation. Each check reports the
//! worst margin (LHS - RHS under a sign convention where >= 0 means the
//! inequality held) over a parameter grid, and doubles as a test oracle for
//! the estimators' error bounds.
//!
//! Checks shipped in the default suite:
//!
//! - `a1`: `(1 - eps)^alpha >= 1 - 2*alpha*eps` on `[0, 1/2] x [0, 1]`.
//! - `a2`: `x -> (1 - a/x)^x` is increasing on `(a, inf)` (sampled).
//! - `a3`: `(1 + alpha/n)^n (1 - alpha/m)^m >= 1/7` for `m >= max(n, 2)`,
//!   `alpha <= 1.1 sqrt(n)`.
//! - `a4`: `C(k,t) (t/k)^t ((k-t)/k)^(k-t) >= 1/(3 sqrt(t))`.
//! - `b1`: for Bernoulli means `(1 -+ eps)/2`, the k-fold product tv is at
//!   most `eps * sqrt(2k)` (via Pinsker; checked exactly).
//! - `b2`: the same product tv is at least `eps * sqrt(k)/15` when
//!   `eps < 1/(15 sqrt(k))`.
//! - `b3`: binomial mixtures with success probabilities separated by eps
//!   stay `eps * sqrt(k)/15`-apart; checked through the prefix-mass witness
//!   statistic and randomized mixtures.
//!
//! For two-point distributions the count is a sufficient statistic, so the
//! tv between k-fold products equals the tv between the two binomials;
//! that is what makes the k <= 200 grids exact and cheap.

use std::time::Instant;

use rand::Rng;

use crate::adversary::seeded_rng;
use crate::dist::{binomial_pmf, mixture, CountDistribution};
use crate::{Error, Result};

/// Outcome of one grid check.
#[derive(Debug, Clone)]
pub struct LemmaCheckReport {
    pub lemma_id: String,
    pub grid_size: usize,
    /// Minimum of (LHS - RHS) over the grid; >= 0 means the inequality held
    /// everywhere (tests allow -1e-9 of float slack).
    pub worst_margin: f64,
    pub worst_point: String,
    pub wall_ms: f64,
}

struct GridAccumulator {
    margin: f64,
    point: String,
    count: usize,
    started: Instant,
}

impl GridAccumulator {
    fn new() -> Self {
        Self {
            margin: f64::INFINITY,
            point: String::new(),
            count: 0,
            started: Instant::now(),
        }
    }

    fn record(&mut self, margin: f64, point: impl FnOnce() -> String) {
        self.count += 1;
        if margin < self.margin {
            self.margin = margin;
            self.point = point();
        }
    }

    /// Fold in a chunk's local worst. Chunks are absorbed in index order
    /// with a strict comparison, so ties keep the earliest point and the
    /// result is schedule-independent.
    fn absorb(&mut self, chunk: GridAccumulator) {
        self.count += chunk.count;
        if chunk.margin < self.margin {
            self.margin = chunk.margin;
            self.point = chunk.point;
        }
    }

    fn finish(self, lemma_id: &str) -> LemmaCheckReport {
        LemmaCheckReport {
            lemma_id: lemma_id.to_string(),
            grid_size: self.count,
            worst_margin: self.margin,
            worst_point: self.point,
            wall_ms: self.started.elapsed().as_secs_f64() * 1e3,
        }
    }
}

/// Exact total variation between `B(k, theta1)` and `B(k, theta2)`.
pub fn tv_binomial(k: usize, theta1: f64, theta2: f64) -> Result<f64> {
    binomial_pmf(k, theta1)?.tv_distance(&binomial_pmf(k, theta2)?)
}

/// KL divergence between Bernoulli distributions with means `(1 -+ eps)/2`:
/// the closed form `eps * ln((1 + eps)/(1 - eps))`, which is at most
/// `4 eps^2` on the domain.
pub fn kl_bernoulli(eps: f64) -> Result<f64> {
    if !(0.0 < eps && eps < 0.5) {
        return Err(Error::InvalidParameter(format!(
            "eps = {eps} outside (0, 1/2)"
        )));
    }
    Ok(eps * ((1.0 + eps) / (1.0 - eps)).ln())
}

/// The Pinsker chain at one point: exact product tv, the Pinsker midpoint
/// `sqrt(k * KL / 2)`, and the closed-form bound `eps * sqrt(2k)`.
pub fn pinsker_chain(k: usize, eps: f64) -> Result<(f64, f64, f64)> {
    let delta = tv_binomial(k, (1.0 - eps) / 2.0, (1.0 + eps) / 2.0)?;
    let mid = (k as f64 * kl_bernoulli(eps)? / 2.0).sqrt();
    let bound = eps * (2.0 * k as f64).sqrt();
    Ok((delta, mid, bound))
}

/// Upper tensorization at one point: `tv(P^(x)k, Q^(x)k) <= eps*sqrt(2k)`
/// for Bernoulli means `(1 -+ eps)/2` (whose base tv is exactly eps).
pub fn check_tensorization_upper(k: usize, eps: f64) -> Result<LemmaCheckReport> {
    if !(0.0 < eps && eps < 0.5) {
        return Err(Error::InvalidParameter(format!(
            "eps = {eps} outside (0, 1/2)"
        )));
    }
    let mut acc = GridAccumulator::new();
    let (delta, _, bound) = pinsker_chain(k, eps)?;
    acc.record(bound - delta, || format!("k={k},eps={eps}"));
    Ok(acc.finish("b1"))
}

/// Lower tensorization at one point: `tv(P^(x)k, Q^(x)k) >= eps*sqrt(k)/15`
/// when `eps < 1/(15 sqrt(k))`.
pub fn check_tensorization_lower(k: usize, eps: f64) -> Result<LemmaCheckReport> {
    let cap = 1.0 / (15.0 * (k as f64).sqrt());
    if !(0.0 < eps && eps < cap) {
        return Err(Error::InvalidParameter(format!(
            "eps = {eps} outside (0, {cap}) for k = {k}"
        )));
    }
    let mut acc = GridAccumulator::new();
    let delta = tv_binomial(k, (1.0 - eps) / 2.0, (1.0 + eps) / 2.0)?;
    let floor = eps * (k as f64).sqrt() / 15.0;
    acc.record(delta - floor, || format!("k={k},eps={eps}"));
    Ok(acc.finish("b2"))
}

/// Prefix mass of `B(k, x)` on `{0, ..., t}`; the witness statistic that
/// separates the two mixture families.
fn binomial_cdf(k: usize, x: f64, t: usize) -> Result<f64> {
    Ok(binomial_pmf(k, x)?.prefix_mass(t))
}

/// Separation of binomial mixtures: any mixture with success probabilities
/// in `[0, p_hi]` is at least `eps*sqrt(k)/15` from any with probabilities
/// in `[q_lo, 1]`, provided `q_lo - p_hi >= eps` and `eps < 1/(15 sqrt(k))`.
///
/// For k >= 10 the margin is certified through the monotone witness
/// `f(x) = B(k, x)({0..t})` with `t = floor(p_hi (k-1))`: it suffices that
/// `f(p_hi) - f(p_hi + eps)` clears the floor. For k < 10 the mean gap
/// already does. Randomized five-point mixtures on both sides are
/// spot-checked directly in both regimes.
pub fn check_mixture_separation(
    k: usize,
    p_hi: f64,
    q_lo: f64,
    eps: f64,
) -> Result<LemmaCheckReport> {
    let cap = 1.0 / (15.0 * (k as f64).sqrt());
    if !(0.0 < eps && eps < cap) {
        return Err(Error::InvalidParameter(format!(
            "eps = {eps} outside (0, {cap}) for k = {k}"
        )));
    }
    if q_lo - p_hi < eps - 1e-15 || !(0.0..=1.0).contains(&p_hi) || !(0.0..=1.0).contains(&q_lo) {
        return Err(Error::InvalidParameter(format!(
            "need 0 <= p_hi <= q_lo - eps <= 1, got p_hi = {p_hi}, q_lo = {q_lo}, eps = {eps}"
        )));
    }

    let floor = eps * (k as f64).sqrt() / 15.0;
    let mut acc = GridAccumulator::new();

    if k < 10 {
        acc.record((q_lo - p_hi) - floor, || {
            format!("k={k},p_hi={p_hi},mean-gap")
        });
    } else {
        let t = (p_hi * (k as f64 - 1.0)).floor() as usize;
        let drop = binomial_cdf(k, p_hi, t)? - binomial_cdf(k, p_hi + eps, t)?;
        acc.record(drop - floor, || format!("k={k},p_hi={p_hi},witness"));
    }

    // Randomized mixtures, five components a side, deterministic seed.
    let mut rng = seeded_rng(0x6d6978, (k as u64) << 16 ^ (p_hi * 1e6) as u64);
    for trial in 0..3 {
        let p_tilde = random_mixture(k, 0.0, p_hi, &mut rng)?;
        let q_tilde = random_mixture(k, q_lo, 1.0, &mut rng)?;
        let delta = p_tilde.tv_distance(&q_tilde)?;
        acc.record(delta - floor, || {
            format!("k={k},p_hi={p_hi},mixture-trial{trial}")
        });
    }
    Ok(acc.finish("b3"))
}

fn random_mixture(
    k: usize,
    lo: f64,
    hi: f64,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Result<CountDistribution> {
    const POINTS: usize = 5;
    let comps: Vec<CountDistribution> = (0..POINTS)
        .map(|i| {
            let theta = lo + (hi - lo) * i as f64 / (POINTS - 1) as f64;
            binomial_pmf(k, theta)
        })
        .collect::<Result<_>>()?;
    let raw: Vec<f64> = (0..POINTS).map(|_| rng.random::<f64>() + 1e-3).collect();
    let total: f64 = raw.iter().sum();
    let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
    mixture(&weights, &comps)
}

/// Grid densities for the shipped checks; `dense` doubles the resolution.
fn steps(base: usize, dense: bool) -> usize {
    if dense {
        base * 2
    } else {
        base
    }
}

/// `(1 - eps)^alpha >= 1 - 2*alpha*eps` on `eps in [0, 1/2], alpha in [0, 1]`.
pub fn check_a1(dense: bool) -> LemmaCheckReport {
    let mut acc = GridAccumulator::new();
    let ne = steps(50, dense);
    let na = steps(100, dense);
    for ie in 0..=ne {
        let eps = 0.5 * ie as f64 / ne as f64;
        for ia in 0..=na {
            let alpha = ia as f64 / na as f64;
            let margin = (1.0 - eps).powf(alpha) - (1.0 - 2.0 * alpha * eps);
            acc.record(margin, || format!("eps={eps},alpha={alpha}"));
        }
    }
    acc.finish("a1")
}

/// Sampled monotonicity of `(1 - a/x)^x` on `(a, inf)` for a in {1/2, 1, 2}.
pub fn check_a2(dense: bool) -> LemmaCheckReport {
    let mut acc = GridAccumulator::new();
    let points = steps(1000, dense);
    for &a in &[0.5, 1.0, 2.0] {
        // Log-spaced offsets from just above the pole out to x ~ a + 1e3.
        let xs: Vec<f64> = (0..=points)
            .map(|i| {
                let t = -6.0 + 9.0 * i as f64 / points as f64;
                a + 10f64.powf(t)
            })
            .collect();
        let f = |x: f64| (1.0 - a / x).powf(x);
        for w in xs.windows(2) {
            acc.record(f(w[1]) - f(w[0]), || format!("a={a},x={}", w[0]));
        }
    }
    acc.finish("a2")
}

/// `(1 + alpha/n)^n (1 - alpha/m)^m >= 1/7` for `m >= max(n, 2)` and
/// `alpha in [0, 1.1 sqrt(n)]`.
pub fn check_a3(dense: bool) -> LemmaCheckReport {
    use rayon::prelude::*;
    let na = steps(22, dense);
    let mut acc = GridAccumulator::new();
    let chunks: Vec<GridAccumulator> = (1..=50usize)
        .into_par_iter()
        .map(|n| {
            let mut local = GridAccumulator::new();
            let alpha_max = 1.1 * (n as f64).sqrt();
            for m in n.max(2)..=100 {
                for ia in 0..=na {
                    let alpha = alpha_max * ia as f64 / na as f64;
                    let value = (1.0 + alpha / n as f64).powi(n as i32)
                        * (1.0 - alpha / m as f64).powi(m as i32);
                    local.record(value - 1.0 / 7.0, || format!("n={n},m={m},alpha={alpha}"));
                }
            }
            local
        })
        .collect();
    for chunk in chunks {
        acc.absorb(chunk);
    }
    acc.finish("a3")
}

/// `C(k,t) (t/k)^t ((k-t)/k)^(k-t) >= 1/(3 sqrt(t))` for `1 <= t <= k-1`.
pub fn check_a4(dense: bool) -> LemmaCheckReport {
    use rayon::prelude::*;
    use statrs::function::gamma::ln_gamma;
    let k_max = steps(300, dense).min(600);
    let mut acc = GridAccumulator::new();
    let chunks: Vec<GridAccumulator> = (2..=k_max)
        .into_par_iter()
        .map(|k| {
            let mut local = GridAccumulator::new();
            let ln_k_fact = ln_gamma(k as f64 + 1.0);
            for t in 1..k {
                let (tf, rf) = (t as f64, (k - t) as f64);
                let ln_value = ln_k_fact - ln_gamma(tf + 1.0) - ln_gamma(rf + 1.0)
                    + tf * (tf / k as f64).ln()
                    + rf * (rf / k as f64).ln();
                let margin = ln_value.exp() - 1.0 / (3.0 * tf.sqrt());
                local.record(margin, || format!("k={k},t={t}"));
            }
            local
        })
        .collect();
    for chunk in chunks {
        acc.absorb(chunk);
    }
    acc.finish("a4")
}

/// The four scalar-inequality grids.
pub fn scalar_inequality_grids(dense: bool) -> Vec<LemmaCheckReport> {
    vec![
        check_a1(dense),
        check_a2(dense),
        check_a3(dense),
        check_a4(dense),
    ]
}

/// Upper tensorization over `k in 1..=200`, `eps in {0.01, 0.03, ..., 0.45}`.
pub fn tensorization_upper_grid(dense: bool) -> Result<LemmaCheckReport> {
    use rayon::prelude::*;
    let k_max = if dense { 400 } else { 200 };
    let mut acc = GridAccumulator::new();
    let chunks: Vec<GridAccumulator> = (1..=k_max)
        .into_par_iter()
        .map(|k| -> Result<GridAccumulator> {
            let mut local = GridAccumulator::new();
            let mut ie = 0;
            loop {
                let eps = 0.01 + 0.02 * ie as f64;
                if eps > 0.45 + 1e-12 {
                    break;
                }
                let (delta, _, bound) = pinsker_chain(k, eps)?;
                local.record(bound - delta, || format!("k={k},eps={eps}"));
                ie += 1;
            }
            Ok(local)
        })
        .collect::<Result<_>>()?;
    for chunk in chunks {
        acc.absorb(chunk);
    }
    Ok(acc.finish("b1"))
}

/// Lower tensorization over `k in 1..=200` at `eps = 0.9/(15 sqrt(k))`.
pub fn tensorization_lower_grid(dense: bool) -> Result<LemmaCheckReport> {
    use rayon::prelude::*;
    let k_max = if dense { 400 } else { 200 };
    let mut acc = GridAccumulator::new();
    let chunks: Vec<GridAccumulator> = (1..=k_max)
        .into_par_iter()
        .map(|k| -> Result<GridAccumulator> {
            let mut local = GridAccumulator::new();
            let eps = 0.9 / (15.0 * (k as f64).sqrt());
            let delta = tv_binomial(k, (1.0 - eps) / 2.0, (1.0 + eps) / 2.0)?;
            let floor = eps * (k as f64).sqrt() / 15.0;
            local.record(delta - floor, || format!("k={k},eps={eps}"));
            Ok(local)
        })
        .collect::<Result<_>>()?;
    for chunk in chunks {
        acc.absorb(chunk);
    }
    Ok(acc.finish("b2"))
}

/// Mixture separation over a small (k, p_hi) grid at `eps = 0.9/(15 sqrt(k))`.
pub fn mixture_separation_grid(dense: bool) -> Result<LemmaCheckReport> {
    let mut acc = GridAccumulator::new();
    let ks: &[usize] = if dense {
        &[2, 3, 5, 9, 10, 15, 25, 50, 75, 100, 150, 200]
    } else {
        &[2, 5, 9, 10, 25, 50, 100, 200]
    };
    for &k in ks {
        let eps = 0.9 / (15.0 * (k as f64).sqrt());
        for &p_hi in &[0.05, 0.1, 0.3, 0.45] {
            let report = check_mixture_separation(k, p_hi, p_hi + eps, eps)?;
            acc.record(report.worst_margin, || report.worst_point.clone());
        }
    }
    Ok(acc.finish("b3"))
}

/// Every check shipped by the `verify-lemmas` command.
pub fn default_suite(dense: bool) -> Result<Vec<LemmaCheckReport>> {
    let mut reports = scalar_inequality_grids(dense);
    reports.push(tensorization_upper_grid(dense)?);
    reports.push(tensorization_lower_grid(dense)?);
    reports.push(mixture_separation_grid(dense)?);
    Ok(reports)
}

/// One CSV row per report: lemma_id, grid_size, worst_margin, worst_point,
/// wall_ms.
pub fn write_lemma_reports(reports: &[LemmaCheckReport], path: &std::path::Path) -> Result<()> {
    let to_err = |e: csv::Error| match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::Io {
            path: path.to_path_buf(),
            source,
        },
        other => Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            msg: format!("{other:?}"),
        },
    };
    let mut writer = csv::Writer::from_path(path).map_err(to_err)?;
    writer
        .write_record([
            "lemma_id",
            "grid_size",
            "worst_margin",
            "worst_point",
            "wall_ms",
        ])
        .map_err(to_err)?;
    for r in reports {
        writer
            .write_record([
                r.lemma_id.clone(),
                r.grid_size.to_string(),
                crate::data::fmt_real(r.worst_margin),
                r.worst_point.clone(),
                format!("{:.3}", r.wall_ms),
            ])
            .map_err(to_err)?;
    }
    writer.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}
