//! Seeded statistical checks: law-of-large-numbers convergence of the
//! samplers and the two-sample indistinguishability of the paired optimal
//! adversary. Thresholds are loose enough that the fixed seeds pass with
//! wide margins.

use batchlearn::adversary::{
    generate_adversarial_batches, lower_bound_instance, sample_good_batches, seeded_rng,
    AdversaryStrategy, GoodBatchSpec, InstanceSide, Perturbation,
};
use batchlearn::data::Batch;
use batchlearn::dist::{binomial_pmf, tv_distance, DiscreteDistribution};
use batchlearn::harness::empirical_baseline;
use batchlearn::subset_lp::empirical_count_distribution;
use batchlearn::tensor::FrequencyTensor;
use statrs::distribution::{ChiSquared, ContinuousCDF};

#[test]
fn pooled_frequency_converges_to_the_target() {
    let p = DiscreteDistribution::new(vec![0.15, 0.35, 0.5]).unwrap();
    let spec = GoodBatchSpec::new(p.clone(), 0.0, Perturbation::None).unwrap();
    let batches = sample_good_batches(&spec, 10, 20_000, &mut seeded_rng(21, 0)).unwrap();
    let pooled = empirical_baseline(&batches, 3).unwrap();
    assert!(tv_distance(&p, &pooled).unwrap() < 0.01);
}

#[test]
fn frequency_tensor_converges_to_the_tensor_power() {
    let p = DiscreteDistribution::new(vec![0.3, 0.7]).unwrap();
    let spec = GoodBatchSpec::new(p.clone(), 0.0, Perturbation::None).unwrap();
    let batches = sample_good_batches(&spec, 3, 200_000, &mut seeded_rng(22, 0)).unwrap();
    let empirical = FrequencyTensor::from_batches(&batches, 2, 3).unwrap();
    let exact = FrequencyTensor::tensor_power(&p, 3).unwrap();
    assert!(empirical.tv_distance(&exact).unwrap() < 0.01);
}

#[test]
fn subset_counts_are_binomial_without_contamination() {
    let p = DiscreteDistribution::new(vec![0.2, 0.3, 0.5]).unwrap();
    let spec = GoodBatchSpec::new(p.clone(), 0.0, Perturbation::None).unwrap();
    let k = 12;
    let batches = sample_good_batches(&spec, k, 100_000, &mut seeded_rng(23, 0)).unwrap();
    let mask = 0b011u64; // p(S) = 0.5
    let f = empirical_count_distribution(&batches, mask, k).unwrap();
    let expected = binomial_pmf(k, p.subset_mass(mask)).unwrap();
    assert!(f.tv_distance(&expected).unwrap() < 0.01);
}

#[test]
fn mass_shift_adversary_matches_its_decoy() {
    let truth = DiscreteDistribution::new(vec![0.5, 0.5]).unwrap();
    let decoy = DiscreteDistribution::new(vec![0.9, 0.1]).unwrap();
    let strategy = AdversaryStrategy::MassShift {
        toward: decoy.clone(),
    };
    let bad = generate_adversarial_batches(
        &strategy,
        &[],
        &truth,
        0.1,
        2,
        150_000,
        &mut seeded_rng(24, 0),
    )
    .unwrap();
    let tensor = FrequencyTensor::from_batches(&bad, 2, 2).unwrap();
    let expected = FrequencyTensor::tensor_power(&decoy, 2).unwrap();
    assert!(tensor.tv_distance(&expected).unwrap() < 0.01);
}

#[test]
fn optimal_adversary_mix_reproduces_the_common_mixture() {
    // eps = 0.4, eta = 0, k = 2: good batches from the Bernoulli-0.4 source
    // mixed (1-eps):eps with the contamination tensor must land on
    // (0.3, 0.2, 0.2, 0.3).
    let (eps, k) = (0.4, 2);
    let inst = lower_bound_instance(eps, 0.0, k).unwrap();
    let m = 200_000usize;
    let bad_count = (m as f64 * eps) as usize;
    let spec = GoodBatchSpec::new(inst.p_prime.clone(), 0.0, Perturbation::None).unwrap();
    let good = sample_good_batches(&spec, k, m - bad_count, &mut seeded_rng(25, 0)).unwrap();
    let strategy = AdversaryStrategy::Lemma1Optimal {
        eta: 0.0,
        side: InstanceSide::P,
    };
    let bad = generate_adversarial_batches(
        &strategy,
        &good,
        &inst.p_prime,
        eps,
        k,
        bad_count,
        &mut seeded_rng(25, 1),
    )
    .unwrap();
    let all: Vec<Batch> = good.into_iter().chain(bad).collect();
    let tensor = FrequencyTensor::from_batches(&all, 2, k).unwrap();
    for (got, want) in tensor.entries().iter().zip([0.3, 0.2, 0.2, 0.3]) {
        assert!((got - want).abs() < 0.01, "{got} vs {want}");
    }
}

/// Two-sample chi-square statistic over the 2^k cells, with expectations
/// from the pooled counts.
fn chi_square_two_sample(counts_a: &[usize], counts_b: &[usize]) -> (f64, usize) {
    let total_a: f64 = counts_a.iter().sum::<usize>() as f64;
    let total_b: f64 = counts_b.iter().sum::<usize>() as f64;
    let mut statistic = 0.0;
    let mut dof = 0usize;
    for (&a, &b) in counts_a.iter().zip(counts_b) {
        let pooled = (a + b) as f64;
        if pooled == 0.0 {
            continue;
        }
        let ea = pooled * total_a / (total_a + total_b);
        let eb = pooled * total_b / (total_a + total_b);
        statistic += (a as f64 - ea).powi(2) / ea + (b as f64 - eb).powi(2) / eb;
        dof += 1;
    }
    (statistic, dof.saturating_sub(1))
}

#[test]
fn paired_datasets_are_statistically_indistinguishable() {
    // Build full datasets from both sides of the construction and run a
    // two-sample chi-square test on the batch-tuple counts: at significance
    // 0.01 it must fail to reject that they share one distribution.
    let (eps, eta) = (0.3, 0.1);
    for k in [2usize, 3] {
        let inst = lower_bound_instance(eps, eta, k).unwrap();
        let m = 100_000usize;
        let bad_count = (m as f64 * eps).round() as usize;

        let mut cells = vec![[0usize; 2]; 1 << k];
        for (side_idx, (source, side)) in [
            (&inst.p_prime, InstanceSide::P),
            (&inst.q_prime, InstanceSide::Q),
        ]
        .into_iter()
        .enumerate()
        {
            let spec = GoodBatchSpec::new((*source).clone(), 0.0, Perturbation::None).unwrap();
            let good = sample_good_batches(
                &spec,
                k,
                m - bad_count,
                &mut seeded_rng(26, 4 * k as u64 + side_idx as u64),
            )
            .unwrap();
            let strategy = AdversaryStrategy::Lemma1Optimal { eta, side };
            let bad = generate_adversarial_batches(
                &strategy,
                &good,
                source,
                eps,
                k,
                bad_count,
                &mut seeded_rng(26, 4 * k as u64 + 2 + side_idx as u64),
            )
            .unwrap();
            for batch in good.iter().chain(bad.iter()) {
                let mut idx = 0usize;
                for &s in batch.samples() {
                    idx = idx * 2 + (s - 1);
                }
                cells[idx][side_idx] += 1;
            }
        }

        let counts_a: Vec<usize> = cells.iter().map(|c| c[0]).collect();
        let counts_b: Vec<usize> = cells.iter().map(|c| c[1]).collect();
        let (statistic, dof) = chi_square_two_sample(&counts_a, &counts_b);
        let critical = ChiSquared::new(dof as f64).unwrap().inverse_cdf(0.99);
        assert!(
            statistic < critical,
            "k={k}: chi-square {statistic:.2} exceeds the 1% critical value {critical:.2}"
        );
    }
}

#[test]
fn finite_sample_candidate_quality_tracks_the_infinite_sample_bound() {
    // n = 2, k = 3, eps = 0.1, m = 1e5, optimal-pair contamination: the
    // candidate set holds a vector within 6*eps/k of the truth up to a
    // 0.05 sampling allowance, in at least 90% of 50 seeded trials.
    let (eps, k, m, trials) = (0.1f64, 3usize, 100_000usize, 50usize);
    let inst = lower_bound_instance(eps, 0.0, k).unwrap();
    let truth = inst.p_prime.clone();
    let bad_count = (m as f64 * eps).round() as usize;
    let threshold = 6.0 * eps / k as f64 + 0.05;

    let spec = GoodBatchSpec::new(truth.clone(), 0.0, Perturbation::None).unwrap();
    let strategy = AdversaryStrategy::Lemma1Optimal {
        eta: 0.0,
        side: InstanceSide::P,
    };
    let mut hits = 0usize;
    for trial in 0..trials {
        let good = sample_good_batches(
            &spec,
            k,
            m - bad_count,
            &mut seeded_rng(28, 2 * trial as u64),
        )
        .unwrap();
        let bad = generate_adversarial_batches(
            &strategy,
            &good,
            &truth,
            eps,
            k,
            bad_count,
            &mut seeded_rng(28, 2 * trial as u64 + 1),
        )
        .unwrap();
        let all: Vec<Batch> = good.into_iter().chain(bad).collect();
        let tensor = FrequencyTensor::from_batches(&all, 2, k).unwrap();
        let set = batchlearn::dist_set::dist_set(&tensor).unwrap();
        let min_dist = set
            .candidates
            .iter()
            .map(|c| tv_distance(&truth, c).unwrap())
            .fold(f64::INFINITY, f64::min);
        if min_dist <= threshold {
            hits += 1;
        }
    }
    assert!(
        hits * 100 >= trials * 90,
        "min candidate distance <= {threshold} in only {hits}/{trials} trials"
    );
}

#[test]
fn baseline_error_under_point_mass_matches_the_analytic_shift() {
    // Pooled frequency absorbs the adversary in full: error ~ eps(1 - p_t).
    let p = DiscreteDistribution::new(vec![0.1, 0.4, 0.5]).unwrap();
    let (eps, k, m) = (0.1, 5, 100_000usize);
    let bad_count = (m as f64 * eps).round() as usize;
    let spec = GoodBatchSpec::new(p.clone(), 0.0, Perturbation::None).unwrap();
    let good = sample_good_batches(&spec, k, m - bad_count, &mut seeded_rng(27, 0)).unwrap();
    let strategy = AdversaryStrategy::PointMass { target: 1 };
    let bad = generate_adversarial_batches(
        &strategy,
        &good,
        &p,
        eps,
        k,
        bad_count,
        &mut seeded_rng(27, 1),
    )
    .unwrap();
    let all: Vec<Batch> = good.into_iter().chain(bad).collect();
    let pooled = empirical_baseline(&all, 3).unwrap();
    let error = tv_distance(&p, &pooled).unwrap();
    let analytic = eps * (1.0 - p.prob(1));
    assert!(
        (error - analytic).abs() < 0.01,
        "error {error} vs analytic {analytic}"
    );
}
