//! Full-pipeline integration: simulated contaminated data through the
//! estimators, exercising the harness plumbing end to end.

use batchlearn::dist::{tv_distance, DiscreteDistribution};
use batchlearn::harness::{run_experiment, Algorithm, ExperimentConfig, RunOptions};

#[test]
fn subset_learner_beats_its_bound_on_the_full_pipeline() {
    // n = 2, p = (0.3, 0.7), eta = 0.05, eps = 0.01, k = 25, m = 20000,
    // all-ones adversary: the learner's error stays within
    // 6 eta + 120 eps / sqrt(k) = 0.54 in at least 95% of trials.
    let trials = 40usize;
    let cfg = ExperimentConfig {
        n: 2,
        k: 25,
        m: Some(20_000),
        trials,
        eps: 0.01,
        eta: 0.05,
        delta: 0.1,
        adversary: "point_mass:1".into(),
        algorithms: vec![Algorithm::SubsetLp],
        seed: 0x91,
        truth: Some(vec![0.3, 0.7]),
        ..ExperimentConfig::default()
    };
    let bound = 6.0 * cfg.eta + 120.0 * cfg.eps / (cfg.k as f64).sqrt();
    let output = run_experiment(&cfg, &RunOptions::default()).unwrap();
    let hits = output
        .records
        .iter()
        .filter(|r| !r.degraded && r.tv_error <= bound)
        .count();
    assert!(
        hits * 100 >= trials * 95,
        "bound {bound} held in only {hits}/{trials} trials"
    );
}

#[test]
fn optimal_pair_adversary_runs_through_the_config_path() {
    let cfg = ExperimentConfig {
        n: 2,
        k: 4,
        m: Some(5_000),
        trials: 2,
        eps: 0.05,
        eta: 0.02,
        delta: 0.1,
        adversary: "lemma1:q".into(),
        algorithms: vec![Algorithm::Empirical, Algorithm::DistSet],
        seed: 17,
        truth: Some(vec![0.55, 0.45]),
        perturbation: Some("none".into()),
        ..ExperimentConfig::default()
    };
    let output = run_experiment(&cfg, &RunOptions::default()).unwrap();
    assert_eq!(output.records.len(), 4);
    assert!(output.records.iter().all(|r| r.tv_error <= 1.0));
    assert!(output.records.iter().all(|r| r.adversary == "lemma1:q"));
}

#[test]
fn estimator_failure_becomes_a_degraded_record() {
    // A single batch gives a point-mass count histogram, which no window of
    // binomial mixtures matches at small eps: the sweep fails, the harness
    // records a degraded trial, and the remaining algorithms still report.
    let cfg = ExperimentConfig {
        n: 2,
        k: 20,
        m: Some(1),
        trials: 2,
        eps: 0.01,
        eta: 0.1,
        delta: 0.1,
        adversary: "point_mass:1".into(),
        algorithms: vec![Algorithm::SubsetLp, Algorithm::Empirical],
        seed: 23,
        truth: Some(vec![0.6, 0.4]),
        ..ExperimentConfig::default()
    };
    let output = run_experiment(&cfg, &RunOptions::default()).unwrap();
    assert_eq!(output.records.len(), 4);
    for r in &output.records {
        match r.algorithm.as_str() {
            "subsetlp" => {
                assert!(r.degraded);
                assert_eq!(r.tv_error, 1.0);
            }
            "empirical" => assert!(!r.degraded),
            other => panic!("unexpected algorithm {other}"),
        }
    }
}

#[test]
fn oracle_subset_estimates_make_the_truth_feasible() {
    // With exact masses injected for every subset, the consistency fit
    // returns the truth itself (deviation zero), the degenerate case the
    // guarantee builds on.
    use batchlearn::subset_lp::fit_distribution_to_subset_estimates;
    let p = DiscreteDistribution::new(vec![0.15, 0.2, 0.25, 0.4]).unwrap();
    let estimates: Vec<(u64, f64)> = (1..15u64).map(|m| (m, p.subset_mass(m))).collect();
    let fit = fit_distribution_to_subset_estimates(&estimates, 4, 0.5).unwrap();
    assert!(!fit.degraded);
    let err = tv_distance(&p, &fit.estimate).unwrap();
    assert!(err < 1e-6, "oracle-mode recovery error {err}");
}
