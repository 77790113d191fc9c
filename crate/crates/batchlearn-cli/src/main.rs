//! Command-line driver: dataset simulation, estimation, Monte Carlo
//! experiments, inequality verification, and the lower-bound instance dump.
//!
//! Exit codes: 0 success, 2 invalid configuration or parameters,
//! 3 estimator degraded or failed (estimate only), 4 I/O error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use batchlearn::adversary::lower_bound_instance;
use batchlearn::data::{
    fmt_real, provenance_path, read_batch_file, read_distribution, write_batch_file,
    write_distribution, write_provenance,
};
use batchlearn::dist_set::learn_tensor;
use batchlearn::harness::{
    build_trial_dataset, distributions_path, empirical_baseline, resolve_adversary, run_experiment,
    trial_truth, write_distributions, write_results, Algorithm, ExperimentConfig, RunOptions,
};
use batchlearn::subset_lp::learn_subset_lp;
use batchlearn::verify::{self, LemmaCheckReport};
use batchlearn::Error;

#[derive(Parser)]
#[command(
    name = "batchlearn",
    version,
    about = "Robust distribution learning from untrusted batches"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a contaminated dataset: batch file plus provenance sidecar.
    Simulate {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        m: usize,
        #[arg(long)]
        eps: f64,
        #[arg(long, default_value_t = 0.0)]
        eta: f64,
        /// point_mass:<t> | mass_shift:<file> | replay_worst | lemma1[:p|:q]
        #[arg(long)]
        adversary: String,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Ground-truth distribution file; defaults to a seeded
        /// uniform-simplex draw.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Estimate the distribution behind a batch file.
    Estimate {
        #[arg(long)]
        algo: String,
        #[arg(long)]
        batches: PathBuf,
        #[arg(long, default_value_t = 0.01)]
        eps: f64,
        #[arg(long, default_value_t = 0.0)]
        eta: f64,
        #[arg(long, default_value_t = 0.1)]
        delta: f64,
        #[arg(long)]
        out: PathBuf,
        /// subsetlp only: per-subset estimate CSV
        /// (subset_bitmask, estimate, feasible_i, lp_solve_ms).
        #[arg(long)]
        dump_subsets: Option<PathBuf>,
        /// distset only: candidate CSV (candidate_index, origin_path,
        /// l1_objective, tv_to_truth_if_known).
        #[arg(long)]
        dump_candidates: Option<PathBuf>,
        /// Known ground truth for the candidate dump's tv column.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Run seeded Monte Carlo trials from a key=value config file.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        /// Results CSV; overrides output_path from the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Persist truth and estimate vectors alongside the results.
        #[arg(long)]
        dump_distributions: bool,
        /// Record wall-clock runtimes (makes the CSV non-reproducible).
        #[arg(long)]
        time: bool,
    },
    /// Check the error-analysis inequalities on numeric grids.
    VerifyLemmas {
        /// Restrict to one check: a1, a2, a3, a4, b1, b2, b3.
        #[arg(long)]
        lemma: Option<String>,
        #[arg(long)]
        dense: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Dump the indistinguishable-pair instance for (eps, eta, k).
    Lowerbound {
        #[arg(long)]
        eps: f64,
        #[arg(long, default_value_t = 0.0)]
        eta: f64,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

fn exit_code_for(err: &Error) -> ExitCode {
    match err {
        Error::Io { .. } | Error::Parse { .. } => ExitCode::from(4),
        Error::EstimationFailed(_) => ExitCode::from(3),
        _ => ExitCode::from(2),
    }
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            exit_code_for(&err)
        }
    }
}

fn run(command: Command) -> Result<ExitCode, Error> {
    match command {
        Command::Simulate {
            n,
            k,
            m,
            eps,
            eta,
            adversary,
            seed,
            out,
            truth,
        } => {
            let cfg = ExperimentConfig {
                n,
                k,
                m: Some(m),
                trials: 1,
                eps,
                eta,
                adversary,
                seed,
                truth: truth
                    .map(|p| Ok::<_, Error>(read_distribution(&p)?.probs().to_vec()))
                    .transpose()?,
                ..ExperimentConfig::default()
            };
            cfg.validate()?;
            let strategy = resolve_adversary(&cfg.adversary, cfg.eta)?;
            let truth = trial_truth(&cfg, 0)?;
            let dataset = build_trial_dataset(&cfg, 0, &strategy, &truth)?;
            write_batch_file(&out, n, k, dataset.batches())?;
            write_provenance(&provenance_path(&out), dataset.provenance())?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Estimate {
            algo,
            batches,
            eps,
            eta,
            delta,
            out,
            dump_subsets,
            dump_candidates,
            truth,
        } => {
            let algorithm: Algorithm = algo.parse()?;
            let (n, k, data) = read_batch_file(&batches)?;
            let truth = truth.map(|p| read_distribution(&p)).transpose()?;
            let (estimate, degraded) = match algorithm {
                Algorithm::Empirical => (empirical_baseline(&data, n)?, false),
                Algorithm::SubsetLp => {
                    let outcome = learn_subset_lp(&data, n, k, eps, eta, delta)?;
                    if outcome.degraded {
                        log::warn!(
                            "consistency fit degraded: worst deviation {} > tolerance {}; \
                             conflicting subsets {:?}",
                            outcome.max_deviation,
                            outcome.tolerance,
                            outcome.conflicting
                        );
                    }
                    if let Some(path) = &dump_subsets {
                        let mut text =
                            String::from("subset_bitmask,estimate,feasible_i,lp_solve_ms\n");
                        for r in &outcome.subset_estimates {
                            text.push_str(&format!(
                                "{},{},{},{:.3}\n",
                                r.mask,
                                fmt_real(r.estimate),
                                r.window,
                                r.lp_solve_ms
                            ));
                        }
                        write_text(path, &text)?;
                    }
                    (outcome.estimate, outcome.degraded)
                }
                Algorithm::DistSet => {
                    let fit = learn_tensor(&data, n, k)?;
                    if let Some(path) = &dump_candidates {
                        let mut text = String::from(
                            "candidate_index,origin_path,l1_objective,tv_to_truth_if_known\n",
                        );
                        for (idx, candidate) in fit.candidates.candidates.iter().enumerate() {
                            let tv_col = match &truth {
                                Some(p) => fmt_real(batchlearn::dist::tv_distance(p, candidate)?),
                                None => String::new(),
                            };
                            text.push_str(&format!(
                                "{},{},{},{}\n",
                                idx,
                                fit.candidates.origins[idx],
                                // l1 = 2 * tv
                                fmt_real(2.0 * fit.candidate_objectives[idx]),
                                tv_col
                            ));
                        }
                        write_text(path, &text)?;
                    }
                    (fit.chosen, false)
                }
            };
            write_distribution(&out, &estimate)?;
            Ok(if degraded {
                ExitCode::from(3)
            } else {
                ExitCode::SUCCESS
            })
        }
        Command::Experiment {
            config,
            out,
            dump_distributions,
            time,
        } => {
            let cfg = ExperimentConfig::parse_file(&config)?;
            let out_path = out.or_else(|| cfg.output_path.clone()).ok_or_else(|| {
                Error::InvalidConfig("no output path: pass --out or set output_path".into())
            })?;
            let output = run_experiment(
                &cfg,
                &RunOptions {
                    dump_distributions,
                    measure_time: time,
                },
            )?;
            write_results(&output.records, &out_path)?;
            if dump_distributions {
                write_distributions(&output.distributions, &distributions_path(&out_path))?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::VerifyLemmas { lemma, dense, out } => {
            let reports: Vec<LemmaCheckReport> = match lemma.as_deref() {
                None => verify::default_suite(dense)?,
                Some("a1") => vec![verify::check_a1(dense)],
                Some("a2") => vec![verify::check_a2(dense)],
                Some("a3") => vec![verify::check_a3(dense)],
                Some("a4") => vec![verify::check_a4(dense)],
                Some("b1") => vec![verify::tensorization_upper_grid(dense)?],
                Some("b2") => vec![verify::tensorization_lower_grid(dense)?],
                Some("b3") => vec![verify::mixture_separation_grid(dense)?],
                Some(other) => {
                    return Err(Error::InvalidConfig(format!(
                        "unknown lemma id {other:?} (expected a1..a4, b1, b2, b3)"
                    )))
                }
            };
            verify::write_lemma_reports(&reports, &out)?;
            for r in &reports {
                println!(
                    "{}: grid={} worst_margin={} at {}",
                    r.lemma_id,
                    r.grid_size,
                    fmt_real(r.worst_margin),
                    r.worst_point
                );
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Lowerbound { eps, eta, k, out } => {
            let inst = lower_bound_instance(eps, eta, k)?;
            write_lowerbound(&inst, &out)?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), Error> {
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_lowerbound(
    inst: &batchlearn::adversary::LowerBoundInstance,
    path: &Path,
) -> Result<(), Error> {
    let mut text = format!(
        "# lowerbound eps={} eta={} k={}\n",
        fmt_real(inst.eps),
        fmt_real(inst.eta),
        inst.k
    );
    let mut row = |name: &str, values: &[f64]| {
        let joined: Vec<String> = values.iter().map(|&v| fmt_real(v)).collect();
        text.push_str(name);
        text.push(' ');
        text.push_str(&joined.join(" "));
        text.push('\n');
    };
    row("p", inst.p.probs());
    row("q", inst.q.probs());
    row("p_prime", inst.p_prime.probs());
    row("q_prime", inst.q_prime.probs());
    row("n_p", inst.n_p.entries());
    row("n_q", inst.n_q.entries());
    row("mixture", inst.mixture.entries());
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}
