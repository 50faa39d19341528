mod common;

use fairsched::eval::{evaluate_with, evaluation_seed, instance_seed, Histogram, Method, HISTOGRAM_BINS};
use fairsched::{evaluate, run_experiment, Assignment, ExperimentConfig, GeneratorParams, SolverConfig};
use proptest::prelude::*;

#[test]
fn violation_matches_straight_line_recount() {
    let mut r = common::rng(17);
    let inst = common::random_box_instance(&mut r, 6, 3, 2.0, 0.1);
    let x = Assignment::new(3, vec![0, 1, 2, 0, 1, 2]).unwrap();
    let rep = evaluate(&x, &inst, 1_000_000, 5).unwrap();
    let oracle = common::straight_line_violation(&x, &inst, 1_000_000, 6);
    assert!(
        (rep.violation_probability - oracle).abs() <= 0.002,
        "{} vs {oracle}",
        rep.violation_probability
    );
    assert!(rep.violation_probability > 0.0 && rep.violation_probability < 1.0);
}

#[test]
fn report_is_deterministic_and_counts_exactly() {
    let mut r = common::rng(3);
    let inst = common::random_box_instance(&mut r, 5, 2, 1.0, 0.1);
    let x = common::random_assignment(&mut r, 5, 2);
    let a = evaluate_with(&x, &inst, 3000, 42, true).unwrap();
    let b = evaluate_with(&x, &inst, 3000, 42, true).unwrap();
    assert_eq!(a, b);
    let spreads = a.spreads.samples.as_ref().unwrap();
    let over = spreads.iter().filter(|&&s| s > inst.delta).count();
    assert_eq!(a.violations, over);
    assert_eq!(a.violation_probability, over as f64 / 3000.0);
    let mean = spreads.iter().sum::<f64>() / 3000.0;
    assert!((a.spreads.mean - mean).abs() < 1e-12);
    assert_eq!(a.spreads.max, spreads.iter().copied().fold(0.0, f64::max));
}

#[test]
fn worker_means_approach_expected_loads() {
    let mut r = common::rng(23);
    let inst = common::random_box_instance(&mut r, 6, 3, 1.0, 0.1);
    let x = common::random_assignment(&mut r, 6, 3);
    let rep = evaluate(&x, &inst, 200_000, 9).unwrap();
    // the helper's boxes are not centred on mu, so uniform sampling has the midpoint mean
    let fairsched::SupportSet::Box { l, u } = &inst.support else { panic!() };
    let mid: Vec<f64> = l.iter().zip(u).map(|(a, b)| 0.5 * (a + b)).collect();
    assert!(!rep.sampling_mean_matches_mu);
    let expected = x.worker_loads(&mid);
    for (m, e) in rep.worker_time_means.iter().zip(&expected) {
        assert!((m - e).abs() < 0.02, "{m} vs {e}");
    }
}

#[test]
fn seeds_give_stable_estimates() {
    let mut r = common::rng(41);
    let inst = common::random_box_instance(&mut r, 8, 3, 2.5, 0.1);
    let x = common::random_assignment(&mut r, 8, 3);
    let a = evaluate(&x, &inst, 10_000, 1).unwrap().violation_probability;
    let b = evaluate(&x, &inst, 10_000, 2).unwrap().violation_probability;
    assert!((a - b).abs() <= 0.01, "{a} vs {b}");
}

#[test]
fn sub_streams_are_disjoint() {
    for r in 0..1000 {
        assert_ne!(instance_seed(77, r), evaluation_seed(77, r));
        assert_ne!(evaluation_seed(77, r), instance_seed(77, r + 1));
    }
}

fn tiny_experiment(reps: usize, jobs: Option<usize>) -> ExperimentConfig {
    ExperimentConfig {
        generator: GeneratorParams {
            n_tasks: 5,
            n_workers: 2,
            ..Default::default()
        },
        solver: SolverConfig::default(),
        n_replications: reps,
        n_samples: 500,
        base_seed: 9,
        jobs,
        keep_first_spreads: true,
    }
}

fn strip_time(rows: &[fairsched::eval::ReplicationRow]) -> Vec<fairsched::eval::ReplicationRow> {
    rows.iter()
        .map(|r| fairsched::eval::ReplicationRow {
            wall_time_ms: 0.0,
            ..r.clone()
        })
        .collect()
}

#[test]
fn experiment_is_reproducible_across_thread_counts() {
    let a = run_experiment(&tiny_experiment(4, Some(1))).unwrap();
    let b = run_experiment(&tiny_experiment(4, Some(3))).unwrap();
    assert_eq!(a.summary, b.summary);
    assert_eq!(strip_time(&a.rows), strip_time(&b.rows));
    assert_eq!(a.spread_samples, b.spread_samples);
}

#[test]
fn single_replication_emits_one_row_per_method() {
    let out = run_experiment(&tiny_experiment(1, None)).unwrap();
    assert_eq!(out.rows.len(), 2);
    assert_eq!(out.rows[0].method, Method::Dro);
    assert_eq!(out.rows[1].method, Method::Mean);
    assert_eq!(out.summary.failures, 0);
    assert_eq!(out.spread_samples.len(), 2);
    assert_eq!(out.spread_samples[0].spreads.len(), 500);
    let s = &out.summary;
    for m in [&s.dro, &s.mean] {
        assert_eq!(m.violation_histogram.counts.len(), HISTOGRAM_BINS);
        assert_eq!(m.violation_histogram.edges.first(), Some(&0.0));
        assert_eq!(m.violation_histogram.edges.last(), Some(&1.0));
        assert_eq!(m.reward_histogram.edges.last(), Some(&500.0));
        assert_eq!(m.violation_histogram.total(), 1);
        assert_eq!(m.reward_histogram.total(), 1);
    }
    // both methods are evaluated on the same sample stream
    let inst = fairsched::generate_instance(instance_seed(9, 0), &tiny_experiment(1, None).generator).unwrap();
    let mean = fairsched::mean_value_solve(&inst, &SolverConfig::default()).unwrap();
    let rep = evaluate(&mean.x, &inst, 500, evaluation_seed(9, 0)).unwrap();
    assert_eq!(rep.violation_probability, out.rows[1].violation_probability);
}

#[test]
fn solver_failures_are_counted_not_aggregated() {
    let mut cfg = tiny_experiment(3, None);
    cfg.generator.n_tasks = 8;
    cfg.generator.n_workers = 3;
    cfg.solver.lp.max_nodes = 1;
    let out = run_experiment(&cfg).unwrap();
    assert_eq!(out.summary.failures, 3);
    assert!(out.rows.is_empty());
    assert!(out.failures.iter().all(|f| f.message.contains("NodeLimit")));
    assert_eq!(out.summary.success_rate(), 0.0);
}

#[test]
fn csv_row_has_declared_columns() {
    let out = run_experiment(&tiny_experiment(1, None)).unwrap();
    let header: Vec<&str> = fairsched::eval::ReplicationRow::CSV_HEADER.split(',').collect();
    assert_eq!(header.len(), 7);
    assert_eq!(out.rows[0].to_csv().split(',').count(), 7);
    assert!(out.rows[0].to_csv().starts_with("0,dro,"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn violation_is_monotone_in_delta(seed in any::<u64>(), d1 in 0.0f64..6.0, d2 in 0.0f64..6.0) {
        let mut r = common::rng(seed);
        let mut inst = common::random_box_instance(&mut r, 5, 3, 0.0, 0.1);
        let x = common::random_assignment(&mut r, 5, 3);
        let (lo, hi) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
        inst.delta = lo;
        let p_lo = evaluate(&x, &inst, 400, seed).unwrap().violation_probability;
        inst.delta = hi;
        let p_hi = evaluate(&x, &inst, 400, seed).unwrap().violation_probability;
        prop_assert!(p_hi <= p_lo);
    }

    #[test]
    fn reward_does_not_depend_on_sampling(seed in any::<u64>(), s1 in any::<u64>(), s2 in any::<u64>()) {
        let mut r = common::rng(seed);
        let inst = common::random_box_instance(&mut r, 4, 2, 1.0, 0.1);
        let x = common::random_assignment(&mut r, 4, 2);
        let a = evaluate(&x, &inst, 50, s1).unwrap();
        let b = evaluate(&x, &inst, 50, s2).unwrap();
        prop_assert_eq!(a.reward, b.reward);
        prop_assert_eq!(a.reward, x.reward(&inst.rewards));
    }

    #[test]
    fn histograms_partition_their_range(values in proptest::collection::vec(0.0f64..=1.0, 0..200)) {
        let h = Histogram::new(0.0, 1.0, HISTOGRAM_BINS, values.iter().copied());
        prop_assert_eq!(h.total(), values.len());
        prop_assert_eq!(h.edges.len(), HISTOGRAM_BINS + 1);
        for w in h.edges.windows(2) {
            prop_assert!(w[1] > w[0]);
        }
    }
}
