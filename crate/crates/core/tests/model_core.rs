mod common;

use fairsched::{
    build_constraint_system, generate_instance, validate_instance, Assignment, GeneratorParams, Instance, Matrix,
    ScalingPair, SupportSet,
};
use proptest::prelude::*;

fn interval_instance(mu: f64, eps: f64) -> Instance {
    Instance {
        n_tasks: 1,
        n_workers: 1,
        rewards: Matrix::filled(1, 1, 1.0),
        mu: vec![mu],
        support: SupportSet::Box {
            l: vec![0.0],
            u: vec![2.0],
        },
        delta: 1.0,
        epsilon: eps,
        fixed: Vec::new(),
        forbidden: Vec::new(),
    }
}

#[test]
fn validate_accepts_interior_mean() {
    assert!(validate_instance(&interval_instance(1.0, 0.1)).is_empty());
}

#[test]
fn validate_rejects_boundary_mean() {
    assert_eq!(validate_instance(&interval_instance(2.0, 0.1)), vec!["mu not interior".to_string()]);
}

#[test]
fn validate_rejects_epsilon_outside_unit_interval() {
    assert_eq!(validate_instance(&interval_instance(1.0, 1.2)), vec!["epsilon out of (0,1)".to_string()]);
}

#[test]
fn validate_rejects_unbounded_polytope() {
    let mut inst = interval_instance(1.0, 0.1);
    inst.support = SupportSet::Polytope {
        g: Matrix::from_rows(&[vec![1.0]]).unwrap(),
        h: vec![2.0],
    };
    assert_eq!(validate_instance(&inst), vec!["support polytope is unbounded".to_string()]);
}

#[test]
fn validate_reports_every_problem() {
    let mut inst = interval_instance(5.0, 0.0);
    inst.delta = -1.0;
    inst.forbidden = vec![(0, 0)];
    assert_eq!(validate_instance(&inst).len(), 4);
}

#[test]
fn constraint_rows_follow_index_layout() {
    let x = Assignment::new(2, vec![0]).unwrap();
    let s = ScalingPair::uniform(2, 1e-4);
    let cs = build_constraint_system(&x, &s, 5.0).unwrap();
    assert_eq!(cs.len(), 8);
    // pair (1,2) of the alpha block, then of the beta block (1-based k = 2, 6)
    assert_eq!(cs.a[1], vec![0.25]);
    assert_eq!(cs.b[1], -1.25);
    assert_eq!(cs.a[5], vec![-0.25]);
    assert_eq!(cs.b[5], -1.25);
    assert_eq!(cs.pair_of(1), (false, 0, 1));
    assert_eq!(cs.pair_of(5), (true, 0, 1));
}

#[test]
fn diagonal_rows_are_vacuous() {
    let mut r = common::rng(3);
    let x = common::random_assignment(&mut r, 5, 3);
    let s = common::random_scaling(&mut r, 3, 1e-4);
    let cs = build_constraint_system(&x, &s, 2.0).unwrap();
    for j in 0..3 {
        let k = j * 3 + j;
        assert!(cs.a[k].iter().all(|&v| v == 0.0));
        assert_eq!(cs.b[k], -s.alpha.get(j, j) * 2.0);
        assert!(cs.a[9 + k].iter().all(|&v| v == 0.0));
        assert_eq!(cs.b[9 + k], -s.beta.get(j, j) * 2.0);
    }
}

#[test]
fn constraint_system_rejects_mismatched_scaling() {
    let x = Assignment::new(3, vec![0, 1]).unwrap();
    let s = ScalingPair::uniform(2, 1e-4);
    assert!(build_constraint_system(&x, &s, 1.0).is_err());
}

#[test]
fn generator_defaults_follow_recipe() {
    let p = GeneratorParams::default();
    let inst = generate_instance(11, &p).unwrap();
    assert_eq!((inst.n_tasks, inst.n_workers, inst.delta, inst.epsilon), (20, 5, 5.0, 0.05));
    let SupportSet::Box { l, u } = &inst.support else { panic!() };
    for i in 0..20 {
        let r = inst.mu[i] - l[i];
        assert!((u[i] - inst.mu[i] - r).abs() < 1e-12, "box symmetric about mu");
        assert!(r > 0.0 && r <= 3.0 && r <= inst.mu[i]);
        assert!((0.0..=100.0).contains(&inst.mu[i]));
    }
    assert!(inst.rewards.as_slice().iter().all(|v| (0.0..=100.0).contains(v)));
}

#[test]
fn generator_is_deterministic() {
    let p = GeneratorParams::default();
    assert_eq!(generate_instance(5, &p).unwrap(), generate_instance(5, &p).unwrap());
    assert_ne!(generate_instance(5, &p).unwrap(), generate_instance(6, &p).unwrap());
}

#[test]
fn generated_means_average_near_fifty() {
    let p = GeneratorParams {
        n_tasks: 10_000,
        n_workers: 1,
        ..Default::default()
    };
    let inst = generate_instance(1, &p).unwrap();
    let mean = inst.mu.iter().sum::<f64>() / 10_000.0;
    assert!((48.0..=52.0).contains(&mean), "mean {mean}");
}

#[test]
fn generator_rejects_bad_ranges() {
    let p = GeneratorParams {
        mu_range: (5.0, 1.0),
        ..Default::default()
    };
    assert!(generate_instance(0, &p).is_err());
}

#[test]
fn assignment_matrix_round_trip() {
    let x = Assignment::new(3, vec![2, 0, 2, 1]).unwrap();
    let m = x.to_matrix();
    assert_eq!(Assignment::from_matrix(&m, 1e-9).unwrap(), x);
    for i in 0..4 {
        assert_eq!(m.row(i).iter().sum::<f64>(), 1.0);
    }
    assert!(Assignment::new(3, vec![3]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn constraint_map_matches_pairwise_differences(
        seed in any::<u64>(),
        n in 1usize..7,
        j in 1usize..5,
        delta in 0.0f64..10.0,
    ) {
        let mut r = common::rng(seed);
        let x = common::random_assignment(&mut r, n, j);
        let s = common::random_scaling(&mut r, j, 1e-6);
        let cs = build_constraint_system(&x, &s, delta).unwrap();
        let xi: Vec<f64> = (0..n).map(|_| rand::Rng::random_range(&mut r, 0.0..6.0)).collect();
        let loads = x.worker_loads(&xi);
        let fair = loads.iter().all(|a| loads.iter().all(|b| (a - b).abs() <= delta));
        prop_assert_eq!(cs.max_row(&xi) <= 0.0, fair);
    }

    #[test]
    fn box_and_polytope_membership_agree(
        seed in any::<u64>(),
        n in 1usize..6,
    ) {
        let mut r = common::rng(seed);
        let inst = common::random_box_instance(&mut r, n, 2, 1.0, 0.1);
        let (g, h) = inst.support.to_polytope();
        prop_assert_eq!(g.rows(), 2 * n);
        let poly = SupportSet::Polytope { g, h };
        for _ in 0..20 {
            let xi: Vec<f64> = (0..n).map(|_| rand::Rng::random_range(&mut r, -1.0..13.0)).collect();
            prop_assert_eq!(inst.support.contains(&xi), poly.contains(&xi));
        }
    }

    #[test]
    fn generated_instances_are_valid(seed in any::<u64>(), n in 1usize..30, j in 1usize..6) {
        let p = GeneratorParams { n_tasks: n, n_workers: j, ..Default::default() };
        let inst = generate_instance(seed, &p).unwrap();
        let SupportSet::Box { l, u } = &inst.support else { panic!() };
        for i in 0..n {
            prop_assert!(l[i] < inst.mu[i] && inst.mu[i] < u[i]);
            prop_assert!(l[i] >= 0.0);
        }
        prop_assert!(validate_instance(&inst).is_empty());
    }

    #[test]
    fn spread_is_zero_only_for_equal_loads(seed in any::<u64>(), n in 1usize..8, j in 1usize..4) {
        let mut r = common::rng(seed);
        let x = common::random_assignment(&mut r, n, j);
        let xi: Vec<f64> = (0..n).map(|_| rand::Rng::random_range(&mut r, 0.0..5.0)).collect();
        let loads = x.worker_loads(&xi);
        let s = x.spread(&xi);
        prop_assert!(s >= 0.0);
        prop_assert_eq!(s == 0.0, loads.iter().all(|&t| t == loads[0]));
    }
}
