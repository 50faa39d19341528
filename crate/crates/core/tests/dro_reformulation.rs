mod common;

use fairsched::dro::{
    oracle_worst_case_cvar, oracle_worst_case_expectation, worst_case_cvar, worst_case_cvar_with,
    worst_case_expectation, AffinePiece, CvarOptions, PiecewiseAffineLoss, TauGrid,
};
use fairsched::{build_constraint_system, Assignment, Instance, Matrix, ScalingPair, SupportSet};
use proptest::prelude::*;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

fn interval() -> SupportSet {
    SupportSet::Box {
        l: vec![0.0],
        u: vec![2.0],
    }
}

fn piece(c: &[f64], d: f64) -> AffinePiece {
    AffinePiece { c: c.to_vec(), d }
}

fn random_loss(r: &mut ChaCha8Rng, n: usize) -> PiecewiseAffineLoss {
    let k = r.random_range(1..5);
    PiecewiseAffineLoss::new(
        (0..k)
            .map(|_| {
                let c: Vec<f64> = (0..n).map(|_| r.random_range(-3.0..3.0)).collect();
                piece(&c, r.random_range(-5.0..5.0))
            })
            .collect(),
    )
    .unwrap()
}

fn one_task_two_workers(eps: f64) -> Instance {
    Instance {
        n_tasks: 1,
        n_workers: 2,
        rewards: Matrix::filled(1, 2, 1.0),
        mu: vec![1.0],
        support: interval(),
        delta: 5.0,
        epsilon: eps,
        fixed: Vec::new(),
        forbidden: Vec::new(),
    }
}

#[test]
fn linear_loss_is_pinned_by_mean() {
    let loss = PiecewiseAffineLoss::new(vec![piece(&[1.0], 0.0)]).unwrap();
    let (v, _) = worst_case_expectation(&loss, &[1.0], &interval()).unwrap();
    assert!((v - 1.0).abs() < 1e-9);
}

#[test]
fn absolute_deviation_puts_half_mass_on_each_end() {
    let loss = PiecewiseAffineLoss::new(vec![piece(&[1.0], -1.0), piece(&[-1.0], 1.0)]).unwrap();
    let (v, _) = worst_case_expectation(&loss, &[1.0], &interval()).unwrap();
    assert!((v - 1.0).abs() < 1e-9);
    let o = oracle_worst_case_expectation(&loss, &[1.0], &interval()).unwrap();
    assert!((o - 1.0).abs() < 1e-9);
}

#[test]
fn constant_loss_is_its_constant() {
    let loss = PiecewiseAffineLoss::new(vec![piece(&[0.0, 0.0], 3.5)]).unwrap();
    let support = SupportSet::Box {
        l: vec![-1.0, 2.0],
        u: vec![4.0, 3.0],
    };
    let (v, _) = worst_case_expectation(&loss, &[0.5, 2.2], &support).unwrap();
    assert!((v - 3.5).abs() < 1e-9);
}

#[test]
fn oracle_of_sum_is_sum_of_means() {
    let loss = PiecewiseAffineLoss::new(vec![piece(&[1.0, 1.0], 0.0)]).unwrap();
    let support = SupportSet::Box {
        l: vec![0.0, -2.0],
        u: vec![3.0, 1.0],
    };
    let o = oracle_worst_case_expectation(&loss, &[1.2, -0.4], &support).unwrap();
    assert!((o - 0.8).abs() < 1e-9);
}

#[test]
fn oracle_refuses_large_dimension() {
    let n = 13;
    let loss = PiecewiseAffineLoss::new(vec![piece(&vec![1.0; n], 0.0)]).unwrap();
    let support = SupportSet::Box {
        l: vec![0.0; n],
        u: vec![1.0; n],
    };
    assert!(oracle_worst_case_expectation(&loss, &vec![0.5; n], &support).is_err());
}

#[test]
fn single_worker_cvar_is_negative() {
    let mut inst = one_task_two_workers(0.1);
    inst.n_workers = 1;
    inst.rewards = Matrix::filled(1, 1, 1.0);
    let x = Assignment::new(1, vec![0]).unwrap();
    let (v, _) = worst_case_cvar(&x, &ScalingPair::uniform(1, 1e-4), &inst).unwrap();
    assert!((v - -5.0).abs() < 1e-9, "value {v}");
}

#[test]
fn single_task_cvar_matches_tau_search() {
    let inst = one_task_two_workers(0.5);
    let x = Assignment::new(2, vec![0]).unwrap();
    let s = ScalingPair::uniform(2, 1e-4);
    let (v, cert) = worst_case_cvar(&x, &s, &inst).unwrap();
    assert!((v - -0.75).abs() < 1e-9, "value {v}");
    let grid = TauGrid {
        lo: -10.0,
        hi: 10.0,
        step: 1e-4,
    };
    let o = oracle_worst_case_cvar(&x.to_matrix(), &s, &inst, Some(grid)).unwrap();
    assert!((o - -0.75).abs() < 1e-6, "oracle {o}");
    let cs = build_constraint_system(&x, &s, inst.delta).unwrap();
    assert!(cert.max_residual(&cs, &inst) <= 1e-7);
}

#[test]
fn cvar_doubles_with_scaling() {
    let mut r = common::rng(4);
    let inst = common::random_box_instance(&mut r, 4, 3, 1.5, 0.2);
    let x = common::random_assignment(&mut r, 4, 3);
    let s = common::random_scaling(&mut r, 3, 1e-4);
    let (v1, _) = worst_case_cvar(&x, &s, &inst).unwrap();
    let (v2, _) = worst_case_cvar(&x, &s.scaled(2.0), &inst).unwrap();
    assert!((v2 - 2.0 * v1).abs() <= 1e-7 * (1.0 + v1.abs()), "{v1} {v2}");
}

#[test]
fn cvar_near_one_approaches_worst_case_expectation() {
    let mut r = common::rng(8);
    let inst = common::random_box_instance(&mut r, 3, 2, 1.0, 0.999);
    let x = common::random_assignment(&mut r, 3, 2);
    let s = ScalingPair::uniform(2, 1e-4);
    let (cvar, _) = worst_case_cvar(&x, &s, &inst).unwrap();
    let cs = build_constraint_system(&x, &s, inst.delta).unwrap();
    let hull = PiecewiseAffineLoss::new(cs.a.iter().zip(&cs.b).map(|(a, &b)| piece(a, b)).collect()).unwrap();
    let wce = oracle_worst_case_expectation(&hull, &inst.mu, &inst.support).unwrap();
    assert!(cvar >= wce - 1e-9);
    assert!(cvar - wce <= 1e-2, "cvar {cvar} expectation {wce}");
}

#[test]
fn polytope_support_uses_generic_path() {
    let mut r = common::rng(12);
    let inst = common::random_box_instance(&mut r, 3, 2, 1.0, 0.1);
    let x = common::random_assignment(&mut r, 3, 2);
    let s = common::random_scaling(&mut r, 2, 1e-4);
    let (g, h) = inst.support.to_polytope();
    let poly = Instance {
        support: SupportSet::Polytope { g, h },
        ..inst.clone()
    };
    let (a, _) = worst_case_cvar(&x, &s, &inst).unwrap();
    let (b, _) = worst_case_cvar(&x, &s, &poly).unwrap();
    assert!((a - b).abs() <= 1e-7);
}

fn small_case(seed: u64) -> (Instance, Assignment, ScalingPair) {
    let mut r = common::rng(seed);
    let n = r.random_range(1..5);
    let j = r.random_range(1..4);
    let delta = r.random_range(0.0..4.0);
    let eps = r.random_range(0.02..0.6);
    let inst = common::random_box_instance(&mut r, n, j, delta, eps);
    let x = common::random_assignment(&mut r, n, j);
    let s = common::random_scaling(&mut r, j, 1e-4);
    (inst, x, s)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn expectation_dual_matches_vertex_oracle(seed in any::<u64>(), n in 1usize..5) {
        let mut r = common::rng(seed);
        let inst = common::random_box_instance(&mut r, n, 1, 1.0, 0.1);
        let loss = random_loss(&mut r, n);
        let (v, cert) = worst_case_expectation(&loss, &inst.mu, &inst.support).unwrap();
        let o = oracle_worst_case_expectation(&loss, &inst.mu, &inst.support).unwrap();
        prop_assert!((v - o).abs() <= 1e-6, "{} vs {}", v, o);
        prop_assert!(v >= loss.eval(&inst.mu) - 1e-9);
        prop_assert!(cert.eta.iter().flatten().all(|&e| e >= -1e-9));
    }

    #[test]
    fn cvar_matches_tau_grid_oracle(seed in any::<u64>()) {
        let (inst, x, s) = small_case(seed);
        let (v, cert) = worst_case_cvar(&x, &s, &inst).unwrap();
        let o = oracle_worst_case_cvar(&x.to_matrix(), &s, &inst, None).unwrap();
        prop_assert!((v - o).abs() <= 1e-3, "{} vs {}", v, o);
        prop_assert!(o >= v - 1e-7, "grid value below the infimum");
        let cs = build_constraint_system(&x, &s, inst.delta).unwrap();
        prop_assert!(cert.max_residual(&cs, &inst) <= 1e-7);
    }

    #[test]
    fn box_and_generic_builds_agree(seed in any::<u64>()) {
        let (inst, x, s) = small_case(seed);
        let m = x.to_matrix();
        let (a, _) = worst_case_cvar_with(&m, &s, &inst, CvarOptions { force_generic: false }).unwrap();
        let (b, _) = worst_case_cvar_with(&m, &s, &inst, CvarOptions { force_generic: true }).unwrap();
        prop_assert!((a - b).abs() <= 1e-7, "{} vs {}", a, b);
    }

    #[test]
    fn cvar_is_nonincreasing_in_epsilon(seed in any::<u64>(), e1 in 0.01f64..0.99, e2 in 0.01f64..0.99) {
        let (mut inst, x, s) = small_case(seed);
        let (lo, hi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
        inst.epsilon = lo;
        let (v_lo, _) = worst_case_cvar(&x, &s, &inst).unwrap();
        inst.epsilon = hi;
        let (v_hi, _) = worst_case_cvar(&x, &s, &inst).unwrap();
        prop_assert!(v_hi <= v_lo + 1e-7, "eps {} -> {}, eps {} -> {}", lo, v_lo, hi, v_hi);
    }

    #[test]
    fn cvar_is_positively_homogeneous(seed in any::<u64>()) {
        let (inst, x, s) = small_case(seed);
        let (v1, _) = worst_case_cvar(&x, &s, &inst).unwrap();
        let (v2, _) = worst_case_cvar(&x, &s.scaled(2.0), &inst).unwrap();
        prop_assert!((v2 - 2.0 * v1).abs() <= 1e-7 * (1.0 + v1.abs()));
    }
}
