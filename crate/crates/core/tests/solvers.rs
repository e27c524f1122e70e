mod common;

use common::{min_symmetric_eigenvalue, random_system, spectral_abscissa};
use proptest::prelude::*;
use sdre_core::irl::{
    collect_rollout, irl_solve, policy_evaluation, policy_improvement, quadratic_basis, rollout_start, BellmanBatch,
    ExplorationSpec, FrozenLinearPlant, IrlConfig,
};
use sdre_core::linalg::{dot, is_hurwitz};
use sdre_core::riccati::{gain_from_p, kleinman_solve_are, kleinman_solve_are_observed, KleinmanOptions};
use sdre_core::{Matrix, SymmetricMatrix};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kleinman_iterates_decrease_and_stabilize(seed in any::<u64>(), n in 1usize..=4) {
        let sys = random_system(seed, n);
        let mut iterates: Vec<(Matrix, Matrix)> = Vec::new();
        let sol = kleinman_solve_are_observed(&sys.a, &sys.b, &sys.q, &sys.r, &sys.k0, &KleinmanOptions::default(), |it| {
            iterates.push((it.gain.clone(), it.p.to_matrix()));
        })
        .unwrap();
        prop_assert!(sol.residual < 1e-9);
        for (gain, _) in &iterates {
            let a_cl = &sys.a - &(&sys.b * gain);
            prop_assert!(spectral_abscissa(&a_cl) < 0.0);
        }
        for pair in iterates.windows(2) {
            let gap = min_symmetric_eigenvalue(&(&pair[0].1 - &pair[1].1));
            prop_assert!(gap >= -1e-9, "min eig(P_i − P_i+1) = {gap:e}");
        }
    }

    #[test]
    fn converged_gain_is_a_fixed_point(seed in any::<u64>(), n in 1usize..=4) {
        let sys = random_system(seed, n);
        let options = KleinmanOptions::default();
        let sol = kleinman_solve_are(&sys.a, &sys.b, &sys.q, &sys.r, &sys.k0, &options).unwrap();
        let again = kleinman_solve_are(&sys.a, &sys.b, &sys.q, &sys.r, &sol.gain, &options).unwrap();
        prop_assert!((&again.gain - &sol.gain).norm_inf() < options.tol.max(1e-9));
        prop_assert!(again.iterations <= 2);
    }

    #[test]
    fn joint_weight_scaling_keeps_the_gain(seed in any::<u64>(), n in 1usize..=4, c in 0.1..10.0f64) {
        let sys = random_system(seed, n);
        let options = KleinmanOptions::default();
        let base = kleinman_solve_are(&sys.a, &sys.b, &sys.q, &sys.r, &sys.k0, &options).unwrap();
        let scaled = kleinman_solve_are(&sys.a, &sys.b, &sys.q.scale(c), &sys.r.scale(c), &sys.k0, &options).unwrap();
        prop_assert!((&scaled.gain - &base.gain).norm_inf() < 1e-9);
        let p_gap = (&scaled.p.to_matrix() - &base.p.to_matrix().scale(c)).max_abs();
        prop_assert!(p_gap < 1e-8 * c.max(1.0) * base.p.to_matrix().max_abs().max(1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn regressor_rows_reproduce_value_drop(
        (start, end, upper) in (1usize..=4).prop_flat_map(|n| (
            prop::collection::vec(-3.0..3.0f64, n),
            prop::collection::vec(-3.0..3.0f64, n),
            prop::collection::vec(-2.0..2.0f64, n * (n + 1) / 2),
        ))
    ) {
        let n = start.len();
        let p = SymmetricMatrix::from_vech(n, upper).unwrap();
        let pm = p.to_matrix();
        let drop = pm.quadratic_form(&start) - pm.quadratic_form(&end);
        let batch = BellmanBatch::from_intervals(&[(start.clone(), end.clone())], &[drop]).unwrap();
        let row = batch.rows.row_slice(0);
        let predicted = dot(row, p.vech());
        let scale = 1.0 + pm.max_abs() * (dot(&start, &start) + dot(&end, &end));
        prop_assert!((predicted - drop).abs() <= 1e-13 * scale);
        let direct = dot(&quadratic_basis(&start), p.vech());
        prop_assert!((direct - pm.quadratic_form(&start)).abs() <= 1e-13 * scale);
    }
}

#[test]
fn irl_matches_kleinman_on_random_systems() {
    let cfg = IrlConfig::default();
    for seed in 0..25u64 {
        let n = 1 + (seed as usize % 3);
        let sys = random_system(1000 + seed, n);
        let are = kleinman_solve_are(&sys.a, &sys.b, &sys.q, &sys.r, &sys.k0, &KleinmanOptions::default()).unwrap();
        let mut plant =
            FrozenLinearPlant::new(sys.a.clone(), sys.b.clone(), sys.q.clone(), sys.r.clone(), cfg.clone(), seed)
                .unwrap();
        let start = rollout_start(&vec![0.0; n]);
        let sol = irl_solve(&mut plant, &sys.b, &sys.q, &sys.r, &sys.k0, &start, &cfg).unwrap();
        let gap = (&sol.gain - &are.gain).norm_inf();
        assert!(gap < 1e-3, "seed {seed}, n {n}: IRL {:?} vs ARE {:?}", sol.gain, are.gain);
        assert!(is_hurwitz(&(&sys.a - &(&sys.b * &sol.gain))));
    }
}

#[test]
fn noiseless_sweep_equals_one_kleinman_sweep() {
    let cfg = IrlConfig { exploration: ExplorationSpec::silent(), tolerance: f64::INFINITY, ..Default::default() };
    for seed in 0..10u64 {
        let n = 1 + (seed as usize % 3);
        let sys = random_system(500 + seed, n);
        let one_sweep = KleinmanOptions { tol: f64::INFINITY, max_iter: 1, residual_tol: f64::INFINITY };
        let mut kleinman_p = None;
        let _ = kleinman_solve_are_observed(&sys.a, &sys.b, &sys.q, &sys.r, &sys.k0, &one_sweep, |it| {
            kleinman_p = Some(it.p.clone());
        });
        let kleinman_p = kleinman_p.unwrap();
        let plant =
            FrozenLinearPlant::new(sys.a.clone(), sys.b.clone(), sys.q.clone(), sys.r.clone(), cfg.clone(), 0).unwrap();
        let start = rollout_start(&vec![1.0; n]);
        let rollout = collect_rollout(&plant, &sys.k0, &start).unwrap();
        let p = policy_evaluation(&rollout.batch, n).unwrap();
        let gain = policy_improvement(&p, &sys.b, &sys.r).unwrap();
        let scale = kleinman_p.to_matrix().max_abs().max(1.0);
        let gap = (&p.to_matrix() - &kleinman_p.to_matrix()).max_abs();
        // trapezoid error is O(Ts²) per interval
        assert!(gap < 1e-5 * scale, "seed {seed}: P gap {gap:e}");
        let expected = gain_from_p(&sys.b, &sys.r, &kleinman_p).unwrap();
        assert!((&gain - &expected).norm_inf() < 1e-4 * expected.norm_inf().max(1.0));
    }
}

#[test]
fn identical_seeds_give_identical_rollouts() {
    let sys = random_system(7, 3);
    let cfg = IrlConfig::default();
    let plant =
        FrozenLinearPlant::new(sys.a.clone(), sys.b.clone(), sys.q.clone(), sys.r.clone(), cfg.clone(), 11).unwrap();
    let first = collect_rollout(&plant, &sys.k0, &[0.6, 0.0, -0.8]).unwrap();
    let second = collect_rollout(&plant.clone(), &sys.k0, &[0.6, 0.0, -0.8]).unwrap();
    assert_eq!(first.batch, second.batch);
    let other = FrozenLinearPlant::new(sys.a, sys.b, sys.q, sys.r, cfg, 12).unwrap();
    assert_ne!(collect_rollout(&other, &sys.k0, &[0.6, 0.0, -0.8]).unwrap().batch, first.batch);
}
