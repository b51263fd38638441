mod common;

use common::{instance, precise};
use eqprop::data::{normalize_minmax, signed_one_hot};
use eqprop::dynamics::{finite_difference_jacobian, relax, RelaxationConfig};
use eqprop::learners::{ep_update, NudgeConfig};
use eqprop::models::cost::predict;
use eqprop::models::feedforward::FeedforwardParams;
use eqprop::models::metrics::r_str_metric;
use eqprop::models::{FixedRatioParams, HopfieldParams, Mask, QuadraticCost};
use eqprop::{antisymmetric_part, jacobian, symmetric_part, ForceField};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_state(n: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(-1.5..1.5))
}

fn hopfield(seed: u64, n: usize, symmetric: bool) -> (HopfieldParams, DVector<f64>, ChaCha8Rng) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = HopfieldParams::random(3, Mask::no_self(n), vec![true; n], 1.0 / n as f64, &mut rng).unwrap();
    if symmetric {
        p.symmetrize().unwrap();
    }
    let u = DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0));
    (p, u, rng)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn relaxing_from_a_fixed_point_stays_there(seed in 0u64..10_000) {
        if let Some(inst) = instance(seed, 8, false) {
            let sys = inst.p.bind(&inst.u).unwrap();
            let again = relax(&sys, &inst.x0, &RelaxationConfig::fixed_steps(0.2, 200), None).unwrap();
            prop_assert!((&again.state - &inst.x0).amax() < 1e-10);
        }
    }

    #[test]
    fn converged_relaxations_meet_the_tolerance(seed in 0u64..10_000, tol in 1e-10f64..1e-4) {
        let (p, u, mut rng) = hopfield(seed, 6, false);
        let sys = p.bind(&u).unwrap();
        let cfg = RelaxationConfig::tolerance(0.2, tol, 5000);
        let res = relax(&sys, &random_state(6, &mut rng), &cfg, None).unwrap();
        if res.converged {
            prop_assert!(sys.force(&res.state).amax() <= tol);
            prop_assert_eq!(res.final_residual, sys.force(&res.state).amax());
        }
    }

    #[test]
    fn jacobian_splits_into_symmetric_and_antisymmetric_parts(seed in 0u64..10_000) {
        let (p, u, mut rng) = hopfield(seed, 7, false);
        let sys = p.bind(&u).unwrap();
        let j = jacobian(&sys, &random_state(7, &mut rng));
        let (s, a) = (symmetric_part(&j), antisymmetric_part(&j));
        prop_assert!((&s + &a - &j).amax() < 1e-14);
        prop_assert!((&s - s.transpose()).amax() == 0.0);
        prop_assert!((&a + a.transpose()).amax() == 0.0);
    }

    #[test]
    fn analytic_jacobian_matches_central_differences(seed in 0u64..10_000) {
        let (p, u, mut rng) = hopfield(seed, 6, false);
        let sys = p.bind(&u).unwrap();
        let x = random_state(6, &mut rng);
        let exact = sys.analytic_jacobian(&x).unwrap();
        let e1 = (finite_difference_jacobian(&sys, &x, 2e-3) - &exact).amax();
        let e2 = (finite_difference_jacobian(&sys, &x, 1e-3) - &exact).amax();
        prop_assert!(e2 < 1e-5);
        if e2 > 1e-11 {
            prop_assert!((3.0..=5.0).contains(&(e1 / e2)), "ratio {}", e1 / e2);
        }
    }

    #[test]
    fn masked_entries_stay_zero_after_updates(seed in 0u64..10_000, lr in 0.01f64..1.0) {
        if let Some(mut inst) = instance(seed, 8, false) {
            let sys = inst.p.bind(&inst.u).unwrap();
            let n = NudgeConfig::new(0.5, precise()).unwrap();
            let g = eqprop::vf_update(&sys, &inst.cost, &n, &inst.x0).unwrap().grads;
            let mut noisy = g.clone();
            noisy.axpy(1.0, &g);
            inst.p.apply_update(&noisy, lr, lr);
            prop_assert!(inst.p.masks_respected());
        }
    }

    #[test]
    fn fixed_ratio_assembly_hits_its_targets(seed in 0u64..10_000, r in 0.0f64..=1.0, gamma in 0.5f64..10.0) {
        let n = 7;
        let mask = Mask::layered(5, 2);
        let mut p = FixedRatioParams::init(n, 1.0, r, seed).unwrap();
        p.gamma = gamma;
        p.apply_mask(&mask).unwrap();
        let j = p.assemble().unwrap();
        prop_assert!(mask.respects(&j));
        prop_assert!((j.norm() - gamma).abs() < 1e-10 * gamma);
        prop_assert!((r_str_metric(&j).unwrap() - r).abs() < 1e-10);
    }

    #[test]
    fn hopfield_force_is_minus_energy_gradient(seed in 0u64..10_000) {
        let (p, u, mut rng) = hopfield(seed, 6, true);
        let sys = p.bind(&u).unwrap();
        let x = random_state(6, &mut rng);
        let f = sys.force(&x);
        let h = 1e-5;
        for i in 0..6 {
            let mut a = x.clone();
            let mut b = x.clone();
            a[i] += h;
            b[i] -= h;
            let de = (sys.energy(&a).unwrap() - sys.energy(&b).unwrap()) / (2.0 * h);
            prop_assert!((f[i] + de).abs() < 1e-8, "unit {i}: {} vs {}", f[i], -de);
        }
    }

    #[test]
    fn energy_never_increases_along_small_euler_steps(seed in 0u64..10_000) {
        let (p, u, mut rng) = hopfield(seed, 6, true);
        let sys = p.bind(&u).unwrap();
        let mut x = random_state(6, &mut rng);
        let mut e = sys.energy(&x).unwrap();
        for _ in 0..200 {
            x += sys.force(&x) * 0.05;
            let next = sys.energy(&x).unwrap();
            prop_assert!(next <= e + 1e-12);
            e = next;
        }
    }

    #[test]
    fn symmetric_ep_keeps_the_weights_symmetric(seed in 0u64..10_000, beta in 0.01f64..1.0) {
        if let Some(mut inst) = instance(seed, 8, true) {
            let sys = inst.p.bind(&inst.u).unwrap();
            let n = NudgeConfig::new(beta, precise()).unwrap();
            let g = ep_update(&sys, &inst.cost, &n, &inst.x0).unwrap().grads;
            inst.p.apply_update(&g, 0.1, 0.1);
            prop_assert!(inst.p.is_symmetric());
            prop_assert_eq!(r_str_metric(&inst.p.j_dyn).unwrap(), 0.0);
        }
    }

    #[test]
    fn feedforward_nets_have_lower_block_triangular_weights(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (h, o) = (rng.random_range(1..6), rng.random_range(1..4));
        let ff = FeedforwardParams::new(
            DMatrix::from_fn(h, 3, |_, _| rng.random_range(-1.0..1.0)),
            DMatrix::from_fn(o, h, |_, _| rng.random_range(-1.0..1.0)),
        )
        .unwrap();
        let p = ff.to_hopfield();
        for i in 0..h + o {
            for j in 0..h + o {
                let allowed = i >= h && j < h;
                prop_assert!(allowed || p.j_dyn[(i, j)] == 0.0);
            }
        }
        prop_assert_eq!(FeedforwardParams::from_hopfield(&p, h).unwrap(), ff);
    }

    #[test]
    fn cost_gradient_vanishes_off_the_outputs(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (start, outputs) = (rng.random_range(0..6), rng.random_range(1..5));
        let cost = QuadraticCost::new(DVector::from_fn(outputs, |_, _| rng.random_range(-1.0..1.0)), start);
        let x = random_state(start + outputs, &mut rng);
        let g = cost.grad(&x);
        for i in 0..start {
            prop_assert_eq!(g[i], 0.0);
        }
        for k in 0..outputs {
            prop_assert!((g[start + k] - (x[start + k] - cost.target[k])).abs() < 1e-15);
        }
    }

    #[test]
    fn one_hot_targets_round_trip_through_argmax(label in 0usize..10) {
        let t = signed_one_hot(label, 10);
        prop_assert_eq!(t.iter().filter(|v| **v == 1.0).count(), 1);
        prop_assert_eq!(t.iter().filter(|v| **v == -1.0).count(), 9);
        prop_assert_eq!(predict(&t, 0, 10), label);
    }

    #[test]
    fn normalization_is_monotone_in_range(a in any::<u8>(), b in any::<u8>()) {
        let (x, y) = (normalize_minmax(a), normalize_minmax(b));
        prop_assert!((-1.0..=1.0).contains(&x));
        prop_assert_eq!(a.cmp(&b), x.partial_cmp(&y).unwrap());
    }
}

#[test]
fn normalization_endpoints() {
    assert_eq!(normalize_minmax(0), -1.0);
    assert_eq!(normalize_minmax(255), 1.0);
}
