mod common;

use common::{fd_hopfield_gradient, instances, neg_cost_derivative, precise};
use eqprop::dynamics::relax;
use eqprop::learners::{
    aep_update, dyadic_update, dyadic_update_symmetric, ep_update, vf_update, NudgeConfig,
};
use eqprop::models::fixed_ratio::{GAMMA, THETA_A, THETA_S, XI};
use eqprop::models::{FixedRatioNet, FixedRatioParams, Mask, QuadraticCost};
use eqprop::oracle::{asymmetry_strength, bptt_gradient, exact_gradient, vf_bias_for, BpttVariant};
use eqprop::{antisymmetric_part, jacobian, Gradient};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn nudge(beta: f64) -> NudgeConfig {
    NudgeConfig::new(beta, precise()).unwrap()
}

fn symmetrized(g: &Gradient, group: &str) -> DMatrix<f64> {
    let m = g.group(group);
    (m + m.transpose()) * 0.5
}

#[test]
fn oracle_matches_finite_differences_of_the_relaxed_cost() {
    for inst in instances(10, 40, 8, false) {
        let sys = inst.p.bind(&inst.u).unwrap();
        let exact = exact_gradient(&sys, &inst.cost, &inst.x0).unwrap().grads;
        let (g_in, g_dyn) = fd_hopfield_gradient(&inst);
        let fd = Gradient::new().with("j_in", g_in).with("j_dyn", g_dyn);
        assert!(exact.relative_error(&fd) < 1e-6, "{}", exact.relative_error(&fd));
    }
}

#[test]
fn fixed_ratio_oracle_matches_finite_differences() {
    for seed in 0..15u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (h, o, n_in) = (3, 2, 2);
        let n = h + o;
        let params = FixedRatioParams::init(n, 1.0, rng.random_range(0.2..0.8), seed).unwrap();
        let j_in = DMatrix::from_fn(n, n_in, |_, _| rng.random_range(-0.5..0.5));
        let rows: Vec<bool> = (0..n).map(|i| i < h).collect();
        let mut net = FixedRatioNet::new(j_in, params, Mask::dense(n), rows).unwrap();
        net.dyn_params.gamma = 1.2;
        let u = DVector::from_fn(n_in, |_, _| rng.random_range(-1.0..1.0));
        let cost = QuadraticCost::new(DVector::from_fn(o, |_, _| rng.random_range(-1.0..1.0)), h);
        let sys = net.bind(&u).unwrap();
        let x0 = relax(&sys, &DVector::zeros(n), &precise(), None).unwrap().state;
        let exact = exact_gradient(&sys, &cost, &x0).unwrap().grads;

        let cost_of = |net: &FixedRatioNet| {
            let sys = net.bind(&u).unwrap();
            cost.value(&relax(&sys, &x0, &precise(), None).unwrap().state)
        };
        let check = |group: &str, len: usize, shift: &dyn Fn(&mut FixedRatioNet, usize, f64)| {
            for k in 0..len {
                let fd = neg_cost_derivative(
                    |e| {
                        let mut q = net.clone();
                        shift(&mut q, k, e);
                        cost_of(&q)
                    },
                    1e-6,
                );
                let got = exact.group(group).as_slice()[k];
                assert!((got - fd).abs() <= 1e-6 * (1.0 + fd.abs()), "{group}[{k}]: {got} vs {fd}");
            }
        };
        let m = net.dyn_params.theta_s.len();
        check(XI, n, &|q, k, e| q.dyn_params.xi[k] += e);
        check(THETA_S, m, &|q, k, e| q.dyn_params.theta_s[k] += e);
        check(THETA_A, m, &|q, k, e| q.dyn_params.theta_a[k] += e);
        check(GAMMA, 1, &|q, _, e| q.dyn_params.gamma += e);
    }
}

#[test]
fn aep_error_is_second_order_and_dyadic_is_exact() {
    for inst in instances(200, 30, 8, false) {
        let sys = inst.p.bind(&inst.u).unwrap();
        let exact = exact_gradient(&sys, &inst.cost, &inst.x0).unwrap().grads;
        let err = |b: f64| aep_update(&sys, &inst.cost, &nudge(b), &inst.x0).unwrap().grads.relative_error(&exact);
        let (e1, e2) = (err(2e-3), err(1e-3));
        assert!((3.0..=5.0).contains(&(e1 / e2)), "ratio {}", e1 / e2);

        // The symmetric two-phase dyadic estimate has no O(beta^2) term.
        for b in [2e-3, 0.1] {
            let d = dyadic_update_symmetric(&sys, &inst.cost, &nudge(b), &inst.x0).unwrap();
            assert!(d.grads.relative_error(&exact) < 1e-8, "beta {b}");
        }
    }
}

#[test]
fn single_phase_dyadic_is_exact_at_any_beta() {
    for inst in instances(300, 20, 6, false) {
        let sys = inst.p.bind(&inst.u).unwrap();
        let exact = exact_gradient(&sys, &inst.cost, &inst.x0).unwrap().grads;
        for beta in [1e-3, 0.1, 0.5] {
            let d = dyadic_update(&sys, &inst.cost, &nudge(beta), &precise(), &inst.x_init).unwrap();
            assert!(d.grads.relative_error(&exact) < 1e-8, "beta {beta}");
        }
    }
}

#[test]
fn aep_equals_vf_for_symmetric_jacobians() {
    for inst in instances(400, 20, 8, true) {
        let sys = inst.p.bind(&inst.u).unwrap();
        assert!(antisymmetric_part(&jacobian(&sys, &inst.x0)).amax() < 1e-12);
        let n = nudge(0.3);
        let aep = aep_update(&sys, &inst.cost, &n, &inst.x0).unwrap().grads;
        let vf = vf_update(&sys, &inst.cost, &n, &inst.x0).unwrap().grads;
        assert!(aep.relative_error(&vf) < 1e-9);
    }
}

#[test]
fn conservative_nets_agree_across_all_estimators() {
    for inst in instances(500, 20, 8, true) {
        let sys = inst.p.bind(&inst.u).unwrap();
        let exact = exact_gradient(&sys, &inst.cost, &inst.x0).unwrap().grads;
        let n = nudge(1e-3);
        let bptt = bptt_gradient(&sys, &inst.cost, &inst.x0, 4000, 0.2, BpttVariant::Exact).unwrap().grads;
        let vf = vf_update(&sys, &inst.cost, &n, &inst.x0).unwrap().grads;
        let aep = aep_update(&sys, &inst.cost, &n, &inst.x0).unwrap().grads;
        let dyadic = dyadic_update(&sys, &inst.cost, &n, &precise(), &inst.x_init).unwrap().grads;
        let ep = ep_update(&sys, &inst.cost, &n, &inst.x0).unwrap().grads;
        // EP works on the symmetric parameterization: its recurrent part is
        // the symmetrized exact gradient.
        let ep_vs = Gradient::new()
            .with("j_in", exact.group("j_in").clone())
            .with("j_dyn", symmetrized(&exact, "j_dyn"));
        let all = [&exact, &bptt, &vf, &aep, &dyadic];
        for a in all {
            for b in all {
                assert!(a.relative_error(b) < 1e-5);
            }
        }
        assert!(ep.relative_error(&ep_vs) < 1e-5, "{}", ep.relative_error(&ep_vs));
    }
}

#[test]
fn estimates_mirror_parameter_shapes_and_masks() {
    for inst in instances(600, 20, 8, false) {
        let sys = inst.p.bind(&inst.u).unwrap();
        let layout = inst.p.gradient_layout();
        let n = nudge(0.2);
        for g in [
            exact_gradient(&sys, &inst.cost, &inst.x0).unwrap().grads,
            vf_update(&sys, &inst.cost, &n, &inst.x0).unwrap().grads,
            aep_update(&sys, &inst.cost, &n, &inst.x0).unwrap().grads,
            dyadic_update(&sys, &inst.cost, &n, &precise(), &inst.x_init).unwrap().grads,
        ] {
            assert!(g.same_shape(&layout));
            assert!(inst.p.mask.respects(g.group("j_dyn")));
            for (i, &ok) in inst.p.input_rows.iter().enumerate() {
                assert!(ok || g.group("j_in").row(i).iter().all(|v| *v == 0.0));
            }
        }
    }
}

#[test]
fn exact_gradient_depends_only_on_the_equilibrium() {
    for inst in instances(700, 20, 8, false) {
        let sys = inst.p.bind(&inst.u).unwrap();
        let a = exact_gradient(&sys, &inst.cost, &inst.x0).unwrap().grads;
        // Reach the same fixed point along a different path.
        let start = &inst.x0 + DVector::from_element(inst.x0.len(), 1e-3);
        let other = relax(&sys, &start, &precise(), None).unwrap().state;
        assert!((&other - &inst.x0).amax() < 1e-10);
        let b = exact_gradient(&sys, &inst.cost, &other).unwrap().grads;
        assert!(a.relative_error(&b) <= 1e-9);
    }
}

#[test]
fn vf_error_points_along_the_predicted_bias() {
    let mut tested = 0;
    for inst in instances(800, 60, 8, true) {
        // Small antisymmetric perturbation of a symmetric net.
        let mut p = inst.p.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(tested);
        let n = p.n_dyn();
        let noise = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        p.j_dyn += antisymmetric_part(&noise) * 0.05;
        p.mask.apply(&mut p.j_dyn);
        let sys = p.bind(&inst.u).unwrap();
        let x0 = relax(&sys, &inst.x0, &precise(), None).unwrap().state;
        let jac = jacobian(&sys, &x0);
        let strength = asymmetry_strength(&jac).unwrap();
        if !(1e-3..=0.1).contains(&strength) {
            continue;
        }
        tested += 1;
        let mut measured = vf_update(&sys, &inst.cost, &nudge(1e-4), &x0).unwrap().grads;
        measured.axpy(-1.0, &exact_gradient(&sys, &inst.cost, &x0).unwrap().grads);
        let predicted = vf_bias_for(&sys, &inst.cost, &x0, 0).unwrap().grads;
        assert!(predicted.cosine(&measured) > 0.99, "strength {strength}: cosine {}", predicted.cosine(&measured));
        // Higher orders converge to the measured bias.
        let deep = vf_bias_for(&sys, &inst.cost, &x0, 8).unwrap().grads;
        assert!(deep.relative_error(&measured) < 1e-3);
    }
    assert!(tested >= 10, "only {tested} instances in range");
}
