#![allow(dead_code)]

use eqprop::dynamics::{relax, RelaxationConfig};
use eqprop::models::{HopfieldParams, Mask, QuadraticCost};
use eqprop::{jacobian, ForceField};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn precise() -> RelaxationConfig {
    RelaxationConfig::precise(0.2)
}

pub struct Instance {
    pub p: HopfieldParams,
    pub u: DVector<f64>,
    pub cost: QuadraticCost,
    pub x_init: DVector<f64>,
    pub x0: DVector<f64>,
}

pub fn stability_margin<F: ForceField>(field: &F, x: &DVector<f64>) -> f64 {
    -jacobian(field, x)
        .complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::MIN, f64::max)
}

/// Random Hopfield net (`N_dyn` in `3..=max_n`) with a well-separated stable
/// free equilibrium, or `None` for seeds that do not give one.
pub fn instance(seed: u64, max_n: usize, symmetric: bool) -> Option<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(3..=max_n);
    let layered = rng.random_bool(0.5);
    let outputs = if layered { rng.random_range(1..n.min(4)) } else { 2 };
    let (mask, rows) = if layered {
        (Mask::layered(n - outputs, outputs), (0..n).map(|i| i < n - outputs).collect())
    } else {
        (Mask::no_self(n), vec![true; n])
    };
    let mut p = HopfieldParams::random(2, mask, rows, 1.0 / n as f64, &mut rng).ok()?;
    if symmetric {
        p.symmetrize().ok()?;
    }
    let u = DVector::from_fn(2, |_, _| rng.random_range(-1.0..1.0));
    let cost = QuadraticCost::new(DVector::from_fn(outputs, |_, _| rng.random_range(-1.0..1.0)), n - outputs);
    let x_init = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
    let sys = p.bind(&u).ok()?;
    let res = relax(&sys, &x_init, &precise(), None).ok()?;
    if !res.converged || stability_margin(&sys, &res.state) < 0.1 {
        return None;
    }
    let x0 = res.state;
    Some(Instance { p, u, cost, x_init, x0 })
}

/// `count` instances from consecutive seeds starting at `base`.
pub fn instances(base: u64, count: usize, max_n: usize, symmetric: bool) -> Vec<Instance> {
    (base..).filter_map(|s| instance(s, max_n, symmetric)).take(count).collect()
}

/// Central difference of `-C(x̄⁰(θ))` for one scalar parameter, where
/// `eval(h)` returns the cost with that parameter shifted by `h`.
pub fn neg_cost_derivative(eval: impl Fn(f64) -> f64, h: f64) -> f64 {
    -(eval(h) - eval(-h)) / (2.0 * h)
}

/// Hopfield `-dC/dθ` by central differences of the relaxed cost.
pub fn fd_hopfield_gradient(inst: &Instance) -> (DMatrix<f64>, DMatrix<f64>) {
    let h = 1e-5;
    let cost_with = |p: &HopfieldParams| {
        let sys = p.bind(&inst.u).unwrap();
        let x = relax(&sys, &inst.x0, &precise(), None).unwrap().state;
        inst.cost.value(&x)
    };
    let n = inst.p.n_dyn();
    let mut g_in = DMatrix::zeros(n, inst.p.n_in());
    let mut g_dyn = DMatrix::zeros(n, n);
    for i in 0..n {
        for k in 0..inst.p.n_in() {
            if inst.p.input_rows[i] {
                g_in[(i, k)] = neg_cost_derivative(
                    |e| {
                        let mut q = inst.p.clone();
                        q.j_in[(i, k)] += e;
                        cost_with(&q)
                    },
                    h,
                );
            }
        }
        for j in 0..n {
            if inst.p.mask.allows(i, j) {
                g_dyn[(i, j)] = neg_cost_derivative(
                    |e| {
                        let mut q = inst.p.clone();
                        q.j_dyn[(i, j)] += e;
                        cost_with(&q)
                    },
                    h,
                );
            }
        }
    }
    (g_in, g_dyn)
}
