//! Doubled-state energy of the Hopfield model, whose saddle dynamics
//! (descent in `z`, ascent in `z'`) collapse to the Hopfield force on the
//! diagonal `z = z'`.

use nalgebra::DVector;

use super::cost::QuadraticCost;
use super::hopfield::HopfieldParams;
use crate::dynamics::{antisymmetric_part, symmetric_part};
use crate::error::{check_dim, Result};

/// `H(z, z') = -½ρ(z)ᵀSρ(z) + ½ρ(z')ᵀSρ(z') - ρ(z)ᵀAρ(z') - ρ(z)ᵀb + ρ(z')ᵀb
///  + ½(‖z‖² - ‖z'‖²) + (β/2)(C(z) + C(z'))`, with `S`, `A` the symmetric and
/// antisymmetric parts of `J_dyn` and `b = J_in u`.
pub fn hopfield_dyadic_energy(
    params: &HopfieldParams,
    input: &DVector<f64>,
    z: &DVector<f64>,
    zp: &DVector<f64>,
    beta: f64,
    cost: &QuadraticCost,
) -> Result<f64> {
    check_dim("z", params.n_dyn(), z.len())?;
    check_dim("z'", params.n_dyn(), zp.len())?;
    let b = params.input_bias(input)?;
    let s = symmetric_part(&params.j_dyn);
    let a = antisymmetric_part(&params.j_dyn);
    let act = params.activation;
    let r = z.map(|v| act.rho(v));
    let rp = zp.map(|v| act.rho(v));
    let h = -0.5 * r.dot(&(&s * &r)) + 0.5 * rp.dot(&(&s * &rp)) - r.dot(&(&a * &rp))
        - r.dot(&b)
        + rp.dot(&b)
        + 0.5 * (z.norm_squared() - zp.norm_squared())
        + 0.5 * beta * (cost.value(z) + cost.value(zp));
    Ok(h)
}

/// `(dz/dt, dz'/dt) = (-∂H/∂z, +∂H/∂z')`:
/// `dz/dt = ρ'(z)⊙(Sρ(z) + Aρ(z') + b) - z - (β/2)∂C/∂z`,
/// `dz'/dt = ρ'(z')⊙(Sρ(z') + Aρ(z) + b) - z' + (β/2)∂C/∂z'`.
pub fn hopfield_dyadic_dynamics(
    params: &HopfieldParams,
    input: &DVector<f64>,
    z: &DVector<f64>,
    zp: &DVector<f64>,
    beta: f64,
    cost: &QuadraticCost,
) -> Result<(DVector<f64>, DVector<f64>)> {
    check_dim("z", params.n_dyn(), z.len())?;
    check_dim("z'", params.n_dyn(), zp.len())?;
    let b = params.input_bias(input)?;
    let s = symmetric_part(&params.j_dyn);
    let a = antisymmetric_part(&params.j_dyn);
    let act = params.activation;
    let r = z.map(|v| act.rho(v));
    let rp = zp.map(|v| act.rho(v));
    let mut dz = &s * &r + &a * &rp + &b;
    let mut dzp = &s * &rp + &a * &r + &b;
    for i in 0..z.len() {
        dz[i] = act.rho_prime(z[i]) * dz[i] - z[i];
        dzp[i] = act.rho_prime(zp[i]) * dzp[i] - zp[i];
    }
    cost.add_scaled_grad(z, -0.5 * beta, &mut dz);
    cost.add_scaled_grad(zp, 0.5 * beta, &mut dzp);
    Ok((dz, dzp))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::hopfield::hopfield_force;
    use crate::models::topology::Mask;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup(seed: u64) -> (HopfieldParams, DVector<f64>, QuadraticCost) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = HopfieldParams::random(3, Mask::dense(6), vec![true; 6], 0.4, &mut rng).unwrap();
        let u = DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0));
        let cost = QuadraticCost::signed_one_hot(seed as usize % 2, 2, 4);
        (p, u, cost)
    }

    #[test]
    fn vanishes_on_the_diagonal_without_nudging() {
        let (p, u, cost) = setup(1);
        let z = DVector::from_fn(6, |i, _| 0.3 * i as f64 - 0.6);
        let h = hopfield_dyadic_energy(&p, &u, &z, &z, 0.0, &cost).unwrap();
        assert!(h.abs() < 1e-14);
    }

    #[test]
    fn dynamics_are_the_saddle_gradients() {
        for seed in 0..100 {
            let (p, u, cost) = setup(seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 1000);
            let z = DVector::from_fn(6, |_, _| rng.random_range(-1.0..1.0));
            let zp = DVector::from_fn(6, |_, _| rng.random_range(-1.0..1.0));
            let beta = 0.7;
            let (dz, dzp) = hopfield_dyadic_dynamics(&p, &u, &z, &zp, beta, &cost).unwrap();
            let h = 1e-5;
            for k in 0..6 {
                let e = |z: &DVector<f64>, zp: &DVector<f64>| {
                    hopfield_dyadic_energy(&p, &u, z, zp, beta, &cost).unwrap()
                };
                let mut a = z.clone();
                let mut b = z.clone();
                a[k] += h;
                b[k] -= h;
                let g = (e(&a, &zp) - e(&b, &zp)) / (2.0 * h);
                assert!((dz[k] + g).abs() < 1e-6 * (1.0 + g.abs()));
                let mut a = zp.clone();
                let mut b = zp.clone();
                a[k] += h;
                b[k] -= h;
                let g = (e(&z, &a) - e(&z, &b)) / (2.0 * h);
                assert!((dzp[k] - g).abs() < 1e-6 * (1.0 + g.abs()));
            }
        }
    }

    #[test]
    fn diagonal_recovers_hopfield_force() {
        let (p, u, cost) = setup(4);
        let z = DVector::from_fn(6, |i, _| (i as f64).cos() * 0.5);
        let (dz, dzp) = hopfield_dyadic_dynamics(&p, &u, &z, &z, 0.0, &cost).unwrap();
        let f = hopfield_force(&p, &u, &z).unwrap();
        assert!((&dz - &f).amax() < 1e-14);
        assert!((&dzp - &f).amax() < 1e-14);
    }
}
