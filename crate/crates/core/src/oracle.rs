//! Reference gradients: implicit differentiation at the fixed point,
//! backpropagation through the unrolled Euler map, and the predicted bias of
//! the vector-field estimator.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dynamics::{antisymmetric_part, jacobian, symmetric_part};
use crate::error::{check_dim, Error, Result};
use crate::gradient::{Gradient, GradientEstimate, Method, Parameterized};
use crate::models::QuadraticCost;

/// Condition numbers above this make the linear-solve oracle refuse.
pub const MAX_CONDITION: f64 = 1e12;

fn estimate(grads: Gradient, method: Method) -> GradientEstimate {
    GradientEstimate {
        grads,
        method,
        beta_used: 0.0,
        diagnostics: Vec::new(),
    }
}

fn one_norm(m: &DMatrix<f64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Solves `m w = rhs`, refusing singular or ill-conditioned systems.
fn conditioned_solve(m: &DMatrix<f64>, rhs: &DVector<f64>, what: &str) -> Result<DVector<f64>> {
    let lu = m.clone().lu();
    let inv = lu
        .try_inverse()
        .ok_or_else(|| Error::OracleUnavailable(format!("{what} is singular")))?;
    let cond = one_norm(m) * one_norm(&inv);
    if !cond.is_finite() || cond > MAX_CONDITION {
        return Err(Error::OracleUnavailable(format!(
            "{what} condition number {cond:.3e} exceeds {MAX_CONDITION:e}"
        )));
    }
    m.clone()
        .lu()
        .solve(rhs)
        .ok_or_else(|| Error::OracleUnavailable(format!("{what} is singular")))
}

/// `J_F(x̄⁰)⁻ᵀ ∇C(x̄⁰)`, the stationary adjoint.
pub fn stationary_adjoint<P: Parameterized + ?Sized>(
    system: &P,
    cost: &QuadraticCost,
    x0: &DVector<f64>,
) -> Result<DVector<f64>> {
    check_dim("free equilibrium", system.dim(), x0.len())?;
    let jac = jacobian(system, x0);
    conditioned_solve(&jac.transpose(), &cost.grad(x0), "Jacobian")
}

/// Exact `-dC/dθ = (∂F/∂θ)ᵀ J_F⁻ᵀ ∇C` at the fixed point.
pub fn exact_gradient<P: Parameterized + ?Sized>(
    system: &P,
    cost: &QuadraticCost,
    x0: &DVector<f64>,
) -> Result<GradientEstimate> {
    let w = stationary_adjoint(system, cost, x0)?;
    Ok(estimate(system.presynaptic_transpose(x0, &w), Method::Oracle))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BpttVariant {
    /// Adjoint recursion through `(I + dt J)ᵀ`.
    #[default]
    Exact,
    /// Same recursion without the transpose, which is what the
    /// vector-field estimator implicitly computes.
    VectorField,
}

/// Backpropagation through `K` Euler steps `x ↦ x + dt F(x)` held at the
/// fixed point: `λ₀ = ∇C`, `λ_t = (I + dt J)ᵀ λ_{t-1}`, and
/// `-dC/dθ ≈ -(∂F/∂θ)ᵀ dt Σ_{t<K} λ_t`. The `dt` factor makes the sum
/// tend to `-J⁻ᵀ∇C`.
pub fn bptt_gradient<P: Parameterized + ?Sized>(
    system: &P,
    cost: &QuadraticCost,
    x0: &DVector<f64>,
    steps: usize,
    dt: f64,
    variant: BpttVariant,
) -> Result<GradientEstimate> {
    check_dim("free equilibrium", system.dim(), x0.len())?;
    if steps == 0 || !(dt > 0.0) {
        return Err(Error::Config("bptt needs steps >= 1 and dt > 0".into()));
    }
    let jac = jacobian(system, x0);
    let step_map = match variant {
        BpttVariant::Exact => jac.transpose(),
        BpttVariant::VectorField => jac,
    };
    let mut lambda = cost.grad(x0);
    let initial = lambda.norm();
    let mut acc = DVector::zeros(lambda.len());
    for t in 0..steps {
        acc += &lambda;
        let next = &lambda + dt * (&step_map * &lambda);
        if !next.iter().all(|v| v.is_finite()) {
            return Err(Error::Divergence {
                step: t + 1,
                reason: "adjoint recursion overflowed".into(),
            });
        }
        lambda = next;
    }
    if initial > 0.0 && lambda.norm() >= initial {
        return Err(Error::Divergence {
            step: steps,
            reason: format!(
                "adjoint recursion does not decay ({:.3e} -> {:.3e})",
                initial,
                lambda.norm()
            ),
        });
    }
    // dt Σ λ_t tends to -J⁻ᵀ∇C, so the descent estimate uses its negative.
    let w = -dt * acc;
    Ok(estimate(system.presynaptic_transpose(x0, &w), Method::Bptt))
}

/// Largest eigenvalue modulus.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Truncated Neumann prediction of `VF - exact`:
/// `(∂F/∂θ)ᵀ [-2 Σ_{k=0}^{order} (S⁻¹A)^{2k+1} S⁻¹] ∇C`, where `S` and `A` are
/// the symmetric and antisymmetric parts of the Jacobian.
pub fn vf_bias_prediction(
    jac: &DMatrix<f64>,
    cost_grad: &DVector<f64>,
    presyn: &dyn Fn(&DVector<f64>) -> Gradient,
    order: usize,
) -> Result<GradientEstimate> {
    let n = jac.nrows();
    check_dim("jacobian columns", n, jac.ncols())?;
    check_dim("cost gradient", n, cost_grad.len())?;
    let s = symmetric_part(jac);
    let a = antisymmetric_part(jac);
    let s_lu = s.clone().lu();
    let s_inv_grad = s_lu
        .solve(cost_grad)
        .ok_or_else(|| Error::OracleUnavailable("symmetric part is singular".into()))?;
    let b = s_lu
        .solve(&a)
        .ok_or_else(|| Error::OracleUnavailable("symmetric part is singular".into()))?;
    let rho = spectral_radius(&b);
    if !(rho < 1.0) {
        return Err(Error::SeriesDivergence(rho));
    }
    let b2 = &b * &b;
    let mut term = &b * s_inv_grad;
    let mut sum = term.clone();
    for _ in 0..order {
        term = &b2 * term;
        sum += &term;
    }
    Ok(estimate(presyn(&(-2.0 * sum)), Method::Oracle))
}

/// [`vf_bias_prediction`] evaluated for a system at its fixed point.
pub fn vf_bias_for<P: Parameterized + ?Sized>(
    system: &P,
    cost: &QuadraticCost,
    x0: &DVector<f64>,
    order: usize,
) -> Result<GradientEstimate> {
    let jac = jacobian(system, x0);
    let presyn = |v: &DVector<f64>| system.presynaptic_transpose(x0, v);
    vf_bias_prediction(&jac, &cost.grad(x0), &presyn, order)
}

/// `‖S⁻¹A‖₂` of a Jacobian.
pub fn asymmetry_strength(jac: &DMatrix<f64>) -> Result<f64> {
    let s = symmetric_part(jac);
    let a = antisymmetric_part(jac);
    let b = s
        .lu()
        .solve(&a)
        .ok_or_else(|| Error::OracleUnavailable("symmetric part is singular".into()))?;
    Ok(b.singular_values().max())
}
