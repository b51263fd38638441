//! Gradient estimators built from free and nudged equilibria.
//!
//! Every estimator returns an estimate of `-dC/dθ`; training applies
//! `θ += ε * estimate`. Both nudged phases of the two-phase methods start
//! from the free equilibrium `x̄⁰`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dynamics::{antisymmetric_part, jacobian, relax, ForceField, RelaxationConfig};
use crate::error::{check_dim, Error, Result};
use crate::gradient::{EnergyModel, Gradient, GradientEstimate, Method, Parameterized, PhaseDiagnostic};
use crate::models::QuadraticCost;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NudgeConfig {
    pub beta: f64,
    pub relax_cfg: RelaxationConfig,
}

impl NudgeConfig {
    pub fn new(beta: f64, relax_cfg: RelaxationConfig) -> Result<Self> {
        let cfg = Self { beta, relax_cfg };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.beta == 0.0 || !self.beta.is_finite() {
            return Err(Error::Config(format!(
                "beta must be finite and nonzero, got {}",
                self.beta
            )));
        }
        self.relax_cfg.validate()
    }
}

fn diag(phase: &str, res: &crate::dynamics::EquilibriumResult) -> PhaseDiagnostic {
    PhaseDiagnostic {
        phase: phase.to_owned(),
        steps: res.steps_taken,
        residual: res.final_residual,
        converged: res.converged,
    }
}

/// Relaxes `F + extra_sign(β)` for `+β` and `-β` from `x0`. `correction`
/// is an extra β-independent force added in both phases.
fn nudged_pair<F: ForceField + ?Sized>(
    field: &F,
    cost: &QuadraticCost,
    nudge: &NudgeConfig,
    x0: &DVector<f64>,
    correction: Option<&(dyn Fn(&DVector<f64>, &mut DVector<f64>) + Sync)>,
) -> Result<(DVector<f64>, DVector<f64>, Vec<PhaseDiagnostic>)> {
    nudge.validate()?;
    check_dim("free equilibrium", field.dim(), x0.len())?;
    let mut out = Vec::with_capacity(2);
    let mut diags = Vec::with_capacity(2);
    for (sign, name) in [(1.0, "nudged+"), (-1.0, "nudged-")] {
        let beta = sign * nudge.beta;
        let extra = |x: &DVector<f64>, f: &mut DVector<f64>| {
            cost.add_scaled_grad(x, -beta, f);
            if let Some(c) = correction {
                c(x, f);
            }
        };
        let res = relax(field, x0, &nudge.relax_cfg, Some(&extra))?;
        diags.push(diag(name, &res));
        out.push(res.state);
    }
    let xm = out.pop().expect("two phases");
    let xp = out.pop().expect("two phases");
    Ok((xp, xm, diags))
}

/// Energy-based update `-(1/2β)(∂E/∂θ(x̄^{+β}) - ∂E/∂θ(x̄^{-β}))`.
pub fn ep_update<M: EnergyModel + ?Sized>(
    model: &M,
    cost: &QuadraticCost,
    nudge: &NudgeConfig,
    x0: &DVector<f64>,
) -> Result<GradientEstimate> {
    model.check_conservative()?;
    let (xp, xm, diagnostics) = nudged_pair(model, cost, nudge, x0, None)?;
    let mut grads = model.energy_param_grad(&xp);
    grads.axpy(-1.0, &model.energy_param_grad(&xm));
    grads.scale(-0.5 / nudge.beta);
    Ok(GradientEstimate {
        grads,
        method: Method::Ep,
        beta_used: nudge.beta,
        diagnostics,
    })
}

/// Vector-field update: `(∂F/∂θ(x̄⁰))ᵀ (x̄^{+β} - x̄^{-β}) / 2β`.
pub fn vf_update<P: Parameterized + ?Sized>(
    system: &P,
    cost: &QuadraticCost,
    nudge: &NudgeConfig,
    x0: &DVector<f64>,
) -> Result<GradientEstimate> {
    let (xp, xm, diagnostics) = nudged_pair(system, cost, nudge, x0, None)?;
    let v = (xp - xm) / (2.0 * nudge.beta);
    Ok(GradientEstimate {
        grads: system.presynaptic_transpose(x0, &v),
        method: Method::Vf,
        beta_used: nudge.beta,
        diagnostics,
    })
}

/// Asymmetric update: the nudged dynamics carry `-2 A_J (x - x̄⁰)` with
/// `A_J` the antisymmetric part of the Jacobian at `x̄⁰`, frozen for both
/// phases. The stationary response then goes through `J_Fᵀ` instead of `J_F`.
pub fn aep_update<P: Parameterized + ?Sized>(
    system: &P,
    cost: &QuadraticCost,
    nudge: &NudgeConfig,
    x0: &DVector<f64>,
) -> Result<GradientEstimate> {
    check_dim("free equilibrium", system.dim(), x0.len())?;
    let a = antisymmetric_part(&jacobian(system, x0));
    aep_update_with(system, cost, nudge, x0, &a)
}

/// [`aep_update`] with a precomputed antisymmetric part.
pub fn aep_update_with<P: Parameterized + ?Sized>(
    system: &P,
    cost: &QuadraticCost,
    nudge: &NudgeConfig,
    x0: &DVector<f64>,
    a: &DMatrix<f64>,
) -> Result<GradientEstimate> {
    let correction = |x: &DVector<f64>, f: &mut DVector<f64>| {
        let dx = x - x0;
        f.gemv(-2.0, a, &dx, 1.0);
    };
    let (xp, xm, diagnostics) = nudged_pair(system, cost, nudge, x0, Some(&correction))?;
    let v = (xp - xm) / (2.0 * nudge.beta);
    Ok(GradientEstimate {
        grads: system.presynaptic_transpose(x0, &v),
        method: Method::Aep,
        beta_used: nudge.beta,
        diagnostics,
    })
}

/// Saddle dynamics of the doubled state `(z, z')` over `2N` coordinates:
/// `dz/dt = F(m) + ½J(m)ᵀd - (β/2)∇C(m)`,
/// `dz'/dt = F(m) - ½J(m)ᵀd + (β/2)∇C(m)`, with `m = (z + z')/2`, `d = z - z'`.
pub struct DyadicSystem<'a, F: ForceField + ?Sized> {
    pub field: &'a F,
    pub cost: &'a QuadraticCost,
    pub beta: f64,
}

impl<'a, F: ForceField + ?Sized> DyadicSystem<'a, F> {
    pub fn new(field: &'a F, cost: &'a QuadraticCost, beta: f64) -> Self {
        Self { field, cost, beta }
    }

    pub fn join(z: &DVector<f64>, zp: &DVector<f64>) -> DVector<f64> {
        let n = z.len();
        DVector::from_fn(2 * n, |i, _| if i < n { z[i] } else { zp[i - n] })
    }

    pub fn split(state: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let n = state.len() / 2;
        (state.rows(0, n).clone_owned(), state.rows(n, n).clone_owned())
    }

    /// Mean and difference views of a doubled state.
    pub fn mean_diff(state: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let (z, zp) = Self::split(state);
        ((&z + &zp) * 0.5, z - zp)
    }
}

impl<F: ForceField + ?Sized> ForceField for DyadicSystem<'_, F> {
    fn dim(&self) -> usize {
        2 * self.field.dim()
    }

    fn force_into(&self, state: &DVector<f64>, out: &mut DVector<f64>) {
        let n = self.field.dim();
        let (m, d) = Self::mean_diff(state);
        let (dz, dzp) = saddle_terms(self.field, self.cost, &m, &d, self.beta);
        out.rows_mut(0, n).copy_from(&dz);
        out.rows_mut(n, n).copy_from(&dzp);
    }
}

fn saddle_terms<F: ForceField + ?Sized>(
    field: &F,
    cost: &QuadraticCost,
    m: &DVector<f64>,
    d: &DVector<f64>,
    beta: f64,
) -> (DVector<f64>, DVector<f64>) {
    let f = field.force(m);
    let back = field.jacobian_transpose_mul(m, d) * 0.5;
    let mut dz = &f + &back;
    let mut dzp = f - back;
    if beta != 0.0 {
        cost.add_scaled_grad(m, -0.5 * beta, &mut dz);
        cost.add_scaled_grad(m, 0.5 * beta, &mut dzp);
    }
    (dz, dzp)
}

/// Right-hand sides `(dz/dt, dz'/dt)` of the saddle dynamics.
pub fn dyadic_saddle_rhs<F: ForceField + ?Sized>(
    field: &F,
    z: &DVector<f64>,
    zp: &DVector<f64>,
    beta: f64,
    cost: &QuadraticCost,
) -> Result<(DVector<f64>, DVector<f64>)> {
    check_dim("z", field.dim(), z.len())?;
    check_dim("z'", field.dim(), zp.len())?;
    let m = (z + zp) * 0.5;
    let d = z - zp;
    Ok(saddle_terms(field, cost, &m, &d, beta))
}

/// Single-phase dyadic update from `z(0) = z'(0) = z0`.
///
/// The free phase relaxes `m` under `F` alone (on the diagonal `d` stays
/// zero), then the doubled system is nudged with `β` from `(x̄⁰, x̄⁰)`.
pub fn dyadic_update<P: Parameterized + ?Sized>(
    system: &P,
    cost: &QuadraticCost,
    nudge: &NudgeConfig,
    free_cfg: &RelaxationConfig,
    z0: &DVector<f64>,
) -> Result<GradientEstimate> {
    let free = relax(system, z0, free_cfg, None)?;
    let mut est = dyadic_nudged(system, cost, nudge, &free.state)?;
    est.diagnostics.insert(0, diag("free", &free));
    Ok(est)
}

/// Nudged phase of [`dyadic_update`] from a known free equilibrium.
/// Returns `(∂F/∂θ(x̄⁰))ᵀ d̄/β`.
pub fn dyadic_nudged<P: Parameterized + ?Sized>(
    system: &P,
    cost: &QuadraticCost,
    nudge: &NudgeConfig,
    x0: &DVector<f64>,
) -> Result<GradientEstimate> {
    let (d, diagnostic) = dyadic_difference(system, cost, nudge.beta, nudge, x0)?;
    Ok(GradientEstimate {
        grads: system.presynaptic_transpose(x0, &(d / nudge.beta)),
        method: Method::DyadicEp,
        beta_used: nudge.beta,
        diagnostics: vec![diagnostic],
    })
}

/// Two-phase variant, `(1/2β)[(∂F/∂θ(m̄⁺))ᵀd̄⁺ - (∂F/∂θ(m̄⁻))ᵀd̄⁻]`.
pub fn dyadic_update_symmetric<P: Parameterized + ?Sized>(
    system: &P,
    cost: &QuadraticCost,
    nudge: &NudgeConfig,
    x0: &DVector<f64>,
) -> Result<GradientEstimate> {
    let mut grads: Option<Gradient> = None;
    let mut diagnostics = Vec::with_capacity(2);
    for sign in [1.0, -1.0] {
        let beta = sign * nudge.beta;
        let sys = DyadicSystem::new(system, cost, beta);
        let res = relax(&sys, &DyadicSystem::<P>::join(x0, x0), &nudge.relax_cfg, None)?;
        let (m, d) = DyadicSystem::<P>::mean_diff(&res.state);
        let g = system.presynaptic_transpose(&m, &d);
        diagnostics.push(diag(if sign > 0.0 { "dyadic+" } else { "dyadic-" }, &res));
        match grads.as_mut() {
            None => grads = Some(g),
            Some(acc) => acc.axpy(-1.0, &g),
        }
    }
    let grads = grads.expect("two phases").scaled(0.5 / nudge.beta);
    Ok(GradientEstimate {
        grads,
        method: Method::DyadicEp,
        beta_used: nudge.beta,
        diagnostics,
    })
}

fn dyadic_difference<F: ForceField + ?Sized>(
    field: &F,
    cost: &QuadraticCost,
    beta: f64,
    nudge: &NudgeConfig,
    x0: &DVector<f64>,
) -> Result<(DVector<f64>, PhaseDiagnostic)> {
    nudge.validate()?;
    check_dim("free equilibrium", field.dim(), x0.len())?;
    let sys = DyadicSystem::new(field, cost, beta);
    let res = relax(&sys, &DyadicSystem::<F>::join(x0, x0), &nudge.relax_cfg, None)?;
    let (_, d) = DyadicSystem::<F>::mean_diff(&res.state);
    Ok((d, diag("dyadic", &res)))
}

/// Stationary difference `d̄^β` of the doubled system started at `(x̄⁰, x̄⁰)`.
pub fn dyadic_stationary_difference<F: ForceField + ?Sized>(
    field: &F,
    cost: &QuadraticCost,
    nudge: &NudgeConfig,
    x0: &DVector<f64>,
) -> Result<DVector<f64>> {
    dyadic_difference(field, cost, nudge.beta, nudge, x0).map(|(d, _)| d)
}
