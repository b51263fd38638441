//! Relaxation of force fields to stationary states.
//!
//! A [`ForceField`] is a force `F(x)` with the parameters and the input
//! already bound. [`relax`] integrates `dx/dt = F(x) + extra(x)` with explicit
//! Euler steps; the optional extra term carries nudging and correction forces
//! of the learning phases.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Central finite-difference step for numerical Jacobians.
pub const FD_STEP: f64 = 1e-5;

/// Any state entry with a larger magnitude aborts the relaxation.
pub const DIVERGENCE_BOUND: f64 = 1e6;

/// A differentiable vector field over a fixed-dimension state space.
pub trait ForceField {
    fn dim(&self) -> usize;

    /// Writes `F(x)` into `out`. Both have length [`ForceField::dim`].
    fn force_into(&self, x: &DVector<f64>, out: &mut DVector<f64>);

    fn force(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim());
        self.force_into(x, &mut out);
        out
    }

    /// `dF_i/dx_j`, when the field knows it in closed form.
    fn analytic_jacobian(&self, _x: &DVector<f64>) -> Option<DMatrix<f64>> {
        None
    }

    /// `J_F(x)^T v`.
    fn jacobian_transpose_mul(&self, x: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        jacobian(self, x).tr_mul(v)
    }
}

impl<T: ForceField + ?Sized> ForceField for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn force_into(&self, x: &DVector<f64>, out: &mut DVector<f64>) {
        (**self).force_into(x, out)
    }
    fn analytic_jacobian(&self, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        (**self).analytic_jacobian(x)
    }
    fn jacobian_transpose_mul(&self, x: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        (**self).jacobian_transpose_mul(x, v)
    }
}

/// When a relaxation is allowed to stop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopMode {
    /// Always take exactly `max_steps` steps.
    FixedSteps,
    /// Stop once `‖F‖∞ <= residual_tol`; `max_steps` is a hard cap.
    Tolerance,
    /// Stop at the tolerance or the step budget, whichever comes first.
    /// A zero tolerance makes this identical to `FixedSteps`.
    WhicheverFirst,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelaxationConfig {
    pub dt: f64,
    pub max_steps: usize,
    pub residual_tol: f64,
    pub mode: StopMode,
    /// Refine the Euler end point with Newton iterations on the total field.
    #[serde(default)]
    pub newton_polish: bool,
}

impl RelaxationConfig {
    pub fn fixed_steps(dt: f64, steps: usize) -> Self {
        Self {
            dt,
            max_steps: steps,
            residual_tol: 0.0,
            mode: StopMode::FixedSteps,
            newton_polish: false,
        }
    }

    pub fn tolerance(dt: f64, residual_tol: f64, max_steps: usize) -> Self {
        Self {
            dt,
            max_steps,
            residual_tol,
            mode: StopMode::Tolerance,
            newton_polish: false,
        }
    }

    /// Tolerance-mode relaxation followed by Newton refinement, for oracles and
    /// tests that need equilibria accurate to near machine precision.
    pub fn precise(dt: f64) -> Self {
        Self {
            newton_polish: true,
            ..Self::tolerance(dt, 1e-12, 200_000)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if self.max_steps < 1 {
            return Err(Error::Config("max_steps must be at least 1".into()));
        }
        if !(self.residual_tol >= 0.0) {
            return Err(Error::Config(format!(
                "residual_tol must be non-negative, got {}",
                self.residual_tol
            )));
        }
        if self.mode == StopMode::Tolerance && self.residual_tol == 0.0 {
            return Err(Error::Config(
                "tolerance mode needs a positive residual_tol".into(),
            ));
        }
        Ok(())
    }

    fn stops_early(&self) -> bool {
        self.mode != StopMode::FixedSteps && self.residual_tol > 0.0
    }
}

/// Converged state of a relaxation plus diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumResult {
    pub state: DVector<f64>,
    pub steps_taken: usize,
    /// `‖F(x) + extra(x)‖∞` at the returned state.
    pub final_residual: f64,
    pub converged: bool,
}

/// Additive, state-dependent force term: `out += extra(x)`.
pub type ExtraForce<'a> = &'a (dyn Fn(&DVector<f64>, &mut DVector<f64>) + Sync);

fn total_force<F: ForceField + ?Sized>(
    field: &F,
    extra: Option<ExtraForce<'_>>,
    x: &DVector<f64>,
    out: &mut DVector<f64>,
) {
    field.force_into(x, out);
    if let Some(extra) = extra {
        extra(x, out);
    }
}

fn guard(x: &DVector<f64>, step: usize) -> Result<()> {
    for (i, v) in x.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::Divergence {
                step,
                reason: format!("non-finite value at index {i}"),
            });
        }
        if v.abs() > DIVERGENCE_BOUND {
            return Err(Error::Divergence {
                step,
                reason: format!("|x[{i}]| = {:.3e} exceeds {DIVERGENCE_BOUND:e}", v.abs()),
            });
        }
    }
    Ok(())
}

/// Integrates `x <- x + dt (F(x) + extra(x))` from `x0` until the stop
/// condition of `cfg` is met.
pub fn relax<F: ForceField + ?Sized>(
    field: &F,
    x0: &DVector<f64>,
    cfg: &RelaxationConfig,
    extra: Option<ExtraForce<'_>>,
) -> Result<EquilibriumResult> {
    cfg.validate()?;
    let n = field.dim();
    check_dim("relax initial state", n, x0.len())?;
    guard(x0, 0)?;

    let mut x = x0.clone();
    let mut f = DVector::zeros(n);
    total_force(field, extra, &x, &mut f);
    let mut residual = f.amax();
    let mut steps = 0;
    let early = cfg.stops_early();

    while steps < cfg.max_steps && !(early && residual <= cfg.residual_tol) {
        x.axpy(cfg.dt, &f, 1.0);
        steps += 1;
        guard(&x, steps)?;
        total_force(field, extra, &x, &mut f);
        residual = f.amax();
    }
    if !residual.is_finite() {
        return Err(Error::Divergence {
            step: steps,
            reason: "non-finite force".into(),
        });
    }

    if cfg.newton_polish {
        residual = newton_polish(field, extra, &mut x, residual);
    }

    let converged = cfg.residual_tol == 0.0 || residual <= cfg.residual_tol;
    Ok(EquilibriumResult {
        state: x,
        steps_taken: steps,
        final_residual: residual,
        converged,
    })
}

/// Newton refinement on `G = F + extra` with a finite-difference Jacobian.
/// Keeps the best iterate; returns its residual.
fn newton_polish<F: ForceField + ?Sized>(
    field: &F,
    extra: Option<ExtraForce<'_>>,
    x: &mut DVector<f64>,
    mut residual: f64,
) -> f64 {
    let n = x.len();
    let mut g = DVector::zeros(n);
    for _ in 0..12 {
        if residual < 1e-15 {
            break;
        }
        let jac = fd_jacobian_with(n, x, |p, out| total_force(field, extra, p, out));
        total_force(field, extra, x, &mut g);
        let Some(step) = jac.lu().solve(&(-&g)) else {
            break;
        };
        let candidate = &*x + step;
        if candidate.iter().any(|v| !v.is_finite()) {
            break;
        }
        total_force(field, extra, &candidate, &mut g);
        let r = g.amax();
        if r < residual {
            *x = candidate;
            residual = r;
        } else {
            break;
        }
    }
    residual
}

fn fd_jacobian_with(
    n: usize,
    x: &DVector<f64>,
    mut eval: impl FnMut(&DVector<f64>, &mut DVector<f64>),
) -> DMatrix<f64> {
    let mut jac = DMatrix::zeros(n, n);
    let mut probe = x.clone();
    let mut plus = DVector::zeros(n);
    let mut minus = DVector::zeros(n);
    for j in 0..n {
        let orig = probe[j];
        probe[j] = orig + FD_STEP;
        eval(&probe, &mut plus);
        probe[j] = orig - FD_STEP;
        eval(&probe, &mut minus);
        probe[j] = orig;
        for i in 0..n {
            jac[(i, j)] = (plus[i] - minus[i]) / (2.0 * FD_STEP);
        }
    }
    jac
}

/// Central-difference Jacobian with step `h`.
pub fn finite_difference_jacobian<F: ForceField + ?Sized>(
    field: &F,
    x: &DVector<f64>,
    h: f64,
) -> DMatrix<f64> {
    let n = field.dim();
    let mut jac = DMatrix::zeros(n, n);
    let mut probe = x.clone();
    let mut plus = DVector::zeros(n);
    let mut minus = DVector::zeros(n);
    for j in 0..n {
        let orig = probe[j];
        probe[j] = orig + h;
        field.force_into(&probe, &mut plus);
        probe[j] = orig - h;
        field.force_into(&probe, &mut minus);
        probe[j] = orig;
        for i in 0..n {
            jac[(i, j)] = (plus[i] - minus[i]) / (2.0 * h);
        }
    }
    jac
}

/// `dF_i/dx_j` at `x`: analytic when available, central differences otherwise.
pub fn jacobian<F: ForceField + ?Sized>(field: &F, x: &DVector<f64>) -> DMatrix<f64> {
    field
        .analytic_jacobian(x)
        .unwrap_or_else(|| finite_difference_jacobian(field, x, FD_STEP))
}

/// `(J - J^T) / 2`. Exactly antisymmetric in floating point.
pub fn antisymmetric_part(j: &DMatrix<f64>) -> DMatrix<f64> {
    assert!(j.is_square(), "antisymmetric_part needs a square matrix");
    let n = j.nrows();
    DMatrix::from_fn(n, n, |r, c| 0.5 * (j[(r, c)] - j[(c, r)]))
}

/// `(J + J^T) / 2`.
pub fn symmetric_part(j: &DMatrix<f64>) -> DMatrix<f64> {
    assert!(j.is_square(), "symmetric_part needs a square matrix");
    let n = j.nrows();
    DMatrix::from_fn(n, n, |r, c| 0.5 * (j[(r, c)] + j[(c, r)]))
}
