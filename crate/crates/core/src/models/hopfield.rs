//! Continuous Hopfield dynamics with a possibly asymmetric coupling matrix:
//! `F(x) = ρ'(x) ⊙ (J_in u + J_dyn ρ(x)) - x`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::activation::Activation;
use super::topology::Mask;
use crate::dynamics::ForceField;
use crate::error::{check_dim, Error, Result};
use crate::gradient::{EnergyModel, Gradient, Parameterized};

pub const J_IN: &str = "j_in";
pub const J_DYN: &str = "j_dyn";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HopfieldParams {
    /// `N_dyn x N_in`.
    pub j_in: DMatrix<f64>,
    /// `N_dyn x N_dyn`, zero wherever `mask` disallows a connection.
    pub j_dyn: DMatrix<f64>,
    pub mask: Mask,
    /// Units that receive the external input; other rows of `j_in` stay zero.
    pub input_rows: Vec<bool>,
    #[serde(default)]
    pub activation: Activation,
}

impl HopfieldParams {
    pub fn new(
        j_in: DMatrix<f64>,
        j_dyn: DMatrix<f64>,
        mask: Mask,
        input_rows: Vec<bool>,
    ) -> Result<Self> {
        let n = j_dyn.nrows();
        check_dim("j_dyn columns", n, j_dyn.ncols())?;
        check_dim("j_in rows", n, j_in.nrows())?;
        check_dim("mask", n, mask.dim())?;
        check_dim("input rows", n, input_rows.len())?;
        let mut p = Self {
            j_in,
            j_dyn,
            mask,
            input_rows,
            activation: Activation::Tanh,
        };
        p.enforce_masks();
        Ok(p)
    }

    /// All units receive input, all recurrent entries allowed.
    pub fn dense(j_in: DMatrix<f64>, j_dyn: DMatrix<f64>) -> Result<Self> {
        let n = j_dyn.nrows();
        Self::new(j_in, j_dyn, Mask::dense(n), vec![true; n])
    }

    /// Gaussian `N(0, variance)` entries under the given masks.
    pub fn random<R: Rng + ?Sized>(
        n_in: usize,
        mask: Mask,
        input_rows: Vec<bool>,
        variance: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let n = mask.dim();
        let normal = Normal::new(0.0, variance.sqrt())
            .map_err(|e| Error::Config(format!("bad init variance: {e}")))?;
        let j_in = DMatrix::from_fn(n, n_in, |_, _| normal.sample(rng));
        let j_dyn = DMatrix::from_fn(n, n, |_, _| normal.sample(rng));
        Self::new(j_in, j_dyn, mask, input_rows)
    }

    /// Mirrors the lower triangle onto the upper one. The mask must be symmetric.
    pub fn symmetrize(&mut self) -> Result<()> {
        if !self.mask.is_symmetric() {
            return Err(Error::Contract("cannot symmetrize under an asymmetric mask".into()));
        }
        let n = self.n_dyn();
        for i in 0..n {
            for j in 0..i {
                self.j_dyn[(j, i)] = self.j_dyn[(i, j)];
            }
        }
        Ok(())
    }

    pub fn n_dyn(&self) -> usize {
        self.j_dyn.nrows()
    }

    pub fn n_in(&self) -> usize {
        self.j_in.ncols()
    }

    pub fn is_symmetric(&self) -> bool {
        self.j_dyn == self.j_dyn.transpose()
    }

    fn enforce_masks(&mut self) {
        self.mask.apply(&mut self.j_dyn);
        for (i, &ok) in self.input_rows.iter().enumerate() {
            if !ok {
                self.j_in.row_mut(i).fill(0.0);
            }
        }
    }

    pub fn masks_respected(&self) -> bool {
        self.mask.respects(&self.j_dyn)
            && self
                .input_rows
                .iter()
                .enumerate()
                .all(|(i, &ok)| ok || self.j_in.row(i).iter().all(|v| *v == 0.0))
    }

    /// Input bias `b(u) = J_in u`.
    pub fn input_bias(&self, input: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim("input", self.n_in(), input.len())?;
        Ok(&self.j_in * input)
    }

    /// Binds an input, precomputing the bias.
    pub fn bind<'a>(&'a self, input: &'a DVector<f64>) -> Result<HopfieldSystem<'a>> {
        let bias = self.input_bias(input)?;
        Ok(HopfieldSystem {
            params: self,
            input,
            bias,
        })
    }

    /// `θ += rate_in * g[j_in]` and `θ += rate_dyn * g[j_dyn]`, masks re-applied.
    pub fn apply_update(&mut self, grads: &Gradient, rate_in: f64, rate_dyn: f64) {
        if let Some(g) = grads.get(J_IN) {
            self.j_in.zip_apply(g, |p, d| *p += rate_in * d);
        }
        if let Some(g) = grads.get(J_DYN) {
            self.j_dyn.zip_apply(g, |p, d| *p += rate_dyn * d);
        }
        self.enforce_masks();
    }

    pub fn gradient_layout(&self) -> Gradient {
        Gradient::new()
            .with(J_IN, DMatrix::zeros(self.n_dyn(), self.n_in()))
            .with(J_DYN, DMatrix::zeros(self.n_dyn(), self.n_dyn()))
    }
}

/// `ρ'` and the pre-activation drive `J_dyn ρ(x) + b` at a state.
pub(crate) struct LocalTerms {
    pub d1: DVector<f64>,
    pub drive: DVector<f64>,
}

pub(crate) fn local_terms(
    act: Activation,
    j_dyn: &DMatrix<f64>,
    bias: &DVector<f64>,
    x: &DVector<f64>,
) -> LocalTerms {
    let rho = x.map(|v| act.rho(v));
    let d1 = x.map(|v| act.rho_prime(v));
    let mut drive = bias.clone();
    drive.gemv(1.0, j_dyn, &rho, 1.0);
    LocalTerms { d1, drive }
}

pub(crate) fn force_raw(
    act: Activation,
    j_dyn: &DMatrix<f64>,
    bias: &DVector<f64>,
    x: &DVector<f64>,
    out: &mut DVector<f64>,
) {
    let n = x.len();
    let rho = x.map(|v| act.rho(v));
    out.copy_from(bias);
    out.gemv(1.0, j_dyn, &rho, 1.0);
    for i in 0..n {
        out[i] = act.rho_prime(x[i]) * out[i] - x[i];
    }
}

/// Off-diagonal `J_dyn_ij (ρ'_i ρ'_j)`; the product of derivatives is formed
/// first so a symmetric `J_dyn` yields an exactly symmetric Jacobian.
pub(crate) fn jacobian_raw(
    act: Activation,
    j_dyn: &DMatrix<f64>,
    bias: &DVector<f64>,
    x: &DVector<f64>,
) -> DMatrix<f64> {
    let n = x.len();
    let t = local_terms(act, j_dyn, bias, x);
    let mut jac = DMatrix::from_fn(n, n, |i, j| j_dyn[(i, j)] * (t.d1[i] * t.d1[j]));
    for i in 0..n {
        jac[(i, i)] += act.rho_second(x[i]) * t.drive[i] - 1.0;
    }
    jac
}

pub(crate) fn jacobian_transpose_mul_raw(
    act: Activation,
    j_dyn: &DMatrix<f64>,
    bias: &DVector<f64>,
    x: &DVector<f64>,
    v: &DVector<f64>,
) -> DVector<f64> {
    let t = local_terms(act, j_dyn, bias, x);
    let scaled = v.component_mul(&t.d1);
    let mut out = j_dyn.tr_mul(&scaled);
    for i in 0..x.len() {
        out[i] = t.d1[i] * out[i] + (act.rho_second(x[i]) * t.drive[i] - 1.0) * v[i];
    }
    out
}

/// Hopfield parameters with an input bound.
#[derive(Debug, Clone)]
pub struct HopfieldSystem<'a> {
    pub params: &'a HopfieldParams,
    pub input: &'a DVector<f64>,
    pub bias: DVector<f64>,
}

impl HopfieldSystem<'_> {
    /// `½‖x‖² - ½ ρᵀ J_dyn ρ - ρᵀ J_in u`; defined only for symmetric `J_dyn`.
    pub fn energy(&self, x: &DVector<f64>) -> Result<f64> {
        self.check_conservative()?;
        let act = self.params.activation;
        let rho = x.map(|v| act.rho(v));
        let quad = rho.dot(&(&self.params.j_dyn * &rho));
        Ok(0.5 * x.norm_squared() - 0.5 * quad - rho.dot(&self.bias))
    }
}

impl ForceField for HopfieldSystem<'_> {
    fn dim(&self) -> usize {
        self.params.n_dyn()
    }

    fn force_into(&self, x: &DVector<f64>, out: &mut DVector<f64>) {
        force_raw(self.params.activation, &self.params.j_dyn, &self.bias, x, out)
    }

    fn analytic_jacobian(&self, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(jacobian_raw(
            self.params.activation,
            &self.params.j_dyn,
            &self.bias,
            x,
        ))
    }

    fn jacobian_transpose_mul(&self, x: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        jacobian_transpose_mul_raw(self.params.activation, &self.params.j_dyn, &self.bias, x, v)
    }
}

impl Parameterized for HopfieldSystem<'_> {
    /// `g_in[i,k] = v_i ρ'(x_i) u_k`, `g_dyn[i,j] = v_i ρ'(x_i) ρ(x_j)`, masked.
    fn presynaptic_transpose(&self, x: &DVector<f64>, v: &DVector<f64>) -> Gradient {
        let p = self.params;
        let act = p.activation;
        let a = DVector::from_fn(x.len(), |i, _| v[i] * act.rho_prime(x[i]));
        let rho = x.map(|s| act.rho(s));
        let mut g_in = &a * self.input.transpose();
        for (i, &ok) in p.input_rows.iter().enumerate() {
            if !ok {
                g_in.row_mut(i).fill(0.0);
            }
        }
        let mut g_dyn = &a * rho.transpose();
        p.mask.apply(&mut g_dyn);
        Gradient::new().with(J_IN, g_in).with(J_DYN, g_dyn)
    }
}

impl EnergyModel for HopfieldSystem<'_> {
    fn check_conservative(&self) -> Result<()> {
        if self.params.is_symmetric() {
            Ok(())
        } else {
            Err(Error::Contract(
                "energy requires a symmetric recurrent matrix".into(),
            ))
        }
    }

    fn energy(&self, x: &DVector<f64>) -> Result<f64> {
        HopfieldSystem::energy(self, x)
    }

    /// `dE/dJ_in[i,k] = -ρ_i u_k`, `dE/dJ_dyn[i,j] = -½ ρ_i ρ_j`, masked.
    fn energy_param_grad(&self, x: &DVector<f64>) -> Gradient {
        let p = self.params;
        let rho = x.map(|s| p.activation.rho(s));
        let mut g_in = -(&rho * self.input.transpose());
        for (i, &ok) in p.input_rows.iter().enumerate() {
            if !ok {
                g_in.row_mut(i).fill(0.0);
            }
        }
        let n = rho.len();
        let mut g_dyn = DMatrix::from_fn(n, n, |i, j| -0.5 * (rho[i] * rho[j]));
        p.mask.apply(&mut g_dyn);
        Gradient::new().with(J_IN, g_in).with(J_DYN, g_dyn)
    }
}

/// `F(x)` for the bound Hopfield system.
pub fn hopfield_force(
    params: &HopfieldParams,
    input: &DVector<f64>,
    x: &DVector<f64>,
) -> Result<DVector<f64>> {
    check_dim("state", params.n_dyn(), x.len())?;
    Ok(params.bind(input)?.force(x))
}

pub fn hopfield_energy(
    params: &HopfieldParams,
    input: &DVector<f64>,
    x: &DVector<f64>,
) -> Result<f64> {
    check_dim("state", params.n_dyn(), x.len())?;
    params.bind(input)?.energy(x)
}

pub fn hopfield_jacobian(
    params: &HopfieldParams,
    input: &DVector<f64>,
    x: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    check_dim("state", params.n_dyn(), x.len())?;
    let sys = params.bind(input)?;
    Ok(jacobian_raw(params.activation, &params.j_dyn, &sys.bias, x))
}

pub fn apply_presynaptic_transpose(
    params: &HopfieldParams,
    x: &DVector<f64>,
    input: &DVector<f64>,
    v: &DVector<f64>,
) -> Result<Gradient> {
    check_dim("state", params.n_dyn(), x.len())?;
    check_dim("adjoint vector", params.n_dyn(), v.len())?;
    Ok(params.bind(input)?.presynaptic_transpose(x, v))
}
