//! One-hidden-layer feedforward connectivity: inputs drive the hidden layer,
//! the hidden layer drives the outputs, nothing flows back. The state is
//! `x = (h, o)` with the hidden units first.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::activation::Activation;
use super::cost::QuadraticCost;
use super::hopfield::HopfieldParams;
use super::topology::Mask;
use crate::error::{check_dim, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedforwardParams {
    /// `hidden x N_in`.
    pub j_in: DMatrix<f64>,
    /// `outputs x hidden`.
    pub w: DMatrix<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeedforwardMode {
    Free,
    Nudged,
}

impl FeedforwardParams {
    pub fn new(j_in: DMatrix<f64>, w: DMatrix<f64>) -> Result<Self> {
        check_dim("w columns", j_in.nrows(), w.ncols())?;
        Ok(Self { j_in, w })
    }

    pub fn hidden(&self) -> usize {
        self.j_in.nrows()
    }

    pub fn outputs(&self) -> usize {
        self.w.nrows()
    }

    /// The equivalent recurrent net, `J_dyn = [[0, 0], [W, 0]]`.
    pub fn to_hopfield(&self) -> HopfieldParams {
        let (h, o) = (self.hidden(), self.outputs());
        let n = h + o;
        let mut j_in = DMatrix::zeros(n, self.j_in.ncols());
        j_in.rows_mut(0, h).copy_from(&self.j_in);
        let mut j_dyn = DMatrix::zeros(n, n);
        j_dyn.view_mut((h, 0), (o, h)).copy_from(&self.w);
        let rows = (0..n).map(|i| i < h).collect();
        HopfieldParams::new(j_in, j_dyn, Mask::feedforward(h, o), rows)
            .expect("consistent feedforward shapes")
    }

    pub fn from_hopfield(p: &HopfieldParams, hidden: usize) -> Result<Self> {
        let n = p.n_dyn();
        if hidden > n {
            return Err(Error::Config(format!("{hidden} hidden units in a {n}-unit net")));
        }
        let o = n - hidden;
        if !Mask::feedforward(hidden, o).respects(&p.j_dyn) {
            return Err(Error::Contract("recurrent matrix is not feedforward".into()));
        }
        Self::new(
            p.j_in.rows(0, hidden).clone_owned(),
            p.j_dyn.view((hidden, 0), (o, hidden)).clone_owned(),
        )
    }
}

/// Layer forces of the feedforward net.
///
/// Free: `F_h = ρ'(h)⊙(J_in u) - h`, `F_o = ρ'(o)⊙(Wρ(h)) - o`.
/// Nudged adds the effective backward coupling around `x̄⁰`:
/// `F_h += ρ'(h)⊙Wᵀ(o - ō⁰)`, the output drive becomes `Wρ(h) - W(h - h̄⁰)`,
/// and `-β ∂C/∂o` is added to the outputs.
pub fn feedforward_forces(
    p: &FeedforwardParams,
    input: &DVector<f64>,
    x: &DVector<f64>,
    mode: FeedforwardMode,
    x0: Option<&DVector<f64>>,
    beta: f64,
    cost: Option<&QuadraticCost>,
) -> Result<DVector<f64>> {
    let (nh, no) = (p.hidden(), p.outputs());
    check_dim("input", p.j_in.ncols(), input.len())?;
    check_dim("state", nh + no, x.len())?;
    let act = Activation::Tanh;
    let h = x.rows(0, nh);
    let o = x.rows(nh, no);
    let rho_h = h.map(|v| act.rho(v));
    let mut drive_h = &p.j_in * input;
    let mut drive_o = &p.w * &rho_h;

    if mode == FeedforwardMode::Nudged {
        let x0 = x0.ok_or_else(|| {
            Error::Config("nudged feedforward forces need the free equilibrium".into())
        })?;
        check_dim("free equilibrium", nh + no, x0.len())?;
        let do_ = o - x0.rows(nh, no);
        let dh = h - x0.rows(0, nh);
        drive_h += p.w.tr_mul(&do_);
        drive_o -= &p.w * dh;
    }

    let mut f = DVector::zeros(nh + no);
    for i in 0..nh {
        f[i] = act.rho_prime(h[i]) * drive_h[i] - h[i];
    }
    for k in 0..no {
        f[nh + k] = act.rho_prime(o[k]) * drive_o[k] - o[k];
    }
    if mode == FeedforwardMode::Nudged && beta != 0.0 {
        let cost = cost.ok_or_else(|| Error::Config("nudging needs a cost".into()))?;
        check_dim("cost outputs", no, cost.n_outputs())?;
        cost.add_scaled_grad(x, -beta, &mut f);
    }
    Ok(f)
}
