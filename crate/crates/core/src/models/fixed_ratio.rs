//! Recurrent matrix with a prescribed structural asymmetry ratio:
//! `J_dyn = γ (c_S S̃ + c_A Ã)` where `S̃` and `Ã` are normalized to unit
//! Frobenius norm and weighted by `√(1 - r²)` and `r`.
//!
//! Off-diagonal parameters are stored in strictly-lower-triangular order; the
//! 0-based position of `(p, q)`, `p > q`, is `p (p - 1) / 2 + q`.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::activation::Activation;
use super::hopfield::{force_raw, jacobian_raw, jacobian_transpose_mul_raw, J_IN};
use super::topology::Mask;
use crate::dynamics::ForceField;
use crate::error::{check_dim, Error, Result};
use crate::gradient::{Gradient, Parameterized};

pub const XI: &str = "xi";
pub const THETA_S: &str = "theta_s";
pub const THETA_A: &str = "theta_a";
pub const GAMMA: &str = "gamma";

/// 1-based position of the pair `(i, j)`, `1 <= j < i <= n`, in the
/// off-diagonal parameter vectors.
pub fn index_map(i: usize, j: usize, n: usize) -> Result<usize> {
    if !(1 <= j && j < i && i <= n) {
        return Err(Error::IndexRange { i, j, n });
    }
    Ok((i - 1) * (i - 2) / 2 + j)
}

#[inline]
fn pair_index(p: usize, q: usize) -> usize {
    debug_assert!(p > q);
    p * (p - 1) / 2 + q
}

pub fn n_pairs(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedRatioParams {
    pub theta_s: DVector<f64>,
    pub theta_a: DVector<f64>,
    /// Diagonal of `S̃`.
    pub xi: DVector<f64>,
    pub gamma: f64,
    /// Target ratio, held fixed during training.
    pub r_str: f64,
}

/// Normalization state derived from the raw parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normalizers {
    pub f_s: f64,
    pub f_a: f64,
    pub c_s: f64,
    pub c_a: f64,
}

impl FixedRatioParams {
    pub fn new(
        theta_s: DVector<f64>,
        theta_a: DVector<f64>,
        xi: DVector<f64>,
        gamma: f64,
        r_str: f64,
    ) -> Result<Self> {
        let n = xi.len();
        check_dim("theta_s", n_pairs(n), theta_s.len())?;
        check_dim("theta_a", n_pairs(n), theta_a.len())?;
        if !(0.0..=1.0).contains(&r_str) {
            return Err(Error::Config(format!("r_str must lie in [0, 1], got {r_str}")));
        }
        Ok(Self {
            theta_s,
            theta_a,
            xi,
            gamma,
            r_str,
        })
    }

    /// `θ^S, θ^A, ξ ~ N(0, σ²)` i.i.d., `γ = √n`.
    pub fn init(n: usize, sigma: f64, r_str: f64, seed: u64) -> Result<Self> {
        let normal =
            Normal::new(0.0, sigma).map_err(|e| Error::Config(format!("bad sigma: {e}")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = n_pairs(n);
        let theta_s = DVector::from_fn(m, |_, _| normal.sample(&mut rng));
        let theta_a = DVector::from_fn(m, |_, _| normal.sample(&mut rng));
        let xi = DVector::from_fn(n, |_, _| normal.sample(&mut rng));
        Self::new(theta_s, theta_a, xi, (n as f64).sqrt(), r_str)
    }

    pub fn n_dyn(&self) -> usize {
        self.xi.len()
    }

    /// Zeroes parameters whose matrix entries the mask forbids. A shared
    /// off-diagonal parameter needs both `(p, q)` and `(q, p)`, so the mask
    /// must be symmetric.
    pub fn apply_mask(&mut self, mask: &Mask) -> Result<()> {
        check_dim("mask", self.n_dyn(), mask.dim())?;
        if !mask.is_symmetric() {
            return Err(Error::Contract(
                "fixed-ratio parameterization needs a symmetric mask".into(),
            ));
        }
        let n = self.n_dyn();
        for p in 0..n {
            if !mask.allows(p, p) {
                self.xi[p] = 0.0;
            }
            for q in 0..p {
                if !mask.allows(p, q) {
                    let k = pair_index(p, q);
                    self.theta_s[k] = 0.0;
                    self.theta_a[k] = 0.0;
                }
            }
        }
        Ok(())
    }

    pub fn normalizers(&self) -> Result<Normalizers> {
        let f_s = (self.xi.norm_squared() + 2.0 * self.theta_s.norm_squared()).sqrt();
        let f_a = (2.0 * self.theta_a.norm_squared()).sqrt();
        let w_s = (1.0 - self.r_str * self.r_str).sqrt();
        let w_a = self.r_str;
        // A vanishing component is only a problem if it carries weight.
        let coeff = |w: f64, f: f64, what: &str| {
            if w == 0.0 {
                Ok(0.0)
            } else if f > 0.0 && f.is_finite() {
                Ok(w / f)
            } else {
                Err(Error::Degenerate(format!("{what} component has zero norm")))
            }
        };
        Ok(Normalizers {
            f_s,
            f_a,
            c_s: coeff(w_s, f_s, "symmetric")?,
            c_a: coeff(w_a, f_a, "antisymmetric")?,
        })
    }

    /// Unnormalized `S̃` (symmetric, diagonal `ξ`).
    pub fn s_tilde(&self) -> DMatrix<f64> {
        let n = self.n_dyn();
        DMatrix::from_fn(n, n, |i, j| match i.cmp(&j) {
            std::cmp::Ordering::Equal => self.xi[i],
            std::cmp::Ordering::Greater => self.theta_s[pair_index(i, j)],
            std::cmp::Ordering::Less => self.theta_s[pair_index(j, i)],
        })
    }

    /// Unnormalized `Ã`: `+θ` below the diagonal, `-θ` above.
    pub fn a_tilde(&self) -> DMatrix<f64> {
        let n = self.n_dyn();
        DMatrix::from_fn(n, n, |i, j| match i.cmp(&j) {
            std::cmp::Ordering::Equal => 0.0,
            std::cmp::Ordering::Greater => self.theta_a[pair_index(i, j)],
            std::cmp::Ordering::Less => -self.theta_a[pair_index(j, i)],
        })
    }

    pub fn assemble(&self) -> Result<DMatrix<f64>> {
        let nz = self.normalizers()?;
        let n = self.n_dyn();
        let (gs, ga) = (self.gamma * nz.c_s, self.gamma * nz.c_a);
        let mut j = DMatrix::zeros(n, n);
        for p in 0..n {
            j[(p, p)] = gs * self.xi[p];
            for q in 0..p {
                let k = pair_index(p, q);
                let s = gs * self.theta_s[k];
                let a = ga * self.theta_a[k];
                j[(p, q)] = s + a;
                j[(q, p)] = s - a;
            }
        }
        Ok(j)
    }

    /// `vᵀ ∂F/∂p` for `ξ`, `θ^S`, `θ^A` and `γ`, given `a = v ⊙ ρ'(x)` and
    /// `σ = ρ(x)`. Includes the terms from differentiating the normalizers.
    pub fn presynaptic(
        &self,
        a: &DVector<f64>,
        sigma: &DVector<f64>,
    ) -> Result<(DVector<f64>, DVector<f64>, DVector<f64>, f64)> {
        let nz = self.normalizers()?;
        let n = self.n_dyn();
        // aᵀ S̃ σ and aᵀ Ã σ without forming the matrices.
        let mut s_s = 0.0;
        let mut s_a = 0.0;
        for p in 0..n {
            s_s += self.xi[p] * a[p] * sigma[p];
            for q in 0..p {
                let k = pair_index(p, q);
                s_s += self.theta_s[k] * (a[p] * sigma[q] + a[q] * sigma[p]);
                s_a += self.theta_a[k] * (a[p] * sigma[q] - a[q] * sigma[p]);
            }
        }
        let gs = self.gamma * nz.c_s;
        let ga = self.gamma * nz.c_a;
        // c_S = 0 (resp. c_A = 0) zeroes the whole group, so the division by a
        // possibly vanishing norm never matters there.
        let inv_fs2 = if nz.c_s == 0.0 { 0.0 } else { 1.0 / (nz.f_s * nz.f_s) };
        let inv_fa2 = if nz.c_a == 0.0 { 0.0 } else { 1.0 / (nz.f_a * nz.f_a) };

        let g_xi = DVector::from_fn(n, |m, _| {
            gs * (-self.xi[m] * inv_fs2 * s_s + a[m] * sigma[m])
        });
        let m = n_pairs(n);
        let mut g_s = DVector::zeros(m);
        let mut g_a = DVector::zeros(m);
        for p in 0..n {
            for q in 0..p {
                let k = pair_index(p, q);
                g_s[k] =
                    gs * (-2.0 * self.theta_s[k] * inv_fs2 * s_s + a[p] * sigma[q] + a[q] * sigma[p]);
                g_a[k] =
                    ga * (-2.0 * self.theta_a[k] * inv_fa2 * s_a + a[p] * sigma[q] - a[q] * sigma[p]);
            }
        }
        let g_gamma = nz.c_s * s_s + nz.c_a * s_a;
        Ok((g_xi, g_s, g_a, g_gamma))
    }
}

/// `r_str` network: input weights plus a fixed-ratio recurrent block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedRatioNet {
    pub j_in: DMatrix<f64>,
    pub dyn_params: FixedRatioParams,
    pub mask: Mask,
    pub input_rows: Vec<bool>,
    #[serde(default)]
    pub activation: Activation,
}

impl FixedRatioNet {
    pub fn new(
        j_in: DMatrix<f64>,
        mut dyn_params: FixedRatioParams,
        mask: Mask,
        input_rows: Vec<bool>,
    ) -> Result<Self> {
        let n = dyn_params.n_dyn();
        check_dim("j_in rows", n, j_in.nrows())?;
        check_dim("input rows", n, input_rows.len())?;
        dyn_params.apply_mask(&mask)?;
        let mut net = Self {
            j_in,
            dyn_params,
            mask,
            input_rows,
            activation: Activation::Tanh,
        };
        net.mask_inputs();
        // Fail early on a degenerate draw.
        net.dyn_params.normalizers()?;
        Ok(net)
    }

    pub fn n_dyn(&self) -> usize {
        self.dyn_params.n_dyn()
    }

    pub fn n_in(&self) -> usize {
        self.j_in.ncols()
    }

    fn mask_inputs(&mut self) {
        for (i, &ok) in self.input_rows.iter().enumerate() {
            if !ok {
                self.j_in.row_mut(i).fill(0.0);
            }
        }
    }

    pub fn j_dyn(&self) -> Result<DMatrix<f64>> {
        self.dyn_params.assemble()
    }

    pub fn bind<'a>(&'a self, input: &'a DVector<f64>) -> Result<FixedRatioSystem<'a>> {
        check_dim("input", self.n_in(), input.len())?;
        Ok(FixedRatioSystem {
            net: self,
            input,
            bias: &self.j_in * input,
            j_dyn: self.j_dyn()?,
        })
    }

    pub fn gradient_layout(&self) -> Gradient {
        let n = self.n_dyn();
        let m = n_pairs(n);
        Gradient::new()
            .with(J_IN, DMatrix::zeros(n, self.n_in()))
            .with(XI, DMatrix::zeros(n, 1))
            .with(THETA_S, DMatrix::zeros(m, 1))
            .with(THETA_A, DMatrix::zeros(m, 1))
            .with(GAMMA, DMatrix::zeros(1, 1))
    }

    /// `J_in += rate_in g`, recurrent groups and `γ` with `rate_dyn`.
    pub fn apply_update(&mut self, grads: &Gradient, rate_in: f64, rate_dyn: f64) -> Result<()> {
        if let Some(g) = grads.get(J_IN) {
            self.j_in.zip_apply(g, |p, d| *p += rate_in * d);
        }
        let p = &mut self.dyn_params;
        if let Some(g) = grads.get(XI) {
            p.xi.axpy(rate_dyn, &g.column(0), 1.0);
        }
        if let Some(g) = grads.get(THETA_S) {
            p.theta_s.axpy(rate_dyn, &g.column(0), 1.0);
        }
        if let Some(g) = grads.get(THETA_A) {
            p.theta_a.axpy(rate_dyn, &g.column(0), 1.0);
        }
        if let Some(g) = grads.get(GAMMA) {
            p.gamma += rate_dyn * g[(0, 0)];
        }
        p.apply_mask(&self.mask)?;
        self.mask_inputs();
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct FixedRatioSystem<'a> {
    pub net: &'a FixedRatioNet,
    pub input: &'a DVector<f64>,
    pub bias: DVector<f64>,
    /// Assembled recurrent matrix.
    pub j_dyn: DMatrix<f64>,
}

impl ForceField for FixedRatioSystem<'_> {
    fn dim(&self) -> usize {
        self.net.n_dyn()
    }

    fn force_into(&self, x: &DVector<f64>, out: &mut DVector<f64>) {
        force_raw(self.net.activation, &self.j_dyn, &self.bias, x, out)
    }

    fn analytic_jacobian(&self, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(jacobian_raw(self.net.activation, &self.j_dyn, &self.bias, x))
    }

    fn jacobian_transpose_mul(&self, x: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        jacobian_transpose_mul_raw(self.net.activation, &self.j_dyn, &self.bias, x, v)
    }
}

impl Parameterized for FixedRatioSystem<'_> {
    fn presynaptic_transpose(&self, x: &DVector<f64>, v: &DVector<f64>) -> Gradient {
        let act = self.net.activation;
        let a = DVector::from_fn(x.len(), |i, _| v[i] * act.rho_prime(x[i]));
        let sigma = x.map(|s| act.rho(s));
        let mut g_in = &a * self.input.transpose();
        for (i, &ok) in self.net.input_rows.iter().enumerate() {
            if !ok {
                g_in.row_mut(i).fill(0.0);
            }
        }
        // `bind` already validated the normalizers.
        let (mut g_xi, mut g_s, mut g_a, g_gamma) = self
            .net
            .dyn_params
            .presynaptic(&a, &sigma)
            .expect("normalizers validated at bind");
        let n = self.net.n_dyn();
        for p in 0..n {
            if !self.net.mask.allows(p, p) {
                g_xi[p] = 0.0;
            }
            for q in 0..p {
                if !self.net.mask.allows(p, q) {
                    let k = pair_index(p, q);
                    g_s[k] = 0.0;
                    g_a[k] = 0.0;
                }
            }
        }
        let m = g_s.len();
        Gradient::new()
            .with(J_IN, g_in)
            .with(XI, DMatrix::from_column_slice(n, 1, g_xi.as_slice()))
            .with(THETA_S, DMatrix::from_column_slice(m, 1, g_s.as_slice()))
            .with(THETA_A, DMatrix::from_column_slice(m, 1, g_a.as_slice()))
            .with(GAMMA, DMatrix::from_element(1, 1, g_gamma))
    }
}
