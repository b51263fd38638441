//! Parameter-shaped gradient containers.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dynamics::ForceField;

/// Named parameter groups, each stored as a matrix (vectors are `n x 1`).
/// Mirrors the layout of the parameter object it was computed for.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Gradient {
    groups: Vec<(String, DMatrix<f64>)>,
}

impl Gradient {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: &str, values: DMatrix<f64>) -> Self {
        self.push(name, values);
        self
    }

    pub fn push(&mut self, name: &str, values: DMatrix<f64>) {
        assert!(self.get(name).is_none(), "duplicate gradient group {name}");
        self.groups.push((name.to_owned(), values));
    }

    pub fn get(&self, name: &str) -> Option<&DMatrix<f64>> {
        self.groups.iter().find(|(n, _)| n == name).map(|(_, m)| m)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut DMatrix<f64>> {
        self.groups
            .iter_mut()
            .find(|(n, _)| n == name)
            .map(|(_, m)| m)
    }

    /// Panics when the group is missing; for call sites that built the gradient.
    pub fn group(&self, name: &str) -> &DMatrix<f64> {
        self.get(name)
            .unwrap_or_else(|| panic!("gradient has no group {name}"))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &DMatrix<f64>)> {
        self.groups.iter().map(|(n, m)| (n.as_str(), m))
    }

    pub fn names(&self) -> Vec<&str> {
        self.groups.iter().map(|(n, _)| n.as_str()).collect()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            groups: self
                .groups
                .iter()
                .map(|(n, m)| (n.clone(), DMatrix::zeros(m.nrows(), m.ncols())))
                .collect(),
        }
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.groups.len() == other.groups.len()
            && self
                .groups
                .iter()
                .zip(&other.groups)
                .all(|((a, x), (b, y))| a == b && x.shape() == y.shape())
    }

    /// `self += alpha * other`. Panics on a layout mismatch.
    pub fn axpy(&mut self, alpha: f64, other: &Self) {
        assert!(self.same_shape(other), "gradient layouts differ");
        for ((_, a), (_, b)) in self.groups.iter_mut().zip(&other.groups) {
            a.zip_apply(b, |x, y| *x += alpha * y);
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        for (_, m) in &mut self.groups {
            *m *= alpha;
        }
    }

    pub fn scaled(mut self, alpha: f64) -> Self {
        self.scale(alpha);
        self
    }

    /// All entries, group by group, column-major within a group.
    pub fn flatten(&self) -> DVector<f64> {
        let data: Vec<f64> = self
            .groups
            .iter()
            .flat_map(|(_, m)| m.iter().copied())
            .collect();
        DVector::from_vec(data)
    }

    pub fn norm(&self) -> f64 {
        self.groups
            .iter()
            .map(|(_, m)| m.norm_squared())
            .sum::<f64>()
            .sqrt()
    }

    pub fn dot(&self, other: &Self) -> f64 {
        assert!(self.same_shape(other), "gradient layouts differ");
        self.groups
            .iter()
            .zip(&other.groups)
            .map(|((_, a), (_, b))| a.dot(b))
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.groups.iter().all(|(_, m)| m.iter().all(|v| v.is_finite()))
    }

    /// `‖self - reference‖ / ‖reference‖`.
    pub fn relative_error(&self, reference: &Self) -> f64 {
        let mut diff = self.clone();
        diff.axpy(-1.0, reference);
        diff.norm() / reference.norm()
    }

    pub fn cosine(&self, other: &Self) -> f64 {
        self.dot(other) / (self.norm() * other.norm())
    }

    /// Restricts the comparison to a subset of groups.
    pub fn select(&self, names: &[&str]) -> Self {
        Self {
            groups: self
                .groups
                .iter()
                .filter(|(n, _)| names.contains(&n.as_str()))
                .cloned()
                .collect(),
        }
    }
}

/// A force field whose parameters can be differentiated: provides the
/// pre-synaptic product `(dF/dθ)^T v` at a state `x`.
pub trait Parameterized: ForceField {
    fn presynaptic_transpose(&self, x: &DVector<f64>, v: &DVector<f64>) -> Gradient;
}

impl<T: Parameterized + ?Sized> Parameterized for &T {
    fn presynaptic_transpose(&self, x: &DVector<f64>, v: &DVector<f64>) -> Gradient {
        (**self).presynaptic_transpose(x, v)
    }
}

/// A conservative model `F = -∇E` whose energy depends on the parameters.
pub trait EnergyModel: Parameterized {
    /// Fails with [`Error::Contract`](crate::Error::Contract) when no energy exists.
    fn check_conservative(&self) -> crate::Result<()>;
    fn energy(&self, x: &DVector<f64>) -> crate::Result<f64>;
    /// `∂E/∂θ` at fixed state.
    fn energy_param_grad(&self, x: &DVector<f64>) -> Gradient;
}

/// Which procedure produced an estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "EP")]
    Ep,
    #[serde(rename = "VF")]
    Vf,
    #[serde(rename = "AEP")]
    Aep,
    DyadicEp,
    Oracle,
    Bptt,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Method::Ep => "EP",
            Method::Vf => "VF",
            Method::Aep => "AEP",
            Method::DyadicEp => "DyadicEP",
            Method::Oracle => "oracle",
            Method::Bptt => "BPTT",
        };
        f.write_str(s)
    }
}

/// Convergence record of one relaxation phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseDiagnostic {
    pub phase: String,
    pub steps: usize,
    pub residual: f64,
    pub converged: bool,
}

/// An estimate of `-dC/dθ`, i.e. a descent direction: training applies
/// `θ += ε * grads`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientEstimate {
    pub grads: Gradient,
    pub method: Method,
    pub beta_used: f64,
    pub diagnostics: Vec<PhaseDiagnostic>,
}

impl GradientEstimate {
    pub fn all_converged(&self) -> bool {
        self.diagnostics.iter().all(|d| d.converged)
    }
}
