//! Equilibrium propagation and its extensions to non-conservative dynamics.
//!
//! A model is a force field `F(x; θ, u)` relaxed to a fixed point `x̄⁰`.
//! The learners in [`learners`] estimate `-dC/dθ` from one or two extra
//! relaxations; [`oracle`] provides reference gradients to check them.

pub mod data;
pub mod dynamics;
pub mod error;
pub mod gradient;
pub mod harness;
pub mod learners;
pub mod models;
pub mod oracle;

pub use dynamics::{
    antisymmetric_part, jacobian, relax, symmetric_part, EquilibriumResult, ForceField,
    RelaxationConfig, StopMode,
};
pub use error::{Error, IdxError, Result};
pub use gradient::{EnergyModel, Gradient, GradientEstimate, Method, Parameterized, PhaseDiagnostic};
pub use learners::{aep_update, dyadic_update, ep_update, vf_update, NudgeConfig};
