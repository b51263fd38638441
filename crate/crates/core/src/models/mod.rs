//! Concrete force fields and parameterizations.

pub mod activation;
pub mod cost;
pub mod dyadic_energy;
pub mod feedforward;
pub mod fixed_ratio;
pub mod hopfield;
pub mod linear;
pub mod metrics;
pub mod topology;

pub use activation::Activation;
pub use cost::{predict, QuadraticCost};
pub use dyadic_energy::{hopfield_dyadic_dynamics, hopfield_dyadic_energy};
pub use feedforward::{feedforward_forces, FeedforwardMode, FeedforwardParams};
pub use fixed_ratio::{index_map, FixedRatioNet, FixedRatioParams, FixedRatioSystem};
pub use hopfield::{
    apply_presynaptic_transpose, hopfield_energy, hopfield_force, hopfield_jacobian,
    HopfieldParams, HopfieldSystem,
};
pub use linear::LinearField;
pub use metrics::{r_jac_metric, r_str_metric};
pub use topology::Mask;
