use nalgebra::DMatrix;

use crate::dynamics::antisymmetric_part;
use crate::error::{Error, Result};

/// Structural asymmetry `‖(J - Jᵀ)/2‖_F / ‖J‖_F`, in `[0, 1]`.
pub fn r_str_metric(j: &DMatrix<f64>) -> Result<f64> {
    let denom = j.norm();
    if denom == 0.0 {
        return Err(Error::Degenerate("r_str of a zero matrix".into()));
    }
    Ok(antisymmetric_part(j).norm() / denom)
}

/// Jacobian asymmetry on the off-diagonal entries only:
/// `‖J_off - J_offᵀ‖_F / ‖J_off‖_F`. Note: no `½` in the numerator, so the
/// range is `[0, 2]`.
pub fn r_jac_metric(jac: &DMatrix<f64>) -> Result<f64> {
    let mut off = jac.clone();
    off.fill_diagonal(0.0);
    let denom = off.norm();
    if denom == 0.0 {
        return Err(Error::Degenerate(
            "r_jac undefined: all off-diagonal entries are zero".into(),
        ));
    }
    Ok((&off - off.transpose()).norm() / denom)
}
