use nalgebra::{DMatrix, DVector};

use crate::dynamics::ForceField;
use crate::gradient::{Gradient, Parameterized};

/// Affine field `F(x) = A x + c`, parameterized by `A` and `c`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearField {
    pub a: DMatrix<f64>,
    pub c: DVector<f64>,
}

impl LinearField {
    pub fn new(a: DMatrix<f64>, c: DVector<f64>) -> Self {
        assert_eq!(a.nrows(), a.ncols(), "square matrix required");
        assert_eq!(a.nrows(), c.len(), "offset length");
        Self { a, c }
    }
}

impl ForceField for LinearField {
    fn dim(&self) -> usize {
        self.c.len()
    }

    fn force_into(&self, x: &DVector<f64>, out: &mut DVector<f64>) {
        out.copy_from(&self.c);
        out.gemv(1.0, &self.a, x, 1.0);
    }

    fn analytic_jacobian(&self, _x: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(self.a.clone())
    }

    fn jacobian_transpose_mul(&self, _x: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        self.a.tr_mul(v)
    }
}

impl Parameterized for LinearField {
    fn presynaptic_transpose(&self, x: &DVector<f64>, v: &DVector<f64>) -> Gradient {
        Gradient::new()
            .with("a", v * x.transpose())
            .with("c", DMatrix::from_column_slice(v.len(), 1, v.as_slice()))
    }
}
