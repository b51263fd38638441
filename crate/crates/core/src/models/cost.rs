use nalgebra::DVector;
use serde::{Deserialize, Serialize};

/// `C(x) = ½ ‖o - y‖²` over the output coordinates `o = x[start..start + len]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticCost {
    pub target: DVector<f64>,
    /// Index of the first output unit in the state vector.
    pub output_start: usize,
}

impl QuadraticCost {
    pub fn new(target: DVector<f64>, output_start: usize) -> Self {
        Self {
            target,
            output_start,
        }
    }

    /// Target `+1` at `label`, `-1` elsewhere.
    pub fn signed_one_hot(label: usize, n_classes: usize, output_start: usize) -> Self {
        assert!(label < n_classes, "label {label} out of range");
        let target = DVector::from_fn(n_classes, |i, _| if i == label { 1.0 } else { -1.0 });
        Self::new(target, output_start)
    }

    pub fn n_outputs(&self) -> usize {
        self.target.len()
    }

    pub fn outputs<'a>(&self, x: &'a DVector<f64>) -> nalgebra::DVectorView<'a, f64> {
        x.rows(self.output_start, self.target.len())
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        0.5 * (self.outputs(x) - &self.target).norm_squared()
    }

    /// `out += scale * dC/dx`.
    pub fn add_scaled_grad(&self, x: &DVector<f64>, scale: f64, out: &mut DVector<f64>) {
        for k in 0..self.target.len() {
            let i = self.output_start + k;
            out[i] += scale * (x[i] - self.target[k]);
        }
    }

    pub fn grad(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut g = DVector::zeros(x.len());
        self.add_scaled_grad(x, 1.0, &mut g);
        g
    }
}

/// Arg-max over the output units; ties go to the lowest index.
pub fn predict(x: &DVector<f64>, output_start: usize, n_outputs: usize) -> usize {
    let mut best = 0;
    for k in 1..n_outputs {
        if x[output_start + k] > x[output_start + best] {
            best = k;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gradient_vanishes_off_the_outputs() {
        let cost = QuadraticCost::signed_one_hot(1, 3, 2);
        let x = DVector::from_vec(vec![5.0, -5.0, 0.0, 0.5, 0.0]);
        let g = cost.grad(&x);
        assert_eq!(g[0], 0.0);
        assert_eq!(g[1], 0.0);
        assert_eq!(g.rows(2, 3).clone_owned(), DVector::from_vec(vec![1.0, -0.5, 1.0]));
        assert!((cost.value(&x) - 0.5 * (1.0 + 0.25 + 1.0)).abs() < 1e-15);
    }

    #[test]
    fn argmax_breaks_ties_low() {
        let x = DVector::from_vec(vec![9.0, 0.2, 0.7, 0.7, -1.0]);
        assert_eq!(predict(&x, 1, 4), 1);
        for label in 0..10 {
            let cost = QuadraticCost::signed_one_hot(label, 10, 0);
            assert_eq!(predict(&cost.target, 0, 10), label);
        }
    }
}
