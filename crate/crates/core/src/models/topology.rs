use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// Sparsity pattern of the recurrent matrix: `allowed[(i, j)]` means unit `j`
/// may drive unit `i`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mask {
    allowed: DMatrix<bool>,
}

impl Mask {
    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        Self {
            allowed: DMatrix::from_fn(n, n, f),
        }
    }

    /// Every entry, including self-connections.
    pub fn dense(n: usize) -> Self {
        Self::from_fn(n, |_, _| true)
    }

    /// Every entry except the diagonal.
    pub fn no_self(n: usize) -> Self {
        Self::from_fn(n, |i, j| i != j)
    }

    /// Hidden units `0..hidden`, outputs after them; connections only between
    /// the two layers, in both directions.
    pub fn layered(hidden: usize, outputs: usize) -> Self {
        Self::from_fn(hidden + outputs, |i, j| (i < hidden) != (j < hidden))
    }

    /// Only hidden-to-output connections (rows are outputs, columns hidden).
    pub fn feedforward(hidden: usize, outputs: usize) -> Self {
        Self::from_fn(hidden + outputs, |i, j| i >= hidden && j < hidden)
    }

    pub fn dim(&self) -> usize {
        self.allowed.nrows()
    }

    #[inline]
    pub fn allows(&self, i: usize, j: usize) -> bool {
        self.allowed[(i, j)]
    }

    pub fn is_symmetric(&self) -> bool {
        let n = self.dim();
        (0..n).all(|i| (0..i).all(|j| self.allowed[(i, j)] == self.allowed[(j, i)]))
    }

    /// Zeroes every disallowed entry of `m`.
    pub fn apply(&self, m: &mut DMatrix<f64>) {
        m.zip_apply(&self.allowed, |v, ok| {
            if !ok {
                *v = 0.0
            }
        });
    }

    pub fn respects(&self, m: &DMatrix<f64>) -> bool {
        m.iter().zip(self.allowed.iter()).all(|(v, &ok)| ok || *v == 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layered_is_block_off_diagonal() {
        let m = Mask::layered(2, 1);
        assert!(m.is_symmetric());
        assert!(m.allows(2, 0) && m.allows(0, 2));
        assert!(!m.allows(0, 1) && !m.allows(2, 2) && !m.allows(0, 0));
    }

    #[test]
    fn feedforward_is_strictly_lower_block() {
        let m = Mask::feedforward(2, 2);
        assert!(!m.is_symmetric());
        assert!(m.allows(3, 1));
        assert!(!m.allows(1, 3) && !m.allows(3, 2));
        let mut w = DMatrix::from_element(4, 4, 1.0);
        m.apply(&mut w);
        assert!(m.respects(&w));
        assert_eq!(w.sum(), 4.0);
    }
}
