use nalgebra::DMatrix;

/// Upper-triangular matrix of ones whose columns are steps of growing length.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HeavisideDictionary {
    d: usize,
}

impl HeavisideDictionary {
    pub fn new(d: usize) -> Self {
        Self { d }
    }

    pub fn size(&self) -> usize {
        self.d
    }

    /// Entry `(i, j)` is 1 when `i <= j`: column `j` is a step covering samples `0..=j`.
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        if i <= j {
            1.0
        } else {
            0.0
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.d, self.d, |i, j| self.entry(i, j))
    }

    /// The dictionary without its last (DC) column.
    pub fn truncated(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.d, self.d.saturating_sub(1), |i, j| self.entry(i, j))
    }

    /// Synthesizes `D alpha`.
    pub fn synthesize(&self, alpha: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.d];
        let mut acc = 0.0;
        for i in (0..self.d).rev() {
            acc += alpha[i];
            out[i] = acc;
        }
        out
    }
}
