use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, invalid, Result};

/// Identifier of the generator behind seeded Gaussian ensembles. Bump when the sampling changes.
pub const GAUSSIAN_PRNG: &str = "chacha8(rand_chacha 0.9)+standard-normal(rand_distr 0.5)/column-major/v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Origin {
    Explicit,
    Gaussian { seed: u64, prng: String },
}

/// The linear measurement map `M` in `g = M f + e`.
#[derive(Debug, Clone, PartialEq)]
pub enum MeasurementOperator {
    Identity { d: usize },
    Dense { matrix: DMatrix<f64>, origin: Origin },
}

impl MeasurementOperator {
    pub fn identity(d: usize) -> Self {
        MeasurementOperator::Identity { d }
    }

    pub fn dense(matrix: DMatrix<f64>) -> Self {
        MeasurementOperator::Dense {
            matrix,
            origin: Origin::Explicit,
        }
    }

    pub fn rows(&self) -> usize {
        match self {
            MeasurementOperator::Identity { d } => *d,
            MeasurementOperator::Dense { matrix, .. } => matrix.nrows(),
        }
    }

    pub fn cols(&self) -> usize {
        match self {
            MeasurementOperator::Identity { d } => *d,
            MeasurementOperator::Dense { matrix, .. } => matrix.ncols(),
        }
    }

    pub fn is_identity(&self) -> bool {
        matches!(self, MeasurementOperator::Identity { .. })
    }

    pub fn origin(&self) -> Origin {
        match self {
            MeasurementOperator::Identity { .. } => Origin::Explicit,
            MeasurementOperator::Dense { origin, .. } => origin.clone(),
        }
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        match self {
            MeasurementOperator::Identity { .. } => v.to_vec(),
            MeasurementOperator::Dense { matrix, .. } => {
                (matrix * DVector::from_column_slice(v)).as_slice().to_vec()
            }
        }
    }

    pub fn apply_adjoint(&self, u: &[f64]) -> Vec<f64> {
        match self {
            MeasurementOperator::Identity { .. } => u.to_vec(),
            MeasurementOperator::Dense { matrix, .. } => {
                (matrix.tr_mul(&DVector::from_column_slice(u))).as_slice().to_vec()
            }
        }
    }

    pub fn apply_checked(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_len("measurement input", self.cols(), v.len())?;
        Ok(self.apply(v))
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            MeasurementOperator::Identity { d } => DMatrix::identity(*d, *d),
            MeasurementOperator::Dense { matrix, .. } => matrix.clone(),
        }
    }
}

/// Seeded i.i.d. normal `m x d` matrix with every column rescaled to unit norm.
pub fn gaussian_measurement(m: usize, d: usize, seed: u64) -> Result<MeasurementOperator> {
    if m == 0 || d == 0 {
        return Err(invalid(format!("gaussian ensemble needs m, d >= 1, got {m}x{d}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data: Vec<f64> = (0..m * d).map(|_| StandardNormal.sample(&mut rng)).collect();
    for col in data.chunks_mut(m) {
        let norm = col.iter().map(|x| x * x).sum::<f64>().sqrt();
        col.iter_mut().for_each(|x| *x /= norm);
    }
    Ok(MeasurementOperator::Dense {
        matrix: DMatrix::from_vec(m, d, data),
        origin: Origin::Gaussian {
            seed,
            prng: GAUSSIAN_PRNG.to_string(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_columns() {
        let m = gaussian_measurement(10, 20, 7).unwrap();
        let dense = m.to_dense();
        for c in 0..20 {
            assert!((dense.column(c).norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn seeded_determinism() {
        assert_eq!(gaussian_measurement(10, 20, 7).unwrap(), gaussian_measurement(10, 20, 7).unwrap());
        assert_ne!(gaussian_measurement(10, 20, 7).unwrap(), gaussian_measurement(10, 20, 8).unwrap());
    }

    #[test]
    fn identity_passthrough() {
        let v = vec![1.5, -2.0, 3.25];
        assert_eq!(MeasurementOperator::identity(3).apply(&v), v);
    }

    #[test]
    fn zero_dims_rejected() {
        assert!(gaussian_measurement(0, 5, 1).is_err());
        assert!(gaussian_measurement(5, 0, 1).is_err());
    }
}
