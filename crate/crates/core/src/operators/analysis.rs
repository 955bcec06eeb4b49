use serde::{Deserialize, Serialize};

use crate::error::{check_len, invalid, Result};

/// Layout of the finite-difference rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Geometry {
    OneD { d: usize },
    /// Horizontal then vertical first differences on a row-major `h x w` grid.
    Hv { h: usize, w: usize },
    /// `Hv` followed by the two diagonal filters.
    HvDiag { h: usize, w: usize },
}

impl Geometry {
    pub fn cols(&self) -> usize {
        match *self {
            Geometry::OneD { d } => d,
            Geometry::Hv { h, w } | Geometry::HvDiag { h, w } => h * w,
        }
    }

    pub fn grid(&self) -> Option<(usize, usize)> {
        match *self {
            Geometry::OneD { .. } => None,
            Geometry::Hv { h, w } | Geometry::HvDiag { h, w } => Some((h, w)),
        }
    }
}

/// A first-difference analysis operator. Row `j` computes `v[plus] - v[minus]`.
///
/// Rows are stored explicitly because every algorithm walks them one at a time.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisOperator {
    geometry: Geometry,
    rows: Vec<(usize, usize)>,
}

impl AnalysisOperator {
    pub fn geometry(&self) -> Geometry {
        self.geometry
    }

    /// Number of rows `p`.
    pub fn rows(&self) -> usize {
        self.rows.len()
    }

    pub fn cols(&self) -> usize {
        self.geometry.cols()
    }

    /// `(plus, minus)` column indices of row `j`.
    pub fn row(&self, j: usize) -> (usize, usize) {
        self.rows[j]
    }

    pub fn row_entries(&self, j: usize) -> [(usize, f64); 2] {
        let (p, q) = self.rows[j];
        [(p, 1.0), (q, -1.0)]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.rows.iter().copied()
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.cols());
        self.rows.iter().map(|&(p, q)| v[p] - v[q]).collect()
    }

    pub fn apply_transpose(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols()];
        for (&(p, q), &x) in self.rows.iter().zip(u) {
            out[p] += x;
            out[q] -= x;
        }
        out
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.rows(), self.cols());
        for (j, &(p, q)) in self.rows.iter().enumerate() {
            m[(j, p)] = 1.0;
            m[(j, q)] = -1.0;
        }
        m
    }
}

/// Builds the finite-difference operator for `geometry`.
pub fn dif_operator(geometry: Geometry) -> Result<AnalysisOperator> {
    let mut rows = Vec::new();
    match geometry {
        Geometry::OneD { d } => {
            if d < 2 {
                return Err(invalid("1D difference operator needs d >= 2"));
            }
            rows.extend((0..d - 1).map(|i| (i, i + 1)));
        }
        Geometry::Hv { h, w } | Geometry::HvDiag { h, w } => {
            if h < 2 || w < 2 {
                return Err(invalid(format!("2D difference operator needs h, w >= 2, got {h}x{w}")));
            }
            let at = |r: usize, c: usize| r * w + c;
            for r in 0..h {
                for c in 0..w - 1 {
                    rows.push((at(r, c), at(r, c + 1)));
                }
            }
            for r in 0..h - 1 {
                for c in 0..w {
                    rows.push((at(r, c), at(r + 1, c)));
                }
            }
            if matches!(geometry, Geometry::HvDiag { .. }) {
                // [[1, 0], [0, -1]]
                for r in 0..h - 1 {
                    for c in 0..w - 1 {
                        rows.push((at(r, c), at(r + 1, c + 1)));
                    }
                }
                // [[0, 1], [-1, 0]]
                for r in 0..h - 1 {
                    for c in 0..w - 1 {
                        rows.push((at(r, c + 1), at(r + 1, c)));
                    }
                }
            }
        }
    }
    Ok(AnalysisOperator { geometry, rows })
}

/// Applies `omega` to a vector after checking its length.
pub fn apply_checked(omega: &AnalysisOperator, v: &[f64]) -> Result<Vec<f64>> {
    check_len("analysis operator input", omega.cols(), v.len())?;
    Ok(omega.apply(v))
}
