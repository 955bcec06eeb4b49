//! Diagonal basis matrices `X_1..X_n` stored as weight vectors.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Coordinate convention for polynomial and planar bases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scaling {
    /// Sample `i` (0-based) sits at coordinate `i + 1`.
    Index,
    /// Sample `i` sits at `(i + 1) / s`, with `s = d` in 1D and `s = max(h, w)` in 2D.
    Normalized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ParamKind {
    Polynomial { degree: usize },
    /// Monomials `col^a * row^b` with `a + b <= degree`; degree 1 is the planar model.
    Planar { h: usize, w: usize, degree: usize },
    Custom,
}

/// A set of `n` basis functions sampled on the signal grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parameterization {
    dim: usize,
    weights: Vec<Vec<f64>>,
    kind: ParamKind,
    scaling: Scaling,
    /// Total monomial degree of each weight, used for coefficient conversion.
    powers: Vec<u32>,
    /// Coordinate divisor `s` of the normalized convention.
    coord_scale: f64,
}

impl Parameterization {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of basis functions.
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    pub fn weight(&self, j: usize) -> &[f64] {
        &self.weights[j]
    }

    pub fn kind(&self) -> &ParamKind {
        &self.kind
    }

    pub fn scaling(&self) -> Scaling {
        self.scaling
    }

    /// Builds an arbitrary parameterization. Coefficients of custom bases are never rescaled.
    pub fn custom(weights: Vec<Vec<f64>>) -> Result<Self> {
        let dim = weights.first().map(Vec::len).unwrap_or(0);
        if weights.is_empty() || dim == 0 {
            return Err(invalid("custom parameterization needs at least one non-empty weight"));
        }
        if weights.iter().any(|w| w.len() != dim) {
            return Err(invalid("all weight vectors must have the same length"));
        }
        let n = weights.len();
        Ok(Self {
            dim,
            weights,
            kind: ParamKind::Custom,
            scaling: Scaling::Index,
            powers: vec![0; n],
            coord_scale: 1.0,
        })
    }

    /// Sample value `sum_j weights[j][s] * coeffs[j][s]`.
    pub fn synthesize(&self, coeffs: &[Vec<f64>]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (w, b) in self.weights.iter().zip(coeffs) {
            for ((o, wi), bi) in out.iter_mut().zip(w).zip(b) {
                *o += wi * bi;
            }
        }
        out
    }

    /// The same model subspace expressed in the normalized convention.
    pub fn normalized(&self) -> Parameterization {
        match self.kind {
            ParamKind::Polynomial { degree } => {
                build_poly_parameterization(self.dim, degree, Scaling::Normalized)
                    .expect("dimensions already validated")
            }
            ParamKind::Planar { h, w, degree } => {
                build_planar_poly(h, w, degree, Scaling::Normalized).expect("dimensions already validated")
            }
            ParamKind::Custom => self.clone(),
        }
    }

    /// Rescales coefficients computed against `from` (same kind) into this parameterization's convention.
    pub fn convert_coeffs(&self, from: &Parameterization, coeffs: &mut [Vec<f64>]) {
        for (j, b) in coeffs.iter_mut().enumerate() {
            let p = self.powers[j] as i32;
            let factor = (self.coord_scale / from.coord_scale).powi(p);
            if factor != 1.0 {
                b.iter_mut().for_each(|v| *v *= factor);
            }
        }
    }

    /// Coordinate of 0-based sample `i` under this convention (1D kinds).
    pub fn coordinate(&self, i: f64) -> f64 {
        (i + 1.0) / self.coord_scale
    }
}

fn scale_for(scaling: Scaling, extent: usize) -> f64 {
    match scaling {
        Scaling::Index => 1.0,
        Scaling::Normalized => extent as f64,
    }
}

/// Powers of the sample coordinate: `[I, Z, Z^2, .., Z^n]`.
pub fn build_poly_parameterization(d: usize, n: usize, scaling: Scaling) -> Result<Parameterization> {
    if d < 2 {
        return Err(invalid(format!("signal length must be at least 2, got {d}")));
    }
    let s = scale_for(scaling, d);
    let coords: Vec<f64> = (0..d).map(|i| (i + 1) as f64 / s).collect();
    let weights = (0..=n)
        .map(|j| coords.iter().map(|&x| x.powi(j as i32)).collect())
        .collect();
    Ok(Parameterization {
        dim: d,
        weights,
        kind: ParamKind::Polynomial { degree: n },
        scaling,
        powers: (0..=n as u32).collect(),
        coord_scale: s,
    })
}

/// DC, within-row (column index) ramp and row-index ramp on a row-major `h x w` grid.
pub fn build_planar_parameterization(h: usize, w: usize) -> Result<Parameterization> {
    build_planar_poly(h, w, 1, Scaling::Index)
}

/// Bivariate monomials up to total `degree`, ordered by degree then by decreasing column power.
pub fn build_planar_poly(h: usize, w: usize, degree: usize, scaling: Scaling) -> Result<Parameterization> {
    if h < 2 || w < 2 {
        return Err(invalid(format!("image must be at least 2x2, got {h}x{w}")));
    }
    if degree == 0 {
        return Err(invalid("planar parameterization needs degree >= 1"));
    }
    let s = scale_for(scaling, h.max(w));
    let mut weights = Vec::new();
    let mut powers = Vec::new();
    for total in 0..=degree {
        for b in 0..=total {
            let a = total - b;
            let wv: Vec<f64> = (0..h * w)
                .map(|idx| {
                    let (r, c) = (idx / w, idx % w);
                    ((c + 1) as f64 / s).powi(a as i32) * ((r + 1) as f64 / s).powi(b as i32)
                })
                .collect();
            weights.push(wv);
            powers.push(total as u32);
        }
    }
    Ok(Parameterization {
        dim: h * w,
        weights,
        kind: ParamKind::Planar { h, w, degree },
        scaling,
        powers,
        coord_scale: s,
    })
}
