use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{segment_bounds, sse, validate_breakpoints, PiecewisePolyFit, SegmentPoly};
use crate::error::Result;

/// Where adjacent pieces are required to agree on the discrete grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JunctionPoint {
    /// Halfway between the last sample of the left piece and the first of the right piece.
    #[default]
    Midpoint,
    LeftSample,
    RightSample,
}

impl JunctionPoint {
    /// 0-based coordinate of the junction for breakpoint `t`.
    fn coordinate(self, t: usize) -> f64 {
        match self {
            JunctionPoint::Midpoint => t as f64 - 0.5,
            JunctionPoint::LeftSample => t as f64 - 1.0,
            JunctionPoint::RightSample => t as f64,
        }
    }
}

/// Least-squares fit with fixed breakpoints where neighbouring pieces meet at each junction midpoint.
pub fn continuous_refit(g: &[f64], breakpoints: &[usize], n: usize) -> Result<PiecewisePolyFit> {
    continuous_refit_at(g, breakpoints, n, JunctionPoint::Midpoint)
}

/// Continuity-constrained refit with an explicit junction convention.
///
/// The equality constraints are eliminated by construction: every piece after the first is
/// written around its left junction, where its constant term is pinned to the value of the
/// previous piece. The remaining free coefficients span the constraint null space and are
/// found by an unconstrained minimum-norm least-squares solve.
pub fn continuous_refit_at(
    g: &[f64],
    breakpoints: &[usize],
    n: usize,
    junction: JunctionPoint,
) -> Result<PiecewisePolyFit> {
    let d = g.len();
    validate_breakpoints(breakpoints, d)?;
    let bounds = segment_bounds(breakpoints, d);
    let cols = n + 1;
    let free = cols + n * breakpoints.len();

    // Local frames and the linear map from free parameters to each piece's local coefficients.
    let mut frames = Vec::with_capacity(bounds.len());
    let mut maps: Vec<DMatrix<f64>> = Vec::with_capacity(bounds.len());
    let mut next_free = 0;
    for (s, &(start, end)) in bounds.iter().enumerate() {
        let mut map = DMatrix::zeros(cols, free);
        let frame = if s == 0 {
            for j in 0..cols {
                map[(j, next_free + j)] = 1.0;
            }
            next_free += cols;
            SegmentPoly::frame(start, end)
        } else {
            let xj = junction.coordinate(breakpoints[s - 1]);
            let (pc, ph) = frames[s - 1];
            let u_prev = (xj - pc) / ph;
            // constant term equals the previous piece evaluated at the junction
            let prev: &DMatrix<f64> = &maps[s - 1];
            let mut p = 1.0;
            for j in 0..cols {
                for f in 0..free {
                    map[(0, f)] += p * prev[(j, f)];
                }
                p *= u_prev;
            }
            for j in 1..cols {
                map[(j, next_free + j - 1)] = 1.0;
            }
            next_free += n;
            (xj, ((end - start) as f64).max(1.0))
        };
        frames.push(frame);
        maps.push(map);
    }

    let mut design = DMatrix::zeros(d, free);
    for (s, &(start, end)) in bounds.iter().enumerate() {
        let (c, h) = frames[s];
        for i in start..end {
            let u = (i as f64 - c) / h;
            let mut p = 1.0;
            for j in 0..cols {
                for f in 0..free {
                    design[(i, f)] += p * maps[s][(j, f)];
                }
                p *= u;
            }
        }
    }
    let z = DVector::from_column_slice(&super::solve_min_norm(design, &DVector::from_column_slice(g)));

    let mut segments = Vec::with_capacity(bounds.len());
    let mut fitted = vec![0.0; d];
    for (s, &(start, end)) in bounds.iter().enumerate() {
        let local = &maps[s] * &z;
        let (center, half_width) = frames[s];
        let poly = SegmentPoly {
            start,
            end,
            center,
            half_width,
            local: local.as_slice().to_vec(),
        };
        for (i, f) in fitted.iter_mut().enumerate().take(end).skip(start) {
            *f = poly.eval(i as f64);
        }
        segments.push(poly);
    }
    let sse = sse(&fitted, g);
    Ok(PiecewisePolyFit {
        degree: n,
        breakpoints: breakpoints.to_vec(),
        segments,
        fitted,
        sse,
    })
}
