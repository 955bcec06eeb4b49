//! Exact projection onto piecewise polynomials with a bounded number of jumps.
//!
//! Breakpoints follow one convention throughout: a breakpoint `t` (1-based, `1 <= t <= d-1`)
//! splits the signal into samples `1..=t` and `t+1..=d`. In 0-based terms the left piece is
//! `0..t`, and the jump sits on row `t - 1` of the 1D difference operator.

mod continuous;
mod segment;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::operators::Scaling;

pub use continuous::{continuous_refit, continuous_refit_at, JunctionPoint};
pub use segment::{segment_fit, SegmentErrorTable, SegmentFit, SegmentPoly};
pub(crate) use segment::{fit_local, solve_min_norm};

/// A piecewise polynomial approximation of a 1D signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewisePolyFit {
    pub degree: usize,
    /// Strictly increasing, each in `1..=d-1`.
    pub breakpoints: Vec<usize>,
    pub segments: Vec<SegmentPoly>,
    pub fitted: Vec<f64>,
    pub sse: f64,
}

impl PiecewisePolyFit {
    pub fn len(&self) -> usize {
        self.fitted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fitted.is_empty()
    }

    /// Per-segment coefficients `[c_0, .., c_n]` in the requested coordinate convention.
    pub fn coeffs(&self, scaling: Scaling) -> Vec<Vec<f64>> {
        self.segments.iter().map(|s| s.coeffs(scaling, self.len())).collect()
    }

    /// The overparameterized form: `n + 1` piecewise constant vectors `b_j` of length `d`.
    pub fn coefficient_vectors(&self, scaling: Scaling) -> Vec<Vec<f64>> {
        let d = self.len();
        let mut out = vec![vec![0.0; d]; self.degree + 1];
        for seg in &self.segments {
            let c = seg.coeffs(scaling, d);
            for (j, cj) in c.iter().enumerate() {
                out[j][seg.start..seg.end].iter_mut().for_each(|v| *v = *cj);
            }
        }
        out
    }

    /// Builds the least-squares fit of `g` for a fixed set of breakpoints.
    pub fn from_breakpoints(g: &[f64], breakpoints: &[usize], degree: usize) -> Result<Self> {
        validate_breakpoints(breakpoints, g.len())?;
        let mut segments = Vec::with_capacity(breakpoints.len() + 1);
        let mut fitted = vec![0.0; g.len()];
        for (start, end) in segment_bounds(breakpoints, g.len()) {
            let (poly, _) = fit_local(g, start, end, degree);
            for (i, f) in fitted.iter_mut().enumerate().take(end).skip(start) {
                *f = poly.eval(i as f64);
            }
            segments.push(poly);
        }
        let sse = sse(&fitted, g);
        Ok(Self {
            degree,
            breakpoints: breakpoints.to_vec(),
            segments,
            fitted,
            sse,
        })
    }
}

pub(crate) fn sse(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `(start, end)` 0-based half-open sample ranges induced by `breakpoints`.
pub fn segment_bounds(breakpoints: &[usize], d: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(breakpoints.len() + 1);
    let mut start = 0;
    for &t in breakpoints {
        out.push((start, t));
        start = t;
    }
    out.push((start, d));
    out
}

pub(crate) fn validate_breakpoints(breakpoints: &[usize], d: usize) -> Result<()> {
    let mut prev = 0;
    for &t in breakpoints {
        if t <= prev || t >= d {
            return Err(invalid(format!(
                "breakpoints must be strictly increasing within 1..={}, got {breakpoints:?}",
                d.saturating_sub(1)
            )));
        }
        prev = t;
    }
    Ok(())
}

/// Globally optimal approximation of `g` by a degree-`n` piecewise polynomial with at most `k` jumps.
///
/// When several jump counts reach the same error (to 1e-12 relative), the smallest count wins;
/// among placements with equal error the leftmost split is kept.
pub fn optimal_projection(g: &[f64], k: usize, n: usize) -> Result<PiecewisePolyFit> {
    let d = g.len();
    if d == 0 {
        return Err(invalid("cannot project an empty signal"));
    }
    if k >= d {
        return Err(invalid(format!("jump count {k} must be below the signal length {d}")));
    }
    let table = SegmentErrorTable::new(g, n);
    let breakpoints = optimal_breakpoints(&table, k);
    PiecewisePolyFit::from_breakpoints(g, &breakpoints, n)
}

/// Dynamic program over prefixes: `cost[j][l]` is the best error of `g[0..=l]` with exactly `j` jumps.
pub fn optimal_breakpoints(table: &SegmentErrorTable, k: usize) -> Vec<usize> {
    let d = table.len();
    let k = k.min(d.saturating_sub(1));
    let mut cost = vec![vec![f64::INFINITY; d]; k + 1];
    let mut arg = vec![vec![usize::MAX; d]; k + 1];
    for l in 0..d {
        cost[0][l] = table.get(0, l);
    }
    for j in 1..=k {
        let (prev_rows, cur_rows) = cost.split_at_mut(j);
        let prev = &prev_rows[j - 1];
        let cur = &mut cur_rows[0];
        for l in j..d {
            let mut best = f64::INFINITY;
            let mut best_t = usize::MAX;
            // left prefix 0..=t has j-1 jumps, right piece t+1..=l
            for t in (j - 1)..l {
                let c = prev[t] + table.get(t + 1, l);
                if c < best {
                    best = c;
                    best_t = t;
                }
            }
            cur[l] = best;
            arg[j][l] = best_t;
        }
    }
    let last = d - 1;
    let min_cost = (0..=k).map(|j| cost[j][last]).fold(f64::INFINITY, f64::min);
    let energy: f64 = (0..d).map(|i| table.get(i, i)).sum::<f64>() + cost[0][last];
    let slack = 1e-12 * energy.max(f64::MIN_POSITIVE);
    let jumps = (0..=k)
        .find(|&j| cost[j][last] <= min_cost + slack)
        .unwrap_or(k);
    let mut breakpoints = Vec::with_capacity(jumps);
    let mut l = last;
    for j in (1..=jumps).rev() {
        let t = arg[j][l];
        breakpoints.push(t + 1);
        l = t;
    }
    breakpoints.reverse();
    breakpoints
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_level_signal() {
        let g = [0.0, 0.0, 0.0, 5.0, 5.0, 5.0];
        let fit = optimal_projection(&g, 1, 0).unwrap();
        assert_eq!(fit.breakpoints, vec![3]);
        let c = fit.coeffs(Scaling::Index);
        assert!(c[0][0].abs() < 1e-12 && (c[1][0] - 5.0).abs() < 1e-12);
        assert!(fit.sse < 1e-20);
    }

    #[test]
    fn no_jumps_is_global_mean() {
        let g = [0.0, 0.0, 0.0, 5.0, 5.0, 5.0];
        let fit = optimal_projection(&g, 0, 0).unwrap();
        assert!(fit.breakpoints.is_empty());
        assert!((fit.coeffs(Scaling::Index)[0][0] - 2.5).abs() < 1e-12);
        assert!((fit.sse - 37.5).abs() < 1e-10);
    }

    #[test]
    fn extra_jumps_are_not_spent() {
        let g = [0.0, 0.0, 0.0, 5.0, 5.0, 5.0];
        let fit = optimal_projection(&g, 3, 0).unwrap();
        assert_eq!(fit.breakpoints, vec![3]);
    }

    #[test]
    fn too_many_jumps_rejected() {
        assert!(optimal_projection(&[1.0, 2.0, 3.0], 3, 0).is_err());
        assert!(optimal_projection(&[], 0, 0).is_err());
    }

    #[test]
    fn coefficient_vectors_synthesize_fit() {
        let g: Vec<f64> = (0..20).map(|i| if i < 8 { i as f64 } else { 20.0 - 0.5 * i as f64 }).collect();
        let fit = optimal_projection(&g, 1, 1).unwrap();
        let b = fit.coefficient_vectors(Scaling::Index);
        for i in 0..20 {
            let x = (i + 1) as f64;
            assert!((b[0][i] + b[1][i] * x - fit.fitted[i]).abs() < 1e-9);
        }
    }
}
