use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::operators::Scaling;

/// One polynomial piece on samples `start..end` (0-based, end exclusive).
///
/// Coefficients are held in local coordinates `u = (x - center) / half_width`, where `x` is the
/// 0-based sample index, and converted to a global convention on request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentPoly {
    pub start: usize,
    pub end: usize,
    pub(crate) center: f64,
    pub(crate) half_width: f64,
    pub(crate) local: Vec<f64>,
}

impl SegmentPoly {
    pub(crate) fn frame(start: usize, end: usize) -> (f64, f64) {
        let center = (start + end - 1) as f64 / 2.0;
        let half_width = ((end - start) as f64 / 2.0).max(1.0);
        (center, half_width)
    }

    pub fn degree(&self) -> usize {
        self.local.len() - 1
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }

    /// Value at 0-based sample coordinate `x` (need not be an integer).
    pub fn eval(&self, x: f64) -> f64 {
        let u = (x - self.center) / self.half_width;
        self.local.iter().rev().fold(0.0, |acc, &a| acc * u + a)
    }

    /// Coefficients `c_j` of `sum_j c_j X^j` in the global coordinate `X` of `scaling`
    /// for a signal of length `d`.
    pub fn coeffs(&self, scaling: Scaling, d: usize) -> Vec<f64> {
        let (alpha, beta) = match scaling {
            Scaling::Index => (1.0, 1.0),
            Scaling::Normalized => (1.0 / d as f64, 1.0 / d as f64),
        };
        let x0 = beta + alpha * self.center;
        let s = alpha * self.half_width;
        shift_scale_poly(&self.local, x0, s)
    }
}

/// Rewrites `sum_k a_k ((X - x0) / s)^k` as `sum_j c_j X^j`.
pub(crate) fn shift_scale_poly(a: &[f64], x0: f64, s: f64) -> Vec<f64> {
    let n = a.len();
    let mut out = vec![0.0; n];
    // (X - x0)^k expanded with binomial coefficients
    let mut binom = vec![1.0f64];
    for (k, &ak) in a.iter().enumerate() {
        if k > 0 {
            let mut next = vec![1.0; k + 1];
            for j in 1..k {
                next[j] = binom[j - 1] + binom[j];
            }
            binom = next;
        }
        let scale = ak / s.powi(k as i32);
        for j in 0..=k {
            out[j] += scale * binom[j] * (-x0).powi((k - j) as i32);
        }
    }
    out
}

/// Least-squares polynomial of `degree` on `g[start..end]`, minimum-norm when under-determined.
pub(crate) fn fit_local(g: &[f64], start: usize, end: usize, degree: usize) -> (SegmentPoly, f64) {
    let (center, half_width) = SegmentPoly::frame(start, end);
    let len = end - start;
    let cols = degree + 1;
    let a = DMatrix::from_fn(len, cols, |r, c| {
        (((start + r) as f64 - center) / half_width).powi(c as i32)
    });
    let y = DVector::from_column_slice(&g[start..end]);
    let local = solve_min_norm(a, &y);
    let poly = SegmentPoly {
        start,
        end,
        center,
        half_width,
        local,
    };
    let sse = if len <= cols {
        0.0
    } else {
        (start..end).map(|i| (poly.eval(i as f64) - g[i]).powi(2)).sum()
    };
    (poly, sse)
}

pub(crate) fn solve_min_norm(a: DMatrix<f64>, y: &DVector<f64>) -> Vec<f64> {
    let cols = a.ncols();
    let svd = a.svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let eps = smax * 1e-13 * (cols.max(1) as f64);
    match svd.solve(y, eps) {
        Ok(x) => x.as_slice().to_vec(),
        Err(_) => vec![0.0; cols],
    }
}

/// Result of fitting a single segment.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentFit {
    /// Polynomial coefficients in the 1-based sample coordinate.
    pub coeffs: Vec<f64>,
    pub sse: f64,
    pub poly: SegmentPoly,
}

/// Fits a degree-`n` polynomial to samples `t..=l` (1-based, inclusive).
pub fn segment_fit(g: &[f64], t: usize, l: usize, n: usize) -> Result<SegmentFit> {
    if t == 0 || t > l || l > g.len() {
        return Err(invalid(format!(
            "segment [{t}, {l}] is empty or outside 1..={}",
            g.len()
        )));
    }
    let (poly, sse) = fit_local(g, t - 1, l, n);
    Ok(SegmentFit {
        coeffs: poly.coeffs(Scaling::Index, g.len()),
        sse,
        poly,
    })
}

/// Minimal SSE of a degree-`n` fit for every segment of the signal.
///
/// Built with Givens updates of an augmented triangular factor, one sweep per start index.
#[derive(Debug, Clone)]
pub struct SegmentErrorTable {
    d: usize,
    degree: usize,
    err: Vec<f64>,
}

impl SegmentErrorTable {
    pub fn new(g: &[f64], degree: usize) -> Self {
        let d = g.len();
        let cols = degree + 2;
        let mut err = vec![0.0; d * d];
        let scale = d.max(1) as f64;
        let mut r = vec![0.0; cols * cols];
        let mut row = vec![0.0; cols];
        for t in 0..d {
            r.iter_mut().for_each(|v| *v = 0.0);
            let mut sse = 0.0;
            for l in t..d {
                let u = (l - t) as f64 / scale;
                let mut p = 1.0;
                for c in row.iter_mut().take(degree + 1) {
                    *c = p;
                    p *= u;
                }
                row[degree + 1] = g[l];
                let mut absorbed = false;
                for j in 0..=degree {
                    if row[j] == 0.0 {
                        continue;
                    }
                    let rjj = r[j * cols + j];
                    if rjj == 0.0 {
                        r[j * cols + j..(j + 1) * cols].copy_from_slice(&row[j..]);
                        absorbed = true;
                        break;
                    }
                    let h = rjj.hypot(row[j]);
                    let (c, s) = (rjj / h, row[j] / h);
                    for k in j..cols {
                        let a = r[j * cols + k];
                        let b = row[k];
                        r[j * cols + k] = c * a + s * b;
                        row[k] = -s * a + c * b;
                    }
                }
                if !absorbed {
                    sse += row[degree + 1] * row[degree + 1];
                }
                err[t * d + l] = if l - t <= degree { 0.0 } else { sse };
            }
        }
        Self { d, degree, err }
    }

    pub fn len(&self) -> usize {
        self.d
    }

    pub fn is_empty(&self) -> bool {
        self.d == 0
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// SSE of the best fit on 0-based inclusive samples `t..=l`.
    #[inline]
    pub fn get(&self, t: usize, l: usize) -> f64 {
        self.err[t * self.d + l]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line() {
        let fit = segment_fit(&[1.0, 2.0, 3.0], 1, 3, 1).unwrap();
        assert!(fit.coeffs[0].abs() < 1e-12);
        assert!((fit.coeffs[1] - 1.0).abs() < 1e-12);
        assert!(fit.sse < 1e-24);
    }

    #[test]
    fn single_sample_kept() {
        let fit = segment_fit(&[5.0], 1, 1, 1).unwrap();
        assert_eq!(fit.sse, 0.0);
        assert!((fit.poly.eval(0.0) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn constant_is_mean() {
        let fit = segment_fit(&[0.0, 1.0, 0.0], 1, 3, 0).unwrap();
        assert!((fit.coeffs[0] - 1.0 / 3.0).abs() < 1e-14);
        assert!((fit.sse - 2.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn empty_segment_rejected() {
        assert!(segment_fit(&[1.0, 2.0], 2, 1, 0).is_err());
        assert!(segment_fit(&[1.0, 2.0], 0, 1, 0).is_err());
        assert!(segment_fit(&[1.0, 2.0], 1, 3, 0).is_err());
    }

    #[test]
    fn table_matches_direct_fits() {
        let g: Vec<f64> = (0..15).map(|i| ((i * i) as f64 * 0.7).sin() * 3.0).collect();
        for degree in 0..3 {
            let table = SegmentErrorTable::new(&g, degree);
            for t in 0..g.len() {
                for l in t..g.len() {
                    let (_, sse) = fit_local(&g, t, l + 1, degree);
                    let e = table.get(t, l);
                    assert!((e - sse).abs() <= 1e-10 * (1.0 + sse), "{t} {l} {e} {sse}");
                }
            }
        }
    }

    #[test]
    fn global_coefficients_reproduce_values() {
        let g = [0.5, 1.7, 2.0, 4.1, 3.3, 2.2];
        let (poly, _) = fit_local(&g, 1, 6, 2);
        for scaling in [Scaling::Index, Scaling::Normalized] {
            let c = poly.coeffs(scaling, g.len());
            for i in 1..6 {
                let x = match scaling {
                    Scaling::Index => (i + 1) as f64,
                    Scaling::Normalized => (i + 1) as f64 / 6.0,
                };
                let v: f64 = c.iter().enumerate().map(|(j, cj)| cj * x.powi(j as i32)).sum();
                assert!((v - poly.eval(i as f64)).abs() < 1e-10);
            }
        }
    }
}
