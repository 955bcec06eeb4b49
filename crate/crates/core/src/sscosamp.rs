//! Signal-space CoSaMP for piecewise polynomial functions.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, invalid, Result};
use crate::operators::{
    build_poly_parameterization, MeasurementOperator, ParamKind, Parameterization, Scaling,
};
use crate::projection::{
    optimal_projection, segment_bounds, solve_min_norm, validate_breakpoints, PiecewisePolyFit,
    SegmentPoly,
};
use crate::recovery::RecoveryOutput;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SSCoSaMPConfig {
    /// Target number of jumps.
    pub k: usize,
    /// Polynomial degree.
    pub n: usize,
    /// Candidate expansion factor; the proxy is projected with `ceil(gamma * k)` jumps.
    pub gamma: f64,
    /// Residual halting threshold. `None` means `1e-6 * ||g||`.
    pub epsilon: Option<f64>,
    pub max_iters: usize,
    /// Convention of the returned coefficient vectors.
    pub scaling: Scaling,
}

impl SSCoSaMPConfig {
    pub fn new(k: usize, n: usize) -> Self {
        Self {
            k,
            n,
            gamma: 2.0,
            epsilon: None,
            max_iters: 50,
            scaling: Scaling::Index,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.gamma >= 1.0) {
            return Err(invalid(format!("gamma must be >= 1, got {}", self.gamma)));
        }
        if let Some(eps) = self.epsilon {
            if !(eps >= 0.0) {
                return Err(invalid(format!("epsilon must be >= 0, got {eps}")));
            }
        }
        if self.max_iters == 0 {
            return Err(invalid("max_iters must be at least 1"));
        }
        Ok(())
    }
}

/// Least-squares fit for a fixed jump set.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstrainedFit {
    pub coeff_vectors: Vec<Vec<f64>>,
    /// `[X_0 .. X_n] b`, the temporal signal.
    pub signal: Vec<f64>,
}

/// Minimizes `||g - M [X_0..X_n] b||` over coefficient vectors that are constant between the
/// given breakpoints.
///
/// The problem is reduced to `(n + 1) * (|jumps| + 1)` free coefficients. Polynomial bases are
/// re-centered on every segment for conditioning; the result is converted back to `param`'s
/// convention. Rank deficiency is resolved with the minimum-norm solution.
pub fn constrained_ls(
    g: &[f64],
    m: &MeasurementOperator,
    param: &Parameterization,
    breakpoints: &[usize],
) -> Result<ConstrainedFit> {
    let d = param.dim();
    check_len("measurement operator columns", d, m.cols())?;
    check_len("measurements", m.rows(), g.len())?;
    validate_breakpoints(breakpoints, d)?;
    let bounds = segment_bounds(breakpoints, d);
    let nb = param.len();
    let ncols = nb * bounds.len();
    let polynomial = matches!(param.kind(), ParamKind::Polynomial { .. });

    let mut basis = DMatrix::zeros(d, ncols);
    for (s, &(start, end)) in bounds.iter().enumerate() {
        let (center, half) = SegmentPoly::frame(start, end);
        for i in start..end {
            for j in 0..nb {
                basis[(i, s * nb + j)] = if polynomial {
                    ((i as f64 - center) / half).powi(j as i32)
                } else {
                    param.weight(j)[i]
                };
            }
        }
    }
    let system = match m {
        MeasurementOperator::Identity { .. } => basis.clone(),
        MeasurementOperator::Dense { matrix, .. } => matrix * &basis,
    };
    let c = DVector::from_column_slice(&solve_min_norm(system, &DVector::from_column_slice(g)));
    let signal = (&basis * &c).as_slice().to_vec();

    let mut coeff_vectors = vec![vec![0.0; d]; nb];
    for (s, &(start, end)) in bounds.iter().enumerate() {
        let local: Vec<f64> = (0..nb).map(|j| c[s * nb + j]).collect();
        let global = if polynomial {
            let (center, half_width) = SegmentPoly::frame(start, end);
            SegmentPoly {
                start,
                end,
                center,
                half_width,
                local,
            }
            .coeffs(param.scaling(), d)
        } else {
            local
        };
        for (j, v) in global.into_iter().enumerate() {
            coeff_vectors[j][start..end].iter_mut().for_each(|b| *b = v);
        }
    }
    Ok(ConstrainedFit {
        coeff_vectors,
        signal,
    })
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn residual(g: &[f64], m: &MeasurementOperator, f: &[f64]) -> Vec<f64> {
    g.iter().zip(m.apply(f)).map(|(a, b)| a - b).collect()
}

fn union_sorted(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut out: Vec<usize> = a.iter().chain(b).copied().collect();
    out.sort_unstable();
    out.dedup();
    out
}

/// Recovers a piecewise polynomial with `cfg.k` jumps from `g = M f + e`.
///
/// Each iteration projects the proxy `M^T g_r` onto `ceil(gamma k)` jumps, merges those
/// candidates with the current support, solves the constrained least squares on the merged
/// support and prunes the result back to `k` jumps with the optimal projection. Iteration stops
/// once `||g_r|| <= epsilon`; otherwise the lowest-residual iterate is returned unconverged.
pub fn sscosamp(g: &[f64], m: &MeasurementOperator, cfg: &SSCoSaMPConfig) -> Result<RecoveryOutput> {
    cfg.validate()?;
    let d = m.cols();
    check_len("measurements", m.rows(), g.len())?;
    if cfg.k >= d {
        return Err(invalid(format!("jump count {} must be below the signal length {d}", cfg.k)));
    }
    let param = build_poly_parameterization(d, cfg.n, Scaling::Normalized)?;
    let epsilon = cfg.epsilon.unwrap_or(1e-6 * norm(g));
    let expanded = ((cfg.gamma * cfg.k as f64).ceil() as usize).min(d - 1);

    let mut support: Vec<usize> = Vec::new();
    let mut current: Option<PiecewisePolyFit> = None;
    let mut gr = g.to_vec();
    let mut history = Vec::new();
    let mut best: Option<(f64, PiecewisePolyFit)> = None;
    let mut converged = false;

    for _ in 0..cfg.max_iters {
        let proxy = m.apply_adjoint(&gr);
        let candidates = optimal_projection(&proxy, expanded, cfg.n)?;
        let merged = union_sorted(&support, &candidates.breakpoints);
        let temporal = constrained_ls(g, m, &param, &merged)?;
        let pruned = optimal_projection(&temporal.signal, cfg.k, cfg.n)?;
        support = pruned.breakpoints.clone();
        gr = residual(g, m, &pruned.fitted);
        let rnorm = norm(&gr);
        history.push(rnorm);
        if best.as_ref().is_none_or(|(b, _)| rnorm < *b) {
            best = Some((rnorm, pruned.clone()));
        }
        current = Some(pruned);
        if rnorm <= epsilon {
            converged = true;
            break;
        }
    }

    let fit = if converged {
        current.expect("at least one iteration ran")
    } else {
        best.expect("at least one iteration ran").1
    };
    Ok(RecoveryOutput {
        coeff_vectors: fit.coefficient_vectors(cfg.scaling),
        jump_set: fit.breakpoints.iter().map(|t| t - 1).collect(),
        estimate: fit.fitted,
        iterations: history.len(),
        residual_history: history,
        converged,
        bound_unmet: false,
    })
}
