//! Block greedy analysis pursuit with noise, plain and with a continuity penalty.

mod solver;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::operators::{AnalysisOperator, MeasurementOperator, Parameterization};
use crate::recovery::RecoveryOutput;

pub use solver::{Branch, CosupportSolution, CosupportSolver};
use solver::SolverOptions;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BGAPNConfig {
    /// Bound on the measurement residual `||g - M f||`.
    pub noise_norm: f64,
    /// Stop once every remaining row has `sum_i |Omega_j b_i| < epsilon`.
    /// `None` means `1e-3` times the dynamic range of `g`.
    pub epsilon: Option<f64>,
    /// Rows removed from the cosupport per iteration. `None` picks 1 for signals and
    /// `ceil(p / 100)` for images.
    pub rows_per_iter: Option<usize>,
    /// Continuity penalty weight, used by [`bgapn_continuity`] only.
    pub gamma: f64,
    pub max_iters: usize,
    /// Relative residual target of the iterative refinement after each direct solve.
    pub ls_tolerance: f64,
    /// Ridge added to every quadratic form, relative to its mean diagonal.
    pub tikhonov: f64,
    /// The multiplier search stops once the residual is within this fraction of `noise_norm`.
    pub bound_tolerance: f64,
}

impl BGAPNConfig {
    pub fn new(noise_norm: f64) -> Self {
        Self {
            noise_norm,
            epsilon: None,
            rows_per_iter: None,
            gamma: 100.0,
            max_iters: 10_000,
            ls_tolerance: 1e-8,
            tikhonov: 1e-10,
            bound_tolerance: 1e-3,
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if !(self.noise_norm >= 0.0) || !self.noise_norm.is_finite() {
            return Err(invalid(format!("noise_norm must be finite and >= 0, got {}", self.noise_norm)));
        }
        if let Some(eps) = self.epsilon {
            if !(eps >= 0.0) {
                return Err(invalid(format!("epsilon must be >= 0, got {eps}")));
            }
        }
        if self.rows_per_iter == Some(0) {
            return Err(invalid("rows_per_iter must be at least 1"));
        }
        if !(self.gamma >= 0.0) || !self.gamma.is_finite() {
            return Err(invalid(format!("gamma must be finite and >= 0, got {}", self.gamma)));
        }
        if self.max_iters == 0 {
            return Err(invalid("max_iters must be at least 1"));
        }
        if !(self.tikhonov >= 0.0) || !(self.ls_tolerance >= 0.0) || !(self.bound_tolerance > 0.0) {
            return Err(invalid("solver tolerances must be nonnegative (bound_tolerance positive)"));
        }
        Ok(())
    }

    fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            noise_norm: self.noise_norm,
            bound_tolerance: self.bound_tolerance,
            ls_tolerance: self.ls_tolerance,
            tikhonov: self.tikhonov,
        }
    }
}

/// Rows of the analysis operator still assumed orthogonal to every coefficient vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cosupport {
    active: Vec<bool>,
    count: usize,
}

impl Cosupport {
    /// All `p` rows.
    pub fn full(p: usize) -> Self {
        Self {
            active: vec![true; p],
            count: p,
        }
    }

    /// Cosupport made of the listed rows out of `p`.
    pub fn from_rows(p: usize, rows: &[usize]) -> Result<Self> {
        let mut active = vec![false; p];
        for &r in rows {
            if r >= p {
                return Err(invalid(format!("cosupport row {r} out of range for {p} rows")));
            }
            active[r] = true;
        }
        let count = active.iter().filter(|a| **a).count();
        Ok(Self { active, count })
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn total_rows(&self) -> usize {
        self.active.len()
    }

    pub fn contains(&self, row: usize) -> bool {
        self.active[row]
    }

    pub fn remove(&mut self, row: usize) {
        if std::mem::replace(&mut self.active[row], false) {
            self.count -= 1;
        }
    }

    pub fn active_rows(&self) -> Vec<usize> {
        (0..self.active.len()).filter(|&r| self.active[r]).collect()
    }

    /// Complement of the cosupport, ascending.
    pub fn removed_rows(&self) -> Vec<usize> {
        (0..self.active.len()).filter(|&r| !self.active[r]).collect()
    }
}

impl<'a> CosupportSolver<'a> {
    pub fn new(
        g: &'a [f64],
        m: &'a MeasurementOperator,
        param: &'a Parameterization,
        omega: &'a AnalysisOperator,
        cfg: &BGAPNConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        Self::with_options(g, m, param, omega, cfg.solver_options())
    }

    /// Minimizes `sum_i ||Omega_Lambda b_i||^2 + gamma ||W Omega X b||^2` subject to
    /// `||g - M X b|| <= noise_norm`, where `W` selects the rows outside the cosupport.
    pub fn solve(&self, cos: &Cosupport, gamma: f64) -> Result<CosupportSolution> {
        if cos.total_rows() != self.rows().len() {
            return Err(invalid(format!(
                "cosupport covers {} rows, the analysis operator has {}",
                cos.total_rows(),
                self.rows().len()
            )));
        }
        let raw = self.solve_raw(cos, gamma, None)?;
        Ok(self.publish(raw))
    }
}

/// One-shot form of [`CosupportSolver::solve`].
pub fn solve_cosupport_ls(
    g: &[f64],
    m: &MeasurementOperator,
    param: &Parameterization,
    omega: &AnalysisOperator,
    cos: &Cosupport,
    cfg: &BGAPNConfig,
    gamma: f64,
) -> Result<CosupportSolution> {
    CosupportSolver::new(g, m, param, omega, cfg)?.solve(cos, gamma)
}

/// Recovers `f = sum_j X_j b_j` from `g = M f + e` assuming `Omega b_j` jointly sparse.
///
/// Starting from the full cosupport, each iteration solves the cosupport least squares and
/// drops the rows with the largest `sum_i (Omega_j b_i)^2`. The returned jump set is the
/// complement of the final cosupport. `cfg.gamma` is ignored here.
pub fn bgapn(
    g: &[f64],
    m: &MeasurementOperator,
    param: &Parameterization,
    omega: &AnalysisOperator,
    cfg: &BGAPNConfig,
) -> Result<RecoveryOutput> {
    pursue(g, m, param, omega, cfg, None)
}

/// [`bgapn`] where, after every cosupport update, the estimate is re-solved with the removed
/// rows penalized on the signal itself with weight `cfg.gamma`.
///
/// Row selection follows the unpenalized solves; the returned estimate is the penalized one.
pub fn bgapn_continuity(
    g: &[f64],
    m: &MeasurementOperator,
    param: &Parameterization,
    omega: &AnalysisOperator,
    cfg: &BGAPNConfig,
) -> Result<RecoveryOutput> {
    pursue(g, m, param, omega, cfg, Some(cfg.gamma))
}

fn default_rows_per_iter(omega: &AnalysisOperator) -> usize {
    let p = omega.rows();
    if omega.geometry().grid().is_some() {
        p.div_ceil(100).max(1)
    } else {
        p.div_ceil(1000).max(1)
    }
}

fn pursue(
    g: &[f64],
    m: &MeasurementOperator,
    param: &Parameterization,
    omega: &AnalysisOperator,
    cfg: &BGAPNConfig,
    continuity: Option<f64>,
) -> Result<RecoveryOutput> {
    cfg.validate()?;
    let solver = CosupportSolver::with_options(g, m, param, omega, cfg.solver_options())?;
    let nb = solver.nb();
    let rows = solver.rows().to_vec();
    let epsilon = cfg.epsilon.unwrap_or_else(|| {
        let (lo, hi) = g.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
        if g.is_empty() { 0.0 } else { 1e-3 * (hi - lo) }
    });
    let per_iter = cfg.rows_per_iter.unwrap_or_else(|| default_rows_per_iter(omega));

    let mut cos = Cosupport::full(rows.len());
    let mut hint = None;
    let mut weighted_hint = None;
    let mut penalized: Option<solver::RawSolution> = None;
    let mut history = Vec::new();
    let mut converged = false;
    let mut output = None;

    for iter in 1..=cfg.max_iters {
        let sol = solver.solve_raw(&cos, 0.0, hint)?;
        if sol.lambda.is_finite() && sol.lambda > 0.0 {
            hint = Some(sol.lambda);
        }
        history.push(sol.residual_norm);

        let mut scores: Vec<(f64, usize)> = Vec::with_capacity(cos.len());
        let mut peak = 0.0f64;
        for (r, &(p, q)) in rows.iter().enumerate() {
            if !cos.contains(r) {
                continue;
            }
            let (mut sq, mut abs) = (0.0, 0.0);
            for j in 0..nb {
                let v = sol.b[p * nb + j] - sol.b[q * nb + j];
                sq += v * v;
                abs += v.abs();
            }
            peak = peak.max(abs);
            scores.push((sq, r));
        }
        let current = match penalized.take() {
            Some(p) => p,
            None => sol,
        };
        if cos.is_empty() || peak < epsilon {
            converged = true;
            output = Some(current);
            break;
        }
        if iter == cfg.max_iters {
            output = Some(current);
            break;
        }
        // largest scores first, ties to the lowest row index
        scores.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        for &(_, r) in scores.iter().take(per_iter) {
            cos.remove(r);
        }
        if let Some(gamma) = continuity {
            if gamma > 0.0 {
                let est = solver.solve_raw(&cos, gamma, weighted_hint.or(hint))?;
                if est.lambda.is_finite() && est.lambda > 0.0 {
                    weighted_hint = Some(est.lambda);
                }
                penalized = Some(est);
            }
        }
    }

    let out = output.expect("loop runs at least once");
    Ok(RecoveryOutput {
        coeff_vectors: solver.coeff_vectors(&out.b),
        estimate: out.signal,
        jump_set: cos.removed_rows(),
        iterations: history.len(),
        residual_history: history,
        converged,
        bound_unmet: out.bound_unmet,
    })
}
