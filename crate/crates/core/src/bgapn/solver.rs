//! Cosupport-restricted least squares under a residual-norm constraint.
//!
//! Unknowns are stored node-major: `b[i * nb + j]` is coefficient `j` at sample (pixel) `i`.
//! The quadratic form `H` collects `sum_j ||Omega_Lambda b_j||^2` and the optional weighted
//! continuity term; `B = M X` maps coefficients to measurements.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::Cosupport;
use crate::error::{invalid, Error, Result};
use crate::linalg::{expand_blocks, grid_nested_dissection, SymbolicCholesky};
use crate::operators::{AnalysisOperator, MeasurementOperator, Parameterization};
use crate::projection::solve_min_norm;

/// Which regime of the constrained problem produced a solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Branch {
    /// The penalty-free minimizer already meets the residual bound.
    Inactive,
    /// Interior multiplier found by the search on `lambda`.
    Lagrangian,
    /// `lambda -> infinity`: penalty minimized over the least-squares solutions.
    Equality,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CosupportSolution {
    /// Coefficient vectors in the caller's parameterization convention.
    pub coeff_vectors: Vec<Vec<f64>>,
    pub signal: Vec<f64>,
    pub residual_norm: f64,
    /// Multiplier of the residual term: 0 for [`Branch::Inactive`], infinite for [`Branch::Equality`].
    pub lambda: f64,
    pub branch: Branch,
    pub bound_unmet: bool,
}

#[derive(Debug, Clone)]
pub(crate) struct RawSolution {
    pub b: Vec<f64>,
    pub signal: Vec<f64>,
    pub residual_norm: f64,
    pub lambda: f64,
    pub branch: Branch,
    pub bound_unmet: bool,
}

/// Solver options shared with the outer pursuit.
#[derive(Debug, Clone, Copy)]
pub(crate) struct SolverOptions {
    pub noise_norm: f64,
    pub bound_tolerance: f64,
    pub ls_tolerance: f64,
    pub tikhonov: f64,
}

/// Reusable state for repeated cosupport solves on one problem instance.
pub struct CosupportSolver<'a> {
    g: &'a [f64],
    m: &'a MeasurementOperator,
    user: &'a Parameterization,
    internal: Parameterization,
    d: usize,
    nb: usize,
    w: Vec<f64>,
    rows: Vec<(usize, usize)>,
    edges: Vec<(usize, usize)>,
    edge_of_row: Vec<usize>,
    opts: SolverOptions,
    tol_abs: f64,
    backend: Backend,
}

enum Backend {
    Sparse(Box<SparseBackend>),
    Dense(Box<DenseBackend>),
}

struct SparseBackend {
    full: SlotLayout,
    reduced: Option<SlotLayout>,
    /// Per node: index of the coefficient eliminated by the interpolation constraint.
    pivot: Vec<usize>,
}

struct SlotLayout {
    bs: usize,
    symbolic: SymbolicCholesky,
}

struct DenseBackend {
    btb: DMatrix<f64>,
    btg: DVector<f64>,
    /// Least-squares solution of minimum norm and its residual.
    particular: DVector<f64>,
    floor: f64,
    /// Orthonormal basis of the null space of `b`.
    null: DMatrix<f64>,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

impl<'a> CosupportSolver<'a> {
    pub(crate) fn with_options(
        g: &'a [f64],
        m: &'a MeasurementOperator,
        param: &'a Parameterization,
        omega: &'a AnalysisOperator,
        opts: SolverOptions,
    ) -> Result<Self> {
        let d = param.dim();
        crate::error::check_len("measurement operator columns", d, m.cols())?;
        crate::error::check_len("analysis operator columns", d, omega.cols())?;
        crate::error::check_len("measurements", m.rows(), g.len())?;
        if !(opts.noise_norm >= 0.0) || !opts.noise_norm.is_finite() {
            return Err(invalid(format!("noise norm must be finite and >= 0, got {}", opts.noise_norm)));
        }
        let internal = param.normalized();
        let nb = internal.len();
        let mut w = vec![0.0; d * nb];
        for j in 0..nb {
            for (i, &x) in internal.weight(j).iter().enumerate() {
                w[i * nb + j] = x;
            }
        }
        let rows: Vec<(usize, usize)> = omega.iter_rows().collect();
        let mut edges: Vec<(usize, usize)> = rows.iter().map(|&(a, b)| (a.min(b), a.max(b))).collect();
        edges.sort_unstable();
        edges.dedup();
        let edge_of_row = rows
            .iter()
            .map(|&(a, b)| edges.binary_search(&(a.min(b), a.max(b))).expect("edge present"))
            .collect();

        let g_norm = norm(g);
        let tol_abs = (opts.bound_tolerance * opts.noise_norm).max(1e-12 * g_norm);
        let weighted_everywhere = (0..d).all(|i| w[i * nb..(i + 1) * nb].iter().any(|&x| x != 0.0));

        let backend = if m.is_identity() && weighted_everywhere {
            let nodes: Vec<usize> = match omega.geometry().grid() {
                Some((h, wd)) if h * wd == d => grid_nested_dissection(h, wd),
                _ => (0..d).collect(),
            };
            let full = SlotLayout::new(d, nb, &edges, &nodes);
            let reduced = (nb > 1).then(|| SlotLayout::new(d, nb - 1, &edges, &nodes));
            let pivot = (0..d)
                .map(|i| {
                    let wi = &w[i * nb..(i + 1) * nb];
                    (0..nb).fold(0, |best, j| if wi[j].abs() > wi[best].abs() { j } else { best })
                })
                .collect();
            Backend::Sparse(Box::new(SparseBackend { full, reduced, pivot }))
        } else {
            Backend::Dense(Box::new(DenseBackend::new(g, m, &w, d, nb)?))
        };
        Ok(Self {
            g,
            m,
            user: param,
            internal,
            d,
            nb,
            w,
            rows,
            edges,
            edge_of_row,
            opts,
            tol_abs,
            backend,
        })
    }

    pub(crate) fn nb(&self) -> usize {
        self.nb
    }

    pub(crate) fn rows(&self) -> &[(usize, usize)] {
        &self.rows
    }

    fn wi(&self, i: usize) -> &[f64] {
        &self.w[i * self.nb..(i + 1) * self.nb]
    }

    pub(crate) fn synthesize(&self, b: &[f64]) -> Vec<f64> {
        (0..self.d)
            .map(|i| self.wi(i).iter().zip(&b[i * self.nb..(i + 1) * self.nb]).map(|(a, c)| a * c).sum())
            .collect()
    }

    fn residual_norm(&self, signal: &[f64]) -> f64 {
        let mf = self.m.apply(signal);
        self.g.iter().zip(&mf).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
    }

    /// Converts internal node-major coefficients to the caller's coefficient vectors.
    pub(crate) fn coeff_vectors(&self, b: &[f64]) -> Vec<Vec<f64>> {
        let mut out: Vec<Vec<f64>> = (0..self.nb)
            .map(|j| (0..self.d).map(|i| b[i * self.nb + j]).collect())
            .collect();
        self.user.convert_coeffs(&self.internal, &mut out);
        out
    }

    pub(crate) fn publish(&self, raw: RawSolution) -> CosupportSolution {
        CosupportSolution {
            coeff_vectors: self.coeff_vectors(&raw.b),
            signal: raw.signal,
            residual_norm: raw.residual_norm,
            lambda: raw.lambda,
            branch: raw.branch,
            bound_unmet: raw.bound_unmet,
        }
    }

    /// Solves the problem for cosupport `cos`. With `gamma > 0` the rows outside `cos` carry
    /// the continuity penalty. `hint` is a starting multiplier for the search.
    pub(crate) fn solve_raw(&self, cos: &Cosupport, gamma: f64, hint: Option<f64>) -> Result<RawSolution> {
        let weighted = gamma > 0.0 && cos.len() < self.rows.len();
        let eta = self.opts.noise_norm;

        let (b, signal) = self.inactive(cos, weighted)?;
        let r = self.residual_norm(&signal);
        if r <= eta + self.tol_abs {
            return Ok(RawSolution {
                b,
                signal,
                residual_norm: r,
                lambda: 0.0,
                branch: Branch::Inactive,
                bound_unmet: false,
            });
        }

        let floor = match &self.backend {
            Backend::Sparse(_) => 0.0,
            Backend::Dense(dense) => dense.floor,
        };
        if eta <= floor + self.tol_abs {
            let b = self.equality(cos, gamma, weighted)?;
            let signal = self.synthesize(&b);
            let r = self.residual_norm(&signal);
            return Ok(RawSolution {
                b,
                signal,
                residual_norm: r,
                lambda: f64::INFINITY,
                branch: Branch::Equality,
                bound_unmet: r > eta + self.tol_abs,
            });
        }
        self.lagrangian(cos, gamma, weighted, hint)
    }

    /// Node-level blocks of the penalty form: `(diag blocks, edge blocks)`, each `nb x nb`
    /// row-major. Edge block `e = (lo, hi)` holds `H[(lo, a), (hi, c)]`.
    fn penalty_blocks(&self, cos: &Cosupport, gamma: f64, weighted: bool) -> (Vec<f64>, Vec<f64>) {
        let nb = self.nb;
        let nb2 = nb * nb;
        let mut diag = vec![0.0; self.d * nb2];
        let mut edge = vec![0.0; self.edges.len() * nb2];
        for (r, &(p, q)) in self.rows.iter().enumerate() {
            let e = self.edge_of_row[r];
            let (lo, hi) = self.edges[e];
            if cos.contains(r) {
                for a in 0..nb {
                    diag[p * nb2 + a * nb + a] += 1.0;
                    diag[q * nb2 + a * nb + a] += 1.0;
                    edge[e * nb2 + a * nb + a] -= 1.0;
                }
            } else if weighted {
                let (wp, wq) = (self.wi(p), self.wi(q));
                let (wl, wh) = (self.wi(lo), self.wi(hi));
                for a in 0..nb {
                    for c in 0..nb {
                        diag[p * nb2 + a * nb + c] += gamma * wp[a] * wp[c];
                        diag[q * nb2 + a * nb + c] += gamma * wq[a] * wq[c];
                        edge[e * nb2 + a * nb + c] -= gamma * wl[a] * wh[c];
                    }
                }
            }
        }
        (diag, edge)
    }

    fn dense_penalty(&self, cos: &Cosupport, gamma: f64, weighted: bool) -> DMatrix<f64> {
        let nb = self.nb;
        let n = self.d * nb;
        let mut h = DMatrix::zeros(n, n);
        for (r, &(p, q)) in self.rows.iter().enumerate() {
            if cos.contains(r) {
                for a in 0..nb {
                    let (ip, iq) = (p * nb + a, q * nb + a);
                    h[(ip, ip)] += 1.0;
                    h[(iq, iq)] += 1.0;
                    h[(ip, iq)] -= 1.0;
                    h[(iq, ip)] -= 1.0;
                }
            } else if weighted {
                let mut u = Vec::with_capacity(2 * nb);
                for a in 0..nb {
                    u.push((p * nb + a, self.wi(p)[a]));
                    u.push((q * nb + a, -self.wi(q)[a]));
                }
                for &(i, x) in &u {
                    for &(k, y) in &u {
                        h[(i, k)] += gamma * x * y;
                    }
                }
            }
        }
        h
    }

    /// Labels of the connected components of the sample graph restricted to `cos`.
    fn components(&self, cos: &Cosupport) -> (Vec<usize>, usize) {
        let mut parent: Vec<usize> = (0..self.d).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for (r, &(p, q)) in self.rows.iter().enumerate() {
            if cos.contains(r) {
                let (a, b) = (find(&mut parent, p), find(&mut parent, q));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
        let mut label = vec![usize::MAX; self.d];
        let mut count = 0;
        let mut out = vec![0; self.d];
        for i in 0..self.d {
            let root = find(&mut parent, i);
            if label[root] == usize::MAX {
                label[root] = count;
                count += 1;
            }
            out[i] = label[root];
        }
        (out, count)
    }

    /// Limit `lambda -> 0`: the measurement fit of minimum residual among zero-penalty points.
    fn inactive(&self, cos: &Cosupport, weighted: bool) -> Result<(Vec<f64>, Vec<f64>)> {
        let nb = self.nb;
        let (comp, count) = self.components(cos);
        let nz = count * nb;

        if !weighted && self.m.is_identity() {
            let mut members: Vec<Vec<usize>> = vec![Vec::new(); count];
            for (i, &c) in comp.iter().enumerate() {
                members[c].push(i);
            }
            let mut b = vec![0.0; self.d * nb];
            for nodes in &members {
                let mut a = DMatrix::zeros(nodes.len(), nb);
                let mut rhs = DVector::zeros(nodes.len());
                for (k, &i) in nodes.iter().enumerate() {
                    for j in 0..nb {
                        a[(k, j)] = self.wi(i)[j];
                    }
                    rhs[k] = self.g[i];
                }
                let z = solve_min_norm(a, &rhs);
                for &i in nodes {
                    b[i * nb..(i + 1) * nb].copy_from_slice(&z);
                }
            }
            let signal = self.synthesize(&b);
            return Ok((b, signal));
        }

        // columns of X P: the signal produced by one (component, coefficient) pair
        let mut xp = DMatrix::zeros(self.d, nz);
        for (i, &c) in comp.iter().enumerate() {
            for j in 0..nb {
                xp[(i, c * nb + j)] = self.wi(i)[j];
            }
        }
        let basis = if weighted {
            let removed: Vec<usize> = (0..self.rows.len()).filter(|&r| !cos.contains(r)).collect();
            let mut cons = DMatrix::zeros(removed.len(), nz);
            for (k, &r) in removed.iter().enumerate() {
                let (p, q) = self.rows[r];
                for j in 0..nb {
                    cons[(k, comp[p] * nb + j)] += self.wi(p)[j];
                    cons[(k, comp[q] * nb + j)] -= self.wi(q)[j];
                }
            }
            Some(null_space(&cons))
        } else {
            None
        };
        let design = match &basis {
            Some(k) => &xp * k,
            None => xp.clone(),
        };
        let system = match self.m {
            MeasurementOperator::Identity { .. } => design,
            MeasurementOperator::Dense { matrix, .. } => matrix * design,
        };
        let y = DVector::from_vec(solve_min_norm(system, &DVector::from_column_slice(self.g)));
        let z = match &basis {
            Some(k) => k * y,
            None => y,
        };
        let mut b = vec![0.0; self.d * nb];
        for (i, &c) in comp.iter().enumerate() {
            for j in 0..nb {
                b[i * nb + j] = z[c * nb + j];
            }
        }
        let signal = self.synthesize(&b);
        Ok((b, signal))
    }

    /// Limit `lambda -> infinity`.
    fn equality(&self, cos: &Cosupport, gamma: f64, weighted: bool) -> Result<Vec<f64>> {
        match &self.backend {
            Backend::Sparse(sparse) => self.sparse_equality(sparse, cos, gamma, weighted),
            Backend::Dense(dense) => self.dense_equality(dense, cos, gamma, weighted),
        }
    }

    fn lagrangian(&self, cos: &Cosupport, gamma: f64, weighted: bool, hint: Option<f64>) -> Result<RawSolution> {
        let eta = self.opts.noise_norm;
        enum Prepared {
            Sparse(Vec<f64>, Vec<f64>),
            Dense(DMatrix<f64>),
        }
        let prepared = match &self.backend {
            Backend::Sparse(_) => {
                let (diag, edge) = self.penalty_blocks(cos, gamma, weighted);
                Prepared::Sparse(diag, edge)
            }
            Backend::Dense(_) => Prepared::Dense(self.dense_penalty(cos, gamma, weighted)),
        };
        let eval = |s: f64| -> Result<(Vec<f64>, Vec<f64>, f64)> {
            let lambda = s.exp();
            let b = match (&self.backend, &prepared) {
                (Backend::Sparse(sp), Prepared::Sparse(diag, edge)) => self.sparse_lagrangian(sp, diag, edge, lambda)?,
                (Backend::Dense(de), Prepared::Dense(h)) => self.dense_lagrangian(de, h, lambda)?,
                _ => unreachable!("backend and prepared form agree"),
            };
            let signal = self.synthesize(&b);
            let r = self.residual_norm(&signal);
            Ok((b, signal, r))
        };

        // phi(s) = ln(r / eta) decreases in s = ln(lambda); bracket the root first
        let phi = |r: f64| (r / eta).ln();
        let step = std::f64::consts::LN_10;
        let s0 = hint.filter(|h| h.is_finite() && *h > 0.0).map_or(0.0, f64::ln);
        let first = eval(s0)?;
        let (mut lo, mut hi);
        if first.2 > eta {
            lo = (s0, phi(first.2));
            let mut s = s0;
            let mut found = None;
            for _ in 0..40 {
                s += step;
                let cand = eval(s)?;
                if cand.2 <= eta {
                    found = Some((s, cand));
                    break;
                }
                lo = (s, phi(cand.2));
            }
            match found {
                Some(v) => hi = v,
                None => {
                    let b = self.equality(cos, gamma, weighted)?;
                    let signal = self.synthesize(&b);
                    let r = self.residual_norm(&signal);
                    return Ok(RawSolution {
                        b,
                        signal,
                        residual_norm: r,
                        lambda: f64::INFINITY,
                        branch: Branch::Equality,
                        bound_unmet: r > eta + self.tol_abs,
                    });
                }
            }
        } else {
            hi = (s0, first);
            let mut s = s0;
            loop {
                s -= step;
                let cand = eval(s)?;
                if cand.2 > eta {
                    lo = (s, phi(cand.2));
                    break;
                }
                hi = (s, cand);
                if s < -700.0 {
                    return Err(Error::Numerical("multiplier search failed to bracket the residual bound".into()));
                }
            }
        }

        // Illinois regula falsi on phi, keeping the feasible endpoint
        let mut f_lo = lo.1;
        let mut f_hi = phi(hi.1 .2);
        let mut side = 0i8;
        for _ in 0..60 {
            if eta - hi.1 .2 <= self.tol_abs || hi.0 - lo.0 < 1e-12 {
                break;
            }
            let mut s = hi.0 - f_hi * (hi.0 - lo.0) / (f_hi - f_lo);
            if !(s > lo.0 && s < hi.0) {
                s = 0.5 * (lo.0 + hi.0);
            }
            let cand = eval(s)?;
            let f = phi(cand.2);
            if cand.2 <= eta {
                hi = (s, cand);
                f_hi = f;
                if side == 1 {
                    f_lo *= 0.5;
                }
                side = 1;
            } else {
                lo = (s, f);
                f_lo = f;
                if side == -1 {
                    f_hi *= 0.5;
                }
                side = -1;
            }
        }
        let (s, (b, signal, r)) = hi;
        Ok(RawSolution {
            b,
            signal,
            residual_norm: r,
            lambda: s.exp(),
            branch: Branch::Lagrangian,
            bound_unmet: false,
        })
    }

    fn sparse_lagrangian(&self, sp: &SparseBackend, diag: &[f64], edge: &[f64], lambda: f64) -> Result<Vec<f64>> {
        let nb = self.nb;
        let nb2 = nb * nb;
        let mut dl = diag.to_vec();
        let mut rhs = vec![0.0; self.d * nb];
        for i in 0..self.d {
            let wi = self.wi(i);
            for a in 0..nb {
                for c in 0..nb {
                    dl[i * nb2 + a * nb + c] += lambda * wi[a] * wi[c];
                }
                rhs[i * nb + a] = lambda * self.g[i] * wi[a];
            }
        }
        self.block_solve(&sp.full, &dl, edge, &rhs)
    }

    fn sparse_equality(&self, sp: &SparseBackend, cos: &Cosupport, gamma: f64, weighted: bool) -> Result<Vec<f64>> {
        let nb = self.nb;
        let nb2 = nb * nb;
        // particular solution: pivot coefficient alone reproduces g
        let mut p = vec![0.0; self.d * nb];
        for i in 0..self.d {
            let k = sp.pivot[i];
            p[i * nb + k] = self.g[i] / self.wi(i)[k];
        }
        let Some(layout) = &sp.reduced else {
            return Ok(p);
        };
        let (diag, edge) = self.penalty_blocks(cos, gamma, weighted);
        let bs = nb - 1;
        // null-space basis per node, nb x bs row-major
        let basis: Vec<Vec<f64>> = (0..self.d)
            .map(|i| {
                let k = sp.pivot[i];
                let wi = self.wi(i);
                let mut n = vec![0.0; nb * bs];
                for (col, j) in (0..nb).filter(|&j| j != k).enumerate() {
                    n[j * bs + col] = 1.0;
                    n[k * bs + col] = -wi[j] / wi[k];
                }
                n
            })
            .collect();
        let hp = apply_blocks(nb, &self.edges, &diag, &edge, &p);
        let congruence = |left: &[f64], m: &[f64], right: &[f64]| -> Vec<f64> {
            // left^T m right with left, right nb x bs and m nb x nb
            let mut tmp = vec![0.0; nb * bs];
            for a in 0..nb {
                for c in 0..bs {
                    tmp[a * bs + c] = (0..nb).map(|k| m[a * nb + k] * right[k * bs + c]).sum();
                }
            }
            let mut out = vec![0.0; bs * bs];
            for a in 0..bs {
                for c in 0..bs {
                    out[a * bs + c] = (0..nb).map(|k| left[k * bs + a] * tmp[k * bs + c]).sum();
                }
            }
            out
        };
        let mut rdiag = Vec::with_capacity(self.d * bs * bs);
        let mut rhs = vec![0.0; self.d * bs];
        for i in 0..self.d {
            rdiag.extend(congruence(&basis[i], &diag[i * nb2..(i + 1) * nb2], &basis[i]));
            for c in 0..bs {
                rhs[i * bs + c] = -(0..nb).map(|k| basis[i][k * bs + c] * hp[i * nb + k]).sum::<f64>();
            }
        }
        let mut redge = Vec::with_capacity(self.edges.len() * bs * bs);
        for (e, &(lo, hi)) in self.edges.iter().enumerate() {
            redge.extend(congruence(&basis[lo], &edge[e * nb2..(e + 1) * nb2], &basis[hi]));
        }
        let z = self.block_solve(layout, &rdiag, &redge, &rhs)?;
        let mut b = p;
        for i in 0..self.d {
            for k in 0..nb {
                b[i * nb + k] += (0..bs).map(|c| basis[i][k * bs + c] * z[i * bs + c]).sum::<f64>();
            }
        }
        Ok(b)
    }

    /// Solves the block system with a trace-scaled ridge, then refines toward the unridged system.
    fn block_solve(&self, layout: &SlotLayout, diag: &[f64], edge: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
        let bs = layout.bs;
        let n = self.d * bs;
        let trace: f64 = (0..self.d).map(|i| (0..bs).map(|a| diag[i * bs * bs + a * bs + a]).sum::<f64>()).sum();
        let ridge = self.opts.tikhonov * (trace / n as f64).max(f64::MIN_POSITIVE);
        let values = layout.values(self.d, &self.edges, diag, edge, ridge);
        let num = layout.symbolic.factor(&values)?;
        let x = layout.symbolic.solve(&num, rhs);
        Ok(self.refine(rhs, x, |v| apply_blocks(bs, &self.edges, diag, edge, v), |r| {
            layout.symbolic.solve(&num, r)
        }))
    }

    fn refine(
        &self,
        rhs: &[f64],
        mut x: Vec<f64>,
        apply: impl Fn(&[f64]) -> Vec<f64>,
        solve: impl Fn(&[f64]) -> Vec<f64>,
    ) -> Vec<f64> {
        let scale = norm(rhs);
        for _ in 0..4 {
            let ax = apply(&x);
            let r: Vec<f64> = rhs.iter().zip(&ax).map(|(a, b)| a - b).collect();
            if norm(&r) <= self.opts.ls_tolerance * scale {
                break;
            }
            let dx = solve(&r);
            x.iter_mut().zip(&dx).for_each(|(a, b)| *a += b);
        }
        x
    }

    fn dense_lagrangian(&self, de: &DenseBackend, h: &DMatrix<f64>, lambda: f64) -> Result<Vec<f64>> {
        let a = h + &de.btb * lambda;
        let rhs = &de.btg * lambda;
        Ok(self.dense_solve(a, rhs).as_slice().to_vec())
    }

    fn dense_solve(&self, a: DMatrix<f64>, rhs: DVector<f64>) -> DVector<f64> {
        let n = a.nrows();
        let ridge = self.opts.tikhonov * (a.trace() / n as f64).max(f64::MIN_POSITIVE);
        let mut ar = a.clone();
        for i in 0..n {
            ar[(i, i)] += ridge;
        }
        let chol = match ar.clone().cholesky() {
            Some(c) => c,
            None => {
                // semidefinite up to rounding: fall back to a minimum-norm solve
                return DVector::from_vec(solve_min_norm(ar, &rhs));
            }
        };
        let x = chol.solve(&rhs);
        let x = self.refine(
            rhs.as_slice(),
            x.as_slice().to_vec(),
            |v| (&a * DVector::from_column_slice(v)).as_slice().to_vec(),
            |r| chol.solve(&DVector::from_column_slice(r)).as_slice().to_vec(),
        );
        DVector::from_vec(x)
    }

    fn dense_equality(&self, de: &DenseBackend, cos: &Cosupport, gamma: f64, weighted: bool) -> Result<Vec<f64>> {
        let h = self.dense_penalty(cos, gamma, weighted);
        if de.null.ncols() == 0 {
            return Ok(de.particular.as_slice().to_vec());
        }
        let hz = &h * &de.null;
        let s = de.null.transpose() * &hz;
        let rhs = -(hz.transpose() * &de.particular);
        let y = self.dense_solve(s, rhs);
        Ok((&de.particular + &de.null * y).as_slice().to_vec())
    }

    /// `sum_j ||Omega_Lambda b_j||^2 + gamma ||W Omega X b||^2`, measured in the normalized
    /// coordinates the solver works in. `coeff_vectors` follow the caller's convention.
    pub fn objective(&self, cos: &Cosupport, gamma: f64, coeff_vectors: &[Vec<f64>]) -> f64 {
        let nb = self.nb;
        let mut internal = coeff_vectors.to_vec();
        self.internal.convert_coeffs(self.user, &mut internal);
        let mut b = vec![0.0; self.d * nb];
        for (j, v) in internal.iter().enumerate() {
            for (i, x) in v.iter().enumerate() {
                b[i * nb + j] = *x;
            }
        }
        let f = self.synthesize(&b);
        let mut total = 0.0;
        for (r, &(p, q)) in self.rows.iter().enumerate() {
            if cos.contains(r) {
                total += (0..nb).map(|j| (b[p * nb + j] - b[q * nb + j]).powi(2)).sum::<f64>();
            } else if gamma > 0.0 {
                total += gamma * (f[p] - f[q]).powi(2);
            }
        }
        total
    }
}

impl SlotLayout {
    fn new(d: usize, bs: usize, edges: &[(usize, usize)], nodes: &[usize]) -> Self {
        let mut entries = Vec::with_capacity(d * bs * (bs + 1) / 2 + edges.len() * bs * bs);
        for v in 0..d {
            for a in 0..bs {
                for c in 0..=a {
                    entries.push((v * bs + a, v * bs + c));
                }
            }
        }
        for &(lo, hi) in edges {
            for a in 0..bs {
                for c in 0..bs {
                    entries.push((hi * bs + a, lo * bs + c));
                }
            }
        }
        let symbolic = SymbolicCholesky::new(d * bs, &entries, expand_blocks(nodes, bs));
        Self { bs, symbolic }
    }

    fn values(&self, d: usize, edges: &[(usize, usize)], diag: &[f64], edge: &[f64], ridge: f64) -> Vec<f64> {
        let bs = self.bs;
        let mut out = Vec::with_capacity(d * bs * (bs + 1) / 2 + edges.len() * bs * bs);
        for v in 0..d {
            for a in 0..bs {
                for c in 0..=a {
                    let x = diag[v * bs * bs + a * bs + c];
                    out.push(if a == c { x + ridge } else { x });
                }
            }
        }
        for e in 0..edges.len() {
            // entry (hi, a; lo, c) is the transpose of the stored (lo, c; hi, a)
            for a in 0..bs {
                for c in 0..bs {
                    out.push(edge[e * bs * bs + c * bs + a]);
                }
            }
        }
        out
    }
}

fn apply_blocks(bs: usize, edges: &[(usize, usize)], diag: &[f64], edge: &[f64], x: &[f64]) -> Vec<f64> {
    let d = x.len() / bs;
    let b2 = bs * bs;
    let mut y = vec![0.0; x.len()];
    for v in 0..d {
        for a in 0..bs {
            y[v * bs + a] = (0..bs).map(|c| diag[v * b2 + a * bs + c] * x[v * bs + c]).sum();
        }
    }
    for (e, &(lo, hi)) in edges.iter().enumerate() {
        let blk = &edge[e * b2..(e + 1) * b2];
        for a in 0..bs {
            for c in 0..bs {
                let m = blk[a * bs + c];
                y[lo * bs + a] += m * x[hi * bs + c];
                y[hi * bs + c] += m * x[lo * bs + a];
            }
        }
    }
    y
}

/// Orthonormal basis of the null space of `a` (columns).
fn null_space(a: &DMatrix<f64>) -> DMatrix<f64> {
    let cols = a.ncols();
    if a.nrows() == 0 {
        return DMatrix::identity(cols, cols);
    }
    let padded = if a.nrows() < cols {
        let mut p = DMatrix::zeros(cols, cols);
        p.rows_mut(0, a.nrows()).copy_from(a);
        p
    } else {
        a.clone()
    };
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("v computed");
    let smax = svd.singular_values.max();
    let tol = smax * 1e-10;
    let keep: Vec<usize> = (0..svd.singular_values.len()).filter(|&i| svd.singular_values[i] <= tol).collect();
    let mut out = DMatrix::zeros(cols, keep.len());
    for (k, &i) in keep.iter().enumerate() {
        out.set_column(k, &v_t.row(i).transpose());
    }
    out
}

impl DenseBackend {
    fn new(g: &[f64], m: &MeasurementOperator, w: &[f64], d: usize, nb: usize) -> Result<Self> {
        let md = m.to_dense();
        let rows = md.nrows();
        let n = d * nb;
        let mut b = DMatrix::zeros(rows, n);
        for i in 0..d {
            for j in 0..nb {
                let wij = w[i * nb + j];
                if wij != 0.0 {
                    b.set_column(i * nb + j, &(md.column(i) * wij));
                }
            }
        }
        let gv = DVector::from_column_slice(g);
        let btb = b.transpose() * &b;
        let btg = b.transpose() * &gv;

        let padded = if rows < n {
            let mut p = DMatrix::zeros(n, n);
            p.rows_mut(0, rows).copy_from(&b);
            p
        } else {
            b.clone()
        };
        let svd = padded.svd(true, true);
        let (u, v_t) = (svd.u.expect("u computed"), svd.v_t.expect("v computed"));
        let sv = &svd.singular_values;
        let tol = sv.max() * 1e-10;
        let mut particular = DVector::zeros(n);
        let mut null_idx = Vec::new();
        for k in 0..sv.len() {
            if sv[k] > tol {
                let coef = (0..rows).map(|r| u[(r, k)] * g[r]).sum::<f64>() / sv[k];
                particular += v_t.row(k).transpose() * coef;
            } else {
                null_idx.push(k);
            }
        }
        // a tall matrix yields n singular triplets; the null space is then spanned by the small ones
        let mut null = DMatrix::zeros(n, null_idx.len());
        for (c, &k) in null_idx.iter().enumerate() {
            null.set_column(c, &v_t.row(k).transpose());
        }
        let fit = &b * &particular;
        let floor = (gv - fit).norm();
        if !floor.is_finite() {
            return Err(Error::Numerical("measurement system is not finite".into()));
        }
        Ok(Self {
            btb,
            btg,
            particular,
            floor,
            null,
        })
    }
}
