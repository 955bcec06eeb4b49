//! Simplicial sparse Cholesky for symmetric positive definite systems with a fixed pattern.
//!
//! The pattern is given once as lower-triangle coordinates; the symbolic analysis (elimination
//! tree, column patterns of `L`) is reused for every numeric factorization.

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct SymbolicCholesky {
    n: usize,
    perm: Vec<usize>,
    /// For permuted column `j`: `(permuted row >= j, slot)` pairs of the input entries.
    a_cols: Vec<Vec<(usize, usize)>>,
    /// Strict lower pattern of `L`, column compressed.
    lp: Vec<usize>,
    li: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct NumericCholesky {
    diag: Vec<f64>,
    lx: Vec<f64>,
}

impl SymbolicCholesky {
    /// `entries[s] = (row, col)` with `row >= col`; slot `s` indexes the value array later.
    /// `perm[new] = old` is the elimination order.
    pub fn new(n: usize, entries: &[(usize, usize)], perm: Vec<usize>) -> Self {
        debug_assert_eq!(perm.len(), n);
        let mut iperm = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            iperm[old] = new;
        }
        let mut a_cols: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
        for (slot, &(r, c)) in entries.iter().enumerate() {
            let (pr, pc) = (iperm[r], iperm[c]);
            let (hi, lo) = if pr >= pc { (pr, pc) } else { (pc, pr) };
            a_cols[lo].push((hi, slot));
        }
        for col in &mut a_cols {
            col.sort_unstable();
        }

        // column patterns: own entries plus children's patterns, children precede parents
        let mut pending: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut lp = Vec::with_capacity(n + 1);
        let mut li = Vec::new();
        lp.push(0);
        for j in 0..n {
            let mut pat: Vec<usize> = a_cols[j].iter().map(|&(r, _)| r).filter(|&r| r > j).collect();
            pat.append(&mut pending[j]);
            pat.sort_unstable();
            pat.dedup();
            if let Some(&parent) = pat.first() {
                let child_rows: Vec<usize> = pat.iter().copied().filter(|&r| r > parent).collect();
                pending[parent].extend(child_rows);
            }
            li.extend_from_slice(&pat);
            lp.push(li.len());
        }
        Self {
            n,
            perm,
            a_cols,
            lp,
            li,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz_l(&self) -> usize {
        self.li.len() + self.n
    }

    /// Left-looking numeric factorization of the matrix whose entries are `values[slot]`.
    pub fn factor(&self, values: &[f64]) -> Result<NumericCholesky> {
        let n = self.n;
        let mut diag = vec![0.0; n];
        let mut lx = vec![0.0; self.li.len()];
        let mut work = vec![0.0; n];
        // linked lists of columns k whose next unprocessed row is j
        let mut head = vec![usize::MAX; n];
        let mut link = vec![usize::MAX; n];
        let mut next = vec![0usize; n];

        for j in 0..n {
            for &(r, slot) in &self.a_cols[j] {
                work[r] += values[slot];
            }
            let mut k = head[j];
            while k != usize::MAX {
                let following = link[k];
                let p0 = next[k];
                let ljk = lx[p0];
                for p in p0..self.lp[k + 1] {
                    work[self.li[p]] -= lx[p] * ljk;
                }
                let p1 = p0 + 1;
                next[k] = p1;
                if p1 < self.lp[k + 1] {
                    let r = self.li[p1];
                    link[k] = head[r];
                    head[r] = k;
                }
                k = following;
            }
            let pivot = work[j];
            work[j] = 0.0;
            if !(pivot > 0.0) || !pivot.is_finite() {
                for p in self.lp[j]..self.lp[j + 1] {
                    work[self.li[p]] = 0.0;
                }
                return Err(Error::Numerical(format!(
                    "matrix is not positive definite (pivot {pivot:e} at column {j})"
                )));
            }
            let ljj = pivot.sqrt();
            diag[j] = ljj;
            for p in self.lp[j]..self.lp[j + 1] {
                let r = self.li[p];
                lx[p] = work[r] / ljj;
                work[r] = 0.0;
            }
            if self.lp[j] < self.lp[j + 1] {
                next[j] = self.lp[j];
                let r = self.li[self.lp[j]];
                link[j] = head[r];
                head[r] = j;
            }
        }
        Ok(NumericCholesky { diag, lx })
    }

    /// Solves `A x = b` with a factorization produced by [`Self::factor`].
    pub fn solve(&self, num: &NumericCholesky, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut y: Vec<f64> = self.perm.iter().map(|&old| b[old]).collect();
        for j in 0..n {
            let yj = y[j] / num.diag[j];
            y[j] = yj;
            for p in self.lp[j]..self.lp[j + 1] {
                y[self.li[p]] -= num.lx[p] * yj;
            }
        }
        for j in (0..n).rev() {
            let mut s = y[j];
            for p in self.lp[j]..self.lp[j + 1] {
                s -= num.lx[p] * y[self.li[p]];
            }
            y[j] = s / num.diag[j];
        }
        let mut x = vec![0.0; n];
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = y[new];
        }
        x
    }
}

/// Nested dissection order of the nodes of an `h x w` grid (row-major ids).
///
/// Separators are whole grid lines, which also split the diagonal neighbours.
pub fn grid_nested_dissection(h: usize, w: usize) -> Vec<usize> {
    fn recurse(r0: usize, r1: usize, c0: usize, c1: usize, w: usize, out: &mut Vec<usize>) {
        let (rows, cols) = (r1 - r0, c1 - c0);
        if rows == 0 || cols == 0 {
            return;
        }
        if rows * cols <= 16 || rows < 3 && cols < 3 {
            for r in r0..r1 {
                for c in c0..c1 {
                    out.push(r * w + c);
                }
            }
            return;
        }
        if rows >= cols {
            let mid = r0 + rows / 2;
            recurse(r0, mid, c0, c1, w, out);
            recurse(mid + 1, r1, c0, c1, w, out);
            out.extend((c0..c1).map(|c| mid * w + c));
        } else {
            let mid = c0 + cols / 2;
            recurse(r0, r1, c0, mid, w, out);
            recurse(r0, r1, mid + 1, c1, w, out);
            out.extend((r0..r1).map(|r| r * w + mid));
        }
    }
    let mut out = Vec::with_capacity(h * w);
    recurse(0, h, 0, w, w, &mut out);
    out
}

/// Expands a node order to the scalar order of `block`-sized node blocks.
pub fn expand_blocks(nodes: &[usize], block: usize) -> Vec<usize> {
    nodes
        .iter()
        .flat_map(|&v| (0..block).map(move |a| v * block + a))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn random_spd_on_grid(h: usize, w: usize) -> (Vec<(usize, usize)>, Vec<f64>, DMatrix<f64>) {
        let n = h * w;
        let mut entries = Vec::new();
        let mut values = Vec::new();
        let mut dense = DMatrix::zeros(n, n);
        let mut seed = 0.3f64;
        let mut rnd = || {
            seed = (seed * 9301.0 + 0.49297).fract();
            seed - 0.5
        };
        for r in 0..h {
            for c in 0..w {
                let v = r * w + c;
                let mut nb = Vec::new();
                if c + 1 < w {
                    nb.push(v + 1);
                }
                if r + 1 < h {
                    nb.push(v + w);
                    if c + 1 < w {
                        nb.push(v + w + 1);
                    }
                }
                for q in nb {
                    let x = rnd();
                    entries.push((q, v));
                    values.push(x);
                    dense[(q, v)] = x;
                    dense[(v, q)] = x;
                }
            }
        }
        for v in 0..n {
            entries.push((v, v));
            values.push(10.0);
            dense[(v, v)] = 10.0;
        }
        (entries, values, dense)
    }

    #[test]
    fn solves_match_dense() {
        let (h, w) = (9, 13);
        let (entries, values, dense) = random_spd_on_grid(h, w);
        let b: Vec<f64> = (0..h * w).map(|i| (i as f64).cos()).collect();
        let expect = dense.clone().cholesky().unwrap().solve(&nalgebra::DVector::from_vec(b.clone()));
        for perm in [(0..h * w).collect::<Vec<_>>(), grid_nested_dissection(h, w)] {
            let sym = SymbolicCholesky::new(h * w, &entries, perm);
            let num = sym.factor(&values).unwrap();
            let x = sym.solve(&num, &b);
            for (a, e) in x.iter().zip(expect.iter()) {
                assert!((a - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn nested_dissection_is_permutation() {
        let mut order = grid_nested_dissection(17, 10);
        order.sort_unstable();
        assert_eq!(order, (0..170).collect::<Vec<_>>());
    }

    #[test]
    fn indefinite_reported() {
        let sym = SymbolicCholesky::new(2, &[(0, 0), (1, 0), (1, 1)], vec![0, 1]);
        assert!(sym.factor(&[1.0, 2.0, 1.0]).is_err());
    }
}
