//! Experiment drivers: test signals, noise, error metrics, the 1D denoising sweep, the
//! compressed sensing recovery curve and an empirical restricted isometry estimate.

mod experiments;
mod signals;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, invalid, Result};

pub use experiments::{
    aggregate, cs_experiment, denoising_sweep, estimate_pn_rip, rip_experiment, Aggregate, CsConfig,
    ExperimentConfig, ExperimentResult, Method, RipConfig, RipResult, RipRow, SweepConfig, TrialRecord,
};
pub use signals::{add_noise, gen_piecewise_poly, SignalSpec};

/// PSNR reported for a perfect reconstruction.
pub const PSNR_CAP: f64 = 99.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mse: f64,
    /// `10 log10(peak^2 / mse)`, capped at [`PSNR_CAP`].
    pub psnr: f64,
    /// `||estimate - reference|| / ||reference||`, or the absolute norm when the reference is zero.
    pub rel_err: f64,
    /// Set when `rel_err` is an absolute norm.
    pub rel_err_absolute: bool,
}

pub fn metrics(reference: &[f64], estimate: &[f64], peak: f64) -> Result<Metrics> {
    check_len("estimate length", reference.len(), estimate.len())?;
    if reference.is_empty() {
        return Err(invalid("metrics need at least one sample"));
    }
    if !(peak > 0.0) {
        return Err(invalid(format!("peak must be positive, got {peak}")));
    }
    let sq: f64 = reference.iter().zip(estimate).map(|(r, e)| (e - r).powi(2)).sum();
    let ref_norm = reference.iter().map(|r| r * r).sum::<f64>().sqrt();
    let mse = sq / reference.len() as f64;
    let psnr = if mse > 0.0 {
        (10.0 * (peak * peak / mse).log10()).min(PSNR_CAP)
    } else {
        PSNR_CAP
    };
    let absolute = ref_norm == 0.0;
    Ok(Metrics {
        mse,
        psnr,
        rel_err: if absolute { sq.sqrt() } else { sq.sqrt() / ref_norm },
        rel_err_absolute: absolute,
    })
}

/// Seed of an independent stream derived from `master` and a path of indices.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    path.iter().fold(mix(master), |acc, &p| mix(acc ^ mix(p)))
}

/// Spearman rank correlation, with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            for &k in &idx[i..=j] {
                r[k] = (i + j) as f64 / 2.0;
            }
            i = j + 1;
        }
        r
    }
    pearson(&ranks(x), &ranks(y))
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let cov: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let var: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    cov / var
}

/// Evaluates `f(0..n)` on up to `threads` workers and returns the results in index order.
pub(crate) fn par_map<T, F>(n: usize, threads: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync,
{
    if threads <= 1 || n <= 1 {
        return (0..n).map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<T>>>> = (0..n).map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..threads.min(n) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let out = f(i);
                *slots[i].lock().expect("worker panicked") = Some(out);
            });
        }
    });
    slots
        .into_iter()
        .map(|s| s.into_inner().expect("worker panicked").expect("every index is visited"))
        .collect()
}
