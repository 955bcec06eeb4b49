use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{add_noise, derive_seed, gen_piecewise_poly, metrics, par_map, SignalSpec};
use crate::bgapn::{bgapn, bgapn_continuity, BGAPNConfig};
use crate::error::{invalid, Result};
use crate::operators::{
    build_poly_parameterization, dif_operator, gaussian_measurement, Geometry, MeasurementOperator, Scaling,
};
use crate::projection::{continuous_refit, optimal_projection};
use crate::sscosamp::{sscosamp, SSCoSaMPConfig};

/// Recovery is called perfect below this relative error.
pub const DEFAULT_SUCCESS_TOL: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "bgapn")]
    Bgapn,
    #[serde(rename = "bgapn-continuity")]
    BgapnContinuity,
    /// Optimal projection with the true number of jumps.
    #[serde(rename = "projection-oracle-k")]
    ProjectionOracle,
    /// The same followed by a continuous refit on its breakpoints.
    #[serde(rename = "projection-oracle-k-continuity")]
    ProjectionOracleContinuity,
    #[serde(rename = "sscosamp")]
    Sscosamp,
}

impl Method {
    pub const DENOISERS: [Method; 4] = [
        Method::Bgapn,
        Method::BgapnContinuity,
        Method::ProjectionOracle,
        Method::ProjectionOracleContinuity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Bgapn => "bgapn",
            Method::BgapnContinuity => "bgapn-continuity",
            Method::ProjectionOracle => "projection-oracle-k",
            Method::ProjectionOracleContinuity => "projection-oracle-k-continuity",
            Method::Sscosamp => "sscosamp",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bgapn" => Ok(Method::Bgapn),
            "bgapn-continuity" | "bgapn-cont" => Ok(Method::BgapnContinuity),
            "projection-oracle-k" | "projection" => Ok(Method::ProjectionOracle),
            "projection-oracle-k-continuity" | "projection-cont" => Ok(Method::ProjectionOracleContinuity),
            "sscosamp" => Ok(Method::Sscosamp),
            other => Err(invalid(format!("unknown method '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    /// Signal recipe; `signal.seed` is the master seed of the whole sweep.
    pub signal: SignalSpec,
    /// Noise standard deviations.
    pub sigmas: Vec<f64>,
    pub methods: Vec<Method>,
    pub trials: usize,
    /// Continuity weight of `bgapn-continuity`.
    pub gamma: f64,
}

impl SweepConfig {
    pub fn new(signal: SignalSpec, sigmas: Vec<f64>, methods: Vec<Method>, trials: usize) -> Self {
        Self {
            signal,
            sigmas,
            methods,
            trials,
            gamma: BGAPNConfig::new(0.0).gamma,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsConfig {
    /// Signal recipe (discontinuous); signals are rescaled to unit norm.
    pub signal: SignalSpec,
    /// Sampling rates `m / d`, each in `(0, 1]`.
    pub ratios: Vec<f64>,
    pub methods: Vec<Method>,
    pub trials: usize,
    pub success_tol: f64,
}

impl CsConfig {
    pub fn new(signal: SignalSpec, ratios: Vec<f64>, methods: Vec<Method>, trials: usize) -> Self {
        Self {
            signal,
            ratios,
            methods,
            trials,
            success_tol: DEFAULT_SUCCESS_TOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RipConfig {
    pub d: usize,
    pub n: usize,
    pub k: usize,
    /// Row counts of the Gaussian matrices.
    pub m_values: Vec<usize>,
    /// Matrix draws per row count.
    pub matrices: usize,
    /// Random signals per matrix.
    pub trials: usize,
    /// Use the `d x d` identity instead of Gaussian matrices; `m_values` is then ignored.
    pub identity: bool,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ExperimentConfig {
    Sweep(SweepConfig),
    Cs(CsConfig),
    Rip(RipConfig),
}

/// One method on one trial at one grid point (`x` is the noise level or the sampling rate).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub x: f64,
    pub method: Method,
    pub trial: usize,
    /// Seed of the noise or of the measurement matrix of this trial.
    pub seed: u64,
    pub mse: f64,
    pub psnr: f64,
    pub rel_err: f64,
    /// `||estimate - signal||_2`.
    pub error_norm: f64,
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub x: f64,
    pub method: Method,
    pub trials: usize,
    pub mean_mse: f64,
    /// Sample standard deviation.
    pub std_mse: f64,
    pub mean_psnr: f64,
    pub mean_rel_err: f64,
    pub mean_error_norm: f64,
    /// Fraction of successful trials.
    pub rate: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    /// Ordered by grid point, then method, then trial.
    pub trials: Vec<TrialRecord>,
    pub aggregates: Vec<Aggregate>,
    /// Wall time per trial record in milliseconds. Not serialized, so results replay exactly.
    #[serde(skip)]
    pub runtimes_ms: Vec<f64>,
}

impl ExperimentResult {
    /// Aggregate row for a grid point and method.
    pub fn get(&self, x: f64, method: Method) -> Option<&Aggregate> {
        self.aggregates.iter().find(|a| a.x == x && a.method == method)
    }

    /// Aggregates of one method in grid order.
    pub fn series(&self, method: Method) -> Vec<&Aggregate> {
        self.aggregates.iter().filter(|a| a.method == method).collect()
    }
}

/// Groups consecutive records with the same grid point and method.
pub fn aggregate(trials: &[TrialRecord]) -> Vec<Aggregate> {
    let mut out = Vec::new();
    let mut start = 0;
    while start < trials.len() {
        let (x, method) = (trials[start].x, trials[start].method);
        let end = start + trials[start..].iter().take_while(|r| r.x == x && r.method == method).count();
        let group = &trials[start..end];
        let n = group.len() as f64;
        let mean = |f: fn(&TrialRecord) -> f64| group.iter().map(f).sum::<f64>() / n;
        let mean_mse = mean(|r| r.mse);
        let std_mse = if group.len() > 1 {
            (group.iter().map(|r| (r.mse - mean_mse).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        out.push(Aggregate {
            x,
            method,
            trials: group.len(),
            mean_mse,
            std_mse,
            mean_psnr: mean(|r| r.psnr),
            mean_rel_err: mean(|r| r.rel_err),
            mean_error_norm: mean(|r| r.error_norm),
            rate: group.iter().filter(|r| r.success).count() as f64 / n,
        });
        start = end;
    }
    out
}

struct Outcome {
    estimate: Vec<f64>,
    runtime_ms: f64,
}

fn timed(f: impl FnOnce() -> Result<Vec<f64>>) -> Result<Outcome> {
    let start = Instant::now();
    let estimate = f()?;
    Ok(Outcome {
        estimate,
        runtime_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

fn record(x: f64, method: Method, trial: usize, seed: u64, f: &[f64], est: &[f64], peak: f64, tol: f64) -> Result<TrialRecord> {
    let m = metrics(f, est, peak)?;
    let error_norm = f.iter().zip(est).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    Ok(TrialRecord {
        x,
        method,
        trial,
        seed,
        mse: m.mse,
        psnr: m.psnr,
        rel_err: m.rel_err,
        error_norm,
        success: m.rel_err < tol,
    })
}

fn check_common(signal: &SignalSpec, methods: &[Method], trials: usize, grid: &[f64], grid_name: &str) -> Result<()> {
    signal.validate()?;
    if methods.is_empty() {
        return Err(invalid("at least one method is required"));
    }
    if trials == 0 {
        return Err(invalid("trials must be at least 1"));
    }
    if grid.is_empty() {
        return Err(invalid(format!("the {grid_name} grid is empty")));
    }
    Ok(())
}

fn denoise_1d(method: Method, g: &[f64], sigma: f64, spec: &SignalSpec, gamma: f64) -> Result<Vec<f64>> {
    let (d, k, n) = (spec.d, spec.k, spec.n);
    match method {
        Method::Bgapn | Method::BgapnContinuity => {
            let param = build_poly_parameterization(d, n, Scaling::Normalized)?;
            let omega = dif_operator(Geometry::OneD { d })?;
            let m = MeasurementOperator::identity(d);
            let mut cfg = BGAPNConfig::new(sigma * (d as f64).sqrt());
            cfg.gamma = gamma;
            let out = if method == Method::Bgapn {
                bgapn(g, &m, &param, &omega, &cfg)?
            } else {
                bgapn_continuity(g, &m, &param, &omega, &cfg)?
            };
            Ok(out.estimate)
        }
        Method::ProjectionOracle => Ok(optimal_projection(g, k, n)?.fitted),
        Method::ProjectionOracleContinuity => {
            let fit = optimal_projection(g, k, n)?;
            Ok(continuous_refit(g, &fit.breakpoints, n)?.fitted)
        }
        Method::Sscosamp => Err(invalid("sscosamp is a compressed sensing method, not a denoiser here")),
    }
}

/// Mean errors of each denoiser over noisy copies of random signals, per noise level.
///
/// Trial `t` uses the same clean signal at every noise level; noise streams are independent.
/// The residual bound of the pursuit methods is `sigma * sqrt(d)`.
pub fn denoising_sweep(cfg: &SweepConfig, threads: usize) -> Result<ExperimentResult> {
    check_common(&cfg.signal, &cfg.methods, cfg.trials, &cfg.sigmas, "sigma")?;
    if let Some(s) = cfg.sigmas.iter().find(|s| !(**s >= 0.0) || !s.is_finite()) {
        return Err(invalid(format!("noise levels must be finite and >= 0, got {s}")));
    }
    if let Some(m) = cfg.methods.iter().find(|m| !Method::DENOISERS.contains(m)) {
        return Err(invalid(format!("method '{m}' is not available in the denoising sweep")));
    }
    let master = cfg.signal.seed;
    let peak = cfg.signal.range.1 - cfg.signal.range.0;
    let units = par_map(cfg.sigmas.len() * cfg.trials, threads, |u| {
        let (si, t) = (u / cfg.trials, u % cfg.trials);
        let sigma = cfg.sigmas[si];
        let (f, _) = gen_piecewise_poly(&cfg.signal.with_seed(derive_seed(master, &[1, t as u64])))?;
        let noise_seed = derive_seed(master, &[2, si as u64, t as u64]);
        let g = add_noise(&f, sigma, noise_seed)?;
        cfg.methods
            .iter()
            .map(|&method| {
                let out = timed(|| denoise_1d(method, &g, sigma, &cfg.signal, cfg.gamma))?;
                let rec = record(sigma, method, t, noise_seed, &f, &out.estimate, peak, DEFAULT_SUCCESS_TOL)?;
                Ok((rec, out.runtime_ms))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(assemble(ExperimentConfig::Sweep(cfg.clone()), units, cfg.sigmas.len(), cfg.trials, cfg.methods.len()))
}

/// Reorders per-(grid point, trial) work units into grid, method, trial order.
fn assemble(
    config: ExperimentConfig,
    units: Vec<Vec<(TrialRecord, f64)>>,
    grid: usize,
    trials: usize,
    methods: usize,
) -> ExperimentResult {
    let mut recs = Vec::with_capacity(units.len() * methods);
    let mut times = Vec::with_capacity(units.len() * methods);
    for gi in 0..grid {
        for mi in 0..methods {
            for t in 0..trials {
                let (r, ms) = &units[gi * trials + t][mi];
                recs.push(r.clone());
                times.push(*ms);
            }
        }
    }
    ExperimentResult {
        config,
        aggregates: aggregate(&recs),
        trials: recs,
        runtimes_ms: times,
    }
}

fn unit_norm(mut f: Vec<f64>) -> Vec<f64> {
    let norm = f.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        f.iter_mut().for_each(|x| *x /= norm);
    }
    f
}

/// Noiseless recovery rate from `m = round(ratio d)` seeded Gaussian measurements.
pub fn cs_experiment(cfg: &CsConfig, threads: usize) -> Result<ExperimentResult> {
    check_common(&cfg.signal, &cfg.methods, cfg.trials, &cfg.ratios, "sampling rate")?;
    if let Some(r) = cfg.ratios.iter().find(|r| !(**r > 0.0 && **r <= 1.0)) {
        return Err(invalid(format!("sampling rates must lie in (0, 1], got {r}")));
    }
    if cfg.signal.continuous {
        return Err(invalid("the recovery experiment uses discontinuous signals"));
    }
    if let Some(m) = cfg.methods.iter().find(|m| !matches!(m, Method::Sscosamp | Method::Bgapn)) {
        return Err(invalid(format!("method '{m}' is not available in the recovery experiment")));
    }
    if !(cfg.success_tol > 0.0) {
        return Err(invalid("success tolerance must be positive"));
    }
    let (d, k, n) = (cfg.signal.d, cfg.signal.k, cfg.signal.n);
    let master = cfg.signal.seed;
    let units = par_map(cfg.ratios.len() * cfg.trials, threads, |u| {
        let (ri, t) = (u / cfg.trials, u % cfg.trials);
        let ratio = cfg.ratios[ri];
        let (f, _) = gen_piecewise_poly(&cfg.signal.with_seed(derive_seed(master, &[1, t as u64])))?;
        let f = unit_norm(f);
        let (lo, hi) = f.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
        let peak = if hi > lo { hi - lo } else { 1.0 };
        let rows = ((ratio * d as f64).round() as usize).max(1);
        let matrix_seed = derive_seed(master, &[3, ri as u64, t as u64]);
        let m = gaussian_measurement(rows, d, matrix_seed)?;
        let g = m.apply(&f);
        cfg.methods
            .iter()
            .map(|&method| {
                let out = timed(|| match method {
                    Method::Sscosamp => Ok(sscosamp(&g, &m, &SSCoSaMPConfig::new(k, n))?.estimate),
                    _ => {
                        let param = build_poly_parameterization(d, n, Scaling::Normalized)?;
                        let omega = dif_operator(Geometry::OneD { d })?;
                        Ok(bgapn(&g, &m, &param, &omega, &BGAPNConfig::new(0.0))?.estimate)
                    }
                })?;
                let rec = record(ratio, method, t, matrix_seed, &f, &out.estimate, peak, cfg.success_tol)?;
                Ok((rec, out.runtime_ms))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(assemble(ExperimentConfig::Cs(cfg.clone()), units, cfg.ratios.len(), cfg.trials, cfg.methods.len()))
}

/// Largest `| ||M f||^2 - 1 |` over `trials` random unit-norm piecewise polynomials with `k`
/// jumps of degree `n`. This only bounds the restricted isometry constant from below.
pub fn estimate_pn_rip(m: &MeasurementOperator, n: usize, k: usize, trials: usize, seed: u64) -> Result<f64> {
    if trials == 0 {
        return Err(invalid("trials must be at least 1"));
    }
    let spec = SignalSpec::new(m.cols(), k, n);
    let mut delta = 0.0f64;
    for t in 0..trials {
        let (f, _) = gen_piecewise_poly(&spec.with_seed(derive_seed(seed, &[t as u64])))?;
        let f = unit_norm(f);
        let energy: f64 = m.apply(&f).iter().map(|x| x * x).sum();
        delta = delta.max((energy - 1.0).abs());
    }
    Ok(delta)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RipRow {
    pub m: usize,
    pub draw: usize,
    pub seed: u64,
    pub delta_hat: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RipResult {
    pub config: ExperimentConfig,
    pub rows: Vec<RipRow>,
    /// `(m, median delta_hat over the matrix draws)` in the order of `m_values`.
    pub medians: Vec<(usize, f64)>,
}

/// [`estimate_pn_rip`] over several matrix sizes and draws.
pub fn rip_experiment(cfg: &RipConfig, threads: usize) -> Result<RipResult> {
    if cfg.trials == 0 || cfg.matrices == 0 {
        return Err(invalid("trials and matrices must be at least 1"));
    }
    let sizes: Vec<usize> = if cfg.identity { vec![cfg.d] } else { cfg.m_values.clone() };
    if sizes.is_empty() {
        return Err(invalid("the row-count grid is empty"));
    }
    let draws = if cfg.identity { 1 } else { cfg.matrices };
    let rows = par_map(sizes.len() * draws, threads, |u| {
        let (mi, draw) = (u / draws, u % draws);
        let seed = derive_seed(cfg.seed, &[4, mi as u64, draw as u64]);
        let op = if cfg.identity {
            MeasurementOperator::identity(cfg.d)
        } else {
            gaussian_measurement(sizes[mi], cfg.d, seed)?
        };
        let delta_hat = estimate_pn_rip(&op, cfg.n, cfg.k, cfg.trials, derive_seed(seed, &[5]))?;
        Ok(RipRow {
            m: sizes[mi],
            draw,
            seed,
            delta_hat,
        })
    })?;
    let medians = sizes
        .iter()
        .enumerate()
        .map(|(mi, &m)| {
            let mut v: Vec<f64> = rows[mi * draws..(mi + 1) * draws].iter().map(|r| r.delta_hat).collect();
            v.sort_by(f64::total_cmp);
            let mid = v.len() / 2;
            let median = if v.len() % 2 == 1 { v[mid] } else { 0.5 * (v[mid - 1] + v[mid]) };
            (m, median)
        })
        .collect();
    Ok(RipResult {
        config: ExperimentConfig::Rip(cfg.clone()),
        rows,
        medians,
    })
}
