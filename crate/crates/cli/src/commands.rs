use std::fmt;
use std::path::Path;

use overparam::bgapn::{bgapn, bgapn_continuity, BGAPNConfig};
use overparam::harness::{
    cs_experiment, denoising_sweep, metrics, rip_experiment, CsConfig, ExperimentResult, Method, Metrics, RipConfig,
    SignalSpec, SweepConfig,
};
use overparam::imaging::{
    default_ensemble, denoise_image, encode_p2, encode_p5, ensemble_denoise, gradient_map, read_pgm, segment_image,
    DenoiseOptions, Image, SegmentOptions, PEAK,
};
use overparam::operators::{build_poly_parameterization, dif_operator, Geometry, MeasurementOperator, Scaling};
use overparam::projection::{continuous_refit, optimal_projection};
use overparam::sscosamp::{sscosamp, SSCoSaMPConfig};
use overparam::Error;
use serde_json::{json, Value};

use crate::args::*;
use crate::io::{format_csv, format_table, num, read_csv};
use crate::svg::{line_plot, Series};

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_PARSE: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub msg: String,
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            msg: msg.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.msg)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidArgument(_) | Error::DimensionMismatch { .. } => EXIT_USAGE,
            Error::Parse { .. } => EXIT_PARSE,
            Error::Numerical(_) => EXIT_NUMERICAL,
            Error::Io(_) => 1,
        };
        Self { code, msg: e.to_string() }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e).into()
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Everything a command produces; files are written by the caller in one pass.
pub struct Outcome {
    pub files: Vec<(String, Vec<u8>)>,
    pub report: Value,
    pub summary: Vec<String>,
    /// Run-dependent measurements that go into the manifest only.
    pub timings: Value,
    pub exit_code: i32,
}

impl Outcome {
    fn new(report: Value) -> Self {
        Self {
            files: Vec::new(),
            report,
            summary: Vec::new(),
            timings: Value::Null,
            exit_code: 0,
        }
    }

    fn file(&mut self, name: &str, bytes: impl Into<Vec<u8>>) {
        self.files.push((name.to_string(), bytes.into()));
    }

    fn report_file(&mut self) {
        let text = serde_json::to_string_pretty(&self.report).expect("report serializes") + "\n";
        self.file("report.json", text);
    }
}

fn scaling(s: ScalingArg) -> Scaling {
    match s {
        ScalingArg::Index => Scaling::Index,
        ScalingArg::Normalized => Scaling::Normalized,
    }
}

fn metrics_json(m: &Metrics) -> Value {
    json!({ "mse": m.mse, "psnr": m.psnr, "rel_err": m.rel_err, "rel_err_absolute": m.rel_err_absolute })
}

fn signal_peak(v: &[f64]) -> f64 {
    let (lo, hi) = v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    if hi > lo { hi - lo } else { 1.0 }
}

pub fn project(a: &ProjectArgs) -> CliResult<Outcome> {
    let g = read_csv(&a.input)?;
    let mut fit = optimal_projection(&g, a.k, a.n)?;
    if a.continuous {
        fit = continuous_refit(&g, &fit.breakpoints, a.n)?;
    }
    let sc = scaling(a.scaling);
    let coeffs = fit.coeffs(sc);
    let segments: Vec<Value> = fit
        .segments
        .iter()
        .zip(&coeffs)
        .map(|(s, c)| json!({ "start": s.start, "end": s.end, "coeffs": c }))
        .collect();
    let mut out = Outcome::new(json!({
        "d": g.len(),
        "k": a.k,
        "n": a.n,
        "continuous": a.continuous,
        "scaling": a.scaling,
        "breakpoints": fit.breakpoints,
        "sse": fit.sse,
        "segments": segments,
    }));
    out.summary.push(format!("breakpoints: {:?}", fit.breakpoints));
    out.summary.push(format!("sse: {}", fit.sse));
    out.file("fitted.csv", format_csv(&fit.fitted));
    let mut header = vec!["start".to_string(), "end".to_string()];
    header.extend((0..=a.n).map(|j| format!("c{j}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows = fit.segments.iter().zip(&coeffs).map(|(s, c)| {
        let mut r = vec![s.start.to_string(), s.end.to_string()];
        r.extend(c.iter().map(|&v| num(v)));
        r
    });
    out.file("segments.csv", format_table(&header, rows));
    out.report_file();
    Ok(out)
}

pub fn denoise1d(a: &Denoise1dArgs) -> CliResult<Outcome> {
    let g = read_csv(&a.input)?;
    let d = g.len();
    let sc = scaling(a.scaling);
    let result = match a.method {
        Denoise1dMethod::Sscosamp => {
            let k = a.k.ok_or_else(|| CliError::usage("--method sscosamp requires --k"))?;
            let mut cfg = SSCoSaMPConfig::new(k, a.n);
            cfg.scaling = sc;
            cfg.epsilon = a.epsilon;
            if let Some(it) = a.max_iters {
                cfg.max_iters = it;
            }
            sscosamp(&g, &MeasurementOperator::identity(d), &cfg)?
        }
        Denoise1dMethod::Bgapn | Denoise1dMethod::BgapnCont => {
            let bound = match (a.noise_norm, a.sigma) {
                (Some(e), _) => e,
                (None, Some(s)) => s * (d as f64).sqrt(),
                (None, None) => return Err(CliError::usage("--method bgapn requires --sigma or --noise-norm")),
            };
            let mut cfg = BGAPNConfig::new(bound);
            cfg.epsilon = a.epsilon;
            cfg.rows_per_iter = a.rows_per_iter;
            if let Some(it) = a.max_iters {
                cfg.max_iters = it;
            }
            if let Some(gamma) = a.gamma {
                cfg.gamma = gamma;
            }
            let param = build_poly_parameterization(d, a.n, sc)?;
            let omega = dif_operator(Geometry::OneD { d })?;
            let m = MeasurementOperator::identity(d);
            if a.method == Denoise1dMethod::Bgapn {
                bgapn(&g, &m, &param, &omega, &cfg)?
            } else {
                bgapn_continuity(&g, &m, &param, &omega, &cfg)?
            }
        }
    };
    let mut report = json!({
        "method": a.method,
        "d": d,
        "n": a.n,
        "jump_set": result.jump_set,
        "breakpoints": result.breakpoints(),
        "iterations": result.iterations,
        "converged": result.converged,
        "bound_unmet": result.bound_unmet,
        "final_residual": result.residual_history.last(),
    });
    let mut summary = vec![
        format!("breakpoints: {:?}", result.breakpoints()),
        format!("iterations: {} (converged: {})", result.iterations, result.converged),
    ];
    if let Some(path) = &a.reference {
        let reference = read_csv(path)?;
        let peak = signal_peak(&reference);
        let est = metrics(&reference, &result.estimate, peak)?;
        let input = metrics(&reference, &g, peak)?;
        summary.push(format!("mse: {} (input {})", est.mse, input.mse));
        report["metrics"] = metrics_json(&est);
        report["input_metrics"] = metrics_json(&input);
    }
    let mut out = Outcome::new(report);
    out.summary = summary;
    out.file("recovered.csv", format_csv(&result.estimate));
    let header: Vec<String> = (0..result.coeff_vectors.len()).map(|j| format!("b{j}")).collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows = (0..d).map(|i| result.coeff_vectors.iter().map(|b| num(b[i])).collect());
    out.file("coefficients.csv", format_table(&header, rows));
    out.report_file();
    if result.bound_unmet {
        out.summary.push("residual bound not met; least-squares limit returned".into());
        out.exit_code = EXIT_NUMERICAL;
    }
    Ok(out)
}

fn read_image(path: &Path) -> CliResult<Image> {
    Ok(read_pgm(path)?)
}

pub fn image(op: &ImageOp) -> CliResult<Outcome> {
    match op {
        ImageOp::Denoise(a) => {
            let noisy = read_image(&a.input)?;
            let opts = DenoiseOptions {
                diagonals: a.diagonals,
                degree: a.degree,
                epsilon: a.epsilon,
                ..DenoiseOptions::default()
            };
            let clean = if a.ensemble {
                ensemble_denoise(&noisy, a.sigma, &default_ensemble(), &opts)?
            } else {
                denoise_image(&noisy, a.sigma, &opts)?
            };
            let mut out = Outcome::new(json!({ "h": noisy.h, "w": noisy.w, "sigma": a.sigma, "ensemble": a.ensemble }));
            if let Some(path) = &a.reference {
                let reference = read_image(path)?;
                let before = metrics(&reference.pixels, &noisy.pixels, PEAK)?;
                let after = metrics(&reference.pixels, &clean.pixels, PEAK)?;
                out.summary.push(format!("psnr: {:.2} dB (input {:.2} dB)", after.psnr, before.psnr));
                out.report["psnr"] = json!(after.psnr);
                out.report["input_psnr"] = json!(before.psnr);
            }
            let bytes = if a.plain { plain_image(&clean) } else { encode_p5(&clean) };
            out.file("denoised.pgm", bytes);
            out.report_file();
            Ok(out)
        }
        ImageOp::Segment(a) => {
            let img = read_image(&a.input)?;
            let mut opts = SegmentOptions::new(a.sigma);
            opts.rel_threshold = a.rel_threshold;
            opts.min_region = a.min_region;
            let seg = segment_image(&img, &opts)?;
            let mut out = Outcome::new(json!({
                "h": seg.h,
                "w": seg.w,
                "regions": seg.regions,
                "threshold": seg.threshold_used,
                "boundary_pixels": seg.boundary_map.iter().filter(|&&b| b).count(),
            }));
            out.summary.push(format!("regions: {}", seg.regions));
            out.file("piecewise.pgm", encode_p5(&seg.piecewise_version));
            let boundary: Vec<u32> = seg.boundary_map.iter().map(|&b| if b { 255 } else { 0 }).collect();
            out.file("boundary.pgm", encode_p2(&boundary, seg.h, seg.w, Some(255)));
            out.file("labels.pgm", encode_p2(&seg.labels, seg.h, seg.w, None));
            out.report_file();
            Ok(out)
        }
        ImageOp::Gradmap(a) => {
            let img = read_image(&a.input)?;
            let grad = gradient_map(&img);
            let values: Vec<u32> = grad.pixels.iter().map(|v| v.round() as u32).collect();
            let peak = grad.pixels.iter().fold(0.0f64, |m, &v| m.max(v));
            let mut out = Outcome::new(json!({ "h": img.h, "w": img.w, "max": peak }));
            out.summary.push(format!("largest gradient: {peak}"));
            // |dh| + |dv| of 8-bit data stays within 0..=510
            out.file("gradmap.pgm", encode_p2(&values, img.h, img.w, Some(510)));
            out.report_file();
            Ok(out)
        }
    }
}

fn plain_image(img: &Image) -> Vec<u8> {
    let values: Vec<u32> = img.pixels.iter().map(|v| v.round().clamp(0.0, PEAK) as u32).collect();
    encode_p2(&values, img.h, img.w, Some(255))
}

fn parse_methods(names: &[String]) -> CliResult<Vec<Method>> {
    if names.is_empty() {
        return Err(CliError::usage("at least one method is required"));
    }
    names.iter().map(|n| n.parse::<Method>().map_err(CliError::from)).collect()
}

fn experiment_files(out: &mut Outcome, res: &ExperimentResult, x_name: &str, y: (&str, fn(&overparam::harness::Aggregate) -> f64), title: &str) {
    let header = [
        x_name,
        "method",
        "trials",
        "mean_mse",
        "std_mse",
        "mean_psnr",
        "mean_rel_err",
        "mean_error_norm",
        "rate",
    ];
    let rows = res.aggregates.iter().map(|a| {
        vec![
            num(a.x),
            a.method.to_string(),
            a.trials.to_string(),
            num(a.mean_mse),
            num(a.std_mse),
            num(a.mean_psnr),
            num(a.mean_rel_err),
            num(a.mean_error_norm),
            num(a.rate),
        ]
    });
    out.file("aggregates.csv", format_table(&header, rows));
    let header = [x_name, "method", "trial", "seed", "mse", "psnr", "rel_err", "error_norm", "success"];
    let rows = res.trials.iter().map(|t| {
        vec![
            num(t.x),
            t.method.to_string(),
            t.trial.to_string(),
            t.seed.to_string(),
            num(t.mse),
            num(t.psnr),
            num(t.rel_err),
            num(t.error_norm),
            t.success.to_string(),
        ]
    });
    out.file("trials.csv", format_table(&header, rows));
    out.file("result.json", serde_json::to_string_pretty(res).expect("result serializes") + "\n");

    let mut methods: Vec<Method> = Vec::new();
    for a in &res.aggregates {
        if !methods.contains(&a.method) {
            methods.push(a.method);
        }
    }
    let series: Vec<Series> = methods
        .iter()
        .map(|&m| Series {
            name: m.to_string(),
            points: res.series(m).iter().map(|a| (a.x, (y.1)(a))).collect(),
        })
        .collect();
    out.file("plot.svg", line_plot(title, x_name, y.0, &series));

    let mut timing = serde_json::Map::new();
    for &m in &methods {
        let (sum, count) = res
            .trials
            .iter()
            .zip(&res.runtimes_ms)
            .filter(|(t, _)| t.method == m)
            .fold((0.0, 0), |(s, c), (_, ms)| (s + ms, c + 1));
        timing.insert(m.to_string(), json!({ "mean_trial_ms": sum / count.max(1) as f64 }));
    }
    out.timings = Value::Object(timing);
    for a in &res.aggregates {
        out.summary.push(format!(
            "{x_name} {:<6} {:<32} {} {}",
            a.x,
            a.method.name(),
            y.0,
            (y.1)(a)
        ));
    }
}

pub fn experiment(kind: &ExperimentKind) -> CliResult<Outcome> {
    match kind {
        ExperimentKind::Sweep(a) => {
            let signal = SignalSpec {
                d: a.d,
                k: a.k,
                n: a.n,
                continuous: !a.discontinuous,
                range: (-1.0, 1.0),
                min_segment: a.min_segment,
                seed: a.common.seed,
            };
            let mut cfg = SweepConfig::new(signal, a.sigmas.clone(), parse_methods(&a.methods)?, a.trials);
            cfg.gamma = a.gamma;
            let res = denoising_sweep(&cfg, a.common.threads)?;
            let mut out = Outcome::new(json!({ "rows": res.aggregates.len(), "trials": res.trials.len() }));
            experiment_files(&mut out, &res, "sigma", ("mean_mse", |a| a.mean_mse), "Mean squared error against noise level");
            Ok(out)
        }
        ExperimentKind::Cs(a) => {
            let d = if a.full { 300 } else { a.d };
            let mut signal = SignalSpec::new(d, a.k, a.n);
            signal.seed = a.common.seed;
            let mut cfg = CsConfig::new(signal, a.ratios.clone(), parse_methods(&a.methods)?, a.trials);
            cfg.success_tol = a.success_tol;
            let res = cs_experiment(&cfg, a.common.threads)?;
            let mut out = Outcome::new(json!({ "rows": res.aggregates.len(), "trials": res.trials.len() }));
            experiment_files(&mut out, &res, "ratio", ("rate", |a| a.rate), "Recovery rate against sampling rate m/d");
            Ok(out)
        }
        ExperimentKind::Rip(a) => {
            let cfg = RipConfig {
                d: a.d,
                n: a.n,
                k: a.k,
                m_values: a.m.clone(),
                matrices: a.matrices,
                trials: a.trials,
                identity: a.identity,
                seed: a.common.seed,
            };
            let res = rip_experiment(&cfg, a.common.threads)?;
            let mut out = Outcome::new(json!({ "medians": res.medians }));
            let rows = res.rows.iter().map(|r| {
                vec![r.m.to_string(), r.draw.to_string(), r.seed.to_string(), num(r.delta_hat)]
            });
            out.file("rip.csv", format_table(&["m", "draw", "seed", "delta_hat"], rows));
            let rows = res.medians.iter().map(|(m, v)| vec![m.to_string(), num(*v)]);
            out.file("medians.csv", format_table(&["m", "median_delta_hat"], rows));
            out.file("result.json", serde_json::to_string_pretty(&res).expect("result serializes") + "\n");
            let series = [Series {
                name: "median delta_hat".into(),
                points: res.medians.iter().map(|&(m, v)| (m as f64, v)).collect(),
            }];
            out.file("plot.svg", line_plot("Empirical isometry constant", "m", "delta_hat", &series));
            for (m, v) in &res.medians {
                out.summary.push(format!("m {m:<5} median delta_hat {v}"));
            }
            Ok(out)
        }
    }
}
