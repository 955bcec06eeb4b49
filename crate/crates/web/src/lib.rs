//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Every export returns a JSON string. The plain functions in [`ops`] hold the logic so they can be
//! tested natively.

use wasm_bindgen::prelude::*;

pub mod ops {
    use overparam::bgapn::{bgapn, bgapn_continuity, BGAPNConfig};
    use overparam::harness::{add_noise, gen_piecewise_poly, SignalSpec};
    use overparam::imaging::{denoise_image, gradient_map, piecewise_planar_image, DenoiseOptions, Image};
    use overparam::operators::{build_poly_parameterization, dif_operator, Geometry, MeasurementOperator, Scaling};
    use overparam::projection::{continuous_refit, optimal_projection};
    use serde_json::{json, Value};

    pub type OpResult = Result<Value, String>;

    fn err(e: overparam::Error) -> String {
        e.to_string()
    }

    /// Clean and noisy versions of a random piecewise polynomial.
    pub fn signal(d: usize, k: usize, n: usize, continuous: bool, sigma: f64, seed: u32) -> OpResult {
        let mut spec = SignalSpec::new(d, k, n).with_seed(seed as u64);
        spec.continuous = continuous;
        let (clean, fit) = gen_piecewise_poly(&spec).map_err(err)?;
        let noisy = add_noise(&clean, sigma, seed as u64 + 1).map_err(err)?;
        Ok(json!({ "clean": clean, "noisy": noisy, "breakpoints": fit.breakpoints }))
    }

    /// Best fit with at most `k` jumps, optionally refit to be continuous.
    pub fn project(g: &[f64], k: usize, n: usize, continuous: bool) -> OpResult {
        let mut fit = optimal_projection(g, k, n).map_err(err)?;
        if continuous {
            fit = continuous_refit(g, &fit.breakpoints, n).map_err(err)?;
        }
        Ok(json!({ "estimate": fit.fitted, "breakpoints": fit.breakpoints, "sse": fit.sse }))
    }

    /// Pursuit denoising with `M = I` and residual bound `sigma * sqrt(d)`.
    pub fn denoise(g: &[f64], n: usize, sigma: f64, continuity: bool) -> OpResult {
        let d = g.len();
        let m = MeasurementOperator::identity(d);
        let param = build_poly_parameterization(d, n, Scaling::Index).map_err(err)?;
        let omega = dif_operator(Geometry::OneD { d }).map_err(err)?;
        let cfg = BGAPNConfig::new(sigma * (d as f64).sqrt());
        let out = if continuity {
            bgapn_continuity(g, &m, &param, &omega, &cfg)
        } else {
            bgapn(g, &m, &param, &omega, &cfg)
        }
        .map_err(err)?;
        Ok(json!({ "estimate": out.estimate, "breakpoints": out.breakpoints(), "iterations": out.iterations }))
    }

    /// Synthetic piecewise planar image with Gaussian noise, on the 0..255 scale.
    pub fn image(size: usize, regions: usize, sigma: f64, seed: u32) -> OpResult {
        let syn = piecewise_planar_image(size, size, regions, seed as u64).map_err(err)?;
        let noisy = add_noise(&syn.image.pixels, sigma, seed as u64 + 1).map_err(err)?;
        let noisy = Image::new(size, size, noisy).map_err(err)?.clamped();
        Ok(json!({ "clean": syn.image.pixels, "noisy": noisy.pixels }))
    }

    /// Denoised image and the gradient map of the result.
    pub fn denoise_picture(pixels: &[f64], h: usize, w: usize, sigma: f64, diagonals: bool) -> OpResult {
        let img = Image::new(h, w, pixels.to_vec()).map_err(err)?;
        let opts = DenoiseOptions {
            diagonals,
            ..DenoiseOptions::default()
        };
        let out = denoise_image(&img, sigma, &opts).map_err(err)?;
        let grad = gradient_map(&out);
        Ok(json!({ "denoised": out.pixels, "gradient": grad.pixels }))
    }
}

fn export(r: ops::OpResult) -> Result<String, JsError> {
    r.map(|v| v.to_string()).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn signal(d: usize, k: usize, n: usize, continuous: bool, sigma: f64, seed: u32) -> Result<String, JsError> {
    export(ops::signal(d, k, n, continuous, sigma, seed))
}

#[wasm_bindgen]
pub fn project(g: &[f64], k: usize, n: usize, continuous: bool) -> Result<String, JsError> {
    export(ops::project(g, k, n, continuous))
}

#[wasm_bindgen]
pub fn denoise(g: &[f64], n: usize, sigma: f64, continuity: bool) -> Result<String, JsError> {
    export(ops::denoise(g, n, sigma, continuity))
}

#[wasm_bindgen]
pub fn image(size: usize, regions: usize, sigma: f64, seed: u32) -> Result<String, JsError> {
    export(ops::image(size, regions, sigma, seed))
}

#[wasm_bindgen]
pub fn denoise_picture(pixels: &[f64], h: usize, w: usize, sigma: f64, diagonals: bool) -> Result<String, JsError> {
    export(ops::denoise_picture(pixels, h, w, sigma, diagonals))
}

#[cfg(test)]
mod tests {
    use super::ops;

    fn floats(v: &serde_json::Value) -> Vec<f64> {
        v.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect()
    }

    #[test]
    fn one_dimensional_ops() {
        let s = ops::signal(120, 3, 1, true, 0.05, 4).unwrap();
        let noisy = floats(&s["noisy"]);
        let clean = floats(&s["clean"]);
        let mse = |e: &[f64]| e.iter().zip(&clean).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / 120.0;
        let noise_energy = mse(&noisy) * 120.0;
        let free = ops::project(&noisy, 3, 1, false).unwrap();
        let joined = ops::project(&noisy, 3, 1, true).unwrap();
        // the clean signal is itself a candidate with 3 jumps
        assert!(free["sse"].as_f64().unwrap() <= noise_energy);
        assert!(joined["sse"].as_f64().unwrap() >= free["sse"].as_f64().unwrap());
        assert_eq!(floats(&joined["estimate"]).len(), 120);
        for continuity in [false, true] {
            let r = ops::denoise(&noisy, 1, 0.05, continuity).unwrap();
            assert!(mse(&floats(&r["estimate"])) < mse(&noisy));
        }
        assert!(ops::project(&noisy, 500, 1, false).is_err());
    }

    #[test]
    fn picture_ops() {
        let im = ops::image(24, 2, 10.0, 1).unwrap();
        let noisy = floats(&im["noisy"]);
        let out = ops::denoise_picture(&noisy, 24, 24, 10.0, false).unwrap();
        assert_eq!(floats(&out["denoised"]).len(), 24 * 24);
        assert_eq!(floats(&out["gradient"]).len(), 24 * 24);
        assert!(ops::denoise_picture(&noisy, 5, 5, 10.0, false).is_err());
    }
}
