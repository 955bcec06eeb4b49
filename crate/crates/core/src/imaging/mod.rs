//! Cartoon-image pipelines: piecewise planar denoising, ensembles, gradient maps and segmentation.

mod pgm;
mod segment;
mod synthetic;

use serde::{Deserialize, Serialize};

use crate::bgapn::{bgapn, BGAPNConfig};
use crate::error::{check_len, invalid, Result};
use crate::operators::{build_planar_poly, dif_operator, Geometry, MeasurementOperator, Scaling};

pub use pgm::{encode_p2, encode_p5, parse_pgm, read_pgm, write_pgm, write_pgm_plain};
pub use segment::{
    boundary_f_score, gradient_map, label_regions, segment_image, SegmentOptions, SegmentationResult,
};
pub use synthetic::{piecewise_planar_image, SyntheticImage};

/// Nominal intensity range of 8-bit images.
pub const PEAK: f64 = 255.0;

/// Grayscale image stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Image {
    pub h: usize,
    pub w: usize,
    pub pixels: Vec<f64>,
}

impl Image {
    pub fn new(h: usize, w: usize, pixels: Vec<f64>) -> Result<Self> {
        check_len("pixel count", h * w, pixels.len())?;
        if let Some(i) = pixels.iter().position(|v| !v.is_finite()) {
            return Err(invalid(format!("pixel {i} is not finite")));
        }
        Ok(Self { h, w, pixels })
    }

    pub fn from_fn(h: usize, w: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let pixels = (0..h * w).map(|i| f(i / w, i % w)).collect();
        Self { h, w, pixels }
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.pixels[r * self.w + c]
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn clamped(mut self) -> Self {
        self.pixels.iter_mut().for_each(|v| *v = v.clamp(0.0, PEAK));
        self
    }

    fn crop(&self, r0: usize, c0: usize, h: usize, w: usize) -> Image {
        Image::from_fn(h, w, |r, c| self.get(r0 + r, c0 + c))
    }

    fn validate(&self) -> Result<()> {
        check_len("pixel count", self.h * self.w, self.pixels.len())?;
        if self.pixels.iter().any(|v| !v.is_finite()) {
            return Err(invalid("image contains non-finite pixels"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenoiseOptions {
    /// Add the two diagonal difference filters to the horizontal and vertical ones.
    pub diagonals: bool,
    /// Total degree of the bivariate overparameterization (1 = planar).
    pub degree: usize,
    /// Stopping threshold; `None` keeps the solver default.
    pub epsilon: Option<f64>,
    pub rows_per_iter: Option<usize>,
    pub max_iters: usize,
    /// Images larger than this in either direction are processed in overlapping tiles.
    pub max_direct: usize,
    pub tile: usize,
    pub overlap: usize,
}

impl Default for DenoiseOptions {
    fn default() -> Self {
        Self {
            diagonals: false,
            degree: 1,
            epsilon: None,
            rows_per_iter: None,
            max_iters: 10_000,
            max_direct: 128,
            tile: 64,
            overlap: 8,
        }
    }
}

/// Piecewise planar denoising with `M = I` and residual bound `sigma * sqrt(h w)`.
/// The estimate is clamped to `0..=255`.
pub fn denoise_image(noisy: &Image, sigma: f64, opts: &DenoiseOptions) -> Result<Image> {
    noisy.validate()?;
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(invalid(format!("sigma must be finite and >= 0, got {sigma}")));
    }
    if noisy.h < 2 || noisy.w < 2 {
        return Err(invalid(format!("image must be at least 2x2, got {}x{}", noisy.h, noisy.w)));
    }
    if opts.tile < 2 || opts.overlap >= opts.tile {
        return Err(invalid("tile size must be at least 2 and exceed the overlap"));
    }
    if noisy.h > opts.max_direct || noisy.w > opts.max_direct {
        return denoise_tiled(noisy, sigma, opts);
    }
    Ok(denoise_direct(noisy, sigma, opts)?.clamped())
}

fn denoise_direct(img: &Image, sigma: f64, opts: &DenoiseOptions) -> Result<Image> {
    let (h, w) = (img.h, img.w);
    let param = build_planar_poly(h, w, opts.degree, Scaling::Normalized)?;
    let geometry = if opts.diagonals {
        Geometry::HvDiag { h, w }
    } else {
        Geometry::Hv { h, w }
    };
    let omega = dif_operator(geometry)?;
    let mut cfg = BGAPNConfig::new(sigma * ((h * w) as f64).sqrt());
    cfg.epsilon = opts.epsilon;
    cfg.rows_per_iter = opts.rows_per_iter;
    cfg.max_iters = opts.max_iters;
    let out = bgapn(&img.pixels, &MeasurementOperator::identity(h * w), &param, &omega, &cfg)?;
    Ok(Image {
        h,
        w,
        pixels: out.estimate,
    })
}

/// Tile origins covering `0..len` with the last tile flush against the end.
fn tile_starts(len: usize, tile: usize, overlap: usize) -> Vec<usize> {
    if len <= tile {
        return vec![0];
    }
    let stride = tile - overlap;
    let mut starts: Vec<usize> = (0..).map(|k| k * stride).take_while(|&s| s + tile < len).collect();
    starts.push(len - tile);
    starts
}

fn denoise_tiled(img: &Image, sigma: f64, opts: &DenoiseOptions) -> Result<Image> {
    let mut sum = vec![0.0; img.len()];
    let mut count = vec![0u32; img.len()];
    let th = opts.tile.min(img.h);
    let tw = opts.tile.min(img.w);
    for &r0 in &tile_starts(img.h, th, opts.overlap) {
        for &c0 in &tile_starts(img.w, tw, opts.overlap) {
            let part = denoise_direct(&img.crop(r0, c0, th, tw), sigma, opts)?;
            for r in 0..th {
                for c in 0..tw {
                    let idx = (r0 + r) * img.w + c0 + c;
                    sum[idx] += part.get(r, c);
                    count[idx] += 1;
                }
            }
        }
    }
    let pixels = sum.iter().zip(&count).map(|(s, &n)| s / n as f64).collect();
    Ok(Image { h: img.h, w: img.w, pixels }.clamped())
}

/// One ensemble run: a multiple of the default stopping threshold and the operator layout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleMember {
    pub epsilon_factor: f64,
    pub diagonals: bool,
}

/// `{0.5, 1} x default epsilon` crossed with `{hv, hv + diagonals}`.
pub fn default_ensemble() -> Vec<EnsembleMember> {
    let mut grid = Vec::with_capacity(4);
    for epsilon_factor in [0.5, 1.0] {
        for diagonals in [false, true] {
            grid.push(EnsembleMember {
                epsilon_factor,
                diagonals,
            });
        }
    }
    grid
}

/// Default stopping threshold of the pursuit for this image: `1e-3` of its dynamic range.
fn default_epsilon(img: &Image) -> f64 {
    let (lo, hi) = img
        .pixels
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    1e-3 * (hi - lo)
}

/// Pixelwise mean of [`denoise_image`] over the ensemble `grid`.
pub fn ensemble_denoise(noisy: &Image, sigma: f64, grid: &[EnsembleMember], base: &DenoiseOptions) -> Result<Image> {
    if grid.is_empty() {
        return Err(invalid("ensemble grid must not be empty"));
    }
    noisy.validate()?;
    let eps0 = base.epsilon.unwrap_or_else(|| default_epsilon(noisy));
    let mut sum = vec![0.0; noisy.len()];
    for member in grid {
        if !(member.epsilon_factor > 0.0) {
            return Err(invalid(format!("epsilon factor must be positive, got {}", member.epsilon_factor)));
        }
        let opts = DenoiseOptions {
            diagonals: member.diagonals,
            epsilon: Some(eps0 * member.epsilon_factor),
            ..base.clone()
        };
        let run = denoise_image(noisy, sigma, &opts)?;
        sum.iter_mut().zip(&run.pixels).for_each(|(s, v)| *s += v);
    }
    let n = grid.len() as f64;
    Ok(Image {
        h: noisy.h,
        w: noisy.w,
        pixels: sum.into_iter().map(|s| s / n).collect(),
    })
}
