use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Image;
use crate::error::{invalid, Result};

/// A generated cartoon image with its ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticImage {
    pub image: Image,
    /// Region index per pixel, `0..regions`.
    pub labels: Vec<u32>,
    /// Pixels whose right or lower neighbour lies in another region (the gradient-map convention).
    pub boundary: Vec<bool>,
    pub regions: usize,
}

/// Voronoi partition into `regions` cells, each filled with a plane of mild slope.
///
/// Cell levels are spread evenly over `40..=215` in random order, so neighbouring cells differ
/// by at least `175 / (regions - 1)` at their sites. Deterministic per seed.
pub fn piecewise_planar_image(h: usize, w: usize, regions: usize, seed: u64) -> Result<SyntheticImage> {
    if regions == 0 || h < 4 || w < 4 {
        return Err(invalid("need at least one region and a 4x4 image"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let min_sep = 0.35 * h.min(w) as f64;
    let margin = (h.min(w) / 8) as f64;
    let mut sites: Vec<(f64, f64)> = Vec::with_capacity(regions);
    let mut attempts = 0;
    while sites.len() < regions {
        attempts += 1;
        if attempts > 10_000 {
            return Err(invalid(format!("cannot place {regions} well-separated regions in {h}x{w}")));
        }
        let p = (
            rng.random_range(margin..=h as f64 - 1.0 - margin),
            rng.random_range(margin..=w as f64 - 1.0 - margin),
        );
        if sites.iter().all(|s| ((s.0 - p.0).powi(2) + (s.1 - p.1).powi(2)).sqrt() >= min_sep) {
            sites.push(p);
        }
    }
    let mut levels: Vec<f64> = (0..regions)
        .map(|i| if regions == 1 { 128.0 } else { 40.0 + 175.0 * i as f64 / (regions - 1) as f64 })
        .collect();
    for i in (1..regions).rev() {
        levels.swap(i, rng.random_range(0..=i));
    }
    let planes: Vec<(f64, f64, f64)> = levels
        .iter()
        .map(|&l| (l + rng.random_range(-5.0..5.0), rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3)))
        .collect();

    let mut labels = vec![0u32; h * w];
    for r in 0..h {
        for c in 0..w {
            let dist = |s: &(f64, f64)| (s.0 - r as f64).powi(2) + (s.1 - c as f64).powi(2);
            let best = (0..regions).fold(0, |b, k| if dist(&sites[k]) < dist(&sites[b]) { k } else { b });
            labels[r * w + c] = best as u32;
        }
    }
    let image = Image::from_fn(h, w, |r, c| {
        let k = labels[r * w + c] as usize;
        let (level, sv, sh) = planes[k];
        (level + sv * (r as f64 - sites[k].0) + sh * (c as f64 - sites[k].1)).clamp(0.0, 255.0)
    });
    let boundary = (0..h * w)
        .map(|p| {
            let (r, c) = (p / w, p % w);
            (c + 1 < w && labels[p + 1] != labels[p]) || (r + 1 < h && labels[p + w] != labels[p])
        })
        .collect();
    Ok(SyntheticImage {
        image,
        labels,
        boundary,
        regions,
    })
}
