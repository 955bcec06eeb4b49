use serde::{Deserialize, Serialize};

use super::{default_ensemble, ensemble_denoise, DenoiseOptions, EnsembleMember, Image};
use crate::error::{invalid, Result};

/// Anisotropic gradient magnitude `|dh| + |dv|` with forward differences; the last column and
/// row get no contribution from the missing neighbour.
pub fn gradient_map(img: &Image) -> Image {
    let (h, w) = (img.h, img.w);
    Image::from_fn(h, w, |r, c| {
        let v = img.get(r, c);
        let dh = if c + 1 < w { img.get(r, c + 1) - v } else { 0.0 };
        let dv = if r + 1 < h { img.get(r + 1, c) - v } else { 0.0 };
        dh.abs() + dv.abs()
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentOptions {
    /// Noise standard deviation passed to the denoiser.
    pub sigma: f64,
    /// Boundary threshold as a fraction of the largest gradient magnitude.
    pub rel_threshold: f64,
    /// Regions smaller than this many pixels are merged into a neighbour.
    pub min_region: usize,
    pub ensemble: Vec<EnsembleMember>,
    pub denoise: DenoiseOptions,
}

impl SegmentOptions {
    pub fn new(sigma: f64) -> Self {
        Self {
            sigma,
            rel_threshold: 0.1,
            min_region: 16,
            ensemble: default_ensemble(),
            denoise: DenoiseOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentationResult {
    pub h: usize,
    pub w: usize,
    pub boundary_map: Vec<bool>,
    /// Region ids starting at 1; boundary pixels are 0.
    pub labels: Vec<u32>,
    pub regions: usize,
    pub piecewise_version: Image,
    pub threshold_used: f64,
}

/// Denoises with the ensemble, thresholds the gradient map and labels the remaining regions.
pub fn segment_image(img: &Image, opts: &SegmentOptions) -> Result<SegmentationResult> {
    if !(opts.rel_threshold >= 0.0) {
        return Err(invalid(format!("relative threshold must be >= 0, got {}", opts.rel_threshold)));
    }
    let piecewise = ensemble_denoise(img, opts.sigma, &opts.ensemble, &opts.denoise)?;
    let grad = gradient_map(&piecewise);
    let peak = grad.pixels.iter().fold(0.0f64, |a, &b| a.max(b));
    let threshold = opts.rel_threshold * peak;
    let boundary: Vec<bool> = grad.pixels.iter().map(|&g| peak > 0.0 && g > threshold).collect();
    let (labels, regions) = label_regions(&piecewise, &boundary, opts.min_region);
    Ok(SegmentationResult {
        h: img.h,
        w: img.w,
        boundary_map: boundary,
        labels,
        regions,
        piecewise_version: piecewise,
        threshold_used: threshold,
    })
}

/// 4-connected components of the non-boundary pixels, with regions below `min_region` pixels
/// merged into the neighbouring region of closest mean intensity. Two regions are neighbours
/// when they touch the same boundary pixel. Returns labels (0 on the boundary) and the count.
pub fn label_regions(img: &Image, boundary: &[bool], min_region: usize) -> (Vec<u32>, usize) {
    let (h, w) = (img.h, img.w);
    let n = h * w;
    let mut comp = vec![usize::MAX; n];
    let mut count = 0;
    let mut stack = Vec::new();
    for start in 0..n {
        if boundary[start] || comp[start] != usize::MAX {
            continue;
        }
        comp[start] = count;
        stack.push(start);
        while let Some(p) = stack.pop() {
            let (r, c) = (p / w, p % w);
            let mut visit = |q: usize| {
                if !boundary[q] && comp[q] == usize::MAX {
                    comp[q] = count;
                    stack.push(q);
                }
            };
            if c > 0 {
                visit(p - 1);
            }
            if c + 1 < w {
                visit(p + 1);
            }
            if r > 0 {
                visit(p - w);
            }
            if r + 1 < h {
                visit(p + w);
            }
        }
        count += 1;
    }

    let mut size = vec![0usize; count];
    let mut total = vec![0.0; count];
    for p in 0..n {
        if comp[p] != usize::MAX {
            size[comp[p]] += 1;
            total[comp[p]] += img.pixels[p];
        }
    }
    // adjacency through boundary pixels (8-neighbourhood)
    let mut adjacent: Vec<Vec<usize>> = vec![Vec::new(); count];
    for p in (0..n).filter(|&p| boundary[p]) {
        let (r, c) = (p / w, p % w);
        let mut touching = Vec::new();
        for dr in -1i64..=1 {
            for dc in -1i64..=1 {
                let (rr, cc) = (r as i64 + dr, c as i64 + dc);
                if rr >= 0 && cc >= 0 && (rr as usize) < h && (cc as usize) < w {
                    let q = rr as usize * w + cc as usize;
                    if comp[q] != usize::MAX {
                        touching.push(comp[q]);
                    }
                }
            }
        }
        touching.sort_unstable();
        touching.dedup();
        for &a in &touching {
            for &b in &touching {
                if a != b {
                    adjacent[a].push(b);
                }
            }
        }
    }
    for list in &mut adjacent {
        list.sort_unstable();
        list.dedup();
    }

    // union-find merge of small regions, smallest first
    let mut parent: Vec<usize> = (0..count).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    loop {
        let mut roots: Vec<usize> = (0..count).filter(|&i| find(&mut parent, i) == i).collect();
        roots.sort_by_key(|&i| (size[i], i));
        let Some(&small) = roots.iter().find(|&&i| size[i] < min_region && !adjacent[i].is_empty()) else {
            break;
        };
        let mean = total[small] / size[small] as f64;
        let mut best: Option<(f64, usize)> = None;
        for &nb in &adjacent[small].clone() {
            let root = find(&mut parent, nb);
            if root == small {
                continue;
            }
            let diff = (total[root] / size[root] as f64 - mean).abs();
            if best.is_none_or(|(bd, br)| diff < bd || diff == bd && root < br) {
                best = Some((diff, root));
            }
        }
        let Some((_, target)) = best else {
            adjacent[small].clear();
            continue;
        };
        parent[small] = target;
        size[target] += size[small];
        total[target] += total[small];
        let moved = std::mem::take(&mut adjacent[small]);
        adjacent[target].extend(moved);
        let resolved: Vec<usize> = adjacent[target].clone().into_iter().map(|a| find(&mut parent, a)).collect();
        adjacent[target] = resolved.into_iter().filter(|&a| a != target).collect();
        adjacent[target].sort_unstable();
        adjacent[target].dedup();
    }

    let mut relabel = vec![0u32; count];
    let mut next = 0u32;
    let mut labels = vec![0u32; n];
    for p in 0..n {
        if comp[p] == usize::MAX {
            continue;
        }
        let root = find(&mut parent, comp[p]);
        if relabel[root] == 0 {
            next += 1;
            relabel[root] = next;
        }
        labels[p] = relabel[root];
    }
    (labels, next as usize)
}

/// Boundary F-measure where a pixel matches if the other map has a pixel within `tol`
/// (Chebyshev distance). Two empty maps score 1.
pub fn boundary_f_score(pred: &[bool], truth: &[bool], h: usize, w: usize, tol: usize) -> f64 {
    let near = |map: &[bool], p: usize| {
        let (r, c) = (p / w, p % w);
        let (r0, r1) = (r.saturating_sub(tol), (r + tol).min(h - 1));
        let (c0, c1) = (c.saturating_sub(tol), (c + tol).min(w - 1));
        (r0..=r1).any(|rr| (c0..=c1).any(|cc| map[rr * w + cc]))
    };
    let n_pred = pred.iter().filter(|&&b| b).count();
    let n_true = truth.iter().filter(|&&b| b).count();
    if n_pred == 0 && n_true == 0 {
        return 1.0;
    }
    if n_pred == 0 || n_true == 0 {
        return 0.0;
    }
    let precision = (0..h * w).filter(|&p| pred[p] && near(truth, p)).count() as f64 / n_pred as f64;
    let recall = (0..h * w).filter(|&p| truth[p] && near(pred, p)).count() as f64 / n_true as f64;
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}
