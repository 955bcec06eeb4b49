use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::projection::{segment_bounds, PiecewisePolyFit, SegmentPoly};

/// Recipe for a random piecewise polynomial test signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalSpec {
    pub d: usize,
    /// Number of jumps.
    pub k: usize,
    /// Polynomial degree.
    pub n: usize,
    /// Neighbouring pieces meet at the junction midpoints; only the derivatives jump.
    pub continuous: bool,
    /// The signal is rescaled to span exactly `range.0..=range.1`.
    pub range: (f64, f64),
    /// Shortest allowed piece; `None` means `2 (n + 1)`.
    pub min_segment: Option<usize>,
    pub seed: u64,
}

impl SignalSpec {
    /// Discontinuous signal on `[-1, 1]` with seed 0.
    pub fn new(d: usize, k: usize, n: usize) -> Self {
        Self {
            d,
            k,
            n,
            continuous: false,
            range: (-1.0, 1.0),
            min_segment: None,
            seed: 0,
        }
    }

    pub fn min_segment(&self) -> usize {
        self.min_segment.unwrap_or(2 * (self.n + 1))
    }

    pub fn validate(&self) -> Result<()> {
        let min_seg = self.min_segment();
        if min_seg == 0 {
            return Err(invalid("min_segment must be at least 1"));
        }
        if (self.k + 1) * min_seg > self.d {
            return Err(invalid(format!(
                "{} pieces of at least {min_seg} samples do not fit in d = {}",
                self.k + 1,
                self.d
            )));
        }
        let (lo, hi) = self.range;
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(invalid(format!("range must satisfy lo < hi, got ({lo}, {hi})")));
        }
        if self.continuous && self.n == 0 && self.k > 0 {
            return Err(invalid("a continuous piecewise constant signal cannot have jumps"));
        }
        Ok(())
    }

    /// Same recipe with another seed.
    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }
}

/// Draws a signal from `spec` and returns it with its exact piecewise fit.
///
/// Breakpoints are uniform over all placements that respect `min_segment`. Pieces of a
/// discontinuous signal are redrawn until every jump is clearly visible, and continuous
/// signals are redrawn until the slope clearly turns at every breakpoint.
pub fn gen_piecewise_poly(spec: &SignalSpec) -> Result<(Vec<f64>, PiecewisePolyFit)> {
    spec.validate()?;
    let (d, k, n) = (spec.d, spec.k, spec.n);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let min_seg = spec.min_segment();

    // sorted offsets in 0..=slack give every admissible gap composition
    let slack = d - (k + 1) * min_seg;
    let mut offsets: Vec<usize> = (0..k).map(|_| rng.random_range(0..=slack)).collect();
    offsets.sort_unstable();
    let breakpoints: Vec<usize> = offsets.iter().enumerate().map(|(i, &u)| (i + 1) * min_seg + u).collect();
    let bounds = segment_bounds(&breakpoints, d);

    let raw = if spec.continuous && n > 0 {
        continuous_pieces(&mut rng, &breakpoints, d, n)
    } else {
        discontinuous_pieces(&mut rng, &bounds, n)
    };

    let (lo, hi) = raw.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    let (r0, r1) = spec.range;
    let signal: Vec<f64> = if hi - lo > 1e-12 {
        raw.iter().map(|x| r0 + (x - lo) / (hi - lo) * (r1 - r0)).collect()
    } else {
        vec![0.5 * (r0 + r1); d]
    };
    let fit = PiecewisePolyFit::from_breakpoints(&signal, &breakpoints, n)?;
    Ok((signal, fit))
}

fn uniform(rng: &mut ChaCha8Rng) -> f64 {
    rng.random_range(-1.0..1.0)
}

fn discontinuous_pieces(rng: &mut ChaCha8Rng, bounds: &[(usize, usize)], n: usize) -> Vec<f64> {
    let d = bounds.last().map_or(0, |b| b.1);
    let mut out = vec![0.0; d];
    let mut prev: Option<SegmentPoly> = None;
    for &(start, end) in bounds {
        let (center, half_width) = SegmentPoly::frame(start, end);
        let mut local: Vec<f64> = (0..=n).map(|_| uniform(rng)).collect();
        if let Some(p) = &prev {
            let left = p.eval(start as f64 - 0.5);
            for _ in 0..100 {
                let poly = SegmentPoly { start, end, center, half_width, local: local.clone() };
                if (poly.eval(start as f64 - 0.5) - left).abs() >= 0.25 {
                    break;
                }
                local[0] = uniform(rng);
            }
        }
        let poly = SegmentPoly { start, end, center, half_width, local };
        for (i, v) in out.iter_mut().enumerate().take(end).skip(start) {
            *v = poly.eval(i as f64);
        }
        prev = Some(poly);
    }
    out
}

/// Random knot values joined by lines, plus degree-`n` bumps that vanish at both knots.
fn continuous_pieces(rng: &mut ChaCha8Rng, breakpoints: &[usize], d: usize, n: usize) -> Vec<f64> {
    let mut knots = vec![0.0];
    knots.extend(breakpoints.iter().map(|&t| t as f64 - 0.5));
    knots.push((d - 1) as f64);
    let pieces = knots.len() - 1;
    let min_turn = 0.5 * pieces as f64 / d as f64;
    let mut values = vec![uniform(rng), uniform(rng)];
    for s in 1..pieces {
        let slope_prev = (values[s] - values[s - 1]) / (knots[s] - knots[s - 1]);
        let span = knots[s + 1] - knots[s];
        let mut v = uniform(rng);
        for _ in 0..100 {
            if ((v - values[s]) / span - slope_prev).abs() >= min_turn {
                break;
            }
            v = uniform(rng);
        }
        values.push(v);
    }
    let bumps: Vec<Vec<f64>> = (0..pieces).map(|_| (0..n.saturating_sub(1)).map(|_| uniform(rng)).collect()).collect();

    (0..d)
        .map(|i| {
            let x = i as f64;
            let s = breakpoints.iter().filter(|&&t| i >= t).count();
            let (a, b) = (knots[s], knots[s + 1]);
            let line = values[s] + (values[s + 1] - values[s]) * (x - a) / (b - a);
            let h = 0.5 * (b - a);
            let u = (x - 0.5 * (a + b)) / h;
            let shape = bumps[s].iter().rev().fold(0.0, |acc, &c| acc * u + c);
            line + (x - a) * (x - b) / (h * h) * shape
        })
        .collect()
}

/// Adds i.i.d. `N(0, sigma^2)` noise drawn from a seeded generator.
pub fn add_noise(signal: &[f64], sigma: f64, seed: u64) -> Result<Vec<f64>> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(invalid(format!("sigma must be finite and >= 0, got {sigma}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(signal
        .iter()
        .map(|x| x + sigma * rng.sample::<f64, _>(StandardNormal))
        .collect())
}
