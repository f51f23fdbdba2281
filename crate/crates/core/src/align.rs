//! Scale/shift depth alignment and the percentile-scaled depth noise model.

use alloc::vec::Vec;

use crate::cache::DepthMap;
use crate::grid::Mask;
use crate::rng::SplitMix64;
use crate::sum::ExactSum;
use crate::{Error, Result};

/// Least-squares fit `target ≈ scale * depth + shift` over a mask.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Alignment {
    pub scale: f64,
    /// Meters.
    pub shift: f64,
    /// Root-mean-square residual over the support, meters.
    pub residual_rms: f64,
    /// Number of pixels that entered the fit.
    pub support: usize,
}

impl Alignment {
    pub const IDENTITY: Alignment = Alignment {
        scale: 1.0,
        shift: 0.0,
        residual_rms: 0.0,
        support: 0,
    };

    pub fn apply(&self, d: f64) -> f64 {
        self.scale * d + self.shift
    }
}

/// Closed-form minimizer of `sum_M (s d + t - d_tgt)^2`.
///
/// The sums of the 2x2 normal equations are exactly rounded, so the result
/// does not depend on pixel order. A pixel enters the fit when `mask` is set
/// and both depths are valid.
pub fn align_depth(depth: &DepthMap, target: &DepthMap, mask: &Mask) -> Result<Alignment> {
    let pairs = masked_pairs(depth, target, mask)?;
    fit(&pairs)
}

/// As [`align_depth`], then drop the `trim` fraction of pixels with the
/// largest absolute residuals and refit once. `trim = 0` is plain least
/// squares.
pub fn align_depth_trimmed(depth: &DepthMap, target: &DepthMap, mask: &Mask, trim: f64) -> Result<Alignment> {
    if !(0.0..1.0).contains(&trim) {
        return Err(Error::invalid("trim fraction must lie in [0, 1)"));
    }
    let pairs = masked_pairs(depth, target, mask)?;
    let first = fit(&pairs)?;
    let drop = libm::floor(trim * pairs.len() as f64) as usize;
    if drop == 0 {
        return Ok(first);
    }
    let mut ranked: Vec<(f64, usize)> = pairs
        .iter()
        .enumerate()
        .map(|(i, &(d, y))| (libm::fabs(first.apply(d) - y), i))
        .collect();
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut keep: Vec<usize> = ranked[..pairs.len() - drop].iter().map(|r| r.1).collect();
    keep.sort_unstable();
    let kept: Vec<(f64, f64)> = keep.into_iter().map(|i| pairs[i]).collect();
    fit(&kept)
}

fn masked_pairs(depth: &DepthMap, target: &DepthMap, mask: &Mask) -> Result<Vec<(f64, f64)>> {
    let dims = depth.dims();
    target.values().ensure_dims(dims.0, dims.1)?;
    mask.ensure_dims(dims.0, dims.1)?;
    let (w, h) = dims;
    let mut pairs = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if !*mask.get(x, y) {
                continue;
            }
            if let (Some(d), Some(t)) = (depth.get(x, y), target.get(x, y)) {
                pairs.push((d, t));
            }
        }
    }
    Ok(pairs)
}

/// Solve the normal equations for `(scale, shift)` by Cramer's rule.
pub fn fit(pairs: &[(f64, f64)]) -> Result<Alignment> {
    let support = pairs.len();
    if support < 2 {
        return Err(Error::IllPosed { support });
    }
    let first = pairs[0].0;
    if pairs.iter().all(|&(d, _)| d == first) {
        return Err(Error::IllPosed { support });
    }
    let mut sd = ExactSum::new();
    let mut sdd = ExactSum::new();
    let mut sy = ExactSum::new();
    let mut sdy = ExactSum::new();
    for &(d, y) in pairs {
        sd.add(d);
        sdd.add(d * d);
        sy.add(y);
        sdy.add(d * y);
    }
    let n = support as f64;
    let (sd, sdd, sy, sdy) = (sd.value(), sdd.value(), sy.value(), sdy.value());
    let det = n * sdd - sd * sd;
    if !(det > 0.0) || !det.is_finite() {
        return Err(Error::IllPosed { support });
    }
    let scale = (n * sdy - sd * sy) / det;
    let shift = (sdd * sy - sd * sdy) / det;
    let sq: ExactSum = pairs
        .iter()
        .map(|&(d, y)| {
            let r = scale * d + shift - y;
            r * r
        })
        .collect();
    Ok(Alignment {
        scale,
        shift,
        residual_rms: libm::sqrt(sq.value() / n),
        support,
    })
}

/// `s d + t` on every valid pixel; results `<= 0` become invalid.
pub fn apply_alignment(depth: &DepthMap, alignment: &Alignment) -> DepthMap {
    depth.map_valid(|d| alignment.apply(d))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    /// Noise standard deviation as a fraction of the 5-95 percentile spread.
    pub ratio: f64,
    pub seed: u64,
}

/// Nearest-rank percentile of an ascending slice: the value at 1-based rank
/// `ceil(q n)`, clamped to `[1, n]`.
pub fn percentile_nearest_rank(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let n = sorted.len();
    let rank = (libm::ceil(q * n as f64) as usize).clamp(1, n);
    Some(sorted[rank - 1])
}

/// `(d_0.05, d_0.95)` over valid pixels.
pub fn depth_spread(depth: &DepthMap) -> Option<(f64, f64)> {
    let mut vals: Vec<f64> = depth.valid_values().collect();
    vals.sort_by(f64::total_cmp);
    Some((
        percentile_nearest_rank(&vals, 0.05)?,
        percentile_nearest_rank(&vals, 0.95)?,
    ))
}

/// Add `N(0, ratio * (d_0.95 - d_0.05))` to every valid pixel, in row-major
/// order from a stream seeded by `spec.seed`.
pub fn add_depth_noise(depth: &DepthMap, spec: &NoiseSpec) -> Result<DepthMap> {
    if !(spec.ratio >= 0.0 && spec.ratio.is_finite()) {
        return Err(Error::invalid("noise ratio must be a non-negative number"));
    }
    let (lo, hi) = depth_spread(depth).ok_or_else(|| Error::invalid("depth map has no valid pixels"))?;
    let sigma = spec.ratio * (hi - lo);
    if sigma == 0.0 {
        return Ok(depth.clone());
    }
    let mut rng = SplitMix64::new(spec.seed);
    Ok(depth.map_valid(|d| d + sigma * rng.gaussian()))
}
