//! Conditioning path from rendered guidance to the generator.
//!
//! Each view's guidance video is encoded by a deterministic patch-mean
//! encoder, its coverage mask is min-pooled to latent resolution and
//! multiplied into the latent, the result is concatenated with the noisy
//! target latent and passed through a per-cell affine first layer, and the
//! per-view features are reduced by an element-wise maximum. The channel
//! concatenation and 3D point-merging alternatives are provided for
//! comparison. The video model itself sits behind [`Generator`].

use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::cache::PointCloud;
use crate::grid::{luminance, Grid, Image, Mask};
use crate::rng::SplitMix64;
use crate::splat::GuidanceVideo;
use crate::{Error, Result};

pub const DEFAULT_PATCH: usize = 8;
pub const DEFAULT_CHANNELS: usize = 4;
pub const DEFAULT_MAX_VIEWS: usize = 4;
/// Fill used by [`StubGenerator`] when a frame has no covered pixel at all.
pub const EMPTY_FILL: [f32; 3] = [0.5, 0.5, 0.5];

/// `L x C x h x w` feature video, row-major, produced at patch factor `p`
/// (`h = H / p`, `w = W / p`).
#[derive(Debug, Clone, PartialEq)]
pub struct LatentVideo {
    frames: usize,
    channels: usize,
    height: usize,
    width: usize,
    patch: usize,
    values: Vec<f32>,
}

/// First-layer outputs share the latent layout, with `C = F`.
pub type FusedFeatures = LatentVideo;

impl LatentVideo {
    pub fn new(dims: [usize; 4], patch: usize, values: Vec<f32>) -> Result<Self> {
        let [frames, channels, height, width] = dims;
        if channels == 0 || patch == 0 {
            return Err(Error::invalid("latent needs at least one channel and a positive patch factor"));
        }
        let n = frames * channels * height * width;
        if values.len() != n {
            return Err(Error::LengthMismatch {
                what: "latent payload",
                expected: n,
                found: values.len(),
            });
        }
        Ok(Self {
            frames,
            channels,
            height,
            width,
            patch,
            values,
        })
    }

    pub fn zeros(dims: [usize; 4], patch: usize) -> Result<Self> {
        Self::new(dims, patch, alloc::vec![0.0; dims.iter().product()])
    }

    /// `[L, C, h, w]`
    pub fn dims(&self) -> [usize; 4] {
        [self.frames, self.channels, self.height, self.width]
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn patch(&self) -> usize {
        self.patch
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    #[inline]
    fn offset(&self, l: usize, c: usize, y: usize, x: usize) -> usize {
        ((l * self.channels + c) * self.height + y) * self.width + x
    }

    pub fn get(&self, l: usize, c: usize, y: usize, x: usize) -> f32 {
        self.values[self.offset(l, c, y, x)]
    }

    pub fn set(&mut self, l: usize, c: usize, y: usize, x: usize, v: f32) {
        let i = self.offset(l, c, y, x);
        self.values[i] = v;
    }

    fn same_spatial(&self, other: &LatentVideo) -> bool {
        self.frames == other.frames && self.height == other.height && self.width == other.width
    }

    fn shape_error(&self, other: &LatentVideo) -> Error {
        Error::invalid(alloc::format!(
            "latent shape mismatch: {:?} vs {:?}",
            self.dims(),
            other.dims()
        ))
    }
}

/// `L x 1 x h x w` binary mask.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentMask {
    frames: Vec<Mask>,
}

impl LatentMask {
    pub fn new(frames: Vec<Mask>) -> Result<Self> {
        if let Some(first) = frames.first() {
            for f in &frames {
                f.ensure_dims(first.width(), first.height())?;
            }
        }
        Ok(Self { frames })
    }

    pub fn frames(&self) -> &[Mask] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn value(&self, l: usize, y: usize, x: usize) -> f32 {
        if *self.frames[l].get(x, y) {
            1.0
        } else {
            0.0
        }
    }
}

fn check_divisible(width: usize, height: usize, patch: usize) -> Result<(usize, usize)> {
    if patch == 0 || !width.is_multiple_of(patch) || !height.is_multiple_of(patch) {
        return Err(Error::invalid(alloc::format!(
            "{width}x{height} is not divisible by patch factor {patch}"
        )));
    }
    Ok((width / patch, height / patch))
}

/// Patch-mean toy encoder: channels 0..3 are the RGB means over each
/// `patch x patch` block, channel 3 (when `channels == 4`) the mean luma.
pub fn encode(frames: &[&Image], patch: usize, channels: usize) -> Result<LatentVideo> {
    if channels == 0 || channels > 4 {
        return Err(Error::invalid("encoder supports 1 to 4 channels"));
    }
    let first = frames.first().ok_or_else(|| Error::invalid("cannot encode an empty video"))?;
    let (w, h) = first.dims();
    let (lw, lh) = check_divisible(w, h, patch)?;
    let mut z = LatentVideo::zeros([frames.len(), channels, lh, lw], patch)?;
    let area = (patch * patch) as f64;
    for (l, img) in frames.iter().enumerate() {
        img.ensure_dims(w, h)?;
        for by in 0..lh {
            for bx in 0..lw {
                let mut acc = [0.0f64; 4];
                for y in by * patch..(by + 1) * patch {
                    for x in bx * patch..(bx + 1) * patch {
                        let c = *img.get(x, y);
                        acc[0] += c[0] as f64;
                        acc[1] += c[1] as f64;
                        acc[2] += c[2] as f64;
                        acc[3] += luminance(c) as f64;
                    }
                }
                for (c, a) in acc.iter().enumerate().take(channels) {
                    z.set(l, c, by, bx, (a / area) as f32);
                }
            }
        }
    }
    Ok(z)
}

pub fn encode_guidance(video: &GuidanceVideo, patch: usize, channels: usize) -> Result<LatentVideo> {
    let imgs: Vec<&Image> = video.frames.iter().map(|f| &f.image).collect();
    encode(&imgs, patch, channels)
}

/// Min-pool: a latent cell is set only if its whole pixel patch is set.
pub fn downsample_mask(mask: &Mask, patch: usize) -> Result<Mask> {
    let (lw, lh) = check_divisible(mask.width(), mask.height(), patch)?;
    Ok(Grid::from_fn(lw, lh, |bx, by| {
        (by * patch..(by + 1) * patch).all(|y| (bx * patch..(bx + 1) * patch).all(|x| *mask.get(x, y)))
    }))
}

pub fn downsample_masks(masks: &[&Mask], patch: usize) -> Result<LatentMask> {
    LatentMask::new(masks.iter().map(|m| downsample_mask(m, patch)).collect::<Result<_>>()?)
}

pub fn guidance_latent_mask(video: &GuidanceVideo, patch: usize) -> Result<LatentMask> {
    let masks: Vec<&Mask> = video.frames.iter().map(|f| &f.mask).collect();
    downsample_masks(&masks, patch)
}

/// `z ⊙ M'` broadcast over channels. Masked cells become `+0.0`.
pub fn masked_latent(z: &LatentVideo, mask: &LatentMask) -> Result<LatentVideo> {
    let [frames, channels, h, w] = z.dims();
    if mask.len() != frames {
        return Err(Error::LengthMismatch {
            what: "latent mask frames",
            expected: frames,
            found: mask.len(),
        });
    }
    let mut out = z.clone();
    for (l, m) in mask.frames().iter().enumerate() {
        m.ensure_dims(w, h)?;
        for y in 0..h {
            for x in 0..w {
                if !*m.get(x, y) {
                    for c in 0..channels {
                        out.set(l, c, y, x, 0.0);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Per-cell affine map from `2C` concatenated channels to `F` features.
#[derive(Debug, Clone, PartialEq)]
pub struct InLayerWeights {
    inputs: usize,
    outputs: usize,
    /// `outputs x inputs`, row-major.
    weights: Vec<f32>,
    bias: Vec<f32>,
}

impl InLayerWeights {
    pub fn new(inputs: usize, outputs: usize, weights: Vec<f32>, bias: Vec<f32>) -> Result<Self> {
        if inputs == 0 || outputs == 0 {
            return Err(Error::invalid("in-layer needs non-zero input and output channels"));
        }
        if weights.len() != inputs * outputs {
            return Err(Error::LengthMismatch {
                what: "in-layer weights",
                expected: inputs * outputs,
                found: weights.len(),
            });
        }
        if bias.len() != outputs {
            return Err(Error::LengthMismatch {
                what: "in-layer bias",
                expected: outputs,
                found: bias.len(),
            });
        }
        if !weights.iter().chain(&bias).all(|v| v.is_finite()) {
            return Err(Error::invalid("in-layer parameters must be finite"));
        }
        Ok(Self {
            inputs,
            outputs,
            weights,
            bias,
        })
    }

    /// `F = 2C`, weights the identity, zero bias.
    pub fn identity(latent_channels: usize) -> Self {
        let n = 2 * latent_channels;
        let mut weights = alloc::vec![0.0; n * n];
        for i in 0..n {
            weights[i * n + i] = 1.0;
        }
        Self::new(n, n, weights, alloc::vec![0.0; n]).expect("identity shape")
    }

    /// Uniform in `±1/sqrt(2C)` from SplitMix64; bias drawn after weights.
    pub fn seeded(seed: u64, latent_channels: usize, features: usize) -> Result<Self> {
        let inputs = 2 * latent_channels;
        let bound = 1.0 / libm::sqrt(inputs as f64);
        let mut rng = SplitMix64::new(seed);
        let weights = (0..inputs * features)
            .map(|_| rng.uniform(-bound, bound) as f32)
            .collect();
        let bias = (0..features).map(|_| rng.uniform(-bound, bound) as f32).collect();
        Self::new(inputs, features, weights, bias)
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn weights(&self) -> &[f32] {
        &self.weights
    }

    pub fn bias(&self) -> &[f32] {
        &self.bias
    }

    pub fn weight(&self, out: usize, inp: usize) -> f32 {
        self.weights[out * self.inputs + inp]
    }
}

/// `In-Layer(Concat(masked, noisy))`, evaluated cell by cell.
pub fn in_layer(masked: &LatentVideo, noisy: &LatentVideo, w: &InLayerWeights) -> Result<FusedFeatures> {
    if !masked.same_spatial(noisy) || masked.channels != noisy.channels {
        return Err(masked.shape_error(noisy));
    }
    let c = masked.channels;
    if w.inputs != 2 * c {
        return Err(Error::invalid(alloc::format!(
            "in-layer expects {} input channels, latents provide {}",
            w.inputs,
            2 * c
        )));
    }
    let [frames, _, h, wd] = masked.dims();
    let mut out = LatentVideo::zeros([frames, w.outputs, h, wd], masked.patch)?;
    let mut input = alloc::vec![0.0f32; 2 * c];
    for l in 0..frames {
        for y in 0..h {
            for x in 0..wd {
                for k in 0..c {
                    input[k] = masked.get(l, k, y, x);
                    input[c + k] = noisy.get(l, k, y, x);
                }
                for f in 0..w.outputs {
                    let row = &w.weights[f * w.inputs..(f + 1) * w.inputs];
                    let mut acc = w.bias[f] as f64;
                    for (wk, xk) in row.iter().zip(&input) {
                        acc += *wk as f64 * *xk as f64;
                    }
                    out.set(l, f, y, x, acc as f32);
                }
            }
        }
    }
    Ok(out)
}

/// Maximum under IEEE total order, so `-0.0 < +0.0` and the reduction is
/// commutative bit for bit.
fn total_max(a: f32, b: f32) -> f32 {
    if b.total_cmp(&a) == Ordering::Greater {
        b
    } else {
        a
    }
}

/// Element-wise maximum over views.
pub fn fuse_max(features: &[FusedFeatures]) -> Result<FusedFeatures> {
    let first = features.first().ok_or_else(|| Error::invalid("max-pool fusion needs at least one view"))?;
    let mut out = first.clone();
    for f in &features[1..] {
        if f.dims() != first.dims() {
            return Err(first.shape_error(f));
        }
        for (o, v) in out.values.iter_mut().zip(&f.values) {
            *o = total_max(*o, *v);
        }
    }
    Ok(out)
}

/// Channel concatenation in input order, zero-padded to `max_views * C`.
pub fn fuse_concat(latents: &[LatentVideo], max_views: usize) -> Result<LatentVideo> {
    let first = latents.first().ok_or_else(|| Error::invalid("concat fusion needs at least one view"))?;
    if latents.len() > max_views {
        return Err(Error::invalid(alloc::format!(
            "concat fusion supports at most {max_views} views, got {}",
            latents.len()
        )));
    }
    let [frames, c, h, w] = first.dims();
    let mut out = LatentVideo::zeros([frames, max_views * c, h, w], first.patch)?;
    for (v, z) in latents.iter().enumerate() {
        if z.dims() != first.dims() {
            return Err(first.shape_error(z));
        }
        for l in 0..frames {
            for k in 0..c {
                for y in 0..h {
                    for x in 0..w {
                        out.set(l, v * c + k, y, x, z.get(l, k, y, x));
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Merge clouds in 3D by concatenation, no deduplication.
pub fn fuse_explicit(clouds: &[&PointCloud]) -> PointCloud {
    let mut out = PointCloud::with_capacity(clouds.iter().map(|c| c.len()).sum());
    for c in clouds {
        out.extend_from(c);
    }
    out
}

/// Diffusion time `tau` with its signal/noise coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSchedulePoint {
    pub tau: f64,
    pub alpha: f64,
    pub sigma: f64,
    pub seed: u64,
}

impl NoiseSchedulePoint {
    pub fn new(tau: f64, alpha: f64, sigma: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&tau) {
            return Err(Error::invalid("tau must lie in [0, 1]"));
        }
        if !(alpha * alpha + sigma * sigma > 1e-12) {
            return Err(Error::invalid("alpha and sigma cannot both vanish"));
        }
        Ok(Self { tau, alpha, sigma, seed })
    }

    /// Variance-preserving cosine schedule.
    pub fn cosine(tau: f64, seed: u64) -> Result<Self> {
        let (s, c) = libm::sincos(core::f64::consts::FRAC_PI_2 * tau);
        Self::new(tau, c, s, seed)
    }

    /// `alpha = 1, sigma = 0`.
    pub fn clean(seed: u64) -> Self {
        Self {
            tau: 0.0,
            alpha: 1.0,
            sigma: 0.0,
            seed,
        }
    }
}

/// `alpha z0 + sigma eps` with `eps` drawn in storage order from the seed.
pub fn make_noisy_latent(z0: &LatentVideo, sched: &NoiseSchedulePoint) -> LatentVideo {
    let mut rng = SplitMix64::new(sched.seed);
    let (a, s) = (sched.alpha as f32, sched.sigma as f32);
    let mut out = z0.clone();
    for v in out.values.iter_mut() {
        let eps = rng.gaussian() as f32;
        *v = a * *v + s * eps;
    }
    out
}

/// Upsample the first three channels back to pixels (nearest).
pub fn decode_rgb(z: &LatentVideo) -> Result<Vec<Image>> {
    if z.channels < 3 {
        return Err(Error::invalid("decoding RGB needs at least three channels"));
    }
    let p = z.patch;
    Ok((0..z.frames)
        .map(|l| {
            Grid::from_fn(z.width * p, z.height * p, |x, y| {
                let (bx, by) = (x / p, y / p);
                [z.get(l, 0, by, bx), z.get(l, 1, by, bx), z.get(l, 2, by, bx)]
            })
        })
        .collect())
}

/// Configuration of the conditioning path of a single denoiser call.
#[derive(Debug, Clone, PartialEq)]
pub struct Conditioner {
    pub patch: usize,
    pub channels: usize,
    pub weights: InLayerWeights,
}

impl Conditioner {
    /// `p = 1`, `C = 3`, identity in-layer: the fused features' first three
    /// channels are the max-pooled masked guidance itself.
    pub fn identity() -> Self {
        Self {
            patch: 1,
            channels: 3,
            weights: InLayerWeights::identity(3),
        }
    }

    /// Per-view `In-Layer(Concat(E(I^v) ⊙ M^v', noisy))`.
    pub fn view_features(&self, guidance: &[GuidanceVideo], noisy: &LatentVideo) -> Result<Vec<FusedFeatures>> {
        if guidance.is_empty() {
            return Err(Error::invalid("conditioning needs at least one guidance view"));
        }
        guidance
            .iter()
            .map(|g| {
                let z = encode_guidance(g, self.patch, self.channels)?;
                let m = guidance_latent_mask(g, self.patch)?;
                in_layer(&masked_latent(&z, &m)?, noisy, &self.weights)
            })
            .collect()
    }

    /// Max-pooled first-layer features.
    pub fn condition(&self, guidance: &[GuidanceVideo], noisy: &LatentVideo) -> Result<FusedFeatures> {
        fuse_max(&self.view_features(guidance, noisy)?)
    }

    /// Latent-resolution coverage of the union of views.
    pub fn coverage(&self, guidance: &[GuidanceVideo]) -> Result<LatentMask> {
        let masks = guidance
            .iter()
            .map(|g| guidance_latent_mask(g, self.patch))
            .collect::<Result<Vec<_>>>()?;
        let first = masks.first().ok_or_else(|| Error::invalid("no guidance views"))?;
        let frames = (0..first.len())
            .map(|l| {
                let m0 = &first.frames()[l];
                Grid::from_fn(m0.width(), m0.height(), |x, y| masks.iter().any(|m| *m.frames()[l].get(x, y)))
            })
            .collect();
        LatentMask::new(frames)
    }
}

/// Stand-in for the camera-conditioned video model.
///
/// Receives one guidance video per cache view, all of the same length and
/// size, and returns an RGB video of that length and size.
pub trait Generator {
    fn generate(&mut self, guidance: &[GuidanceVideo]) -> Result<Vec<Image>>;
}

impl<G: Generator + ?Sized> Generator for &mut G {
    fn generate(&mut self, guidance: &[GuidanceVideo]) -> Result<Vec<Image>> {
        (**self).generate(guidance)
    }
}

/// Deterministic generator: each pixel takes the color of the nearest-depth
/// view covering it (lowest view index on ties); pixels no view covers get
/// the frame's mean covered color, or [`EMPTY_FILL`] if nothing is covered.
#[derive(Debug, Clone, Copy, Default)]
pub struct StubGenerator;

impl Generator for StubGenerator {
    fn generate(&mut self, guidance: &[GuidanceVideo]) -> Result<Vec<Image>> {
        let len = check_guidance(guidance)?;
        let (w, h) = guidance[0].frames[0].dims();
        let mut out = Vec::with_capacity(len);
        for t in 0..len {
            let mut img = Grid::filled(w, h, [0.0f32; 3]);
            let mut covered = Grid::filled(w, h, false);
            let mut sum = [0.0f64; 3];
            let mut n = 0usize;
            for y in 0..h {
                for x in 0..w {
                    let mut best: Option<(f64, [f32; 3])> = None;
                    for g in guidance {
                        let f = &g.frames[t];
                        if !*f.mask.get(x, y) {
                            continue;
                        }
                        let d = *f.depth.get(x, y);
                        if best.is_none_or(|(bd, _)| d < bd) {
                            best = Some((d, *f.image.get(x, y)));
                        }
                    }
                    if let Some((_, c)) = best {
                        *img.get_mut(x, y) = c;
                        *covered.get_mut(x, y) = true;
                        for k in 0..3 {
                            sum[k] += c[k] as f64;
                        }
                        n += 1;
                    }
                }
            }
            let fill = if n == 0 {
                EMPTY_FILL
            } else {
                [
                    (sum[0] / n as f64) as f32,
                    (sum[1] / n as f64) as f32,
                    (sum[2] / n as f64) as f32,
                ]
            };
            for (px, &c) in img.as_mut_slice().iter_mut().zip(covered.as_slice()) {
                if !c {
                    *px = fill;
                }
            }
            out.push(img);
        }
        Ok(out)
    }
}

/// Validate guidance, run the generator and check its output shape.
pub fn generate<G: Generator + ?Sized>(guidance: &[GuidanceVideo], generator: &mut G) -> Result<Vec<Image>> {
    let len = check_guidance(guidance)?;
    let dims = guidance[0].frames[0].dims();
    let out = generator.generate(guidance)?;
    if out.len() != len {
        return Err(Error::LengthMismatch {
            what: "generated video",
            expected: len,
            found: out.len(),
        });
    }
    for img in &out {
        img.ensure_dims(dims.0, dims.1)?;
    }
    Ok(out)
}

fn check_guidance(guidance: &[GuidanceVideo]) -> Result<usize> {
    let first = guidance.first().ok_or_else(|| Error::invalid("generation needs at least one guidance view"))?;
    let len = first.frames.len();
    if len == 0 {
        return Err(Error::invalid("guidance videos are empty"));
    }
    let dims = first.frames[0].dims();
    for g in guidance {
        if g.frames.len() != len {
            return Err(Error::LengthMismatch {
                what: "guidance video",
                expected: len,
                found: g.frames.len(),
            });
        }
        for f in &g.frames {
            f.image.ensure_dims(dims.0, dims.1)?;
        }
    }
    Ok(len)
}
