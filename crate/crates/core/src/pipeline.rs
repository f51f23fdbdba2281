//! Chunked autoregressive generation with cache updates, and paired-sample
//! curation for synthetic training data.

use alloc::boxed::Box;
use alloc::vec::Vec;
use core::ops::Range;

use crate::align::{align_depth_trimmed, apply_alignment, Alignment};
use crate::cache::{Cache3D, DepthMap, PointCloud, PostedFrame};
use crate::fusion::{generate, Generator};
use crate::geometry::{Camera, Trajectory};
use crate::grid::{Grid, Image, Mask};
use crate::rng::SplitMix64;
use crate::splat::{render, render_depth_union, GuidanceVideo};
use crate::{Error, Result};

pub const DEFAULT_CHUNK_LEN: usize = 14;

/// Supplies depth for a generated frame before it enters the cache.
pub trait DepthProvider {
    fn depth(&mut self, frame: usize, camera: &Camera, image: &Image) -> Result<DepthMap>;
}

impl<D: DepthProvider + ?Sized> DepthProvider for &mut D {
    fn depth(&mut self, frame: usize, camera: &Camera, image: &Image) -> Result<DepthMap> {
        (**self).depth(frame, camera, image)
    }
}

/// Overlapping half-open frame windows; consecutive chunks share one frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChunkPlan {
    pub chunk_len: usize,
    pub total: usize,
    pub chunks: Vec<Range<usize>>,
}

impl ChunkPlan {
    pub fn len(&self) -> usize {
        self.chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }

    /// Frames chunk `k` contributes to the assembled video; the shared
    /// first frame of later chunks belongs to the previous chunk.
    pub fn emitted(&self, k: usize) -> Range<usize> {
        let r = &self.chunks[k];
        if k == 0 {
            r.clone()
        } else {
            r.start + 1..r.end
        }
    }
}

/// Split `total` frames into windows of at most `chunk_len` with a one-frame
/// overlap. A single-frame video yields the one chunk `[0, 1)`.
pub fn plan_chunks(total: usize, chunk_len: usize) -> Result<ChunkPlan> {
    if chunk_len < 2 {
        return Err(Error::invalid(alloc::format!(
            "chunk length must be at least 2, got {chunk_len}"
        )));
    }
    if total == 0 {
        return Err(Error::invalid("cannot plan an empty video"));
    }
    let mut chunks = Vec::new();
    let mut start = 0;
    loop {
        let end = (start + chunk_len).min(total);
        chunks.push(start..end);
        if end == total {
            break;
        }
        start = end - 1;
    }
    Ok(ChunkPlan {
        chunk_len,
        total,
        chunks,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AutoregressiveOptions {
    pub chunk_len: usize,
    pub splat_radius: f64,
    /// Append each chunk's last frame to the cache. Disabling this gives the
    /// no-update ablation.
    pub update_cache: bool,
    /// Outlier trim fraction for alignment; 0 is plain least squares.
    pub align_trim: f64,
}

impl Default for AutoregressiveOptions {
    fn default() -> Self {
        Self {
            chunk_len: DEFAULT_CHUNK_LEN,
            splat_radius: 0.0,
            update_cache: true,
            align_trim: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChunkRecord {
    pub range: Range<usize>,
    /// Fit used for the cache update that followed this chunk, if any.
    pub alignment: Option<Alignment>,
    /// Views in the cache while this chunk was rendered.
    pub views: usize,
    /// Union-of-views mask coverage of each frame of the chunk.
    pub coverage: Vec<f64>,
}

impl ChunkRecord {
    pub fn mean_coverage(&self) -> f64 {
        if self.coverage.is_empty() {
            return 0.0;
        }
        self.coverage.iter().sum::<f64>() / self.coverage.len() as f64
    }
}

#[derive(Debug, Clone)]
pub struct AutoregressiveRun {
    pub plan: ChunkPlan,
    /// One image per trajectory frame.
    pub frames: Vec<Image>,
    pub chunks: Vec<ChunkRecord>,
    pub cache: Cache3D,
}

/// Render every view of the cache for trajectory frames `range`.
pub fn render_chunk(cache: &Cache3D, traj: &Trajectory, range: Range<usize>, splat_radius: f64) -> Result<Vec<GuidanceVideo>> {
    let times = range
        .clone()
        .map(|t| cache.time_index(t))
        .collect::<Result<Vec<_>>>()?;
    Ok((0..cache.views())
        .map(|v| GuidanceVideo {
            view: v,
            frames: range
                .clone()
                .zip(&times)
                .map(|(t, &ti)| render(cache.cloud(ti, v), &traj[t], splat_radius))
                .collect(),
        })
        .collect())
}

/// Per-frame coverage of the union of all views' masks.
pub fn union_coverage(guidance: &[GuidanceVideo]) -> Vec<f64> {
    let Some(first) = guidance.first() else {
        return Vec::new();
    };
    (0..first.frames.len())
        .map(|t| {
            let (w, h) = first.frames[t].dims();
            let union: Mask = Grid::from_fn(w, h, |x, y| guidance.iter().any(|g| *g.frames[t].mask.get(x, y)));
            union.coverage()
        })
        .collect()
}

/// Generate a long video chunk by chunk.
///
/// For each chunk the current cache is rendered along its cameras and handed
/// to `generator`. Unless it is the final chunk, the chunk's last frame then
/// gets depth from `depth`, is scale/shift aligned against the cache's depth
/// render at that camera (over the cache's coverage), and is appended as a
/// new view. The next chunk starts on that same frame; its copy is
/// conditioning only and the earlier chunk's frame is kept.
pub fn run_autoregressive<G, D>(
    cache: &Cache3D,
    traj: &Trajectory,
    generator: &mut G,
    depth: &mut D,
    options: &AutoregressiveOptions,
) -> Result<AutoregressiveRun>
where
    G: Generator + ?Sized,
    D: DepthProvider + ?Sized,
{
    let plan = plan_chunks(traj.len(), options.chunk_len)?;
    // Static caches broadcast; dynamic ones must span the trajectory.
    cache.time_index(traj.len() - 1)?;

    let mut cache = cache.clone();
    let mut frames: Vec<Image> = Vec::with_capacity(traj.len());
    let mut records = Vec::with_capacity(plan.len());
    for (k, range) in plan.chunks.iter().enumerate() {
        let wrap = |e: Error| Error::Chunk {
            chunk: k,
            source: Box::new(e),
        };
        let guidance = render_chunk(&cache, traj, range.clone(), options.splat_radius).map_err(wrap)?;
        let generated = generate(&guidance, generator).map_err(wrap)?;
        let skip = plan.emitted(k).start - range.start;
        let mut record = ChunkRecord {
            range: range.clone(),
            alignment: None,
            views: cache.views(),
            coverage: union_coverage(&guidance),
        };
        let last_image = generated.last().cloned();
        frames.extend(generated.into_iter().skip(skip));

        if options.update_cache && k + 1 < plan.len() {
            let t = range.end - 1;
            let image = last_image.expect("chunks are never empty");
            let (next, alignment) = update_cache(&cache, &traj[t], t, image, depth, options.align_trim).map_err(wrap)?;
            cache = next;
            record.alignment = Some(alignment);
        }
        records.push(record);
    }
    debug_assert_eq!(frames.len(), traj.len());
    Ok(AutoregressiveRun {
        plan,
        frames,
        chunks: records,
        cache,
    })
}

/// Align `image`'s provided depth to the cache at `camera` and append it.
pub fn update_cache<D: DepthProvider + ?Sized>(
    cache: &Cache3D,
    camera: &Camera,
    frame: usize,
    image: Image,
    depth: &mut D,
    trim: f64,
) -> Result<(Cache3D, Alignment)> {
    let estimate = depth.depth(frame, camera, &image)?;
    let ti = cache.time_index(frame)?;
    let clouds: Vec<&PointCloud> = cache.row(ti).iter().map(|c| c.as_ref()).collect();
    let target = render_depth_union(&clouds, camera);
    let alignment = align_depth_trimmed(&estimate, &target, target.valid(), trim)?;
    let aligned = apply_alignment(&estimate, &alignment);
    let posed = PostedFrame::new(image, aligned, *camera)?;
    Ok((cache.append_view(&posed)?, alignment))
}

/// Training pair: cache inputs and a ground-truth window around one of them.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedSample {
    pub input_indices: Vec<usize>,
    pub cache_inputs: Vec<PostedFrame>,
    /// First frame of the target window.
    pub target_start: usize,
    pub target: Vec<Image>,
    pub target_cameras: Trajectory,
}

/// Equally spaced input frames `round(i (N-1) / (V-1))` (frame 0 when
/// `V = 1`) and a target window of `len` frames, drawn uniformly among the
/// windows that contain at least one input frame.
pub fn curate_pair(video: &[PostedFrame], views: usize, len: usize, seed: u64) -> Result<PairedSample> {
    let n = video.len();
    if !(1..=4).contains(&views) {
        return Err(Error::invalid(alloc::format!("view count must be 1 to 4, got {views}")));
    }
    if len == 0 || n < len {
        return Err(Error::invalid(alloc::format!(
            "video of {n} frames is shorter than the target length {len}"
        )));
    }
    let input_indices: Vec<usize> = if views == 1 {
        alloc::vec![0]
    } else {
        (0..views)
            .map(|i| libm::round(i as f64 * (n - 1) as f64 / (views - 1) as f64) as usize)
            .collect()
    };
    let windows: Vec<usize> = (0..=n - len)
        .filter(|&s| input_indices.iter().any(|&i| (s..s + len).contains(&i)))
        .collect();
    let mut rng = SplitMix64::new(seed);
    let target_start = windows[rng.below(windows.len() as u64) as usize];
    let window = &video[target_start..target_start + len];
    Ok(PairedSample {
        cache_inputs: input_indices.iter().map(|&i| video[i].clone()).collect(),
        input_indices,
        target_start,
        target: window.iter().map(|f| f.image.clone()).collect(),
        target_cameras: Trajectory::new(window.iter().map(|f| f.camera).collect())?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::StubGenerator;
    use crate::geometry::{Intrinsics, Pose, Vec3};
    use crate::synthworld::{make_scene, posed_frame, SceneDepth, SceneSpec};

    fn ranges(plan: &ChunkPlan) -> Vec<(usize, usize)> {
        plan.chunks.iter().map(|r| (r.start, r.end)).collect()
    }

    #[test]
    fn plan_examples() {
        assert_eq!(ranges(&plan_chunks(14, 14).unwrap()), [(0, 14)]);
        assert_eq!(ranges(&plan_chunks(40, 14).unwrap()), [(0, 14), (13, 27), (26, 40)]);
        assert_eq!(ranges(&plan_chunks(15, 14).unwrap()), [(0, 14), (13, 15)]);
        assert_eq!(ranges(&plan_chunks(1, 14).unwrap()), [(0, 1)]);
        assert!(plan_chunks(10, 1).is_err());
        assert!(plan_chunks(0, 4).is_err());
    }

    struct Failing;
    impl DepthProvider for Failing {
        fn depth(&mut self, _: usize, camera: &Camera, _: &Image) -> Result<DepthMap> {
            Ok(DepthMap::invalid(camera.width(), camera.height()))
        }
    }

    fn scene_setup() -> (crate::synthworld::Scene, Camera) {
        let scene = make_scene(&SceneSpec::new(5, 4, 1.0, 1.0)).unwrap();
        let cam = Camera::new(Intrinsics::centered(40.0, 32, 24).unwrap(), Pose::identity());
        (scene, cam)
    }

    #[test]
    fn single_chunk_is_plain_generation() {
        let (scene, cam) = scene_setup();
        let cache = Cache3D::build_single(&posed_frame(&scene, &cam, 0), 1).unwrap();
        let traj = Trajectory::constant(cam, 10).unwrap();
        let run = run_autoregressive(&cache, &traj, &mut StubGenerator, &mut Failing, &Default::default()).unwrap();
        let direct = generate(&render_chunk(&cache, &traj, 0..10, 0.0).unwrap(), &mut StubGenerator).unwrap();
        assert_eq!(run.frames, direct);
        assert_eq!(run.cache.views(), 1);
        assert_eq!(run.chunks.len(), 1);
    }

    #[test]
    fn static_camera_fixed_point() {
        let (scene, cam) = scene_setup();
        let cache = Cache3D::build_single(&posed_frame(&scene, &cam, 0), 1).unwrap();
        let traj = Trajectory::constant(cam, 30).unwrap();
        let mut depth = SceneDepth { scene };
        let run = run_autoregressive(&cache, &traj, &mut StubGenerator, &mut depth, &Default::default()).unwrap();
        assert_eq!(run.frames.len(), 30);
        assert!(run.frames.iter().all(|f| *f == run.frames[0]));
        assert_eq!(run.cache.views(), 1 + run.plan.len() - 1);
        for rec in &run.chunks[..run.chunks.len() - 1] {
            let a = rec.alignment.unwrap();
            assert!((a.scale - 1.0).abs() < 1e-9 && a.shift.abs() < 1e-9);
        }
    }

    #[test]
    fn ill_posed_alignment_names_the_chunk() {
        let (scene, cam) = scene_setup();
        let cache = Cache3D::build_single(&posed_frame(&scene, &cam, 0), 1).unwrap();
        let traj = Trajectory::constant(cam, 20).unwrap();
        let err = run_autoregressive(&cache, &traj, &mut StubGenerator, &mut Failing, &Default::default()).unwrap_err();
        assert!(matches!(err, Error::Chunk { chunk: 0, ref source } if matches!(**source, Error::IllPosed { .. })));
    }

    #[test]
    fn dynamic_cache_must_cover_trajectory() {
        let (scene, cam) = scene_setup();
        let video: Vec<PostedFrame> = (0..3).map(|i| posed_frame(&scene, &cam, i)).collect();
        let mut moved = video.clone();
        moved[1].camera = Camera::new(cam.intrinsics, Pose::from_translation(Vec3::new(0.1, 0.0, 0.0)));
        let cache = Cache3D::build_dynamic(&[moved]).unwrap();
        let traj = Trajectory::constant(cam, 5).unwrap();
        assert!(run_autoregressive(&cache, &traj, &mut StubGenerator, &mut Failing, &Default::default()).is_err());
    }

    fn video(n: usize) -> Vec<PostedFrame> {
        let (scene, cam) = scene_setup();
        let small = Camera::new(Intrinsics::centered(8.0, 6, 4).unwrap(), cam.pose);
        (0..n)
            .map(|i| {
                let c = Camera::new(small.intrinsics, Pose::from_translation(Vec3::new(0.01 * i as f64, 0.0, 0.0)));
                posed_frame(&scene, &c, 0)
            })
            .collect()
    }

    #[test]
    fn curation_examples() {
        let v = video(100);
        let p = curate_pair(&v, 2, 14, 1).unwrap();
        assert_eq!(p.input_indices, [0, 99]);
        let p = curate_pair(&v, 1, 14, 1).unwrap();
        assert_eq!(p.input_indices, [0]);
        assert_eq!(p.target_start, 0);
        let p = curate_pair(&v, 4, 14, 1).unwrap();
        assert_eq!(p.input_indices, [0, 33, 66, 99]);
        assert!(curate_pair(&v[..10], 2, 14, 1).is_err());
        assert!(curate_pair(&v, 5, 14, 1).is_err());
        assert!(curate_pair(&v, 0, 14, 1).is_err());
    }

    #[test]
    fn curated_window_contains_an_input() {
        let v = video(40);
        for seed in 0..50 {
            for views in 1..=4 {
                let p = curate_pair(&v, views, 7, seed).unwrap();
                let w = p.target_start..p.target_start + 7;
                assert!(p.input_indices.iter().any(|i| w.contains(i)));
                assert_eq!(p.target.len(), 7);
                assert_eq!(p.target_cameras.len(), 7);
                let inputs_seen = p.input_indices.iter().filter(|i| w.contains(i)).count();
                assert!(inputs_seen >= 1);
                assert!(p
                    .target_cameras
                    .frames()
                    .iter()
                    .any(|c| p.cache_inputs.iter().any(|f| f.camera == *c)));
            }
        }
    }
}
