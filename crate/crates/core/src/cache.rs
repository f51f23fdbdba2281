//! Spatiotemporal point-cloud cache.
//!
//! A [`Cache3D`] is an `L x V` grid of colored point clouds, one per
//! (time, view). Single images and static multi-view inputs are duplicated
//! along time by sharing one [`Arc`] per view; dynamic inputs hold one cloud
//! per time step. Any future per-time editing of a shared entry must clone it
//! first.

use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::geometry::{unproject, Camera, Vec2, Vec3};
use crate::grid::{Grid, Image, Mask, Rgb};
use crate::{Error, Result};

/// Per-pixel camera-frame z in meters plus a validity mask.
///
/// Invalid pixels (no surface, holes) carry no meaningful value.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    values: Grid<f64>,
    valid: Mask,
}

impl DepthMap {
    pub fn new(values: Grid<f64>, valid: Mask) -> Result<Self> {
        if values.dims() != valid.dims() {
            return Err(Error::DimensionMismatch {
                expected: values.dims(),
                found: valid.dims(),
            });
        }
        for (v, &ok) in values.as_slice().iter().zip(valid.as_slice()) {
            if ok && !(v.is_finite() && *v > 0.0) {
                return Err(Error::invalid(alloc::format!(
                    "valid depth must be finite and positive, got {v}"
                )));
            }
        }
        Ok(Self { values, valid })
    }

    /// Valid wherever the value is finite and positive.
    pub fn from_values(values: Grid<f64>) -> Self {
        let valid = values.map(|v| v.is_finite() && *v > 0.0);
        Self { values, valid }
    }

    pub fn invalid(width: usize, height: usize) -> Self {
        Self {
            values: Grid::filled(width, height, 0.0),
            valid: Grid::filled(width, height, false),
        }
    }

    pub fn width(&self) -> usize {
        self.values.width()
    }

    pub fn height(&self) -> usize {
        self.values.height()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.values.dims()
    }

    pub fn get(&self, x: usize, y: usize) -> Option<f64> {
        if *self.valid.get(x, y) {
            Some(*self.values.get(x, y))
        } else {
            None
        }
    }

    pub fn values(&self) -> &Grid<f64> {
        &self.values
    }

    pub fn valid(&self) -> &Mask {
        &self.valid
    }

    pub fn valid_count(&self) -> usize {
        self.valid.count()
    }

    /// Valid values in row-major order.
    pub fn valid_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.values
            .as_slice()
            .iter()
            .zip(self.valid.as_slice())
            .filter_map(|(v, &ok)| ok.then_some(*v))
    }

    /// Apply `f` to every valid value; results that are not finite and
    /// positive become invalid.
    pub fn map_valid(&self, mut f: impl FnMut(f64) -> f64) -> DepthMap {
        let mut out = self.clone();
        for (v, ok) in out
            .values
            .as_mut_slice()
            .iter_mut()
            .zip(out.valid.as_mut_slice().iter_mut())
        {
            if *ok {
                let nv = f(*v);
                if nv.is_finite() && nv > 0.0 {
                    *v = nv;
                } else {
                    *v = 0.0;
                    *ok = false;
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub positions: Vec<Vec3>,
    pub colors: Vec<Rgb>,
    /// Pixel each point was unprojected from.
    pub source_pixels: Vec<[f32; 2]>,
}

impl PointCloud {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(n: usize) -> Self {
        Self {
            positions: Vec::with_capacity(n),
            colors: Vec::with_capacity(n),
            source_pixels: Vec::with_capacity(n),
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn push(&mut self, position: Vec3, color: Rgb, source_pixel: [f32; 2]) {
        self.positions.push(position);
        self.colors.push(color);
        self.source_pixels.push(source_pixel);
    }

    pub fn extend_from(&mut self, other: &PointCloud) {
        self.positions.extend_from_slice(&other.positions);
        self.colors.extend_from_slice(&other.colors);
        self.source_pixels.extend_from_slice(&other.source_pixels);
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.positions.len();
        for (what, len) in [("colors", self.colors.len()), ("source pixels", self.source_pixels.len())] {
            if len != n {
                return Err(Error::LengthMismatch {
                    what,
                    expected: n,
                    found: len,
                });
            }
        }
        if !self.positions.iter().all(|p| p.iter().all(|c| c.is_finite())) {
            return Err(Error::invalid("point positions must be finite"));
        }
        if !self
            .colors
            .iter()
            .all(|c| c.iter().all(|v| (0.0..=1.0).contains(v)))
        {
            return Err(Error::invalid("point colors must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// An RGB-D frame with its camera.
#[derive(Debug, Clone, PartialEq)]
pub struct PostedFrame {
    pub image: Image,
    pub depth: DepthMap,
    pub camera: Camera,
}

impl PostedFrame {
    pub fn new(image: Image, depth: DepthMap, camera: Camera) -> Result<Self> {
        let frame = Self {
            image,
            depth,
            camera,
        };
        frame.validate()?;
        Ok(frame)
    }

    pub fn validate(&self) -> Result<()> {
        let (w, h) = self.camera.dims();
        self.image.ensure_dims(w, h)?;
        self.depth.values().ensure_dims(w, h)?;
        Ok(())
    }

    pub fn dims(&self) -> (usize, usize) {
        self.camera.dims()
    }

    /// One point per valid depth pixel, in row-major pixel order.
    pub fn unproject(&self) -> Result<PointCloud> {
        self.validate()?;
        let (w, h) = self.dims();
        let mut cloud = PointCloud::with_capacity(self.depth.valid_count());
        for y in 0..h {
            for x in 0..w {
                if let Some(d) = self.depth.get(x, y) {
                    let p = unproject(&Vec2::new(x as f64, y as f64), d, &self.camera)?;
                    cloud.push(p, *self.image.get(x, y), [x as f32, y as f32]);
                }
            }
        }
        Ok(cloud)
    }
}

#[derive(Debug, Clone)]
pub struct Cache3D {
    /// `grid[t][v]`
    grid: Vec<Vec<Arc<PointCloud>>>,
    cameras: Vec<Vec<Camera>>,
}

impl Cache3D {
    /// Assemble a cache from explicit entries. Every row must have the same
    /// number of views.
    pub fn from_entries(grid: Vec<Vec<Arc<PointCloud>>>, cameras: Vec<Vec<Camera>>) -> Result<Self> {
        if grid.is_empty() {
            return Err(Error::invalid("cache needs at least one time step"));
        }
        if cameras.len() != grid.len() {
            return Err(Error::LengthMismatch {
                what: "cache camera rows",
                expected: grid.len(),
                found: cameras.len(),
            });
        }
        let views = grid[0].len();
        if views == 0 {
            return Err(Error::invalid("cache needs at least one view"));
        }
        for (row, cams) in grid.iter().zip(&cameras) {
            if row.len() != views || cams.len() != views {
                return Err(Error::LengthMismatch {
                    what: "cache views",
                    expected: views,
                    found: row.len().min(cams.len()),
                });
            }
        }
        Ok(Self { grid, cameras })
    }

    /// Single image: one view duplicated over `len` time steps.
    pub fn build_single(frame: &PostedFrame, len: usize) -> Result<Self> {
        Self::build_multiview(core::slice::from_ref(frame), len)
    }

    /// Static multi-view: one view per frame, each duplicated over `len`.
    pub fn build_multiview(frames: &[PostedFrame], len: usize) -> Result<Self> {
        if len == 0 {
            return Err(Error::invalid("temporal length must be at least 1"));
        }
        let first = frames
            .first()
            .ok_or_else(|| Error::invalid("need at least one frame"))?;
        let dims = first.dims();
        let mut clouds = Vec::with_capacity(frames.len());
        for f in frames {
            if f.dims() != dims {
                return Err(Error::DimensionMismatch {
                    expected: dims,
                    found: f.dims(),
                });
            }
            clouds.push(Arc::new(f.unproject()?));
        }
        let cams: Vec<Camera> = frames.iter().map(|f| f.camera).collect();
        Ok(Self {
            grid: alloc::vec![clouds; len],
            cameras: alloc::vec![cams; len],
        })
    }

    /// Dynamic: `videos[v][t]`, all of the same length, time-synchronized.
    pub fn build_dynamic(videos: &[Vec<PostedFrame>]) -> Result<Self> {
        let first = videos
            .first()
            .ok_or_else(|| Error::invalid("need at least one video"))?;
        let len = first.len();
        if len == 0 {
            return Err(Error::invalid("videos must contain at least one frame"));
        }
        for video in videos {
            if video.len() != len {
                return Err(Error::LengthMismatch {
                    what: "video",
                    expected: len,
                    found: video.len(),
                });
            }
        }
        let mut grid = Vec::with_capacity(len);
        let mut cameras = Vec::with_capacity(len);
        for t in 0..len {
            let mut row = Vec::with_capacity(videos.len());
            let mut cams = Vec::with_capacity(videos.len());
            for video in videos {
                row.push(Arc::new(video[t].unproject()?));
                cams.push(video[t].camera);
            }
            grid.push(row);
            cameras.push(cams);
        }
        Ok(Self { grid, cameras })
    }

    /// New cache with `frame` added as an extra view shared by every time step.
    pub fn append_view(&self, frame: &PostedFrame) -> Result<Self> {
        let cloud = Arc::new(frame.unproject()?);
        Ok(self.append_cloud(cloud, frame.camera))
    }

    pub fn append_cloud(&self, cloud: Arc<PointCloud>, camera: Camera) -> Self {
        let mut next = self.clone();
        for (row, cams) in next.grid.iter_mut().zip(next.cameras.iter_mut()) {
            row.push(Arc::clone(&cloud));
            cams.push(camera);
        }
        next
    }

    /// Temporal length `L`.
    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// View count `V`.
    pub fn views(&self) -> usize {
        self.grid[0].len()
    }

    pub fn cloud(&self, t: usize, v: usize) -> &Arc<PointCloud> {
        &self.grid[t][v]
    }

    pub fn camera(&self, t: usize, v: usize) -> &Camera {
        &self.cameras[t][v]
    }

    pub fn row(&self, t: usize) -> &[Arc<PointCloud>] {
        &self.grid[t]
    }

    /// True when every view holds the same shared cloud at every time step.
    pub fn is_static(&self) -> bool {
        let first = &self.grid[0];
        self.grid
            .iter()
            .all(|row| row.iter().zip(first).all(|(a, b)| Arc::ptr_eq(a, b)))
    }

    /// Time index to use for frame `t` of a trajectory: static caches are
    /// broadcast to any length, dynamic ones must cover `t`.
    pub fn time_index(&self, t: usize) -> Result<usize> {
        if t < self.len() {
            Ok(t)
        } else if self.is_static() {
            Ok(0)
        } else {
            Err(Error::LengthMismatch {
                what: "dynamic cache",
                expected: t + 1,
                found: self.len(),
            })
        }
    }

    pub fn point_counts(&self) -> Vec<Vec<usize>> {
        self.grid
            .iter()
            .map(|row| row.iter().map(|c| c.len()).collect())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{project, Intrinsics, Pose};

    fn frame(w: usize, h: usize, valid: impl Fn(usize, usize) -> bool, shift: f64) -> PostedFrame {
        let cam = Camera::new(
            Intrinsics::centered(20.0, w, h).unwrap(),
            Pose::from_translation(Vec3::new(shift, 0.0, 0.0)),
        );
        let image = Grid::from_fn(w, h, |x, y| [x as f32 / w as f32, y as f32 / h as f32, 0.25]);
        let values = Grid::from_fn(w, h, |x, y| 1.0 + 0.01 * (x + y) as f64);
        let mask = Grid::from_fn(w, h, &valid);
        PostedFrame::new(image, DepthMap::new(values, mask).unwrap(), cam).unwrap()
    }

    #[test]
    fn single_counts_and_sharing() {
        let f = frame(8, 6, |x, y| (x + y) % 3 != 0, 0.0);
        let k = f.depth.valid_count();
        let c = Cache3D::build_single(&f, 14).unwrap();
        assert_eq!((c.len(), c.views()), (14, 1));
        for t in 0..14 {
            assert_eq!(c.cloud(t, 0).len(), k);
            assert!(Arc::ptr_eq(c.cloud(t, 0), c.cloud(0, 0)));
        }
        assert!(c.is_static());
        let c1 = Cache3D::build_single(&f, 1).unwrap();
        assert_eq!((c1.len(), c1.views()), (1, 1));
        assert!(Cache3D::build_single(&f, 0).is_err());
    }

    #[test]
    fn empty_depth_gives_empty_clouds() {
        let f = frame(4, 4, |_, _| false, 0.0);
        let c = Cache3D::build_single(&f, 3).unwrap();
        assert!(c.cloud(2, 0).is_empty());
    }

    #[test]
    fn multiview_counts_and_reduction() {
        let frames = [
            frame(8, 6, |x, _| x < 2, 0.0),
            frame(8, 6, |x, _| x < 3, 0.1),
            frame(8, 6, |x, _| x < 4, 0.2),
            frame(8, 6, |x, _| x < 5, 0.3),
        ];
        let c = Cache3D::build_multiview(&frames, 14).unwrap();
        assert_eq!((c.len(), c.views()), (14, 4));
        assert_eq!(c.point_counts()[7], alloc::vec![12, 18, 24, 30]);

        let single = Cache3D::build_single(&frames[0], 5).unwrap();
        let multi = Cache3D::build_multiview(&frames[..1], 5).unwrap();
        for t in 0..5 {
            assert_eq!(**single.cloud(t, 0), **multi.cloud(t, 0));
            assert_eq!(single.camera(t, 0), multi.camera(t, 0));
        }
        let odd = frame(6, 6, |_, _| true, 0.0);
        assert!(Cache3D::build_multiview(&[frames[0].clone(), odd], 2).is_err());
    }

    #[test]
    fn dynamic_build() {
        let v0: Vec<PostedFrame> = (0..3).map(|i| frame(5, 5, |_, _| true, i as f64)).collect();
        let c = Cache3D::build_dynamic(core::slice::from_ref(&v0)).unwrap();
        assert_eq!((c.len(), c.views()), (3, 1));
        assert_eq!(c.camera(2, 0).center().x, 2.0);
        assert!(!c.is_static());
        assert!(c.time_index(3).is_err());

        let c2 = Cache3D::build_dynamic(&[v0.clone(), v0.clone()]).unwrap();
        assert_eq!((c2.len(), c2.views()), (3, 2));

        let mut v1 = v0.clone();
        v1.push(v0[0].clone());
        assert!(matches!(
            Cache3D::build_dynamic(&[v0, v1]),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn append_view_grows_and_shares() {
        let f = frame(6, 4, |_, _| true, 0.0);
        let c = Cache3D::build_single(&f, 14).unwrap();
        let c2 = c.append_view(&f).unwrap();
        assert_eq!((c2.len(), c2.views()), (14, 2));
        assert!(Arc::ptr_eq(c.cloud(3, 0), c2.cloud(3, 0)));
        let c3 = c2.append_view(&f).unwrap();
        assert_eq!(c3.views(), 3);
        assert_eq!(**c3.cloud(0, 1), **c3.cloud(0, 2));

        let empty = frame(6, 4, |_, _| false, 0.0);
        assert!(c.append_view(&empty).unwrap().cloud(0, 1).is_empty());
    }

    #[test]
    fn points_project_back_to_source_pixels() {
        let f = frame(9, 7, |x, y| x != y, 0.3);
        let cloud = f.unproject().unwrap();
        cloud.validate().unwrap();
        for (p, src) in cloud.positions.iter().zip(&cloud.source_pixels) {
            let (px, z) = project(p, &f.camera);
            assert!((px.x - src[0] as f64).abs() < 1e-6);
            assert!((px.y - src[1] as f64).abs() < 1e-6);
            let d = f.depth.get(src[0] as usize, src[1] as usize).unwrap();
            assert!(((z - d) / d).abs() < 1e-6);
        }
    }

    #[test]
    fn frame_dimension_mismatch() {
        let f = frame(6, 4, |_, _| true, 0.0);
        let bad = PostedFrame::new(Grid::filled(5, 4, [0.0; 3]), f.depth.clone(), f.camera);
        assert!(matches!(bad, Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn map_valid_invalidates_nonpositive() {
        let d = DepthMap::from_values(Grid::from_vec(2, 1, alloc::vec![2.0, 5.0]).unwrap());
        let m = d.map_valid(|v| v - 3.0);
        assert_eq!(m.get(0, 0), None);
        assert_eq!(m.get(1, 0), Some(2.0));
    }
}
