//! Z-buffered point splatting.
//!
//! Every point in front of the near plane is drawn as an axis-aligned
//! screen-space disk of integer texel offsets `dx² + dy² <= r²` around the
//! texel its projection rounds to. A texel accepts a point only if the point
//! is nearer than the current occupant by more than [`Z_EPSILON`], so among
//! equal depths the lowest point index wins and output never depends on
//! scheduling. There is no blending: masks are crisp.

use alloc::vec::Vec;

use crate::cache::{Cache3D, DepthMap, PointCloud};
use crate::geometry::{Camera, Trajectory};
use crate::grid::{Grid, Image, Mask, Rgb};
use crate::{Error, Result};

/// Points at or nearer than this camera-frame depth are culled.
pub const Z_NEAR: f64 = 1e-6;
/// Depths closer than this are a tie.
pub const Z_EPSILON: f64 = 1e-9;
/// Projected coordinates beyond this are discarded before integer conversion.
const PIXEL_LIMIT: f64 = 1e9;

/// One rendered view: color, coverage and z-buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedFrame {
    /// Black wherever `mask` is false.
    pub image: Image,
    /// True where at least one point landed.
    pub mask: Mask,
    /// Camera-frame depth of the winning point; 0 where `mask` is false.
    pub depth: Grid<f64>,
}

impl RenderedFrame {
    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            image: Grid::filled(width, height, [0.0; 3]),
            mask: Grid::filled(width, height, false),
            depth: Grid::filled(width, height, 0.0),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        self.image.dims()
    }

    pub fn depth_map(&self) -> DepthMap {
        DepthMap::new(self.depth.clone(), self.mask.clone()).expect("z-buffer depths are positive")
    }
}

/// Rendered frames of one cache view along a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct GuidanceVideo {
    pub view: usize,
    pub frames: Vec<RenderedFrame>,
}

impl GuidanceVideo {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// Texel offsets covered by a disk of the given radius.
pub fn disk_offsets(radius: f64) -> Vec<(i64, i64)> {
    let r = if radius.is_finite() && radius > 0.0 { radius } else { 0.0 };
    let reach = libm::floor(r) as i64;
    let r2 = r * r;
    let mut out = Vec::new();
    for dy in -reach..=reach {
        for dx in -reach..=reach {
            if (dx * dx + dy * dy) as f64 <= r2 {
                out.push((dx, dy));
            }
        }
    }
    out
}

struct ZBuffer {
    width: usize,
    height: usize,
    depth: Vec<f64>,
    color: Vec<Rgb>,
}

impl ZBuffer {
    fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            depth: alloc::vec![f64::INFINITY; width * height],
            color: alloc::vec![[0.0; 3]; width * height],
        }
    }

    fn splat(&mut self, cloud: &PointCloud, camera: &Camera, offsets: &[(i64, i64)]) {
        let k = &camera.intrinsics;
        for (pos, color) in cloud.positions.iter().zip(&cloud.colors) {
            let p = camera.pose.to_camera(pos);
            let z = p.z;
            if !(z > Z_NEAR) {
                continue;
            }
            let u = k.fx * p.x / z + k.cx;
            let v = k.fy * p.y / z + k.cy;
            if !(u.abs() < PIXEL_LIMIT && v.abs() < PIXEL_LIMIT) {
                continue;
            }
            let (cu, cv) = (libm::floor(u + 0.5) as i64, libm::floor(v + 0.5) as i64);
            for &(dx, dy) in offsets {
                let (x, y) = (cu + dx, cv + dy);
                if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
                    continue;
                }
                let i = y as usize * self.width + x as usize;
                if z < self.depth[i] - Z_EPSILON {
                    self.depth[i] = z;
                    self.color[i] = *color;
                }
            }
        }
    }

    fn finish(self) -> RenderedFrame {
        let (w, h) = (self.width, self.height);
        let mask: Vec<bool> = self.depth.iter().map(|d| d.is_finite()).collect();
        let depth = self
            .depth
            .iter()
            .map(|&d| if d.is_finite() { d } else { 0.0 })
            .collect();
        let image = self
            .color
            .into_iter()
            .zip(&mask)
            .map(|(c, &m)| if m { c } else { [0.0; 3] })
            .collect();
        RenderedFrame {
            image: Grid::from_vec(w, h, image).expect("sized"),
            mask: Grid::from_vec(w, h, mask).expect("sized"),
            depth: Grid::from_vec(w, h, depth).expect("sized"),
        }
    }
}

/// Render one cloud. A negative or non-finite radius is treated as 0.
pub fn render(points: &PointCloud, camera: &Camera, splat_radius: f64) -> RenderedFrame {
    render_union(&[points], camera, splat_radius)
}

/// Render several clouds into one z-buffer, equivalent to rendering their
/// concatenation in the given order.
pub fn render_union(clouds: &[&PointCloud], camera: &Camera, splat_radius: f64) -> RenderedFrame {
    let offsets = disk_offsets(splat_radius);
    let mut zb = ZBuffer::new(camera.width(), camera.height());
    for cloud in clouds {
        zb.splat(cloud, camera, &offsets);
    }
    zb.finish()
}

/// Nearest depth per texel at radius 0.
pub fn render_depth(points: &PointCloud, camera: &Camera) -> DepthMap {
    render(points, camera, 0.0).depth_map()
}

pub fn render_depth_union(clouds: &[&PointCloud], camera: &Camera) -> DepthMap {
    render_union(clouds, camera, 0.0).depth_map()
}

/// `out[v].frames[t] = render(cache[t][v], traj[t])`.
pub fn render_guidance(cache: &Cache3D, traj: &Trajectory, splat_radius: f64) -> Result<Vec<GuidanceVideo>> {
    if traj.len() != cache.len() {
        return Err(Error::LengthMismatch {
            what: "trajectory vs cache",
            expected: cache.len(),
            found: traj.len(),
        });
    }
    Ok((0..cache.views())
        .map(|v| GuidanceVideo {
            view: v,
            frames: traj
                .frames()
                .iter()
                .enumerate()
                .map(|(t, cam)| render(cache.cloud(t, v), cam, splat_radius))
                .collect(),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cache::PostedFrame;
    use crate::geometry::{project, Intrinsics, Pose, Vec3};
    use crate::rng::SplitMix64;

    fn cam(w: usize, h: usize) -> Camera {
        Camera::new(Intrinsics::new(10.0, 10.0, 4.0, 3.0, w, h).unwrap(), Pose::identity())
    }

    fn cloud(points: &[(Vec3, Rgb)]) -> PointCloud {
        let mut c = PointCloud::new();
        for (p, col) in points {
            c.push(*p, *col, [0.0, 0.0]);
        }
        c
    }

    #[test]
    fn z_test_prefers_nearer() {
        let c = cam(8, 6);
        let far = (Vec3::new(0.0, 0.0, 2.0), [1.0, 0.0, 0.0]);
        let near = (Vec3::new(0.0, 0.0, 1.0), [0.0, 1.0, 0.0]);
        for pts in [[far, near], [near, far]] {
            let r = render(&cloud(&pts), &c, 0.0);
            assert_eq!(*r.image.get(4, 3), [0.0, 1.0, 0.0]);
            assert_eq!(*r.depth.get(4, 3), 1.0);
            assert_eq!(r.mask.count(), 1);
        }
    }

    #[test]
    fn behind_camera_is_culled() {
        let c = cam(8, 6);
        let r = render(&cloud(&[(Vec3::new(0.0, 0.0, -1.0), [1.0; 3])]), &c, 0.0);
        assert_eq!(r.mask.count(), 0);
        let r = render(&PointCloud::new(), &c, 3.0);
        assert_eq!(r.mask.count(), 0);
        assert!(render_depth(&PointCloud::new(), &c).valid_count() == 0);
    }

    #[test]
    fn ties_keep_lowest_index() {
        let c = cam(8, 6);
        let a = (Vec3::new(0.0, 0.0, 1.0), [1.0, 0.0, 0.0]);
        let b = (Vec3::new(0.0, 0.0, 1.0 - 0.5e-9), [0.0, 0.0, 1.0]);
        let r = render(&cloud(&[a, b]), &c, 0.0);
        assert_eq!(*r.image.get(4, 3), [1.0, 0.0, 0.0]);
    }

    #[test]
    fn disk_footprint() {
        assert_eq!(disk_offsets(0.0), alloc::vec![(0, 0)]);
        assert_eq!(disk_offsets(-2.0), alloc::vec![(0, 0)]);
        assert_eq!(disk_offsets(1.0).len(), 5);
        assert_eq!(disk_offsets(1.5).len(), 9);
        let c = cam(8, 6);
        let r = render(&cloud(&[(Vec3::new(0.0, 0.0, 1.0), [1.0; 3])]), &c, 1.0);
        assert_eq!(r.mask.count(), 5);
        assert!(*r.mask.get(5, 3) && *r.mask.get(4, 2) && !*r.mask.get(5, 2));
    }

    #[test]
    fn translated_camera_single_point_depth() {
        // Camera at (0.5, -0.2, -1) looking down +z sees (0.3, 0.1, 2.5) at
        // z = 3.5, pixel (10 * -0.2 / 3.5 + 4, 10 * 0.3 / 3.5 + 3) = (3.43, 3.86).
        let c = Camera::new(
            Intrinsics::new(10.0, 10.0, 4.0, 3.0, 8, 6).unwrap(),
            Pose::from_translation(Vec3::new(0.5, -0.2, -1.0)),
        );
        let d = render_depth(&cloud(&[(Vec3::new(0.3, 0.1, 2.5), [1.0; 3])]), &c);
        assert_eq!(d.valid_count(), 1);
        assert!((d.get(3, 4).unwrap() - 3.5).abs() < 1e-12);
    }

    fn posed(seed: u64, w: usize, h: usize) -> PostedFrame {
        let mut rng = SplitMix64::new(seed);
        let camera = Camera::new(
            Intrinsics::centered(12.0, w, h).unwrap(),
            Pose::new(
                crate::geometry::axis_angle(Vec3::new(rng.gaussian(), rng.gaussian(), rng.gaussian()), 0.3),
                Vec3::new(rng.gaussian(), rng.gaussian(), rng.gaussian()),
            )
            .unwrap(),
        );
        let image = Grid::from_fn(w, h, |_, _| {
            [rng.next_f64() as f32, rng.next_f64() as f32, rng.next_f64() as f32]
        });
        let values = Grid::from_fn(w, h, |_, _| rng.uniform(0.5, 5.0));
        let valid = Grid::from_fn(w, h, |_, _| rng.next_f64() < 0.8);
        PostedFrame::new(image, DepthMap::new(values, valid).unwrap(), camera).unwrap()
    }

    #[test]
    fn identity_reprojection() {
        for seed in 0..5 {
            let f = posed(seed, 17, 11);
            let r = render(&f.unproject().unwrap(), &f.camera, 0.0);
            assert_eq!(r.mask, *f.depth.valid());
            for y in 0..11 {
                for x in 0..17 {
                    if *r.mask.get(x, y) {
                        assert_eq!(r.image.get(x, y), f.image.get(x, y));
                        let d = f.depth.get(x, y).unwrap();
                        assert!(((r.depth.get(x, y) - d) / d).abs() < 1e-6);
                    } else {
                        assert_eq!(*r.image.get(x, y), [0.0; 3]);
                    }
                }
            }
        }
    }

    /// Pixel-major reference: every texel scans every point in index order.
    fn brute_force(cloud: &PointCloud, camera: &Camera, radius: f64) -> RenderedFrame {
        let (w, h) = camera.dims();
        let mut out = RenderedFrame::empty(w, h);
        for y in 0..h {
            for x in 0..w {
                let mut best: Option<(f64, Rgb)> = None;
                for (p, c) in cloud.positions.iter().zip(&cloud.colors) {
                    let (px, z) = project(p, camera);
                    if z <= Z_NEAR || !px.x.is_finite() || !px.y.is_finite() {
                        continue;
                    }
                    let dx = x as f64 - libm::floor(px.x + 0.5);
                    let dy = y as f64 - libm::floor(px.y + 0.5);
                    if dx * dx + dy * dy > radius * radius {
                        continue;
                    }
                    match best {
                        Some((bz, _)) if !(z < bz - Z_EPSILON) => {}
                        _ => best = Some((z, *c)),
                    }
                }
                if let Some((z, c)) = best {
                    *out.image.get_mut(x, y) = c;
                    *out.mask.get_mut(x, y) = true;
                    *out.depth.get_mut(x, y) = z;
                }
            }
        }
        out
    }

    #[test]
    fn matches_brute_force() {
        let mut rng = SplitMix64::new(77);
        for trial in 0..6 {
            let n = 200 + 150 * trial;
            let mut c = PointCloud::new();
            for _ in 0..n {
                // Quantized depths force exact ties.
                let z = libm::round(rng.uniform(-0.5, 4.0) * 4.0) / 4.0;
                c.push(
                    Vec3::new(rng.uniform(-2.0, 2.0), rng.uniform(-1.5, 1.5), z),
                    [rng.next_f64() as f32, 0.5, 0.5],
                    [0.0, 0.0],
                );
            }
            let camera = cam(9, 7);
            let radius = [0.0, 1.0, 1.5, 2.3][trial % 4];
            assert_eq!(render(&c, &camera, radius), brute_force(&c, &camera, radius));
        }
    }

    #[test]
    fn guidance_structure() {
        let f0 = posed(1, 9, 7);
        let f1 = posed(2, 9, 7);
        let cache = Cache3D::build_multiview(&[f0.clone(), f1.clone()], 3).unwrap();
        let traj = Trajectory::constant(f0.camera, 3).unwrap();
        let g = render_guidance(&cache, &traj, 0.0).unwrap();
        assert_eq!(g.len(), 2);
        assert_eq!(g[0].frames[0], g[0].frames[2]);
        assert_eq!(g[1].frames[1], render(&f1.unproject().unwrap(), &f0.camera, 0.0));
        let short = Trajectory::constant(f0.camera, 2).unwrap();
        assert!(render_guidance(&cache, &short, 0.0).is_err());
    }
}
