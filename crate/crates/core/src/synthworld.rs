//! Procedural Lambertian scenes and an exact ray-cast rasterizer.
//!
//! Color is the albedo texture at the hit point (no lighting), so a correct
//! reprojection of a cached point reproduces the ground truth up to texture
//! sampling position. Depths are camera-frame z.

use alloc::vec::Vec;

use crate::cache::{DepthMap, PostedFrame};
use crate::geometry::{axis_angle, project, Camera, Pose, Vec3};
use crate::grid::{Grid, Image, Rgb};
use crate::pipeline::DepthProvider;
use crate::rng::SplitMix64;
use crate::{Error, Result};

/// Hits nearer than this along the ray parameter are ignored.
const T_MIN: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    /// Rectangle in the local `z = 0` plane, visible from both sides.
    Plane { half_width: f64, half_height: f64 },
    Sphere { radius: f64 },
    /// Axis-aligned in the local frame.
    Box { half_extents: [f64; 3] },
}

impl Shape {
    pub fn is_valid(&self) -> bool {
        let pos = |v: f64| v > 0.0 && v.is_finite();
        match *self {
            Shape::Plane {
                half_width,
                half_height,
            } => pos(half_width) && pos(half_height),
            Shape::Sphere { radius } => pos(radius),
            Shape::Box { half_extents } => half_extents.iter().all(|&h| pos(h)),
        }
    }
}

/// Albedo as a function of the local surface point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Texture {
    Solid(Rgb),
    /// 3D checker with cubic cells of side `cell` meters.
    Checker { a: Rgb, b: Rgb, cell: f64 },
    /// Triangle wave from `a` to `b` and back along `axis`, `period` meters long.
    Gradient { a: Rgb, b: Rgb, axis: [f64; 3], period: f64 },
}

impl Texture {
    pub fn is_valid(&self) -> bool {
        let color = |c: &Rgb| c.iter().all(|v| v.is_finite());
        match self {
            Texture::Solid(c) => color(c),
            Texture::Checker { a, b, cell } => color(a) && color(b) && *cell > 0.0 && cell.is_finite(),
            Texture::Gradient { a, b, axis, period } => {
                color(a) && color(b) && *period > 0.0 && period.is_finite() && axis.iter().all(|v| v.is_finite())
            }
        }
    }

    pub fn sample(&self, p: &Vec3) -> Rgb {
        match *self {
            Texture::Solid(c) => c,
            Texture::Checker { a, b, cell } => {
                let s = libm::floor(p.x / cell) + libm::floor(p.y / cell) + libm::floor(p.z / cell);
                if libm::fmod(s, 2.0) == 0.0 {
                    a
                } else {
                    b
                }
            }
            Texture::Gradient { a, b, axis, period } => {
                let s = (axis[0] * p.x + axis[1] * p.y + axis[2] * p.z) / period;
                let frac = s - libm::floor(s);
                let t = 1.0 - libm::fabs(2.0 * frac - 1.0);
                let mix = |x: f32, y: f32| (x as f64 + (y as f64 - x as f64) * t) as f32;
                [mix(a[0], b[0]), mix(a[1], b[1]), mix(a[2], b[2])]
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Primitive {
    pub shape: Shape,
    /// World-from-object.
    pub pose: Pose,
    pub texture: Texture,
    /// Optional per-frame poses; frame `i` uses `track[min(i, len - 1)]`.
    pub track: Vec<Pose>,
}

impl Primitive {
    pub fn new(shape: Shape, pose: Pose, texture: Texture) -> Self {
        Self {
            shape,
            pose,
            texture,
            track: Vec::new(),
        }
    }

    pub fn pose_at(&self, frame: usize) -> &Pose {
        match self.track.len() {
            0 => &self.pose,
            n => &self.track[frame.min(n - 1)],
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Scene {
    pub primitives: Vec<Primitive>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TextureStyle {
    #[default]
    Mixed,
    Checker,
    Gradient,
}

/// Recipe for [`make_scene`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneSpec {
    pub seed: u64,
    pub primitives: usize,
    /// Meters; objects sit within about `extent` of the optical axis of a
    /// probe camera at the origin looking down +z.
    pub extent: f64,
    /// Texture cycles per meter.
    pub texture_frequency: f64,
    pub textures: TextureStyle,
}

impl SceneSpec {
    pub fn new(seed: u64, primitives: usize, extent: f64, texture_frequency: f64) -> Self {
        Self {
            seed,
            primitives,
            extent,
            texture_frequency,
            textures: TextureStyle::Mixed,
        }
    }
}

fn random_color(rng: &mut SplitMix64) -> Rgb {
    [
        rng.uniform(0.05, 0.95) as f32,
        rng.uniform(0.05, 0.95) as f32,
        rng.uniform(0.05, 0.95) as f32,
    ]
}

fn random_texture(rng: &mut SplitMix64, style: TextureStyle, frequency: f64) -> Texture {
    let checker = match style {
        TextureStyle::Checker => true,
        TextureStyle::Gradient => false,
        TextureStyle::Mixed => rng.next_f64() < 0.5,
    };
    let (a, b) = (random_color(rng), random_color(rng));
    if checker {
        Texture::Checker {
            a,
            b,
            cell: 0.5 / frequency,
        }
    } else {
        let axis = Vec3::new(rng.gaussian(), rng.gaussian(), rng.gaussian()).normalize();
        Texture::Gradient {
            a,
            b,
            axis: [axis.x, axis.y, axis.z],
            period: 1.0 / frequency,
        }
    }
}

/// Deterministic scene: primitive 0 is a backdrop plane at `z = 3 extent`
/// facing the probe camera; the rest are spheres and boxes between
/// `z = 1.2 extent` and `z = 2.4 extent`.
pub fn make_scene(spec: &SceneSpec) -> Result<Scene> {
    if !(spec.extent > 0.0 && spec.extent.is_finite()) {
        return Err(Error::invalid("scene extent must be positive"));
    }
    if spec.primitives == 0 {
        return Err(Error::invalid("scene needs at least one primitive"));
    }
    if !(spec.texture_frequency > 0.0 && spec.texture_frequency.is_finite()) {
        return Err(Error::invalid("texture frequency must be positive"));
    }
    let e = spec.extent;
    let mut rng = SplitMix64::new(spec.seed);
    let mut primitives = Vec::with_capacity(spec.primitives);
    primitives.push(Primitive::new(
        Shape::Plane {
            half_width: 4.0 * e,
            half_height: 4.0 * e,
        },
        Pose::from_translation(Vec3::new(0.0, 0.0, 3.0 * e)),
        random_texture(&mut rng, spec.textures, spec.texture_frequency),
    ));
    for _ in 1..spec.primitives {
        let center = Vec3::new(
            rng.uniform(-0.6, 0.6) * e,
            rng.uniform(-0.6, 0.6) * e,
            rng.uniform(1.2, 2.4) * e,
        );
        let shape = if rng.next_f64() < 0.5 {
            Shape::Sphere {
                radius: rng.uniform(0.15, 0.35) * e,
            }
        } else {
            Shape::Box {
                half_extents: [
                    rng.uniform(0.1, 0.3) * e,
                    rng.uniform(0.1, 0.3) * e,
                    rng.uniform(0.1, 0.3) * e,
                ],
            }
        };
        let axis = Vec3::new(rng.gaussian(), rng.gaussian(), rng.gaussian());
        let angle = rng.uniform(0.0, core::f64::consts::PI);
        let pose = Pose::new(axis_angle(axis, angle), center)?;
        let texture = random_texture(&mut rng, spec.textures, spec.texture_frequency);
        primitives.push(Primitive::new(shape, pose, texture));
    }
    let scene = Scene { primitives };
    debug_assert!(scene.validate().is_ok());
    Ok(scene)
}

/// Nearest intersection along `origin + t dir`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub t: f64,
    pub point: Vec3,
    pub color: Rgb,
    pub primitive: usize,
}

/// `(t, local hit point)` of a ray given in the primitive's local frame.
fn intersect_local(shape: &Shape, o: &Vec3, d: &Vec3) -> Option<(f64, Vec3)> {
    match *shape {
        Shape::Plane {
            half_width,
            half_height,
        } => {
            if d.z == 0.0 {
                return None;
            }
            let t = -o.z / d.z;
            if !(t > T_MIN) {
                return None;
            }
            let mut p = o + d * t;
            if p.x.abs() > half_width || p.y.abs() > half_height {
                return None;
            }
            p.z = 0.0;
            Some((t, p))
        }
        Shape::Sphere { radius } => {
            let a = d.dot(d);
            let b = 2.0 * o.dot(d);
            let c = o.dot(o) - radius * radius;
            let disc = b * b - 4.0 * a * c;
            if disc < 0.0 {
                return None;
            }
            let sq = libm::sqrt(disc);
            let near = (-b - sq) / (2.0 * a);
            let far = (-b + sq) / (2.0 * a);
            let t = if near > T_MIN {
                near
            } else if far > T_MIN {
                far
            } else {
                return None;
            };
            Some((t, o + d * t))
        }
        Shape::Box { half_extents } => {
            let mut t_near = f64::NEG_INFINITY;
            let mut t_far = f64::INFINITY;
            let mut near_axis = 0;
            let mut far_axis = 0;
            for k in 0..3 {
                let h = half_extents[k];
                if d[k] == 0.0 {
                    if o[k].abs() > h {
                        return None;
                    }
                    continue;
                }
                let t1 = (-h - o[k]) / d[k];
                let t2 = (h - o[k]) / d[k];
                let (lo, hi) = if t1 < t2 { (t1, t2) } else { (t2, t1) };
                if lo > t_near {
                    t_near = lo;
                    near_axis = k;
                }
                if hi < t_far {
                    t_far = hi;
                    far_axis = k;
                }
            }
            if t_near > t_far || !(t_far > T_MIN) {
                return None;
            }
            let (t, axis) = if t_near > T_MIN { (t_near, near_axis) } else { (t_far, far_axis) };
            let mut p = o + d * t;
            // Snap onto the face so textures do not flicker across it.
            p[axis] = if p[axis] < 0.0 { -half_extents[axis] } else { half_extents[axis] };
            Some((t, p))
        }
    }
}

impl Scene {
    /// Reject degenerate shapes and textures.
    pub fn validate(&self) -> Result<()> {
        for (i, p) in self.primitives.iter().enumerate() {
            if !p.shape.is_valid() {
                return Err(Error::invalid(alloc::format!("primitive {i}: shape sizes must be positive")));
            }
            if !p.texture.is_valid() {
                return Err(Error::invalid(alloc::format!(
                    "primitive {i}: texture colors must be finite and cell/period positive"
                )));
            }
        }
        Ok(())
    }

    /// Nearest hit over all primitives at `frame`; ties keep the lower index.
    pub fn intersect(&self, origin: &Vec3, dir: &Vec3, frame: usize) -> Option<Hit> {
        let mut best: Option<Hit> = None;
        for (i, prim) in self.primitives.iter().enumerate() {
            let pose = prim.pose_at(frame);
            let o = pose.to_camera(origin);
            let d = pose.rotation().tr_mul(dir);
            if let Some((t, local)) = intersect_local(&prim.shape, &o, &d) {
                if best.is_none_or(|b| t < b.t) {
                    best = Some(Hit {
                        t,
                        point: origin + dir * t,
                        color: prim.texture.sample(&local),
                        primitive: i,
                    });
                }
            }
        }
        best
    }

    /// True when nothing lies between `camera` and `point` (relative slack
    /// `tol` on depth) and the point is in front of the camera.
    pub fn visible_from(&self, point: &Vec3, camera: &Camera, frame: usize, tol: f64) -> bool {
        let (_, z) = project(point, camera);
        if !(z > 0.0) {
            return false;
        }
        let origin = camera.center();
        // Scale so the ray parameter equals camera-frame depth.
        let dir = (point - origin) / z;
        match self.intersect(&origin, &dir, frame) {
            Some(hit) => hit.t >= z * (1.0 - tol),
            None => true,
        }
    }
}

/// Ray-cast every texel center. Pixels that miss everything are invalid and
/// black.
pub fn raster_ground_truth(scene: &Scene, camera: &Camera) -> (Image, DepthMap) {
    raster_ground_truth_at(scene, camera, 0)
}

pub fn raster_ground_truth_at(scene: &Scene, camera: &Camera, frame: usize) -> (Image, DepthMap) {
    let (w, h) = camera.dims();
    let origin = camera.center();
    let rot = camera.pose.rotation();
    let mut image = Grid::filled(w, h, [0.0f32; 3]);
    let mut depth = Grid::filled(w, h, 0.0f64);
    let mut valid = Grid::filled(w, h, false);
    for y in 0..h {
        for x in 0..w {
            // Camera-frame ray with unit z, so t is the depth.
            let dir = rot * camera.intrinsics.ray(x as f64, y as f64);
            if let Some(hit) = scene.intersect(&origin, &dir, frame) {
                *image.get_mut(x, y) = hit.color;
                *depth.get_mut(x, y) = hit.t;
                *valid.get_mut(x, y) = true;
            }
        }
    }
    (image, DepthMap::new(depth, valid).expect("ray hits are in front of the camera"))
}

pub fn posed_frame(scene: &Scene, camera: &Camera, frame: usize) -> PostedFrame {
    let (image, depth) = raster_ground_truth_at(scene, camera, frame);
    PostedFrame {
        image,
        depth,
        camera: *camera,
    }
}

/// Exact depth from the scene, for cache updates in tests and demos.
#[derive(Debug, Clone)]
pub struct SceneDepth {
    pub scene: Scene,
}

impl DepthProvider for SceneDepth {
    fn depth(&mut self, frame: usize, camera: &Camera, _image: &Image) -> Result<DepthMap> {
        Ok(raster_ground_truth_at(&self.scene, camera, frame).1)
    }
}
