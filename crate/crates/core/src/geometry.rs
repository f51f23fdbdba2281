//! Pinhole cameras, rigid poses, trajectories and Plücker ray maps.
//!
//! Conventions:
//! - camera frame is x right, y down, z forward;
//! - poses are stored world-from-camera, so `translation` is the camera
//!   center in world coordinates;
//! - pixel `(u, v)` is the center of texel `(u, v)`, so texel `(i, j)` is hit
//!   by `round(u) == i`, `round(v) == j`.

use alloc::vec::Vec;

use nalgebra::{Matrix3, Quaternion, Rotation3, UnitQuaternion, Vector2, Vector3};

use crate::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Vec2 = Vector2<f64>;
pub type Mat3 = Matrix3<f64>;

/// Tolerance used when validating that a matrix is a proper rotation.
pub const ROTATION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        let k = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    /// Square pixels with the principal point at the image center.
    pub fn centered(focal: f64, width: usize, height: usize) -> Result<Self> {
        Self::new(
            focal,
            focal,
            (width as f64 - 1.0) / 2.0,
            (height as f64 - 1.0) / 2.0,
            width,
            height,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fx.is_finite() && self.fy > 0.0 && self.fy.is_finite()) {
            return Err(Error::invalid("focal lengths must be positive and finite"));
        }
        if !(self.cx.is_finite() && self.cy.is_finite()) {
            return Err(Error::invalid("principal point must be finite"));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::invalid("image size must be at least 1x1"));
        }
        Ok(())
    }

    pub fn matrix(&self) -> Mat3 {
        Mat3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    /// Camera-frame direction (z = 1) through pixel `(u, v)`.
    pub fn ray(&self, u: f64, v: f64) -> Vec3 {
        Vec3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }
}

/// Rigid world-from-camera transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    rotation: Mat3,
    translation: Vec3,
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            rotation: Mat3::identity(),
            translation: Vec3::zeros(),
        }
    }

    /// Fails unless `rotation` is orthonormal with determinant +1.
    pub fn new(rotation: Mat3, translation: Vec3) -> Result<Self> {
        check_rotation(&rotation)?;
        if !translation.iter().all(|t| t.is_finite()) {
            return Err(Error::invalid("translation must be finite"));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn from_translation(translation: Vec3) -> Self {
        Self {
            rotation: Mat3::identity(),
            translation,
        }
    }

    /// Pose at `center` whose optical axis points at `target`; `up` is the
    /// world direction that should appear towards the top of the image.
    pub fn look_at(center: Vec3, target: Vec3, up: Vec3) -> Result<Self> {
        let z = (target - center)
            .try_normalize(1e-12)
            .ok_or_else(|| Error::invalid("look_at target coincides with center"))?;
        // Image y points down, so the camera x axis is (-up) x forward.
        let x = (-up)
            .cross(&z)
            .try_normalize(1e-12)
            .ok_or_else(|| Error::invalid("look_at up vector is parallel to the view axis"))?;
        let y = z.cross(&x);
        Self::new(Mat3::from_columns(&[x, y, z]), center)
    }

    pub fn rotation(&self) -> &Mat3 {
        &self.rotation
    }

    pub fn translation(&self) -> &Vec3 {
        &self.translation
    }

    pub fn center(&self) -> Vec3 {
        self.translation
    }

    /// Camera x axis in world coordinates.
    pub fn right(&self) -> Vec3 {
        self.rotation.column(0).into_owned()
    }

    pub fn forward(&self) -> Vec3 {
        self.rotation.column(2).into_owned()
    }

    pub fn to_camera(&self, world: &Vec3) -> Vec3 {
        self.rotation.tr_mul(&(world - self.translation))
    }

    pub fn to_world(&self, cam: &Vec3) -> Vec3 {
        self.rotation * cam + self.translation
    }

    pub fn with_translation(&self, translation: Vec3) -> Self {
        Self {
            rotation: self.rotation,
            translation,
        }
    }

    /// `self` followed by `other` expressed in this pose's camera frame.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    fn quaternion(&self) -> UnitQuaternion<f64> {
        UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(self.rotation))
    }
}

/// `max |RᵀR - I|` and `|det R - 1|` must both be under [`ROTATION_TOLERANCE`].
pub fn check_rotation(r: &Mat3) -> Result<()> {
    if !r.iter().all(|v| v.is_finite()) {
        return Err(Error::invalid("rotation must be finite"));
    }
    let ortho = (r.transpose() * r - Mat3::identity()).amax();
    let det = r.determinant();
    if ortho >= ROTATION_TOLERANCE || (det - 1.0).abs() >= ROTATION_TOLERANCE {
        return Err(Error::invalid(alloc::format!(
            "rotation is not orthonormal (|RtR-I| = {ortho:e}, det = {det})"
        )));
    }
    Ok(())
}

/// Rotation about a camera axis, e.g. yaw is about the camera y axis.
pub fn axis_angle(axis: Vec3, angle: f64) -> Mat3 {
    Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), angle).into_inner()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Camera {
    pub intrinsics: Intrinsics,
    pub pose: Pose,
}

impl Camera {
    pub fn new(intrinsics: Intrinsics, pose: Pose) -> Self {
        Self { intrinsics, pose }
    }

    pub fn width(&self) -> usize {
        self.intrinsics.width
    }

    pub fn height(&self) -> usize {
        self.intrinsics.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.intrinsics.width, self.intrinsics.height)
    }

    pub fn center(&self) -> Vec3 {
        self.pose.center()
    }
}

/// Project a world point. `depth` is the camera-frame z and may be
/// non-positive; the pixel is then meaningless and callers must filter.
pub fn project(point: &Vec3, camera: &Camera) -> (Vec2, f64) {
    let p = camera.pose.to_camera(point);
    let k = &camera.intrinsics;
    let z = p.z;
    (Vec2::new(k.fx * p.x / z + k.cx, k.fy * p.y / z + k.cy), z)
}

/// Inverse of [`project`] for `depth > 0`.
pub fn unproject(pixel: &Vec2, depth: f64, camera: &Camera) -> Result<Vec3> {
    if !(depth > 0.0 && depth.is_finite()) {
        return Err(Error::invalid(alloc::format!(
            "unproject needs a positive finite depth, got {depth}"
        )));
    }
    let k = &camera.intrinsics;
    let cam = Vec3::new(
        (pixel.x - k.cx) / k.fx * depth,
        (pixel.y - k.cy) / k.fy * depth,
        depth,
    );
    Ok(camera.pose.to_world(&cam))
}

/// Ordered camera path with a fixed image size.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    frames: Vec<Camera>,
}

impl Trajectory {
    pub fn new(frames: Vec<Camera>) -> Result<Self> {
        let first = frames
            .first()
            .ok_or_else(|| Error::invalid("trajectory needs at least one frame"))?;
        let dims = first.dims();
        for cam in &frames {
            cam.intrinsics.validate()?;
            if cam.dims() != dims {
                return Err(Error::DimensionMismatch {
                    expected: dims,
                    found: cam.dims(),
                });
            }
        }
        Ok(Self { frames })
    }

    pub fn constant(camera: Camera, len: usize) -> Result<Self> {
        Self::new(alloc::vec![camera; len])
    }

    pub fn frames(&self) -> &[Camera] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dims(&self) -> (usize, usize) {
        self.frames[0].dims()
    }

    pub fn slice(&self, start: usize, end: usize) -> Result<Trajectory> {
        if start >= end || end > self.frames.len() {
            return Err(Error::invalid(alloc::format!(
                "trajectory slice [{start}, {end}) out of range 0..{}",
                self.frames.len()
            )));
        }
        Ok(Self {
            frames: self.frames[start..end].to_vec(),
        })
    }

    pub fn into_frames(self) -> Vec<Camera> {
        self.frames
    }
}

impl core::ops::Index<usize> for Trajectory {
    type Output = Camera;
    fn index(&self, i: usize) -> &Camera {
        &self.frames[i]
    }
}

/// Per-pixel Plücker coordinates `(d, m)` with unit direction `d` in world
/// space and moment `m = o x d` about the world origin, `o` being the camera
/// center.
#[derive(Debug, Clone, PartialEq)]
pub struct PluckerMap {
    pub width: usize,
    pub height: usize,
    data: Vec<[f64; 6]>,
}

impl PluckerMap {
    pub fn at(&self, x: usize, y: usize) -> [f64; 6] {
        self.data[y * self.width + x]
    }

    pub fn as_slice(&self) -> &[[f64; 6]] {
        &self.data
    }

    /// Channel-major `6 x H x W` layout.
    pub fn to_planar(&self) -> Vec<f64> {
        let n = self.width * self.height;
        let mut out = alloc::vec![0.0; 6 * n];
        for (i, px) in self.data.iter().enumerate() {
            for (c, v) in px.iter().enumerate() {
                out[c * n + i] = *v;
            }
        }
        out
    }
}

pub fn plucker_map(camera: &Camera) -> PluckerMap {
    let k = &camera.intrinsics;
    let origin = camera.center();
    let rot = camera.pose.rotation();
    let mut data = Vec::with_capacity(k.width * k.height);
    for v in 0..k.height {
        for u in 0..k.width {
            let d = (rot * k.ray(u as f64, v as f64)).normalize();
            let m = origin.cross(&d);
            data.push([d.x, d.y, d.z, m.x, m.y, m.z]);
        }
    }
    PluckerMap {
        width: k.width,
        height: k.height,
        data,
    }
}

/// Resample `n` cameras through `keyframes`.
///
/// Keyframe `k` lands on frame `round(k (n-1) / (K-1))` and is copied there
/// verbatim. Between keyframes, rotations follow the shorter great-circle arc
/// of the unit quaternion sphere; centers and intrinsics are linear.
pub fn interpolate_trajectory(keyframes: &[Camera], n: usize) -> Result<Trajectory> {
    let count = keyframes.len();
    if count < 2 {
        return Err(Error::invalid("interpolation needs at least two keyframes"));
    }
    if n < count {
        return Err(Error::invalid(alloc::format!(
            "cannot place {count} keyframes on {n} frames"
        )));
    }
    let dims = keyframes[0].dims();
    for kf in keyframes {
        if kf.dims() != dims {
            return Err(Error::DimensionMismatch {
                expected: dims,
                found: kf.dims(),
            });
        }
    }
    let spacing = (n - 1) as f64 / (count - 1) as f64;
    let slots: Vec<usize> = (0..count)
        .map(|k| libm::round(k as f64 * spacing) as usize)
        .collect();
    let quats: Vec<UnitQuaternion<f64>> = keyframes.iter().map(|c| canonical(c.pose.quaternion())).collect();

    let mut frames = Vec::with_capacity(n);
    let mut seg = 0;
    for i in 0..n {
        while seg + 1 < count - 1 && i >= slots[seg + 1] {
            seg += 1;
        }
        let (a, b) = (slots[seg], slots[seg + 1]);
        if i == a {
            frames.push(keyframes[seg]);
            continue;
        }
        if i == b {
            frames.push(keyframes[seg + 1]);
            continue;
        }
        let t = (i - a) as f64 / (b - a) as f64;
        let (k0, k1) = (&keyframes[seg], &keyframes[seg + 1]);
        let lerp = |x: f64, y: f64| x + (y - x) * t;
        let intrinsics = Intrinsics {
            fx: lerp(k0.intrinsics.fx, k1.intrinsics.fx),
            fy: lerp(k0.intrinsics.fy, k1.intrinsics.fy),
            cx: lerp(k0.intrinsics.cx, k1.intrinsics.cx),
            cy: lerp(k0.intrinsics.cy, k1.intrinsics.cy),
            width: dims.0,
            height: dims.1,
        };
        let center = k0.center() + (k1.center() - k0.center()) * t;
        let rotation = slerp(&quats[seg], &quats[seg + 1], t).to_rotation_matrix().into_inner();
        frames.push(Camera::new(intrinsics, Pose::new(rotation, center)?));
    }
    Trajectory::new(frames)
}

fn canonical(q: UnitQuaternion<f64>) -> UnitQuaternion<f64> {
    if q.w < 0.0 {
        UnitQuaternion::new_unchecked(-q.into_inner())
    } else {
        q
    }
}

fn slerp(q0: &UnitQuaternion<f64>, q1: &UnitQuaternion<f64>, t: f64) -> UnitQuaternion<f64> {
    let a = q0.coords;
    let mut b = q1.coords;
    let mut dot = a.dot(&b);
    if dot < 0.0 {
        b = -b;
        dot = -dot;
    }
    let coords = if dot > 0.9995 {
        a + (b - a) * t
    } else {
        let theta = libm::acos(dot.min(1.0));
        let s = libm::sin(theta);
        a * (libm::sin((1.0 - t) * theta) / s) + b * (libm::sin(t * theta) / s)
    };
    UnitQuaternion::new_normalize(Quaternion::from(coords))
}

/// Shift every camera center by `lateral` meters along its own right axis.
pub fn offset_trajectory(traj: &Trajectory, lateral: f64) -> Trajectory {
    let frames = traj
        .frames
        .iter()
        .map(|cam| {
            let pose = cam.pose.with_translation(cam.center() + cam.pose.right() * lateral);
            Camera::new(cam.intrinsics, pose)
        })
        .collect();
    Trajectory { frames }
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::FRAC_PI_2;

    fn cam100() -> Camera {
        Camera::new(
            Intrinsics::new(100.0, 100.0, 50.0, 50.0, 101, 101).unwrap(),
            Pose::identity(),
        )
    }

    #[test]
    fn project_examples() {
        let cam = cam100();
        let (px, z) = project(&Vec3::new(0.0, 0.0, 2.0), &cam);
        assert_eq!((px.x, px.y, z), (50.0, 50.0, 2.0));
        let (px, z) = project(&Vec3::new(0.5, 0.0, 2.0), &cam);
        assert_eq!((px.x, px.y, z), (75.0, 50.0, 2.0));
        let (_, z) = project(&Vec3::new(0.0, 0.0, -1.0), &cam);
        assert_eq!(z, -1.0);
    }

    #[test]
    fn unproject_examples() {
        let cam = cam100();
        assert_eq!(
            unproject(&Vec2::new(50.0, 50.0), 2.0, &cam).unwrap(),
            Vec3::new(0.0, 0.0, 2.0)
        );
        assert_eq!(
            unproject(&Vec2::new(75.0, 50.0), 2.0, &cam).unwrap(),
            Vec3::new(0.5, 0.0, 2.0)
        );
        assert!(unproject(&Vec2::new(1.0, 1.0), 0.0, &cam).is_err());
        assert!(unproject(&Vec2::new(1.0, 1.0), -3.0, &cam).is_err());
    }

    #[test]
    fn plucker_examples() {
        let cam = cam100();
        let p = plucker_map(&cam).at(50, 50);
        assert_eq!(p, [0.0, 0.0, 1.0, 0.0, 0.0, 0.0]);

        let moved = Camera::new(cam.intrinsics, Pose::from_translation(Vec3::new(1.0, 0.0, 0.0)));
        let p = plucker_map(&moved).at(50, 50);
        assert_eq!(&p[..3], &[0.0, 0.0, 1.0]);
        assert_eq!(p[3], 0.0);
        assert_eq!(p[4], -1.0);
        assert_eq!(p[5], 0.0);
    }

    #[test]
    fn interpolate_constant_and_yaw() {
        let cam = cam100();
        let t = interpolate_trajectory(&[cam, cam], 5).unwrap();
        assert_eq!(t.len(), 5);
        assert!(t.frames().iter().all(|c| *c == cam));

        let yawed = Camera::new(
            cam.intrinsics,
            Pose::new(axis_angle(Vec3::y(), FRAC_PI_2), Vec3::zeros()).unwrap(),
        );
        let t = interpolate_trajectory(&[cam, yawed], 3).unwrap();
        let expected = axis_angle(Vec3::y(), FRAC_PI_2 / 2.0);
        assert!((t[1].pose.rotation() - expected).amax() < 1e-9);
        assert_eq!(t[0], cam);
        assert_eq!(t[2], yawed);
    }

    #[test]
    fn interpolate_rejects_short_input() {
        let cam = cam100();
        assert!(interpolate_trajectory(&[cam], 4).is_err());
        assert!(interpolate_trajectory(&[cam, cam, cam], 2).is_err());
    }

    #[test]
    fn interpolation_takes_short_arc() {
        let cam = cam100();
        // +170 and -170 degrees of yaw meet across 180, not across 0.
        let a = Camera::new(cam.intrinsics, Pose::new(axis_angle(Vec3::y(), 170f64.to_radians()), Vec3::zeros()).unwrap());
        let b = Camera::new(cam.intrinsics, Pose::new(axis_angle(Vec3::y(), -170f64.to_radians()), Vec3::zeros()).unwrap());
        let t = interpolate_trajectory(&[a, b], 3).unwrap();
        let expected = axis_angle(Vec3::y(), core::f64::consts::PI);
        assert!((t[1].pose.rotation() - expected).amax() < 1e-9);
    }

    #[test]
    fn offset_examples() {
        let traj = Trajectory::constant(cam100(), 2).unwrap();
        let shifted = offset_trajectory(&traj, 2.0);
        assert_eq!(shifted[0].center(), Vec3::new(2.0, 0.0, 0.0));
        assert_eq!(offset_trajectory(&traj, 0.0), traj);
    }

    #[test]
    fn look_at_conventions() {
        let pose = Pose::look_at(Vec3::zeros(), Vec3::new(0.0, 0.0, 5.0), Vec3::new(0.0, -1.0, 0.0)).unwrap();
        assert!((pose.rotation() - Mat3::identity()).amax() < 1e-15);
        assert!(Pose::new(Mat3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, -1.0), Vec3::zeros()).is_err());
    }

    #[test]
    fn trajectory_rejects_mixed_sizes() {
        let a = cam100();
        let mut b = a;
        b.intrinsics.width = 64;
        assert!(Trajectory::new(alloc::vec![a, b]).is_err());
        assert!(Trajectory::new(alloc::vec![]).is_err());
    }
}
