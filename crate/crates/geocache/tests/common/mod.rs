#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use geocache::store::save_cache;
use geocache_core::cache::Cache3D;
use geocache_core::geometry::{Camera, Intrinsics, Pose, Trajectory, Vec3};
use geocache_core::synthworld::{make_scene, posed_frame, SceneSpec};

pub const W: usize = 64;
pub const H: usize = 48;

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_geocache"))
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn geocache")
}

pub fn path_str(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

pub fn camera_at(yaw_deg: f64, x: f64) -> Camera {
    let k = Intrinsics::centered(64.0, W, H).unwrap();
    let center = Vec3::new(x, 0.0, 0.0);
    let a = yaw_deg.to_radians();
    let target = center + Vec3::new(a.sin(), 0.0, a.cos());
    Camera::new(k, Pose::look_at(center, target, Vec3::new(0.0, -1.0, 0.0)).unwrap())
}

/// A small sweep of cameras starting at the origin.
pub fn sweep(n: usize) -> Trajectory {
    Trajectory::new((0..n).map(|i| camera_at(2.0 * i as f64, 0.02 * i as f64)).collect()).unwrap()
}

/// A static cache of temporal length `len` built from two views of a seeded
/// scene, written to `dir`.
pub fn write_cache(dir: &Path, seed: u64, len: usize) -> PathBuf {
    let scene = make_scene(&SceneSpec::new(seed, 5, 1.0, 1.0)).unwrap();
    let frames = [posed_frame(&scene, &camera_at(0.0, 0.0), 0), posed_frame(&scene, &camera_at(-6.0, 0.2), 0)];
    let cache = Cache3D::build_multiview(&frames, len).unwrap();
    let out = dir.join("cache");
    save_cache(&out, &cache).unwrap();
    out
}
