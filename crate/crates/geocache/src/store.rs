//! On-disk caches and frame sequences.
//!
//! A cache directory holds `manifest.json` plus one PLY per distinct cloud.
//! Entries that share a cloud in memory (static broadcast, appended views)
//! reference the same file and are shared again on load.
//!
//! A frame sequence directory holds `trajectory.json`, `rgb_NNNN.png` and
//! `depth_NNNN.pfm` for every frame.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use geocache_core::cache::{Cache3D, PointCloud, PostedFrame};
use geocache_core::geometry::{Camera, Trajectory};
use geocache_core::grid::Image;
use geocache_core::splat::RenderedFrame;
use serde::{Deserialize, Serialize};

use crate::error::{read, write, Error, Result};
use crate::pfm::{read_pfm, write_pfm};
use crate::ply::{read_ply, write_ply};
use crate::raster::{read_image, write_image, write_mask};
use crate::schema::{load_trajectory, save_trajectory, CameraJson};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
struct EntryJson {
    cloud: usize,
    camera: CameraJson,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ManifestJson {
    frames: usize,
    views: usize,
    clouds: Vec<String>,
    /// `entries[t][v]`
    entries: Vec<Vec<EntryJson>>,
}

pub fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(Error::io(dir))
}

pub fn save_cache(dir: &Path, cache: &Cache3D) -> Result<()> {
    create_dir(dir)?;
    let mut files: HashMap<*const PointCloud, usize> = HashMap::new();
    let mut clouds = Vec::new();
    let mut entries = Vec::with_capacity(cache.len());
    for t in 0..cache.len() {
        let mut row = Vec::with_capacity(cache.views());
        for v in 0..cache.views() {
            let cloud = cache.cloud(t, v);
            let idx = *files.entry(Arc::as_ptr(cloud)).or_insert_with(|| {
                clouds.push((format!("cloud_{:04}.ply", clouds.len()), Arc::clone(cloud)));
                clouds.len() - 1
            });
            row.push(EntryJson {
                cloud: idx,
                camera: CameraJson::from_camera(cache.camera(t, v)),
            });
        }
        entries.push(row);
    }
    for (name, cloud) in &clouds {
        write_ply(&dir.join(name), cloud)?;
    }
    let manifest = ManifestJson {
        frames: cache.len(),
        views: cache.views(),
        clouds: clouds.into_iter().map(|c| c.0).collect(),
        entries,
    };
    write(&dir.join(MANIFEST), serde_json::to_string_pretty(&manifest)?.as_bytes())
}

pub fn load_cache(dir: &Path) -> Result<Cache3D> {
    let path = dir.join(MANIFEST);
    let manifest: ManifestJson =
        serde_json::from_slice(&read(&path)?).map_err(|e| Error::format(format!("{}: {e}", path.display())))?;
    let clouds = manifest
        .clouds
        .iter()
        .map(|name| {
            if name.contains(['/', '\\']) || name == ".." {
                return Err(Error::format(format!("cloud file name {name:?} leaves the cache directory")));
            }
            read_ply(&dir.join(name)).map(Arc::new)
        })
        .collect::<Result<Vec<_>>>()?;
    if manifest.entries.len() != manifest.frames {
        return Err(Error::format(format!(
            "manifest lists {} time steps but declares {}",
            manifest.entries.len(),
            manifest.frames
        )));
    }
    let mut grid = Vec::with_capacity(manifest.frames);
    let mut cameras = Vec::with_capacity(manifest.frames);
    for row in &manifest.entries {
        if row.len() != manifest.views {
            return Err(Error::format(format!(
                "manifest row has {} views, expected {}",
                row.len(),
                manifest.views
            )));
        }
        let mut r = Vec::with_capacity(row.len());
        let mut c = Vec::with_capacity(row.len());
        for e in row {
            let cloud = clouds
                .get(e.cloud)
                .ok_or_else(|| Error::format(format!("manifest references missing cloud {}", e.cloud)))?;
            r.push(Arc::clone(cloud));
            c.push(e.camera.to_camera()?);
        }
        grid.push(r);
        cameras.push(c);
    }
    Ok(Cache3D::from_entries(grid, cameras)?)
}

pub fn frame_path(dir: &Path, stem: &str, t: usize, ext: &str) -> PathBuf {
    dir.join(format!("{stem}_{t:04}.{ext}"))
}

pub fn save_sequence(dir: &Path, frames: &[PostedFrame]) -> Result<()> {
    create_dir(dir)?;
    let traj = Trajectory::new(frames.iter().map(|f| f.camera).collect())?;
    save_trajectory(&dir.join("trajectory.json"), &traj)?;
    for (t, f) in frames.iter().enumerate() {
        write_image(&frame_path(dir, "rgb", t, "png"), &f.image)?;
        write_pfm(&frame_path(dir, "depth", t, "pfm"), &f.depth)?;
    }
    Ok(())
}

pub fn load_sequence(dir: &Path) -> Result<Vec<PostedFrame>> {
    let traj = load_trajectory(&dir.join("trajectory.json"))?;
    traj.frames()
        .iter()
        .enumerate()
        .map(|(t, cam)| load_posed(dir, t, cam))
        .collect()
}

pub fn load_posed(dir: &Path, t: usize, camera: &Camera) -> Result<PostedFrame> {
    let image = read_image(&frame_path(dir, "rgb", t, "png"))?;
    let depth = read_pfm(&frame_path(dir, "depth", t, "pfm"))?;
    Ok(PostedFrame::new(image, depth, *camera)?)
}

/// `image_NNNN.png`, `mask_NNNN.png` and `depth_NNNN.pfm`.
pub fn save_rendered(dir: &Path, t: usize, frame: &RenderedFrame) -> Result<()> {
    write_image(&frame_path(dir, "image", t, "png"), &frame.image)?;
    write_mask(&frame_path(dir, "mask", t, "png"), &frame.mask)?;
    write_pfm(&frame_path(dir, "depth", t, "pfm"), &frame.depth_map())
}

pub fn save_video(dir: &Path, stem: &str, frames: &[Image]) -> Result<()> {
    create_dir(dir)?;
    for (t, img) in frames.iter().enumerate() {
        write_image(&frame_path(dir, stem, t, "png"), img)?;
    }
    Ok(())
}

/// Sorted `*.png` files of a directory.
pub fn list_png(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(Error::io(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "png"))
        .collect();
    out.sort();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use geocache_core::geometry::{Intrinsics, Pose, Vec3};
    use geocache_core::synthworld::{make_scene, posed_frame, SceneSpec};

    fn frames() -> Vec<PostedFrame> {
        let scene = make_scene(&SceneSpec::new(2, 4, 1.0, 2.0)).unwrap();
        let k = Intrinsics::centered(30.0, 24, 16).unwrap();
        (0..3)
            .map(|i| posed_frame(&scene, &Camera::new(k, Pose::from_translation(Vec3::new(0.1 * i as f64, 0.0, 0.0))), 0))
            .collect()
    }

    #[test]
    fn static_cache_round_trip_keeps_sharing() {
        let dir = tempfile::tempdir().unwrap();
        let cache = Cache3D::build_multiview(&frames()[..2], 5).unwrap();
        save_cache(dir.path(), &cache).unwrap();
        let plys = std::fs::read_dir(dir.path()).unwrap().filter(|e| {
            e.as_ref().unwrap().path().extension().is_some_and(|x| x == "ply")
        });
        assert_eq!(plys.count(), 2);
        let back = load_cache(dir.path()).unwrap();
        assert!(back.is_static());
        assert_eq!((back.len(), back.views()), (5, 2));
        assert_eq!(back.point_counts(), cache.point_counts());
        assert_eq!(back.camera(3, 1), cache.camera(3, 1));
        // Positions go through f32 once, then are stable.
        save_cache(dir.path(), &back).unwrap();
        let again = load_cache(dir.path()).unwrap();
        assert_eq!(again.cloud(0, 0).as_ref(), back.cloud(0, 0).as_ref());
    }

    #[test]
    fn dynamic_cache_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cache = Cache3D::build_dynamic(&[frames()]).unwrap();
        save_cache(dir.path(), &cache).unwrap();
        let back = load_cache(dir.path()).unwrap();
        assert!(!back.is_static());
        assert_eq!(back.len(), 3);
    }

    #[test]
    fn sequence_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let fs = frames();
        save_sequence(dir.path(), &fs).unwrap();
        let back = load_sequence(dir.path()).unwrap();
        assert_eq!(back.len(), 3);
        assert_eq!(back[1].camera, fs[1].camera);
        assert_eq!(back[1].depth.valid(), fs[1].depth.valid());
    }

    #[test]
    fn missing_manifest_is_an_io_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_cache(dir.path()), Err(Error::Io { .. })));
    }
}
