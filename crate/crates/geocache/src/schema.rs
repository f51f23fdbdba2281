//! JSON documents: trajectories, single cameras and scenes.
//!
//! Rotations are world-from-camera, row-major; translations are camera
//! centers in world coordinates. Both are validated on load.

use std::path::Path;

use geocache_core::geometry::{Camera, Intrinsics, Mat3, Pose, Trajectory, Vec3};
use geocache_core::synthworld::{Primitive, Scene, SceneSpec, Shape, Texture, TextureStyle};
use serde::{Deserialize, Serialize};

use crate::error::{read, write, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseJson {
    pub rotation: [f64; 9],
    pub translation: [f64; 3],
}

impl PoseJson {
    pub fn from_pose(p: &Pose) -> Self {
        let r = p.rotation();
        let t = p.translation();
        Self {
            rotation: [
                r[(0, 0)],
                r[(0, 1)],
                r[(0, 2)],
                r[(1, 0)],
                r[(1, 1)],
                r[(1, 2)],
                r[(2, 0)],
                r[(2, 1)],
                r[(2, 2)],
            ],
            translation: [t.x, t.y, t.z],
        }
    }

    pub fn to_pose(&self) -> Result<Pose> {
        Ok(Pose::new(
            Mat3::from_row_slice(&self.rotation),
            Vec3::from(self.translation),
        )?)
    }
}

/// One trajectory frame: intrinsics plus pose.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameJson {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub rotation: [f64; 9],
    pub translation: [f64; 3],
}

impl FrameJson {
    pub fn from_camera(c: &Camera) -> Self {
        let p = PoseJson::from_pose(&c.pose);
        let k = &c.intrinsics;
        Self {
            fx: k.fx,
            fy: k.fy,
            cx: k.cx,
            cy: k.cy,
            rotation: p.rotation,
            translation: p.translation,
        }
    }

    pub fn to_camera(&self, width: usize, height: usize) -> Result<Camera> {
        let k = Intrinsics::new(self.fx, self.fy, self.cx, self.cy, width, height)?;
        let pose = PoseJson {
            rotation: self.rotation,
            translation: self.translation,
        }
        .to_pose()?;
        Ok(Camera::new(k, pose))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryJson {
    pub width: usize,
    pub height: usize,
    pub frames: Vec<FrameJson>,
}

impl TrajectoryJson {
    pub fn from_trajectory(t: &Trajectory) -> Self {
        let (width, height) = t.dims();
        Self {
            width,
            height,
            frames: t.frames().iter().map(FrameJson::from_camera).collect(),
        }
    }

    pub fn to_trajectory(&self) -> Result<Trajectory> {
        let frames = self
            .frames
            .iter()
            .enumerate()
            .map(|(i, f)| {
                f.to_camera(self.width, self.height).map_err(|e| {
                    crate::Error::format(format!("trajectory frame {i}: {e}"))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Trajectory::new(frames)?)
    }
}

/// A camera with its image size, as carried by pose messages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraJson {
    pub width: usize,
    pub height: usize,
    #[serde(flatten)]
    pub frame: FrameJson,
}

impl CameraJson {
    pub fn from_camera(c: &Camera) -> Self {
        Self {
            width: c.width(),
            height: c.height(),
            frame: FrameJson::from_camera(c),
        }
    }

    pub fn to_camera(&self) -> Result<Camera> {
        self.frame.to_camera(self.width, self.height)
    }
}

pub fn parse_trajectory(text: &str) -> Result<Trajectory> {
    serde_json::from_str::<TrajectoryJson>(text)?.to_trajectory()
}

pub fn trajectory_to_json(t: &Trajectory) -> String {
    serde_json::to_string_pretty(&TrajectoryJson::from_trajectory(t)).expect("trajectory serializes")
}

pub fn load_trajectory(path: &Path) -> Result<Trajectory> {
    let bytes = read(path)?;
    let text = String::from_utf8_lossy(&bytes);
    parse_trajectory(&text).map_err(|e| crate::Error::format(format!("{}: {e}", path.display())))
}

pub fn save_trajectory(path: &Path, t: &Trajectory) -> Result<()> {
    write(path, trajectory_to_json(t).as_bytes())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ShapeJson {
    Plane { half_width: f64, half_height: f64 },
    Sphere { radius: f64 },
    Box { half_extents: [f64; 3] },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TextureJson {
    Solid { color: [f32; 3] },
    Checker { a: [f32; 3], b: [f32; 3], cell: f64 },
    Gradient { a: [f32; 3], b: [f32; 3], axis: [f64; 3], period: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrimitiveJson {
    pub shape: ShapeJson,
    pub pose: PoseJson,
    pub texture: TextureJson,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub track: Vec<PoseJson>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneJson {
    pub primitives: Vec<PrimitiveJson>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TextureStyleJson {
    #[default]
    Mixed,
    Checker,
    Gradient,
}

/// Recipe for a generated scene.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneSpecJson {
    pub seed: u64,
    pub primitives: usize,
    pub extent: f64,
    pub texture_frequency: f64,
    #[serde(default)]
    pub textures: TextureStyleJson,
}

impl SceneSpecJson {
    pub fn to_spec(&self) -> SceneSpec {
        SceneSpec {
            seed: self.seed,
            primitives: self.primitives,
            extent: self.extent,
            texture_frequency: self.texture_frequency,
            textures: match self.textures {
                TextureStyleJson::Mixed => TextureStyle::Mixed,
                TextureStyleJson::Checker => TextureStyle::Checker,
                TextureStyleJson::Gradient => TextureStyle::Gradient,
            },
        }
    }
}

/// A scene file holds either explicit primitives or a generation recipe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SceneFile {
    Scene(SceneJson),
    Spec(SceneSpecJson),
}

impl SceneJson {
    pub fn from_scene(s: &Scene) -> Self {
        Self {
            primitives: s
                .primitives
                .iter()
                .map(|p| PrimitiveJson {
                    shape: match p.shape {
                        Shape::Plane {
                            half_width,
                            half_height,
                        } => ShapeJson::Plane {
                            half_width,
                            half_height,
                        },
                        Shape::Sphere { radius } => ShapeJson::Sphere { radius },
                        Shape::Box { half_extents } => ShapeJson::Box { half_extents },
                    },
                    pose: PoseJson::from_pose(&p.pose),
                    texture: match p.texture {
                        Texture::Solid(color) => TextureJson::Solid { color },
                        Texture::Checker { a, b, cell } => TextureJson::Checker { a, b, cell },
                        Texture::Gradient { a, b, axis, period } => TextureJson::Gradient { a, b, axis, period },
                    },
                    track: p.track.iter().map(PoseJson::from_pose).collect(),
                })
                .collect(),
        }
    }

    pub fn to_scene(&self) -> Result<Scene> {
        let primitives = self
            .primitives
            .iter()
            .map(|p| {
                let shape = match p.shape {
                    ShapeJson::Plane {
                        half_width,
                        half_height,
                    } => Shape::Plane {
                        half_width,
                        half_height,
                    },
                    ShapeJson::Sphere { radius } => Shape::Sphere { radius },
                    ShapeJson::Box { half_extents } => Shape::Box { half_extents },
                };
                let texture = match p.texture {
                    TextureJson::Solid { color } => Texture::Solid(color),
                    TextureJson::Checker { a, b, cell } => Texture::Checker { a, b, cell },
                    TextureJson::Gradient { a, b, axis, period } => Texture::Gradient { a, b, axis, period },
                };
                let mut prim = Primitive::new(shape, p.pose.to_pose()?, texture);
                prim.track = p.track.iter().map(PoseJson::to_pose).collect::<Result<_>>()?;
                Ok(prim)
            })
            .collect::<Result<Vec<_>>>()?;
        let scene = Scene { primitives };
        scene.validate()?;
        Ok(scene)
    }
}

impl SceneFile {
    /// Materialize the scene; `seed` overrides a recipe's own seed.
    pub fn to_scene(&self, seed: Option<u64>) -> Result<Scene> {
        match self {
            SceneFile::Scene(s) => s.to_scene(),
            SceneFile::Spec(spec) => {
                let mut spec = spec.to_spec();
                if let Some(seed) = seed {
                    spec.seed = seed;
                }
                Ok(geocache_core::synthworld::make_scene(&spec)?)
            }
        }
    }
}

pub fn load_scene(path: &Path, seed: Option<u64>) -> Result<Scene> {
    let file: SceneFile = serde_json::from_slice(&read(path)?)
        .map_err(|e| crate::Error::format(format!("{}: {e}", path.display())))?;
    file.to_scene(seed)
}

pub fn save_scene(path: &Path, scene: &Scene) -> Result<()> {
    let text = serde_json::to_string_pretty(&SceneFile::Scene(SceneJson::from_scene(scene)))?;
    write(path, text.as_bytes())
}
