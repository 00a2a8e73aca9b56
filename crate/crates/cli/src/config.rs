//! Run configuration: scene description, probe volumes, feature toggles,
//! outputs and the frame script, loaded from TOML.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ddgi_core::math::Rgb;
use ddgi_core::{
    Camera, Features, GiSettings, InitMode, Light, Material, Mesh, Scene, VolumeParams,
};
use glam::{DAffine3, DVec3};
use serde::{Deserialize, Serialize};

use crate::script::FrameScript;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
}

impl ConfigError {
    fn invalid(path: impl Into<String>, message: impl ToString) -> Self {
        ConfigError::Invalid {
            path: path.into(),
            message: message.to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_frames")]
    pub frames: u64,
    /// Radiance of rays that escape the scene.
    #[serde(default)]
    pub environment: Rgb,
    #[serde(default)]
    pub render: RenderConfig,
    pub camera: Camera,
    #[serde(default)]
    pub features: Features,
    #[serde(default)]
    pub init: InitConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub materials: BTreeMap<String, Material>,
    #[serde(default)]
    pub objects: Vec<ObjectConfig>,
    #[serde(default)]
    pub lights: Vec<Light>,
    #[serde(default)]
    pub volumes: Vec<VolumeParams>,
    #[serde(default)]
    pub script: FrameScript,
}

fn default_frames() -> u64 {
    1
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RenderConfig {
    pub width: usize,
    pub height: usize,
    /// Samples per pixel for oracle comparison frames.
    pub oracle_spp: u32,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            width: 64,
            height: 48,
            oracle_spp: 64,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitConfig {
    pub mode: InitMode,
    pub burst_rays: u32,
}

impl Default for InitConfig {
    fn default() -> Self {
        let g = GiSettings::default();
        Self {
            mode: g.init_mode,
            burst_rays: g.burst_rays,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub pfm: bool,
    pub png: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            pfm: true,
            png: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectConfig {
    pub name: String,
    pub material: String,
    pub shape: Shape,
    /// Moving objects are referenced by script tracks and wake probes.
    #[serde(default)]
    pub dynamic: bool,
}

/// Geometry primitive.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Shape {
    /// Parallelogram `corner + s·u + t·v`, facing `u × v`.
    Quad { corner: DVec3, u: DVec3, v: DVec3 },
    Cuboid {
        min: DVec3,
        max: DVec3,
        #[serde(default)]
        inward: bool,
    },
    /// Wavefront OBJ, relative to the config file.
    Obj { path: PathBuf },
}

impl Shape {
    fn mesh(&self, base_dir: &Path) -> Result<Mesh, String> {
        match self {
            Shape::Quad { corner, u, v } => {
                if u.cross(*v).length_squared() == 0.0 {
                    return Err("quad edges are parallel".into());
                }
                Ok(Mesh::quad(*corner, *u, *v))
            }
            Shape::Cuboid { min, max, inward } => {
                if !min.cmplt(*max).all() {
                    return Err(format!("min {min} not below max {max}"));
                }
                Ok(Mesh::cuboid(*min, *max, *inward))
            }
            Shape::Obj { path } => Mesh::load_obj(&base_dir.join(path)).map_err(|e| e.to_string()),
        }
    }
}

/// A validated configuration with its assembled scene.
#[derive(Clone, Debug)]
pub struct Loaded {
    pub config: RunConfig,
    pub scene: Scene,
    /// Scene index of each dynamic object, by name.
    pub dynamic: BTreeMap<String, usize>,
}

impl RunConfig {
    /// Parses TOML, reporting the key path of any schema violation.
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let de = toml::Deserializer::new(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            ConfigError::Parse {
                path: if path == "." { "<root>".into() } else { path },
                message: e.into_inner().message().trim().to_string(),
            }
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn gi_settings(&self) -> GiSettings {
        GiSettings {
            features: self.features,
            init_mode: self.init.mode,
            burst_rays: self.init.burst_rays,
            seed: self.seed,
        }
    }

    /// Checks cross-references and value ranges, then assembles the scene.
    /// Relative mesh paths resolve against `base_dir`.
    pub fn build(self, base_dir: &Path) -> Result<Loaded, ConfigError> {
        if self.render.width == 0 || self.render.height == 0 {
            return Err(ConfigError::invalid(
                "render",
                "image size must be positive",
            ));
        }
        if self.init.burst_rays == 0 {
            return Err(ConfigError::invalid("init.burst_rays", "must be positive"));
        }
        if self.camera.position == self.camera.target {
            return Err(ConfigError::invalid("camera", "position equals target"));
        }
        for (i, v) in self.volumes.iter().enumerate() {
            v.validate()
                .map_err(|e| ConfigError::invalid(format!("volumes[{i}]"), e))?;
        }

        let mut scene = Scene::new();
        scene.environment = self.environment;
        let mut material_ids = BTreeMap::new();
        for (name, m) in &self.materials {
            let id = scene
                .add_material(m.clone())
                .map_err(|e| ConfigError::invalid(format!("materials.{name}"), e))?;
            material_ids.insert(name.as_str(), id);
        }
        let mut dynamic = BTreeMap::new();
        for (i, o) in self.objects.iter().enumerate() {
            let at = |field: &str| format!("objects[{i}].{field}");
            let &m = material_ids.get(o.material.as_str()).ok_or_else(|| {
                ConfigError::invalid(at("material"), format!("unknown material '{}'", o.material))
            })?;
            let mesh = o
                .shape
                .mesh(base_dir)
                .map_err(|e| ConfigError::invalid(at("shape"), e))?;
            if o.dynamic {
                let id = scene
                    .add_dynamic(mesh, m, DAffine3::IDENTITY)
                    .map_err(|e| ConfigError::invalid(at("shape"), e))?;
                if dynamic.insert(o.name.clone(), id).is_some() {
                    return Err(ConfigError::invalid(
                        at("name"),
                        format!("duplicate name '{}'", o.name),
                    ));
                }
            } else {
                scene
                    .add_static(&mesh, m)
                    .map_err(|e| ConfigError::invalid(at("shape"), e))?;
            }
        }
        for (i, l) in self.lights.iter().enumerate() {
            scene
                .add_light(l.clone())
                .map_err(|e| ConfigError::invalid(format!("lights[{i}]"), e))?;
        }
        self.script
            .validate(self.lights.len(), &dynamic)
            .map_err(|(path, msg)| ConfigError::invalid(format!("script.{path}"), msg))?;
        scene.commit();
        Ok(Loaded {
            config: self,
            scene,
            dynamic,
        })
    }
}

/// Built-in procedural scenes, addressable as `builtin:<name>`.
pub const BUILTINS: [(&str, &str); 7] = [
    ("furnace", include_str!("../scenes/furnace.toml")),
    ("cornell", include_str!("../scenes/cornell.toml")),
    ("two_room", include_str!("../scenes/two_room.toml")),
    ("villa_corner", include_str!("../scenes/villa_corner.toml")),
    ("street", include_str!("../scenes/street.toml")),
    ("mirrors", include_str!("../scenes/mirrors.toml")),
    ("flashlight", include_str!("../scenes/flashlight.toml")),
];

pub fn builtin(name: &str) -> Option<&'static str> {
    BUILTINS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| *text)
}

/// Loads a config file, or a built-in scene given as `builtin:<name>`.
pub fn load_config(path: &Path) -> Result<Loaded, ConfigError> {
    let s = path.to_string_lossy();
    if let Some(name) = s.strip_prefix("builtin:") {
        let text = builtin(name)
            .ok_or_else(|| ConfigError::invalid("<root>", format!("no built-in scene '{name}'")))?;
        return RunConfig::from_toml(text)?.build(Path::new("."));
    }
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    RunConfig::from_toml(&text)?.build(base)
}

/// Camera pose from the script at `frame`, falling back to the static camera.
pub fn camera_at(config: &RunConfig, frame: u64) -> Camera {
    match config.script.camera_pose(frame) {
        Some((position, target)) => Camera {
            position,
            target,
            ..config.camera.clone()
        },
        None => config.camera.clone(),
    }
}

/// Applies the light intensity changes scheduled at `frame`.
pub fn apply_light_changes(scene: &mut Scene, config: &RunConfig, frame: u64) {
    for e in config.script.events.iter().filter(|e| e.frame == frame) {
        if let (Some(i), Some(v)) = (e.light, e.intensity) {
            scene.lights[i].set_intensity(v);
        }
    }
}
