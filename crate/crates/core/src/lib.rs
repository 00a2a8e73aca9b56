//! Dynamic diffuse global illumination with irradiance probes, on the CPU.
//!
//! Probe volumes store octahedral irradiance and depth-moment tiles that
//! are refreshed each frame by ray tracing and sampled during deferred
//! shading. A reference path tracer serves as ground truth.

pub mod error;
pub mod io;
pub mod math;
pub mod optimizer;
pub mod query;
pub mod render;
pub mod scene;
pub mod states;
pub mod update;
pub mod volume;

pub use error::{MathError, SceneError, VolumeError};
pub use math::{Aabb, OctUV, Ray, Rgb, UnitVec3};
pub use query::{QueryPoint, VolumeBlendSet};
pub use render::{Camera, Features, FrameImage, FrameStats, GiSettings, GiSystem, RenderStats};
pub use scene::{DynamicObject, Light, Material, Mesh, Scene};
pub use states::InitMode;
pub use update::HeuristicEvent;
pub use volume::{ProbeState, ProbeVolume, VolumeParams};
