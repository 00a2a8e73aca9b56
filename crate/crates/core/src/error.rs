use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MathError {
    #[error("vector is not unit length (|v| = {length})")]
    NotUnit { length: f64 },
    #[error("octahedral uv ({u}, {v}) outside [0,1]^2")]
    UvOutOfRange { u: f64, v: f64 },
    #[error("texel ({tx}, {ty}) outside the {res}x{res} interior")]
    TexelOutOfRange { tx: usize, ty: usize, res: usize },
}

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("scene has no non-degenerate triangles")]
    Empty,
    #[error("material {index}: {reason}")]
    InvalidMaterial { index: usize, reason: String },
    #[error("material index {0} out of range")]
    UnknownMaterial(usize),
    #[error("dynamic object {0} does not exist")]
    UnknownObject(usize),
    #[error("light {index}: {reason}")]
    InvalidLight { index: usize, reason: String },
    #[error("failed to load OBJ {path}: {source}")]
    Obj {
        path: String,
        #[source]
        source: tobj::LoadError,
    },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VolumeError {
    #[error("probe counts must be at least 2 on every axis, got {0:?}")]
    Counts([u32; 3]),
    #[error("probe spacing must be positive and finite, got {0:?}")]
    Spacing([f64; 3]),
    #[error("{name} must be in {range}, got {value}")]
    Parameter {
        name: &'static str,
        range: &'static str,
        value: f64,
    },
    #[error("logical probe index {index:?} outside grid {counts:?}")]
    IndexOutOfRange { index: [u32; 3], counts: [u32; 3] },
    #[error("probe offset {offset:?} exceeds the limit {limit:?}")]
    OffsetLimit { offset: [f64; 3], limit: [f64; 3] },
}
