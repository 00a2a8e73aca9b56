use std::path::Path;

use glam::{DAffine3, DVec3};

use crate::error::SceneError;
use crate::math::Aabb;

/// Indexed triangle mesh. Front faces wind counter-clockwise.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Mesh {
    pub positions: Vec<DVec3>,
    pub indices: Vec<[u32; 3]>,
}

impl Mesh {
    /// Parallelogram `corner + s*u + t*v`, facing `u × v`.
    pub fn quad(corner: DVec3, u: DVec3, v: DVec3) -> Self {
        Self {
            positions: vec![corner, corner + u, corner + u + v, corner + v],
            indices: vec![[0, 1, 2], [0, 2, 3]],
        }
    }

    /// Closed box. `inward` flips the faces so they are seen from inside.
    pub fn cuboid(min: DVec3, max: DVec3, inward: bool) -> Self {
        let e = max - min;
        let (x, y, z) = (DVec3::X * e.x, DVec3::Y * e.y, DVec3::Z * e.z);
        let faces = [
            Self::quad(min, z, y),     // -X
            Self::quad(min + x, y, z), // +X
            Self::quad(min, x, z),     // -Y
            Self::quad(min + y, z, x), // +Y
            Self::quad(min, y, x),     // -Z
            Self::quad(min + z, x, y), // +Z
        ];
        let mut out = Self::default();
        for f in faces {
            out.append(&f);
        }
        if inward {
            out.flip();
        }
        out
    }

    pub fn append(&mut self, other: &Mesh) {
        let base = self.positions.len() as u32;
        self.positions.extend_from_slice(&other.positions);
        self.indices.extend(
            other
                .indices
                .iter()
                .map(|t| [t[0] + base, t[1] + base, t[2] + base]),
        );
    }

    /// Reverses winding (and therefore every face normal).
    pub fn flip(&mut self) {
        for t in &mut self.indices {
            t.swap(1, 2);
        }
    }

    pub fn transformed(&self, xf: &DAffine3) -> Mesh {
        Mesh {
            positions: self
                .positions
                .iter()
                .map(|&p| xf.transform_point3(p))
                .collect(),
            indices: self.indices.clone(),
        }
    }

    pub fn bounds(&self) -> Aabb {
        Aabb::from_points(self.positions.iter().copied())
    }

    pub fn triangle_count(&self) -> usize {
        self.indices.len()
    }

    /// Loads positions and faces from a Wavefront OBJ file. Normals, texture
    /// coordinates and materials are ignored; every model in the file is
    /// merged into one mesh.
    pub fn load_obj(path: &Path) -> Result<Mesh, SceneError> {
        let opts = tobj::LoadOptions {
            triangulate: true,
            single_index: false,
            ignore_points: true,
            ignore_lines: true,
        };
        let (models, _) = tobj::load_obj(path, &opts).map_err(|source| SceneError::Obj {
            path: path.display().to_string(),
            source,
        })?;
        let mut out = Mesh::default();
        for m in models {
            let pos = &m.mesh.positions;
            let part = Mesh {
                positions: pos
                    .chunks_exact(3)
                    .map(|c| DVec3::new(c[0] as f64, c[1] as f64, c[2] as f64))
                    .collect(),
                indices: m
                    .mesh
                    .indices
                    .chunks_exact(3)
                    .map(|c| [c[0], c[1], c[2]])
                    .collect(),
            };
            out.append(&part);
        }
        Ok(out)
    }
}
