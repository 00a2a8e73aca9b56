//! Triangle scenes: materials, analytic lights, rigid dynamic objects and
//! ray casting through a BVH.

mod bvh;
mod mesh;

pub use bvh::{Bvh, Triangle, RAY_EPSILON};
pub use mesh::Mesh;

use std::f64::consts::PI;

use glam::{DAffine3, DVec3};
use serde::{Deserialize, Serialize};

use crate::error::SceneError;
use crate::math::{Aabb, Ray, Rgb, UnitVec3};

/// Surface description. Diffuse and glossy reflectance must not sum above
/// one on any channel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Material {
    pub albedo: Rgb,
    /// Emitted radiance.
    pub emissive: Rgb,
    pub glossy: Rgb,
    pub roughness: f64,
}

impl Default for Material {
    fn default() -> Self {
        Self::diffuse(Rgb::splat(0.5))
    }
}

impl Material {
    pub fn diffuse(albedo: Rgb) -> Self {
        Self {
            albedo,
            emissive: Rgb::ZERO,
            glossy: Rgb::ZERO,
            roughness: 1.0,
        }
    }

    pub fn emitter(emissive: Rgb) -> Self {
        Self {
            albedo: Rgb::ZERO,
            emissive,
            glossy: Rgb::ZERO,
            roughness: 1.0,
        }
    }

    pub fn mirror(glossy: Rgb) -> Self {
        Self {
            albedo: Rgb::ZERO,
            emissive: Rgb::ZERO,
            glossy,
            roughness: 0.0,
        }
    }

    pub fn validate(&self, index: usize) -> Result<(), SceneError> {
        let bad = |reason: &str| SceneError::InvalidMaterial {
            index,
            reason: reason.to_string(),
        };
        let in_unit = |c: Rgb| c.is_finite() && c.cmpge(Rgb::ZERO).all() && c.cmple(Rgb::ONE).all();
        if !in_unit(self.albedo) {
            return Err(bad("albedo must be in [0,1]"));
        }
        if !in_unit(self.glossy) {
            return Err(bad("glossy reflectance must be in [0,1]"));
        }
        if !self.emissive.is_finite() || self.emissive.cmplt(Rgb::ZERO).any() {
            return Err(bad("emissive must be non-negative"));
        }
        if !(0.0..=1.0).contains(&self.roughness) {
            return Err(bad("roughness must be in [0,1]"));
        }
        if (self.albedo + self.glossy)
            .cmpgt(Rgb::splat(1.0 + 1e-9))
            .any()
        {
            return Err(bad("albedo + glossy exceeds 1"));
        }
        Ok(())
    }
}

/// Analytic light. Point lights use `intensity / r²` falloff; directional
/// lights deliver `intensity` as irradiance on a perpendicular surface.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Light {
    Point {
        position: DVec3,
        intensity: Rgb,
    },
    /// `direction` is the direction the light travels.
    Directional {
        direction: DVec3,
        intensity: Rgb,
    },
}

impl Light {
    pub fn intensity(&self) -> Rgb {
        match self {
            Light::Point { intensity, .. } | Light::Directional { intensity, .. } => *intensity,
        }
    }

    pub fn set_intensity(&mut self, value: Rgb) {
        match self {
            Light::Point { intensity, .. } | Light::Directional { intensity, .. } => {
                *intensity = value
            }
        }
    }

    fn validate(&self, index: usize) -> Result<(), SceneError> {
        let bad = |reason: &str| SceneError::InvalidLight {
            index,
            reason: reason.to_string(),
        };
        let i = self.intensity();
        if !i.is_finite() || i.cmplt(Rgb::ZERO).any() {
            return Err(bad("intensity must be non-negative"));
        }
        if let Light::Directional { direction, .. } = self {
            if UnitVec3::new(*direction).is_err() {
                return Err(bad("directional light needs a unit direction"));
            }
        }
        Ok(())
    }
}

/// A rigidly animated mesh.
#[derive(Clone, Debug)]
pub struct DynamicObject {
    pub mesh: Mesh,
    pub material: u32,
    pub transform: DAffine3,
    /// World bounds of the transformed vertices.
    pub bounds: Aabb,
}

/// Grows an object's world bounds by one probe cell plus the self-shadow
/// bias length on every axis.
pub fn extended_aabb(obj: &DynamicObject, probe_spacing: DVec3, bias_len: f64) -> Aabb {
    obj.bounds.expand(probe_spacing + DVec3::splat(bias_len))
}

/// Nearest ray intersection.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hit {
    pub t: f64,
    pub position: DVec3,
    /// Geometric normal of the triangle as wound.
    pub normal: UnitVec3,
    /// True when the ray arrived against the normal.
    pub frontface: bool,
    pub material: u32,
}

impl Hit {
    /// Normal flipped to face the incoming ray.
    pub fn facing_normal(&self) -> UnitVec3 {
        if self.frontface {
            self.normal
        } else {
            -self.normal
        }
    }
}

/// Scene geometry plus lighting. Static triangles and dynamic objects share
/// one BVH for shading; a second, static-only BVH serves probe placement.
#[derive(Clone, Debug)]
pub struct Scene {
    materials: Vec<Material>,
    pub lights: Vec<Light>,
    /// Radiance returned by rays that escape the scene.
    pub environment: Rgb,
    static_tris: Vec<Triangle>,
    static_bounds: Vec<Aabb>,
    dynamic: Vec<DynamicObject>,
    static_bvh: Option<Bvh>,
    bvh: Option<Bvh>,
}

impl Default for Scene {
    fn default() -> Self {
        Self::new()
    }
}

impl Scene {
    pub fn new() -> Self {
        Self {
            materials: Vec::new(),
            lights: Vec::new(),
            environment: Rgb::ZERO,
            static_tris: Vec::new(),
            static_bounds: Vec::new(),
            dynamic: Vec::new(),
            static_bvh: None,
            bvh: None,
        }
    }

    pub fn add_material(&mut self, m: Material) -> Result<u32, SceneError> {
        m.validate(self.materials.len())?;
        self.materials.push(m);
        Ok(self.materials.len() as u32 - 1)
    }

    pub fn add_light(&mut self, l: Light) -> Result<usize, SceneError> {
        l.validate(self.lights.len())?;
        self.lights.push(l);
        Ok(self.lights.len() - 1)
    }

    /// Adds world-space static geometry. Degenerate triangles are dropped.
    pub fn add_static(&mut self, mesh: &Mesh, material: u32) -> Result<(), SceneError> {
        self.check_material(material)?;
        let before = self.static_tris.len();
        self.static_tris.extend(mesh_triangles(mesh, material));
        if self.static_tris.len() > before {
            self.static_bounds.push(mesh.bounds());
        }
        self.static_bvh = None;
        self.bvh = None;
        Ok(())
    }

    /// Adds a rigid dynamic object; returns its id.
    pub fn add_dynamic(
        &mut self,
        mesh: Mesh,
        material: u32,
        transform: DAffine3,
    ) -> Result<usize, SceneError> {
        self.check_material(material)?;
        let bounds = mesh.transformed(&transform).bounds();
        self.dynamic.push(DynamicObject {
            mesh,
            material,
            transform,
            bounds,
        });
        self.bvh = None;
        Ok(self.dynamic.len() - 1)
    }

    pub fn set_transform(&mut self, object: usize, transform: DAffine3) -> Result<(), SceneError> {
        let obj = self
            .dynamic
            .get_mut(object)
            .ok_or(SceneError::UnknownObject(object))?;
        obj.transform = transform;
        obj.bounds = obj.mesh.transformed(&transform).bounds();
        self.bvh = None;
        Ok(())
    }

    /// Rebuilds acceleration structures after edits. Scenes without any
    /// triangles stay valid and simply never report hits.
    pub fn commit(&mut self) {
        if self.static_bvh.is_none() {
            self.static_bvh = Bvh::build(self.static_tris.clone()).ok();
        }
        if self.bvh.is_none() {
            let mut all = self.static_tris.clone();
            for obj in &self.dynamic {
                all.extend(mesh_triangles(
                    &obj.mesh.transformed(&obj.transform),
                    obj.material,
                ));
            }
            self.bvh = Bvh::build(all).ok();
        }
    }

    pub fn is_committed(&self) -> bool {
        let has_geometry = !self.static_tris.is_empty() || !self.dynamic.is_empty();
        !has_geometry || self.bvh.is_some()
    }

    fn check_material(&self, material: u32) -> Result<(), SceneError> {
        if (material as usize) < self.materials.len() {
            Ok(())
        } else {
            Err(SceneError::UnknownMaterial(material as usize))
        }
    }

    pub fn material(&self, id: u32) -> &Material {
        &self.materials[id as usize]
    }

    pub fn materials(&self) -> &[Material] {
        &self.materials
    }

    pub fn dynamic_objects(&self) -> &[DynamicObject] {
        &self.dynamic
    }

    /// Bounds of each static mesh added.
    pub fn static_bounds(&self) -> &[Aabb] {
        &self.static_bounds
    }

    pub fn bvh(&self) -> Option<&Bvh> {
        self.bvh.as_ref()
    }

    /// Nearest hit against all geometry with `t` in `(RAY_EPSILON, t_max]`.
    pub fn ray_cast(&self, ray: &Ray, t_max: f64) -> Option<Hit> {
        debug_assert!(self.is_committed(), "scene edited without commit()");
        cast(self.bvh.as_ref()?, ray, t_max)
    }

    /// Nearest hit against static geometry only.
    pub fn ray_cast_static(&self, ray: &Ray, t_max: f64) -> Option<Hit> {
        cast(self.static_bvh.as_ref()?, ray, t_max)
    }

    pub fn occluded(&self, ray: &Ray, t_max: f64) -> bool {
        self.bvh
            .as_ref()
            .is_some_and(|b| b.occluded(ray, RAY_EPSILON, t_max))
    }

    /// Irradiance from the analytic lights at `p` with normal `n`, shadow
    /// rays included.
    pub fn direct_irradiance(&self, p: DVec3, n: UnitVec3) -> Rgb {
        let mut e = Rgb::ZERO;
        for light in &self.lights {
            match *light {
                Light::Point {
                    position,
                    intensity,
                } => {
                    let to = position - p;
                    let d2 = to.length_squared();
                    let d = d2.sqrt();
                    if d < 1e-9 {
                        continue;
                    }
                    let l = UnitVec3::new_unchecked(to / d);
                    let cos = n.dot(*l);
                    if cos <= 0.0 || intensity == Rgb::ZERO {
                        continue;
                    }
                    if !self.occluded(&Ray::new(p, l), d - RAY_EPSILON) {
                        e += intensity * (cos / d2);
                    }
                }
                Light::Directional {
                    direction,
                    intensity,
                } => {
                    let l = UnitVec3::new_unchecked(-direction.normalize());
                    let cos = n.dot(*l);
                    if cos <= 0.0 || intensity == Rgb::ZERO {
                        continue;
                    }
                    if !self.occluded(&Ray::new(p, l), f64::INFINITY) {
                        e += intensity * cos;
                    }
                }
            }
        }
        e
    }

    /// Outgoing diffuse radiance due to the analytic lights (Lambertian
    /// `albedo / π · E`).
    pub fn direct_radiance(&self, p: DVec3, n: UnitVec3, albedo: Rgb) -> Rgb {
        if albedo == Rgb::ZERO {
            return Rgb::ZERO;
        }
        albedo * self.direct_irradiance(p, n) / PI
    }
}

fn cast(bvh: &Bvh, ray: &Ray, t_max: f64) -> Option<Hit> {
    let (i, t) = bvh.intersect(ray, RAY_EPSILON, t_max)?;
    let tri = &bvh.triangles()[i];
    let frontface = tri.normal.dot(*ray.dir) < 0.0;
    Some(Hit {
        t,
        position: ray.at(t),
        normal: UnitVec3::new_unchecked(tri.normal),
        frontface,
        material: tri.material,
    })
}

fn mesh_triangles(mesh: &Mesh, material: u32) -> impl Iterator<Item = Triangle> + '_ {
    mesh.indices.iter().filter_map(move |t| {
        let [a, b, c] = t.map(|i| mesh.positions[i as usize]);
        Triangle::new(a, b, c, material)
    })
}
