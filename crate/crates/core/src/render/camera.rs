use glam::DVec3;
use serde::{Deserialize, Serialize};

use crate::math::{Ray, UnitVec3};

/// Pinhole camera.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Camera {
    pub position: DVec3,
    pub target: DVec3,
    #[serde(default = "default_up")]
    pub up: DVec3,
    /// Vertical field of view in degrees.
    #[serde(default = "default_vfov")]
    pub vfov_deg: f64,
}

fn default_up() -> DVec3 {
    DVec3::Y
}

fn default_vfov() -> f64 {
    50.0
}

impl Camera {
    pub fn new(position: DVec3, target: DVec3) -> Self {
        Self {
            position,
            target,
            up: default_up(),
            vfov_deg: default_vfov(),
        }
    }

    fn basis(&self) -> (DVec3, DVec3, DVec3) {
        let forward = (self.target - self.position).normalize();
        let mut right = forward.cross(self.up);
        if right.length_squared() < 1e-12 {
            right = forward.any_orthonormal_vector();
        }
        let right = right.normalize();
        (forward, right, right.cross(forward))
    }

    /// Ray through image position `(x, y)` in pixels, y down, so pixel
    /// `(i, j)` has its center at `(i + 0.5, j + 0.5)`.
    pub fn ray(&self, x: f64, y: f64, width: usize, height: usize) -> Ray {
        let (f, r, u) = self.basis();
        let half_h = (self.vfov_deg.to_radians() * 0.5).tan();
        let half_w = half_h * width as f64 / height as f64;
        let sx = (2.0 * x / width as f64 - 1.0) * half_w;
        let sy = (1.0 - 2.0 * y / height as f64) * half_h;
        let dir = UnitVec3::normalize(f + r * sx + u * sy).expect("finite camera basis");
        Ray::new(self.position, dir)
    }

    pub fn pixel_ray(&self, px: usize, py: usize, width: usize, height: usize) -> Ray {
        self.ray(px as f64 + 0.5, py as f64 + 0.5, width, height)
    }
}
