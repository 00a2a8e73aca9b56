//! Probe position adjustment around static geometry.

use glam::DVec3;

use crate::math::{mix_seed, random_rotation, spherical_fibonacci, Ray, UnitVec3};
use crate::scene::Scene;

/// Backface fraction above which a probe counts as inside geometry.
pub const BACKFACE_FRACTION_THRESHOLD: f64 = 0.25;
/// Fixed iteration count of the optimizer.
pub const OPTIMIZER_ITERATIONS: u32 = 5;
/// Largest step taken away from a nearby frontface, in meters.
pub const MAX_FRONTFACE_STEP: f64 = 0.2;
/// Closest-frontface distance, as a fraction of the smallest spacing, below
/// which a probe is nudged away from the surface.
pub const FRONTFACE_CROWDING: f64 = 0.25;
/// Margin kept inside the offset limit when moving through a backface.
const LIMIT_EPSILON: f64 = 1e-3;
const OPTIMIZER_SEED: u64 = 0x6f70_7469_6d69_7a65;

/// A ray hit summarized by direction and distance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FaceSample {
    pub dir: UnitVec3,
    /// Infinite for rays that escaped.
    pub distance: f64,
}

/// Distance-only summary of one probe's rays.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ProbeRayStats {
    pub rays: u32,
    pub backface_count: u32,
    pub closest_backface: Option<FaceSample>,
    pub closest_frontface: Option<FaceSample>,
    pub farthest_frontface: Option<FaceSample>,
}

impl ProbeRayStats {
    /// Builds stats from `(direction, hit)` pairs where a hit is
    /// `(distance, frontface)`. Escaped rays count as frontfaces at
    /// infinite distance; ties for the farthest frontface go to the
    /// direction pointing most away from the closest one.
    pub fn from_hits(hits: impl IntoIterator<Item = (UnitVec3, Option<(f64, bool)>)>) -> Self {
        let mut s = Self::default();
        let mut fronts = Vec::new();
        for (dir, hit) in hits {
            s.rays += 1;
            let (distance, front) = hit.unwrap_or((f64::INFINITY, true));
            let sample = FaceSample { dir, distance };
            if front {
                if s.closest_frontface.is_none_or(|c| distance < c.distance) {
                    s.closest_frontface = Some(sample);
                }
                fronts.push(sample);
            } else {
                s.backface_count += 1;
                if s.closest_backface.is_none_or(|c| distance < c.distance) {
                    s.closest_backface = Some(sample);
                }
            }
        }
        let closest = s.closest_frontface.map(|c| *c.dir);
        let away = |f: &FaceSample| closest.map_or(0.0, |c| f.dir.dot(c));
        for f in fronts {
            let better = match s.farthest_frontface {
                None => true,
                Some(best) => {
                    f.distance > best.distance
                        || (f.distance == best.distance && away(&f) < away(&best))
                }
            };
            if better {
                s.farthest_frontface = Some(f);
            }
        }
        s
    }

    pub fn backface_fraction(&self) -> f64 {
        if self.rays == 0 {
            0.0
        } else {
            self.backface_count as f64 / self.rays as f64
        }
    }

    pub fn inside_geometry(&self) -> bool {
        self.backface_fraction() > BACKFACE_FRACTION_THRESHOLD
    }

    pub fn closest_frontface_distance(&self) -> f64 {
        self.closest_frontface.map_or(f64::INFINITY, |f| f.distance)
    }
}

/// Casts `n` rotated Fibonacci rays against static geometry from `position`.
pub fn gather_ray_stats(scene: &Scene, position: DVec3, n: usize, seed: u64) -> ProbeRayStats {
    let rot = random_rotation(seed);
    ProbeRayStats::from_hits((0..n).map(|i| {
        let dir = rot.rotate(spherical_fibonacci(i, n));
        let hit = scene
            .ray_cast_static(&Ray::new(position, dir), f64::INFINITY)
            .map(|h| (h.t, h.frontface));
        (dir, hit)
    }))
}

/// One optimizer step. Inside geometry the probe jumps through the closest
/// backface when the offset limit allows passing it completely; outside, a
/// probe crowding a nearby frontface steps toward its farthest frontface
/// unless both directions coincide. The result is clamped to the limit.
pub fn optimize_probe_iteration(
    stats: &ProbeRayStats,
    current: DVec3,
    spacing: DVec3,
    offset_limit: f64,
) -> DVec3 {
    let limit = spacing * offset_limit;
    let mut next = current;
    if stats.inside_geometry() {
        if let Some(back) = stats.closest_backface {
            let v = *back.dir * back.distance;
            let mut scale = f64::INFINITY;
            for a in 0..3 {
                if v[a].abs() < 1e-12 {
                    continue;
                }
                let pos = (limit[a] - current[a]) / v[a];
                let neg = (-limit[a] - current[a]) / v[a];
                scale = scale.min(pos.max(neg));
            }
            let scale = scale - LIMIT_EPSILON;
            if scale > 1.0 && scale.is_finite() {
                next = current + v * scale;
            }
        }
    } else if let (Some(close), Some(far)) = (stats.closest_frontface, stats.farthest_frontface) {
        let crowded = close.distance < FRONTFACE_CROWDING * spacing.min_element();
        if crowded && far.dir.dot(*close.dir) <= 0.5 {
            next = current + *far.dir * MAX_FRONTFACE_STEP.min(far.distance);
        }
    }
    next.clamp(-limit, limit)
}

/// Outcome of optimizing one probe.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProbeOptimization {
    pub offset: DVec3,
    /// Still inside geometry after the last iteration.
    pub stuck: bool,
    pub iterations: u32,
    /// Stats traced at the final offset.
    pub stats: ProbeRayStats,
    pub rays_traced: u64,
}

/// Runs the fixed-count optimizer from `grid_position` (when `enabled`)
/// and traces final stats at the resulting position.
pub fn optimize_probe(
    scene: &Scene,
    grid_position: DVec3,
    spacing: DVec3,
    offset_limit: f64,
    rays: usize,
    enabled: bool,
) -> ProbeOptimization {
    let mut offset = DVec3::ZERO;
    let mut best = (u32::MAX, DVec3::ZERO);
    let mut traced = 0u64;
    let mut iterations = 0;
    if enabled {
        for it in 0..OPTIMIZER_ITERATIONS {
            let stats = gather_ray_stats(
                scene,
                grid_position + offset,
                rays,
                mix_seed(OPTIMIZER_SEED, &[it as u64]),
            );
            traced += rays as u64;
            if stats.backface_count < best.0 {
                best = (stats.backface_count, offset);
            }
            offset = optimize_probe_iteration(&stats, offset, spacing, offset_limit);
            iterations += 1;
        }
    }
    let final_seed = mix_seed(OPTIMIZER_SEED, &[OPTIMIZER_ITERATIONS as u64]);
    let mut stats = gather_ray_stats(scene, grid_position + offset, rays, final_seed);
    traced += rays as u64;
    let stuck = stats.inside_geometry();
    if stuck && best.0 < stats.backface_count {
        offset = best.1;
        stats = gather_ray_stats(scene, grid_position + offset, rays, final_seed);
        traced += rays as u64;
    }
    ProbeOptimization {
        offset,
        stuck,
        iterations,
        stats,
        rays_traced: traced,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::Rgb;
    use crate::scene::{Material, Mesh};

    fn scene_with(meshes: &[Mesh]) -> Scene {
        let mut s = Scene::new();
        let m = s.add_material(Material::diffuse(Rgb::splat(0.5))).unwrap();
        for mesh in meshes {
            s.add_static(mesh, m).unwrap();
        }
        s.commit();
        s
    }

    fn dir(v: DVec3) -> UnitVec3 {
        UnitVec3::normalize(v).unwrap()
    }

    #[test]
    fn low_backface_fraction_skips_backface_branch() {
        let mut hits = vec![(UnitVec3::X, Some((0.3, false)))];
        hits.extend((0..9).map(|_| (UnitVec3::Y, Some((5.0, true)))));
        let stats = ProbeRayStats::from_hits(hits);
        assert!((stats.backface_fraction() - 0.1).abs() < 1e-12);
        let next = optimize_probe_iteration(&stats, DVec3::ZERO, DVec3::ONE, 0.45);
        assert_eq!(next, DVec3::ZERO);
    }

    #[test]
    fn steps_away_from_close_floor() {
        let stats = ProbeRayStats::from_hits([
            (UnitVec3::NEG_Y, Some((0.05, true))),
            (dir(DVec3::new(1.0, -1.0, 0.0)), Some((0.07, true))),
            (dir(DVec3::new(1.0, 1.0, 0.0)), None),
            (UnitVec3::Y, None),
        ]);
        let far = stats.farthest_frontface.unwrap();
        assert_eq!(far.dir, UnitVec3::Y);
        let next = optimize_probe_iteration(&stats, DVec3::ZERO, DVec3::ONE, 0.45);
        assert!((next - DVec3::new(0.0, 0.2, 0.0)).length() < 1e-12);
    }

    #[test]
    fn single_surface_does_not_move() {
        let stats = ProbeRayStats::from_hits([
            (UnitVec3::NEG_Y, Some((0.05, true))),
            (UnitVec3::NEG_Y, Some((0.06, true))),
        ]);
        assert_eq!(
            optimize_probe_iteration(&stats, DVec3::ZERO, DVec3::ONE, 0.45),
            DVec3::ZERO
        );
    }

    #[test]
    fn passes_through_thin_side_of_wall() {
        let wall = Mesh::cuboid(
            DVec3::new(-2.0, -5.0, -5.0),
            DVec3::new(0.1, 5.0, 5.0),
            false,
        );
        let s = scene_with(&[wall]);
        let r = optimize_probe(&s, DVec3::ZERO, DVec3::ONE, 0.45, 256, true);
        assert_eq!(r.iterations, 5);
        assert!(!r.stuck);
        assert!(r.offset.x > 0.1 && r.offset.x <= 0.45);
        assert!(r.offset.abs().cmple(DVec3::splat(0.45)).all());
        // Outside now: a ray back toward the wall sees its front face.
        let hit = s
            .ray_cast_static(&Ray::new(r.offset, UnitVec3::NEG_X), 10.0)
            .unwrap();
        assert!(hit.frontface);
    }

    #[test]
    fn never_reenters_solid() {
        let wall = Mesh::cuboid(
            DVec3::new(-2.0, -5.0, -5.0),
            DVec3::new(0.1, 5.0, 5.0),
            false,
        );
        let s = scene_with(&[wall]);
        let mut offset = DVec3::ZERO;
        let mut escaped = false;
        for it in 0..OPTIMIZER_ITERATIONS {
            let stats = gather_ray_stats(&s, offset, 256, it as u64);
            if escaped {
                assert!(!stats.inside_geometry());
            }
            offset = optimize_probe_iteration(&stats, offset, DVec3::ONE, 0.45);
            escaped |= offset.x > 0.1;
        }
        assert!(escaped);
    }

    #[test]
    fn solid_block_is_stuck() {
        let s = scene_with(&[Mesh::cuboid(DVec3::splat(-2.0), DVec3::splat(2.0), false)]);
        let r = optimize_probe(&s, DVec3::ZERO, DVec3::ONE, 0.45, 128, true);
        assert!(r.stuck);
        assert_eq!(r.offset, DVec3::ZERO);
    }

    #[test]
    fn open_space_stays_put() {
        let s = scene_with(&[Mesh::cuboid(DVec3::splat(-20.0), DVec3::splat(20.0), true)]);
        let r = optimize_probe(&s, DVec3::ZERO, DVec3::ONE, 0.45, 128, true);
        assert_eq!(r.offset, DVec3::ZERO);
        assert!(!r.stuck);
        assert_eq!(r.rays_traced, 6 * 128);
    }

    #[test]
    fn deterministic() {
        let floor = Mesh::quad(
            DVec3::new(-5.0, -0.1, 5.0),
            DVec3::X * 10.0,
            DVec3::Z * -10.0,
        );
        let s = scene_with(&[floor]);
        let a = optimize_probe(&s, DVec3::ZERO, DVec3::ONE, 0.45, 64, true);
        let b = optimize_probe(&s, DVec3::ZERO, DVec3::ONE, 0.45, 64, true);
        assert_eq!(a, b);
        assert!(a.offset.y > 0.0 && a.offset.y <= 0.45);
    }
}
