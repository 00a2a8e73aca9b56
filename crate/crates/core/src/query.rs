//! Irradiance queries against probe volumes.

use glam::{DVec3, UVec3};

use crate::math::{octa_encode, Rgb, UnitVec3};
use crate::volume::{sample_tile, ProbeVolume, IRRADIANCE_RES, VISIBILITY_RES};

/// Floor on the visibility variance, in m².
pub const MIN_VARIANCE: f64 = 1e-6;
/// Floor on the Chebyshev visibility weight.
pub const MIN_VISIBILITY_WEIGHT: f64 = 0.05;
/// Cage weights below this total make a sample invalid.
pub const MIN_CAGE_WEIGHT: f64 = 1e-6;

/// A shading point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QueryPoint {
    pub position: DVec3,
    pub normal: UnitVec3,
    /// Direction toward the viewer.
    pub view: UnitVec3,
}

/// World-space offset added to a shading point before visibility tests.
/// `min_spacing` is the smallest axial probe spacing of the volume.
pub fn self_shadow_bias(normal: UnitVec3, view: UnitVec3, min_spacing: f64, scale: f64) -> DVec3 {
    (*normal * 0.2 + *view * 0.8) * (0.75 * min_spacing) * scale
}

/// Chebyshev upper bound on the probability that a point at distance `r`
/// is visible, given the first two moments of occluder distance.
pub fn chebyshev_weight(mean: f64, mean_sq: f64, r: f64) -> f64 {
    if r <= mean {
        return 1.0;
    }
    let variance = (mean_sq - mean * mean).max(MIN_VARIANCE);
    let d = r - mean;
    let w = variance / (variance + d * d);
    (w * w * w).clamp(MIN_VISIBILITY_WEIGHT, 1.0)
}

/// Soft weight for probes behind the shading point's tangent plane.
pub fn backface_weight(dir_to_probe: DVec3, normal: UnitVec3) -> f64 {
    let h = (1.0 + dir_to_probe.dot(*normal)) * 0.5;
    h * h + 0.2
}

/// Interpolated irradiance from the 8 probes around `q`, or `None` when the
/// cage carries (almost) no weight.
pub fn sample_volume_irradiance(q: &QueryPoint, v: &ProbeVolume) -> Option<Rgb> {
    let counts = v.counts();
    let spacing = v.spacing();
    let grid = (q.position - v.origin()) / spacing;
    let max_base = (counts - UVec3::splat(2)).as_dvec3();
    let base = grid.floor().clamp(DVec3::ZERO, max_base);
    let frac = (grid - base).clamp(DVec3::ZERO, DVec3::ONE);
    let base = base.as_uvec3();

    let params = v.params();
    let bias = self_shadow_bias(q.normal, q.view, v.min_spacing(), params.self_shadow_bias);
    let biased = q.position + bias;
    let half_gamma = params.irradiance_gamma * 0.5;
    let n_uv = octa_encode(q.normal);

    let mut sum = Rgb::ZERO;
    let mut total = 0.0;
    for corner in 0..8u32 {
        let step = UVec3::new(corner & 1, (corner >> 1) & 1, (corner >> 2) & 1);
        let logical = base + step;
        let slot = v.storage_slot(logical).expect("cage index in range");
        let probe = &v.probes()[slot];
        if !probe.state.is_sampled() || !probe.initialized {
            continue;
        }
        let t = DVec3::select(step.cmpeq(UVec3::ONE), frac, DVec3::ONE - frac);
        let trilinear = t.x * t.y * t.z;
        if trilinear <= 0.0 {
            continue;
        }
        let probe_pos = v.grid_position(logical) + probe.offset;

        let to_probe = (probe_pos - q.position).normalize_or_zero();
        let mut w = trilinear * backface_weight(to_probe, q.normal);

        let from_probe = biased - probe_pos;
        let r = from_probe.length();
        if let Some(dir) = UnitVec3::normalize(from_probe) {
            let [mean, mean_sq] =
                sample_tile(v.visibility.tile(slot), VISIBILITY_RES, octa_encode(dir));
            w *= chebyshev_weight(mean, mean_sq, r);
        }
        if w <= 0.0 {
            continue;
        }

        let texel =
            sample_tile(v.irradiance.tile(slot), IRRADIANCE_RES, n_uv).map(|c| c.powf(half_gamma));
        sum += Rgb::from_array(texel) * w;
        total += w;
    }
    if total < MIN_CAGE_WEIGHT {
        return None;
    }
    let mean = sum / total;
    Some(mean * mean)
}

fn ramp(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}

/// Blend weight of a volume at `p`: 1 inside the second-to-last probe
/// plane, falling linearly to 0 at the outer plane. With `camera` given,
/// a tracking volume instead uses a window one cell narrower per side,
/// centered on the camera.
pub fn volume_blend_weight(v: &ProbeVolume, p: DVec3, camera: Option<DVec3>) -> f64 {
    let b = v.bounds();
    let s = v.spacing();
    match camera {
        Some(cam) if v.params().tracking => {
            let half = (b.extent() * 0.5) - s;
            let d = (p - cam).abs();
            (0..3).map(|a| ramp((half[a] - d[a]) / s[a])).product()
        }
        _ => (0..3)
            .map(|a| ramp((p[a] - b.min[a]).min(b.max[a] - p[a]) / s[a]))
            .product(),
    }
}

/// Result of a multi-volume query.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MultiSample {
    pub irradiance: Rgb,
    /// Total blend weight consumed before renormalization.
    pub accumulated: f64,
    /// Set when no volume fully covered the point (weight renormalized) or
    /// no volume could answer at all.
    pub flagged: bool,
}

/// Volumes ordered densest first, plus the camera used for
/// camera-aware blending.
#[derive(Clone, Debug)]
pub struct VolumeBlendSet<'a> {
    volumes: Vec<&'a ProbeVolume>,
    camera: DVec3,
    camera_aware: bool,
}

impl<'a> VolumeBlendSet<'a> {
    pub fn new(
        volumes: impl IntoIterator<Item = &'a ProbeVolume>,
        camera: DVec3,
        camera_aware: bool,
    ) -> Self {
        let mut volumes: Vec<_> = volumes.into_iter().collect();
        volumes.sort_by(|a, b| {
            a.params()
                .cell_volume()
                .total_cmp(&b.params().cell_volume())
                .then(a.id.cmp(&b.id))
        });
        Self {
            volumes,
            camera,
            camera_aware,
        }
    }

    pub fn volumes(&self) -> &[&'a ProbeVolume] {
        &self.volumes
    }

    fn camera(&self) -> Option<DVec3> {
        self.camera_aware.then_some(self.camera)
    }

    /// Weight each volume would contribute at `p`, densest first, assuming
    /// every volume returns a valid sample.
    pub fn weights(&self, p: DVec3) -> Vec<f64> {
        let mut acc = 0.0;
        self.volumes
            .iter()
            .map(|v| {
                let w = volume_blend_weight(v, p, self.camera())
                    .min(1.0 - acc)
                    .max(0.0);
                acc += w;
                w
            })
            .collect()
    }

    pub fn sample(&self, q: &QueryPoint) -> MultiSample {
        sample_multi_volume(q, self)
    }
}

/// Blends volumes densest first until the accumulated weight reaches 1.
pub fn sample_multi_volume(q: &QueryPoint, set: &VolumeBlendSet) -> MultiSample {
    let mut acc = 0.0;
    let mut sum = Rgb::ZERO;
    for v in &set.volumes {
        if acc >= 1.0 {
            break;
        }
        let w = volume_blend_weight(v, q.position, set.camera());
        if w <= 0.0 {
            continue;
        }
        let Some(e) = sample_volume_irradiance(q, v) else {
            continue;
        };
        let c = w.min(1.0 - acc);
        sum += e * c;
        acc += c;
    }
    if acc <= 0.0 {
        return MultiSample {
            irradiance: Rgb::ZERO,
            accumulated: 0.0,
            flagged: true,
        };
    }
    let full = acc >= 1.0 - 1e-12;
    MultiSample {
        irradiance: if full { sum } else { sum / acc },
        accumulated: acc,
        flagged: !full,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::update::encode_perceptual;
    use crate::volume::{ProbeState, VolumeParams};
    use proptest::prelude::*;

    fn constant_volume(params: VolumeParams, value: Rgb, mean: f32) -> ProbeVolume {
        let mut v = ProbeVolume::new(0, params).unwrap();
        let (enc, _) = encode_perceptual(value, v.params().irradiance_gamma);
        for slot in 0..v.probe_count() {
            v.irradiance
                .fill_tile(slot, [enc.x as f32, enc.y as f32, enc.z as f32]);
            v.visibility.fill_tile(slot, [mean, mean * mean]);
            let p = &mut v.probes_mut()[slot];
            p.state = ProbeState::Vigilant;
            p.initialized = true;
        }
        v
    }

    fn q(p: DVec3) -> QueryPoint {
        QueryPoint {
            position: p,
            normal: UnitVec3::Y,
            view: UnitVec3::Y,
        }
    }

    #[test]
    fn bias_examples() {
        let b = self_shadow_bias(UnitVec3::Z, UnitVec3::Z, 1.0, 0.3);
        assert!((b - DVec3::new(0.0, 0.0, 0.225)).length() < 1e-12);
        assert_eq!(
            self_shadow_bias(UnitVec3::Z, UnitVec3::X, 1.0, 0.0),
            DVec3::ZERO
        );
        let b = self_shadow_bias(UnitVec3::Z, UnitVec3::X, 2.0, 0.3);
        assert!((b - DVec3::new(0.36, 0.0, 0.09)).length() < 1e-12);
    }

    #[test]
    fn chebyshev_examples() {
        assert_eq!(chebyshev_weight(1.0, 1.0, 0.5), 1.0);
        assert_eq!(chebyshev_weight(1.0, 1.0, 1.0), 1.0);
        assert!((chebyshev_weight(1.0, 1.04, 1.2) - 0.125).abs() < 1e-12);
        assert_eq!(chebyshev_weight(1.0, 1.0, 2.0), MIN_VISIBILITY_WEIGHT);
    }

    #[test]
    fn backface_term() {
        assert!((backface_weight(DVec3::NEG_Y, UnitVec3::Y) - 0.2).abs() < 1e-12);
        assert!((backface_weight(DVec3::Y, UnitVec3::Y) - 1.2).abs() < 1e-12);
    }

    #[test]
    fn constant_field_reproduced() {
        let v = constant_volume(VolumeParams::default(), Rgb::new(0.2, 0.5, 1.7), 10.0);
        for p in [
            DVec3::new(1.0, 1.0, 1.0),
            DVec3::new(0.3, 2.7, 1.9),
            DVec3::new(3.0, 3.0, 3.0),
        ] {
            let e = sample_volume_irradiance(&q(p), &v).unwrap();
            assert!(
                (e - Rgb::new(0.2, 0.5, 1.7)).abs().max_element() < 1e-5,
                "{e}"
            );
        }
    }

    #[test]
    fn probe_behind_surface_barely_counts() {
        let mut v = constant_volume(VolumeParams::default(), Rgb::ONE, 10.0);
        // Make the bottom layer of the cage bright; query a point just above
        // it with the normal pointing up and down.
        for l in v.logical_indices().filter(|l| l.y == 1).collect::<Vec<_>>() {
            let slot = v.storage_slot(l).unwrap();
            v.irradiance.fill_tile(slot, [2.0; 3]);
        }
        let up = sample_volume_irradiance(&q(DVec3::new(1.5, 1.5, 1.5)), &v).unwrap();
        let down = sample_volume_irradiance(
            &QueryPoint {
                position: DVec3::new(1.5, 1.5, 1.5),
                normal: UnitVec3::NEG_Y,
                view: UnitVec3::NEG_Y,
            },
            &v,
        )
        .unwrap();
        assert!(down.x > up.x);
    }

    #[test]
    fn sleeping_cage_is_invalid() {
        let mut v = constant_volume(VolumeParams::default(), Rgb::ONE, 10.0);
        for p in v.probes_mut() {
            p.state = ProbeState::Sleeping;
        }
        assert!(sample_volume_irradiance(&q(DVec3::splat(1.5)), &v).is_none());
        let set = VolumeBlendSet::new([&v], DVec3::ZERO, false);
        let s = set.sample(&q(DVec3::splat(1.5)));
        assert!(s.flagged);
        assert_eq!(s.irradiance, Rgb::ZERO);
    }

    #[test]
    fn dense_volume_wins_inside() {
        let dense = constant_volume(
            VolumeParams {
                counts: [9, 9, 9],
                spacing: [0.5; 3],
                ..Default::default()
            },
            Rgb::splat(2.0),
            10.0,
        );
        let sparse = constant_volume(
            VolumeParams {
                counts: [5, 5, 5],
                spacing: [2.0; 3],
                origin: [-2.0; 3],
                ..Default::default()
            },
            Rgb::splat(1.0),
            10.0,
        );
        let set = VolumeBlendSet::new([&sparse, &dense], DVec3::ZERO, false);
        assert_eq!(set.volumes()[0].params().spacing, [0.5; 3]);
        let s = set.sample(&q(DVec3::splat(2.0)));
        assert!((s.irradiance.x - 2.0).abs() < 1e-5 && !s.flagged);
        assert_eq!(set.weights(DVec3::splat(2.0)), vec![1.0, 0.0]);
        // On the dense boundary only the sparse volume contributes.
        let s = set.sample(&q(DVec3::new(0.0, 2.0, 2.0)));
        assert!((s.irradiance.x - 1.0).abs() < 1e-5 && !s.flagged);
        // Past the sparse ramp the result is renormalized and flagged.
        let s = set.sample(&q(DVec3::new(-1.0, 2.0, 2.0)));
        assert!((s.irradiance.x - 1.0).abs() < 1e-5 && s.flagged);
    }

    #[test]
    fn camera_ramp_follows_camera() {
        let v = constant_volume(
            VolumeParams {
                counts: [9, 9, 9],
                tracking: true,
                ..Default::default()
            },
            Rgb::ONE,
            10.0,
        );
        let cam = DVec3::splat(4.3);
        assert_eq!(volume_blend_weight(&v, cam, Some(cam)), 1.0);
        // Half extent 4, shrunk by one cell: ramp from 3 to 2 cells away.
        let w = volume_blend_weight(&v, cam + DVec3::new(2.5, 0.0, 0.0), Some(cam));
        assert!((w - 0.5).abs() < 1e-12);
        assert_eq!(
            volume_blend_weight(&v, cam + DVec3::new(3.0, 0.0, 0.0), Some(cam)),
            0.0
        );
        assert_eq!(volume_blend_weight(&v, DVec3::splat(4.0), None), 1.0);
    }

    proptest! {
        #[test]
        fn linear_in_scale(c in 0.01f64..10.0, x in 0.0f64..3.0, y in 0.0f64..3.0, z in 0.0f64..3.0) {
            let a = constant_volume(VolumeParams::default(), Rgb::ONE, 10.0);
            let b = constant_volume(VolumeParams::default(), Rgb::splat(c), 10.0);
            let p = q(DVec3::new(x, y, z));
            let ea = sample_volume_irradiance(&p, &a).unwrap();
            let eb = sample_volume_irradiance(&p, &b).unwrap();
            prop_assert!((eb.x - c * ea.x).abs() < 1e-5 * c.max(1.0));
        }

        #[test]
        fn bias_linear(b in 0.0f64..2.0, d in 0.01f64..5.0) {
            let n = UnitVec3::normalize(DVec3::new(0.3, 1.0, -0.2)).unwrap();
            let v = UnitVec3::normalize(DVec3::new(-0.5, 0.4, 0.9)).unwrap();
            let one = self_shadow_bias(n, v, 1.0, 1.0);
            prop_assert!((self_shadow_bias(n, v, d, b) - one * d * b).length() < 1e-12);
        }

        #[test]
        fn partition_of_unity_on_plateau(x in 1.0f64..3.0, y in 1.0f64..3.0, z in 1.0f64..3.0) {
            let dense = ProbeVolume::new(1, VolumeParams { counts: [9, 9, 9], spacing: [0.5; 3], ..Default::default() }).unwrap();
            let sparse = ProbeVolume::new(2, VolumeParams { counts: [5, 5, 5], spacing: [2.0; 3], origin: [-2.0; 3], ..Default::default() }).unwrap();
            let set = VolumeBlendSet::new([&dense, &sparse], DVec3::ZERO, false);
            let sum: f64 = set.weights(DVec3::new(x, y, z)).iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-6);
        }
    }
}
