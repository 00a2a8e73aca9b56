//! Probe ray generation, ray shading and texel blending.

use std::sync::OnceLock;

use glam::{DVec2, UVec3};
use serde::{Deserialize, Serialize};

use crate::math::{spherical_fibonacci, texel_direction, Ray, Rgb, Rotation3, UnitVec3};
use crate::query::{QueryPoint, VolumeBlendSet};
use crate::scene::{Hit, Scene};
use crate::volume::{write_borders, IRRADIANCE_RES, VISIBILITY_RES};

/// Per-texel change (encoded space) above which irradiance hysteresis drops
/// by [`SIGNIFICANT_CHANGE_STEP`].
pub const SIGNIFICANT_CHANGE_THRESHOLD: f64 = 0.25;
pub const SIGNIFICANT_CHANGE_STEP: f64 = 0.15;
/// Per-texel change above which the old value is discarded outright.
pub const NEW_DISTRIBUTION_THRESHOLD: f64 = 0.8;
/// Stored distance of a backface hit as a fraction of the hit distance.
pub const BACKFACE_DISTANCE_SCALE: f64 = 0.2;

/// Shading result of one probe ray.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RayResult {
    pub radiance: Rgb,
    /// Distance written to the visibility accumulation.
    pub distance: f64,
}

/// The rays traced for one probe in one frame.
#[derive(Clone, Debug)]
pub struct UpdateRaySet {
    pub probe: UVec3,
    pub directions: Vec<UnitVec3>,
    pub results: Vec<RayResult>,
}

/// `n` spherical Fibonacci directions under one rotation.
pub fn probe_ray_directions(n: usize, rotation: &Rotation3) -> Vec<UnitVec3> {
    (0..n)
        .map(|i| rotation.rotate(spherical_fibonacci(i, n)))
        .collect()
}

/// Shades a probe ray. Misses return the environment at the clamp
/// distance; backfaces return black at a fifth of the hit distance;
/// frontfaces return emission, shadowed direct light and one bounce of
/// probe irradiance.
pub fn shade_update_ray(
    hit: Option<&Hit>,
    ray: &Ray,
    scene: &Scene,
    probes: Option<&VolumeBlendSet>,
    distance_clamp: f64,
) -> RayResult {
    let Some(hit) = hit else {
        return RayResult {
            radiance: scene.environment,
            distance: distance_clamp,
        };
    };
    if !hit.frontface {
        return RayResult {
            radiance: Rgb::ZERO,
            distance: (BACKFACE_DISTANCE_SCALE * hit.t).min(distance_clamp),
        };
    }
    let m = scene.material(hit.material);
    let n = hit.facing_normal();
    let mut radiance = m.emissive + scene.direct_radiance(hit.position, n, m.albedo);
    if let Some(set) = probes {
        if m.albedo != Rgb::ZERO {
            let q = QueryPoint {
                position: hit.position,
                normal: n,
                view: -ray.dir,
            };
            radiance += m.albedo * set.sample(&q).irradiance;
        }
    }
    RayResult {
        radiance,
        distance: hit.t.min(distance_clamp),
    }
}

/// Cosine-weighted mean radiance around `n`, or `None` if no ray lies in
/// the hemisphere.
pub fn accumulate_irradiance(rays: &UpdateRaySet, n: UnitVec3) -> Option<Rgb> {
    let mut sum = Rgb::ZERO;
    let mut total = 0.0;
    for (d, r) in rays.directions.iter().zip(&rays.results) {
        let w = n.dot(**d);
        if w > 0.0 {
            sum += r.radiance * w;
            total += w;
        }
    }
    (total > 0.0).then(|| sum / total)
}

/// Power-cosine weighted mean of `(d, d²)` around `n`.
pub fn accumulate_visibility(rays: &UpdateRaySet, n: UnitVec3, exponent: f64) -> Option<DVec2> {
    let int_exp = (exponent.fract() == 0.0 && exponent <= 1024.0).then_some(exponent as i32);
    let mut sum = DVec2::ZERO;
    let mut total = 0.0;
    for (d, r) in rays.directions.iter().zip(&rays.results) {
        let c = n.dot(**d);
        if c <= 0.0 {
            continue;
        }
        let w = match int_exp {
            Some(k) => c.powi(k),
            None => c.powf(exponent),
        };
        sum += DVec2::new(r.distance, r.distance * r.distance) * w;
        total += w;
    }
    (total > 0.0).then(|| sum / total)
}

/// `x^(1/gamma)` per channel; negative input is clamped to zero. The flag
/// reports whether clamping happened.
pub fn encode_perceptual(linear: Rgb, gamma: f64) -> (Rgb, bool) {
    let clamped = linear.cmplt(Rgb::ZERO).any();
    let x = linear.max(Rgb::ZERO);
    let inv = 1.0 / gamma;
    (
        Rgb::new(x.x.powf(inv), x.y.powf(inv), x.z.powf(inv)),
        clamped,
    )
}

/// `α·old + (1−α)·new`.
#[inline]
pub fn blend_texel<T>(old: T, new: T, alpha: f64) -> T
where
    T: std::ops::Mul<f64, Output = T> + std::ops::Add<Output = T>,
{
    old * alpha + new * (1.0 - alpha)
}

/// Lowers irradiance hysteresis for texels whose value changed sharply.
pub fn adapt_hysteresis_texel(change: f64, alpha: f64) -> f64 {
    if change > NEW_DISTRIBUTION_THRESHOLD {
        0.0
    } else if change > SIGNIFICANT_CHANGE_THRESHOLD {
        (alpha - SIGNIFICANT_CHANGE_STEP).max(0.0)
    } else {
        alpha
    }
}

/// Scene events that temporarily lower hysteresis on every probe.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeuristicEvent {
    /// e.g. a flashlight switching on.
    SmallLight,
    /// e.g. the sun moving or a room light switching.
    LargeLight,
    /// e.g. a door opening or a wall collapsing.
    LargeObject,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Channel {
    Irradiance,
    Visibility,
}

impl HeuristicEvent {
    fn effects(self) -> &'static [(Channel, f64, u32)] {
        match self {
            HeuristicEvent::SmallLight => &[(Channel::Irradiance, 0.85, 4)],
            HeuristicEvent::LargeLight => &[(Channel::Irradiance, 0.5, 10)],
            HeuristicEvent::LargeObject => &[
                (Channel::Irradiance, 0.5, 10),
                (Channel::Visibility, 0.5, 7),
            ],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Override {
    channel: Channel,
    scale: f64,
    remaining: u32,
}

/// Active hysteresis reductions. Overlapping reductions take the smallest
/// resulting hysteresis.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct HysteresisSchedule {
    overrides: Vec<Override>,
}

impl HysteresisSchedule {
    pub fn apply(&mut self, event: HeuristicEvent) {
        for &(channel, scale, frames) in event.effects() {
            self.overrides.push(Override {
                channel,
                scale,
                remaining: frames,
            });
        }
    }

    fn alpha(&self, channel: Channel, base: f64) -> f64 {
        self.overrides
            .iter()
            .filter(|o| o.channel == channel)
            .map(|o| base * o.scale)
            .fold(base, f64::min)
    }

    pub fn irradiance_alpha(&self, base: f64) -> f64 {
        self.alpha(Channel::Irradiance, base)
    }

    pub fn visibility_alpha(&self, base: f64) -> f64 {
        self.alpha(Channel::Visibility, base)
    }

    /// Ends the current frame.
    pub fn advance(&mut self) {
        for o in &mut self.overrides {
            o.remaining -= 1;
        }
        self.overrides.retain(|o| o.remaining > 0);
    }

    pub fn is_empty(&self) -> bool {
        self.overrides.is_empty()
    }
}

/// Counters from blending probe texels.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct BlendStats {
    pub texels_blended: u64,
    /// Irradiance texels whose change exceeded the significant threshold
    /// (and not the new-distribution threshold).
    pub significant_changes: u64,
    pub new_distributions: u64,
    /// Visibility texels whose second moment fell below the squared mean.
    pub variance_clamps: u64,
    /// Irradiance estimates with negative components.
    pub negative_clamps: u64,
}

impl std::ops::AddAssign for BlendStats {
    fn add_assign(&mut self, o: Self) {
        self.texels_blended += o.texels_blended;
        self.significant_changes += o.significant_changes;
        self.new_distributions += o.new_distributions;
        self.variance_clamps += o.variance_clamps;
        self.negative_clamps += o.negative_clamps;
    }
}

/// Hysteresis and encoding settings for one probe's blend.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlendSettings {
    pub irradiance_alpha: f64,
    pub visibility_alpha: f64,
    pub gamma: f64,
    pub visibility_exponent: f64,
    /// Per-texel thresholds on irradiance.
    pub adaptive: bool,
}

fn texel_table(res: usize) -> &'static [UnitVec3] {
    static IRR: OnceLock<Vec<UnitVec3>> = OnceLock::new();
    static VIS: OnceLock<Vec<UnitVec3>> = OnceLock::new();
    let make = move || {
        let mut v = Vec::with_capacity(res * res);
        for ty in 0..res {
            for tx in 0..res {
                v.push(texel_direction(tx, ty, res).expect("interior texel"));
            }
        }
        v
    };
    match res {
        IRRADIANCE_RES => IRR.get_or_init(make),
        VISIBILITY_RES => VIS.get_or_init(make),
        _ => unreachable!("unsupported tile resolution {res}"),
    }
}

/// Blends one probe's new estimates into its tiles and refreshes borders.
pub fn blend_probe(
    irradiance: &mut [[f32; 3]],
    visibility: &mut [[f32; 2]],
    rays: &UpdateRaySet,
    settings: &BlendSettings,
) -> BlendStats {
    let mut stats = BlendStats::default();
    let side = IRRADIANCE_RES + 2;
    for (i, dir) in texel_table(IRRADIANCE_RES).iter().enumerate() {
        let Some(estimate) = accumulate_irradiance(rays, *dir) else {
            continue;
        };
        let (encoded, clamped) = encode_perceptual(estimate, settings.gamma);
        stats.negative_clamps += clamped as u64;
        let slot = &mut irradiance[(i / IRRADIANCE_RES + 1) * side + i % IRRADIANCE_RES + 1];
        let old = Rgb::new(slot[0] as f64, slot[1] as f64, slot[2] as f64);
        let mut alpha = settings.irradiance_alpha;
        if settings.adaptive {
            let change = (encoded - old).abs().max_element();
            if change > NEW_DISTRIBUTION_THRESHOLD {
                stats.new_distributions += 1;
            } else if change > SIGNIFICANT_CHANGE_THRESHOLD {
                stats.significant_changes += 1;
            }
            alpha = adapt_hysteresis_texel(change, alpha);
        }
        let v = blend_texel(old, encoded, alpha);
        *slot = [v.x as f32, v.y as f32, v.z as f32];
        stats.texels_blended += 1;
    }
    write_borders(irradiance, IRRADIANCE_RES);

    let side = VISIBILITY_RES + 2;
    for (i, dir) in texel_table(VISIBILITY_RES).iter().enumerate() {
        let Some(estimate) = accumulate_visibility(rays, *dir, settings.visibility_exponent) else {
            continue;
        };
        let slot = &mut visibility[(i / VISIBILITY_RES + 1) * side + i % VISIBILITY_RES + 1];
        let old = DVec2::new(slot[0] as f64, slot[1] as f64);
        let v = blend_texel(old, estimate, settings.visibility_alpha);
        let mean = v.x as f32;
        let mut mean_sq = v.y as f32;
        if mean_sq < mean * mean {
            if (mean * mean - mean_sq) as f64 > 1e-4 {
                stats.variance_clamps += 1;
            }
            mean_sq = mean * mean;
        }
        *slot = [mean, mean_sq];
        stats.texels_blended += 1;
    }
    write_borders(visibility, VISIBILITY_RES);
    stats
}
