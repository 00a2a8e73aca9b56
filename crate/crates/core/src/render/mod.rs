//! Frame orchestration: probe lifecycle, probe updates and deferred
//! shading with inline probe queries.

mod camera;
mod image;
mod pathtrace;
mod shade;

pub use camera::Camera;
pub use image::FrameImage;
pub use pathtrace::{
    path_radiance, reference_indirect, reference_path_trace, sample_cosine, sample_glossy,
    OracleEstimate,
};
pub use shade::{
    deferred_shade, gbuffer_pixel, glossy_hit_radiance, glossy_lobe, glossy_trace, GBufferPixel,
    ShadeOptions, Shaded,
};

use glam::DVec3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::VolumeError;
use crate::math::{mix_seed, random_rotation, Aabb, Ray, Rgb};
use crate::query::VolumeBlendSet;
use crate::scene::{extended_aabb, Scene};
use crate::states::{
    converge_new_probes, initialize_probes, update_eligibility, wake_probes, InitMode, InitOptions,
};
use crate::update::{
    blend_probe, probe_ray_directions, shade_update_ray, BlendSettings, BlendStats, HeuristicEvent,
    UpdateRaySet,
};
use crate::volume::{ProbeVolume, VolumeParams};

/// Independently switchable parts of the technique.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Features {
    /// Probe-based diffuse indirect light at all.
    pub probes: bool,
    /// Sleeping probes skip updates; off means every live probe is vigilant.
    pub sleeping: bool,
    pub optimizer: bool,
    /// Event-driven and per-texel hysteresis reduction.
    pub heuristics: bool,
    pub glossy: bool,
    pub second_order_glossy: bool,
    pub camera_aware_blending: bool,
    /// Ray-free classification of probes far from static bounds.
    pub static_fast_path: bool,
}

impl Default for Features {
    fn default() -> Self {
        Self {
            probes: true,
            sleeping: true,
            optimizer: true,
            heuristics: true,
            glossy: true,
            second_order_glossy: true,
            camera_aware_blending: true,
            static_fast_path: true,
        }
    }
}

impl Features {
    pub const NAMES: [&'static str; 8] = [
        "probes",
        "sleeping",
        "optimizer",
        "heuristics",
        "glossy",
        "second_order_glossy",
        "camera_aware_blending",
        "static_fast_path",
    ];

    /// Turns a feature off by name; returns false for unknown names.
    pub fn disable(&mut self, name: &str) -> bool {
        let flag = match name {
            "probes" => &mut self.probes,
            "sleeping" => &mut self.sleeping,
            "optimizer" => &mut self.optimizer,
            "heuristics" => &mut self.heuristics,
            "glossy" => &mut self.glossy,
            "second_order_glossy" => &mut self.second_order_glossy,
            "camera_aware_blending" => &mut self.camera_aware_blending,
            "static_fast_path" => &mut self.static_fast_path,
            _ => return false,
        };
        *flag = false;
        true
    }
}

/// System-wide settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GiSettings {
    pub features: Features,
    pub init_mode: InitMode,
    /// Rays per probe for burst convergence.
    pub burst_rays: u32,
    pub seed: u64,
}

impl Default for GiSettings {
    fn default() -> Self {
        Self {
            features: Features::default(),
            init_mode: InitMode::Burst,
            burst_rays: 1024,
            seed: 0,
        }
    }
}

/// Counters for one [`GiSystem::step`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FrameStats {
    pub frame: u64,
    /// Update rays, burst rays included.
    pub rays_traced: u64,
    /// Rays spent placing and classifying probes.
    pub init_rays: u64,
    /// Probes per state over all volumes, in `ProbeState::ALL` order.
    pub census: [usize; 6],
    pub probes_updated: u64,
    pub burst_probes: u64,
    pub respawned: u64,
    pub woke: u64,
    pub slept: u64,
    pub blend: BlendStats,
    /// Irradiance and visibility hysteresis of the first volume this frame.
    pub irradiance_alpha: f64,
    pub visibility_alpha: f64,
}

/// Counters from rendering one image.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RenderStats {
    /// Pixels whose probe query was renormalized or failed.
    pub flagged_pixels: u64,
    pub sky_pixels: u64,
}

/// Scene plus probe volumes, advanced one frame at a time.
#[derive(Clone, Debug)]
pub struct GiSystem {
    scene: Scene,
    volumes: Vec<ProbeVolume>,
    pub settings: GiSettings,
    frame: u64,
    camera: DVec3,
}

struct Job {
    volume: usize,
    slot: usize,
    rays: usize,
}

impl GiSystem {
    pub fn new(
        mut scene: Scene,
        volumes: &[VolumeParams],
        settings: GiSettings,
    ) -> Result<Self, VolumeError> {
        scene.commit();
        let volumes = volumes
            .iter()
            .enumerate()
            .map(|(i, p)| ProbeVolume::new(i as u32, p.clone()))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            scene,
            volumes,
            settings,
            frame: 0,
            camera: DVec3::ZERO,
        })
    }

    pub fn scene(&self) -> &Scene {
        &self.scene
    }

    /// Mutable scene access; edits are committed at the next step.
    pub fn scene_mut(&mut self) -> &mut Scene {
        &mut self.scene
    }

    pub fn volumes(&self) -> &[ProbeVolume] {
        &self.volumes
    }

    pub fn volumes_mut(&mut self) -> &mut [ProbeVolume] {
        &mut self.volumes
    }

    pub fn frame(&self) -> u64 {
        self.frame
    }

    pub fn camera(&self) -> DVec3 {
        self.camera
    }

    /// Sets the camera position used for window tracking and blending.
    pub fn set_camera(&mut self, camera: DVec3) {
        self.camera = camera;
    }

    /// Query view of the volumes, or `None` with probes disabled.
    pub fn blend_set(&self) -> Option<VolumeBlendSet<'_>> {
        (self.settings.features.probes && !self.volumes.is_empty()).then(|| {
            VolumeBlendSet::new(
                &self.volumes,
                self.camera,
                self.settings.features.camera_aware_blending,
            )
        })
    }

    /// Advances one frame: window tracking, initialization, waking, events,
    /// probe updates and convergence of new probes.
    pub fn step(&mut self, camera: DVec3, events: &[HeuristicEvent]) -> FrameStats {
        self.scene.commit();
        self.camera = camera;
        let features = self.settings.features;
        let mut stats = FrameStats {
            frame: self.frame,
            ..Default::default()
        };
        if !features.probes {
            self.frame += 1;
            return stats;
        }

        let init = InitOptions {
            optimizer: features.optimizer,
            sleeping: features.sleeping,
            static_fast_path: features.static_fast_path,
        };
        for v in &mut self.volumes {
            stats.respawned += v.update_tracking_window(camera).len() as u64;
            let report = initialize_probes(v, &self.scene, &init);
            stats.init_rays += report.rays_traced;

            let bias_len = 0.75 * v.min_spacing() * v.params().self_shadow_bias;
            let bounds: Vec<Aabb> = self
                .scene
                .dynamic_objects()
                .iter()
                .map(|o| extended_aabb(o, v.spacing(), bias_len))
                .collect();
            let wake = wake_probes(v, &bounds);
            stats.woke += wake.woke;
            stats.slept += wake.slept;

            if features.heuristics {
                for &e in events {
                    v.schedule.apply(e);
                }
            }
            if self.settings.init_mode == InitMode::Gradual {
                converge_new_probes(v, InitMode::Gradual);
            }
        }

        let jobs: Vec<Job> = self
            .volumes
            .iter()
            .enumerate()
            .flat_map(|(vi, v)| {
                let burst = self.settings.init_mode == InitMode::Burst;
                let normal = v.params().rays_per_probe as usize;
                let burst_rays = self.settings.burst_rays as usize;
                update_eligibility(v).into_iter().map(move |slot| Job {
                    volume: vi,
                    slot,
                    rays: if burst && v.probes()[slot].state.is_new() {
                        burst_rays
                    } else {
                        normal
                    },
                })
            })
            .collect();
        let sets = self.gather(&jobs);
        for (job, set) in jobs.iter().zip(&sets) {
            stats.rays_traced += set.directions.len() as u64;
            stats.probes_updated += 1;
            stats.burst_probes +=
                (job.rays != self.volumes[job.volume].params().rays_per_probe as usize) as u64;
        }

        let mut per_volume: Vec<Vec<Option<&UpdateRaySet>>> = self
            .volumes
            .iter()
            .map(|v| vec![None; v.probe_count()])
            .collect();
        for (job, set) in jobs.iter().zip(&sets) {
            per_volume[job.volume][job.slot] = Some(set);
        }
        for (vi, (v, sets)) in self.volumes.iter_mut().zip(per_volume).enumerate() {
            let p = v.params().clone();
            let (irr_alpha, vis_alpha) = if features.heuristics {
                (
                    v.schedule.irradiance_alpha(p.irradiance_hysteresis),
                    v.schedule.visibility_alpha(p.visibility_hysteresis),
                )
            } else {
                (p.irradiance_hysteresis, p.visibility_hysteresis)
            };
            if vi == 0 {
                stats.irradiance_alpha = irr_alpha;
                stats.visibility_alpha = vis_alpha;
            }
            let (probes, irr, vis) = v.parts_mut();
            let work: Vec<_> = irr
                .tiles_mut()
                .zip(vis.tiles_mut())
                .zip(probes.iter_mut())
                .zip(sets)
                .filter_map(|(((i, vv), probe), set)| set.map(|s| (i, vv, probe, s)))
                .collect();
            let blend = work
                .into_par_iter()
                .map(|(irr_tile, vis_tile, probe, set)| {
                    let fresh = std::mem::replace(&mut probe.fresh, false);
                    let settings = BlendSettings {
                        irradiance_alpha: if fresh { 0.0 } else { irr_alpha },
                        visibility_alpha: if fresh { 0.0 } else { vis_alpha },
                        gamma: p.irradiance_gamma,
                        visibility_exponent: p.visibility_exponent,
                        adaptive: features.heuristics,
                    };
                    blend_probe(irr_tile, vis_tile, set, &settings)
                })
                .reduce(BlendStats::default, |mut a, b| {
                    a += b;
                    a
                });
            stats.blend += blend;
        }

        for v in &mut self.volumes {
            if self.settings.init_mode == InitMode::Burst {
                converge_new_probes(v, InitMode::Burst);
            }
            v.schedule.advance();
            for (i, c) in v.state_census().iter().enumerate() {
                stats.census[i] += c;
            }
        }
        self.frame += 1;
        stats
    }

    /// Traces and shades every job's rays against the current atlases.
    fn gather(&self, jobs: &[Job]) -> Vec<UpdateRaySet> {
        let set = self.blend_set();
        let scene = &self.scene;
        let rotations: Vec<_> = self
            .volumes
            .iter()
            .map(|v| random_rotation(mix_seed(self.settings.seed, &[self.frame, v.id as u64])))
            .collect();
        jobs.par_iter()
            .map(|job| {
                let v = &self.volumes[job.volume];
                let origin = v.slot_world_position(job.slot);
                let clamp = v.distance_clamp();
                let directions = probe_ray_directions(job.rays, &rotations[job.volume]);
                let results = directions
                    .iter()
                    .map(|&d| {
                        let ray = Ray::new(origin, d);
                        let hit = scene.ray_cast(&ray, f64::INFINITY);
                        shade_update_ray(hit.as_ref(), &ray, scene, set.as_ref(), clamp)
                    })
                    .collect();
                UpdateRaySet {
                    probe: v.logical_from_slot(job.slot),
                    directions,
                    results,
                }
            })
            .collect()
    }

    /// Renders the current state through `camera`.
    pub fn render(
        &self,
        camera: &Camera,
        width: usize,
        height: usize,
    ) -> (FrameImage, RenderStats) {
        let set = self.blend_set();
        let f = self.settings.features;
        let opts = ShadeOptions {
            glossy: f.glossy,
            second_order_glossy: f.second_order_glossy,
        };
        let shaded: Vec<(Rgb, bool, bool)> = (0..width * height)
            .into_par_iter()
            .map(|i| {
                let ray = camera.pixel_ray(i % width, i / width, width, height);
                match gbuffer_pixel(&self.scene, &ray) {
                    Some(px) => {
                        let s = deferred_shade(&px, &self.scene, set.as_ref(), opts);
                        (s.color, s.flagged, false)
                    }
                    None => (self.scene.environment, false, true),
                }
            })
            .collect();
        let mut stats = RenderStats::default();
        for (_, flagged, sky) in &shaded {
            stats.flagged_pixels += *flagged as u64;
            stats.sky_pixels += *sky as u64;
        }
        let img = FrameImage::from_rgb(width, height, shaded.into_iter().map(|s| s.0));
        (img, stats)
    }

    /// Probe-sampled indirect term at a surface point (what deferred
    /// shading multiplies by albedo).
    pub fn indirect_at(
        &self,
        position: DVec3,
        normal: crate::math::UnitVec3,
        view: crate::math::UnitVec3,
    ) -> Option<Rgb> {
        let set = self.blend_set()?;
        let s = set.sample(&crate::query::QueryPoint {
            position,
            normal,
            view,
        });
        (s.accumulated > 0.0).then_some(s.irradiance)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::UnitVec3;
    use crate::scene::{Material, Mesh};
    use crate::volume::ProbeState;

    fn furnace_scene() -> Scene {
        let mut s = Scene::new();
        let m = s.add_material(Material::emitter(Rgb::ONE)).unwrap();
        s.add_static(&Mesh::cuboid(DVec3::ZERO, DVec3::splat(4.0), true), m)
            .unwrap();
        s
    }

    fn furnace_volume() -> VolumeParams {
        VolumeParams {
            counts: [4, 4, 4],
            origin: [0.5; 3],
            rays_per_probe: 64,
            ..Default::default()
        }
    }

    #[test]
    fn burst_converges_in_one_frame() {
        let mut sys =
            GiSystem::new(furnace_scene(), &[furnace_volume()], GiSettings::default()).unwrap();
        let stats = sys.step(DVec3::splat(2.0), &[]);
        // The 2x2x2 core is at least one spacing from every wall and sleeps.
        assert_eq!(stats.burst_probes, 56);
        assert_eq!(stats.census[ProbeState::Sleeping.id() as usize], 8);
        assert!(stats.init_rays > 0);
        let v = &sys.volumes()[0];
        for slot in 0..v.probe_count() {
            if v.probes()[slot].state == ProbeState::Sleeping {
                continue;
            }
            assert_eq!(v.probes()[slot].state, ProbeState::Vigilant);
            for t in v.irradiance.tile(slot) {
                assert!((t[0] - 1.0).abs() < 1e-6);
            }
        }
        let e = sys
            .indirect_at(DVec3::splat(1.2), UnitVec3::Y, UnitVec3::Y)
            .unwrap();
        assert!((e - Rgb::ONE).abs().max_element() < 1e-5);
    }

    #[test]
    fn disabled_probes_give_direct_only() {
        let mut settings = GiSettings::default();
        settings.features.probes = false;
        let mut sys = GiSystem::new(furnace_scene(), &[furnace_volume()], settings).unwrap();
        let stats = sys.step(DVec3::splat(2.0), &[]);
        assert_eq!(stats.rays_traced, 0);
        let cam = Camera::new(DVec3::splat(2.0), DVec3::new(2.0, 2.0, 0.0));
        let (img, _) = sys.render(&cam, 4, 4);
        assert!(img.pixels.iter().all(|p| *p == [1.0; 3]));
    }

    #[test]
    fn deterministic_steps() {
        let run = || {
            let mut sys =
                GiSystem::new(furnace_scene(), &[furnace_volume()], GiSettings::default()).unwrap();
            for _ in 0..3 {
                sys.step(DVec3::splat(2.0), &[HeuristicEvent::SmallLight]);
            }
            sys.volumes()[0].irradiance.clone()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn feature_names() {
        let mut f = Features::default();
        for name in Features::NAMES {
            assert!(f.disable(name));
        }
        assert!(!f.disable("nope"));
        assert!(!f.probes && !f.static_fast_path);
    }
}
