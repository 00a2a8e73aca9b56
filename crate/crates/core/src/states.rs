//! Probe lifecycle: classification, waking and sleeping around dynamic
//! objects, and promotion of newly woken probes.

use glam::DVec3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::math::Aabb;
use crate::optimizer::{optimize_probe, ProbeRayStats};
use crate::scene::Scene;
use crate::volume::{ProbeState, ProbeVolume};

/// How freshly woken probes reach a converged state.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    /// One high-ray-count trace with hysteresis 0 in the frame they wake.
    #[default]
    Burst,
    /// Normal updates, starting with a hysteresis-0 blend.
    Gradual,
}

/// Inputs that drive state transitions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StateEvent {
    /// The probe lies inside a dynamic object's extended bounds.
    InsideDynamicBounds,
    /// The probe lies outside every dynamic object's extended bounds.
    OutsideDynamicBounds,
    /// A new probe finished its convergence step.
    Converged,
}

/// The state graph. Events without an edge leave the state unchanged.
pub fn transition(state: ProbeState, event: StateEvent) -> ProbeState {
    use ProbeState::*;
    use StateEvent::*;
    match (state, event) {
        (Sleeping, InsideDynamicBounds) => NewlyAwake,
        (Awake, OutsideDynamicBounds) => Sleeping,
        (NewlyAwake, Converged) => Awake,
        (NewlyVigilant, Converged) => Vigilant,
        (s, _) => s,
    }
}

/// Initial state from static-geometry ray stats.
pub fn classify_probe(stats: &ProbeRayStats, stuck: bool, spacing: DVec3) -> ProbeState {
    if stuck {
        ProbeState::Off
    } else if stats.closest_frontface_distance() < spacing.max_element() {
        ProbeState::NewlyVigilant
    } else {
        ProbeState::Sleeping
    }
}

/// Ray-free classification for probes far from every static mesh bound:
/// `Some(Sleeping)` when no static bound is within `max_spacing`.
pub fn preclassify_static(
    position: DVec3,
    static_bounds: &[Aabb],
    max_spacing: f64,
) -> Option<ProbeState> {
    static_bounds
        .iter()
        .all(|b| b.distance_to(position) >= max_spacing)
        .then_some(ProbeState::Sleeping)
}

/// Settings for [`initialize_probes`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InitOptions {
    pub optimizer: bool,
    pub sleeping: bool,
    pub static_fast_path: bool,
}

/// What initialization did.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct InitReport {
    pub probes: u64,
    pub rays_traced: u64,
    pub stuck: u64,
    pub fast_path: u64,
}

/// Places and classifies every uninitialized probe. With sleeping
/// disabled, probes that would sleep become vigilant instead; Off is kept.
pub fn initialize_probes(
    volume: &mut ProbeVolume,
    scene: &Scene,
    opts: &InitOptions,
) -> InitReport {
    let pending: Vec<usize> = (0..volume.probe_count())
        .filter(|&s| !volume.probes()[s].initialized)
        .collect();
    if pending.is_empty() {
        return InitReport::default();
    }
    let spacing = volume.spacing();
    let limit = volume.params().offset_limit;
    let rays = volume.params().rays_per_probe as usize;
    let vol = &*volume;
    let results: Vec<_> = pending
        .par_iter()
        .map(|&slot| {
            let grid = vol.grid_position(vol.logical_from_slot(slot));
            if opts.static_fast_path {
                if let Some(state) =
                    preclassify_static(grid, scene.static_bounds(), spacing.max_element())
                {
                    return (slot, DVec3::ZERO, false, state, 0, true);
                }
            }
            let r = optimize_probe(scene, grid, spacing, limit, rays, opts.optimizer);
            let state = classify_probe(&r.stats, r.stuck, spacing);
            (slot, r.offset, r.stuck, state, r.rays_traced, false)
        })
        .collect();

    let mut report = InitReport::default();
    for (slot, offset, stuck, state, traced, fast) in results {
        let state = if !opts.sleeping && state == ProbeState::Sleeping {
            ProbeState::NewlyVigilant
        } else {
            state
        };
        let p = &mut volume.probes_mut()[slot];
        p.offset = offset;
        p.stuck = stuck;
        p.state = state;
        p.initialized = true;
        p.fresh = true;
        report.probes += 1;
        report.rays_traced += traced;
        report.stuck += stuck as u64;
        report.fast_path += fast as u64;
    }
    report
}

/// Wake/sleep counts from one [`wake_probes`] pass.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct WakeReport {
    pub woke: u64,
    pub slept: u64,
}

/// Sleeping probes inside any extended dynamic bound wake; awake probes
/// outside all of them go back to sleep.
pub fn wake_probes(volume: &mut ProbeVolume, extended_bounds: &[Aabb]) -> WakeReport {
    let mut report = WakeReport::default();
    for slot in 0..volume.probe_count() {
        let p = volume.probes()[slot];
        if !p.initialized || !matches!(p.state, ProbeState::Sleeping | ProbeState::Awake) {
            continue;
        }
        let pos = volume.slot_world_position(slot);
        let event = if extended_bounds.iter().any(|b| b.contains(pos)) {
            StateEvent::InsideDynamicBounds
        } else {
            StateEvent::OutsideDynamicBounds
        };
        let next = transition(p.state, event);
        let probe = &mut volume.probes_mut()[slot];
        match (p.state, next) {
            (ProbeState::Sleeping, ProbeState::NewlyAwake) => {
                report.woke += 1;
                probe.fresh = true;
            }
            (ProbeState::Awake, ProbeState::Sleeping) => report.slept += 1,
            _ => {}
        }
        probe.state = next;
    }
    report
}

/// Promotes every Newly* probe. In gradual mode the promoted probes keep
/// their `fresh` flag so the next blend overwrites their texels.
pub fn converge_new_probes(volume: &mut ProbeVolume, mode: InitMode) -> u64 {
    let mut n = 0;
    for p in volume.probes_mut() {
        if p.state.is_new() {
            p.state = transition(p.state, StateEvent::Converged);
            if mode == InitMode::Gradual {
                p.fresh = true;
            }
            n += 1;
        }
    }
    n
}

/// Storage slots that trace this frame.
pub fn update_eligibility(volume: &ProbeVolume) -> Vec<usize> {
    (0..volume.probe_count())
        .filter(|&s| {
            let p = &volume.probes()[s];
            p.initialized && p.state.traces()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::{Rgb, UnitVec3};
    use crate::optimizer::ProbeRayStats;
    use crate::scene::{Material, Mesh};
    use crate::volume::VolumeParams;
    use ProbeState::*;

    #[test]
    fn transition_table() {
        use StateEvent::*;
        let expected = |s: ProbeState, e: StateEvent| match (s, e) {
            (Sleeping, InsideDynamicBounds) => NewlyAwake,
            (Awake, OutsideDynamicBounds) => Sleeping,
            (NewlyAwake, Converged) => Awake,
            (NewlyVigilant, Converged) => Vigilant,
            _ => s,
        };
        let edges = [
            (Sleeping, NewlyAwake),
            (NewlyAwake, Awake),
            (Awake, Sleeping),
            (NewlyVigilant, Vigilant),
        ];
        for s in ProbeState::ALL {
            for e in [InsideDynamicBounds, OutsideDynamicBounds, Converged] {
                let t = transition(s, e);
                assert_eq!(t, expected(s, e), "{s:?} on {e:?}");
                assert!(
                    t == s || edges.contains(&(s, t)),
                    "illegal edge {s:?} -> {t:?}"
                );
            }
        }
        // Off and Vigilant are fixed points.
        for e in [InsideDynamicBounds, OutsideDynamicBounds, Converged] {
            assert_eq!(transition(Off, e), Off);
            assert_eq!(transition(Vigilant, e), Vigilant);
        }
    }

    #[test]
    fn classification() {
        let floor =
            ProbeRayStats::from_hits([(UnitVec3::NEG_Y, Some((0.5, true))), (UnitVec3::Y, None)]);
        assert_eq!(classify_probe(&floor, false, DVec3::ONE), NewlyVigilant);
        assert_eq!(classify_probe(&floor, true, DVec3::ONE), Off);
        let sky =
            ProbeRayStats::from_hits([(UnitVec3::NEG_Y, Some((3.0, true))), (UnitVec3::Y, None)]);
        assert_eq!(classify_probe(&sky, false, DVec3::ONE), Sleeping);
    }

    fn volume_with(states: &[ProbeState]) -> ProbeVolume {
        let mut v = ProbeVolume::new(
            0,
            VolumeParams {
                counts: [states.len() as u32, 2, 2],
                ..Default::default()
            },
        )
        .unwrap();
        for (slot, p) in v.probes_mut().iter_mut().enumerate() {
            p.state = states[slot % states.len()];
            p.initialized = true;
            p.fresh = false;
        }
        v
    }

    #[test]
    fn wake_and_sleep() {
        let mut v = volume_with(&[Sleeping, Awake, Vigilant, Off]);
        let everywhere = Aabb::new(DVec3::splat(-10.0), DVec3::splat(10.0));
        let r = wake_probes(&mut v, &[everywhere]);
        assert_eq!(r, WakeReport { woke: 4, slept: 0 });
        let census = v.state_census();
        assert_eq!(census[NewlyAwake.id() as usize], 4);
        assert_eq!(census[Vigilant.id() as usize], 4);
        assert_eq!(census[Off.id() as usize], 4);
        assert!(v
            .probes()
            .iter()
            .filter(|p| p.state == NewlyAwake)
            .all(|p| p.fresh));

        converge_new_probes(&mut v, InitMode::Burst);
        assert_eq!(v.state_census()[Awake.id() as usize], 8);
        let r = wake_probes(&mut v, &[]);
        assert_eq!(r, WakeReport { woke: 0, slept: 8 });
        assert_eq!(v.state_census()[Vigilant.id() as usize], 4);
    }

    #[test]
    fn eligibility_and_noop_converge() {
        let v = volume_with(&[Off, Sleeping, NewlyAwake, NewlyVigilant, Awake, Vigilant]);
        let eligible = update_eligibility(&v);
        assert_eq!(eligible.len(), 4 * 4);
        assert!(eligible.iter().all(|&s| v.probes()[s].state.traces()));
        let mut w = volume_with(&[Off, Sleeping, Vigilant]);
        assert_eq!(converge_new_probes(&mut w, InitMode::Gradual), 0);
    }

    fn street_like() -> Scene {
        let mut s = Scene::new();
        let m = s.add_material(Material::diffuse(Rgb::splat(0.5))).unwrap();
        s.add_static(
            &Mesh::quad(
                DVec3::new(-1.0, 0.5, 9.0),
                DVec3::X * 10.0,
                DVec3::Z * -10.0,
            ),
            m,
        )
        .unwrap();
        s.add_static(
            &Mesh::cuboid(DVec3::new(2.5, 0.5, 2.5), DVec3::new(4.5, 1.5, 4.5), false),
            m,
        )
        .unwrap();
        s.commit();
        s
    }

    #[test]
    fn initialization_classifies_and_fast_path_agrees() {
        let scene = street_like();
        let params = VolumeParams {
            counts: [8, 5, 8],
            rays_per_probe: 128,
            ..Default::default()
        };
        let run = |fast: bool| {
            let mut v = ProbeVolume::new(0, params.clone()).unwrap();
            let opts = InitOptions {
                optimizer: true,
                sleeping: true,
                static_fast_path: fast,
            };
            let report = initialize_probes(&mut v, &scene, &opts);
            (v, report)
        };
        let (slow, slow_report) = run(false);
        let (fast, fast_report) = run(true);
        assert!(fast_report.fast_path > 0);
        assert!(fast_report.rays_traced < slow_report.rays_traced);
        for slot in 0..slow.probe_count() {
            assert_eq!(
                slow.probes()[slot].state,
                fast.probes()[slot].state,
                "slot {slot}"
            );
        }
        // Top two planes see nothing within a spacing.
        for l in slow.logical_indices().filter(|l| l.y >= 3) {
            assert_eq!(slow.probe(l).unwrap().state, Sleeping);
        }
        // The plane under the ground sees mostly backfaces.
        for l in slow.logical_indices().filter(|l| l.y == 0) {
            assert_eq!(slow.probe(l).unwrap().state, Off);
        }
        assert!(slow.probes().iter().all(|p| p.initialized));

        let mut all_vigilant = ProbeVolume::new(0, params).unwrap();
        initialize_probes(
            &mut all_vigilant,
            &scene,
            &InitOptions {
                optimizer: true,
                sleeping: false,
                static_fast_path: false,
            },
        );
        assert_eq!(all_vigilant.state_census()[Sleeping.id() as usize], 0);
        assert_eq!(
            all_vigilant.state_census()[Off.id() as usize],
            slow.state_census()[Off.id() as usize]
        );
    }

    #[test]
    fn probe_near_floor_and_in_sky() {
        let scene = street_like();
        let r = optimize_probe(
            &scene,
            DVec3::new(0.0, 1.0, 0.0),
            DVec3::ONE,
            0.45,
            128,
            false,
        );
        assert_eq!(classify_probe(&r.stats, r.stuck, DVec3::ONE), NewlyVigilant);
        let r = optimize_probe(
            &scene,
            DVec3::new(0.0, 4.0, 0.0),
            DVec3::ONE,
            0.45,
            128,
            false,
        );
        assert_eq!(classify_probe(&r.stats, r.stuck, DVec3::ONE), Sleeping);
    }
}
