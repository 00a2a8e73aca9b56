//! Probe grids: parameters, per-probe state, texel atlases and the
//! camera-tracking circular buffer.

mod atlas;

pub use atlas::{
    border_source, sample_tile, write_borders, OctAtlas, IRRADIANCE_RES, VISIBILITY_RES,
};

use glam::{DVec3, UVec3};
use serde::{Deserialize, Serialize};

use crate::error::VolumeError;
use crate::math::Aabb;
use crate::update::HysteresisSchedule;

/// Probe lifecycle state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeState {
    Off,
    Sleeping,
    NewlyAwake,
    NewlyVigilant,
    Awake,
    Vigilant,
}

impl ProbeState {
    pub const ALL: [ProbeState; 6] = [
        ProbeState::Off,
        ProbeState::Sleeping,
        ProbeState::NewlyAwake,
        ProbeState::NewlyVigilant,
        ProbeState::Awake,
        ProbeState::Vigilant,
    ];

    /// Small integer id used in dumps.
    pub fn id(self) -> u8 {
        self as u8
    }

    /// Whether the probe traces and updates this frame.
    pub fn traces(self) -> bool {
        !matches!(self, ProbeState::Off | ProbeState::Sleeping)
    }

    /// Whether queries may read the probe's texels.
    pub fn is_sampled(self) -> bool {
        matches!(self, ProbeState::Awake | ProbeState::Vigilant)
    }

    pub fn is_new(self) -> bool {
        matches!(self, ProbeState::NewlyAwake | ProbeState::NewlyVigilant)
    }
}

/// Configuration of one probe volume.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VolumeParams {
    pub counts: [u32; 3],
    pub spacing: [f64; 3],
    /// World position of logical probe (0,0,0) before any window shift.
    pub origin: [f64; 3],
    /// Follow the camera with a circular-buffer window.
    pub tracking: bool,
    pub rays_per_probe: u32,
    pub irradiance_hysteresis: f64,
    pub visibility_hysteresis: f64,
    /// Self-shadow bias scale (0 disables the bias).
    pub self_shadow_bias: f64,
    /// Perceptual encoding exponent for irradiance texels.
    pub irradiance_gamma: f64,
    /// Power-cosine exponent for visibility texels.
    pub visibility_exponent: f64,
    /// Maximum per-axis probe offset as a fraction of spacing.
    pub offset_limit: f64,
}

impl Default for VolumeParams {
    fn default() -> Self {
        Self {
            counts: [4, 4, 4],
            spacing: [1.0; 3],
            origin: [0.0; 3],
            tracking: false,
            rays_per_probe: 256,
            irradiance_hysteresis: 0.97,
            visibility_hysteresis: 0.98,
            self_shadow_bias: 0.3,
            irradiance_gamma: 5.0,
            visibility_exponent: 50.0,
            offset_limit: 0.45,
        }
    }
}

impl VolumeParams {
    pub fn validate(&self) -> Result<(), VolumeError> {
        if self.counts.iter().any(|&c| c < 2) {
            return Err(VolumeError::Counts(self.counts));
        }
        if self.spacing.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(VolumeError::Spacing(self.spacing));
        }
        let check = |name, range, value: f64, ok: bool| {
            if ok && value.is_finite() {
                Ok(())
            } else {
                Err(VolumeError::Parameter { name, range, value })
            }
        };
        check("origin", "finite values", self.origin.iter().sum(), true)?;
        check(
            "rays_per_probe",
            "[1, 65536]",
            self.rays_per_probe as f64,
            (1..=65536).contains(&self.rays_per_probe),
        )?;
        let a = self.irradiance_hysteresis;
        check(
            "irradiance_hysteresis",
            "[0, 1)",
            a,
            (0.0..1.0).contains(&a),
        )?;
        let a = self.visibility_hysteresis;
        check(
            "visibility_hysteresis",
            "[0, 1)",
            a,
            (0.0..1.0).contains(&a),
        )?;
        let b = self.self_shadow_bias;
        check("self_shadow_bias", "[0, inf)", b, b >= 0.0)?;
        let g = self.irradiance_gamma;
        check("irradiance_gamma", "[1, inf)", g, g >= 1.0)?;
        let k = self.visibility_exponent;
        check("visibility_exponent", "[1, inf)", k, k >= 1.0)?;
        let l = self.offset_limit;
        check("offset_limit", "[0, 0.5)", l, (0.0..0.5).contains(&l))?;
        Ok(())
    }

    pub fn spacing_vec(&self) -> DVec3 {
        DVec3::from_array(self.spacing)
    }

    pub fn counts_vec(&self) -> UVec3 {
        UVec3::from_array(self.counts)
    }

    pub fn probe_count(&self) -> usize {
        self.counts.iter().map(|&c| c as usize).product()
    }

    /// Volume of one grid cell; smaller means denser.
    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }
}

/// Per-probe data other than texels.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Probe {
    /// World-space displacement from the grid position.
    pub offset: DVec3,
    pub state: ProbeState,
    /// False until classification has run (also after a window respawn).
    pub initialized: bool,
    /// Still inside static geometry after position optimization.
    pub stuck: bool,
    /// Next blend overwrites the texels (hysteresis 0).
    pub fresh: bool,
}

impl Default for Probe {
    fn default() -> Self {
        Self {
            offset: DVec3::ZERO,
            state: ProbeState::Off,
            initialized: false,
            stuck: false,
            fresh: true,
        }
    }
}

/// A probe grid. Per-probe data and atlas tiles are addressed by storage
/// index; logical indices go through the tracking-window phase.
#[derive(Clone, Debug)]
pub struct ProbeVolume {
    pub id: u32,
    params: VolumeParams,
    origin: DVec3,
    phase: UVec3,
    probes: Vec<Probe>,
    pub irradiance: OctAtlas<3>,
    pub visibility: OctAtlas<2>,
    pub schedule: HysteresisSchedule,
}

impl ProbeVolume {
    pub fn new(id: u32, params: VolumeParams) -> Result<Self, VolumeError> {
        params.validate()?;
        let n = params.probe_count();
        Ok(Self {
            id,
            origin: DVec3::from_array(params.origin),
            params,
            phase: UVec3::ZERO,
            probes: vec![Probe::default(); n],
            irradiance: OctAtlas::new(n, IRRADIANCE_RES),
            visibility: OctAtlas::new(n, VISIBILITY_RES),
            schedule: HysteresisSchedule::default(),
        })
    }

    pub fn params(&self) -> &VolumeParams {
        &self.params
    }

    pub fn counts(&self) -> UVec3 {
        self.params.counts_vec()
    }

    pub fn spacing(&self) -> DVec3 {
        self.params.spacing_vec()
    }

    pub fn min_spacing(&self) -> f64 {
        self.spacing().min_element()
    }

    pub fn max_spacing(&self) -> f64 {
        self.spacing().max_element()
    }

    /// Current world position of logical probe (0,0,0), without offset.
    pub fn origin(&self) -> DVec3 {
        self.origin
    }

    pub fn phase(&self) -> UVec3 {
        self.phase
    }

    pub fn probe_count(&self) -> usize {
        self.probes.len()
    }

    /// World bounds of the grid positions.
    pub fn bounds(&self) -> Aabb {
        let ext = (self.counts() - UVec3::ONE).as_dvec3() * self.spacing();
        Aabb::new(self.origin, self.origin + ext)
    }

    pub fn window_center(&self) -> DVec3 {
        self.bounds().center()
    }

    /// Largest stored distance: 1.5 times the cell diagonal.
    pub fn distance_clamp(&self) -> f64 {
        1.5 * self.spacing().length()
    }

    /// Per-axis offset bound.
    pub fn offset_limit(&self) -> DVec3 {
        self.spacing() * self.params.offset_limit
    }

    fn check(&self, logical: UVec3) -> Result<(), VolumeError> {
        if logical.cmplt(self.counts()).all() {
            Ok(())
        } else {
            Err(VolumeError::IndexOutOfRange {
                index: logical.to_array(),
                counts: self.params.counts,
            })
        }
    }

    /// `(logical + phase) mod counts` per axis.
    pub fn storage_index(&self, logical: UVec3) -> Result<UVec3, VolumeError> {
        self.check(logical)?;
        let c = self.counts();
        Ok((logical + self.phase) % c)
    }

    fn linear(&self, s: UVec3) -> usize {
        let c = self.counts();
        (s.x + c.x * (s.y + c.y * s.z)) as usize
    }

    /// Flat storage slot of a logical probe.
    pub fn storage_slot(&self, logical: UVec3) -> Result<usize, VolumeError> {
        Ok(self.linear(self.storage_index(logical)?))
    }

    /// Inverse of [`storage_slot`](Self::storage_slot).
    pub fn logical_from_slot(&self, slot: usize) -> UVec3 {
        let c = self.counts();
        let slot = slot as u32;
        let s = UVec3::new(slot % c.x, (slot / c.x) % c.y, slot / (c.x * c.y));
        (s + c - self.phase) % c
    }

    /// Every logical index in x-fastest order.
    pub fn logical_indices(&self) -> impl Iterator<Item = UVec3> {
        let c = self.counts();
        (0..c.z).flat_map(move |z| {
            (0..c.y).flat_map(move |y| (0..c.x).map(move |x| UVec3::new(x, y, z)))
        })
    }

    /// Grid position of a logical probe, without offset.
    pub fn grid_position(&self, logical: UVec3) -> DVec3 {
        self.origin + logical.as_dvec3() * self.spacing()
    }

    /// Grid position plus offset.
    pub fn probe_world_position(&self, logical: UVec3) -> Result<DVec3, VolumeError> {
        let slot = self.storage_slot(logical)?;
        Ok(self.grid_position(logical) + self.probes[slot].offset)
    }

    pub fn slot_world_position(&self, slot: usize) -> DVec3 {
        self.grid_position(self.logical_from_slot(slot)) + self.probes[slot].offset
    }

    pub fn probe(&self, logical: UVec3) -> Result<&Probe, VolumeError> {
        Ok(&self.probes[self.storage_slot(logical)?])
    }

    pub fn probes(&self) -> &[Probe] {
        &self.probes
    }

    pub fn probes_mut(&mut self) -> &mut [Probe] {
        &mut self.probes
    }

    /// Split borrow for parallel per-slot writes.
    pub fn parts_mut(&mut self) -> (&mut [Probe], &mut OctAtlas<3>, &mut OctAtlas<2>) {
        (&mut self.probes, &mut self.irradiance, &mut self.visibility)
    }

    /// Sets a probe offset, rejecting values beyond the per-axis limit.
    pub fn set_offset(&mut self, logical: UVec3, offset: DVec3) -> Result<(), VolumeError> {
        let slot = self.storage_slot(logical)?;
        let limit = self.offset_limit();
        if !offset.is_finite() || offset.abs().cmpgt(limit + DVec3::splat(1e-9)).any() {
            return Err(VolumeError::OffsetLimit {
                offset: offset.to_array(),
                limit: limit.to_array(),
            });
        }
        self.probes[slot].offset = offset;
        Ok(())
    }

    /// Returns a probe to its uninitialized condition with zeroed texels.
    pub fn reset_slot(&mut self, slot: usize) {
        self.probes[slot] = Probe::default();
        self.irradiance.clear_tile(slot);
        self.visibility.clear_tile(slot);
    }

    /// Recenters a tracking window on `camera`: while the camera is more
    /// than one spacing from the window center on an axis, the window moves
    /// one spacing toward it and the plane that wraps around is reset.
    /// Axes are handled in x, y, z order. Returns the respawned logical
    /// indices (after all shifts).
    pub fn update_tracking_window(&mut self, camera: DVec3) -> Vec<UVec3> {
        if !self.params.tracking {
            return Vec::new();
        }
        let counts = self.counts();
        let spacing = self.spacing();
        let mut reset_slots = Vec::new();
        for axis in 0..3 {
            let n = counts[axis];
            let s = spacing[axis];
            // Bounded so a teleporting camera cannot spin forever; beyond a
            // full window length every plane has been replaced anyway.
            for _ in 0..4 * n as usize + 8 {
                let d = camera[axis] - self.window_center()[axis];
                let plane = if d > s {
                    self.origin[axis] += s;
                    self.phase[axis] = (self.phase[axis] + 1) % n;
                    n - 1
                } else if d < -s {
                    self.origin[axis] -= s;
                    self.phase[axis] = (self.phase[axis] + n - 1) % n;
                    0
                } else {
                    break;
                };
                for logical in self
                    .logical_indices()
                    .filter(|l| l[axis] == plane)
                    .collect::<Vec<_>>()
                {
                    let slot = self.storage_slot(logical).expect("in range");
                    self.reset_slot(slot);
                    reset_slots.push(slot);
                }
            }
            if (camera[axis] - self.window_center()[axis]).abs() > s {
                // Teleport: snap the window directly onto the camera.
                let half = (n - 1) as f64 * s * 0.5;
                self.origin[axis] = camera[axis] - half;
                for slot in 0..self.probes.len() {
                    self.reset_slot(slot);
                    reset_slots.push(slot);
                }
            }
        }
        reset_slots.sort_unstable();
        reset_slots.dedup();
        reset_slots
            .into_iter()
            .map(|s| self.logical_from_slot(s))
            .collect()
    }

    /// Moves a tracking window so its center sits at `p` (rounded to whole
    /// cells relative to the configured origin) and resets every probe.
    pub fn center_on(&mut self, p: DVec3) {
        let spacing = self.spacing();
        let half = (self.counts() - UVec3::ONE).as_dvec3() * spacing * 0.5;
        let base = DVec3::from_array(self.params.origin);
        let cells = ((p - half - base) / spacing).round();
        self.origin = base + cells * spacing;
        self.phase = UVec3::ZERO;
        for slot in 0..self.probes.len() {
            self.reset_slot(slot);
        }
    }

    /// Count of probes per state, in [`ProbeState::ALL`] order.
    pub fn state_census(&self) -> [usize; 6] {
        let mut out = [0; 6];
        for p in &self.probes {
            out[p.state.id() as usize] += 1;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashSet;

    fn tracking(counts: [u32; 3]) -> ProbeVolume {
        ProbeVolume::new(
            0,
            VolumeParams {
                counts,
                tracking: true,
                ..Default::default()
            },
        )
        .unwrap()
    }

    fn fill_unique(v: &mut ProbeVolume) {
        for slot in 0..v.probe_count() {
            v.irradiance.fill_tile(slot, [slot as f32, 1.0, 2.0]);
            v.visibility.fill_tile(slot, [slot as f32 + 0.5, 3.0]);
            v.probes_mut()[slot].initialized = true;
            v.probes_mut()[slot].state = ProbeState::Vigilant;
        }
    }

    fn snapshot(v: &ProbeVolume) -> Vec<(DVec3, Vec<[f32; 3]>, Vec<[f32; 2]>)> {
        (0..v.probe_count())
            .map(|slot| {
                (
                    v.slot_world_position(slot),
                    v.irradiance.tile(slot).to_vec(),
                    v.visibility.tile(slot).to_vec(),
                )
            })
            .collect()
    }

    #[test]
    fn world_positions() {
        let mut v = ProbeVolume::new(0, VolumeParams::default()).unwrap();
        let l = UVec3::new(1, 2, 3);
        assert_eq!(
            v.probe_world_position(l).unwrap(),
            DVec3::new(1.0, 2.0, 3.0)
        );
        v.set_offset(l, DVec3::new(0.3, 0.0, 0.0)).unwrap();
        assert_eq!(
            v.probe_world_position(l).unwrap(),
            DVec3::new(1.3, 2.0, 3.0)
        );
        assert!(v.set_offset(l, DVec3::new(0.46, 0.0, 0.0)).is_err());
        assert!(v.probe_world_position(UVec3::new(4, 0, 0)).is_err());
    }

    #[test]
    fn storage_index_wraps() {
        let mut v = tracking([4, 4, 4]);
        assert_eq!(
            v.storage_index(UVec3::new(3, 1, 2)).unwrap(),
            UVec3::new(3, 1, 2)
        );
        v.phase = UVec3::new(1, 0, 0);
        assert_eq!(v.storage_index(UVec3::new(3, 0, 0)).unwrap(), UVec3::ZERO);
    }

    #[test]
    fn rejects_bad_params() {
        let bad = |f: fn(&mut VolumeParams)| {
            let mut p = VolumeParams::default();
            f(&mut p);
            ProbeVolume::new(0, p).is_err()
        };
        assert!(bad(|p| p.counts = [1, 4, 4]));
        assert!(bad(|p| p.spacing = [1.0, -1.0, 1.0]));
        assert!(bad(|p| p.irradiance_hysteresis = 1.0));
        assert!(bad(|p| p.offset_limit = 0.6));
        assert!(bad(|p| p.rays_per_probe = 0));
        assert!(!bad(|p| p.self_shadow_bias = 0.0));
    }

    #[test]
    fn stationary_camera_changes_nothing() {
        let mut v = tracking([4, 4, 4]);
        fill_unique(&mut v);
        let before = snapshot(&v);
        assert!(v
            .update_tracking_window(v.window_center() + DVec3::splat(0.9))
            .is_empty());
        assert_eq!(snapshot(&v), before);
    }

    #[test]
    fn one_plane_respawns() {
        let mut v = tracking([4, 4, 4]);
        fill_unique(&mut v);
        let before = snapshot(&v);
        let cam = v.window_center() + DVec3::new(1.2, 0.0, 0.0);
        let respawned = v.update_tracking_window(cam);
        assert_eq!(respawned.len(), 16);
        assert!(respawned.iter().all(|l| l.x == 3));
        assert_eq!(v.phase(), UVec3::new(1, 0, 0));
        assert_eq!(v.origin(), DVec3::new(1.0, 0.0, 0.0));
        for slot in 0..v.probe_count() {
            let l = v.logical_from_slot(slot);
            if l.x == 3 {
                assert!(!v.probes()[slot].initialized);
                assert!(v.irradiance.tile(slot).iter().all(|t| *t == [0.0; 3]));
            } else {
                assert_eq!(snapshot(&v)[slot], before[slot]);
            }
        }
    }

    #[test]
    fn there_and_back_keeps_survivors() {
        let mut v = tracking([4, 4, 4]);
        fill_unique(&mut v);
        let before = snapshot(&v);
        let c = v.window_center();
        v.update_tracking_window(c + DVec3::new(1.1, 0.0, 0.0));
        v.update_tracking_window(c - DVec3::new(0.1, 0.0, 0.0));
        assert_eq!(v.phase(), UVec3::ZERO);
        let after = snapshot(&v);
        for slot in 0..v.probe_count() {
            let l = v.logical_from_slot(slot);
            if l.x != 0 && l.x != 3 {
                assert_eq!(after[slot], before[slot]);
            }
        }
    }

    #[test]
    fn diagonal_motion_shifts_each_axis() {
        let mut v = tracking([4, 5, 6]);
        let c = v.window_center();
        let respawned = v.update_tracking_window(c + DVec3::new(1.5, -1.5, 2.5));
        assert_eq!(v.phase(), UVec3::new(1, 4, 2));
        let unique: HashSet<_> = respawned.iter().collect();
        assert_eq!(unique.len(), respawned.len());
        assert!((v.window_center() - (c + DVec3::new(1.0, -1.0, 2.0))).length() < 1e-12);
    }

    #[test]
    fn teleport_resets_everything() {
        let mut v = tracking([4, 4, 4]);
        fill_unique(&mut v);
        v.update_tracking_window(DVec3::splat(1000.0));
        assert!(
            (v.window_center() - DVec3::splat(1000.0))
                .abs()
                .max_element()
                <= 1.0
        );
        assert!(v.probes().iter().all(|p| !p.initialized));
    }

    proptest! {
        #[test]
        fn storage_is_bijective(px in 0u32..7, py in 0u32..7, pz in 0u32..7) {
            let mut v = tracking([3, 5, 7]);
            v.phase = UVec3::new(px % 3, py % 5, pz);
            let slots: HashSet<usize> = v.logical_indices().map(|l| v.storage_slot(l).unwrap()).collect();
            prop_assert_eq!(slots.len(), v.probe_count());
            for l in v.logical_indices() {
                prop_assert_eq!(v.logical_from_slot(v.storage_slot(l).unwrap()), l);
            }
        }

        #[test]
        fn window_walk_preserves_survivors(steps in proptest::collection::vec(-1.6f64..1.6, 1..12)) {
            let mut v = tracking([4, 4, 4]);
            fill_unique(&mut v);
            let mut cam = v.window_center();
            for dx in steps {
                let before = snapshot(&v);
                cam.x += dx;
                let respawned: HashSet<usize> = v
                    .update_tracking_window(cam)
                    .into_iter()
                    .map(|l| v.storage_slot(l).unwrap())
                    .collect();
                for slot in 0..v.probe_count() {
                    if !respawned.contains(&slot) {
                        prop_assert_eq!(&snapshot(&v)[slot], &before[slot]);
                    }
                }
                prop_assert!((cam.x - v.window_center().x).abs() <= 1.0);
            }
        }
    }
}
