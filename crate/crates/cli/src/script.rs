//! Deterministic frame script: camera keyframes, object tracks and
//! lighting events.

use std::collections::BTreeMap;

use ddgi_core::math::Rgb;
use ddgi_core::HeuristicEvent;
use glam::{DAffine3, DVec3};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FrameScript {
    pub camera: Vec<CameraKey>,
    pub tracks: Vec<ObjectTrack>,
    pub events: Vec<ScriptEvent>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraKey {
    pub frame: u64,
    pub position: DVec3,
    pub target: DVec3,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectTrack {
    /// Name of a dynamic object.
    pub object: String,
    pub keys: Vec<TransformKey>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformKey {
    pub frame: u64,
    #[serde(default)]
    pub translation: DVec3,
    /// Rotation about +Y, in degrees.
    #[serde(default)]
    pub rotation_y_deg: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptEvent {
    pub frame: u64,
    pub kind: HeuristicEvent,
    /// Light whose intensity changes at this frame.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub light: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intensity: Option<Rgb>,
}

/// Index of the last key at or before `frame` and the blend toward the next.
fn bracket(frames: impl Iterator<Item = u64>, frame: u64) -> Option<(usize, usize, f64)> {
    let keys: Vec<u64> = frames.collect();
    let last = keys.len().checked_sub(1)?;
    let i = keys.partition_point(|&f| f <= frame);
    Some(match i {
        0 => (0, 0, 0.0),
        i if i > last => (last, last, 0.0),
        i => {
            let (a, b) = (keys[i - 1], keys[i]);
            (i - 1, i, (frame - a) as f64 / (b - a) as f64)
        }
    })
}

impl FrameScript {
    pub fn validate(
        &self,
        lights: usize,
        dynamic: &BTreeMap<String, usize>,
    ) -> Result<(), (String, String)> {
        let sorted = |frames: Vec<u64>| frames.windows(2).all(|w| w[0] < w[1]);
        if !sorted(self.camera.iter().map(|k| k.frame).collect()) {
            return Err((
                "camera".into(),
                "keyframes must be strictly increasing".into(),
            ));
        }
        for (i, k) in self.camera.iter().enumerate() {
            if k.position == k.target {
                return Err((format!("camera[{i}]"), "position equals target".into()));
            }
        }
        for (i, t) in self.tracks.iter().enumerate() {
            if !dynamic.contains_key(&t.object) {
                return Err((
                    format!("tracks[{i}].object"),
                    format!("no dynamic object '{}'", t.object),
                ));
            }
            if t.keys.is_empty() || !sorted(t.keys.iter().map(|k| k.frame).collect()) {
                return Err((
                    format!("tracks[{i}].keys"),
                    "keys must be non-empty and strictly increasing".into(),
                ));
            }
        }
        if !self.events.windows(2).all(|w| w[0].frame <= w[1].frame) {
            return Err(("events".into(), "events must be sorted by frame".into()));
        }
        for (i, e) in self.events.iter().enumerate() {
            match (e.light, e.intensity) {
                (Some(l), Some(v)) => {
                    if l >= lights {
                        return Err((format!("events[{i}].light"), format!("no light {l}")));
                    }
                    if !(v.is_finite() && v.min_element() >= 0.0) {
                        return Err((
                            format!("events[{i}].intensity"),
                            "must be finite and non-negative".into(),
                        ));
                    }
                }
                (None, None) => {}
                _ => {
                    return Err((
                        format!("events[{i}]"),
                        "light and intensity must be given together".into(),
                    ))
                }
            }
        }
        Ok(())
    }

    /// Interpolated camera position and target, if any keys exist.
    pub fn camera_pose(&self, frame: u64) -> Option<(DVec3, DVec3)> {
        let (a, b, t) = bracket(self.camera.iter().map(|k| k.frame), frame)?;
        let (ka, kb) = (&self.camera[a], &self.camera[b]);
        Some((
            ka.position.lerp(kb.position, t),
            ka.target.lerp(kb.target, t),
        ))
    }

    /// Transforms of tracked objects at `frame`.
    pub fn transforms(&self, frame: u64) -> impl Iterator<Item = (&str, DAffine3)> + '_ {
        self.tracks.iter().filter_map(move |track| {
            let (a, b, t) = bracket(track.keys.iter().map(|k| k.frame), frame)?;
            let (ka, kb) = (&track.keys[a], &track.keys[b]);
            let translation = ka.translation.lerp(kb.translation, t);
            let angle = ka.rotation_y_deg + (kb.rotation_y_deg - ka.rotation_y_deg) * t;
            Some((
                track.object.as_str(),
                DAffine3::from_translation(translation)
                    * DAffine3::from_rotation_y(angle.to_radians()),
            ))
        })
    }

    /// Heuristic events raised at `frame`.
    pub fn events_at(&self, frame: u64) -> Vec<HeuristicEvent> {
        self.events
            .iter()
            .filter(|e| e.frame == frame)
            .map(|e| e.kind)
            .collect()
    }
}
