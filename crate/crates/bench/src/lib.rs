//! Fixtures shared by the benchmarks.

use ddgi_core::{GiSettings, GiSystem, Light, Material, Mesh, Rgb, Scene, VolumeParams};
use glam::DVec3;

/// A closed 4 m room with a block and a point light.
pub fn room_scene() -> Scene {
    let mut s = Scene::new();
    let white = s.add_material(Material::diffuse(Rgb::splat(0.7))).unwrap();
    let red = s
        .add_material(Material::diffuse(Rgb::new(0.7, 0.1, 0.1)))
        .unwrap();
    s.add_static(&Mesh::cuboid(DVec3::ZERO, DVec3::splat(4.0), true), white)
        .unwrap();
    s.add_static(
        &Mesh::cuboid(DVec3::new(1.0, 0.0, 1.0), DVec3::new(2.0, 1.5, 2.0), false),
        red,
    )
    .unwrap();
    s.add_light(Light::Point {
        position: DVec3::new(2.5, 3.2, 2.5),
        intensity: Rgb::splat(8.0),
    })
    .unwrap();
    s.commit();
    s
}

/// One volume enclosing [`room_scene`].
pub fn room_volume() -> VolumeParams {
    VolumeParams {
        counts: [10, 10, 10],
        spacing: [0.5; 3],
        origin: [-0.25; 3],
        ..Default::default()
    }
}

/// The room with its probes initialized by one frame.
pub fn warm_room() -> GiSystem {
    let mut gi = GiSystem::new(room_scene(), &[room_volume()], GiSettings::default()).unwrap();
    gi.step(DVec3::splat(2.0), &[]);
    gi
}
