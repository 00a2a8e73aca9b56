use ddgi_core::math::luminance;
use ddgi_core::render::reference_indirect;
use ddgi_core::scene::extended_aabb;
use ddgi_core::{
    GiSettings, GiSystem, Light, Material, Mesh, ProbeState, Rgb, Scene, UnitVec3, VolumeParams,
};
use glam::{DAffine3, DVec3};

fn room(size: f64, albedo: f64) -> Scene {
    let mut s = Scene::new();
    let wall = s
        .add_material(Material::diffuse(Rgb::splat(albedo)))
        .unwrap();
    s.add_static(&Mesh::cuboid(DVec3::ZERO, DVec3::splat(size), true), wall)
        .unwrap();
    s.add_light(Light::Point {
        position: DVec3::new(size * 0.3, size * 0.8, size * 0.4),
        intensity: Rgb::splat(6.0),
    })
    .unwrap();
    s
}

fn grid(counts: u32, spacing: f64, origin: f64) -> VolumeParams {
    VolumeParams {
        counts: [counts; 3],
        spacing: [spacing; 3],
        origin: [origin; 3],
        ..Default::default()
    }
}

#[test]
fn dynamic_object_wakes_only_nearby_probes() {
    let mut scene = room(8.0, 0.5);
    let m = scene
        .add_material(Material::diffuse(Rgb::splat(0.5)))
        .unwrap();
    let cube = Mesh::cuboid(DVec3::splat(-0.1), DVec3::splat(0.1), false);
    let obj = scene
        .add_dynamic(
            cube,
            m,
            DAffine3::from_translation(DVec3::new(2.0, 6.0, 2.0)),
        )
        .unwrap();
    let mut gi = GiSystem::new(scene, &[grid(10, 1.0, -0.5)], GiSettings::default()).unwrap();
    let camera = DVec3::splat(4.0);
    gi.step(camera, &[]);
    let before: Vec<ProbeState> = gi.volumes()[0].probes().iter().map(|p| p.state).collect();
    assert!(before.contains(&ProbeState::Sleeping));

    let target = DVec3::new(4.0, 4.0, 4.0);
    gi.scene_mut()
        .set_transform(obj, DAffine3::from_translation(target))
        .unwrap();
    let stats = gi.step(camera, &[]);
    assert!(stats.woke > 0);

    let v = &gi.volumes()[0];
    let bounds = extended_aabb(
        &gi.scene().dynamic_objects()[obj],
        v.spacing(),
        0.75 * v.min_spacing() * 0.3,
    );
    let mut awake = 0;
    for l in v.logical_indices() {
        let slot = v.storage_slot(l).unwrap();
        let pos = v.probe_world_position(l).unwrap();
        let state = v.probes()[slot].state;
        if state == ProbeState::Awake {
            assert!(
                bounds.contains(pos),
                "awake probe at {pos} outside {bounds:?}"
            );
            awake += 1;
        }
        if before[slot] == ProbeState::Sleeping && bounds.contains(pos) {
            assert_eq!(state, ProbeState::Awake, "probe at {pos}");
        }
    }
    assert_eq!(awake as u64, stats.woke);

    // Moving back puts them to sleep and wakes the probes around the old spot.
    gi.scene_mut()
        .set_transform(obj, DAffine3::from_translation(DVec3::new(2.0, 6.0, 2.0)))
        .unwrap();
    let stats = gi.step(camera, &[]);
    assert_eq!(stats.slept, awake as u64);
    assert_eq!(
        gi.volumes()[0].state_census()[ProbeState::Awake.id() as usize] as u64,
        stats.woke
    );
}

#[test]
fn converged_probes_do_not_add_energy() {
    let mut gi =
        GiSystem::new(room(4.0, 0.6), &[grid(6, 1.0, -0.5)], GiSettings::default()).unwrap();
    for _ in 0..150 {
        gi.step(DVec3::splat(2.0), &[]);
    }
    let (mut probe, mut oracle) = (0.0, 0.0);
    for i in 0..5 {
        for j in 0..5 {
            let (a, b) = (0.4 + 0.8 * i as f64, 0.4 + 0.8 * j as f64);
            for (p, n) in [
                (DVec3::new(a, 0.0, b), UnitVec3::Y),
                (DVec3::new(0.0, a, b), UnitVec3::X),
                (DVec3::new(a, b, 4.0), UnitVec3::NEG_Z),
            ] {
                probe += luminance(gi.indirect_at(p, n, n).unwrap());
                oracle +=
                    luminance(reference_indirect(gi.scene(), p, n, 1024, (i * 5 + j) as u64).mean);
            }
        }
    }
    let ratio = probe / oracle;
    assert!(ratio <= 1.15, "probe/oracle indirect {ratio}");
    assert!(ratio > 0.7, "probe/oracle indirect {ratio}");
}

#[test]
fn thread_count_does_not_change_results() {
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        pool.install(|| {
            let mut gi =
                GiSystem::new(room(4.0, 0.6), &[grid(6, 1.0, -0.5)], GiSettings::default())
                    .unwrap();
            for _ in 0..3 {
                gi.step(DVec3::splat(2.0), &[]);
            }
            let camera =
                ddgi_core::Camera::new(DVec3::new(2.0, 2.0, 3.9), DVec3::new(2.0, 1.0, 0.0));
            let (image, _) = gi.render(&camera, 24, 16);
            let v = &gi.volumes()[0];
            (
                v.irradiance.data().to_vec(),
                v.visibility.data().to_vec(),
                image.pixels,
            )
        })
    };
    assert!(run(1) == run(3));
}
