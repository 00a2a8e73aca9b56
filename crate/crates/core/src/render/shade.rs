use std::f64::consts::PI;

use glam::DVec3;

use crate::math::{reflect, tangent_frame, Ray, Rgb, UnitVec3};
use crate::query::{QueryPoint, VolumeBlendSet};
use crate::scene::Scene;

/// Primary-visibility sample for one pixel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GBufferPixel {
    pub position: DVec3,
    /// Geometric normal facing the camera.
    pub normal: UnitVec3,
    pub material: u32,
    pub depth: f64,
    /// Direction toward the camera.
    pub view: UnitVec3,
}

/// Casts a primary ray; `None` for sky pixels.
pub fn gbuffer_pixel(scene: &Scene, ray: &Ray) -> Option<GBufferPixel> {
    let hit = scene.ray_cast(ray, f64::INFINITY)?;
    Some(GBufferPixel {
        position: hit.position,
        normal: hit.facing_normal(),
        material: hit.material,
        depth: hit.t,
        view: -ray.dir,
    })
}

/// Which optional shading terms are active.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ShadeOptions {
    pub glossy: bool,
    pub second_order_glossy: bool,
}

/// Shaded color plus whether the probe query had to be renormalized or
/// failed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Shaded {
    pub color: Rgb,
    pub flagged: bool,
}

/// Emission, shadowed direct light, probe-sampled diffuse indirect and the
/// glossy term.
pub fn deferred_shade(
    px: &GBufferPixel,
    scene: &Scene,
    probes: Option<&VolumeBlendSet>,
    opts: ShadeOptions,
) -> Shaded {
    let m = scene.material(px.material);
    let mut color = m.emissive + scene.direct_radiance(px.position, px.normal, m.albedo);
    let mut flagged = false;
    if let Some(set) = probes {
        if m.albedo != Rgb::ZERO {
            let s = set.sample(&QueryPoint {
                position: px.position,
                normal: px.normal,
                view: px.view,
            });
            if s.flagged && s.accumulated <= 0.0 {
                flagged = true;
            } else {
                flagged = s.flagged;
                color += m.albedo * s.irradiance;
            }
        }
    }
    if opts.glossy {
        color += glossy_trace(px, scene, probes, opts.second_order_glossy);
    }
    Shaded { color, flagged }
}

/// Directions of the fixed glossy lobe around the mirror direction `r`:
/// the mirror direction itself when `roughness` is 0, otherwise four
/// directions tilted by `tan(roughness·π/8)`.
pub fn glossy_lobe(r: UnitVec3, roughness: f64) -> Vec<UnitVec3> {
    if roughness <= 0.0 {
        return vec![r];
    }
    let spread = (roughness * PI / 8.0).tan();
    let (t, b) = tangent_frame(*r);
    (0..4)
        .map(|k| {
            let phi = k as f64 * PI / 2.0 + PI / 4.0;
            UnitVec3::normalize(*r + (t * phi.cos() + b * phi.sin()) * spread).expect("tilted lobe")
        })
        .collect()
}

/// Radiance reflected by a glossy pixel: one ray per lobe direction, shaded
/// at the hit from emission, direct light and probe irradiance, plus (when
/// `second_order`) the hit's own glossy reflection read from the probes.
pub fn glossy_trace(
    px: &GBufferPixel,
    scene: &Scene,
    probes: Option<&VolumeBlendSet>,
    second_order: bool,
) -> Rgb {
    let m = scene.material(px.material);
    if m.glossy == Rgb::ZERO {
        return Rgb::ZERO;
    }
    let mirror = UnitVec3::normalize(reflect(-*px.view, *px.normal)).expect("unit reflection");
    let lobe = glossy_lobe(mirror, m.roughness);
    let mut sum = Rgb::ZERO;
    for dir in &lobe {
        if dir.dot(*px.normal) <= 0.0 {
            continue;
        }
        let ray = Ray::new(px.position, *dir);
        sum += glossy_hit_radiance(scene, &ray, probes, second_order);
    }
    m.glossy * sum / lobe.len() as f64
}

/// Radiance arriving along `ray` as seen by a glossy reflection.
pub fn glossy_hit_radiance(
    scene: &Scene,
    ray: &Ray,
    probes: Option<&VolumeBlendSet>,
    second_order: bool,
) -> Rgb {
    let Some(hit) = scene.ray_cast(ray, f64::INFINITY) else {
        return scene.environment;
    };
    let hm = scene.material(hit.material);
    let n = hit.facing_normal();
    let mut l = hm.emissive;
    l += scene.direct_radiance(hit.position, n, hm.albedo);
    let Some(set) = probes else {
        return l;
    };
    let view = -ray.dir;
    if hm.albedo != Rgb::ZERO {
        l += hm.albedo
            * set
                .sample(&QueryPoint {
                    position: hit.position,
                    normal: n,
                    view,
                })
                .irradiance;
    }
    if second_order && hm.glossy != Rgb::ZERO {
        // Probe texels hold cosine-weighted mean radiance, reused directly
        // as maximally rough prefiltered radiance.
        let r = UnitVec3::normalize(reflect(*ray.dir, *n)).expect("unit reflection");
        l += hm.glossy
            * set
                .sample(&QueryPoint {
                    position: hit.position,
                    normal: r,
                    view,
                })
                .irradiance;
    }
    l
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{Material, Mesh};

    #[test]
    fn emissive_pixel_without_probes() {
        let mut s = Scene::new();
        let m = s
            .add_material(Material::emitter(Rgb::new(1.0, 2.0, 3.0)))
            .unwrap();
        s.add_static(
            &Mesh::quad(DVec3::new(-1.0, -1.0, -1.0), DVec3::X * 2.0, DVec3::Y * 2.0),
            m,
        )
        .unwrap();
        s.commit();
        let px = gbuffer_pixel(&s, &Ray::new(DVec3::ZERO, UnitVec3::NEG_Z)).unwrap();
        assert!((px.depth - 1.0).abs() < 1e-12);
        let opts = ShadeOptions {
            glossy: true,
            second_order_glossy: true,
        };
        let c = deferred_shade(&px, &s, None, opts);
        assert_eq!(c.color, Rgb::new(1.0, 2.0, 3.0));
        assert!(!c.flagged);
    }

    #[test]
    fn lobe_shapes() {
        assert_eq!(glossy_lobe(UnitVec3::Z, 0.0), vec![UnitVec3::Z]);
        let lobe = glossy_lobe(UnitVec3::Z, 1.0);
        assert_eq!(lobe.len(), 4);
        let mean: DVec3 = lobe.iter().map(|d| d.get()).sum::<DVec3>() / 4.0;
        assert!(mean.x.abs() < 1e-12 && mean.y.abs() < 1e-12);
        for d in &lobe {
            assert!((d.angle_to(UnitVec3::Z) - PI / 8.0).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_glossy_traces_nothing() {
        let mut s = Scene::new();
        let m = s.add_material(Material::diffuse(Rgb::splat(0.5))).unwrap();
        s.add_static(
            &Mesh::quad(DVec3::new(-1.0, -1.0, -1.0), DVec3::X * 2.0, DVec3::Y * 2.0),
            m,
        )
        .unwrap();
        s.commit();
        let px = gbuffer_pixel(&s, &Ray::new(DVec3::ZERO, UnitVec3::NEG_Z)).unwrap();
        assert_eq!(glossy_trace(&px, &s, None, true), Rgb::ZERO);
    }
}
