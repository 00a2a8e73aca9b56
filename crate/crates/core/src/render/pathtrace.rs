//! Reference path tracer used as the ground-truth oracle.

use std::f64::consts::PI;

use glam::DVec3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::math::{luminance, mix_seed, reflect, tangent_frame, Ray, Rgb, UnitVec3};
use crate::scene::Scene;

use super::camera::Camera;
use super::image::FrameImage;

const MAX_DEPTH: u32 = 64;
const RUSSIAN_ROULETTE_DEPTH: u32 = 4;

/// Cosine-distributed direction around `n`.
pub fn sample_cosine(n: UnitVec3, rng: &mut impl Rng) -> UnitVec3 {
    let (t, b) = tangent_frame(*n);
    let u1: f64 = rng.gen();
    let u2: f64 = rng.gen();
    let r = u1.sqrt();
    let phi = 2.0 * PI * u2;
    let z = (1.0 - u1).max(0.0).sqrt();
    UnitVec3::normalize(t * (r * phi.cos()) + b * (r * phi.sin()) + *n * z).expect("cosine sample")
}

/// Glossy lobe sample: the mirror direction tilted by
/// `tan(roughness·π/8)` at a uniformly random azimuth.
pub fn sample_glossy(mirror: UnitVec3, roughness: f64, rng: &mut impl Rng) -> UnitVec3 {
    if roughness <= 0.0 {
        return mirror;
    }
    let spread = (roughness * PI / 8.0).tan();
    let (t, b) = tangent_frame(*mirror);
    let phi = 2.0 * PI * rng.gen::<f64>();
    UnitVec3::normalize(*mirror + (t * phi.cos() + b * phi.sin()) * spread).expect("glossy sample")
}

/// Radiance arriving at the origin of `ray` along `-ray.dir`. Analytic
/// lights are sampled explicitly at every diffuse vertex; emissive
/// surfaces are found by the random walk.
pub fn path_radiance(scene: &Scene, ray: Ray, rng: &mut impl Rng) -> Rgb {
    let mut radiance = Rgb::ZERO;
    let mut throughput = Rgb::ONE;
    let mut ray = ray;
    for depth in 0..MAX_DEPTH {
        let Some(hit) = scene.ray_cast(&ray, f64::INFINITY) else {
            radiance += throughput * scene.environment;
            break;
        };
        let m = scene.material(hit.material);
        let n = hit.facing_normal();
        radiance += throughput * (m.emissive + scene.direct_radiance(hit.position, n, m.albedo));

        let pd = luminance(m.albedo);
        let pg = luminance(m.glossy);
        if pd + pg <= 0.0 {
            break;
        }
        let p_diffuse = pd / (pd + pg);
        let dir = if rng.gen::<f64>() < p_diffuse {
            throughput *= m.albedo / p_diffuse;
            sample_cosine(n, rng)
        } else {
            throughput *= m.glossy / (1.0 - p_diffuse);
            let mirror = UnitVec3::normalize(reflect(*ray.dir, *n)).expect("unit reflection");
            let d = sample_glossy(mirror, m.roughness, rng);
            if d.dot(*n) <= 0.0 {
                break;
            }
            d
        };
        if depth + 1 >= RUSSIAN_ROULETTE_DEPTH {
            let q = throughput.max_element().min(0.95);
            if q <= 0.0 || rng.gen::<f64>() >= q {
                break;
            }
            throughput /= q;
        }
        ray = Ray::new(hit.position, dir);
    }
    radiance
}

fn pixel_rng(seed: u64, x: usize, y: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix_seed(seed, &[x as u64, y as u64]))
}

/// Path-traced image through pixel centers.
pub fn reference_path_trace(
    scene: &Scene,
    camera: &Camera,
    width: usize,
    height: usize,
    spp: u32,
    seed: u64,
) -> FrameImage {
    let pixels: Vec<Rgb> = (0..width * height)
        .into_par_iter()
        .map(|i| {
            let (x, y) = (i % width, i / width);
            let mut rng = pixel_rng(seed, x, y);
            let ray = camera.pixel_ray(x, y, width, height);
            let sum: Rgb = (0..spp.max(1))
                .map(|_| path_radiance(scene, ray, &mut rng))
                .sum();
            sum / spp.max(1) as f64
        })
        .collect();
    FrameImage::from_rgb(width, height, pixels)
}

/// Monte Carlo estimate with its standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OracleEstimate {
    pub mean: Rgb,
    /// Variance of the mean's luminance.
    pub variance: f64,
}

/// Cosine-weighted mean incident radiance at `point` about `normal` (the
/// quantity probe texels store), by path tracing.
pub fn reference_indirect(
    scene: &Scene,
    point: DVec3,
    normal: UnitVec3,
    samples: u32,
    seed: u64,
) -> OracleEstimate {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = samples.max(1);
    let mut sum = Rgb::ZERO;
    let mut sum_sq = 0.0;
    for _ in 0..n {
        let dir = sample_cosine(normal, &mut rng);
        let l = path_radiance(scene, Ray::new(point, dir), &mut rng);
        sum += l;
        sum_sq += luminance(l).powi(2);
    }
    let mean = sum / n as f64;
    let var = (sum_sq / n as f64 - luminance(mean).powi(2)).max(0.0);
    OracleEstimate {
        mean,
        variance: var / n as f64,
    }
}
