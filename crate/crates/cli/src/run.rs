//! Frame-script replay and output writing.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use ddgi_core::io::write_pfm;
use ddgi_core::math::mix_seed;
use ddgi_core::render::reference_path_trace;
use ddgi_core::{Camera, FrameImage, FrameStats, GiSystem, ProbeState, ProbeVolume, RenderStats};
use serde::Serialize;

use crate::config::{apply_light_changes, camera_at, Loaded, RunConfig};

/// Command-line overrides for one run.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub frames: Option<u64>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub dump_atlas: bool,
    pub dump_states: bool,
    /// Render a path-traced oracle every this many frames.
    pub compare_every: Option<u64>,
    pub disable: Vec<String>,
}

impl RunOptions {
    /// Applies the overrides to a configuration.
    pub fn apply(&self, config: &mut RunConfig) -> Result<()> {
        if let Some(f) = self.frames {
            config.frames = f;
        }
        if let Some(s) = self.seed {
            config.seed = s;
        }
        if let Some(o) = &self.out {
            config.output.dir = o.clone();
        }
        for name in &self.disable {
            if !config.features.disable(name) {
                bail!(
                    "unknown feature '{name}' (expected one of: {})",
                    ddgi_core::Features::NAMES.join(", ")
                );
            }
        }
        Ok(())
    }
}

/// A loaded scene advancing through its frame script.
pub struct Replay {
    pub system: GiSystem,
    pub config: RunConfig,
    dynamic: BTreeMap<String, usize>,
}

impl Replay {
    pub fn new(loaded: Loaded) -> Result<Self> {
        let settings = loaded.config.gi_settings();
        let system = GiSystem::new(loaded.scene, &loaded.config.volumes, settings)?;
        Ok(Self {
            system,
            config: loaded.config,
            dynamic: loaded.dynamic,
        })
    }

    pub fn frame(&self) -> u64 {
        self.system.frame()
    }

    /// Applies the script for the next frame and updates the probes.
    pub fn step(&mut self) -> Result<(Camera, FrameStats)> {
        let frame = self.system.frame();
        let camera = camera_at(&self.config, frame);
        let scene = self.system.scene_mut();
        for (name, xf) in self.config.script.transforms(frame) {
            scene.set_transform(self.dynamic[name], xf)?;
        }
        apply_light_changes(scene, &self.config, frame);
        let events = self.config.script.events_at(frame);
        let stats = self.system.step(camera.position, &events);
        Ok((camera, stats))
    }

    pub fn render(&self, camera: &Camera) -> (FrameImage, RenderStats) {
        self.system
            .render(camera, self.config.render.width, self.config.render.height)
    }
}

/// One row of the per-frame statistics file.
#[derive(Clone, Debug, Serialize)]
pub struct StatsRow {
    pub frame: u64,
    pub rays_traced: u64,
    pub init_rays: u64,
    pub off: usize,
    pub sleeping: usize,
    pub newly_awake: usize,
    pub newly_vigilant: usize,
    pub awake: usize,
    pub vigilant: usize,
    pub probes_updated: u64,
    pub irradiance_alpha: f64,
    pub visibility_alpha: f64,
    pub significant_changes: u64,
    pub new_distributions: u64,
    pub variance_clamps: u64,
    pub flagged_pixels: u64,
    pub breaches: u64,
    pub rms_vs_previous: Option<f64>,
    pub rms_vs_oracle: Option<f64>,
    pub wall_ms: f64,
}

impl StatsRow {
    fn new(stats: &FrameStats, render: &RenderStats) -> Self {
        let c = stats.census;
        Self {
            frame: stats.frame,
            rays_traced: stats.rays_traced,
            init_rays: stats.init_rays,
            off: c[0],
            sleeping: c[1],
            newly_awake: c[2],
            newly_vigilant: c[3],
            awake: c[4],
            vigilant: c[5],
            probes_updated: stats.probes_updated,
            irradiance_alpha: stats.irradiance_alpha,
            visibility_alpha: stats.visibility_alpha,
            significant_changes: stats.blend.significant_changes,
            new_distributions: stats.blend.new_distributions,
            variance_clamps: stats.blend.variance_clamps,
            flagged_pixels: render.flagged_pixels,
            breaches: 0,
            rms_vs_previous: None,
            rms_vs_oracle: None,
            wall_ms: 0.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub rows: Vec<StatsRow>,
    pub breaches: u64,
    pub out_dir: PathBuf,
}

/// Invariant violations visible in the frame: invalid pixels, offsets
/// beyond the limit and invalid texels.
fn count_breaches(image: &FrameImage, volumes: &[ProbeVolume]) -> u64 {
    let mut n = image.invalid_pixels() as u64;
    for v in volumes {
        let limit = v.offset_limit() + glam::DVec3::splat(1e-9);
        n += v
            .probes()
            .iter()
            .filter(|p| p.offset.abs().cmpgt(limit).any())
            .count() as u64;
        n += v
            .irradiance
            .data()
            .iter()
            .filter(|t| t.iter().any(|c| !c.is_finite() || *c < 0.0))
            .count() as u64;
    }
    n
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

pub fn save_pfm(path: &Path, image: &FrameImage) -> Result<()> {
    let flat: Vec<f32> = image.pixels.iter().flatten().copied().collect();
    write_pfm(&mut create(path)?, image.width, image.height, 3, &flat)
        .with_context(|| format!("writing {}", path.display()))
}

/// Tone-mapped 8-bit PNG with gamma 2.2.
pub fn save_png(path: &Path, image: &FrameImage) -> Result<()> {
    let bytes: Vec<u8> = image
        .pixels
        .iter()
        .flatten()
        .map(|&c| (c.clamp(0.0, 1.0).powf(1.0 / 2.2) * 255.0).round() as u8)
        .collect();
    let img = image::RgbImage::from_raw(image.width as u32, image.height as u32, bytes)
        .expect("buffer size");
    img.save(path)
        .with_context(|| format!("writing {}", path.display()))
}

fn dump_atlas(dir: &Path, frame: u64, v: &ProbeVolume) -> Result<()> {
    let columns = v.counts().x as usize * v.counts().y as usize;
    let (w, h, irr) = v.irradiance.to_image(columns);
    let flat: Vec<f32> = irr.iter().flatten().copied().collect();
    let path = dir.join(format!("atlas_v{}_irradiance_{frame:04}.pfm", v.id));
    write_pfm(&mut create(&path)?, w, h, 3, &flat)?;
    let (w, h, vis) = v.visibility.to_image(columns);
    let flat: Vec<f32> = vis.iter().flat_map(|[m, m2]| [*m, *m2, 0.0]).collect();
    let path = dir.join(format!("atlas_v{}_visibility_{frame:04}.pfm", v.id));
    write_pfm(&mut create(&path)?, w, h, 3, &flat)?;
    Ok(())
}

#[derive(Serialize)]
struct StateRow {
    i: u32,
    j: u32,
    k: u32,
    state: ProbeState,
    offset_x: f64,
    offset_y: f64,
    offset_z: f64,
    x: f64,
    y: f64,
    z: f64,
}

fn dump_states(dir: &Path, frame: u64, v: &ProbeVolume) -> Result<()> {
    let path = dir.join(format!("states_v{}_{frame:04}.csv", v.id));
    let mut w = csv::Writer::from_writer(create(&path)?);
    for logical in v.logical_indices() {
        let p = v.probe(logical)?;
        let pos = v.probe_world_position(logical)?;
        w.serialize(StateRow {
            i: logical.x,
            j: logical.y,
            k: logical.z,
            state: p.state,
            offset_x: p.offset.x,
            offset_y: p.offset.y,
            offset_z: p.offset.z,
            x: pos.x,
            y: pos.y,
            z: pos.z,
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Renders every frame of the script, writing images, dumps and
/// `stats.csv` to the output directory.
pub fn run(mut loaded: Loaded, opts: &RunOptions) -> Result<RunSummary> {
    opts.apply(&mut loaded.config)?;
    let out = loaded.config.output.clone();
    fs::create_dir_all(&out.dir).with_context(|| format!("creating {}", out.dir.display()))?;
    let frames = loaded.config.frames;
    let oracle_spp = loaded.config.render.oracle_spp;
    let mut replay = Replay::new(loaded)?;

    let mut rows = Vec::new();
    let mut previous: Option<FrameImage> = None;
    let mut stats_file = csv::Writer::from_writer(create(&out.dir.join("stats.csv"))?);
    for _ in 0..frames {
        let start = Instant::now();
        let (camera, stats) = replay.step()?;
        let (image, render) = replay.render(&camera);
        let f = stats.frame;
        let mut row = StatsRow::new(&stats, &render);
        row.breaches = count_breaches(&image, replay.system.volumes());
        row.rms_vs_previous = previous.as_ref().map(|p| image.rms_diff(p));

        if out.pfm {
            save_pfm(&out.dir.join(format!("frame_{f:04}.pfm")), &image)?;
        }
        if out.png {
            save_png(&out.dir.join(format!("frame_{f:04}.png")), &image)?;
        }
        if let Some(k) = opts.compare_every.filter(|&k| k > 0) {
            if f % k == 0 {
                let (w, h) = (image.width, image.height);
                let seed = mix_seed(replay.config.seed, &[f]);
                let oracle =
                    reference_path_trace(replay.system.scene(), &camera, w, h, oracle_spp, seed);
                row.rms_vs_oracle = Some(image.rms_diff(&oracle));
                save_pfm(&out.dir.join(format!("oracle_{f:04}.pfm")), &oracle)?;
            }
        }
        for v in replay.system.volumes() {
            if opts.dump_atlas {
                dump_atlas(&out.dir, f, v)?;
            }
            if opts.dump_states {
                dump_states(&out.dir, f, v)?;
            }
        }
        row.wall_ms = start.elapsed().as_secs_f64() * 1e3;
        stats_file.serialize(&row)?;
        rows.push(row);
        previous = Some(image);
    }
    stats_file.flush()?;
    Ok(RunSummary {
        breaches: rows.iter().map(|r| r.breaches).sum(),
        rows,
        out_dir: out.dir,
    })
}
