use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use occlurend_core::brdf::BrdfLut;
use occlurend_core::io::{self, pfm, LoadedScene};
use occlurend_core::lighting::{CubeLevel, EnvironmentMap};
use occlurend_core::optim::metrics::observed_texels;
use occlurend_core::optim::{image_metrics, mesh_distance, texture_mae, ImageMetrics, Optimizer};
use occlurend_core::render::{Frame, Grid, Pipeline, RenderOutput, RenderSettings, Renderer, Scene};
use occlurend_core::synth;
use occlurend_core::{Error, Result, Rgb};

use crate::config::RunConfig;

fn lut_for(cfg: &RunConfig) -> std::sync::Arc<BrdfLut> {
    if cfg.lut.resolution == occlurend_core::brdf::LUT_RESOLUTION && cfg.lut.samples == occlurend_core::brdf::LUT_SAMPLES
    {
        BrdfLut::shared_default()
    } else {
        std::sync::Arc::new(BrdfLut::precompute(cfg.lut.resolution, cfg.lut.samples))
    }
}

fn create_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn render_settings(cfg: &RunConfig) -> RenderSettings {
    RenderSettings {
        budget: cfg.render.budget,
        visibility: cfg.render.visibility,
        seed: cfg.render.seed,
        iteration: 0,
        f0: cfg.optimize.f0,
    }
}

fn select_frames(cfg: &RunConfig, frames: &[Frame]) -> Result<Vec<Frame>> {
    match &cfg.render.frames {
        None => Ok(frames.to_vec()),
        Some(ids) => ids
            .iter()
            .map(|id| {
                frames
                    .iter()
                    .find(|f| f.id == *id)
                    .cloned()
                    .ok_or_else(|| Error::Config(format!("scene has no frame with id {id}")))
            })
            .collect(),
    }
}

/// Bilinear resample of a texture to `size × size`.
pub fn resample_texture<T>(g: &Grid<T>, size: usize) -> Grid<T>
where
    T: Copy + std::ops::Mul<f64, Output = T> + std::ops::Add<Output = T>,
{
    if g.width() == size && g.height() == size {
        return g.clone();
    }
    Grid::from_fn(size, size, |x, y| {
        let (u, v) = synth::texel_uv(x, y, size);
        g.sample([u, v])
    })
}

pub fn resample_env(env: &EnvironmentMap, res: usize) -> Result<EnvironmentMap> {
    if env.base_res() == res {
        return Ok(env.clone());
    }
    EnvironmentMap::new(CubeLevel::from_fn(res, |d| env.mip0().bilinear(d)))
}

fn write_output(dir: &Path, id: usize, out: &RenderOutput) -> Result<()> {
    pfm::write_rgb(&dir.join(format!("frame_{id:04}_color.pfm")), &out.color)?;
    pfm::write_rgb(&dir.join(format!("frame_{id:04}_diffuse.pfm")), &out.diffuse)?;
    pfm::write_rgb(&dir.join(format!("frame_{id:04}_specular.pfm")), &out.specular)?;
    pfm::write_gray(&dir.join(format!("frame_{id:04}_mask.pfm")), &out.mask)?;
    io::write_ppm(&dir.join(format!("frame_{id:04}_color.ppm")), &out.color)
}

fn render_frames(scene: &Scene, frames: &[Frame], settings: RenderSettings, lut: std::sync::Arc<BrdfLut>, out: &Path) -> Result<()> {
    let pipeline = Pipeline::build(scene, lut)?;
    let renderer = Renderer::new(scene, &pipeline, settings);
    for f in frames {
        let o = renderer.render(f)?;
        write_output(out, f.id, &o)?;
        log::info!("rendered frame {}", f.id);
    }
    Ok(())
}

pub fn prefilter(cfg: &RunConfig) -> Result<()> {
    let env = match (&cfg.env, &cfg.scene) {
        (Some(dir), _) => io::read_env(dir)?,
        (None, Some(scene)) => io::load_scene(scene)?.scene.env,
        (None, None) => return Err(Error::Config("prefilter needs `env` or `scene`".into())),
    };
    let out = cfg.out_dir()?;
    let lut = lut_for(cfg);
    let env = env.prefiltered();
    create_out(out)?;
    let n = lut.resolution();
    let cells = Grid::from_fn(n, n, |i, j| {
        let c = lut.cell(i, j);
        Rgb::new(c[0], c[1], 0.0)
    });
    pfm::write_rgb(&out.join("brdf_lut.pfm"), &cells)?;
    for (k, level) in env.levels()?.iter().enumerate() {
        io::write_env_dir(&out.join(format!("env_pyramid/level_{k}")), level)?;
    }
    Ok(())
}

pub fn render(cfg: &RunConfig) -> Result<()> {
    let LoadedScene { mut scene, frames, .. } = io::load_scene(cfg.scene_path()?)?;
    let frames = select_frames(cfg, &frames)?;
    let out = cfg.out_dir()?;
    scene.env.prefilter();
    create_out(out)?;
    render_frames(&scene, &frames, render_settings(cfg), lut_for(cfg), out)
}

pub fn relight(cfg: &RunConfig) -> Result<()> {
    let LoadedScene { mut scene, frames, .. } = io::load_scene(cfg.scene_path()?)?;
    let env_dir = cfg.env.as_deref().ok_or_else(|| Error::Config("relight needs `env`".into()))?;
    scene.env = io::read_env(env_dir)?;
    let frames = select_frames(cfg, &frames)?;
    let out = cfg.out_dir()?;
    scene.env.prefilter();
    create_out(out)?;
    render_frames(&scene, &frames, render_settings(cfg), lut_for(cfg), out)
}

#[derive(Debug, Serialize)]
struct EvalReport {
    frames: Vec<(usize, ImageMetrics)>,
    mean_psnr: f64,
    mean_mae: f64,
}

pub fn optimize(cfg: &RunConfig) -> Result<()> {
    let LoadedScene { mut scene, frames, .. } = io::load_scene(cfg.scene_path()?)?;
    if frames.is_empty() || frames.iter().any(|f| f.image.is_none()) {
        return Err(Error::Config("optimize needs frames with target images".into()));
    }
    if let Some(t) = cfg.texture_size {
        let m = &mut scene.materials;
        m.albedo = resample_texture(&m.albedo, t);
        m.intensity = resample_texture(&m.intensity, t);
        m.roughness = resample_texture(&m.roughness, t);
    }
    if let Some(r) = cfg.env_res {
        scene.env = resample_env(&scene.env, r)?;
    }
    let eval = cfg.eval_scene.as_deref().map(io::load_scene).transpose()?;
    let out = cfg.out_dir()?.to_path_buf();
    let lut = lut_for(cfg);
    let mut opt = Optimizer::new(scene, frames, cfg.optimize.clone(), lut.clone())?;
    create_out(&out)?;
    let log_path = out.join("log.jsonl");
    if log_path.exists() {
        fs::remove_file(&log_path).map_err(|e| Error::io(&log_path, e))?;
    }
    fs::write(&log_path, b"").map_err(|e| Error::io(&log_path, e))?;
    let every = cfg.checkpoint_every;
    let total = cfg.optimize.iterations;
    opt.run(total, |o, entry| {
        io::append_log(&out, entry)?;
        let done = o.iteration();
        if every > 0 && done % every == 0 && done != total {
            io::write_checkpoint(&out, done, o.scene())?;
        }
        Ok(())
    })?;
    io::write_checkpoint(&out, total, opt.scene())?;
    if let Some(eval) = eval {
        let mut scene = opt.scene().clone();
        scene.camera = eval.scene.camera;
        let pipeline = Pipeline::build(&scene, lut)?;
        let renderer = Renderer::new(&scene, &pipeline, render_settings(cfg));
        let mut report = EvalReport { frames: Vec::new(), mean_psnr: 0.0, mean_mae: 0.0 };
        for f in &eval.frames {
            let Some(target) = &f.image else { continue };
            let o = renderer.render(f)?;
            let m = image_metrics(&o.color, target, f.mask.as_ref())?;
            report.frames.push((f.id, m));
        }
        let n = report.frames.len().max(1) as f64;
        report.mean_psnr = report.frames.iter().map(|(_, m)| m.psnr).sum::<f64>() / n;
        report.mean_mae = report.frames.iter().map(|(_, m)| m.mae).sum::<f64>() / n;
        io::write_json(&out.join("eval.json"), &report)?;
    }
    Ok(())
}

pub fn synthesize(cfg: &RunConfig) -> Result<()> {
    let spec = &cfg.synthesize;
    spec.validate()?;
    let out = cfg.out_dir()?;
    let data = synth::generate(spec, lut_for(cfg))?;
    create_out(out)?;
    io::write_scene(&out.join("ground_truth"), &data.ground_truth, &data.frames)?;
    let init = synth::initial_scene(&data.ground_truth, spec.texture_size, spec.env_res);
    io::write_scene(&out.join("init"), &init, &data.frames)?;
    if let Some(mask) = &data.concavity {
        let n = spec.texture_size;
        let g = Grid::from_vec(n, n, mask.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect())?;
        pfm::write_gray(&out.join("concavity.pfm"), &g)?;
    }
    let seen = observed_texels(&data.ground_truth.mesh, &data.ground_truth.camera, &data.frames, spec.texture_size, spec.texture_size);
    let n = spec.texture_size;
    let g = Grid::from_vec(n, n, seen.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect())?;
    pfm::write_gray(&out.join("observed.pfm"), &g)
}

#[derive(Debug, Serialize)]
struct PairReport {
    a: PathBuf,
    b: PathBuf,
    psnr: f64,
    mae: f64,
}

#[derive(Debug, Serialize)]
struct MetricsReport {
    pairs: Vec<PairReport>,
    mean_psnr: Option<f64>,
    mean_mae: Option<f64>,
    mesh_distance: Option<f64>,
    albedo_mae: Option<f64>,
}

pub fn metrics(cfg: &RunConfig) -> Result<()> {
    let m = &cfg.metrics;
    if m.images_a.len() != m.images_b.len() {
        return Err(Error::Config(format!(
            "metrics needs equally many images, got {} and {}",
            m.images_a.len(),
            m.images_b.len()
        )));
    }
    if !(m.regions.is_empty() || m.regions.len() == 1 || m.regions.len() == m.images_a.len()) {
        return Err(Error::Config("metrics.regions must hold 0, 1 or one mask per pair".into()));
    }
    if m.mesh_a.is_some() != m.mesh_b.is_some() || m.albedo_a.is_some() != m.albedo_b.is_some() {
        return Err(Error::Config("mesh and albedo comparisons need both sides".into()));
    }
    let out = cfg.out_dir()?;
    let mut images = Vec::new();
    for (i, (a, b)) in m.images_a.iter().zip(&m.images_b).enumerate() {
        let region = match m.regions.len() {
            0 => None,
            1 => Some(pfm::read_gray(&m.regions[0])?),
            _ => Some(pfm::read_gray(&m.regions[i])?),
        };
        images.push((pfm::read_rgb(a)?, pfm::read_rgb(b)?, region));
    }
    let meshes = match (&m.mesh_a, &m.mesh_b) {
        (Some(a), Some(b)) => Some((io::read_obj(a)?, io::read_obj(b)?)),
        _ => None,
    };
    let albedo = match (&m.albedo_a, &m.albedo_b) {
        (Some(a), Some(b)) => Some((pfm::read_rgb(a)?, pfm::read_rgb(b)?)),
        _ => None,
    };
    create_out(out)?;
    let mut pairs = Vec::new();
    for (i, (a, b, region)) in images.iter().enumerate() {
        let r = image_metrics(a, b, region.as_ref())?;
        let err = Grid::from_fn(a.width(), a.height(), |x, y| {
            let d = a.get(x, y) - b.get(x, y);
            (d[0].abs() + d[1].abs() + d[2].abs()) / 3.0
        });
        io::write_false_color(&out.join(format!("error_{i:04}.ppm")), &err, m.error_map_max)?;
        pairs.push(PairReport { a: m.images_a[i].clone(), b: m.images_b[i].clone(), psnr: r.psnr, mae: r.mae });
    }
    let n = pairs.len() as f64;
    let albedo_mae = match &albedo {
        Some((a, b)) => {
            let err = Grid::from_fn(a.width(), a.height(), |x, y| {
                let d = a.get(x, y) - b.get(x, y);
                (d[0].abs() + d[1].abs() + d[2].abs()) / 3.0
            });
            io::write_false_color(&out.join("albedo_error.ppm"), &err, m.error_map_max)?;
            Some(texture_mae(a, b, None)?)
        }
        None => None,
    };
    let report = MetricsReport {
        mean_psnr: (!pairs.is_empty()).then(|| pairs.iter().map(|p| p.psnr).sum::<f64>() / n),
        mean_mae: (!pairs.is_empty()).then(|| pairs.iter().map(|p| p.mae).sum::<f64>() / n),
        pairs,
        mesh_distance: meshes.as_ref().map(|(a, b)| mesh_distance(a, b)),
        albedo_mae,
    };
    io::write_json(&out.join("report.json"), &report)
}
