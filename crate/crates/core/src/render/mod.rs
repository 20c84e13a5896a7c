//! Primary visibility, per-frame image synthesis and its adjoint.
//!
//! One primary ray per pixel center is cast against the mesh in object
//! space. Covered pixels are shaded with [`crate::shading`]. Rendering can run
//! in two ways that produce bit-identical images: [`Renderer::render`]
//! streams samples and keeps nothing, while [`Renderer::trace`] followed by
//! [`Renderer::shade_trace`] stores every random outcome so that
//! [`Renderer::backward`] can differentiate the exact same estimate.

pub mod camera;
pub mod image;

use std::sync::Arc;

use rayon::prelude::*;

pub use camera::{Camera, Intrinsics};
pub use image::{Grid, Image, Mask, TexTaps};

use crate::brdf::{BrdfLut, SpecularParams, SKIN_F0};
use crate::error::{Error, Result};
use crate::geometry::{Bvh, Ray, TriangleMesh, Uv, RELATIVE_RAY_EPSILON};
use crate::lighting::{pyramid_adjoint, EnvironmentMap, LightSampler};
use crate::math::{Rgb, Rigid, Vec3};
use crate::sampling::pixel_rng;
use crate::shading::{
    evaluate, evaluate_backward, trace_point, Occluder, PointTrace, SampleBudget, ShadeInputs, ShadePoint,
    ShadingContext, VisibilityMode,
};

/// Decoded material textures.
#[derive(Debug, Clone, PartialEq)]
pub struct Materials {
    /// Diffuse albedo in `[0, 1]`.
    pub albedo: Image,
    /// Specular intensity, `≥ 0`.
    pub intensity: Grid<f64>,
    /// Roughness in `[r_min, 1]`.
    pub roughness: Grid<f64>,
}

impl Materials {
    pub fn constant(size: usize, albedo: Rgb, intensity: f64, roughness: f64) -> Self {
        Materials {
            albedo: Grid::filled(size, size, albedo),
            intensity: Grid::filled(size, size, intensity),
            roughness: Grid::filled(size, size, roughness),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.albedo.has_non_finite() {
            return Err(Error::NonFiniteTexture("albedo"));
        }
        if self.intensity.has_non_finite() {
            return Err(Error::NonFiniteTexture("specular"));
        }
        if self.roughness.has_non_finite() {
            return Err(Error::NonFiniteTexture("roughness"));
        }
        Ok(())
    }
}

/// Everything the forward model needs besides per-frame data.
#[derive(Debug, Clone)]
pub struct Scene {
    /// Object-space mesh.
    pub mesh: TriangleMesh,
    pub materials: Materials,
    pub env: EnvironmentMap,
    pub camera: Camera,
}

/// One posed observation.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub id: usize,
    /// Object-to-world.
    pub pose: Rigid,
    pub image: Option<Image>,
    pub mask: Option<Mask>,
}

impl Frame {
    pub fn posed(id: usize, pose: Rigid) -> Self {
        Frame { id, pose, image: None, mask: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderSettings {
    pub budget: SampleBudget,
    pub visibility: VisibilityMode,
    pub seed: u64,
    /// Optimizer iteration; part of the per-pixel random stream key.
    pub iteration: u64,
    pub f0: f64,
}

impl Default for RenderSettings {
    fn default() -> Self {
        RenderSettings {
            budget: SampleBudget::default(),
            visibility: VisibilityMode::Normalized,
            seed: 0,
            iteration: 0,
            f0: SKIN_F0,
        }
    }
}

/// Derived state rebuilt whenever the mesh or environment changes.
#[derive(Debug, Clone)]
pub struct Pipeline {
    pub bvh: Bvh,
    pub lut: Arc<BrdfLut>,
    pub sampler: LightSampler,
    pub eps: f64,
}

impl Pipeline {
    /// Requires a prefiltered environment.
    pub fn build(scene: &Scene, lut: Arc<BrdfLut>) -> Result<Self> {
        scene.env.levels()?;
        Ok(Pipeline {
            bvh: Bvh::build(&scene.mesh),
            lut,
            sampler: LightSampler::new(scene.env.mip0()),
            eps: RELATIVE_RAY_EPSILON * scene.mesh.bounding_diagonal().max(1e-12),
        })
    }

    pub fn refresh_geometry(&mut self, mesh: &TriangleMesh) {
        self.bvh = Bvh::build(mesh);
        self.eps = RELATIVE_RAY_EPSILON * mesh.bounding_diagonal().max(1e-12);
    }

    pub fn refresh_lighting(&mut self, env: &EnvironmentMap) {
        self.sampler = LightSampler::new(env.mip0());
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelHit {
    pub face: u32,
    pub bary: [f64; 3],
    pub uv: Uv,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderOutput {
    pub color: Image,
    pub diffuse: Image,
    pub specular: Image,
    /// Binary coverage.
    pub mask: Mask,
    /// Specular visibility Ṽ per covered pixel (0 elsewhere).
    pub visibility: Mask,
    pub hits: Vec<Option<PixelHit>>,
}

impl RenderOutput {
    fn blank(width: usize, height: usize) -> Self {
        RenderOutput {
            color: Grid::filled(width, height, Rgb::ZERO),
            diffuse: Grid::filled(width, height, Rgb::ZERO),
            specular: Grid::filled(width, height, Rgb::ZERO),
            mask: Grid::filled(width, height, 0.0),
            visibility: Grid::filled(width, height, 0.0),
            hits: vec![None; width * height],
        }
    }

    pub fn covered(&self) -> usize {
        self.mask.data().iter().filter(|&&m| m > 0.0).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PixelTrace {
    pub pixel: u32,
    pub hit: PixelHit,
    pub point: PointTrace,
}

/// Random outcomes of one frame render, reusable for evaluation and
/// differentiation.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameTrace {
    pub frame_id: usize,
    pub pose: Rigid,
    pub pixels: Vec<PixelTrace>,
}

/// Gradients of a scalar objective with respect to the decoded parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderGradients {
    pub albedo: Vec<Rgb>,
    pub intensity: Vec<f64>,
    pub roughness: Vec<f64>,
    pub positions: Vec<Vec3>,
    /// Flat over all pyramid levels, see [`EnvironmentMap::level_offsets`].
    pub env_pyramid: Vec<Rgb>,
}

impl RenderGradients {
    pub fn zeros(scene: &Scene) -> Self {
        RenderGradients {
            albedo: vec![Rgb::ZERO; scene.materials.albedo.len()],
            intensity: vec![0.0; scene.materials.intensity.len()],
            roughness: vec![0.0; scene.materials.roughness.len()],
            positions: vec![Vec3::ZERO; scene.mesh.vertex_count()],
            env_pyramid: vec![Rgb::ZERO; *scene.env.level_offsets().last().unwrap()],
        }
    }

    pub fn add(&mut self, o: &RenderGradients) {
        fn acc<T: Copy + std::ops::Add<Output = T>>(a: &mut [T], b: &[T]) {
            for (x, y) in a.iter_mut().zip(b) {
                *x = *x + *y;
            }
        }
        acc(&mut self.albedo, &o.albedo);
        acc(&mut self.intensity, &o.intensity);
        acc(&mut self.roughness, &o.roughness);
        acc(&mut self.positions, &o.positions);
        acc(&mut self.env_pyramid, &o.env_pyramid);
    }

    /// Gradient with respect to mip-0 radiance (through the prefilter).
    pub fn env_mip0(&self, base_res: usize) -> Vec<Rgb> {
        pyramid_adjoint(base_res, &self.env_pyramid)
    }
}

/// Surface quantities at a hit, with what the adjoint needs.
struct Surface {
    x: Vec3,
    n: Vec3,
    ng: Vec3,
    wo: Vec3,
    /// `|Σ b_k N_k|` in object space.
    n_len: f64,
    n_obj: Vec3,
    /// `|c − x|`.
    view_len: f64,
}

/// Rows per work item in parallel loops; fixed so reductions do not depend
/// on the thread count.
const ROWS_PER_CHUNK: usize = 4;

/// Primary-ray hit for pixel `(x, y)` of `camera` against `mesh` placed by
/// `pose`.
pub fn primary_hit(mesh: &TriangleMesh, bvh: &Bvh, camera: &Camera, pose: &Rigid, x: usize, y: usize) -> Option<PixelHit> {
    if mesh.is_empty() {
        return None;
    }
    let (o, d) = camera.primary_ray(x, y);
    let rt = pose.rotation.transpose();
    let ray = Ray::infinite(rt.mul_vec(o - pose.translation), rt.mul_vec(d));
    let hit = bvh.intersect(mesh, &ray)?;
    let (_, _, uv) = mesh.interpolate(hit.face as usize, hit.bary);
    Some(PixelHit { face: hit.face, bary: hit.bary, uv })
}

/// Binary coverage mask for one pose.
pub fn render_mask(mesh: &TriangleMesh, bvh: &Bvh, camera: &Camera, pose: &Rigid) -> Mask {
    let (w, h) = (camera.width(), camera.height());
    let data: Vec<f64> = (0..w * h)
        .into_par_iter()
        .map(|p| if primary_hit(mesh, bvh, camera, pose, p % w, p / w).is_some() { 1.0 } else { 0.0 })
        .collect();
    Grid::from_vec(w, h, data).expect("mask shape")
}

pub struct Renderer<'a> {
    pub scene: &'a Scene,
    pub pipeline: &'a Pipeline,
    pub settings: RenderSettings,
}

impl<'a> Renderer<'a> {
    pub fn new(scene: &'a Scene, pipeline: &'a Pipeline, settings: RenderSettings) -> Self {
        Renderer { scene, pipeline, settings }
    }

    fn check(&self) -> Result<()> {
        self.scene.env.levels()?;
        if self.pipeline.bvh.node_count() == 0 && !self.scene.mesh.is_empty() {
            return Err(Error::PipelineNotBuilt("bvh"));
        }
        if self.pipeline.sampler.res() != self.scene.env.base_res() {
            return Err(Error::PipelineNotBuilt("light sampler"));
        }
        self.scene.materials.validate()
    }

    fn context(&self, pose: &Rigid) -> ShadingContext<'_> {
        ShadingContext {
            env: &self.scene.env,
            sampler: &self.pipeline.sampler,
            lut: &self.pipeline.lut,
            occluder: Some(Occluder {
                mesh: &self.scene.mesh,
                bvh: &self.pipeline.bvh,
                eps: self.pipeline.eps,
                object_to_world: *pose,
            }),
            budget: self.settings.budget,
            visibility: self.settings.visibility,
            f0: self.settings.f0,
        }
    }

    fn surface(&self, pose: &Rigid, hit: &PixelHit) -> Surface {
        let mesh = &self.scene.mesh;
        let (x_o, n_sum, _) = mesh.interpolate(hit.face as usize, hit.bary);
        let n_len = n_sum.length();
        let n_obj = n_sum / n_len;
        let x = pose.apply_point(x_o);
        let to_cam = self.scene.camera.center() - x;
        let view_len = to_cam.length();
        Surface {
            x,
            n: pose.apply_dir(n_obj),
            ng: pose.apply_dir(mesh.face_normal(hit.face as usize)),
            wo: to_cam / view_len,
            n_len,
            n_obj,
            view_len,
        }
    }

    fn inputs(&self, s: &Surface, hit: &PixelHit) -> ShadeInputs {
        let m = &self.scene.materials;
        ShadeInputs {
            n: s.n,
            wo: s.wo,
            albedo: m.albedo.sample(hit.uv),
            intensity: m.intensity.sample(hit.uv).max(0.0),
            roughness: SpecularParams::new(0.0, m.roughness.sample(hit.uv), 0.0).roughness,
        }
    }

    fn trace_pixel(&self, frame: &Frame, ctx: &ShadingContext, hit: &PixelHit, pixel: usize) -> (ShadeInputs, PointTrace) {
        let s = self.surface(&frame.pose, hit);
        let inputs = self.inputs(&s, hit);
        let point = ShadePoint {
            x: s.x,
            n: s.n,
            ng: s.ng,
            wo: s.wo,
            albedo: inputs.albedo,
            spec: SpecularParams { intensity: inputs.intensity, roughness: inputs.roughness, f0: self.settings.f0 },
        };
        let mut rng = pixel_rng(self.settings.seed, self.settings.iteration, frame.id as u64, pixel as u64);
        (inputs, trace_point(&point, ctx, &mut rng))
    }

    fn hits(&self, pose: &Rigid) -> Vec<Option<PixelHit>> {
        let cam = &self.scene.camera;
        let w = cam.width();
        (0..cam.pixel_count())
            .into_par_iter()
            .map(|p| primary_hit(&self.scene.mesh, &self.pipeline.bvh, cam, pose, p % w, p / w))
            .collect()
    }

    /// Forward render without keeping samples.
    pub fn render(&self, frame: &Frame) -> Result<RenderOutput> {
        self.check()?;
        let cam = &self.scene.camera;
        let hits = self.hits(&frame.pose);
        let ctx = self.context(&frame.pose);
        let shaded: Vec<Option<(Rgb, Rgb, f64)>> = hits
            .par_iter()
            .enumerate()
            .map(|(p, hit)| -> Result<Option<(Rgb, Rgb, f64)>> {
                let Some(hit) = hit else { return Ok(None) };
                let (inputs, trace) = self.trace_pixel(frame, &ctx, hit, p);
                let (d, s) = evaluate(&inputs, &trace, &ctx)?;
                Ok(Some((d, s, trace.visibility)))
            })
            .collect::<Result<_>>()?;
        let mut out = RenderOutput::blank(cam.width(), cam.height());
        for (p, v) in shaded.into_iter().enumerate() {
            if let Some((d, s, vis)) = v {
                out.diffuse.data_mut()[p] = d;
                out.specular.data_mut()[p] = s;
                out.color.data_mut()[p] = d + s;
                out.mask.data_mut()[p] = 1.0;
                out.visibility.data_mut()[p] = vis;
            }
        }
        out.hits = hits;
        Ok(out)
    }

    /// Draw and keep every random outcome of a frame render.
    pub fn trace(&self, frame: &Frame) -> Result<FrameTrace> {
        self.check()?;
        let hits = self.hits(&frame.pose);
        let ctx = self.context(&frame.pose);
        let pixels = hits
            .par_iter()
            .enumerate()
            .filter_map(|(p, hit)| {
                hit.map(|hit| PixelTrace { pixel: p as u32, hit, point: self.trace_pixel(frame, &ctx, &hit, p).1 })
            })
            .collect();
        Ok(FrameTrace { frame_id: frame.id, pose: frame.pose, pixels })
    }

    /// Evaluate a trace under the current parameters.
    pub fn shade_trace(&self, trace: &FrameTrace) -> Result<RenderOutput> {
        self.check()?;
        let cam = &self.scene.camera;
        let ctx = self.context(&trace.pose);
        let values: Vec<(Rgb, Rgb)> = trace
            .pixels
            .par_iter()
            .map(|px| {
                let s = self.surface(&trace.pose, &px.hit);
                evaluate(&self.inputs(&s, &px.hit), &px.point, &ctx)
            })
            .collect::<Result<_>>()?;
        let mut out = RenderOutput::blank(cam.width(), cam.height());
        for (px, (d, s)) in trace.pixels.iter().zip(values) {
            let p = px.pixel as usize;
            out.diffuse.data_mut()[p] = d;
            out.specular.data_mut()[p] = s;
            out.color.data_mut()[p] = d + s;
            out.mask.data_mut()[p] = 1.0;
            out.visibility.data_mut()[p] = px.point.visibility;
            out.hits[p] = Some(px.hit);
        }
        Ok(out)
    }

    /// Adjoint of [`shade_trace`](Self::shade_trace) for upstream gradients
    /// on the color and diffuse images (indexed by pixel).
    pub fn backward(&self, trace: &FrameTrace, g_color: &[Rgb], g_diffuse: &[Rgb]) -> Result<RenderGradients> {
        self.check()?;
        let n_pix = self.scene.camera.pixel_count();
        if g_color.len() != n_pix || g_diffuse.len() != n_pix {
            return Err(Error::shape("image gradient", n_pix, g_color.len().min(g_diffuse.len())));
        }
        let scene = self.scene;
        let ctx = self.context(&trace.pose);
        let offsets = scene.env.level_offsets();
        let width = scene.camera.width();
        let chunk_pixels = ROWS_PER_CHUNK * width;
        // Split the trace at fixed row boundaries.
        let mut bounds = vec![0usize];
        for (i, px) in trace.pixels.iter().enumerate() {
            if px.pixel as usize / chunk_pixels != trace.pixels[*bounds.last().unwrap()].pixel as usize / chunk_pixels {
                bounds.push(i);
            }
        }
        bounds.push(trace.pixels.len());
        let pose = trace.pose;
        let rt = pose.rotation.transpose();
        let partials: Vec<(RenderGradients, Vec<Vec3>)> = bounds
            .par_windows(2)
            .map(|w| -> Result<(RenderGradients, Vec<Vec3>)> {
                let mut g = RenderGradients::zeros(scene);
                let mut d_normals = vec![Vec3::ZERO; scene.mesh.vertex_count()];
                for px in &trace.pixels[w[0]..w[1]] {
                    let p = px.pixel as usize;
                    let (gc, gd) = (g_color[p], g_diffuse[p]);
                    if gc == Rgb::ZERO && gd == Rgb::ZERO {
                        continue;
                    }
                    let s = self.surface(&pose, &px.hit);
                    let inputs = self.inputs(&s, &px.hit);
                    let sg = evaluate_backward(&inputs, &px.point, &ctx, gc + gd, gc, &offsets, |i, v| {
                        g.env_pyramid[i] += v;
                    })?;
                    let m = &scene.materials;
                    let taps = m.albedo.taps(px.hit.uv);
                    for k in 0..4 {
                        g.albedo[taps.index[k] as usize] += sg.albedo * taps.weight[k];
                    }
                    let taps = m.intensity.taps(px.hit.uv);
                    let d_int = if m.intensity.gather(&taps) >= 0.0 { sg.intensity } else { 0.0 };
                    for k in 0..4 {
                        g.intensity[taps.index[k] as usize] += d_int * taps.weight[k];
                    }
                    let taps = m.roughness.taps(px.hit.uv);
                    let raw_r = m.roughness.gather(&taps);
                    let d_r = if (crate::brdf::ROUGHNESS_MIN..=1.0).contains(&raw_r) { sg.roughness } else { 0.0 };
                    for k in 0..4 {
                        g.roughness[taps.index[k] as usize] += d_r * taps.weight[k];
                    }
                    // ωo = (c − x)/|c − x|
                    let d_x = -(sg.wo - s.wo * s.wo.dot(sg.wo)) / s.view_len;
                    let d_xo = rt.mul_vec(d_x);
                    let d_no = rt.mul_vec(sg.n);
                    let d_nsum = (d_no - s.n_obj * s.n_obj.dot(d_no)) / s.n_len;
                    let face = scene.mesh.faces()[px.hit.face as usize];
                    for k in 0..3 {
                        g.positions[face[k] as usize] += d_xo * px.hit.bary[k];
                        d_normals[face[k] as usize] += d_nsum * px.hit.bary[k];
                    }
                }
                Ok((g, d_normals))
            })
            .collect::<Result<_>>()?;
        let mut total = RenderGradients::zeros(scene);
        let mut d_normals = vec![Vec3::ZERO; scene.mesh.vertex_count()];
        for (g, dn) in &partials {
            total.add(g);
            for (a, b) in d_normals.iter_mut().zip(dn) {
                *a += *b;
            }
        }
        for (a, b) in total.positions.iter_mut().zip(scene.mesh.normals_backward(&d_normals)) {
            *a += b;
        }
        Ok(total)
    }
}

/// Render `frames` under `new_env` with otherwise unchanged assets.
pub fn relight(scene: &Scene, lut: Arc<BrdfLut>, new_env: &EnvironmentMap, frames: &[Frame], settings: RenderSettings) -> Result<Vec<RenderOutput>> {
    let mut relit = scene.clone();
    relit.env = new_env.clone();
    if !relit.env.is_prefiltered() {
        relit.env.prefilter();
    }
    let pipeline = Pipeline::build(&relit, lut)?;
    let renderer = Renderer::new(&relit, &pipeline, settings);
    frames.iter().map(|f| renderer.render(f)).collect()
}
