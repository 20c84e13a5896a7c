//! Losses, gradients, Adam, the preconditioned vertex step and the training
//! loop.

pub mod adam;
pub mod losses;
pub mod metrics;
pub mod params;
pub mod precond;

use std::collections::BTreeSet;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use adam::Adam;
pub use losses::{
    loss_diffuse, loss_image, loss_laplacian, loss_light_white, loss_mask, loss_rough_tv, total_loss, LossBreakdown,
    LossWeights,
};
pub use metrics::{
    image_metrics, mesh_distance, observed_texels, psnr_from_mse, scale_alignment, texture_mae, ImageMetrics, PSNR_CAP_DB,
};
pub use params::{parse_groups, GradientSet, GroupArrays, ParamGroup, Parameters};
pub use precond::precondition;

use crate::brdf::{BrdfLut, SKIN_F0};
use crate::error::{Error, Result};
use crate::geometry::UniformLaplacian;
use crate::math::{Rgb, Vec3};
use crate::render::{Frame, Pipeline, RenderGradients, RenderSettings, Renderer, Scene};
use crate::shading::{SampleBudget, VisibilityMode};

use params::{flatten_vec3, rgb_to_flat, unflatten_vec3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearningRates {
    pub vertices: f64,
    pub env: f64,
    pub albedo: f64,
    pub specular: f64,
    pub roughness: f64,
}

impl Default for LearningRates {
    fn default() -> Self {
        LearningRates { vertices: 0.1, env: 0.1, albedo: 0.001, specular: 0.001, roughness: 0.001 }
    }
}

impl LearningRates {
    pub fn get(&self, g: ParamGroup) -> f64 {
        match g {
            ParamGroup::Vertices => self.vertices,
            ParamGroup::Env => self.env,
            ParamGroup::Albedo => self.albedo,
            ParamGroup::Specular => self.specular,
            ParamGroup::Roughness => self.roughness,
        }
    }

    /// Same rate for the three texture groups.
    pub fn with_textures(mut self, lr: f64) -> Self {
        self.albedo = lr;
        self.specular = lr;
        self.roughness = lr;
        self
    }
}

/// How Adam and the smoothing solve compose for the vertex group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VertexStepOrder {
    /// Moments on the raw gradient, smoothing applied to the Adam output.
    #[default]
    AdamThenSmooth,
    /// Smooth the raw gradient first, then run Adam on the result.
    SmoothThenAdam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimConfig {
    pub iterations: usize,
    /// Frames per iteration.
    pub batch_size: usize,
    pub weights: LossWeights,
    pub learning_rates: LearningRates,
    /// Learning-rate multiplier reached at the last iteration, approached
    /// exponentially; 1 keeps the rates constant.
    pub lr_decay: f64,
    pub lambda_geo: f64,
    pub vertex_step: VertexStepOrder,
    pub budget: SampleBudget,
    pub visibility: VisibilityMode,
    pub seed: u64,
    pub frozen: BTreeSet<ParamGroup>,
    /// Restrict the image term to each frame's target mask.
    pub mask_image_loss: bool,
    pub f0: f64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            iterations: 6000,
            batch_size: 1,
            weights: LossWeights::default(),
            learning_rates: LearningRates::default(),
            lr_decay: 1.0,
            lambda_geo: 19.0,
            vertex_step: VertexStepOrder::default(),
            budget: SampleBudget::default(),
            visibility: VisibilityMode::default(),
            seed: 0,
            frozen: BTreeSet::new(),
            mask_image_loss: false,
            f0: SKIN_F0,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.lambda_geo >= 0.0 && self.lambda_geo.is_finite()) {
            return Err(Error::Config(format!("lambda_geo must be finite and non-negative, got {}", self.lambda_geo)));
        }
        for g in ParamGroup::ALL {
            let lr = self.learning_rates.get(g);
            if !(lr >= 0.0 && lr.is_finite()) {
                return Err(Error::Config(format!("learning rate for `{g}` must be finite and non-negative, got {lr}")));
            }
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::Config(format!("lr_decay must lie in (0, 1], got {}", self.lr_decay)));
        }
        if self.budget.n_light == 0 || self.budget.n_brdf == 0 || self.budget.n_vis == 0 {
            return Err(Error::Config("sample counts must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.f0) {
            return Err(Error::Config(format!("f0 must lie in [0, 1], got {}", self.f0)));
        }
        Ok(())
    }

    /// Learning-rate multiplier at `iteration`.
    pub fn lr_scale(&self, iteration: usize) -> f64 {
        if self.lr_decay == 1.0 || self.iterations <= 1 {
            return 1.0;
        }
        let t = (iteration as f64 / (self.iterations - 1) as f64).min(1.0);
        self.lr_decay.powf(t)
    }

    pub fn render_settings(&self, iteration: u64) -> RenderSettings {
        RenderSettings { budget: self.budget, visibility: self.visibility, seed: self.seed, iteration, f0: self.f0 }
    }
}

/// What [`compute_gradients`] needs besides the scene and frames.
#[derive(Debug, Clone, Copy)]
pub struct Objective<'a> {
    pub weights: LossWeights,
    pub frozen: &'a BTreeSet<ParamGroup>,
    pub v_init: &'a [Vec3],
    pub laplacian: &'a UniformLaplacian,
    pub mask_image_loss: bool,
    pub settings: RenderSettings,
}

/// Total loss over a frame batch and its gradient with respect to every
/// unfrozen latent group of `params` (which must encode `scene`).
///
/// Image-dependent terms are averaged over the batch. Random outcomes are
/// drawn once and shared by the forward and adjoint passes.
pub fn compute_gradients(
    scene: &Scene,
    pipeline: &Pipeline,
    params: &Parameters,
    frames: &[&Frame],
    obj: &Objective<'_>,
) -> Result<(LossBreakdown, GradientSet)> {
    let renderer = Renderer::new(scene, pipeline, obj.settings);
    let w = obj.weights;
    let needs_render_grad = ParamGroup::ALL.iter().any(|g| !obj.frozen.contains(g));
    let mut terms = LossBreakdown::default();
    let mut rg = RenderGradients::zeros(scene);
    let inv_b = 1.0 / frames.len().max(1) as f64;
    for f in frames {
        let trace = renderer.trace(f)?;
        let out = renderer.shade_trace(&trace)?;
        let n = out.color.len();
        let (img, g_img) = match &f.image {
            Some(target) => {
                let region = if obj.mask_image_loss { f.mask.as_ref() } else { None };
                losses::loss_image_grad(&out.color, target, region)?
            }
            None => (0.0, vec![Rgb::ZERO; n]),
        };
        let mask = match &f.mask {
            Some(m) => losses::loss_mask(&out.mask, m)?,
            None => 0.0,
        };
        let (diffuse, g_diff) = losses::loss_diffuse_grad(&out.diffuse, &out.mask)?;
        terms.img += img * inv_b;
        terms.mask += mask * inv_b;
        terms.diffuse += diffuse * inv_b;
        if needs_render_grad {
            let g_color: Vec<Rgb> = g_img.iter().map(|g| *g * inv_b).collect();
            let g_diffuse: Vec<Rgb> = g_diff.iter().map(|g| *g * (w.diffuse * inv_b)).collect();
            rg.add(&renderer.backward(&trace, &g_color, &g_diffuse)?);
        }
    }
    let (lap, g_lap) = losses::loss_laplacian_grad(scene.mesh.positions(), obj.v_init, obj.laplacian);
    let (light, g_light) = losses::loss_light_white_grad(scene.env.mip0().texels());
    let (rough, g_rough) = losses::loss_rough_tv_grad(&scene.materials.roughness);
    terms.lap = lap;
    terms.light = light;
    terms.rough = rough;
    let terms = total_loss(&terms, &w);

    let mut grads = params.values.zeros_like();
    for g in ParamGroup::ALL {
        if obj.frozen.contains(&g) {
            continue;
        }
        let decoded: Vec<f64> = match g {
            ParamGroup::Vertices => {
                let v: Vec<Vec3> = rg.positions.iter().zip(&g_lap).map(|(a, b)| *a + *b * w.laplacian).collect();
                flatten_vec3(&v)
            }
            ParamGroup::Albedo => rgb_to_flat(&rg.albedo),
            ParamGroup::Specular => rg.intensity.clone(),
            ParamGroup::Roughness => rg.roughness.iter().zip(&g_rough).map(|(a, b)| a + w.rough * b).collect(),
            ParamGroup::Env => {
                let mip0 = rg.env_mip0(scene.env.base_res());
                let v: Vec<Rgb> = mip0.iter().zip(&g_light).map(|(a, b)| *a + *b * w.light).collect();
                rgb_to_flat(&v)
            }
        };
        let chained = params.chain(g, &decoded);
        if chained.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteGradient(g.name()));
        }
        *grads.get_mut(g) = chained;
    }
    Ok((terms, grads))
}

/// `v ← v − η·u` with `u = (I + λL)⁻²·adam(g)` (or the swapped order).
pub fn preconditioned_vertex_step(
    v: &mut [f64],
    grad: &[f64],
    l: &UniformLaplacian,
    lambda_geo: f64,
    adam: &mut Adam,
    order: VertexStepOrder,
) -> Result<()> {
    let u = match order {
        VertexStepOrder::AdamThenSmooth => {
            let d = unflatten_vec3(&adam.direction(grad));
            precondition(l, lambda_geo, &d)?
        }
        VertexStepOrder::SmoothThenAdam => {
            let s = precondition(l, lambda_geo, &unflatten_vec3(grad))?;
            unflatten_vec3(&adam.direction(&flatten_vec3(&s)))
        }
    };
    for (x, u) in v.iter_mut().zip(flatten_vec3(&u)) {
        *x -= adam.lr * u;
    }
    Ok(())
}

/// One line of the optimization log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub iter: usize,
    #[serde(flatten)]
    pub loss: LossBreakdown,
}

/// Sequential optimization state over a fixed frame set.
#[derive(Debug, Clone)]
pub struct Optimizer {
    config: OptimConfig,
    scene: Scene,
    pipeline: Pipeline,
    params: Parameters,
    frames: Vec<Frame>,
    v_init: Vec<Vec3>,
    laplacian: UniformLaplacian,
    adam: Vec<Adam>,
    iteration: usize,
    order: Vec<usize>,
    cursor: usize,
    epoch: u64,
}

impl Optimizer {
    pub fn new(mut scene: Scene, frames: Vec<Frame>, config: OptimConfig, lut: Arc<BrdfLut>) -> Result<Self> {
        config.validate()?;
        if frames.is_empty() {
            return Err(Error::Config("optimization needs at least one frame".into()));
        }
        scene.materials.validate()?;
        if !scene.env.is_prefiltered() {
            scene.env.prefilter();
        }
        let pipeline = Pipeline::build(&scene, lut)?;
        let params = Parameters::encode(&scene);
        let adam = ParamGroup::ALL
            .iter()
            .map(|&g| Adam::new(params.get(g).len(), config.learning_rates.get(g)))
            .collect();
        Ok(Optimizer {
            v_init: scene.mesh.positions().to_vec(),
            laplacian: UniformLaplacian::build(&scene.mesh),
            config,
            scene,
            pipeline,
            params,
            frames,
            adam,
            iteration: 0,
            order: Vec::new(),
            cursor: 0,
            epoch: 0,
        })
    }

    pub fn scene(&self) -> &Scene {
        &self.scene
    }

    pub fn into_scene(self) -> Scene {
        self.scene
    }

    pub fn params(&self) -> &Parameters {
        &self.params
    }

    pub fn config(&self) -> &OptimConfig {
        &self.config
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn pipeline(&self) -> &Pipeline {
        &self.pipeline
    }

    /// Completed iterations.
    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn objective(&self) -> Objective<'_> {
        Objective {
            weights: self.config.weights,
            frozen: &self.config.frozen,
            v_init: &self.v_init,
            laplacian: &self.laplacian,
            mask_image_loss: self.config.mask_image_loss,
            settings: self.config.render_settings(self.iteration as u64),
        }
    }

    /// Frame indices for the next iteration: uniform without replacement
    /// within each epoch.
    fn next_batch(&mut self) -> Vec<usize> {
        let n = self.config.batch_size.min(self.frames.len());
        let mut batch = Vec::with_capacity(n);
        while batch.len() < n {
            if self.cursor >= self.order.len() {
                self.order = (0..self.frames.len()).collect();
                let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed ^ 0x6f70_7469_6d00_0000);
                rng.set_stream(self.epoch);
                self.order.shuffle(&mut rng);
                self.epoch += 1;
                self.cursor = 0;
            }
            batch.push(self.order[self.cursor]);
            self.cursor += 1;
        }
        batch
    }

    /// Loss and gradients at the current parameters for the given frames.
    pub fn gradients(&self, batch: &[usize]) -> Result<(LossBreakdown, GradientSet)> {
        let frames: Vec<&Frame> = batch.iter().map(|&i| &self.frames[i]).collect();
        compute_gradients(&self.scene, &self.pipeline, &self.params, &frames, &self.objective())
    }

    /// One iteration; the logged loss is evaluated before the update.
    pub fn step(&mut self) -> Result<LogEntry> {
        let batch = self.next_batch();
        let (loss, grads) = self.gradients(&batch)?;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss(self.iteration));
        }
        for g in ParamGroup::ALL {
            if self.config.frozen.contains(&g) {
                continue;
            }
            let adam = &mut self.adam[g as usize];
            adam.lr = self.config.learning_rates.get(g) * self.config.lr_scale(self.iteration);
            if g == ParamGroup::Vertices {
                preconditioned_vertex_step(
                    self.params.get_mut(g),
                    grads.get(g),
                    &self.laplacian,
                    self.config.lambda_geo,
                    adam,
                    self.config.vertex_step,
                )?;
            } else {
                adam.step(self.params.get_mut(g), grads.get(g));
            }
            self.params.decode_into(g, &mut self.scene)?;
            match g {
                ParamGroup::Vertices => self.pipeline.refresh_geometry(&self.scene.mesh),
                ParamGroup::Env => self.pipeline.refresh_lighting(&self.scene.env),
                _ => {}
            }
        }
        let entry = LogEntry { iter: self.iteration, loss };
        self.iteration += 1;
        Ok(entry)
    }

    /// Run `iterations` steps, calling `observe` after each one.
    pub fn run(
        &mut self,
        iterations: usize,
        mut observe: impl FnMut(&Optimizer, &LogEntry) -> Result<()>,
    ) -> Result<Vec<LogEntry>> {
        let mut log = Vec::with_capacity(iterations);
        for _ in 0..iterations {
            let entry = self.step()?;
            log::debug!("iter {} loss {:.6}", entry.iter, entry.loss.total);
            observe(self, &entry)?;
            log.push(entry);
        }
        Ok(log)
    }
}

/// Optimize from `scene` against `frames` for `config.iterations` steps.
pub fn optimize(scene: Scene, frames: Vec<Frame>, config: OptimConfig, lut: Arc<BrdfLut>) -> Result<(Scene, Vec<LogEntry>)> {
    let iterations = config.iterations;
    let mut opt = Optimizer::new(scene, frames, config, lut)?;
    let log = opt.run(iterations, |_, _| Ok(()))?;
    Ok((opt.into_scene(), log))
}
