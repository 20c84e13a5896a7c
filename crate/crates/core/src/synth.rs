//! Synthetic datasets with known ground truth.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::brdf::BrdfLut;
use crate::error::{Error, Result};
use crate::geometry::primitives::{self, Dent};
use crate::geometry::TriangleMesh;
use crate::lighting::{CubeLevel, EnvironmentMap};
use crate::math::{Mat3, Rgb, Rigid, Vec3};
use crate::render::{render_mask, Camera, Frame, Grid, Intrinsics, Materials, Pipeline, RenderSettings, Renderer, Scene};
use crate::shading::SampleBudget;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Sphere,
    DentedBlob,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvKind {
    Uniform,
    /// Sky gradient over a darker ground with a soft sun and a tinted window.
    Sky,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub shape: Shape,
    pub env: EnvKind,
    pub poses: usize,
    /// Per-axis rotation range in degrees for poses after the first.
    pub max_rotation_deg: f64,
    pub width: usize,
    pub height: usize,
    pub fov_deg: f64,
    pub texture_size: usize,
    pub env_res: usize,
    pub segments: u32,
    pub rings: u32,
    /// Budget used to render the targets.
    pub budget: SampleBudget,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            shape: Shape::Sphere,
            env: EnvKind::Sky,
            poses: 20,
            max_rotation_deg: 25.0,
            width: 128,
            height: 128,
            fov_deg: 45.0,
            texture_size: 64,
            env_res: 32,
            segments: 64,
            rings: 32,
            budget: SampleBudget::new(512, 512, 256),
            seed: 7,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.poses == 0 {
            return Err(Error::Config("poses must be at least 1".into()));
        }
        if !(0.0..=90.0).contains(&self.max_rotation_deg) {
            return Err(Error::Config(format!("max_rotation_deg must lie in [0, 90], got {}", self.max_rotation_deg)));
        }
        if !(self.fov_deg > 0.0 && self.fov_deg < 180.0) {
            return Err(Error::Config(format!("fov_deg must lie in (0, 180), got {}", self.fov_deg)));
        }
        if self.texture_size == 0 {
            return Err(Error::Config("texture_size must be positive".into()));
        }
        if !self.env_res.is_power_of_two() || self.env_res < 8 {
            return Err(Error::Config(format!("env_res must be a power of two ≥ 8, got {}", self.env_res)));
        }
        if self.segments < 3 || self.rings < 2 {
            return Err(Error::Config("mesh needs at least 3 segments and 2 rings".into()));
        }
        Intrinsics::from_fov(self.width, self.height, self.fov_deg).validate()
    }

    pub fn dent(&self) -> Option<Dent> {
        match self.shape {
            Shape::Sphere => None,
            Shape::DentedBlob => Some(Dent::default()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub ground_truth: Scene,
    /// Frames with rendered target images and masks.
    pub frames: Vec<Frame>,
    /// Texels inside the concavity (dented blob only).
    pub concavity: Option<Vec<bool>>,
}

pub const CAMERA_DISTANCE: f64 = 3.0;

pub fn camera(spec: &SyntheticSpec) -> Camera {
    let k = Intrinsics::from_fov(spec.width, spec.height, spec.fov_deg);
    Camera { intrinsics: k, pose: Rigid::look_at(Vec3::new(0.0, 0.0, CAMERA_DISTANCE), Vec3::ZERO, Vec3::Y) }
}

pub fn mesh(spec: &SyntheticSpec) -> TriangleMesh {
    match spec.dent() {
        None => primitives::uv_sphere(spec.segments, spec.rings, 1.0),
        Some(d) => primitives::dented_blob(spec.segments, spec.rings, d),
    }
}

/// Unit direction for texture coordinate `(u, v)` of the uv-sphere atlas.
pub fn atlas_direction(u: f64, v: f64) -> Vec3 {
    let theta = PI * v;
    let phi = -PI + 2.0 * PI * u;
    Vec3::new(theta.sin() * phi.sin(), theta.cos(), theta.sin() * phi.cos())
}

/// Texture coordinate of the center of texel `(x, y)`; row 0 is `v = 1`.
pub fn texel_uv(x: usize, y: usize, size: usize) -> (f64, f64) {
    ((x as f64 + 0.5) / size as f64, 1.0 - (y as f64 + 0.5) / size as f64)
}

pub const ALBEDO_A: Rgb = Rgb::new(0.75, 0.45, 0.35);
pub const ALBEDO_B: Rgb = Rgb::new(0.3, 0.55, 0.7);

/// Two-tone albedo split at `u = 0.5`, with ground-truth specular. The
/// sphere is Lambertian; the blob carries a moderately glossy lobe.
pub fn ground_truth_materials(spec: &SyntheticSpec) -> Materials {
    let n = spec.texture_size;
    let albedo = Grid::from_fn(n, n, |x, y| if texel_uv(x, y, n).0 < 0.5 { ALBEDO_A } else { ALBEDO_B });
    let (intensity, roughness) = match spec.shape {
        Shape::Sphere => (0.0, 0.5),
        Shape::DentedBlob => (0.6, 0.15),
    };
    Materials { albedo, intensity: Grid::filled(n, n, intensity), roughness: Grid::filled(n, n, roughness) }
}

/// Neutral starting point for optimization.
pub fn initial_materials(size: usize) -> Materials {
    Materials::constant(size, Rgb::splat(0.5), 0.25, 0.4)
}

pub fn initial_env(res: usize) -> EnvironmentMap {
    EnvironmentMap::constant(res, Rgb::splat(0.5))
}

pub fn sky(d: Vec3) -> Rgb {
    let up = d.y;
    let base = if up >= 0.0 {
        Rgb::new(0.35, 0.5, 0.8) * (0.6 + 0.6 * up) + Rgb::new(0.25, 0.25, 0.2) * (1.0 - up)
    } else {
        Rgb::new(0.3, 0.25, 0.2) * (0.5 + 0.5 * (1.0 + up))
    };
    let sun_dir = Vec3::new(0.45, 0.75, 0.5).normalized();
    let sun = Rgb::new(1.0, 0.9, 0.75) * (6.0 * ((d.dot(sun_dir) - 1.0) / 0.06).exp());
    let window_dir = Vec3::new(-0.7, 0.2, 0.6).normalized();
    let window = Rgb::new(0.9, 1.2, 1.4) * (2.0 * ((d.dot(window_dir) - 1.0) / 0.04).exp());
    base + sun + window
}

pub fn environment(kind: EnvKind, res: usize) -> EnvironmentMap {
    let level = match kind {
        EnvKind::Uniform => CubeLevel::constant(res, Rgb::ONE),
        EnvKind::Sky => CubeLevel::from_fn(res, sky),
    };
    EnvironmentMap::new(level).expect("analytic environment is valid")
}

/// Object-to-world poses; pose 0 is the identity, the rest rotate about
/// the object center by up to `max_rotation_deg` around each axis.
pub fn poses(spec: &SyntheticSpec) -> Vec<Rigid> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let max = spec.max_rotation_deg.to_radians();
    (0..spec.poses)
        .map(|i| {
            if i == 0 {
                return Rigid::IDENTITY;
            }
            let mut angle = || if max > 0.0 { rng.gen_range(-max..=max) } else { 0.0 };
            let (yaw, pitch, roll) = (angle(), angle(), angle() * 0.5);
            let r = Mat3::rotation(Vec3::Y, yaw).mul_mat(&Mat3::rotation(Vec3::X, pitch)).mul_mat(&Mat3::rotation(Vec3::Z, roll));
            Rigid::new(r, Vec3::ZERO)
        })
        .collect()
}

/// Texels whose atlas direction lies inside the dent.
pub fn concavity_texels(spec: &SyntheticSpec) -> Option<Vec<bool>> {
    let dent = spec.dent()?;
    let n = spec.texture_size;
    Some(
        (0..n * n)
            .map(|i| {
                let (u, v) = texel_uv(i % n, i / n, n);
                dent.contains(atlas_direction(u, v))
            })
            .collect(),
    )
}

pub fn target_settings(spec: &SyntheticSpec) -> RenderSettings {
    RenderSettings { budget: spec.budget, seed: spec.seed ^ 0x7a7a, ..RenderSettings::default() }
}

/// Build ground truth and render all target frames.
pub fn generate(spec: &SyntheticSpec, lut: Arc<BrdfLut>) -> Result<SyntheticScene> {
    spec.validate()?;
    let ground_truth = Scene {
        mesh: mesh(spec),
        materials: ground_truth_materials(spec),
        env: environment(spec.env, spec.env_res).prefiltered(),
        camera: camera(spec),
    };
    let pipeline = Pipeline::build(&ground_truth, lut)?;
    let renderer = Renderer::new(&ground_truth, &pipeline, target_settings(spec));
    let mut frames = Vec::with_capacity(spec.poses);
    for (id, pose) in poses(spec).into_iter().enumerate() {
        let mut f = Frame::posed(id, pose);
        let out = renderer.render(&f)?;
        f.image = Some(out.color);
        f.mask = Some(render_mask(&ground_truth.mesh, &pipeline.bvh, &ground_truth.camera, &pose));
        frames.push(f);
    }
    Ok(SyntheticScene { concavity: concavity_texels(spec), ground_truth, frames })
}

/// Ground-truth geometry and camera with neutral materials and lighting.
pub fn initial_scene(gt: &Scene, texture_size: usize, env_res: usize) -> Scene {
    Scene {
        mesh: gt.mesh.clone(),
        materials: initial_materials(texture_size),
        env: initial_env(env_res),
        camera: gt.camera,
    }
}
