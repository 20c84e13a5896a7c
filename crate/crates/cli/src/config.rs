//! Run configuration files.
//!
//! One JSON document configures every command; each command reads the
//! sections it needs. Relative paths resolve against the config file's
//! directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use occlurend_core::brdf::{LUT_RESOLUTION, LUT_SAMPLES};
use occlurend_core::io::read_json;
use occlurend_core::optim::{OptimConfig, ParamGroup};
use occlurend_core::shading::{SampleBudget, VisibilityMode};
use occlurend_core::synth::SyntheticSpec;
use occlurend_core::{Error, Result};

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LutOptions {
    pub resolution: usize,
    pub samples: u32,
}

impl Default for LutOptions {
    fn default() -> Self {
        LutOptions { resolution: LUT_RESOLUTION, samples: LUT_SAMPLES }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderOptions {
    pub budget: SampleBudget,
    pub visibility: VisibilityMode,
    pub seed: u64,
    /// Frame ids to render; all frames of the scene when absent.
    pub frames: Option<Vec<usize>>,
}

impl Default for RenderOptions {
    fn default() -> Self {
        RenderOptions { budget: SampleBudget::default(), visibility: VisibilityMode::default(), seed: 0, frames: None }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsOptions {
    /// Image pairs compared pixel-wise.
    pub images_a: Vec<PathBuf>,
    pub images_b: Vec<PathBuf>,
    /// One region mask per pair, or a single mask for all pairs.
    pub regions: Vec<PathBuf>,
    pub mesh_a: Option<PathBuf>,
    pub mesh_b: Option<PathBuf>,
    pub albedo_a: Option<PathBuf>,
    pub albedo_b: Option<PathBuf>,
    /// Error that maps to the top of the false-color ramp.
    pub error_map_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    /// `scene.json` for render, relight, optimize and prefilter.
    pub scene: Option<PathBuf>,
    /// Environment directory: the new lighting for relight, the input for
    /// prefilter when no scene is given.
    pub env: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub lut: LutOptions,
    pub render: RenderOptions,
    pub optimize: OptimConfig,
    /// Checkpoint period in iterations; 0 writes only the final checkpoint.
    pub checkpoint_every: usize,
    /// Held-out frames evaluated after optimization.
    pub eval_scene: Option<PathBuf>,
    pub synthesize: SyntheticSpec,
    pub metrics: MetricsOptions,
    /// Resample textures and environment to these sizes before optimizing.
    pub texture_size: Option<usize>,
    pub env_res: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            schema_version: CONFIG_SCHEMA_VERSION,
            scene: None,
            env: None,
            out: None,
            lut: LutOptions::default(),
            render: RenderOptions::default(),
            optimize: OptimConfig::default(),
            checkpoint_every: 500,
            eval_scene: None,
            synthesize: SyntheticSpec::default(),
            metrics: MetricsOptions { error_map_max: 0.1, ..MetricsOptions::default() },
            texture_size: None,
            env_res: None,
        }
    }
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub iterations: Option<usize>,
    pub no_visibility: bool,
    pub freeze: Vec<ParamGroup>,
    pub out: Option<PathBuf>,
}

fn resolve(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

fn resolve_all(base: &Path, v: &mut [PathBuf]) {
    for p in v {
        if p.is_relative() {
            *p = base.join(&*p);
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg: RunConfig = read_json(path).map_err(|e| match e {
            Error::Format { path, message } => Error::Config(format!("{}: {message}", path.display())),
            other => other,
        })?;
        let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        resolve(&base, &mut cfg.scene);
        resolve(&base, &mut cfg.env);
        resolve(&base, &mut cfg.out);
        resolve(&base, &mut cfg.eval_scene);
        resolve(&base, &mut cfg.metrics.mesh_a);
        resolve(&base, &mut cfg.metrics.mesh_b);
        resolve(&base, &mut cfg.metrics.albedo_a);
        resolve(&base, &mut cfg.metrics.albedo_b);
        resolve_all(&base, &mut cfg.metrics.images_a);
        resolve_all(&base, &mut cfg.metrics.images_b);
        resolve_all(&base, &mut cfg.metrics.regions);
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            self.optimize.seed = seed;
            self.render.seed = seed;
            self.synthesize.seed = seed;
        }
        if let Some(n) = o.iterations {
            self.optimize.iterations = n;
        }
        if o.no_visibility {
            self.optimize.visibility = VisibilityMode::Disabled;
            self.render.visibility = VisibilityMode::Disabled;
        }
        self.optimize.frozen.extend(o.freeze.iter().copied());
        if let Some(out) = &o.out {
            self.out = Some(out.clone());
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema_version {} (expected {CONFIG_SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.lut.resolution < 2 || self.lut.samples == 0 {
            return Err(Error::Config("lut needs resolution ≥ 2 and at least one sample".into()));
        }
        let b = &self.render.budget;
        if b.n_light == 0 || b.n_brdf == 0 || b.n_vis == 0 {
            return Err(Error::Config("render sample counts must be at least 1".into()));
        }
        self.optimize.validate()?;
        if let Some(t) = self.texture_size {
            if t == 0 {
                return Err(Error::Config("texture_size must be positive".into()));
            }
        }
        if let Some(r) = self.env_res {
            if !r.is_power_of_two() || r < 8 {
                return Err(Error::Config(format!("env_res must be a power of two ≥ 8, got {r}")));
            }
        }
        if !(self.metrics.error_map_max >= 0.0) {
            return Err(Error::Config("metrics.error_map_max must be non-negative".into()));
        }
        Ok(())
    }

    pub fn out_dir(&self) -> Result<&Path> {
        self.out.as_deref().ok_or_else(|| Error::Config("an output directory is required (`out` or --out)".into()))
    }

    pub fn scene_path(&self) -> Result<&Path> {
        self.scene.as_deref().ok_or_else(|| Error::Config("`scene` is required for this command".into()))
    }
}
