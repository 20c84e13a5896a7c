//! Environment cubemaps, prefiltering, and light sampling.

pub mod cubemap;
pub mod prefilter;
pub mod sampler;

pub use cubemap::{dir_to_texel, texel_to_dir, BilinearTaps, CubeLevel, FACE_NAMES};
pub use prefilter::{level_count, level_roughness, pyramid_adjoint, EnvironmentMap, PrefilterOperator, PrefilteredTaps};
pub use sampler::{LightSample, LightSampler};
