//! Unconstrained parameterization of the optimized assets.
//!
//! Albedo and specular intensity are sigmoid logits, roughness maps through
//! `r_min + (1 − r_min)·σ`, environment radiance is `softplus(latent)`, and
//! vertex positions are optimized directly.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::brdf::ROUGHNESS_MIN;
use crate::error::{Error, Result};
use crate::lighting::{CubeLevel, EnvironmentMap};
use crate::math::{logit, sigmoid, softplus, softplus_inverse, Rgb, Vec3};
use crate::render::{Grid, Scene};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamGroup {
    Vertices,
    Albedo,
    Specular,
    Roughness,
    Env,
}

impl ParamGroup {
    pub const ALL: [ParamGroup; 5] =
        [ParamGroup::Vertices, ParamGroup::Albedo, ParamGroup::Specular, ParamGroup::Roughness, ParamGroup::Env];

    pub fn name(self) -> &'static str {
        match self {
            ParamGroup::Vertices => "vertices",
            ParamGroup::Albedo => "albedo",
            ParamGroup::Specular => "specular",
            ParamGroup::Roughness => "roughness",
            ParamGroup::Env => "env",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for ParamGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ParamGroup {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "vertices" | "geometry" => Ok(ParamGroup::Vertices),
            "albedo" => Ok(ParamGroup::Albedo),
            "specular" | "intensity" => Ok(ParamGroup::Specular),
            "roughness" => Ok(ParamGroup::Roughness),
            "env" | "environment" => Ok(ParamGroup::Env),
            other => Err(Error::Config(format!(
                "unknown parameter group `{other}` (expected vertices, albedo, specular, roughness or env)"
            ))),
        }
    }
}

/// Parse a comma-separated group list such as `"vertices,env"`.
pub fn parse_groups(list: &str) -> Result<BTreeSet<ParamGroup>> {
    list.split(',').filter(|s| !s.trim().is_empty()).map(str::parse).collect()
}

/// One flat array per parameter group.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupArrays([Vec<f64>; 5]);

impl GroupArrays {
    pub fn get(&self, g: ParamGroup) -> &[f64] {
        &self.0[g.index()]
    }

    pub fn get_mut(&mut self, g: ParamGroup) -> &mut Vec<f64> {
        &mut self.0[g.index()]
    }

    pub fn zeros_like(&self) -> Self {
        GroupArrays(std::array::from_fn(|i| vec![0.0; self.0[i].len()]))
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|a| a.iter().all(|&v| v == 0.0))
    }
}

/// Gradients of the total loss with respect to [`Parameters`].
pub type GradientSet = GroupArrays;

#[derive(Debug, Clone, PartialEq)]
pub struct Parameters {
    pub values: GroupArrays,
    albedo_size: (usize, usize),
    specular_size: (usize, usize),
    roughness_size: (usize, usize),
    env_res: usize,
}

pub(crate) fn flatten_vec3(v: &[Vec3]) -> Vec<f64> {
    v.iter().flat_map(|p| p.to_array()).collect()
}

pub(crate) fn unflatten_vec3(v: &[f64]) -> Vec<Vec3> {
    v.chunks_exact(3).map(|c| Vec3::new(c[0], c[1], c[2])).collect()
}

fn flatten_rgb(v: &[Rgb]) -> Vec<f64> {
    v.iter().flat_map(|c| c.0).collect()
}

fn unflatten_rgb(v: &[f64]) -> Vec<Rgb> {
    v.chunks_exact(3).map(|c| Rgb::new(c[0], c[1], c[2])).collect()
}

fn size<T: Copy>(g: &Grid<T>) -> (usize, usize) {
    (g.width(), g.height())
}

#[inline]
fn rough_decode(x: f64) -> f64 {
    ROUGHNESS_MIN + (1.0 - ROUGHNESS_MIN) * sigmoid(x)
}

#[inline]
fn rough_encode(r: f64) -> f64 {
    logit(((r - ROUGHNESS_MIN) / (1.0 - ROUGHNESS_MIN)).clamp(0.0, 1.0))
}

#[inline]
fn dsigmoid(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 - s)
}

impl Parameters {
    /// Latents that decode to the assets of `scene` (values outside the
    /// valid ranges are clamped first).
    pub fn encode(scene: &Scene) -> Self {
        let m = &scene.materials;
        let albedo = m.albedo.data().iter().flat_map(|c| c.0.map(|v| logit(v.clamp(0.0, 1.0)))).collect();
        let specular = m.intensity.data().iter().map(|&v| logit(v.clamp(0.0, 1.0))).collect();
        let roughness = m.roughness.data().iter().map(|&r| rough_encode(r)).collect();
        let env = scene.env.mip0().texels().iter().flat_map(|c| c.0.map(|v| softplus_inverse(v.max(0.0)))).collect();
        Parameters {
            values: GroupArrays([flatten_vec3(scene.mesh.positions()), albedo, specular, roughness, env]),
            albedo_size: size(&m.albedo),
            specular_size: size(&m.intensity),
            roughness_size: size(&m.roughness),
            env_res: scene.env.base_res(),
        }
    }

    pub fn get(&self, g: ParamGroup) -> &[f64] {
        self.values.get(g)
    }

    pub fn get_mut(&mut self, g: ParamGroup) -> &mut Vec<f64> {
        self.values.get_mut(g)
    }

    pub fn positions(&self) -> Vec<Vec3> {
        unflatten_vec3(self.get(ParamGroup::Vertices))
    }

    pub fn albedo(&self) -> Grid<Rgb> {
        let (w, h) = self.albedo_size;
        let d = self.get(ParamGroup::Albedo).iter().map(|&x| sigmoid(x)).collect::<Vec<_>>();
        Grid::from_vec(w, h, unflatten_rgb(&d)).expect("albedo shape")
    }

    pub fn intensity(&self) -> Grid<f64> {
        let (w, h) = self.specular_size;
        Grid::from_vec(w, h, self.get(ParamGroup::Specular).iter().map(|&x| sigmoid(x)).collect()).expect("specular shape")
    }

    pub fn roughness(&self) -> Grid<f64> {
        let (w, h) = self.roughness_size;
        Grid::from_vec(w, h, self.get(ParamGroup::Roughness).iter().map(|&x| rough_decode(x)).collect())
            .expect("roughness shape")
    }

    /// Mip-0 radiance.
    pub fn env_mip0(&self) -> CubeLevel {
        let d: Vec<f64> = self.get(ParamGroup::Env).iter().map(|&x| softplus(x)).collect();
        CubeLevel::new(self.env_res, unflatten_rgb(&d)).expect("environment shape")
    }

    /// Overwrite the part of `scene` that group `g` controls. The
    /// environment is re-prefiltered.
    pub fn decode_into(&self, g: ParamGroup, scene: &mut Scene) -> Result<()> {
        match g {
            ParamGroup::Vertices => scene.mesh.set_positions(self.positions())?,
            ParamGroup::Albedo => scene.materials.albedo = self.albedo(),
            ParamGroup::Specular => scene.materials.intensity = self.intensity(),
            ParamGroup::Roughness => scene.materials.roughness = self.roughness(),
            ParamGroup::Env => scene.env = EnvironmentMap::new(self.env_mip0())?.prefiltered(),
        }
        if g != ParamGroup::Vertices && g != ParamGroup::Env {
            scene.materials.validate()?;
        }
        Ok(())
    }

    /// Chain decoded-space gradients back to the latents of group `g`.
    pub fn chain(&self, g: ParamGroup, decoded_grad: &[f64]) -> Vec<f64> {
        let x = self.get(g);
        debug_assert_eq!(x.len(), decoded_grad.len());
        let dmap: fn(f64) -> f64 = match g {
            ParamGroup::Vertices => return decoded_grad.to_vec(),
            ParamGroup::Albedo | ParamGroup::Specular => dsigmoid,
            ParamGroup::Roughness => |x| (1.0 - ROUGHNESS_MIN) * dsigmoid(x),
            ParamGroup::Env => sigmoid,
        };
        x.iter().zip(decoded_grad).map(|(&x, &g)| if g == 0.0 { 0.0 } else { g * dmap(x) }).collect()
    }
}

pub(crate) fn rgb_to_flat(v: &[Rgb]) -> Vec<f64> {
    flatten_rgb(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn group_names_round_trip() {
        for g in ParamGroup::ALL {
            assert_eq!(g.name().parse::<ParamGroup>().unwrap(), g);
        }
        assert_eq!(parse_groups("vertices, env").unwrap().len(), 2);
        assert!(parse_groups("shape").is_err());
    }

    #[test]
    fn roughness_codec_round_trips() {
        for r in [0.05, 0.3, 0.9] {
            assert!((rough_decode(rough_encode(r)) - r).abs() < 1e-12);
        }
        assert_eq!(rough_decode(rough_encode(ROUGHNESS_MIN)), ROUGHNESS_MIN);
    }
}
