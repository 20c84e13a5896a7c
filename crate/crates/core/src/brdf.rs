//! Lambertian diffuse and Kelemen/Szirmay-Kalos style Beckmann specular,
//! NDF importance sampling, and the split-sum BRDF look-up table.
//!
//! The specular lobe is
//!
//! ```text
//! f_s(ωi, ωo) = intensity · D(h) · F(h·ωo) / (2 (1 + ωi·ωo))
//! ```
//!
//! where `D` is Beckmann, `F` is Schlick with a fixed `f0`, and the
//! `1 / (2(1 + ωi·ωo)) = 1 / |ωi + ωo|²` factor is Kelemen's stand-in for
//! `G / (4 (ωi·n)(ωo·n))`.

use std::f64::consts::PI;

use crate::math::{hammersley, Rgb, Vec3};

/// Smallest supported roughness; keeps the NDF finite.
pub const ROUGHNESS_MIN: f64 = 0.01;

/// Fresnel reflectance of skin at normal incidence.
pub const SKIN_F0: f64 = 0.028;

pub const LUT_RESOLUTION: usize = 64;
pub const LUT_SAMPLES: u32 = 1024;
/// Lower bound of the LUT's `cos θ` axis.
pub const LUT_COS_MIN: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpecularParams {
    pub intensity: f64,
    pub roughness: f64,
    pub f0: f64,
}

impl SpecularParams {
    /// Clamps into the valid ranges.
    pub fn new(intensity: f64, roughness: f64, f0: f64) -> Self {
        SpecularParams {
            intensity: intensity.max(0.0),
            roughness: roughness.clamp(ROUGHNESS_MIN, 1.0),
            f0: f0.clamp(0.0, 1.0),
        }
    }
}

#[inline]
pub fn lambert_eval(albedo: Rgb) -> Rgb {
    albedo / PI
}

/// Beckmann NDF as a function of `cos θh = n·h`.
#[inline]
pub fn beckmann_d_cos(cos_h: f64, roughness: f64) -> f64 {
    if cos_h <= 0.0 {
        return 0.0;
    }
    let c2 = cos_h * cos_h;
    let r2 = roughness * roughness;
    ((c2 - 1.0) / (r2 * c2)).exp() / (PI * r2 * c2 * c2)
}

#[inline]
pub fn beckmann_d(n: Vec3, h: Vec3, roughness: f64) -> f64 {
    beckmann_d_cos(n.dot(h), roughness)
}

#[inline]
pub fn schlick_fresnel(f0: f64, v_dot_h: f64) -> f64 {
    f0 + (1.0 - f0) * (1.0 - v_dot_h).clamp(0.0, 1.0).powi(5)
}

/// Specular BRDF value. Symmetric in `wi` and `wo` bit-for-bit.
pub fn kelemen_specular_eval(wi: Vec3, wo: Vec3, n: Vec3, p: &SpecularParams) -> f64 {
    if wi.dot(n) <= 0.0 || wo.dot(n) <= 0.0 {
        return 0.0;
    }
    let sum = wi + wo;
    let len2 = sum.length_squared();
    if len2 <= 0.0 {
        return 0.0;
    }
    let len = len2.sqrt();
    let cos_h = n.dot(sum) / len;
    // h·ωo = |ωi + ωo| / 2, written without picking a side
    let v_dot_h = 0.5 * len;
    p.intensity * beckmann_d_cos(cos_h, p.roughness) * schlick_fresnel(p.f0, v_dot_h) / len2
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NdfSample {
    pub wi: Vec3,
    pub h: Vec3,
    /// Solid-angle density of `wi`.
    pub pdf: f64,
    /// False when `wi` falls below the horizon; the caller gives it weight 0.
    pub above_horizon: bool,
}

/// Half-vector sampling proportional to `D(h)(n·h)`, reflected about `h`.
pub fn sample_ndf(n: Vec3, wo: Vec3, roughness: f64, u: (f64, f64)) -> NdfSample {
    let tan2 = -roughness * roughness * (1.0 - u.0).ln();
    let cos_h = 1.0 / (1.0 + tan2).sqrt();
    let sin_h = (1.0 - cos_h * cos_h).max(0.0).sqrt();
    let phi = 2.0 * PI * u.1;
    let h = n.from_local(Vec3::new(sin_h * phi.cos(), sin_h * phi.sin(), cos_h));
    let wo_h = wo.dot(h);
    let wi = h * (2.0 * wo_h) - wo;
    let pdf = if wo_h > 0.0 { beckmann_d_cos(cos_h, roughness) * cos_h / (4.0 * wo_h) } else { 0.0 };
    NdfSample { wi, h, pdf, above_horizon: wo_h > 0.0 && wi.dot(n) > 0.0 }
}

/// First split-sum factor, tabulated over `(ωo·n, roughness)`: each cell
/// stores `(scale, bias)` with `∫ f_s (ωi·n) dωi ≈ scale·f0 + bias` for unit
/// intensity.
#[derive(Debug, Clone, PartialEq)]
pub struct BrdfLut {
    resolution: usize,
    cells: Vec<[f64; 2]>,
}

/// Bilinear LUT sample plus its partial derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LutSample {
    pub scale: f64,
    pub bias: f64,
    pub d_scale: [f64; 2],
    pub d_bias: [f64; 2],
}

impl LutSample {
    /// `scale·f0 + bias`.
    #[inline]
    pub fn value(&self, f0: f64) -> f64 {
        self.scale * f0 + self.bias
    }

    /// Partial derivatives of [`Self::value`] with respect to `(cos θ, roughness)`.
    #[inline]
    pub fn value_grad(&self, f0: f64) -> [f64; 2] {
        [self.d_scale[0] * f0 + self.d_bias[0], self.d_scale[1] * f0 + self.d_bias[1]]
    }
}

impl BrdfLut {
    /// Cell-center coordinate of axis index `i` on `[lo, 1]`.
    pub fn axis_value(resolution: usize, i: usize, lo: f64) -> f64 {
        lo + (i as f64 + 0.5) * (1.0 - lo) / resolution as f64
    }

    pub fn cos_at(&self, i: usize) -> f64 {
        Self::axis_value(self.resolution, i, LUT_COS_MIN)
    }

    pub fn roughness_at(&self, j: usize) -> f64 {
        Self::axis_value(self.resolution, j, ROUGHNESS_MIN)
    }

    /// Quasi-random NDF-sampled integration of every cell.
    pub fn precompute(resolution: usize, samples: u32) -> Self {
        let mut cells = vec![[0.0; 2]; resolution * resolution];
        for j in 0..resolution {
            let r = Self::axis_value(resolution, j, ROUGHNESS_MIN);
            for i in 0..resolution {
                let c = Self::axis_value(resolution, i, LUT_COS_MIN);
                cells[j * resolution + i] = integrate_cell(c, r, samples);
            }
        }
        BrdfLut { resolution, cells }
    }

    /// Process-wide table at the default resolution and sample count.
    pub fn shared_default() -> std::sync::Arc<BrdfLut> {
        static LUT: std::sync::OnceLock<std::sync::Arc<BrdfLut>> = std::sync::OnceLock::new();
        LUT.get_or_init(|| std::sync::Arc::new(BrdfLut::precompute(LUT_RESOLUTION, LUT_SAMPLES))).clone()
    }

    pub fn from_cells(resolution: usize, cells: Vec<[f64; 2]>) -> Option<Self> {
        (cells.len() == resolution * resolution && resolution >= 2).then_some(BrdfLut { resolution, cells })
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    /// Cell `(cos index i, roughness index j)`.
    pub fn cell(&self, i: usize, j: usize) -> [f64; 2] {
        self.cells[j * self.resolution + i]
    }

    pub fn cells(&self) -> &[[f64; 2]] {
        &self.cells
    }

    /// Bilinear lookup at cell centers with clamped edges.
    pub fn lookup(&self, cos_theta: f64, roughness: f64) -> LutSample {
        let n = self.resolution;
        let axis = |v: f64, lo: f64| -> (usize, f64, f64) {
            let x = (v - lo) / (1.0 - lo) * n as f64 - 0.5;
            let dxdv = n as f64 / (1.0 - lo);
            if x <= 0.0 {
                (0, 0.0, 0.0)
            } else if x >= (n - 1) as f64 {
                (n - 2, 1.0, 0.0)
            } else {
                let i = (x.floor() as usize).min(n - 2);
                (i, x - i as f64, dxdv)
            }
        };
        let (i, tx, dtx) = axis(cos_theta, LUT_COS_MIN);
        let (j, ty, dty) = axis(roughness, ROUGHNESS_MIN);
        let c00 = self.cell(i, j);
        let c10 = self.cell(i + 1, j);
        let c01 = self.cell(i, j + 1);
        let c11 = self.cell(i + 1, j + 1);
        let mut out = LutSample { scale: 0.0, bias: 0.0, d_scale: [0.0; 2], d_bias: [0.0; 2] };
        for k in 0..2 {
            let v0 = c00[k] + (c10[k] - c00[k]) * tx;
            let v1 = c01[k] + (c11[k] - c01[k]) * tx;
            let value = v0 + (v1 - v0) * ty;
            let d_cos = ((c10[k] - c00[k]) * (1.0 - ty) + (c11[k] - c01[k]) * ty) * dtx;
            let d_r = (v1 - v0) * dty;
            if k == 0 {
                out.scale = value;
                out.d_scale = [d_cos, d_r];
            } else {
                out.bias = value;
                out.d_bias = [d_cos, d_r];
            }
        }
        out
    }
}

/// `(scale, bias)` for one `(cos θo, roughness)` pair.
pub fn integrate_cell(cos_o: f64, roughness: f64, samples: u32) -> [f64; 2] {
    let n = Vec3::Z;
    let wo = Vec3::new((1.0 - cos_o * cos_o).max(0.0).sqrt(), 0.0, cos_o);
    let mut acc = [0.0; 2];
    for s in 0..samples {
        let smp = sample_ndf(n, wo, roughness, hammersley(s, samples));
        if !smp.above_horizon {
            continue;
        }
        let v_dot_h = wo.dot(smp.h);
        let cos_i = smp.wi.z;
        // f_s · cos / pdf with the Fresnel factor split off
        let w = cos_i / (v_dot_h * smp.h.z);
        let fc = (1.0 - v_dot_h).powi(5);
        acc[0] += w * (1.0 - fc);
        acc[1] += w * fc;
    }
    [acc[0] / samples as f64, acc[1] / samples as f64]
}
