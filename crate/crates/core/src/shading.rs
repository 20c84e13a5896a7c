//! Per-point shading: ray-traced diffuse with MIS and visibility-gated
//! split-sum specular.
//!
//! Shading is split in two phases so gradients can reuse the forward samples.
//! [`trace_point`] draws every random quantity (diffuse sample directions and
//! their visibility, the specular visibility estimate Ṽ). [`evaluate`] is a
//! deterministic function of the traced samples and the differentiable inputs
//! (normal, view direction, material values, environment), and
//! [`evaluate_backward`] is its exact adjoint.

use rand::Rng;

use crate::brdf::{beckmann_d_cos, sample_ndf, BrdfLut, SpecularParams, SKIN_F0};
use crate::error::Result;
use crate::geometry::{occlusion_query, Bvh, TriangleMesh};
use crate::lighting::{EnvironmentMap, LightSampler};
use crate::math::{Rgb, Rigid, Vec3};
use crate::sampling::{cosine_hemisphere, latin_hypercube, stratified_2d};

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleBudget {
    /// Light samples for the diffuse integral.
    pub n_light: usize,
    /// Cosine samples for the diffuse integral.
    pub n_brdf: usize,
    /// NDF samples for the specular visibility estimate.
    pub n_vis: usize,
}

impl Default for SampleBudget {
    fn default() -> Self {
        SampleBudget { n_light: 256, n_brdf: 256, n_vis: 64 }
    }
}

impl SampleBudget {
    pub fn new(n_light: usize, n_brdf: usize, n_vis: usize) -> Self {
        SampleBudget { n_light: n_light.max(1), n_brdf: n_brdf.max(1), n_vis: n_vis.max(1) }
    }
}

/// How Ṽ is estimated from the NDF samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VisibilityMode {
    /// Fraction of valid NDF samples whose ray escapes.
    #[default]
    Normalized,
    /// `(1/K) Σ V_k / D(h_k)`, the estimator with the division by `D` taken
    /// literally. Not bounded by 1; kept for comparison.
    DividedByD,
    /// Ṽ ≡ 1 (plain split-sum).
    Disabled,
}

/// Mesh used for occlusion rays, placed in the world by `object_to_world`.
#[derive(Debug, Clone, Copy)]
pub struct Occluder<'a> {
    pub mesh: &'a TriangleMesh,
    pub bvh: &'a Bvh,
    pub eps: f64,
    pub object_to_world: Rigid,
}

impl Occluder<'_> {
    /// `V(x, ω)` for world-space inputs; `normal` is the offset direction.
    pub fn visible(&self, x: Vec3, normal: Vec3, dir: Vec3) -> bool {
        let r = self.object_to_world.rotation.transpose();
        let x_o = r.mul_vec(x - self.object_to_world.translation);
        occlusion_query(self.bvh, self.mesh, x_o, r.mul_vec(normal), r.mul_vec(dir), self.eps) > 0.0
    }
}

/// Shared, read-only state for shading.
#[derive(Debug, Clone, Copy)]
pub struct ShadingContext<'a> {
    pub env: &'a EnvironmentMap,
    pub sampler: &'a LightSampler,
    pub lut: &'a BrdfLut,
    /// `None` treats every ray as unoccluded.
    pub occluder: Option<Occluder<'a>>,
    pub budget: SampleBudget,
    pub visibility: VisibilityMode,
    pub f0: f64,
}

impl<'a> ShadingContext<'a> {
    pub fn new(env: &'a EnvironmentMap, sampler: &'a LightSampler, lut: &'a BrdfLut) -> Self {
        ShadingContext {
            env,
            sampler,
            lut,
            occluder: None,
            budget: SampleBudget::default(),
            visibility: VisibilityMode::Normalized,
            f0: SKIN_F0,
        }
    }

    fn visible(&self, x: Vec3, normal: Vec3, dir: Vec3) -> bool {
        self.occluder.map_or(true, |o| o.visible(x, normal, dir))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShadePoint {
    /// World-space position.
    pub x: Vec3,
    /// Unit shading normal.
    pub n: Vec3,
    /// Unit geometric (face) normal.
    pub ng: Vec3,
    /// Unit direction towards the camera.
    pub wo: Vec3,
    pub albedo: Rgb,
    pub spec: SpecularParams,
}

/// One unoccluded diffuse sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffuseSample {
    pub dir: Vec3,
    /// Mip-0 texel seen along `dir`.
    pub texel: u32,
    /// `n_light · p_light(dir)`.
    pub light_density: f64,
}

/// Random outcomes for one shade point.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointTrace {
    pub diffuse: Vec<DiffuseSample>,
    /// Specular visibility Ṽ.
    pub visibility: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Shaded {
    pub color: Rgb,
    pub diffuse: Rgb,
    pub specular: Rgb,
    pub visibility: f64,
}

/// Draw the MIS sample set for the diffuse integral. Occluded samples and
/// samples below either horizon contribute nothing and are dropped.
pub fn draw_diffuse_samples(point: &ShadePoint, ctx: &ShadingContext, rng: &mut impl Rng) -> Vec<DiffuseSample> {
    let b = &ctx.budget;
    let mip0 = ctx.env.mip0();
    let mut out = Vec::with_capacity(b.n_light + b.n_brdf);
    let mut keep = |dir: Vec3, texel: usize, p_light: f64| {
        if dir.dot(point.n) > 0.0 && dir.dot(point.ng) > 0.0 && ctx.visible(point.x, point.ng, dir) {
            out.push(DiffuseSample { dir, texel: texel as u32, light_density: b.n_light as f64 * p_light });
        }
    };
    // The light sampler inverts a 1D CDF with u.0, so that axis needs fine strata.
    for u in latin_hypercube(b.n_light, rng) {
        let s = ctx.sampler.sample(mip0, u);
        keep(s.dir, s.texel, s.pdf);
    }
    for u in stratified_2d(b.n_brdf, rng) {
        let dir = point.n.from_local(cosine_hemisphere(u)).normalized();
        keep(dir, mip0.texel_index(dir), ctx.sampler.pdf(dir));
    }
    out
}

/// Ṽ for the point's roughness and view direction.
pub fn estimate_specular_visibility(point: &ShadePoint, ctx: &ShadingContext, rng: &mut impl Rng) -> f64 {
    if ctx.visibility == VisibilityMode::Disabled {
        return 1.0;
    }
    if point.n.dot(point.wo) <= 0.0 {
        return 0.0;
    }
    let r = point.spec.roughness;
    let k = ctx.budget.n_vis;
    let (mut valid, mut hits, mut divided) = (0usize, 0usize, 0.0);
    for u in stratified_2d(k, rng) {
        let s = sample_ndf(point.n, point.wo, r, u);
        if !s.above_horizon || s.wi.dot(point.ng) <= 0.0 {
            continue;
        }
        valid += 1;
        if ctx.visible(point.x, point.ng, s.wi) {
            hits += 1;
            divided += 1.0 / beckmann_d_cos(s.h.dot(point.n), r);
        }
    }
    match ctx.visibility {
        VisibilityMode::Normalized if valid > 0 => hits as f64 / valid as f64,
        VisibilityMode::DividedByD => divided / k as f64,
        _ => 0.0,
    }
}

pub fn trace_point(point: &ShadePoint, ctx: &ShadingContext, rng: &mut impl Rng) -> PointTrace {
    let diffuse = draw_diffuse_samples(point, ctx, rng);
    let visibility = estimate_specular_visibility(point, ctx, rng);
    PointTrace { diffuse, visibility }
}

/// Differentiable per-point inputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShadeInputs {
    pub n: Vec3,
    pub wo: Vec3,
    pub albedo: Rgb,
    pub intensity: f64,
    pub roughness: f64,
}

impl From<&ShadePoint> for ShadeInputs {
    fn from(p: &ShadePoint) -> Self {
        ShadeInputs { n: p.n, wo: p.wo, albedo: p.albedo, intensity: p.spec.intensity, roughness: p.spec.roughness }
    }
}

/// Adjoints of [`ShadeInputs`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ShadeGrads {
    pub n: Vec3,
    pub wo: Vec3,
    pub albedo: Rgb,
    pub intensity: f64,
    pub roughness: f64,
}

#[inline]
fn mis_coefficient(cos: f64, light_density: f64, brdf_scale: f64) -> f64 {
    cos / (light_density + brdf_scale * cos)
}

/// `Σ_j L_j cos_j / (n_l p_l + n_b cos_j/π)`; the diffuse radiance is
/// `ρ/π` times this.
pub fn diffuse_sum(samples: &[DiffuseSample], n: Vec3, ctx: &ShadingContext) -> Rgb {
    let texels = ctx.env.mip0().texels();
    let brdf_scale = ctx.budget.n_brdf as f64 / PI;
    let mut acc = Rgb::ZERO;
    for s in samples {
        let cos = s.dir.dot(n);
        if cos > 0.0 {
            acc += texels[s.texel as usize] * mis_coefficient(cos, s.light_density, brdf_scale);
        }
    }
    acc
}

/// Split-sum specular radiance with visibility gating.
pub fn specular(inputs: &ShadeInputs, visibility: f64, ctx: &ShadingContext) -> Result<Rgb> {
    let cos = inputs.n.dot(inputs.wo);
    if cos <= 0.0 || inputs.intensity == 0.0 || visibility == 0.0 {
        // still require a pyramid, so a missing one is reported consistently
        ctx.env.levels()?;
        return Ok(Rgb::ZERO);
    }
    let wr = inputs.n * (2.0 * cos) - inputs.wo;
    let lut = ctx.lut.lookup(cos, inputs.roughness).value(ctx.f0);
    let radiance = ctx.env.lookup_prefiltered(wr, inputs.roughness)?;
    Ok(radiance * (inputs.intensity * lut * visibility))
}

/// Returns `(diffuse, specular)` radiance.
pub fn evaluate(inputs: &ShadeInputs, trace: &PointTrace, ctx: &ShadingContext) -> Result<(Rgb, Rgb)> {
    let diffuse = inputs.albedo * diffuse_sum(&trace.diffuse, inputs.n, ctx) / PI;
    let spec = specular(inputs, trace.visibility, ctx)?;
    Ok((diffuse, spec))
}

/// Adjoint of [`evaluate`]. `g_diffuse` and `g_specular` are the upstream
/// gradients of the two outputs; environment gradients are reported through
/// `env_sink(flat_pyramid_index, grad)` with indices from
/// [`EnvironmentMap::level_offsets`] (mip 0 occupies the first block).
pub fn evaluate_backward(
    inputs: &ShadeInputs,
    trace: &PointTrace,
    ctx: &ShadingContext,
    g_diffuse: Rgb,
    g_specular: Rgb,
    level_offsets: &[usize],
    mut env_sink: impl FnMut(usize, Rgb),
) -> Result<ShadeGrads> {
    let mut g = ShadeGrads::default();
    let texels = ctx.env.mip0().texels();
    let brdf_scale = ctx.budget.n_brdf as f64 / PI;

    if g_diffuse != Rgb::ZERO {
        let weighted = g_diffuse * inputs.albedo / PI;
        let mut sum = Rgb::ZERO;
        for s in &trace.diffuse {
            let cos = s.dir.dot(inputs.n);
            if cos <= 0.0 {
                continue;
            }
            let l = texels[s.texel as usize];
            let c = mis_coefficient(cos, s.light_density, brdf_scale);
            sum += l * c;
            env_sink(s.texel as usize, weighted * c);
            let denom = s.light_density + brdf_scale * cos;
            let dc_dcos = s.light_density / (denom * denom);
            g.n += s.dir * (weighted.dot(l) * dc_dcos);
        }
        g.albedo = g_diffuse * sum / PI;
    }

    let cos = inputs.n.dot(inputs.wo);
    if g_specular != Rgb::ZERO && cos > 0.0 && inputs.intensity != 0.0 && trace.visibility != 0.0 {
        let (n, wo, r) = (inputs.n, inputs.wo, inputs.roughness);
        let wr = n * (2.0 * cos) - wo;
        let lut_sample = ctx.lut.lookup(cos, r);
        let lut = lut_sample.value(ctx.f0);
        let lut_grad = lut_sample.value_grad(ctx.f0);
        let taps = ctx.env.prefiltered_taps(wr, r)?;
        let v = trace.visibility;
        let ge = g_specular.dot(taps.value);
        g.intensity = v * lut * ge;
        let d_lut = inputs.intensity * v * ge;
        let d_radiance = g_specular * (inputs.intensity * lut * v);
        taps.for_each_texel(level_offsets, |i, w| env_sink(i, d_radiance * w));
        let d_wr = taps.dir_gradient(ctx.env, d_radiance);
        g.roughness = d_lut * lut_grad[1] + d_radiance.dot(taps.d_roughness);
        let d_cos = d_lut * lut_grad[0];
        // cos = n·ωo, ωr = 2 cos n − ωo
        let wr_n = d_wr.dot(n);
        g.n += wo * d_cos + (d_wr * cos + wo * wr_n) * 2.0;
        g.wo += n * d_cos + n * (2.0 * wr_n) - d_wr;
    }
    Ok(g)
}

/// Trace and evaluate one point.
pub fn shade(point: &ShadePoint, ctx: &ShadingContext, rng: &mut impl Rng) -> Result<Shaded> {
    let trace = trace_point(point, ctx, rng);
    let (diffuse, specular) = evaluate(&point.into(), &trace, ctx)?;
    Ok(Shaded { color: diffuse + specular, diffuse, specular, visibility: trace.visibility })
}

/// Diffuse radiance only.
pub fn shade_diffuse(point: &ShadePoint, ctx: &ShadingContext, rng: &mut impl Rng) -> Rgb {
    point.albedo * diffuse_sum(&draw_diffuse_samples(point, ctx, rng), point.n, ctx) / PI
}

/// Specular radiance for a given Ṽ.
pub fn shade_specular(point: &ShadePoint, ctx: &ShadingContext, visibility: f64) -> Result<Rgb> {
    specular(&point.into(), visibility, ctx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lighting::CubeLevel;
    use crate::sampling::pixel_rng;

    fn up_point(albedo: Rgb, intensity: f64, r: f64) -> ShadePoint {
        ShadePoint {
            x: Vec3::ZERO,
            n: Vec3::Z,
            ng: Vec3::Z,
            wo: Vec3::new(0.3, 0.1, 0.9).normalized(),
            albedo,
            spec: SpecularParams::new(intensity, r, SKIN_F0),
        }
    }

    #[test]
    fn furnace_point_integrates_to_albedo() {
        let env = EnvironmentMap::constant(16, Rgb::ONE).prefiltered();
        let sampler = LightSampler::new(env.mip0());
        let lut = BrdfLut::precompute(16, 64);
        let ctx = ShadingContext::new(&env, &sampler, &lut);
        for p in 0..20 {
            let v = shade_diffuse(&up_point(Rgb::ONE, 0.0, 0.5), &ctx, &mut pixel_rng(3, 0, 0, p));
            for c in 0..3 {
                assert!((v[c] - 1.0).abs() < 0.02, "{v:?}");
            }
        }
    }

    #[test]
    fn zero_visibility_kills_specular() {
        let env = EnvironmentMap::constant(8, Rgb::ONE).prefiltered();
        let sampler = LightSampler::new(env.mip0());
        let lut = BrdfLut::precompute(16, 64);
        let ctx = ShadingContext::new(&env, &sampler, &lut);
        assert_eq!(shade_specular(&up_point(Rgb::ONE, 1.0, 0.3), &ctx, 0.0).unwrap(), Rgb::ZERO);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mip0 = CubeLevel::from_fn(8, |d| Rgb::new(1.0 + 0.5 * d.x, 0.8 + 0.3 * d.y * d.z, 1.2 - 0.4 * d.z));
        let env = EnvironmentMap::new(mip0).unwrap().prefiltered();
        let sampler = LightSampler::new(env.mip0());
        let lut = BrdfLut::precompute(16, 64);
        let mut ctx = ShadingContext::new(&env, &sampler, &lut);
        ctx.budget = SampleBudget::new(16, 16, 4);
        let point = up_point(Rgb::new(0.6, 0.4, 0.2), 0.7, 0.37);
        let trace = trace_point(&point, &ctx, &mut pixel_rng(1, 0, 0, 0));
        let inputs = ShadeInputs::from(&point);
        let gd = Rgb::new(0.3, -0.2, 0.5);
        let gs = Rgb::new(-0.4, 0.9, 0.1);
        let f = |i: &ShadeInputs| {
            let (d, s) = evaluate(i, &trace, &ctx).unwrap();
            gd.dot(d) + gs.dot(s)
        };
        let offsets = env.level_offsets();
        let g = evaluate_backward(&inputs, &trace, &ctx, gd, gs, &offsets, |_, _| {}).unwrap();
        let h = 1e-6;
        let check = |name: &str, analytic: f64, plus: ShadeInputs, minus: ShadeInputs| {
            let fd = (f(&plus) - f(&minus)) / (2.0 * h);
            assert!((fd - analytic).abs() <= 1e-5 + 1e-4 * fd.abs(), "{name}: fd {fd} analytic {analytic}");
        };
        check("intensity", g.intensity, ShadeInputs { intensity: 0.7 + h, ..inputs }, ShadeInputs { intensity: 0.7 - h, ..inputs });
        check("roughness", g.roughness, ShadeInputs { roughness: 0.37 + h, ..inputs }, ShadeInputs { roughness: 0.37 - h, ..inputs });
        for (k, axis) in [Vec3::X, Vec3::Y, Vec3::Z].into_iter().enumerate() {
            check(&format!("n{k}"), g.n.dot(axis), ShadeInputs { n: inputs.n + axis * h, ..inputs }, ShadeInputs { n: inputs.n - axis * h, ..inputs });
            check(&format!("wo{k}"), g.wo.dot(axis), ShadeInputs { wo: inputs.wo + axis * h, ..inputs }, ShadeInputs { wo: inputs.wo - axis * h, ..inputs });
        }
        for c in 0..3 {
            let mut p = inputs;
            let mut m = inputs;
            p.albedo.0[c] += h;
            m.albedo.0[c] -= h;
            check("albedo", g.albedo[c], p, m);
        }
    }
}
