//! Roughness-indexed prefiltering of an environment cubemap.
//!
//! Each prefiltered texel is a normalized NDF-weighted average of mip-0
//! radiance, estimated with Hammersley NDF samples (`n = ω_o = ω_r`) and
//! filtered importance sampling from a box-filtered copy of mip 0. The sample
//! positions and weights do not depend on radiance, so the whole filter is a
//! fixed sparse linear operator per base resolution. Building it once lets the
//! optimizer re-prefilter every iteration cheaply and back-propagate through
//! the transpose.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rayon::prelude::*;

use super::cubemap::{texel_to_dir, BilinearTaps, CubeLevel};
use crate::brdf::{beckmann_d_cos, sample_ndf, ROUGHNESS_MIN};
use crate::error::{Error, Result};
use crate::math::{hammersley, Rgb, Vec3};

/// Resolution of the coarsest prefiltered level.
pub const MIN_LEVEL_RES: usize = 8;

/// NDF samples per texel at the coarsest level; each finer level halves it.
pub const COARSEST_SAMPLES: u32 = 1024;

const MIN_SAMPLES: u32 = 16;

/// Number of pyramid levels for a base resolution: halving down to
/// `MIN_LEVEL_RES` (6 for a 256 base).
pub fn level_count(base_res: usize) -> usize {
    let mut n = 1;
    let mut res = base_res;
    while res > MIN_LEVEL_RES {
        res /= 2;
        n += 1;
    }
    n
}

/// Roughness stored at level `k`: affine from `ROUGHNESS_MIN` at level 0 to 1
/// at the coarsest level.
pub fn level_roughness(k: usize, levels: usize) -> f64 {
    if levels <= 1 {
        ROUGHNESS_MIN
    } else {
        ROUGHNESS_MIN + (1.0 - ROUGHNESS_MIN) * k as f64 / (levels - 1) as f64
    }
}

/// Samples per texel used for level `k`.
pub fn level_samples(k: usize, levels: usize) -> u32 {
    (COARSEST_SAMPLES >> (levels - 1 - k).min(31)).max(MIN_SAMPLES)
}

#[derive(Debug)]
struct Rows {
    res: usize,
    offsets: Vec<u32>,
    sources: Vec<u32>,
    weights: Vec<f32>,
    /// Reciprocal of the f64 sum of each row's weights.
    inv_sums: Vec<f64>,
}

/// Sparse prefilter operator for one base resolution.
#[derive(Debug)]
pub struct PrefilterOperator {
    base_res: usize,
    levels: usize,
    /// Resolutions and offsets of the box pyramid (mip 0 down to 1×1).
    box_res: Vec<usize>,
    box_offsets: Vec<usize>,
    rows: Vec<Rows>,
}

fn box_layout(base_res: usize) -> (Vec<usize>, Vec<usize>) {
    let mut res = Vec::new();
    let mut offsets = vec![0];
    let mut r = base_res;
    loop {
        res.push(r);
        offsets.push(offsets.last().unwrap() + 6 * r * r);
        if r == 1 {
            break;
        }
        r /= 2;
    }
    (res, offsets)
}

impl PrefilterOperator {
    pub fn build(base_res: usize) -> Self {
        assert!(base_res.is_power_of_two(), "cubemap resolution must be a power of two");
        let levels = level_count(base_res);
        let (box_res, box_offsets) = box_layout(base_res);
        let texel_omega = 4.0 * std::f64::consts::PI / (6 * base_res * base_res) as f64;
        let max_box = box_res.len() - 1;
        let rows = (1..levels)
            .map(|k| {
                let res = base_res >> k;
                let r = level_roughness(k, levels);
                let n = level_samples(k, levels);
                let per_texel: Vec<Vec<(u32, f32)>> = (0..6 * res * res)
                    .into_par_iter()
                    .map(|t| {
                        let face = t / (res * res);
                        let row = (t / res) % res;
                        let col = t % res;
                        let wr = texel_to_dir(face, row, col, res);
                        let mut acc: Vec<(u32, f64)> = Vec::with_capacity(4 * n as usize);
                        for i in 0..n {
                            let s = sample_ndf(wr, wr, r, hammersley(i, n));
                            let cos = s.wi.dot(wr);
                            if !s.above_horizon || cos <= 0.0 {
                                continue;
                            }
                            let pdf = beckmann_d_cos(s.h.dot(wr), r) * 0.25;
                            let omega_s = 1.0 / (n as f64 * pdf.max(1e-300));
                            let lod = (0.5 * (omega_s / texel_omega).log2()).max(0.0);
                            let j = (lod.round() as usize).min(max_box);
                            let taps = BilinearTaps::new(s.wi, box_res[j]);
                            for q in 0..4 {
                                if taps.weight[q] > 0.0 {
                                    acc.push((box_offsets[j] as u32 + taps.index[q], cos * taps.weight[q]));
                                }
                            }
                        }
                        acc.sort_by_key(|e| e.0);
                        let mut merged: Vec<(u32, f32)> = Vec::with_capacity(acc.len());
                        let mut i = 0;
                        while i < acc.len() {
                            let mut w = 0.0;
                            let src = acc[i].0;
                            while i < acc.len() && acc[i].0 == src {
                                w += acc[i].1;
                                i += 1;
                            }
                            merged.push((src, w as f32));
                        }
                        if merged.is_empty() {
                            // Cannot happen for n ≥ 1 (u = 0 is the mirror direction), kept as a guard.
                            let taps = BilinearTaps::new(wr, base_res);
                            merged.push((taps.index[0], 1.0));
                        }
                        merged
                    })
                    .collect();
                let mut offsets = Vec::with_capacity(per_texel.len() + 1);
                let mut sources = Vec::new();
                let mut weights = Vec::new();
                let mut inv_sums = Vec::with_capacity(per_texel.len());
                offsets.push(0u32);
                for entries in per_texel {
                    let mut sum = 0.0f64;
                    for (s, w) in entries {
                        sources.push(s);
                        weights.push(w);
                        sum += w as f64;
                    }
                    inv_sums.push(1.0 / sum);
                    offsets.push(sources.len() as u32);
                }
                Rows { res, offsets, sources, weights, inv_sums }
            })
            .collect();
        PrefilterOperator { base_res, levels, box_res, box_offsets, rows }
    }

    /// Process-wide cached operator for a base resolution.
    pub fn shared(base_res: usize) -> Arc<PrefilterOperator> {
        static CACHE: OnceLock<Mutex<HashMap<usize, Arc<PrefilterOperator>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(Default::default);
        if let Some(op) = cache.lock().unwrap().get(&base_res) {
            return op.clone();
        }
        let op = Arc::new(PrefilterOperator::build(base_res));
        cache.lock().unwrap().entry(base_res).or_insert(op).clone()
    }

    pub fn base_res(&self) -> usize {
        self.base_res
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn nonzeros(&self) -> usize {
        self.rows.iter().map(|r| r.sources.len()).sum()
    }

    fn box_pyramid(&self, mip0: &CubeLevel) -> Vec<Rgb> {
        let mut all = Vec::with_capacity(*self.box_offsets.last().unwrap());
        all.extend_from_slice(mip0.texels());
        let mut level = mip0.clone();
        while level.res() > 1 {
            level = level.downsample();
            all.extend_from_slice(level.texels());
        }
        all
    }

    /// Prefiltered levels `1..levels` for the given mip 0.
    pub fn apply(&self, mip0: &CubeLevel) -> Vec<CubeLevel> {
        assert_eq!(mip0.res(), self.base_res);
        let pyramid = self.box_pyramid(mip0);
        self.rows
            .iter()
            .map(|rows| {
                let texels: Vec<Rgb> = (0..rows.inv_sums.len())
                    .into_par_iter()
                    .with_min_len(256)
                    .map(|t| {
                        let (a, b) = (rows.offsets[t] as usize, rows.offsets[t + 1] as usize);
                        let mut v = Rgb::ZERO;
                        for e in a..b {
                            v += pyramid[rows.sources[e] as usize] * rows.weights[e] as f64;
                        }
                        v * rows.inv_sums[t]
                    })
                    .collect();
                CubeLevel::new(rows.res, texels).expect("level shape")
            })
            .collect()
    }

    /// Transpose of [`apply`](Self::apply): maps gradients on levels
    /// `1..levels` to a gradient on mip 0.
    pub fn adjoint(&self, level_grads: &[&[Rgb]]) -> Vec<Rgb> {
        assert_eq!(level_grads.len(), self.rows.len());
        let mut pyramid = vec![Rgb::ZERO; *self.box_offsets.last().unwrap()];
        for (rows, grad) in self.rows.iter().zip(level_grads) {
            for (t, &g) in grad.iter().enumerate() {
                if g == Rgb::ZERO {
                    continue;
                }
                let g = g * rows.inv_sums[t];
                for e in rows.offsets[t] as usize..rows.offsets[t + 1] as usize {
                    pyramid[rows.sources[e] as usize] += g * rows.weights[e] as f64;
                }
            }
        }
        // Push each box level's gradient down to its four children.
        for j in (1..self.box_res.len()).rev() {
            let res = self.box_res[j];
            let fine = self.box_res[j - 1];
            let (src, dst) = (self.box_offsets[j], self.box_offsets[j - 1]);
            for face in 0..6 {
                for row in 0..res {
                    for col in 0..res {
                        let g = pyramid[src + (face * res + row) * res + col] * 0.25;
                        if g == Rgb::ZERO {
                            continue;
                        }
                        for (dr, dc) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                            pyramid[dst + (face * fine + 2 * row + dr) * fine + 2 * col + dc] += g;
                        }
                    }
                }
            }
        }
        pyramid.truncate(6 * self.base_res * self.base_res);
        pyramid
    }
}

/// Cubemap radiance with an optional prefiltered pyramid.
///
/// Level 0 of the pyramid is mip 0 itself (the mirror limit); levels
/// `1..level_count` hold the prefiltered radiance at [`level_roughness`].
#[derive(Debug, Clone)]
pub struct EnvironmentMap {
    mip0: CubeLevel,
    levels: Option<Arc<Vec<CubeLevel>>>,
}

/// Everything needed to evaluate and differentiate one prefiltered lookup.
#[derive(Debug, Clone, Copy)]
pub struct PrefilteredTaps {
    pub value: Rgb,
    /// `∂value/∂r`.
    pub d_roughness: Rgb,
    lo: usize,
    t: f64,
    taps: [BilinearTaps; 2],
}

impl EnvironmentMap {
    pub fn new(mip0: CubeLevel) -> Result<Self> {
        if !mip0.res().is_power_of_two() {
            return Err(Error::Config(format!("cubemap resolution {} is not a power of two", mip0.res())));
        }
        if !mip0.is_valid_radiance() {
            return Err(Error::NonFiniteTexture("environment"));
        }
        Ok(EnvironmentMap { mip0, levels: None })
    }

    pub fn constant(res: usize, value: Rgb) -> Self {
        EnvironmentMap::new(CubeLevel::constant(res, value)).expect("valid constant map")
    }

    pub fn mip0(&self) -> &CubeLevel {
        &self.mip0
    }

    pub fn base_res(&self) -> usize {
        self.mip0.res()
    }

    pub fn level_count(&self) -> usize {
        level_count(self.base_res())
    }

    pub fn is_prefiltered(&self) -> bool {
        self.levels.is_some()
    }

    /// Build the pyramid from the current mip 0.
    pub fn prefilter(&mut self) {
        let op = PrefilterOperator::shared(self.base_res());
        let mut levels = Vec::with_capacity(op.levels());
        levels.push(self.mip0.clone());
        levels.extend(op.apply(&self.mip0));
        self.levels = Some(Arc::new(levels));
    }

    pub fn prefiltered(mut self) -> Self {
        self.prefilter();
        self
    }

    pub fn levels(&self) -> Result<&[CubeLevel]> {
        self.levels.as_deref().map(Vec::as_slice).ok_or(Error::PyramidNotBuilt)
    }

    /// Start of each level inside a flat array holding all levels.
    pub fn level_offsets(&self) -> Vec<usize> {
        let mut offsets = vec![0];
        let mut res = self.base_res();
        for _ in 0..self.level_count() {
            offsets.push(offsets.last().unwrap() + 6 * res * res);
            res /= 2;
        }
        offsets
    }

    /// Levels bracketing `r` and the blend weight of the upper one.
    ///
    /// The blend is linear in `r²`, which tracks the angular variance of the
    /// Beckmann lobe; at a level's own roughness the weight is exactly 0 or 1.
    fn bracket(&self, r: f64) -> (usize, f64, f64) {
        let levels = self.level_count();
        if levels == 1 {
            return (0, 0.0, 0.0);
        }
        let r = r.clamp(ROUGHNESS_MIN, 1.0);
        let p = (r - ROUGHNESS_MIN) / (1.0 - ROUGHNESS_MIN) * (levels - 1) as f64;
        let lo = (p.floor() as usize).min(levels - 2);
        let (r0, r1) = (level_roughness(lo, levels), level_roughness(lo + 1, levels));
        let span = r1 * r1 - r0 * r0;
        let t = ((r * r - r0 * r0) / span).clamp(0.0, 1.0);
        (lo, t, 2.0 * r / span)
    }

    /// Trilinear lookup: bilinear in the two levels bracketing `r`, blended
    /// across levels.
    pub fn lookup_prefiltered(&self, wr: Vec3, r: f64) -> Result<Rgb> {
        Ok(self.prefiltered_taps(wr, r)?.value)
    }

    pub fn prefiltered_taps(&self, wr: Vec3, r: f64) -> Result<PrefilteredTaps> {
        let levels = self.levels()?;
        let (lo, t, dt_dr) = self.bracket(r);
        let hi = (lo + 1).min(levels.len() - 1);
        let taps = [BilinearTaps::new(wr, levels[lo].res()), BilinearTaps::new(wr, levels[hi].res())];
        let a = taps[0].gather(levels[lo].texels());
        let b = if t > 0.0 { taps[1].gather(levels[hi].texels()) } else { a };
        let in_range = r > ROUGHNESS_MIN && r < 1.0 && levels.len() > 1;
        Ok(PrefilteredTaps {
            value: a * (1.0 - t) + b * t,
            d_roughness: if in_range { (b - a) * dt_dr } else { Rgb::ZERO },
            lo,
            t,
            taps,
        })
    }

    /// Rotate the environment: the result at direction `ω` is this map at
    /// `rotation⁻¹ ω`, bilinearly resampled at mip 0.
    pub fn rotated(&self, rotation: &crate::math::Mat3) -> Result<Self> {
        let inv = rotation.transpose();
        EnvironmentMap::new(CubeLevel::from_fn(self.base_res(), |d| self.mip0.bilinear(inv.mul_vec(d))))
    }

    pub fn scaled(&self, s: f64) -> Result<Self> {
        EnvironmentMap::new(self.mip0.scaled(s))
    }
}

impl PrefilteredTaps {
    /// `∂(g · value)/∂ω_r`.
    pub fn dir_gradient(&self, env: &EnvironmentMap, g: Rgb) -> Vec3 {
        let levels = env.levels().expect("taps come from a prefiltered map");
        let hi = (self.lo + 1).min(levels.len() - 1);
        let mut d = self.taps[0].dir_gradient(levels[self.lo].texels(), g * (1.0 - self.t));
        if self.t > 0.0 {
            d += self.taps[1].dir_gradient(levels[hi].texels(), g * self.t);
        }
        d
    }

    /// Calls `f(flat_index, weight)` for every pyramid texel contributing to
    /// the value; indices follow [`EnvironmentMap::level_offsets`].
    pub fn for_each_texel(&self, offsets: &[usize], mut f: impl FnMut(usize, f64)) {
        let hi = (self.lo + 1).min(offsets.len() - 2);
        for (level, taps, w) in [(self.lo, &self.taps[0], 1.0 - self.t), (hi, &self.taps[1], self.t)] {
            if w == 0.0 {
                continue;
            }
            for q in 0..4 {
                if taps.weight[q] != 0.0 {
                    f(offsets[level] + taps.index[q] as usize, w * taps.weight[q]);
                }
            }
        }
    }
}

/// Gradient on mip 0 from a gradient on the whole pyramid laid out per
/// [`EnvironmentMap::level_offsets`]. Level 0 passes straight through.
pub fn pyramid_adjoint(base_res: usize, pyramid_grad: &[Rgb]) -> Vec<Rgb> {
    let op = PrefilterOperator::shared(base_res);
    let n0 = 6 * base_res * base_res;
    let mut slices: Vec<&[Rgb]> = Vec::with_capacity(op.levels().saturating_sub(1));
    let mut start = n0;
    for k in 1..op.levels() {
        let res = base_res >> k;
        slices.push(&pyramid_grad[start..start + 6 * res * res]);
        start += 6 * res * res;
    }
    let mut g = op.adjoint(&slices);
    for (a, b) in g.iter_mut().zip(&pyramid_grad[..n0]) {
        *a += *b;
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_for_default_resolution() {
        assert_eq!(level_count(256), 6);
        assert_eq!(level_count(8), 1);
        assert_eq!(level_count(32), 3);
        assert_eq!(level_roughness(0, 6), ROUGHNESS_MIN);
        assert_eq!(level_roughness(5, 6), 1.0);
        assert_eq!(level_samples(5, 6), 1024);
        assert_eq!(level_samples(1, 6), 64);
    }

    #[test]
    fn constant_map_is_a_fixed_point() {
        let c = Rgb::new(0.25, 1.5, 3.0);
        let env = EnvironmentMap::constant(32, c).prefiltered();
        for level in env.levels().unwrap() {
            for t in level.texels() {
                for ch in 0..3 {
                    assert!((t[ch] - c[ch]).abs() <= 1e-12 * c[ch]);
                }
            }
        }
    }

    #[test]
    fn lookup_requires_pyramid() {
        let env = EnvironmentMap::constant(16, Rgb::ONE);
        assert!(matches!(env.lookup_prefiltered(Vec3::Z, 0.5), Err(Error::PyramidNotBuilt)));
    }

    #[test]
    fn adjoint_is_transpose() {
        let op = PrefilterOperator::build(16);
        let x = CubeLevel::from_fn(16, |d| Rgb::new(1.0 + d.x, 2.0 + d.y * d.z, 1.5 - d.z));
        let y: Vec<Vec<Rgb>> = op
            .apply(&x)
            .iter()
            .map(|l| l.texels().iter().enumerate().map(|(i, _)| Rgb::new((i as f64).sin(), (i as f64 * 0.3).cos(), 0.5)).collect())
            .collect();
        let ax = op.apply(&x);
        let lhs: f64 = ax.iter().zip(&y).map(|(a, b)| a.texels().iter().zip(b).map(|(p, q)| p.dot(*q)).sum::<f64>()).sum();
        let slices: Vec<&[Rgb]> = y.iter().map(Vec::as_slice).collect();
        let aty = op.adjoint(&slices);
        let rhs: f64 = x.texels().iter().zip(&aty).map(|(p, q)| p.dot(*q)).sum();
        assert!((lhs - rhs).abs() < 1e-9 * lhs.abs().max(1.0), "{lhs} vs {rhs}");
    }
}
