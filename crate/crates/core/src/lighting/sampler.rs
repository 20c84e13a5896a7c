use super::cubemap::{dir_to_face, face_axes, texel_solid_angle, CubeLevel};
use crate::math::{Rgb, Vec3};

/// A direction drawn from a [`LightSampler`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LightSample {
    pub dir: Vec3,
    /// Solid-angle density of `dir`.
    pub pdf: f64,
    /// Mip-0 texel containing `dir`.
    pub texel: usize,
    pub radiance: Rgb,
}

/// Importance sampling of mip-0 texels by luminance × solid angle, with a
/// uniform jitter inside the chosen texel.
#[derive(Debug, Clone)]
pub struct LightSampler {
    res: usize,
    /// Per-texel probabilities; empty for an all-black map.
    prob: Vec<f64>,
    /// Texels in CDF order: Hilbert-curve order within each face, so contiguous
    /// ranges of the CDF are compact patches on the sphere and stratified
    /// `u.0` values spread out spatially.
    order: Vec<u32>,
    /// Inclusive running sum of `prob` in `order`; the last entry is exactly 1.
    cdf: Vec<f64>,
}

const UNIFORM_PDF: f64 = 0.25 * std::f64::consts::FRAC_1_PI;

fn hilbert_order(res: usize) -> Vec<u32> {
    // d → (x, y) along a Hilbert curve on a res×res grid (res a power of two)
    let mut per_face = Vec::with_capacity(res * res);
    for d in 0..res * res {
        let (mut x, mut y, mut t) = (0usize, 0usize, d);
        let mut s = 1;
        while s < res {
            let rx = 1 & (t / 2);
            let ry = 1 & (t ^ rx);
            if ry == 0 {
                if rx == 1 {
                    x = s - 1 - x;
                    y = s - 1 - y;
                }
                std::mem::swap(&mut x, &mut y);
            }
            x += s * rx;
            y += s * ry;
            t /= 4;
            s *= 2;
        }
        per_face.push((y * res + x) as u32);
    }
    let n = (res * res) as u32;
    (0..6u32).flat_map(|f| per_face.iter().map(move |&i| f * n + i)).collect()
}

impl LightSampler {
    pub fn new(mip0: &CubeLevel) -> Self {
        let res = mip0.res();
        let omega: Vec<f64> = (0..res * res).map(|i| texel_solid_angle(i / res, i % res, res)).collect();
        let weights: Vec<f64> =
            mip0.texels().iter().enumerate().map(|(i, t)| t.luminance().max(0.0) * omega[i % (res * res)]).collect();
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return LightSampler { res, prob: Vec::new(), order: Vec::new(), cdf: Vec::new() };
        }
        let prob: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let order = hilbert_order(res);
        let mut cdf = Vec::with_capacity(prob.len());
        let mut acc = 0.0;
        for &i in &order {
            acc += prob[i as usize];
            cdf.push(acc);
        }
        // Pin the tail so every u < 1 maps to a texel.
        let last = order.iter().rposition(|&i| prob[i as usize] > 0.0).unwrap_or(0);
        for c in &mut cdf[last..] {
            *c = 1.0;
        }
        LightSampler { res, prob, order, cdf }
    }

    pub fn res(&self) -> usize {
        self.res
    }

    pub fn is_uniform_fallback(&self) -> bool {
        self.prob.is_empty()
    }

    /// Discrete probability of texel `i`.
    pub fn texel_probability(&self, i: usize) -> f64 {
        if self.prob.is_empty() {
            let res = self.res;
            texel_solid_angle((i / res) % res, i % res, res) * UNIFORM_PDF
        } else {
            self.prob[i]
        }
    }

    fn jacobian(&self, a: f64, b: f64) -> f64 {
        // Density of a uniform point on a texel, mapped to the sphere.
        let step = 2.0 / self.res as f64;
        (1.0 + a * a + b * b).powf(1.5) / (step * step)
    }

    pub fn sample(&self, mip0: &CubeLevel, u: (f64, f64)) -> LightSample {
        let res = self.res;
        if self.prob.is_empty() {
            let z = 1.0 - 2.0 * u.0;
            let s = (1.0 - z * z).max(0.0).sqrt();
            let phi = 2.0 * std::f64::consts::PI * u.1;
            let dir = Vec3::new(s * phi.cos(), s * phi.sin(), z);
            let texel = mip0.texel_index(dir);
            return LightSample { dir, pdf: UNIFORM_PDF, texel, radiance: mip0.texels()[texel] };
        }
        let k = self.cdf.partition_point(|&c| c <= u.0).min(self.cdf.len() - 1);
        let lo = if k == 0 { 0.0 } else { self.cdf[k - 1] };
        let i = self.order[k] as usize;
        let jitter_a = ((u.0 - lo) / self.prob[i]).clamp(0.0, 1.0 - f64::EPSILON);
        let face = i / (res * res);
        let row = (i / res) % res;
        let col = i % res;
        let step = 2.0 / res as f64;
        let a = -1.0 + (col as f64 + jitter_a) * step;
        let b = -1.0 + (row as f64 + u.1) * step;
        let (m, s, t) = face_axes(face);
        let dir = (m + s * a + t * b).normalized();
        LightSample { dir, pdf: self.prob[i] * self.jacobian(a, b), texel: i, radiance: mip0.texels()[i] }
    }

    /// Solid-angle density of drawing `dir`.
    pub fn pdf(&self, dir: Vec3) -> f64 {
        if self.prob.is_empty() {
            return UNIFORM_PDF;
        }
        let (face, a, b) = dir_to_face(dir);
        let res = self.res;
        let col = (((a + 1.0) * 0.5 * res as f64) as usize).min(res - 1);
        let row = (((b + 1.0) * 0.5 * res as f64) as usize).min(res - 1);
        self.prob[(face * res + row) * res + col] * self.jacobian(a, b)
    }
}
