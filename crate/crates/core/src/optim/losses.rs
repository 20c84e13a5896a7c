//! Loss terms and their gradients.
//!
//! Each `*_grad` function returns the value together with the gradient with
//! respect to its first argument.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::UniformLaplacian;
use crate::math::{Rgb, Vec3};
use crate::render::Grid;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub mask: f64,
    pub laplacian: f64,
    pub light: f64,
    pub rough: f64,
    pub diffuse: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { mask: 0.1, laplacian: 10.0, light: 0.1, rough: 0.1, diffuse: 0.01 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("mask", self.mask),
            ("laplacian", self.laplacian),
            ("light", self.light),
            ("rough", self.rough),
            ("diffuse", self.diffuse),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("loss weight `{name}` must be finite and non-negative, got {v}")));
            }
        }
        Ok(())
    }
}

/// Unweighted loss terms; `total` is their weighted sum.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub img: f64,
    pub mask: f64,
    pub lap: f64,
    pub light: f64,
    pub rough: f64,
    pub diffuse: f64,
}

impl LossBreakdown {
    pub fn is_finite(&self) -> bool {
        [self.total, self.img, self.mask, self.lap, self.light, self.rough, self.diffuse].iter().all(|v| v.is_finite())
    }
}

/// Weighted sum of the terms, unit weight on the image term.
pub fn total_loss(terms: &LossBreakdown, w: &LossWeights) -> LossBreakdown {
    LossBreakdown {
        total: terms.img
            + w.mask * terms.mask
            + w.laplacian * terms.lap
            + w.light * terms.light
            + w.rough * terms.rough
            + w.diffuse * terms.diffuse,
        ..*terms
    }
}

fn check_shape<A: Copy, B: Copy>(what: &str, a: &Grid<A>, b: &Grid<B>) -> Result<()> {
    if a.same_shape(b) {
        Ok(())
    } else {
        Err(Error::shape(what, format!("{}x{}", a.width(), a.height()), format!("{}x{}", b.width(), b.height())))
    }
}

#[inline]
fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Mean absolute error over pixels and channels. With `region`, only pixels
/// where `region > 0` count.
pub fn loss_image(render: &Grid<Rgb>, target: &Grid<Rgb>, region: Option<&Grid<f64>>) -> Result<f64> {
    Ok(loss_image_grad(render, target, region)?.0)
}

pub fn loss_image_grad(render: &Grid<Rgb>, target: &Grid<Rgb>, region: Option<&Grid<f64>>) -> Result<(f64, Vec<Rgb>)> {
    check_shape("image loss", render, target)?;
    if let Some(r) = region {
        check_shape("image loss region", render, r)?;
    }
    let selected = |p: usize| region.map_or(true, |r| r.data()[p] > 0.0);
    let count = (0..render.len()).filter(|&p| selected(p)).count();
    let mut grad = vec![Rgb::ZERO; render.len()];
    if count == 0 {
        return Ok((0.0, grad));
    }
    let norm = 1.0 / (3 * count) as f64;
    let mut sum = 0.0;
    for p in 0..render.len() {
        if !selected(p) {
            continue;
        }
        let d = render.data()[p] - target.data()[p];
        sum += d[0].abs() + d[1].abs() + d[2].abs();
        grad[p] = d.map(sign) * norm;
    }
    Ok((sum * norm, grad))
}

/// Mean absolute difference of two masks. Carries no gradient.
pub fn loss_mask(pred: &Grid<f64>, target: &Grid<f64>) -> Result<f64> {
    check_shape("mask loss", pred, target)?;
    if pred.is_empty() {
        return Ok(0.0);
    }
    Ok(pred.data().iter().zip(target.data()).map(|(a, b)| (a - b).abs()).sum::<f64>() / pred.len() as f64)
}

/// `‖L (v − v_init)‖²` summed over coordinates.
pub fn loss_laplacian(v: &[Vec3], v_init: &[Vec3], l: &UniformLaplacian) -> f64 {
    loss_laplacian_grad(v, v_init, l).0
}

pub fn loss_laplacian_grad(v: &[Vec3], v_init: &[Vec3], l: &UniformLaplacian) -> (f64, Vec<Vec3>) {
    let d: Vec<Vec3> = v.iter().zip(v_init).map(|(a, b)| *a - *b).collect();
    let ld = l.apply_vec3(&d);
    let value = ld.iter().map(|x| x.length_squared()).sum();
    let grad = l.apply_vec3(&ld).into_iter().map(|g| g * 2.0).collect();
    (value, grad)
}

/// Mean over texels of `Σ_c |c − mean(c)|`.
pub fn loss_light_white(texels: &[Rgb]) -> f64 {
    loss_light_white_grad(texels).0
}

pub fn loss_light_white_grad(texels: &[Rgb]) -> (f64, Vec<Rgb>) {
    if texels.is_empty() {
        return (0.0, Vec::new());
    }
    let norm = 1.0 / texels.len() as f64;
    let mut sum = 0.0;
    let grad = texels
        .iter()
        .map(|t| {
            let m = t.mean();
            let s = t.map(|c| sign(c - m));
            sum += (t[0] - m).abs() + (t[1] - m).abs() + (t[2] - m).abs();
            let mean_s = s.mean();
            s.map(|v| (v - mean_s) * norm)
        })
        .collect();
    (sum * norm, grad)
}

/// Mean over texels of forward differences `|r(x+1,y) − r| + |r(x,y+1) − r|`;
/// differences past the last row or column are zero.
pub fn loss_rough_tv(r: &Grid<f64>) -> f64 {
    loss_rough_tv_grad(r).0
}

pub fn loss_rough_tv_grad(r: &Grid<f64>) -> (f64, Vec<f64>) {
    let (w, h) = (r.width(), r.height());
    let mut grad = vec![0.0; r.len()];
    if r.is_empty() {
        return (0.0, grad);
    }
    let norm = 1.0 / r.len() as f64;
    let mut sum = 0.0;
    let d = r.data();
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if x + 1 < w {
                let diff = d[i + 1] - d[i];
                sum += diff.abs();
                grad[i + 1] += sign(diff) * norm;
                grad[i] -= sign(diff) * norm;
            }
            if y + 1 < h {
                let diff = d[i + w] - d[i];
                sum += diff.abs();
                grad[i + w] += sign(diff) * norm;
                grad[i] -= sign(diff) * norm;
            }
        }
    }
    (sum * norm, grad)
}

/// Mean of squared diffuse values over covered pixels and channels.
pub fn loss_diffuse(diffuse: &Grid<Rgb>, coverage: &Grid<f64>) -> Result<f64> {
    Ok(loss_diffuse_grad(diffuse, coverage)?.0)
}

pub fn loss_diffuse_grad(diffuse: &Grid<Rgb>, coverage: &Grid<f64>) -> Result<(f64, Vec<Rgb>)> {
    check_shape("diffuse loss", diffuse, coverage)?;
    let count = coverage.data().iter().filter(|&&m| m > 0.0).count();
    let mut grad = vec![Rgb::ZERO; diffuse.len()];
    if count == 0 {
        return Ok((0.0, grad));
    }
    let norm = 1.0 / (3 * count) as f64;
    let mut sum = 0.0;
    for p in 0..diffuse.len() {
        if coverage.data()[p] > 0.0 {
            let d = diffuse.data()[p];
            sum += d.dot(d);
            grad[p] = d * (2.0 * norm);
        }
    }
    Ok((sum * norm, grad))
}
