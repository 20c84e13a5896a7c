//! Evaluation metrics in linear RGB.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Bvh, TriangleMesh};
use crate::math::{Rgb, Vec3};
use crate::render::{primary_hit, Camera, Frame, Grid};

/// Reported PSNR for identical inputs.
pub const PSNR_CAP_DB: f64 = 99.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImageMetrics {
    pub psnr: f64,
    /// Raw mean absolute error (not percent).
    pub mae: f64,
    pub pixels: usize,
}

/// PSNR (peak 1) and MAE over pixels where `region > 0`, all pixels when
/// `region` is `None`.
pub fn image_metrics(a: &Grid<Rgb>, b: &Grid<Rgb>, region: Option<&Grid<f64>>) -> Result<ImageMetrics> {
    if !a.same_shape(b) {
        return Err(Error::shape("metrics", format!("{}x{}", a.width(), a.height()), format!("{}x{}", b.width(), b.height())));
    }
    if let Some(r) = region {
        if !r.same_shape(a) {
            return Err(Error::shape("metrics region", format!("{}x{}", a.width(), a.height()), format!("{}x{}", r.width(), r.height())));
        }
    }
    let mut abs = 0.0;
    let mut sq = 0.0;
    let mut n = 0usize;
    for p in 0..a.len() {
        if region.map_or(true, |r| r.data()[p] > 0.0) {
            let d = a.data()[p] - b.data()[p];
            abs += d[0].abs() + d[1].abs() + d[2].abs();
            sq += d.dot(d);
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::EmptyMask);
    }
    let count = (3 * n) as f64;
    Ok(ImageMetrics { psnr: psnr_from_mse(sq / count), mae: abs / count, pixels: n })
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse <= 0.0 {
        PSNR_CAP_DB
    } else {
        (10.0 * (1.0 / mse).log10()).min(PSNR_CAP_DB)
    }
}

/// Least-squares scalar `s` minimizing `Σ |s·a − b|²` over the region.
pub fn scale_alignment(a: &[Rgb], b: &[Rgb], region: Option<&[bool]>) -> f64 {
    let mut ab = 0.0;
    let mut aa = 0.0;
    for (i, (x, y)) in a.iter().zip(b).enumerate() {
        if region.map_or(true, |r| r[i]) {
            ab += x.dot(*y);
            aa += x.dot(*x);
        }
    }
    if aa > 0.0 {
        ab / aa
    } else {
        1.0
    }
}

/// Mean absolute per-channel error between two textures over selected texels.
pub fn texture_mae(a: &Grid<Rgb>, b: &Grid<Rgb>, region: Option<&[bool]>) -> Result<f64> {
    if !a.same_shape(b) {
        return Err(Error::shape("texture metrics", a.len(), b.len()));
    }
    let mut sum = 0.0;
    let mut n = 0usize;
    for (i, (x, y)) in a.data().iter().zip(b.data()).enumerate() {
        if region.map_or(true, |r| r[i]) {
            let d = *x - *y;
            sum += d[0].abs() + d[1].abs() + d[2].abs();
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::EmptyMask);
    }
    Ok(sum / (3 * n) as f64)
}

/// Texels of a `width × height` texture that receive bilinear weight from
/// some covered pixel in any of `frames`.
pub fn observed_texels(mesh: &TriangleMesh, camera: &Camera, frames: &[Frame], width: usize, height: usize) -> Vec<bool> {
    let bvh = Bvh::build(mesh);
    let probe = Grid::filled(width, height, 0u8);
    let mut seen = vec![false; width * height];
    for f in frames {
        for y in 0..camera.height() {
            for x in 0..camera.width() {
                if let Some(hit) = primary_hit(mesh, &bvh, camera, &f.pose, x, y) {
                    let taps = probe.taps(hit.uv);
                    for k in 0..4 {
                        if taps.weight[k] > 0.0 {
                            seen[taps.index[k] as usize] = true;
                        }
                    }
                }
            }
        }
    }
    seen
}

fn closest_on_triangle(p: Vec3, [a, b, c]: [Vec3; 3]) -> Vec3 {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(ap);
    let d2 = ac.dot(ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return a;
    }
    let bp = p - b;
    let d3 = ab.dot(bp);
    let d4 = ac.dot(bp);
    if d3 >= 0.0 && d4 <= d3 {
        return b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        return a + ab * (d1 / (d1 - d3));
    }
    let cp = p - c;
    let d5 = ab.dot(cp);
    let d6 = ac.dot(cp);
    if d6 >= 0.0 && d5 <= d6 {
        return c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        return a + ac * (d2 / (d2 - d6));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && d4 - d3 >= 0.0 && d5 - d6 >= 0.0 {
        return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
    }
    let denom = 1.0 / (va + vb + vc);
    a + ab * (vb * denom) + ac * (vc * denom)
}

/// Distance from `p` to the surface of `mesh`.
pub fn point_to_surface(p: Vec3, mesh: &TriangleMesh) -> f64 {
    (0..mesh.face_count())
        .map(|f| (closest_on_triangle(p, mesh.triangle(f)) - p).length_squared())
        .fold(f64::INFINITY, f64::min)
        .sqrt()
}

/// Symmetric point-to-surface RMS distance, sampled at the vertices of both
/// meshes.
pub fn mesh_distance(a: &TriangleMesh, b: &TriangleMesh) -> f64 {
    let sq: f64 = a.positions().iter().map(|&p| point_to_surface(p, b).powi(2)).sum::<f64>()
        + b.positions().iter().map(|&p| point_to_surface(p, a).powi(2)).sum::<f64>();
    let n = a.vertex_count() + b.vertex_count();
    if n == 0 {
        0.0
    } else {
        (sq / n as f64).sqrt()
    }
}
