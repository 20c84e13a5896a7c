//! 8-bit previews and false-color error maps.

use std::path::Path;

use crate::error::Result;
use crate::math::Rgb;
use crate::render::Grid;

pub const PREVIEW_GAMMA: f64 = 2.2;

/// Seven stops from black through blue, cyan, green, yellow and red to white.
pub const ERROR_RAMP: [[f64; 3]; 7] = [
    [0.0, 0.0, 0.0],
    [0.0, 0.0, 1.0],
    [0.0, 1.0, 1.0],
    [0.0, 1.0, 0.0],
    [1.0, 1.0, 0.0],
    [1.0, 0.0, 0.0],
    [1.0, 1.0, 1.0],
];

fn to_byte(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0 + 0.5) as u8
}

/// Binary PPM with linear values clamped to `[0, 1]` and gamma encoded.
pub fn encode_ppm(img: &Grid<Rgb>) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    for c in img.data() {
        for v in c.0 {
            out.push(to_byte(v.max(0.0).powf(1.0 / PREVIEW_GAMMA)));
        }
    }
    out
}

pub fn write_ppm(path: &Path, img: &Grid<Rgb>) -> Result<()> {
    super::write_bytes(path, &encode_ppm(img))
}

/// Color of `t ∈ [0, 1]` on [`ERROR_RAMP`] (clamped, piecewise linear).
pub fn ramp(t: f64) -> Rgb {
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 1.0 };
    let x = t * (ERROR_RAMP.len() - 1) as f64;
    let i = (x.floor() as usize).min(ERROR_RAMP.len() - 2);
    let f = x - i as f64;
    let (a, b) = (ERROR_RAMP[i], ERROR_RAMP[i + 1]);
    Rgb::new(a[0] + (b[0] - a[0]) * f, a[1] + (b[1] - a[1]) * f, a[2] + (b[2] - a[2]) * f)
}

/// False-color rendering of a scalar map normalized by `max`, written
/// without gamma.
pub fn write_false_color(path: &Path, values: &Grid<f64>, max: f64) -> Result<()> {
    let scale = if max > 0.0 { 1.0 / max } else { 0.0 };
    let mut out = format!("P6\n{} {}\n255\n", values.width(), values.height()).into_bytes();
    for &v in values.data() {
        for c in ramp(v * scale).0 {
            out.push(to_byte(c));
        }
    }
    super::write_bytes(path, &out)
}
