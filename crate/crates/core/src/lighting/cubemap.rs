//! Cube-face addressing.
//!
//! Faces are ordered `px, nx, py, ny, pz, nz`. On each face a direction maps
//! to face coordinates `(a, b) ∈ [-1, 1]²` through
//! `ω ∝ major + a·s_axis + b·t_axis`; `a` increases with the column index and
//! `b` with the row index (rows run top to bottom). The axes follow the
//! OpenGL cube-map convention:
//!
//! | face | major | s_axis | t_axis |
//! |------|-------|--------|--------|
//! | px   | +x    | −z     | −y     |
//! | nx   | −x    | +z     | −y     |
//! | py   | +y    | +x     | +z     |
//! | ny   | −y    | +x     | −z     |
//! | pz   | +z    | +x     | −y     |
//! | nz   | −z    | −x     | −y     |

use crate::math::{Rgb, Vec3};

pub const FACE_NAMES: [&str; 6] = ["px", "nx", "py", "ny", "pz", "nz"];

const FACE_AXES: [(Vec3, Vec3, Vec3); 6] = [
    (Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 0.0, -1.0), Vec3::new(0.0, -1.0, 0.0)),
    (Vec3::new(-1.0, 0.0, 0.0), Vec3::new(0.0, 0.0, 1.0), Vec3::new(0.0, -1.0, 0.0)),
    (Vec3::new(0.0, 1.0, 0.0), Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 0.0, 1.0)),
    (Vec3::new(0.0, -1.0, 0.0), Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 0.0, -1.0)),
    (Vec3::new(0.0, 0.0, 1.0), Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, -1.0, 0.0)),
    (Vec3::new(0.0, 0.0, -1.0), Vec3::new(-1.0, 0.0, 0.0), Vec3::new(0.0, -1.0, 0.0)),
];

#[inline]
pub fn face_axes(face: usize) -> (Vec3, Vec3, Vec3) {
    FACE_AXES[face]
}

/// Face index of the dominant axis of `d`.
#[inline]
pub fn face_of(d: Vec3) -> usize {
    let a = d.abs();
    if a.x >= a.y && a.x >= a.z {
        if d.x >= 0.0 {
            0
        } else {
            1
        }
    } else if a.y >= a.z {
        if d.y >= 0.0 {
            2
        } else {
            3
        }
    } else if d.z >= 0.0 {
        4
    } else {
        5
    }
}

/// `(face, a, b)` with `a, b ∈ [-1, 1]`.
#[inline]
pub fn dir_to_face(d: Vec3) -> (usize, f64, f64) {
    let face = face_of(d);
    let (m, s, t) = FACE_AXES[face];
    let ma = m.dot(d);
    (face, s.dot(d) / ma, t.dot(d) / ma)
}

#[inline]
pub fn face_to_dir(face: usize, a: f64, b: f64) -> Vec3 {
    let (m, s, t) = FACE_AXES[face];
    (m + s * a + t * b).normalized()
}

/// Texel `(face, row, col)` containing `d` at resolution `res`, plus the
/// continuous texture coordinates `(u, v) ∈ [0, 1]²`.
#[inline]
pub fn dir_to_texel(d: Vec3, res: usize) -> (usize, usize, usize, f64, f64) {
    let (face, a, b) = dir_to_face(d);
    let u = (a + 1.0) * 0.5;
    let v = (b + 1.0) * 0.5;
    let col = ((u * res as f64) as usize).min(res - 1);
    let row = ((v * res as f64) as usize).min(res - 1);
    (face, row, col, u, v)
}

/// Direction through the center of texel `(face, row, col)`.
#[inline]
pub fn texel_to_dir(face: usize, row: usize, col: usize, res: usize) -> Vec3 {
    let a = -1.0 + 2.0 * (col as f64 + 0.5) / res as f64;
    let b = -1.0 + 2.0 * (row as f64 + 0.5) / res as f64;
    face_to_dir(face, a, b)
}

fn area_element(x: f64, y: f64) -> f64 {
    (x * y).atan2((x * x + y * y + 1.0).sqrt())
}

/// Exact solid angle of a texel (same for every face).
pub fn texel_solid_angle(row: usize, col: usize, res: usize) -> f64 {
    let step = 2.0 / res as f64;
    let x0 = -1.0 + col as f64 * step;
    let y0 = -1.0 + row as f64 * step;
    let (x1, y1) = (x0 + step, y0 + step);
    area_element(x0, y0) - area_element(x0, y1) - area_element(x1, y0) + area_element(x1, y1)
}

/// Angular radius bound of a texel: half its diagonal at the face center.
pub fn texel_angular_size(res: usize) -> f64 {
    (2.0 / res as f64).atan() * std::f64::consts::SQRT_2
}

/// One cube-map level of linear RGB texels, laid out `[face][row][col]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CubeLevel {
    res: usize,
    texels: Vec<Rgb>,
}

/// Bilinear tap set for one direction, with the derivatives needed to push
/// gradients back to the direction.
#[derive(Debug, Clone, Copy)]
pub struct BilinearTaps {
    pub index: [u32; 4],
    pub weight: [f64; 4],
    dw_dx: [f64; 4],
    dw_dy: [f64; 4],
    dx_dir: Vec3,
    dy_dir: Vec3,
}

impl BilinearTaps {
    pub fn new(d: Vec3, res: usize) -> Self {
        let (face, a, b) = dir_to_face(d);
        let (m, s, t) = FACE_AXES[face];
        let ma = m.dot(d);
        // a = s·d / m·d  ⇒  ∂a/∂d = (s − a m) / (m·d)
        let da = (s - m * a) / ma;
        let db = (t - m * b) / ma;
        let scale = 0.5 * res as f64;
        let base = face * res * res;
        if res == 1 {
            return BilinearTaps {
                index: [base as u32; 4],
                weight: [1.0, 0.0, 0.0, 0.0],
                dw_dx: [0.0; 4],
                dw_dy: [0.0; 4],
                dx_dir: Vec3::ZERO,
                dy_dir: Vec3::ZERO,
            };
        }
        let axis = |coord: f64| -> (i64, f64) {
            let x = ((coord + 1.0) * scale - 0.5).clamp(-0.5, res as f64 - 0.5);
            let i = (x.floor() as i64).min(res as i64 - 1);
            (i, x - i as f64)
        };
        let (c0, tx) = axis(a);
        let (r0, ty) = axis(b);
        let n = res as i64;
        // Taps past a face edge read the neighboring face.
        let idx = |r: i64, c: i64| -> u32 {
            if (0..n).contains(&r) && (0..n).contains(&c) {
                (base + r as usize * res + c as usize) as u32
            } else {
                let d = face_to_dir(face, (2 * c + 1) as f64 / res as f64 - 1.0, (2 * r + 1) as f64 / res as f64 - 1.0);
                let (f, row, col, _, _) = dir_to_texel(d, res);
                ((f * res + row) * res + col) as u32
            }
        };
        BilinearTaps {
            index: [idx(r0, c0), idx(r0, c0 + 1), idx(r0 + 1, c0), idx(r0 + 1, c0 + 1)],
            weight: [(1.0 - tx) * (1.0 - ty), tx * (1.0 - ty), (1.0 - tx) * ty, tx * ty],
            dw_dx: [-(1.0 - ty), 1.0 - ty, -ty, ty],
            dw_dy: [-(1.0 - tx), -tx, 1.0 - tx, tx],
            dx_dir: da * scale,
            dy_dir: db * scale,
        }
    }

    #[inline]
    pub fn gather(&self, texels: &[Rgb]) -> Rgb {
        let mut v = Rgb::ZERO;
        for k in 0..4 {
            v += texels[self.index[k] as usize] * self.weight[k];
        }
        v
    }

    /// `∂(g · value)/∂d` for an upstream RGB gradient `g`.
    pub fn dir_gradient(&self, texels: &[Rgb], g: Rgb) -> Vec3 {
        let (mut gx, mut gy) = (0.0, 0.0);
        for k in 0..4 {
            let gt = g.dot(texels[self.index[k] as usize]);
            gx += self.dw_dx[k] * gt;
            gy += self.dw_dy[k] * gt;
        }
        self.dx_dir * gx + self.dy_dir * gy
    }
}

impl CubeLevel {
    pub fn new(res: usize, texels: Vec<Rgb>) -> Option<Self> {
        (res > 0 && texels.len() == 6 * res * res).then_some(CubeLevel { res, texels })
    }

    pub fn constant(res: usize, value: Rgb) -> Self {
        CubeLevel { res, texels: vec![value; 6 * res * res] }
    }

    /// Fill from a radiance function evaluated at texel centers.
    pub fn from_fn(res: usize, f: impl Fn(Vec3) -> Rgb) -> Self {
        let mut texels = Vec::with_capacity(6 * res * res);
        for face in 0..6 {
            for row in 0..res {
                for col in 0..res {
                    texels.push(f(texel_to_dir(face, row, col, res)));
                }
            }
        }
        CubeLevel { res, texels }
    }

    #[inline]
    pub fn res(&self) -> usize {
        self.res
    }

    #[inline]
    pub fn texels(&self) -> &[Rgb] {
        &self.texels
    }

    #[inline]
    pub fn texels_mut(&mut self) -> &mut [Rgb] {
        &mut self.texels
    }

    #[inline]
    pub fn index(&self, face: usize, row: usize, col: usize) -> usize {
        (face * self.res + row) * self.res + col
    }

    pub fn face_slice(&self, face: usize) -> &[Rgb] {
        let n = self.res * self.res;
        &self.texels[face * n..(face + 1) * n]
    }

    /// Texel containing `d` (nearest lookup).
    #[inline]
    pub fn texel_index(&self, d: Vec3) -> usize {
        let (face, row, col, _, _) = dir_to_texel(d, self.res);
        self.index(face, row, col)
    }

    #[inline]
    pub fn nearest(&self, d: Vec3) -> Rgb {
        self.texels[self.texel_index(d)]
    }

    #[inline]
    pub fn bilinear(&self, d: Vec3) -> Rgb {
        BilinearTaps::new(d, self.res).gather(&self.texels)
    }

    /// 2×2 box average.
    pub fn downsample(&self) -> CubeLevel {
        let half = (self.res / 2).max(1);
        if self.res == 1 {
            return self.clone();
        }
        let mut texels = Vec::with_capacity(6 * half * half);
        for face in 0..6 {
            for row in 0..half {
                for col in 0..half {
                    let mut acc = Rgb::ZERO;
                    for (dr, dc) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                        acc += self.texels[self.index(face, 2 * row + dr, 2 * col + dc)];
                    }
                    texels.push(acc * 0.25);
                }
            }
        }
        CubeLevel { res: half, texels }
    }

    pub fn scaled(&self, s: f64) -> CubeLevel {
        CubeLevel { res: self.res, texels: self.texels.iter().map(|&t| t * s).collect() }
    }

    pub fn is_valid_radiance(&self) -> bool {
        self.texels.iter().all(|t| t.is_finite() && t.0.iter().all(|&c| c >= 0.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_directions_land_on_face_centers() {
        let (f, a, b) = dir_to_face(Vec3::X);
        assert_eq!((f, a, b), (0, 0.0, 0.0));
        let (f, a, b) = dir_to_face(-Vec3::Y);
        assert_eq!(FACE_NAMES[f], "ny");
        assert_eq!((a, b), (0.0, 0.0));
        for (face, d) in [Vec3::X, -Vec3::X, Vec3::Y, -Vec3::Y, Vec3::Z, -Vec3::Z].into_iter().enumerate() {
            assert_eq!(face_of(d), face);
            assert!((face_to_dir(face, 0.0, 0.0) - d).length() < 1e-15);
        }
    }

    #[test]
    fn faces_are_right_handed_frames() {
        for face in 0..6 {
            let (m, s, t) = face_axes(face);
            assert_eq!(s.dot(m), 0.0);
            assert_eq!(t.dot(m), 0.0);
            assert_eq!(s.dot(t), 0.0);
        }
    }

    #[test]
    fn solid_angles_cover_the_sphere() {
        for res in [1, 4, 16] {
            let total: f64 = (0..res).flat_map(|r| (0..res).map(move |c| (r, c))).map(|(r, c)| texel_solid_angle(r, c, res)).sum();
            assert!((6.0 * total - 4.0 * std::f64::consts::PI).abs() < 1e-12);
        }
    }

    #[test]
    fn bilinear_direction_gradient_matches_fd() {
        let level = CubeLevel::from_fn(8, |d| Rgb::new(d.x.exp(), 1.0 + d.y * d.z, (2.0 * d.z).sin() + 1.5));
        let g = Rgb::new(0.3, -1.1, 0.7);
        let d = Vec3::new(0.3, 0.41, 0.85).normalized();
        let taps = BilinearTaps::new(d, 8);
        let grad = taps.dir_gradient(level.texels(), g);
        let h = 1e-7;
        for axis in [Vec3::X, Vec3::Y, Vec3::Z] {
            let f = |dd: Vec3| g.dot(BilinearTaps::new(dd, 8).gather(level.texels()));
            let fd = (f(d + axis * h) - f(d - axis * h)) / (2.0 * h);
            assert!((fd - grad.dot(axis)).abs() < 1e-5, "{fd} vs {}", grad.dot(axis));
        }
    }

    #[test]
    fn downsample_preserves_constants() {
        let c = CubeLevel::constant(8, Rgb::new(0.2, 0.4, 0.8));
        assert_eq!(c.downsample(), CubeLevel::constant(4, Rgb::new(0.2, 0.4, 0.8)));
    }
}
