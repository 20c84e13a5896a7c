use std::ops::{Add, Mul};

use crate::error::{Error, Result};
use crate::geometry::Uv;
use crate::math::Rgb;

/// Row-major 2D array; row 0 is the top of the image.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

pub type Image = Grid<Rgb>;
pub type Mask = Grid<f64>;

impl<T: Copy> Grid<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Grid { width, height, data: vec![value; width * height] }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::shape("grid data", width * height, data.len()));
        }
        Ok(Grid { width, height, data })
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Grid { width, height, data }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> T {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: T) {
        self.data[y * self.width + x] = v;
    }

    pub fn same_shape<U>(&self, other: &Grid<U>) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn map<U: Copy>(&self, f: impl Fn(T) -> U) -> Grid<U> {
        Grid { width: self.width, height: self.height, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    /// Bilinear taps at `uv`; see [`TexTaps`].
    #[inline]
    pub fn taps(&self, uv: Uv) -> TexTaps {
        TexTaps::new(uv, self.width, self.height)
    }
}

impl<T: Copy + Add<Output = T> + Mul<f64, Output = T>> Grid<T> {
    #[inline]
    pub fn gather(&self, taps: &TexTaps) -> T {
        let d = &self.data;
        d[taps.index[0] as usize] * taps.weight[0]
            + d[taps.index[1] as usize] * taps.weight[1]
            + d[taps.index[2] as usize] * taps.weight[2]
            + d[taps.index[3] as usize] * taps.weight[3]
    }

    #[inline]
    pub fn sample(&self, uv: Uv) -> T {
        self.gather(&self.taps(uv))
    }
}

impl Grid<f64> {
    pub fn has_non_finite(&self) -> bool {
        self.data.iter().any(|v| !v.is_finite())
    }
}

impl Grid<Rgb> {
    pub fn has_non_finite(&self) -> bool {
        self.data.iter().any(|v| !v.is_finite())
    }
}

/// Bilinear texture footprint: texel centers at `(i + 0.5)/width`, clamped
/// addressing, `v = 0` at the bottom row (OBJ convention).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TexTaps {
    pub index: [u32; 4],
    pub weight: [f64; 4],
}

impl TexTaps {
    pub fn new(uv: Uv, width: usize, height: usize) -> Self {
        let axis = |t: f64, n: usize| -> (usize, usize, f64) {
            let x = t * n as f64 - 0.5;
            if n == 1 || !(x > 0.0) {
                (0, 0, 0.0)
            } else if x >= (n - 1) as f64 {
                (n - 1, n - 1, 0.0)
            } else {
                let i = x.floor() as usize;
                (i, i + 1, x - i as f64)
            }
        };
        let (x0, x1, tx) = axis(uv[0], width);
        let (y0, y1, ty) = axis(1.0 - uv[1], height);
        let idx = |x: usize, y: usize| (y * width + x) as u32;
        TexTaps {
            index: [idx(x0, y0), idx(x1, y0), idx(x0, y1), idx(x1, y1)],
            weight: [(1.0 - tx) * (1.0 - ty), tx * (1.0 - ty), (1.0 - tx) * ty, tx * ty],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn texel_centers_are_exact() {
        let g = Grid::from_fn(4, 2, |x, y| (x + 10 * y) as f64);
        // texel (1, 0) is the top row: v = 1 - 0.5/2
        assert_eq!(g.sample([1.5 / 4.0, 0.75]), 1.0);
        assert_eq!(g.sample([3.5 / 4.0, 0.25]), 13.0);
        assert_eq!(g.sample([2.0 / 4.0, 0.75]), 1.5);
    }

    #[test]
    fn addressing_is_clamped() {
        let g = Grid::from_fn(3, 3, |x, y| (x * 3 + y) as f64);
        assert_eq!(g.sample([-1.0, 2.0]), g.get(0, 0));
        assert_eq!(g.sample([5.0, -3.0]), g.get(2, 2));
    }

    #[test]
    fn weights_sum_to_one() {
        for k in 0..50 {
            let t = TexTaps::new([k as f64 * 0.031, 1.0 - k as f64 * 0.017], 7, 5);
            assert!((t.weight.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
