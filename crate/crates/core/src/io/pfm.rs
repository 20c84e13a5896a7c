//! Portable float map codec.
//!
//! Files are written little-endian (negative scale). Both byte orders are
//! read. Scanlines in the file run bottom to top; in memory row 0 is the top.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::math::Rgb;
use crate::render::Grid;

#[derive(Debug, Clone, PartialEq)]
pub struct Pfm {
    pub width: usize,
    pub height: usize,
    /// 1 (grayscale) or 3 (RGB).
    pub channels: usize,
    /// Row-major from the top row, channels interleaved.
    pub data: Vec<f32>,
}

impl Pfm {
    pub fn from_rgb(img: &Grid<Rgb>) -> Self {
        Pfm {
            width: img.width(),
            height: img.height(),
            channels: 3,
            data: img.data().iter().flat_map(|c| c.0.map(|v| v as f32)).collect(),
        }
    }

    pub fn from_gray(img: &Grid<f64>) -> Self {
        Pfm { width: img.width(), height: img.height(), channels: 1, data: img.data().iter().map(|&v| v as f32).collect() }
    }

    /// Grayscale files are broadcast to three channels.
    pub fn to_rgb(&self) -> Grid<Rgb> {
        let px: Vec<Rgb> = match self.channels {
            1 => self.data.iter().map(|&v| Rgb::splat(v as f64)).collect(),
            _ => self.data.chunks_exact(3).map(|c| Rgb::new(c[0] as f64, c[1] as f64, c[2] as f64)).collect(),
        };
        Grid::from_vec(self.width, self.height, px).expect("pfm shape")
    }

    /// RGB files are reduced to their channel mean.
    pub fn to_gray(&self) -> Grid<f64> {
        let px: Vec<f64> = match self.channels {
            1 => self.data.iter().map(|&v| v as f64).collect(),
            _ => self.data.chunks_exact(3).map(|c| (c[0] as f64 + c[1] as f64 + c[2] as f64) / 3.0).collect(),
        };
        Grid::from_vec(self.width, self.height, px).expect("pfm shape")
    }

    pub fn encode(&self) -> Vec<u8> {
        let tag = if self.channels == 1 { "Pf" } else { "PF" };
        let mut out = format!("{tag}\n{} {}\n-1.0\n", self.width, self.height).into_bytes();
        let row = self.width * self.channels;
        out.reserve(self.data.len() * 4);
        for y in (0..self.height).rev() {
            for v in &self.data[y * row..(y + 1) * row] {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn decode(bytes: &[u8], path: &Path) -> Result<Self> {
        let bad = |m: &str| Error::format(path, format!("malformed PFM: {m}"));
        let mut pos = 0;
        let mut token = || -> Result<String> {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(bad("truncated header"));
            }
            Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
        };
        let channels = match token()?.as_str() {
            "PF" => 3,
            "Pf" => 1,
            other => return Err(bad(&format!("unknown magic `{other}`"))),
        };
        let width: usize = token()?.parse().map_err(|_| bad("bad width"))?;
        let height: usize = token()?.parse().map_err(|_| bad("bad height"))?;
        let scale: f64 = token()?.parse().map_err(|_| bad("bad scale"))?;
        if scale == 0.0 || !scale.is_finite() {
            return Err(bad("scale must be non-zero"));
        }
        let little = scale < 0.0;
        // Exactly one whitespace byte separates the header from the data.
        pos += 1;
        let n = width.checked_mul(height).and_then(|v| v.checked_mul(channels)).ok_or_else(|| bad("size overflow"))?;
        let body = bytes.get(pos..).ok_or_else(|| bad("truncated data"))?;
        if body.len() < n * 4 {
            return Err(bad(&format!("expected {} data bytes, found {}", n * 4, body.len())));
        }
        let row = width * channels;
        let mut data = vec![0f32; n];
        for (i, chunk) in body[..n * 4].chunks_exact(4).enumerate() {
            let b = [chunk[0], chunk[1], chunk[2], chunk[3]];
            let v = if little { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) };
            let (file_row, col) = (i / row.max(1), i % row.max(1));
            data[(height - 1 - file_row) * row + col] = v;
        }
        Ok(Pfm { width, height, channels, data })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes, path)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        super::write_bytes(path, &self.encode())
    }
}

pub fn read_rgb(path: &Path) -> Result<Grid<Rgb>> {
    Ok(Pfm::read(path)?.to_rgb())
}

pub fn read_gray(path: &Path) -> Result<Grid<f64>> {
    Ok(Pfm::read(path)?.to_gray())
}

pub fn write_rgb(path: &Path, img: &Grid<Rgb>) -> Result<()> {
    Pfm::from_rgb(img).write(path)
}

pub fn write_gray(path: &Path, img: &Grid<f64>) -> Result<()> {
    Pfm::from_gray(img).write(path)
}
