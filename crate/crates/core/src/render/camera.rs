use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{Rigid, Vec3};

/// Pinhole intrinsics in pixels; `x` right, `y` down, `z` forward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl Intrinsics {
    /// Square pixels, principal point at the image center.
    pub fn from_fov(width: usize, height: usize, fov_y_deg: f64) -> Self {
        let f = 0.5 * height as f64 / (0.5 * fov_y_deg.to_radians()).tan();
        Intrinsics { fx: f, fy: f, cx: 0.5 * width as f64, cy: 0.5 * height as f64, width, height }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) || !self.fx.is_finite() || !self.fy.is_finite() {
            return Err(Error::Config(format!("focal length must be positive, got ({}, {})", self.fx, self.fy)));
        }
        if self.width < 8 || self.height < 8 {
            return Err(Error::Config(format!("image resolution must be at least 8x8, got {}x{}", self.width, self.height)));
        }
        if !self.cx.is_finite() || !self.cy.is_finite() {
            return Err(Error::Config("principal point must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Camera {
    pub intrinsics: Intrinsics,
    /// Camera-from-world.
    pub pose: Rigid,
}

impl Camera {
    pub fn new(intrinsics: Intrinsics, pose: Rigid) -> Result<Self> {
        intrinsics.validate()?;
        Ok(Camera { intrinsics, pose })
    }

    pub fn width(&self) -> usize {
        self.intrinsics.width
    }

    pub fn height(&self) -> usize {
        self.intrinsics.height
    }

    pub fn pixel_count(&self) -> usize {
        self.intrinsics.width * self.intrinsics.height
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vec3 {
        self.pose.inverse().translation
    }

    /// World-space ray through the center of pixel `(x, y)`.
    pub fn primary_ray(&self, x: usize, y: usize) -> (Vec3, Vec3) {
        let k = &self.intrinsics;
        let d_cam = Vec3::new((x as f64 + 0.5 - k.cx) / k.fx, (y as f64 + 0.5 - k.cy) / k.fy, 1.0);
        let world_from_cam = self.pose.rotation.transpose();
        (self.center(), world_from_cam.mul_vec(d_cam).normalized())
    }

    /// Pixel coordinates of a world point, `None` behind the camera.
    pub fn project(&self, p: Vec3) -> Option<(f64, f64)> {
        let c = self.pose.apply_point(p);
        if c.z <= 0.0 {
            return None;
        }
        let k = &self.intrinsics;
        Some((k.fx * c.x / c.z + k.cx, k.fy * c.y / c.z + k.cy))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn center_ray_hits_target_and_projects_back() {
        let k = Intrinsics::from_fov(64, 64, 40.0);
        let cam = Camera::new(k, Rigid::look_at(Vec3::new(0.0, 0.0, 3.0), Vec3::ZERO, Vec3::Y)).unwrap();
        assert!((cam.center() - Vec3::new(0.0, 0.0, 3.0)).length() < 1e-12);
        let (o, d) = cam.primary_ray(20, 41);
        let p = o + d * 2.5;
        let (u, v) = cam.project(p).unwrap();
        assert!((u - 20.5).abs() < 1e-9 && (v - 41.5).abs() < 1e-9);
    }

    #[test]
    fn image_y_points_down_in_world() {
        let k = Intrinsics::from_fov(64, 64, 40.0);
        let cam = Camera::new(k, Rigid::look_at(Vec3::new(0.0, 0.0, 3.0), Vec3::ZERO, Vec3::Y)).unwrap();
        let (_, top) = cam.primary_ray(32, 0);
        assert!(top.y > 0.0);
    }

    #[test]
    fn tiny_resolution_rejected() {
        assert!(Camera::new(Intrinsics::from_fov(4, 64, 40.0), Rigid::IDENTITY).is_err());
    }
}
