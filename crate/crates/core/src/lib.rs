//! Occlusion-aware split-sum rendering and inverse rendering.
//!
//! The forward model shades a triangle mesh with a Lambertian diffuse term
//! (ray traced with multiple importance sampling against an environment
//! cubemap) and a Beckmann specular term evaluated with the split-sum
//! approximation, where the prefiltered environment lookup is gated by a
//! ray-traced, view-dependent visibility estimate. The `optim` module inverts
//! that model from posed images.

pub mod brdf;
pub mod error;
pub mod geometry;
pub mod io;
pub mod lighting;
pub mod math;
pub mod optim;
pub mod render;
pub mod sampling;
pub mod shading;
pub mod synth;

pub use error::{Error, Result};
pub use math::{Mat3, Rgb, Rigid, Vec3};
