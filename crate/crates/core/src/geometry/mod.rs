//! Meshes, the uniform Laplacian, and ray queries.

pub mod bvh;
pub mod laplacian;
pub mod mesh;
pub mod primitives;

pub use bvh::{Aabb, Bvh, Hit, Ray};
pub use laplacian::UniformLaplacian;
pub use mesh::{TriangleMesh, Uv};

use crate::math::Vec3;

/// Default self-intersection offset relative to the scene bounding diagonal.
pub const RELATIVE_RAY_EPSILON: f64 = 1e-4;

/// Binary light visibility `V(x, ω)`: 1 if the ray leaving `x` (pushed off the
/// surface by `eps` along `normal` and `dir`) escapes the mesh.
pub fn occlusion_query(bvh: &Bvh, mesh: &TriangleMesh, x: Vec3, normal: Vec3, dir: Vec3, eps: f64) -> f64 {
    let origin = x + normal * eps + dir * eps;
    if bvh.occluded(mesh, &Ray::infinite(origin, dir)) {
        0.0
    } else {
        1.0
    }
}
