use crate::error::{Error, Result};
use crate::math::Vec3;

/// Faces with area below this are rejected as degenerate.
pub const MIN_FACE_AREA: f64 = 1e-12;

pub type Uv = [f64; 2];

/// Indexed triangle mesh with per-corner UVs and per-vertex shading normals.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    positions: Vec<Vec3>,
    faces: Vec<[u32; 3]>,
    uvs: Vec<[Uv; 3]>,
    normals: Vec<Vec3>,
}

impl TriangleMesh {
    /// Validates indices, face areas and UVs, then computes vertex normals.
    pub fn new(positions: Vec<Vec3>, faces: Vec<[u32; 3]>, uvs: Vec<[Uv; 3]>) -> Result<Self> {
        if uvs.len() != faces.len() {
            return Err(Error::shape("per-corner uvs", faces.len(), uvs.len()));
        }
        for (f, face) in faces.iter().enumerate() {
            for &i in face {
                if i as usize >= positions.len() {
                    return Err(Error::IndexOutOfRange { face: f, index: i, count: positions.len() });
                }
            }
            if uvs[f].iter().flatten().any(|c| !c.is_finite()) {
                return Err(Error::NonFiniteUv { face: f });
            }
        }
        let mut mesh = TriangleMesh { positions, faces, uvs, normals: Vec::new() };
        mesh.compute_vertex_normals()?;
        Ok(mesh)
    }

    /// A mesh without texture coordinates; every corner gets UV (0, 0).
    pub fn without_uvs(positions: Vec<Vec3>, faces: Vec<[u32; 3]>) -> Result<Self> {
        let uvs = vec![[[0.0; 2]; 3]; faces.len()];
        Self::new(positions, faces, uvs)
    }

    pub fn empty() -> Self {
        TriangleMesh { positions: Vec::new(), faces: Vec::new(), uvs: Vec::new(), normals: Vec::new() }
    }

    #[inline]
    pub fn positions(&self) -> &[Vec3] {
        &self.positions
    }

    #[inline]
    pub fn faces(&self) -> &[[u32; 3]] {
        &self.faces
    }

    #[inline]
    pub fn uvs(&self) -> &[[Uv; 3]] {
        &self.uvs
    }

    #[inline]
    pub fn normals(&self) -> &[Vec3] {
        &self.normals
    }

    pub fn vertex_count(&self) -> usize {
        self.positions.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    #[inline]
    pub fn triangle(&self, face: usize) -> [Vec3; 3] {
        let [a, b, c] = self.faces[face];
        [self.positions[a as usize], self.positions[b as usize], self.positions[c as usize]]
    }

    /// Unnormalized face normal; its length is twice the face area.
    #[inline]
    pub fn face_cross(&self, face: usize) -> Vec3 {
        let [a, b, c] = self.triangle(face);
        (b - a).cross(c - a)
    }

    pub fn face_normal(&self, face: usize) -> Vec3 {
        self.face_cross(face).normalized()
    }

    pub fn face_area(&self, face: usize) -> f64 {
        0.5 * self.face_cross(face).length()
    }

    /// Replace vertex positions (same topology) and recompute normals.
    pub fn set_positions(&mut self, positions: Vec<Vec3>) -> Result<()> {
        if positions.len() != self.positions.len() {
            return Err(Error::shape("vertex positions", self.positions.len(), positions.len()));
        }
        if let Some(v) = positions.iter().position(|p| !p.is_finite()) {
            return Err(Error::NonFinitePosition { vertex: v });
        }
        self.positions = positions;
        self.compute_vertex_normals()
    }

    /// Area-weighted average of incident face normals, normalized.
    ///
    /// Vertices without incident faces get `+z`.
    pub fn compute_vertex_normals(&mut self) -> Result<()> {
        let mut acc = vec![Vec3::ZERO; self.positions.len()];
        for f in 0..self.faces.len() {
            let c = self.face_cross(f);
            let area = 0.5 * c.length();
            if !(area > MIN_FACE_AREA) {
                return Err(Error::DegenerateFace { face: f, area });
            }
            for &i in &self.faces[f] {
                acc[i as usize] += c;
            }
        }
        self.normals = acc
            .into_iter()
            .map(|n| {
                let len = n.length();
                if len > 0.0 {
                    n / len
                } else {
                    Vec3::Z
                }
            })
            .collect();
        Ok(())
    }

    /// Pull a gradient on the unit vertex normals back to vertex positions,
    /// through the normalization and the per-face cross products.
    pub fn normals_backward(&self, d_normals: &[Vec3]) -> Vec<Vec3> {
        let mut acc = vec![Vec3::ZERO; self.positions.len()];
        for f in 0..self.faces.len() {
            let c = self.face_cross(f);
            for &i in &self.faces[f] {
                acc[i as usize] += c;
            }
        }
        // n = a/|a|  ⇒  ∂a = (∂n − n (n·∂n)) / |a|
        let d_acc: Vec<Vec3> = acc
            .iter()
            .zip(d_normals)
            .map(|(&a, &g)| {
                let len = a.length();
                if len > 0.0 {
                    let n = a / len;
                    (g - n * n.dot(g)) / len
                } else {
                    Vec3::ZERO
                }
            })
            .collect();
        let mut d_pos = vec![Vec3::ZERO; self.positions.len()];
        for (f, &[i0, i1, i2]) in self.faces.iter().enumerate() {
            let gc = d_acc[i0 as usize] + d_acc[i1 as usize] + d_acc[i2 as usize];
            if gc == Vec3::ZERO {
                continue;
            }
            let [p0, p1, p2] = self.triangle(f);
            let (e1, e2) = (p1 - p0, p2 - p0);
            // c = e1 × e2
            let d_e1 = e2.cross(gc);
            let d_e2 = gc.cross(e1);
            d_pos[i1 as usize] += d_e1;
            d_pos[i2 as usize] += d_e2;
            d_pos[i0 as usize] -= d_e1 + d_e2;
        }
        d_pos
    }

    /// Flip every face's winding.
    pub fn reversed(&self) -> Result<Self> {
        let faces = self.faces.iter().map(|&[a, b, c]| [a, c, b]).collect();
        let uvs = self.uvs.iter().map(|&[a, b, c]| [a, c, b]).collect();
        Self::new(self.positions.clone(), faces, uvs)
    }

    /// Axis-aligned bounds `(min, max)`; `None` for a mesh without vertices.
    pub fn bounds(&self) -> Option<(Vec3, Vec3)> {
        let first = *self.positions.first()?;
        Some(self.positions.iter().fold((first, first), |(lo, hi), &p| (lo.min(p), hi.max(p))))
    }

    pub fn bounding_diagonal(&self) -> f64 {
        self.bounds().map_or(0.0, |(lo, hi)| (hi - lo).length())
    }

    /// Interpolated position, shading normal (unnormalized) and UV at barycentrics `bary`.
    pub fn interpolate(&self, face: usize, bary: [f64; 3]) -> (Vec3, Vec3, Uv) {
        let idx = self.faces[face];
        let mut p = Vec3::ZERO;
        let mut n = Vec3::ZERO;
        let mut uv = [0.0; 2];
        for k in 0..3 {
            p += self.positions[idx[k] as usize] * bary[k];
            n += self.normals[idx[k] as usize] * bary[k];
            uv[0] += self.uvs[face][k][0] * bary[k];
            uv[1] += self.uvs[face][k][1] * bary[k];
        }
        (p, n, uv)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::primitives;

    fn single_triangle() -> TriangleMesh {
        TriangleMesh::without_uvs(
            vec![Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0)],
            vec![[0, 1, 2]],
        )
        .unwrap()
    }

    #[test]
    fn planar_triangle_normals_point_up() {
        for n in single_triangle().normals() {
            assert_eq!(*n, Vec3::Z);
        }
    }

    #[test]
    fn tetrahedron_normals_point_outward() {
        let mesh = primitives::tetrahedron();
        let centroid = mesh.positions().iter().fold(Vec3::ZERO, |a, &p| a + p) / 4.0;
        for (p, n) in mesh.positions().iter().zip(mesh.normals()) {
            assert!(n.dot((*p - centroid).normalized()) > 0.0);
        }
    }

    #[test]
    fn icosphere_normals_match_sphere_normals() {
        let mesh = primitives::icosphere(4, 1.0);
        for (p, n) in mesh.positions().iter().zip(mesh.normals()) {
            assert!((*n - *p).length() < 1e-2, "{p:?} {n:?}");
        }
    }

    #[test]
    fn normals_backward_matches_finite_differences() {
        let mesh = primitives::icosphere(1, 1.0);
        let g: Vec<Vec3> = (0..mesh.vertex_count()).map(|i| Vec3::new((i as f64).sin(), 0.5, (i as f64 * 0.7).cos())).collect();
        let objective = |m: &TriangleMesh| m.normals().iter().zip(&g).map(|(n, g)| n.dot(*g)).sum::<f64>();
        let analytic = mesh.normals_backward(&g);
        let h = 1e-6;
        for v in [0usize, 5, 17, 41] {
            for axis in [Vec3::X, Vec3::Y, Vec3::Z] {
                let shifted = |s: f64| {
                    let mut m = mesh.clone();
                    let mut p = m.positions().to_vec();
                    p[v] += axis * s;
                    m.set_positions(p).unwrap();
                    objective(&m)
                };
                let fd = (shifted(h) - shifted(-h)) / (2.0 * h);
                assert!((fd - analytic[v].dot(axis)).abs() < 1e-6, "{fd} vs {}", analytic[v].dot(axis));
            }
        }
    }

    #[test]
    fn degenerate_face_is_named() {
        let err = TriangleMesh::without_uvs(
            vec![Vec3::ZERO, Vec3::X, Vec3::Y, Vec3::X * 2.0],
            vec![[0, 1, 2], [0, 1, 3]],
        )
        .unwrap_err();
        assert!(matches!(err, Error::DegenerateFace { face: 1, .. }), "{err}");
    }

    #[test]
    fn out_of_range_index_rejected() {
        let err = TriangleMesh::without_uvs(vec![Vec3::ZERO, Vec3::X, Vec3::Y], vec![[0, 1, 3]]).unwrap_err();
        assert!(matches!(err, Error::IndexOutOfRange { face: 0, index: 3, .. }));
    }

    #[test]
    fn normals_scale_invariant_and_flip_with_winding() {
        let mesh = primitives::icosphere(1, 1.0);
        let scaled = {
            let mut m = mesh.clone();
            m.set_positions(mesh.positions().iter().map(|&p| p * 3.7).collect()).unwrap();
            m
        };
        let flipped = mesh.reversed().unwrap();
        for i in 0..mesh.vertex_count() {
            assert!((mesh.normals()[i] - scaled.normals()[i]).length() < 1e-12);
            assert!((mesh.normals()[i] + flipped.normals()[i]).length() < 1e-12);
        }
    }

    #[test]
    fn normals_have_unit_length() {
        let mesh = primitives::uv_sphere(16, 8, 1.0);
        for n in mesh.normals() {
            assert!((n.length() - 1.0).abs() < 1e-6);
        }
    }
}
