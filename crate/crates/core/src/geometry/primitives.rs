//! Procedural meshes used by the synthetic-data generator and the tests.

use std::collections::HashMap;
use std::f64::consts::PI;

use super::mesh::{TriangleMesh, Uv};
use crate::math::Vec3;

/// Spherical UV of a unit direction: `u` is longitude (0.5 at +z), `v` is
/// colatitude from +y (0 at the north pole).
pub fn spherical_uv(d: Vec3) -> Uv {
    let u = 0.5 + d.x.atan2(d.z) / (2.0 * PI);
    let v = d.y.clamp(-1.0, 1.0).acos() / PI;
    [u, v]
}

/// Flip faces whose normal points toward `center`. Valid for star-shaped meshes.
fn orient_outward(positions: &[Vec3], faces: &mut [[u32; 3]], uvs: &mut [[Uv; 3]], center: Vec3) {
    for (face, uv) in faces.iter_mut().zip(uvs.iter_mut()) {
        let [a, b, c] = face.map(|i| positions[i as usize]);
        let n = (b - a).cross(c - a);
        let centroid = (a + b + c) / 3.0;
        if n.dot(centroid - center) < 0.0 {
            face.swap(1, 2);
            uv.swap(1, 2);
        }
    }
}

pub fn tetrahedron() -> TriangleMesh {
    let positions = vec![
        Vec3::new(1.0, 1.0, 1.0),
        Vec3::new(1.0, -1.0, -1.0),
        Vec3::new(-1.0, 1.0, -1.0),
        Vec3::new(-1.0, -1.0, 1.0),
    ];
    let mut faces = vec![[0, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 3]];
    let mut uvs = vec![[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]; 4];
    orient_outward(&positions, &mut faces, &mut uvs, Vec3::ZERO);
    TriangleMesh::new(positions, faces, uvs).expect("tetrahedron is valid")
}

/// Two triangles sharing the edge (1, 2).
pub fn two_triangles() -> TriangleMesh {
    TriangleMesh::without_uvs(
        vec![Vec3::ZERO, Vec3::X, Vec3::Y, Vec3::new(1.0, 1.0, 0.0)],
        vec![[0, 1, 2], [2, 1, 3]],
    )
    .expect("valid quad")
}

/// Subdivided icosahedron projected onto a sphere. Level 0 has 12 vertices,
/// level 1 has 42, level 2 has 162.
pub fn icosphere(subdivisions: u32, radius: f64) -> TriangleMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut positions: Vec<Vec3> = [
        (-1.0, t, 0.0),
        (1.0, t, 0.0),
        (-1.0, -t, 0.0),
        (1.0, -t, 0.0),
        (0.0, -1.0, t),
        (0.0, 1.0, t),
        (0.0, -1.0, -t),
        (0.0, 1.0, -t),
        (t, 0.0, -1.0),
        (t, 0.0, 1.0),
        (-t, 0.0, -1.0),
        (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vec3::new(x, y, z).normalized())
    .collect();
    let mut faces: Vec<[u32; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut midpoint: HashMap<(u32, u32), u32> = HashMap::new();
        let mut next = Vec::with_capacity(faces.len() * 4);
        let mut mid = |a: u32, b: u32, positions: &mut Vec<Vec3>| -> u32 {
            let key = (a.min(b), a.max(b));
            *midpoint.entry(key).or_insert_with(|| {
                positions.push(((positions[a as usize] + positions[b as usize]) * 0.5).normalized());
                (positions.len() - 1) as u32
            })
        };
        for &[a, b, c] in &faces {
            let ab = mid(a, b, &mut positions);
            let bc = mid(b, c, &mut positions);
            let ca = mid(c, a, &mut positions);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    let positions: Vec<Vec3> = positions.into_iter().map(|p| p * radius).collect();
    let mut uvs: Vec<[Uv; 3]> = faces
        .iter()
        .map(|f| {
            let mut uv = f.map(|i| spherical_uv(positions[i as usize].normalized()));
            // unwrap the longitude seam inside a face
            let max_u = uv.iter().map(|c| c[0]).fold(f64::MIN, f64::max);
            for c in uv.iter_mut() {
                if max_u - c[0] > 0.5 {
                    c[0] += 1.0;
                }
            }
            uv
        })
        .collect();
    orient_outward(&positions, &mut faces, &mut uvs, Vec3::ZERO);
    TriangleMesh::new(positions, faces, uvs).expect("icosphere is valid")
}

/// Latitude/longitude sphere with `segments` columns and `rings` latitude
/// bands, poles on ±y. Vertices are shared across the longitude seam; the
/// seam is carried by per-corner UVs so the texture atlas is the full unit
/// square.
pub fn uv_sphere(segments: u32, rings: u32, radius: f64) -> TriangleMesh {
    displaced_uv_sphere(segments, rings, |_| radius)
}

/// [`uv_sphere`] with a radius that depends on the unit direction.
pub fn displaced_uv_sphere(segments: u32, rings: u32, radius: impl Fn(Vec3) -> f64) -> TriangleMesh {
    assert!(segments >= 3 && rings >= 2);
    let dir = |ring: u32, seg: u32| -> Vec3 {
        let theta = PI * ring as f64 / rings as f64;
        let phi = -PI + 2.0 * PI * seg as f64 / segments as f64;
        Vec3::new(theta.sin() * phi.sin(), theta.cos(), theta.sin() * phi.cos())
    };
    let mut positions = vec![Vec3::Y * radius(Vec3::Y)];
    for ring in 1..rings {
        for seg in 0..segments {
            let d = dir(ring, seg);
            positions.push(d * radius(d));
        }
    }
    positions.push(-Vec3::Y * radius(-Vec3::Y));
    let south = (positions.len() - 1) as u32;
    let idx = |ring: u32, seg: u32| -> u32 { 1 + (ring - 1) * segments + seg % segments };
    let uv = |ring: u32, seg: f64| -> Uv { [seg / segments as f64, ring as f64 / rings as f64] };

    let mut faces = Vec::new();
    let mut uvs = Vec::new();
    for seg in 0..segments {
        let s = seg as f64;
        faces.push([0, idx(1, seg), idx(1, seg + 1)]);
        uvs.push([uv(0, s + 0.5), uv(1, s), uv(1, s + 1.0)]);
        for ring in 1..rings - 1 {
            let (a, b) = (idx(ring, seg), idx(ring, seg + 1));
            let (c, d) = (idx(ring + 1, seg), idx(ring + 1, seg + 1));
            faces.push([a, c, d]);
            uvs.push([uv(ring, s), uv(ring + 1, s), uv(ring + 1, s + 1.0)]);
            faces.push([a, d, b]);
            uvs.push([uv(ring, s), uv(ring + 1, s + 1.0), uv(ring, s + 1.0)]);
        }
        faces.push([south, idx(rings - 1, seg + 1), idx(rings - 1, seg)]);
        uvs.push([uv(rings, s + 0.5), uv(rings - 1, s + 1.0), uv(rings - 1, s)]);
    }
    orient_outward(&positions, &mut faces, &mut uvs, Vec3::ZERO);
    TriangleMesh::new(positions, faces, uvs).expect("uv sphere is valid")
}

/// Shape of the concavity pressed into [`dented_blob`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dent {
    pub direction: Vec3,
    /// Fractional radius removed at the dent center.
    pub depth: f64,
    /// Angular half-width (radians) of the Gaussian dent profile.
    pub width: f64,
}

impl Default for Dent {
    fn default() -> Self {
        Dent { direction: Vec3::Z, depth: 0.45, width: 0.35 }
    }
}

impl Dent {
    pub fn radius_scale(&self, d: Vec3) -> f64 {
        let angle = d.dot(self.direction.normalized()).clamp(-1.0, 1.0).acos();
        1.0 - self.depth * (-(angle / self.width).powi(2)).exp()
    }

    /// True for directions inside the concavity (within `1.5 × width`).
    pub fn contains(&self, d: Vec3) -> bool {
        d.normalized().dot(self.direction.normalized()).clamp(-1.0, 1.0).acos() < 1.5 * self.width
    }
}

/// Unit sphere with a Gaussian dent.
pub fn dented_blob(segments: u32, rings: u32, dent: Dent) -> TriangleMesh {
    displaced_uv_sphere(segments, rings, |d| dent.radius_scale(d))
}

/// Axis-aligned cube `[-h, h]³` as 12 triangles.
pub fn cube(half: f64) -> TriangleMesh {
    let mut positions = Vec::new();
    for i in 0..8 {
        positions.push(Vec3::new(
            if i & 1 == 0 { -half } else { half },
            if i & 2 == 0 { -half } else { half },
            if i & 4 == 0 { -half } else { half },
        ));
    }
    let quads = [[0, 1, 3, 2], [4, 6, 7, 5], [0, 4, 5, 1], [2, 3, 7, 6], [0, 2, 6, 4], [1, 5, 7, 3]];
    let mut faces = Vec::new();
    for q in quads {
        faces.push([q[0], q[1], q[2]]);
        faces.push([q[0], q[2], q[3]]);
    }
    let mut uvs = vec![[[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]]; faces.len()];
    orient_outward(&positions, &mut faces, &mut uvs, Vec3::ZERO);
    TriangleMesh::new(positions, faces, uvs).expect("cube is valid")
}

/// Lower half (y ≤ 0) of a unit uv-sphere: an open hemispherical bowl.
pub fn hemispherical_bowl(segments: u32, rings: u32) -> TriangleMesh {
    let full = uv_sphere(segments, rings, 1.0);
    let keep: Vec<usize> = (0..full.face_count())
        .filter(|&f| full.triangle(f).iter().all(|p| p.y <= 1e-9))
        .collect();
    let faces = keep.iter().map(|&f| full.faces()[f]).collect();
    let uvs = keep.iter().map(|&f| full.uvs()[f]).collect();
    TriangleMesh::new(full.positions().to_vec(), faces, uvs).expect("bowl is valid")
}

/// Square `[-h, h]²` in the plane through `center` spanned by `u` and `v`.
pub fn quad(center: Vec3, u: Vec3, v: Vec3, half: f64) -> TriangleMesh {
    let p = |a: f64, b: f64| center + u * (a * half) + v * (b * half);
    TriangleMesh::new(
        vec![p(-1.0, -1.0), p(1.0, -1.0), p(1.0, 1.0), p(-1.0, 1.0)],
        vec![[0, 1, 2], [0, 2, 3]],
        vec![[[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]], [[0.0, 0.0], [1.0, 1.0], [0.0, 1.0]]],
    )
    .expect("quad is valid")
}

/// Concatenate meshes into one triangle soup.
pub fn merge(meshes: &[&TriangleMesh]) -> TriangleMesh {
    let mut positions = Vec::new();
    let mut faces = Vec::new();
    let mut uvs = Vec::new();
    for m in meshes {
        let offset = positions.len() as u32;
        positions.extend_from_slice(m.positions());
        faces.extend(m.faces().iter().map(|f| f.map(|i| i + offset)));
        uvs.extend_from_slice(m.uvs());
    }
    TriangleMesh::new(positions, faces, uvs).expect("merged meshes are valid")
}
