use super::mesh::TriangleMesh;
use crate::math::Vec3;

/// Combinatorial graph Laplacian of a mesh: `L[i][i] = deg(i)`, `L[i][j] = -1`
/// for each 1-ring neighbor. Symmetric positive semi-definite; annihilates
/// constant fields.
#[derive(Debug, Clone, PartialEq)]
pub struct UniformLaplacian {
    offsets: Vec<usize>,
    neighbors: Vec<u32>,
}

impl UniformLaplacian {
    pub fn build(mesh: &TriangleMesh) -> Self {
        Self::from_faces(mesh.vertex_count(), mesh.faces())
    }

    pub fn from_faces(vertex_count: usize, faces: &[[u32; 3]]) -> Self {
        let mut edges: Vec<(u32, u32)> = Vec::with_capacity(faces.len() * 6);
        for &[a, b, c] in faces {
            for (i, j) in [(a, b), (b, c), (c, a)] {
                if i != j {
                    edges.push((i, j));
                    edges.push((j, i));
                }
            }
        }
        edges.sort_unstable();
        edges.dedup();
        let mut offsets = vec![0usize; vertex_count + 1];
        for &(i, _) in &edges {
            offsets[i as usize + 1] += 1;
        }
        for i in 0..vertex_count {
            offsets[i + 1] += offsets[i];
        }
        let neighbors = edges.into_iter().map(|(_, j)| j).collect();
        UniformLaplacian { offsets, neighbors }
    }

    pub fn len(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn neighbors(&self, i: usize) -> &[u32] {
        &self.neighbors[self.offsets[i]..self.offsets[i + 1]]
    }

    #[inline]
    pub fn degree(&self, i: usize) -> usize {
        self.offsets[i + 1] - self.offsets[i]
    }

    /// `L x` for a scalar field.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        (0..self.len())
            .map(|i| {
                self.neighbors(i).iter().map(|&j| x[i] - x[j as usize]).sum()
            })
            .collect()
    }

    /// `L x` applied coordinate-wise to a vertex field.
    pub fn apply_vec3(&self, x: &[Vec3]) -> Vec<Vec3> {
        (0..self.len())
            .map(|i| {
                self.neighbors(i).iter().fold(Vec3::ZERO, |a, &j| a + (x[i] - x[j as usize]))
            })
            .collect()
    }

    /// Dense row-major copy, for tests and small oracles.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.len();
        let mut m = vec![vec![0.0; n]; n];
        for (i, row) in m.iter_mut().enumerate() {
            row[i] = self.degree(i) as f64;
            for &j in self.neighbors(i) {
                row[j as usize] = -1.0;
            }
        }
        m
    }
}
