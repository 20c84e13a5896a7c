//! Bounding-volume hierarchy over mesh triangles with nearest-hit and any-hit
//! traversal.

use super::mesh::TriangleMesh;
use crate::math::Vec3;

pub const MAX_LEAF_SIZE: usize = 4;
const SAH_BINS: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    pub dir: Vec3,
    pub t_min: f64,
    pub t_max: f64,
}

impl Ray {
    /// `dir` is normalized here; `t_min < t_max` is required.
    pub fn new(origin: Vec3, dir: Vec3, t_min: f64, t_max: f64) -> Self {
        debug_assert!(0.0 <= t_min && t_min < t_max, "bad ray extent [{t_min}, {t_max}]");
        Ray { origin, dir: dir.normalized(), t_min, t_max }
    }

    pub fn infinite(origin: Vec3, dir: Vec3) -> Self {
        Ray::new(origin, dir, 0.0, f64::INFINITY)
    }

    #[inline]
    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.dir * t
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub t: f64,
    pub face: u32,
    /// Weights of the face's three vertices; they sum to 1.
    pub bary: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub const EMPTY: Aabb = Aabb {
        min: Vec3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY),
        max: Vec3::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
    };

    #[inline]
    pub fn grow(&mut self, p: Vec3) {
        self.min = self.min.min(p);
        self.max = self.max.max(p);
    }

    #[inline]
    pub fn union(&self, o: &Aabb) -> Aabb {
        Aabb { min: self.min.min(o.min), max: self.max.max(o.max) }
    }

    pub fn contains(&self, o: &Aabb) -> bool {
        (0..3).all(|a| self.min[a] <= o.min[a] && o.max[a] <= self.max[a])
    }

    fn half_area(&self) -> f64 {
        let d = self.max - self.min;
        if d.x < 0.0 {
            return 0.0;
        }
        d.x * d.y + d.y * d.z + d.z * d.x
    }

    /// Slab test; returns the entry distance when the box overlaps `[t_min, t_max]`.
    #[inline]
    fn hit(&self, origin: Vec3, inv_dir: Vec3, t_min: f64, t_max: f64) -> Option<f64> {
        let mut t0 = t_min;
        let mut t1 = t_max;
        for a in 0..3 {
            let near = (self.min[a] - origin[a]) * inv_dir[a];
            let far = (self.max[a] - origin[a]) * inv_dir[a];
            let (near, far) = if near <= far { (near, far) } else { (far, near) };
            // NaN from 0 * inf falls through both comparisons and is ignored
            if near > t0 {
                t0 = near;
            }
            if far < t1 {
                t1 = far;
            }
        }
        // slack keeps slab rounding from rejecting hits exactly on a face plane
        if t0 <= t1 * (1.0 + 4.0 * f64::EPSILON) + 1e-300 {
            Some(t0)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Node {
    bounds: Aabb,
    /// Leaf: first index into `order`. Interior: index of the right child
    /// (the left child immediately follows its parent).
    offset: u32,
    count: u32,
}

impl Node {
    #[inline]
    fn is_leaf(&self) -> bool {
        self.count > 0
    }
}

/// Immutable after construction; safe to share across rendering workers.
#[derive(Debug, Clone)]
pub struct Bvh {
    nodes: Vec<Node>,
    order: Vec<u32>,
}

struct BuildTri {
    bounds: Aabb,
    centroid: Vec3,
}

impl Bvh {
    pub fn build(mesh: &TriangleMesh) -> Self {
        let tris: Vec<BuildTri> = (0..mesh.face_count())
            .map(|f| {
                let mut bounds = Aabb::EMPTY;
                for p in mesh.triangle(f) {
                    bounds.grow(p);
                }
                BuildTri { bounds, centroid: (bounds.min + bounds.max) * 0.5 }
            })
            .collect();
        let mut order: Vec<u32> = (0..tris.len() as u32).collect();
        let mut nodes = Vec::with_capacity(2 * tris.len().max(1));
        if !tris.is_empty() {
            build_recursive(&tris, &mut order, 0, tris.len(), &mut nodes);
        }
        Bvh { nodes, order }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Nearest hit with `t` in `[ray.t_min, ray.t_max]`.
    pub fn intersect(&self, mesh: &TriangleMesh, ray: &Ray) -> Option<Hit> {
        if self.nodes.is_empty() {
            return None;
        }
        let inv = Vec3::new(1.0 / ray.dir.x, 1.0 / ray.dir.y, 1.0 / ray.dir.z);
        let mut best: Option<Hit> = None;
        let mut t_max = ray.t_max;
        let mut stack = [0u32; 64];
        let mut sp = 0usize;
        let mut idx = 0u32;
        loop {
            let node = &self.nodes[idx as usize];
            if node.is_leaf() {
                for k in node.offset..node.offset + node.count {
                    let face = self.order[k as usize];
                    if let Some((t, bary)) = intersect_triangle(mesh.triangle(face as usize), ray, t_max) {
                        t_max = t;
                        best = Some(Hit { t, face, bary });
                    }
                }
            } else {
                let left = idx + 1;
                let right = node.offset;
                let hl = self.nodes[left as usize].bounds.hit(ray.origin, inv, ray.t_min, t_max);
                let hr = self.nodes[right as usize].bounds.hit(ray.origin, inv, ray.t_min, t_max);
                match (hl, hr) {
                    (Some(a), Some(b)) => {
                        let (first, second) = if a <= b { (left, right) } else { (right, left) };
                        stack[sp] = second;
                        sp += 1;
                        idx = first;
                        continue;
                    }
                    (Some(_), None) => {
                        idx = left;
                        continue;
                    }
                    (None, Some(_)) => {
                        idx = right;
                        continue;
                    }
                    (None, None) => {}
                }
            }
            if sp == 0 {
                break;
            }
            sp -= 1;
            idx = stack[sp];
        }
        best
    }

    /// Any-hit query: true if something lies within `[ray.t_min, ray.t_max]`.
    pub fn occluded(&self, mesh: &TriangleMesh, ray: &Ray) -> bool {
        if self.nodes.is_empty() {
            return false;
        }
        let inv = Vec3::new(1.0 / ray.dir.x, 1.0 / ray.dir.y, 1.0 / ray.dir.z);
        let mut stack = [0u32; 64];
        let mut sp = 1usize;
        while sp > 0 {
            sp -= 1;
            let idx = stack[sp];
            let node = &self.nodes[idx as usize];
            if node.bounds.hit(ray.origin, inv, ray.t_min, ray.t_max).is_none() {
                continue;
            }
            if node.is_leaf() {
                for k in node.offset..node.offset + node.count {
                    let face = self.order[k as usize] as usize;
                    if intersect_triangle(mesh.triangle(face), ray, ray.t_max).is_some() {
                        return true;
                    }
                }
            } else {
                stack[sp] = node.offset;
                stack[sp + 1] = idx + 1;
                sp += 2;
            }
        }
        false
    }

    /// Check structural invariants: each face appears in exactly one leaf and
    /// every child box lies inside its parent. Returns the number of faces
    /// referenced.
    pub fn validate(&self, mesh: &TriangleMesh) -> Result<usize, String> {
        let mut seen = vec![0u32; mesh.face_count()];
        if self.nodes.is_empty() {
            return if mesh.face_count() == 0 { Ok(0) } else { Err("empty tree for non-empty mesh".into()) };
        }
        let mut stack = vec![0usize];
        while let Some(i) = stack.pop() {
            let node = &self.nodes[i];
            if node.is_leaf() {
                if node.count as usize > MAX_LEAF_SIZE {
                    return Err(format!("leaf {i} holds {} faces", node.count));
                }
                for k in node.offset..node.offset + node.count {
                    let f = self.order[k as usize] as usize;
                    seen[f] += 1;
                    let mut b = Aabb::EMPTY;
                    for p in mesh.triangle(f) {
                        b.grow(p);
                    }
                    if !node.bounds.contains(&b) {
                        return Err(format!("face {f} escapes leaf {i}"));
                    }
                }
            } else {
                for child in [i + 1, node.offset as usize] {
                    if !node.bounds.contains(&self.nodes[child].bounds) {
                        return Err(format!("child {child} escapes parent {i}"));
                    }
                    stack.push(child);
                }
            }
        }
        match seen.iter().position(|&c| c != 1) {
            Some(f) => Err(format!("face {f} referenced {} times", seen[f])),
            None => Ok(seen.len()),
        }
    }
}

fn build_recursive(tris: &[BuildTri], order: &mut [u32], start: usize, end: usize, nodes: &mut Vec<Node>) -> u32 {
    let mut bounds = Aabb::EMPTY;
    let mut cbounds = Aabb::EMPTY;
    for &t in &order[start..end] {
        bounds = bounds.union(&tris[t as usize].bounds);
        cbounds.grow(tris[t as usize].centroid);
    }
    let index = nodes.len() as u32;
    nodes.push(Node { bounds, offset: start as u32, count: (end - start) as u32 });
    let n = end - start;
    if n <= MAX_LEAF_SIZE {
        return index;
    }

    let extent = cbounds.max - cbounds.min;
    let axis = if extent.x >= extent.y && extent.x >= extent.z {
        0
    } else if extent.y >= extent.z {
        1
    } else {
        2
    };
    let mid = if extent[axis] <= 0.0 {
        start + n / 2
    } else {
        sah_split(tris, order, start, end, axis, &cbounds)
    };

    build_recursive(tris, order, start, mid, nodes);
    let right = build_recursive(tris, order, mid, end, nodes);
    nodes[index as usize].offset = right;
    nodes[index as usize].count = 0;
    index
}

/// Binned SAH split along `axis`; falls back to a median split when the best
/// bin partition is one-sided.
fn sah_split(tris: &[BuildTri], order: &mut [u32], start: usize, end: usize, axis: usize, cb: &Aabb) -> usize {
    let lo = cb.min[axis];
    let scale = SAH_BINS as f64 / (cb.max[axis] - lo);
    let bin_of = |t: u32| -> usize { (((tris[t as usize].centroid[axis] - lo) * scale) as usize).min(SAH_BINS - 1) };
    let mut counts = [0usize; SAH_BINS];
    let mut boxes = [Aabb::EMPTY; SAH_BINS];
    for &t in &order[start..end] {
        let b = bin_of(t);
        counts[b] += 1;
        boxes[b] = boxes[b].union(&tris[t as usize].bounds);
    }
    let mut best = (f64::INFINITY, 0usize);
    for split in 1..SAH_BINS {
        let (mut lb, mut rb) = (Aabb::EMPTY, Aabb::EMPTY);
        let (mut lc, mut rc) = (0usize, 0usize);
        for b in 0..split {
            lb = lb.union(&boxes[b]);
            lc += counts[b];
        }
        for b in split..SAH_BINS {
            rb = rb.union(&boxes[b]);
            rc += counts[b];
        }
        if lc == 0 || rc == 0 {
            continue;
        }
        let cost = lb.half_area() * lc as f64 + rb.half_area() * rc as f64;
        if cost < best.0 {
            best = (cost, split);
        }
    }
    if best.0.is_infinite() {
        let slice = &mut order[start..end];
        let m = slice.len() / 2;
        slice.select_nth_unstable_by(m, |&a, &b| {
            tris[a as usize].centroid[axis].total_cmp(&tris[b as usize].centroid[axis])
        });
        return start + m;
    }
    let slice = &mut order[start..end];
    let mut i = 0;
    for j in 0..slice.len() {
        if bin_of(slice[j]) < best.1 {
            slice.swap(i, j);
            i += 1;
        }
    }
    start + i
}

/// Watertight ray/triangle test (Woop, Benthin & Wald 2013) in double
/// precision. Edges shared by two triangles are never missed by both.
#[inline]
pub fn intersect_triangle(tri: [Vec3; 3], ray: &Ray, t_max: f64) -> Option<(f64, [f64; 3])> {
    let d = ray.dir;
    let ad = d.abs();
    let kz = if ad.x >= ad.y && ad.x >= ad.z {
        0
    } else if ad.y >= ad.z {
        1
    } else {
        2
    };
    let mut kx = (kz + 1) % 3;
    let mut ky = (kx + 1) % 3;
    if d[kz] < 0.0 {
        std::mem::swap(&mut kx, &mut ky);
    }
    let sx = d[kx] / d[kz];
    let sy = d[ky] / d[kz];
    let sz = 1.0 / d[kz];

    let a = tri[0] - ray.origin;
    let b = tri[1] - ray.origin;
    let c = tri[2] - ray.origin;
    let ax = a[kx] - sx * a[kz];
    let ay = a[ky] - sy * a[kz];
    let bx = b[kx] - sx * b[kz];
    let by = b[ky] - sy * b[kz];
    let cx = c[kx] - sx * c[kz];
    let cy = c[ky] - sy * c[kz];

    let u = cx * by - cy * bx;
    let v = ax * cy - ay * cx;
    let w = bx * ay - by * ax;
    if (u < 0.0 || v < 0.0 || w < 0.0) && (u > 0.0 || v > 0.0 || w > 0.0) {
        return None;
    }
    let det = u + v + w;
    if det == 0.0 {
        return None;
    }
    let t_scaled = u * (sz * a[kz]) + v * (sz * b[kz]) + w * (sz * c[kz]);
    let t = t_scaled / det;
    if !(t >= ray.t_min && t <= t_max) {
        return None;
    }
    let inv = 1.0 / det;
    Some((t, [u * inv, v * inv, w * inv]))
}
