//! Binned-SAH bounding volume hierarchy over world-space triangles.

use glam::DVec3;

use crate::error::SceneError;
use crate::math::{Aabb, Ray};

/// Smallest accepted hit distance; keeps rays from re-hitting their origin
/// surface.
pub const RAY_EPSILON: f64 = 1e-4;

const LEAF_SIZE: usize = 4;
const BINS: usize = 16;
const MAX_DEPTH: usize = 48;

/// A world-space triangle prepared for Möller–Trumbore intersection.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Triangle {
    pub v0: DVec3,
    pub e1: DVec3,
    pub e2: DVec3,
    /// Unit geometric normal, `e1 × e2` normalized (counter-clockwise front).
    pub normal: DVec3,
    pub material: u32,
}

impl Triangle {
    /// Returns `None` for zero-area triangles.
    pub fn new(a: DVec3, b: DVec3, c: DVec3, material: u32) -> Option<Self> {
        let e1 = b - a;
        let e2 = c - a;
        let n = e1.cross(e2);
        let len = n.length();
        if !(len > 1e-12) || !len.is_finite() {
            return None;
        }
        Some(Self {
            v0: a,
            e1,
            e2,
            normal: n / len,
            material,
        })
    }

    pub fn vertices(&self) -> [DVec3; 3] {
        [self.v0, self.v0 + self.e1, self.v0 + self.e2]
    }

    pub fn bounds(&self) -> Aabb {
        Aabb::from_points(self.vertices())
    }

    pub fn centroid(&self) -> DVec3 {
        self.v0 + (self.e1 + self.e2) / 3.0
    }

    /// Hit distance in `(t_min, t_max]`, if any. Both faces are reported.
    #[inline]
    pub fn intersect(&self, ray: &Ray, t_min: f64, t_max: f64) -> Option<f64> {
        const EDGE_SLACK: f64 = 1e-12;
        let d = *ray.dir;
        let p = d.cross(self.e2);
        let det = self.e1.dot(p);
        if det.abs() < 1e-14 {
            return None;
        }
        let inv = 1.0 / det;
        let s = ray.origin - self.v0;
        let u = s.dot(p) * inv;
        if !(-EDGE_SLACK..=1.0 + EDGE_SLACK).contains(&u) {
            return None;
        }
        let q = s.cross(self.e1);
        let v = d.dot(q) * inv;
        if v < -EDGE_SLACK || u + v > 1.0 + EDGE_SLACK {
            return None;
        }
        let t = self.e2.dot(q) * inv;
        (t > t_min && t <= t_max).then_some(t)
    }
}

#[derive(Clone, Copy, Debug)]
struct Node {
    bounds: Aabb,
    /// Leaf: first triangle. Interior: index of the right child (left child
    /// is the next node).
    index: u32,
    /// Number of triangles; zero marks an interior node.
    count: u32,
}

/// Bounding volume hierarchy.
#[derive(Clone, Debug)]
pub struct Bvh {
    nodes: Vec<Node>,
    tris: Vec<Triangle>,
}

impl Bvh {
    /// Builds a hierarchy over `tris`. Fails if nothing is left after
    /// discarding degenerate input.
    pub fn build(tris: Vec<Triangle>) -> Result<Self, SceneError> {
        let mut tris: Vec<Triangle> = tris
            .into_iter()
            .filter(|t| {
                t.normal.is_finite() && t.bounds().min.is_finite() && t.bounds().max.is_finite()
            })
            .collect();
        if tris.is_empty() {
            return Err(SceneError::Empty);
        }
        let mut nodes = Vec::with_capacity(2 * tris.len() / LEAF_SIZE + 1);
        let n = tris.len();
        let mut centroids: Vec<DVec3> = tris.iter().map(Triangle::centroid).collect();
        build_recursive(&mut nodes, &mut tris, &mut centroids, 0, n, 0);
        Ok(Self { nodes, tris })
    }

    pub fn triangles(&self) -> &[Triangle] {
        &self.tris
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.count > 0).count()
    }

    pub fn bounds(&self) -> Aabb {
        self.nodes[0].bounds
    }

    /// Nearest hit in `(t_min, t_max]`: `(triangle index, t)`.
    pub fn intersect(&self, ray: &Ray, t_min: f64, t_max: f64) -> Option<(usize, f64)> {
        let inv = ray.dir.recip();
        let mut best: Option<(usize, f64)> = None;
        let mut t_best = t_max;
        let mut stack = [0u32; 2 * MAX_DEPTH + 2];
        let mut sp = 0usize;
        if self.nodes[0]
            .bounds
            .ray_entry(ray.origin, inv, t_min, t_best)
            .is_none()
        {
            return None;
        }
        stack[sp] = 0;
        sp += 1;
        while sp > 0 {
            sp -= 1;
            let ni = stack[sp] as usize;
            let node = &self.nodes[ni];
            if node.count > 0 {
                let start = node.index as usize;
                for i in start..start + node.count as usize {
                    if let Some(t) = self.tris[i].intersect(ray, t_min, t_best) {
                        t_best = t;
                        best = Some((i, t));
                    }
                }
                continue;
            }
            let left = ni + 1;
            let right = node.index as usize;
            let tl = self.nodes[left]
                .bounds
                .ray_entry(ray.origin, inv, t_min, t_best);
            let tr = self.nodes[right]
                .bounds
                .ray_entry(ray.origin, inv, t_min, t_best);
            match (tl, tr) {
                (Some(a), Some(b)) => {
                    let (near, far) = if a <= b { (left, right) } else { (right, left) };
                    stack[sp] = far as u32;
                    stack[sp + 1] = near as u32;
                    sp += 2;
                }
                (Some(_), None) => {
                    stack[sp] = left as u32;
                    sp += 1;
                }
                (None, Some(_)) => {
                    stack[sp] = right as u32;
                    sp += 1;
                }
                (None, None) => {}
            }
        }
        best
    }

    /// Any hit in `(t_min, t_max)`.
    pub fn occluded(&self, ray: &Ray, t_min: f64, t_max: f64) -> bool {
        let inv = ray.dir.recip();
        let mut stack = [0u32; 2 * MAX_DEPTH + 2];
        let mut sp = 1usize;
        while sp > 0 {
            sp -= 1;
            let ni = stack[sp] as usize;
            let node = &self.nodes[ni];
            if node
                .bounds
                .ray_entry(ray.origin, inv, t_min, t_max)
                .is_none()
            {
                continue;
            }
            if node.count > 0 {
                let start = node.index as usize;
                if self.tris[start..start + node.count as usize]
                    .iter()
                    .any(|t| t.intersect(ray, t_min, t_max).is_some_and(|h| h < t_max))
                {
                    return true;
                }
                continue;
            }
            stack[sp] = (ni + 1) as u32;
            stack[sp + 1] = node.index;
            sp += 2;
        }
        false
    }
}

fn build_recursive(
    nodes: &mut Vec<Node>,
    tris: &mut [Triangle],
    centroids: &mut [DVec3],
    start: usize,
    end: usize,
    depth: usize,
) -> usize {
    let idx = nodes.len();
    let bounds = tris[start..end]
        .iter()
        .fold(Aabb::EMPTY, |b, t| b.union(t.bounds()));
    nodes.push(Node {
        bounds,
        index: start as u32,
        count: (end - start) as u32,
    });
    let count = end - start;
    if count <= LEAF_SIZE || depth >= MAX_DEPTH {
        return idx;
    }
    let cb = centroids[start..end]
        .iter()
        .fold(Aabb::EMPTY, |b, &c| b.include(c));
    let extent = cb.extent();
    let axis = if extent.x >= extent.y && extent.x >= extent.z {
        0
    } else if extent.y >= extent.z {
        1
    } else {
        2
    };
    let lo = cb.min[axis];
    let span = extent[axis];
    if !(span > 1e-12) {
        return idx;
    }

    let bin_of =
        |c: DVec3| -> usize { (((c[axis] - lo) / span * BINS as f64) as usize).min(BINS - 1) };
    let mut bin_bounds = [Aabb::EMPTY; BINS];
    let mut bin_counts = [0usize; BINS];
    for i in start..end {
        let b = bin_of(centroids[i]);
        bin_counts[b] += 1;
        bin_bounds[b] = bin_bounds[b].union(tris[i].bounds());
    }
    let mut best_cost = f64::INFINITY;
    let mut best_split = 0;
    for split in 1..BINS {
        let (l, r) = bin_bounds.split_at(split);
        let lc: usize = bin_counts[..split].iter().sum();
        let rc: usize = bin_counts[split..].iter().sum();
        if lc == 0 || rc == 0 {
            continue;
        }
        let la = l
            .iter()
            .fold(Aabb::EMPTY, |a, b| a.union(*b))
            .surface_area();
        let ra = r
            .iter()
            .fold(Aabb::EMPTY, |a, b| a.union(*b))
            .surface_area();
        let cost = la * lc as f64 + ra * rc as f64;
        if cost < best_cost {
            best_cost = cost;
            best_split = split;
        }
    }
    if best_split == 0 {
        return idx;
    }

    // Partition in place.
    let mut i = start;
    let mut j = end;
    while i < j {
        if bin_of(centroids[i]) < best_split {
            i += 1;
        } else {
            j -= 1;
            tris.swap(i, j);
            centroids.swap(i, j);
        }
    }
    let mid = i;
    if mid == start || mid == end {
        return idx;
    }
    nodes[idx].count = 0;
    build_recursive(nodes, tris, centroids, start, mid, depth + 1);
    let right = build_recursive(nodes, tris, centroids, mid, end, depth + 1);
    nodes[idx].index = right as u32;
    idx
}
