//! Delaunay triangulation over the angular plane, point location and
//! barycentric weights.
//!
//! The triangulation is rebuilt from scratch: points are swept in
//! lexicographic order to form an initial triangulation of their convex hull,
//! then Lawson edge flips restore the empty-circumcircle property.

use std::collections::HashMap;

use super::{angular_distance, AngularPoint, GeometryError};

/// Triangles with half the absolute cross product below this are degenerate (deg²).
pub const AREA_EPSILON: f64 = 1e-9;
/// A vertex must be this far inside a circumcircle to violate the Delaunay property.
pub const CIRCUMCIRCLE_EPSILON: f64 = 1e-9;
/// Minimum separation between mesh vertices (deg).
pub const DEGENERACY_EPSILON: f64 = 1e-6;
/// Barycentric weights above `-WEIGHT_EPSILON` count as non-negative.
pub const WEIGHT_EPSILON: f64 = 1e-9;

pub type VertexId = u32;

/// Twice the signed area of `(a, b, c)`; positive when counter-clockwise.
pub fn orient(a: AngularPoint, b: AngularPoint, c: AngularPoint) -> f64 {
    (b.yaw - a.yaw) * (c.pitch - a.pitch) - (b.pitch - a.pitch) * (c.yaw - a.yaw)
}

pub fn signed_area(a: AngularPoint, b: AngularPoint, c: AngularPoint) -> f64 {
    0.5 * orient(a, b, c)
}

/// Circumcenter and radius, or `None` for a degenerate triangle.
pub fn circumcircle(a: AngularPoint, b: AngularPoint, c: AngularPoint) -> Option<(AngularPoint, f64)> {
    let (bx, by) = (b.yaw - a.yaw, b.pitch - a.pitch);
    let (cx, cy) = (c.yaw - a.yaw, c.pitch - a.pitch);
    let d = 2.0 * (bx * cy - by * cx);
    if d.abs() <= 4.0 * AREA_EPSILON {
        return None;
    }
    let b2 = bx * bx + by * by;
    let c2 = cx * cx + cy * cy;
    let ux = (cy * b2 - by * c2) / d;
    let uy = (bx * c2 - cx * b2) / d;
    Some((AngularPoint::new(a.yaw + ux, a.pitch + uy), ux.hypot(uy)))
}

/// True when `d` lies strictly inside the circumcircle of `(a, b, c)`.
pub fn in_circumcircle(a: AngularPoint, b: AngularPoint, c: AngularPoint, d: AngularPoint) -> bool {
    match circumcircle(a, b, c) {
        Some((center, radius)) => angular_distance(center, d) < radius - CIRCUMCIRCLE_EPSILON,
        None => false,
    }
}

/// Convex weights of a point with respect to a triangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarycentricWeights {
    pub weights: [f64; 3],
}

impl BarycentricWeights {
    pub fn sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// `Σ λ_r v_r`.
    pub fn reconstruct(&self, tri: [AngularPoint; 3]) -> AngularPoint {
        let mut p = AngularPoint::default();
        for (w, v) in self.weights.iter().zip(tri) {
            p.yaw += w * v.yaw;
            p.pitch += w * v.pitch;
        }
        p
    }
}

fn raw_weights(tri: [AngularPoint; 3], p: AngularPoint) -> Result<[f64; 3], GeometryError> {
    let [a, b, c] = tri;
    let area2 = orient(a, b, c);
    if area2.abs() * 0.5 <= AREA_EPSILON {
        return Err(GeometryError::DegenerateTriangle);
    }
    let l1 = orient(p, b, c) / area2;
    let l2 = orient(a, p, c) / area2;
    let l3 = orient(a, b, p) / area2;
    Ok([l1, l2, l3])
}

/// Barycentric coordinates of `p`, clamped to `[0, 1]` and renormalized.
pub fn barycentric(tri: [AngularPoint; 3], p: AngularPoint) -> Result<BarycentricWeights, GeometryError> {
    let raw = raw_weights(tri, p)?;
    let clamped = raw.map(|w| w.clamp(0.0, 1.0));
    let sum: f64 = clamped.iter().sum();
    if sum <= 0.0 {
        return Err(GeometryError::DegenerateTriangle);
    }
    Ok(BarycentricWeights {
        weights: clamped.map(|w| w / sum),
    })
}

/// Result of [`locate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Location {
    /// Index into the mesh's triangle list.
    Interior {
        triangle: usize,
    },
    Outside {
        vertex: VertexId,
        distance: f64,
    },
}

/// A triangulation of a set of labelled angular points.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TriMesh {
    vertices: Vec<(VertexId, AngularPoint)>,
    // indices into `vertices`, counter-clockwise
    triangles: Vec<[usize; 3]>,
}

impl TriMesh {
    pub fn vertices(&self) -> &[(VertexId, AngularPoint)] {
        &self.vertices
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn triangle_ids(&self, t: usize) -> [VertexId; 3] {
        self.triangles[t].map(|i| self.vertices[i].0)
    }

    pub fn triangle_points(&self, t: usize) -> [AngularPoint; 3] {
        self.triangles[t].map(|i| self.vertices[i].1)
    }

    /// All triangles as vertex-id triples.
    pub fn triangles(&self) -> impl Iterator<Item = [VertexId; 3]> + '_ {
        (0..self.triangles.len()).map(|t| self.triangle_ids(t))
    }

    pub fn point_of(&self, id: VertexId) -> Option<AngularPoint> {
        self.vertices.iter().find(|(v, _)| *v == id).map(|(_, p)| *p)
    }
}

/// Builds the Delaunay triangulation of `points`.
///
/// Fewer than three points, or all points collinear, yield a mesh with the
/// vertices and no triangles.
pub fn delaunay(points: &[(VertexId, AngularPoint)]) -> Result<TriMesh, GeometryError> {
    for (i, (id, p)) in points.iter().enumerate() {
        if !p.is_finite() {
            return Err(GeometryError::NonFinitePoint(*id));
        }
        for (other, q) in &points[..i] {
            if other == id {
                return Err(GeometryError::DuplicateVertex(*id));
            }
            if angular_distance(*p, *q) < DEGENERACY_EPSILON {
                return Err(GeometryError::PointsTooClose(*other, *id));
            }
        }
    }
    let mut mesh = TriMesh {
        vertices: points.to_vec(),
        triangles: Vec::new(),
    };
    if points.len() < 3 {
        return Ok(mesh);
    }
    let pts: Vec<AngularPoint> = points.iter().map(|(_, p)| *p).collect();
    let Some(mut tris) = sweep(&pts)? else {
        return Ok(mesh);
    };
    flip_to_delaunay(&pts, &mut tris);
    mesh.triangles = tris;
    Ok(mesh)
}

fn is_ccw(a: AngularPoint, b: AngularPoint, c: AngularPoint) -> bool {
    orient(a, b, c) * 0.5 > AREA_EPSILON
}

/// Sweep-hull construction of an arbitrary triangulation of the convex hull.
/// Returns `None` when all points are collinear.
fn sweep(pts: &[AngularPoint]) -> Result<Option<Vec<[usize; 3]>>, GeometryError> {
    let mut order: Vec<usize> = (0..pts.len()).collect();
    order.sort_by(|&i, &j| {
        pts[i]
            .yaw
            .total_cmp(&pts[j].yaw)
            .then(pts[i].pitch.total_cmp(&pts[j].pitch))
    });

    // leading run of collinear points
    let (s0, s1) = (order[0], order[1]);
    let Some(k) = (2..order.len()).find(|&k| (orient(pts[s0], pts[s1], pts[order[k]]) * 0.5).abs() > AREA_EPSILON)
    else {
        return Ok(None);
    };
    let pivot = order[k];
    let chain = &order[..k];
    let mut tris = Vec::with_capacity(2 * pts.len());
    for w in chain.windows(2) {
        let (a, b) = (w[0], w[1]);
        if orient(pts[a], pts[b], pts[pivot]) > 0.0 {
            tris.push([a, b, pivot]);
        } else {
            tris.push([b, a, pivot]);
        }
    }
    let mut hull: Vec<usize> = if orient(pts[chain[0]], pts[chain[k - 1]], pts[pivot]) > 0.0 {
        chain.iter().copied().chain([pivot]).collect()
    } else {
        let mut h = vec![chain[0], pivot];
        h.extend(chain[1..].iter().rev());
        h
    };

    for &p in &order[k + 1..] {
        let h = hull.len();
        let visible: Vec<bool> = (0..h)
            .map(|i| orient(pts[hull[i]], pts[hull[(i + 1) % h]], pts[p]) * 0.5 < -AREA_EPSILON)
            .collect();
        let Some(start) = (0..h).find(|&i| visible[i] && !visible[(i + h - 1) % h]) else {
            return Err(GeometryError::Degenerate);
        };
        let mut len = 0;
        while len < h && visible[(start + len) % h] {
            let a = hull[(start + len) % h];
            let b = hull[(start + len + 1) % h];
            tris.push([a, p, b]);
            len += 1;
        }
        let mut next = Vec::with_capacity(h + 1);
        next.push(hull[start]);
        next.push(p);
        for j in len..h {
            next.push(hull[(start + j) % h]);
        }
        hull = next;
    }
    Ok(Some(tris))
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Rotates `tri` so that it starts with the directed edge `u -> v`, returning the third vertex.
fn opposite(tri: [usize; 3], u: usize, v: usize) -> Option<usize> {
    (0..3)
        .find(|&i| tri[i] == u && tri[(i + 1) % 3] == v)
        .map(|i| tri[(i + 2) % 3])
}

fn flip_to_delaunay(pts: &[AngularPoint], tris: &mut [[usize; 3]]) {
    let mut edges: HashMap<(usize, usize), [usize; 2]> = HashMap::with_capacity(tris.len() * 2);
    for (t, tri) in tris.iter().enumerate() {
        for i in 0..3 {
            let e = edge_key(tri[i], tri[(i + 1) % 3]);
            edges.entry(e).and_modify(|slot| slot[1] = t).or_insert([t, usize::MAX]);
        }
    }
    let mut stack: Vec<(usize, usize)> = edges
        .iter()
        .filter(|(_, s)| s[1] != usize::MAX)
        .map(|(e, _)| *e)
        .collect();
    stack.sort_unstable();

    let n = pts.len();
    let mut budget = 64 * n * n + 1024;
    while let Some((a, b)) = stack.pop() {
        if budget == 0 {
            log::warn!("delaunay flip budget exhausted");
            break;
        }
        budget -= 1;
        let Some(&[t1, t2]) = edges.get(&(a, b)) else {
            continue;
        };
        if t2 == usize::MAX {
            continue;
        }
        // orient so that t1 holds u -> v
        let (u, v, t1, t2) = if opposite(tris[t1], a, b).is_some() {
            (a, b, t1, t2)
        } else {
            (b, a, t1, t2)
        };
        let (c, d) = match (opposite(tris[t1], u, v), opposite(tris[t2], v, u)) {
            (Some(c), Some(d)) => (c, d),
            _ => continue,
        };
        if !in_circumcircle(pts[u], pts[v], pts[c], pts[d]) {
            continue;
        }
        if !is_ccw(pts[u], pts[d], pts[c]) || !is_ccw(pts[d], pts[v], pts[c]) {
            continue;
        }
        tris[t1] = [u, d, c];
        tris[t2] = [d, v, c];
        edges.remove(&edge_key(u, v));
        edges.insert(edge_key(c, d), [t1, t2]);
        if let Some(slot) = edges.get_mut(&edge_key(u, d)) {
            for s in slot.iter_mut() {
                if *s == t2 {
                    *s = t1;
                }
            }
        }
        if let Some(slot) = edges.get_mut(&edge_key(v, c)) {
            for s in slot.iter_mut() {
                if *s == t1 {
                    *s = t2;
                }
            }
        }
        for e in [edge_key(u, d), edge_key(d, v), edge_key(v, c), edge_key(c, u)] {
            stack.push(e);
        }
    }
}

/// Finds the triangle containing `p` (boundary inclusive, lowest index wins),
/// or the nearest vertex when `p` is outside every triangle (lowest id wins ties).
pub fn locate(mesh: &TriMesh, p: AngularPoint) -> Result<Location, GeometryError> {
    if mesh.vertices.is_empty() {
        return Err(GeometryError::EmptyMesh);
    }
    for t in 0..mesh.triangles.len() {
        let w = raw_weights(mesh.triangle_points(t), p)?;
        if w.iter().all(|&l| l >= -WEIGHT_EPSILON) {
            return Ok(Location::Interior { triangle: t });
        }
    }
    let mut best: Option<(VertexId, f64)> = None;
    for &(id, q) in &mesh.vertices {
        let d = angular_distance(p, q);
        best = match best {
            Some((bid, bd)) if bd < d || (bd == d && bid < id) => Some((bid, bd)),
            _ => Some((id, d)),
        };
    }
    let (vertex, distance) = best.expect("non-empty");
    Ok(Location::Outside { vertex, distance })
}
