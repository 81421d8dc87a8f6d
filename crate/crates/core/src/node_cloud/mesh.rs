//! Closed triangulated surfaces and the immersed-grid node generator.
//!
//! Point containment is decided by ray-casting parity. A hit that grazes a
//! triangle edge, vertex or plane is ambiguous, so the cast is retried along
//! the next direction from a fixed table until a clean parity is obtained;
//! the result is therefore deterministic.

use super::{CloudError, NodeCloud};
use crate::point::Point;
use crate::scalar::Real;
use nalgebra::Vector3;
use rayon::prelude::*;
use std::collections::HashMap;

/// Closed orientable triangle mesh with outward-facing windings.
#[derive(Clone, Debug)]
pub struct SurfaceMesh<T> {
    vertices: Vec<Point<T>>,
    triangles: Vec<[u32; 3]>,
    tri_normals: Vec<Vector3<T>>,
    tri_bbox: Vec<(Point<T>, Point<T>)>,
    scale: T,
}

/// Fixed fallback ray directions for degenerate hits (normalized lazily).
const RAY_DIRS: [[f64; 3]; 8] = [
    [1.0, 0.0, 0.0],
    [0.8401, 0.4201, 0.3430],
    [0.2113, 0.9403, 0.2663],
    [0.3651, 0.1826, 0.9129],
    [0.7818, -0.5213, 0.3418],
    [-0.3304, 0.8672, -0.3727],
    [0.4455, -0.2970, -0.8446],
    [0.6786, 0.5274, -0.5111],
];

enum RayHit {
    Miss,
    Hit,
    Degenerate,
}

impl<T: Real> SurfaceMesh<T> {
    /// Build from vertices and triangle index triples.
    ///
    /// Verifies that every undirected edge is shared by exactly two triangles
    /// with opposite directions (closed, consistently wound, orientable). If
    /// the enclosed signed volume is negative the windings are flipped so
    /// normals face outward.
    pub fn from_parts(vertices: Vec<Point<T>>, mut triangles: Vec<[u32; 3]>) -> Result<Self, CloudError> {
        if triangles.len() < 4 {
            return Err(CloudError::OpenMesh(format!("only {} triangles", triangles.len())));
        }
        let nv = vertices.len() as u32;
        let mut directed: HashMap<(u32, u32), u32> = HashMap::new();
        for (t, tri) in triangles.iter().enumerate() {
            for k in 0..3 {
                let a = tri[k];
                let b = tri[(k + 1) % 3];
                if a >= nv || b >= nv {
                    return Err(CloudError::OpenMesh(format!("triangle {t} references missing vertex")));
                }
                if a == b {
                    return Err(CloudError::OpenMesh(format!("triangle {t} is degenerate")));
                }
                if directed.insert((a, b), t as u32).is_some() {
                    return Err(CloudError::OpenMesh(format!(
                        "edge ({a},{b}) used twice in the same direction (inconsistent winding)"
                    )));
                }
            }
        }
        for &(a, b) in directed.keys() {
            if !directed.contains_key(&(b, a)) {
                return Err(CloudError::OpenMesh(format!("edge ({a},{b}) has no opposite twin (open surface)")));
            }
        }
        let volume6 = signed_volume6(&vertices, &triangles);
        if volume6 < T::zero() {
            for tri in &mut triangles {
                tri.swap(1, 2);
            }
        }
        let mut tri_normals = Vec::with_capacity(triangles.len());
        let mut tri_bbox = Vec::with_capacity(triangles.len());
        for tri in &triangles {
            let (a, b, c) = tri_points(&vertices, tri);
            let n = (b.to_vector() - a.to_vector()).cross(&(c.to_vector() - a.to_vector()));
            if n.norm() == T::zero() {
                return Err(CloudError::OpenMesh("zero-area triangle".into()));
            }
            tri_normals.push(n.normalize());
            tri_bbox.push(points_bbox(&[a, b, c]));
        }
        let (lo, hi) = points_bbox(&vertices);
        let scale = lo.dist(&hi);
        Ok(SurfaceMesh { vertices, triangles, tri_normals, tri_bbox, scale })
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn vertices(&self) -> &[Point<T>] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[u32; 3]] {
        &self.triangles
    }

    pub fn triangle_normal(&self, t: usize) -> &Vector3<T> {
        &self.tri_normals[t]
    }

    pub fn bbox(&self) -> (Point<T>, Point<T>) {
        points_bbox(&self.vertices)
    }

    /// Area-weighted per-vertex outward normals, normalized.
    pub fn vertex_normals(&self) -> Vec<Vector3<T>> {
        let mut acc = vec![Vector3::zeros(); self.vertices.len()];
        for tri in &self.triangles {
            let (a, b, c) = tri_points(&self.vertices, tri);
            // Cross product length is twice the area, so summing the raw
            // cross products is the area weighting.
            let n = (b.to_vector() - a.to_vector()).cross(&(c.to_vector() - a.to_vector()));
            for &v in tri {
                acc[v as usize] += n;
            }
        }
        acc.into_iter().map(|n| n.normalize()).collect()
    }

    /// Mean triangle perimeter times two: the nodal-spacing rule of thumb for
    /// immersed grids when no explicit spacing is given.
    pub fn suggested_spacing(&self) -> T {
        let mut total = T::zero();
        for tri in &self.triangles {
            let (a, b, c) = tri_points(&self.vertices, tri);
            total += a.dist(&b) + b.dist(&c) + c.dist(&a);
        }
        T::of(2.0) * total / T::of_usize(self.triangles.len())
    }

    /// True iff `p` lies strictly inside the surface.
    pub fn contains(&self, p: &Point<T>) -> bool {
        let (lo, hi) = self.bbox();
        for a in 0..3 {
            if p.coord(a) < lo.coord(a) || p.coord(a) > hi.coord(a) {
                return false;
            }
        }
        for dir in RAY_DIRS {
            let d = Vector3::new(T::of(dir[0]), T::of(dir[1]), T::of(dir[2])).normalize();
            match self.cast_parity(p, &d) {
                Some(odd) => return odd,
                None => continue,
            }
        }
        // Every direction grazed the surface: the point is on (or almost on)
        // the boundary. Classify as outside.
        false
    }

    fn cast_parity(&self, p: &Point<T>, dir: &Vector3<T>) -> Option<bool> {
        let mut crossings = 0usize;
        for (t, tri) in self.triangles.iter().enumerate() {
            let (lo, hi) = &self.tri_bbox[t];
            if !ray_may_hit_aabb(p, dir, lo, hi, self.scale) {
                continue;
            }
            let (a, b, c) = tri_points(&self.vertices, tri);
            match ray_triangle(p, dir, &a, &b, &c, self.scale) {
                RayHit::Hit => crossings += 1,
                RayHit::Miss => {}
                RayHit::Degenerate => return None,
            }
        }
        Some(crossings % 2 == 1)
    }

    /// Distance from `p` to the closest point of the surface.
    pub fn distance_to_surface(&self, p: &Point<T>) -> T {
        let mut best = T::of(f64::INFINITY);
        for (t, tri) in self.triangles.iter().enumerate() {
            let (lo, hi) = &self.tri_bbox[t];
            if aabb_dist2_lower_bound(p, lo, hi) >= best {
                continue;
            }
            let (a, b, c) = tri_points(&self.vertices, tri);
            let d2 = point_triangle_dist2(p, &a, &b, &c);
            if d2 < best {
                best = d2;
            }
        }
        best.sqrt()
    }

    /// Axis-aligned box `[lo, hi]` as 12 outward-wound triangles.
    pub fn axis_box(lo: Point<T>, hi: Point<T>) -> Self {
        let v = |mask: usize| {
            Point::new(
                if mask & 1 == 0 { lo.x } else { hi.x },
                if mask & 2 == 0 { lo.y } else { hi.y },
                if mask & 4 == 0 { lo.z } else { hi.z },
            )
        };
        let vertices: Vec<Point<T>> = (0..8).map(v).collect();
        let quads = [
            ([0, 2, 3, 1], "z-"),
            ([4, 5, 7, 6], "z+"),
            ([0, 1, 5, 4], "y-"),
            ([2, 6, 7, 3], "y+"),
            ([0, 4, 6, 2], "x-"),
            ([1, 3, 7, 5], "x+"),
        ];
        let mut triangles = Vec::with_capacity(12);
        for (q, _) in quads {
            triangles.push([q[0], q[1], q[2]]);
            triangles.push([q[0], q[2], q[3]]);
        }
        SurfaceMesh::from_parts(vertices, triangles).expect("box is a valid closed mesh")
    }

    /// Geodesic sphere of the given radius centered at the origin, built by
    /// subdividing an icosahedron and projecting onto the sphere.
    /// `subdivisions = 2` gives 320 faces.
    pub fn icosphere(radius: T, subdivisions: u32) -> Self {
        let phi = (1.0 + 5.0_f64.sqrt()) / 2.0;
        let raw = [
            (-1.0, phi, 0.0),
            (1.0, phi, 0.0),
            (-1.0, -phi, 0.0),
            (1.0, -phi, 0.0),
            (0.0, -1.0, phi),
            (0.0, 1.0, phi),
            (0.0, -1.0, -phi),
            (0.0, 1.0, -phi),
            (phi, 0.0, -1.0),
            (phi, 0.0, 1.0),
            (-phi, 0.0, -1.0),
            (-phi, 0.0, 1.0),
        ];
        let mut vertices: Vec<Vector3<T>> = raw
            .iter()
            .map(|&(x, y, z)| Vector3::new(T::of(x), T::of(y), T::of(z)).normalize())
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
            let mut cache: HashMap<(u32, u32), u32> = HashMap::new();
            let mut next = Vec::with_capacity(faces.len() * 4);
            for [a, b, c] in faces {
                let mut mid = |i: u32, j: u32| -> u32 {
                    let key = (i.min(j), i.max(j));
                    *cache.entry(key).or_insert_with(|| {
                        let m = ((vertices[i as usize] + vertices[j as usize]) * T::of(0.5)).normalize();
                        vertices.push(m);
                        vertices.len() as u32 - 1
                    })
                };
                let ab = mid(a, b);
                let bc = mid(b, c);
                let ca = mid(c, a);
                next.push([a, ab, ca]);
                next.push([b, bc, ab]);
                next.push([c, ca, bc]);
                next.push([ab, bc, ca]);
            }
            faces = next;
        }
        let pts = vertices.iter().map(|v| Point::from_vector(&(v * radius))).collect();
        SurfaceMesh::from_parts(pts, faces).expect("icosphere is a valid closed mesh")
    }
}

/// Immersed-grid node generation: a regular lattice over the surface's
/// bounding box is filtered by containment, lattice nodes closer than
/// `0.5 * spacing` to the surface are dropped to avoid near-duplicates, and
/// the surviving interior nodes are united with the surface vertices. Surface
/// vertices carry the boundary flag and area-weighted vertex normals.
pub fn immerse_grid<T: Real>(mesh: &SurfaceMesh<T>, spacing: T) -> Result<NodeCloud<T>, CloudError> {
    if spacing <= T::zero() {
        return Err(CloudError::NonPositiveSpacing(spacing.to64()));
    }
    let (lo, hi) = mesh.bbox();
    let mut counts = [0usize; 3];
    for a in 0..3 {
        counts[a] = ((hi.coord(a) - lo.coord(a)) / spacing).to64().floor() as usize + 1;
    }
    let mut lattice = Vec::new();
    for iz in 0..counts[2] {
        for iy in 0..counts[1] {
            for ix in 0..counts[0] {
                lattice.push(Point::new(
                    lo.x + T::of_usize(ix) * spacing,
                    lo.y + T::of_usize(iy) * spacing,
                    lo.z + T::of_usize(iz) * spacing,
                ));
            }
        }
    }
    let cull = spacing * T::of(0.5);
    let interior: Vec<Point<T>> = lattice
        .into_par_iter()
        .filter(|p| mesh.distance_to_surface(p) >= cull && mesh.contains(p))
        .collect();
    if interior.is_empty() {
        return Err(CloudError::EmptyInterior { spacing: spacing.to64() });
    }
    let surf_normals = mesh.vertex_normals();
    let n_total = mesh.n_vertices() + interior.len();
    let mut points = Vec::with_capacity(n_total);
    let mut boundary = Vec::with_capacity(n_total);
    let mut normals = Vec::with_capacity(n_total);
    for (v, n) in mesh.vertices().iter().zip(surf_normals) {
        points.push(*v);
        boundary.push(true);
        normals.push(n);
    }
    for p in interior {
        points.push(p);
        boundary.push(false);
        normals.push(Vector3::zeros());
    }
    let fibers = vec![Vector3::x(); n_total];
    let regions = vec![0u32; n_total];
    Ok(NodeCloud::from_parts(3, points, boundary, normals, fibers, regions, spacing))
}

fn tri_points<T: Real>(vertices: &[Point<T>], tri: &[u32; 3]) -> (Point<T>, Point<T>, Point<T>) {
    (vertices[tri[0] as usize], vertices[tri[1] as usize], vertices[tri[2] as usize])
}

fn points_bbox<T: Real>(pts: &[Point<T>]) -> (Point<T>, Point<T>) {
    let mut lo = pts[0];
    let mut hi = pts[0];
    for p in pts {
        for a in 0..3 {
            if p.coord(a) < lo.coord(a) {
                *lo.coord_mut(a) = p.coord(a);
            }
            if p.coord(a) > hi.coord(a) {
                *hi.coord_mut(a) = p.coord(a);
            }
        }
    }
    (lo, hi)
}

fn signed_volume6<T: Real>(vertices: &[Point<T>], triangles: &[[u32; 3]]) -> T {
    let mut v6 = T::zero();
    for tri in triangles {
        let (a, b, c) = tri_points(vertices, tri);
        v6 += a.to_vector().dot(&b.to_vector().cross(&c.to_vector()));
    }
    v6
}

/// Conservative slab test: can a ray from `p` along `dir` touch the box
/// padded by a small multiple of the mesh scale?
fn ray_may_hit_aabb<T: Real>(p: &Point<T>, dir: &Vector3<T>, lo: &Point<T>, hi: &Point<T>, scale: T) -> bool {
    let pad = scale * T::of(1e-9);
    let mut tmin = T::zero();
    let mut tmax = T::of(f64::INFINITY);
    for a in 0..3 {
        let d = dir[a];
        let (l, h) = (lo.coord(a) - pad, hi.coord(a) + pad);
        if d.abs() < T::default_epsilon() {
            if p.coord(a) < l || p.coord(a) > h {
                return false;
            }
        } else {
            let inv = T::one() / d;
            let mut t1 = (l - p.coord(a)) * inv;
            let mut t2 = (h - p.coord(a)) * inv;
            if t1 > t2 {
                std::mem::swap(&mut t1, &mut t2);
            }
            if t1 > tmin {
                tmin = t1;
            }
            if t2 < tmax {
                tmax = t2;
            }
            if tmin > tmax {
                return false;
            }
        }
    }
    true
}

fn aabb_dist2_lower_bound<T: Real>(p: &Point<T>, lo: &Point<T>, hi: &Point<T>) -> T {
    let mut d2 = T::zero();
    for a in 0..3 {
        let c = p.coord(a);
        let d = if c < lo.coord(a) {
            lo.coord(a) - c
        } else if c > hi.coord(a) {
            c - hi.coord(a)
        } else {
            T::zero()
        };
        d2 += d * d;
    }
    d2
}

/// Möller–Trumbore intersection classifying grazing hits as degenerate.
fn ray_triangle<T: Real>(p: &Point<T>, dir: &Vector3<T>, a: &Point<T>, b: &Point<T>, c: &Point<T>, scale: T) -> RayHit {
    let eps_bary = T::of(1e-10);
    let eps_t = scale * T::of(1e-12);
    let e1 = b.to_vector() - a.to_vector();
    let e2 = c.to_vector() - a.to_vector();
    let pvec = dir.cross(&e2);
    let det = e1.dot(&pvec);
    let det_scale = e1.norm() * e2.norm();
    if det.abs() <= det_scale * T::of(1e-13) {
        // Ray parallel to the triangle plane: degenerate only if coplanar.
        let n = e1.cross(&e2);
        let dist = (p.to_vector() - a.to_vector()).dot(&n) / n.norm();
        if dist.abs() <= eps_t {
            return RayHit::Degenerate;
        }
        return RayHit::Miss;
    }
    let inv_det = T::one() / det;
    let tvec = p.to_vector() - a.to_vector();
    let u = tvec.dot(&pvec) * inv_det;
    if u < -eps_bary || u > T::one() + eps_bary {
        return RayHit::Miss;
    }
    let qvec = tvec.cross(&e1);
    let v = dir.dot(&qvec) * inv_det;
    if v < -eps_bary || u + v > T::one() + eps_bary {
        return RayHit::Miss;
    }
    let t = e2.dot(&qvec) * inv_det;
    if t < -eps_t {
        return RayHit::Miss;
    }
    let near_edge = u < eps_bary || v < eps_bary || u + v > T::one() - eps_bary;
    if near_edge || t <= eps_t {
        return RayHit::Degenerate;
    }
    RayHit::Hit
}

/// Squared distance from `p` to triangle `abc` (Ericson's closest-point
/// construction).
fn point_triangle_dist2<T: Real>(p: &Point<T>, a: &Point<T>, b: &Point<T>, c: &Point<T>) -> T {
    let ab = b.to_vector() - a.to_vector();
    let ac = c.to_vector() - a.to_vector();
    let ap = p.to_vector() - a.to_vector();
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= T::zero() && d2 <= T::zero() {
        return ap.norm_squared();
    }
    let bp = p.to_vector() - b.to_vector();
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= T::zero() && d4 <= d3 {
        return bp.norm_squared();
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= T::zero() && d1 >= T::zero() && d3 <= T::zero() {
        let v = d1 / (d1 - d3);
        return (ap - ab * v).norm_squared();
    }
    let cp = p.to_vector() - c.to_vector();
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= T::zero() && d5 <= d6 {
        return cp.norm_squared();
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= T::zero() && d2 >= T::zero() && d6 <= T::zero() {
        let w = d2 / (d2 - d6);
        return (ap - ac * w).norm_squared();
    }
    let va = d3 * d6 - d5 * d4;
    if va <= T::zero() && (d4 - d3) >= T::zero() && (d5 - d6) >= T::zero() {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return (bp - (c.to_vector() - b.to_vector()) * w).norm_squared();
    }
    let denom = T::one() / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    (ap - ab * v - ac * w).norm_squared()
}
