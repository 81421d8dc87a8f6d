//! Scattered node clouds: generation, boundary data and support domains.
//!
//! A cloud is the meshfree discretization of the tissue domain. Every node
//! carries a boundary flag, an outward unit normal where the flag is set, a
//! unit fiber direction and an integer region label. Support domains (the
//! neighbor set each collocation node interpolates over) are built either
//! from a dilated radius `d_c = α_sd · h` or from the k nearest nodes.

mod kdtree;
pub mod format;
mod mesh;

pub use kdtree::KdTree;
pub use mesh::{immerse_grid, SurfaceMesh};

use crate::point::Point;
use crate::scalar::Real;
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CloudError {
    #[error("extent {extent} along axis {axis} is not an integer multiple of spacing {h}")]
    NonDivisibleExtent { axis: char, extent: f64, h: f64 },
    #[error("spacing must be positive, got {0}")]
    NonPositiveSpacing(f64),
    #[error("grid dimension must be 2 or 3, got {0}")]
    BadDimension(usize),
    #[error("surface mesh is not a closed, consistently wound surface: {0}")]
    OpenMesh(String),
    #[error("immersed lattice at spacing {spacing} has no interior nodes")]
    EmptyInterior { spacing: f64 },
    #[error("support dilation must exceed 1, got {0}")]
    BadDilation(f64),
    #[error("node {node} has {got} support nodes; the linear basis needs at least {need}")]
    SupportTooSmall { node: usize, got: usize, need: usize },
    #[error("k = {k} outside valid range [{min}, {max}]")]
    KOutOfRange { k: usize, min: usize, max: usize },
    #[error("malformed cloud/mesh file at line {line}: {reason}")]
    Format { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Lattice bookkeeping kept by regular grids so the FEM reference solver can
/// recover the cell structure. `npts[2] = 1` for 2D grids; node index is
/// `ix + nx*(iy + ny*iz)` (x fastest).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridTopology {
    pub npts: [usize; 3],
}

/// Scattered collocation nodes with boundary and fiber data.
#[derive(Clone, Debug)]
pub struct NodeCloud<T> {
    dim: usize,
    points: Vec<Point<T>>,
    boundary: Vec<bool>,
    normals: Vec<Vector3<T>>,
    fibers: Vec<Vector3<T>>,
    regions: Vec<u32>,
    h: T,
    grid: Option<GridTopology>,
}

impl<T: Real> NodeCloud<T> {
    /// Assemble a cloud from raw per-node data. Normals are only meaningful
    /// where the boundary flag is set; interior entries may be zero.
    pub fn from_parts(
        dim: usize,
        points: Vec<Point<T>>,
        boundary: Vec<bool>,
        normals: Vec<Vector3<T>>,
        fibers: Vec<Vector3<T>>,
        regions: Vec<u32>,
        h: T,
    ) -> Self {
        assert_eq!(points.len(), boundary.len());
        assert_eq!(points.len(), normals.len());
        assert_eq!(points.len(), fibers.len());
        assert_eq!(points.len(), regions.len());
        NodeCloud { dim, points, boundary, normals, fibers, regions, h, grid: None }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Characteristic spacing in cm.
    pub fn h(&self) -> T {
        self.h
    }

    pub fn set_h(&mut self, h: T) {
        self.h = h;
    }

    pub fn points(&self) -> &[Point<T>] {
        &self.points
    }

    pub fn point(&self, i: usize) -> &Point<T> {
        &self.points[i]
    }

    pub fn is_boundary(&self, i: usize) -> bool {
        self.boundary[i]
    }

    pub fn boundary_flags(&self) -> &[bool] {
        &self.boundary
    }

    pub fn normal(&self, i: usize) -> &Vector3<T> {
        &self.normals[i]
    }

    pub fn set_normal(&mut self, i: usize, n: Vector3<T>) {
        self.normals[i] = n;
    }

    pub fn fiber(&self, i: usize) -> &Vector3<T> {
        &self.fibers[i]
    }

    pub fn set_fibers(&mut self, fiber: Vector3<T>) {
        let f = fiber.normalize();
        for v in &mut self.fibers {
            *v = f;
        }
    }

    pub fn region(&self, i: usize) -> u32 {
        self.regions[i]
    }

    pub fn regions(&self) -> &[u32] {
        &self.regions
    }

    pub fn set_region(&mut self, i: usize, label: u32) {
        self.regions[i] = label;
    }

    pub fn grid(&self) -> Option<&GridTopology> {
        self.grid.as_ref()
    }

    /// Size of the linear polynomial basis for this cloud's dimension.
    pub fn poly_basis_size(&self) -> usize {
        self.dim + 1
    }

    pub fn bbox(&self) -> (Point<T>, Point<T>) {
        let mut lo = self.points[0];
        let mut hi = self.points[0];
        for p in &self.points {
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

    /// Check the structural invariants: finite coordinates, unit normals on
    /// boundary nodes, unit fibers, and enough nodes for the linear basis.
    pub fn validate(&self) -> Result<(), CloudError> {
        let tol = unit_tolerance::<T>();
        if self.len() < self.poly_basis_size() + 1 {
            return Err(CloudError::SupportTooSmall {
                node: 0,
                got: self.len(),
                need: self.poly_basis_size() + 1,
            });
        }
        for (i, p) in self.points.iter().enumerate() {
            if !p.is_finite() {
                return Err(CloudError::Format { line: i, reason: "non-finite coordinate".into() });
            }
            if self.boundary[i] && (self.normals[i].norm() - T::one()).abs() > tol {
                return Err(CloudError::Format {
                    line: i,
                    reason: format!("boundary normal not unit length: |n| = {}", self.normals[i].norm()),
                });
            }
            if (self.fibers[i].norm() - T::one()).abs() > tol {
                return Err(CloudError::Format {
                    line: i,
                    reason: format!("fiber not unit length: |f| = {}", self.fibers[i].norm()),
                });
            }
        }
        Ok(())
    }

    /// Displace interior nodes by a uniform random offset in
    /// `[-amplitude*h, amplitude*h]` per in-plane coordinate. Boundary nodes
    /// stay fixed so flags and normals remain valid; the grid topology is
    /// dropped since the cloud is no longer structured.
    pub fn jitter_interior(&mut self, amplitude: T, seed: u64) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let span = (amplitude * self.h).to64();
        for i in 0..self.points.len() {
            if self.boundary[i] {
                continue;
            }
            for a in 0..self.dim {
                let off = rng.random_range(-span..=span);
                *self.points[i].coord_mut(a) += T::of(off);
            }
        }
        self.grid = None;
    }
}

fn unit_tolerance<T: Real>() -> T {
    let strict = T::of(1e-12);
    let eps = T::default_epsilon() * T::of(100.0);
    if eps > strict {
        eps
    } else {
        strict
    }
}

/// Regular lattice over `[0, extent[0]] × …` with spacing `h`.
///
/// Produces `extent[a]/h + 1` nodes per axis; the extents must be integer
/// multiples of `h` to within 1e-9 relative. Hull nodes get the boundary
/// flag; face normals are axis-aligned and edge/corner normals are the
/// normalized average of the adjacent face directions. Fibers default to +x
/// and regions to 0.
pub fn generate_regular_grid<T: Real>(extent: &[T], h: T, dim: usize) -> Result<NodeCloud<T>, CloudError> {
    if dim != 2 && dim != 3 {
        return Err(CloudError::BadDimension(dim));
    }
    assert_eq!(extent.len(), dim, "extent length must match dim");
    if h <= T::zero() {
        return Err(CloudError::NonPositiveSpacing(h.to64()));
    }
    let mut npts = [1usize; 3];
    for a in 0..dim {
        let cells_f = (extent[a] / h).to64();
        let cells = cells_f.round();
        if (cells_f - cells).abs() > 1e-9 * cells_f.max(1.0) || cells < 1.0 {
            return Err(CloudError::NonDivisibleExtent {
                axis: AXIS_NAMES[a],
                extent: extent[a].to64(),
                h: h.to64(),
            });
        }
        npts[a] = cells as usize + 1;
    }
    let n = npts[0] * npts[1] * npts[2];
    let mut points = Vec::with_capacity(n);
    let mut boundary = Vec::with_capacity(n);
    let mut normals = Vec::with_capacity(n);
    for iz in 0..npts[2] {
        for iy in 0..npts[1] {
            for ix in 0..npts[0] {
                let idx = [ix, iy, iz];
                let mut p = Point::new(T::zero(), T::zero(), T::zero());
                let mut nrm = Vector3::zeros();
                let mut on_hull = false;
                for a in 0..dim {
                    *p.coord_mut(a) = T::of_usize(idx[a]) * h;
                    if idx[a] == 0 {
                        nrm[a] = -T::one();
                        on_hull = true;
                    } else if idx[a] == npts[a] - 1 {
                        nrm[a] = T::one();
                        on_hull = true;
                    }
                }
                points.push(p);
                boundary.push(on_hull);
                normals.push(if on_hull { nrm.normalize() } else { Vector3::zeros() });
            }
        }
    }
    let fibers = vec![Vector3::x(); n];
    let regions = vec![0u32; n];
    let mut cloud = NodeCloud::from_parts(dim, points, boundary, normals, fibers, regions, h);
    cloud.grid = Some(GridTopology { npts });
    Ok(cloud)
}

const AXIS_NAMES: [char; 3] = ['x', 'y', 'z'];

/// Per-node support domains: neighbor index lists in CSR layout plus the
/// support radius `d_c` of each node.
#[derive(Clone, Debug)]
pub struct SupportTable<T> {
    indptr: Vec<usize>,
    neighbors: Vec<u32>,
    d_c: Vec<T>,
}

impl<T: Real> SupportTable<T> {
    pub fn n_nodes(&self) -> usize {
        self.indptr.len() - 1
    }

    /// Neighbor indices of node `i`, sorted ascending and containing `i`.
    pub fn support(&self, i: usize) -> &[u32] {
        &self.neighbors[self.indptr[i]..self.indptr[i + 1]]
    }

    pub fn support_len(&self, i: usize) -> usize {
        self.indptr[i + 1] - self.indptr[i]
    }

    /// Support radius of node `i` in cm.
    pub fn d_c(&self, i: usize) -> T {
        self.d_c[i]
    }

    pub fn indptr(&self) -> &[usize] {
        &self.indptr
    }

    pub fn total_entries(&self) -> usize {
        self.neighbors.len()
    }

    fn from_lists(lists: Vec<Vec<u32>>, d_c: Vec<T>) -> Self {
        let mut indptr = Vec::with_capacity(lists.len() + 1);
        indptr.push(0usize);
        let total: usize = lists.iter().map(Vec::len).sum();
        let mut neighbors = Vec::with_capacity(total);
        for list in lists {
            neighbors.extend_from_slice(&list);
            indptr.push(neighbors.len());
        }
        SupportTable { indptr, neighbors, d_c }
    }

    fn check_min_size(&self, need: usize) -> Result<(), CloudError> {
        for i in 0..self.n_nodes() {
            let got = self.support_len(i);
            if got < need {
                return Err(CloudError::SupportTooSmall { node: i, got, need });
            }
        }
        Ok(())
    }
}

/// Supports from a dilated radius `d_c = alpha_sd * h`, inclusive of nodes
/// sitting exactly on the radius.
pub fn build_support_radius<T: Real>(cloud: &NodeCloud<T>, alpha_sd: T) -> Result<SupportTable<T>, CloudError> {
    if alpha_sd <= T::one() {
        return Err(CloudError::BadDilation(alpha_sd.to64()));
    }
    let d_c = alpha_sd * cloud.h();
    // Tolerant inclusion so lattice nodes exactly on the radius are kept
    // regardless of rounding in h.
    let pad = T::one() + unit_tolerance::<T>();
    let r2 = d_c * d_c * pad;
    let tree = KdTree::build(cloud.points(), cloud.dim());
    let lists: Vec<Vec<u32>> = cloud
        .points()
        .par_iter()
        .map(|p| tree.within_radius2(p, r2))
        .collect();
    let radii = vec![d_c; cloud.len()];
    let table = SupportTable::from_lists(lists, radii);
    table.check_min_size(cloud.poly_basis_size() + 1)?;
    Ok(table)
}

/// Supports from the `k` nearest nodes (the node itself counts as one of
/// them). `d_c` is the distance to the farthest neighbor.
pub fn build_support_knn<T: Real>(cloud: &NodeCloud<T>, k: usize) -> Result<SupportTable<T>, CloudError> {
    let min_k = cloud.poly_basis_size() + 1;
    if k < min_k || k > cloud.len() {
        return Err(CloudError::KOutOfRange { k, min: min_k, max: cloud.len() });
    }
    let tree = KdTree::build(cloud.points(), cloud.dim());
    let results: Vec<(Vec<u32>, T)> = cloud
        .points()
        .par_iter()
        .map(|p| {
            let nn = tree.knn(p, k);
            let mut far2 = T::zero();
            for &(_, d2) in &nn {
                if d2 > far2 {
                    far2 = d2;
                }
            }
            (nn.into_iter().map(|(i, _)| i).collect(), far2.sqrt())
        })
        .collect();
    let mut lists = Vec::with_capacity(results.len());
    let mut radii = Vec::with_capacity(results.len());
    for (list, r) in results {
        lists.push(list);
        radii.push(r);
    }
    Ok(SupportTable::from_lists(lists, radii))
}
