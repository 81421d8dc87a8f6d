//! Mixed-collocation system matrices.
//!
//! The semi-discrete diffusion operator is built in two stages that mirror
//! the flux form of the monodomain equation: `K_a` maps nodal potentials to
//! nodal fluxes `q_I = D_I Σ_i ∇φ_I^i V_i`, and `K_s` maps nodal fluxes to
//! the flux divergence at each collocation point. Zero normal flux on the
//! boundary is enforced with a penalty: the flux rows of every boundary node
//! are premultiplied by `Q⁻¹ = (I + α n nᵀ)⁻¹`, inverted in closed form per
//! node via the rank-one update. The assembled operator is
//! `K′ = −K_s K̃_a`, with the sign fixed so that `dV/dt = −K′ V` is
//! dissipative (a cosine mode decays).
//!
//! With interpolating trial functions the mass matrix `M` collects the
//! Kronecker delta values and is the identity to rounding, which is what
//! lets the solver step explicitly without a linear solve.

use crate::approximants::ShapeFunctionSet;
use crate::node_cloud::NodeCloud;
use crate::scalar::Real;
use crate::sparse::CsrMatrix;
use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AssemblyError {
    #[error("fiber of node {node} is not unit length (|f| = {norm})")]
    NonUnitFiber { node: usize, norm: f64 },
    #[error("boundary normal of node {node} is not unit length (|n| = {norm})")]
    NonUnitNormal { node: usize, norm: f64 },
    #[error("transverse-to-longitudinal ratio must satisfy 0 < rho <= 1, got {0}")]
    BadRho(f64),
    #[error("diffusion coefficient must be non-negative, got {0} at node {node}", node = .1)]
    NegativeD0(f64, usize),
    #[error("{context}: expected {expect} nodes, got {got}")]
    SizeMismatch { context: &'static str, expect: usize, got: usize },
    #[error("penalty factor must be positive, got {0}")]
    BadPenalty(f64),
}

/// Anisotropic conduction tensor `D = d0 [(1-rho) f fᵀ + rho I]`.
///
/// `f` must be a unit vector. The tensor has eigenvalue `d0` along the fiber
/// and `d0 * rho` transverse to it; components outside the problem dimension
/// are zeroed.
pub fn diffusion_tensor<T: Real>(d0: T, rho: T, f: &Vector3<T>, dim: usize) -> Result<Matrix3<T>, AssemblyError> {
    if rho <= T::zero() || rho > T::one() {
        return Err(AssemblyError::BadRho(rho.to64()));
    }
    let tol = T::of(1e-9).max(T::default_epsilon() * T::of(100.0));
    if (f.norm() - T::one()).abs() > tol {
        return Err(AssemblyError::NonUnitFiber { node: usize::MAX, norm: f.norm().to64() });
    }
    let mut d = f * f.transpose() * (T::one() - rho) * d0;
    for a in 0..dim {
        d[(a, a)] += d0 * rho;
    }
    for a in dim..3 {
        for b in 0..3 {
            d[(a, b)] = T::zero();
            d[(b, a)] = T::zero();
        }
    }
    Ok(d)
}

/// Per-node conduction data: coefficient, anisotropy ratio and the assembled
/// tensors.
#[derive(Clone, Debug)]
pub struct DiffusionField<T> {
    dim: usize,
    d0: Vec<T>,
    rho: T,
    tensors: Vec<Matrix3<T>>,
}

impl<T: Real> DiffusionField<T> {
    /// Same `d0` everywhere except the listed scar regions, which conduct
    /// nothing. Fibers come from the cloud.
    pub fn new(cloud: &NodeCloud<T>, d0: T, rho: T, scar_regions: &[u32]) -> Result<Self, AssemblyError> {
        let per_node: Vec<T> = (0..cloud.len())
            .map(|i| if scar_regions.contains(&cloud.region(i)) { T::zero() } else { d0 })
            .collect();
        Self::from_per_node(cloud, per_node, rho)
    }

    pub fn from_per_node(cloud: &NodeCloud<T>, d0: Vec<T>, rho: T) -> Result<Self, AssemblyError> {
        if d0.len() != cloud.len() {
            return Err(AssemblyError::SizeMismatch { context: "diffusion d0", expect: cloud.len(), got: d0.len() });
        }
        if rho <= T::zero() || rho > T::one() {
            return Err(AssemblyError::BadRho(rho.to64()));
        }
        let mut tensors = Vec::with_capacity(cloud.len());
        for i in 0..cloud.len() {
            if d0[i] < T::zero() {
                return Err(AssemblyError::NegativeD0(d0[i].to64(), i));
            }
            let f = cloud.fiber(i);
            let d = diffusion_tensor(d0[i], rho, f, cloud.dim())
                .map_err(|_| AssemblyError::NonUnitFiber { node: i, norm: f.norm().to64() })?;
            tensors.push(d);
        }
        Ok(DiffusionField { dim: cloud.dim(), d0, rho, tensors })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rho(&self) -> T {
        self.rho
    }

    pub fn d0(&self, node: usize) -> T {
        self.d0[node]
    }

    pub fn tensor(&self, node: usize) -> &Matrix3<T> {
        &self.tensors[node]
    }

    pub fn len(&self) -> usize {
        self.d0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d0.is_empty()
    }
}

/// Penalty data for the zero-normal-flux boundary condition: the factor α
/// and the boundary node set with its unit normals.
#[derive(Clone, Debug)]
pub struct PenaltySpec<T> {
    pub alpha: T,
    boundary_nodes: Vec<u32>,
    normals: Vec<Vector3<T>>,
}

impl<T: Real> PenaltySpec<T> {
    pub fn from_cloud(alpha: T, cloud: &NodeCloud<T>) -> Result<Self, AssemblyError> {
        if alpha < T::zero() {
            return Err(AssemblyError::BadPenalty(alpha.to64()));
        }
        let tol = T::of(1e-9).max(T::default_epsilon() * T::of(100.0));
        let mut boundary_nodes = Vec::new();
        let mut normals = Vec::new();
        for i in 0..cloud.len() {
            if !cloud.is_boundary(i) {
                continue;
            }
            let n = cloud.normal(i);
            if (n.norm() - T::one()).abs() > tol {
                return Err(AssemblyError::NonUnitNormal { node: i, norm: n.norm().to64() });
            }
            boundary_nodes.push(i as u32);
            normals.push(*n);
        }
        Ok(PenaltySpec { alpha, boundary_nodes, normals })
    }

    pub fn boundary_nodes(&self) -> &[u32] {
        &self.boundary_nodes
    }

    /// Closed-form inverse of the per-node penalty block:
    /// `(I + α n nᵀ)⁻¹ = I − α/(1+α) n nᵀ` for unit `n`.
    pub fn block_inverse(&self, k: usize, dim: usize) -> Matrix3<T> {
        let n = &self.normals[k];
        let f = self.alpha / (T::one() + self.alpha);
        let mut q = Matrix3::identity() - n * n.transpose() * f;
        for a in dim..3 {
            for b in 0..3 {
                q[(a, b)] = T::zero();
                q[(b, a)] = T::zero();
            }
            q[(a, a)] = T::one();
        }
        q
    }
}

/// Flux operator `K_a`: row `I*dim + d` holds `(D_I ∇φ_I^i)_d` at column `i`,
/// so `q = K_a V` stacks the nodal flux vectors node-major.
pub fn assemble_ka<T: Real>(shapes: &ShapeFunctionSet<T>, diff: &DiffusionField<T>) -> Result<CsrMatrix<T>, AssemblyError> {
    let n = shapes.n_nodes();
    if diff.len() != n {
        return Err(AssemblyError::SizeMismatch { context: "K_a diffusion field", expect: n, got: diff.len() });
    }
    let dim = shapes.dim();
    let rows: Vec<Vec<(u32, T)>> = (0..n * dim)
        .into_par_iter()
        .map(|r| {
            let node = r / dim;
            let d = r % dim;
            let tensor = diff.tensor(node);
            let support = shapes.supports().support(node);
            let grads = shapes.grad_row(node);
            support
                .iter()
                .zip(grads)
                .map(|(&j, g)| {
                    let mut v = T::zero();
                    for b in 0..dim {
                        v += tensor[(d, b)] * g[b];
                    }
                    (j, v)
                })
                .collect()
        })
        .collect();
    Ok(CsrMatrix::from_rows(n, rows))
}

/// Premultiply the flux rows of every boundary node by the inverse penalty
/// block, which suppresses the normal flux component by `1/(1+α)`.
pub fn apply_penalty<T: Real>(ka: &mut CsrMatrix<T>, spec: &PenaltySpec<T>, dim: usize) -> Result<(), AssemblyError> {
    for (k, &b) in spec.boundary_nodes.iter().enumerate() {
        let qinv = spec.block_inverse(k, dim);
        let node = b as usize;
        let width = ka.row(node * dim).1.len();
        // Gather the dim×width block (all component rows share the pattern).
        let mut block = vec![T::zero(); dim * width];
        for d in 0..dim {
            let (cols, vals) = ka.row(node * dim + d);
            debug_assert_eq!(cols.len(), width);
            block[d * width..(d + 1) * width].copy_from_slice(vals);
        }
        let mut out = vec![T::zero(); width];
        for d in 0..dim {
            for (c, o) in out.iter_mut().enumerate() {
                let mut acc = T::zero();
                for b2 in 0..dim {
                    acc += qinv[(d, b2)] * block[b2 * width + c];
                }
                *o = acc;
            }
            ka.set_row_values(node * dim + d, &out);
        }
    }
    Ok(())
}

/// Divergence operator `K_s`: row `I` holds `∂φ_I^i/∂x_d` at column
/// `i*dim + d`, so `(K_s q)_I ≈ (∇·q)(x_I)`.
pub fn assemble_ks<T: Real>(shapes: &ShapeFunctionSet<T>) -> CsrMatrix<T> {
    let n = shapes.n_nodes();
    let dim = shapes.dim();
    let rows: Vec<Vec<(u32, T)>> = (0..n)
        .into_par_iter()
        .map(|node| {
            let support = shapes.supports().support(node);
            let grads = shapes.grad_row(node);
            let mut row = Vec::with_capacity(support.len() * dim);
            for (&j, g) in support.iter().zip(grads) {
                for d in 0..dim {
                    row.push((j * dim as u32 + d as u32, g[d]));
                }
            }
            row
        })
        .collect();
    CsrMatrix::from_rows(n * dim, rows)
}

/// The assembled mixed-collocation operators.
#[derive(Clone, Debug)]
pub struct SystemMatrices<T> {
    /// Interpolation (mass) matrix; identity to rounding for interpolating
    /// trial functions.
    pub m: CsrMatrix<T>,
    /// Penalized flux operator.
    pub k_a: CsrMatrix<T>,
    /// Divergence operator.
    pub k_s: CsrMatrix<T>,
    /// Diffusion operator with the dissipative sign: `dV/dt = -K' V`.
    pub k_prime: CsrMatrix<T>,
    /// Penalty factor used on the boundary rows.
    pub alpha: T,
}

/// Assemble `M`, the penalized `K_a`, `K_s` and `K' = -K_s K̃_a`.
///
/// Nodes with zero conduction (scar tissue) are cut out of the coupling:
/// their `K'` row is empty and their column is dropped from every other row,
/// so their potential evolves by reaction alone and never influences
/// neighbors.
pub fn assemble_system<T: Real>(
    cloud: &NodeCloud<T>,
    shapes: &ShapeFunctionSet<T>,
    diff: &DiffusionField<T>,
    alpha: T,
) -> Result<SystemMatrices<T>, AssemblyError> {
    let n = cloud.len();
    if shapes.n_nodes() != n {
        return Err(AssemblyError::SizeMismatch { context: "shape set", expect: n, got: shapes.n_nodes() });
    }
    let dim = cloud.dim();
    let mut k_a = assemble_ka(shapes, diff)?;
    let spec = PenaltySpec::from_cloud(alpha, cloud)?;
    apply_penalty(&mut k_a, &spec, dim)?;
    let k_s = assemble_ks(shapes);

    let scar: Vec<bool> = (0..n).map(|i| diff.d0(i) == T::zero()).collect();
    let k_prime_rows: Vec<Vec<(u32, T)>> = (0..n)
        .into_par_iter()
        .map_init(
            || (vec![T::zero(); n], vec![false; n], Vec::<u32>::new()),
            |(work, seen, touched), i| {
                if scar[i] {
                    return Vec::new();
                }
                let (s_cols, s_vals) = k_s.row(i);
                for (&sc, &sv) in s_cols.iter().zip(s_vals) {
                    let (a_cols, a_vals) = k_a.row(sc as usize);
                    for (&ac, &av) in a_cols.iter().zip(a_vals) {
                        if !seen[ac as usize] {
                            seen[ac as usize] = true;
                            touched.push(ac);
                        }
                        work[ac as usize] += sv * av;
                    }
                }
                touched.sort_unstable();
                let mut row = Vec::with_capacity(touched.len());
                for &c in touched.iter() {
                    if !scar[c as usize] {
                        row.push((c, -work[c as usize]));
                    }
                    work[c as usize] = T::zero();
                    seen[c as usize] = false;
                }
                touched.clear();
                row
            },
        )
        .collect();
    let k_prime = CsrMatrix::from_rows(n, k_prime_rows);

    let m_rows: Vec<Vec<(u32, T)>> = (0..n)
        .map(|i| {
            shapes
                .supports()
                .support(i)
                .iter()
                .zip(shapes.phi_row(i))
                .map(|(&j, &v)| (j, v))
                .collect()
        })
        .collect();
    let m = CsrMatrix::from_rows(n, m_rows);

    Ok(SystemMatrices { m, k_a, k_s, k_prime, alpha })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn tensor_aligned_fiber_is_diagonal() {
        let d = diffusion_tensor(1.0_f64, 0.2, &Vector3::x(), 3).unwrap();
        for a in 0..3 {
            for b in 0..3 {
                let want = if a != b { 0.0 } else if a == 0 { 1.0 } else { 0.2 };
                assert_abs_diff_eq!(d[(a, b)], want, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn tensor_isotropic_limit() {
        let f = Vector3::new(0.6_f64, 0.8, 0.0);
        let d = diffusion_tensor(2.0, 1.0, &f, 2).unwrap();
        for a in 0..2 {
            for b in 0..2 {
                let want = if a == b { 2.0 } else { 0.0 };
                assert_abs_diff_eq!(d[(a, b)], want, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn tensor_2d_tissue_values() {
        let d = diffusion_tensor(0.0013_f64, 0.2, &Vector3::x(), 2).unwrap();
        assert_abs_diff_eq!(d[(0, 0)], 0.0013, epsilon = 1e-18);
        assert_abs_diff_eq!(d[(1, 1)], 0.00026, epsilon = 1e-18);
        assert_abs_diff_eq!(d[(0, 1)], 0.0, epsilon = 1e-18);
        assert_eq!(d[(2, 2)], 0.0);
    }

    #[test]
    fn tensor_rejects_non_unit_fiber() {
        let err = diffusion_tensor(1.0_f64, 0.5, &Vector3::new(1.0, 1.0, 0.0), 2);
        assert!(err.is_err());
    }

    #[test]
    fn penalty_block_closed_form() {
        let cloud = crate::node_cloud::generate_regular_grid(&[1.0_f64, 1.0], 0.5, 2).unwrap();
        let spec = PenaltySpec::from_cloud(1e6, &cloud).unwrap();
        // Find the boundary entry whose normal is exactly -x (left edge
        // midpoint of the 3x3 grid).
        let k = spec
            .boundary_nodes()
            .iter()
            .position(|&b| {
                let n = cloud.normal(b as usize);
                n.x == -1.0 && n.y == 0.0
            })
            .unwrap();
        let q = spec.block_inverse(k, 2);
        // 1 - alpha/(1+alpha) cancels to ~1e-6, leaving rounding at 1e-16.
        assert_abs_diff_eq!(q[(0, 0)], 1.0 / (1.0 + 1e6), epsilon = 1e-15);
        assert_abs_diff_eq!(q[(1, 1)], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(q[(0, 1)], 0.0, epsilon = 1e-16);
    }

    #[test]
    fn zero_penalty_is_identity() {
        let cloud = crate::node_cloud::generate_regular_grid(&[1.0_f64, 1.0], 0.5, 2).unwrap();
        let spec = PenaltySpec::from_cloud(0.0, &cloud).unwrap();
        for k in 0..spec.boundary_nodes().len() {
            let q = spec.block_inverse(k, 2);
            for a in 0..2 {
                for b in 0..2 {
                    let want = if a == b { 1.0 } else { 0.0 };
                    assert_abs_diff_eq!(q[(a, b)], want, epsilon = 1e-15);
                }
            }
        }
    }
}
