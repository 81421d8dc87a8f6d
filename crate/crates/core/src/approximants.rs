//! Interpolating meshfree trial functions: radial point interpolation (RPI)
//! and moving Kriging interpolation (MKI).
//!
//! Both are built on the multiquadric radial basis `(d² + r_c²)^q` with
//! `r_c = α_c · d_c`, where `d_c` is the node's support radius, and both
//! interpolate: shape functions equal the Kronecker delta at the support
//! nodes, so nodal values are the field values and essential boundary
//! conditions can be imposed directly.
//!
//! RPI enriches the radial basis with the linear polynomial and solves the
//! bordered system `G = [[R, P], [Pᵀ, 0]]` per node; MKI has the linear basis
//! built in through the Kriging matrices `A = (PᵀC⁻¹P)⁻¹PᵀC⁻¹` and
//! `B = C⁻¹(I − PA)`. Per-node systems are solved in support-local
//! coordinates scaled by `1/d_c`, which keeps the moment matrices
//! well-conditioned without changing the interpolant; one step of iterative
//! refinement is applied to every solve. Gradients are analytic: only the
//! evaluation-point row `{r(x), p(x)}` (or `{c(x), p(x)}`) depends on the
//! evaluation point, so differentiating that row gives the exact shape
//! gradients.

use crate::node_cloud::{NodeCloud, SupportTable};
use crate::point::Point;
use crate::scalar::Real;
use nalgebra::{DMatrix, Vector3};
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ShapeError {
    #[error("invalid trial-function parameters: {0}")]
    InvalidParams(String),
    #[error("support of node {node} has {got} nodes; need at least {need}")]
    SupportTooSmall { node: usize, got: usize, need: usize },
    #[error("moment matrix numerically singular at node {node} (condition estimate {cond:.3e}); check for duplicate or degenerate node placement")]
    Singular { node: usize, cond: f64 },
}

/// Which interpolating trial function to construct.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrialKind {
    Rpi,
    Mki,
}

/// Multiquadric shape parameters.
///
/// `q_exp` must be positive and non-integer so the basis stays smooth and
/// strictly radial. `nugget` is an optional diagonal regularization of the
/// MKI correlation matrix for pathological clouds; it defaults to zero.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RbfParams<T> {
    pub kind: TrialKind,
    pub alpha_c: T,
    pub q_exp: T,
    pub nugget: T,
}

impl<T: Real> RbfParams<T> {
    /// Parameters found to work well in 2D: `α_c = 1.03`, `q = 1.42`.
    pub fn defaults_2d(kind: TrialKind) -> Self {
        RbfParams { kind, alpha_c: T::of(1.03), q_exp: T::of(1.42), nugget: T::zero() }
    }

    /// Parameters found to work well in 3D: `α_c = 1.03`, `q = 1.82`.
    pub fn defaults_3d(kind: TrialKind) -> Self {
        RbfParams { kind, alpha_c: T::of(1.03), q_exp: T::of(1.82), nugget: T::zero() }
    }

    pub fn defaults_for_dim(kind: TrialKind, dim: usize) -> Self {
        if dim == 3 {
            Self::defaults_3d(kind)
        } else {
            Self::defaults_2d(kind)
        }
    }

    pub fn validate(&self) -> Result<(), ShapeError> {
        if !(self.alpha_c > T::zero()) {
            return Err(ShapeError::InvalidParams(format!("alpha_c must be positive, got {}", self.alpha_c)));
        }
        if !(self.q_exp > T::zero()) {
            return Err(ShapeError::InvalidParams(format!("q must be positive, got {}", self.q_exp)));
        }
        let q = self.q_exp.to64();
        if q.fract() == 0.0 {
            return Err(ShapeError::InvalidParams(format!(
                "q = {q} is an integer; the multiquadric needs a non-integer exponent"
            )));
        }
        if self.nugget < T::zero() {
            return Err(ShapeError::InvalidParams("nugget must be non-negative".into()));
        }
        Ok(())
    }
}

/// Multiquadric value `(d² + r_c²)^q` from the squared distance.
#[inline]
pub fn mq_value<T: Real>(dist2: T, r_c: T, q_exp: T) -> T {
    (dist2 + r_c * r_c).powf(q_exp)
}

/// Scalar factor of the multiquadric gradient: the derivative with respect to
/// the coordinate difference `Δ_d = (x − x_i)_d` is `mq_grad_factor * Δ_d`.
#[inline]
pub fn mq_grad_factor<T: Real>(dist2: T, r_c: T, q_exp: T) -> T {
    T::of(2.0) * q_exp * (dist2 + r_c * r_c).powf(q_exp - T::one())
}

/// Shape-function values and gradients of one node at one evaluation point.
#[derive(Clone, Debug)]
pub struct ShapeRow<T> {
    /// φ_I^i for every support node i, in support order.
    pub phi: Vec<T>,
    /// ∇φ_I^i in physical coordinates (z component zero in 2D).
    pub grad: Vec<Vector3<T>>,
}

/// Condition-estimate ceiling above which a per-node system is rejected.
const COND_LIMIT: f64 = 1e12;

enum Factor<T: Real> {
    Rpi {
        g: DMatrix<T>,
        lu: nalgebra::LU<T, nalgebra::Dyn, nalgebra::Dyn>,
    },
    Mki {
        c: DMatrix<T>,
        c_lu: nalgebra::LU<T, nalgebra::Dyn, nalgebra::Dyn>,
        /// `W = C⁻¹ P` (n × m).
        w: DMatrix<T>,
        s: DMatrix<T>,
        s_lu: nalgebra::LU<T, nalgebra::Dyn, nalgebra::Dyn>,
        p: DMatrix<T>,
    },
}

/// Factorized per-node trial function, reusable for any number of
/// evaluation points inside the node's support.
pub struct NodeInterpolant<T: Real> {
    node: usize,
    dim: usize,
    n: usize,
    center: Point<T>,
    inv_dc: T,
    /// Support-node coordinates scaled into the unit support frame.
    local: Vec<Vector3<T>>,
    r_c: T,
    q_exp: T,
    factor: Factor<T>,
    cond: f64,
}

impl<T: Real> NodeInterpolant<T> {
    pub fn build(
        cloud: &NodeCloud<T>,
        supports: &SupportTable<T>,
        node: usize,
        params: &RbfParams<T>,
    ) -> Result<Self, ShapeError> {
        params.validate()?;
        let dim = cloud.dim();
        let m = dim + 1;
        let support = supports.support(node);
        let n = support.len();
        if n < m + 1 {
            return Err(ShapeError::SupportTooSmall { node, got: n, need: m + 1 });
        }
        let d_c = supports.d_c(node);
        if !(d_c > T::zero()) {
            return Err(ShapeError::Singular { node, cond: f64::INFINITY });
        }
        let inv_dc = T::one() / d_c;
        let center = *cloud.point(node);
        let local: Vec<Vector3<T>> = support
            .iter()
            .map(|&j| (cloud.point(j as usize).to_vector() - center.to_vector()) * inv_dc)
            .collect();
        // In the scaled frame the support radius is 1, so r_c = alpha_c.
        let r_c = params.alpha_c;
        let q_exp = params.q_exp;
        let poly = |row: &mut [T], xi: &Vector3<T>| {
            row[0] = T::one();
            for d in 0..dim {
                row[1 + d] = xi[d];
            }
        };
        let factor = match params.kind {
            TrialKind::Rpi => {
                let size = n + m;
                let mut g = DMatrix::zeros(size, size);
                let shift = mq_value(T::zero(), r_c, q_exp);
                for i in 0..n {
                    for j in 0..n {
                        let d2 = (local[i] - local[j]).norm_squared();
                        g[(i, j)] = mq_value(d2, r_c, q_exp) - shift;
                    }
                    let mut row = vec![T::zero(); m];
                    poly(&mut row, &local[i]);
                    for k in 0..m {
                        g[(i, n + k)] = row[k];
                        g[(n + k, i)] = row[k];
                    }
                }
                let lu = g.clone().lu();
                Factor::Rpi { g, lu }
            }
            TrialKind::Mki => {
                let mut c = DMatrix::zeros(n, n);
                let shift = mq_value(T::zero(), r_c, q_exp);
                for i in 0..n {
                    for j in 0..n {
                        let d2 = (local[i] - local[j]).norm_squared();
                        c[(i, j)] = mq_value(d2, r_c, q_exp) - shift;
                    }
                    c[(i, i)] += params.nugget;
                }
                let mut p = DMatrix::zeros(n, m);
                for i in 0..n {
                    let mut row = vec![T::zero(); m];
                    poly(&mut row, &local[i]);
                    for k in 0..m {
                        p[(i, k)] = row[k];
                    }
                }
                let c_lu = c.clone().lu();
                let cond_c = condition_estimate(&c_lu);
                if !(cond_c < COND_LIMIT) {
                    return Err(ShapeError::Singular { node, cond: cond_c });
                }
                let w = refined_solve(&c, &c_lu, &p).ok_or(ShapeError::Singular { node, cond: cond_c })?;
                let s = p.transpose() * &w;
                let s_lu = s.clone().lu();
                Factor::Mki { c, c_lu, w, s, s_lu, p }
            }
        };
        let cond = match &factor {
            Factor::Rpi { lu, .. } => condition_estimate(lu),
            Factor::Mki { c_lu, s_lu, .. } => condition_estimate(c_lu).max(condition_estimate(s_lu)),
        };
        if !(cond < COND_LIMIT) {
            return Err(ShapeError::Singular { node, cond });
        }
        Ok(NodeInterpolant { node, dim, n, center, inv_dc, local, r_c, q_exp, factor, cond })
    }

    pub fn node(&self) -> usize {
        self.node
    }

    /// Ratio of extreme pivots of the factorization, a cheap condition proxy.
    pub fn condition_estimate(&self) -> f64 {
        self.cond
    }

    /// Shape values and gradients at `p`, which should lie inside the node's
    /// support domain for a meaningful interpolation.
    pub fn eval(&self, p: &Point<T>) -> ShapeRow<T> {
        let dim = self.dim;
        let m = dim + 1;
        let n = self.n;
        let xi = (p.to_vector() - self.center.to_vector()) * self.inv_dc;
        // Column 0: basis row at xi. Column 1+d: its derivative along ξ_d.
        let ncols = 1 + dim;
        match &self.factor {
            Factor::Rpi { g, lu } => {
                let mut b = DMatrix::zeros(n + m, ncols);
                let shift = mq_value(T::zero(), self.r_c, self.q_exp);
                for i in 0..n {
                    let delta = xi - self.local[i];
                    let d2 = delta.norm_squared();
                    b[(i, 0)] = mq_value(d2, self.r_c, self.q_exp) - shift;
                    let gf = mq_grad_factor(d2, self.r_c, self.q_exp);
                    for d in 0..dim {
                        b[(i, 1 + d)] = gf * delta[d];
                    }
                }
                b[(n, 0)] = T::one();
                for d in 0..dim {
                    b[(n + 1 + d, 0)] = xi[d];
                    b[(n + 1 + d, 1 + d)] = T::one();
                }
                let sol = refined_solve(g, lu, &b).expect("factorization verified at build time");
                let mut phi = Vec::with_capacity(n);
                let mut grad = Vec::with_capacity(n);
                for i in 0..n {
                    phi.push(sol[(i, 0)]);
                    let mut gv = Vector3::zeros();
                    for d in 0..dim {
                        gv[d] = sol[(i, 1 + d)] * self.inv_dc;
                    }
                    grad.push(gv);
                }
                ShapeRow { phi, grad }
            }
            Factor::Mki { c, c_lu, w, s, s_lu, p: pmat } => {
                let mut cb = DMatrix::zeros(n, ncols);
                let shift = mq_value(T::zero(), self.r_c, self.q_exp);
                for i in 0..n {
                    let delta = xi - self.local[i];
                    let d2 = delta.norm_squared();
                    cb[(i, 0)] = mq_value(d2, self.r_c, self.q_exp) - shift;
                    let gf = mq_grad_factor(d2, self.r_c, self.q_exp);
                    for d in 0..dim {
                        cb[(i, 1 + d)] = gf * delta[d];
                    }
                }
                // y = C⁻¹ [c, ∂c]; z = [p, ∂p] − Pᵀ y; u = S⁻¹ z;
                // φ-columns = W u + y.
                let y = refined_solve(c, c_lu, &cb).expect("factorization verified at build time");
                let mut z = DMatrix::zeros(m, ncols);
                z[(0, 0)] = T::one();
                for d in 0..dim {
                    z[(1 + d, 0)] = xi[d];
                    z[(1 + d, 1 + d)] = T::one();
                }
                z -= pmat.transpose() * &y;
                let u = refined_solve(s, s_lu, &z).expect("factorization verified at build time");
                let cols = w * &u + &y;
                let mut phi = Vec::with_capacity(n);
                let mut grad = Vec::with_capacity(n);
                for i in 0..n {
                    phi.push(cols[(i, 0)]);
                    let mut gv = Vector3::zeros();
                    for d in 0..dim {
                        gv[d] = cols[(i, 1 + d)] * self.inv_dc;
                    }
                    grad.push(gv);
                }
                ShapeRow { phi, grad }
            }
        }
    }
}

/// Solve `A x = b` from an existing factorization with one step of iterative
/// refinement, which recovers most of the accuracy lost to ill-conditioned
/// multiquadric moment matrices.
fn refined_solve<T: Real>(
    a: &DMatrix<T>,
    lu: &nalgebra::LU<T, nalgebra::Dyn, nalgebra::Dyn>,
    b: &DMatrix<T>,
) -> Option<DMatrix<T>> {
    let mut x = lu.solve(b)?;
    for _ in 0..2 {
        let residual = b - a * &x;
        let correction = lu.solve(&residual)?;
        x += correction;
    }
    Some(x)
}

fn condition_estimate<T: Real>(lu: &nalgebra::LU<T, nalgebra::Dyn, nalgebra::Dyn>) -> f64 {
    let u = lu.u();
    let k = u.nrows().min(u.ncols());
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for i in 0..k {
        let v = u[(i, i)].abs().to64();
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if lo == 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// RPI shape values and gradients of `node` at `eval`, from scratch.
pub fn rpi_shape<T: Real>(
    cloud: &NodeCloud<T>,
    supports: &SupportTable<T>,
    node: usize,
    params: &RbfParams<T>,
    eval: &Point<T>,
) -> Result<ShapeRow<T>, ShapeError> {
    let p = RbfParams { kind: TrialKind::Rpi, ..*params };
    Ok(NodeInterpolant::build(cloud, supports, node, &p)?.eval(eval))
}

/// MKI shape values and gradients of `node` at `eval`, from scratch.
pub fn mki_shape<T: Real>(
    cloud: &NodeCloud<T>,
    supports: &SupportTable<T>,
    node: usize,
    params: &RbfParams<T>,
    eval: &Point<T>,
) -> Result<ShapeRow<T>, ShapeError> {
    let p = RbfParams { kind: TrialKind::Mki, ..*params };
    Ok(NodeInterpolant::build(cloud, supports, node, &p)?.eval(eval))
}

/// Trial-function values and gradients of every node at its own collocation
/// point, stored in the support table's CSR layout.
#[derive(Clone, Debug)]
pub struct ShapeFunctionSet<T> {
    dim: usize,
    supports: SupportTable<T>,
    phi: Vec<T>,
    grad: Vec<Vector3<T>>,
}

impl<T: Real> ShapeFunctionSet<T> {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_nodes(&self) -> usize {
        self.supports.n_nodes()
    }

    pub fn supports(&self) -> &SupportTable<T> {
        &self.supports
    }

    /// φ_I^i over the support of node `I`.
    pub fn phi_row(&self, node: usize) -> &[T] {
        let lo = self.supports.indptr()[node];
        let hi = self.supports.indptr()[node + 1];
        &self.phi[lo..hi]
    }

    /// ∇φ_I^i over the support of node `I`.
    pub fn grad_row(&self, node: usize) -> &[Vector3<T>] {
        let lo = self.supports.indptr()[node];
        let hi = self.supports.indptr()[node + 1];
        &self.grad[lo..hi]
    }
}

/// Build the full shape-function set, one factorization per node, in
/// parallel. Fails on the first node whose moment matrix is singular.
pub fn build_all<T: Real>(
    cloud: &NodeCloud<T>,
    supports: SupportTable<T>,
    params: &RbfParams<T>,
) -> Result<ShapeFunctionSet<T>, ShapeError> {
    params.validate()?;
    let rows: Vec<ShapeRow<T>> = (0..cloud.len())
        .into_par_iter()
        .map(|i| {
            let interp = NodeInterpolant::build(cloud, &supports, i, params)?;
            Ok(interp.eval(cloud.point(i)))
        })
        .collect::<Result<_, ShapeError>>()?;
    let total = supports.total_entries();
    let mut phi = Vec::with_capacity(total);
    let mut grad = Vec::with_capacity(total);
    for row in rows {
        phi.extend(row.phi);
        grad.extend(row.grad);
    }
    Ok(ShapeFunctionSet { dim: cloud.dim(), supports, phi, grad })
}

/// Summary statistics from sweeping the trial-function invariants over a
/// cloud; what the `shapecheck` command prints.
#[derive(Clone, Debug, Default)]
pub struct ShapeDiagnostics {
    /// max |Σ_i φ_i − 1| over all sampled evaluations.
    pub max_partition_error: f64,
    /// max ‖Σ_i ∇φ_i‖ · h (dimensionless).
    pub max_gradient_partition: f64,
    /// max |φ_i(x_j) − δ_ij| over all support pairs.
    pub max_delta_error: f64,
    /// max relative mismatch between analytic gradients and central finite
    /// differences with step 1e-6·h.
    pub max_gradient_fd_error: f64,
    /// max relative error reproducing an affine field.
    pub max_affine_error: f64,
    /// worst per-node condition estimate among the nodes that factorized.
    pub worst_condition: f64,
    /// nodes whose construction failed, with the failure text.
    pub failed_nodes: Vec<(usize, String)>,
}

/// Sweep the interpolation invariants over every node of the cloud.
pub fn run_diagnostics<T: Real>(
    cloud: &NodeCloud<T>,
    supports: &SupportTable<T>,
    params: &RbfParams<T>,
) -> ShapeDiagnostics {
    struct NodeStats {
        partition: f64,
        grad_partition: f64,
        delta: f64,
        fd: f64,
        affine: f64,
        cond: f64,
    }
    let h = cloud.h();
    let fd_step = h * T::of(1e-6);
    // Fixed affine probe u(x) = c0 + c·x.
    let coeff = [T::of(0.37), T::of(2.0), T::of(-3.0), T::of(1.25)];
    let affine = |p: &Point<T>| coeff[0] + coeff[1] * p.x + coeff[2] * p.y + coeff[3] * p.z;

    let per_node: Vec<Result<NodeStats, (usize, String)>> = (0..cloud.len())
        .into_par_iter()
        .map(|i| {
            let interp =
                NodeInterpolant::build(cloud, supports, i, params).map_err(|e| (i, e.to_string()))?;
            let support = supports.support(i);
            let here = interp.eval(cloud.point(i));
            let mut s = NodeStats {
                partition: 0.0,
                grad_partition: 0.0,
                delta: 0.0,
                fd: 0.0,
                affine: 0.0,
                cond: interp.condition_estimate(),
            };
            let mut scan_row = |row: &ShapeRow<T>, at: &Point<T>, delta_col: Option<usize>| {
                let pou: T = row.phi.iter().copied().sum();
                s.partition = s.partition.max((pou - T::one()).abs().to64());
                let mut gsum = Vector3::zeros();
                for g in &row.grad {
                    gsum += *g;
                }
                s.grad_partition = s.grad_partition.max((gsum.norm() * h).to64());
                if let Some(col) = delta_col {
                    for (k, &v) in row.phi.iter().enumerate() {
                        let want = if k == col { T::one() } else { T::zero() };
                        s.delta = s.delta.max((v - want).abs().to64());
                    }
                }
                let mut u = T::zero();
                for (k, &j) in support.iter().enumerate() {
                    u += row.phi[k] * affine(cloud.point(j as usize));
                }
                let want = affine(at);
                let scale = want.abs().max(T::one());
                s.affine = s.affine.max(((u - want) / scale).abs().to64());
            };
            for (col, &j) in support.iter().enumerate() {
                let at = cloud.point(j as usize);
                let row = if j as usize == i { here.clone() } else { interp.eval(at) };
                scan_row(&row, at, Some(col));
            }
            // Central finite differences at the collocation point.
            let mut grad_scale = T::zero();
            for g in &here.grad {
                for d in 0..cloud.dim() {
                    grad_scale = grad_scale.max(g[d].abs());
                }
            }
            for d in 0..cloud.dim() {
                let mut fwd = *cloud.point(i);
                let mut bwd = *cloud.point(i);
                *fwd.coord_mut(d) += fd_step;
                *bwd.coord_mut(d) -= fd_step;
                let rf = interp.eval(&fwd);
                let rb = interp.eval(&bwd);
                for k in 0..here.phi.len() {
                    let fd = (rf.phi[k] - rb.phi[k]) / (fd_step + fd_step);
                    let err = ((here.grad[k][d] - fd) / grad_scale).abs().to64();
                    s.fd = s.fd.max(err);
                }
            }
            Ok(s)
        })
        .collect();

    let mut out = ShapeDiagnostics::default();
    for r in per_node {
        match r {
            Ok(s) => {
                out.max_partition_error = out.max_partition_error.max(s.partition);
                out.max_gradient_partition = out.max_gradient_partition.max(s.grad_partition);
                out.max_delta_error = out.max_delta_error.max(s.delta);
                out.max_gradient_fd_error = out.max_gradient_fd_error.max(s.fd);
                out.max_affine_error = out.max_affine_error.max(s.affine);
                out.worst_condition = out.worst_condition.max(s.cond);
            }
            Err(pair) => out.failed_nodes.push(pair),
        }
    }
    out.failed_nodes.sort_by_key(|&(i, _)| i);
    out
}
