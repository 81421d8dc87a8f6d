//! Structured-grid finite element reference solver.
//!
//! Bilinear quadrilateral (2D) or trilinear hexahedral (3D) stiffness with
//! the anisotropic conduction tensor and a row-sum lumped mass matrix, used
//! as the cross-validation reference for the collocation operator. Only
//! clouds generated as regular grids carry the cell structure this needs.

use crate::assembly::DiffusionField;
use crate::node_cloud::NodeCloud;
use crate::scalar::Real;
use crate::sparse::CsrMatrix;
use super::SolverError;

/// Assembled FEM operator: stiffness `K` (so that `dV/dt = -M⁻¹ K V`) and
/// the lumped mass diagonal.
pub struct FemOperator<T> {
    pub stiffness: CsrMatrix<T>,
    pub lumped_mass: Vec<T>,
}

pub fn assemble_fem<T: Real>(cloud: &NodeCloud<T>, diff: &DiffusionField<T>) -> Result<FemOperator<T>, SolverError> {
    let grid = cloud.grid().ok_or(SolverError::NotStructured)?;
    let dim = cloud.dim();
    let h = cloud.h();
    let npts = grid.npts;
    let nodes_per_cell = 1usize << dim;
    let n = cloud.len();

    // Reference-corner sign patterns, matching the local node order.
    let signs: Vec<[T; 3]> = (0..nodes_per_cell)
        .map(|a| {
            let sx = if a & 1 == 0 { -T::one() } else { T::one() };
            let sy = if a & 2 == 0 { -T::one() } else { T::one() };
            let sz = if a & 4 == 0 { -T::one() } else { T::one() };
            [sx, sy, sz]
        })
        .collect();
    let gp = T::one() / T::of(3.0).sqrt();
    let gauss: Vec<[T; 3]> = (0..nodes_per_cell)
        .map(|g| {
            let mut p = [T::zero(); 3];
            for d in 0..dim {
                p[d] = if g & (1 << d) == 0 { -gp } else { gp };
            }
            p
        })
        .collect();
    // Physical shape gradients at each Gauss point (constant per cell shape
    // on a uniform grid): dN_a/dx_d = sign_a[d]/2^dim * prod_{e != d}(1 + s_e ξ_e) * 2/h.
    let inv_h = T::one() / h;
    let quarter = T::one() / T::of_usize(1 << dim);
    let det_j = (h / T::of(2.0)).powi(dim as i32);
    let mut grads = vec![[[T::zero(); 3]; 8]; gauss.len()];
    for (g, gref) in gauss.iter().enumerate() {
        for a in 0..nodes_per_cell {
            for d in 0..dim {
                let mut v = signs[a][d] * quarter;
                for e in 0..dim {
                    if e != d {
                        v *= T::one() + signs[a][e] * gref[e];
                    }
                }
                grads[g][a][d] = v * (T::of(2.0) * inv_h);
            }
        }
    }

    let cells = [npts[0].max(1) - 1, npts[1].max(1) - 1, if dim == 3 { npts[2] - 1 } else { 1 }];
    let node_index = |ix: usize, iy: usize, iz: usize| ix + npts[0] * (iy + npts[1] * iz);
    let mut rows: Vec<Vec<(u32, T)>> = vec![Vec::new(); n];
    let mut lumped = vec![T::zero(); n];
    let mass_share = det_j; // ∫ N_a over the reference cell is 1.
    for iz in 0..cells[2].max(1) {
        for iy in 0..cells[1] {
            for ix in 0..cells[0] {
                let mut conn = [0usize; 8];
                for a in 0..nodes_per_cell {
                    let dx = a & 1;
                    let dy = (a >> 1) & 1;
                    let dz = (a >> 2) & 1;
                    conn[a] = node_index(ix + dx, iy + dy, iz + dz);
                }
                // Cell conduction tensor: average of the corner tensors.
                let mut d_cell = nalgebra::Matrix3::zeros();
                for &c in conn.iter().take(nodes_per_cell) {
                    d_cell += diff.tensor(c);
                }
                d_cell /= T::of_usize(nodes_per_cell);
                for a in 0..nodes_per_cell {
                    lumped[conn[a]] += mass_share;
                    for b in 0..nodes_per_cell {
                        let mut k_ab = T::zero();
                        for g in grads.iter() {
                            let ga = g[a];
                            let gb = g[b];
                            for p in 0..dim {
                                for q in 0..dim {
                                    k_ab += ga[p] * d_cell[(p, q)] * gb[q];
                                }
                            }
                        }
                        k_ab *= det_j;
                        rows[conn[a]].push((conn[b] as u32, k_ab));
                    }
                }
            }
        }
    }
    Ok(FemOperator { stiffness: CsrMatrix::from_rows(n, rows), lumped_mass: lumped })
}

impl<T: Real> FemOperator<T> {
    /// Explicit diffusion update `V ← V − dt · M⁻¹ K V`.
    pub fn step(&self, v: &mut [T], dt: T, scratch: &mut [T]) {
        self.stiffness.matvec(v, scratch);
        for ((vi, ki), mi) in v.iter_mut().zip(scratch.iter()).zip(&self.lumped_mass) {
            *vi -= dt * *ki / *mi;
        }
    }

    /// Gershgorin-style explicit step bound for this operator.
    pub fn dt_max(&self) -> T {
        let mut worst = T::zero();
        for i in 0..self.stiffness.nrows() {
            let (_, vals) = self.stiffness.row(i);
            let s: T = vals.iter().map(|v| v.abs()).sum();
            let rate = s / self.lumped_mass[i];
            if rate > worst {
                worst = rate;
            }
        }
        if worst == T::zero() {
            T::of(f64::INFINITY)
        } else {
            T::of(2.0) / worst
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::node_cloud::generate_regular_grid;
    use approx::assert_abs_diff_eq;

    #[test]
    fn stiffness_rows_sum_to_zero_and_mass_tiles_the_domain() {
        let cloud = generate_regular_grid(&[1.0_f64, 1.0], 0.1, 2).unwrap();
        let diff = DiffusionField::new(&cloud, 0.0013, 0.2, &[]).unwrap();
        let fem = assemble_fem(&cloud, &diff).unwrap();
        for (i, s) in fem.stiffness.row_sums().iter().enumerate() {
            assert!(s.abs() <= 1e-16, "row {i} sums to {s}");
        }
        let total_mass: f64 = fem.lumped_mass.iter().sum();
        assert_abs_diff_eq!(total_mass, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn constant_field_is_preserved_exactly() {
        let cloud = generate_regular_grid(&[1.0_f64, 1.0, 1.0], 0.25, 3).unwrap();
        let diff = DiffusionField::new(&cloud, 0.002, 0.2, &[]).unwrap();
        let fem = assemble_fem(&cloud, &diff).unwrap();
        let mut v = vec![0.37; cloud.len()];
        let mut scratch = vec![0.0; cloud.len()];
        for _ in 0..25 {
            fem.step(&mut v, 0.1, &mut scratch);
        }
        for (i, x) in v.iter().enumerate() {
            assert!((x - 0.37).abs() <= 1e-13, "node {i} drifted to {x}");
        }
    }

    #[test]
    fn unstructured_cloud_is_rejected() {
        let mut cloud = generate_regular_grid(&[1.0_f64, 1.0], 0.25, 2).unwrap();
        cloud.jitter_interior(0.1, 3);
        let diff = DiffusionField::new(&cloud, 0.002, 0.2, &[]).unwrap();
        assert!(matches!(assemble_fem(&cloud, &diff), Err(SolverError::NotStructured)));
    }

    #[test]
    fn interior_stencil_matches_five_point_laplacian() {
        // Isotropic tensor on a uniform quad grid with 2x2 Gauss quadrature:
        // interior row of K applied to x² must reproduce -d0 * 2 after the
        // mass scaling (the bilinear consistency error on quadratics is zero
        // in the row sum sense away from the boundary).
        let d0 = 0.5;
        let cloud = generate_regular_grid(&[1.0_f64, 1.0], 0.1, 2).unwrap();
        let diff = DiffusionField::new(&cloud, d0, 1.0, &[]).unwrap();
        let fem = assemble_fem(&cloud, &diff).unwrap();
        let v: Vec<f64> = cloud.points().iter().map(|p| p.x * p.x).collect();
        let mut out = vec![0.0; cloud.len()];
        fem.stiffness.matvec(&v, &mut out);
        for (i, p) in cloud.points().iter().enumerate() {
            if p.x > 0.15 && p.x < 0.85 && p.y > 0.15 && p.y < 0.85 {
                let lap = -out[i] / fem.lumped_mass[i];
                assert_abs_diff_eq!(lap, 2.0 * d0, epsilon = 1e-10);
            }
        }
    }
}
