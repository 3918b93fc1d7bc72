//! Coarse-scale operators and solves on an offline velocity space.
//!
//! The coarse saddle system couples the offline velocity basis (rows of
//! `R0`) with blockwise-constant pressures (one unknown per coarse block):
//!
//! ```text
//! [ A_c    B_c^T  0   ] [u0]   [R0 (F - A u_L)]
//! [ B_c    0      e_H ] [p0] = [  -Q0 B u_L   ]
//! [ 0      e_H^T  0   ] [xi]   [      0       ]
//! ```
//!
//! with `A_c = R0 A R0^T`, `B_c = Q0 B R0^T` where `Q0` sums triangle rows
//! into their block, and `e_H` the block areas pinning the pressure mean.
//! Every basis function vanishes on the domain boundary, so `u = u_L +
//! R0^T u0` carries the boundary data of the lifting exactly.

use faer::Mat;

use crate::error::Result;
use crate::gmsfem::offline::OfflineSpace;
use crate::gmsfem::spectral::{SelectionPolicy, SpectralVariant};
use crate::linalg::{self, norm2, sparse_from_triplets, spmv, Sparse, SparseLu};
use crate::solve::FineSystem;

#[derive(Debug)]
pub struct CoarseSpace {
    /// Coarse velocity dimension.
    pub n_c: usize,
    /// Coarse pressure dimension (number of blocks).
    pub n_h: usize,
    pub a_c: Sparse,
    pub b_c: Sparse,
    /// Projected div-div operator (used by the stability witness).
    pub dd_c: Sparse,
}

#[derive(Debug, Clone)]
pub struct CoarseSolution {
    /// Coefficients in the offline basis.
    pub u0: Vec<f64>,
    /// Per-block pressure.
    pub p0: Vec<f64>,
    /// Mean-pinning multiplier.
    pub multiplier: f64,
    /// Fine-grid velocity `u_L + R0^T u0`.
    pub velocity: Vec<f64>,
    /// Per-triangle copy of the block pressure.
    pub pressure_fine: Vec<f64>,
    /// Relative residual of the coarse saddle system.
    pub kkt_residual: f64,
}

/// Projects the fine operators onto the offline space.
pub fn coarse_space(fine: &FineSystem, off: &OfflineSpace) -> Result<CoarseSpace> {
    let n_h = fine.mesh.n_blocks();
    let a_c = sparse_from_triplets(off.n_c, off.n_c, &project_symmetric(&fine.a, off))?;
    let dd_c = sparse_from_triplets(off.n_c, off.n_c, &project_symmetric(&fine.dd, off))?;
    let b_c = sparse_from_triplets(n_h, off.n_c, &project_divergence(fine, off))?;
    Ok(CoarseSpace { n_c: off.n_c, n_h, a_c, b_c, dd_c })
}

/// Triplets of `R0 Op R0^T` for a symmetric fine operator, one coarse
/// column at a time: gather `y = Op x_j` over the sparse column `x_j` of
/// `R0^T`, then scatter `y` through the coarse functions touching each dof.
fn project_symmetric(op: &Sparse, off: &OfflineSpace) -> Vec<(usize, usize, f64)> {
    let mut y = vec![0.0; off.n_vel];
    let mut y_hit = vec![false; off.n_vel];
    let mut touched: Vec<usize> = Vec::new();
    let mut acc = vec![0.0; off.n_c];
    let mut acc_hit = vec![false; off.n_c];
    let mut rows: Vec<usize> = Vec::new();
    let mut trips = Vec::new();
    for j in 0..off.n_c {
        for (&e, &v) in off.r0t.row_idx_of_col_raw(j).iter().zip(off.r0t.val_of_col(j)) {
            for (&d, &a) in op.row_idx_of_col_raw(e).iter().zip(op.val_of_col(e)) {
                if !y_hit[d] {
                    y_hit[d] = true;
                    touched.push(d);
                }
                y[d] += a * v;
            }
        }
        for &d in &touched {
            if y[d] != 0.0 {
                for (&i, &w) in off.r0.row_idx_of_col_raw(d).iter().zip(off.r0.val_of_col(d)) {
                    if !acc_hit[i] {
                        acc_hit[i] = true;
                        rows.push(i);
                    }
                    acc[i] += w * y[d];
                }
            }
            y[d] = 0.0;
            y_hit[d] = false;
        }
        touched.clear();
        for &i in &rows {
            if acc[i] != 0.0 {
                trips.push((i, j, acc[i]));
            }
            acc[i] = 0.0;
            acc_hit[i] = false;
        }
        rows.clear();
    }
    trips
}

/// Triplets of `Q0 B R0^T`: per-block sums of the divergence of each coarse
/// basis function.
fn project_divergence(fine: &FineSystem, off: &OfflineSpace) -> Vec<(usize, usize, f64)> {
    let mesh = &fine.mesh;
    let mut z = vec![0.0; mesh.n_blocks()];
    let mut trips = Vec::new();
    for j in 0..off.n_c {
        for (&e, &v) in off.r0t.row_idx_of_col_raw(j).iter().zip(off.r0t.val_of_col(j)) {
            for (&t, &bv) in fine.b.row_idx_of_col_raw(e).iter().zip(fine.b.val_of_col(e)) {
                z[mesh.block_of_tri(t)] += bv * v;
            }
        }
        for (k, zk) in z.iter_mut().enumerate() {
            if *zk != 0.0 {
                trips.push((k, j, *zk));
                *zk = 0.0;
            }
        }
    }
    trips
}

fn sparse_triplets_shifted(
    m: &Sparse,
    row_off: usize,
    col_off: usize,
    scale: f64,
    out: &mut Vec<(usize, usize, f64)>,
) {
    for j in 0..m.ncols() {
        for (&i, &v) in m.row_idx_of_col_raw(j).iter().zip(m.val_of_col(j)) {
            out.push((i + row_off, j + col_off, scale * v));
        }
    }
}

/// Solves the coarse saddle system for a constant boundary velocity and an
/// optional fine load vector, then downscales.
pub fn solve_coarse(
    fine: &FineSystem,
    off: &OfflineSpace,
    cs: &CoarseSpace,
    load: Option<&[f64]>,
    g: [f64; 2],
) -> Result<CoarseSolution> {
    let (n_c, n_h) = (cs.n_c, cs.n_h);
    let dim = n_c + n_h + 1;
    let block_area = 1.0 / (n_h as f64);

    let mut trips: Vec<(usize, usize, f64)> = Vec::new();
    sparse_triplets_shifted(&cs.a_c, 0, 0, 1.0, &mut trips);
    sparse_triplets_shifted(&cs.b_c, n_c, 0, 1.0, &mut trips);
    for j in 0..cs.b_c.ncols() {
        for (&k, &v) in cs.b_c.row_idx_of_col_raw(j).iter().zip(cs.b_c.val_of_col(j)) {
            trips.push((j, n_c + k, v));
        }
    }
    for k in 0..n_h {
        trips.push((n_c + k, dim - 1, block_area));
        trips.push((dim - 1, n_c + k, block_area));
    }
    let kkt = sparse_from_triplets(dim, dim, &trips)?;

    let u_l = fine.lifting(g);
    let a_ul = spmv(&fine.a, &u_l);
    let b_ul = spmv(&fine.b, &u_l);
    let mut fine_rhs = vec![0.0; off.n_vel];
    for d in 0..off.n_vel {
        fine_rhs[d] = load.map_or(0.0, |f| f[d]) - a_ul[d];
    }
    let mut rhs = vec![0.0; dim];
    rhs[..n_c].copy_from_slice(&spmv(&off.r0, &fine_rhs));
    for (t, &v) in b_ul.iter().enumerate() {
        rhs[n_c + fine.mesh.block_of_tri(t)] -= v;
    }

    let lu = SparseLu::factor(&kkt, "coarse saddle system")?;
    let x = lu.solve_slice(&rhs);
    let kkt_residual = linalg::relative_residual(&kkt, &x, &rhs);

    let u0 = x[..n_c].to_vec();
    let p0 = x[n_c..n_c + n_h].to_vec();
    let mut velocity = u_l;
    for (d, v) in spmv(&off.r0t, &u0).into_iter().enumerate() {
        velocity[d] += v;
    }
    let pressure_fine: Vec<f64> =
        (0..fine.mesh.n_triangles()).map(|t| p0[fine.mesh.block_of_tri(t)]).collect();
    Ok(CoarseSolution { u0, p0, multiplier: x[dim - 1], velocity, pressure_fine, kkt_residual })
}

/// Identity downscaling for debugging: the "coarse" velocity space is every
/// interior fine dof, so the coarse solve reproduces the fine Galerkin
/// solution against blockwise-constant pressures.
pub fn debug_identity_space(fine: &FineSystem) -> Result<OfflineSpace> {
    let n_vel = fine.n_velocity();
    let trips: Vec<(usize, usize, f64)> =
        fine.interior_vel.iter().enumerate().map(|(k, &d)| (k, d, 1.0)).collect();
    let n_c = trips.len();
    let r0 = sparse_from_triplets(n_c, n_vel, &trips)?;
    let swapped: Vec<(usize, usize, f64)> = trips.iter().map(|&(r, c, v)| (c, r, v)).collect();
    let r0t = sparse_from_triplets(n_vel, n_c, &swapped)?;
    Ok(OfflineSpace {
        request: crate::gmsfem::offline::SpaceRequest {
            policy: SelectionPolicy::ThresholdGe(0.0),
            variant: SpectralVariant::Numerics,
        },
        n_c,
        n_vel,
        r0,
        r0t,
        member_ranges: vec![0..n_c],
    })
}

/// Discrete stability witness of the coarse pair: the square root of the
/// smallest eigenvalue of `Z^T B_c T^{-1} B_c^T Z y = beta^2 Z^T S Z y`
/// over zero-mean block pressures, with `T = A_c + M DD_c` and `S` the
/// contrast-scaled block mass `diag(|K|) / M`.
pub fn inf_sup_witness(fine: &FineSystem, cs: &CoarseSpace) -> Result<f64> {
    let (n_c, n_h) = (cs.n_c, cs.n_h);
    let mut trips: Vec<(usize, usize, f64)> = Vec::new();
    sparse_triplets_shifted(&cs.a_c, 0, 0, 1.0, &mut trips);
    sparse_triplets_shifted(&cs.dd_c, 0, 0, fine.m_const, &mut trips);
    let t_op = sparse_from_triplets(n_c, n_c, &trips)?;
    let lu = SparseLu::factor(&t_op, "stability witness operator")?;

    // Fill B_c^T column-by-column from b_c's CSC storage.
    let mut bt = Mat::<f64>::zeros(n_c, n_h);
    for j in 0..n_c {
        for (&k, &v) in cs.b_c.row_idx_of_col_raw(j).iter().zip(cs.b_c.val_of_col(j)) {
            bt[(j, k)] = v;
        }
    }
    let x = lu.solve_mat(&bt);
    let g = cs.b_c.as_ref() * &x;

    let block_area = 1.0 / (n_h as f64);
    let s_diag = block_area / fine.m_const;
    // Zero-mean basis: columns e_{k+1} - e_0.
    let zdim = n_h - 1;
    let mut zgz = Mat::<f64>::zeros(zdim, zdim);
    let mut zsz = Mat::<f64>::zeros(zdim, zdim);
    for r in 0..zdim {
        for c in 0..zdim {
            zgz[(r, c)] = g[(r + 1, c + 1)] - g[(0, c + 1)] - g[(r + 1, 0)] + g[(0, 0)];
            zsz[(r, c)] = s_diag * (if r == c { 2.0 } else { 1.0 });
        }
    }
    let (vals, _) = linalg::generalized_eigen(&zgz, &zsz, "stability witness eigenproblem")?;
    Ok(vals.first().copied().unwrap_or(0.0).max(0.0).sqrt())
}

/// Relative coarse-momentum residual `R0 (A (u_f - u_c) + B^T (p_f - p_c))`
/// of a coarse solution against the fine one.
pub fn coarse_galerkin_residual(
    fine: &FineSystem,
    off: &OfflineSpace,
    fine_sol: &crate::solve::MixedSolution,
    coarse_sol: &CoarseSolution,
) -> f64 {
    let n = fine.n_velocity();
    let mut du = vec![0.0; n];
    for d in 0..n {
        du[d] = fine_sol.velocity[d] - coarse_sol.velocity[d];
    }
    let dp: Vec<f64> = fine_sol
        .pressure
        .iter()
        .zip(&coarse_sol.pressure_fine)
        .map(|(a, b)| a - b)
        .collect();
    let adu = spmv(&fine.a, &du);
    let btdp = spmv(&fine.bt, &dp);
    let r: Vec<f64> = adu.iter().zip(&btdp).map(|(a, b)| a + b).collect();
    let rc = spmv(&off.r0, &r);
    let scale = norm2(&spmv(&off.r0, &spmv(&fine.a, &fine_sol.velocity)))
        + norm2(&spmv(&off.r0, &spmv(&fine.bt, &fine_sol.pressure)));
    norm2(&rc) / scale.max(1e-300)
}
