//! Constrained local flow extensions of boundary velocity data.
//!
//! Given a rectangular patch of fine cells and a velocity trace on its
//! boundary nodes, the extension fills the interior with the energy-minimal
//! velocity field whose per-triangle mean divergence is the constant the
//! boundary flux dictates: `(B u)_K = |K| * flux / |D|` for every triangle.
//! This makes extensions of compatible traces exactly divergence-free and
//! keeps incompatible ones divergence-consistent, which is what both the
//! partition-of-unity construction and the per-block divergence correction
//! of coarse basis functions rely on. The auxiliary pressure is discarded.

use faer::Mat;

use crate::error::Result;
use crate::fem::{ux, uy, ElementPair, LocalTris};
use crate::field::PermeabilityField;
use crate::linalg::{self, SparseLu};
use crate::mesh::{CellRect, NestedMesh};

const NOT_MAPPED: usize = usize::MAX;

/// Factorized extension operator for one rectangular region. Construction
/// assembles and factors the bordered saddle system once; every subsequent
/// trace costs one back-substitution.
pub struct RegionSolver {
    rect: CellRect,
    dom: LocalTris,
    /// Global scalar ids of region-boundary nodes, ascending.
    boundary_nodes: Vec<usize>,
    /// Local scalar index -> boundary slot, or sentinel.
    bnd_of_local: Vec<usize>,
    /// Local scalar index -> interior slot, or sentinel.
    int_of_local: Vec<usize>,
    /// Momentum triplets in local velocity numbering (2k, 2k+1 per scalar k).
    a_trips: Vec<(usize, usize, f64)>,
    /// Divergence triplets `(local triangle, local velocity dof)`.
    b_trips: Vec<(usize, usize, f64)>,
    /// Div-div form triplets (for local contrast-weighted norms).
    dd_trips: Vec<(usize, usize, f64)>,
    lu: SparseLu,
    tri_area: f64,
    region_area: f64,
}

impl RegionSolver {
    pub fn new(mesh: &NestedMesh, field: &PermeabilityField, rect: CellRect) -> Result<Self> {
        field.check_matches(mesh)?;
        let dom = LocalTris::from_cell_rect(mesh, rect);
        let n_ls = dom.scalar_nodes.len();
        let n_lt = dom.tris.len();

        // Classify region nodes by exact doubled-integer coordinates.
        let (lo_x, hi_x) = (2 * rect.i0, 2 * rect.i1);
        let (lo_y, hi_y) = (2 * rect.j0, 2 * rect.j1);
        let mut boundary_nodes = Vec::new();
        let mut bnd_of_local = vec![NOT_MAPPED; n_ls];
        let mut int_of_local = vec![NOT_MAPPED; n_ls];
        let mut n_int = 0usize;
        for (k, &s) in dom.scalar_nodes.iter().enumerate() {
            let (gx, gy) = mesh.node_grid_coords(s);
            if gx == lo_x || gx == hi_x || gy == lo_y || gy == hi_y {
                bnd_of_local[k] = boundary_nodes.len();
                boundary_nodes.push(s);
            } else {
                int_of_local[k] = n_int;
                n_int += 1;
            }
        }

        // Local momentum and divergence operators.
        let el = ElementPair::new(mesh);
        let mut a_trips = Vec::with_capacity(n_lt * 144);
        let mut b_trips = Vec::with_capacity(n_lt * 12);
        let mut dd_trips = Vec::with_capacity(n_lt * 144);
        for (lt, &t) in dom.tris.iter().enumerate() {
            let (i, j, shape) = mesh.tri_cell(t);
            let kinv = field.cell_value(i, j);
            let em = el.of(shape);
            let loc: Vec<usize> = mesh
                .tri_scalar_nodes(t)
                .iter()
                .map(|&s| dom.local_scalar(s).expect("triangle node inside its region"))
                .collect();
            for a in 0..6 {
                b_trips.push((lt, 2 * loc[a], em.int_dx[a]));
                b_trips.push((lt, 2 * loc[a] + 1, em.int_dy[a]));
                for b in 0..6 {
                    let v = em.stiff[a][b] + kinv * em.mass[a][b];
                    a_trips.push((2 * loc[a], 2 * loc[b], v));
                    a_trips.push((2 * loc[a] + 1, 2 * loc[b] + 1, v));
                    for c in 0..2 {
                        for d in 0..2 {
                            dd_trips.push((
                                2 * loc[a] + c,
                                2 * loc[b] + d,
                                em.grad_outer[c][d][a][b],
                            ));
                        }
                    }
                }
            }
        }

        // Bordered saddle system over interior velocity dofs, all pressures,
        // and one mean multiplier.
        let n_iv = 2 * n_int;
        let dim = n_iv + n_lt + 1;
        let tri_area = mesh.tri_area();
        let int_vel = |dof: usize| -> usize {
            let slot = int_of_local[dof / 2];
            if slot == NOT_MAPPED { NOT_MAPPED } else { 2 * slot + dof % 2 }
        };
        let mut trips = Vec::with_capacity(a_trips.len() + 2 * b_trips.len() + 2 * n_lt);
        for &(r, c, v) in &a_trips {
            let (ri, ci) = (int_vel(r), int_vel(c));
            if ri != NOT_MAPPED && ci != NOT_MAPPED {
                trips.push((ri, ci, v));
            }
        }
        for &(t, c, v) in &b_trips {
            let ci = int_vel(c);
            if ci != NOT_MAPPED {
                trips.push((n_iv + t, ci, v));
                trips.push((ci, n_iv + t, v));
            }
        }
        for t in 0..n_lt {
            trips.push((n_iv + t, dim - 1, tri_area));
            trips.push((dim - 1, n_iv + t, tri_area));
        }
        let kkt = linalg::sparse_from_triplets(dim, dim, &trips)?;
        let lu = SparseLu::factor(&kkt, "local extension system")?;

        Ok(Self {
            rect,
            dom,
            boundary_nodes,
            bnd_of_local,
            int_of_local,
            a_trips,
            b_trips,
            dd_trips,
            lu,
            tri_area,
            region_area: n_lt as f64 * tri_area,
        })
    }

    pub fn rect(&self) -> CellRect {
        self.rect
    }

    pub fn dom(&self) -> &LocalTris {
        &self.dom
    }

    /// Global scalar ids of the region-boundary nodes, ascending.
    pub fn boundary_nodes(&self) -> &[usize] {
        &self.boundary_nodes
    }

    /// Slot of a global scalar node in the trace layout, if on the boundary.
    pub fn boundary_index_of(&self, s: usize) -> Option<usize> {
        self.boundary_nodes.binary_search(&s).ok()
    }

    /// Length of a trace vector: two dofs per boundary node, `[2b, 2b+1]`.
    pub fn n_trace_dofs(&self) -> usize {
        2 * self.boundary_nodes.len()
    }

    fn n_interior_scalars(&self) -> usize {
        self.int_of_local.iter().filter(|&&k| k != NOT_MAPPED).count()
    }

    /// Pads a trace into a full local velocity vector (zero interior).
    fn pad_trace(&self, trace: &[f64]) -> Vec<f64> {
        debug_assert_eq!(trace.len(), self.n_trace_dofs());
        let mut u = vec![0.0; self.dom.n_velocity()];
        for (k, &slot) in self.bnd_of_local.iter().enumerate() {
            if slot != NOT_MAPPED {
                u[2 * k] = trace[2 * slot];
                u[2 * k + 1] = trace[2 * slot + 1];
            }
        }
        u
    }

    /// Net boundary flux of a trace, `sum_K (B u_pad)_K`.
    pub fn trace_flux(&self, trace: &[f64]) -> f64 {
        let pad = self.pad_trace(trace);
        self.b_trips.iter().map(|&(_, c, v)| v * pad[c]).sum()
    }

    /// Extends several traces at once. Columns of `traces` follow the trace
    /// layout; columns of the result are full local velocity vectors (the
    /// boundary rows reproduce the input exactly).
    pub fn extend_mat(&self, traces: &Mat<f64>) -> Mat<f64> {
        let k = traces.ncols();
        let n_iv = 2 * self.n_interior_scalars();
        let n_lt = self.dom.tris.len();
        let dim = n_iv + n_lt + 1;

        let mut pads: Vec<Vec<f64>> = Vec::with_capacity(k);
        for col in 0..k {
            let t: Vec<f64> = (0..traces.nrows()).map(|i| traces[(i, col)]).collect();
            pads.push(self.pad_trace(&t));
        }

        let mut rhs = Mat::<f64>::zeros(dim, k);
        for (col, pad) in pads.iter().enumerate() {
            for &(r, c, v) in &self.a_trips {
                let slot = self.int_of_local[r / 2];
                if slot != NOT_MAPPED && pad[c] != 0.0 {
                    rhs[(2 * slot + r % 2, col)] -= v * pad[c];
                }
            }
            let mut bu = vec![0.0; n_lt];
            for &(t, c, v) in &self.b_trips {
                if pad[c] != 0.0 {
                    bu[t] += v * pad[c];
                }
            }
            let flux: f64 = bu.iter().sum();
            let rate = flux / self.region_area;
            for t in 0..n_lt {
                rhs[(n_iv + t, col)] = rate * self.tri_area - bu[t];
            }
        }

        let x = self.lu.solve_mat(&rhs);
        let mut out = Mat::<f64>::zeros(self.dom.n_velocity(), k);
        for (col, pad) in pads.iter().enumerate() {
            for (kk, &slot) in self.int_of_local.iter().enumerate() {
                if slot != NOT_MAPPED {
                    out[(2 * kk, col)] = x[(2 * slot, col)];
                    out[(2 * kk + 1, col)] = x[(2 * slot + 1, col)];
                }
            }
            for (dof, &v) in pad.iter().enumerate() {
                if self.bnd_of_local[dof / 2] != NOT_MAPPED {
                    out[(dof, col)] = v;
                }
            }
        }
        out
    }

    /// Single-trace convenience wrapper.
    pub fn extend_one(&self, trace: &[f64]) -> Vec<f64> {
        let m = Mat::from_fn(trace.len(), 1, |i, _| trace[i]);
        let out = self.extend_mat(&m);
        (0..out.nrows()).map(|i| out[(i, 0)]).collect()
    }

    /// Samples a pointwise velocity function into the trace layout.
    pub fn trace_of(&self, f: &dyn Fn(usize) -> [f64; 2]) -> Vec<f64> {
        let mut t = Vec::with_capacity(self.n_trace_dofs());
        for &s in &self.boundary_nodes {
            let v = f(s);
            t.push(v[0]);
            t.push(v[1]);
        }
        t
    }

    /// Reads region-boundary values out of a global velocity vector.
    pub fn trace_from_global(&self, global: &[f64]) -> Vec<f64> {
        self.trace_of(&|s| [global[ux(s)], global[uy(s)]])
    }

    /// Replaces the region-interior part of a global velocity vector with
    /// the extension of its own region-boundary trace.
    pub fn correct_global(&self, global: &mut [f64]) {
        let trace = self.trace_from_global(global);
        let local = self.extend_one(&trace);
        for (k, &s) in self.dom.scalar_nodes.iter().enumerate() {
            if self.int_of_local[k] != NOT_MAPPED {
                global[ux(s)] = local[2 * k];
                global[uy(s)] = local[2 * k + 1];
            }
        }
    }

    /// Momentum energy `u^T A_D u` of a local velocity vector.
    pub fn energy_of(&self, local: &[f64]) -> f64 {
        self.a_trips.iter().map(|&(r, c, v)| v * local[r] * local[c]).sum()
    }

    /// Div-div energy `int_D (div u)^2` of a local velocity vector.
    pub fn divdiv_energy(&self, local: &[f64]) -> f64 {
        self.dd_trips.iter().map(|&(r, c, v)| v * local[r] * local[c]).sum()
    }

    /// Local contrast-weighted velocity norm over the region.
    pub fn tnorm_of(&self, local: &[f64], m_const: f64) -> f64 {
        (self.energy_of(local) + m_const * self.divdiv_energy(local)).max(0.0).sqrt()
    }

    /// Replaces, inside a velocity column set indexed by `host` local dofs,
    /// the region-interior values of every column with the extension of its
    /// own region-boundary trace. The region must lie inside `host`.
    pub fn correct_columns(&self, host: &LocalTris, cols: &mut Mat<f64>) {
        let k = cols.ncols();
        let host_idx: Vec<usize> = self
            .dom
            .scalar_nodes
            .iter()
            .map(|&s| host.local_scalar(s).expect("region node inside host domain"))
            .collect();
        let mut traces = Mat::<f64>::zeros(self.n_trace_dofs(), k);
        for (kk, &hk) in host_idx.iter().enumerate() {
            let slot = self.bnd_of_local[kk];
            if slot != NOT_MAPPED {
                for col in 0..k {
                    traces[(2 * slot, col)] = cols[(2 * hk, col)];
                    traces[(2 * slot + 1, col)] = cols[(2 * hk + 1, col)];
                }
            }
        }
        let local = self.extend_mat(&traces);
        for (kk, &hk) in host_idx.iter().enumerate() {
            if self.int_of_local[kk] != NOT_MAPPED {
                for col in 0..k {
                    cols[(2 * hk, col)] = local[(2 * kk, col)];
                    cols[(2 * hk + 1, col)] = local[(2 * kk + 1, col)];
                }
            }
        }
    }

    /// Per-triangle mean divergence of a local velocity vector.
    pub fn local_divergence(&self, local: &[f64]) -> Vec<f64> {
        let mut bu = vec![0.0; self.dom.tris.len()];
        for &(t, c, v) in &self.b_trips {
            bu[t] += v * local[c];
        }
        for v in &mut bu {
            *v /= self.tri_area;
        }
        bu
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::NestedMesh;

    fn region(mesh: &NestedMesh, field: &PermeabilityField, b0: usize, b1: usize) -> RegionSolver {
        let r0 = mesh.block_cell_rect(b0);
        let r1 = mesh.block_cell_rect(b1);
        let rect = CellRect {
            i0: r0.i0.min(r1.i0),
            j0: r0.j0.min(r1.j0),
            i1: r0.i1.max(r1.i1),
            j1: r0.j1.max(r1.j1),
        };
        RegionSolver::new(mesh, field, rect).unwrap()
    }

    fn striped_field(mesh: &NestedMesh) -> PermeabilityField {
        let n = mesh.n_fine;
        let vals: Vec<f64> = (0..n * n)
            .map(|k| {
                let (i, j) = (k % n, k / n);
                if (i + 2 * j) % 5 == 0 {
                    1e4
                } else {
                    1.0
                }
            })
            .collect();
        PermeabilityField::from_values(mesh, vals).unwrap()
    }

    #[test]
    fn zero_trace_extends_to_zero() {
        let mesh = NestedMesh::build(3, 3).unwrap();
        let field = striped_field(&mesh);
        let sol = region(&mesh, &field, 0, 4); // 2x2 block patch
        let out = sol.extend_one(&vec![0.0; sol.n_trace_dofs()]);
        assert!(out.iter().all(|v| v.abs() < 1e-13));
    }

    #[test]
    fn boundary_rows_reproduce_the_trace_exactly() {
        let mesh = NestedMesh::build(3, 2).unwrap();
        let field = striped_field(&mesh);
        let sol = region(&mesh, &field, 1, 2);
        let trace: Vec<f64> =
            (0..sol.n_trace_dofs()).map(|k| ((3 * k + 1) % 7) as f64 - 3.0).collect();
        let out = sol.extend_one(&trace);
        for (k, &s) in sol.dom().scalar_nodes.iter().enumerate() {
            if let Some(b) = sol.boundary_index_of(s) {
                assert_eq!(out[2 * k].to_bits(), trace[2 * b].to_bits());
                assert_eq!(out[2 * k + 1].to_bits(), trace[2 * b + 1].to_bits());
            }
        }
    }

    #[test]
    fn extension_is_linear() {
        let mesh = NestedMesh::build(2, 3).unwrap();
        let field = striped_field(&mesh);
        let sol = region(&mesh, &field, 0, 1);
        let n = sol.n_trace_dofs();
        let t1: Vec<f64> = (0..n).map(|k| (k as f64 * 0.37).sin()).collect();
        let t2: Vec<f64> = (0..n).map(|k| (k as f64 * 0.11).cos()).collect();
        let combo: Vec<f64> = (0..n).map(|k| 2.5 * t1[k] - 0.75 * t2[k]).collect();
        let e1 = sol.extend_one(&t1);
        let e2 = sol.extend_one(&t2);
        let ec = sol.extend_one(&combo);
        let scale = linalg::norm2(&ec).max(1.0);
        for k in 0..ec.len() {
            assert!((ec[k] - (2.5 * e1[k] - 0.75 * e2[k])).abs() < 1e-10 * scale);
        }
    }

    /// Trace of u = (x, 0) has flux |D| through the patch boundary, so the
    /// extension must carry mean divergence exactly 1 in every triangle.
    #[test]
    fn divergence_is_the_flux_rate_in_every_triangle() {
        let mesh = NestedMesh::build(3, 3).unwrap();
        let field = striped_field(&mesh);
        let sol = region(&mesh, &field, 3, 4);
        let trace = sol.trace_of(&|s| {
            let (x, _) = mesh.node_coords(s);
            [x, 0.0]
        });
        let n_cells = 2 * 3 * 3; // 2x1 blocks of 3x3 cells
        let region_area = n_cells as f64 * mesh.h() * mesh.h();
        let flux = sol.trace_flux(&trace);
        assert!((flux - region_area).abs() < 1e-13);
        let out = sol.extend_one(&trace);
        for d in sol.local_divergence(&out) {
            assert!((d - 1.0).abs() < 1e-9, "mean divergence {d}");
        }
    }

    /// Among all fields with the same trace and the same per-triangle
    /// divergence, the extension minimizes the momentum energy. A solve
    /// under a different permeability gives an admissible competitor.
    #[test]
    fn extension_minimizes_energy_over_admissible_competitors() {
        let mesh = NestedMesh::build(2, 4).unwrap();
        let field = striped_field(&mesh);
        let other = PermeabilityField::uniform(&mesh, 50.0).unwrap();
        let sol = region(&mesh, &field, 0, 3);
        let alt = region(&mesh, &other, 0, 3);
        let trace = sol.trace_of(&|s| {
            let (x, y) = mesh.node_coords(s);
            [y * y, x]
        });
        let mine = sol.extend_one(&trace);
        let competitor = alt.extend_one(&trace);
        // Same constraints: identical divergence pattern.
        let d1 = sol.local_divergence(&mine);
        let d2 = sol.local_divergence(&competitor);
        for (a, b) in d1.iter().zip(&d2) {
            assert!((a - b).abs() < 1e-9);
        }
        let e_mine = sol.energy_of(&mine);
        let e_comp = sol.energy_of(&competitor);
        assert!(e_mine < e_comp * (1.0 + 1e-12), "{e_mine} vs {e_comp}");
        assert!(e_comp > e_mine * 1.0001, "competitor should be visibly worse");
    }

    /// Shifting both the patch and a periodic field by one block leaves the
    /// extension coefficients unchanged up to node relabeling.
    #[test]
    fn extension_is_translation_invariant() {
        let mesh = NestedMesh::build(4, 3).unwrap();
        let r = 3usize;
        let n = mesh.n_fine;
        let vals: Vec<f64> = (0..n * n)
            .map(|k| {
                let (i, j) = ((k % n) % r, (k / n) % r);
                1.0 + (i * 3 + j) as f64 * 10.0
            })
            .collect();
        let field = PermeabilityField::from_values(&mesh, vals).unwrap();
        let rect_a = CellRect { i0: 0, j0: 0, i1: 2 * r, j1: 2 * r };
        let rect_b = CellRect { i0: r, j0: r, i1: 3 * r, j1: 3 * r };
        let sol_a = RegionSolver::new(&mesh, &field, rect_a).unwrap();
        let sol_b = RegionSolver::new(&mesh, &field, rect_b).unwrap();
        // Trace sampled in patch-relative coordinates.
        let rel = |s: usize, rect: CellRect| {
            let (gx, gy) = mesh.node_grid_coords(s);
            let x = (gx - 2 * rect.i0) as f64;
            let y = (gy - 2 * rect.j0) as f64;
            [(0.13 * x - 0.07 * y).sin(), (0.05 * x * y).cos()]
        };
        let ea = sol_a.extend_one(&sol_a.trace_of(&|s| rel(s, rect_a)));
        let eb = sol_b.extend_one(&sol_b.trace_of(&|s| rel(s, rect_b)));
        // Compare by relative grid position.
        let mut by_pos = std::collections::HashMap::new();
        for (k, &s) in sol_a.dom().scalar_nodes.iter().enumerate() {
            let (gx, gy) = mesh.node_grid_coords(s);
            by_pos.insert((gx, gy), [ea[2 * k], ea[2 * k + 1]]);
        }
        for (k, &s) in sol_b.dom().scalar_nodes.iter().enumerate() {
            let (gx, gy) = mesh.node_grid_coords(s);
            let a = by_pos[&(gx - 2 * r, gy - 2 * r)];
            assert!((eb[2 * k] - a[0]).abs() < 1e-11);
            assert!((eb[2 * k + 1] - a[1]).abs() < 1e-11);
        }
    }

    #[test]
    fn repeated_extension_is_bit_identical() {
        let mesh = NestedMesh::build(2, 3).unwrap();
        let field = striped_field(&mesh);
        let sol = region(&mesh, &field, 2, 3);
        let trace: Vec<f64> = (0..sol.n_trace_dofs()).map(|k| (k as f64).sqrt()).collect();
        let a = sol.extend_one(&trace);
        let b = sol.extend_one(&trace);
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn correct_global_preserves_boundary_and_divergence_pattern() {
        let mesh = NestedMesh::build(3, 2).unwrap();
        let field = striped_field(&mesh);
        let sol = region(&mesh, &field, 4, 4); // single block
        let mut global = vec![0.0; mesh.n_velocity_dofs()];
        for s in 0..mesh.n_scalar_nodes() {
            let (x, y) = mesh.node_coords(s);
            global[ux(s)] = x + 0.25 * y;
            global[uy(s)] = y - x * x;
        }
        let before = sol.trace_from_global(&global);
        sol.correct_global(&mut global);
        let after = sol.trace_from_global(&global);
        assert!(before.iter().zip(&after).all(|(a, b)| a.to_bits() == b.to_bits()));
        let local = sol.dom().gather_velocity(&global);
        let divs = sol.local_divergence(&local);
        let mean = divs.iter().sum::<f64>() / divs.len() as f64;
        for d in &divs {
            assert!((d - mean).abs() < 1e-9);
        }
    }
}
