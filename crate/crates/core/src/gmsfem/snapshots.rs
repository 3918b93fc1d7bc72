//! Local snapshot spaces over coarse neighborhoods.
//!
//! One neighborhood yields one snapshot family: for every fine node on the
//! neighborhood boundary (vertices and edge midpoints alike) we take the
//! hat trace that is 1 at that node and 0 at every other boundary node, in
//! each velocity component, and extend it into the interior with the
//! constrained flow extension. Each hat is the quadratic interpolant of the
//! piecewise-linear bump on the half-step boundary grid, so together the
//! hats span every admissible boundary trace. The two constant velocities
//! join the family as literal columns so the span always contains them. A
//! Gram filter then discards dependent directions and leaves an orthonormal
//! basis.

use faer::Mat;

use crate::error::Result;
use crate::extension::RegionSolver;
use crate::fem::LocalTris;
use crate::field::PermeabilityField;
use crate::linalg::gram_filter;
use crate::mesh::{CoarseNeighborhood, NestedMesh};

#[derive(Debug, Clone)]
pub struct SnapshotSpace {
    /// Local triangulation of the neighborhood; rows of `basis` follow its
    /// interleaved velocity numbering.
    pub dom: LocalTris,
    /// Orthonormal columns spanning the filtered snapshot space.
    pub basis: Mat<f64>,
    /// Column count before filtering (two per boundary fine node plus the
    /// two constants).
    pub raw_columns: usize,
    pub dropped: usize,
    /// Gram spectrum of the raw family, ascending.
    pub gram_eigenvalues: Vec<f64>,
    /// Worst relative distance of the two constant velocities from the span.
    pub constants_residual: f64,
}

/// Hat traces for every boundary fine node, as columns over the region's
/// trace dofs: column `2k` carries the hat of node `k` in the x component,
/// column `2k + 1` the same hat in the y component. In the nodal trace
/// numbering this is the identity.
pub fn boundary_hat_traces(region: &RegionSolver) -> Mat<f64> {
    let n = region.n_trace_dofs();
    let mut traces = Mat::<f64>::zeros(n, n);
    for k in 0..n {
        traces[(k, k)] = 1.0;
    }
    traces
}

pub fn build_snapshots(
    mesh: &NestedMesh,
    field: &PermeabilityField,
    hood: &CoarseNeighborhood,
    tau: f64,
) -> Result<SnapshotSpace> {
    let region = RegionSolver::new(mesh, field, hood.cell_rect)?;
    let hats = boundary_hat_traces(&region);
    let ext = region.extend_mat(&hats);
    let nv = ext.nrows();
    let raw_columns = ext.ncols() + 2;
    let mut u = Mat::<f64>::zeros(nv, raw_columns);
    u.as_mut().subcols_mut(0, ext.ncols()).copy_from(&ext);
    for k in 0..nv / 2 {
        u[(2 * k, raw_columns - 2)] = 1.0;
        u[(2 * k + 1, raw_columns - 1)] = 1.0;
    }
    let r = hood.cell_rect;
    let context = format!("snapshot space over cells [{},{})x[{},{})", r.i0, r.i1, r.j0, r.j1);
    let filtered = gram_filter(&u, tau, &context)?;
    let mut constants_residual = 0.0f64;
    for c in [raw_columns - 2, raw_columns - 1] {
        let col: Vec<f64> = (0..nv).map(|i| u[(i, c)]).collect();
        constants_residual = constants_residual.max(span_residual(&filtered.basis, &col));
    }
    Ok(SnapshotSpace {
        dom: region.dom().clone(),
        basis: filtered.basis,
        raw_columns,
        dropped: filtered.dropped,
        gram_eigenvalues: filtered.gram_eigenvalues,
        constants_residual,
    })
}

/// Relative distance of `c` from the span of the orthonormal columns of `q`.
fn span_residual(q: &Mat<f64>, c: &[f64]) -> f64 {
    let (n, k) = (q.nrows(), q.ncols());
    let mut coef = vec![0.0; k];
    for (j, cf) in coef.iter_mut().enumerate() {
        *cf = (0..n).map(|i| q[(i, j)] * c[i]).sum();
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..n {
        let p: f64 = (0..k).map(|j| q[(i, j)] * coef[j]).sum();
        num += (c[i] - p).powi(2);
        den += c[i] * c[i];
    }
    (num / den).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{coarse_neighborhood, skeleton_shape_functions};

    fn checkered_field(mesh: &NestedMesh) -> PermeabilityField {
        let n = mesh.n_fine;
        let vals: Vec<f64> = (0..n * n)
            .map(|k| if (k % n + k / n) % 2 == 0 { 1e3 } else { 1.0 })
            .collect();
        PermeabilityField::from_values(mesh, vals).unwrap()
    }

    fn vertex_hood(mesh: &NestedMesh) -> CoarseNeighborhood {
        let basis = skeleton_shape_functions(mesh);
        let f = basis
            .functions
            .iter()
            .find(|f| matches!(f.anchor, crate::mesh::Anchor::Vertex { .. }))
            .unwrap();
        coarse_neighborhood(mesh, f)
    }

    #[test]
    fn raw_family_has_two_columns_per_boundary_node_plus_constants() {
        let mesh = NestedMesh::build(2, 2).unwrap();
        let field = checkered_field(&mesh);
        let hood = vertex_hood(&mesh);
        // 4x4-cell neighborhood: 16 boundary vertices plus 16 edge midpoints.
        assert_eq!(hood.boundary_fine_vertices(&mesh).len(), 16);
        let region = RegionSolver::new(&mesh, &field, hood.cell_rect).unwrap();
        assert_eq!(region.boundary_nodes().len(), 32);
        let snap = build_snapshots(&mesh, &field, &hood, 1e-10).unwrap();
        assert_eq!(snap.raw_columns, 66);
        assert_eq!(snap.basis.ncols() + snap.dropped, 66);
        assert!(snap.basis.ncols() > 2);
    }

    #[test]
    fn hat_traces_are_nodal_unit_vectors_per_component() {
        let mesh = NestedMesh::build(2, 2).unwrap();
        let field = checkered_field(&mesh);
        let hood = vertex_hood(&mesh);
        let region = RegionSolver::new(&mesh, &field, hood.cell_rect).unwrap();
        let hats = boundary_hat_traces(&region);
        assert_eq!(hats.ncols(), 2 * region.boundary_nodes().len());
        for slot in 0..region.boundary_nodes().len() {
            let col = 2 * slot; // x component of the hat at this node
            for row in 0..hats.nrows() {
                let expect = if row == 2 * slot { 1.0 } else { 0.0 };
                assert_eq!(hats[(row, col)], expect);
            }
            assert_eq!(hats[(2 * slot + 1, col + 1)], 1.0);
        }
    }

    /// The hats partition the boundary x trace: summed they give the trace
    /// that is one in x at every boundary node, so by linearity the summed
    /// extensions match the extension of that trace.
    #[test]
    fn hat_extensions_sum_to_the_unit_trace_extension() {
        let mesh = NestedMesh::build(3, 2).unwrap();
        let field = checkered_field(&mesh);
        let hood = vertex_hood(&mesh);
        let region = RegionSolver::new(&mesh, &field, hood.cell_rect).unwrap();
        let hats = boundary_hat_traces(&region);
        let ext = region.extend_mat(&hats);
        let mut unit = vec![0.0; region.n_trace_dofs()];
        for slot in 0..region.boundary_nodes().len() {
            unit[2 * slot] = 1.0;
        }
        let whole = region.extend_one(&unit);
        for (i, &w) in whole.iter().enumerate() {
            let summed: f64 = (0..hats.ncols() / 2).map(|k| ext[(i, 2 * k)]).sum();
            assert!((summed - w).abs() < 1e-10, "dof {i}: {summed} vs {w}");
        }
    }

    #[test]
    fn constants_stay_in_the_filtered_span() {
        let mesh = NestedMesh::build(2, 3).unwrap();
        let field = checkered_field(&mesh);
        let hood = vertex_hood(&mesh);
        let snap = build_snapshots(&mesh, &field, &hood, 1e-10).unwrap();
        assert!(
            snap.constants_residual < 1e-8,
            "constants residual {}",
            snap.constants_residual
        );
    }

    #[test]
    fn snapshot_build_is_deterministic() {
        let mesh = NestedMesh::build(2, 2).unwrap();
        let field = checkered_field(&mesh);
        let hood = vertex_hood(&mesh);
        let a = build_snapshots(&mesh, &field, &hood, 1e-10).unwrap();
        let b = build_snapshots(&mesh, &field, &hood, 1e-10).unwrap();
        assert_eq!(a.basis.ncols(), b.basis.ncols());
        for j in 0..a.basis.ncols() {
            for i in 0..a.basis.nrows() {
                assert_eq!(a.basis[(i, j)].to_bits(), b.basis[(i, j)].to_bits());
            }
        }
    }
}
