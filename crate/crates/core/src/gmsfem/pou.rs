//! Multiscale partition of unity on the coarse skeleton.
//!
//! Every interior skeleton shape function `chi` spawns two scalar members:
//! `chi_x` is half the first component of the blockwise flow extension of the
//! trace `(chi, 0)`, and `chi_y` half the second component of the extension
//! of `(0, chi)`. Extensions preserve their Dirichlet data, so on interior
//! skeleton nodes `chi_x = chi_y = chi / 2` and the full member family sums
//! to one there exactly; off the skeleton the sum is free to deviate.

use faer::Mat;
use rayon::prelude::*;

use crate::error::Result;
use crate::extension::RegionSolver;
use crate::fem::LocalTris;
use crate::field::PermeabilityField;
use crate::mesh::{
    coarse_neighborhood, skeleton_shape_functions, CoarseNeighborhood, NestedMesh,
    SkeletonFunction,
};

/// The two scalar partition members spawned by one skeleton shape function.
/// Both share the neighborhood support and vanish on its boundary.
#[derive(Debug, Clone)]
pub struct PartitionMember {
    pub hood: CoarseNeighborhood,
    /// Local triangulation of the neighborhood; `chi_*` align with its
    /// scalar nodes.
    pub dom: LocalTris,
    pub chi_x: Vec<f64>,
    pub chi_y: Vec<f64>,
}

impl PartitionMember {
    /// Combined scalar weight `chi_x + chi_y` (equals the skeleton shape
    /// function on interior skeleton nodes).
    pub fn chi_sum(&self) -> Vec<f64> {
        self.chi_x.iter().zip(&self.chi_y).map(|(a, b)| a + b).collect()
    }
}

#[derive(Debug, Clone)]
pub struct MultiscalePoU {
    pub members: Vec<PartitionMember>,
    /// Interior coarse edges whose midpoint function absorbed a boundary
    /// vertex quadratic (forwarded from the skeleton basis).
    pub lumped_edges: usize,
}

/// Builds the member family by blockwise extension of skeleton traces.
pub fn build_pou(
    mesh: &NestedMesh,
    field: &PermeabilityField,
    blocks: &[RegionSolver],
) -> Result<MultiscalePoU> {
    field.check_matches(mesh)?;
    let basis = skeleton_shape_functions(mesh);
    let members: Vec<PartitionMember> = basis
        .functions
        .par_iter()
        .map(|f| build_member(mesh, blocks, f))
        .collect();
    Ok(MultiscalePoU { members, lumped_edges: basis.lumped_edges })
}

fn build_member(
    mesh: &NestedMesh,
    blocks: &[RegionSolver],
    f: &SkeletonFunction,
) -> PartitionMember {
    let hood = coarse_neighborhood(mesh, f);
    let dom = LocalTris::from_cell_rect(mesh, hood.cell_rect);
    let mut chi_x = vec![0.0; dom.scalar_nodes.len()];
    let mut chi_y = vec![0.0; dom.scalar_nodes.len()];
    for &b in &hood.blocks {
        let solver = &blocks[b];
        // Column 0 carries (chi, 0), column 1 carries (0, chi).
        let mut traces = Mat::<f64>::zeros(solver.n_trace_dofs(), 2);
        for (slot, &s) in solver.boundary_nodes().iter().enumerate() {
            let v = f.value_at(s);
            traces[(2 * slot, 0)] = v;
            traces[(2 * slot + 1, 1)] = v;
        }
        let ext = solver.extend_mat(&traces);
        for (k, &s) in solver.dom().scalar_nodes.iter().enumerate() {
            let hk = dom.local_scalar(s).expect("block node inside neighborhood");
            chi_x[hk] = 0.5 * ext[(2 * k, 0)];
            chi_y[hk] = 0.5 * ext[(2 * k + 1, 1)];
        }
    }
    PartitionMember { hood, dom, chi_x, chi_y }
}

/// Max |sum of all members - 1| over interior fine skeleton nodes.
pub fn unity_deficit(mesh: &NestedMesh, pou: &MultiscalePoU) -> f64 {
    let mut sum = vec![0.0; mesh.n_scalar_nodes()];
    for m in &pou.members {
        for (k, &s) in m.dom.scalar_nodes.iter().enumerate() {
            sum[s] += m.chi_x[k] + m.chi_y[k];
        }
    }
    let mut worst = 0.0f64;
    for s in mesh.skeleton_nodes() {
        if !mesh.node_on_domain_boundary(s) {
            worst = worst.max((sum[s] - 1.0).abs());
        }
    }
    worst
}
