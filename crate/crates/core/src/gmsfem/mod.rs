//! Coarse-space pipeline: multiscale partition of unity on the coarse
//! skeleton, per-neighborhood snapshot spaces, local spectral mode selection,
//! divergence-corrected offline assembly, and the reduced saddle solve with
//! downscaling back to the fine grid.

mod coarse;
mod offline;
mod pou;
mod snapshots;
mod spectral;

pub use coarse::{
    coarse_galerkin_residual, coarse_space, debug_identity_space, inf_sup_witness, solve_coarse,
    CoarseSolution, CoarseSpace,
};
pub use offline::{build_offline_sweep, LocalReport, OfflineSpace, SpaceCount, SpaceRequest};
pub use pou::{build_pou, unity_deficit, MultiscalePoU, PartitionMember};
pub use snapshots::{boundary_hat_traces, build_snapshots, SnapshotSpace};
pub use spectral::{
    local_eigenproblem, select_modes, LocalEigen, SelectionPolicy, SpectralVariant,
};

use crate::error::Result;
use crate::extension::RegionSolver;
use crate::field::PermeabilityField;
use crate::mesh::NestedMesh;

/// One factored extension operator per coarse block, shared by the partition
/// of unity and the per-block divergence corrections.
pub fn block_solvers(mesh: &NestedMesh, field: &PermeabilityField) -> Result<Vec<RegionSolver>> {
    use rayon::prelude::*;
    (0..mesh.n_blocks())
        .into_par_iter()
        .map(|b| RegionSolver::new(mesh, field, mesh.block_cell_rect(b)))
        .collect()
}
