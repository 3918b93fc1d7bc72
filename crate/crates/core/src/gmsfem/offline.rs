//! Offline coarse velocity spaces: one sweep over the partition members
//! produces every requested space at once, so snapshots and eigenproblems
//! are computed a single time per neighborhood.
//!
//! Per member and per request the pipeline is: select modes, multiply each
//! selected mode by each of the member's two scalar weights (giving two
//! columns per mode), re-extend the products block by block so their
//! divergence is constant on every coarse block, then Gram-filter the
//! corrected columns. The correction pins a column down by its block
//! boundary traces, so the filter routinely removes the dependent ones.

use faer::Mat;
use rayon::prelude::*;

use crate::error::Result;
use crate::extension::RegionSolver;
use crate::fem::{energy_elements, project_form, ElementPair};
use crate::field::PermeabilityField;
use crate::gmsfem::pou::{MultiscalePoU, PartitionMember};
use crate::gmsfem::snapshots::build_snapshots;
use crate::gmsfem::spectral::{
    local_eigenproblem, select_modes, LocalEigen, SelectionPolicy, SpectralVariant,
};
use crate::linalg::{gram_filter_in, sparse_from_triplets, Sparse};
use crate::mesh::NestedMesh;

/// One coarse space to build: a mode-selection rule plus the eigenproblem
/// variant feeding it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpaceRequest {
    pub policy: SelectionPolicy,
    pub variant: SpectralVariant,
}

/// Per-member column counts for one requested space.
#[derive(Debug, Clone, Copy)]
pub struct SpaceCount {
    /// Modes the policy selected.
    pub selected: usize,
    /// Columns surviving the post-correction rank filter (out of
    /// `2 * selected` products).
    pub kept: usize,
}

/// Diagnostics for one partition member, shared by all requested spaces.
#[derive(Debug, Clone)]
pub struct LocalReport {
    pub member: usize,
    pub raw_columns: usize,
    pub snapshot_dim: usize,
    pub numerics_eigenvalues: Option<Vec<f64>>,
    pub analysis_eigenvalues: Option<Vec<f64>>,
    /// One entry per request, in request order.
    pub per_space: Vec<SpaceCount>,
}

/// A coarse velocity space: `n_c` basis functions as rows of `r0` over the
/// fine velocity dofs. `r0t` is the transpose, kept explicitly so both
/// gather (columns of `r0t`) and scatter (columns of `r0`) are cheap.
#[derive(Debug)]
pub struct OfflineSpace {
    pub request: SpaceRequest,
    pub n_c: usize,
    pub n_vel: usize,
    pub r0: Sparse,
    pub r0t: Sparse,
    /// Basis rows owned by each partition member.
    pub member_ranges: Vec<std::ops::Range<usize>>,
}

struct MemberOut {
    report: LocalReport,
    /// Per request: orthonormal kept columns over the member's local
    /// velocity dofs.
    kept: Vec<Mat<f64>>,
}

/// Builds every requested space in one pass over the members.
pub fn build_offline_sweep(
    mesh: &NestedMesh,
    field: &PermeabilityField,
    pou: &MultiscalePoU,
    blocks: &[RegionSolver],
    requests: &[SpaceRequest],
    tau: f64,
) -> Result<(Vec<OfflineSpace>, Vec<LocalReport>)> {
    let outs: Result<Vec<MemberOut>> = pou
        .members
        .par_iter()
        .enumerate()
        .map(|(idx, member)| build_member_columns(mesh, field, blocks, requests, tau, idx, member))
        .collect();
    let outs = outs?;
    let reports: Vec<LocalReport> = outs.iter().map(|o| o.report.clone()).collect();

    let n_vel = mesh.n_velocity_dofs();
    let mut spaces = Vec::with_capacity(requests.len());
    for (ri, &request) in requests.iter().enumerate() {
        let mut member_ranges = Vec::with_capacity(outs.len());
        let mut trips: Vec<(usize, usize, f64)> = Vec::new();
        let mut row = 0usize;
        for (out, member) in outs.iter().zip(&pou.members) {
            let kept = &out.kept[ri];
            for j in 0..kept.ncols() {
                for (k, &s) in member.dom.scalar_nodes.iter().enumerate() {
                    let vx = kept[(2 * k, j)];
                    if vx != 0.0 {
                        trips.push((row + j, 2 * s, vx));
                    }
                    let vy = kept[(2 * k + 1, j)];
                    if vy != 0.0 {
                        trips.push((row + j, 2 * s + 1, vy));
                    }
                }
            }
            member_ranges.push(row..row + kept.ncols());
            row += kept.ncols();
        }
        let r0 = sparse_from_triplets(row, n_vel, &trips)?;
        for t in &mut trips {
            std::mem::swap(&mut t.0, &mut t.1);
        }
        let r0t = sparse_from_triplets(n_vel, row, &trips)?;
        spaces.push(OfflineSpace { request, n_c: row, n_vel, r0, r0t, member_ranges });
    }
    Ok((spaces, reports))
}

fn build_member_columns(
    mesh: &NestedMesh,
    field: &PermeabilityField,
    blocks: &[RegionSolver],
    requests: &[SpaceRequest],
    tau: f64,
    idx: usize,
    member: &PartitionMember,
) -> Result<MemberOut> {
    let snap = build_snapshots(mesh, field, &member.hood, tau)?;
    let el = ElementPair::new(mesh);
    let energy = energy_elements(mesh, field, &el);
    let mut numerics: Option<LocalEigen> = None;
    let mut analysis: Option<LocalEigen> = None;
    for req in requests {
        let slot = match req.variant {
            SpectralVariant::Numerics => &mut numerics,
            SpectralVariant::Analysis => &mut analysis,
        };
        if slot.is_none() {
            *slot = Some(local_eigenproblem(mesh, field, &snap, member, req.variant)?);
        }
    }

    let r = member.hood.cell_rect;
    let mut per_space = Vec::with_capacity(requests.len());
    let mut kept = Vec::with_capacity(requests.len());
    for req in requests {
        let eig = match req.variant {
            SpectralVariant::Numerics => numerics.as_ref().unwrap(),
            SpectralVariant::Analysis => analysis.as_ref().unwrap(),
        };
        let sel = select_modes(eig, req.policy);
        let mut vsel = Mat::<f64>::zeros(eig.vectors.nrows(), sel.len());
        for (j, &k) in sel.iter().enumerate() {
            for i in 0..eig.vectors.nrows() {
                vsel[(i, j)] = eig.vectors[(i, k)];
            }
        }
        let modes = &snap.basis * &vsel;
        let mut cols = Mat::<f64>::zeros(modes.nrows(), 2 * sel.len());
        for j in 0..sel.len() {
            for (k, (&wx, &wy)) in member.chi_x.iter().zip(&member.chi_y).enumerate() {
                cols[(2 * k, 2 * j)] = wx * modes[(2 * k, j)];
                cols[(2 * k + 1, 2 * j)] = wx * modes[(2 * k + 1, j)];
                cols[(2 * k, 2 * j + 1)] = wy * modes[(2 * k, j)];
                cols[(2 * k + 1, 2 * j + 1)] = wy * modes[(2 * k + 1, j)];
            }
        }
        for &b in &member.hood.blocks {
            blocks[b].correct_columns(&member.dom, &mut cols);
        }
        let context = format!(
            "corrected offline columns over cells [{},{})x[{},{})",
            r.i0, r.i1, r.j0, r.j1
        );
        // Filter in the velocity energy metric: dependence judged by the
        // Euclidean dof Gram discards directions that are weak pointwise
        // yet carry large gradients, which caps the approximation space.
        let gram = project_form(mesh, &member.dom, &cols, &*energy);
        let filtered = gram_filter_in(&cols, &gram, tau, &context)?;
        per_space.push(SpaceCount { selected: sel.len(), kept: filtered.basis.ncols() });
        kept.push(filtered.basis);
    }

    let report = LocalReport {
        member: idx,
        raw_columns: snap.raw_columns,
        snapshot_dim: snap.basis.ncols(),
        numerics_eigenvalues: numerics.map(|e| e.eigenvalues),
        analysis_eigenvalues: analysis.map(|e| e.eigenvalues),
        per_space,
    };
    Ok(MemberOut { report, kept })
}
