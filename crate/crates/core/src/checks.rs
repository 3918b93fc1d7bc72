//! Numerical invariant suite shared by the command-line `check` subcommand
//! and the acceptance tests. Every tolerance is pinned here as a named
//! constant so the two consumers cannot drift apart.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::fem::{self, ErrorWeights};
use crate::field::PermeabilityField;
use crate::gmsfem::{
    block_solvers, build_offline_sweep, build_pou, coarse_galerkin_residual, coarse_space,
    inf_sup_witness, solve_coarse, unity_deficit, CoarseSolution, LocalReport, OfflineSpace,
    SelectionPolicy, SpaceRequest, SpectralVariant,
};
use crate::linalg::sparse_from_triplets;
use crate::mesh::NestedMesh;
use crate::solve::{manufactured, FineSystem, MixedSolution};

/// Max partition-of-unity deficit over interior skeleton nodes.
pub const TOL_POU: f64 = 1e-10;
/// Max in-block deviation of per-triangle mean divergence of a basis function.
pub const TOL_DIV_CONTAIN: f64 = 1e-9;
/// Velocity tnorm error of the coarse solve against an exact constant flow.
pub const TOL_CONST_EXACT: f64 = 1e-8;
/// Extension stability: tnorm ratio bound for random traces.
pub const EXT_RATIO_MAX: f64 = 10.0;
/// Extension stability: allowed variation of the max ratio across contrasts.
pub const EXT_SPREAD_MAX: f64 = 2.0;
/// Allowed variation of the inf-sup witness across contrasts.
pub const INFSUP_RATIO_MAX: f64 = 10.0;
/// Relative Galerkin-orthogonality residual, fine and coarse.
pub const TOL_GALERKIN: f64 = 1e-8;
/// Agreement of the identity-downscaled coarse solve with a directly
/// assembled reference.
pub const TOL_DEBUG_IDENTITY: f64 = 1e-8;
/// Minimal manufactured-solution convergence rates.
pub const RATE_L2_MIN: f64 = 1.8;
pub const RATE_H1_MIN: f64 = 0.9;

/// Contrasts for the stability sweeps.
pub const CONTRAST_SWEEP: [f64; 4] = [1e0, 1e2, 1e4, 1e6];
/// Default eigenvalue-threshold sweep.
pub const LAMBDA_SWEEP: [f64; 4] = [1.0 / 3.0, 1.0 / 4.0, 1.0 / 7.0, 1.0 / 10.0];
/// Random traces drawn per block and contrast by the extension check.
pub const TRACES_PER_BLOCK: usize = 20;
/// Desk-scale mesh: coarse blocks per side and refinements per block.
pub const DESK_N_COARSE: usize = 8;
pub const DESK_REFINE: usize = 4;
/// Rank-filter threshold used everywhere a Gram filter runs.
pub const TAU_FILTER: f64 = 1e-10;

/// Which side of the threshold counts as passing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bound {
    AtMost,
    AtLeast,
    Positive,
}

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: String,
    pub measured: f64,
    pub threshold: f64,
    pub bound: Bound,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    pub fn at_most(name: impl Into<String>, measured: f64, threshold: f64, detail: String) -> Self {
        let passed = measured.is_finite() && measured <= threshold;
        Self { name: name.into(), measured, threshold, bound: Bound::AtMost, passed, detail }
    }

    pub fn at_least(name: impl Into<String>, measured: f64, threshold: f64, detail: String) -> Self {
        let passed = measured.is_finite() && measured >= threshold;
        Self { name: name.into(), measured, threshold, bound: Bound::AtLeast, passed, detail }
    }

    pub fn positive(name: impl Into<String>, measured: f64, detail: String) -> Self {
        let passed = measured.is_finite() && measured > 0.0;
        Self { name: name.into(), measured, threshold: 0.0, bound: Bound::Positive, passed, detail }
    }

    pub fn status_line(&self) -> String {
        let op = match self.bound {
            Bound::AtMost => "<=",
            Bound::AtLeast => ">=",
            Bound::Positive => ">",
        };
        format!(
            "{}: {} (measured {:.6e} {} {:.6e})",
            self.name,
            if self.passed { "pass" } else { "FAIL" },
            self.measured,
            op,
            self.threshold
        )
    }
}

/// Builds the partition of unity and measures its skeleton deficit.
pub fn check_pou_unity(mesh: &NestedMesh, field: &PermeabilityField) -> Result<CheckResult> {
    let blocks = block_solvers(mesh, field)?;
    let pou = build_pou(mesh, field, &blocks)?;
    let deficit = unity_deficit(mesh, &pou);
    Ok(CheckResult::at_most(
        "partition-of-unity deficit",
        deficit,
        TOL_POU,
        format!("{} members", pou.members.len()),
    ))
}

/// Max deviation, over every basis function of every given space, of the
/// per-triangle mean divergence from its block average.
pub fn check_div_containment(fine: &FineSystem, spaces: &[&OfflineSpace]) -> CheckResult {
    let mesh = &fine.mesh;
    let area = mesh.tri_area();
    let mut bu = vec![0.0; mesh.n_triangles()];
    let mut touched: Vec<usize> = Vec::new();
    let mut hit = vec![false; mesh.n_triangles()];
    let mut worst = 0.0f64;
    let mut columns = 0usize;
    for off in spaces {
        for k in 0..off.n_c {
            for (&d, &v) in off.r0t.row_idx_of_col_raw(k).iter().zip(off.r0t.val_of_col(k)) {
                for (&t, &bv) in fine.b.row_idx_of_col_raw(d).iter().zip(fine.b.val_of_col(d)) {
                    if !hit[t] {
                        hit[t] = true;
                        touched.push(t);
                    }
                    bu[t] += bv * v;
                }
            }
            let mut blocks: Vec<usize> = touched.iter().map(|&t| mesh.block_of_tri(t)).collect();
            blocks.sort_unstable();
            blocks.dedup();
            for b in blocks {
                let tris = mesh.block_tris(b);
                let mean: f64 =
                    tris.iter().map(|&t| bu[t] / area).sum::<f64>() / tris.len() as f64;
                for &t in &tris {
                    worst = worst.max((bu[t] / area - mean).abs());
                }
            }
            for &t in &touched {
                bu[t] = 0.0;
                hit[t] = false;
            }
            touched.clear();
            columns += 1;
        }
    }
    CheckResult::at_most(
        "divergence containment",
        worst,
        TOL_DIV_CONTAIN,
        format!("{} basis functions across {} spaces", columns, spaces.len()),
    )
}

/// Extension stability over a contrast sweep: random local velocities with
/// contrast-independent traces are extended block by block, and the tnorm
/// ratio extension/original is bounded and contrast-stable.
pub fn check_extension_stability(
    mesh: &NestedMesh,
    field_at: &dyn Fn(f64) -> Result<PermeabilityField>,
    contrasts: &[f64],
    traces_per_block: usize,
    seed: u64,
) -> Result<Vec<CheckResult>> {
    let mut per_contrast: Vec<(f64, f64)> = Vec::new();
    for &c in contrasts {
        let field = field_at(c)?;
        let m = field.m_const();
        let blocks = block_solvers(mesh, &field)?;
        let mut cmax = 0.0f64;
        for (bi, solver) in blocks.iter().enumerate() {
            let n_local = solver.dom().n_velocity();
            for k in 0..traces_per_block {
                // Seed depends only on (block, trace), not the contrast, so
                // every contrast extends identical boundary data.
                let mut rng =
                    ChaCha8Rng::seed_from_u64(seed ^ ((bi as u64) << 24) ^ (k as u64));
                let w: Vec<f64> = (0..n_local).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let mut trace = vec![0.0; solver.n_trace_dofs()];
                for (slot, &s) in solver.boundary_nodes().iter().enumerate() {
                    let l = solver.dom().local_scalar(s).expect("boundary node in block");
                    trace[2 * slot] = w[2 * l];
                    trace[2 * slot + 1] = w[2 * l + 1];
                }
                let ext = solver.extend_one(&trace);
                let ratio = solver.tnorm_of(&ext, m) / solver.tnorm_of(&w, m);
                cmax = cmax.max(ratio);
            }
        }
        per_contrast.push((c, cmax));
    }
    let max = per_contrast.iter().fold(0.0f64, |a, &(_, v)| a.max(v));
    let min = per_contrast.iter().fold(f64::INFINITY, |a, &(_, v)| a.min(v));
    let detail: Vec<String> =
        per_contrast.iter().map(|(c, v)| format!("contrast {c:.0e}: max ratio {v:.4}")).collect();
    let detail = detail.join("; ");
    Ok(vec![
        CheckResult::at_most("extension stability max ratio", max, EXT_RATIO_MAX, detail.clone()),
        CheckResult::at_most("extension stability contrast spread", max / min, EXT_SPREAD_MAX, detail),
    ])
}

/// Inf-sup witness over a contrast sweep on fixed geometry.
pub fn check_infsup_sweep(
    mesh: &NestedMesh,
    field_at: &dyn Fn(f64) -> Result<PermeabilityField>,
    contrasts: &[f64],
    request: SpaceRequest,
) -> Result<Vec<CheckResult>> {
    let mut per_contrast: Vec<(f64, f64)> = Vec::new();
    for &c in contrasts {
        let field = field_at(c)?;
        let fine = FineSystem::build(mesh, &field)?;
        let blocks = block_solvers(mesh, &field)?;
        let pou = build_pou(mesh, &field, &blocks)?;
        let (spaces, _) =
            build_offline_sweep(mesh, &field, &pou, &blocks, &[request], TAU_FILTER)?;
        let cs = coarse_space(&fine, &spaces[0])?;
        per_contrast.push((c, inf_sup_witness(&fine, &cs)?));
    }
    let max = per_contrast.iter().fold(0.0f64, |a, &(_, v)| a.max(v));
    let min = per_contrast.iter().fold(f64::INFINITY, |a, &(_, v)| a.min(v));
    let detail: Vec<String> =
        per_contrast.iter().map(|(c, v)| format!("contrast {c:.0e}: witness {v:.6e}")).collect();
    let detail = detail.join("; ");
    Ok(vec![
        CheckResult::positive("inf-sup witness minimum", min, detail.clone()),
        CheckResult::at_most(
            "inf-sup witness contrast spread",
            if min > 0.0 { max / min } else { f64::INFINITY },
            INFSUP_RATIO_MAX,
            detail,
        ),
    ])
}

/// Fine-level Galerkin orthogonality of a solved system.
pub fn check_galerkin_fine(
    fine: &FineSystem,
    sol: &MixedSolution,
    load: Option<&[f64]>,
) -> CheckResult {
    CheckResult::at_most(
        "fine Galerkin residual",
        fine.galerkin_residual(sol, load),
        TOL_GALERKIN,
        String::new(),
    )
}

/// Coarse-level Galerkin orthogonality against the fine solution.
pub fn check_galerkin_coarse(
    fine: &FineSystem,
    off: &OfflineSpace,
    fine_sol: &MixedSolution,
    coarse_sol: &CoarseSolution,
    label: &str,
) -> CheckResult {
    CheckResult::at_most(
        format!("coarse Galerkin residual ({label})"),
        coarse_galerkin_residual(fine, off, fine_sol, coarse_sol),
        TOL_GALERKIN,
        String::new(),
    )
}

/// Fine-solver convergence against the manufactured divergence-free flow on
/// meshes with h in {1/8, 1/16, 1/32}.
pub fn check_manufactured_rates() -> Result<Vec<CheckResult>> {
    let mut l2 = Vec::new();
    let mut h1 = Vec::new();
    for (nc, r) in [(2usize, 4usize), (4, 4), (8, 4)] {
        let mesh = NestedMesh::build(nc, r)?;
        let field = PermeabilityField::uniform(&mesh, 1.0)?;
        let fine = FineSystem::build(&mesh, &field)?;
        let load = fem::assemble_load(&mesh, &|x, y| manufactured::source(x, y));
        let sol = fine.solve(Some(&load), [0.0, 0.0])?;
        l2.push(fem::velocity_l2_error_vs(&mesh, &sol.velocity, &|x, y| {
            manufactured::velocity(x, y)
        }));
        h1.push(fem::velocity_h1_error_vs(&mesh, &sol.velocity, &|x, y| {
            manufactured::velocity_grad(x, y)
        }));
    }
    let min_rate = |e: &[f64]| {
        e.windows(2).map(|w| (w[0] / w[1]).log2()).fold(f64::INFINITY, f64::min)
    };
    let fmt = |e: &[f64]| {
        e.iter().map(|x| format!("{x:.3e}")).collect::<Vec<_>>().join(" -> ")
    };
    Ok(vec![
        CheckResult::at_least(
            "manufactured velocity L2 rate",
            min_rate(&l2),
            RATE_L2_MIN,
            format!("errors {}", fmt(&l2)),
        ),
        CheckResult::at_least(
            "manufactured velocity H1 rate",
            min_rate(&h1),
            RATE_H1_MIN,
            format!("errors {}", fmt(&h1)),
        ),
    ])
}

/// One coarse run of an error sweep.
pub struct SweepEntry {
    pub request: SpaceRequest,
    pub n_c: usize,
    /// Weighted relative velocity errors against the fine solution.
    pub l2_kappa: f64,
    pub h1_kappa: f64,
    pub coarse_kkt_residual: f64,
    pub coarse_galerkin_residual: f64,
    pub solution: CoarseSolution,
}

/// Runs every requested coarse space against the given fine solution and
/// reports weighted errors. Shared by the run and check pipelines.
pub fn error_sweep(
    fine: &FineSystem,
    field: &PermeabilityField,
    fine_sol: &MixedSolution,
    requests: &[SpaceRequest],
    g: [f64; 2],
    load: Option<&[f64]>,
) -> Result<(Vec<SweepEntry>, Vec<LocalReport>)> {
    let mesh = &fine.mesh;
    let blocks = block_solvers(mesh, field)?;
    let pou = build_pou(mesh, field, &blocks)?;
    let (spaces, reports) = build_offline_sweep(mesh, field, &pou, &blocks, requests, TAU_FILTER)?;
    let weights = ErrorWeights::new(mesh, field)?;
    let mut entries = Vec::with_capacity(spaces.len());
    for off in &spaces {
        let cs = coarse_space(fine, off)?;
        let sol = solve_coarse(fine, off, &cs, load, g)?;
        let (l2_kappa, h1_kappa) = weights
            .relative_errors(&fine_sol.velocity, &sol.velocity)
            .unwrap_or((f64::NAN, f64::NAN));
        entries.push(SweepEntry {
            request: off.request,
            n_c: off.n_c,
            l2_kappa,
            h1_kappa,
            coarse_kkt_residual: sol.kkt_residual,
            coarse_galerkin_residual: coarse_galerkin_residual(fine, off, fine_sol, &sol),
            solution: sol,
        });
    }
    Ok((entries, reports))
}

/// The default threshold sweep plus a trailing full-snapshot space.
pub fn default_requests(variant: SpectralVariant) -> Vec<SpaceRequest> {
    LAMBDA_SWEEP
        .iter()
        .map(|&t| SpaceRequest { policy: SelectionPolicy::ThresholdGe(t), variant })
        .chain(std::iter::once(SpaceRequest {
            policy: SelectionPolicy::ThresholdGe(0.0),
            variant,
        }))
        .collect()
}

/// Error-decay trend over the default threshold sweep for one field:
/// h1_kappa non-increasing, the final threshold at most half the first, and
/// the full snapshot at least as good as every thresholded run.
pub fn check_error_decay(
    mesh: &NestedMesh,
    field: &PermeabilityField,
    variant: SpectralVariant,
) -> Result<(Vec<CheckResult>, Vec<SweepEntry>)> {
    let fine = FineSystem::build(mesh, field)?;
    let fine_sol = fine.solve(None, [1.0, 0.0])?;
    let requests = default_requests(variant);
    let (entries, _) = error_sweep(&fine, field, &fine_sol, &requests, [1.0, 0.0], None)?;
    let swept = &entries[..LAMBDA_SWEEP.len()];
    let full = &entries[LAMBDA_SWEEP.len()];
    let worst_increase = swept
        .windows(2)
        .map(|w| w[1].h1_kappa - w[0].h1_kappa)
        .fold(f64::NEG_INFINITY, f64::max);
    let detail: Vec<String> = entries
        .iter()
        .map(|e| format!("dim {}: h1_kappa {:.2}%", e.n_c, 100.0 * e.h1_kappa))
        .collect();
    let detail = detail.join("; ");
    let checks = vec![
        CheckResult::at_most(
            "error decay monotone (h1_kappa increase)",
            worst_increase,
            0.0,
            detail.clone(),
        ),
        CheckResult::at_most(
            "error decay final/first",
            swept.last().unwrap().h1_kappa / swept[0].h1_kappa,
            0.5,
            detail.clone(),
        ),
        CheckResult::at_most(
            "full snapshot at least as accurate",
            full.h1_kappa
                - swept.iter().map(|e| e.h1_kappa).fold(f64::INFINITY, f64::min),
            0.0,
            detail,
        ),
    ];
    Ok((checks, entries))
}

/// Clones a space with one basis coefficient nudged, breaking the blockwise
/// divergence structure. Negative control for the containment check.
pub fn corrupt_for_negative_control(off: &OfflineSpace) -> Result<OfflineSpace> {
    let mut trips: Vec<(usize, usize, f64)> = Vec::new();
    for j in 0..off.r0.ncols() {
        for (&i, &v) in off.r0.row_idx_of_col_raw(j).iter().zip(off.r0.val_of_col(j)) {
            trips.push((i, j, v));
        }
    }
    if let Some(first) = trips.first_mut() {
        first.2 += 1e-3;
    }
    let r0 = sparse_from_triplets(off.n_c, off.n_vel, &trips)?;
    for t in &mut trips {
        std::mem::swap(&mut t.0, &mut t.1);
    }
    let r0t = sparse_from_triplets(off.n_vel, off.n_c, &trips)?;
    Ok(OfflineSpace {
        request: off.request,
        n_c: off.n_c,
        n_vel: off.n_vel,
        r0,
        r0t,
        member_ranges: off.member_ranges.clone(),
    })
}
