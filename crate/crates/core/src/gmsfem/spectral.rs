//! Local spectral decomposition of a snapshot space and mode selection.

use faer::Mat;

use crate::error::Result;
use crate::fem::{project_form, spectral_elements_chi, spectral_elements_weighted, ElementPair};
use crate::field::PermeabilityField;
use crate::gmsfem::pou::PartitionMember;
use crate::gmsfem::snapshots::SnapshotSpace;
use crate::linalg::generalized_eigen;
use crate::mesh::NestedMesh;

/// Relative cutoff below which eigenvalues count as zero (constant modes).
/// The constants land at roundoff level (~1e-16 of the top eigenvalue in
/// both variants) while genuine modes stay above ~1e-4 of it, so a relative
/// cutoff separates them regardless of the variant's absolute scale.
const ZERO_MODE_REL_TOL: f64 = 1e-8;

/// Which weight pair drives the local eigenproblem.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpectralVariant {
    /// Stiffness and mass both carry the inverse of the resistance field.
    Numerics,
    /// Partition-function weights: `chi^2` on the stiffness against
    /// `kinv^2 + M |grad chi|^2` on the mass plus `M chi^2` on div-div,
    /// with `chi` the member's combined scalar weight.
    Analysis,
}

impl SpectralVariant {
    pub fn name(self) -> &'static str {
        match self {
            SpectralVariant::Numerics => "numerics",
            SpectralVariant::Analysis => "analysis",
        }
    }
}

#[derive(Debug, Clone)]
pub struct LocalEigen {
    /// Ascending eigenvalues.
    pub eigenvalues: Vec<f64>,
    /// S-orthonormal eigenvectors in snapshot-basis coordinates.
    pub vectors: Mat<f64>,
    /// Leading numerically zero modes (the two constants).
    pub n_zero: usize,
}

pub fn local_eigenproblem(
    mesh: &NestedMesh,
    field: &PermeabilityField,
    snap: &SnapshotSpace,
    member: &PartitionMember,
    variant: SpectralVariant,
) -> Result<LocalEigen> {
    let el = ElementPair::new(mesh);
    let r = member.hood.cell_rect;
    let context =
        format!("{} eigenproblem over cells [{},{})x[{},{})", variant.name(), r.i0, r.i1, r.j0, r.j1);
    let (a, s) = match variant {
        SpectralVariant::Numerics => {
            let (a_form, s_form) = spectral_elements_weighted(mesh, field, &el);
            (
                project_form(mesh, &snap.dom, &snap.basis, &*a_form),
                project_form(mesh, &snap.dom, &snap.basis, &*s_form),
            )
        }
        SpectralVariant::Analysis => {
            let mut chi = vec![0.0; mesh.n_scalar_nodes()];
            for (k, &node) in member.dom.scalar_nodes.iter().enumerate() {
                chi[node] = member.chi_x[k] + member.chi_y[k];
            }
            let (a_form, s_form) = spectral_elements_chi(mesh, field, &chi, field.m_const());
            (
                project_form(mesh, &snap.dom, &snap.basis, &*a_form),
                project_form(mesh, &snap.dom, &snap.basis, &*s_form),
            )
        }
    };
    let (eigenvalues, vectors) = generalized_eigen(&a, &s, &context)?;
    let cutoff = ZERO_MODE_REL_TOL * eigenvalues.last().copied().unwrap_or(0.0).max(0.0);
    let n_zero = eigenvalues.iter().take_while(|&&l| l <= cutoff).count();
    Ok(LocalEigen { eigenvalues, vectors, n_zero })
}

/// How many of the ascending local modes enter the offline space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SelectionPolicy {
    /// Keep every mode whose eigenvalue is at or above the threshold, plus
    /// the zero modes (the constants, always kept). Since the eigenvalues
    /// ascend, the kept set is the zero prefix together with the trailing
    /// tail `lambda_k >= t`; lowering the threshold admits more of the
    /// small-eigenvalue family, and zero keeps the whole snapshot space.
    ThresholdGe(f64),
    /// Keep the given number of smallest-eigenvalue modes, never fewer than
    /// the zero modes.
    Smallest(usize),
}

impl SelectionPolicy {
    pub fn kind_name(self) -> &'static str {
        match self {
            SelectionPolicy::ThresholdGe(_) => "threshold-ge",
            SelectionPolicy::Smallest(_) => "smallest",
        }
    }
}

/// Indices (ascending) of the modes the policy keeps.
pub fn select_modes(eig: &LocalEigen, policy: SelectionPolicy) -> Vec<usize> {
    let n = eig.eigenvalues.len();
    match policy {
        SelectionPolicy::ThresholdGe(threshold) => (0..n)
            .filter(|&k| k < eig.n_zero || eig.eigenvalues[k] >= threshold)
            .collect(),
        SelectionPolicy::Smallest(count) => (0..n.min(count.max(eig.n_zero))).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gmsfem::pou::build_pou;
    use crate::gmsfem::snapshots::build_snapshots;
    use crate::gmsfem::block_solvers;

    fn setup() -> (NestedMesh, PermeabilityField, SnapshotSpace, PartitionMember) {
        let mesh = NestedMesh::build(2, 2).unwrap();
        let n = mesh.n_fine;
        let vals: Vec<f64> = (0..n * n)
            .map(|k| if (k % n).abs_diff(k / n) == 1 { 1e4 } else { 1.0 })
            .collect();
        let field = PermeabilityField::from_values(&mesh, vals).unwrap();
        let blocks = block_solvers(&mesh, &field).unwrap();
        let pou = build_pou(&mesh, &field, &blocks).unwrap();
        let member = pou
            .members
            .iter()
            .find(|m| matches!(m.hood.kind, crate::mesh::NeighborhoodKind::Vertex))
            .unwrap()
            .clone();
        let snap = build_snapshots(&mesh, &field, &member.hood, 1e-10).unwrap();
        (mesh, field, snap, member)
    }

    #[test]
    fn both_variants_have_exactly_two_zero_modes() {
        let (mesh, field, snap, member) = setup();
        for variant in [SpectralVariant::Numerics, SpectralVariant::Analysis] {
            let eig = local_eigenproblem(&mesh, &field, &snap, &member, variant).unwrap();
            assert_eq!(eig.n_zero, 2, "{}", variant.name());
            let lmax = eig.eigenvalues.last().unwrap().max(1.0);
            for &l in &eig.eigenvalues {
                assert!(l > -1e-10 * lmax, "negative eigenvalue {l} ({})", variant.name());
            }
            for w in eig.eigenvalues.windows(2) {
                assert!(w[0] <= w[1] + 1e-12 * lmax);
            }
        }
    }

    #[test]
    fn eigenvectors_are_orthonormal_in_the_mass_metric() {
        let (mesh, field, snap, member) = setup();
        let el = ElementPair::new(&mesh);
        let (_, s_form) = spectral_elements_weighted(&mesh, &field, &el);
        let s = project_form(&mesh, &snap.dom, &snap.basis, &*s_form);
        let eig =
            local_eigenproblem(&mesh, &field, &snap, &member, SpectralVariant::Numerics).unwrap();
        let gram = eig.vectors.transpose() * &s * &eig.vectors;
        for i in 0..gram.nrows() {
            for j in 0..gram.ncols() {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((gram[(i, j)] - want).abs() < 1e-8, "({i},{j}) = {}", gram[(i, j)]);
            }
        }
    }

    #[test]
    fn zero_threshold_keeps_the_whole_snapshot_space() {
        let (mesh, field, snap, member) = setup();
        let eig =
            local_eigenproblem(&mesh, &field, &snap, &member, SpectralVariant::Numerics).unwrap();
        let all = select_modes(&eig, SelectionPolicy::ThresholdGe(0.0));
        assert_eq!(all.len(), eig.eigenvalues.len());
        assert_eq!(all, (0..eig.eigenvalues.len()).collect::<Vec<_>>());
    }

    #[test]
    fn huge_threshold_keeps_only_the_zero_modes() {
        let (mesh, field, snap, member) = setup();
        let eig =
            local_eigenproblem(&mesh, &field, &snap, &member, SpectralVariant::Numerics).unwrap();
        let sel = select_modes(&eig, SelectionPolicy::ThresholdGe(f64::INFINITY));
        assert_eq!(sel, vec![0, 1]);
    }

    #[test]
    fn smallest_policy_clamps_to_zero_modes_and_dimension() {
        let (mesh, field, snap, member) = setup();
        let eig =
            local_eigenproblem(&mesh, &field, &snap, &member, SpectralVariant::Numerics).unwrap();
        let n = eig.eigenvalues.len();
        assert_eq!(select_modes(&eig, SelectionPolicy::Smallest(1)).len(), 2);
        assert_eq!(select_modes(&eig, SelectionPolicy::Smallest(4)), vec![0, 1, 2, 3]);
        assert_eq!(select_modes(&eig, SelectionPolicy::Smallest(usize::MAX)).len(), n);
    }

    /// Larger thresholds can only shrink the selection, and every selection
    /// contains the zero modes.
    #[test]
    fn threshold_selections_are_nested() {
        let (mesh, field, snap, member) = setup();
        let eig =
            local_eigenproblem(&mesh, &field, &snap, &member, SpectralVariant::Analysis).unwrap();
        let mut prev = select_modes(&eig, SelectionPolicy::ThresholdGe(0.0)).len();
        for t in [1.0 / 10.0, 1.0 / 7.0, 1.0 / 4.0, 1.0 / 3.0] {
            let sel = select_modes(&eig, SelectionPolicy::ThresholdGe(t));
            assert!(sel.len() <= prev, "threshold {t}");
            assert!(sel.starts_with(&[0, 1]));
            prev = sel.len();
        }
    }
}
