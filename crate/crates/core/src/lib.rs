//! Generalized multiscale finite elements for the 2D Brinkman equation
//!
//! Solves `grad p - lap u + kinv u = f`, `div u = 0` on the unit square with a
//! per-cell permeability field `kinv` of arbitrarily high contrast. The fine
//! discretization is P2 velocity / P0 pressure on a structured triangulation
//! nested inside a coarse block grid. Coarse velocity spaces are built from
//! constrained local Brinkman extensions of skeleton data, filtered snapshot
//! spaces, and local spectral mode selection; coarse pressures are constant per
//! block. The coarse divergence of every basis function is constant per block,
//! so the coarse saddle problem inherits a divergence-conforming structure.
//!
//! Modules follow the pipeline order: [`mesh`] -> [`field`] -> [`fem`] /
//! [`solve`] -> [`extension`] -> [`gmsfem`], with [`checks`] bundling the
//! numerical invariant suite the CLI and the acceptance tests share.

pub mod checks;
pub mod error;
pub mod extension;
pub mod fem;
pub mod field;
pub mod gmsfem;
pub mod linalg;
pub mod mesh;
pub mod quad;
pub mod solve;

pub use error::CoreError;
pub use field::{FieldSpec, PermeabilityField, Preset};
pub use mesh::{CoarseNeighborhood, NestedMesh, SkeletonBasis, SkeletonFunction};
pub use solve::{FineSystem, MixedSolution};
