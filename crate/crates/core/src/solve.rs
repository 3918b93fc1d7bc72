//! Global fine-grid mixed solve.
//!
//! The saddle problem `a(u,v) + b(v,p) = l(v)`, `b(u,q) = 0` is solved with a
//! constant Dirichlet lifting `u = g + u0`, `u0 = 0` on the boundary, and the
//! pressure mean pinned by a single Lagrange multiplier row. The assembled
//! operator is the bordered symmetric system
//!
//! ```text
//! [ A_II  B_I^T  0 ] [u0_I]   [F_I - (A g)_I]
//! [ B_I   0      e ] [ p  ] = [   -(B g)    ]
//! [ 0     e^T    0 ] [ xi ]   [      0      ]
//! ```
//!
//! where `e` holds triangle areas. A compatible boundary (zero net flux)
//! makes the multiplier vanish at the solution.

use crate::error::Result;
use crate::fem::{self, ux, uy};
use crate::field::PermeabilityField;
use crate::linalg::{self, Sparse, SparseLu};
use crate::mesh::NestedMesh;

/// A velocity/pressure pair on the fine mesh.
#[derive(Debug, Clone)]
pub struct MixedSolution {
    /// Full vector-P2 coefficient vector (boundary values included).
    pub velocity: Vec<f64>,
    /// Per-triangle pressure.
    pub pressure: Vec<f64>,
    /// Zero-mean multiplier (vanishes for compatible boundary data).
    pub multiplier: f64,
    /// Relative residual of the constrained system at the solution.
    pub kkt_residual: f64,
}

/// Assembled fine operators plus constraint bookkeeping, reusable across
/// right-hand sides and by the coarse pipeline.
pub struct FineSystem {
    pub mesh: NestedMesh,
    /// Momentum operator `<grad u, grad v> + <kinv u, v>`.
    pub a: Sparse,
    /// Divergence operator, one row per triangle.
    pub b: Sparse,
    /// Its transpose (kept explicitly for cheap `B^T p` products).
    pub bt: Sparse,
    /// Div-div operator `<div u, div v>`.
    pub dd: Sparse,
    pub m_const: f64,
    /// Per scalar node: true when the node lies on the domain boundary.
    pub boundary_scalar: Vec<bool>,
    /// Free (interior) velocity dofs, ascending.
    pub interior_vel: Vec<usize>,
    /// Inverse map: velocity dof -> position in `interior_vel`.
    vel_to_interior: Vec<usize>,
    /// Raw momentum triplets (reused for constrained assemblies).
    a_triplets: Vec<(usize, usize, f64)>,
    /// Raw divergence triplets.
    b_triplets: Vec<(usize, usize, f64)>,
}

const NOT_INTERIOR: usize = usize::MAX;

impl FineSystem {
    pub fn build(mesh: &NestedMesh, field: &PermeabilityField) -> Result<Self> {
        field.check_matches(mesh)?;
        let n_vel = mesh.n_velocity_dofs();
        let n_tri = mesh.n_triangles();
        let a_triplets = fem::brinkman_form_triplets(mesh, field);
        let b_triplets = fem::divergence_triplets(mesh);
        let a = linalg::sparse_from_triplets(n_vel, n_vel, &a_triplets)?;
        let b = linalg::sparse_from_triplets(n_tri, n_vel, &b_triplets)?;
        let bt_triplets: Vec<(usize, usize, f64)> =
            b_triplets.iter().map(|&(r, c, v)| (c, r, v)).collect();
        let bt = linalg::sparse_from_triplets(n_vel, n_tri, &bt_triplets)?;
        let dd = linalg::sparse_from_triplets(n_vel, n_vel, &fem::div_div_triplets(mesh))?;

        let boundary_scalar: Vec<bool> =
            (0..mesh.n_scalar_nodes()).map(|s| mesh.node_on_domain_boundary(s)).collect();
        let mut interior_vel = Vec::with_capacity(n_vel);
        let mut vel_to_interior = vec![NOT_INTERIOR; n_vel];
        for s in 0..mesh.n_scalar_nodes() {
            if !boundary_scalar[s] {
                for dof in [ux(s), uy(s)] {
                    vel_to_interior[dof] = interior_vel.len();
                    interior_vel.push(dof);
                }
            }
        }
        Ok(Self {
            mesh: mesh.clone(),
            a,
            b,
            bt,
            dd,
            m_const: field.m_const(),
            boundary_scalar,
            interior_vel,
            vel_to_interior,
            a_triplets,
            b_triplets,
        })
    }

    pub fn n_velocity(&self) -> usize {
        self.mesh.n_velocity_dofs()
    }

    pub fn n_pressure(&self) -> usize {
        self.mesh.n_triangles()
    }

    /// The constant-lifting velocity vector (value `g` at every scalar node).
    pub fn lifting(&self, g: [f64; 2]) -> Vec<f64> {
        let mut u = vec![0.0; self.n_velocity()];
        for s in 0..self.mesh.n_scalar_nodes() {
            u[ux(s)] = g[0];
            u[uy(s)] = g[1];
        }
        u
    }

    /// Contrast-weighted velocity norm of a fine coefficient vector.
    pub fn tnorm(&self, u: &[f64]) -> f64 {
        fem::tnorm(&self.a, &self.dd, self.m_const, u)
    }

    /// Contrast-weighted pressure norm.
    pub fn snorm(&self, p: &[f64]) -> f64 {
        fem::snorm(&self.mesh, self.m_const, p)
    }

    /// Solves with constant boundary velocity `g` and optional load vector
    /// (`None` means `f = 0`).
    pub fn solve(&self, load: Option<&[f64]>, g: [f64; 2]) -> Result<MixedSolution> {
        let n_i = self.interior_vel.len();
        let n_p = self.n_pressure();
        let dim = n_i + n_p + 1;
        let area = self.mesh.tri_area();

        let mut trips: Vec<(usize, usize, f64)> = Vec::with_capacity(
            self.a_triplets.len() + 2 * self.b_triplets.len() + 2 * n_p,
        );
        for &(r, c, v) in &self.a_triplets {
            let (ri, ci) = (self.vel_to_interior[r], self.vel_to_interior[c]);
            if ri != NOT_INTERIOR && ci != NOT_INTERIOR {
                trips.push((ri, ci, v));
            }
        }
        for &(t, c, v) in &self.b_triplets {
            let ci = self.vel_to_interior[c];
            if ci != NOT_INTERIOR {
                trips.push((n_i + t, ci, v));
                trips.push((ci, n_i + t, v));
            }
        }
        for t in 0..n_p {
            trips.push((n_i + t, dim - 1, area));
            trips.push((dim - 1, n_i + t, area));
        }
        let kkt = linalg::sparse_from_triplets(dim, dim, &trips)?;

        let u_l = self.lifting(g);
        let a_ul = linalg::spmv(&self.a, &u_l);
        let b_ul = linalg::spmv(&self.b, &u_l);
        let mut rhs = vec![0.0; dim];
        for (k, &dof) in self.interior_vel.iter().enumerate() {
            rhs[k] = load.map_or(0.0, |f| f[dof]) - a_ul[dof];
        }
        for t in 0..n_p {
            rhs[n_i + t] = -b_ul[t];
        }

        let lu = SparseLu::factor(&kkt, "fine saddle system")?;
        let x = lu.solve_slice(&rhs);
        let kkt_residual = linalg::relative_residual(&kkt, &x, &rhs);

        let mut velocity = u_l;
        for (k, &dof) in self.interior_vel.iter().enumerate() {
            velocity[dof] += x[k];
        }
        let pressure = x[n_i..n_i + n_p].to_vec();
        Ok(MixedSolution { velocity, pressure, multiplier: x[dim - 1], kkt_residual })
    }

    /// Relative momentum residual `A u + B^T p - F` over interior dofs
    /// (the discrete Galerkin-orthogonality witness).
    pub fn galerkin_residual(&self, sol: &MixedSolution, load: Option<&[f64]>) -> f64 {
        let au = linalg::spmv(&self.a, &sol.velocity);
        let btp = linalg::spmv(&self.bt, &sol.pressure);
        let mut r2 = 0.0;
        let mut scale2 = 0.0;
        for &dof in &self.interior_vel {
            let f = load.map_or(0.0, |f| f[dof]);
            let r = au[dof] + btp[dof] - f;
            r2 += r * r;
            scale2 += au[dof] * au[dof] + btp[dof] * btp[dof] + f * f;
        }
        (r2 / scale2.max(1e-300)).sqrt()
    }

    /// Signed mean of the pressure, `sum |K| p_K`.
    pub fn pressure_mean(&self, p: &[f64]) -> f64 {
        self.mesh.tri_area() * p.iter().sum::<f64>()
    }

    /// Per-triangle mean divergence `(B u)_K / |K|`, max magnitude.
    pub fn max_mean_divergence(&self, u: &[f64]) -> f64 {
        let bu = linalg::spmv(&self.b, u);
        let area = self.mesh.tri_area();
        bu.iter().fold(0.0f64, |m, v| m.max((v / area).abs()))
    }
}

/// Divergence-free polynomial reference problem with kinv = 1 used for
/// convergence studies: `u = curl(a(x) b(y))`, `p = x - 1/2`, homogeneous
/// boundary velocity, with `a(t) = b(t) = t^2 (1 - t)^2`.
pub mod manufactured {
    fn poly(t: f64) -> f64 {
        t * t * (1.0 - t) * (1.0 - t)
    }
    fn d1(t: f64) -> f64 {
        2.0 * t - 6.0 * t * t + 4.0 * t * t * t
    }
    fn d2(t: f64) -> f64 {
        2.0 - 12.0 * t + 12.0 * t * t
    }
    fn d3(t: f64) -> f64 {
        -12.0 + 24.0 * t
    }

    pub fn velocity(x: f64, y: f64) -> [f64; 2] {
        [poly(x) * d1(y), -d1(x) * poly(y)]
    }

    /// Jacobian rows: `[grad u_x, grad u_y]`.
    pub fn velocity_grad(x: f64, y: f64) -> [[f64; 2]; 2] {
        [
            [d1(x) * d1(y), poly(x) * d2(y)],
            [-d2(x) * poly(y), -d1(x) * d1(y)],
        ]
    }

    pub fn pressure(x: f64) -> f64 {
        x - 0.5
    }

    /// `f = grad p - lap u + u` (momentum balance with kinv = 1).
    pub fn source(x: f64, y: f64) -> [f64; 2] {
        let u = velocity(x, y);
        let lap_ux = d2(x) * d1(y) + poly(x) * d3(y);
        let lap_uy = -(d3(x) * poly(y) + d1(x) * d2(y));
        [1.0 - lap_ux + u[0], -lap_uy + u[1]]
    }
}
