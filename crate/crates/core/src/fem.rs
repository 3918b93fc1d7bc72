//! P2/P0 mixed finite element machinery on the nested mesh.
//!
//! Velocity lives in vector P2 (two interleaved components per scalar node),
//! pressure in P0 (one value per fine triangle). All affine maps come in two
//! flavors only (the lower and upper triangle of a fine square), so physical
//! gradients are reference gradients times a fixed per-shape linear map.
//!
//! The degree-4 rule integrates every assembled bilinear form exactly for
//! per-cell-constant coefficients; the degree-6 rule handles callable loads,
//! error integrands against analytic solutions, and spatially varying scalar
//! weights built from P2 fields.

use crate::field::PermeabilityField;
use crate::mesh::{CellRect, NestedMesh, TriShape};
use crate::quad::{rule_deg4, rule_deg6};
use faer::Mat;

/// Velocity dof of the x-component at a scalar node.
#[inline]
pub fn ux(s: usize) -> usize {
    2 * s
}

/// Velocity dof of the y-component at a scalar node.
#[inline]
pub fn uy(s: usize) -> usize {
    2 * s + 1
}

/// P2 basis values at a reference point, ordered `[v0, v1, v2, m01, m12, m20]`.
pub fn p2_values(x: f64, y: f64) -> [f64; 6] {
    let l0 = 1.0 - x - y;
    let (l1, l2) = (x, y);
    [
        l0 * (2.0 * l0 - 1.0),
        l1 * (2.0 * l1 - 1.0),
        l2 * (2.0 * l2 - 1.0),
        4.0 * l0 * l1,
        4.0 * l1 * l2,
        4.0 * l2 * l0,
    ]
}

/// P2 reference gradients at a reference point.
pub fn p2_ref_grads(x: f64, y: f64) -> [[f64; 2]; 6] {
    let l0 = 1.0 - x - y;
    let (l1, l2) = (x, y);
    // grad l0 = (-1,-1), grad l1 = (1,0), grad l2 = (0,1).
    let d0 = 4.0 * l0 - 1.0;
    let d1 = 4.0 * l1 - 1.0;
    let d2 = 4.0 * l2 - 1.0;
    [
        [-d0, -d0],
        [d1, 0.0],
        [0.0, d2],
        [4.0 * (l0 - l1), -4.0 * l1],
        [4.0 * l2, 4.0 * l1],
        [-4.0 * l2, 4.0 * (l0 - l2)],
    ]
}

/// Physical gradient from a reference gradient for the given triangle shape.
#[inline]
pub fn phys_grad(shape: TriShape, h: f64, g: [f64; 2]) -> [f64; 2] {
    // Lower: J columns (h,0),(h,h); upper: (h,h),(0,h). Apply J^{-T}.
    match shape {
        TriShape::Lower => [g[0] / h, (g[1] - g[0]) / h],
        TriShape::Upper => [(g[0] - g[1]) / h, g[1] / h],
    }
}

/// Physical coordinates of a reference point inside a triangle.
pub fn phys_point(mesh: &NestedMesh, t: usize, x: f64, y: f64) -> (f64, f64) {
    let vc = mesh.tri_vertex_coords(t);
    let l0 = 1.0 - x - y;
    (
        l0 * vc[0].0 + x * vc[1].0 + y * vc[2].0,
        l0 * vc[0].1 + x * vc[1].1 + y * vc[2].1,
    )
}

/// Per-shape scalar element matrices at mesh size h.
#[derive(Debug, Clone)]
pub struct ElementMatrices {
    /// `int grad N_i . grad N_j` (scale h^0).
    pub stiff: [[f64; 6]; 6],
    /// `int N_i N_j` (scale h^2).
    pub mass: [[f64; 6]; 6],
    /// `int dN_i/dc dN_j/dc'` indexed `[c][c'][i][j]` (div-div blocks).
    pub grad_outer: [[[[f64; 6]; 6]; 2]; 2],
    /// `int dN_i/dx` and `int dN_i/dy` (scale h^1).
    pub int_dx: [f64; 6],
    pub int_dy: [f64; 6],
}

/// Computes the exact scalar element matrices for one triangle shape.
pub fn element_matrices(shape: TriShape, h: f64) -> ElementMatrices {
    let area = 0.5 * h * h;
    let mut stiff = [[0.0; 6]; 6];
    let mut mass = [[0.0; 6]; 6];
    let mut grad_outer = [[[[0.0; 6]; 6]; 2]; 2];
    let mut int_dx = [0.0; 6];
    let mut int_dy = [0.0; 6];
    for q in rule_deg4() {
        let w = q.w * area;
        let vals = p2_values(q.x, q.y);
        let grads = p2_ref_grads(q.x, q.y).map(|g| phys_grad(shape, h, g));
        for i in 0..6 {
            int_dx[i] += w * grads[i][0];
            int_dy[i] += w * grads[i][1];
            for j in 0..6 {
                stiff[i][j] += w * (grads[i][0] * grads[j][0] + grads[i][1] * grads[j][1]);
                mass[i][j] += w * vals[i] * vals[j];
                for c in 0..2 {
                    for d in 0..2 {
                        grad_outer[c][d][i][j] += w * grads[i][c] * grads[j][d];
                    }
                }
            }
        }
    }
    ElementMatrices { stiff, mass, grad_outer, int_dx, int_dy }
}

/// The two shape-specific element matrices of a mesh.
pub struct ElementPair {
    pub lower: ElementMatrices,
    pub upper: ElementMatrices,
}

impl ElementPair {
    pub fn new(mesh: &NestedMesh) -> Self {
        Self {
            lower: element_matrices(TriShape::Lower, mesh.h()),
            upper: element_matrices(TriShape::Upper, mesh.h()),
        }
    }

    #[inline]
    pub fn of(&self, shape: TriShape) -> &ElementMatrices {
        match shape {
            TriShape::Lower => &self.lower,
            TriShape::Upper => &self.upper,
        }
    }
}

// ----- global sparse assembly ---------------------------------------------

/// Triplet accumulator for the vector-valued forms.
fn push_vector_block(
    trips: &mut Vec<(usize, usize, f64)>,
    nodes: &[usize; 6],
    scalar: &[[f64; 6]; 6],
    weight: f64,
) {
    // Component-diagonal block: same scalar matrix for x-x and y-y couplings.
    for i in 0..6 {
        for j in 0..6 {
            let v = weight * scalar[i][j];
            if v != 0.0 {
                trips.push((ux(nodes[i]), ux(nodes[j]), v));
                trips.push((uy(nodes[i]), uy(nodes[j]), v));
            }
        }
    }
}

/// Sparse triplets of the velocity bilinear form
/// `int grad u : grad v + int kinv u . v` (the momentum operator).
pub fn brinkman_form_triplets(
    mesh: &NestedMesh,
    field: &PermeabilityField,
) -> Vec<(usize, usize, f64)> {
    let el = ElementPair::new(mesh);
    let mut trips = Vec::with_capacity(mesh.n_triangles() * 144);
    for t in 0..mesh.n_triangles() {
        let (i, j, shape) = mesh.tri_cell(t);
        let nodes = mesh.tri_scalar_nodes(t);
        let kinv = field.cell_value(i, j);
        let em = el.of(shape);
        for a in 0..6 {
            for b in 0..6 {
                let v = em.stiff[a][b] + kinv * em.mass[a][b];
                trips.push((ux(nodes[a]), ux(nodes[b]), v));
                trips.push((uy(nodes[a]), uy(nodes[b]), v));
            }
        }
    }
    trips
}

/// Sparse triplets of a cell-weighted vector stiffness `int w grad u : grad v`.
pub fn weighted_stiffness_triplets(
    mesh: &NestedMesh,
    weight: &dyn Fn(usize, usize) -> f64,
) -> Vec<(usize, usize, f64)> {
    let el = ElementPair::new(mesh);
    let mut trips = Vec::with_capacity(mesh.n_triangles() * 72);
    for t in 0..mesh.n_triangles() {
        let (i, j, shape) = mesh.tri_cell(t);
        let nodes = mesh.tri_scalar_nodes(t);
        push_vector_block(&mut trips, &nodes, &el.of(shape).stiff, weight(i, j));
    }
    trips
}

/// Sparse triplets of a cell-weighted vector mass `int w u . v`.
pub fn weighted_mass_triplets(
    mesh: &NestedMesh,
    weight: &dyn Fn(usize, usize) -> f64,
) -> Vec<(usize, usize, f64)> {
    let el = ElementPair::new(mesh);
    let mut trips = Vec::with_capacity(mesh.n_triangles() * 72);
    for t in 0..mesh.n_triangles() {
        let (i, j, shape) = mesh.tri_cell(t);
        let nodes = mesh.tri_scalar_nodes(t);
        push_vector_block(&mut trips, &nodes, &el.of(shape).mass, weight(i, j));
    }
    trips
}

/// Sparse triplets of the divergence operator: row per triangle K, entry
/// `int_K div u` against each velocity dof.
pub fn divergence_triplets(mesh: &NestedMesh) -> Vec<(usize, usize, f64)> {
    let el = ElementPair::new(mesh);
    let mut trips = Vec::with_capacity(mesh.n_triangles() * 12);
    for t in 0..mesh.n_triangles() {
        let (_, _, shape) = mesh.tri_cell(t);
        let nodes = mesh.tri_scalar_nodes(t);
        let em = el.of(shape);
        for a in 0..6 {
            trips.push((t, ux(nodes[a]), em.int_dx[a]));
            trips.push((t, uy(nodes[a]), em.int_dy[a]));
        }
    }
    trips
}

/// Sparse triplets of the div-div form `int div u div v`.
pub fn div_div_triplets(mesh: &NestedMesh) -> Vec<(usize, usize, f64)> {
    let el = ElementPair::new(mesh);
    let mut trips = Vec::with_capacity(mesh.n_triangles() * 144);
    for t in 0..mesh.n_triangles() {
        let (_, _, shape) = mesh.tri_cell(t);
        let nodes = mesh.tri_scalar_nodes(t);
        let em = el.of(shape);
        for a in 0..6 {
            for b in 0..6 {
                // div(N_a e_c) = dN_a/dc, so the (c, d) block is grad_outer[c][d].
                trips.push((ux(nodes[a]), ux(nodes[b]), em.grad_outer[0][0][a][b]));
                trips.push((ux(nodes[a]), uy(nodes[b]), em.grad_outer[0][1][a][b]));
                trips.push((uy(nodes[a]), ux(nodes[b]), em.grad_outer[1][0][a][b]));
                trips.push((uy(nodes[a]), uy(nodes[b]), em.grad_outer[1][1][a][b]));
            }
        }
    }
    trips
}

/// Load vector `F[dof] = int f . (basis dof)` for a callable source
/// (degree-6 quadrature).
pub fn assemble_load(mesh: &NestedMesh, f: &dyn Fn(f64, f64) -> [f64; 2]) -> Vec<f64> {
    let mut load = vec![0.0; mesh.n_velocity_dofs()];
    let area = mesh.tri_area();
    for t in 0..mesh.n_triangles() {
        let nodes = mesh.tri_scalar_nodes(t);
        for q in rule_deg6() {
            let w = q.w * area;
            let (x, y) = phys_point(mesh, t, q.x, q.y);
            let fv = f(x, y);
            let vals = p2_values(q.x, q.y);
            for a in 0..6 {
                load[ux(nodes[a])] += w * fv[0] * vals[a];
                load[uy(nodes[a])] += w * fv[1] * vals[a];
            }
        }
    }
    load
}

// ----- local domains and dense projected forms -----------------------------

/// A set of fine triangles with a deterministic local scalar dof numbering
/// (ascending global id). Local velocity dofs interleave like global ones.
#[derive(Debug, Clone)]
pub struct LocalTris {
    pub tris: Vec<usize>,
    /// Sorted global scalar node ids.
    pub scalar_nodes: Vec<usize>,
}

impl LocalTris {
    pub fn from_tris(mesh: &NestedMesh, mut tris: Vec<usize>) -> Self {
        tris.sort_unstable();
        tris.dedup();
        let mut set = std::collections::BTreeSet::new();
        for &t in &tris {
            set.extend(mesh.tri_scalar_nodes(t));
        }
        Self { tris, scalar_nodes: set.into_iter().collect() }
    }

    pub fn from_cell_rect(mesh: &NestedMesh, rect: CellRect) -> Self {
        Self::from_tris(mesh, rect.tris(mesh))
    }

    /// Local index of a global scalar node, if present.
    #[inline]
    pub fn local_scalar(&self, s: usize) -> Option<usize> {
        self.scalar_nodes.binary_search(&s).ok()
    }

    pub fn n_velocity(&self) -> usize {
        2 * self.scalar_nodes.len()
    }

    /// Gathers a global velocity vector into local numbering.
    pub fn gather_velocity(&self, global: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_velocity());
        for &s in &self.scalar_nodes {
            out.push(global[ux(s)]);
            out.push(global[uy(s)]);
        }
        out
    }

    /// Scatter-adds a local velocity vector into a global one.
    pub fn scatter_add_velocity(&self, local: &[f64], global: &mut [f64]) {
        for (k, &s) in self.scalar_nodes.iter().enumerate() {
            global[ux(s)] += local[2 * k];
            global[uy(s)] += local[2 * k + 1];
        }
    }
}

/// Element contributions for a projected local quadratic form: for each
/// triangle produce a 12x12 matrix on the element's interleaved vector dofs.
pub type ElementForm<'a> = dyn Fn(usize) -> [[f64; 12]; 12] + 'a;

/// Projects a local bilinear form onto columns: returns `C^T Q C` where Q is
/// assembled triangle by triangle and `C` holds local velocity columns.
pub fn project_form(mesh: &NestedMesh, dom: &LocalTris, cols: &Mat<f64>, form: &ElementForm) -> Mat<f64> {
    let l = cols.ncols();
    debug_assert_eq!(cols.nrows(), dom.n_velocity());
    let mut out = Mat::<f64>::zeros(l, l);
    let mut gathered = Mat::<f64>::zeros(12, l);
    for &t in &dom.tris {
        let nodes = mesh.tri_scalar_nodes(t);
        let q = form(t);
        // Local element dof -> domain-local velocity dof.
        let mut idx = [0usize; 12];
        for a in 0..6 {
            let ls = dom.local_scalar(nodes[a]).expect("triangle node inside domain");
            idx[2 * a] = 2 * ls;
            idx[2 * a + 1] = 2 * ls + 1;
        }
        for a in 0..12 {
            for c in 0..l {
                gathered[(a, c)] = cols[(idx[a], c)];
            }
        }
        // out += gathered^T * q * gathered
        for m in 0..l {
            for a in 0..12 {
                let mut qa = 0.0;
                for b in 0..12 {
                    qa += q[b] [a] * gathered[(b, m)];
                }
                if qa != 0.0 {
                    for n in 0..l {
                        out[(m, n)] += qa * gathered[(a, n)];
                    }
                }
            }
        }
    }
    // Symmetrize away roundoff asymmetry from the accumulation order.
    for m in 0..l {
        for n in 0..m {
            let v = 0.5 * (out[(m, n)] + out[(n, m)]);
            out[(m, n)] = v;
            out[(n, m)] = v;
        }
    }
    out
}

/// Expands a 6x6 scalar element matrix into the component-diagonal 12x12
/// vector element matrix, scaled.
pub fn vector_block(scalar: &[[f64; 6]; 6], scale: f64) -> [[f64; 12]; 12] {
    let mut out = [[0.0; 12]; 12];
    for i in 0..6 {
        for j in 0..6 {
            let v = scale * scalar[i][j];
            out[2 * i][2 * j] = v;
            out[2 * i + 1][2 * j + 1] = v;
        }
    }
    out
}

/// Element matrices of the contrast-weighted spectral pair: stiffness and
/// mass both weighted by `kappa = 1 / kinv` (constant per fine cell).
pub fn spectral_elements_weighted<'a>(
    mesh: &'a NestedMesh,
    field: &'a PermeabilityField,
    el: &'a ElementPair,
) -> (Box<ElementForm<'a>>, Box<ElementForm<'a>>) {
    let a_form = move |t: usize| {
        let (i, j, shape) = mesh.tri_cell(t);
        let kappa = 1.0 / field.cell_value(i, j);
        vector_block(&el.of(shape).stiff, kappa)
    };
    let s_form = move |t: usize| {
        let (i, j, shape) = mesh.tri_cell(t);
        let kappa = 1.0 / field.cell_value(i, j);
        vector_block(&el.of(shape).mass, kappa)
    };
    (Box::new(a_form), Box::new(s_form))
}

/// Element matrix of the velocity energy `grad:grad + kinv u.v`, the same
/// form the flow extensions and the global system use.
pub fn energy_elements<'a>(
    mesh: &'a NestedMesh,
    field: &'a PermeabilityField,
    el: &'a ElementPair,
) -> Box<ElementForm<'a>> {
    Box::new(move |t: usize| {
        let (i, j, shape) = mesh.tri_cell(t);
        let kinv = field.cell_value(i, j);
        let pair = el.of(shape);
        let mut out = vector_block(&pair.stiff, 1.0);
        let mass = vector_block(&pair.mass, kinv);
        for a in 0..12 {
            for b in 0..12 {
                out[a][b] += mass[a][b];
            }
        }
        out
    })
}

/// Element matrices of the chi-weighted spectral pair used by the invariant
/// suite: A carries `chi^2` on the stiffness; S carries
/// `kinv^2 + M |grad chi|^2` on the mass plus `M chi^2` on div-div.
/// `chi` is a global scalar P2 coefficient vector; degree-6 quadrature is
/// exact for every term.
pub fn spectral_elements_chi<'a>(
    mesh: &'a NestedMesh,
    field: &'a PermeabilityField,
    chi: &'a [f64],
    m_const: f64,
) -> (Box<ElementForm<'a>>, Box<ElementForm<'a>>) {
    let eval = move |t: usize| -> ([[f64; 12]; 12], [[f64; 12]; 12]) {
        let (ci, cj, shape) = mesh.tri_cell(t);
        let kinv = field.cell_value(ci, cj);
        let kinv2 = kinv * kinv;
        let nodes = mesh.tri_scalar_nodes(t);
        let chi_loc: [f64; 6] = std::array::from_fn(|k| chi[nodes[k]]);
        let area = mesh.tri_area();
        let h = mesh.h();
        let mut a = [[0.0; 12]; 12];
        let mut s = [[0.0; 12]; 12];
        for q in rule_deg6() {
            let w = q.w * area;
            let vals = p2_values(q.x, q.y);
            let grads = p2_ref_grads(q.x, q.y).map(|g| phys_grad(shape, h, g));
            let mut chi_q = 0.0;
            let mut gchi = [0.0; 2];
            for k in 0..6 {
                chi_q += chi_loc[k] * vals[k];
                gchi[0] += chi_loc[k] * grads[k][0];
                gchi[1] += chi_loc[k] * grads[k][1];
            }
            let chi2 = chi_q * chi_q;
            let mass_w = kinv2 + m_const * (gchi[0] * gchi[0] + gchi[1] * gchi[1]);
            for i in 0..6 {
                for j in 0..6 {
                    let gg = grads[i][0] * grads[j][0] + grads[i][1] * grads[j][1];
                    let vv = vals[i] * vals[j];
                    let a_sc = w * chi2 * gg;
                    let s_sc = w * mass_w * vv;
                    for c in 0..2 {
                        a[2 * i + c][2 * j + c] += a_sc;
                        s[2 * i + c][2 * j + c] += s_sc;
                        for d in 0..2 {
                            // div(N_i e_c) = dN_i/dc.
                            s[2 * i + c][2 * j + d] +=
                                w * m_const * chi2 * grads[i][c] * grads[j][d];
                        }
                    }
                }
            }
        }
        (a, s)
    };
    let a_form = move |t: usize| eval(t).0;
    let s_form = move |t: usize| eval(t).1;
    (Box::new(a_form), Box::new(s_form))
}

// ----- norms and errors -----------------------------------------------------

/// `v^T Q w` for a sparse operator given by triplicate-free CSC storage.
pub fn quad_form(q: &faer::sparse::SparseColMat<usize, f64>, v: &[f64], w: &[f64]) -> f64 {
    let y = crate::linalg::spmv(q, w);
    v.iter().zip(&y).map(|(a, b)| a * b).sum()
}

/// Pressure L2 norm: pressures are constant per triangle of equal area.
pub fn pressure_l2(mesh: &NestedMesh, p: &[f64]) -> f64 {
    (mesh.tri_area() * p.iter().map(|x| x * x).sum::<f64>()).sqrt()
}

/// Contrast-weighted velocity norm:
/// `tnorm^2 = a(u,u) + M <div u, div u>`.
pub fn tnorm(
    a: &faer::sparse::SparseColMat<usize, f64>,
    dd: &faer::sparse::SparseColMat<usize, f64>,
    m_const: f64,
    u: &[f64],
) -> f64 {
    (quad_form(a, u, u) + m_const * quad_form(dd, u, u)).max(0.0).sqrt()
}

/// Contrast-weighted pressure norm `M^{-1/2} ||p||`.
pub fn snorm(mesh: &NestedMesh, m_const: f64, p: &[f64]) -> f64 {
    pressure_l2(mesh, p) / m_const.sqrt()
}

/// kinv-weighted relative velocity errors between a reference and an
/// approximation (L2-weighted and H1-seminorm-weighted).
pub struct ErrorWeights {
    pub mass_kinv: faer::sparse::SparseColMat<usize, f64>,
    pub stiff_kinv: faer::sparse::SparseColMat<usize, f64>,
}

impl ErrorWeights {
    pub fn new(mesh: &NestedMesh, field: &PermeabilityField) -> crate::error::Result<Self> {
        let n = mesh.n_velocity_dofs();
        let w = |i: usize, j: usize| field.cell_value(i, j);
        Ok(Self {
            mass_kinv: crate::linalg::sparse_from_triplets(n, n, &weighted_mass_triplets(mesh, &w))?,
            stiff_kinv: crate::linalg::sparse_from_triplets(
                n,
                n,
                &weighted_stiffness_triplets(mesh, &w),
            )?,
        })
    }

    /// Returns `(l2_kappa, h1_kappa)`; `None` when the reference vanishes.
    pub fn relative_errors(&self, u_ref: &[f64], u_approx: &[f64]) -> Option<(f64, f64)> {
        let diff: Vec<f64> = u_ref.iter().zip(u_approx).map(|(a, b)| a - b).collect();
        let l2_den = quad_form(&self.mass_kinv, u_ref, u_ref);
        let h1_den = quad_form(&self.stiff_kinv, u_ref, u_ref);
        if l2_den <= 0.0 || h1_den <= 0.0 {
            return None;
        }
        let l2 = (quad_form(&self.mass_kinv, &diff, &diff) / l2_den).max(0.0).sqrt();
        let h1 = (quad_form(&self.stiff_kinv, &diff, &diff) / h1_den).max(0.0).sqrt();
        Some((l2, h1))
    }
}

/// L2 error of a P2 velocity field against an analytic solution (degree-6).
pub fn velocity_l2_error_vs(
    mesh: &NestedMesh,
    u: &[f64],
    exact: &dyn Fn(f64, f64) -> [f64; 2],
) -> f64 {
    let area = mesh.tri_area();
    let mut err2 = 0.0;
    for t in 0..mesh.n_triangles() {
        let nodes = mesh.tri_scalar_nodes(t);
        for q in rule_deg6() {
            let w = q.w * area;
            let vals = p2_values(q.x, q.y);
            let mut uh = [0.0; 2];
            for a in 0..6 {
                uh[0] += u[ux(nodes[a])] * vals[a];
                uh[1] += u[uy(nodes[a])] * vals[a];
            }
            let (x, y) = phys_point(mesh, t, q.x, q.y);
            let ue = exact(x, y);
            err2 += w * ((uh[0] - ue[0]).powi(2) + (uh[1] - ue[1]).powi(2));
        }
    }
    err2.sqrt()
}

/// H1-seminorm error against an analytic Jacobian `[[dux/dx, dux/dy], [duy/dx, duy/dy]]`.
pub fn velocity_h1_error_vs(
    mesh: &NestedMesh,
    u: &[f64],
    exact_grad: &dyn Fn(f64, f64) -> [[f64; 2]; 2],
) -> f64 {
    let area = mesh.tri_area();
    let h = mesh.h();
    let mut err2 = 0.0;
    for t in 0..mesh.n_triangles() {
        let (_, _, shape) = mesh.tri_cell(t);
        let nodes = mesh.tri_scalar_nodes(t);
        for q in rule_deg6() {
            let w = q.w * area;
            let grads = p2_ref_grads(q.x, q.y).map(|g| phys_grad(shape, h, g));
            let mut gh = [[0.0; 2]; 2];
            for a in 0..6 {
                for d in 0..2 {
                    gh[0][d] += u[ux(nodes[a])] * grads[a][d];
                    gh[1][d] += u[uy(nodes[a])] * grads[a][d];
                }
            }
            let (x, y) = phys_point(mesh, t, q.x, q.y);
            let ge = exact_grad(x, y);
            for c in 0..2 {
                for d in 0..2 {
                    err2 += w * (gh[c][d] - ge[c][d]).powi(2);
                }
            }
        }
    }
    err2.sqrt()
}

/// Evaluates a vector P2 coefficient field at a reference point of a triangle.
pub fn eval_velocity(mesh: &NestedMesh, u: &[f64], t: usize, x: f64, y: f64) -> [f64; 2] {
    let nodes = mesh.tri_scalar_nodes(t);
    let vals = p2_values(x, y);
    let mut out = [0.0; 2];
    for a in 0..6 {
        out[0] += u[ux(nodes[a])] * vals[a];
        out[1] += u[uy(nodes[a])] * vals[a];
    }
    out
}

/// Interpolates a callable onto the vector P2 dofs (nodal interpolation).
pub fn interpolate_velocity(mesh: &NestedMesh, f: &dyn Fn(f64, f64) -> [f64; 2]) -> Vec<f64> {
    let mut out = vec![0.0; mesh.n_velocity_dofs()];
    for s in 0..mesh.n_scalar_nodes() {
        let (x, y) = mesh.node_coords(s);
        let v = f(x, y);
        out[ux(s)] = v[0];
        out[uy(s)] = v[1];
    }
    out
}
