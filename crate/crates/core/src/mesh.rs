//! Nested structured triangulation of the unit square.
//!
//! A coarse grid of `n_coarse x n_coarse` square blocks is refined into
//! `refine x refine` fine squares per block; every fine square is split along
//! its lower-left to upper-right diagonal into two triangles. Scalar P2 nodes
//! are the fine vertices plus all fine edge midpoints; velocity degrees of
//! freedom interleave the two components per scalar node (`2s`, `2s + 1`).
//!
//! The coarse skeleton is the set of all coarse edges. Skeleton shape
//! functions are continuous piecewise quadratics on the skeleton, one per
//! interior coarse vertex and one per interior coarse-edge midpoint.
//! Boundary-anchored functions are excluded (Dirichlet data is handled by a
//! constant lifting); their endpoint quadratics are lumped into the midpoint
//! function of the same coarse edge so the remaining family still sums to one
//! at every fine skeleton node off the domain boundary. The resulting unity
//! deficit lives only on the boundary itself and is reported, not hidden.
//!
//! Everything is index arithmetic on the structured grid; node and element
//! orderings are deterministic (row-major by y, then x, per node class).

use crate::error::{CoreError, Result};
use std::collections::BTreeMap;
use std::fmt;

/// Largest supported fine-grid resolution per side.
///
/// Keeps index arithmetic far from overflow and rejects accidental
/// astronomically sized requests up front.
pub const MAX_FINE_PER_SIDE: usize = 4096;

/// Structured nested mesh of the unit square.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NestedMesh {
    /// Coarse blocks per side.
    pub n_coarse: usize,
    /// Fine squares per coarse block side.
    pub refine: usize,
    /// Fine squares per side (`n_coarse * refine`).
    pub n_fine: usize,
}

/// Orientation of a triangle within its fine square.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TriShape {
    /// Vertices (i,j), (i+1,j), (i+1,j+1).
    Lower,
    /// Vertices (i,j), (i+1,j+1), (i,j+1).
    Upper,
}

impl NestedMesh {
    /// Builds the nested mesh. Sizes below 1 or beyond [`MAX_FINE_PER_SIDE`]
    /// are rejected.
    pub fn build(n_coarse: usize, refine: usize) -> Result<Self> {
        if n_coarse == 0 || refine == 0 {
            return Err(CoreError::InvalidMesh(format!(
                "n_coarse and refine must be at least 1, got ({n_coarse}, {refine})"
            )));
        }
        let n_fine = n_coarse
            .checked_mul(refine)
            .filter(|&n| n <= MAX_FINE_PER_SIDE)
            .ok_or_else(|| {
                CoreError::InvalidMesh(format!(
                    "fine grid {n_coarse} * {refine} exceeds the supported maximum {MAX_FINE_PER_SIDE}"
                ))
            })?;
        Ok(Self { n_coarse, refine, n_fine })
    }

    /// Fine mesh size.
    pub fn h(&self) -> f64 {
        1.0 / self.n_fine as f64
    }

    /// Coarse block size.
    pub fn big_h(&self) -> f64 {
        1.0 / self.n_coarse as f64
    }

    /// Area of every fine triangle (`h^2 / 2`, uniform by construction).
    pub fn tri_area(&self) -> f64 {
        let h = self.h();
        0.5 * h * h
    }

    // ----- scalar node enumeration -------------------------------------

    pub fn n_fine_vertices(&self) -> usize {
        (self.n_fine + 1) * (self.n_fine + 1)
    }

    pub fn n_fine_edges(&self) -> usize {
        let n = self.n_fine;
        2 * n * (n + 1) + n * n
    }

    pub fn n_triangles(&self) -> usize {
        2 * self.n_fine * self.n_fine
    }

    /// Scalar P2 nodes: vertices plus edge midpoints, `(2n + 1)^2` total.
    pub fn n_scalar_nodes(&self) -> usize {
        self.n_fine_vertices() + self.n_fine_edges()
    }

    /// Vector velocity dofs (two components per scalar node).
    pub fn n_velocity_dofs(&self) -> usize {
        2 * self.n_scalar_nodes()
    }

    #[inline]
    pub fn vertex_id(&self, i: usize, j: usize) -> usize {
        debug_assert!(i <= self.n_fine && j <= self.n_fine);
        j * (self.n_fine + 1) + i
    }

    /// Midpoint node of the horizontal edge from vertex (i,j) to (i+1,j).
    #[inline]
    pub fn hedge_id(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.n_fine && j <= self.n_fine);
        self.n_fine_vertices() + j * self.n_fine + i
    }

    /// Midpoint node of the vertical edge from vertex (i,j) to (i,j+1).
    #[inline]
    pub fn vedge_id(&self, i: usize, j: usize) -> usize {
        debug_assert!(i <= self.n_fine && j < self.n_fine);
        self.n_fine_vertices() + self.n_fine * (self.n_fine + 1) + j * (self.n_fine + 1) + i
    }

    /// Midpoint node of the diagonal edge from vertex (i,j) to (i+1,j+1).
    #[inline]
    pub fn dedge_id(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.n_fine && j < self.n_fine);
        self.n_fine_vertices() + 2 * self.n_fine * (self.n_fine + 1) + j * self.n_fine + i
    }

    /// Coordinates of a scalar node.
    pub fn node_coords(&self, s: usize) -> (f64, f64) {
        let n = self.n_fine;
        let h = self.h();
        let nv = self.n_fine_vertices();
        let nh = n * (n + 1);
        if s < nv {
            let (i, j) = (s % (n + 1), s / (n + 1));
            (i as f64 * h, j as f64 * h)
        } else if s < nv + nh {
            let k = s - nv;
            let (i, j) = (k % n, k / n);
            ((i as f64 + 0.5) * h, j as f64 * h)
        } else if s < nv + 2 * nh {
            let k = s - nv - nh;
            let (i, j) = (k % (n + 1), k / (n + 1));
            (i as f64 * h, (j as f64 + 0.5) * h)
        } else {
            let k = s - nv - 2 * nh;
            let (i, j) = (k % n, k / n);
            ((i as f64 + 0.5) * h, (j as f64 + 0.5) * h)
        }
    }

    /// Doubled integer coordinates of a scalar node: `(gx, gy)` with the node
    /// at `(gx h / 2, gy h / 2)`. Exact, unlike [`Self::node_coords`], so
    /// region-boundary tests stay free of rounding.
    pub fn node_grid_coords(&self, s: usize) -> (usize, usize) {
        let n = self.n_fine;
        let nv = self.n_fine_vertices();
        let nh = n * (n + 1);
        if s < nv {
            let (i, j) = (s % (n + 1), s / (n + 1));
            (2 * i, 2 * j)
        } else if s < nv + nh {
            let k = s - nv;
            (2 * (k % n) + 1, 2 * (k / n))
        } else if s < nv + 2 * nh {
            let k = s - nv - nh;
            (2 * (k % (n + 1)), 2 * (k / (n + 1)) + 1)
        } else {
            let k = s - nv - 2 * nh;
            (2 * (k % n) + 1, 2 * (k / n) + 1)
        }
    }

    /// Scalar node at doubled integer coordinates (inverse of
    /// [`Self::node_grid_coords`]).
    pub fn node_at_grid_coords(&self, gx: usize, gy: usize) -> usize {
        debug_assert!(gx <= 2 * self.n_fine && gy <= 2 * self.n_fine);
        match (gx % 2, gy % 2) {
            (0, 0) => self.vertex_id(gx / 2, gy / 2),
            (1, 0) => self.hedge_id(gx / 2, gy / 2),
            (0, 1) => self.vedge_id(gx / 2, gy / 2),
            _ => self.dedge_id(gx / 2, gy / 2),
        }
    }

    /// True when the scalar node lies on the boundary of the unit square.
    pub fn node_on_domain_boundary(&self, s: usize) -> bool {
        let n = self.n_fine;
        let nv = self.n_fine_vertices();
        let nh = n * (n + 1);
        if s < nv {
            let (i, j) = (s % (n + 1), s / (n + 1));
            i == 0 || i == n || j == 0 || j == n
        } else if s < nv + nh {
            let j = (s - nv) / n;
            j == 0 || j == n
        } else if s < nv + 2 * nh {
            let i = (s - nv - nh) % (n + 1);
            i == 0 || i == n
        } else {
            false
        }
    }

    // ----- triangles -----------------------------------------------------

    /// Triangle id for a fine square `(i, j)`; `upper` selects the triangle
    /// above the lower-left to upper-right diagonal.
    #[inline]
    pub fn tri_id(&self, i: usize, j: usize, upper: bool) -> usize {
        2 * (j * self.n_fine + i) + upper as usize
    }

    /// Fine square and orientation of a triangle.
    #[inline]
    pub fn tri_cell(&self, t: usize) -> (usize, usize, TriShape) {
        let cell = t / 2;
        let shape = if t % 2 == 0 { TriShape::Lower } else { TriShape::Upper };
        (cell % self.n_fine, cell / self.n_fine, shape)
    }

    /// The six scalar P2 nodes of a triangle, ordered
    /// `[v0, v1, v2, m01, m12, m20]` with counter-clockwise vertices.
    pub fn tri_scalar_nodes(&self, t: usize) -> [usize; 6] {
        let (i, j, shape) = self.tri_cell(t);
        match shape {
            TriShape::Lower => [
                self.vertex_id(i, j),
                self.vertex_id(i + 1, j),
                self.vertex_id(i + 1, j + 1),
                self.hedge_id(i, j),
                self.vedge_id(i + 1, j),
                self.dedge_id(i, j),
            ],
            TriShape::Upper => [
                self.vertex_id(i, j),
                self.vertex_id(i + 1, j + 1),
                self.vertex_id(i, j + 1),
                self.dedge_id(i, j),
                self.hedge_id(i, j + 1),
                self.vedge_id(i, j),
            ],
        }
    }

    /// Vertex coordinates of a triangle, counter-clockwise.
    pub fn tri_vertex_coords(&self, t: usize) -> [(f64, f64); 3] {
        let (i, j, shape) = self.tri_cell(t);
        let h = self.h();
        let p = |a: usize, b: usize| (a as f64 * h, b as f64 * h);
        match shape {
            TriShape::Lower => [p(i, j), p(i + 1, j), p(i + 1, j + 1)],
            TriShape::Upper => [p(i, j), p(i + 1, j + 1), p(i, j + 1)],
        }
    }

    // ----- coarse structure ----------------------------------------------

    pub fn n_blocks(&self) -> usize {
        self.n_coarse * self.n_coarse
    }

    #[inline]
    pub fn block_id(&self, bi: usize, bj: usize) -> usize {
        bj * self.n_coarse + bi
    }

    #[inline]
    pub fn block_of_cell(&self, i: usize, j: usize) -> usize {
        self.block_id(i / self.refine, j / self.refine)
    }

    /// Coarse block containing a triangle.
    #[inline]
    pub fn block_of_tri(&self, t: usize) -> usize {
        let (i, j, _) = self.tri_cell(t);
        self.block_of_cell(i, j)
    }

    /// Fine-cell rectangle `[i0, i1) x [j0, j1)` of a coarse block.
    pub fn block_cell_rect(&self, b: usize) -> CellRect {
        let (bi, bj) = (b % self.n_coarse, b / self.n_coarse);
        CellRect {
            i0: bi * self.refine,
            j0: bj * self.refine,
            i1: (bi + 1) * self.refine,
            j1: (bj + 1) * self.refine,
        }
    }

    /// Triangle ids of a coarse block, ascending.
    pub fn block_tris(&self, b: usize) -> Vec<usize> {
        self.block_cell_rect(b).tris(self)
    }

    /// All coarse edges (horizontal then vertical, row-major).
    pub fn coarse_edges(&self) -> Vec<CoarseEdge> {
        let nc = self.n_coarse;
        let mut out = Vec::with_capacity(2 * nc * (nc + 1));
        for ej in 0..=nc {
            for ei in 0..nc {
                out.push(CoarseEdge::Horizontal { ei, ej });
            }
        }
        for ej in 0..nc {
            for ei in 0..=nc {
                out.push(CoarseEdge::Vertical { ei, ej });
            }
        }
        out
    }

    /// Scalar nodes along a coarse edge in order, alternating fine vertices
    /// and fine-edge midpoints (`2 * refine + 1` nodes). The k-th node sits at
    /// edge parameter `k / (2 * refine)`.
    pub fn coarse_edge_nodes(&self, e: CoarseEdge) -> Vec<usize> {
        let r = self.refine;
        let mut out = Vec::with_capacity(2 * r + 1);
        match e {
            CoarseEdge::Horizontal { ei, ej } => {
                let j = ej * r;
                for t in 0..r {
                    out.push(self.vertex_id(ei * r + t, j));
                    out.push(self.hedge_id(ei * r + t, j));
                }
                out.push(self.vertex_id((ei + 1) * r, j));
            }
            CoarseEdge::Vertical { ei, ej } => {
                let i = ei * r;
                for t in 0..r {
                    out.push(self.vertex_id(i, ej * r + t));
                    out.push(self.vedge_id(i, ej * r + t));
                }
                out.push(self.vertex_id(i, (ej + 1) * r));
            }
        }
        out
    }

    /// Every fine scalar node lying on the coarse skeleton, ascending ids.
    pub fn skeleton_nodes(&self) -> Vec<usize> {
        let mut set = std::collections::BTreeSet::new();
        for e in self.coarse_edges() {
            set.extend(self.coarse_edge_nodes(e));
        }
        set.into_iter().collect()
    }

    /// Mesh summary for reports.
    pub fn summary(&self) -> MeshSummary {
        MeshSummary {
            n_coarse: self.n_coarse,
            refine: self.refine,
            n_fine: self.n_fine,
            h: self.h(),
            big_h: self.big_h(),
            fine_vertices: self.n_fine_vertices(),
            fine_edges: self.n_fine_edges(),
            fine_triangles: self.n_triangles(),
            scalar_nodes: self.n_scalar_nodes(),
            velocity_dofs: self.n_velocity_dofs(),
            pressure_dofs: self.n_triangles(),
            coarse_blocks: self.n_blocks(),
        }
    }
}

/// Fine-cell rectangle `[i0, i1) x [j0, j1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellRect {
    pub i0: usize,
    pub j0: usize,
    pub i1: usize,
    pub j1: usize,
}

impl CellRect {
    pub fn width(&self) -> usize {
        self.i1 - self.i0
    }

    pub fn height(&self) -> usize {
        self.j1 - self.j0
    }

    /// Triangle ids inside the rectangle, ascending.
    pub fn tris(&self, mesh: &NestedMesh) -> Vec<usize> {
        let mut out = Vec::with_capacity(2 * self.width() * self.height());
        for j in self.j0..self.j1 {
            for i in self.i0..self.i1 {
                out.push(mesh.tri_id(i, j, false));
                out.push(mesh.tri_id(i, j, true));
            }
        }
        out.sort_unstable();
        out
    }

    /// True when two rectangles share at least one fine cell.
    pub fn overlaps(&self, other: &CellRect) -> bool {
        self.i0 < other.i1 && other.i0 < self.i1 && self.j0 < other.j1 && other.j0 < self.j1
    }
}

/// A coarse edge identified by its lower-left coarse vertex.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CoarseEdge {
    Horizontal { ei: usize, ej: usize },
    Vertical { ei: usize, ej: usize },
}

impl CoarseEdge {
    /// True when the edge lies inside the domain boundary.
    pub fn on_domain_boundary(&self, mesh: &NestedMesh) -> bool {
        let nc = mesh.n_coarse;
        match *self {
            CoarseEdge::Horizontal { ej, .. } => ej == 0 || ej == nc,
            CoarseEdge::Vertical { ei, .. } => ei == 0 || ei == nc,
        }
    }

    /// Endpoint coarse vertices `(start, end)` in parameter order.
    pub fn endpoints(&self) -> ((usize, usize), (usize, usize)) {
        match *self {
            CoarseEdge::Horizontal { ei, ej } => ((ei, ej), (ei + 1, ej)),
            CoarseEdge::Vertical { ei, ej } => ((ei, ej), (ei, ej + 1)),
        }
    }
}

/// Anchor of a skeleton shape function.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Anchor {
    /// Interior coarse vertex `(vi, vj)`.
    Vertex { vi: usize, vj: usize },
    /// Midpoint of an interior coarse edge.
    EdgeMid(CoarseEdge),
}

/// One C0 piecewise-quadratic shape function on the coarse skeleton,
/// stored as values at the fine scalar nodes of its supporting edges.
#[derive(Debug, Clone)]
pub struct SkeletonFunction {
    pub anchor: Anchor,
    /// Global scalar node at the anchor.
    pub anchor_node: usize,
    /// `(scalar node, value)` pairs, ascending by node id.
    pub trace: Vec<(usize, f64)>,
    /// Coarse edges supporting the trace.
    pub support_edges: Vec<CoarseEdge>,
}

impl SkeletonFunction {
    /// Trace value at a scalar node (0 outside the support).
    pub fn value_at(&self, node: usize) -> f64 {
        match self.trace.binary_search_by_key(&node, |&(n, _)| n) {
            Ok(k) => self.trace[k].1,
            Err(_) => 0.0,
        }
    }
}

/// The interior skeleton shape-function family plus its boundary report.
#[derive(Debug, Clone)]
pub struct SkeletonBasis {
    pub functions: Vec<SkeletonFunction>,
    /// Interior coarse edges whose midpoint function absorbed an excluded
    /// boundary-vertex quadratic.
    pub lumped_edges: usize,
    /// Max |sum - 1| over fine skeleton nodes off the domain boundary.
    pub interior_unity_deficit: f64,
    /// The unity deficit is 1 exactly at skeleton nodes on the domain
    /// boundary (all functions vanish there); count of such nodes.
    pub boundary_node_count: usize,
}

/// The 1D quadratic nodal basis on [0, 1]: start / midpoint / end.
fn quad_start(t: f64) -> f64 {
    (1.0 - t) * (1.0 - 2.0 * t)
}
fn quad_mid(t: f64) -> f64 {
    4.0 * t * (1.0 - t)
}
fn quad_end(t: f64) -> f64 {
    t * (2.0 * t - 1.0)
}

/// Builds the skeleton shape functions: one per interior coarse vertex, one
/// per interior coarse-edge midpoint, in that order (row-major each).
pub fn skeleton_shape_functions(mesh: &NestedMesh) -> SkeletonBasis {
    let nc = mesh.n_coarse;
    let r = mesh.refine;
    let param = |k: usize| k as f64 / (2.0 * r as f64);
    let mut functions = Vec::new();

    // Interior coarse vertices: endpoint quadratic on each incident edge.
    for vj in 1..nc {
        for vi in 1..nc {
            let edges = [
                CoarseEdge::Horizontal { ei: vi - 1, ej: vj }, // west, anchored at t=1
                CoarseEdge::Horizontal { ei: vi, ej: vj },     // east, anchored at t=0
                CoarseEdge::Vertical { ei: vi, ej: vj - 1 },   // south, anchored at t=1
                CoarseEdge::Vertical { ei: vi, ej: vj },       // north, anchored at t=0
            ];
            let at_start = [false, true, false, true];
            let mut vals = BTreeMap::new();
            for (e, &start) in edges.iter().zip(&at_start) {
                let nodes = mesh.coarse_edge_nodes(*e);
                for (k, &node) in nodes.iter().enumerate() {
                    let t = param(k);
                    let v = if start { quad_start(t) } else { quad_end(t) };
                    vals.insert(node, v);
                }
            }
            let anchor_node = mesh.vertex_id(vi * r, vj * r);
            vals.insert(anchor_node, 1.0);
            functions.push(SkeletonFunction {
                anchor: Anchor::Vertex { vi, vj },
                anchor_node,
                trace: vals.into_iter().collect(),
                support_edges: edges.to_vec(),
            });
        }
    }

    // Interior coarse-edge midpoints. When an endpoint coarse vertex lies on
    // the domain boundary its (excluded) endpoint quadratic is lumped in, so
    // the family still sums to one strictly inside the domain; the value at
    // the boundary node itself is forced to zero.
    let mut lumped_edges = 0usize;
    for e in mesh.coarse_edges() {
        if e.on_domain_boundary(mesh) {
            continue;
        }
        let ((ai, aj), (bi, bj)) = e.endpoints();
        let start_on_bdy = ai == 0 || ai == nc || aj == 0 || aj == nc;
        let end_on_bdy = bi == 0 || bi == nc || bj == 0 || bj == nc;
        if start_on_bdy || end_on_bdy {
            lumped_edges += 1;
        }
        let nodes = mesh.coarse_edge_nodes(e);
        let mut vals = BTreeMap::new();
        for (k, &node) in nodes.iter().enumerate() {
            let t = param(k);
            let mut v = quad_mid(t);
            if start_on_bdy {
                v += quad_start(t);
            }
            if end_on_bdy {
                v += quad_end(t);
            }
            if mesh.node_on_domain_boundary(node) {
                v = 0.0;
            }
            vals.insert(node, v);
        }
        let anchor_node = nodes[r]; // parameter 1/2
        functions.push(SkeletonFunction {
            anchor: Anchor::EdgeMid(e),
            anchor_node,
            trace: vals.into_iter().collect(),
            support_edges: vec![e],
        });
    }

    // Unity audit over the skeleton.
    let mut sums: BTreeMap<usize, f64> = BTreeMap::new();
    for f in &functions {
        for &(node, v) in &f.trace {
            *sums.entry(node).or_insert(0.0) += v;
        }
    }
    let mut interior_unity_deficit = 0.0f64;
    let mut boundary_node_count = 0usize;
    for node in mesh.skeleton_nodes() {
        if mesh.node_on_domain_boundary(node) {
            boundary_node_count += 1;
        } else {
            let s = sums.get(&node).copied().unwrap_or(0.0);
            interior_unity_deficit = interior_unity_deficit.max((s - 1.0).abs());
        }
    }

    SkeletonBasis { functions, lumped_edges, interior_unity_deficit, boundary_node_count }
}

/// Kind of coarse neighborhood (support of a skeleton function).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NeighborhoodKind {
    /// Four blocks around an interior coarse vertex.
    Vertex,
    /// Two vertically stacked blocks around a horizontal coarse edge.
    HorizontalEdge,
    /// Two horizontally adjacent blocks around a vertical coarse edge.
    VerticalEdge,
}

/// Union of the coarse blocks supporting one skeleton function. Always a
/// full rectangle of blocks for interior anchors.
#[derive(Debug, Clone)]
pub struct CoarseNeighborhood {
    pub kind: NeighborhoodKind,
    pub anchor: Anchor,
    /// Coarse block ids, ascending.
    pub blocks: Vec<usize>,
    /// Fine-cell rectangle covered by the blocks.
    pub cell_rect: CellRect,
}

impl CoarseNeighborhood {
    /// Fine vertices on the neighborhood boundary, counter-clockwise starting
    /// from the lexicographic minimum (bottom-left corner).
    pub fn boundary_fine_vertices(&self, mesh: &NestedMesh) -> Vec<usize> {
        let CellRect { i0, j0, i1, j1 } = self.cell_rect;
        let mut out = Vec::new();
        for i in i0..i1 {
            out.push(mesh.vertex_id(i, j0)); // bottom, left to right
        }
        for j in j0..j1 {
            out.push(mesh.vertex_id(i1, j)); // right, upward
        }
        for i in (i0 + 1..=i1).rev() {
            out.push(mesh.vertex_id(i, j1)); // top, right to left
        }
        for j in (j0 + 1..=j1).rev() {
            out.push(mesh.vertex_id(i0, j)); // left, downward
        }
        out
    }
}

/// Neighborhood of a skeleton function: the coarse blocks its support spans.
pub fn coarse_neighborhood(mesh: &NestedMesh, f: &SkeletonFunction) -> CoarseNeighborhood {
    let r = mesh.refine;
    let (kind, bi0, bj0, bi1, bj1) = match f.anchor {
        Anchor::Vertex { vi, vj } => (NeighborhoodKind::Vertex, vi - 1, vj - 1, vi + 1, vj + 1),
        Anchor::EdgeMid(CoarseEdge::Horizontal { ei, ej }) => {
            (NeighborhoodKind::HorizontalEdge, ei, ej - 1, ei + 1, ej + 1)
        }
        Anchor::EdgeMid(CoarseEdge::Vertical { ei, ej }) => {
            (NeighborhoodKind::VerticalEdge, ei - 1, ej, ei + 1, ej + 1)
        }
    };
    let mut blocks = Vec::new();
    for bj in bj0..bj1 {
        for bi in bi0..bi1 {
            blocks.push(mesh.block_id(bi, bj));
        }
    }
    blocks.sort_unstable();
    CoarseNeighborhood {
        kind,
        anchor: f.anchor,
        blocks,
        cell_rect: CellRect { i0: bi0 * r, j0: bj0 * r, i1: bi1 * r, j1: bj1 * r },
    }
}

/// Structured mesh summary for reports.
#[derive(Debug, Clone, PartialEq)]
pub struct MeshSummary {
    pub n_coarse: usize,
    pub refine: usize,
    pub n_fine: usize,
    pub h: f64,
    pub big_h: f64,
    pub fine_vertices: usize,
    pub fine_edges: usize,
    pub fine_triangles: usize,
    pub scalar_nodes: usize,
    pub velocity_dofs: usize,
    pub pressure_dofs: usize,
    pub coarse_blocks: usize,
}

impl fmt::Display for MeshSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "mesh {}x{} coarse blocks, {}x{} fine squares (H = {:.6}, h = {:.6})",
            self.n_coarse, self.n_coarse, self.n_fine, self.n_fine, self.big_h, self.h)?;
        writeln!(f, "  fine vertices   {}", self.fine_vertices)?;
        writeln!(f, "  fine edges      {}", self.fine_edges)?;
        writeln!(f, "  fine triangles  {}", self.fine_triangles)?;
        writeln!(f, "  scalar P2 nodes {}", self.scalar_nodes)?;
        writeln!(f, "  velocity dofs   {}", self.velocity_dofs)?;
        write!(f, "  pressure dofs   {}", self.pressure_dofs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_degenerate_and_oversized() {
        assert!(NestedMesh::build(0, 4).is_err());
        assert!(NestedMesh::build(4, 0).is_err());
        assert!(NestedMesh::build(4097, 1).is_err());
        assert!(NestedMesh::build(usize::MAX / 2, 3).is_err());
    }

    #[test]
    fn unit_mesh_counts() {
        let m = NestedMesh::build(1, 1).unwrap();
        assert_eq!(m.n_blocks(), 1);
        assert_eq!(m.n_triangles(), 2);
        assert_eq!(m.n_scalar_nodes(), 9);
        assert_eq!(m.n_velocity_dofs(), 18);
    }

    #[test]
    fn paper_scale_velocity_dofs() {
        let m = NestedMesh::build(10, 10).unwrap();
        assert_eq!(m.n_velocity_dofs(), 80802);
    }

    #[test]
    fn grid_coords_match_physical_coords() {
        let m = NestedMesh::build(2, 3).unwrap();
        let half = m.h() / 2.0;
        for s in 0..m.n_scalar_nodes() {
            let (gx, gy) = m.node_grid_coords(s);
            let (x, y) = m.node_coords(s);
            assert!((x - gx as f64 * half).abs() < 1e-14);
            assert!((y - gy as f64 * half).abs() < 1e-14);
            assert_eq!(m.node_at_grid_coords(gx, gy), s);
        }
    }

    #[test]
    fn euler_characteristic_of_a_disk() {
        for (nc, r) in [(1usize, 1usize), (2, 2), (3, 4), (8, 4)] {
            let m = NestedMesh::build(nc, r).unwrap();
            let v = m.n_fine_vertices() as i64;
            let e = m.n_fine_edges() as i64;
            let f = m.n_triangles() as i64;
            assert_eq!(v - e + f, 1, "V - E + F for ({nc}, {r})");
        }
    }

    /// Enumeration oracle: count nodes by scanning coordinates instead of the
    /// closed-form id arithmetic.
    #[test]
    fn node_ids_are_a_bijection_with_distinct_coords() {
        let m = NestedMesh::build(2, 2).unwrap();
        let mut seen = std::collections::BTreeSet::new();
        for s in 0..m.n_scalar_nodes() {
            let (x, y) = m.node_coords(s);
            assert!((0.0..=1.0).contains(&x) && (0.0..=1.0).contains(&y));
            // Quantize to half-h lattice; every node must land on a distinct site.
            let q = ((x * 8.0).round() as i64, (y * 8.0).round() as i64);
            assert!(seen.insert(q), "duplicate node coords {q:?}");
        }
        // 25 vertices + 40 axis edge midpoints + 16 diagonal midpoints.
        assert_eq!(seen.len(), 81);
    }

    #[test]
    fn triangle_nodes_are_consistent_with_geometry() {
        let m = NestedMesh::build(2, 3).unwrap();
        for t in 0..m.n_triangles() {
            let nodes = m.tri_scalar_nodes(t);
            let vc = m.tri_vertex_coords(t);
            // Vertices match.
            for k in 0..3 {
                let (x, y) = m.node_coords(nodes[k]);
                assert!((x - vc[k].0).abs() < 1e-15 && (y - vc[k].1).abs() < 1e-15);
            }
            // Midpoints bisect their edges.
            for (mk, (a, b)) in [(3, (0, 1)), (4, (1, 2)), (5, (2, 0))] {
                let (x, y) = m.node_coords(nodes[mk]);
                let ex = 0.5 * (vc[a].0 + vc[b].0);
                let ey = 0.5 * (vc[a].1 + vc[b].1);
                assert!((x - ex).abs() < 1e-15 && (y - ey).abs() < 1e-15, "tri {t} mid {mk}");
            }
            // Counter-clockwise orientation.
            let area2 = (vc[1].0 - vc[0].0) * (vc[2].1 - vc[0].1)
                - (vc[2].0 - vc[0].0) * (vc[1].1 - vc[0].1);
            assert!(area2 > 0.0);
        }
    }

    #[test]
    fn block_partition_covers_all_triangles_once() {
        let m = NestedMesh::build(2, 2).unwrap();
        assert_eq!(m.n_blocks(), 4);
        assert_eq!(m.n_triangles(), 32);
        let mut seen = vec![false; m.n_triangles()];
        for b in 0..m.n_blocks() {
            let tris = m.block_tris(b);
            assert_eq!(tris.len(), 2 * m.refine * m.refine);
            for t in tris {
                assert!(!seen[t]);
                seen[t] = true;
                assert_eq!(m.block_of_tri(t), b);
            }
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn skeleton_function_counts() {
        let m = NestedMesh::build(2, 2).unwrap();
        let basis = skeleton_shape_functions(&m);
        // 1 interior vertex + 4 interior edge midpoints.
        assert_eq!(basis.functions.len(), 5);
        let n_vertex = basis
            .functions
            .iter()
            .filter(|f| matches!(f.anchor, Anchor::Vertex { .. }))
            .count();
        assert_eq!(n_vertex, 1);

        for r in [2usize, 5] {
            let m = NestedMesh::build(10, r).unwrap();
            let basis = skeleton_shape_functions(&m);
            assert_eq!(basis.functions.len(), 81 + 180, "refine {r}");
        }
    }

    #[test]
    fn nodal_property_at_anchor_nodes() {
        let m = NestedMesh::build(3, 2).unwrap();
        let basis = skeleton_shape_functions(&m);
        for (a, fa) in basis.functions.iter().enumerate() {
            for (b, fb) in basis.functions.iter().enumerate() {
                let expect = if a == b { 1.0 } else { 0.0 };
                assert!(
                    (fa.value_at(fb.anchor_node) - expect).abs() < 1e-14,
                    "function {a} at anchor of {b}"
                );
            }
        }
    }

    #[test]
    fn interior_partition_of_unity_is_exact() {
        for (nc, r) in [(2usize, 2usize), (3, 2), (4, 3), (8, 4)] {
            let m = NestedMesh::build(nc, r).unwrap();
            let basis = skeleton_shape_functions(&m);
            assert!(
                basis.interior_unity_deficit <= 1e-12,
                "deficit {} for ({nc}, {r})",
                basis.interior_unity_deficit
            );
            // Lumping happened on every boundary-touching interior edge.
            assert_eq!(basis.lumped_edges, 4 * (nc - 1));
            assert!(basis.boundary_node_count > 0);
        }
    }

    #[test]
    fn traces_vanish_on_domain_boundary() {
        let m = NestedMesh::build(3, 3).unwrap();
        let basis = skeleton_shape_functions(&m);
        for f in &basis.functions {
            for &(node, v) in &f.trace {
                if m.node_on_domain_boundary(node) {
                    assert_eq!(v, 0.0);
                }
            }
        }
    }

    #[test]
    fn shape_functions_are_deterministic() {
        let m1 = NestedMesh::build(4, 3).unwrap();
        let m2 = NestedMesh::build(4, 3).unwrap();
        let b1 = skeleton_shape_functions(&m1);
        let b2 = skeleton_shape_functions(&m2);
        assert_eq!(b1.functions.len(), b2.functions.len());
        for (f, g) in b1.functions.iter().zip(&b2.functions) {
            assert_eq!(f.anchor_node, g.anchor_node);
            assert_eq!(f.trace.len(), g.trace.len());
            for (&(n1, v1), &(n2, v2)) in f.trace.iter().zip(&g.trace) {
                assert_eq!(n1, n2);
                assert_eq!(v1.to_bits(), v2.to_bits(), "bit-identical traces");
            }
        }
    }

    #[test]
    fn neighborhood_shapes() {
        let m = NestedMesh::build(4, 2).unwrap();
        let basis = skeleton_shape_functions(&m);
        for f in &basis.functions {
            let nb = coarse_neighborhood(&m, f);
            match f.anchor {
                Anchor::Vertex { .. } => {
                    assert_eq!(nb.blocks.len(), 4);
                    assert_eq!(nb.kind, NeighborhoodKind::Vertex);
                }
                Anchor::EdgeMid(CoarseEdge::Horizontal { .. }) => {
                    assert_eq!(nb.blocks.len(), 2);
                    assert_eq!(nb.kind, NeighborhoodKind::HorizontalEdge);
                    // Vertically stacked: same block column.
                    let b0 = nb.blocks[0] % m.n_coarse;
                    let b1 = nb.blocks[1] % m.n_coarse;
                    assert_eq!(b0, b1);
                }
                Anchor::EdgeMid(CoarseEdge::Vertical { .. }) => {
                    assert_eq!(nb.blocks.len(), 2);
                    assert_eq!(nb.kind, NeighborhoodKind::VerticalEdge);
                    assert_eq!(nb.blocks[0] / m.n_coarse, nb.blocks[1] / m.n_coarse);
                }
            }
        }
    }

    #[test]
    fn boundary_vertices_of_full_domain_neighborhood() {
        // With 2x2 blocks the single vertex neighborhood is the whole square.
        let m = NestedMesh::build(2, 2).unwrap();
        let basis = skeleton_shape_functions(&m);
        let f = basis
            .functions
            .iter()
            .find(|f| matches!(f.anchor, Anchor::Vertex { .. }))
            .unwrap();
        let nb = coarse_neighborhood(&m, f);
        let bdy = nb.boundary_fine_vertices(&m);
        assert_eq!(bdy.len(), 16);
        // Distinct, counter-clockwise, starting at the origin corner.
        let coords: Vec<_> = bdy.iter().map(|&s| m.node_coords(s)).collect();
        assert_eq!(coords[0], (0.0, 0.0));
        let uniq: std::collections::BTreeSet<_> = bdy.iter().collect();
        assert_eq!(uniq.len(), 16);
        // Signed polygon area positive => counter-clockwise.
        let mut area2 = 0.0;
        for k in 0..coords.len() {
            let (x0, y0) = coords[k];
            let (x1, y1) = coords[(k + 1) % coords.len()];
            area2 += x0 * y1 - x1 * y0;
        }
        assert!(area2 > 0.0);
    }
}
