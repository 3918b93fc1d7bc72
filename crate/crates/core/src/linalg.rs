//! Thin facades over the dense/sparse linear algebra backend.
//!
//! Everything numerical funnels through here: sparse assembly from triplets,
//! sparse LU with multiple right-hand sides, dense symmetric and generalized
//! eigensolves, and Gram-based column filtering. Keeping one seam makes the
//! backend swappable and the error mapping uniform.

use crate::error::{CoreError, Result};
use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;

pub type Sparse = SparseColMat<usize, f64>;

/// Builds a CSC matrix from (row, col, value) triplets; duplicates sum.
pub fn sparse_from_triplets(nrows: usize, ncols: usize, trips: &[(usize, usize, f64)]) -> Result<Sparse> {
    let t: Vec<Triplet<usize, usize, f64>> =
        trips.iter().map(|&(r, c, v)| Triplet::new(r, c, v)).collect();
    SparseColMat::try_new_from_triplets(nrows, ncols, &t).map_err(|e| CoreError::Pipeline(format!(
        "sparse assembly failed for a {nrows}x{ncols} operator: {e:?}"
    )))
}

/// y = Q v for CSC Q.
pub fn spmv(q: &Sparse, v: &[f64]) -> Vec<f64> {
    debug_assert_eq!(q.ncols(), v.len());
    let x = Mat::from_fn(v.len(), 1, |i, _| v[i]);
    let y = q * &x;
    (0..q.nrows()).map(|i| y[(i, 0)]).collect()
}

/// Cached sparse LU factorization, reusable across right-hand sides.
pub struct SparseLu {
    lu: faer::sparse::linalg::solvers::Lu<usize, f64>,
    n: usize,
}

impl SparseLu {
    pub fn factor(a: &Sparse, context: &str) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(CoreError::Pipeline(format!(
                "{context}: cannot factor a {}x{} non-square operator",
                a.nrows(),
                a.ncols()
            )));
        }
        let lu = a.sp_lu().map_err(|e| CoreError::Singular {
            context: context.to_string(),
            detail: format!("{e:?}"),
        })?;
        Ok(Self { lu, n: a.nrows() })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn solve_slice(&self, rhs: &[f64]) -> Vec<f64> {
        debug_assert_eq!(rhs.len(), self.n);
        let b = Mat::from_fn(self.n, 1, |i, _| rhs[i]);
        let x = self.lu.solve(&b);
        (0..self.n).map(|i| x[(i, 0)]).collect()
    }

    pub fn solve_mat(&self, rhs: &Mat<f64>) -> Mat<f64> {
        debug_assert_eq!(rhs.nrows(), self.n);
        self.lu.solve(rhs)
    }
}

/// Eigendecomposition of a symmetric matrix; eigenvalues ascending, columns
/// of the returned matrix are orthonormal eigenvectors.
pub fn symmetric_eigen(a: &Mat<f64>, context: &str) -> Result<(Vec<f64>, Mat<f64>)> {
    let evd = a
        .self_adjoint_eigen(faer::Side::Lower)
        .map_err(|e| CoreError::Singular { context: context.to_string(), detail: format!("{e:?}") })?;
    let n = a.nrows();
    let vals: Vec<f64> = (0..n).map(|i| evd.S()[i]).collect();
    Ok((vals, evd.U().to_owned()))
}

/// Generalized symmetric eigenproblem `A x = lambda S x` with S positive
/// definite: eigenvalues ascending, eigenvectors S-orthonormal.
///
/// Solved through the symmetric inverse square root of S, so a numerically
/// indefinite S is detected and reported rather than silently inverted.
pub fn generalized_eigen(a: &Mat<f64>, s: &Mat<f64>, context: &str) -> Result<(Vec<f64>, Mat<f64>)> {
    let n = a.nrows();
    debug_assert_eq!(s.nrows(), n);
    let (s_vals, s_vecs) = symmetric_eigen(s, context)?;
    let s_max = s_vals.last().copied().unwrap_or(0.0);
    if s_max <= 0.0 || s_vals[0] <= s_max * 1e-14 {
        return Err(CoreError::GramDegenerate {
            context: context.to_string(),
            detail: format!(
                "metric eigenvalues span [{:.3e}, {:.3e}]; not positive definite",
                s_vals.first().copied().unwrap_or(f64::NAN),
                s_max
            ),
        });
    }
    // W = V diag(1/sqrt(s)) V^T
    let mut scaled = s_vecs.clone();
    for j in 0..n {
        let f = 1.0 / s_vals[j].sqrt();
        for i in 0..n {
            scaled[(i, j)] *= f;
        }
    }
    let w = &scaled * &s_vecs.transpose().to_owned();
    let mut c = &(&w * a) * &w;
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (c[(i, j)] + c[(j, i)]);
            c[(i, j)] = v;
            c[(j, i)] = v;
        }
    }
    let (vals, y) = symmetric_eigen(&c, context)?;
    Ok((vals, &w * &y))
}

/// Result of Gram filtering a set of columns.
pub struct GramFiltered {
    /// Filtered basis, each column unit norm in the filtering metric.
    pub basis: Mat<f64>,
    /// Coordinates of the basis in the input columns (basis = input * coords).
    pub coords: Mat<f64>,
    /// Full Gram eigenvalue spectrum, ascending.
    pub gram_eigenvalues: Vec<f64>,
    /// Number of columns discarded.
    pub dropped: usize,
}

/// Discards numerically dependent columns: eigendecomposes the Euclidean
/// Gram matrix and keeps eigendirections with eigenvalue > tau * max.
pub fn gram_filter(u: &Mat<f64>, tau: f64, context: &str) -> Result<GramFiltered> {
    let gram = &u.transpose().to_owned() * u;
    gram_filter_in(u, &gram, tau, context)
}

/// Gram filter against a caller-supplied metric: `gram` must be the
/// positive semidefinite matrix U^T M U for the inner product M in which
/// near-dependence is to be judged. Kept basis columns are M-orthonormal,
/// so every discarded direction carries at most tau * max relative energy.
pub fn gram_filter_in(
    u: &Mat<f64>,
    gram: &Mat<f64>,
    tau: f64,
    context: &str,
) -> Result<GramFiltered> {
    let l = u.ncols();
    let (vals, vecs) = symmetric_eigen(gram, context)?;
    let max = vals.last().copied().unwrap_or(0.0);
    if max <= 0.0 {
        return Err(CoreError::GramDegenerate {
            context: context.to_string(),
            detail: "all input columns are zero".to_string(),
        });
    }
    let kept: Vec<usize> = (0..l).filter(|&k| vals[k] > tau * max).collect();
    let mut coords = Mat::<f64>::zeros(l, kept.len());
    for (out_j, &k) in kept.iter().enumerate() {
        // Column U * v_k has M-norm sqrt(lambda_k).
        let f = 1.0 / vals[k].sqrt();
        for i in 0..l {
            coords[(i, out_j)] = vecs[(i, k)] * f;
        }
    }
    let basis = u * &coords;
    Ok(GramFiltered { basis, coords, gram_eigenvalues: vals, dropped: l - kept.len() })
}

/// Euclidean norm of a slice.
pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Residual `||A x - b|| / max(||b||, scale)` for a sparse square system.
pub fn relative_residual(a: &Sparse, x: &[f64], b: &[f64]) -> f64 {
    let ax = spmv(a, x);
    let mut r2 = 0.0;
    for i in 0..b.len() {
        r2 += (ax[i] - b[i]).powi(2);
    }
    let den = norm2(b).max(1e-300);
    r2.sqrt() / den
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat_from_rows(rows: &[&[f64]]) -> Mat<f64> {
        Mat::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j])
    }

    #[test]
    fn triplets_sum_duplicates() {
        let a = sparse_from_triplets(2, 2, &[(0, 0, 1.0), (0, 0, 2.0), (1, 1, 5.0)]).unwrap();
        let y = spmv(&a, &[1.0, 1.0]);
        assert_eq!(y, vec![3.0, 5.0]);
    }

    #[test]
    fn sparse_lu_solves_and_flags_singular() {
        let a = sparse_from_triplets(
            3,
            3,
            &[(0, 0, 4.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 3.0), (2, 2, 2.0)],
        )
        .unwrap();
        let lu = SparseLu::factor(&a, "test").unwrap();
        let x = lu.solve_slice(&[1.0, 2.0, 4.0]);
        assert!((x[0] - 1.0 / 11.0).abs() < 1e-14);
        assert!((x[1] - 7.0 / 11.0).abs() < 1e-14);
        assert!((x[2] - 2.0).abs() < 1e-14);
        assert!(relative_residual(&a, &x, &[1.0, 2.0, 4.0]) < 1e-14);

        let sing = sparse_from_triplets(2, 2, &[(0, 0, 1.0), (0, 1, 1.0)]).unwrap();
        match SparseLu::factor(&sing, "singular-probe") {
            Err(CoreError::Singular { context, .. }) => assert_eq!(context, "singular-probe"),
            Err(other) => panic!("expected Singular, got {other:?}"),
            Ok(_) => panic!("expected Singular, got a factorization"),
        }
    }

    #[test]
    fn symmetric_eigen_ascending_orthonormal() {
        let a = mat_from_rows(&[&[2.0, 1.0, 0.0], &[1.0, 2.0, 1.0], &[0.0, 1.0, 2.0]]);
        let (vals, vecs) = symmetric_eigen(&a, "test").unwrap();
        // Known spectrum: 2 - sqrt(2), 2, 2 + sqrt(2).
        let want = [2.0 - 2f64.sqrt(), 2.0, 2.0 + 2f64.sqrt()];
        for (v, w) in vals.iter().zip(&want) {
            assert!((v - w).abs() < 1e-12);
        }
        let q = &vecs.transpose().to_owned() * &vecs;
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((q[(i, j)] - want).abs() < 1e-12);
            }
        }
    }

    /// 2x2 closed-form oracle: A x = lambda S x with
    /// A = [[2, 0], [0, 8]], S = [[1, 0], [0, 4]] has eigenvalues {2, 2};
    /// perturbed A = [[2, 1], [1, 8]] gives roots of det(A - lambda S) = 0:
    /// 4 lambda^2 - 16 lambda + 15 = 0 -> (10 +- sqrt(10))/... computed below.
    #[test]
    fn generalized_eigen_matches_quadratic_roots() {
        let a = mat_from_rows(&[&[2.0, 1.0], &[1.0, 8.0]]);
        let s = mat_from_rows(&[&[1.0, 0.0], &[0.0, 4.0]]);
        // det(A - l S) = (2 - l)(8 - 4l) - 1 = 4l^2 - 16l + 15 = 0.
        let disc = (16.0f64 * 16.0 - 4.0 * 4.0 * 15.0).sqrt();
        let roots = [(16.0 - disc) / 8.0, (16.0 + disc) / 8.0];
        let (vals, vecs) = generalized_eigen(&a, &s, "test").unwrap();
        assert!((vals[0] - roots[0]).abs() < 1e-12);
        assert!((vals[1] - roots[1]).abs() < 1e-12);
        // S-orthonormality.
        let xs = &(&vecs.transpose().to_owned() * &s) * &vecs;
        for i in 0..2 {
            for j in 0..2 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((xs[(i, j)] - want).abs() < 1e-12);
            }
        }
        // Residual A x = lambda S x.
        for k in 0..2 {
            for i in 0..2 {
                let ax: f64 = (0..2).map(|j| a[(i, j)] * vecs[(j, k)]).sum();
                let sx: f64 = (0..2).map(|j| s[(i, j)] * vecs[(j, k)]).sum();
                assert!((ax - vals[k] * sx).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn generalized_eigen_rejects_indefinite_metric() {
        let a = mat_from_rows(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let s = mat_from_rows(&[&[1.0, 0.0], &[0.0, -1.0]]);
        assert!(matches!(
            generalized_eigen(&a, &s, "bad-metric"),
            Err(CoreError::GramDegenerate { .. })
        ));
    }

    #[test]
    fn gram_filter_drops_duplicates_and_keeps_span() {
        // Three columns in R^4, rank 2 (third = first + second).
        let u = mat_from_rows(&[
            &[1.0, 0.0, 1.0],
            &[0.0, 1.0, 1.0],
            &[2.0, 0.0, 2.0],
            &[0.0, 3.0, 3.0],
        ]);
        let f = gram_filter(&u, 1e-10, "test").unwrap();
        assert_eq!(f.basis.ncols(), 2);
        assert_eq!(f.dropped, 1);
        // Unit columns.
        for j in 0..2 {
            let n: f64 = (0..4).map(|i| f.basis[(i, j)].powi(2)).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() < 1e-12);
        }
        // Original columns reconstruct from the filtered basis (projection).
        let bt = f.basis.transpose().to_owned();
        let proj = &f.basis * &(&bt * &u);
        for j in 0..3 {
            for i in 0..4 {
                assert!((proj[(i, j)] - u[(i, j)]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn gram_filter_known_rank_random_product() {
        // U = X Y with X 20x3, Y 3x7: rank exactly 3.
        let x = Mat::from_fn(20, 3, |i, j| ((i * 7 + j * 13 + 1) % 17) as f64 / 17.0 - 0.4);
        let y = Mat::from_fn(3, 7, |i, j| ((i * 5 + j * 3 + 2) % 11) as f64 / 11.0 - 0.3);
        let u = &x * &y;
        let f = gram_filter(&u, 1e-10, "test").unwrap();
        assert_eq!(f.basis.ncols(), 3);
    }

    #[test]
    fn gram_filter_rejects_zero_input() {
        let u = Mat::<f64>::zeros(5, 2);
        assert!(matches!(gram_filter(&u, 1e-10, "zero"), Err(CoreError::GramDegenerate { .. })));
    }

    #[test]
    fn gram_filter_orthonormal_input_kept() {
        let u = mat_from_rows(&[&[1.0, 0.0], &[0.0, 1.0], &[0.0, 0.0]]);
        let f = gram_filter(&u, 1e-10, "test").unwrap();
        assert_eq!(f.basis.ncols(), 2);
        assert_eq!(f.dropped, 0);
    }
}
