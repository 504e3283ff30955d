//! Factorizations and eigensolvers backed by `faer`.

use faer::prelude::*;
use faer::sparse::linalg::solvers::{Llt, Lu};
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, Side};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};

use crate::error::{Error, Result};
use crate::sparse::SparseOperator;

pub fn to_faer(a: &SparseOperator) -> Result<SparseColMat<usize, f64>> {
    let t: Vec<_> = a.mat.triplet_iter().map(|(r, c, &v)| Triplet::new(r, c, v)).collect();
    SparseColMat::try_new_from_triplets(a.nrows(), a.ncols(), &t).map_err(|e| Error::SolverFailure(format!("{e:?}")))
}

fn to_mat(b: &DMatrix<f64>) -> Mat<f64> {
    Mat::from_fn(b.nrows(), b.ncols(), |i, j| b[(i, j)])
}

fn from_mat(m: MatRef<'_, f64>) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// Sparse Cholesky factorization of a symmetric positive-definite operator.
pub struct Cholesky {
    llt: Llt<usize, f64>,
    n: usize,
}

impl Cholesky {
    pub fn new(a: &SparseOperator) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::DimensionMismatch("Cholesky of a non-square operator".into()));
        }
        let llt = to_faer(a)?.sp_cholesky(Side::Lower).map_err(|e| Error::SolverFailure(format!("Cholesky: {e:?}")))?;
        Ok(Cholesky { llt, n: a.nrows() })
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut x = Mat::from_fn(self.n, 1, |i, _| b[i]);
        self.llt.solve_in_place(x.as_mut());
        DVector::from_fn(self.n, |i, _| x[(i, 0)])
    }

    pub fn solve_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut x = to_mat(b);
        self.llt.solve_in_place(x.as_mut());
        from_mat(x.as_ref())
    }
}

/// Sparse LU factorization of a square operator.
pub struct SparseLu {
    lu: Lu<usize, f64>,
    n: usize,
}

impl SparseLu {
    pub fn new(a: &SparseOperator) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::DimensionMismatch("LU of a non-square operator".into()));
        }
        let lu = to_faer(a)?.sp_lu().map_err(|e| Error::SolverFailure(format!("LU: {e:?}")))?;
        Ok(SparseLu { lu, n: a.nrows() })
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut x = Mat::from_fn(self.n, 1, |i, _| b[i]);
        self.lu.solve_in_place(x.as_mut());
        DVector::from_fn(self.n, |i, _| x[(i, 0)])
    }

    pub fn solve_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut x = to_mat(b);
        self.lu.solve_in_place(x.as_mut());
        from_mat(x.as_ref())
    }
}

/// Eigen-decomposition of a symmetric matrix, eigenvalues ascending.
pub fn sym_eigen(a: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let m = to_mat(a);
    let e = m.self_adjoint_eigen(Side::Lower).map_err(|e| Error::EigensolverFailure(format!("{e:?}")))?;
    let s = e.S();
    let vals: Vec<f64> = (0..a.nrows()).map(|i| s[i]).collect();
    Ok((vals, from_mat(e.U())))
}

/// Solves `A x = λ B x` for symmetric `A` and symmetric positive-definite `B`.
pub fn generalized_sym_eigen(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let chol = b
        .clone()
        .cholesky()
        .ok_or_else(|| Error::EigensolverFailure("mass matrix is not positive definite".into()))?;
    let l = chol.l();
    let linv = l.clone().try_inverse().ok_or_else(|| Error::EigensolverFailure("singular Cholesky factor".into()))?;
    let mut c = &linv * a * linv.transpose();
    c = (&c + c.transpose()) * 0.5;
    let (vals, y) = sym_eigen(&c)?;
    let x = linv.transpose() * y;
    Ok((vals, x))
}

/// Eigenvalues of a general square matrix as `(re, im)` pairs.
pub fn eigenvalues(a: &DMatrix<f64>) -> Result<Vec<(f64, f64)>> {
    let m = to_mat(a);
    let ev = m.eigenvalues().map_err(|e| Error::EigensolverFailure(format!("{e:?}")))?;
    Ok(ev.iter().map(|z| (z.re, z.im)).collect())
}

/// Singular values of a dense matrix, descending.
pub fn singular_values(a: &DMatrix<f64>) -> Result<Vec<f64>> {
    let m = to_mat(a);
    let s = m.thin_svd().map_err(|e| Error::SolverFailure(format!("SVD: {e:?}")))?;
    let sv = s.S();
    Ok((0..a.nrows().min(a.ncols())).map(|i| sv[i]).collect())
}

/// Orthonormal basis of the numerical null space of `a` (columns), using a
/// relative singular-value threshold.
pub fn null_space(a: &DMatrix<f64>, rel_tol: f64) -> Result<DMatrix<f64>> {
    let n = a.ncols();
    let rows = a.nrows().max(n);
    let padded = DMatrix::from_fn(rows, n, |i, j| if i < a.nrows() { a[(i, j)] } else { 0.0 });
    let svd = padded.svd(false, true);
    let vt = svd.v_t.ok_or_else(|| Error::SolverFailure("SVD without right vectors".into()))?;
    let smax = svd.singular_values.max();
    let cols: Vec<usize> = (0..n).filter(|&i| svd.singular_values[i] <= rel_tol * smax.max(1.0)).collect();
    Ok(DMatrix::from_fn(n, cols.len(), |i, j| vt[(cols[j], i)]))
}

/// Least-squares solution of `a x = b` with the residual norm.
pub fn least_squares(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<(DVector<f64>, f64)> {
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let x = svd
        .solve(b, 1e-12 * smax.max(1e-300))
        .map_err(|e| Error::SolverFailure(e.to_string()))?;
    let r = (a * &x - b).norm();
    Ok((x, r))
}

/// Smallest eigenpairs of `A x = λ B x` near and above `sigma` by shift-invert
/// Lanczos with full reorthogonalization in the `B` inner product.
///
/// `shifted_solve` applies `(A − σB)⁻¹`; `b_apply` applies `B`.
pub fn lanczos_smallest<S, M>(n: usize, count: usize, sigma: f64, shifted_solve: S, b_apply: M, seed: u64) -> Result<Vec<f64>>
where
    S: Fn(&DVector<f64>) -> DVector<f64>,
    M: Fn(&DVector<f64>) -> DVector<f64>,
{
    let count = count.min(n);
    let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
    let mut q = DVector::from_fn(n, |_, _| rng.gen::<f64>() - 0.5);
    let bq = b_apply(&q);
    q /= q.dot(&bq).sqrt();
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut bbasis: Vec<DVector<f64>> = Vec::new();
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let max_iter = n.min(40 * count + 200);
    let mut check_at = (2 * count + 20).min(max_iter);
    loop {
        let bq = b_apply(&q);
        let mut w = shifted_solve(&bq);
        let a = w.dot(&bq);
        basis.push(q.clone());
        bbasis.push(bq);
        alpha.push(a);
        for _ in 0..2 {
            for (v, bv) in basis.iter().zip(&bbasis) {
                let c = w.dot(bv);
                w.axpy(-c, v, 1.0);
            }
        }
        let bw = b_apply(&w);
        let b = w.dot(&bw).max(0.0).sqrt();
        let m = basis.len();
        let breakdown = b <= 1e-14 * a.abs().max(1e-300);
        if m >= check_at || breakdown || m >= max_iter {
            let t = DMatrix::from_fn(m, m, |i, j| {
                if i == j {
                    alpha[i]
                } else if i + 1 == j {
                    beta[i]
                } else if j + 1 == i {
                    beta[j]
                } else {
                    0.0
                }
            });
            let eig = t.symmetric_eigen();
            let mut idx: Vec<usize> = (0..m).collect();
            idx.sort_by(|&i, &j| eig.eigenvalues[j].partial_cmp(&eig.eigenvalues[i]).unwrap());
            let want = count.min(m);
            let converged = idx[..want].iter().all(|&i| {
                let theta = eig.eigenvalues[i];
                (b * eig.eigenvectors[(m - 1, i)]).abs() <= 1e-10 * theta.abs().max(1e-300)
            });
            if converged || breakdown {
                let mut out: Vec<f64> = idx[..want].iter().map(|&i| sigma + 1.0 / eig.eigenvalues[i]).collect();
                out.sort_by(|a, b| a.partial_cmp(b).unwrap());
                return Ok(out);
            }
            if m >= max_iter {
                return Err(Error::EigensolverFailure(format!("Lanczos did not converge in {m} steps")));
            }
            check_at = (check_at + count.max(10)).min(max_iter);
        }
        beta.push(b);
        q = w / b;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::Space;

    fn path_laplacian(n: usize) -> SparseOperator {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
        }
        SparseOperator::from_triplets(n, n, Space::V, Space::V, &t)
    }

    #[test]
    fn cholesky_and_lu_agree() {
        let a = path_laplacian(20);
        let b = DVector::from_fn(20, |i, _| (i as f64).sin());
        let x1 = Cholesky::new(&a).unwrap().solve(&b);
        let x2 = SparseLu::new(&a).unwrap().solve(&b);
        assert!((&a * &x1 - &b).norm() < 1e-12);
        assert!((x1 - x2).norm() < 1e-10);
    }

    #[test]
    fn lanczos_matches_closed_form() {
        let n = 300;
        let a = path_laplacian(n);
        let sigma = -1e-3;
        let shifted = &a - &SparseOperator::identity(n, Space::V).scale(sigma);
        let chol = Cholesky::new(&shifted).unwrap();
        let vals = lanczos_smallest(n, 8, sigma, |x| chol.solve(x), |x| x.clone(), 7).unwrap();
        for (k, v) in vals.iter().enumerate() {
            let exact = 2.0 - 2.0 * (std::f64::consts::PI * (k + 1) as f64 / (n + 1) as f64).cos();
            assert!((v - exact).abs() < 1e-9 * exact.max(1e-3), "{k}: {v} vs {exact}");
        }
    }

    #[test]
    fn generalized_dense() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 8.0]);
        let b = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0]);
        let (vals, _) = generalized_sym_eigen(&a, &b).unwrap();
        assert!((vals[0] - 2.0).abs() < 1e-12 && (vals[1] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn null_space_dimension() {
        let a = DMatrix::from_row_slice(2, 3, &[1.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(null_space(&a, 1e-9).unwrap().ncols(), 2);
    }
}
