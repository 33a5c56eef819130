//! Dense linear-algebra helpers: symmetric-matrix vectorization, sorted
//! eigendecompositions and rank-revealing bases.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::ConeError;

/// Number of coordinates used by a symmetric matrix of order `n`.
pub fn svec_dim(n: usize) -> usize {
    n * (n + 1) / 2
}

/// Recovers the order of a symmetric matrix from its vectorized length.
pub fn order_from_svec_dim(len: usize) -> Option<usize> {
    let mut n = 0;
    while svec_dim(n) < len {
        n += 1;
    }
    (svec_dim(n) == len).then_some(n)
}

/// Upper triangle, column by column, off-diagonal entries scaled by √2 so
/// that `svec(A)·svec(B) = tr(AB)`.
pub fn svec(a: &DMatrix<f64>) -> DVector<f64> {
    let n = a.nrows();
    let mut out = DVector::zeros(svec_dim(n));
    let mut k = 0;
    for j in 0..n {
        for i in 0..=j {
            out[k] = if i == j {
                a[(i, i)]
            } else {
                0.5 * (a[(i, j)] + a[(j, i)]) * std::f64::consts::SQRT_2
            };
            k += 1;
        }
    }
    out
}

/// Inverse of [`svec`].
pub fn smat(v: &[f64], n: usize) -> DMatrix<f64> {
    debug_assert_eq!(v.len(), svec_dim(n));
    let mut a = DMatrix::zeros(n, n);
    let mut k = 0;
    for j in 0..n {
        for i in 0..=j {
            if i == j {
                a[(i, i)] = v[k];
            } else {
                let x = v[k] / std::f64::consts::SQRT_2;
                a[(i, j)] = x;
                a[(j, i)] = x;
            }
            k += 1;
        }
    }
    a
}

/// Eigendecomposition of a symmetric matrix with eigenvalues in decreasing
/// order. Columns of the returned matrix are the eigenvectors.
pub fn sym_eigen(a: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>), ConeError> {
    if a.iter().any(|x| !x.is_finite()) {
        return Err(ConeError::NonFinite);
    }
    let sym = 0.5 * (a + a.transpose());
    let eig = SymmetricEigen::new(sym.clone());
    let (lam, p) = jacobi_polish(&sym, eig.eigenvectors);
    let n = a.nrows();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| lam[j].total_cmp(&lam[i]));
    let vals = DVector::from_iterator(n, idx.iter().map(|&i| lam[i]));
    let mut vecs = DMatrix::zeros(n, n);
    for (c, &i) in idx.iter().enumerate() {
        vecs.set_column(c, &p.column(i));
    }
    Ok((vals, vecs))
}

/// Cyclic Jacobi sweeps on `PᵀAP`. The QR-based solver can stop with
/// off-diagonal mass near `1e-9‖A‖`; a few rotations bring it to roundoff.
fn jacobi_polish(a: &DMatrix<f64>, mut p: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let mut b = p.transpose() * a * &p;
    let scale = a.norm().max(f64::MIN_POSITIVE);
    let mut last = f64::INFINITY;
    for _ in 0..30 {
        let mut off = 0.0_f64;
        for i in 0..n {
            for j in i + 1..n {
                off += b[(i, j)] * b[(i, j)];
            }
        }
        let off = off.sqrt();
        // Stop at roundoff or once a sweep no longer halves the mass.
        if off <= f64::EPSILON * scale || off > 0.5 * last {
            break;
        }
        last = off;
        for i in 0..n {
            for j in i + 1..n {
                let bij = b[(i, j)];
                if bij == 0.0 {
                    continue;
                }
                let theta = (b[(j, j)] - b[(i, i)]) / (2.0 * bij);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (bki, bkj) = (b[(k, i)], b[(k, j)]);
                    b[(k, i)] = c * bki - s * bkj;
                    b[(k, j)] = s * bki + c * bkj;
                }
                for k in 0..n {
                    let (bik, bjk) = (b[(i, k)], b[(j, k)]);
                    b[(i, k)] = c * bik - s * bjk;
                    b[(j, k)] = s * bik + c * bjk;
                }
                for k in 0..n {
                    let (pki, pkj) = (p[(k, i)], p[(k, j)]);
                    p[(k, i)] = c * pki - s * pkj;
                    p[(k, j)] = s * pki + c * pkj;
                }
            }
        }
    }
    ((0..n).map(|i| b[(i, i)]).collect(), p)
}

/// Rebuilds `P diag(vals) Pᵀ`.
pub fn from_eigen(vals: &DVector<f64>, p: &DMatrix<f64>) -> DMatrix<f64> {
    let scaled = p * DMatrix::from_diagonal(vals);
    let out = scaled * p.transpose();
    0.5 * (&out + out.transpose())
}

/// Relative threshold used to classify eigenvalues and singular values.
pub fn zero_threshold(zero_tol: f64, scale: f64) -> f64 {
    zero_tol * scale.max(1.0)
}

/// Orthonormal basis of the null space of `m`; singular values below
/// `zero_tol·max(1, σ_max)` count as zero.
pub fn kernel_basis(m: &DMatrix<f64>, zero_tol: f64) -> DMatrix<f64> {
    let cols = m.ncols();
    if cols == 0 {
        return DMatrix::zeros(0, 0);
    }
    if m.nrows() == 0 {
        return DMatrix::identity(cols, cols);
    }
    // The right singular vectors of the square Gram-padded matrix span the
    // full column space, including the kernel.
    let mut padded = DMatrix::zeros(m.nrows().max(cols), cols);
    padded.view_mut((0, 0), (m.nrows(), cols)).copy_from(m);
    let svd = padded.svd(false, true);
    let vt = svd.v_t.expect("requested V^T");
    let smax = svd.singular_values.max();
    let thr = zero_threshold(zero_tol, smax);
    let kept: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] <= thr)
        .collect();
    let mut out = DMatrix::zeros(cols, kept.len());
    for (c, &i) in kept.iter().enumerate() {
        out.set_column(c, &vt.row(i).transpose());
    }
    out
}

/// Orthonormal basis of the column space of `m`.
pub fn range_basis(m: &DMatrix<f64>, zero_tol: f64) -> DMatrix<f64> {
    let rows = m.nrows();
    if m.ncols() == 0 || rows == 0 {
        return DMatrix::zeros(rows, 0);
    }
    let mut padded = DMatrix::zeros(rows, m.ncols().max(rows));
    padded.view_mut((0, 0), (rows, m.ncols())).copy_from(m);
    let svd = padded.svd(true, false);
    let u = svd.u.expect("requested U");
    let thr = zero_threshold(zero_tol, svd.singular_values.max());
    let kept: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > thr)
        .collect();
    let mut out = DMatrix::zeros(rows, kept.len());
    for (c, &i) in kept.iter().enumerate() {
        out.set_column(c, &u.column(i));
    }
    out
}

/// Numerical rank with threshold `zero_tol·max(1, σ_max)`.
pub fn rank(m: &DMatrix<f64>, zero_tol: f64) -> usize {
    range_basis(m, zero_tol).ncols()
}

/// Moore-Penrose pseudo-inverse with the shared rank policy.
pub fn pinv(m: &DMatrix<f64>, zero_tol: f64) -> DMatrix<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return DMatrix::zeros(m.ncols(), m.nrows());
    }
    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let thr = (zero_tol * smax).max(f64::MIN_POSITIVE);
    svd.pseudo_inverse(thr)
        .unwrap_or_else(|_| DMatrix::zeros(m.ncols(), m.nrows()))
}

/// The affine set `{x : M x = r}` with a cached pseudo-inverse.
#[derive(Debug, Clone)]
pub struct AffineSet {
    m: DMatrix<f64>,
    m_pinv: DMatrix<f64>,
    r: DVector<f64>,
}

impl AffineSet {
    pub fn new(m: DMatrix<f64>, r: DVector<f64>, zero_tol: f64) -> Self {
        let m_pinv = pinv(&m, zero_tol);
        AffineSet { m, m_pinv, r }
    }

    /// Least-norm solution of `M x = r` in the least-squares sense.
    pub fn least_norm(&self) -> DVector<f64> {
        &self.m_pinv * &self.r
    }

    /// `‖M x − r‖` at the least-norm point; zero iff the set is nonempty.
    pub fn inconsistency(&self) -> f64 {
        (&self.m * self.least_norm() - &self.r).norm()
    }

    pub fn residual(&self, x: &DVector<f64>) -> f64 {
        (&self.m * x - &self.r).norm()
    }

    pub fn project(&self, x: &DVector<f64>) -> DVector<f64> {
        x - &self.m_pinv * (&self.m * x - &self.r)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn rhs(&self) -> &DVector<f64> {
        &self.r
    }
}

/// Orthonormal-column projector `B Bᵀ x`.
pub fn project_onto_span(basis: &DMatrix<f64>, x: &DVector<f64>) -> DVector<f64> {
    if basis.ncols() == 0 {
        return DVector::zeros(x.len());
    }
    basis * (basis.transpose() * x)
}
