//! Dense matrix kernel for small symmetric problems.
//!
//! Everything downstream works with covariance-sized matrices (d up to a few
//! dozen, Kronecker systems up to d^2), so this module favors plain dense
//! storage and a cyclic Jacobi eigensolver over any external linear algebra:
//! Jacobi is unconditionally stable on symmetric input and keeps the
//! eigenvector basis orthonormal to machine precision, which the square-root
//! and transport-map formulas rely on.
//!
//! Conventions: `vec` stacks columns (column-major), so
//! `vec(A X B) = (B^T (x) A) vec(X)` with `(x)` the Kronecker product.

use crate::{Error, Float, Result};

/// Dense rectangular matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Float> Mat<T> {
    /// Zero matrix of the given shape.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    /// Identity matrix of order `n`.
    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    /// Builds a matrix from a row-major value vector.
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                context: format!("{}x{} matrix needs {} values, got {}", rows, cols, rows * cols, data.len()),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Matrix product `self * rhs`.
    pub fn matmul(&self, rhs: &Mat<T>) -> Mat<T> {
        assert_eq!(self.cols, rhs.rows, "matmul shape mismatch");
        let mut out = Mat::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let aik = self[(i, k)];
                if aik == T::zero() {
                    continue;
                }
                for j in 0..rhs.cols {
                    out[(i, j)] += aik * rhs[(k, j)];
                }
            }
        }
        out
    }

    /// Matrix-vector product.
    pub fn matvec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(self.cols, v.len(), "matvec shape mismatch");
        let mut out = vec![T::zero(); self.rows];
        for i in 0..self.rows {
            let mut s = T::zero();
            for j in 0..self.cols {
                s += self[(i, j)] * v[j];
            }
            out[i] = s;
        }
        out
    }

    pub fn transpose(&self) -> Mat<T> {
        let mut out = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(j, i)] = self[(i, j)];
            }
        }
        out
    }

    /// Frobenius norm.
    pub fn frob(&self) -> T {
        self.data.iter().map(|&x| x * x).sum::<T>().sqrt()
    }
}

impl<T: Float> std::ops::Index<(usize, usize)> for Mat<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T: Float> std::ops::IndexMut<(usize, usize)> for Mat<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

/// Symmetric d x d matrix with validated symmetry.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix<T> {
    dim: usize,
    data: Vec<T>,
}

impl<T: Float> SymMatrix<T> {
    /// Builds from `d * d` row-major entries, rejecting asymmetry beyond
    /// an absolute tolerance of 1e-12.
    pub fn new(dim: usize, entries: Vec<T>) -> Result<Self> {
        if dim == 0 || entries.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                context: format!("symmetric matrix of dim {} needs {} entries, got {}", dim, dim * dim, entries.len()),
            });
        }
        let tol = T::c(1e-12);
        for i in 0..dim {
            for j in (i + 1)..dim {
                let delta = (entries[i * dim + j] - entries[j * dim + i]).abs();
                if delta > tol {
                    return Err(Error::NotSymmetric {
                        i,
                        j,
                        delta: delta.to_f64().unwrap_or(f64::NAN),
                    });
                }
            }
        }
        Ok(Self { dim, data: entries })
    }

    /// Builds by evaluating `f(i, j)` on the upper triangle and mirroring,
    /// so the result is symmetric by construction.
    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = vec![T::zero(); dim * dim];
        for i in 0..dim {
            for j in i..dim {
                let v = f(i, j);
                data[i * dim + j] = v;
                data[j * dim + i] = v;
            }
        }
        Self { dim, data }
    }

    /// Symmetrizes an almost-symmetric square matrix as (M + M^T) / 2.
    pub fn symmetrized(m: &Mat<T>) -> Self {
        assert_eq!(m.rows(), m.cols(), "symmetrized needs a square matrix");
        let half = T::c(0.5);
        Self::from_fn(m.rows(), |i, j| (m[(i, j)] + m[(j, i)]) * half)
    }

    pub fn identity(dim: usize) -> Self {
        Self::scaled_identity(dim, T::one())
    }

    /// `s * I`.
    pub fn scaled_identity(dim: usize, s: T) -> Self {
        Self::from_fn(dim, |i, j| if i == j { s } else { T::zero() })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.dim + j]
    }

    /// Sets entry (i, j) and its mirror.
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.dim + j] = v;
        self.data[j * self.dim + i] = v;
    }

    pub fn trace(&self) -> T {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    pub fn frob(&self) -> T {
        self.data.iter().map(|&x| x * x).sum::<T>().sqrt()
    }

    /// Entrywise sum with another symmetric matrix.
    pub fn add(&self, rhs: &SymMatrix<T>) -> SymMatrix<T> {
        assert_eq!(self.dim, rhs.dim, "add dimension mismatch");
        let data = self.data.iter().zip(&rhs.data).map(|(&a, &b)| a + b).collect();
        Self { dim: self.dim, data }
    }

    /// Entrywise difference.
    pub fn sub(&self, rhs: &SymMatrix<T>) -> SymMatrix<T> {
        assert_eq!(self.dim, rhs.dim, "sub dimension mismatch");
        let data = self.data.iter().zip(&rhs.data).map(|(&a, &b)| a - b).collect();
        Self { dim: self.dim, data }
    }

    /// Scalar multiple.
    pub fn scale(&self, s: T) -> SymMatrix<T> {
        let data = self.data.iter().map(|&a| a * s).collect();
        Self { dim: self.dim, data }
    }

    /// Frobenius inner product <self, rhs> = sum_ij self_ij rhs_ij.
    pub fn frob_inner(&self, rhs: &SymMatrix<T>) -> T {
        assert_eq!(self.dim, rhs.dim, "frob_inner dimension mismatch");
        self.data.iter().zip(&rhs.data).map(|(&a, &b)| a * b).sum()
    }

    /// Quadratic form v^T S v.
    pub fn quad_form(&self, v: &[T]) -> T {
        assert_eq!(v.len(), self.dim, "quad_form dimension mismatch");
        let mut total = T::zero();
        for i in 0..self.dim {
            let mut row = T::zero();
            for j in 0..self.dim {
                row += self.get(i, j) * v[j];
            }
            total += v[i] * row;
        }
        total
    }

    pub fn matvec(&self, v: &[T]) -> Vec<T> {
        self.to_mat().matvec(v)
    }

    /// Copy into a general matrix.
    pub fn to_mat(&self) -> Mat<T> {
        Mat { rows: self.dim, cols: self.dim, data: self.data.clone() }
    }
}

/// Eigendecomposition of a symmetric matrix: columns of `u` are orthonormal
/// eigenvectors, `d` the matching eigenvalues sorted descending.
#[derive(Debug, Clone)]
pub struct EigenPair<T> {
    pub u: Mat<T>,
    pub d: Vec<T>,
}

impl<T: Float> EigenPair<T> {
    /// Reassembles `U diag(d) U^T`.
    pub fn reconstruct(&self) -> SymMatrix<T> {
        let n = self.d.len();
        SymMatrix::from_fn(n, |i, j| {
            (0..n).map(|k| self.u[(i, k)] * self.d[k] * self.u[(j, k)]).sum()
        })
    }

    /// Applies `f` to each eigenvalue and reassembles the matrix.
    pub fn map_eigenvalues(&self, mut f: impl FnMut(T) -> T) -> SymMatrix<T> {
        let mapped = EigenPair {
            u: self.u.clone(),
            d: self.d.iter().map(|&x| f(x)).collect(),
        };
        mapped.reconstruct()
    }
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Sweeps over all off-diagonal pairs, annihilating each in turn; stops when
/// the off-diagonal Frobenius mass falls below `1e-14 * |S|_F`, with a cap
/// of 100 sweeps.
///
/// # Errors
///
/// Returns [`Error::EigNonConvergence`] if the cap is reached, which for
/// symmetric input indicates non-finite entries.
pub fn sym_eig<T: Float>(s: &SymMatrix<T>) -> Result<EigenPair<T>> {
    let n = s.dim();
    let mut a = s.to_mat();
    let mut v = Mat::identity(n);
    let mut d: Vec<T> = (0..n).map(|i| a[(i, i)]).collect();
    let mut b = d.clone();
    let mut z = vec![T::zero(); n];
    let tol = T::c(1e-14) * s.frob();
    let max_sweeps = 100;

    let off_frob = |a: &Mat<T>| -> T {
        let mut acc = T::zero();
        for p in 0..n {
            for q in (p + 1)..n {
                acc += a[(p, q)] * a[(p, q)];
            }
        }
        (acc + acc).sqrt()
    };

    for sweep in 0..max_sweeps {
        let off = off_frob(&a);
        if off <= tol {
            return Ok(sorted_descending(v, d));
        }
        // Threshold below which rotations are skipped during the first
        // sweeps; afterwards every nonzero pair is rotated.
        let tresh = if sweep < 3 {
            let mut sum = T::zero();
            for p in 0..n {
                for q in (p + 1)..n {
                    sum += a[(p, q)].abs();
                }
            }
            T::c(0.2) * sum / T::from_usize(n * n).unwrap()
        } else {
            T::zero()
        };
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                let g = T::c(100.0) * apq.abs();
                // Skip once the entry is negligible against both diagonals.
                if sweep > 3 && d[p].abs() + g == d[p].abs() && d[q].abs() + g == d[q].abs() {
                    a[(p, q)] = T::zero();
                    a[(q, p)] = T::zero();
                    continue;
                }
                if apq.abs() <= tresh {
                    continue;
                }
                let h = d[q] - d[p];
                let t = if h.abs() + g == h.abs() {
                    apq / h
                } else {
                    let theta = T::c(0.5) * h / apq;
                    let mut t = T::one() / (theta.abs() + (T::one() + theta * theta).sqrt());
                    if theta < T::zero() {
                        t = -t;
                    }
                    t
                };
                let c = T::one() / (T::one() + t * t).sqrt();
                let sn = t * c;
                let tau = sn / (T::one() + c);
                let h = t * apq;
                z[p] -= h;
                z[q] += h;
                d[p] -= h;
                d[q] += h;
                a[(p, q)] = T::zero();
                a[(q, p)] = T::zero();
                let rotate = |m: &mut Mat<T>, i: usize, j: usize, k: usize, l: usize| {
                    let g = m[(i, j)];
                    let h = m[(k, l)];
                    m[(i, j)] = g - sn * (h + g * tau);
                    m[(k, l)] = h + sn * (g - h * tau);
                };
                for j in 0..p {
                    rotate(&mut a, j, p, j, q);
                    a[(p, j)] = a[(j, p)];
                    a[(q, j)] = a[(j, q)];
                }
                for j in (p + 1)..q {
                    rotate(&mut a, p, j, j, q);
                    a[(j, p)] = a[(p, j)];
                    a[(q, j)] = a[(j, q)];
                }
                for j in (q + 1)..n {
                    rotate(&mut a, p, j, q, j);
                    a[(j, p)] = a[(p, j)];
                    a[(j, q)] = a[(q, j)];
                }
                for j in 0..n {
                    rotate(&mut v, j, p, j, q);
                }
            }
        }
        for j in 0..n {
            b[j] += z[j];
            d[j] = b[j];
            z[j] = T::zero();
        }
    }
    Err(Error::EigNonConvergence {
        sweeps: max_sweeps,
        offdiag: off_frob(&a).to_f64().unwrap_or(f64::NAN),
    })
}

fn sorted_descending<T: Float>(v: Mat<T>, d: Vec<T>) -> EigenPair<T> {
    let n = d.len();
    let mut idx: Vec<usize> = (0..n).collect();
    // Stable sort keeps the original order among exactly equal eigenvalues.
    idx.sort_by(|&i, &j| d[j].partial_cmp(&d[i]).expect("non-finite eigenvalue"));
    let mut u = Mat::zeros(n, n);
    let mut dd = Vec::with_capacity(n);
    for (new_col, &old_col) in idx.iter().enumerate() {
        dd.push(d[old_col]);
        for r in 0..n {
            u[(r, new_col)] = v[(r, old_col)];
        }
    }
    EigenPair { u, d: dd }
}

/// Principal square root of a positive semidefinite matrix.
///
/// Eigenvalues in `[-1e-10, 0)` are treated as accumulated floating-point
/// noise and clamped to zero.
///
/// # Errors
///
/// Returns [`Error::NotPsd`] when an eigenvalue falls below `-1e-10`.
pub fn sqrtm_psd<T: Float>(s: &SymMatrix<T>) -> Result<SymMatrix<T>> {
    let eig = sym_eig(s)?;
    let floor = T::c(-1e-10);
    for &lambda in &eig.d {
        if lambda < floor {
            return Err(Error::NotPsd { value: lambda.to_f64().unwrap_or(f64::NAN) });
        }
    }
    Ok(eig.map_eigenvalues(|lambda| lambda.max(T::zero()).sqrt()))
}

/// Kronecker product: for p x r and q x s inputs, the (pq) x (rs) matrix
/// whose (i, j) block is `a[(i, j)] * b`.
pub fn kron<T: Float>(a: &Mat<T>, b: &Mat<T>) -> Mat<T> {
    let (p, r) = (a.rows(), a.cols());
    let (q, s) = (b.rows(), b.cols());
    let mut out = Mat::zeros(p * q, r * s);
    for i in 0..p {
        for j in 0..r {
            let aij = a[(i, j)];
            if aij == T::zero() {
                continue;
            }
            for k in 0..q {
                for l in 0..s {
                    out[(i * q + k, j * s + l)] = aij * b[(k, l)];
                }
            }
        }
    }
    out
}

/// Stacks the columns of `m` into a vector.
pub fn vec<T: Float>(m: &Mat<T>) -> Vec<T> {
    let mut out = Vec::with_capacity(m.rows() * m.cols());
    for j in 0..m.cols() {
        for i in 0..m.rows() {
            out.push(m[(i, j)]);
        }
    }
    out
}

/// Inverse of [`vec()`]: rebuilds a `rows x cols` matrix from a column-major
/// vector.
///
/// # Errors
///
/// Returns a dimension error when `v.len() != rows * cols`.
pub fn unvec<T: Float>(v: &[T], rows: usize, cols: usize) -> Result<Mat<T>> {
    if v.len() != rows * cols {
        return Err(Error::DimensionMismatch {
            context: format!("unvec into {}x{} needs {} values, got {}", rows, cols, rows * cols, v.len()),
        });
    }
    let mut out = Mat::zeros(rows, cols);
    for j in 0..cols {
        for i in 0..rows {
            out[(i, j)] = v[j * rows + i];
        }
    }
    Ok(out)
}

/// Solves `A x = b` for symmetric positive definite `A` by Cholesky
/// factorization.
///
/// # Errors
///
/// Returns [`Error::SingularCovariance`] when a pivot is not strictly
/// positive, i.e. `A` is singular or indefinite.
pub fn cholesky_solve<T: Float>(a: &SymMatrix<T>, rhs: &[T]) -> Result<Vec<T>> {
    let n = a.dim();
    if rhs.len() != n {
        return Err(Error::DimensionMismatch {
            context: format!("cholesky_solve rhs length {} vs matrix dim {}", rhs.len(), n),
        });
    }
    let mut l = vec![T::zero(); n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a.get(i, j);
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if s <= T::zero() {
                    return Err(Error::SingularCovariance {
                        context: format!("Cholesky pivot {} is {}", i, s),
                    });
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    // forward substitution L y = b
    let mut y = vec![T::zero(); n];
    for i in 0..n {
        let mut s = rhs[i];
        for k in 0..i {
            s -= l[i * n + k] * y[k];
        }
        y[i] = s / l[i * n + i];
    }
    // back substitution L^T x = y
    let mut x = vec![T::zero(); n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s -= l[k * n + i] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
    Ok(x)
}
