//! Clustering and one-dimensional factor discovery built on the Wasserstein
//! geometry of Gaussian measures.
//!
//! The guiding idea: a clustering (or, continuously, a latent variable)
//! splits a dataset into conditional distributions. Summarizing each
//! conditional as a Gaussian, the quality of the split is measured by how
//! concentrated the *Wasserstein barycenter* of those Gaussians is: the
//! tighter the barycenter, the more of the data's variability the latent
//! factor explains. Minimizing the barycenter's total variance over soft or
//! hard assignments yields a family of clustering algorithms that contains
//! classical k-means as the special case of equal weights and equal
//! isotropic covariances.
//!
//! Module map:
//!
//! * [`matcore`]: dense symmetric-matrix kernel: Jacobi eigendecomposition,
//!   principal square root, Kronecker products, column-major vectorization.
//! * [`gaussbary`]: Gaussian Wasserstein geometry: barycenter fixed point,
//!   optimal affine transport maps, pairwise W2 costs.
//! * [`cluster`]: discrete factors: barycentric clustering (soft and hard,
//!   general and isotropic), k-means and fuzzy k-means baselines.
//! * [`factor`]: continuous factors: Gaussian soft assignments over the
//!   real line, stochastic gradient descent on the barycenter spread, and
//!   principal-curve export.
//! * [`eval`]: synthetic benchmark generators, permutation-maximized
//!   correctness rate, column normalization.
//!
//! All numerical code is generic over the scalar type through the [`Float`]
//! trait; `f64` aliases for the main types are exported at the crate root.

use std::fmt;

pub mod cluster;
pub mod eval;
pub mod factor;
pub mod gaussbary;
pub mod matcore;

/// Scalar abstraction for all numerical routines.
///
/// `f64` is the intended production type; `f32` satisfies the same bounds
/// but several documented tolerances sit below its precision.
pub trait Float:
    num_traits::Float
    + num_traits::FromPrimitive
    + num_traits::NumAssign
    + std::iter::Sum
    + fmt::Debug
    + fmt::Display
    + 'static
{
    /// Shorthand for lossy conversion from `f64` constants.
    fn c(x: f64) -> Self {
        Self::from_f64(x).expect("constant not representable in this scalar type")
    }
}

impl Float for f32 {}
impl Float for f64 {}

/// Errors reported by the numerical layers.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("matrix is not symmetric: |S[{i}][{j}] - S[{j}][{i}]| = {delta} exceeds 1e-12")]
    NotSymmetric { i: usize, j: usize, delta: f64 },
    #[error("matrix is not positive semidefinite: eigenvalue {value} below -1e-10")]
    NotPsd { value: f64 },
    #[error("Jacobi eigendecomposition did not converge within {sweeps} sweeps (off-diagonal {offdiag})")]
    EigNonConvergence { sweeps: usize, offdiag: f64 },
    #[error("dimension mismatch: {context}")]
    DimensionMismatch { context: String },
    #[error("weights must sum to 1 (got {sum})")]
    BadWeights { sum: f64 },
    #[error("degenerate barycenter: every weighted covariance is singular; regularize the inputs")]
    DegenerateBarycenter,
    #[error("barycenter fixed point not reached in {iters} iterations (relative residual {residual})")]
    BarycenterNonConvergence { iters: usize, residual: f64 },
    #[error("singular covariance: {context}; add a covariance regularizer")]
    SingularCovariance { context: String },
    #[error("cluster {k} lost all mass during stats computation")]
    EmptyCluster { k: usize },
    #[error("conditional density underflow at z = {z}")]
    DensityUnderflow { z: f64 },
    #[error("latent descent diverged: |zbar| grew by more than 1e6x (at iteration {iter})")]
    Diverged { iter: usize, trace: Vec<f64> },
    #[error("label {label} outside valid range 1..={k}")]
    LabelOutOfRange { label: usize, k: usize },
    #[error("invalid argument: {context}")]
    InvalidArgument { context: String },
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// An N x d dataset stored row-major; rows are samples.
#[derive(Debug, Clone, PartialEq)]
pub struct DataSet<T> {
    n: usize,
    d: usize,
    values: Vec<T>,
}

impl<T: Float> DataSet<T> {
    /// Builds a dataset from `n * d` row-major values.
    pub fn new(n: usize, d: usize, values: Vec<T>) -> Result<Self> {
        if values.len() != n * d || d == 0 {
            return Err(Error::DimensionMismatch {
                context: format!("dataset expects {}x{} = {} values, got {}", n, d, n * d, values.len()),
            });
        }
        Ok(Self { n, d, values })
    }

    /// Builds a dataset from sample rows, which must all share one length.
    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if d == 0 {
            return Err(Error::DimensionMismatch {
                context: "dataset needs at least one nonempty row".into(),
            });
        }
        let mut values = Vec::with_capacity(rows.len() * d);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != d {
                return Err(Error::DimensionMismatch {
                    context: format!("row {} has length {}, expected {}", i, r.len(), d),
                });
            }
            values.extend_from_slice(r);
        }
        Ok(Self { n: rows.len(), d, values })
    }

    /// Number of samples.
    pub fn len(&self) -> usize {
        self.n
    }

    /// True when the dataset holds no samples.
    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Sample dimension.
    pub fn dim(&self) -> usize {
        self.d
    }

    /// Row `i` as a slice of length `dim()`.
    pub fn row(&self, i: usize) -> &[T] {
        &self.values[i * self.d..(i + 1) * self.d]
    }

    /// All values, row-major.
    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// Mean over all rows.
    pub fn mean(&self) -> Vec<T> {
        let mut m = vec![T::zero(); self.d];
        for i in 0..self.n {
            for (mj, &x) in m.iter_mut().zip(self.row(i)) {
                *mj += x;
            }
        }
        let inv = T::one() / T::from_usize(self.n).unwrap();
        for mj in &mut m {
            *mj *= inv;
        }
        m
    }
}

/// Squared Euclidean distance between two equal-length slices.
pub(crate) fn dist2<T: Float>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum()
}

/// One standard normal draw by the Box-Muller transform. Consumes exactly
/// two uniforms per call so draw sequences stay reproducible.
pub(crate) fn normal_f64<R: rand::Rng>(rng: &mut R) -> f64 {
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

pub type DataSet64 = DataSet<f64>;
pub type SymMatrix64 = matcore::SymMatrix<f64>;
pub type Mat64 = matcore::Mat<f64>;
pub type GaussianCluster64 = gaussbary::GaussianCluster<f64>;
pub type BarycenterGaussian64 = gaussbary::BarycenterGaussian<f64>;
pub type AffineMap64 = gaussbary::AffineMap<f64>;
pub type AssignmentMatrix64 = cluster::AssignmentMatrix<f64>;
pub type ClusterConfig64 = cluster::ClusterConfig<f64>;
pub type LatentState64 = factor::LatentState<f64>;
pub type LabeledDataSet64 = eval::LabeledDataSet<f64>;
