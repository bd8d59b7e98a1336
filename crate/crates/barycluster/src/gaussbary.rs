//! Wasserstein geometry of Gaussian measures.
//!
//! For Gaussians the 2-Wasserstein distance has a closed form in the means
//! and covariances, optimal transport maps are affine, and the barycenter of
//! a weighted family is again Gaussian: its mean is the weighted mean and
//! its covariance solves the fixed-point equation
//!
//! ```text
//!     S = sum_k P_k (S^{1/2} Sigma_k S^{1/2})^{1/2}.
//! ```
//!
//! This module computes that barycenter by fixed-point iteration, the
//! transport maps into it, pairwise transport costs, and the identity
//! linking the two ("scatter identity"): the weighted transport cost from
//! the clusters to their barycenter equals half the weighted sum of all
//! pairwise costs.

use crate::matcore::{sqrtm_psd, sym_eig, SymMatrix};
use crate::{dist2, Error, Float, Result};

/// A weighted Gaussian component: weight `P_k`, mean, covariance.
#[derive(Debug, Clone)]
pub struct GaussianCluster<T> {
    pub weight: T,
    pub mean: Vec<T>,
    pub cov: SymMatrix<T>,
}

impl<T: Float> GaussianCluster<T> {
    /// Builds a cluster, checking `weight` lies in `[0, 1]` and the mean
    /// matches the covariance dimension.
    pub fn new(weight: T, mean: Vec<T>, cov: SymMatrix<T>) -> Result<Self> {
        if weight < T::zero() || weight > T::one() {
            return Err(Error::InvalidArgument {
                context: format!("cluster weight {} outside [0, 1]", weight),
            });
        }
        if mean.len() != cov.dim() {
            return Err(Error::DimensionMismatch {
                context: format!("mean length {} vs covariance dim {}", mean.len(), cov.dim()),
            });
        }
        Ok(Self { weight, mean, cov })
    }

    /// Scalar spread sigma_k = sqrt(Tr Sigma_k).
    pub fn std(&self) -> T {
        self.cov.trace().max(T::zero()).sqrt()
    }
}

/// The Gaussian barycenter of a cluster family.
#[derive(Debug, Clone)]
pub struct BarycenterGaussian<T> {
    pub mean: Vec<T>,
    pub cov: SymMatrix<T>,
}

impl<T: Float> BarycenterGaussian<T> {
    /// Scalar spread sigma_y = sqrt(Tr Sigma_y).
    pub fn std(&self) -> T {
        self.cov.trace().max(T::zero()).sqrt()
    }
}

/// Affine map `x -> A x + b` with symmetric positive definite `A`.
#[derive(Debug, Clone)]
pub struct AffineMap<T> {
    pub a: SymMatrix<T>,
    pub b: Vec<T>,
}

impl<T: Float> AffineMap<T> {
    /// Applies the map to a point.
    pub fn apply(&self, x: &[T]) -> Vec<T> {
        let mut out = self.a.matvec(x);
        for (o, &bi) in out.iter_mut().zip(&self.b) {
            *o += bi;
        }
        out
    }
}

fn check_weights<T: Float>(clusters: &[GaussianCluster<T>]) -> Result<usize> {
    if clusters.is_empty() {
        return Err(Error::InvalidArgument { context: "empty cluster list".into() });
    }
    let d = clusters[0].cov.dim();
    for c in clusters {
        if c.cov.dim() != d || c.mean.len() != d {
            return Err(Error::DimensionMismatch {
                context: "clusters must share one dimension".into(),
            });
        }
    }
    let sum: T = clusters.iter().map(|c| c.weight).sum();
    if (sum - T::one()).abs() > T::c(1e-10) {
        return Err(Error::BadWeights { sum: sum.to_f64().unwrap_or(f64::NAN) });
    }
    Ok(d)
}

/// Weighted average of standard deviations: the barycenter of isotropic
/// Gaussians is isotropic with exactly this spread.
pub fn isotropic_std<T: Float>(sigmas: &[T], weights: &[T]) -> T {
    debug_assert_eq!(sigmas.len(), weights.len());
    sigmas.iter().zip(weights).map(|(&s, &w)| s * w).sum()
}

/// Computes the Wasserstein barycenter of a weighted Gaussian family.
///
/// The mean is `sum_k P_k mean_k`. The covariance is found by iterating
///
/// ```text
///     S <- S^{-1/2} (sum_k P_k (S^{1/2} Sigma_k S^{1/2})^{1/2})^2 S^{-1/2}
/// ```
///
/// from the linear average `S(0) = sum_k P_k Sigma_k`, stopping when either
/// the relative Frobenius change drops below 1e-12 or the fixed-point
/// residual drops below 1e-10 relative, with a cap of 1000 iterations.
///
/// # Errors
///
/// * [`Error::BadWeights`] if the weights do not sum to 1 within 1e-10.
/// * [`Error::DegenerateBarycenter`] if no positively-weighted cluster has
///   a positive definite covariance; regularize the inputs first.
/// * [`Error::BarycenterNonConvergence`] if the cap is reached.
pub fn barycenter<T: Float>(clusters: &[GaussianCluster<T>]) -> Result<BarycenterGaussian<T>> {
    let d = check_weights(clusters)?;
    let mut mean = vec![T::zero(); d];
    for c in clusters {
        for (m, &x) in mean.iter_mut().zip(&c.mean) {
            *m += c.weight * x;
        }
    }

    let any_pd = clusters.iter().any(|c| {
        c.weight > T::zero()
            && sym_eig(&c.cov)
                .map(|e| {
                    let lmax = e.d[0].max(T::zero());
                    *e.d.last().unwrap() > T::c(1e-12) * lmax && lmax > T::zero()
                })
                .unwrap_or(false)
    });
    if !any_pd {
        return Err(Error::DegenerateBarycenter);
    }

    let mut s = SymMatrix::from_fn(d, |i, j| {
        clusters.iter().map(|c| c.weight * c.cov.get(i, j)).sum::<T>()
    });

    let cap = 1000;
    let mut residual = T::infinity();
    for _ in 0..cap {
        let eig = sym_eig(&s)?;
        let lmax = eig.d[0].max(T::zero());
        let floor = T::c(1e-15) * lmax;
        let root = eig.map_eigenvalues(|l| l.max(T::zero()).sqrt());
        let inv_root = eig.map_eigenvalues(|l| {
            if l > floor {
                T::one() / l.sqrt()
            } else {
                T::zero()
            }
        });

        let mut inner_sum = SymMatrix::from_fn(d, |_, _| T::zero());
        for c in clusters {
            if c.weight == T::zero() {
                continue;
            }
            let m = root.to_mat().matmul(&c.cov.to_mat()).matmul(&root.to_mat());
            let half = sqrtm_psd(&SymMatrix::symmetrized(&m))?;
            inner_sum = inner_sum.add(&half.scale(c.weight));
        }

        residual = s.sub(&inner_sum).frob() / s.frob().max(T::min_positive_value());
        if residual <= T::c(1e-10) {
            return Ok(BarycenterGaussian { mean, cov: s });
        }

        let squared = inner_sum.to_mat().matmul(&inner_sum.to_mat());
        let next_m = inv_root.to_mat().matmul(&squared).matmul(&inv_root.to_mat());
        let next = SymMatrix::symmetrized(&next_m);
        let change = next.sub(&s).frob() / s.frob().max(T::min_positive_value());
        s = next;
        if change <= T::c(1e-12) {
            return Ok(BarycenterGaussian { mean, cov: s });
        }
    }
    Err(Error::BarycenterNonConvergence {
        iters: cap,
        residual: residual.to_f64().unwrap_or(f64::NAN),
    })
}

/// Optimal transport map from one Gaussian onto another: the affine map
/// `T(x) = A x + b` with
///
/// ```text
///     A = S^{-1/2} (S^{1/2} S_y S^{1/2})^{1/2} S^{-1/2},    b = y - A xbar,
/// ```
///
/// where `S` is the source covariance and `(S_y, y)` the target. Pushing the
/// source forward through the map reproduces the target exactly.
///
/// # Errors
///
/// [`Error::SingularCovariance`] when the source covariance is not positive
/// definite; add a covariance regularizer and retry.
pub fn ot_affine_map<T: Float>(
    from: &GaussianCluster<T>,
    to: &BarycenterGaussian<T>,
) -> Result<AffineMap<T>> {
    let d = from.cov.dim();
    if to.cov.dim() != d || to.mean.len() != d {
        return Err(Error::DimensionMismatch {
            context: "transport endpoints must share one dimension".into(),
        });
    }
    let eig = sym_eig(&from.cov)?;
    let lmax = eig.d[0].max(T::zero());
    let lmin = *eig.d.last().unwrap();
    if lmin <= T::c(1e-14) * lmax || lmax == T::zero() {
        return Err(Error::SingularCovariance {
            context: format!("source covariance has eigenvalue {}", lmin),
        });
    }
    let root = eig.map_eigenvalues(|l| l.sqrt());
    let inv_root = eig.map_eigenvalues(|l| T::one() / l.sqrt());
    let mid_m = root.to_mat().matmul(&to.cov.to_mat()).matmul(&root.to_mat());
    let mid = sqrtm_psd(&SymMatrix::symmetrized(&mid_m))?;
    let a_m = inv_root.to_mat().matmul(&mid.to_mat()).matmul(&inv_root.to_mat());
    let a = SymMatrix::symmetrized(&a_m);
    let ax = a.matvec(&from.mean);
    let b = to.mean.iter().zip(&ax).map(|(&y, &v)| y - v).collect();
    Ok(AffineMap { a, b })
}

/// Squared 2-Wasserstein distance between two Gaussians:
///
/// ```text
///     |m1 - m2|^2 + Tr S1 + Tr S2 - 2 Tr[(S2^{1/2} S1 S2^{1/2})^{1/2}].
/// ```
///
/// Results in `[-1e-10, 0)` are floating-point cancellation near zero and
/// are clamped to 0.
pub fn w2_gaussian<T: Float>(g1: &GaussianCluster<T>, g2: &GaussianCluster<T>) -> Result<T> {
    if g1.cov.dim() != g2.cov.dim() || g1.mean.len() != g2.mean.len() {
        return Err(Error::DimensionMismatch {
            context: "w2 arguments must share one dimension".into(),
        });
    }
    let root2 = sqrtm_psd(&g2.cov)?;
    let inner = root2.to_mat().matmul(&g1.cov.to_mat()).matmul(&root2.to_mat());
    let cross = sqrtm_psd(&SymMatrix::symmetrized(&inner))?.trace();
    let val = dist2(&g1.mean, &g2.mean) + g1.cov.trace() + g2.cov.trace() - (cross + cross);
    if val < T::zero() && val >= T::c(-1e-10) {
        return Ok(T::zero());
    }
    Ok(val)
}

/// Total pairwise transport cost `1/2 sum_{k,h} P_k P_h W2^2(rho_k, rho_h)`.
///
/// For positive definite inputs this equals the weighted cost from the
/// clusters to their barycenter, `sum_k P_k W2^2(rho_k, mu)`.
pub fn pairwise_total_cost<T: Float>(clusters: &[GaussianCluster<T>]) -> Result<T> {
    check_weights(clusters)?;
    let mut total = T::zero();
    for k in 0..clusters.len() {
        for h in (k + 1)..clusters.len() {
            let w = clusters[k].weight * clusters[h].weight;
            if w == T::zero() {
                continue;
            }
            total += w * w2_gaussian(&clusters[k], &clusters[h])?;
        }
    }
    Ok(total)
}
