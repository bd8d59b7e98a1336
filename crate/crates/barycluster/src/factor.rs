//! Continuous latent factor discovery on the real line.
//!
//! Each sample x_i carries a latent coordinate z̄_i; a Gaussian kernel of
//! bandwidth ε around the coordinates defines a mixture density ν on the
//! line together with Bayes-conditional statistics x̄(z), σ(z) at every z.
//! The quality of the coordinates is the expected conditional spread
//! `E_ν[σ(z)]`: stochastic gradient descent on that objective
//! ([`run_afd`]) pulls the coordinates toward an arrangement whose curve of
//! conditional means ([`principal_curve`]) threads the data.

use crate::matcore::{sym_eig, SymMatrix};
use crate::{dist2, normal_f64, DataSet, Error, Float, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Default node count for [`sigma_quadrature`].
pub const QUAD_NODES: usize = 801;

/// Latent coordinates plus the bandwidth they induce.
#[derive(Debug, Clone)]
pub struct LatentState<T> {
    /// One latent mean per sample.
    pub zbar: Vec<T>,
    /// Proportion constant relating bandwidth to coordinate scale, in (0,1).
    pub alpha: T,
    /// Kernel variance, kept at the floored bandwidth rule of
    /// [`LatentState::recompute_eps2`].
    pub eps2: T,
}

impl<T: Float> LatentState<T> {
    pub fn new(zbar: Vec<T>, alpha: T) -> Result<Self> {
        if zbar.is_empty() {
            return Err(Error::InvalidArgument { context: "empty latent vector".into() });
        }
        if alpha <= T::zero() || alpha >= T::one() {
            return Err(Error::InvalidArgument {
                context: format!("alpha must lie in (0,1), got {}", alpha),
            });
        }
        let mut s = Self { zbar, alpha, eps2: T::zero() };
        s.recompute_eps2();
        Ok(s)
    }

    /// Re-derives `eps2` from the current coordinates:
    /// `alpha^2 |zbar|^2 / N`, floored at `1e-12 (1 + |zbar|^2 / N)` so the
    /// all-zero start stays usable.
    pub fn recompute_eps2(&mut self) {
        let n = T::from_usize(self.zbar.len()).unwrap();
        let nrm2: T = self.zbar.iter().map(|&z| z * z).sum();
        let raw = self.alpha * self.alpha * nrm2 / n;
        let floor = T::c(1e-12) * (T::one() + nrm2 / n);
        self.eps2 = raw.max(floor);
    }
}

/// Mean latent energy `alpha^2 |zbar|^2 / N`, the unfloored bandwidth rule.
pub fn latent_eps2<T: Float>(zbar: &[T], alpha: T) -> T {
    let n = T::from_usize(zbar.len()).unwrap();
    let nrm2: T = zbar.iter().map(|&z| z * z).sum();
    alpha * alpha * nrm2 / n
}

/// Bayes-conditional statistics of the data at one latent value.
#[derive(Debug, Clone)]
pub struct ConditionalStats<T> {
    pub z: T,
    /// Conditional mean x̄(z).
    pub mean: Vec<T>,
    /// Conditional root-mean-square deviation σ(z).
    pub std: T,
    /// Mixture density ν(z).
    pub density: T,
    /// Bayes weights ρ(x_i | z); nonnegative, summing to 1.
    pub weights: Vec<T>,
}

struct CondCore<T> {
    rho: Vec<T>,
    mean: Vec<T>,
    d2: Vec<T>,
    sigma: T,
    density: T,
}

fn cond_core<T: Float>(z: T, data: &DataSet<T>, state: &LatentState<T>) -> Result<CondCore<T>> {
    if state.eps2 <= T::zero() {
        return Err(Error::InvalidArgument { context: "nonpositive bandwidth".into() });
    }
    let n = data.len();
    let half = T::c(0.5);
    // log kernel weights, shifted by their max so at least one weight is 1
    let logw: Vec<T> = state
        .zbar
        .iter()
        .map(|&zi| {
            let dz = z - zi;
            -half * dz * dz / state.eps2
        })
        .collect();
    let m = logw.iter().copied().fold(T::neg_infinity(), T::max);
    if !m.is_finite() {
        return Err(Error::DensityUnderflow { z: z.to_f64().unwrap_or(f64::NAN) });
    }
    let w: Vec<T> = logw.iter().map(|&l| (l - m).exp()).collect();
    let sw: T = w.iter().copied().sum();
    if !(sw > T::zero()) || !sw.is_finite() {
        return Err(Error::DensityUnderflow { z: z.to_f64().unwrap_or(f64::NAN) });
    }
    let rho: Vec<T> = w.iter().map(|&v| v / sw).collect();
    let d = data.dim();
    let mut mean = vec![T::zero(); d];
    for (i, &r) in rho.iter().enumerate() {
        for (mv, &x) in mean.iter_mut().zip(data.row(i)) {
            *mv += r * x;
        }
    }
    let d2: Vec<T> = (0..n).map(|i| dist2(data.row(i), &mean)).collect();
    let var: T = rho.iter().zip(&d2).map(|(&r, &v)| r * v).sum();
    let sigma = var.max(T::zero()).sqrt();
    let two_pi = T::c(2.0 * std::f64::consts::PI);
    let density = m.exp() * sw / (T::from_usize(n).unwrap() * (two_pi * state.eps2).sqrt());
    Ok(CondCore { rho, mean, d2, sigma, density })
}

/// Conditional mean, spread, density, and Bayes weights at `z`.
///
/// Kernel weights are evaluated in the log domain with max-subtraction, so
/// the Bayes weights stay normalized even when every raw density underflows.
pub fn conditional_stats<T: Float>(
    z: T,
    data: &DataSet<T>,
    state: &LatentState<T>,
) -> Result<ConditionalStats<T>> {
    let core = cond_core(z, data, state)?;
    Ok(ConditionalStats {
        z,
        mean: core.mean,
        std: core.sigma,
        density: core.density,
        weights: core.rho,
    })
}

/// Per-sample gradient of the expected conditional spread at one sampled z.
///
/// Entry i is the sensitivity of `E_ν[σ]` to z̄_i as estimated from the
/// single evaluation point: a shared term from the bandwidth's dependence on
/// the coordinates plus the sample's own kernel term. `eps_sigma` guards the
/// division when σ(z) collapses.
pub fn afd_gradient<T: Float>(
    z: T,
    data: &DataSet<T>,
    state: &LatentState<T>,
    eps_sigma: T,
) -> Result<Vec<T>> {
    let core = cond_core(z, data, state)?;
    let s = core.sigma.max(eps_sigma);
    let nrm2: T = state.zbar.iter().map(|&v| v * v).sum();
    let nrm2 = nrm2.max(T::c(1e-300));
    let half = T::c(0.5);
    let t: Vec<T> = core.d2.iter().map(|&d2| s + d2 / s).collect();
    let mut common = T::zero();
    for ((&r, &tv), &zi) in core.rho.iter().zip(&t).zip(&state.zbar) {
        let dz = z - zi;
        common += r * tv * (dz * dz / state.eps2 - T::one());
    }
    let shared = common / (nrm2 + nrm2);
    Ok(state
        .zbar
        .iter()
        .enumerate()
        .map(|(i, &zi)| zi * shared + half * core.rho[i] * t[i] * (z - zi) / state.eps2)
        .collect())
}

/// Expected conditional spread `E_ν[σ] = ∫ σ(z) ν(z) dz` by composite
/// Simpson quadrature on `nodes` points spanning
/// `[min z̄ − 5ε, max z̄ + 5ε]`.
///
/// `nodes` must be odd and at least 3; [`QUAD_NODES`] is the default used
/// by the runner's evaluation schedule's final estimates.
pub fn sigma_quadrature<T: Float>(
    data: &DataSet<T>,
    state: &LatentState<T>,
    nodes: usize,
) -> Result<T> {
    if nodes < 3 || nodes % 2 == 0 {
        return Err(Error::InvalidArgument {
            context: format!("Simpson rule needs an odd node count >= 3, got {}", nodes),
        });
    }
    let eps = state.eps2.sqrt();
    let five = T::c(5.0);
    let lo = state.zbar.iter().copied().fold(T::infinity(), T::min) - five * eps;
    let hi = state.zbar.iter().copied().fold(T::neg_infinity(), T::max) + five * eps;
    let h = (hi - lo) / T::from_usize(nodes - 1).unwrap();
    let mut acc = T::zero();
    for j in 0..nodes {
        let z = lo + h * T::from_usize(j).unwrap();
        let core = cond_core(z, data, state)?;
        let weight = if j == 0 || j == nodes - 1 {
            T::one()
        } else if j % 2 == 1 {
            T::c(4.0)
        } else {
            T::c(2.0)
        };
        acc += weight * core.sigma * core.density;
    }
    Ok(acc * h / T::c(3.0))
}

/// Initialization choices for [`run_afd`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitLatent {
    /// Independent uniform draws from [-1, 1].
    Random,
    /// Projection of the centered data onto its first principal component.
    Pc1,
}

/// Outcome of a latent factor run.
#[derive(Debug, Clone)]
pub struct AfdRun<T> {
    pub state: LatentState<T>,
    /// Quadrature estimates of the objective, one per `eval_every`
    /// iterations.
    pub sigma_trace: Vec<T>,
    /// The evaluation stride used for `sigma_trace`.
    pub eval_every: usize,
}

/// Centered projection of the data onto its leading principal component.
///
/// The component sign is fixed by making its largest-magnitude entry
/// positive, so equal inputs give bitwise-equal projections.
pub fn pc1_projection<T: Float>(data: &DataSet<T>) -> Result<Vec<T>> {
    let (n, d) = (data.len(), data.dim());
    let mean = data.mean();
    let cov = {
        let mut acc = vec![vec![T::zero(); d]; d];
        for i in 0..n {
            let row = data.row(i);
            for a in 0..d {
                let da = row[a] - mean[a];
                for b in a..d {
                    acc[a][b] += da * (row[b] - mean[b]);
                }
            }
        }
        let nn = T::from_usize(n).unwrap();
        SymMatrix::from_fn(d, |a, b| acc[a.min(b)][a.max(b)] / nn)
    };
    let eig = sym_eig(&cov)?;
    let mut v: Vec<T> = (0..d).map(|a| eig.u[(a, 0)]).collect();
    let lead = v
        .iter()
        .enumerate()
        .max_by(|(_, a), (_, b)| {
            a.abs().partial_cmp(&b.abs()).unwrap_or(std::cmp::Ordering::Equal)
        })
        .map(|(i, _)| i)
        .unwrap_or(0);
    if v[lead] < T::zero() {
        for vi in &mut v {
            *vi = -*vi;
        }
    }
    Ok((0..n)
        .map(|i| {
            data.row(i)
                .iter()
                .zip(&mean)
                .zip(&v)
                .map(|((&x, &m), &vi)| (x - m) * vi)
                .sum()
        })
        .collect())
}

/// Stochastic descent of the expected conditional spread.
///
/// Per iteration: draw z from the mixture ν (pick a sample uniformly, add
/// kernel noise), move every coordinate against [`afd_gradient`], and
/// re-derive the bandwidth. The spread is estimated on a fixed schedule
/// (every `max(1, iters/500)` iterations, 401-node quadrature) into
/// `sigma_trace`.
///
/// # Errors
///
/// [`Error::Diverged`] when the coordinate energy exceeds a million times
/// its natural scale; the trace collected so far rides along in the error.
pub fn run_afd<T: Float>(
    data: &DataSet<T>,
    alpha: T,
    eta: T,
    iters: usize,
    seed: u64,
    init: InitLatent,
) -> Result<AfdRun<T>> {
    let n = data.len();
    if n < 2 {
        return Err(Error::InvalidArgument {
            context: format!("latent factor discovery needs at least 2 samples, got {}", n),
        });
    }
    if eta <= T::zero() || iters == 0 {
        return Err(Error::InvalidArgument { context: "eta must be positive, iters >= 1".into() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let zbar = match init {
        InitLatent::Pc1 => pc1_projection(data)?,
        InitLatent::Random => (0..n).map(|_| T::c(rng.gen_range(-1.0..1.0))).collect(),
    };
    let mut state = LatentState::new(zbar, alpha)?;
    let eval_every = (iters / 500).max(1);
    let eps_sigma = T::c(1e-9);
    let limit = T::c(1e12) * T::from_usize(n.max(1)).unwrap();
    let mut trace: Vec<T> = Vec::with_capacity(iters / eval_every + 1);
    for it in 0..iters {
        state.recompute_eps2();
        let pick = rng.gen_range(0..n);
        let z = state.zbar[pick] + state.eps2.sqrt() * T::c(normal_f64(&mut rng));
        let g = afd_gradient(z, data, &state, eps_sigma)?;
        for (zi, gi) in state.zbar.iter_mut().zip(g) {
            *zi = *zi - eta * gi;
        }
        let nrm2: T = state.zbar.iter().map(|&v| v * v).sum();
        if !(nrm2 <= limit) {
            return Err(Error::Diverged {
                iter: it,
                trace: trace.iter().map(|t| t.to_f64().unwrap_or(f64::NAN)).collect(),
            });
        }
        if (it + 1) % eval_every == 0 {
            trace.push(sigma_quadrature(data, &state, 401)?);
        }
    }
    state.recompute_eps2();
    Ok(AfdRun { state, sigma_trace: trace, eval_every })
}

/// Samples `num_points` latent values from ν, sorts them, and returns each
/// with its conditional mean: the discovered curve through the data.
pub fn principal_curve<T: Float>(
    data: &DataSet<T>,
    state: &LatentState<T>,
    num_points: usize,
    seed: u64,
) -> Result<Vec<(T, Vec<T>)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = state.zbar.len();
    let eps = state.eps2.sqrt();
    let mut zs: Vec<T> = (0..num_points)
        .map(|_| {
            let pick = rng.gen_range(0..n);
            state.zbar[pick] + eps * T::c(normal_f64(&mut rng))
        })
        .collect();
    zs.sort_by(|a, b| a.partial_cmp(b).expect("non-finite latent sample"));
    zs.into_iter()
        .map(|z| Ok((z, conditional_stats(z, data, state)?.mean)))
        .collect()
}
