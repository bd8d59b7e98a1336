//! Shared helpers for the integration test suites.
//!
//! The statistics helpers here (`raw_stats`, `objective_general`,
//! `objective_isotropic`) are deliberately written from the definitions,
//! independent of the library's own accumulation paths, so they can serve
//! as finite-difference oracles.
#![allow(dead_code)]

use barycluster::cluster::AssignmentMatrix;
use barycluster::gaussbary::GaussianCluster;
use barycluster::matcore::{cholesky_solve, sqrtm_psd, Mat, SymMatrix};
use barycluster::DataSet;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// One standard normal draw (Box-Muller).
pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Random symmetric positive definite matrix A A^T + ridge I.
pub fn rand_spd(rng: &mut ChaCha8Rng, d: usize, ridge: f64) -> SymMatrix<f64> {
    let a: Vec<Vec<f64>> = (0..d)
        .map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    SymMatrix::from_fn(d, |i, j| {
        let dot: f64 = (0..d).map(|k| a[i][k] * a[j][k]).sum();
        dot + if i == j { ridge } else { 0.0 }
    })
}

/// Random weights bounded away from zero, summing to one.
pub fn rand_weights(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| rng.gen_range(0.1..1.0)).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

/// Random cluster family with PD covariances.
pub fn rand_clusters(rng: &mut ChaCha8Rng, k: usize, d: usize) -> Vec<GaussianCluster<f64>> {
    let weights = rand_weights(rng, k);
    weights
        .into_iter()
        .map(|w| GaussianCluster {
            weight: w,
            mean: (0..d).map(|_| rng.gen_range(-3.0..3.0)).collect(),
            cov: rand_spd(rng, d, 0.05),
        })
        .collect()
}

/// Random dataset with rows spread around a few loose centers.
pub fn rand_dataset(rng: &mut ChaCha8Rng, n: usize, d: usize, spread: f64) -> DataSet<f64> {
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..d).map(|_| spread * normal(rng)).collect())
        .collect();
    DataSet::from_rows(&rows).unwrap()
}

/// Random strictly positive row-stochastic assignment.
pub fn rand_assignment(rng: &mut ChaCha8Rng, n: usize, k: usize) -> AssignmentMatrix<f64> {
    let mut data = Vec::with_capacity(n * k);
    for _ in 0..n {
        let row = rand_weights(rng, k);
        data.extend(row);
    }
    AssignmentMatrix::new(n, k, data).unwrap()
}

/// Weighted cluster moments computed directly from the definitions; `w`
/// is any nonnegative N x K weight table (rows need not sum to one).
pub fn raw_stats(data: &DataSet<f64>, w: &[Vec<f64>], eps_cov: f64) -> Vec<GaussianCluster<f64>> {
    let (n, d) = (data.len(), data.dim());
    let k = w[0].len();
    (0..k)
        .map(|c| {
            let mass: f64 = (0..n).map(|i| w[i][c]).sum();
            let mut mean = vec![0.0; d];
            for i in 0..n {
                for (m, &x) in mean.iter_mut().zip(data.row(i)) {
                    *m += w[i][c] * x;
                }
            }
            for m in &mut mean {
                *m /= mass;
            }
            let cov = SymMatrix::from_fn(d, |a, b| {
                let s: f64 = (0..n)
                    .map(|i| w[i][c] * (data.row(i)[a] - mean[a]) * (data.row(i)[b] - mean[b]))
                    .sum();
                s / mass + if a == b { eps_cov } else { 0.0 }
            });
            GaussianCluster { weight: mass / n as f64, mean, cov }
        })
        .collect()
}

/// Inverse of a symmetric positive definite matrix, column by column.
fn spd_inverse(m: &SymMatrix<f64>) -> Mat<f64> {
    let d = m.dim();
    let mut out = Mat::zeros(d, d);
    for col in 0..d {
        let mut e = vec![0.0; d];
        e[col] = 1.0;
        let sol = cholesky_solve(m, &e).unwrap();
        for (r, v) in sol.into_iter().enumerate() {
            out[(r, col)] = v;
        }
    }
    out
}

/// Fixed-point barycenter covariance computed directly from the update map,
/// tolerating weights that do not sum exactly to one (finite-difference
/// probes step slightly off the simplex).
pub fn barycenter_cov_oracle(clusters: &[GaussianCluster<f64>]) -> SymMatrix<f64> {
    let d = clusters[0].cov.dim();
    let mut s = SymMatrix::from_fn(d, |i, j| {
        clusters.iter().map(|c| c.weight * c.cov.get(i, j)).sum()
    });
    for _ in 0..2000 {
        let root = sqrtm_psd(&s).unwrap().to_mat();
        let root_inv = spd_inverse(&SymMatrix::symmetrized(&root));
        let mut t = Mat::zeros(d, d);
        for c in clusters {
            let m = root.matmul(&c.cov.to_mat()).matmul(&root);
            let r = sqrtm_psd(&SymMatrix::symmetrized(&m)).unwrap().to_mat();
            for i in 0..d {
                for j in 0..d {
                    t[(i, j)] += c.weight * r[(i, j)];
                }
            }
        }
        let next_m = root_inv.matmul(&t).matmul(&t).matmul(&root_inv.transpose());
        let next = SymMatrix::symmetrized(&next_m);
        let change = next.sub(&s).frob();
        let done = change <= 1e-15 * s.frob();
        s = next;
        if done {
            break;
        }
    }
    s
}

/// Barycenter total variance of the clusters induced by `w`.
pub fn objective_general(data: &DataSet<f64>, w: &[Vec<f64>], eps_cov: f64) -> f64 {
    barycenter_cov_oracle(&raw_stats(data, w, eps_cov)).trace()
}

/// Weighted spread sum of the clusters induced by `w`.
pub fn objective_isotropic(data: &DataSet<f64>, w: &[Vec<f64>], eps_cov: f64) -> f64 {
    raw_stats(data, w, eps_cov)
        .iter()
        .map(|c| c.weight * c.cov.trace().max(0.0).sqrt())
        .sum()
}

/// Central finite differences of `f` over an N x K weight table.
pub fn fd_table(
    f: &dyn Fn(&[Vec<f64>]) -> f64,
    at: &[Vec<f64>],
    h: f64,
) -> Vec<Vec<f64>> {
    let mut out = vec![vec![0.0; at[0].len()]; at.len()];
    let mut work = at.to_vec();
    for i in 0..at.len() {
        for k in 0..at[0].len() {
            work[i][k] = at[i][k] + h;
            let up = f(&work);
            work[i][k] = at[i][k] - h;
            let dn = f(&work);
            work[i][k] = at[i][k];
            out[i][k] = (up - dn) / (2.0 * h);
        }
    }
    out
}

/// Cosine similarity of two flat vectors.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// Kendall rank correlation (tau-a), O(n^2) over all pairs.
pub fn kendall_tau(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len();
    let mut concordant = 0i64;
    let mut discordant = 0i64;
    for i in 0..n {
        for j in (i + 1)..n {
            let s = (a[i] - a[j]).signum() * (b[i] - b[j]).signum();
            if s > 0.0 {
                concordant += 1;
            } else if s < 0.0 {
                discordant += 1;
            }
        }
    }
    (concordant - discordant) as f64 / (n * (n - 1) / 2) as f64
}

/// Flattens an assignment matrix into row-major Vec<Vec<f64>>.
pub fn assignment_rows(p: &AssignmentMatrix<f64>) -> Vec<Vec<f64>> {
    (0..p.len()).map(|i| p.row(i).to_vec()).collect()
}

/// Euclidean projection onto the probability simplex by exhaustive
/// active-set search; the quadratic-program oracle for the fast routine.
pub fn qp_oracle(v: &[f64]) -> Vec<f64> {
    let k = v.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 1u32..(1 << k) {
        let support: Vec<usize> = (0..k).filter(|&i| mask & (1 << i) != 0).collect();
        let sum: f64 = support.iter().map(|&i| v[i]).sum();
        let lambda = (1.0 - sum) / support.len() as f64;
        let mut x = vec![0.0; k];
        let mut feasible = true;
        for &i in &support {
            let xi = v[i] + lambda;
            if xi < -1e-12 {
                feasible = false;
                break;
            }
            x[i] = xi.max(0.0);
        }
        if !feasible {
            continue;
        }
        let dist: f64 = x.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum();
        if best.as_ref().map_or(true, |(bd, _)| dist < *bd) {
            best = Some((dist, x));
        }
    }
    best.unwrap().1
}
