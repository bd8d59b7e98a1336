//! Benchmark generators, the permutation-maximized correctness rate, and
//! column normalization.

use crate::cluster::AssignmentMatrix;
use crate::{normal_f64, DataSet, Error, Float, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// A dataset with ground-truth class labels in `1..=k`.
#[derive(Debug, Clone)]
pub struct LabeledDataSet<T> {
    pub data: DataSet<T>,
    pub labels: Vec<usize>,
    pub k: usize,
}

impl<T: Float> LabeledDataSet<T> {
    pub fn new(data: DataSet<T>, labels: Vec<usize>, k: usize) -> Result<Self> {
        if labels.len() != data.len() {
            return Err(Error::DimensionMismatch {
                context: format!("{} labels for {} samples", labels.len(), data.len()),
            });
        }
        for &l in &labels {
            if l < 1 || l > k {
                return Err(Error::LabelOutOfRange { label: l, k });
            }
        }
        Ok(Self { data, labels, k })
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Draws `counts[j]` spherical-Gaussian samples around `means[j]` with the
/// per-coordinate standard deviations `stds[j]`, cluster by cluster, labels
/// `j + 1`.
fn gen_gaussians<T: Float>(
    means: &[[f64; 2]],
    stds: &[[f64; 2]],
    counts: &[usize],
    seed: u64,
) -> LabeledDataSet<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total: usize = counts.iter().sum();
    let mut values = Vec::with_capacity(total * 2);
    let mut labels = Vec::with_capacity(total);
    for (j, ((mean, std), &count)) in means.iter().zip(stds).zip(counts).enumerate() {
        for _ in 0..count {
            for c in 0..2 {
                values.push(T::c(mean[c] + std[c] * normal_f64(&mut rng)));
            }
            labels.push(j + 1);
        }
    }
    let data = DataSet::new(total, 2, values).expect("generator shape");
    LabeledDataSet { data, labels, k: means.len() }
}

/// Three adjacent spherical clusters whose radii, weights, and separations
/// all grow with `t >= 0`: nominal radii (1, 1+t, 1+2t), per-coordinate
/// variances (1, (1+t)^2, (1+2t)^2)/10, sizes (100, 100(1+t), 100(1+2t))
/// rounded, and centers placed so every pair of nominal balls is tangent.
pub fn gen_expansion<T: Float>(t: f64, seed: u64) -> Result<LabeledDataSet<T>> {
    if !(t >= 0.0) {
        return Err(Error::InvalidArgument { context: format!("t must be >= 0, got {}", t) });
    }
    let means = [
        [0.0, 0.0],
        [0.0, 2.0 + t],
        [
            (t + 1.0) / (t + 2.0) * (12.0 * (2.0 * t + 1.0)).sqrt(),
            2.0 * (1.0 - t * t) / (t + 2.0),
        ],
    ];
    let s = 10f64.sqrt();
    let stds = [
        [1.0 / s, 1.0 / s],
        [(1.0 + t) / s, (1.0 + t) / s],
        [(1.0 + 2.0 * t) / s, (1.0 + 2.0 * t) / s],
    ];
    let counts = [
        100,
        (100.0 * (1.0 + t)).round() as usize,
        (100.0 * (1.0 + 2.0 * t)).round() as usize,
    ];
    Ok(gen_gaussians(&means, &stds, &counts, seed))
}

/// Three 100-point clusters stacked at (0,1), (0,0), (0,-1); the outer two
/// stretch horizontally with `t` (x-variance (1+t)^2/25) while the middle
/// stays isotropic at variance 1/25.
pub fn gen_dilation<T: Float>(t: f64, seed: u64) -> Result<LabeledDataSet<T>> {
    if !(t >= 0.0) {
        return Err(Error::InvalidArgument { context: format!("t must be >= 0, got {}", t) });
    }
    let means = [[0.0, 1.0], [0.0, 0.0], [0.0, -1.0]];
    let stds = [
        [(1.0 + t) / 5.0, 1.0 / 5.0],
        [1.0 / 5.0, 1.0 / 5.0],
        [(1.0 + t) / 5.0, 1.0 / 5.0],
    ];
    Ok(gen_gaussians(&means, &stds, &[100, 100, 100], seed))
}

/// Renumbers arbitrary labels densely as 0..k, preserving first-seen order
/// of the sorted distinct values.
fn dense_map(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut distinct: Vec<usize> = labels.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    let mapped = labels
        .iter()
        .map(|l| distinct.binary_search(l).expect("own label"))
        .collect();
    (mapped, distinct.len())
}

/// Exact solution of the square assignment problem: returns, for each
/// column, the row matched to it, minimizing total cost. O(n^3).
fn hungarian_min(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    (1..=n).map(|j| p[j] - 1).collect()
}

fn rate_from_overlap<T: Float>(overlap: Vec<Vec<T>>, n: usize) -> T {
    let m = overlap.len();
    let cost: Vec<Vec<f64>> = overlap
        .iter()
        .map(|row| row.iter().map(|&v| -v.to_f64().unwrap_or(0.0)).collect())
        .collect();
    let row_for_col = hungarian_min(&cost);
    let mut total = T::zero();
    for (col, &row) in row_for_col.iter().enumerate().take(m) {
        total += overlap[row][col];
    }
    total / T::from_usize(n).unwrap()
}

/// Fraction of samples on which `pred` agrees with `truth` under the best
/// one-to-one relabeling of the predicted clusters (exact, via the
/// assignment problem). Label values on either side may be any small
/// integers; only their partition structure matters.
pub fn correctness_rate(truth: &[usize], pred: &[usize]) -> Result<f64> {
    if truth.len() != pred.len() || truth.is_empty() {
        return Err(Error::DimensionMismatch {
            context: format!("truth has {} labels, pred {}", truth.len(), pred.len()),
        });
    }
    let (t, kt) = dense_map(truth);
    let (p, kp) = dense_map(pred);
    let m = kt.max(kp);
    let mut overlap = vec![vec![0.0f64; m]; m];
    for (&a, &b) in t.iter().zip(&p) {
        overlap[a][b] += 1.0;
    }
    Ok(rate_from_overlap(overlap, truth.len()))
}

/// Soft correctness rate: the best one-to-one matching of assignment
/// columns to truth classes, scoring each sample by the mass it puts on
/// its matched column. Equals [`correctness_rate`] on one-hot input.
pub fn correctness_rate_soft<T: Float>(
    truth: &[usize],
    pred: &AssignmentMatrix<T>,
) -> Result<T> {
    if truth.len() != pred.len() || truth.is_empty() {
        return Err(Error::DimensionMismatch {
            context: format!("truth has {} labels, pred has {} rows", truth.len(), pred.len()),
        });
    }
    let (t, kt) = dense_map(truth);
    let kp = pred.num_clusters();
    let m = kt.max(kp);
    let mut overlap = vec![vec![T::zero(); m]; m];
    for (i, &a) in t.iter().enumerate() {
        for b in 0..kp {
            overlap[a][b] += pred.get(i, b);
        }
    }
    Ok(rate_from_overlap(overlap, truth.len()))
}

/// [`correctness_rate`] by exhaustive search over all relabelings; the
/// independent oracle for the assignment-problem route. Rejects more than
/// 8 distinct labels on either side.
pub fn correctness_rate_exhaustive(truth: &[usize], pred: &[usize]) -> Result<f64> {
    if truth.len() != pred.len() || truth.is_empty() {
        return Err(Error::DimensionMismatch {
            context: format!("truth has {} labels, pred {}", truth.len(), pred.len()),
        });
    }
    let (t, kt) = dense_map(truth);
    let (p, kp) = dense_map(pred);
    let m = kt.max(kp);
    if m > 8 {
        return Err(Error::InvalidArgument {
            context: format!("exhaustive search limited to 8 clusters, got {}", m),
        });
    }
    let mut overlap = vec![vec![0.0f64; m]; m];
    for (&a, &b) in t.iter().zip(&p) {
        overlap[a][b] += 1.0;
    }
    let mut perm: Vec<usize> = (0..m).collect();
    let mut best = f64::NEG_INFINITY;
    permute(&mut perm, 0, &mut |g| {
        let score: f64 = (0..m).map(|col| overlap[g[col]][col]).sum();
        if score > best {
            best = score;
        }
    });
    Ok(best / truth.len() as f64)
}

fn permute<F: FnMut(&[usize])>(items: &mut Vec<usize>, start: usize, visit: &mut F) {
    if start == items.len() {
        visit(items);
        return;
    }
    for i in start..items.len() {
        items.swap(start, i);
        permute(items, start + 1, visit);
        items.swap(start, i);
    }
}

/// Centers every column and scales it to unit population standard
/// deviation; constant columns become all zeros.
pub fn normalize_columns<T: Float>(data: &DataSet<T>) -> Result<DataSet<T>> {
    let (n, d) = (data.len(), data.dim());
    if n < 2 {
        return Err(Error::InvalidArgument {
            context: format!("normalization needs at least 2 samples, got {}", n),
        });
    }
    let mean = data.mean();
    let mut std = vec![T::zero(); d];
    for i in 0..n {
        for (s, (&x, &m)) in std.iter_mut().zip(data.row(i).iter().zip(&mean)) {
            *s += (x - m) * (x - m);
        }
    }
    let nn = T::from_usize(n).unwrap();
    for s in &mut std {
        *s = (*s / nn).sqrt();
    }
    let mut values = Vec::with_capacity(n * d);
    for i in 0..n {
        for ((&x, &m), &s) in data.row(i).iter().zip(&mean).zip(&std) {
            values.push(if s > T::zero() { (x - m) / s } else { T::zero() });
        }
    }
    DataSet::new(n, d, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expansion_shapes() {
        let g0 = gen_expansion::<f64>(0.0, 1).unwrap();
        assert_eq!(g0.len(), 300);
        assert_eq!(g0.labels.iter().filter(|&&l| l == 2).count(), 100);
        let g1 = gen_expansion::<f64>(1.0, 1).unwrap();
        let counts: Vec<usize> = (1..=3)
            .map(|c| g1.labels.iter().filter(|&&l| l == c).count())
            .collect();
        assert_eq!(counts, vec![100, 200, 300]);
    }

    #[test]
    fn expansion_centers_are_tangent() {
        for t in [0.0, 1.0, 2.2] {
            let g = gen_expansion::<f64>(t, 3).unwrap();
            let mut means = vec![[0.0f64; 2]; 3];
            let mut counts = [0usize; 3];
            for (i, &l) in g.labels.iter().enumerate() {
                let row = g.data.row(i);
                means[l - 1][0] += row[0];
                means[l - 1][1] += row[1];
                counts[l - 1] += 1;
            }
            for (m, &c) in means.iter_mut().zip(&counts) {
                m[0] /= c as f64;
                m[1] /= c as f64;
            }
            let radii = [1.0, 1.0 + t, 1.0 + 2.0 * t];
            for (a, b) in [(0, 1), (0, 2), (1, 2)] {
                let dist = ((means[a][0] - means[b][0]).powi(2)
                    + (means[a][1] - means[b][1]).powi(2))
                .sqrt();
                let nominal = radii[a] + radii[b];
                assert!(
                    (dist - nominal).abs() < 0.1 * nominal,
                    "t={} pair ({},{}): {} vs {}",
                    t,
                    a,
                    b,
                    dist,
                    nominal
                );
            }
        }
    }

    #[test]
    fn dilation_moments() {
        let g = gen_dilation::<f64>(3.0, 2).unwrap();
        assert_eq!(g.len(), 300);
        // outer clusters: nominal x std 4/5, y std 1/5
        for target in [1usize, 3] {
            let rows: Vec<&[f64]> = g
                .labels
                .iter()
                .enumerate()
                .filter(|(_, &l)| l == target)
                .map(|(i, _)| g.data.row(i))
                .collect();
            let n = rows.len() as f64;
            let mx = rows.iter().map(|r| r[0]).sum::<f64>() / n;
            let my = rows.iter().map(|r| r[1]).sum::<f64>() / n;
            let vx = rows.iter().map(|r| (r[0] - mx).powi(2)).sum::<f64>() / n;
            let vy = rows.iter().map(|r| (r[1] - my).powi(2)).sum::<f64>() / n;
            assert!((vx.sqrt() - 0.8).abs() < 0.15 * 0.8, "x std {}", vx.sqrt());
            assert!((vy.sqrt() - 0.2).abs() < 0.15 * 0.2, "y std {}", vy.sqrt());
        }
    }

    #[test]
    fn generators_deterministic() {
        let a = gen_expansion::<f64>(1.3, 77).unwrap();
        let b = gen_expansion::<f64>(1.3, 77).unwrap();
        assert_eq!(a.data.values(), b.data.values());
        assert_eq!(a.labels, b.labels);
        let c = gen_expansion::<f64>(1.3, 78).unwrap();
        assert_ne!(a.data.values(), c.data.values());
    }

    #[test]
    fn rate_identity_and_permutation() {
        let truth = vec![1, 1, 2, 2, 3, 3];
        assert_eq!(correctness_rate(&truth, &truth).unwrap(), 1.0);
        let swapped = vec![3, 3, 1, 1, 2, 2];
        assert_eq!(correctness_rate(&truth, &swapped).unwrap(), 1.0);
        // labels need not share a range: zero-based predictions work too
        let zero_based = vec![0, 0, 1, 1, 2, 2];
        assert_eq!(correctness_rate(&truth, &zero_based).unwrap(), 1.0);
    }

    #[test]
    fn rate_partial_overlap() {
        let truth = vec![1, 1, 1, 2, 2, 2];
        let pred = vec![1, 1, 2, 2, 2, 2];
        // best matching keeps labels as-is: 5 of 6 agree
        assert!((correctness_rate(&truth, &pred).unwrap() - 5.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn rate_matches_exhaustive_oracle() {
        let truth = vec![1, 2, 3, 1, 2, 3, 1, 2, 3, 1];
        let pred = vec![2, 2, 1, 3, 3, 1, 2, 1, 1, 3];
        let h = correctness_rate(&truth, &pred).unwrap();
        let b = correctness_rate_exhaustive(&truth, &pred).unwrap();
        assert_eq!(h, b);
    }

    #[test]
    fn soft_uniform_rate_is_one_over_k() {
        let truth = vec![1, 2, 3, 1, 2, 3];
        let p = AssignmentMatrix::<f64>::uniform(6, 3);
        let r = correctness_rate_soft(&truth, &p).unwrap();
        assert!((r - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn soft_one_hot_matches_hard() {
        let truth = vec![1, 1, 2, 2];
        let labels = vec![1, 0, 0, 0];
        let p = AssignmentMatrix::<f64>::from_labels(&labels, 2).unwrap();
        let hard = correctness_rate(&truth, &labels).unwrap();
        let soft = correctness_rate_soft(&truth, &p).unwrap();
        assert!((hard - soft).abs() < 1e-15);
    }

    #[test]
    fn normalization_examples() {
        let ds = DataSet::<f64>::from_rows(&[vec![0.0, 5.0], vec![2.0, 5.0]]).unwrap();
        let out = normalize_columns(&ds).unwrap();
        assert_eq!(out.row(0), &[-1.0, 0.0]);
        assert_eq!(out.row(1), &[1.0, 0.0]);
        let twice = normalize_columns(&out).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((twice.row(i)[j] - out.row(i)[j]).abs() < 1e-12);
            }
        }
    }
}
