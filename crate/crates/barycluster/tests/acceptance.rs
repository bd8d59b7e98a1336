//! Release gate. Each test exercises one shipping requirement end to end
//! and prints a single PASS/FAIL line (run with `--nocapture` to see them
//! all; cargo shows the lines of failing tests either way).
//!
//! The last check needs the UCI wine table on disk and is skipped unless
//! `WINE_CSV` points at it; its outcome is informational either way.

mod common;

use barycluster::cluster::{
    cluster_stats, grad_general, kmeans, project_rows_simplex, run_hard, run_soft,
    ClusterConfig, Mode,
};
use barycluster::eval::{
    correctness_rate, correctness_rate_exhaustive, correctness_rate_soft, gen_dilation,
    gen_expansion, normalize_columns,
};
use barycluster::factor::{
    afd_gradient, conditional_stats, pc1_projection, principal_curve, run_afd, sigma_quadrature,
    InitLatent, LatentState,
};
use barycluster::gaussbary::{barycenter, isotropic_std, w2_gaussian, GaussianCluster};
use barycluster::matcore::{sqrtm_psd, Mat, SymMatrix};
use barycluster::DataSet;
use common::*;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

/// Writes straight to the stdout handle so the line shows up even under
/// the harness's output capture.
fn say(line: String) {
    use std::io::Write;
    std::io::stdout().write_all(line.as_bytes()).unwrap();
}

fn report(criterion: usize, ok: bool, detail: &str) {
    say(format!(
        "criterion {:>2}: {} ({})\n",
        criterion,
        if ok { "PASS" } else { "FAIL" },
        detail
    ));
    assert!(ok, "criterion {}: {}", criterion, detail);
}

/// |S - sum_k P_k (S^{1/2} Sigma_k S^{1/2})^{1/2}|_F / |S|_F.
fn fixed_point_residual(clusters: &[GaussianCluster<f64>], cov: &SymMatrix<f64>) -> f64 {
    let root = sqrtm_psd(cov).unwrap();
    let d = cov.dim();
    let mut inner = SymMatrix::from_fn(d, |_, _| 0.0);
    for c in clusters {
        let g = root.to_mat().matmul(&c.cov.to_mat()).matmul(&root.to_mat());
        inner = inner.add(&sqrtm_psd(&SymMatrix::symmetrized(&g)).unwrap().scale(c.weight));
    }
    cov.sub(&inner).frob() / cov.frob()
}

#[test]
fn criterion_01_fixed_point_residuals() {
    let mut r = rng(101);
    let t0 = Instant::now();
    let mut worst = 0.0f64;
    for trial in 0..100 {
        let d = 1 + trial % 5;
        let k = 1 + (trial / 5) % 5;
        let clusters = rand_clusters(&mut r, k, d);
        let bary = barycenter(&clusters).unwrap();
        worst = worst.max(fixed_point_residual(&clusters, &bary.cov));
    }
    let secs = t0.elapsed().as_secs_f64();
    report(
        1,
        worst <= 1e-9 && secs < 5.0,
        &format!("worst residual {:.2e}, {} instances in {:.2}s", worst, 100, secs),
    );
}

#[test]
fn criterion_02_isotropic_closed_form() {
    let mut r = rng(102);
    let mut worst = 0.0f64;
    for trial in 0..50 {
        let d = 1 + trial % 5;
        let k = 1 + (trial / 5) % 5;
        let weights = rand_weights(&mut r, k);
        let sigmas: Vec<f64> = (0..k).map(|_| r.gen_range(0.2..4.0)).collect();
        let clusters: Vec<GaussianCluster<f64>> = weights
            .iter()
            .zip(&sigmas)
            .map(|(&w, &s)| GaussianCluster {
                weight: w,
                mean: (0..d).map(|_| r.gen_range(-2.0..2.0)).collect(),
                cov: SymMatrix::scaled_identity(d, s * s / d as f64),
            })
            .collect();
        let got = barycenter(&clusters).unwrap().std();
        let want = isotropic_std(&sigmas, &weights);
        worst = worst.max((got - want).abs() / want.max(1.0));
    }
    report(2, worst <= 1e-12, &format!("worst relative error {:.2e}", worst));
}

#[test]
fn criterion_03_scatter_and_variance_decomposition() {
    let mut r = rng(103);
    let mut worst = 0.0f64;
    for trial in 0..50 {
        let n = 20 + 2 * (trial % 8);
        let d = 1 + trial % 4;
        let k = 2 + trial % 4;
        let data = rand_dataset(&mut r, n, d, 1.5);
        let p = rand_assignment(&mut r, n, k);
        let stats = cluster_stats(&data, &p, 0.0).unwrap();

        let gm = data.mean();
        let tr_global: f64 = (0..n)
            .map(|i| {
                data.row(i)
                    .iter()
                    .zip(&gm)
                    .map(|(&x, &m)| (x - m) * (x - m))
                    .sum::<f64>()
            })
            .sum::<f64>()
            / n as f64;

        let within_between: f64 = stats
            .iter()
            .map(|c| {
                let sep: f64 =
                    c.mean.iter().zip(&gm).map(|(&a, &b)| (a - b) * (a - b)).sum();
                c.weight * (c.cov.trace() + sep)
            })
            .sum();
        worst = worst.max((tr_global - within_between).abs() / tr_global.max(1.0));

        let bary = barycenter(&stats).unwrap();
        let as_cluster = GaussianCluster {
            weight: 1.0,
            mean: bary.mean.clone(),
            cov: bary.cov.clone(),
        };
        let transport: f64 = stats
            .iter()
            .map(|c| c.weight * w2_gaussian(c, &as_cluster).unwrap())
            .sum();
        let rhs = bary.cov.trace() + transport;
        worst = worst.max((tr_global - rhs).abs() / tr_global.max(1.0));
    }
    report(3, worst <= 1e-8, &format!("worst relative error {:.2e}", worst));
}

#[test]
fn criterion_04_gradient_oracles() {
    // Clustering gradient against central differences of the barycenter
    // total variance.
    let mut r = rng(104);
    let mut worst_cos = 1.0f64;
    let mut worst_entry = 0.0f64;
    for _ in 0..20 {
        let (n, d, k) = (12, 3, 3);
        let data = rand_dataset(&mut r, n, d, 2.0);
        let p = rand_assignment(&mut r, n, k);
        let g = grad_general(&data, &p, 0.0).unwrap();
        let scale = 1.0 / n as f64;
        let flat: Vec<f64> = (0..n)
            .flat_map(|i| (0..k).map(move |j| (i, j)))
            .map(|(i, j)| g[(i, j)] * scale)
            .collect();
        let fd: Vec<f64> = fd_table(&|w| objective_general(&data, w, 0.0), &assignment_rows(&p), 1e-6)
            .into_iter()
            .flatten()
            .collect();
        worst_cos = worst_cos.min(cosine(&flat, &fd));
        let fd_inf = fd.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        for (a, b) in flat.iter().zip(&fd) {
            worst_entry = worst_entry.max((a - b).abs() / fd_inf);
        }
    }
    let part1 = worst_cos >= 1.0 - 1e-6 && worst_entry <= 1e-4;

    // Latent gradient in expectation against central differences of the
    // quadrature objective, bandwidth following the coordinates.
    let mut worst_cos_afd = 1.0f64;
    for seed in 0..10u64 {
        let mut rr = rng(500 + seed);
        let rows: Vec<Vec<f64>> = (0..10)
            .map(|_| {
                let t = rr.gen_range(-1.0..1.0);
                vec![t + 0.1 * normal(&mut rr), 0.1 * normal(&mut rr)]
            })
            .collect();
        let data = DataSet::from_rows(&rows).unwrap();
        let zbar = pc1_projection(&data).unwrap();
        let state = LatentState::new(zbar.clone(), 0.2).unwrap();
        let nodes = 1001;

        let eps = state.eps2.sqrt();
        let lo = state.zbar.iter().cloned().fold(f64::INFINITY, f64::min) - 5.0 * eps;
        let hi = state.zbar.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 5.0 * eps;
        let h = (hi - lo) / (nodes - 1) as f64;
        let mut expected = vec![0.0; data.len()];
        for j in 0..nodes {
            let z = lo + h * j as f64;
            let w = if j == 0 || j == nodes - 1 {
                1.0
            } else if j % 2 == 1 {
                4.0
            } else {
                2.0
            };
            let density = conditional_stats(z, &data, &state).unwrap().density;
            for (e, gi) in expected.iter_mut().zip(afd_gradient(z, &data, &state, 1e-9).unwrap()) {
                *e += w * gi * density;
            }
        }
        for e in &mut expected {
            *e *= h / 3.0;
        }

        let step = 1e-5;
        let fd: Vec<f64> = (0..data.len())
            .map(|i| {
                let mut up = zbar.clone();
                up[i] += step;
                let mut dn = zbar.clone();
                dn[i] -= step;
                (sigma_quadrature(&data, &LatentState::new(up, 0.2).unwrap(), nodes).unwrap()
                    - sigma_quadrature(&data, &LatentState::new(dn, 0.2).unwrap(), nodes).unwrap())
                    / (2.0 * step)
            })
            .collect();
        worst_cos_afd = worst_cos_afd.min(cosine(&expected, &fd));
    }
    let part2 = worst_cos_afd >= 0.99;

    report(
        4,
        part1 && part2,
        &format!(
            "clustering: cosine {:.10}, rescaled max error {:.2e}; latent: cosine {:.6}",
            worst_cos, worst_entry, worst_cos_afd
        ),
    );
}

#[test]
fn criterion_05_kmeans_reduction_on_standard_data() {
    let mut agree = true;
    for s in 0..10u64 {
        let ds = gen_expansion::<f64>(0.0, 100 + s).unwrap();
        let cfg = ClusterConfig { seed: s, restarts: 1, ..ClusterConfig::default() };
        let ours = run_hard(&ds.data, 3, Mode::Standard, &cfg).unwrap();
        let lloyd = kmeans(&ds.data, 3, &cfg).unwrap();
        agree &= ours.label_history == lloyd.label_history;
    }
    report(5, agree, "identical label sequences on 10 seeds");
}

#[test]
fn criterion_06_expansion_t22() {
    let t0 = Instant::now();
    let ds = gen_expansion::<f64>(2.2, 1).unwrap();
    let cfg = ClusterConfig { seed: 1, ..ClusterConfig::default() };
    let iso = run_hard(&ds.data, 3, Mode::Isotropic, &cfg).unwrap();
    let gen = run_hard(&ds.data, 3, Mode::General, &cfg).unwrap();
    let km = kmeans(&ds.data, 3, &cfg).unwrap();
    let r_iso = correctness_rate(&ds.labels, &iso.labels).unwrap();
    let r_gen = correctness_rate(&ds.labels, &gen.labels).unwrap();
    let r_km = correctness_rate(&ds.labels, &km.labels).unwrap();
    let secs = t0.elapsed().as_secs_f64();
    report(
        6,
        r_iso >= 0.95 && r_gen >= 0.95 && r_km < r_iso.min(r_gen) && secs < 60.0,
        &format!(
            "barycentric k-means {:.4}, hard barycentric {:.4}, k-means {:.4}, {:.1}s",
            r_iso, r_gen, r_km, secs
        ),
    );
}

#[test]
fn criterion_07_dilation_t30() {
    let ds = gen_dilation::<f64>(3.0, 1).unwrap();
    let cfg = ClusterConfig { seed: 1, ..ClusterConfig::default() };
    let gen = run_soft(&ds.data, 3, Mode::General, &cfg).unwrap();
    let iso = run_soft(&ds.data, 3, Mode::Isotropic, &cfg).unwrap();
    let km = kmeans(&ds.data, 3, &cfg).unwrap();
    let r_gen = correctness_rate_soft(&ds.labels, &gen.assignments).unwrap();
    let r_iso = correctness_rate_soft(&ds.labels, &iso.assignments).unwrap();
    let r_km = correctness_rate(&ds.labels, &km.labels).unwrap();
    report(
        7,
        r_gen >= 0.95 && r_iso < r_gen && r_km < r_gen,
        &format!("general {:.4}, isotropic {:.4}, k-means {:.4}", r_gen, r_iso, r_km),
    );
}

fn noisy_line(rng: &mut ChaCha8Rng, n: usize, noise: f64) -> DataSet<f64> {
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let t = rng.gen_range(-1.0..1.0);
            vec![t + noise * normal(rng), noise * normal(rng)]
        })
        .collect();
    DataSet::from_rows(&rows).unwrap()
}

fn quarter_circle(rng: &mut ChaCha8Rng, n: usize, noise: f64) -> DataSet<f64> {
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let th = rng.gen_range(0.0..std::f64::consts::FRAC_PI_2);
            vec![th.cos() + noise * normal(rng), th.sin() + noise * normal(rng)]
        })
        .collect();
    DataSet::from_rows(&rows).unwrap()
}

/// Root-mean-square distance from curve points to the closest point of the
/// unit segment (y = 0, |x| <= 1).
fn line_rms(pts: &[(f64, Vec<f64>)]) -> f64 {
    let s: f64 = pts
        .iter()
        .map(|(_, p)| {
            let cx = p[0].clamp(-1.0, 1.0);
            (p[0] - cx) * (p[0] - cx) + p[1] * p[1]
        })
        .sum();
    (s / pts.len() as f64).sqrt()
}

/// Same against the unit quarter arc in the first quadrant.
fn arc_rms(pts: &[(f64, Vec<f64>)]) -> f64 {
    let s: f64 = pts
        .iter()
        .map(|(_, p)| {
            let ang = p[1].atan2(p[0]).clamp(0.0, std::f64::consts::FRAC_PI_2);
            let (gx, gy) = (ang.cos(), ang.sin());
            (p[0] - gx) * (p[0] - gx) + (p[1] - gy) * (p[1] - gy)
        })
        .sum();
    (s / pts.len() as f64).sqrt()
}

/// Means of consecutive width-100 blocks of the evaluation trace, restricted
/// to blocks whose midpoint falls in the final 80% of iterations, must be
/// non-increasing.
fn smoothed_tail_ok(trace: &[f64], eval_every: usize, iters: usize) -> bool {
    let w = 100;
    let mut tail = Vec::new();
    for j in 0..trace.len() / w {
        let mid = ((j * w) as f64 + w as f64 / 2.0) * eval_every as f64;
        if mid >= 0.2 * iters as f64 {
            tail.push(trace[j * w..(j + 1) * w].iter().sum::<f64>() / w as f64);
        }
    }
    tail.windows(2).all(|p| p[1] <= p[0])
}

#[test]
fn criterion_08_latent_curve_recovery() {
    let t0 = Instant::now();
    let iters = 50_000;

    let line = noisy_line(&mut rng(1), 500, 0.05);
    let run_l = run_afd(&line, 0.025, 0.5, iters, 1, InitLatent::Pc1).unwrap();
    let rms_l = line_rms(&principal_curve(&line, &run_l.state, 200, 0).unwrap());
    let tail_l = smoothed_tail_ok(&run_l.sigma_trace, run_l.eval_every, iters);

    let circle = quarter_circle(&mut rng(101), 500, 0.05);
    let run_c = run_afd(&circle, 0.025, 0.5, iters, 1, InitLatent::Pc1).unwrap();
    let rms_c = arc_rms(&principal_curve(&circle, &run_c.state, 200, 0).unwrap());
    let tail_c = smoothed_tail_ok(&run_c.sigma_trace, run_c.eval_every, iters);

    let secs = t0.elapsed().as_secs_f64();
    report(
        8,
        rms_l <= 0.1 && rms_c <= 0.1 && tail_l && tail_c && secs < 120.0,
        &format!(
            "line rms {:.4} (trace tail ok: {}), arc rms {:.4} (trace tail ok: {}), {:.1}s",
            rms_l, tail_l, rms_c, tail_c, secs
        ),
    );
}

#[test]
fn criterion_09_simplex_projection_oracle() {
    let mut r = rng(109);
    let mut worst = 0.0f64;
    for trial in 0..1000 {
        let k = 1 + trial % 4;
        let scale = if trial % 7 == 0 { 100.0 } else { 1.0 };
        let row: Vec<f64> = (0..k).map(|_| scale * r.gen_range(-5.0..5.0)).collect();
        let mut m = Mat::<f64>::zeros(1, k);
        for (j, &v) in row.iter().enumerate() {
            m[(0, j)] = v;
        }
        let got = project_rows_simplex(&m);
        let want = qp_oracle(&row);
        for (j, &w) in want.iter().enumerate() {
            worst = worst.max((got.get(0, j) - w).abs());
        }
    }
    report(9, worst <= 1e-10, &format!("worst coordinate gap {:.2e} over 1000 rows", worst));
}

#[test]
fn criterion_10_matching_equals_brute_force() {
    let mut r = rng(110);
    let mut equal = true;
    for trial in 0..100 {
        let n = 5 + trial % 30;
        let kt = 1 + r.gen_range(0..6);
        let kp = 1 + r.gen_range(0..6);
        let truth: Vec<usize> = (0..n).map(|_| r.gen_range(1..=kt)).collect();
        let pred: Vec<usize> = (0..n).map(|_| r.gen_range(1..=kp)).collect();
        let fast = correctness_rate(&truth, &pred).unwrap();
        let brute = correctness_rate_exhaustive(&truth, &pred).unwrap();
        equal &= fast == brute;
    }
    report(10, equal, "assignment matching equals exhaustive search on 100 instances");
}

#[test]
fn criterion_11_wine_protocol() {
    let path = match std::env::var("WINE_CSV") {
        Ok(p) => p,
        Err(_) => {
            say(
                "criterion 11: SKIP (set WINE_CSV to the UCI wine table: \
                 class label first, 13 numeric attributes per row)\n"
                    .into(),
            );
            return;
        }
    };
    let raw = match std::fs::read_to_string(&path) {
        Ok(s) => s,
        Err(e) => {
            say(format!("criterion 11: SKIP (could not read {}: {})\n", path, e));
            return;
        }
    };
    let mut labels = Vec::new();
    let mut rows = Vec::new();
    for (ln, line) in raw.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let parsed: Option<(usize, Vec<f64>)> = fields[0]
            .trim()
            .parse::<usize>()
            .ok()
            .zip(fields[1..].iter().map(|f| f.trim().parse::<f64>().ok()).collect());
        match parsed {
            Some((label, feats)) if !feats.is_empty() => {
                labels.push(label);
                rows.push(feats);
            }
            _ => {
                say(format!("criterion 11: SKIP (unparseable row {} in {})\n", ln + 1, path));
                return;
            }
        }
    }
    let data = normalize_columns(&DataSet::from_rows(&rows).unwrap()).unwrap();
    let cfg = ClusterConfig { seed: 1, ..ClusterConfig::default() };
    let km = kmeans(&data, 3, &cfg).unwrap();
    let iso = run_hard(&data, 3, Mode::Isotropic, &cfg).unwrap();
    let gen = run_hard(&data, 3, Mode::General, &cfg).unwrap();
    let r_km = 100.0 * correctness_rate(&labels, &km.labels).unwrap();
    let r_iso = 100.0 * correctness_rate(&labels, &iso.labels).unwrap();
    let r_gen = 100.0 * correctness_rate(&labels, &gen.labels).unwrap();
    let within = (r_km - 96.63).abs() <= 3.0
        && (r_iso - 97.19).abs() <= 3.0
        && (r_gen - 97.19).abs() <= 3.0;
    // Informational: preprocessing details of the published figures are
    // underdetermined, so a deviation is reported without failing.
    say(format!(
        "criterion 11: {} (k-means {:.2} vs 96.63, barycentric k-means {:.2} vs 97.19, \
         hard barycentric {:.2} vs 97.19, band 3.00)\n",
        if within { "PASS" } else { "REPORTED DEVIATION" },
        r_km,
        r_iso,
        r_gen
    ));
}
