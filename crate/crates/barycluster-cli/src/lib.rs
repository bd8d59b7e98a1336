//! Command-line front end for the `barycluster` library.
//!
//! Five subcommands cover the usual workflow: `synth` writes benchmark
//! datasets, `cluster` runs a clustering algorithm and records the result as
//! JSON, `factor` fits a one-dimensional latent factor and exports the
//! fitted curve, `eval` scores a recorded run against ground-truth labels,
//! and `bary` computes the barycenter of a list of Gaussians.
//!
//! Every run is reproducible from its `--seed`; restart `r` of a multi-start
//! run derives its generator from `seed + r`. Datasets are plain UTF-8 CSV
//! with `.` as the decimal separator and an optional single header row.
//! Floats are written with enough digits to round-trip exactly, so a file
//! produced by `synth` loads back bit for bit.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;

use barycluster::cluster::{fuzzy_kmeans, kmeans, run_hard, run_soft, Mode};
use barycluster::eval::{
    correctness_rate, correctness_rate_soft, gen_dilation, gen_expansion, normalize_columns,
};
use barycluster::factor::{principal_curve, run_afd, InitLatent};
use barycluster::gaussbary::barycenter;
use barycluster::{AssignmentMatrix64, ClusterConfig64, DataSet64, GaussianCluster64, SymMatrix64};

type CliError = Box<dyn std::error::Error>;
type CliResult<T> = Result<T, CliError>;

fn err<T>(msg: String) -> CliResult<T> {
    Err(msg.into())
}

/// Outcome of one recorded run, serialized as JSON by `cluster` and
/// `factor` and read back by `eval`.
///
/// `config` echoes every knob that affects the run, so feeding the same
/// input file through the same subcommand with the echoed settings
/// reproduces the record bit for bit, apart from `wall_clock_ms`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub algorithm: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub objective_trace: Vec<f64>,
    pub final_objective: f64,
    /// Hard label per sample, present for hard algorithms.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<usize>>,
    /// Membership rows summing to one, present for soft algorithms.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub assignments: Option<Vec<Vec<f64>>>,
    /// Latent coordinate per sample, present for factor runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latent: Option<Vec<f64>>,
    pub wall_clock_ms: u64,
}

/// A CSV file parsed into numeric features plus an optional label column.
#[derive(Debug, Clone)]
pub struct LoadedCsv {
    pub data: DataSet64,
    pub labels: Option<Vec<usize>>,
    /// Feature column names when the file had a header.
    pub columns: Option<Vec<String>>,
}

/// Reads a numeric CSV file. `label_column` selects a column of integer
/// class labels, either by header name or by 0-based index, and that column
/// is excluded from the features. Errors name the offending line and column
/// of the file.
pub fn load_csv(path: &Path, has_header: bool, label_column: Option<&str>) -> CliResult<LoadedCsv> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| format!("cannot open {}: {}", path.display(), e))?;

    let mut records = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| format!("{} line {}: {}", path.display(), i + 1, e))?;
        records.push(rec);
    }

    let header: Option<Vec<String>> = if has_header {
        if records.is_empty() {
            return err(format!("{}: missing header row", path.display()));
        }
        Some(records.remove(0).iter().map(str::to_string).collect())
    } else {
        None
    };
    if records.is_empty() {
        return err(format!("{}: no data rows", path.display()));
    }

    let width = records[0].len();
    let label_idx = match label_column {
        None => None,
        Some(sel) => Some(resolve_column(sel, header.as_deref(), width, path)?),
    };
    if width == 1 && label_idx.is_some() {
        return err(format!("{}: no feature columns besides the label", path.display()));
    }

    let line_of = |row: usize| row + 1 + usize::from(has_header);
    let name_of = |col: usize| match &header {
        Some(h) => format!("column {} ({})", col + 1, h[col]),
        None => format!("column {}", col + 1),
    };

    let mut values = Vec::with_capacity(records.len() * (width - usize::from(label_idx.is_some())));
    let mut labels = label_idx.map(|_| Vec::with_capacity(records.len()));
    for (row, rec) in records.iter().enumerate() {
        if rec.len() != width {
            return err(format!(
                "{} line {}: expected {} fields, got {}",
                path.display(),
                line_of(row),
                width,
                rec.len()
            ));
        }
        for (col, field) in rec.iter().enumerate() {
            if Some(col) == label_idx {
                let l: usize = field.parse().map_err(|_| {
                    format!(
                        "{} line {}, {}: cannot parse '{}' as an integer label",
                        path.display(),
                        line_of(row),
                        name_of(col),
                        field
                    )
                })?;
                labels.as_mut().expect("label column resolved").push(l);
            } else {
                let v: f64 = field.parse().map_err(|_| {
                    format!(
                        "{} line {}, {}: cannot parse '{}' as a number",
                        path.display(),
                        line_of(row),
                        name_of(col),
                        field
                    )
                })?;
                values.push(v);
            }
        }
    }

    let d = width - usize::from(label_idx.is_some());
    let data = DataSet64::new(records.len(), d, values)?;
    let columns = header.map(|h| {
        h.into_iter()
            .enumerate()
            .filter(|(i, _)| Some(*i) != label_idx)
            .map(|(_, name)| name)
            .collect()
    });
    Ok(LoadedCsv { data, labels, columns })
}

fn resolve_column(
    sel: &str,
    header: Option<&[String]>,
    width: usize,
    path: &Path,
) -> CliResult<usize> {
    if let Ok(idx) = sel.parse::<usize>() {
        if idx >= width {
            return err(format!(
                "{}: label column index {} out of range for {} columns",
                path.display(),
                idx,
                width
            ));
        }
        return Ok(idx);
    }
    let Some(names) = header else {
        return err(format!(
            "label column '{}' given by name, but {} was read without a header",
            sel,
            path.display()
        ));
    };
    names.iter().position(|n| n == sel).ok_or_else(|| {
        format!("{}: no column named '{}' in header", path.display(), sel).into()
    })
}

/// Runs the command line given as `argv` (program name first) and returns
/// the process exit code: 0 on success, 1 on a runtime failure, 2 on a
/// usage error.
pub fn run_command<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e);
            1
        }
    }
}

#[derive(Parser)]
#[command(
    name = "barycluster",
    version,
    about = "Clustering and latent factor analysis with Gaussian barycenters"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write a synthetic benchmark dataset as CSV.
    Synth(SynthArgs),
    /// Cluster a CSV dataset and record the run as JSON.
    Cluster(ClusterArgs),
    /// Fit a one-dimensional latent factor and export the curve.
    Factor(FactorArgs),
    /// Print the correctness rate of a recorded run against true labels.
    Eval(EvalArgs),
    /// Compute the barycenter of Gaussians given as JSON.
    Bary(BaryArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Family {
    /// Three well separated anisotropic clusters whose covariances grow
    /// with t.
    Expansion,
    /// Three concentric clusters sharing a mean, scaled apart by t.
    Dilation,
}

#[derive(Args)]
struct SynthArgs {
    /// Generator family.
    #[arg(value_enum)]
    family: Family,
    /// Separation parameter of the generator.
    #[arg(long)]
    t: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV path; columns x0..x{d-1} plus a label column.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Algo {
    /// Lloyd's k-means with squared Euclidean distances.
    Kmeans,
    /// Fuzzy c-means with exponent 2.
    FuzzyKmeans,
    /// Soft descent on the general barycenter objective.
    BarySoft,
    /// Hard reassignment under the general barycenter objective.
    BaryHard,
    /// Hard reassignment under the isotropic objective.
    BaryKmeans,
    /// Soft descent on the isotropic objective.
    BaryIsoSoft,
}

#[derive(Args)]
struct ClusterArgs {
    #[arg(long, value_enum)]
    algo: Algo,
    /// Number of clusters.
    #[arg(long)]
    k: usize,
    /// Input CSV path.
    #[arg(long = "in")]
    input: PathBuf,
    /// Output JSON path for the run record.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    csv_in: CsvInArgs,
    /// Scale each feature column to mean zero and unit variance before
    /// clustering.
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    normalize: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Independent restarts; the run with the best final objective wins.
    #[arg(long, default_value_t = 100)]
    restarts: usize,
    #[arg(long, default_value_t = 500)]
    max_iters: usize,
    /// Initial gradient step for the soft algorithms.
    #[arg(long, default_value_t = 1.0)]
    eta: f64,
    /// Relative objective change treated as convergence.
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    /// Statistics update rate in (0, 1].
    #[arg(long, default_value_t = 1.0)]
    update_rate: f64,
    /// Covariance ridge; derived from the data when omitted.
    #[arg(long)]
    eps_cov: Option<f64>,
    /// Spread guard; derived from the data when omitted.
    #[arg(long)]
    eps_sigma: Option<f64>,
    /// Fuzziness exponent for fuzzy-kmeans.
    #[arg(long, default_value_t = 2.0)]
    fuzzy_c: f64,
}

/// How to read an input CSV. By default the file is assumed to carry a
/// single header row, and a column named `label` is treated as ground-truth
/// labels and excluded from the features.
#[derive(Args)]
struct CsvInArgs {
    /// Treat the first row as data rather than a header.
    #[arg(long)]
    no_header: bool,
    /// Label column by header name or 0-based index; `none` disables the
    /// default lookup of a column named `label`.
    #[arg(long)]
    label_column: Option<String>,
}

impl CsvInArgs {
    fn load(&self, path: &Path) -> CliResult<LoadedCsv> {
        let has_header = !self.no_header;
        let sel = match self.label_column.as_deref() {
            Some("none") => None,
            Some(s) => Some(s.to_string()),
            None if has_header => head_has_label(path)?.then(|| "label".to_string()),
            None => None,
        };
        load_csv(path, has_header, sel.as_deref())
    }

    fn echo(&self) -> serde_json::Value {
        json!({
            "no_header": self.no_header,
            "label_column": self.label_column,
        })
    }
}

/// True when the first line of the file names a column `label`.
fn head_has_label(path: &Path) -> CliResult<bool> {
    let text = fs::read_to_string(path)
        .map_err(|e| format!("cannot open {}: {}", path.display(), e))?;
    let first = text.lines().next().unwrap_or("");
    Ok(first.split(',').any(|f| f.trim() == "label"))
}

#[derive(Args)]
struct FactorArgs {
    /// Input CSV path.
    #[arg(long = "in")]
    input: PathBuf,
    #[command(flatten)]
    csv_in: CsvInArgs,
    /// Target ratio of conditional to total spread.
    #[arg(long, default_value_t = 0.025)]
    alpha: f64,
    /// Gradient step size.
    #[arg(long, default_value_t = 0.5)]
    eta: f64,
    /// Descent iterations.
    #[arg(long, default_value_t = 50000)]
    iters: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Latent initialization.
    #[arg(long, value_enum, default_value_t = InitArg::Pc1)]
    init: InitArg,
    /// Output CSV path for the fitted curve, one (z, x) row per sample
    /// point.
    #[arg(long)]
    curve: PathBuf,
    /// Number of curve sample points.
    #[arg(long, default_value_t = 200)]
    points: usize,
    /// Optional output JSON path for the run record.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum InitArg {
    /// Projection onto the first principal component.
    Pc1,
    /// Uniform draws from [-1, 1].
    Random,
}

#[derive(Args)]
struct EvalArgs {
    /// Run record JSON written by `cluster` or `factor`.
    #[arg(long)]
    run: PathBuf,
    /// CSV with ground-truth labels for the same samples.
    #[arg(long = "in")]
    input: PathBuf,
    #[command(flatten)]
    csv_in: CsvInArgs,
}

#[derive(Args)]
struct BaryArgs {
    /// JSON array of {weight, mean, cov} Gaussians.
    #[arg(long = "in")]
    input: PathBuf,
    /// Output JSON path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn dispatch(cli: Cli) -> CliResult<()> {
    match cli.cmd {
        Cmd::Synth(a) => cmd_synth(a),
        Cmd::Cluster(a) => cmd_cluster(a),
        Cmd::Factor(a) => cmd_factor(a),
        Cmd::Eval(a) => cmd_eval(a),
        Cmd::Bary(a) => cmd_bary(a),
    }
}

fn cmd_synth(a: SynthArgs) -> CliResult<()> {
    let ds = match a.family {
        Family::Expansion => gen_expansion::<f64>(a.t, a.seed)?,
        Family::Dilation => gen_dilation::<f64>(a.t, a.seed)?,
    };
    let mut w = csv::Writer::from_path(&a.out)
        .map_err(|e| format!("cannot write {}: {}", a.out.display(), e))?;
    let d = ds.data.dim();
    let mut head: Vec<String> = (0..d).map(|j| format!("x{}", j)).collect();
    head.push("label".into());
    w.write_record(&head)?;
    for (i, &label) in ds.labels.iter().enumerate() {
        let mut row: Vec<String> = ds.data.row(i).iter().map(f64::to_string).collect();
        row.push(label.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn algo_name(a: Algo) -> &'static str {
    match a {
        Algo::Kmeans => "kmeans",
        Algo::FuzzyKmeans => "fuzzy-kmeans",
        Algo::BarySoft => "bary-soft",
        Algo::BaryHard => "bary-hard",
        Algo::BaryKmeans => "bary-kmeans",
        Algo::BaryIsoSoft => "bary-iso-soft",
    }
}

fn cmd_cluster(a: ClusterArgs) -> CliResult<()> {
    let loaded = a.csv_in.load(&a.input)?;
    let data = if a.normalize {
        normalize_columns(&loaded.data)?
    } else {
        loaded.data
    };

    let cfg = ClusterConfig64 {
        seed: a.seed,
        max_iters: a.max_iters,
        restarts: a.restarts,
        eta: a.eta,
        eps_cov: a.eps_cov,
        eps_sigma: a.eps_sigma,
        update_rate: a.update_rate,
        tol: a.tol,
        ..ClusterConfig64::default()
    };
    let config = json!({
        "algo": algo_name(a.algo),
        "k": a.k,
        "input": a.input.display().to_string(),
        "csv": a.csv_in.echo(),
        "normalize": a.normalize,
        "restarts": a.restarts,
        "max_iters": a.max_iters,
        "eta": a.eta,
        "tol": a.tol,
        "update_rate": a.update_rate,
        "eps_cov": a.eps_cov,
        "eps_sigma": a.eps_sigma,
        "fuzzy_c": a.fuzzy_c,
    });

    let start = Instant::now();
    let (trace, labels, assignments) = match a.algo {
        Algo::Kmeans => {
            let run = kmeans(&data, a.k, &cfg)?;
            (run.objective_trace, Some(run.labels), None)
        }
        Algo::BaryHard => {
            let run = run_hard(&data, a.k, Mode::General, &cfg)?;
            (run.objective_trace, Some(run.labels), None)
        }
        Algo::BaryKmeans => {
            let run = run_hard(&data, a.k, Mode::Isotropic, &cfg)?;
            (run.objective_trace, Some(run.labels), None)
        }
        Algo::BarySoft => {
            let run = run_soft(&data, a.k, Mode::General, &cfg)?;
            (run.objective_trace, None, Some(membership_rows(&run.assignments)))
        }
        Algo::BaryIsoSoft => {
            let run = run_soft(&data, a.k, Mode::Isotropic, &cfg)?;
            (run.objective_trace, None, Some(membership_rows(&run.assignments)))
        }
        Algo::FuzzyKmeans => {
            let run = fuzzy_kmeans(&data, a.k, a.fuzzy_c, &cfg)?;
            (run.objective_trace, None, Some(membership_rows(&run.assignments)))
        }
    };
    let wall_clock_ms = start.elapsed().as_millis() as u64;

    let final_objective = *trace.last().ok_or("empty objective trace")?;
    let record = RunRecord {
        algorithm: algo_name(a.algo).into(),
        seed: a.seed,
        config,
        objective_trace: trace,
        final_objective,
        labels,
        assignments,
        latent: None,
        wall_clock_ms,
    };
    write_json(&a.out, &record)
}

fn membership_rows(m: &AssignmentMatrix64) -> Vec<Vec<f64>> {
    (0..m.len()).map(|i| m.row(i).to_vec()).collect()
}

fn cmd_factor(a: FactorArgs) -> CliResult<()> {
    let loaded = a.csv_in.load(&a.input)?;
    let init = match a.init {
        InitArg::Pc1 => InitLatent::Pc1,
        InitArg::Random => InitLatent::Random,
    };

    let start = Instant::now();
    let run = run_afd(&loaded.data, a.alpha, a.eta, a.iters, a.seed, init)?;
    let curve = principal_curve(&loaded.data, &run.state, a.points, a.seed)?;
    let wall_clock_ms = start.elapsed().as_millis() as u64;

    let mut w = csv::Writer::from_path(&a.curve)
        .map_err(|e| format!("cannot write {}: {}", a.curve.display(), e))?;
    let d = loaded.data.dim();
    let mut head = vec!["z".to_string()];
    head.extend((0..d).map(|j| format!("x{}", j)));
    w.write_record(&head)?;
    for (z, x) in &curve {
        let mut row = vec![z.to_string()];
        row.extend(x.iter().map(f64::to_string));
        w.write_record(&row)?;
    }
    w.flush()?;

    if let Some(out) = &a.out {
        let final_objective = *run.sigma_trace.last().ok_or("empty objective trace")?;
        let record = RunRecord {
            algorithm: "afd".into(),
            seed: a.seed,
            config: json!({
                "input": a.input.display().to_string(),
                "csv": a.csv_in.echo(),
                "alpha": a.alpha,
                "eta": a.eta,
                "iters": a.iters,
                "init": match a.init { InitArg::Pc1 => "pc1", InitArg::Random => "random" },
                "points": a.points,
                "eval_every": run.eval_every,
            }),
            objective_trace: run.sigma_trace,
            final_objective,
            labels: None,
            assignments: None,
            latent: Some(run.state.zbar.clone()),
            wall_clock_ms,
        };
        write_json(out, &record)?;
    }
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> CliResult<()> {
    let text = fs::read_to_string(&a.run)
        .map_err(|e| format!("cannot open {}: {}", a.run.display(), e))?;
    let record: RunRecord = serde_json::from_str(&text)
        .map_err(|e| format!("{}: {}", a.run.display(), e))?;

    let loaded = a.csv_in.load(&a.input)?;
    let Some(truth) = loaded.labels else {
        return err(format!(
            "{} has no label column; pass --label-column",
            a.input.display()
        ));
    };

    let rate = if let Some(labels) = &record.labels {
        correctness_rate(&truth, labels)?
    } else if let Some(rows) = &record.assignments {
        let n = rows.len();
        let k = rows.first().map_or(0, Vec::len);
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let m = AssignmentMatrix64::new(n, k, flat)?;
        correctness_rate_soft(&truth, &m)?
    } else {
        return err(format!(
            "{} has neither labels nor assignments to score",
            a.run.display()
        ));
    };
    println!("{}", rate);
    Ok(())
}

#[derive(Deserialize)]
struct GaussianIn {
    weight: f64,
    mean: Vec<f64>,
    cov: Vec<Vec<f64>>,
}

#[derive(Serialize)]
struct BaryOut {
    mean: Vec<f64>,
    cov: Vec<Vec<f64>>,
    std: f64,
}

fn cmd_bary(a: BaryArgs) -> CliResult<()> {
    let text = fs::read_to_string(&a.input)
        .map_err(|e| format!("cannot open {}: {}", a.input.display(), e))?;
    let gaussians: Vec<GaussianIn> = serde_json::from_str(&text)
        .map_err(|e| format!("{}: {}", a.input.display(), e))?;

    let mut clusters = Vec::with_capacity(gaussians.len());
    for (i, g) in gaussians.iter().enumerate() {
        let d = g.mean.len();
        if g.cov.len() != d || g.cov.iter().any(|r| r.len() != d) {
            return err(format!("gaussian {}: cov is not {}x{}", i, d, d));
        }
        for r in 0..d {
            for c in r + 1..d {
                let gap = (g.cov[r][c] - g.cov[c][r]).abs();
                let scale = g.cov[r][c].abs().max(g.cov[c][r].abs()).max(1.0);
                if gap > 1e-8 * scale {
                    return err(format!(
                        "gaussian {}: cov[{}][{}] and cov[{}][{}] differ",
                        i, r, c, c, r
                    ));
                }
            }
        }
        let cov = SymMatrix64::from_fn(d, |r, c| 0.5 * (g.cov[r][c] + g.cov[c][r]));
        clusters.push(GaussianCluster64::new(g.weight, g.mean.clone(), cov)?);
    }

    let bary = barycenter(&clusters)?;
    let d = bary.mean.len();
    let out = BaryOut {
        std: bary.std(),
        cov: (0..d)
            .map(|r| (0..d).map(|c| bary.cov.get(r, c)).collect())
            .collect(),
        mean: bary.mean,
    };
    match &a.out {
        Some(path) => write_json(path, &out),
        None => {
            println!("{}", serde_json::to_string_pretty(&out)?);
            Ok(())
        }
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n")
        .map_err(|e| format!("cannot write {}: {}", path.display(), e))?;
    Ok(())
}
