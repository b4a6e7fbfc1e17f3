//! The `nngp` command line.
//!
//! Exit codes: 0 success, 1 I/O failure while writing, 2 bad input (flags,
//! config, CSV), 3 numerical failure, 4 model-file integrity failure, 5 a
//! verification ran but did not pass. Summaries go to stdout, diagnostics to
//! stderr.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use nalgebra::{DMatrix, SymmetricEigen};

use crate::activation::ActivationKind;
use crate::config::{fmt_f64, KeyValues};
use crate::data::{points_from_csv_str, write_atomic, Dataset};
use crate::error::Error;
use crate::finite_width::{
    barron_mean_oracle, barron_variance_scaling, estimate_hpi_norm_sq, width_convergence_report, Bands,
    BarronSamplerSpec,
};
use crate::gauss_expect::{
    expect_phi, expect_phi_pair, mc_expect, mc_expect_pair, BivariateGaussianMoments, ExpectationMethod,
    GaussianMoments,
};
use crate::kernel::{gram, FirstLayerMeasure, KernelSpec};
use crate::regress::{
    factor_with_jitter, fit, load_model, model_to_string, optimize_hyperparams, OptimizerConfig, ParamId,
};

const DEFAULT_HPI_SAMPLES: usize = 100_000;
const DEFAULT_ORACLE_SAMPLES: usize = 1_000_000;

#[derive(Parser, Debug)]
#[command(name = "nngp", version, about = "Neural-network Gaussian process kernels and finite-width checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Prior mean and Gram matrix of a point set.
    Kernel {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        points: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a GP regression model and write it to a model file.
    Fit {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        train: PathBuf,
        /// Noise variance σ_ε² (the starting value when optimizing).
        #[arg(long)]
        noise: f64,
        /// Maximise the log marginal likelihood before fitting.
        #[arg(long)]
        optimize: bool,
        #[arg(long, default_value_t = 500)]
        max_evals: usize,
        #[arg(long, default_value_t = 3)]
        restarts: usize,
        /// Comma-separated hyperparameter names to optimize, e.g.
        /// `noise,pi.var_w,layer2.var_w`. Defaults to every variance.
        #[arg(long, value_delimiter = ',')]
        free: Vec<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Where to write the optimization trace (default: `<out-model>.trace.csv`).
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        out_model: PathBuf,
    },
    /// Posterior mean and variance from a model file.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        points: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare finite-width ensembles with the kernel across widths.
    VerifyWidth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        widths: Vec<usize>,
        #[arg(long, default_value_t = 4000)]
        ensembles: usize,
        #[arg(long)]
        probes: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Variance scaling of two-layer Monte Carlo networks.
    Barron {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        x: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        n_list: Vec<usize>,
        #[arg(long, default_value_t = 2000)]
        reps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// One Gaussian expectation of φ: `m,v` or `m1,m2,v1,v2,c`.
    Expect {
        #[arg(long)]
        kind: ActivationKind,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        moments: Vec<f64>,
        /// `analytic`, `quad:N` or `mc:N[:seed]`.
        #[arg(long, default_value = "analytic")]
        method: ExpectationMethod,
    },
}

/// A failed command: exit code and message.
#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::NotPositiveDefinite { .. } | Error::Optimization(_) => 3,
            Error::Integrity(_) => 4,
            Error::Io(_) => 1,
            _ => 2,
        };
        Failure { code, message: e.to_string() }
    }
}

type CmdResult = std::result::Result<i32, Failure>;

fn read_input(path: &Path) -> std::result::Result<String, Failure> {
    std::fs::read_to_string(path)
        .map_err(|e| Failure { code: 2, message: format!("{}: {e}", path.display()) })
}

fn in_file<T>(path: &Path, r: crate::Result<T>) -> std::result::Result<T, Failure> {
    r.map_err(|e| {
        let mut f = Failure::from(e);
        f.message = format!("{}: {}", path.display(), f.message);
        f
    })
}

fn write_output(path: &Path, contents: &str) -> std::result::Result<(), Failure> {
    write_atomic(path, contents)
        .map_err(|e| Failure { code: 1, message: format!("{}: {e}", path.display()) })
}

/// Runs the command line `args` (program name first), writing summaries to
/// `out` and diagnostics to `err`. Returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            if code == 0 {
                let _ = write!(out, "{text}");
            } else {
                let _ = write!(err, "{text}");
            }
            return if code == 0 { 0 } else { 2 };
        }
    };
    let result = match cli.command {
        Command::Kernel { spec, points, out: dest } => cmd_kernel(&spec, &points, &dest, out),
        Command::Fit { spec, train, noise, optimize, max_evals, restarts, free, seed, trace, out_model } => {
            let opt = optimize.then_some(OptimizeArgs { max_evals, restarts, free, seed, trace });
            cmd_fit(&spec, &train, noise, opt, &out_model, out)
        }
        Command::Predict { model, points, out: dest } => cmd_predict(&model, &points, &dest, out),
        Command::VerifyWidth { spec, widths, ensembles, probes, seed, out: dest } => {
            cmd_verify_width(&spec, &widths, ensembles, &probes, seed, &dest, out)
        }
        Command::Barron { spec, x, n_list, reps, seed, out: dest } => {
            cmd_barron(&spec, &x, &n_list, reps, seed, &dest, out)
        }
        Command::Expect { kind, moments, method } => cmd_expect(kind, &moments, method, out),
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

fn load_spec(path: &Path) -> std::result::Result<KernelSpec, Failure> {
    let text = read_input(path)?;
    in_file(path, KernelSpec::from_config_str(&text))
}

fn load_points(path: &Path, d_in: usize) -> std::result::Result<DMatrix<f64>, Failure> {
    let text = read_input(path)?;
    let x = in_file(path, points_from_csv_str(&text))?;
    if x.ncols() != d_in {
        return Err(Failure {
            code: 2,
            message: format!("{}: {} columns but the spec has d_in = {d_in}", path.display(), x.ncols()),
        });
    }
    Ok(x)
}

fn cmd_kernel(spec_path: &Path, points: &Path, dest: &Path, out: &mut dyn Write) -> CmdResult {
    let spec = load_spec(spec_path)?;
    let x = load_points(points, spec.d_in)?;
    let (h, k) = gram(&spec, &x)?;
    factor_with_jitter(&k, 0.0)?;
    let m = k.nrows();
    let mut csv = String::from("h");
    for j in 0..m {
        let _ = write!(csv, ",k{j}");
    }
    csv.push('\n');
    for i in 0..m {
        csv.push_str(&fmt_f64(h[i]));
        for j in 0..m {
            csv.push(',');
            csv.push_str(&fmt_f64(k[(i, j)]));
        }
        csv.push('\n');
    }
    write_output(dest, &csv)?;
    let eig = SymmetricEigen::new(k).eigenvalues;
    let _ = writeln!(out, "points = {m}");
    let _ = writeln!(out, "min_eigenvalue = {}", fmt_f64(eig.min()));
    let _ = writeln!(out, "max_eigenvalue = {}", fmt_f64(eig.max()));
    Ok(0)
}

struct OptimizeArgs {
    max_evals: usize,
    restarts: usize,
    free: Vec<String>,
    seed: u64,
    trace: Option<PathBuf>,
}

/// Every variance the spec exposes, plus the noise.
fn default_free(spec: &KernelSpec) -> Vec<ParamId> {
    let mut free = vec![ParamId::Noise];
    if let FirstLayerMeasure::GaussianIid { .. } = spec.pi {
        free.extend([ParamId::PiVarW, ParamId::PiVarB]);
    }
    for l in 2..=spec.depth + 1 {
        free.push(ParamId::LayerVarW(l));
        if l <= spec.depth {
            free.push(ParamId::LayerVarB(l));
        }
    }
    free
}

fn cmd_fit(
    spec_path: &Path,
    train: &Path,
    noise: f64,
    optimize: Option<OptimizeArgs>,
    dest: &Path,
    out: &mut dyn Write,
) -> CmdResult {
    let mut spec = load_spec(spec_path)?;
    let text = read_input(train)?;
    let data = in_file(train, Dataset::from_csv_str(&text))?;
    if data.d_in() != spec.d_in {
        return Err(Failure {
            code: 2,
            message: format!("{}: {} input columns but the spec has d_in = {}", train.display(), data.d_in(), spec.d_in),
        });
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Failure { code: 2, message: format!("--noise must be finite and ≥ 0, got {noise}") });
    }
    let mut noise = noise;
    let mut trace_note = None;
    if let Some(opt) = optimize {
        let free = if opt.free.is_empty() {
            default_free(&spec)
        } else {
            opt.free.iter().map(|s| s.trim().parse()).collect::<crate::Result<Vec<ParamId>>>()?
        };
        let cfg = OptimizerConfig {
            free,
            restarts: opt.restarts,
            max_evals: opt.max_evals,
            seed: opt.seed,
            initial_noise: noise,
        };
        let result = optimize_hyperparams(&spec, &data, &cfg)?;
        let trace_path = opt.trace.unwrap_or_else(|| {
            let mut p = dest.as_os_str().to_owned();
            p.push(".trace.csv");
            PathBuf::from(p)
        });
        write_output(&trace_path, &result.trace_csv())?;
        trace_note = Some((result.initial_lml, result.trace.len(), trace_path));
        spec = result.spec;
        noise = result.noise_var;
    }
    let model = fit(&spec, &data, noise)?;
    write_output(dest, &model_to_string(&model))?;
    let _ = writeln!(out, "lml = {}", fmt_f64(model.lml));
    let _ = writeln!(out, "noise_var = {}", fmt_f64(model.noise_var));
    let _ = writeln!(out, "jitter_used = {}", fmt_f64(model.jitter_used));
    if let Some((initial, evals, path)) = trace_note {
        let _ = writeln!(out, "initial_lml = {}", fmt_f64(initial));
        let _ = writeln!(out, "evaluations = {evals}");
        let _ = writeln!(out, "trace = {}", path.display());
    }
    Ok(0)
}

fn cmd_predict(model_path: &Path, points: &Path, dest: &Path, out: &mut dyn Write) -> CmdResult {
    let text = read_input(model_path)?;
    let model = in_file(model_path, load_model(&text))?;
    let x = load_points(points, model.spec.d_in)?;
    let (mean, var) = model.predict(&x)?;
    let mut csv = String::new();
    for j in 0..x.ncols() {
        let _ = write!(csv, "x{j},");
    }
    csv.push_str("post_mean,post_var\n");
    for i in 0..x.nrows() {
        for j in 0..x.ncols() {
            csv.push_str(&fmt_f64(x[(i, j)]));
            csv.push(',');
        }
        let _ = writeln!(csv, "{},{}", fmt_f64(mean[i]), fmt_f64(var[i]));
    }
    write_output(dest, &csv)?;
    let _ = writeln!(out, "points = {}", x.nrows());
    let _ = writeln!(out, "jitter_used = {}", fmt_f64(model.jitter_used));
    Ok(0)
}

fn cmd_verify_width(
    spec_path: &Path,
    widths: &[usize],
    ensembles: usize,
    probes: &Path,
    seed: u64,
    dest: &Path,
    out: &mut dyn Write,
) -> CmdResult {
    let spec = load_spec(spec_path)?;
    let x = load_points(probes, spec.d_in)?;
    let report = width_convergence_report(&spec, widths, &x, ensembles, seed)?;
    write_output(dest, &report.to_csv())?;
    let verdict = report.verdict(&Bands::default());
    let _ = write!(out, "{}", report.to_text());
    for line in &verdict.lines {
        let _ = writeln!(out, "{line}");
    }
    let _ = writeln!(out, "{}", if verdict.pass { "PASS" } else { "FAIL" });
    Ok(if verdict.pass { 0 } else { 5 })
}

fn cmd_barron(
    spec_path: &Path,
    x_path: &Path,
    n_list: &[usize],
    reps: usize,
    seed: u64,
    dest: &Path,
    out: &mut dyn Write,
) -> CmdResult {
    let text = read_input(spec_path)?;
    let (bs, hpi_samples, oracle_samples) = in_file(spec_path, parse_barron_config(&text))?;
    let xs = load_points(x_path, bs.d_in)?;
    let mut csv = String::from("x_index,n,mean,mean_stderr,variance,ratio_to_next,ci_low,ci_high\n");
    let mut pass = true;
    let mut any_ratio = false;
    for i in 0..xs.nrows() {
        let x: Vec<f64> = xs.row(i).iter().copied().collect();
        let report = barron_variance_scaling(&bs, &x, n_list, reps, seed)?;
        for line in report.to_csv().lines().skip(1) {
            let _ = writeln!(csv, "{i},{line}");
        }
        let (oracle, oracle_se) = barron_mean_oracle(&bs, &x, oracle_samples, seed)?;
        let _ = writeln!(out, "x{i}: oracle mean = {} ± {}", fmt_f64(oracle), fmt_f64(oracle_se));
        for row in &report.rows {
            let z = (row.mean - oracle) / (row.mean_stderr.powi(2) + oracle_se.powi(2)).sqrt();
            let _ = writeln!(
                out,
                "x{i}: N = {}: mean = {} ± {}, variance = {}, z = {z:.3}",
                row.n,
                fmt_f64(row.mean),
                fmt_f64(row.mean_stderr),
                fmt_f64(row.variance)
            );
        }
        for r in &report.ratios {
            match (r.ratio, r.ci) {
                (Some(v), ci) => {
                    any_ratio = true;
                    let ok = v >= 0.75 * r.expected && v <= 1.25 * r.expected;
                    pass &= ok;
                    let ci = ci.map_or(String::new(), |(lo, hi)| format!(", 95% CI [{lo:.4}, {hi:.4}]"));
                    let _ = writeln!(
                        out,
                        "x{i}: Var[N={}]/Var[N={}] = {v:.4}{ci} (band [{:.2}, {:.2}]) {}",
                        r.n,
                        r.n_next,
                        0.75 * r.expected,
                        1.25 * r.expected,
                        if ok { "ok" } else { "FAIL" }
                    );
                }
                (None, _) => {
                    let _ = writeln!(out, "x{i}: variance is zero at N = {}, ratio check skipped", r.n_next);
                }
            }
        }
    }
    write_output(dest, &csv)?;
    match estimate_hpi_norm_sq(&bs, hpi_samples, seed) {
        Ok((v, se)) => {
            let _ = writeln!(out, "hpi_norm_sq = {} ± {}", fmt_f64(v), fmt_f64(se));
        }
        Err(Error::Unsupported(msg)) => {
            let _ = writeln!(out, "hpi_norm_sq unavailable: {msg}");
        }
        Err(e) => return Err(e.into()),
    }
    if !any_ratio {
        let _ = writeln!(out, "no variance ratio defined");
    }
    let _ = writeln!(out, "{}", if pass { "PASS" } else { "FAIL" });
    Ok(if pass { 0 } else { 5 })
}

fn parse_barron_config(text: &str) -> crate::Result<(BarronSamplerSpec, usize, usize)> {
    let kv = KeyValues::parse(text)?;
    let bs = BarronSamplerSpec::from_key_values(&kv)?;
    let hpi = kv.get_or("hpi_samples", DEFAULT_HPI_SAMPLES)?;
    let oracle = kv.get_or("oracle_samples", DEFAULT_ORACLE_SAMPLES)?;
    kv.finish()?;
    Ok((bs, hpi, oracle))
}

fn cmd_expect(kind: ActivationKind, moments: &[f64], method: ExpectationMethod, out: &mut dyn Write) -> CmdResult {
    let (value, stderr) = match (moments, method) {
        ([m, v], ExpectationMethod::MonteCarlo { samples, seed }) => {
            let (e, se) = mc_expect(GaussianMoments::new(*m, *v)?, kind, samples, seed)?;
            (e, Some(se))
        }
        ([m, v], _) => (expect_phi(GaussianMoments::new(*m, *v)?, kind, method)?, None),
        ([m1, m2, v1, v2, c], method) => {
            let bm = BivariateGaussianMoments::new(*m1, *m2, *v1, *v2, *c)?;
            match method {
                ExpectationMethod::MonteCarlo { samples, seed } => {
                    let (e, se) = mc_expect_pair(bm, kind, samples, seed)?;
                    (e, Some(se))
                }
                _ => (expect_phi_pair(bm, kind, method)?, None),
            }
        }
        _ => {
            return Err(Failure {
                code: 2,
                message: format!("--moments takes 2 (m,v) or 5 (m1,m2,v1,v2,c) values, got {}", moments.len()),
            })
        }
    };
    let _ = writeln!(out, "value = {}", fmt_f64(value));
    if let Some(se) = stderr {
        let _ = writeln!(out, "stderr = {}", fmt_f64(se));
    }
    Ok(0)
}
