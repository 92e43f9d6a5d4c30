use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;
use serde::Serialize;
use serde_json::{json, Value};

use sineclt::cltlab::{
    self, esseen_bound_configured, exact_variance_report, ks_distance, limit_variance, monte_carlo_statistics,
    rate_fit, rate_table, windowed_dilation, write_rate_csv, McOptions, RateModel, ESSEEN_CONVERGENCE_TOL,
};
use sineclt::error::Error;
use sineclt::funcspace::{fourier_transform_padded, sobolev_norm, Descriptor, Order};
use sineclt::hankel::{default_ring_grid, FredholmEvaluator, FredholmOptions, CONVERGENCE_TOL, DEFAULT_N_QUAD};
use sineclt::sinedpp::{self, SamplesManifest};

const VERSION: &str = concat!("sineclt ", env!("CARGO_PKG_VERSION"));

/// Numerical experiments on linear statistics of the sine process.
#[derive(Parser, Debug)]
#[command(name = "sineclt", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// key=value file with defaults for any flag; flags win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for JSON Lines records and CSV tables.
    #[arg(long, global = true, env = "SINECLT_OUT")]
    out: Option<PathBuf>,
    /// Worker threads; defaults to the hardware parallelism.
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sobolev norms of f and its ring component.
    Norms(Params),
    /// Sample configurations of the sine process on [−L, L].
    Sample(Params),
    /// Exact variance of the linear statistic of f(·/R) against its limit.
    Variance(Params),
    /// Monte Carlo moment generating function against the determinant formula.
    MgfCheck(Params),
    /// Fredholm determinant V at each (λ, R).
    Fredholm(Params),
    /// Esseen bound on the Kolmogorov distance at each R.
    Bound(Params),
    /// Esseen bounds over an R grid with rate fits.
    Rate(Params),
    /// Trivial identities across all modules.
    Selftest(Params),
}

#[derive(Args, Debug, Clone, Default)]
struct Params {
    /// Function descriptor, e.g. `lorentzian` or `indicator:lo=-5,hi=5`.
    #[arg(long = "f")]
    f: Option<String>,
    /// Comma-separated dilation factors.
    #[arg(long = "R", value_delimiter = ',', allow_hyphen_values = true)]
    r: Option<Vec<f64>>,
    /// Comma-separated λ values; complex as `a+bi`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    lambda: Option<Vec<String>>,
    /// Number of Monte Carlo replicates.
    #[arg(long = "N")]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n_quad: Option<usize>,
    /// Sampler quadrature nodes.
    #[arg(long)]
    n_nodes: Option<usize>,
    /// Window half-width.
    #[arg(long = "L")]
    half_width: Option<f64>,
    /// Rate model: inverse_log or inverse_linear.
    #[arg(long)]
    model: Option<String>,
    /// Comma-separated T grid for the Esseen bound.
    #[arg(long, value_delimiter = ',')]
    t_grid: Option<Vec<f64>>,
    /// Tolerance of the quadrature-doubling check on determinants.
    #[arg(long)]
    convergence_tol: Option<f64>,
}

/// Resolved parameters, embedded in every output record.
#[derive(Serialize, Debug, Clone)]
struct ExperimentConfig {
    command: String,
    descriptor: Descriptor,
    descriptor_text: String,
    r: Vec<f64>,
    lambda: Vec<[f64; 2]>,
    n: usize,
    n_explicit: bool,
    seed: u64,
    n_quad: usize,
    n_nodes: Option<usize>,
    half_width: Option<f64>,
    model: RateModel,
    t_grid: Vec<f64>,
    convergence_tol: Option<f64>,
    out: PathBuf,
    workers: Option<usize>,
}

/// Failure with its exit code.
#[derive(Debug)]
enum Failure {
    Config(String),
    Descriptor(String),
    Module(Error),
    SelftestFailed(usize),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Module(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Module(Error::Io(e))
    }
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 3,
            Failure::Descriptor(_) => 4,
            Failure::SelftestFailed(_) => 30,
            Failure::Module(e) => match e.kind() {
                "domain" => 10,
                "tail_truncation" => 11,
                "range" => 12,
                "resolution" => 13,
                "degeneracy" => 14,
                "overflow" => 15,
                "conditioning" => 16,
                "consistency" => 17,
                "divergence" => 18,
                "precondition" => 19,
                "insufficient_data" => 20,
                "io" => 21,
                "serialization" => 22,
                _ => 23,
            },
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            Failure::Config(_) => "invalid_config",
            Failure::Descriptor(_) => "invalid_descriptor",
            Failure::SelftestFailed(_) => "selftest_failed",
            Failure::Module(e) => e.kind(),
        }
    }

    fn message(&self) -> String {
        match self {
            Failure::Config(m) | Failure::Descriptor(m) => m.clone(),
            Failure::SelftestFailed(n) => format!("{n} self-test checks failed"),
            Failure::Module(e) => e.to_string(),
        }
    }
}

fn parse_complex(s: &str) -> Result<Complex64, Failure> {
    let t = s.trim().replace(' ', "");
    let bad = || Failure::Config(format!("cannot parse λ = '{s}'"));
    let num = |x: &str| x.parse::<f64>().map_err(|_| bad());
    let Some(body) = t.strip_suffix('i') else {
        return Ok(Complex64::new(num(&t)?, 0.0));
    };
    // split at the last sign that is neither leading nor an exponent sign
    let b = body.as_bytes();
    let split = (1..b.len()).rev().find(|&k| (b[k] == b'+' || b[k] == b'-') && !matches!(b[k - 1], b'e' | b'E'));
    let imag = |x: &str| match x {
        "" | "+" => Ok(1.0),
        "-" => Ok(-1.0),
        _ => num(x),
    };
    match split {
        Some(k) => Ok(Complex64::new(num(&body[..k])?, imag(&body[k..])?)),
        None => Ok(Complex64::new(0.0, imag(body)?)),
    }
}

fn read_config_file(path: &Path) -> Result<BTreeMap<String, String>, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Failure::Config(format!("{}:{}: expected key=value", path.display(), i + 1)))?;
        map.insert(k.trim().replace('-', "_"), v.trim().to_string());
    }
    Ok(map)
}

/// Fills unset flags from the config file; unknown keys are rejected.
fn merge(p: &mut Params, cli_out: &mut Option<PathBuf>, workers: &mut Option<usize>, file: BTreeMap<String, String>) -> Result<(), Failure> {
    fn num<T: std::str::FromStr>(k: &str, v: &str) -> Result<T, Failure> {
        v.parse().map_err(|_| Failure::Config(format!("bad value for '{k}': {v}")))
    }
    fn list<T: std::str::FromStr>(k: &str, v: &str) -> Result<Vec<T>, Failure> {
        v.split(',').map(|x| num(k, x.trim())).collect()
    }
    for (k, v) in file {
        match k.as_str() {
            "f" => p.f = p.f.take().or(Some(v)),
            "R" | "r" => p.r = p.r.take().or(Some(list(&k, &v)?)),
            "lambda" => p.lambda = p.lambda.take().or(Some(v.split(',').map(|x| x.trim().to_string()).collect())),
            "N" | "n" => p.n = p.n.or(Some(num(&k, &v)?)),
            "seed" => p.seed = p.seed.or(Some(num(&k, &v)?)),
            "n_quad" => p.n_quad = p.n_quad.or(Some(num(&k, &v)?)),
            "n_nodes" => p.n_nodes = p.n_nodes.or(Some(num(&k, &v)?)),
            "L" => p.half_width = p.half_width.or(Some(num(&k, &v)?)),
            "model" => p.model = p.model.take().or(Some(v)),
            "t_grid" => p.t_grid = p.t_grid.take().or(Some(list(&k, &v)?)),
            "convergence_tol" => p.convergence_tol = p.convergence_tol.or(Some(num(&k, &v)?)),
            "out" => *cli_out = cli_out.take().or(Some(PathBuf::from(v))),
            "workers" => *workers = workers.or(Some(num(&k, &v)?)),
            _ => return Err(Failure::Config(format!("unknown config key '{k}'"))),
        }
    }
    Ok(())
}

fn resolve(command: &str, p: Params, out: Option<PathBuf>, workers: Option<usize>) -> Result<ExperimentConfig, Failure> {
    let text = p.f.unwrap_or_else(|| "lorentzian".into());
    let descriptor: Descriptor = text.parse().map_err(|e: Error| Failure::Descriptor(e.to_string()))?;
    descriptor.validate().map_err(|e| Failure::Descriptor(e.to_string()))?;
    let r = p.r.unwrap_or_else(|| vec![5.0]);
    if r.is_empty() || r.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
        return Err(Failure::Config("R values must be positive".into()));
    }
    let lambda = p
        .lambda
        .unwrap_or_else(|| vec!["1".into()])
        .iter()
        .map(|s| parse_complex(s))
        .collect::<Result<Vec<_>, _>>()?;
    let model = p.model.as_deref().unwrap_or("inverse_linear").parse().map_err(|e: Error| Failure::Config(e.to_string()))?;
    let cfg = ExperimentConfig {
        command: command.into(),
        descriptor,
        descriptor_text: descriptor.to_string(),
        r,
        lambda: lambda.iter().map(|z| [z.re, z.im]).collect(),
        n: p.n.unwrap_or(10_000),
        n_explicit: p.n.is_some(),
        seed: p.seed.unwrap_or(1),
        n_quad: p.n_quad.unwrap_or(DEFAULT_N_QUAD),
        n_nodes: p.n_nodes,
        half_width: p.half_width,
        model,
        t_grid: p.t_grid.unwrap_or_else(|| (1..=9).map(|k| 2f64.powi(k)).collect()),
        convergence_tol: p.convergence_tol,
        out: out.unwrap_or_else(|| PathBuf::from(".")),
        workers,
    };
    if cfg.n == 0 || cfg.n_quad < 32 || cfg.n_nodes == Some(0) {
        return Err(Failure::Config("N must be positive, n_quad ≥ 32, n_nodes positive".into()));
    }
    if cfg.half_width.is_some_and(|l| !(l > 0.0 && l.is_finite())) {
        return Err(Failure::Config("L must be positive".into()));
    }
    if cfg.t_grid.is_empty() || cfg.t_grid.iter().any(|&t| !(t > 0.0)) {
        return Err(Failure::Config("T grid must be nonempty and positive".into()));
    }
    if cfg.convergence_tol.is_some_and(|t| !(t > 0.0)) {
        return Err(Failure::Config("convergence tolerance must be positive".into()));
    }
    if workers == Some(0) {
        return Err(Failure::Config("workers must be positive".into()));
    }
    Ok(cfg)
}

/// JSON Lines sink; every record carries the version and the full config.
struct Records {
    out: BufWriter<File>,
    config: Value,
}

impl Records {
    fn create(cfg: &ExperimentConfig) -> Result<Self, Failure> {
        fs::create_dir_all(&cfg.out)?;
        let path = cfg.out.join(format!("{}.jsonl", cfg.command));
        let config = serde_json::to_value(cfg).map_err(Error::from)?;
        Ok(Records { out: BufWriter::new(File::create(path)?), config })
    }

    fn push<T: Serialize>(&mut self, record: &T) -> Result<(), Failure> {
        let line = json!({ "version": VERSION, "config": self.config, "record": record });
        writeln!(self.out, "{}", serde_json::to_string(&line).map_err(Error::from)?)?;
        Ok(())
    }

    fn finish(mut self) -> Result<(), Failure> {
        self.out.flush()?;
        Ok(())
    }
}

fn fredholm_options(cfg: &ExperimentConfig, default_tol: f64) -> FredholmOptions {
    FredholmOptions {
        n_quad: cfg.n_quad,
        check_convergence: true,
        convergence_tol: cfg.convergence_tol.unwrap_or(default_tol),
        ..Default::default()
    }
}

fn cmd_norms(cfg: &ExperimentConfig, rec: &mut Records) -> Result<String, Failure> {
    let f = cltlab::base_function(cfg.descriptor)?;
    let spec = fourier_transform_padded(&f, 4)?;
    let half = sobolev_norm(&spec, Order::Half)?;
    // Ḣ¹ may legitimately diverge (jumps); report that instead of failing
    let one = sobolev_norm(&spec, Order::One);
    let ring_sup = default_ring_grid(cfg.descriptor)?.sup_norm();
    let record = json!({
        "l2_norm_sq": f.l2_norm_sq(),
        "h_half": half,
        "h_one": one.as_ref().ok(),
        "h_one_error": one.as_ref().err().map(|e| e.to_string()),
        // |spectrum of f̊| = |f̂|, so Ḣ^s norms of f and f̊ coincide
        "ring_sup": ring_sup,
        "ring_h_one": one.as_ref().ok(),
        "limit_variance": half * half / (2.0 * std::f64::consts::PI),
    });
    rec.push(&record)?;
    Ok(format!("‖f‖_Ḣ½ = {half:.6e}, sup|f̊| = {ring_sup:.6e}"))
}

fn cmd_sample(cfg: &ExperimentConfig, rec: &mut Records) -> Result<String, Failure> {
    let l = cfg.half_width.unwrap_or(5.0);
    let n_nodes = cfg.n_nodes.unwrap_or_else(|| sinedpp::default_nodes(l));
    let es = sinedpp::build_kernel_eigensystem(l, n_nodes)?;
    let cfgs = sinedpp::sample_many(&es, cfg.seed, cfg.n as u64)?;
    let mut w = csv::Writer::from_path(cfg.out.join("sample_points.csv")).map_err(Error::from)?;
    w.write_record(["replicate", "x"]).map_err(Error::from)?;
    for c in &cfgs {
        for x in &c.points {
            w.serialize((c.replicate, x)).map_err(Error::from)?;
        }
    }
    w.flush()?;
    let counts: Vec<f64> = cfgs.iter().map(|c| c.len() as f64).collect();
    let n = counts.len() as f64;
    let mean = counts.iter().sum::<f64>() / n;
    let var = counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    let manifest = SamplesManifest {
        half_width: l,
        n_nodes,
        count: cfg.n as u64,
        seed: cfg.seed,
        batch: sinedpp::BATCH,
        expected_count: sinedpp::expected_count(&es),
        raw_eigenvalue_min: es.raw_min,
        raw_eigenvalue_max: es.raw_max,
        mean_count: mean,
    };
    fs::write(cfg.out.join("samples_manifest.json"), serde_json::to_string_pretty(&manifest).map_err(Error::from)?)?;
    rec.push(&json!({
        "manifest": manifest,
        "count_variance": var,
        "exact_count_variance": sinedpp::count_variance(&es),
    }))?;
    Ok(format!("{} configurations on [−{l}, {l}], mean count {mean:.4}", cfg.n))
}

/// Support of f(·/R) plus a margin, capped for slowly decaying f.
fn variance_window(cfg: &ExperimentConfig, r: f64) -> f64 {
    cfg.half_width.unwrap_or_else(|| (r * cfg.descriptor.support_halfwidth(1e-16) + 1.0).min(400.0))
}

fn cmd_variance(cfg: &ExperimentConfig, rec: &mut Records) -> Result<String, Failure> {
    let f = cltlab::base_function(cfg.descriptor)?;
    let sigma2 = limit_variance(&f)?;
    let mut last = String::new();
    for &r in &cfg.r {
        let l = variance_window(cfg, r);
        let report = exact_variance_report(&windowed_dilation(&f, r, l)?)?;
        let gap = (report.value - sigma2).abs() / sigma2;
        rec.push(&json!({ "R": r, "half_width": l, "variance": report, "limit_variance": sigma2, "relative_gap": gap }))?;
        last = format!("R = {r}: Var = {:.6e}, limit {sigma2:.6e}", report.value);
    }
    Ok(last)
}

fn cmd_mgf(cfg: &ExperimentConfig, rec: &mut Records) -> Result<String, Failure> {
    if cfg.lambda.iter().any(|l| l[1] != 0.0) {
        return Err(Failure::Config("mgf-check needs real λ".into()));
    }
    let f = cltlab::base_function(cfg.descriptor)?;
    let sigma2 = limit_variance(&f)?;
    let ev = FredholmEvaluator::for_descriptor(cfg.descriptor, fredholm_options(cfg, CONVERGENCE_TOL))?;
    let opts = McOptions {
        n_nodes: cfg.n_nodes,
        lambda_grid: cfg.lambda.iter().map(|l| l[0]).collect(),
        max_half_width: cfg.half_width.unwrap_or(120.0),
        ..Default::default()
    };
    let mut worst: f64 = 0.0;
    for &r in &cfg.r {
        let s = monte_carlo_statistics(&f, r, cfg.n, cfg.seed, &opts)?;
        for m in &s.mgf {
            let v = ev.evaluate(Complex64::new(m.lambda, 0.0), r)?;
            let predicted = (m.lambda * m.lambda * sigma2 / 2.0).exp() * v.value_re;
            let z = (m.value - predicted) / m.stderr;
            worst = worst.max(z.abs());
            rec.push(&json!({
                "R": r, "lambda": m.lambda, "empirical": m.value, "stderr": m.stderr,
                "determinant": v, "predicted": predicted, "z": z,
                "half_width": s.half_width, "n_nodes": s.n_nodes, "limit_variance": sigma2,
            }))?;
        }
    }
    Ok(format!("max |z| = {worst:.3}"))
}

fn cmd_fredholm(cfg: &ExperimentConfig, rec: &mut Records) -> Result<String, Failure> {
    let ev = FredholmEvaluator::for_descriptor(cfg.descriptor, fredholm_options(cfg, CONVERGENCE_TOL))?;
    let mut last = String::new();
    for &r in &cfg.r {
        for l in &cfg.lambda {
            let e = ev.evaluate(Complex64::new(l[0], l[1]), r)?;
            rec.push(&e)?;
            last = format!("V({}, R = {r}) = {}{:+}i", Complex64::new(l[0], l[1]), e.value_re, e.value_im);
        }
    }
    Ok(last)
}

fn bounds(cfg: &ExperimentConfig) -> Result<Vec<cltlab::BoundReport>, Failure> {
    let f = cltlab::base_function(cfg.descriptor)?;
    let fred = fredholm_options(cfg, ESSEEN_CONVERGENCE_TOL);
    cfg.r
        .iter()
        .map(|&r| esseen_bound_configured(&f, r, &cfg.t_grid, fred.clone()).map_err(Failure::from))
        .collect()
}

fn cmd_bound(cfg: &ExperimentConfig, rec: &mut Records) -> Result<String, Failure> {
    let reports = bounds(cfg)?;
    for b in &reports {
        rec.push(b)?;
    }
    let parts: Vec<String> = reports.iter().map(|b| format!("R = {}: {:.4e} (T = {})", b.r, b.bound, b.t)).collect();
    Ok(parts.join("; "))
}

fn cmd_rate(cfg: &ExperimentConfig, rec: &mut Records) -> Result<String, Failure> {
    let reports = bounds(cfg)?;
    let pts: Vec<(f64, f64)> = reports.iter().map(|b| (b.r, b.bound)).collect();
    let ks: Vec<Option<f64>> = if cfg.n_explicit {
        let f = cltlab::base_function(cfg.descriptor)?;
        let opts = McOptions { n_nodes: cfg.n_nodes, ..Default::default() };
        reports
            .iter()
            .map(|b| {
                let s = monte_carlo_statistics(&f, b.r, cfg.n, cfg.seed, &opts)?;
                Ok(Some(ks_distance(&s.ecdf(), b.sigma)?))
            })
            .collect::<Result<_, Error>>()?
    } else {
        vec![None; pts.len()]
    };
    let fit = rate_fit(&pts, cfg.model)?;
    let rows = rate_table(&pts, &ks)?;
    write_rate_csv(&rows, File::create(cfg.out.join("rate.csv"))?)?;
    for b in &reports {
        rec.push(&json!({ "bound": b }))?;
    }
    rec.push(&json!({ "rate": fit, "rows": rows }))?;
    Ok(format!("{} rows, c = {:.4e}, log-log slope {:.3}", rows.len(), fit.c, fit.loglog_slope))
}

fn cmd_selftest(rec: &mut Records) -> Result<String, Failure> {
    let checks = sineclt::selftest::run_all();
    let mut failed = 0;
    for c in &checks {
        println!("[{}] {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
        failed += usize::from(!c.passed);
        rec.push(c)?;
    }
    if failed > 0 {
        return Err(Failure::SelftestFailed(failed));
    }
    Ok(format!("{} checks passed", checks.len()))
}

fn run(cli: Cli) -> Result<String, Failure> {
    let (name, params) = match &cli.command {
        Command::Norms(p) => ("norms", p),
        Command::Sample(p) => ("sample", p),
        Command::Variance(p) => ("variance", p),
        Command::MgfCheck(p) => ("mgf-check", p),
        Command::Fredholm(p) => ("fredholm", p),
        Command::Bound(p) => ("bound", p),
        Command::Rate(p) => ("rate", p),
        Command::Selftest(p) => ("selftest", p),
    };
    let mut params = params.clone();
    let (mut out, mut workers) = (cli.out.clone(), cli.workers);
    if let Some(path) = &cli.config {
        merge(&mut params, &mut out, &mut workers, read_config_file(path)?)?;
    }
    let cfg = resolve(name, params, out, workers)?;
    if let Some(n) = cfg.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Config(format!("thread pool: {e}")))?;
    }
    let mut rec = Records::create(&cfg)?;
    let summary = match cli.command {
        Command::Norms(_) => cmd_norms(&cfg, &mut rec),
        Command::Sample(_) => cmd_sample(&cfg, &mut rec),
        Command::Variance(_) => cmd_variance(&cfg, &mut rec),
        Command::MgfCheck(_) => cmd_mgf(&cfg, &mut rec),
        Command::Fredholm(_) => cmd_fredholm(&cfg, &mut rec),
        Command::Bound(_) => cmd_bound(&cfg, &mut rec),
        Command::Rate(_) => cmd_rate(&cfg, &mut rec),
        Command::Selftest(_) => cmd_selftest(&mut rec),
    };
    rec.finish()?;
    summary
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let command = format!("{:?}", cli.command).split('(').next().unwrap_or("").to_lowercase();
    match run(cli) {
        Ok(summary) => {
            println!("{command}: {summary}");
            ExitCode::SUCCESS
        }
        Err(f) => {
            let record = json!({ "version": VERSION, "error": f.kind(), "message": f.message(), "exit_code": f.code() });
            eprintln!("{record}");
            ExitCode::from(f.code())
        }
    }
}
