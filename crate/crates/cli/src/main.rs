use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fbmvar_core::limitlaws::{
    cache_dir, fit_rate_slope, rate_table, reference_sample_in, surrogate_error_exponent,
    ReferenceSpec,
};
use fbmvar_core::report::{
    path_csv, rates_csv, read_series_csv, run_series, summary_csv, versions, SeriesManifest,
};
use fbmvar_core::series::{EpsilonGrid, SeriesConfig, SeriesKind};
use fbmvar_core::variations::{normalization_constants, Regime};
use fbmvar_core::verify::{run_criterion, VerifyOptions, CRITERIA};
use fbmvar_core::{Error, HermiteOrder, Hurst, PathSpec};
use serde_json::json;

/// Hermite variations of fractional Brownian motion.
///
/// Every flag may also be given in a plain-text `--config FILE` of
/// `key=value` lines (keys are flag names without dashes); flags on the
/// command line win over file values.
#[derive(Debug, Parser)]
#[command(name = "fbmvar", version, args_override_self = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write one fBm path and its increments as CSV.
    Simulate(SimulateArgs),
    /// Print the normalising constant of the active regime as JSON.
    Constants(ConstantsArgs),
    /// KS distance to the limit law on an n grid, plus the fitted slope.
    Rates(RatesArgs),
    /// Estimate f1, f2, g1 or g2 on an epsilon grid.
    Series(SeriesArgs),
    /// Run the acceptance checks and print one line per criterion.
    Verify(VerifyArgs),
    /// Merge series CSV files into a normalized_ratio vs predicted_limit table.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct Common {
    /// Plain-text key=value configuration file.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Output file (standard output when absent).
    #[arg(long, value_name = "FILE")]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    hurst: f64,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct ConstantsArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    q: u32,
    #[arg(long)]
    hurst: f64,
}

#[derive(Debug, Args)]
struct RatesArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    q: u32,
    #[arg(long)]
    hurst: f64,
    /// Comma-separated path lengths.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "64,128,256,512,1024,2048,4096"
    )]
    n_grid: Vec<usize>,
    /// Draws per grid point.
    #[arg(long, default_value_t = 5000)]
    m: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Reference-sample cache directory (default `$FBMVAR_CACHE_DIR`).
    #[arg(long, value_name = "DIR")]
    cache_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SeriesArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    kind: SeriesKind,
    #[arg(long)]
    q: u32,
    #[arg(long)]
    hurst: f64,
    /// Comma-separated, strictly decreasing epsilons (default: 8 points, ratio 1/sqrt(10)).
    #[arg(long, value_delimiter = ',')]
    eps_grid: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0.02)]
    tol: f64,
    /// Cap on the number of (n, replica) indicators per epsilon.
    #[arg(long, default_value_t = 10_000_000)]
    budget: u64,
    #[arg(long, default_value_t = 1 << 20)]
    max_n: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Run-manifest JSON path (default: output path with `.json` appended).
    #[arg(long, value_name = "FILE")]
    manifest: Option<PathBuf>,
    #[arg(long, value_name = "DIR")]
    cache_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 20_240_917)]
    seed: u64,
    /// Comma-separated criterion numbers (default: all).
    #[arg(long, value_delimiter = ',')]
    only: Option<Vec<u32>>,
    #[arg(long, value_name = "DIR")]
    cache_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    #[command(flatten)]
    common: Common,
    /// Series CSV files written by `fbmvar series`.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
}

enum Failure {
    Config(String),
    Run(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParameter { ref name, .. } => {
                Failure::Config(format!("invalid value for --{name}: {e}"))
            }
            Error::Regime { .. } => Failure::Config(e.to_string()),
            other => Failure::Run(other),
        }
    }
}

fn flag<T>(name: &str, r: fbmvar_core::Result<T>) -> Result<T, Failure> {
    r.map_err(|e| Failure::Config(format!("invalid value for --{name}: {e}")))
}

/// Splices `--key value` pairs from the config file in right after the
/// subcommand, so that explicit flags, which come later, override them.
fn expand_config(args: Vec<OsString>) -> Result<Vec<OsString>, String> {
    let mut path = None;
    for (i, a) in args.iter().enumerate() {
        let s = a.to_string_lossy();
        if s == "--config" {
            path = args.get(i + 1).cloned();
        } else if let Some(p) = s.strip_prefix("--config=") {
            path = Some(OsString::from(p));
        }
    }
    let Some(path) = path else { return Ok(args) };
    let text = fs::read_to_string(&path)
        .map_err(|e| format!("cannot read --config {}: {e}", Path::new(&path).display()))?;
    let mut injected = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format!("--config line {}: expected key=value", lineno + 1))?;
        let key = k.trim().replace('_', "-");
        if key == "config" {
            continue;
        }
        injected.push(OsString::from(format!("--{key}")));
        injected.push(OsString::from(v.trim()));
    }
    let Some(sub) = args
        .iter()
        .skip(1)
        .position(|a| !a.to_string_lossy().starts_with('-'))
    else {
        return Ok(args);
    };
    let at = sub + 2;
    let mut out = args[..at].to_vec();
    out.extend(injected);
    out.extend_from_slice(&args[at..]);
    Ok(out)
}

fn emit(output: &Option<PathBuf>, text: &str) -> Result<(), Failure> {
    match output {
        Some(p) => fs::write(p, text).map_err(|e| {
            Failure::Run(Error::Io {
                path: p.display().to_string(),
                reason: e.to_string(),
            })
        }),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|e| {
                    Failure::Run(Error::Io {
                        path: "<stdout>".into(),
                        reason: e.to_string(),
                    })
                })
        }
    }
}

fn pool(workers: usize) -> Result<rayon::ThreadPool, Failure> {
    if workers == 0 {
        return Err(Failure::Config(
            "invalid value for --workers: must be at least 1".into(),
        ));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Failure::Config(format!("invalid value for --workers: {e}")))
}

fn reference_spec(q: HermiteOrder, hurst: Hurst) -> ReferenceSpec {
    ReferenceSpec {
        q: q.get(),
        hurst: hurst.get(),
        ..ReferenceSpec::default()
    }
}

fn simulate(a: SimulateArgs) -> Result<(), Failure> {
    let hurst = flag("hurst", Hurst::new(a.hurst))?;
    let spec = flag("n", PathSpec::new(a.n, hurst, a.seed))?;
    emit(&a.common.output, &path_csv(&spec)?)?;
    if let Some(p) = &a.common.output {
        let meta = json!({"command": "simulate", "hurst": a.hurst, "n": a.n, "seed": a.seed, "versions": versions()});
        emit(&Some(sidecar(p)), &format!("{meta:#}\n"))?;
    }
    Ok(())
}

fn sidecar(p: &Path) -> PathBuf {
    let mut s = p.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn constants(a: ConstantsArgs) -> Result<(), Failure> {
    let q = flag("q", HermiteOrder::new(a.q))?;
    let hurst = flag("hurst", Hurst::new(a.hurst))?;
    let c = normalization_constants(q, hurst)?;
    let active = c.active();
    let key = match c.regime {
        Regime::Clt => "c1",
        Regime::Hermite => "c2",
    };
    let mut v = json!({
        "q": a.q,
        "hurst": a.hurst,
        "regime": c.regime,
        "certified_error": active.error,
        "version": versions().fbmvar,
    });
    v[key] = json!(active.value);
    emit(&a.common.output, &format!("{v}\n"))
}

fn rates(a: RatesArgs) -> Result<(), Failure> {
    let q = flag("q", HermiteOrder::new(a.q))?;
    let hurst = flag("hurst", Hurst::new(a.hurst))?;
    if a.m == 0 {
        return Err(Failure::Config(
            "invalid value for --m: must be at least 1".into(),
        ));
    }
    if a.n_grid.is_empty() || a.n_grid.contains(&0) {
        return Err(Failure::Config(
            "invalid value for --n-grid: lengths must be positive".into(),
        ));
    }
    let regime = Regime::classify(q, hurst)?;
    let dir = a.cache_dir.clone().unwrap_or_else(cache_dir);
    let rows = pool(a.common.workers)?.install(|| -> Result<_, Failure> {
        let reference = match regime {
            Regime::Hermite => Some(reference_sample_in(&dir, &reference_spec(q, hurst))?),
            Regime::Clt => None,
        };
        Ok(rate_table(
            q,
            hurst,
            &a.n_grid,
            a.m,
            a.seed,
            reference.as_deref(),
        )?)
    })?;
    emit(&a.common.output, &rates_csv(&rows))?;
    let points: Vec<(u64, f64)> = rows.iter().map(|r| (r.n, r.ks)).collect();
    let fit = match fit_rate_slope(&points) {
        Ok(f) => json!(f),
        Err(e) => json!({"error": e.to_string()}),
    };
    let meta = json!({
        "command": "rates",
        "q": a.q,
        "hurst": a.hurst,
        "m": a.m,
        "seed": a.seed,
        "regime": regime,
        "fit": fit,
        "predicted_exponent": rows.first().map(|r| r.predicted_exponent),
        "surrogate_error_exponent": (regime == Regime::Hermite).then(|| surrogate_error_exponent(q, hurst)),
        "versions": versions(),
    });
    match &a.common.output {
        Some(p) => emit(&Some(sidecar(p)), &format!("{meta:#}\n")),
        None => {
            eprintln!("{meta}");
            Ok(())
        }
    }
}

fn series(a: SeriesArgs) -> Result<(), Failure> {
    let q = flag("q", HermiteOrder::new(a.q))?;
    let hurst = flag("hurst", Hurst::new(a.hurst))?;
    a.kind.check(q, hurst)?;
    let grid = match &a.eps_grid {
        Some(v) => flag("eps-grid", EpsilonGrid::new(v.clone()))?,
        None => EpsilonGrid::default_for(q),
    };
    if a.tol.is_nan() || a.tol <= 0.0 {
        return Err(Failure::Config(
            "invalid value for --tol: must be positive".into(),
        ));
    }
    let config = SeriesConfig {
        tol: a.tol,
        budget: a.budget,
        max_n: a.max_n,
        seed: a.seed,
        ..SeriesConfig::default()
    };
    let dir = a.cache_dir.clone().unwrap_or_else(cache_dir);
    let run = pool(a.common.workers)?.install(|| -> Result<_, Failure> {
        let reference = match a.kind {
            SeriesKind::G2 => Some(reference_sample_in(&dir, &reference_spec(q, hurst))?),
            _ => None,
        };
        Ok(run_series(
            a.kind,
            q,
            hurst,
            &grid,
            &config,
            reference.as_deref(),
        )?)
    })?;
    emit(&a.common.output, &run.csv())?;
    let manifest_path = a
        .manifest
        .clone()
        .or_else(|| a.common.output.as_deref().map(sidecar));
    if let Some(p) = manifest_path {
        let manifest = SeriesManifest::new(a.kind, q, hurst, &config, a.common.workers, &run);
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serialises");
        emit(&Some(p), &format!("{text}\n"))?;
    }
    match run.error {
        Some(e) => Err(Failure::Run(e)),
        None => Ok(()),
    }
}

fn verify(a: VerifyArgs) -> Result<bool, Failure> {
    let ids: Vec<u32> = match &a.only {
        Some(v) => {
            if let Some(bad) = v.iter().find(|id| !CRITERIA.iter().any(|(i, _)| i == *id)) {
                return Err(Failure::Config(format!(
                    "invalid value for --only: no criterion {bad}"
                )));
            }
            v.clone()
        }
        None => CRITERIA.iter().map(|(i, _)| *i).collect(),
    };
    let opts = VerifyOptions {
        seed: a.seed,
        cache_dir: a.cache_dir.clone().unwrap_or_else(cache_dir),
        ..VerifyOptions::default()
    };
    let mut all = true;
    let mut text = String::new();
    pool(a.common.workers)?.install(|| {
        for id in ids {
            let r = run_criterion(id, &opts);
            print!("{}", r.render());
            let _ = std::io::stdout().flush();
            text.push_str(&r.render());
            all &= r.passed;
        }
    });
    if let Some(p) = &a.common.output {
        emit(&Some(p.clone()), &text)?;
    }
    Ok(all)
}

fn report(a: ReportArgs) -> Result<(), Failure> {
    let mut rows = Vec::new();
    for p in &a.inputs {
        rows.extend(read_series_csv(p)?);
    }
    emit(&a.common.output, &summary_csv(&rows))
}

fn main() -> ExitCode {
    let args = match expand_config(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(2);
        }
    };
    let cli = Cli::parse_from(args);
    let outcome = match cli.command {
        Command::Simulate(a) => simulate(a).map(|_| true),
        Command::Constants(a) => constants(a).map(|_| true),
        Command::Rates(a) => rates(a).map(|_| true),
        Command::Series(a) => series(a).map(|_| true),
        Command::Verify(a) => verify(a),
        Command::Report(a) => report(a).map(|_| true),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Run(e)) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(1)
        }
    }
}
