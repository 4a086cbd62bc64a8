//! CSV and JSON output shared by the command-line tool and the checks.
//!
//! CSV files use a period decimal point, comma separators and LF line
//! endings. Floats are written in Rust's shortest round-trip form, so equal
//! values always produce equal bytes.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fgn::{fbm_from_fgn, sample_fgn, Hurst, PathSpec};
use crate::hermite::HermiteOrder;
use crate::limitlaws::{EmpiricalSample, RateRow};
use crate::rng::GENERATOR_NAME;
use crate::series::{
    estimate_series, normalized_ratio, predicted_limit, EpsilonGrid, ReplicaSchedule, SeriesConfig,
    SeriesKind,
};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Serialize)]
pub struct Versions {
    pub fbmvar: &'static str,
    pub generator: &'static str,
}

pub fn versions() -> Versions {
    Versions {
        fbmvar: VERSION,
        generator: GENERATOR_NAME,
    }
}

/// `k,t,fbm,increment`: `B_{k/n}` on the grid and the forward increment
/// `X_k` (empty on the last row).
pub fn path_csv(spec: &PathSpec) -> Result<String> {
    let sample = sample_fgn(spec)?;
    let path = fbm_from_fgn(&sample);
    let n = spec.n;
    let mut out = String::from("k,t,fbm,increment\n");
    for (k, b) in path.iter().enumerate() {
        let t = k as f64 / n as f64;
        match sample.increments.get(k) {
            Some(x) => writeln!(out, "{k},{t},{b},{x}").unwrap(),
            None => writeln!(out, "{k},{t},{b},").unwrap(),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesRow {
    pub epsilon: f64,
    pub value: f64,
    pub mc_stderr: f64,
    pub n_trunc: u64,
    pub remainder_bound: f64,
    pub normalized_ratio: f64,
    pub predicted_limit: f64,
    #[serde(skip)]
    pub schedule: ReplicaSchedule,
}

pub const SERIES_HEADER: &str =
    "epsilon,value,mc_stderr,n_trunc,remainder_bound,normalized_ratio,predicted_limit";

impl SeriesRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}\n",
            self.epsilon,
            self.value,
            self.mc_stderr,
            self.n_trunc,
            self.remainder_bound,
            self.normalized_ratio,
            self.predicted_limit
        )
    }
}

/// Result of a series run over an epsilon grid. Rows are produced in grid
/// order; the run stops at the first failing epsilon, which is kept in
/// `error`.
#[derive(Debug, Clone)]
pub struct SeriesRun {
    pub rows: Vec<SeriesRow>,
    pub error: Option<Error>,
}

impl SeriesRun {
    pub fn csv(&self) -> String {
        let mut out = String::from(SERIES_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.csv_line());
        }
        out
    }
}

/// Estimates `kind` at every epsilon of `grid` with the same master seed.
pub fn run_series(
    kind: SeriesKind,
    q: HermiteOrder,
    hurst: Hurst,
    grid: &EpsilonGrid,
    config: &SeriesConfig,
    reference: Option<&EmpiricalSample>,
) -> Result<SeriesRun> {
    kind.check(q, hurst)?;
    let limit = predicted_limit(kind, q, hurst, reference)?.value;
    let mut rows = Vec::new();
    for &epsilon in grid.values() {
        match estimate_series(kind, q, hurst, epsilon, config) {
            Ok(est) => rows.push(SeriesRow {
                epsilon,
                value: est.value,
                mc_stderr: est.mc_stderr,
                n_trunc: est.n_trunc,
                remainder_bound: est.remainder_bound,
                normalized_ratio: normalized_ratio(kind, q, hurst, epsilon, est.value)?,
                predicted_limit: limit,
                schedule: est.schedule,
            }),
            Err(e @ (Error::BudgetExceeded { .. } | Error::Synthesis { .. })) => {
                return Ok(SeriesRun {
                    rows,
                    error: Some(e),
                })
            }
            Err(e) => return Err(e),
        }
    }
    Ok(SeriesRun { rows, error: None })
}

#[derive(Debug, Clone, Serialize)]
pub struct SeriesManifest {
    pub command: &'static str,
    pub kind: SeriesKind,
    pub q: u32,
    pub hurst: f64,
    pub seed: u64,
    pub tol: f64,
    pub budget: u64,
    pub max_n: u64,
    pub min_replicas: u64,
    pub workers: usize,
    pub schedule: Vec<ScheduleEntry>,
    pub error: Option<Error>,
    pub versions: Versions,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScheduleEntry {
    pub epsilon: f64,
    pub n_trunc: u64,
    pub scale: f64,
    pub replicas_first: u64,
    pub replicas_last: u64,
    pub total: u64,
}

impl SeriesManifest {
    pub fn new(
        kind: SeriesKind,
        q: HermiteOrder,
        hurst: Hurst,
        config: &SeriesConfig,
        workers: usize,
        run: &SeriesRun,
    ) -> Self {
        Self {
            command: "series",
            kind,
            q: q.get(),
            hurst: hurst.get(),
            seed: config.seed,
            tol: config.tol,
            budget: config.budget,
            max_n: config.max_n,
            min_replicas: config.min_replicas,
            workers,
            schedule: run
                .rows
                .iter()
                .map(|r| ScheduleEntry {
                    epsilon: r.epsilon,
                    n_trunc: r.n_trunc,
                    scale: r.schedule.scale,
                    replicas_first: r.schedule.replicas(1),
                    replicas_last: r.schedule.replicas(r.n_trunc),
                    total: r.schedule.total,
                })
                .collect(),
            error: run.error.clone(),
            versions: versions(),
        }
    }
}

pub const RATES_HEADER: &str = "n,ks,stderr,predicted_exponent";

pub fn rates_csv(rows: &[RateRow]) -> String {
    let mut out = String::from(RATES_HEADER);
    out.push('\n');
    for r in rows {
        writeln!(
            out,
            "{},{},{},{}",
            r.n, r.ks, r.stderr, r.predicted_exponent
        )
        .unwrap();
    }
    out
}

/// One line of the cross-run summary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub run: String,
    pub epsilon: f64,
    pub normalized_ratio: f64,
    pub predicted_limit: f64,
    pub relative_gap: f64,
}

pub const SUMMARY_HEADER: &str = "run,epsilon,normalized_ratio,predicted_limit,relative_gap";

/// Reads a series CSV written by [`SeriesRun::csv`].
pub fn read_series_csv(path: &Path) -> Result<Vec<SummaryRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad = |reason: String| Error::Format {
        path: path.display().to_string(),
        reason,
    };
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| bad("empty file".into()))?;
    let cols: Vec<&str> = header.split(',').collect();
    let find = |name: &str| {
        cols.iter()
            .position(|c| *c == name)
            .ok_or_else(|| bad(format!("missing column `{name}`")))
    };
    let (ie, ir, ip) = (
        find("epsilon")?,
        find("normalized_ratio")?,
        find("predicted_limit")?,
    );
    let run = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let fields: Vec<&str> = line.split(',').collect();
            let num = |j: usize| -> Result<f64> {
                fields
                    .get(j)
                    .and_then(|f| f.parse::<f64>().ok())
                    .ok_or_else(|| bad(format!("line {}: bad number in column {}", i + 2, cols[j])))
            };
            let (ratio, limit) = (num(ir)?, num(ip)?);
            Ok(SummaryRow {
                run: run.clone(),
                epsilon: num(ie)?,
                normalized_ratio: ratio,
                predicted_limit: limit,
                relative_gap: (ratio - limit) / limit,
            })
        })
        .collect()
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.run, r.epsilon, r.normalized_ratio, r.predicted_limit, r.relative_gap
        )
        .unwrap();
    }
    out
}
