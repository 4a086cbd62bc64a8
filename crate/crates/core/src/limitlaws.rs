//! Tail functionals, Kolmogorov distances, the Hermite-limit sampler and the
//! Berry-Esseen style rate exponents.

use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, OnceLock};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fgn::{sample_fgn_with, Hurst};
use crate::hermite::HermiteOrder;
use crate::numeric::{normal_cdf, normal_two_sided_tail};
use crate::rng::RandomStream;
use crate::variations::{compute_vn, normalization_constants, normalize, Regime};

/// `Phi_Z(z) = P(|Z| > z)` for a standard normal `Z`.
pub fn phi_normal(z: f64) -> f64 {
    normal_two_sided_tail(z)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TailKind {
    AnalyticNormal,
    Empirical,
}

/// `z -> P(|X| > z)` on `z >= 0`.
#[derive(Debug, Clone)]
pub enum TwoSidedTail {
    Normal,
    Empirical(Arc<EmpiricalSample>),
}

impl TwoSidedTail {
    pub fn kind(&self) -> TailKind {
        match self {
            TwoSidedTail::Normal => TailKind::AnalyticNormal,
            TwoSidedTail::Empirical(_) => TailKind::Empirical,
        }
    }

    pub fn eval(&self, z: f64) -> f64 {
        match self {
            TwoSidedTail::Normal => phi_normal(z),
            TwoSidedTail::Empirical(s) => empirical_tail(s, z),
        }
    }
}

/// Where an empirical sample came from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Provenance {
    pub q: u32,
    pub hurst: f64,
    /// `Some(n)` for draws of `Z_n`; `None` for limit surrogates.
    pub n: Option<u64>,
    /// Path length used for limit surrogates.
    pub m_path: Option<u64>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalSample {
    sorted: Vec<f64>,
    abs_sorted: Vec<f64>,
    pub provenance: Option<Provenance>,
}

impl EmpiricalSample {
    pub fn new(mut values: Vec<f64>, provenance: Option<Provenance>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid(
                "sample",
                "empirical sample must be nonempty",
            ));
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(Error::invalid("sample", "empirical sample contains NaN"));
        }
        values.sort_by(f64::total_cmp);
        let mut abs_sorted: Vec<f64> = values.iter().map(|v| v.abs()).collect();
        abs_sorted.sort_by(f64::total_cmp);
        Ok(Self {
            sorted: values,
            abs_sorted,
            provenance,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.sorted
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.sorted.iter().sum::<f64>() / self.len() as f64
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        let m = self.mean();
        let n = self.len() as f64;
        self.sorted.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)
    }

    /// Mean of `|x|^p` and its standard error.
    pub fn abs_moment(&self, p: f64) -> (f64, f64) {
        let n = self.len() as f64;
        let vals: Vec<f64> = self.sorted.iter().map(|x| x.abs().powf(p)).collect();
        let mean = vals.iter().sum::<f64>() / n;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        (mean, (var / n).sqrt())
    }
}

/// Fraction of sample points with `|x| > z`.
pub fn empirical_tail(s: &EmpiricalSample, z: f64) -> f64 {
    let at_most = s.abs_sorted.partition_point(|&a| a <= z);
    (s.len() - at_most) as f64 / s.len() as f64
}

/// One-sample Kolmogorov statistic `sup_x |F_m(x) - F(x)|`.
pub fn ks_distance<F: Fn(f64) -> f64>(s: &EmpiricalSample, cdf: F) -> f64 {
    let m = s.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in s.sorted.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i as f64 + 1.0) / m - f).max(f - i as f64 / m);
    }
    d.clamp(0.0, 1.0)
}

/// Two-sample Kolmogorov statistic.
pub fn ks_two_sample(a: &EmpiricalSample, b: &EmpiricalSample) -> f64 {
    let (x, y) = (&a.sorted, &b.sorted);
    let (m, n) = (x.len() as f64, y.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < x.len() && j < y.len() {
        let t = x[i].min(y[j]);
        while i < x.len() && x[i] <= t {
            i += 1;
        }
        while j < y.len() && y[j] <= t {
            j += 1;
        }
        d = d.max((i as f64 / m - j as f64 / n).abs());
    }
    d
}

/// Approximate standard deviation of `sqrt(m) * KS` under the null.
pub const KOLMOGOROV_SD: f64 = 0.2603;

/// One draw of `Z_n^(1)` or `Z_n^(2)` from a fresh fGn path of length `n`.
pub fn sample_normalized(
    q: HermiteOrder,
    hurst: Hurst,
    n: usize,
    rng: &mut RandomStream,
) -> Result<f64> {
    let consts = normalization_constants(q, hurst)?;
    let sample = sample_fgn_with(hurst, n, rng)?;
    normalize(&compute_vn(q, &sample), consts.regime, &consts)
}

/// `m` draws of the normalized statistic, replica `i` using stream `derive(seed, i)`.
pub fn normalized_sample(
    q: HermiteOrder,
    hurst: Hurst,
    n: usize,
    m: usize,
    seed: u64,
) -> Result<EmpiricalSample> {
    normalization_constants(q, hurst)?;
    let draws = (0..m as u64)
        .into_par_iter()
        .map(|i| sample_normalized(q, hurst, n, &mut RandomStream::derive(seed, i)))
        .collect::<Result<Vec<f64>>>()?;
    EmpiricalSample::new(
        draws,
        Some(Provenance {
            q: q.get(),
            hurst: hurst.get(),
            n: Some(n as u64),
            m_path: None,
            seed,
        }),
    )
}

/// One draw of `Z_{m_path}^(2)`, the surrogate for the Hermite limit `Z^(2)`.
/// Its L2 distance to the limit decays like `m_path^{surrogate_error_exponent}`.
pub fn sample_hermite_limit(
    q: HermiteOrder,
    hurst: Hurst,
    m_path: usize,
    rng: &mut RandomStream,
) -> Result<f64> {
    if Regime::classify(q, hurst)? != Regime::Hermite {
        return Err(Error::regime(
            q.get(),
            hurst.get(),
            "the Hermite limit exists only for H > 1 - 1/(2q)",
        ));
    }
    sample_normalized(q, hurst, m_path, rng)
}

pub fn surrogate_error_exponent(q: HermiteOrder, hurst: Hurst) -> f64 {
    1.0 - 1.0 / (2.0 * q.get() as f64) - hurst.get()
}

pub const DEFAULT_LIMIT_PATH: usize = 1 << 14;

/// Kolmogorov-distance rate exponent `e(q, H)`: `sup |P(Z_n > x) - P(Z > x)| <= c n^e`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateBound {
    pub q: u32,
    pub hurst: f64,
    pub exponent: f64,
}

pub fn rate_exponent(q: HermiteOrder, hurst: Hurst) -> Result<f64> {
    let h = hurst.get();
    let qf = q.get() as f64;
    Ok(match Regime::classify(q, hurst)? {
        Regime::Clt => {
            let knee = (2.0 * qf - 3.0) / (2.0 * qf - 2.0);
            if h <= 0.5 {
                -0.5
            } else if q.get() > 1 && h < knee {
                h - 1.0
            } else {
                qf * h - qf + 0.5
            }
        }
        Regime::Hermite => 1.0 - 1.0 / (2.0 * qf) - h,
    })
}

pub fn rate_bound(q: HermiteOrder, hurst: Hurst) -> Result<RateBound> {
    Ok(RateBound {
        q: q.get(),
        hurst: hurst.get(),
        exponent: rate_exponent(q, hurst)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub stderr: f64,
    pub intercept: f64,
}

/// Least-squares slope of `ln ks` against `ln n`.
pub fn fit_rate_slope(points: &[(u64, f64)]) -> Result<SlopeFit> {
    if points.len() < 4 {
        return Err(Error::DegenerateFit {
            reason: format!("need at least 4 grid points, got {}", points.len()),
        });
    }
    if let Some(&(n, ks)) = points.iter().find(|&&(n, ks)| !(ks > 0.0) || n == 0) {
        return Err(Error::DegenerateFit {
            reason: format!("non-positive value at n={n}: {ks}"),
        });
    }
    let xs: Vec<f64> = points.iter().map(|&(n, _)| (n as f64).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|&(_, k)| k.ln()).collect();
    let m = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / m, ys.iter().sum::<f64>() / m);
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::DegenerateFit {
            reason: "all grid points share the same n".into(),
        });
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    Ok(SlopeFit {
        slope,
        stderr: (rss / (m - 2.0) / sxx).sqrt(),
        intercept,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateRow {
    pub n: u64,
    pub ks: f64,
    pub stderr: f64,
    pub predicted_exponent: f64,
}

/// KS distance of `Z_n` to its limit for every `n` in `ns`, with `m` draws per
/// `n`. Replica `i` uses the same derived stream at every `n`. In the Hermite
/// regime the limit is the reference sample `reference`.
pub fn rate_table(
    q: HermiteOrder,
    hurst: Hurst,
    ns: &[usize],
    m: usize,
    seed: u64,
    reference: Option<&EmpiricalSample>,
) -> Result<Vec<RateRow>> {
    let regime = Regime::classify(q, hurst)?;
    let exponent = rate_exponent(q, hurst)?;
    ns.iter()
        .map(|&n| {
            let s = normalized_sample(q, hurst, n, m, seed)?;
            let ks = match (regime, reference) {
                (Regime::Clt, _) => ks_distance(&s, normal_cdf),
                (Regime::Hermite, Some(r)) => ks_two_sample(&s, r),
                (Regime::Hermite, None) => {
                    return Err(Error::invalid(
                        "reference",
                        "Hermite regime needs a reference sample",
                    ))
                }
            };
            Ok(RateRow {
                n: n as u64,
                ks,
                stderr: KOLMOGOROV_SD / (m as f64).sqrt(),
                predicted_exponent: exponent,
            })
        })
        .collect()
}

const MAGIC: &[u8; 8] = b"HERMREF1";
const HEADER_LEN: usize = 32;

/// Parameters of a frozen Hermite-limit reference sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReferenceSpec {
    pub q: u32,
    pub hurst: f64,
    pub m_path: u32,
    pub m: u32,
    pub seed: u32,
}

impl Default for ReferenceSpec {
    fn default() -> Self {
        Self {
            q: 2,
            hurst: 0.9,
            m_path: 1 << 16,
            m: 100_000,
            seed: 20_240_917,
        }
    }
}

impl ReferenceSpec {
    pub fn file_name(&self) -> String {
        format!(
            "hermref-q{}-h{:016x}-p{}-m{}-s{}.bin",
            self.q,
            self.hurst.to_bits(),
            self.m_path,
            self.m,
            self.seed
        )
    }

    fn provenance(&self) -> Provenance {
        Provenance {
            q: self.q,
            hurst: self.hurst,
            n: None,
            m_path: Some(self.m_path as u64),
            seed: self.seed as u64,
        }
    }
}

pub fn generate_reference(spec: &ReferenceSpec) -> Result<EmpiricalSample> {
    let q = HermiteOrder::new(spec.q)?;
    let hurst = Hurst::new(spec.hurst)?;
    if spec.m == 0 || spec.m_path == 0 {
        return Err(Error::invalid(
            "m",
            "reference sample needs m >= 1 and m_path >= 1",
        ));
    }
    normalization_constants(q, hurst)?;
    let draws = (0..spec.m as u64)
        .into_par_iter()
        .map(|i| {
            sample_hermite_limit(
                q,
                hurst,
                spec.m_path as usize,
                &mut RandomStream::derive(spec.seed as u64, i),
            )
        })
        .collect::<Result<Vec<f64>>>()?;
    EmpiricalSample::new(draws, Some(spec.provenance()))
}

/// Writes the header and the values in little-endian order, in sample order.
pub fn write_reference(path: &Path, spec: &ReferenceSpec, values: &[f64]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut header = Vec::with_capacity(HEADER_LEN);
    header.extend_from_slice(MAGIC);
    header.extend_from_slice(&spec.q.to_le_bytes());
    header.extend_from_slice(&spec.hurst.to_le_bytes());
    header.extend_from_slice(&spec.m_path.to_le_bytes());
    header.extend_from_slice(&spec.m.to_le_bytes());
    header.extend_from_slice(&spec.seed.to_le_bytes());
    debug_assert_eq!(header.len(), HEADER_LEN);
    w.write_all(&header).map_err(|e| Error::io(path, e))?;
    for v in values {
        w.write_all(&v.to_le_bytes())
            .map_err(|e| Error::io(path, e))?;
    }
    w.into_inner()
        .map_err(|e| Error::io(path, e.into_error()))?
        .sync_all()
        .map_err(|e| Error::io(path, e))
}

pub fn read_reference(path: &Path) -> Result<(ReferenceSpec, EmpiricalSample)> {
    let format = |reason: String| Error::Format {
        path: path.display().to_string(),
        reason,
    };
    let mut bytes = Vec::new();
    BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?)
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io(path, e))?;
    if bytes.len() < HEADER_LEN || &bytes[..8] != MAGIC {
        return Err(format("missing HERMREF1 header".into()));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let spec = ReferenceSpec {
        q: u32_at(8),
        hurst: f64::from_le_bytes(bytes[12..20].try_into().unwrap()),
        m_path: u32_at(20),
        m: u32_at(24),
        seed: u32_at(28),
    };
    let body = &bytes[HEADER_LEN..];
    if body.len() != spec.m as usize * 8 {
        return Err(format(format!(
            "header declares {} values but body holds {} bytes",
            spec.m,
            body.len()
        )));
    }
    let values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let sample =
        EmpiricalSample::new(values, Some(spec.provenance())).map_err(|e| format(e.to_string()))?;
    Ok((spec, sample))
}

/// `$FBMVAR_CACHE_DIR`, or `fbmvar-cache` under the system temp directory.
pub fn cache_dir() -> PathBuf {
    std::env::var_os("FBMVAR_CACHE_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("fbmvar-cache"))
}

type RefKey = (u32, u64, u32, u32, u32);

fn reference_memo() -> &'static Mutex<HashMap<RefKey, Arc<EmpiricalSample>>> {
    static MEMO: OnceLock<Mutex<HashMap<RefKey, Arc<EmpiricalSample>>>> = OnceLock::new();
    MEMO.get_or_init(|| Mutex::new(HashMap::new()))
}

/// The reference sample for `spec`, loaded from `dir` or generated and
/// stored there. Files are written under a unique temporary name and renamed
/// into place, so concurrent creators never expose a partial file.
pub fn reference_sample_in(dir: &Path, spec: &ReferenceSpec) -> Result<Arc<EmpiricalSample>> {
    let key = (spec.q, spec.hurst.to_bits(), spec.m_path, spec.m, spec.seed);
    let mut memo = reference_memo().lock().unwrap_or_else(|e| e.into_inner());
    if let Some(s) = memo.get(&key) {
        return Ok(s.clone());
    }
    let path = dir.join(spec.file_name());
    let sample = match read_reference(&path) {
        Ok((found, sample)) if found == *spec => sample,
        _ => {
            let sample = generate_reference(spec)?;
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            let tmp = dir.join(format!(
                "{}.{}.{:x}.tmp",
                spec.file_name(),
                std::process::id(),
                RandomStream::new(
                    std::time::SystemTime::now()
                        .duration_since(std::time::UNIX_EPOCH)
                        .map(|d| d.as_nanos() as u64)
                        .unwrap_or(0)
                )
                .next_u64()
            ));
            // Sample order is irrelevant for every consumer; sorted values are stored.
            write_reference(&tmp, spec, sample.values())?;
            fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))?;
            sample
        }
    };
    let sample = Arc::new(sample);
    memo.insert(key, sample.clone());
    Ok(sample)
}

pub fn reference_sample(spec: &ReferenceSpec) -> Result<Arc<EmpiricalSample>> {
    reference_sample_in(&cache_dir(), spec)
}
