//! Exact synthesis of standardized fractional Gaussian noise (fGn) and
//! fractional Brownian motion (fBm) paths.
//!
//! The primary method embeds the Toeplitz covariance `rho_H(|k - l|)` of `n`
//! consecutive increments into a symmetric circulant matrix of size `2M`
//! (`M` the smallest power of two `>= n`), diagonalises it with one FFT and
//! synthesises the Gaussian vector from `2M` independent standard normals
//! (Wood and Chan). If any circulant eigenvalue falls below
//! `-1e-10 * max_eigenvalue` the generator falls back to a dense Cholesky
//! factor of the `n x n` covariance.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::numeric::{binomial, CompensatedSum};
use crate::rng::RandomStream;

/// Relative tolerance on negative circulant eigenvalues.
pub const EIGEN_TOLERANCE: f64 = 1e-10;

/// Hurst index, strictly inside (0, 1).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize)]
pub struct Hurst(f64);

impl Hurst {
    pub fn new(h: f64) -> Result<Self> {
        if !(h > 0.0 && h < 1.0) {
            return Err(Error::invalid(
                "hurst",
                format!("H = {h} must lie in (0, 1)"),
            ));
        }
        Ok(Self(h))
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Hurst {
    type Error = Error;

    fn try_from(h: f64) -> Result<Self> {
        Self::new(h)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PathSpec {
    pub n: usize,
    pub hurst: Hurst,
    pub seed: u64,
}

impl PathSpec {
    pub fn new(n: usize, hurst: Hurst, seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("n", "at least one increment is required"));
        }
        Ok(Self { n, hurst, seed })
    }

    pub fn stream(&self) -> RandomStream {
        RandomStream::new(self.seed)
    }
}

/// One exact draw of `n` standardized increments `n^H (B_{(k+1)/n} - B_{k/n})`.
#[derive(Debug, Clone, PartialEq)]
pub struct FgnSample {
    pub hurst: Hurst,
    pub increments: Vec<f64>,
}

impl FgnSample {
    pub fn len(&self) -> usize {
        self.increments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.increments.is_empty()
    }
}

/// Autocorrelation `rho_H(k) = ((k+1)^{2H} + (k-1)^{2H} - 2 k^{2H}) / 2` of
/// standardized fGn.
pub fn fgn_autocovariance(hurst: Hurst, k: u64) -> f64 {
    let h = hurst.get();
    if k == 0 {
        return 1.0;
    }
    if h == 0.5 {
        return 0.0;
    }
    let two_h = 2.0 * h;
    if k < 16 {
        let kf = k as f64;
        return 0.5 * ((kf + 1.0).powf(two_h) + (kf - 1.0).powf(two_h) - 2.0 * kf.powf(two_h));
    }
    // Second difference of x^{2H} expanded in 1/k^2; avoids the cancellation
    // of the direct formula, whose relative error grows like k^2 * eps.
    let kf = k as f64;
    let y = 1.0 / (kf * kf);
    let mut acc = 0.0;
    let mut ypow = 1.0;
    for j in 1..=12 {
        let term = binomial(two_h, 2 * j) * ypow;
        acc += term;
        if term.abs() <= 1e-18 * acc.abs() {
            break;
        }
        ypow *= y;
    }
    kf.powf(two_h - 2.0) * acc
}

/// Covariance `R^H(t, s) = (t^{2H} + s^{2H} - |t - s|^{2H}) / 2` of fBm.
pub fn fbm_covariance(hurst: Hurst, s: f64, t: f64) -> Result<f64> {
    if s < 0.0 || t < 0.0 {
        return Err(Error::invalid("time", "fBm covariance needs s, t >= 0"));
    }
    let two_h = 2.0 * hurst.get();
    Ok(0.5 * (t.powf(two_h) + s.powf(two_h) - (t - s).abs().powf(two_h)))
}

/// Size `2M` of the circulant embedding used for `n` increments.
pub fn embedding_size(n: usize) -> usize {
    2 * n.max(1).next_power_of_two()
}

/// Eigen-decomposition of the circulant embedding for a given `(H, M)`.
pub struct CirculantEmbedding {
    hurst: Hurst,
    half: usize,
    eigenvalues: Vec<f64>,
    scale: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for CirculantEmbedding {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CirculantEmbedding")
            .field("hurst", &self.hurst)
            .field("size", &(2 * self.half))
            .finish()
    }
}

impl CirculantEmbedding {
    /// First row of the circulant matrix of size `2 * half`.
    pub fn first_row(hurst: Hurst, half: usize) -> Vec<f64> {
        let m = 2 * half;
        (0..m)
            .map(|k| fgn_autocovariance(hurst, k.min(m - k) as u64))
            .collect()
    }

    /// Builds the embedding; returns the offending minimum eigenvalue when the
    /// embedding is not numerically nonnegative definite.
    pub fn new(hurst: Hurst, half: usize) -> std::result::Result<Self, f64> {
        assert!(half.is_power_of_two());
        let m = 2 * half;
        let mut planner = FftPlanner::<f64>::new();
        let fft = planner.plan_fft_forward(m);
        let mut buf: Vec<Complex<f64>> = Self::first_row(hurst, half)
            .into_iter()
            .map(|c| Complex::new(c, 0.0))
            .collect();
        fft.process(&mut buf);
        let eigenvalues: Vec<f64> = buf.iter().map(|c| c.re).collect();
        let max = eigenvalues.iter().cloned().fold(f64::MIN, f64::max);
        let min = eigenvalues.iter().cloned().fold(f64::MAX, f64::min);
        if min < -EIGEN_TOLERANCE * max {
            return Err(min);
        }
        let scale = eigenvalues[..=half]
            .iter()
            .map(|&l| (l.max(0.0) / m as f64).sqrt())
            .collect();
        Ok(Self {
            hurst,
            half,
            eigenvalues,
            scale,
            fft,
        })
    }

    pub fn size(&self) -> usize {
        2 * self.half
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Fills `out` (length at most `M`) with one exact fGn draw.
    pub fn sample_into(&self, rng: &mut RandomStream, out: &mut [f64]) {
        assert!(out.len() <= self.half);
        let m = 2 * self.half;
        let mut buf = vec![Complex::new(0.0, 0.0); m];
        buf[0] = Complex::new(self.scale[0] * rng.next_gaussian(), 0.0);
        buf[self.half] = Complex::new(self.scale[self.half] * rng.next_gaussian(), 0.0);
        let r = std::f64::consts::FRAC_1_SQRT_2;
        for k in 1..self.half {
            let s = self.scale[k] * r;
            let a = s * rng.next_gaussian();
            let b = s * rng.next_gaussian();
            buf[k] = Complex::new(a, b);
            buf[m - k] = Complex::new(a, -b);
        }
        self.fft.process(&mut buf);
        for (o, c) in out.iter_mut().zip(&buf) {
            *o = c.re;
        }
    }
}

/// Lower Cholesky factor of the dense `n x n` fGn covariance.
#[derive(Debug, Clone)]
pub struct DenseFactor {
    n: usize,
    lower: Vec<f64>,
}

impl DenseFactor {
    pub fn new(hurst: Hurst, n: usize) -> Result<Self> {
        let rho: Vec<f64> = (0..n as u64)
            .map(|k| fgn_autocovariance(hurst, k))
            .collect();
        let mut l = vec![0.0; n * n];
        let tol = 1e-10 * n as f64;
        for j in 0..n {
            let mut d = rho[0];
            for k in 0..j {
                d -= l[j * n + k] * l[j * n + k];
            }
            if d < -tol {
                return Err(Error::Synthesis {
                    hurst: hurst.get(),
                    n,
                    reason: format!("covariance not positive semidefinite (pivot {d:e} at {j})"),
                });
            }
            let djj = d.max(0.0).sqrt();
            l[j * n + j] = djj;
            for i in j + 1..n {
                let mut s = rho[i - j];
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = if djj > 1e-300 { s / djj } else { 0.0 };
            }
        }
        Ok(Self { n, lower: l })
    }

    pub fn sample_into(&self, rng: &mut RandomStream, out: &mut [f64]) {
        let n = self.n;
        assert!(out.len() <= n);
        let mut z = vec![0.0; n];
        rng.fill_gaussian(&mut z);
        for (i, o) in out.iter_mut().enumerate() {
            *o = (0..=i).map(|k| self.lower[i * n + k] * z[k]).sum();
        }
    }
}

#[derive(Debug)]
pub enum SynthesisPlan {
    Circulant(CirculantEmbedding),
    Dense(DenseFactor),
}

impl SynthesisPlan {
    /// Plan for `n` increments: circulant when the embedding is valid,
    /// otherwise the dense factor.
    pub fn new(hurst: Hurst, n: usize) -> Result<Self> {
        match CirculantEmbedding::new(hurst, n.max(1).next_power_of_two()) {
            Ok(e) => Ok(SynthesisPlan::Circulant(e)),
            Err(_) => Ok(SynthesisPlan::Dense(DenseFactor::new(hurst, n)?)),
        }
    }

    pub fn capacity(&self) -> usize {
        match self {
            SynthesisPlan::Circulant(e) => e.half,
            SynthesisPlan::Dense(d) => d.n,
        }
    }

    pub fn embedding_size(&self) -> usize {
        match self {
            SynthesisPlan::Circulant(e) => e.size(),
            SynthesisPlan::Dense(d) => d.n,
        }
    }

    pub fn sample_into(&self, rng: &mut RandomStream, out: &mut [f64]) {
        match self {
            SynthesisPlan::Circulant(e) => e.sample_into(rng, out),
            SynthesisPlan::Dense(d) => d.sample_into(rng, out),
        }
    }
}

type PlanKey = (u64, usize);

fn plan_cache() -> &'static Mutex<HashMap<PlanKey, Arc<SynthesisPlan>>> {
    static CACHE: OnceLock<Mutex<HashMap<PlanKey, Arc<SynthesisPlan>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Shared read-only plan able to synthesise at least `n` increments.
pub fn plan_for(hurst: Hurst, n: usize) -> Result<Arc<SynthesisPlan>> {
    let key = (hurst.get().to_bits(), n.max(1).next_power_of_two());
    if let Some(p) = plan_cache().lock().unwrap().get(&key) {
        if p.capacity() >= n {
            return Ok(Arc::clone(p));
        }
    }
    let plan = Arc::new(SynthesisPlan::new(hurst, n)?);
    let mut cache = plan_cache().lock().unwrap();
    let entry = cache.entry(key).or_insert_with(|| Arc::clone(&plan));
    if entry.capacity() < n {
        *entry = Arc::clone(&plan);
    }
    Ok(Arc::clone(entry))
}

pub fn sample_fgn_with(hurst: Hurst, n: usize, rng: &mut RandomStream) -> Result<FgnSample> {
    if n == 0 {
        return Err(Error::invalid("n", "at least one increment is required"));
    }
    let plan = plan_for(hurst, n)?;
    let mut increments = vec![0.0; n];
    plan.sample_into(rng, &mut increments);
    Ok(FgnSample { hurst, increments })
}

/// Draws the standardized increments for `spec` from the stream seeded by
/// `spec.seed`.
pub fn sample_fgn(spec: &PathSpec) -> Result<FgnSample> {
    sample_fgn_with(spec.hurst, spec.n, &mut spec.stream())
}

/// Path values `B_{k/n}`, `k = 0..=n`, from an fGn draw.
pub fn fbm_from_fgn(sample: &FgnSample) -> Vec<f64> {
    let n = sample.len();
    let scale = (n as f64).powf(-sample.hurst.get());
    let mut path = Vec::with_capacity(n + 1);
    path.push(0.0);
    let mut acc = CompensatedSum::new();
    for &x in &sample.increments {
        acc.add(x);
        path.push(scale * acc.value());
    }
    path
}

pub fn sample_fbm_with(hurst: Hurst, n: usize, rng: &mut RandomStream) -> Result<Vec<f64>> {
    Ok(fbm_from_fgn(&sample_fgn_with(hurst, n, rng)?))
}

pub fn sample_fbm(spec: &PathSpec) -> Result<Vec<f64>> {
    Ok(fbm_from_fgn(&sample_fgn(spec)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn h(x: f64) -> Hurst {
        Hurst::new(x).unwrap()
    }

    fn direct_rho(hurst: f64, k: f64) -> f64 {
        let t = 2.0 * hurst;
        0.5 * ((k + 1.0).powf(t) + (k - 1.0).abs().powf(t) - 2.0 * k.powf(t))
    }

    #[test]
    fn autocovariance_examples() {
        assert_eq!(fgn_autocovariance(h(0.5), 3), 0.0);
        assert_eq!(fgn_autocovariance(h(0.3), 0), 1.0);
        assert!((fgn_autocovariance(h(0.7), 1) - 0.319_507_910_772_894).abs() < 1e-12);
        assert!((fgn_autocovariance(h(0.75), 2) - 0.269_649_086_607_126).abs() < 1e-12);
        for k in 1..200 {
            assert_eq!(fgn_autocovariance(h(0.5), k), 0.0);
        }
    }

    #[test]
    fn series_branch_agrees_with_direct_formula() {
        for &hh in &[0.1, 0.3, 0.6, 0.7, 0.9, 0.99] {
            for k in 16..40u64 {
                let a = fgn_autocovariance(h(hh), k);
                let b = direct_rho(hh, k as f64);
                assert!((a - b).abs() < 1e-11 * b.abs(), "H={hh} k={k}: {a} {b}");
            }
            // asymptote H(2H-1) k^{2H-2}
            let k: f64 = 1e6;
            let a = fgn_autocovariance(h(hh), k as u64);
            let lead = hh * (2.0 * hh - 1.0) * k.powf(2.0 * hh - 2.0);
            assert!(((a - lead) / lead).abs() < 1e-11);
        }
    }

    #[test]
    fn fbm_covariance_examples() {
        assert!((fbm_covariance(h(0.5), 2.0, 3.0).unwrap() - 2.0).abs() < 1e-15);
        assert_eq!(fbm_covariance(h(0.3), 0.0, 5.0).unwrap(), 0.0);
        assert_eq!(fbm_covariance(h(0.75), 1.0, 1.0).unwrap(), 1.0);
        assert!(fbm_covariance(h(0.5), -1.0, 1.0).is_err());
        assert!(Hurst::new(1.0).is_err());
        assert!(Hurst::new(0.0).is_err());
    }

    #[test]
    fn circulant_row_and_eigenvalues() {
        for i in 1..=9 {
            let hh = h(i as f64 / 10.0);
            let e = CirculantEmbedding::new(hh, 64).unwrap();
            let row = CirculantEmbedding::first_row(hh, 64);
            for (k, r) in row.iter().take(65).enumerate() {
                assert!((r - fgn_autocovariance(hh, k as u64)).abs() < 1e-12);
            }
            let max = e.eigenvalues().iter().cloned().fold(f64::MIN, f64::max);
            assert!(e.eigenvalues().iter().all(|&l| l >= -EIGEN_TOLERANCE * max));
        }
    }

    #[test]
    fn single_increment_is_standard_normal_scale() {
        let mut rng = RandomStream::new(5);
        let m = 20_000;
        let xs: Vec<f64> = (0..m)
            .map(|_| sample_fgn_with(h(0.8), 1, &mut rng).unwrap().increments[0])
            .collect();
        let var = xs.iter().map(|x| x * x).sum::<f64>() / m as f64;
        assert!((var - 1.0).abs() < 4.0 * (2.0 / m as f64).sqrt());
    }

    #[test]
    fn dense_fallback_reproduces_covariance() {
        let hh = h(0.8);
        let f = DenseFactor::new(hh, 6).unwrap();
        // L L^T == Toeplitz(rho)
        for i in 0..6 {
            for j in 0..=i {
                let s: f64 = (0..=j)
                    .map(|k| f.lower[i * 6 + k] * f.lower[j * 6 + k])
                    .sum();
                assert!((s - fgn_autocovariance(hh, (i - j) as u64)).abs() < 1e-12);
            }
        }
        let mut rng = RandomStream::new(1);
        let mut out = [0.0; 6];
        f.sample_into(&mut rng, &mut out);
        assert!(out.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn fbm_path_starts_at_zero_and_is_deterministic() {
        let spec = PathSpec::new(4, h(0.3), 7).unwrap();
        let a = sample_fbm(&spec).unwrap();
        let b = sample_fbm(&spec).unwrap();
        assert_eq!(a.len(), 5);
        assert_eq!(a[0], 0.0);
        assert_eq!(a, b);
        assert!(PathSpec::new(0, h(0.3), 7).is_err());
    }
}
