//! Spitzer series `f1, f2` and Hsu-Robbins series `g1, g2` of Hermite
//! variations: Monte Carlo estimation with a certified truncation remainder.

mod normal;

pub use normal::{
    euler_maclaurin_check, normal_series_exact, q1_special, EulerMaclaurinDecomposition, FirstChaos,
};

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fgn::{sample_fgn_with, Hurst};
use crate::hermite::HermiteOrder;
use crate::limitlaws::EmpiricalSample;
use crate::numeric::CompensatedSum;
use crate::rng::RandomStream;
use crate::variations::{
    compute_vn, decay_exponent, hermite_scaling_exponent, normalization_constants,
    prefix_variations, second_moment_majorant, Regime,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SeriesKind {
    /// `sum (1/n) P(|V_n| > eps n)`
    F1,
    /// `sum (1/n) P(|V_n| > eps n^{2-2q(1-H)})`
    F2,
    /// `sum P(|V_n| > eps n)`
    G1,
    /// `sum P(|V_n| > eps n^{2-2q(1-H)})`
    G2,
}

impl SeriesKind {
    pub const ALL: [SeriesKind; 4] = [
        SeriesKind::F1,
        SeriesKind::F2,
        SeriesKind::G1,
        SeriesKind::G2,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SeriesKind::F1 => "f1",
            SeriesKind::F2 => "f2",
            SeriesKind::G1 => "g1",
            SeriesKind::G2 => "g2",
        }
    }

    pub fn regime(self) -> Regime {
        match self {
            SeriesKind::F1 | SeriesKind::G1 => Regime::Clt,
            SeriesKind::F2 | SeriesKind::G2 => Regime::Hermite,
        }
    }

    fn is_spitzer(self) -> bool {
        matches!(self, SeriesKind::F1 | SeriesKind::F2)
    }

    /// Exponent `w` of the weight `n^w`.
    pub fn weight_exponent(self) -> f64 {
        if self.is_spitzer() {
            -1.0
        } else {
            0.0
        }
    }

    pub fn weight(self, n: u64) -> f64 {
        if self.is_spitzer() {
            1.0 / n as f64
        } else {
            1.0
        }
    }

    /// Exponent `tau` of the threshold `eps n^tau`.
    pub fn threshold_exponent(self, q: HermiteOrder, hurst: Hurst) -> f64 {
        match self.regime() {
            Regime::Clt => 1.0,
            Regime::Hermite => 2.0 - decay_exponent(q, hurst),
        }
    }

    /// Fails with a regime error unless `(q, H)` lies in this kind's regime.
    pub fn check(self, q: HermiteOrder, hurst: Hurst) -> Result<()> {
        let actual = Regime::classify(q, hurst)?;
        if actual != self.regime() {
            return Err(Error::regime(
                q.get(),
                hurst.get(),
                format!(
                    "{} needs the {} regime but (q, H) is in the {} regime",
                    self.as_str(),
                    self.regime().as_str(),
                    actual.as_str()
                ),
            ));
        }
        Ok(())
    }
}

impl fmt::Display for SeriesKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SeriesKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "f1" => Ok(SeriesKind::F1),
            "f2" => Ok(SeriesKind::F2),
            "g1" => Ok(SeriesKind::G1),
            "g2" => Ok(SeriesKind::G2),
            other => Err(Error::invalid(
                "kind",
                format!("unknown series kind `{other}`"),
            )),
        }
    }
}

/// Strictly decreasing positive epsilons.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpsilonGrid {
    values: Vec<f64>,
}

impl EpsilonGrid {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("eps-grid", "grid is empty"));
        }
        if values.iter().any(|&e| !(e > 0.0 && e.is_finite())) {
            return Err(Error::invalid(
                "eps-grid",
                "epsilons must be positive and finite",
            ));
        }
        if values.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::invalid(
                "eps-grid",
                "epsilons must be strictly decreasing",
            ));
        }
        Ok(Self { values })
    }

    pub fn geometric(first: f64, ratio: f64, count: usize) -> Result<Self> {
        if !(ratio > 0.0 && ratio < 1.0) {
            return Err(Error::invalid("ratio", "ratio must lie in (0, 1)"));
        }
        Self::new((0..count).map(|i| first * ratio.powi(i as i32)).collect())
    }

    /// Eight points with ratio `1/sqrt(10)`, starting where the threshold at
    /// `n = 1` is three standard deviations of `V_1`.
    pub fn default_for(q: HermiteOrder) -> Self {
        Self::geometric(3.0 * q.factorial().sqrt(), 1.0 / 10f64.sqrt(), 8).unwrap()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailProbability {
    pub p_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub hits: u64,
    pub replicas: u64,
}

const Z_975: f64 = 1.959_963_984_540_054;

fn wilson(hits: u64, n: u64) -> (f64, f64) {
    let (k, n) = (hits as f64, n as f64);
    let p = k / n;
    let z2 = Z_975 * Z_975;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = Z_975 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// `P(|V_n| > threshold)` from `replicas` independent paths; replica `i`
/// uses `RandomStream::derive(seed, i)`.
pub fn tail_prob_mc(
    q: HermiteOrder,
    hurst: Hurst,
    n: usize,
    threshold: f64,
    replicas: u64,
    seed: u64,
) -> Result<TailProbability> {
    if replicas < 100 {
        return Err(Error::invalid(
            "replicas",
            "at least 100 replicas are required",
        ));
    }
    let hits = (0..replicas)
        .into_par_iter()
        .map(|i| {
            let s = sample_fgn_with(hurst, n, &mut RandomStream::derive(seed, i))?;
            Ok(u64::from(compute_vn(q, &s).value.abs() > threshold))
        })
        .collect::<Result<Vec<u64>>>()?
        .into_iter()
        .sum::<u64>();
    let (ci_low, ci_high) = wilson(hits, replicas);
    Ok(TailProbability {
        p_hat: hits as f64 / replicas as f64,
        ci_low,
        ci_high,
        hits,
        replicas,
    })
}

pub const MAX_MOMENT_ORDER: u32 = 8;

/// Markov bound with moment order `2p` on `sum_{n>N} w(n) P(|V_n| > eps n^tau)`,
/// or `None` when the majorant series diverges.
///
/// With `E|V_n|^{2p} <= (2p-1)^{pq} (E V_n^2)^p` and `E V_n^2 <= A n^gamma`
/// each term is at most `K n^{-s}`, `K = ((2p-1)^q A / eps^2)^p`,
/// `s = p(2 tau - gamma) - w`, and `sum_{n>N} n^{-s} <= N^{1-s} / (s-1)`.
pub fn truncation_bound_with_order(
    q: HermiteOrder,
    hurst: Hurst,
    kind: SeriesKind,
    epsilon: f64,
    n: u64,
    p: u32,
) -> Result<Option<f64>> {
    kind.check(q, hurst)?;
    if n == 0 {
        return Err(Error::invalid("N", "N must be at least 1"));
    }
    if !(epsilon > 0.0) {
        return Err(Error::invalid("epsilon", "must be positive"));
    }
    let maj = second_moment_majorant(q, hurst)?;
    let tau = kind.threshold_exponent(q, hurst);
    let pf = p as f64;
    let s = pf * (2.0 * tau - maj.exponent) - kind.weight_exponent();
    if s <= 1.0 + 1e-12 {
        return Ok(None);
    }
    let ln_k =
        pf * (q.get() as f64 * (2.0 * pf - 1.0).ln() + maj.coefficient.ln() - 2.0 * epsilon.ln());
    Ok(Some(
        (ln_k + (1.0 - s) * (n as f64).ln() - (s - 1.0).ln()).exp(),
    ))
}

/// Smallest of the moment bounds over `p = 1..=8`.
pub fn truncation_bound(
    q: HermiteOrder,
    hurst: Hurst,
    kind: SeriesKind,
    epsilon: f64,
    n: u64,
) -> Result<f64> {
    let mut best: Option<f64> = None;
    for p in 1..=MAX_MOMENT_ORDER {
        if let Some(b) = truncation_bound_with_order(q, hurst, kind, epsilon, n, p)? {
            best = Some(best.map_or(b, |x| x.min(b)));
        }
    }
    best.ok_or(Error::NoConvergence {
        max_order: MAX_MOMENT_ORDER,
    })
}

/// Smallest `N` with `truncation_bound(N) <= tol`, or `None` past `2^62`.
pub fn truncation_point(
    q: HermiteOrder,
    hurst: Hurst,
    kind: SeriesKind,
    epsilon: f64,
    tol: f64,
) -> Result<Option<u64>> {
    let ok = |n: u64| truncation_bound(q, hurst, kind, epsilon, n).map(|b| b <= tol);
    let mut hi = 1u64;
    while !ok(hi)? {
        if hi >= 1 << 62 {
            return Ok(None);
        }
        hi *= 2;
    }
    let mut lo = hi / 2;
    if lo == 0 {
        return Ok(Some(1));
    }
    // invariant: !ok(lo), ok(hi)
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if ok(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(Some(hi))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeriesConfig {
    pub tol: f64,
    /// Cap on the total number of `(n, replica)` tail indicators.
    pub budget: u64,
    pub max_n: u64,
    pub min_replicas: u64,
    pub seed: u64,
}

impl Default for SeriesConfig {
    fn default() -> Self {
        Self {
            tol: 0.02,
            budget: 10_000_000,
            max_n: 1 << 20,
            min_replicas: 200,
            seed: 0,
        }
    }
}

/// `R(n) = max(min_replicas, floor(scale * w(n)^{2/3}))` for `n <= n_trunc`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReplicaSchedule {
    pub n_trunc: u64,
    pub scale: f64,
    pub min_replicas: u64,
    pub weight_exponent: f64,
    pub total: u64,
}

impl ReplicaSchedule {
    pub fn replicas(&self, n: u64) -> u64 {
        let w23 = (n as f64).powf(2.0 * self.weight_exponent / 3.0);
        ((self.scale * w23).floor() as u64).max(self.min_replicas)
    }

    fn all(&self) -> Vec<u64> {
        (1..=self.n_trunc).map(|n| self.replicas(n)).collect()
    }

    /// Largest scale whose schedule fits in `budget`.
    pub fn fit(kind: SeriesKind, n_trunc: u64, min_replicas: u64, budget: u64) -> Option<Self> {
        let mut sched = Self {
            n_trunc,
            scale: 0.0,
            min_replicas,
            weight_exponent: kind.weight_exponent(),
            total: 0,
        };
        let floor_total = min_replicas.checked_mul(n_trunc)?;
        if floor_total > budget {
            return None;
        }
        let w23: Vec<f64> = (1..=n_trunc)
            .map(|n| (n as f64).powf(2.0 * sched.weight_exponent / 3.0))
            .collect();
        let total = |scale: f64| -> u64 {
            w23.iter()
                .map(|w| ((scale * w).floor() as u64).max(min_replicas))
                .fold(0u64, u64::saturating_add)
        };
        let (mut lo, mut hi) = (0.0f64, budget as f64 + 1.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if total(mid) <= budget {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        sched.scale = lo;
        sched.total = total(lo);
        Some(sched)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesEstimate {
    pub kind: SeriesKind,
    pub q: HermiteOrder,
    pub hurst: Hurst,
    pub epsilon: f64,
    pub value: f64,
    pub mc_stderr: f64,
    pub n_trunc: u64,
    pub remainder_bound: f64,
    pub schedule: ReplicaSchedule,
}

const CHUNK: u64 = 256;

/// Truncated Monte Carlo estimate of `f1`, `f2`, `g1` or `g2` at `epsilon`.
///
/// Replica `r` simulates one path of length `L_r = #{n : R(n) > r}` with
/// stream `derive(seed, r)` and contributes the indicators
/// `|V_n| > eps n^tau` for every `n <= L_r`, so each `n` sees exactly `R(n)`
/// independent draws of `V_n`. Hit counts are integers, which makes the
/// result independent of scheduling.
pub fn estimate_series(
    kind: SeriesKind,
    q: HermiteOrder,
    hurst: Hurst,
    epsilon: f64,
    config: &SeriesConfig,
) -> Result<SeriesEstimate> {
    kind.check(q, hurst)?;
    if !(config.tol > 0.0) {
        return Err(Error::invalid("tol", "tolerance must be positive"));
    }
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::invalid("epsilon", "must be positive and finite"));
    }
    let exceeded = |n_trunc: u64| Error::BudgetExceeded {
        epsilon,
        n_trunc,
        max_n: config.max_n,
        replicas_needed: n_trunc.saturating_mul(config.min_replicas),
        budget: config.budget,
    };
    let n_trunc = truncation_point(q, hurst, kind, epsilon, config.tol)?.unwrap_or(u64::MAX);
    if n_trunc > config.max_n {
        return Err(exceeded(n_trunc));
    }
    let schedule = ReplicaSchedule::fit(kind, n_trunc, config.min_replicas, config.budget)
        .ok_or_else(|| exceeded(n_trunc))?;
    let remainder_bound = truncation_bound(q, hurst, kind, epsilon, n_trunc)?;

    let per_n = schedule.all();
    let tau = kind.threshold_exponent(q, hurst);
    let thresholds: Vec<f64> = (1..=n_trunc)
        .map(|n| epsilon * (n as f64).powf(tau))
        .collect();
    let shares: Vec<f64> = (1..=n_trunc)
        .map(|n| kind.weight(n) / per_n[n as usize - 1] as f64)
        .collect();
    let replica_count = per_n[0];

    let mut hits = vec![0u64; n_trunc as usize];
    let mut contributions = Vec::with_capacity(replica_count as usize);
    let mut start = 0;
    while start < replica_count {
        let end = (start + CHUNK).min(replica_count);
        let chunk = (start..end)
            .into_par_iter()
            .map(|r| {
                let len = per_n.partition_point(|&x| x > r);
                let path = sample_fgn_with(hurst, len, &mut RandomStream::derive(config.seed, r))?;
                let mut v = Vec::with_capacity(len);
                prefix_variations(q, &path.increments, &mut v);
                let mut y = 0.0;
                let mut hit = Vec::new();
                for (i, vn) in v.iter().enumerate() {
                    if vn.abs() > thresholds[i] {
                        hit.push(i as u32);
                        y += shares[i];
                    }
                }
                Ok((y, hit))
            })
            .collect::<Result<Vec<_>>>()?;
        for (y, hit) in chunk {
            contributions.push(y);
            for i in hit {
                hits[i as usize] += 1;
            }
        }
        start = end;
    }

    let value = (0..n_trunc as usize)
        .map(|i| hits[i] as f64 * shares[i])
        .collect::<CompensatedSum>()
        .value();
    Ok(SeriesEstimate {
        kind,
        q,
        hurst,
        epsilon,
        value,
        mc_stderr: pair_difference_stderr(&contributions),
        n_trunc,
        remainder_bound,
        schedule,
    })
}

/// Standard error of `sum_r Y_r` for independent `Y_r` whose neighbours have
/// nearly equal laws: `Var(Y_a) + Var(Y_b) ~ (Y_a - Y_b)^2`.
fn pair_difference_stderr(y: &[f64]) -> f64 {
    if y.len() < 2 {
        return 0.0;
    }
    let mut acc = CompensatedSum::new();
    for pair in y.chunks_exact(2) {
        acc.add((pair[0] - pair[1]).powi(2));
    }
    let pairs = (y.len() / 2) as f64;
    let mut var = acc.value();
    if y.len() % 2 == 1 {
        var += 0.5 * acc.value() / pairs;
    }
    var.sqrt()
}

/// The limit of the normalised series together with a standard error
/// (nonzero only when it is itself estimated).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PredictedLimit {
    pub value: f64,
    pub stderr: f64,
}

/// `F1 -> 2`, `F2 -> 1/(1-q(1-H))`, `G1 -> 1`,
/// `G2 -> E|Z^(2)|^{1/(1-q(1-H))}` estimated from `reference`.
pub fn predicted_limit(
    kind: SeriesKind,
    q: HermiteOrder,
    hurst: Hurst,
    reference: Option<&EmpiricalSample>,
) -> Result<PredictedLimit> {
    kind.check(q, hurst)?;
    let exact = |value| Ok(PredictedLimit { value, stderr: 0.0 });
    match kind {
        SeriesKind::F1 => exact(2.0),
        SeriesKind::G1 => exact(1.0),
        SeriesKind::F2 => exact(1.0 / hermite_scaling_exponent(q, hurst)),
        SeriesKind::G2 => {
            let r = reference.ok_or_else(|| {
                Error::invalid("reference", "g2 needs a Hermite-limit reference sample")
            })?;
            let (value, stderr) = r.abs_moment(1.0 / hermite_scaling_exponent(q, hurst));
            Ok(PredictedLimit { value, stderr })
        }
    }
}

/// `value / (-ln(eps/c))` for Spitzer kinds, `(eps/c)^{1/beta} value` for
/// Hsu-Robbins kinds, with `c` the regime constant and `beta` the
/// normalisation exponent (1/2 in the CLT regime).
pub fn normalized_ratio(
    kind: SeriesKind,
    q: HermiteOrder,
    hurst: Hurst,
    epsilon: f64,
    value: f64,
) -> Result<f64> {
    kind.check(q, hurst)?;
    let c = normalization_constants(q, hurst)?.active().value;
    let scaled = epsilon / c;
    Ok(match kind {
        SeriesKind::F1 | SeriesKind::F2 => value / -scaled.ln(),
        SeriesKind::G1 => scaled * scaled * value,
        SeriesKind::G2 => scaled.powf(1.0 / hermite_scaling_exponent(q, hurst)) * value,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::variations::exact_second_moment;

    fn q(x: u32) -> HermiteOrder {
        HermiteOrder::new(x).unwrap()
    }
    fn h(x: f64) -> Hurst {
        Hurst::new(x).unwrap()
    }

    #[test]
    fn kinds_parse_and_gate_regimes() {
        for k in SeriesKind::ALL {
            assert_eq!(k.as_str().parse::<SeriesKind>().unwrap(), k);
        }
        assert!("f3".parse::<SeriesKind>().is_err());
        assert!(SeriesKind::F2.check(q(2), h(0.6)).is_err());
        assert!(SeriesKind::G2.check(q(2), h(0.5)).is_err());
        assert!(SeriesKind::F1.check(q(2), h(0.9)).is_err());
        assert!(SeriesKind::G1.check(q(2), h(0.8)).is_err());
        assert!(SeriesKind::G1.check(q(2), h(0.75)).is_err());
        assert!(SeriesKind::G2.check(q(2), h(0.9)).is_ok());
        assert!(truncation_bound(q(2), h(0.9), SeriesKind::F1, 0.5, 10).is_err());
        assert!(
            estimate_series(SeriesKind::G2, q(2), h(0.4), 1.0, &SeriesConfig::default()).is_err()
        );
    }

    #[test]
    fn epsilon_grid() {
        let g = EpsilonGrid::default_for(q(2));
        assert_eq!(g.values().len(), 8);
        assert!((g.values()[0] - 3.0 * 2f64.sqrt()).abs() < 1e-15);
        assert!(g.values().windows(2).all(|w| w[1] < w[0] && w[1] > 0.0));
        assert!(EpsilonGrid::new(vec![0.1, 0.2]).is_err());
        assert!(EpsilonGrid::new(vec![0.1, -0.2]).is_err());
    }

    #[test]
    fn wilson_interval_brackets_estimate() {
        let (lo, hi) = wilson(50, 100);
        assert!(lo < 0.5 && hi > 0.5 && (0.5 - lo - (hi - 0.5)).abs() < 1e-12);
        assert!(wilson(0, 100).0 < 1e-15);
    }

    #[test]
    fn tail_prob_examples() {
        let t = tail_prob_mc(q(2), h(0.5), 64, 0.0, 200, 1).unwrap();
        assert_eq!(t.p_hat, 1.0);
        let sd = exact_second_moment(q(2), h(0.7), 128).unwrap().sqrt();
        let t = tail_prob_mc(q(2), h(0.7), 128, 10.0 * sd, 2000, 2).unwrap();
        assert!(t.p_hat <= 0.01);
        assert!(tail_prob_mc(q(2), h(0.5), 64, 0.0, 99, 1).is_err());
    }

    #[test]
    fn tail_prob_matches_chi_square() {
        // At H = 1/2, V_256 = chi2_256 - 256; P(|V| > sqrt 512) from the exact
        // chi-square law.
        let t = tail_prob_mc(q(2), h(0.5), 256, 512f64.sqrt(), 10_000, 11).unwrap();
        let exact = 0.316_677_766_782_528_46;
        assert!(t.ci_low <= exact && exact <= t.ci_high, "{t:?}");
    }

    #[test]
    fn truncation_examples() {
        // F1 with p = 1: A / (eps^2 N), A = c1^2 = 2 at H = 1/2.
        let b1 = truncation_bound_with_order(q(2), h(0.5), SeriesKind::F1, 0.3, 1000, 1)
            .unwrap()
            .unwrap();
        assert!((b1 - 2.0 / (0.09 * 1000.0)).abs() < 1e-9 * b1);
        assert!(truncation_bound(q(2), h(0.5), SeriesKind::F1, 0.3, 1000).unwrap() <= b1);
        // G1 diverges at p = 1 and converges from p = 2.
        assert!(
            truncation_bound_with_order(q(2), h(0.5), SeriesKind::G1, 0.3, 1000, 1)
                .unwrap()
                .is_none()
        );
        let mut prev = f64::INFINITY;
        for n in [10u64, 100, 1000, 10_000, 100_000] {
            let b = truncation_bound_with_order(q(2), h(0.5), SeriesKind::G1, 0.3, n, 2)
                .unwrap()
                .unwrap();
            assert!(b.is_finite() && b < prev);
            let all = truncation_bound(q(2), h(0.5), SeriesKind::G1, 0.3, n).unwrap();
            assert!(all <= b);
            prev = b;
        }
    }

    #[test]
    fn truncation_g2_dominates_majorant_sum() {
        // Direct high-precision sums of sum_{n>N} K_p n^{-s} for q = 2, H = 0.9,
        // eps = 0.5, N = 10^4 (Hurwitz zeta), for each p.
        let frozen = G2_MAJORANT_SUMS;
        for (p, &direct) in (1..=MAX_MOMENT_ORDER).zip(frozen.iter()) {
            let b = truncation_bound_with_order(q(2), h(0.9), SeriesKind::G2, 0.5, 10_000, p)
                .unwrap()
                .unwrap();
            assert!(b >= direct && b <= direct * 1.001, "p={p}: {b} vs {direct}");
        }
        let best = truncation_bound(q(2), h(0.9), SeriesKind::G2, 0.5, 10_000).unwrap();
        assert!((best - G2_BEST).abs() < 1e-9 * G2_BEST, "{best}");
    }

    #[allow(clippy::excessive_precision)]
    const G2_MAJORANT_SUMS: [f64; 8] = [
        0.258_138_839_649_830_94,
        8.831_812_305_193_548_8e-5,
        1.527_590_011_712_613_4e-7,
        6.142_481_086_343_903_6e-10,
        4.438_775_783_698_129_6e-12,
        5.036_546_053_207_753_6e-14,
        8.251_039_828_068_279_2e-16,
        1.842_735_250_721_157_3e-17,
    ];
    #[allow(clippy::excessive_precision)]
    const G2_BEST: f64 = 1.843_822_874_141_061_9e-17;

    #[test]
    fn chosen_truncation_is_minimal() {
        for &(kind, hh, e) in &[
            (SeriesKind::G1, 0.5, 0.42),
            (SeriesKind::F1, 0.3, 0.1),
            (SeriesKind::G2, 0.9, 0.7),
        ] {
            let n = truncation_point(q(2), h(hh), kind, e, 0.02)
                .unwrap()
                .unwrap();
            assert!(truncation_bound(q(2), h(hh), kind, e, n).unwrap() <= 0.02);
            if n > 1 {
                assert!(truncation_bound(q(2), h(hh), kind, e, n - 1).unwrap() > 0.02);
            }
        }
    }

    #[test]
    fn schedule_fits_budget() {
        let s = ReplicaSchedule::fit(SeriesKind::F1, 5000, 200, 3_000_000).unwrap();
        assert!(s.total <= 3_000_000 && s.total > 2_900_000);
        assert!(s.replicas(1) > s.replicas(5000));
        assert!(s.replicas(5000) >= 200);
        let g = ReplicaSchedule::fit(SeriesKind::G1, 1000, 200, 1_000_000).unwrap();
        assert_eq!(g.replicas(1), g.replicas(1000));
        assert!(ReplicaSchedule::fit(SeriesKind::G1, 1000, 200, 100_000).is_none());
    }

    #[test]
    fn huge_epsilon_gives_zero() {
        let cfg = SeriesConfig {
            budget: 100_000,
            ..SeriesConfig::default()
        };
        for (kind, hh) in [
            (SeriesKind::F1, 0.5),
            (SeriesKind::G1, 0.5),
            (SeriesKind::F2, 0.9),
            (SeriesKind::G2, 0.9),
        ] {
            let est = estimate_series(kind, q(2), h(hh), 1e3, &cfg).unwrap();
            assert_eq!(est.value, 0.0);
            assert!(est.remainder_bound <= cfg.tol);
        }
    }

    #[test]
    fn budget_exceeded_reports_cost() {
        let cfg = SeriesConfig {
            budget: 1_000_000,
            max_n: 1 << 16,
            ..SeriesConfig::default()
        };
        match estimate_series(SeriesKind::G1, q(2), h(0.5), 0.01, &cfg) {
            Err(Error::BudgetExceeded { n_trunc, .. }) => assert!(n_trunc > 1 << 16),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn estimate_matches_rerun_with_more_replicas() {
        let base = SeriesConfig {
            tol: 0.05,
            budget: 400_000,
            seed: 5,
            ..SeriesConfig::default()
        };
        let a = estimate_series(SeriesKind::G1, q(2), h(0.5), 1.0, &base).unwrap();
        let big = SeriesConfig {
            budget: 4_000_000,
            seed: 6,
            ..base
        };
        let b = estimate_series(SeriesKind::G1, q(2), h(0.5), 1.0, &big).unwrap();
        assert_eq!(a.n_trunc, b.n_trunc);
        let se = (a.mc_stderr.powi(2) + b.mc_stderr.powi(2)).sqrt();
        assert!(
            (a.value - b.value).abs() < 3.0 * se,
            "{} vs {} (se {se})",
            a.value,
            b.value
        );
    }

    #[test]
    fn estimate_is_monotone_in_epsilon() {
        let cfg = SeriesConfig {
            tol: 0.05,
            budget: 300_000,
            seed: 8,
            ..SeriesConfig::default()
        };
        let lo = estimate_series(SeriesKind::F1, q(2), h(0.5), 1.0, &cfg).unwrap();
        let hi = estimate_series(SeriesKind::F1, q(2), h(0.5), 2.0, &cfg).unwrap();
        assert!(hi.value <= lo.value + 2.0 * (lo.mc_stderr + hi.mc_stderr));
    }

    #[test]
    fn predicted_limits() {
        assert_eq!(
            predicted_limit(SeriesKind::F1, q(2), h(0.3), None)
                .unwrap()
                .value,
            2.0
        );
        assert_eq!(
            predicted_limit(SeriesKind::G1, q(3), h(0.5), None)
                .unwrap()
                .value,
            1.0
        );
        let f2 = predicted_limit(SeriesKind::F2, q(2), h(0.9), None)
            .unwrap()
            .value;
        assert!((f2 - 1.25).abs() < 1e-12);
        assert!(predicted_limit(SeriesKind::G2, q(2), h(0.9), None).is_err());
        let r = EmpiricalSample::new(vec![1.0, -1.0, 1.0, -1.0], None).unwrap();
        let g2 = predicted_limit(SeriesKind::G2, q(2), h(0.9), Some(&r)).unwrap();
        assert_eq!((g2.value, g2.stderr), (1.0, 0.0));
    }
}
