//! Hermite variations `V_n = sum_k H_q(X_k)` of standardized fGn, their exact
//! second moment and the normalising constants of both limit regimes.

use std::collections::HashMap;
use std::sync::{OnceLock, RwLock};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fgn::{fgn_autocovariance, FgnSample, Hurst};
use crate::hermite::{hermite_eval, HermiteOrder};
use crate::numeric::{binomial, hurwitz_zeta, CompensatedSum};

/// Which limit theorem governs `V_n` for a given `(q, H)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Regime {
    /// `0 < H < 1 - 1/(2q)`: Gaussian limit at rate `sqrt(n)`.
    Clt,
    /// `1 - 1/(2q) < H < 1`: Hermite-distributed limit at rate `n^{1 - q(1-H)}`.
    Hermite,
}

impl Regime {
    pub fn critical_hurst(q: HermiteOrder) -> f64 {
        1.0 - 1.0 / (2.0 * q.get() as f64)
    }

    pub fn classify(q: HermiteOrder, hurst: Hurst) -> Result<Self> {
        let critical = Self::critical_hurst(q);
        let h = hurst.get();
        if (h - critical).abs() <= 1e-12 {
            return Err(Error::regime(
                q.get(),
                h,
                "H = 1 - 1/(2q) needs a logarithmic normalisation and is not supported",
            ));
        }
        Ok(if h < critical {
            Regime::Clt
        } else {
            Regime::Hermite
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Regime::Clt => "CLT",
            Regime::Hermite => "HERMITE",
        }
    }
}

/// `alpha = 2q(1-H)`, the decay exponent of `rho_H(k)^q`.
pub fn decay_exponent(q: HermiteOrder, hurst: Hurst) -> f64 {
    2.0 * q.get() as f64 * (1.0 - hurst.get())
}

/// Exponent `1 - q(1-H)` of the Hermite-regime normalisation `n^{1-q(1-H)}`.
pub fn hermite_scaling_exponent(q: HermiteOrder, hurst: Hurst) -> f64 {
    1.0 - q.get() as f64 * (1.0 - hurst.get())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VariationStatistic {
    pub q: HermiteOrder,
    pub hurst: Hurst,
    pub n: usize,
    pub value: f64,
}

pub fn compute_vn(q: HermiteOrder, sample: &FgnSample) -> VariationStatistic {
    let value = sample
        .increments
        .iter()
        .map(|&x| hermite_eval(q.get(), x))
        .collect::<CompensatedSum>()
        .value();
    VariationStatistic {
        q,
        hurst: sample.hurst,
        n: sample.len(),
        value,
    }
}

/// `V_1, ..., V_L` for every prefix of `increments`, accumulated in the same
/// compensated order as [`compute_vn`].
pub fn prefix_variations(q: HermiteOrder, increments: &[f64], out: &mut Vec<f64>) {
    out.clear();
    let mut acc = CompensatedSum::new();
    for &x in increments {
        acc.add(hermite_eval(q.get(), x));
        out.push(acc.value());
    }
}

/// `E[V_n^2] = q! sum_{|k|<n} (n - |k|) rho_H(k)^q`.
pub fn exact_second_moment(q: HermiteOrder, hurst: Hurst, n: u64) -> Result<f64> {
    if n == 0 {
        return Err(Error::invalid("n", "n must be at least 1"));
    }
    let qq = q.get() as i32;
    let mut acc = CompensatedSum::new();
    acc.add(n as f64);
    for k in 1..n {
        acc.add(2.0 * (n - k) as f64 * fgn_autocovariance(hurst, k).powi(qq));
    }
    Ok(q.factorial() * acc.value())
}

/// `E[V_n^2]` as the plain double sum `q! sum_{k,l<n} rho_H(k-l)^q`, O(n^2).
/// Kept as an independent check of [`exact_second_moment`].
pub fn second_moment_double_sum(q: HermiteOrder, hurst: Hurst, n: u64) -> Result<f64> {
    if n == 0 {
        return Err(Error::invalid("n", "n must be at least 1"));
    }
    let qq = q.get() as i32;
    let mut acc = CompensatedSum::new();
    for k in 0..n {
        for l in 0..n {
            acc.add(fgn_autocovariance(hurst, k.abs_diff(l)).powi(qq));
        }
    }
    Ok(q.factorial() * acc.value())
}

/// A value together with a bound on its absolute error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CertifiedValue {
    pub value: f64,
    pub error: f64,
}

const DIRECT_TERMS: u64 = 1024;
const TAIL_DEGREE: usize = 8;

/// `sum_{k>=1} (sign * rho_H(k))^q` for `alpha = 2q(1-H) > 1`, with a
/// certified error bound.
///
/// The first `DIRECT_TERMS` terms are summed directly. Beyond that,
/// `rho_H(k) = k^{2H-2} s(1/k^2)` with `s(y) = sum_j binom(2H, 2j+2) y^j`,
/// so the tail is a combination of Hurwitz zeta values. All coefficients of
/// `s` are bounded by 1 in magnitude, which bounds the neglected part of
/// `s^q` by the matching tail of `(1-y)^{-q}`.
pub(crate) fn correlation_power_sum(q: HermiteOrder, hurst: Hurst, sign: f64) -> CertifiedValue {
    let qq = q.get() as usize;
    let h = hurst.get();
    let alpha = decay_exponent(q, hurst);
    debug_assert!(alpha > 1.0);

    let mut direct = CompensatedSum::new();
    let mut magnitude = 0.0;
    for k in 1..=DIRECT_TERMS {
        let t = (sign * fgn_autocovariance(hurst, k)).powi(qq as i32);
        direct.add(t);
        magnitude += t.abs();
    }

    let base: Vec<f64> = (0..=TAIL_DEGREE)
        .map(|j| sign * binomial(2.0 * h, 2 * j + 2))
        .collect();
    let mut power = vec![0.0; TAIL_DEGREE + 1];
    power[0] = 1.0;
    for _ in 0..qq {
        let mut next = vec![0.0; TAIL_DEGREE + 1];
        for (i, &a) in power.iter().enumerate() {
            for (j, &b) in base.iter().enumerate().take(TAIL_DEGREE + 1 - i) {
                next[i + j] += a * b;
            }
        }
        power = next;
    }

    let a = DIRECT_TERMS as f64 + 1.0;
    let mut tail = CompensatedSum::new();
    let mut tail_err = 0.0;
    for (m, &e) in power.iter().enumerate() {
        if e == 0.0 {
            continue;
        }
        let (z, zerr) = hurwitz_zeta(alpha + 2.0 * m as f64, a);
        tail.add(e * z);
        tail_err += e.abs() * zerr;
        magnitude += (e * z).abs();
    }
    let majorant = 2.0
        * binomial((TAIL_DEGREE + qq) as f64, qq - 1)
        * hurwitz_zeta(alpha + 2.0 * (TAIL_DEGREE + 1) as f64, a).0;
    let error = tail_err + majorant + 64.0 * f64::EPSILON * magnitude;
    CertifiedValue {
        value: direct.value() + tail.value(),
        error,
    }
}

/// `c_1 = sqrt(q! sum_{k in Z} rho_H(k)^q)`, the limit of `sqrt(E[V_n^2] / n)`.
pub fn c1_constant(q: HermiteOrder, hurst: Hurst) -> Result<CertifiedValue> {
    if Regime::classify(q, hurst)? != Regime::Clt {
        return Err(Error::regime(
            q.get(),
            hurst.get(),
            "c1 exists only for H < 1 - 1/(2q)",
        ));
    }
    let s = correlation_power_sum(q, hurst, 1.0);
    let squared = q.factorial() * (1.0 + 2.0 * s.value);
    let squared_err = q.factorial() * 2.0 * s.error;
    if squared - squared_err <= 0.0 {
        return Err(Error::regime(
            q.get(),
            hurst.get(),
            "limit variance is not positive",
        ));
    }
    let value = squared.sqrt();
    Ok(CertifiedValue {
        value,
        error: squared_err / value + f64::EPSILON * value,
    })
}

/// Grid exponents `2^10 ..= 2^20` used for the `c_2` extrapolation.
pub const C2_GRID: std::ops::RangeInclusive<u32> = 10..=20;

fn aitken(y: &[f64]) -> f64 {
    let (y1, y2, y3) = (y[0], y[1], y[2]);
    let (d1, d2) = (y2 - y1, y3 - y2);
    let tiny = 1e-14 * y3.abs();
    if d1.abs() <= tiny || d2.abs() <= tiny {
        return y3;
    }
    let r = d2 / d1;
    if !(r > 0.0 && r < 1.0) {
        return y3;
    }
    y3 + d2 * r / (1.0 - r)
}

/// `c_2 = lim n^{-(1-q(1-H))} sqrt(E[V_n^2])`.
///
/// `E[V_n^2] / n^{2-alpha}` behaves like `a + b n^{-delta} + O(n^{-(2-alpha)})`;
/// the limit `a` is extrapolated from the last three grid points with `delta`
/// solved exactly (Aitken). The reported error is the change of the
/// extrapolated value between the last two grid triples.
pub fn c2_constant(q: HermiteOrder, hurst: Hurst) -> Result<CertifiedValue> {
    c2_constant_on_grid(q, hurst, *C2_GRID.end())
}

pub fn c2_constant_on_grid(q: HermiteOrder, hurst: Hurst, max_exp: u32) -> Result<CertifiedValue> {
    if Regime::classify(q, hurst)? != Regime::Hermite {
        return Err(Error::regime(
            q.get(),
            hurst.get(),
            "c2 exists only for H > 1 - 1/(2q)",
        ));
    }
    let min_exp = *C2_GRID.start();
    if max_exp < min_exp + 3 || max_exp > 26 {
        return Err(Error::invalid(
            "max_exp",
            "grid needs 2^10 .. 2^max_exp with 13 <= max_exp <= 26",
        ));
    }
    let qq = q.get() as i32;
    let n_max = 1u64 << max_exp;
    let g: Vec<f64> = (0..n_max)
        .map(|k| fgn_autocovariance(hurst, k).powi(qq))
        .collect();
    let growth = 2.0 - decay_exponent(q, hurst);
    let ys: Vec<f64> = (min_exp..=max_exp)
        .map(|e| {
            let n = 1u64 << e;
            let mut acc = CompensatedSum::new();
            acc.add(n as f64);
            for k in 1..n {
                acc.add(2.0 * (n - k) as f64 * g[k as usize]);
            }
            q.factorial() * acc.value() / (n as f64).powf(growth)
        })
        .collect();
    let len = ys.len();
    let last = aitken(&ys[len - 3..]);
    let previous = aitken(&ys[len - 4..len - 1]);
    let squared_err = (last - previous).abs() + 1e-13 * last.abs();
    let value = last.sqrt();
    Ok(CertifiedValue {
        value,
        error: squared_err / value,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormalizationConstants {
    pub q: HermiteOrder,
    pub hurst: Hurst,
    pub regime: Regime,
    pub c1: Option<f64>,
    pub c2: Option<f64>,
    pub err1: Option<f64>,
    pub err2: Option<f64>,
}

impl NormalizationConstants {
    /// The constant of the active regime.
    pub fn active(&self) -> CertifiedValue {
        match self.regime {
            Regime::Clt => CertifiedValue {
                value: self.c1.unwrap(),
                error: self.err1.unwrap(),
            },
            Regime::Hermite => CertifiedValue {
                value: self.c2.unwrap(),
                error: self.err2.unwrap(),
            },
        }
    }
}

type ConstKey = (u32, u64);

fn constants_cache() -> &'static RwLock<HashMap<ConstKey, NormalizationConstants>> {
    static CACHE: OnceLock<RwLock<HashMap<ConstKey, NormalizationConstants>>> = OnceLock::new();
    CACHE.get_or_init(|| RwLock::new(HashMap::new()))
}

/// Constants for `(q, H)`, computed once per process and then shared.
pub fn normalization_constants(q: HermiteOrder, hurst: Hurst) -> Result<NormalizationConstants> {
    let key = (q.get(), hurst.get().to_bits());
    if let Some(c) = constants_cache().read().unwrap().get(&key) {
        return Ok(*c);
    }
    let regime = Regime::classify(q, hurst)?;
    let consts = match regime {
        Regime::Clt => {
            let c = c1_constant(q, hurst)?;
            NormalizationConstants {
                q,
                hurst,
                regime,
                c1: Some(c.value),
                c2: None,
                err1: Some(c.error),
                err2: None,
            }
        }
        Regime::Hermite => {
            let c = c2_constant(q, hurst)?;
            NormalizationConstants {
                q,
                hurst,
                regime,
                c1: None,
                c2: Some(c.value),
                err1: None,
                err2: Some(c.error),
            }
        }
    };
    Ok(*constants_cache()
        .write()
        .unwrap()
        .entry(key)
        .or_insert(consts))
}

/// `Z_n^(1) = V_n / (c_1 sqrt(n))` or `Z_n^(2) = V_n / (c_2 n^{1-q(1-H)})`.
pub fn normalize(
    v: &VariationStatistic,
    regime: Regime,
    consts: &NormalizationConstants,
) -> Result<f64> {
    let actual = Regime::classify(v.q, v.hurst)?;
    if actual != regime || consts.regime != regime || consts.q != v.q || consts.hurst != v.hurst {
        return Err(Error::regime(
            v.q.get(),
            v.hurst.get(),
            format!("statistic is in the {} regime", actual.as_str()),
        ));
    }
    let n = v.n as f64;
    match regime {
        Regime::Clt => {
            let c1 = consts
                .c1
                .ok_or_else(|| Error::regime(v.q.get(), v.hurst.get(), "c1 missing"))?;
            Ok(v.value / (c1 * n.sqrt()))
        }
        Regime::Hermite => {
            let c2 = consts
                .c2
                .ok_or_else(|| Error::regime(v.q.get(), v.hurst.get(), "c2 missing"))?;
            Ok(v.value / (c2 * n.powf(hermite_scaling_exponent(v.q, v.hurst))))
        }
    }
}

/// Majorant `E[V_n^2] <= coefficient * n^exponent`, valid for every `n >= 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SecondMomentMajorant {
    pub coefficient: f64,
    pub exponent: f64,
}

pub fn second_moment_majorant(q: HermiteOrder, hurst: Hurst) -> Result<SecondMomentMajorant> {
    let qf = q.factorial();
    match Regime::classify(q, hurst)? {
        Regime::Clt => {
            // E V_n^2 <= n q! sum_{k in Z} |rho(k)|^q; rho(k), k >= 1, has the sign of 2H - 1.
            let sign = if hurst.get() < 0.5 { -1.0 } else { 1.0 };
            let s = correlation_power_sum(q, hurst, sign);
            Ok(SecondMomentMajorant {
                coefficient: qf * (1.0 + 2.0 * (s.value + s.error)),
                exponent: 1.0,
            })
        }
        Regime::Hermite => {
            // rho(k) <= H(2H-1)(k-1)^{2H-2} for k >= 2 (mean value theorem on the
            // second difference), then an integral comparison.
            let h = hurst.get();
            let alpha = decay_exponent(q, hurst);
            let qq = q.get() as i32;
            let c = (h * (2.0 * h - 1.0)).powi(qq);
            let rho1 = fgn_autocovariance(hurst, 1).powi(qq);
            Ok(SecondMomentMajorant {
                coefficient: qf
                    * (1.0 + 2.0 * rho1 + 2.0 * c + 2.0 * c / (1.0 - alpha))
                    * (1.0 + 1e-12),
                exponent: 2.0 - alpha,
            })
        }
    }
}
