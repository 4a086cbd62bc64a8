//! Small numerical kernels shared across the crate: compensated summation,
//! the standard normal distribution, Gauss-Legendre quadrature and the
//! Hurwitz zeta function.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::sync::OnceLock;

/// Neumaier's variant of Kahan summation.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

impl std::iter::FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = CompensatedSum::new();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    iter.into_iter().collect::<CompensatedSum>().value()
}

/// Standard normal density.
#[inline]
pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Standard normal distribution function, accurate in both tails.
#[inline]
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// `P(|Z| > z)` for a standard normal `Z`.
#[inline]
pub fn normal_two_sided_tail(z: f64) -> f64 {
    libm::erfc(z * FRAC_1_SQRT_2)
}

/// Inverse of the standard normal distribution function (Wichura, AS 241,
/// PPND16). Relative accuracy about 1e-16 on the open unit interval.
#[allow(clippy::excessive_precision)]
pub fn inverse_normal_cdf(p: f64) -> f64 {
    const A: [f64; 8] = [
        3.387_132_872_796_366_608_0e0,
        1.331_416_678_917_843_774_5e2,
        1.971_590_950_306_551_442_7e3,
        1.373_169_376_550_946_112_5e4,
        4.592_195_393_154_987_145_7e4,
        6.726_577_092_700_870_085_3e4,
        3.343_057_558_358_812_810_5e4,
        2.509_080_928_730_122_672_7e3,
    ];
    const B: [f64; 8] = [
        1.0,
        4.231_333_070_160_091_125_2e1,
        6.871_870_074_920_579_083_0e2,
        5.394_196_021_424_751_107_7e3,
        2.121_379_430_158_659_586_7e4,
        3.930_789_580_009_271_061_0e4,
        2.872_908_573_572_194_267_4e4,
        5.226_495_278_852_854_561_0e3,
    ];
    const C: [f64; 8] = [
        1.423_437_110_749_683_577_34e0,
        4.630_337_846_156_545_295_90e0,
        5.769_497_221_460_691_405_50e0,
        3.647_848_324_763_204_605_04e0,
        1.270_458_252_452_368_382_58e0,
        2.417_807_251_774_506_117_70e-1,
        2.272_384_498_926_918_458_33e-2,
        7.745_450_142_783_414_076_40e-4,
    ];
    const D: [f64; 8] = [
        1.0,
        2.053_191_626_637_758_821_87e0,
        1.676_384_830_183_803_849_40e0,
        6.897_673_349_851_000_045_50e-1,
        1.481_039_764_274_800_745_90e-1,
        1.519_866_656_361_645_719_66e-2,
        5.475_938_084_995_344_946_00e-4,
        1.050_750_071_644_416_843_24e-9,
    ];
    const E: [f64; 8] = [
        6.657_904_643_501_103_777_20e0,
        5.463_784_911_164_114_369_90e0,
        1.784_826_539_917_291_335_80e0,
        2.965_605_718_285_048_912_30e-1,
        2.653_218_952_657_612_309_30e-2,
        1.242_660_947_388_078_438_60e-3,
        2.711_555_568_743_487_578_15e-5,
        2.010_334_399_292_288_132_65e-7,
    ];
    const F: [f64; 8] = [
        1.0,
        5.998_322_065_558_879_376_90e-1,
        1.369_298_809_227_358_053_10e-1,
        1.487_536_129_085_061_485_25e-2,
        7.868_691_311_456_132_591_00e-4,
        1.846_318_317_510_054_681_80e-5,
        1.421_511_758_316_445_888_70e-7,
        2.044_263_103_389_939_785_64e-15,
    ];

    #[inline]
    fn poly(c: &[f64; 8], x: f64) -> f64 {
        c.iter().rev().fold(0.0, |acc, &k| acc * x + k)
    }

    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180_625 - q * q;
        return q * poly(&A, r) / poly(&B, r);
    }
    let tail = if q < 0.0 { p } else { 1.0 - p };
    if tail <= 0.0 {
        return if q < 0.0 {
            f64::NEG_INFINITY
        } else {
            f64::INFINITY
        };
    }
    let mut r = (-tail.ln()).sqrt();
    let value = if r <= 5.0 {
        r -= 1.6;
        poly(&C, r) / poly(&D, r)
    } else {
        r -= 5.0;
        poly(&E, r) / poly(&F, r)
    };
    if q < 0.0 {
        -value
    } else {
        value
    }
}

const GL_ORDER: usize = 16;

fn gauss_legendre_rule() -> &'static [(f64, f64); GL_ORDER] {
    static RULE: OnceLock<[(f64, f64); GL_ORDER]> = OnceLock::new();
    RULE.get_or_init(|| {
        let n = GL_ORDER;
        let mut rule = [(0.0, 0.0); GL_ORDER];
        for i in 0..n.div_ceil(2) {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let kf = k as f64;
                    let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            rule[i] = (-x, w);
            rule[n - 1 - i] = (x, w);
        }
        rule
    })
}

/// Composite 16-point Gauss-Legendre quadrature over `panels` equal panels.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize) -> f64 {
    if b <= a {
        return 0.0;
    }
    let rule = gauss_legendre_rule();
    let h = (b - a) / panels as f64;
    let mut acc = CompensatedSum::new();
    for p in 0..panels {
        let lo = a + h * p as f64;
        let mid = lo + 0.5 * h;
        let mut panel = 0.0;
        for &(x, w) in rule {
            panel += w * f(mid + 0.5 * h * x);
        }
        acc.add(0.5 * h * panel);
    }
    acc.value()
}

/// Even-index Bernoulli numbers B_2, B_4, ..., B_14.
const BERNOULLI_EVEN: [f64; 7] = [
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
];

/// Hurwitz zeta `sum_{k>=0} (k + a)^{-s}` for `s > 1`, `a > 0`, evaluated by
/// Euler-Maclaurin summation. Returns the value and a bound on the remainder
/// (the first omitted correction, which dominates the remainder for this
/// completely monotone summand).
pub fn hurwitz_zeta(s: f64, a: f64) -> (f64, f64) {
    debug_assert!(s > 1.0 && a > 0.0);
    let shift = if a < 20.0 {
        (20.0 - a).ceil() as usize
    } else {
        0
    };
    let mut acc = CompensatedSum::new();
    for k in 0..shift {
        acc.add((a + k as f64).powf(-s));
    }
    let x = a + shift as f64;
    acc.add(x.powf(1.0 - s) / (s - 1.0));
    acc.add(0.5 * x.powf(-s));
    // rising factorial s (s+1) ... (s+2j-2) / (2j)!
    let mut coef = s / 2.0;
    let mut xpow = x.powf(-s - 1.0);
    let mut last = 0.0;
    for (j, b) in BERNOULLI_EVEN.iter().enumerate() {
        let term = b * coef * xpow;
        if j + 1 == BERNOULLI_EVEN.len() {
            last = term.abs();
            break;
        }
        acc.add(term);
        let m = 2.0 * j as f64 + 2.0;
        coef *= (s + m - 1.0) * (s + m) / ((m + 1.0) * (m + 2.0));
        xpow /= x * x;
    }
    (acc.value(), last + 4.0 * f64::EPSILON * acc.value().abs())
}

/// Generalised binomial coefficient `binom(a, k)` for real `a`.
pub fn binomial(a: f64, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (a - i as f64) / (i as f64 + 1.0))
}

/// `ln Γ(x)` for `x > 0` (Lanczos, g = 7).
#[allow(clippy::excessive_precision)]
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_59,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_571_6e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        return (PI / (PI * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEF[0];
    for (i, c) in COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + G + 0.5;
    0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// `E|Z|^p` for a standard normal `Z`.
pub fn normal_abs_moment(p: f64) -> f64 {
    (0.5 * p * 2f64.ln() + ln_gamma(0.5 * (p + 1.0)) - 0.5 * PI.ln()).exp()
}

pub fn factorial(q: u32) -> f64 {
    (1..=q).fold(1.0, |acc, k| acc * k as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_beats_naive() {
        let xs: Vec<f64> = std::iter::once(1.0)
            .chain(std::iter::repeat(1e-16).take(1_000_000))
            .collect();
        let v = compensated_sum(xs.iter().copied());
        assert!((v - (1.0 + 1e-10)).abs() < 1e-15);
    }

    #[test]
    fn inverse_normal_round_trips() {
        for i in 1..2000 {
            let p = i as f64 / 2000.0;
            let x = inverse_normal_cdf(p);
            assert!(
                (normal_cdf(x) - p).abs() < 1e-15 * p.max(1e-3) * 10.0,
                "p={p}"
            );
        }
        for &p in &[1e-300, 1e-100, 1e-20, 1e-10, 1e-5] {
            let x = inverse_normal_cdf(p);
            // relative error in p is about |x| times the absolute error in x
            let tol = 1e-13f64.max(2e-15 * x * x);
            assert!(((normal_cdf(x) - p) / p).abs() < tol, "p={p}");
        }
        assert!((inverse_normal_cdf(0.975) - 1.959_963_984_540_054).abs() < 1e-14);
    }

    #[test]
    fn gauss_legendre_integrates_polynomials_and_exp() {
        let v = integrate(|x| x.powi(31), 0.0, 1.0, 1);
        assert!((v - 1.0 / 32.0).abs() < 1e-15);
        let v = integrate(f64::exp, 0.0, 3.0, 4);
        assert!((v - (3f64.exp() - 1.0)).abs() < 1e-13);
    }

    #[test]
    fn hurwitz_zeta_matches_riemann_values() {
        let (z2, e2) = hurwitz_zeta(2.0, 1.0);
        assert!((z2 - PI * PI / 6.0).abs() < 1e-14, "{z2}");
        assert!(e2 < 1e-12);
        let (z4, _) = hurwitz_zeta(4.0, 1.0);
        assert!((z4 - PI.powi(4) / 90.0).abs() < 1e-14);
        // zeta(1.5, 1) = 2.612375348685488...
        let (z, _) = hurwitz_zeta(1.5, 1.0);
        assert!((z - 2.612_375_348_685_488).abs() < 1e-13);
        // shift identity zeta(s, a) = a^{-s} + zeta(s, a + 1)
        let (a, _) = hurwitz_zeta(1.2, 1000.0);
        let (b, _) = hurwitz_zeta(1.2, 1001.0);
        assert!((a - b - 1000f64.powf(-1.2)).abs() < 1e-13 * a);
    }

    #[test]
    fn normal_moments() {
        assert!((normal_abs_moment(2.0) - 1.0).abs() < 1e-13);
        assert!((normal_abs_moment(1.0) - (2.0 / PI).sqrt()).abs() < 1e-13);
        assert!((normal_abs_moment(4.0) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn binomial_small_cases() {
        assert_eq!(binomial(5.0, 2), 10.0);
        assert!((binomial(1.4, 2) - 0.28).abs() < 1e-15);
        assert_eq!(binomial(1.0, 4), 0.0);
    }
}
