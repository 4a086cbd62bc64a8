//! Deterministic Spitzer and Hsu-Robbins sums for Gaussian tails,
//! `sum_n n^w Phi(s n^beta)` with `w` in {-1, 0}.

use serde::Serialize;

use super::SeriesKind;
use crate::error::{Error, Result};
use crate::fgn::Hurst;
use crate::limitlaws::{phi_normal, TwoSidedTail};
use crate::numeric::{integrate, normal_pdf, CompensatedSum};

/// `Phi` is below 1e-300 beyond this point.
const Y_MAX: f64 = 40.0;
const DIRECT_LIMIT: f64 = (1u64 << 22) as f64;
const TAIL_START: u64 = 1 << 16;
const CORRECTION_INTERVALS: u64 = 1 << 14;

#[derive(Debug, Clone, Copy)]
struct PowerSeries {
    /// `true` for weight `1/n`, `false` for weight 1.
    harmonic: bool,
    s: f64,
    beta: f64,
}

impl PowerSeries {
    fn new(harmonic: bool, s: f64, beta: f64) -> Result<Self> {
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::invalid(
                "epsilon",
                "c * epsilon must be positive and finite",
            ));
        }
        Ok(Self { harmonic, s, beta })
    }

    fn cutoff(&self) -> f64 {
        (Y_MAX / self.s).powf(1.0 / self.beta)
    }

    fn term(&self, x: f64) -> f64 {
        let g = phi_normal(self.s * x.powf(self.beta));
        if self.harmonic {
            g / x
        } else {
            g
        }
    }

    /// `(h'(x), h'''(x))`.
    fn odd_derivatives(&self, x: f64) -> (f64, f64) {
        let (s, b) = (self.s, self.beta);
        let y = s * x.powf(b);
        let p = normal_pdf(y);
        let (g0, g1, g2, g3) = (
            phi_normal(y),
            -2.0 * p,
            2.0 * y * p,
            -2.0 * (y * y - 1.0) * p,
        );
        let u1 = s * b * x.powf(b - 1.0);
        let u2 = u1 * (b - 1.0) / x;
        let u3 = u2 * (b - 2.0) / x;
        let d1 = g1 * u1;
        let d2 = g2 * u1 * u1 + g1 * u2;
        let d3 = g3 * u1 * u1 * u1 + 3.0 * g2 * u1 * u2 + g1 * u3;
        if !self.harmonic {
            return (d1, d3);
        }
        let w = -1.0;
        let (v0, v1, v2, v3) = (
            1.0 / x,
            w / (x * x),
            w * (w - 1.0) / (x * x * x),
            w * (w - 1.0) * (w - 2.0) / (x * x * x * x),
        );
        (
            v1 * g0 + v0 * d1,
            v3 * g0 + 3.0 * v2 * d1 + 3.0 * v1 * d2 + v0 * d3,
        )
    }

    /// `int_{x0}^inf h(x) dx`, after substituting `t = s x^beta` and
    /// integrating by parts so that only `phi` appears under the integral.
    fn tail_integral(&self, x0: f64) -> f64 {
        let t0 = self.s * x0.powf(self.beta);
        if t0 >= Y_MAX {
            return 0.0;
        }
        let inv_b = 1.0 / self.beta;
        if self.harmonic {
            // (2 / beta) int_{t0}^inf phi(t) ln(t / t0) dt
            let ln_t0 = t0.ln();
            2.0 * inv_b * integrate_from(t0, |t| normal_pdf(t) * (t.ln() - ln_t0))
        } else {
            // -x0 Phi(t0) + 2 s^{-1/beta} int_{t0}^inf t^{1/beta} phi(t) dt
            -x0 * phi_normal(t0)
                + 2.0 * self.s.powf(-inv_b) * integrate_from(t0, |t| t.powf(inv_b) * normal_pdf(t))
        }
    }

    fn sum(&self) -> f64 {
        let cut = self.cutoff();
        if cut <= DIRECT_LIMIT {
            return (1..=cut.ceil() as u64)
                .map(|n| self.term(n as f64))
                .collect::<CompensatedSum>()
                .value();
        }
        let mut acc: CompensatedSum = (1..TAIL_START).map(|n| self.term(n as f64)).collect();
        let x0 = TAIL_START as f64;
        let (d1, d3) = self.odd_derivatives(x0);
        acc.add(self.tail_integral(x0));
        acc.add(0.5 * self.term(x0));
        acc.add(-d1 / 12.0);
        acc.add(d3 / 720.0);
        acc.value()
    }
}

/// `int_{t0}^{Y_MAX} f`, with a logarithmic substitution below 1.
fn integrate_from<F: Fn(f64) -> f64>(t0: f64, f: F) -> f64 {
    let mut total = 0.0;
    let mut lo = t0;
    if t0 < 1.0 {
        let span = -t0.ln();
        let panels = (span * 4.0).ceil().max(1.0) as usize;
        total += integrate(
            |u| {
                let t = t0 * u.exp();
                f(t) * t
            },
            0.0,
            span,
            panels,
        );
        lo = 1.0;
    }
    let panels = ((Y_MAX - lo) * 2.0).ceil().max(1.0) as usize;
    total + integrate(f, lo, Y_MAX, panels)
}

/// `sum_{n>=1} w(n) Phi(c eps sqrt(n))` for the `F1` (w = 1/n) or `G1` (w = 1)
/// shape, summed to a Gaussian-tail cutoff with an Euler-Maclaurin tail.
pub fn normal_series_exact(kind: SeriesKind, c: f64, epsilon: f64) -> Result<f64> {
    if !(c > 0.0) {
        return Err(Error::invalid("c", "scale must be positive"));
    }
    let harmonic = match kind {
        SeriesKind::F1 => true,
        SeriesKind::G1 => false,
        _ => {
            return Err(Error::invalid(
                "kind",
                "normal series are defined for the f1 and g1 shapes",
            ))
        }
    };
    Ok(PowerSeries::new(harmonic, c * epsilon, 0.5)?.sum())
}

/// The three pieces of `sum_{n>=1} h(n) = int_1^inf h + h(1)/2 - int_1^inf P1 h'`
/// with `h(x) = Phi(c eps sqrt(x)) / x` and `P1(x) = [x] - x + 1/2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EulerMaclaurinDecomposition {
    pub integral: f64,
    pub boundary: f64,
    pub correction: f64,
    pub series: f64,
    pub residual: f64,
}

pub fn euler_maclaurin_check(
    tail: &TwoSidedTail,
    c: f64,
    epsilon: f64,
) -> Result<EulerMaclaurinDecomposition> {
    if !matches!(tail, TwoSidedTail::Normal) {
        return Err(Error::invalid(
            "tail",
            "the decomposition needs the analytic normal tail",
        ));
    }
    let series = normal_series_exact(SeriesKind::F1, c, epsilon)?;
    let ps = PowerSeries::new(true, c * epsilon, 0.5)?;
    let integral = ps.tail_integral(1.0);
    let boundary = 0.5 * ps.term(1.0);
    let last = (ps.cutoff().ceil() as u64).clamp(2, CORRECTION_INTERVALS);
    let mut acc = CompensatedSum::new();
    for k in 1..last {
        let kf = k as f64;
        acc.add(-integrate(
            |x| (0.5 - (x - kf)) * ps.odd_derivatives(x).0,
            kf,
            kf + 1.0,
            1,
        ));
    }
    let (d1, d3) = ps.odd_derivatives(last as f64);
    acc.add(-d1 / 12.0 + d3 / 720.0);
    let correction = acc.value();
    Ok(EulerMaclaurinDecomposition {
        integral,
        boundary,
        correction,
        series,
        residual: series - (integral + boundary + correction),
    })
}

/// First-chaos case: `V_n ~ N(0, n^{2H})`, threshold `eps n^{2H}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FirstChaos {
    /// `sum (1/n) P(|V_n| > eps n^{2H}) / (-ln eps)`, tends to `1/H`.
    pub spitzer_ratio: f64,
    /// `eps^{1/H} sum P(|V_n| > eps n^{2H})`, tends to `E|Z|^{1/H}`.
    pub hsurobbins_value: f64,
}

pub fn q1_special(hurst: Hurst, epsilon: f64) -> Result<FirstChaos> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::invalid("epsilon", "must lie in (0, 1)"));
    }
    let h = hurst.get();
    let f = PowerSeries::new(true, epsilon, h)?.sum();
    let g = PowerSeries::new(false, epsilon, h)?.sum();
    Ok(FirstChaos {
        spitzer_ratio: f / -epsilon.ln(),
        hsurobbins_value: epsilon.powf(1.0 / h) * g,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::normal_abs_moment;

    fn direct(harmonic: bool, s: f64, beta: f64) -> f64 {
        let ps = PowerSeries { harmonic, s, beta };
        (1..=ps.cutoff().ceil() as u64)
            .map(|n| ps.term(n as f64))
            .collect::<CompensatedSum>()
            .value()
    }

    #[test]
    fn hsu_robbins_normal_values() {
        // Frozen from an independent fsum/erfc direct summation.
        let v = normal_series_exact(SeriesKind::G1, 1.0, 0.1).unwrap();
        assert!((0.01 * v - 0.995_165_835_301_919_8).abs() < 1e-12);
        let v = normal_series_exact(SeriesKind::G1, 1.0, 0.05).unwrap();
        assert!((0.0025 * v - 0.998_770_732_591_956).abs() < 1e-12);
        let v = normal_series_exact(SeriesKind::G1, 1.0, 0.01).unwrap();
        assert!((1e-4 * v - 0.999_950_165_87).abs() < 1e-10);
    }

    #[test]
    fn spitzer_normal_values() {
        let v = normal_series_exact(SeriesKind::F1, 1.0, 0.1).unwrap();
        assert!((v - 4.028_514_797_233_313_5).abs() < 1e-11);
        let v = normal_series_exact(SeriesKind::F1, 1.0, 0.05).unwrap();
        assert!((v - 5.356_573_626_892_287).abs() < 1e-11);
        // sum (1/n) Phi(eps sqrt n) = -2 ln eps - ln 2 + O(eps)
        for &e in &[1e-4, 1e-6, 1e-8] {
            let v = normal_series_exact(SeriesKind::F1, 1.0, e).unwrap();
            assert!(
                (v - (-2.0 * f64::ln(e) - 2f64.ln())).abs() < 1e-3,
                "eps={e}: {v}"
            );
        }
    }

    #[test]
    fn tail_route_matches_direct_route() {
        for &(harmonic, s, beta) in &[
            (true, 0.004, 0.5),
            (false, 0.004, 0.5),
            (true, 0.005, 0.7),
            (false, 0.005, 0.7),
        ] {
            let ps = PowerSeries { harmonic, s, beta };
            assert!(ps.cutoff() > (1u64 << 16) as f64 && ps.cutoff() < 2e8);
            let mut acc: CompensatedSum = (1..TAIL_START).map(|n| ps.term(n as f64)).collect();
            let x0 = TAIL_START as f64;
            let (d1, d3) = ps.odd_derivatives(x0);
            acc.add(ps.tail_integral(x0) + 0.5 * ps.term(x0) - d1 / 12.0 + d3 / 720.0);
            let d = direct(harmonic, s, beta);
            assert!(
                ((acc.value() - d) / d).abs() < 1e-12,
                "{harmonic} {s} {beta}: {} vs {d}",
                acc.value()
            );
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        for &(harmonic, s, beta) in &[(true, 0.3, 0.5), (false, 0.1, 0.7)] {
            let ps = PowerSeries { harmonic, s, beta };
            let x = 5.0;
            let hstep = 1e-3;
            let f = |t: f64| ps.term(t);
            let fd1 = (f(x + hstep) - f(x - hstep)) / (2.0 * hstep);
            let fd3 = (f(x + 2.0 * hstep) - 2.0 * f(x + hstep) + 2.0 * f(x - hstep)
                - f(x - 2.0 * hstep))
                / (2.0 * hstep.powi(3));
            let (d1, d3) = ps.odd_derivatives(x);
            assert!((d1 - fd1).abs() < 1e-7);
            assert!((d3 - fd3).abs() < 1e-4 * d3.abs().max(1e-3));
        }
    }

    #[test]
    fn scale_covariance_is_bitwise() {
        for &e in &[0.3, 0.01, 1e-5] {
            let a = normal_series_exact(SeriesKind::G1, 1.0, e).unwrap();
            let b = normal_series_exact(SeriesKind::G1, 2.0, e / 2.0).unwrap();
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn euler_maclaurin_identity() {
        let d = euler_maclaurin_check(&TwoSidedTail::Normal, 1.0, 0.5).unwrap();
        assert!(d.residual.abs() <= 1e-8, "{d:?}");
        let mut prev = f64::INFINITY;
        for k in 3..=8 {
            let e = 10f64.powi(-k);
            let d = euler_maclaurin_check(&TwoSidedTail::Normal, 1.0, e).unwrap();
            assert!(d.residual.abs() <= 1e-8, "eps={e}: {d:?}");
            let r = (d.correction / -e.ln()).abs();
            assert!(r < prev, "eps={e}");
            prev = r;
        }
    }

    #[test]
    fn spitzer_limit_is_scale_free() {
        let e = 1e-8;
        let a = normal_series_exact(SeriesKind::F1, 1.0, e).unwrap() / -e.ln();
        let b = normal_series_exact(SeriesKind::F1, 2.0, e).unwrap() / -e.ln();
        assert!((a - 2.0).abs() < 0.05 && (b - 2.0).abs() < 0.15);
        // doubling c shifts the sum by -2 ln 2 + O(eps)
        assert!((a - b - 2.0 * 2f64.ln() / -e.ln()).abs() < 1e-6);
    }

    #[test]
    fn first_chaos_values() {
        let r = q1_special(Hurst::new(0.5).unwrap(), 1e-6).unwrap();
        assert!((r.spitzer_ratio - 2.0).abs() < 0.06);
        let r = q1_special(Hurst::new(0.5).unwrap(), 0.01).unwrap();
        assert!((r.hsurobbins_value - 1.0).abs() < 1e-2);
        // frozen from fsum/erfc direct summation at H = 0.7, eps = 0.1
        let r = q1_special(Hurst::new(0.7).unwrap(), 0.1).unwrap();
        assert!((r.spitzer_ratio * 0.1f64.ln().abs() - 3.031_385_252_780_455).abs() < 1e-11);
        assert!((r.hsurobbins_value / 0.1f64.powf(1.0 / 0.7) - 22.220_930_017_424_57).abs() < 1e-9);
        let r = q1_special(Hurst::new(0.7).unwrap(), 1e-6).unwrap();
        assert!((r.spitzer_ratio - 1.0 / 0.7).abs() < 0.1);
        assert!((r.hsurobbins_value - normal_abs_moment(1.0 / 0.7)).abs() < 1e-2);
    }
}
