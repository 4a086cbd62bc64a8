//! Probabilists' (monic) Hermite polynomials.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numeric::factorial;

/// Degree of a Hermite polynomial, at least 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct HermiteOrder(u32);

impl HermiteOrder {
    pub fn new(q: u32) -> Result<Self> {
        if q == 0 {
            return Err(Error::invalid("q", "Hermite order must be at least 1"));
        }
        Ok(Self(q))
    }

    pub fn get(self) -> u32 {
        self.0
    }

    /// `q!`, the variance of `H_q(Z)` for standard normal `Z`.
    pub fn factorial(self) -> f64 {
        factorial(self.0)
    }
}

impl TryFrom<u32> for HermiteOrder {
    type Error = Error;

    fn try_from(q: u32) -> Result<Self> {
        Self::new(q)
    }
}

/// `H_q(x)` via `H_{k+1} = x H_k - k H_{k-1}`, `H_0 = 1`, `H_1 = x`.
#[inline]
pub fn hermite_eval(q: u32, x: f64) -> f64 {
    match q {
        0 => 1.0,
        1 => x,
        2 => x * x - 1.0,
        _ => {
            let (mut prev, mut cur) = (1.0, x);
            for k in 1..q {
                let next = x * cur - k as f64 * prev;
                prev = cur;
                cur = next;
            }
            cur
        }
    }
}

/// `E[H_q(X) H_q(Y)] = q! rho^q` for jointly standard Gaussian `(X, Y)` with
/// correlation `rho` (Mehler).
pub fn hermite_mehler_cov(q: u32, rho: f64) -> Result<f64> {
    if !(-1.0..=1.0).contains(&rho) {
        return Err(Error::invalid(
            "rho",
            format!("correlation {rho} outside [-1, 1]"),
        ));
    }
    Ok(factorial(q) * rho.powi(q as i32))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RandomStream;
    use proptest::prelude::*;

    fn closed_form(q: u32, x: f64) -> f64 {
        match q {
            0 => 1.0,
            1 => x,
            2 => x * x - 1.0,
            3 => x * x * x - 3.0 * x,
            4 => x.powi(4) - 6.0 * x * x + 3.0,
            _ => unreachable!(),
        }
    }

    #[test]
    fn small_degree_values() {
        assert_eq!(hermite_eval(1, 3.7), 3.7);
        assert_eq!(hermite_eval(2, 0.0), -1.0);
        assert_eq!(hermite_eval(4, 1.0), -2.0);
        assert_eq!(hermite_eval(3, 2.0), 2.0);
        assert_eq!(hermite_eval(0, 123.0), 1.0);
    }

    #[test]
    fn recurrence_matches_closed_forms() {
        for q in 0..=4 {
            for i in -400..=400 {
                let x = i as f64 * 0.0125;
                let (a, b) = (hermite_eval(q, x), closed_form(q, x));
                assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0), "q={q} x={x}");
            }
        }
    }

    #[test]
    fn mehler_examples() {
        assert_eq!(hermite_mehler_cov(2, 1.0).unwrap(), 2.0);
        assert_eq!(hermite_mehler_cov(3, 0.0).unwrap(), 0.0);
        assert_eq!(hermite_mehler_cov(2, 0.5).unwrap(), 0.5);
        assert!(hermite_mehler_cov(2, 1.5).is_err());
        assert!(HermiteOrder::new(0).is_err());
    }

    #[test]
    fn moments_of_hermite_of_gaussian() {
        let m = 200_000usize;
        let mut rng = RandomStream::new(2024);
        let z: Vec<f64> = (0..m).map(|_| rng.next_gaussian()).collect();
        for q in 1..=4u32 {
            let h: Vec<f64> = z.iter().map(|&x| hermite_eval(q, x)).collect();
            let mean = h.iter().sum::<f64>() / m as f64;
            let sq: Vec<f64> = h.iter().map(|v| v * v).collect();
            let mean_sq = sq.iter().sum::<f64>() / m as f64;
            let sd = (sq.iter().map(|v| (v - mean_sq).powi(2)).sum::<f64>() / m as f64).sqrt();
            let se_mean = (mean_sq / m as f64).sqrt();
            assert!(mean.abs() < 4.0 * se_mean, "q={q} mean={mean}");
            let fq = factorial(q);
            assert!(
                (mean_sq - fq).abs() < 4.0 * sd / (m as f64).sqrt(),
                "q={q} {mean_sq}"
            );
        }
    }

    #[test]
    fn mehler_matches_monte_carlo() {
        let m = 200_000usize;
        for &q in &[2u32, 3] {
            for &rho in &[0.2, 0.5, 0.9] {
                let mut rng = RandomStream::derive(99, (q as u64) * 10 + (rho * 10.0) as u64);
                let prods: Vec<f64> = (0..m)
                    .map(|_| {
                        let x = rng.next_gaussian();
                        let y = rho * x + (1.0 - rho * rho).sqrt() * rng.next_gaussian();
                        hermite_eval(q, x) * hermite_eval(q, y)
                    })
                    .collect();
                let mean = prods.iter().sum::<f64>() / m as f64;
                let sd = (prods.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / m as f64).sqrt();
                let target = hermite_mehler_cov(q, rho).unwrap();
                assert!(
                    (mean - target).abs() < 4.0 * sd / (m as f64).sqrt(),
                    "q={q} rho={rho}: {mean} vs {target}"
                );
            }
        }
    }

    proptest! {
        #[test]
        fn parity(q in 0u32..=8, x in -20.0f64..20.0) {
            let sign = if q % 2 == 0 { 1.0 } else { -1.0 };
            prop_assert_eq!(hermite_eval(q, -x), sign * hermite_eval(q, x));
        }
    }
}
