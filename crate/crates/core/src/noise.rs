//! Martingale-difference noise sources: i.i.d. Gaussian and stationary ARCH(1).
//!
//! The ARCH(1) recursion is parameterized so that its stationary variance
//! is `sigma2`:
//!
//! ```text
//! ε_t = η_t · sqrt(σ²(1-α) + α ε²_{t-1}),   η_t i.i.d. N(0, 1)
//! ```
//!
//! `ε²` then satisfies an AR(1) recursion in conditional mean with
//! coefficient `α`, and the `2r`-th moment is finite iff
//! `α^r ∏_{i=1..r} (2i-1) < 1`.

use std::io::Write;

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::rng::NormalStream;

/// Steps discarded before recording an ARCH path.
pub const BURN_IN: usize = 1024;

/// ARCH(1) parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ArchParams {
    pub alpha: f64,
    pub sigma2: f64,
}

impl ArchParams {
    pub fn new(alpha: f64, sigma2: f64) -> Result<Self> {
        let p = ArchParams { alpha, sigma2 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.alpha) {
            return Err(invalid(format!("alpha must lie in [0, 1), got {}", self.alpha)));
        }
        if !(self.sigma2.is_finite() && self.sigma2 > 0.0) {
            return Err(invalid(format!("sigma2 must be positive, got {}", self.sigma2)));
        }
        Ok(())
    }

    /// Whether `E ε^{2r} < ∞`.
    pub fn has_moment(&self, r: u32) -> bool {
        let prod: f64 = (1..=r).map(|i| (2 * i - 1) as f64).product();
        self.alpha.powi(r as i32) * prod < 1.0
    }
}

/// Supremum of `α` for which the `2r`-th moment of ARCH(1) exists:
/// `(∏_{i=1..r} (2i-1))^{-1/r}`.
pub fn moment_threshold(r: u32) -> Result<f64> {
    if !(1..=32).contains(&r) {
        return Err(invalid(format!("moment order r must lie in 1..=32, got {r}")));
    }
    // log-space keeps the double factorial finite for large r
    let log_prod: f64 = (1..=r).map(|i| ((2 * i - 1) as f64).ln()).sum();
    Ok((-log_prod / r as f64).exp())
}

/// `E ε⁴ = 3σ⁴(1-α²)/(1-3α²)`.
pub fn arch_fourth_moment(p: &ArchParams) -> Result<f64> {
    p.validate()?;
    let a2 = p.alpha * p.alpha;
    if 3.0 * a2 >= 1.0 {
        return Err(Error::MomentDoesNotExist {
            order: 4,
            alpha: p.alpha,
        });
    }
    Ok(3.0 * p.sigma2 * p.sigma2 * (1.0 - a2) / (1.0 - 3.0 * a2))
}

/// A simulated noise path together with what produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct NoisePath {
    pub values: Vec<f64>,
    pub seed: u64,
    pub params: ArchParams,
}

impl NoisePath {
    /// Writes `index,value` rows (1-based index) with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "index,value")?;
        for (i, v) in self.values.iter().enumerate() {
            writeln!(out, "{},{:.16e}", i + 1, v)?;
        }
        Ok(())
    }
}

/// Producers of stationary martingale-difference noise.
pub trait NoiseSource: Send + Sync {
    /// Fills `out` with a path determined entirely by `seed`.
    fn fill(&self, seed: u64, out: &mut [f64]);

    /// Marginal variance `E ε²`.
    fn variance(&self) -> f64;
}

/// i.i.d. `N(0, σ²)`.
#[derive(Clone, Copy, Debug)]
pub struct GaussianNoise {
    pub sigma2: f64,
}

impl NoiseSource for GaussianNoise {
    fn fill(&self, seed: u64, out: &mut [f64]) {
        let mut stream = NormalStream::new(seed);
        let sd = self.sigma2.sqrt();
        for v in out.iter_mut() {
            *v = sd * stream.next_normal();
        }
    }

    fn variance(&self) -> f64 {
        self.sigma2
    }
}

/// Stationary ARCH(1).
#[derive(Clone, Copy, Debug)]
pub struct ArchNoise {
    pub params: ArchParams,
}

impl NoiseSource for ArchNoise {
    fn fill(&self, seed: u64, out: &mut [f64]) {
        let ArchParams { alpha, sigma2 } = self.params;
        let mut stream = NormalStream::new(seed);
        let floor = sigma2 * (1.0 - alpha);
        let mut prev = sigma2.sqrt() * stream.next_normal();
        for _ in 0..BURN_IN {
            prev = stream.next_normal() * (floor + alpha * prev * prev).sqrt();
        }
        for v in out.iter_mut() {
            prev = stream.next_normal() * (floor + alpha * prev * prev).sqrt();
            *v = prev;
        }
    }

    fn variance(&self) -> f64 {
        self.params.sigma2
    }
}

/// Simulates `n` values of stationary ARCH(1) noise.
pub fn simulate_arch(params: ArchParams, n: usize, seed: u64) -> Result<NoisePath> {
    params.validate()?;
    if n == 0 {
        return Err(invalid("path length must be positive"));
    }
    let mut values = vec![0.0; n];
    ArchNoise { params }.fill(seed, &mut values);
    Ok(NoisePath {
        values,
        seed,
        params,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean(v: &[f64]) -> f64 {
        v.iter().sum::<f64>() / v.len() as f64
    }

    fn autocorr(v: &[f64], lag: usize) -> f64 {
        let m = mean(v);
        let var: f64 = v.iter().map(|x| (x - m).powi(2)).sum();
        let cov: f64 = v.windows(lag + 1).map(|w| (w[0] - m) * (w[lag] - m)).sum();
        cov / var
    }

    #[test]
    fn thresholds() {
        assert_eq!(moment_threshold(1).unwrap(), 1.0);
        assert!((moment_threshold(2).unwrap() - (1.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert!((moment_threshold(8).unwrap() - 0.162796).abs() < 1e-5);
        assert!(moment_threshold(0).is_err());
        assert!(moment_threshold(33).is_err());
        assert!(moment_threshold(32).unwrap().is_finite());
    }

    #[test]
    fn threshold_agrees_with_has_moment() {
        for r in 1..=10 {
            let t = moment_threshold(r).unwrap();
            assert!(ArchParams::new(t * 0.999, 1.0).unwrap().has_moment(r));
            if t * 1.001 < 1.0 {
                assert!(!ArchParams::new(t * 1.001, 1.0).unwrap().has_moment(r));
            }
        }
    }

    #[test]
    fn fourth_moment_closed_form() {
        let g = arch_fourth_moment(&ArchParams::new(0.0, 1.0).unwrap()).unwrap();
        assert!((g - 3.0).abs() < 1e-15);
        let v = arch_fourth_moment(&ArchParams::new(0.162, 0.1024).unwrap()).unwrap();
        assert!((v - 0.033250).abs() < 1e-6);
        assert!(matches!(
            arch_fourth_moment(&ArchParams::new(0.6, 2.0).unwrap()),
            Err(Error::MomentDoesNotExist { order: 4, .. })
        ));
    }

    #[test]
    fn fourth_moment_matches_simulation() {
        let p = ArchParams::new(0.162, 0.1024).unwrap();
        let path = simulate_arch(p, 2_000_000, 5).unwrap();
        let m4 = path.values.iter().map(|e| e.powi(4)).sum::<f64>() / path.values.len() as f64;
        let exact = arch_fourth_moment(&p).unwrap();
        assert!(((m4 - exact) / exact).abs() < 0.03, "{m4} vs {exact}");
    }

    #[test]
    fn params_validation() {
        assert!(ArchParams::new(1.0, 1.0).is_err());
        assert!(ArchParams::new(-0.1, 1.0).is_err());
        assert!(ArchParams::new(0.5, 0.0).is_err());
        assert!(simulate_arch(ArchParams { alpha: 0.5, sigma2: 1.0 }, 0, 1).is_err());
    }

    #[test]
    fn alpha_zero_is_scaled_gaussian() {
        let p = ArchParams::new(0.0, 4.0).unwrap();
        let path = simulate_arch(p, 200_000, 9).unwrap();
        let v = path.values.iter().map(|e| e * e).sum::<f64>() / 200_000.0;
        assert!((v - 4.0).abs() < 0.05);
        let k = path.values.iter().map(|e| e.powi(4)).sum::<f64>() / 200_000.0 / 16.0;
        assert!((k - 3.0).abs() < 0.1);
    }

    #[test]
    fn stationary_variance() {
        let p = ArchParams::new(0.162, 0.1024).unwrap();
        let path = simulate_arch(p, 1_000_000, 2024).unwrap();
        let v = path.values.iter().map(|e| e * e).sum::<f64>() / 1e6;
        assert!(((v - 0.1024) / 0.1024).abs() < 0.01, "{v}");
    }

    #[test]
    fn squares_follow_ar1() {
        let p = ArchParams::new(0.3, 1.0).unwrap();
        let path = simulate_arch(p, 1_000_000, 77).unwrap();
        let sq: Vec<f64> = path.values.iter().map(|e| e * e).collect();
        let rho = autocorr(&sq, 1);
        assert!((rho - 0.3).abs() < 0.02, "{rho}");
    }

    #[test]
    fn mds_has_no_linear_autocorrelation() {
        let p = ArchParams::new(0.3, 1.0).unwrap();
        let n = 1_000_000;
        let path = simulate_arch(p, n, 31).unwrap();
        let bound = 4.0 / (n as f64).sqrt();
        for lag in 1..=5 {
            let rho = autocorr(&path.values, lag);
            assert!(rho.abs() < bound, "lag {lag}: {rho}");
        }
    }

    #[test]
    fn reproducible_and_scale_equivariant() {
        let p = ArchParams::new(0.577, 0.1024).unwrap();
        let a = simulate_arch(p, 5000, 123).unwrap();
        let b = simulate_arch(p, 5000, 123).unwrap();
        assert_eq!(a, b);
        let scaled = simulate_arch(ArchParams::new(0.577, 4.0 * 0.1024).unwrap(), 5000, 123).unwrap();
        for (x, y) in a.values.iter().zip(&scaled.values) {
            assert!((2.0 * x - y).abs() <= 1e-12 * y.abs().max(1e-300));
        }
    }

    #[test]
    fn csv_layout() {
        let path = simulate_arch(ArchParams::new(0.1, 1.0).unwrap(), 3, 1).unwrap();
        let mut buf = Vec::new();
        path.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "index,value");
        assert_eq!(lines.len(), 4);
        let v: f64 = lines[1].split(',').nth(1).unwrap().parse().unwrap();
        assert_eq!(v, path.values[0]);
    }
}
