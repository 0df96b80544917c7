//! The Priestley-Chao estimator on the design `x_i = i/n`.
//!
//! `r̂(x_i) = Σ_j (1/(nh)) K((x_i - x_j)/h) Y_j`. Weights depend on `i - j`
//! only, so the smoothing matrix `L` is a (truncated) Toeplitz matrix and in
//! the periodic case a circulant one. Weights are used as is; they are not
//! renormalized to sum to one.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{invalid, Error, Result};
use crate::kernels::Kernel;
use crate::trend::{make_design, Weight};

/// Forward and inverse FFTs of one length, shareable across plans.
pub struct FftEngine {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for FftEngine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FftEngine").field("n", &self.n).finish()
    }
}

impl FftEngine {
    pub fn new(n: usize) -> Arc<Self> {
        let mut planner = FftPlanner::new();
        Arc::new(FftEngine {
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Unnormalized DFT of a real vector.
    pub fn forward_real(&self, y: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = y.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward.process(&mut buf);
        buf
    }

    /// Inverse DFT, scaled by `1/n`, keeping the real part.
    pub fn inverse_real(&self, mut spectrum: Vec<Complex64>) -> Vec<f64> {
        self.inverse.process(&mut spectrum);
        let scale = 1.0 / self.n as f64;
        spectrum.into_iter().map(|c| c.re * scale).collect()
    }
}

/// Everything needed to apply `L` for one bandwidth.
#[derive(Clone, Debug)]
pub struct SmootherPlan {
    n: usize,
    h: f64,
    periodic: bool,
    k_zero: f64,
    /// `w[k]` is the weight at index lag `k` (circular lag when periodic).
    weights: Vec<f64>,
    /// Largest lag with a nonzero weight.
    reach: usize,
    spectrum: Option<Vec<f64>>,
    engine: Option<Arc<FftEngine>>,
}

impl SmootherPlan {
    pub fn new(n: usize, h: f64, kernel: &Kernel, periodic: bool) -> Result<Self> {
        let engine = periodic.then(|| FftEngine::new(n));
        Self::build(n, h, kernel, periodic, engine)
    }

    /// Periodic plan reusing an existing FFT engine of length `n`.
    pub fn periodic_with_engine(h: f64, kernel: &Kernel, engine: Arc<FftEngine>) -> Result<Self> {
        Self::build(engine.len(), h, kernel, true, Some(engine))
    }

    fn build(
        n: usize,
        h: f64,
        kernel: &Kernel,
        periodic: bool,
        engine: Option<Arc<FftEngine>>,
    ) -> Result<Self> {
        if n < 4 {
            return Err(invalid(format!("smoother needs n >= 4, got {n}")));
        }
        if !(h.is_finite() && h > 0.0 && h < 0.5) {
            return Err(invalid(format!("bandwidth must lie in (0, 0.5), got {h}")));
        }
        if periodic && h * kernel.half_width() >= 0.5 {
            return Err(invalid(format!(
                "bandwidth {h} wraps the periodic support (h * half_width must be < 0.5)"
            )));
        }
        let nf = n as f64;
        let scale = 1.0 / (nf * h);
        let weights: Vec<f64> = (0..n)
            .map(|k| {
                let lag = if periodic { k.min(n - k) } else { k };
                scale * kernel.eval(lag as f64 / nf / h)
            })
            .collect();
        let limit = if periodic { n / 2 } else { n - 1 };
        let reach = (0..=limit).rev().find(|&k| weights[k] != 0.0).unwrap_or(0);
        let spectrum = match (&engine, periodic) {
            (Some(e), true) => {
                if e.len() != n {
                    return Err(Error::LengthMismatch {
                        expected: n,
                        found: e.len(),
                    });
                }
                Some(e.forward_real(&weights).into_iter().map(|c| c.re).collect())
            }
            _ => None,
        };
        Ok(SmootherPlan {
            n,
            h,
            periodic,
            k_zero: kernel.moments().k_zero,
            weights,
            reach,
            spectrum,
            engine,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn is_periodic(&self) -> bool {
        self.periodic
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn reach(&self) -> usize {
        self.reach
    }

    /// Real DFT of the weight vector (periodic plans only).
    pub fn spectrum(&self) -> Option<&[f64]> {
        self.spectrum.as_deref()
    }

    pub fn engine(&self) -> Option<&Arc<FftEngine>> {
        self.engine.as_ref()
    }

    fn check_len(&self, y: &[f64]) -> Result<()> {
        if y.len() != self.n {
            return Err(Error::LengthMismatch {
                expected: self.n,
                found: y.len(),
            });
        }
        Ok(())
    }

    /// `L y` by direct summation over the nonzero weights.
    pub fn smooth_direct(&self, y: &[f64]) -> Result<Vec<f64>> {
        self.check_len(y)?;
        let n = self.n;
        let w = &self.weights;
        let reach = self.reach;
        let out = if self.periodic {
            (0..n)
                .map(|i| {
                    let mut acc = w[0] * y[i];
                    for k in 1..=reach {
                        acc += w[k] * (y[(i + k) % n] + y[(i + n - k) % n]);
                    }
                    acc
                })
                .collect()
        } else {
            (0..n)
                .map(|i| {
                    let lo = i.saturating_sub(reach);
                    let hi = (i + reach).min(n - 1);
                    (lo..=hi).map(|j| w[i.abs_diff(j)] * y[j]).sum()
                })
                .collect()
        };
        Ok(out)
    }

    /// `L y` as a circular convolution in the frequency domain.
    pub fn smooth_fft(&self, y: &[f64]) -> Result<Vec<f64>> {
        self.check_len(y)?;
        let engine = self.periodic_engine()?;
        let spectrum = engine.forward_real(y);
        self.smooth_spectrum(&spectrum)
    }

    /// `L y` given the (unnormalized) DFT of `y`; lets callers transform
    /// `y` once and smooth it at many bandwidths.
    pub fn smooth_spectrum(&self, y_spectrum: &[Complex64]) -> Result<Vec<f64>> {
        let engine = self.periodic_engine()?;
        let w = self.spectrum.as_ref().expect("periodic plans carry a spectrum");
        if y_spectrum.len() != self.n {
            return Err(Error::LengthMismatch {
                expected: self.n,
                found: y_spectrum.len(),
            });
        }
        let product: Vec<Complex64> = y_spectrum.iter().zip(w).map(|(c, &s)| c * s).collect();
        Ok(engine.inverse_real(product))
    }

    /// Periodic plans use the FFT, others direct summation.
    pub fn smooth(&self, y: &[f64]) -> Result<Vec<f64>> {
        if self.periodic {
            self.smooth_fft(y)
        } else {
            self.smooth_direct(y)
        }
    }

    fn periodic_engine(&self) -> Result<&Arc<FftEngine>> {
        match (&self.engine, self.periodic) {
            (Some(e), true) => Ok(e),
            _ => Err(invalid("FFT smoothing requires a periodic plan")),
        }
    }

    /// `(L Lᵗ)_{ii} = Σ_j L_{ij}²` for every row.
    pub fn row_sq_norms(&self) -> Vec<f64> {
        let n = self.n;
        let w = &self.weights;
        if self.periodic {
            let total = w[0] * w[0] + 2.0 * w[1..=self.reach].iter().map(|v| v * v).sum::<f64>();
            vec![total; n]
        } else {
            (0..n)
                .map(|i| {
                    let lo = i.saturating_sub(self.reach);
                    let hi = (i + self.reach).min(n - 1);
                    (lo..=hi).map(|j| w[i.abs_diff(j)].powi(2)).sum()
                })
                .collect()
        }
    }
}

/// `tr(U L) = Σ_i u(x_i) K(0)/(nh)`.
pub fn trace_ul(plan: &SmootherPlan, weight: &Weight) -> Result<f64> {
    let design = make_design(plan.n)?;
    let mass: f64 = weight.values(&design).iter().sum();
    Ok(mass * plan.k_zero / (plan.n as f64 * plan.h))
}

/// `tr(U L Lᵗ) = Σ_i u(x_i) (L Lᵗ)_{ii}`.
pub fn trace_ullt(plan: &SmootherPlan, weight: &Weight) -> Result<f64> {
    let design = make_design(plan.n)?;
    Ok(weight
        .values(&design)
        .iter()
        .zip(plan.row_sq_norms())
        .map(|(u, r)| u * r)
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::NormalStream;
    use crate::trend::Trend;

    /// Dense O(n²) hat matrix built straight from the estimator's definition.
    fn hat_matrix(n: usize, h: f64, k: &Kernel, periodic: bool) -> Vec<Vec<f64>> {
        let nf = n as f64;
        (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        let xi = (i + 1) as f64 / nf;
                        let xj = (j + 1) as f64 / nf;
                        let mut d = (xi - xj).abs();
                        if periodic {
                            d = d.min(1.0 - d);
                        }
                        k.eval(d / h) / (nf * h)
                    })
                    .collect()
            })
            .collect()
    }

    fn matvec(m: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
        m.iter().map(|row| row.iter().zip(y).map(|(a, b)| a * b).sum()).collect()
    }

    fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    fn normals(n: usize, seed: u64) -> Vec<f64> {
        let mut v = vec![0.0; n];
        NormalStream::new(seed).fill(&mut v);
        v
    }

    #[test]
    fn direct_matches_dense_hat_matrix() {
        let k = Kernel::biweight();
        for periodic in [true, false] {
            let plan = SmootherPlan::new(8, 0.25, &k, periodic).unwrap();
            let mut y = vec![0.0; 8];
            y[3] = 1.0;
            let dense = matvec(&hat_matrix(8, 0.25, &k, periodic), &y);
            let direct = plan.smooth_direct(&y).unwrap();
            assert!(max_abs_diff(&dense, &direct) < 1e-15);

            let y = normals(37, 4);
            let plan = SmootherPlan::new(37, 0.3, &k, periodic).unwrap();
            let dense = matvec(&hat_matrix(37, 0.3, &k, periodic), &y);
            assert!(max_abs_diff(&dense, &plan.smooth_direct(&y).unwrap()) < 1e-13);
        }
    }

    #[test]
    fn impulse_response_is_rotated_weights() {
        let k = Kernel::biweight();
        let n = 64;
        let plan = SmootherPlan::new(n, 0.2, &k, true).unwrap();
        let mut y = vec![0.0; n];
        y[1] = 1.0;
        let out = plan.smooth_direct(&y).unwrap();
        for (i, v) in out.iter().enumerate() {
            assert_eq!(*v, plan.weights()[(i + n - 1) % n]);
        }
    }

    #[test]
    fn constant_input() {
        let k = Kernel::biweight();
        let plan = SmootherPlan::new(128, 0.1, &k, true).unwrap();
        let total: f64 = plan.weights().iter().sum();
        assert!((total - 1.0).abs() < 1e-3);
        let out = plan.smooth_fft(&vec![1.0; 128]).unwrap();
        for v in out {
            assert!((v - total).abs() < 1e-13);
        }
    }

    #[test]
    fn fft_matches_direct_at_4096() {
        let k = Kernel::biweight();
        let plan = SmootherPlan::new(4096, 0.1, &k, true).unwrap();
        let y = normals(4096, 8);
        let d = plan.smooth_direct(&y).unwrap();
        let f = plan.smooth_fft(&y).unwrap();
        assert!(max_abs_diff(&d, &f) < 1e-10);
        assert!(plan.smooth_fft(&vec![0.0; 4096]).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn smoothing_the_weights_gives_a_symmetric_autocorrelation() {
        let k = Kernel::biweight();
        let n = 256;
        let plan = SmootherPlan::new(n, 0.15, &k, true).unwrap();
        let out = plan.smooth_fft(plan.weights()).unwrap();
        for i in 1..n {
            assert!((out[i] - out[n - i]).abs() < 1e-14);
        }
    }

    #[test]
    fn fft_rejects_non_periodic() {
        let k = Kernel::biweight();
        let plan = SmootherPlan::new(64, 0.1, &k, false).unwrap();
        assert!(plan.smooth_fft(&vec![0.0; 64]).is_err());
        assert!(plan.smooth_direct(&vec![0.0; 63]).is_err());
    }

    #[test]
    fn plan_validation() {
        let k = Kernel::biweight();
        assert!(SmootherPlan::new(64, 0.0, &k, true).is_err());
        assert!(SmootherPlan::new(64, 0.5, &k, true).is_err());
        assert!(SmootherPlan::new(64, f64::NAN, &k, false).is_err());
        let plan = SmootherPlan::new(64, 0.49, &k, true).unwrap();
        let w = plan.weights();
        for i in 1..64 {
            assert_eq!(w[i], w[64 - i]);
        }
    }

    #[test]
    fn traces() {
        let k = Kernel::biweight();
        let u = Weight::uniform();
        for n in [64, 512] {
            let plan = SmootherPlan::new(n, 0.1, &k, true).unwrap();
            assert!((trace_ul(&plan, &u).unwrap() - 18.75).abs() < 1e-12);
        }
        let plan = SmootherPlan::new(512, 0.25, &k, true).unwrap();
        assert!((trace_ul(&plan, &u).unwrap() - 7.5).abs() < 1e-12);

        let plan = SmootherPlan::new(512, 0.12, &k, true).unwrap();
        let direct: f64 = 512.0 * plan.weights().iter().map(|w| w * w).sum::<f64>();
        let t = trace_ullt(&plan, &u).unwrap();
        assert!((t - direct).abs() < 1e-10);
        let limit = (10.0 / 7.0) / 0.12;
        assert!(((t - limit) / limit).abs() < 0.02, "{t} vs {limit}");
    }

    #[test]
    fn traces_vanish_with_zero_weight_outside_bump() {
        // a bump weight restricted to a band; non-periodic plan
        let k = Kernel::biweight();
        let plan = SmootherPlan::new(200, 0.1, &k, false).unwrap();
        let b = Weight::bump(0.1).unwrap();
        let dense = hat_matrix(200, 0.1, &k, false);
        let design = make_design(200).unwrap();
        let u = b.values(&design);
        let expected: f64 = (0..200)
            .map(|i| u[i] * dense[i].iter().map(|v| v * v).sum::<f64>())
            .sum();
        assert!((trace_ullt(&plan, &b).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn bias_matches_second_order_expansion() {
        let k = Kernel::biweight();
        let t = Trend::benchmark();
        let n = 4096;
        let h = 0.05;
        let plan = SmootherPlan::new(n, h, &k, true).unwrap();
        let design = make_design(n).unwrap();
        let r = t.values(&design);
        let lr = plan.smooth_fft(&r).unwrap();
        let mu2 = k.moments().second_moment;
        let max_r2 = design.points().iter().map(|&x| t.r2(x).abs()).fold(0.0, f64::max);
        let tol = 0.25 * h * h * max_r2 * mu2;
        for (i, &x) in design.points().iter().enumerate() {
            let predicted = 0.5 * h * h * t.r2(x) * mu2;
            assert!((lr[i] - r[i] - predicted).abs() < tol, "at {x}");
        }
    }

    #[test]
    fn shift_equivariance() {
        let k = Kernel::biweight();
        let n = 128;
        let plan = SmootherPlan::new(n, 0.2, &k, true).unwrap();
        let y = normals(n, 21);
        let out = plan.smooth_fft(&y).unwrap();
        let shifted: Vec<f64> = (0..n).map(|i| y[(i + n - 5) % n]).collect();
        let out_shifted = plan.smooth_fft(&shifted).unwrap();
        for i in 0..n {
            assert!((out_shifted[i] - out[(i + n - 5) % n]).abs() < 1e-13);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]

            #[test]
            fn linearity(seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0, h in 0.02f64..0.45) {
                let k = Kernel::biweight();
                let n = 96;
                let plan = SmootherPlan::new(n, h, &k, true).unwrap();
                let y1 = normals(n, seed);
                let y2 = normals(n, seed ^ 0xabcd);
                let combo: Vec<f64> = y1.iter().zip(&y2).map(|(p, q)| a * p + b * q).collect();
                let lhs = plan.smooth_fft(&combo).unwrap();
                let s1 = plan.smooth_fft(&y1).unwrap();
                let s2 = plan.smooth_fft(&y2).unwrap();
                for i in 0..n {
                    prop_assert!((lhs[i] - (a * s1[i] + b * s2[i])).abs() < 1e-12);
                }
            }

            #[test]
            fn fft_equals_direct(seed in any::<u64>(), log_n in 6u32..11, h in 0.01f64..0.49) {
                let k = Kernel::biweight();
                let n = 1usize << log_n;
                let plan = SmootherPlan::new(n, h, &k, true).unwrap();
                let y = normals(n, seed);
                let d = plan.smooth_direct(&y).unwrap();
                let f = plan.smooth_fft(&y).unwrap();
                prop_assert!(max_abs_diff(&d, &f) < 1e-10);
            }
        }
    }
}
