//! Compactly supported even kernels and the moments the bandwidth theory uses.
//!
//! A [`Kernel`] is described by its radial profile `p` on `[0, half_width]`
//! so that `K(x) = p(|x|)` is even by construction, bit for bit. The derived
//! function `G(x) = -x K'(x)` enters the second-order behaviour of the
//! Mallows criterion, and `K - G` is (up to a factor `-1/(n h^2)`) the
//! derivative of a smoothing weight with respect to the bandwidth.

use std::fmt;

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::quadrature;

/// Scalar moments of a kernel, all integrated over its declared support.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct KernelMoments {
    /// `∫ t² K(t) dt`.
    pub second_moment: f64,
    /// `∫ K²`.
    pub k_sq: f64,
    /// `∫ (K - G)²`.
    pub kg_sq: f64,
    /// `K(0)`.
    pub k_zero: f64,
}

/// A compactly supported, even, C¹ kernel.
#[derive(Clone)]
pub struct Kernel {
    name: String,
    half_width: f64,
    profile: fn(f64) -> f64,
    profile_deriv: fn(f64) -> f64,
    moments: KernelMoments,
}

impl fmt::Debug for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Kernel")
            .field("name", &self.name)
            .field("half_width", &self.half_width)
            .field("moments", &self.moments)
            .finish()
    }
}

/// Names accepted by [`Kernel::by_name`].
pub const KERNEL_NAMES: &[&str] = &["biweight", "triweight"];

fn biweight(t: f64) -> f64 {
    let s = 1.0 - 4.0 * t * t;
    1.875 * s * s
}

fn biweight_deriv(t: f64) -> f64 {
    // d/dt (15/8)(1-4t²)² = -30 t (1-4t²)
    -30.0 * t * (1.0 - 4.0 * t * t)
}

fn triweight(t: f64) -> f64 {
    let s = 1.0 - 4.0 * t * t;
    2.1875 * s * s * s
}

fn triweight_deriv(t: f64) -> f64 {
    let s = 1.0 - 4.0 * t * t;
    -52.5 * t * s * s
}

impl Kernel {
    /// Builds a kernel from its profile on `[0, half_width]` and the
    /// profile's derivative, computing and caching its moments.
    pub fn new(
        name: impl Into<String>,
        half_width: f64,
        profile: fn(f64) -> f64,
        profile_deriv: fn(f64) -> f64,
    ) -> Result<Self> {
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(invalid(format!("kernel half_width must be positive, got {half_width}")));
        }
        let mut kernel = Kernel {
            name: name.into(),
            half_width,
            profile,
            profile_deriv,
            moments: KernelMoments {
                second_moment: 0.0,
                k_sq: 0.0,
                kg_sq: 0.0,
                k_zero: 0.0,
            },
        };
        kernel.moments = kernel.compute_moments()?;
        Ok(kernel)
    }

    /// `(15/8)(1 - 4x²)²` on `[-1/2, 1/2]`.
    pub fn biweight() -> Self {
        Self::new("biweight", 0.5, biweight, biweight_deriv).expect("biweight moments are finite")
    }

    /// `(35/16)(1 - 4x²)³` on `[-1/2, 1/2]`.
    pub fn triweight() -> Self {
        Self::new("triweight", 0.5, triweight, triweight_deriv)
            .expect("triweight moments are finite")
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "biweight" => Ok(Self::biweight()),
            "triweight" => Ok(Self::triweight()),
            other => Err(invalid(format!(
                "unknown kernel '{other}' (expected one of {})",
                KERNEL_NAMES.join(", ")
            ))),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn moments(&self) -> &KernelMoments {
        &self.moments
    }

    /// `K(x)`; zero outside the support.
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        let t = x.abs();
        if t > self.half_width {
            0.0
        } else {
            (self.profile)(t)
        }
    }

    /// `K'(x)`, with one-sided limits at the support edges and zero outside.
    #[inline]
    pub fn derivative(&self, x: f64) -> f64 {
        let t = x.abs();
        if t > self.half_width {
            0.0
        } else if x < 0.0 {
            -(self.profile_deriv)(t)
        } else {
            (self.profile_deriv)(t)
        }
    }

    /// `G(x) = -x K'(x)`.
    #[inline]
    pub fn eval_g(&self, x: f64) -> f64 {
        let t = x.abs();
        if t > self.half_width {
            0.0
        } else {
            -t * (self.profile_deriv)(t)
        }
    }

    /// `(K - G)(x)`.
    #[inline]
    pub fn eval_k_minus_g(&self, x: f64) -> f64 {
        self.eval(x) - self.eval_g(x)
    }

    fn compute_moments(&self) -> Result<KernelMoments> {
        let (lo, hi) = (-self.half_width, self.half_width);
        let second_moment = quadrature::integrate(|t| t * t * self.eval(t), lo, hi)?;
        let k_sq = quadrature::integrate(|t| self.eval(t).powi(2), lo, hi)?;
        let kg_sq = quadrature::integrate(|t| self.eval_k_minus_g(t).powi(2), lo, hi)?;
        let k_zero = self.eval(0.0);
        for (label, v) in [
            ("second_moment", second_moment),
            ("k_sq", k_sq),
            ("kg_sq", kg_sq),
            ("k_zero", k_zero),
        ] {
            if !v.is_finite() {
                return Err(Error::Quadrature(format!("{label} is not finite")));
            }
        }
        if k_sq <= 0.0 || kg_sq <= 0.0 {
            return Err(Error::Degenerate(format!("kernel '{}' has zero L2 norm", self.name)));
        }
        Ok(KernelMoments {
            second_moment,
            k_sq,
            kg_sq,
            k_zero,
        })
    }
}

/// Moments of a kernel; the kernel caches them at construction.
pub fn kernel_moments(kernel: &Kernel) -> KernelMoments {
    kernel.moments
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::NormalStream;

    fn central_diff(f: impl Fn(f64) -> f64, x: f64, step: f64) -> f64 {
        (f(x + step) - f(x - step)) / (2.0 * step)
    }

    #[test]
    fn biweight_values() {
        let k = Kernel::biweight();
        assert_eq!(k.eval(0.0), 1.875);
        assert_eq!(k.eval(0.5), 0.0);
        assert_eq!(k.eval(-0.5), 0.0);
        assert_eq!(k.eval(0.25), 1.0546875);
        assert_eq!(k.eval(0.75), 0.0);
    }

    #[test]
    fn biweight_g_values() {
        let k = Kernel::biweight();
        assert_eq!(k.eval_g(0.0), 0.0);
        assert_eq!(k.eval_g(0.5), 0.0);
        assert!((k.eval_g(0.25) - 1.40625).abs() < 1e-15);
        // finite-difference oracle for G
        let fd = -0.25 * central_diff(|x| k.eval(x), 0.25, 1e-6);
        assert!((fd - 1.40625).abs() < 1e-8);
        // closed form 30x²(1-4x²)
        for &x in &[-0.4, -0.1, 0.05, 0.3, 0.49] {
            let closed = 30.0 * x * x * (1.0 - 4.0 * x * x);
            assert!((k.eval_g(x) - closed).abs() < 1e-13);
        }
    }

    #[test]
    fn derivative_matches_finite_difference() {
        for k in [Kernel::biweight(), Kernel::triweight()] {
            let h = k.half_width();
            for i in 1..200 {
                let x = -h + 2.0 * h * i as f64 / 200.0;
                if (x.abs() - h).abs() < 1e-3 {
                    continue;
                }
                let fd = central_diff(|t| k.eval(t), x, 1e-6);
                let an = k.derivative(x);
                let scale = an.abs().max(1e-3);
                assert!(((fd - an) / scale).abs() < 1e-6, "{} at {x}: {fd} vs {an}", k.name());
            }
            assert_eq!(k.derivative(0.0), 0.0);
            assert_eq!(k.derivative(2.0 * h), 0.0);
        }
    }

    #[test]
    fn evenness_is_exact() {
        let k = Kernel::biweight();
        let mut s = NormalStream::new(11);
        for _ in 0..1000 {
            let x = (s.next_normal() * 0.2).clamp(-0.5, 0.5);
            assert_eq!(k.eval(x), k.eval(-x));
            assert_eq!(k.eval_g(x), k.eval_g(-x));
        }
    }

    #[test]
    fn biweight_moments_match_exact_fractions() {
        let m = Kernel::biweight().moments;
        assert!((m.second_moment - 1.0 / 28.0).abs() < 1e-8);
        assert!((m.k_sq - 10.0 / 7.0).abs() < 1e-8);
        assert!((m.kg_sq - 10.0 / 7.0).abs() < 1e-8);
        assert_eq!(m.k_zero, 1.875);
    }

    #[test]
    fn triweight_moments_match_exact_fractions() {
        let m = Kernel::triweight().moments;
        assert!((m.second_moment - 1.0 / 36.0).abs() < 1e-8);
        assert!((m.k_sq - 700.0 / 429.0).abs() < 1e-8);
        assert!((m.kg_sq - 210.0 / 143.0).abs() < 1e-8);
    }

    #[test]
    fn integration_by_parts_identity() {
        let k = Kernel::biweight();
        let kg = quadrature::integrate(|t| k.eval(t) * k.eval_g(t), -0.5, 0.5).unwrap();
        assert!((kg - 0.5 * k.moments.k_sq).abs() < 1e-8);
    }

    #[test]
    fn unknown_name_is_rejected() {
        assert!(Kernel::by_name("gaussian").is_err());
        assert_eq!(Kernel::by_name("biweight").unwrap().name(), "biweight");
    }
}
