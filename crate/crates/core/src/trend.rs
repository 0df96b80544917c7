//! Fixed equispaced design `x_i = i/n`, trend functions with analytic
//! derivatives, and the weight function `u` used by every criterion.

use std::fmt;
use std::sync::Arc;

use crate::error::{invalid, Error, Result};
use crate::quadrature;

type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// The design points `i/n`, `i = 1..=n`.
#[derive(Clone, Debug, PartialEq)]
pub struct Design {
    n: usize,
    points: Vec<f64>,
}

impl Design {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }
}

pub fn make_design(n: usize) -> Result<Design> {
    if n < 4 {
        return Err(invalid(format!("design needs n >= 4, got {n}")));
    }
    let nf = n as f64;
    let points = (1..=n).map(|i| i as f64 / nf).collect();
    Ok(Design { n, points })
}

/// Names accepted by [`Trend::by_name`].
pub const TREND_NAMES: &[&str] = &["benchmark", "zero", "linear"];

/// A regression function with its first and second derivatives.
#[derive(Clone)]
pub struct Trend {
    name: String,
    r: RealFn,
    r1: RealFn,
    r2: RealFn,
    periodic: bool,
}

impl fmt::Debug for Trend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Trend")
            .field("name", &self.name)
            .field("periodic", &self.periodic)
            .finish()
    }
}

impl Trend {
    /// `r(x) = (4x(1-x))³`, smoothly 1-periodic.
    pub fn benchmark() -> Self {
        Trend {
            name: "benchmark".into(),
            r: Arc::new(|x| {
                let q = 4.0 * x * (1.0 - x);
                q * q * q
            }),
            // 192 x²(1-x)²(1-2x)
            r1: Arc::new(|x| {
                let p = x * (1.0 - x);
                192.0 * p * p * (1.0 - 2.0 * x)
            }),
            r2: Arc::new(|x| 384.0 * x - 2304.0 * x * x + 3840.0 * x.powi(3) - 1920.0 * x.powi(4)),
            periodic: true,
        }
    }

    pub fn zero() -> Self {
        Trend {
            name: "zero".into(),
            r: Arc::new(|_| 0.0),
            r1: Arc::new(|_| 0.0),
            r2: Arc::new(|_| 0.0),
            periodic: true,
        }
    }

    /// `r(x) = x`; not periodic.
    pub fn linear() -> Self {
        Trend {
            name: "linear".into(),
            r: Arc::new(|x| x),
            r1: Arc::new(|_| 1.0),
            r2: Arc::new(|_| 0.0),
            periodic: false,
        }
    }

    /// A user-supplied trend. Missing derivatives are replaced by central
    /// finite differences (step `1e-4` for `r''`), which costs roughly
    /// eight significant digits in `r''`.
    pub fn custom<F>(
        name: impl Into<String>,
        r: F,
        r1: Option<RealFn>,
        r2: Option<RealFn>,
        periodic: bool,
    ) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        let r: RealFn = Arc::new(r);
        let r1 = r1.unwrap_or_else(|| {
            let r = r.clone();
            Arc::new(move |x| (r(x + 1e-6) - r(x - 1e-6)) / 2e-6)
        });
        let r2 = r2.unwrap_or_else(|| {
            let r = r.clone();
            Arc::new(move |x| (r(x + 1e-4) - 2.0 * r(x) + r(x - 1e-4)) / 1e-8)
        });
        Trend {
            name: name.into(),
            r,
            r1,
            r2,
            periodic,
        }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "benchmark" => Ok(Self::benchmark()),
            "zero" => Ok(Self::zero()),
            "linear" => Ok(Self::linear()),
            other => Err(invalid(format!(
                "unknown trend '{other}' (expected one of {})",
                TREND_NAMES.join(", ")
            ))),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn is_periodic(&self) -> bool {
        self.periodic
    }

    #[inline]
    pub fn r(&self, x: f64) -> f64 {
        (self.r)(x)
    }

    #[inline]
    pub fn r1(&self, x: f64) -> f64 {
        (self.r1)(x)
    }

    #[inline]
    pub fn r2(&self, x: f64) -> f64 {
        (self.r2)(x)
    }

    /// `r` sampled on a design.
    pub fn values(&self, design: &Design) -> Vec<f64> {
        design.points().iter().map(|&x| self.r(x)).collect()
    }
}

/// Names accepted by [`Weight::by_name`].
pub const WEIGHT_NAMES: &[&str] = &["uniform", "bump"];

/// Margin of the default bump weight's support `[ε, 1-ε]`.
pub const BUMP_MARGIN: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq)]
enum WeightShape {
    Uniform,
    /// `30 ((x-ε)(1-ε-x))² / (1-2ε)⁵` on `[ε, 1-ε]`, unit mass.
    Bump { margin: f64 },
}

/// The nonnegative weight function `u` on `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Weight {
    shape: WeightShape,
}

impl Weight {
    /// `u ≡ 1`.
    pub fn uniform() -> Self {
        Weight {
            shape: WeightShape::Uniform,
        }
    }

    /// C¹ bump supported on `[margin, 1 - margin]`, normalized to unit mass.
    pub fn bump(margin: f64) -> Result<Self> {
        if !(margin > 0.0 && margin < 0.5) {
            return Err(invalid(format!("bump margin must lie in (0, 0.5), got {margin}")));
        }
        Ok(Weight {
            shape: WeightShape::Bump { margin },
        })
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "uniform" => Ok(Self::uniform()),
            "bump" => Self::bump(BUMP_MARGIN),
            other => Err(invalid(format!(
                "unknown weight '{other}' (expected one of {})",
                WEIGHT_NAMES.join(", ")
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self.shape {
            WeightShape::Uniform => "uniform",
            WeightShape::Bump { .. } => "bump",
        }
    }

    pub fn is_uniform(&self) -> bool {
        matches!(self.shape, WeightShape::Uniform)
    }

    /// `[lo, hi]` outside of which `u` vanishes.
    pub fn support(&self) -> (f64, f64) {
        match self.shape {
            WeightShape::Uniform => (0.0, 1.0),
            WeightShape::Bump { margin } => (margin, 1.0 - margin),
        }
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match self.shape {
            WeightShape::Uniform => {
                if (0.0..=1.0).contains(&x) {
                    1.0
                } else {
                    0.0
                }
            }
            WeightShape::Bump { margin } => {
                if x <= margin || x >= 1.0 - margin {
                    return 0.0;
                }
                let len = 1.0 - 2.0 * margin;
                let q = (x - margin) * (1.0 - margin - x);
                30.0 * q * q / len.powi(5)
            }
        }
    }

    /// `u` sampled on a design.
    pub fn values(&self, design: &Design) -> Vec<f64> {
        design.points().iter().map(|&x| self.eval(x)).collect()
    }

    /// `∫₀¹ u`.
    pub fn integral(&self) -> Result<f64> {
        let (lo, hi) = self.support();
        quadrature::integrate(|x| self.eval(x), lo, hi)
    }

    /// `∫₀¹ u²`.
    pub fn sq_integral(&self) -> Result<f64> {
        let (lo, hi) = self.support();
        quadrature::integrate(|x| self.eval(x).powi(2), lo, hi)
    }
}

/// `∫₀¹ u r''²`, or `∫₀¹ u² r''²` when `squared_weight` is set.
pub fn curvature_integral(trend: &Trend, weight: &Weight, squared_weight: bool) -> Result<f64> {
    let (lo, hi) = weight.support();
    let value = quadrature::integrate(
        |x| {
            let u = weight.eval(x);
            let u = if squared_weight { u * u } else { u };
            u * trend.r2(x).powi(2)
        },
        lo,
        hi,
    )
    .map_err(|e| match e {
        Error::Quadrature(msg) => Error::Quadrature(format!("curvature of '{}': {msg}", trend.name())),
        other => other,
    })?;
    Ok(value)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn design_points() {
        let d = make_design(4).unwrap();
        assert_eq!(d.points(), &[0.25, 0.5, 0.75, 1.0]);
        assert!(make_design(2).is_err());
        let d = make_design(512).unwrap();
        assert_eq!(d.points().len(), 512);
        assert_eq!(d.points()[0], 1.0 / 512.0);
        assert_eq!(*d.points().last().unwrap(), 1.0);
    }

    #[test]
    fn design_spacing_is_exact_for_powers_of_two() {
        for n in [64usize, 512, 4096] {
            let d = make_design(n).unwrap();
            let step = 1.0 / n as f64;
            let worst = d
                .points()
                .windows(2)
                .map(|w| (w[1] - w[0] - step).abs())
                .fold(0.0, f64::max);
            assert_eq!(worst, 0.0);
        }
    }

    #[test]
    fn benchmark_values() {
        let t = Trend::benchmark();
        assert_eq!(t.r(0.5), 1.0);
        assert_eq!(t.r(0.0), 0.0);
        assert_eq!(t.r(1.0), 0.0);
        assert_eq!(t.r2(0.5), -24.0);
        assert!(t.is_periodic());
    }

    #[test]
    fn benchmark_derivatives_match_finite_differences() {
        let t = Trend::benchmark();
        for i in 1..=100 {
            let x = i as f64 / 101.0;
            let step = 1e-4;
            let fd2 = (t.r(x + step) - 2.0 * t.r(x) + t.r(x - step)) / (step * step);
            let an = t.r2(x);
            assert!(((fd2 - an) / an.abs().max(1.0)).abs() < 1e-4, "r2 at {x}");
            let fd1 = (t.r(x + 1e-6) - t.r(x - 1e-6)) / 2e-6;
            assert!((fd1 - t.r1(x)).abs() < 1e-6, "r1 at {x}");
        }
    }

    #[test]
    fn curvature_of_benchmark() {
        let t = Trend::benchmark();
        let u = Weight::uniform();
        let exact = 8192.0 / 35.0;
        assert!((curvature_integral(&t, &u, false).unwrap() - exact).abs() < 1e-8);
        assert!((curvature_integral(&t, &u, true).unwrap() - exact).abs() < 1e-8);
    }

    #[test]
    fn curvature_vanishes_for_flat_trends() {
        let u = Weight::uniform();
        assert_eq!(curvature_integral(&Trend::zero(), &u, false).unwrap(), 0.0);
        let b = Weight::bump(BUMP_MARGIN).unwrap();
        assert_eq!(curvature_integral(&Trend::linear(), &b, false).unwrap(), 0.0);
        assert!(curvature_integral(&Trend::benchmark(), &b, true).unwrap() > 0.0);
    }

    #[test]
    fn bump_weight_integrals() {
        let b = Weight::bump(0.1).unwrap();
        assert!((b.integral().unwrap() - 1.0).abs() < 1e-10);
        // ∫u² = (10/7)/(1-2ε) for this bump
        assert!((b.sq_integral().unwrap() - (10.0 / 7.0) / 0.8).abs() < 1e-10);
        assert_eq!(b.eval(0.05), 0.0);
        assert_eq!(b.eval(0.95), 0.0);
        assert!(b.eval(0.5) > 0.0);
        assert!(!b.is_uniform());
    }

    #[test]
    fn custom_trend_falls_back_to_finite_differences() {
        let t = Trend::custom("sin", |x| (std::f64::consts::TAU * x).sin(), None, None, true);
        let x = 0.3;
        let exact = -(std::f64::consts::TAU).powi(2) * (std::f64::consts::TAU * x).sin();
        assert!(((t.r2(x) - exact) / exact).abs() < 1e-4);
    }
}
