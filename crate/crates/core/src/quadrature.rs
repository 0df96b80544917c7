//! Composite Simpson quadrature on a fixed, non-adaptive partition.

use crate::error::{Error, Result};

/// Default number of Simpson panels used for every moment in the crate.
pub const DEFAULT_PANELS: usize = 1 << 17;

/// Integrates `f` over `[lo, hi]` with composite Simpson's rule on `panels`
/// subintervals (`panels` must be even).
pub fn simpson<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, panels: usize) -> Result<f64> {
    if panels == 0 || panels % 2 != 0 {
        return Err(Error::InvalidArgument(format!(
            "simpson needs an even positive panel count, got {panels}"
        )));
    }
    if !(lo.is_finite() && hi.is_finite()) || hi < lo {
        return Err(Error::InvalidArgument(format!("bad interval [{lo}, {hi}]")));
    }
    let step = (hi - lo) / panels as f64;
    let mut odd = 0.0;
    let mut even = 0.0;
    for i in 1..panels {
        let v = f(lo + i as f64 * step);
        if !v.is_finite() {
            return Err(Error::Quadrature(format!(
                "non-finite integrand at x = {}",
                lo + i as f64 * step
            )));
        }
        if i % 2 == 1 {
            odd += v;
        } else {
            even += v;
        }
    }
    let (a, b) = (f(lo), f(hi));
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::Quadrature("non-finite integrand at an endpoint".into()));
    }
    Ok(step / 3.0 * (a + b + 4.0 * odd + 2.0 * even))
}

/// [`simpson`] with [`DEFAULT_PANELS`].
pub fn integrate<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64) -> Result<f64> {
    simpson(f, lo, hi, DEFAULT_PANELS)
}
