//! Closed-form limit quantities for the bandwidth gap `ĥ_n - ĥ_M`.
//!
//! With `A = ∫u r''² (∫t²K)²`, `B = ∫u ∫K²` and `c = (Bσ²/A)^{1/5}`:
//!
//! ```text
//! Σ² = 4 (σ²)^{3/5} (∫t²K)² ∫u²r''² / (25 A^{8/5} B^{2/5})
//!    + 8 (σ²)^{3/5} ∫u² ∫(K-G)²    / (25 A^{3/5} B^{7/5})
//!
//! V  = c² C_K² σ² ∫u²r''² + (2/c³) σ⁴ ∫u² ∫(K-G)²
//! ```
//!
//! `n^{3/10}(ĥ_n - ĥ_M)` is asymptotically `N(0, Σ²)` and the quadratic form
//! `n^{7/10} Σ_i Y_{i,n}` is asymptotically `N(0, V)`. All `∫(K-G)²` here are
//! over the full kernel support; the pair-sum in `V` covers each unordered
//! pair once, which is where the factor 2 (not 4) comes from. The two are
//! linked by `Σ = 2√V / (5 A c²)`.
//!
//! No quadrature happens here; integrals come from `kernels` and `trend`.

use serde::Serialize;

use crate::criteria::{optimal_bandwidth, SurrogateInputs};
use crate::error::{invalid, Error, Result};
use crate::kernels::KernelMoments;
use crate::trend::{curvature_integral, Trend, Weight};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AsymptoticInputs {
    pub sigma2: f64,
    /// `∫u r''² (∫t²K)²`.
    pub a: f64,
    /// `∫u ∫K²`.
    pub b: f64,
    /// `∫t²K`, also written `C_K`.
    pub second_moment: f64,
    /// `∫(K-G)²` over the full support.
    pub kg_sq: f64,
    /// `∫u²`.
    pub u_sq_int: f64,
    /// `∫u² r''²`.
    pub u_sq_curv: f64,
    /// Bandwidth constant of `h_n* = c n^{-1/5}`.
    pub c: f64,
    /// `∫u r''²`, kept to re-derive `a`.
    pub u_curv: f64,
    /// `∫u`, kept to re-derive `b`.
    pub u_int: f64,
    /// `∫K²`, kept to re-derive `b`.
    pub k_sq: f64,
}

impl AsymptoticInputs {
    /// Gathers every integral for a trend/weight/kernel setup under
    /// martingale-difference noise of variance `sigma2`.
    pub fn from_setup(
        trend: &Trend,
        weight: &Weight,
        moments: &KernelMoments,
        sigma2: f64,
    ) -> Result<Self> {
        if !(sigma2.is_finite() && sigma2 >= 0.0) {
            return Err(invalid(format!("sigma2 must be nonnegative, got {sigma2}")));
        }
        let surrogate = SurrogateInputs::from_setup(trend, weight, moments, sigma2, 0.0)?;
        let c = optimal_bandwidth(&surrogate, 1)?.c;
        Ok(AsymptoticInputs {
            sigma2,
            a: surrogate.bias_constant(),
            b: surrogate.variance_constant(),
            second_moment: moments.second_moment,
            kg_sq: moments.kg_sq,
            u_sq_int: weight.sq_integral()?,
            u_sq_curv: curvature_integral(trend, weight, true)?,
            c,
            u_curv: surrogate.curvature,
            u_int: surrogate.weight_mass,
            k_sq: moments.k_sq,
        })
    }

    /// Largest relative disagreement between the stored `a`, `b` and the
    /// values re-derived from their parts.
    pub fn consistency_error(&self) -> f64 {
        let a = self.u_curv * self.second_moment.powi(2);
        let b = self.u_int * self.k_sq;
        let rel = |x: f64, y: f64| (x - y).abs() / y.abs().max(f64::MIN_POSITIVE);
        rel(a, self.a).max(rel(b, self.b))
    }

    fn check_ab(&self) -> Result<()> {
        if !(self.a > 0.0 && self.b > 0.0) {
            return Err(Error::Degenerate(format!(
                "A and B must be positive (A = {}, B = {})",
                self.a, self.b
            )));
        }
        Ok(())
    }
}

/// Limit variance `Σ²` of `n^{3/10}(ĥ_n - ĥ_M)`.
pub fn gap_variance_sigma2(inp: &AsymptoticInputs) -> Result<f64> {
    inp.check_ab()?;
    let s = inp.sigma2.powf(0.6);
    let bias_part = 4.0 * s / (25.0 * inp.a.powf(1.6) * inp.b.powf(0.4))
        * inp.second_moment.powi(2)
        * inp.u_sq_curv;
    let var_part = 8.0 * s / (25.0 * inp.a.powf(0.6) * inp.b.powf(1.4)) * inp.u_sq_int * inp.kg_sq;
    Ok(bias_part + var_part)
}

/// Standard deviation of the gap at sample size `n`: `Σ n^{-3/10}`.
pub fn gap_standardizer(inp: &AsymptoticInputs, n: usize) -> Result<f64> {
    if n < 1 {
        return Err(invalid("n must be positive"));
    }
    Ok(gap_variance_sigma2(inp)?.sqrt() * (n as f64).powf(-0.3))
}

/// Limit variance `V` of `n^{7/10} Σ_i Y_{i,n}` at `h_n = c n^{-1/5}`.
pub fn clt_variance_v(inp: &AsymptoticInputs) -> Result<f64> {
    if !(inp.c > 0.0) {
        return Err(invalid(format!("bandwidth constant must be positive, got {}", inp.c)));
    }
    let c = inp.c;
    Ok(c * c * inp.second_moment.powi(2) * inp.sigma2 * inp.u_sq_curv
        + 2.0 / c.powi(3) * inp.sigma2 * inp.sigma2 * inp.u_sq_int * inp.kg_sq)
}

/// Two leading terms of `Var(Σ_i Y_{i,n}(h))`:
/// `h²σ²/n C_K² ∫u²r''² + 2σ⁴/(n²h³) ∫u² ∫(K-G)²`.
pub fn quadform_variance_expansion(inp: &AsymptoticInputs, n: usize, h: f64) -> Result<f64> {
    if !(h > 0.0 && h < 0.5) {
        return Err(invalid(format!("h must lie in (0, 0.5), got {h}")));
    }
    if n < 2 {
        return Err(invalid(format!("n must be at least 2, got {n}")));
    }
    let nf = n as f64;
    Ok(h * h * inp.sigma2 / nf * inp.second_moment.powi(2) * inp.u_sq_curv
        + 2.0 * inp.sigma2 * inp.sigma2 / (nf * nf * h.powi(3)) * inp.u_sq_int * inp.kg_sq)
}

/// JSON record printed by the `theory` command.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TheoryReport {
    pub n: usize,
    pub sigma2: f64,
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "B")]
    pub b: f64,
    pub c: f64,
    pub h_star: f64,
    #[serde(rename = "Sigma2")]
    pub sigma2_gap: f64,
    pub gap_sd: f64,
    #[serde(rename = "V")]
    pub v: f64,
    pub dn_second_derivative: f64,
}

pub fn theory_report(inp: &AsymptoticInputs, n: usize) -> Result<TheoryReport> {
    let h_star = inp.c * (n as f64).powf(-0.2);
    let nf = n as f64;
    let dn2 = 3.0 * h_star * h_star * inp.a + 2.0 * inp.sigma2 * inp.b / (nf * h_star.powi(3));
    Ok(TheoryReport {
        n,
        sigma2: inp.sigma2,
        a: inp.a,
        b: inp.b,
        c: inp.c,
        h_star,
        sigma2_gap: gap_variance_sigma2(inp)?,
        gap_sd: gap_standardizer(inp, n)?,
        v: clt_variance_v(inp)?,
        dn_second_derivative: dn2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::criteria::dn_second_derivative;
    use crate::kernels::Kernel;

    fn unit() -> AsymptoticInputs {
        AsymptoticInputs {
            sigma2: 1.0,
            a: 1.0,
            b: 1.0,
            second_moment: 1.0,
            kg_sq: 1.0,
            u_sq_int: 1.0,
            u_sq_curv: 1.0,
            c: 1.0,
            u_curv: 1.0,
            u_int: 1.0,
            k_sq: 1.0,
        }
    }

    fn benchmark() -> AsymptoticInputs {
        AsymptoticInputs::from_setup(
            &Trend::benchmark(),
            &Weight::uniform(),
            Kernel::biweight().moments(),
            0.1024,
        )
        .unwrap()
    }

    /// Σ² evaluated straight from exact rationals, without the struct.
    fn sigma2_from_rationals(sigma2: f64) -> f64 {
        let mu2: f64 = 1.0 / 28.0;
        let curv: f64 = 8192.0 / 35.0;
        let ksq = 10.0 / 7.0;
        let a = curv * mu2 * mu2;
        let b: f64 = ksq;
        let s = sigma2.powf(3.0 / 5.0);
        4.0 * s * mu2 * mu2 * curv / (25.0 * a.powf(8.0 / 5.0) * b.powf(2.0 / 5.0))
            + 8.0 * s * ksq / (25.0 * a.powf(3.0 / 5.0) * b.powf(7.0 / 5.0))
    }

    #[test]
    fn unit_values() {
        assert!((gap_variance_sigma2(&unit()).unwrap() - 0.48).abs() < 1e-15);
        assert!((gap_standardizer(&unit(), 1).unwrap() - 0.48f64.sqrt()).abs() < 1e-15);
        assert!((clt_variance_v(&unit()).unwrap() - 3.0).abs() < 1e-15);
        assert!((quadform_variance_expansion(&unit(), 2, 0.25).unwrap()
            - (0.0625 / 2.0 + 2.0 / (4.0 * 0.015625)))
            .abs()
            < 1e-12);
    }

    #[test]
    fn benchmark_values() {
        let b = benchmark();
        assert!(b.consistency_error() < 1e-10);
        assert!((b.a - 0.29854227405).abs() < 1e-9);
        assert!((b.b - 10.0 / 7.0).abs() < 1e-9);
        assert!((b.c - 0.86704016).abs() < 1e-7);
        let s2 = gap_variance_sigma2(&b).unwrap();
        assert!((s2 - 0.219006460).abs() < 1e-7);
        assert!((s2 - sigma2_from_rationals(0.1024)).abs() < 1e-8);
        assert!((gap_standardizer(&b, 32768).unwrap() - 0.0206820452).abs() < 1e-8);
        assert!((gap_standardizer(&b, 512).unwrap() - 0.0720190643).abs() < 1e-8);
        let v = clt_variance_v(&b).unwrap();
        assert!((v - 0.0689454293).abs() < 1e-8);
    }

    #[test]
    fn sigma_and_v_are_linked_through_dn_second_derivative() {
        let b = benchmark();
        let surrogate = SurrogateInputs::from_setup(
            &Trend::benchmark(),
            &Weight::uniform(),
            Kernel::biweight().moments(),
            0.1024,
            0.0,
        )
        .unwrap();
        let sigma = gap_variance_sigma2(&b).unwrap().sqrt();
        let v = clt_variance_v(&b).unwrap();
        for n in [512usize, 4096, 32768] {
            let h = b.c * (n as f64).powf(-0.2);
            let dn2 = dn_second_derivative(&surrogate, n, h).unwrap();
            let via_v = 2.0 * v.sqrt() / ((n as f64).powf(0.4) * dn2);
            assert!(((sigma - via_v) / sigma).abs() < 1e-6, "n = {n}");
        }
    }

    #[test]
    fn homogeneity_in_sigma2() {
        let b = benchmark();
        let scaled = AsymptoticInputs {
            sigma2: 4.0 * b.sigma2,
            ..b
        };
        let ratio = gap_variance_sigma2(&scaled).unwrap() / gap_variance_sigma2(&b).unwrap();
        assert!((ratio - 4f64.powf(0.6)).abs() < 1e-12);
    }

    #[test]
    fn v_limits_in_c() {
        let big = AsymptoticInputs { c: 100.0, ..unit() };
        let v = clt_variance_v(&big).unwrap();
        assert!((v - 1e4).abs() / 1e4 < 1e-5);
        let small = AsymptoticInputs { c: 0.01, ..unit() };
        let v = clt_variance_v(&small).unwrap();
        assert!((v - 2e6).abs() / 2e6 < 1e-5);
        assert!(clt_variance_v(&AsymptoticInputs { c: 0.0, ..unit() }).is_err());
    }

    #[test]
    fn expansion_edge_cases() {
        let zero = AsymptoticInputs { sigma2: 0.0, ..unit() };
        assert_eq!(quadform_variance_expansion(&zero, 100, 0.1).unwrap(), 0.0);
        assert!(quadform_variance_expansion(&unit(), 1, 0.1).is_err());
        assert!(quadform_variance_expansion(&unit(), 10, 0.7).is_err());
        // at h = c n^{-1/5} the expansion equals V n^{-7/5}
        let b = benchmark();
        let n = 4096;
        let h = b.c * (n as f64).powf(-0.2);
        let e = quadform_variance_expansion(&b, n, h).unwrap();
        let v = clt_variance_v(&b).unwrap() * (n as f64).powf(-1.4);
        assert!(((e - v) / v).abs() < 1e-12);
    }

    #[test]
    fn degenerate_inputs() {
        let flat = AsymptoticInputs { a: 0.0, ..unit() };
        assert!(gap_variance_sigma2(&flat).is_err());
        assert!(AsymptoticInputs::from_setup(
            &Trend::zero(),
            &Weight::uniform(),
            Kernel::biweight().moments(),
            1.0
        )
        .is_err());
    }

    #[test]
    fn report() {
        let r = theory_report(&benchmark(), 32768).unwrap();
        assert!((r.h_star - 0.10838).abs() < 1e-4);
        assert!((r.gap_sd - 0.0207).abs() < 1e-4);
        let json = serde_json::to_value(r).unwrap();
        assert!(json.get("Sigma2").is_some() && json.get("V").is_some());
    }
}
