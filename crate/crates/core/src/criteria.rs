//! Bandwidth criteria and grid-search selection.
//!
//! * ASE `T_n(h) = n⁻¹ Σ u(x_i)(r̂(x_i) - r(x_i))²` needs the true trend.
//! * Exact MASE `E T_n(h)` is squared bias plus `σ² n⁻¹ tr(U L Lᵗ)` under
//!   uncorrelated errors.
//! * Mallows `CL(h) = n⁻¹‖U^{1/2}(I - L)Y‖² + 2σ² n⁻¹ tr(UL)` with known σ².
//! * `C_p(h) = σ̂²(1 + 2ν/n)` with `ν = K(0)/h`.
//! * `D_n(h)` is the two-term asymptotic surrogate of the MASE whose
//!   minimizer is `h_n* = c n^{-1/5}`.

use log::warn;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::kernels::{Kernel, KernelMoments};
use crate::smoother::{trace_ul, trace_ullt, FftEngine, SmootherPlan};
use crate::trend::{curvature_integral, make_design, Trend, Weight};

/// Lower end of the literal search domain used in the original study.
pub const PAPER_GRID_LO: f64 = 0.019;
/// Upper end of that domain; it exceeds the admissible range `h < 1/2`.
pub const PAPER_GRID_HI: f64 = 1.30;
/// Upper cap applied to every generated grid.
pub const GRID_CAP: f64 = 0.45;
pub const DEFAULT_GRID_POINTS: usize = 200;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum GridOrigin {
    PaperFixed,
    /// `[a n^{-1/5}, b n^{-1/5}]`.
    HnNeighborhood { a: f64, b: f64 },
    Explicit,
}

/// Strictly increasing candidate bandwidths in `(0, 1/2)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BandwidthGrid {
    values: Vec<f64>,
    origin: GridOrigin,
}

impl BandwidthGrid {
    pub fn new(values: Vec<f64>, origin: GridOrigin) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("bandwidth grid"));
        }
        if values.iter().any(|&h| !(h > 0.0 && h < 0.5)) {
            return Err(invalid("grid bandwidths must lie in (0, 0.5)"));
        }
        if values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("grid bandwidths must be strictly increasing"));
        }
        Ok(BandwidthGrid { values, origin })
    }

    /// `points` geometrically spaced values on `[lo, hi]`.
    pub fn geometric(lo: f64, hi: f64, points: usize, origin: GridOrigin) -> Result<Self> {
        if points == 0 {
            return Err(Error::Empty("bandwidth grid"));
        }
        if !(lo > 0.0 && hi >= lo) {
            return Err(invalid(format!("bad grid range [{lo}, {hi}]")));
        }
        if points == 1 {
            return Self::new(vec![lo], origin);
        }
        let ratio = (hi / lo).ln() / (points - 1) as f64;
        let mut values: Vec<f64> = (0..points).map(|i| lo * (ratio * i as f64).exp()).collect();
        values[points - 1] = hi;
        Self::new(values, origin)
    }

    /// `[max(0.019, c n^{-1/5}/4), min(0.45, 4 c n^{-1/5})]`, geometric.
    pub fn auto(c: f64, n: usize, points: usize) -> Result<Self> {
        if !(c.is_finite() && c > 0.0) {
            return Err(invalid(format!("bandwidth constant must be positive, got {c}")));
        }
        let scale = (n as f64).powf(-0.2);
        let lo = PAPER_GRID_LO.max(0.25 * c * scale);
        let hi = GRID_CAP.min(4.0 * c * scale);
        if hi <= lo {
            return Err(invalid(format!("empty automatic grid for c = {c}, n = {n}")));
        }
        Self::geometric(
            lo,
            hi,
            points,
            GridOrigin::HnNeighborhood {
                a: lo / scale,
                b: hi / scale,
            },
        )
    }

    /// The literal `[0.019, 1.30]` domain, with its upper end clamped to
    /// [`GRID_CAP`].
    pub fn paper(points: usize) -> Result<Self> {
        warn!(
            "reference grid upper end {PAPER_GRID_HI} exceeds the admissible range h < 0.5; clamping to {GRID_CAP}"
        );
        Self::geometric(PAPER_GRID_LO, GRID_CAP, points, GridOrigin::PaperFixed)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn origin(&self) -> GridOrigin {
        self.origin
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CriterionKind {
    Ase,
    MaseExact,
    Cl,
    Cp,
    Dn,
}

impl CriterionKind {
    pub fn name(self) -> &'static str {
        match self {
            CriterionKind::Ase => "ase",
            CriterionKind::MaseExact => "mase_exact",
            CriterionKind::Cl => "cl",
            CriterionKind::Cp => "cp",
            CriterionKind::Dn => "dn",
        }
    }
}

/// A criterion evaluated on every grid bandwidth.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CriterionCurve {
    pub kind: CriterionKind,
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
}

impl CriterionCurve {
    pub fn new(kind: CriterionKind, grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if grid.len() != values.len() {
            return Err(Error::LengthMismatch {
                expected: grid.len(),
                found: values.len(),
            });
        }
        Ok(CriterionCurve { kind, grid, values })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TiePolicy {
    SmallestH,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SelectionResult {
    pub h_star: f64,
    pub index: usize,
    pub curve: CriterionCurve,
    pub tie_policy: TiePolicy,
}

/// Global grid minimum; ties go to the smallest bandwidth.
pub fn select(curve: CriterionCurve) -> Result<SelectionResult> {
    if curve.values.is_empty() {
        return Err(Error::Empty("criterion curve"));
    }
    if let Some(i) = curve.values.iter().position(|v| !v.is_finite()) {
        return Err(invalid(format!(
            "criterion value at h = {} is not finite",
            curve.grid[i]
        )));
    }
    let index = argmin(&curve.values);
    Ok(SelectionResult {
        h_star: curve.grid[index],
        index,
        curve,
        tie_policy: TiePolicy::SmallestH,
    })
}

/// First index of the minimum of a finite slice.
pub(crate) fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v < values[best] {
            best = i;
        }
    }
    best
}

fn check_lengths(n: usize, slices: &[&[f64]]) -> Result<()> {
    for s in slices {
        if s.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                found: s.len(),
            });
        }
    }
    Ok(())
}

fn weighted_mean_sq<I: Iterator<Item = f64>>(u: &[f64], diffs: I) -> f64 {
    let n = u.len() as f64;
    u.iter().zip(diffs).map(|(w, d)| w * d * d).sum::<f64>() / n
}

/// `T_n(h)`.
pub fn ase(y: &[f64], r_true: &[f64], plan: &SmootherPlan, weight: &Weight) -> Result<f64> {
    check_lengths(plan.n(), &[y, r_true])?;
    let u = weight.values(&make_design(plan.n())?);
    let fitted = plan.smooth(y)?;
    Ok(weighted_mean_sq(&u, fitted.iter().zip(r_true).map(|(f, r)| f - r)))
}

/// `E T_n(h) = n⁻¹‖U^{1/2}(Lr - r)‖² + σ² n⁻¹ tr(U L Lᵗ)`, exact for finite `n`.
pub fn mase_exact(trend: &Trend, plan: &SmootherPlan, weight: &Weight, sigma2: f64) -> Result<f64> {
    if !(sigma2.is_finite() && sigma2 >= 0.0) {
        return Err(invalid(format!("sigma2 must be nonnegative, got {sigma2}")));
    }
    let design = make_design(plan.n())?;
    let u = weight.values(&design);
    let r = trend.values(&design);
    let lr = plan.smooth(&r)?;
    let bias = weighted_mean_sq(&u, lr.iter().zip(&r).map(|(a, b)| a - b));
    Ok(bias + sigma2 * trace_ullt(plan, weight)? / plan.n() as f64)
}

/// Mallows `CL(h)` with the identity error correlation.
pub fn mallows_cl(y: &[f64], plan: &SmootherPlan, weight: &Weight, sigma2: f64) -> Result<f64> {
    check_lengths(plan.n(), &[y])?;
    let n = plan.n() as f64;
    let u = weight.values(&make_design(plan.n())?);
    let fitted = plan.smooth(y)?;
    let rss = weighted_mean_sq(&u, y.iter().zip(&fitted).map(|(a, b)| a - b));
    Ok(rss + 2.0 * sigma2 * trace_ul(plan, weight)? / n)
}

/// `δ₂(h) = 2n⁻¹ εᵗU(r - r̂) + 2σ² n⁻¹ tr(UL)`, with `ε = Y - r`.
pub fn delta2(
    y: &[f64],
    r_true: &[f64],
    plan: &SmootherPlan,
    weight: &Weight,
    sigma2: f64,
) -> Result<f64> {
    check_lengths(plan.n(), &[y, r_true])?;
    let n = plan.n() as f64;
    let u = weight.values(&make_design(plan.n())?);
    let fitted = plan.smooth(y)?;
    let cross: f64 = (0..plan.n())
        .map(|i| u[i] * (y[i] - r_true[i]) * (r_true[i] - fitted[i]))
        .sum();
    Ok(2.0 * cross / n + 2.0 * sigma2 * trace_ul(plan, weight)? / n)
}

/// Result of [`cp`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CpValue {
    pub value: f64,
    pub sigma2_hat: f64,
    /// `ν/n = K(0)/(nh)`; values above 1/2 make the criterion unreliable.
    pub dof_ratio: f64,
}

/// `C_p(h) = σ̂²(1 + 2ν/n)` with `σ̂² = Σu(Y - r̂)²/Σu`.
pub fn cp(y: &[f64], plan: &SmootherPlan, weight: &Weight) -> Result<CpValue> {
    check_lengths(plan.n(), &[y])?;
    let u = weight.values(&make_design(plan.n())?);
    let mass: f64 = u.iter().sum();
    if mass <= 0.0 {
        return Err(Error::Degenerate("weight has zero mass on the design".into()));
    }
    let fitted = plan.smooth(y)?;
    let rss: f64 = (0..plan.n()).map(|i| u[i] * (y[i] - fitted[i]).powi(2)).sum();
    let sigma2_hat = rss / mass;
    let dof_ratio = trace_ul(plan, weight)? / mass;
    if dof_ratio >= 0.5 {
        warn!("C_p at h = {}: nu/n = {dof_ratio:.3} >= 0.5", plan.h());
    }
    Ok(CpValue {
        value: sigma2_hat * (1.0 + 2.0 * dof_ratio),
        sigma2_hat,
        dof_ratio,
    })
}

/// Integrals entering the asymptotic MASE surrogate `D_n`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SurrogateInputs {
    /// `∫ u r''²`.
    pub curvature: f64,
    /// `∫ t² K`.
    pub second_moment: f64,
    /// `∫ u`.
    pub weight_mass: f64,
    /// `∫ K²`.
    pub k_sq: f64,
    pub sigma2: f64,
    /// `Σ_{k≥1} Cov(ε₀, ε_k)`; zero for martingale differences.
    pub cov_sum: f64,
}

impl SurrogateInputs {
    pub fn from_setup(
        trend: &Trend,
        weight: &Weight,
        moments: &KernelMoments,
        sigma2: f64,
        cov_sum: f64,
    ) -> Result<Self> {
        Ok(SurrogateInputs {
            curvature: curvature_integral(trend, weight, false)?,
            second_moment: moments.second_moment,
            weight_mass: weight.integral()?,
            k_sq: moments.k_sq,
            sigma2,
            cov_sum,
        })
    }

    /// `A = ∫u r''² (∫t²K)²`.
    pub fn bias_constant(&self) -> f64 {
        self.curvature * self.second_moment.powi(2)
    }

    /// `B = ∫u ∫K²`.
    pub fn variance_constant(&self) -> f64 {
        self.weight_mass * self.k_sq
    }

    fn long_run_variance(&self) -> f64 {
        self.sigma2 + 2.0 * self.cov_sum
    }

    pub fn dn(&self, n: usize, h: f64) -> f64 {
        let nf = n as f64;
        h.powi(4) / 4.0 * self.bias_constant()
            + self.variance_constant() * self.long_run_variance() / (nf * h)
    }
}

/// `D_n` on a grid.
pub fn dn_curve(inputs: &SurrogateInputs, n: usize, grid: &BandwidthGrid) -> CriterionCurve {
    let values = grid.values().iter().map(|&h| inputs.dn(n, h)).collect();
    CriterionCurve {
        kind: CriterionKind::Dn,
        grid: grid.values().to_vec(),
        values,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct OptimalBandwidth {
    pub c: f64,
    pub h_star: f64,
}

/// `h_n* = c n^{-1/5}` with `c = (B(σ² + 2 cov_sum)/A)^{1/5}`.
pub fn optimal_bandwidth(inputs: &SurrogateInputs, n: usize) -> Result<OptimalBandwidth> {
    let a = inputs.bias_constant();
    if !(a > 0.0) {
        return Err(Error::Degenerate(
            "trend has zero weighted curvature; h_n* is undefined".into(),
        ));
    }
    let num = inputs.variance_constant() * inputs.long_run_variance();
    if !(num > 0.0) {
        return Err(Error::Degenerate("variance term of D_n is not positive".into()));
    }
    let c = (num / a).powf(0.2);
    Ok(OptimalBandwidth {
        c,
        h_star: c * (n as f64).powf(-0.2),
    })
}

/// `D_n''(h) = 3h² A + 2σ²B/(nh³)` for martingale-difference errors.
pub fn dn_second_derivative(inputs: &SurrogateInputs, n: usize, h: f64) -> Result<f64> {
    if !(h > 0.0) {
        return Err(invalid(format!("h must be positive, got {h}")));
    }
    let nf = n as f64;
    Ok(3.0 * h * h * inputs.bias_constant()
        + 2.0 * inputs.long_run_variance() * inputs.variance_constant() / (nf * h.powi(3)))
}

/// Plans for every grid bandwidth, sharing one FFT engine when periodic.
pub fn plans_for_grid(
    n: usize,
    grid: &BandwidthGrid,
    kernel: &Kernel,
    periodic: bool,
) -> Result<Vec<SmootherPlan>> {
    if periodic {
        let engine = FftEngine::new(n);
        grid.values()
            .iter()
            .map(|&h| SmootherPlan::periodic_with_engine(h, kernel, engine.clone()))
            .collect()
    } else {
        grid.values()
            .iter()
            .map(|&h| SmootherPlan::new(n, h, kernel, false))
            .collect()
    }
}

fn curve_from<F>(kind: CriterionKind, grid: &BandwidthGrid, plans: &[SmootherPlan], f: F) -> Result<CriterionCurve>
where
    F: Fn(&SmootherPlan) -> Result<f64>,
{
    let values = plans.iter().map(f).collect::<Result<Vec<_>>>()?;
    CriterionCurve::new(kind, grid.values().to_vec(), values)
}

/// Everything fixed across the grid when evaluating data-driven criteria.
pub struct CurveSetup<'a> {
    pub grid: &'a BandwidthGrid,
    pub kernel: &'a Kernel,
    pub weight: &'a Weight,
    pub periodic: bool,
}

impl CurveSetup<'_> {
    fn plans(&self, n: usize) -> Result<Vec<SmootherPlan>> {
        plans_for_grid(n, self.grid, self.kernel, self.periodic)
    }

    pub fn cl(&self, y: &[f64], sigma2: f64) -> Result<CriterionCurve> {
        let plans = self.plans(y.len())?;
        curve_from(CriterionKind::Cl, self.grid, &plans, |p| mallows_cl(y, p, self.weight, sigma2))
    }

    pub fn cp(&self, y: &[f64]) -> Result<CriterionCurve> {
        let plans = self.plans(y.len())?;
        curve_from(CriterionKind::Cp, self.grid, &plans, |p| Ok(cp(y, p, self.weight)?.value))
    }

    pub fn ase(&self, y: &[f64], r_true: &[f64]) -> Result<CriterionCurve> {
        let plans = self.plans(y.len())?;
        curve_from(CriterionKind::Ase, self.grid, &plans, |p| ase(y, r_true, p, self.weight))
    }

    pub fn mase_exact(&self, trend: &Trend, n: usize, sigma2: f64) -> Result<CriterionCurve> {
        let plans = self.plans(n)?;
        curve_from(CriterionKind::MaseExact, self.grid, &plans, |p| {
            mase_exact(trend, p, self.weight, sigma2)
        })
    }
}
