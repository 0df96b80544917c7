//! Seeded replication of the bandwidth-selection experiment.
//!
//! Each replicate draws ARCH(1) noise, forms `Y = r(x) + ε`, evaluates the
//! ASE and Mallows CL curves on the bandwidth grid and records both
//! minimizers. Replicates are independent: replicate `i` for the `a`-th
//! alpha uses the seed `stream_seed(base_seed, [a, i])`, so results do not
//! depend on scheduling or thread count. Aggregation is a sequential fold
//! over records sorted by index.

use std::io::Write;

use log::info;
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::asymptotics::{gap_standardizer, gap_variance_sigma2, AsymptoticInputs};
use crate::criteria::{
    argmin, dn_curve, mase_exact, plans_for_grid, BandwidthGrid, GridOrigin,
    SurrogateInputs, DEFAULT_GRID_POINTS,
};
use crate::error::{invalid, Error, Result};
use crate::io::write_rows;
use crate::kernels::Kernel;
use crate::noise::{ArchNoise, ArchParams, NoiseSource};
use crate::rng::stream_seed;
use crate::smoother::{trace_ul, SmootherPlan};
use crate::trend::{make_design, Trend, Weight};

/// Noise persistence values of the original six-setting study.
pub const PAPER_ALPHAS: [f64; 6] = [0.01, 0.162, 0.577, 0.75, 0.9, 0.98];
pub const PAPER_SIGMA: f64 = 0.32;

/// How the bandwidth grid is built.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum GridSpec {
    /// Geometric grid around `c n^{-1/5}` (see [`BandwidthGrid::auto`]).
    Auto { points: usize },
    /// The clamped literal domain (see [`BandwidthGrid::paper`]).
    Paper { points: usize },
    Explicit { values: Vec<f64> },
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec::Auto {
            points: DEFAULT_GRID_POINTS,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub n: usize,
    pub alphas: Vec<f64>,
    pub sigma: f64,
    pub replicates: usize,
    pub base_seed: u64,
    pub grid: GridSpec,
    pub kernel: String,
    pub trend: String,
    pub weight: String,
    pub periodic: bool,
    /// Keep per-replicate curves in the returned records.
    pub store_curves: bool,
    /// Worker threads; `None` uses rayon's default.
    pub threads: Option<usize>,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            n: 512,
            alphas: PAPER_ALPHAS.to_vec(),
            sigma: PAPER_SIGMA,
            replicates: 100,
            base_seed: 1,
            grid: GridSpec::default(),
            kernel: "biweight".into(),
            trend: "benchmark".into(),
            weight: "uniform".into(),
            periodic: true,
            store_curves: false,
            threads: None,
        }
    }
}

impl StudyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 4 {
            return Err(invalid(format!("n must be at least 4, got {}", self.n)));
        }
        if self.replicates < 1 {
            return Err(invalid("replicates must be at least 1"));
        }
        if self.alphas.is_empty() {
            return Err(Error::Empty("alphas"));
        }
        for &a in &self.alphas {
            ArchParams::new(a, 1.0)?;
        }
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(invalid(format!("sigma must be positive, got {}", self.sigma)));
        }
        if !self.periodic && self.weight == "uniform" {
            return Err(invalid(
                "non-periodic criteria need a weight vanishing near the boundary (use weight \"bump\")",
            ));
        }
        if self.threads == Some(0) {
            return Err(invalid("threads must be positive"));
        }
        match &self.grid {
            GridSpec::Auto { points } | GridSpec::Paper { points } if *points == 0 => {
                Err(Error::Empty("bandwidth grid"))
            }
            _ => Ok(()),
        }
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma * self.sigma
    }
}

/// Outcome of one replicate.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReplicateRecord {
    pub alpha: f64,
    pub index: u64,
    pub seed: u64,
    /// ASE minimizer `ĥ_n`.
    pub h_ase: f64,
    /// CL minimizer `ĥ_M`.
    pub h_cl: f64,
    /// `h_cl - h_ase`.
    pub gap: f64,
    pub ase_curve: Option<Vec<f64>>,
    pub cl_curve: Option<Vec<f64>>,
    /// `CL(h) - n⁻¹‖U^{1/2}ε‖²`, whose mean is the exact MASE.
    pub cl_centered_curve: Option<Vec<f64>>,
}

struct GridPoint {
    plan: SmootherPlan,
    /// `L r - r`.
    bias: Vec<f64>,
    /// `2σ² tr(UL)/n`.
    penalty: f64,
}

/// Precomputed, immutable state shared by all replicates of a study.
pub struct StudyContext {
    cfg: StudyConfig,
    grid: BandwidthGrid,
    points: Vec<GridPoint>,
    u: Vec<f64>,
    asymptotics: Option<AsymptoticInputs>,
    mase_exact: Vec<f64>,
    dn: Option<Vec<f64>>,
}

impl StudyContext {
    pub fn new(cfg: &StudyConfig) -> Result<Self> {
        cfg.validate()?;
        let kernel = Kernel::by_name(&cfg.kernel)?;
        let trend = Trend::by_name(&cfg.trend)?;
        let weight = Weight::by_name(&cfg.weight)?;
        let sigma2 = cfg.sigma2();
        let n = cfg.n;

        let asymptotics = AsymptoticInputs::from_setup(&trend, &weight, kernel.moments(), sigma2).ok();
        let grid = match &cfg.grid {
            GridSpec::Auto { points } => {
                let inp = asymptotics.as_ref().ok_or_else(|| {
                    invalid("automatic grid needs a trend with nonzero curvature; pass an explicit grid")
                })?;
                BandwidthGrid::auto(inp.c, n, *points)?
            }
            GridSpec::Paper { points } => BandwidthGrid::paper(*points)?,
            GridSpec::Explicit { values } => BandwidthGrid::new(values.clone(), GridOrigin::Explicit)?,
        };

        let design = make_design(n)?;
        let r = trend.values(&design);
        let u = weight.values(&design);
        let plans = plans_for_grid(n, &grid, &kernel, cfg.periodic)?;
        let nf = n as f64;
        let mut points = Vec::with_capacity(plans.len());
        let mut mase = Vec::with_capacity(plans.len());
        for plan in plans {
            let lr = plan.smooth(&r)?;
            let bias: Vec<f64> = lr.iter().zip(&r).map(|(a, b)| a - b).collect();
            let penalty = 2.0 * sigma2 * trace_ul(&plan, &weight)? / nf;
            mase.push(mase_exact(&trend, &plan, &weight, sigma2)?);
            points.push(GridPoint { plan, bias, penalty });
        }
        let dn = SurrogateInputs::from_setup(&trend, &weight, kernel.moments(), sigma2, 0.0)
            .ok()
            .filter(|s| s.curvature > 0.0)
            .map(|s| dn_curve(&s, n, &grid).values);

        Ok(StudyContext {
            cfg: cfg.clone(),
            grid,
            points,
            u,
            asymptotics,
            mase_exact: mase,
            dn,
        })
    }

    pub fn config(&self) -> &StudyConfig {
        &self.cfg
    }

    pub fn grid(&self) -> &BandwidthGrid {
        &self.grid
    }

    pub fn asymptotics(&self) -> Option<&AsymptoticInputs> {
        self.asymptotics.as_ref()
    }

    /// Exact MASE on the grid.
    pub fn mase_exact_curve(&self) -> &[f64] {
        &self.mase_exact
    }

    pub fn replicate_seed(&self, alpha_index: usize, index: u64) -> u64 {
        stream_seed(self.cfg.base_seed, &[alpha_index as u64, index])
    }

    /// Runs replicate `index` for `cfg.alphas[alpha_index]`.
    pub fn run_replicate(&self, alpha_index: usize, index: u64) -> Result<ReplicateRecord> {
        let alpha = *self
            .cfg
            .alphas
            .get(alpha_index)
            .ok_or_else(|| invalid(format!("alpha index {alpha_index} out of range")))?;
        let n = self.cfg.n;
        let nf = n as f64;
        let seed = self.replicate_seed(alpha_index, index);
        let noise = ArchNoise {
            params: ArchParams::new(alpha, self.cfg.sigma2())?,
        };
        let mut eps = vec![0.0; n];
        noise.fill(seed, &mut eps);

        let noise_term: f64 = self.u.iter().zip(&eps).map(|(w, e)| w * e * e).sum::<f64>() / nf;
        let eps_spectrum: Option<Vec<Complex64>> = if self.cfg.periodic {
            let engine = self.points[0].plan.engine().expect("periodic plans have an engine");
            Some(engine.forward_real(&eps))
        } else {
            None
        };

        let m = self.points.len();
        let mut ase = Vec::with_capacity(m);
        let mut cl = Vec::with_capacity(m);
        for gp in &self.points {
            let smoothed_noise = match &eps_spectrum {
                Some(spec) => gp.plan.smooth_spectrum(spec)?,
                None => gp.plan.smooth_direct(&eps)?,
            };
            let mut ase_acc = 0.0;
            let mut rss_acc = 0.0;
            for i in 0..n {
                // r̂ - r = (Lr - r) + Lε ;  Y - r̂ = ε - (r̂ - r)
                let err = gp.bias[i] + smoothed_noise[i];
                let resid = eps[i] - err;
                ase_acc += self.u[i] * err * err;
                rss_acc += self.u[i] * resid * resid;
            }
            ase.push(ase_acc / nf);
            cl.push(rss_acc / nf + gp.penalty);
        }
        if let Some(bad) = ase.iter().chain(&cl).find(|v| !v.is_finite()) {
            return Err(Error::Replicate {
                alpha,
                index,
                source: Box::new(invalid(format!("non-finite criterion value {bad}"))),
            });
        }
        let h = self.grid.values();
        let h_ase = h[argmin(&ase)];
        let h_cl = h[argmin(&cl)];
        let centered = cl.iter().map(|v| v - noise_term).collect();
        Ok(ReplicateRecord {
            alpha,
            index,
            seed,
            h_ase,
            h_cl,
            gap: h_cl - h_ase,
            ase_curve: Some(ase),
            cl_curve: Some(cl),
            cl_centered_curve: Some(centered),
        })
    }

    fn run_alpha(&self, alpha_index: usize) -> Result<Vec<ReplicateRecord>> {
        let alpha = self.cfg.alphas[alpha_index];
        let mut records = (0..self.cfg.replicates as u64)
            .into_par_iter()
            .map(|i| {
                self.run_replicate(alpha_index, i).map_err(|e| match e {
                    e @ Error::Replicate { .. } => e,
                    other => Error::Replicate {
                        alpha,
                        index: i,
                        source: Box::new(other),
                    },
                })
            })
            .collect::<Result<Vec<_>>>()?;
        records.sort_by_key(|r| r.index);
        Ok(records)
    }

    /// Runs every replicate and aggregates.
    pub fn run(&self) -> Result<StudyOutput> {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(t) = self.cfg.threads {
            builder = builder.num_threads(t);
        }
        let pool = builder
            .build()
            .map_err(|e| invalid(format!("cannot build thread pool: {e}")))?;

        let mut tables = Vec::with_capacity(self.cfg.alphas.len());
        let mut all_records = Vec::with_capacity(self.cfg.alphas.len());
        for (ai, &alpha) in self.cfg.alphas.iter().enumerate() {
            info!("n = {}, alpha = {alpha}: {} replicates", self.cfg.n, self.cfg.replicates);
            let mut records = pool.install(|| self.run_alpha(ai))?;
            tables.push(self.summarize_alpha(alpha, &records)?);
            if !self.cfg.store_curves {
                for r in &mut records {
                    r.ase_curve = None;
                    r.cl_curve = None;
                    r.cl_centered_curve = None;
                }
            }
            all_records.push(records);
        }

        let (c, h_star, sigma2_gap, gap_sd) = match &self.asymptotics {
            Some(inp) => (
                Some(inp.c),
                Some(inp.c * (self.cfg.n as f64).powf(-0.2)),
                Some(gap_variance_sigma2(inp)?),
                Some(gap_standardizer(inp, self.cfg.n)?),
            ),
            None => (None, None, None, None),
        };
        Ok(StudyOutput {
            summary: StudySummary {
                config: self.cfg.clone(),
                grid: self.grid.values().to_vec(),
                grid_origin: self.grid.origin(),
                c,
                h_star,
                sigma2_gap,
                gap_sd,
                mase_exact: self.mase_exact.clone(),
                dn: self.dn.clone(),
                grid_mase_minimizer: self.grid.values()[argmin(&self.mase_exact)],
                alphas: tables,
            },
            records: all_records,
        })
    }

    fn summarize_alpha(&self, alpha: f64, records: &[ReplicateRecord]) -> Result<AlphaSummary> {
        let m = records.len();
        if m == 0 {
            return Err(Error::Empty("replicate records"));
        }
        let ratios: Vec<f64> = records.iter().map(|r| r.h_cl / r.h_ase).collect();
        let gaps: Vec<f64> = records.iter().map(|r| r.gap).collect();
        let h_ase: Vec<f64> = records.iter().map(|r| r.h_ase).collect();
        let h_cl: Vec<f64> = records.iter().map(|r| r.h_cl).collect();
        let (mean_gap, sd_gap) = mean_sd(&gaps);

        let ks = match &self.asymptotics {
            Some(inp) => {
                let sd = gap_standardizer(inp, self.cfg.n)?;
                let standardized: Vec<f64> = records.iter().map(|r| (r.h_ase - r.h_cl) / sd).collect();
                Some(ks_statistic(&standardized, standard_normal_cdf)?)
            }
            None => None,
        };

        let (emase, emase_se) = curve_mean_se(records, |r| r.ase_curve.as_deref())?;
        let (cl_centered, cl_centered_se) = curve_mean_se(records, |r| r.cl_centered_curve.as_deref())?;
        let h_n = self.grid.values()[argmin(&self.mase_exact)];
        let mean_h_ase = mean_sd(&h_ase).0;

        Ok(AlphaSummary {
            alpha,
            replicates: m,
            mean_ratio: mean_sd(&ratios).0,
            median_ratio: median(&ratios),
            mean_h_ase,
            mean_h_cl: mean_sd(&h_cl).0,
            mean_gap,
            sd_gap,
            ks_statistic: ks,
            mean_h_ase_over_grid_mase_minimizer: mean_h_ase / h_n,
            empirical_mase: emase,
            empirical_mase_se: emase_se,
            cl_centered_mean: cl_centered,
            cl_centered_se,
        })
    }
}

/// Per-alpha aggregate.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AlphaSummary {
    pub alpha: f64,
    pub replicates: usize,
    /// Mean of `ĥ_M / ĥ_n`.
    pub mean_ratio: f64,
    pub median_ratio: f64,
    pub mean_h_ase: f64,
    pub mean_h_cl: f64,
    pub mean_gap: f64,
    /// Sample standard deviation of the gap (zero for one replicate).
    pub sd_gap: f64,
    /// KS distance of `n^{3/10}(ĥ_n - ĥ_M)/Σ` to the standard normal.
    pub ks_statistic: Option<f64>,
    /// Mean `ĥ_n` over the grid minimizer of the exact MASE.
    pub mean_h_ase_over_grid_mase_minimizer: f64,
    /// Pointwise mean of the ASE curves.
    pub empirical_mase: Vec<f64>,
    pub empirical_mase_se: Vec<f64>,
    pub cl_centered_mean: Vec<f64>,
    pub cl_centered_se: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StudySummary {
    pub config: StudyConfig,
    pub grid: Vec<f64>,
    pub grid_origin: GridOrigin,
    pub c: Option<f64>,
    pub h_star: Option<f64>,
    pub sigma2_gap: Option<f64>,
    pub gap_sd: Option<f64>,
    pub mase_exact: Vec<f64>,
    pub dn: Option<Vec<f64>>,
    pub grid_mase_minimizer: f64,
    pub alphas: Vec<AlphaSummary>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StudyOutput {
    pub summary: StudySummary,
    /// One vector of index-sorted records per alpha.
    pub records: Vec<Vec<ReplicateRecord>>,
}

impl StudyOutput {
    /// `index,seed,h_ase,h_cl,gap` rows for one alpha.
    pub fn write_gaps_csv<W: Write>(&self, alpha_index: usize, mut out: W) -> std::io::Result<()> {
        writeln!(out, "index,seed,h_ase,h_cl,gap")?;
        for r in &self.records[alpha_index] {
            writeln!(
                out,
                "{},{},{},{},{}",
                r.index,
                r.seed,
                crate::io::fmt_f64(r.h_ase),
                crate::io::fmt_f64(r.h_cl),
                crate::io::fmt_f64(r.gap)
            )?;
        }
        Ok(())
    }

    /// `h,empirical_mase,mase_exact,dn,empirical_mase_se,cl_centered,cl_centered_se`
    /// rows for one alpha; `dn` is NaN when the trend is flat.
    pub fn write_emase_csv<W: Write>(&self, alpha_index: usize, out: W) -> std::io::Result<()> {
        let s = &self.summary;
        let a = &s.alphas[alpha_index];
        let rows = (0..s.grid.len()).map(|i| {
            vec![
                s.grid[i],
                a.empirical_mase[i],
                s.mase_exact[i],
                s.dn.as_ref().map_or(f64::NAN, |d| d[i]),
                a.empirical_mase_se[i],
                a.cl_centered_mean[i],
                a.cl_centered_se[i],
            ]
        });
        write_rows(
            out,
            &[
                "h",
                "empirical_mase",
                "mase_exact",
                "dn",
                "empirical_mase_se",
                "cl_centered",
                "cl_centered_se",
            ],
            rows,
        )
    }
}

/// Builds a context and runs one replicate.
pub fn run_replicate(cfg: &StudyConfig, alpha_index: usize, index: u64) -> Result<ReplicateRecord> {
    StudyContext::new(cfg)?.run_replicate(alpha_index, index)
}

pub fn run_study(cfg: &StudyConfig) -> Result<StudyOutput> {
    StudyContext::new(cfg)?.run()
}

/// Pointwise mean of stored ASE curves.
pub fn empirical_mase(records: &[ReplicateRecord]) -> Result<Vec<f64>> {
    if records.is_empty() {
        return Err(Error::Empty("replicate records"));
    }
    Ok(curve_mean_se(records, |r| r.ase_curve.as_deref())?.0)
}

pub fn standard_normal_cdf(x: f64) -> f64 {
    Normal::standard().cdf(x)
}

/// One-sample Kolmogorov-Smirnov distance `sup |F_m - F|`.
pub fn ks_statistic<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> Result<f64> {
    if sample.is_empty() {
        return Err(Error::Empty("KS sample"));
    }
    if sample.iter().any(|v| v.is_nan()) {
        return Err(invalid("KS sample contains NaN"));
    }
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    let m = sorted.len() as f64;
    Ok(sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            let upper = (i + 1) as f64 / m - f;
            let lower = f - i as f64 / m;
            upper.max(lower)
        })
        .fold(0.0, f64::max))
}

/// Neumaier-compensated sum.
fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Mean and sample standard deviation (zero when there is one value).
fn mean_sd(values: &[f64]) -> (f64, f64) {
    let m = values.len() as f64;
    let mean = compensated_sum(values.iter().copied()) / m;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let ss = compensated_sum(values.iter().map(|v| (v - mean).powi(2)));
    (mean, (ss / (m - 1.0)).sqrt())
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

/// Pointwise mean and standard error of the mean over records.
fn curve_mean_se<F>(records: &[ReplicateRecord], get: F) -> Result<(Vec<f64>, Vec<f64>)>
where
    F: Fn(&ReplicateRecord) -> Option<&[f64]>,
{
    let curves = records
        .iter()
        .map(|r| get(r).ok_or_else(|| invalid(format!("replicate {} has no stored curve", r.index))))
        .collect::<Result<Vec<_>>>()?;
    let len = curves[0].len();
    if let Some(bad) = curves.iter().find(|c| c.len() != len) {
        return Err(Error::LengthMismatch {
            expected: len,
            found: bad.len(),
        });
    }
    let m = curves.len() as f64;
    let mut means = Vec::with_capacity(len);
    let mut ses = Vec::with_capacity(len);
    for j in 0..len {
        let column: Vec<f64> = curves.iter().map(|c| c[j]).collect();
        let (mean, sd) = mean_sd(&column);
        means.push(mean);
        ses.push(sd / m.sqrt());
    }
    Ok((means, ses))
}

/// The martingale quadratic form
/// `Σ_i Y_{i,n} = Σ_i a_i ε_i + Σ_{j<i} b̃_{ij} ε_i ε_j` with
/// `a_i = C_K (h/n) r''(x_i) u(x_i)` and
/// `b̃_{ij} = (K-G)((x_i - x_j)/h) (u(x_i) + u(x_j)) / (n²h²)`.
///
/// In the periodic layout `x_i - x_j` is the circular distance and every
/// unordered pair within the kernel reach is counted once.
#[derive(Clone, Debug)]
pub struct QuadraticForm {
    n: usize,
    h: f64,
    periodic: bool,
    linear: Vec<f64>,
    /// `(K-G)(k/(nh))/(n²h²)` for lags `k = 1..=reach`.
    lag_weights: Vec<f64>,
    u: Vec<f64>,
}

impl QuadraticForm {
    pub fn new(
        trend: &Trend,
        weight: &Weight,
        kernel: &Kernel,
        n: usize,
        h: f64,
        periodic: bool,
    ) -> Result<Self> {
        if !(h > 0.0 && h < 0.5) {
            return Err(invalid(format!("h must lie in (0, 0.5), got {h}")));
        }
        if periodic && h * kernel.half_width() >= 0.5 {
            return Err(invalid("kernel support wraps the periodic design"));
        }
        let design = make_design(n)?;
        let nf = n as f64;
        let ck = kernel.moments().second_moment;
        let u = weight.values(&design);
        let linear = design
            .points()
            .iter()
            .zip(&u)
            .map(|(&x, &w)| ck * h / nf * trend.r2(x) * w)
            .collect();
        let scale = 1.0 / (nf * nf * h * h);
        let mut lag_weights = Vec::new();
        for k in 1..n {
            let z = k as f64 / nf / h;
            if z >= kernel.half_width() {
                break;
            }
            lag_weights.push(kernel.eval_k_minus_g(z) * scale);
        }
        Ok(QuadraticForm {
            n,
            h,
            periodic,
            linear,
            lag_weights,
            u,
        })
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn evaluate(&self, eps: &[f64]) -> Result<f64> {
        if eps.len() != self.n {
            return Err(Error::LengthMismatch {
                expected: self.n,
                found: eps.len(),
            });
        }
        let n = self.n;
        let lin: f64 = self.linear.iter().zip(eps).map(|(a, e)| a * e).sum();
        let mut quad = 0.0;
        for i in 0..n {
            let mut inner = 0.0;
            for (k, &b) in self.lag_weights.iter().enumerate() {
                let lag = k + 1;
                let j = i + lag;
                let j = if j < n {
                    j
                } else if self.periodic {
                    j - n
                } else {
                    break;
                };
                inner += b * (self.u[i] + self.u[j]) * eps[j];
            }
            quad += eps[i] * inner;
        }
        Ok(lin + quad)
    }
}

/// Draws `replicates` values of `Σ_i Y_{i,n}` under the given noise.
pub fn simulate_quadform(
    form: &QuadraticForm,
    noise: &dyn NoiseSource,
    replicates: usize,
    base_seed: u64,
) -> Result<Vec<f64>> {
    (0..replicates as u64)
        .into_par_iter()
        .map(|i| {
            let mut eps = vec![0.0; form.n];
            noise.fill(stream_seed(base_seed, &[u64::MAX, i]), &mut eps);
            form.evaluate(&eps)
        })
        .collect()
}
