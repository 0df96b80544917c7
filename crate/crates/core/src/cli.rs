//! Command-line front end: argument parsing, dispatch and artifact emission.
//!
//! Every failure ends with one JSON line on stderr,
//! `{"error":"<kind>","message":"...","exit_code":N}`, and exit status
//! 2 (usage), 3 (validation) or 1 (runtime).

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use crate::asymptotics::{theory_report, AsymptoticInputs};
use crate::criteria::{
    dn_curve, select, BandwidthGrid, CriterionCurve, CriterionKind, CurveSetup, SurrogateInputs,
    DEFAULT_GRID_POINTS,
};
use crate::error::{invalid, Error, Result};
use crate::io::{read_last_column, write_indexed, write_rows};
use crate::kernels::Kernel;
use crate::montecarlo::{run_study, GridSpec, StudyConfig, PAPER_ALPHAS, PAPER_SIGMA};
use crate::noise::{simulate_arch, ArchParams};
use crate::smoother::SmootherPlan;
use crate::trend::{make_design, Trend, Weight};

/// Environment variable consulted when `--out-dir` is not given.
pub const OUT_DIR_ENV: &str = "MDSBW_OUT_DIR";

pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_VALIDATION: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "mdsbw",
    version,
    about = "Kernel trend estimation and bandwidth selection under martingale-difference noise",
    after_help = "Exit status: 0 success, 1 runtime error, 2 usage error, 3 validation error.\n\
                  Output directory: --out-dir, else $MDSBW_OUT_DIR, else the current directory."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Print the fully resolved configuration as JSON and exit without computing.
    #[arg(long, global = true)]
    pub print_config: bool,

    /// Directory for written artifacts [default: $MDSBW_OUT_DIR or "."].
    #[arg(long, global = true, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Kernel moment constants as JSON.
    Moments(MomentsArgs),
    /// Smooth a CSV column of observations with the Priestley-Chao estimator.
    Smooth(SmoothArgs),
    /// Evaluate a criterion over a bandwidth grid and report its minimizer.
    Select(SelectArgs),
    /// Closed-form asymptotic constants (A, B, c, h*, Σ², gap sd, V).
    Theory(TheoryArgs),
    /// Simulate an ARCH(1) noise path to CSV.
    Simulate(SimulateArgs),
    /// Seeded Monte Carlo study over a list of ARCH parameters.
    Study(StudyArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum GridChoice {
    /// Geometric grid over [c·n^(-1/5)/4, 4·c·n^(-1/5)], intersected with [0.019, 0.45].
    Auto,
    /// The reference study's literal domain [0.019, 1.30], clamped to 0.45.
    Paper,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum CriterionArg {
    Ase,
    #[value(name = "mase_exact")]
    MaseExact,
    Cl,
    Cp,
    Dn,
}

/// Options shared by every command that builds a smoother setup.
#[derive(Clone, Debug, Args, Serialize)]
pub struct ModelArgs {
    /// Kernel name (biweight, triweight); biweight is the reference choice.
    #[arg(long, default_value = "biweight")]
    pub kernel: String,
    /// Trend name (benchmark = (4x(1-x))^3, zero, linear).
    #[arg(long, default_value = "benchmark")]
    pub trend: String,
    /// Weight function (uniform = u≡1 as in the reference study, bump).
    #[arg(long, default_value = "uniform")]
    pub weight: String,
    /// Circular (periodic) smoothing, as in the reference study; `--periodic false` disables it.
    #[arg(long, default_value_t = true, num_args = 0..=1, default_missing_value = "true", action = ArgAction::Set)]
    pub periodic: bool,
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct MomentsArgs {
    #[arg(long, default_value = "biweight")]
    pub kernel: String,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct SmoothArgs {
    /// CSV of observations; the last column is read, a header line is skipped.
    #[arg(long, value_name = "FILE")]
    pub input: PathBuf,
    /// Bandwidth in (0, 1/2).
    #[arg(long)]
    pub h: f64,
    #[arg(long, default_value = "biweight")]
    pub kernel: String,
    /// Circular smoothing (the default); `--periodic false` truncates at the edges.
    #[arg(long, default_value_t = true, num_args = 0..=1, default_missing_value = "true", action = ArgAction::Set)]
    pub periodic: bool,
    /// Output CSV [default: <out-dir>/smoothed.csv].
    #[arg(long, value_name = "FILE")]
    pub output: Option<PathBuf>,
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct GridArgs {
    #[arg(long, value_enum, default_value_t = GridChoice::Auto)]
    pub grid: GridChoice,
    /// Grid size.
    #[arg(long, default_value_t = DEFAULT_GRID_POINTS)]
    pub grid_points: usize,
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct SelectArgs {
    #[arg(long, value_enum, default_value_t = CriterionArg::Cl)]
    pub criterion: CriterionArg,
    /// Observations (required for ase, cl and cp).
    #[arg(long, value_name = "FILE")]
    pub input: Option<PathBuf>,
    /// Sample size for the data-free criteria (mase_exact, dn); inferred from --input otherwise.
    #[arg(long)]
    pub n: Option<usize>,
    /// Noise standard deviation; 0.32 is the reference study's common value.
    #[arg(long, default_value_t = PAPER_SIGMA)]
    pub sigma: f64,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub grid: GridArgs,
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct TheoryArgs {
    #[arg(long, default_value_t = 512)]
    pub n: usize,
    /// ARCH parameter; the asymptotic constants need a finite fourth moment.
    #[arg(long, default_value_t = 0.577)]
    pub alpha: f64,
    /// Noise standard deviation; 0.32 is the reference study's common value.
    #[arg(long, default_value_t = PAPER_SIGMA)]
    pub sigma: f64,
    #[arg(long, default_value = "biweight")]
    pub kernel: String,
    #[arg(long, default_value = "benchmark")]
    pub trend: String,
    #[arg(long, default_value = "uniform")]
    pub weight: String,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 512)]
    pub n: usize,
    /// ARCH parameter in [0, 1).
    #[arg(long, default_value_t = 0.577)]
    pub alpha: f64,
    /// Stationary standard deviation; 0.32 is the reference study's common value.
    #[arg(long, default_value_t = PAPER_SIGMA)]
    pub sigma: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Output CSV [default: <out-dir>/noise.csv].
    #[arg(long, value_name = "FILE")]
    pub output: Option<PathBuf>,
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct StudyArgs {
    /// Sample size; the reference study uses 2^9, 2^12 and 2^15.
    #[arg(long, default_value_t = 512)]
    pub n: usize,
    /// Comma-separated ARCH parameters [default: 0.01,0.162,0.577,0.75,0.9,0.98, the reference grid].
    #[arg(long, value_delimiter = ',')]
    pub alphas: Option<Vec<f64>>,
    /// Noise standard deviation; 0.32 is the reference study's common value.
    #[arg(long, default_value_t = PAPER_SIGMA)]
    pub sigma: f64,
    /// Replicates per alpha (the reference study used 1000; 100 keeps desk runs short).
    #[arg(long, default_value_t = 100)]
    pub replicates: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Worker-thread cap; results do not depend on it.
    #[arg(long)]
    pub threads: Option<usize>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub grid: GridArgs,
}

/// Parses `argv` (including the program name) and runs the command.
/// Returns the process exit status.
pub fn parse_and_dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return 0;
            }
            let msg = e.kind().to_string();
            let detail = e.to_string();
            let first = detail.lines().next().unwrap_or(&msg).trim_start_matches("error: ");
            report_error("usage", first, EXIT_USAGE);
            return EXIT_USAGE;
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            let (kind, code) = if e.is_validation() {
                ("validation", EXIT_VALIDATION)
            } else {
                ("runtime", EXIT_RUNTIME)
            };
            report_error(kind, &e.to_string(), code);
            code
        }
    }
}

fn report_error(kind: &str, message: &str, code: i32) {
    let line = json!({ "error": kind, "message": message, "exit_code": code });
    eprintln!("{line}");
}

fn out_dir(cli: &Cli) -> PathBuf {
    cli.out_dir
        .clone()
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."))
}

fn run(cli: &Cli) -> Result<()> {
    let dir = out_dir(cli);
    match &cli.command {
        Command::Moments(a) => moments(cli, a),
        Command::Smooth(a) => smooth(cli, &dir, a),
        Command::Select(a) => select_cmd(cli, &dir, a),
        Command::Theory(a) => theory(cli, a),
        Command::Simulate(a) => simulate(cli, &dir, a),
        Command::Study(a) => study(cli, &dir, a),
    }
}

fn print_config<T: Serialize>(command: &str, dir: Option<&Path>, args: &T) -> Result<()> {
    let line = json!({ "command": command, "out_dir": dir, "args": args });
    println!("{}", serde_json::to_string_pretty(&line).map_err(|e| invalid(e.to_string()))?);
    Ok(())
}

fn emit<T: Serialize>(value: &T, format: Format) -> Result<()> {
    let v = serde_json::to_value(value).map_err(|e| invalid(e.to_string()))?;
    match format {
        Format::Json => println!("{v}"),
        Format::Csv => {
            println!("key,value");
            if let Some(obj) = v.as_object() {
                for (k, val) in obj {
                    match val.as_f64() {
                        Some(x) => println!("{k},{}", crate::io::fmt_f64(x)),
                        None => println!("{k},{val}"),
                    }
                }
            }
        }
    }
    Ok(())
}

fn check_sigma(sigma: f64) -> Result<f64> {
    if sigma.is_finite() && sigma > 0.0 {
        Ok(sigma * sigma)
    } else {
        Err(invalid(format!("sigma must be positive and finite, got {sigma}")))
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn read_input(path: &Path) -> Result<Vec<f64>> {
    let values = read_last_column(BufReader::new(File::open(path)?))?;
    if values.is_empty() {
        return Err(Error::Empty("input column"));
    }
    Ok(values)
}

fn moments(cli: &Cli, a: &MomentsArgs) -> Result<()> {
    let kernel = Kernel::by_name(&a.kernel)?;
    if cli.print_config {
        return print_config("moments", None, a);
    }
    emit(kernel.moments(), a.format)
}

fn smooth(cli: &Cli, dir: &Path, a: &SmoothArgs) -> Result<()> {
    let kernel = Kernel::by_name(&a.kernel)?;
    let output = a.output.clone().unwrap_or_else(|| dir.join("smoothed.csv"));
    if !(a.h > 0.0 && a.h < 0.5) {
        return Err(invalid(format!("h must lie in (0, 1/2), got {}", a.h)));
    }
    if cli.print_config {
        return print_config("smooth", Some(&output), a);
    }
    let y = read_input(&a.input)?;
    let plan = SmootherPlan::new(y.len(), a.h, &kernel, a.periodic)?;
    let fitted = plan.smooth(&y)?;
    let mut out = create(&output)?;
    write_indexed(&mut out, &fitted)?;
    out.flush()?;
    Ok(())
}

fn grid_spec(g: &GridArgs) -> Result<GridSpec> {
    if g.grid_points < 2 {
        return Err(invalid(format!("grid-points must be at least 2, got {}", g.grid_points)));
    }
    Ok(match g.grid {
        GridChoice::Auto => GridSpec::Auto { points: g.grid_points },
        GridChoice::Paper => GridSpec::Paper { points: g.grid_points },
    })
}

fn build_grid(g: &GridArgs, surrogate: Option<&SurrogateInputs>, n: usize) -> Result<BandwidthGrid> {
    match grid_spec(g)? {
        GridSpec::Paper { points } => BandwidthGrid::paper(points),
        GridSpec::Auto { points } => {
            let s = surrogate.ok_or_else(|| {
                invalid("the auto grid needs a curved trend; use --grid paper")
            })?;
            let c = crate::criteria::optimal_bandwidth(s, n)?.c;
            BandwidthGrid::auto(c, n, points)
        }
        GridSpec::Explicit { values } => BandwidthGrid::new(values, crate::criteria::GridOrigin::Explicit),
    }
}

#[derive(Serialize)]
struct SelectRecord<'a> {
    criterion: &'a str,
    h_star: f64,
    index: usize,
    n: usize,
    curve_csv: PathBuf,
}

fn select_cmd(cli: &Cli, dir: &Path, a: &SelectArgs) -> Result<()> {
    let sigma2 = check_sigma(a.sigma)?;
    let kernel = Kernel::by_name(&a.model.kernel)?;
    let trend = Trend::by_name(&a.model.trend)?;
    let weight = Weight::by_name(&a.model.weight)?;
    grid_spec(&a.grid)?;
    if !a.model.periodic && weight.is_uniform() {
        return Err(invalid(
            "non-periodic criteria need a weight vanishing near the boundary (use --weight bump)",
        ));
    }
    let needs_data = matches!(a.criterion, CriterionArg::Ase | CriterionArg::Cl | CriterionArg::Cp);
    if needs_data && a.input.is_none() {
        return Err(invalid("this criterion needs --input"));
    }
    if !needs_data && a.input.is_none() && a.n.is_none() {
        return Err(invalid("give --n or --input"));
    }
    if let Some(n) = a.n {
        make_design(n)?;
    }
    if cli.print_config {
        return print_config("select", Some(dir), a);
    }

    let y = a.input.as_deref().map(read_input).transpose()?;
    let n = match (&y, a.n) {
        (Some(y), Some(n)) if y.len() != n => {
            return Err(Error::LengthMismatch { expected: n, found: y.len() })
        }
        (Some(y), _) => y.len(),
        (None, Some(n)) => n,
        (None, None) => unreachable!("checked above"),
    };
    let design = make_design(n)?;
    let surrogate = SurrogateInputs::from_setup(&trend, &weight, kernel.moments(), sigma2, 0.0)?;
    let curved = surrogate.curvature > 0.0;
    let grid = build_grid(&a.grid, curved.then_some(&surrogate), n)?;
    let setup = CurveSetup {
        grid: &grid,
        kernel: &kernel,
        weight: &weight,
        periodic: a.model.periodic,
    };
    let curve: CriterionCurve = match a.criterion {
        CriterionArg::Ase => {
            let r = trend.values(&design);
            setup.ase(y.as_deref().unwrap_or_default(), &r)?
        }
        CriterionArg::Cl => setup.cl(y.as_deref().unwrap_or_default(), sigma2)?,
        CriterionArg::Cp => setup.cp(y.as_deref().unwrap_or_default())?,
        CriterionArg::MaseExact => setup.mase_exact(&trend, n, sigma2)?,
        CriterionArg::Dn => {
            if !curved {
                return Err(Error::Degenerate("D_n needs a trend with nonzero curvature".into()));
            }
            dn_curve(&surrogate, n, &grid)
        }
    };
    let name = CriterionKind::name(curve.kind);
    let curve_path = dir.join(format!("curve_{name}.csv"));
    {
        let mut out = create(&curve_path)?;
        let rows = curve.grid.iter().zip(&curve.values).map(|(&h, &v)| vec![h, v]);
        write_rows(&mut out, &["h", "value"], rows)?;
        out.flush()?;
    }
    let sel = select(curve)?;
    let record = SelectRecord {
        criterion: name,
        h_star: sel.h_star,
        index: sel.index,
        n,
        curve_csv: curve_path,
    };
    let text = serde_json::to_string(&record).map_err(|e| invalid(e.to_string()))?;
    fs::write(dir.join(format!("select_{name}.json")), format!("{text}\n"))?;
    println!("{text}");
    Ok(())
}

fn theory(cli: &Cli, a: &TheoryArgs) -> Result<()> {
    let sigma2 = check_sigma(a.sigma)?;
    make_design(a.n)?;
    let params = ArchParams::new(a.alpha, sigma2)?;
    if !params.has_moment(2) {
        return Err(Error::MomentDoesNotExist { order: 4, alpha: a.alpha });
    }
    let kernel = Kernel::by_name(&a.kernel)?;
    let trend = Trend::by_name(&a.trend)?;
    let weight = Weight::by_name(&a.weight)?;
    if cli.print_config {
        return print_config("theory", None, a);
    }
    let inputs = AsymptoticInputs::from_setup(&trend, &weight, kernel.moments(), sigma2)?;
    let report = theory_report(&inputs, a.n)?;
    let mut v = serde_json::to_value(report).map_err(|e| invalid(e.to_string()))?;
    v["alpha"] = json!(a.alpha);
    emit(&v, a.format)
}

fn simulate(cli: &Cli, dir: &Path, a: &SimulateArgs) -> Result<()> {
    let sigma2 = check_sigma(a.sigma)?;
    let params = ArchParams::new(a.alpha, sigma2)?;
    if a.n == 0 {
        return Err(invalid("n must be positive"));
    }
    let output = a.output.clone().unwrap_or_else(|| dir.join("noise.csv"));
    if cli.print_config {
        return print_config("simulate", Some(&output), a);
    }
    let path = simulate_arch(params, a.n, a.seed)?;
    let mut out = create(&output)?;
    path.write_csv(&mut out)?;
    out.flush()?;
    Ok(())
}

/// Resolves the study configuration from flags.
pub fn study_config(a: &StudyArgs) -> Result<StudyConfig> {
    let cfg = StudyConfig {
        n: a.n,
        alphas: a.alphas.clone().unwrap_or_else(|| PAPER_ALPHAS.to_vec()),
        sigma: a.sigma,
        replicates: a.replicates,
        base_seed: a.seed,
        grid: grid_spec(&a.grid)?,
        kernel: a.model.kernel.clone(),
        trend: a.model.trend.clone(),
        weight: a.model.weight.clone(),
        periodic: a.model.periodic,
        store_curves: false,
        threads: a.threads,
    };
    cfg.validate()?;
    Kernel::by_name(&cfg.kernel)?;
    Trend::by_name(&cfg.trend)?;
    Weight::by_name(&cfg.weight)?;
    Ok(cfg)
}

fn study(cli: &Cli, dir: &Path, a: &StudyArgs) -> Result<()> {
    let cfg = study_config(a)?;
    if cli.print_config {
        return print_config("study", Some(dir), &cfg);
    }
    let output = run_study(&cfg)?;
    fs::create_dir_all(dir)?;
    let summary = serde_json::to_string_pretty(&output.summary).map_err(|e| invalid(e.to_string()))?;
    fs::write(dir.join("summary.json"), format!("{summary}\n"))?;
    for (i, alpha) in cfg.alphas.iter().enumerate() {
        let mut g = create(&dir.join(format!("gaps_{alpha}.csv")))?;
        output.write_gaps_csv(i, &mut g)?;
        g.flush()?;
        let mut e = create(&dir.join(format!("emase_{alpha}.csv")))?;
        output.write_emase_csv(i, &mut e)?;
        e.flush()?;
    }
    Ok(())
}
