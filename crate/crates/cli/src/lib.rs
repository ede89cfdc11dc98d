//! Command implementations for the `goupillaud` binary.
//!
//! Every command writes its data files plus a `manifest.json` into the
//! output directory. The manifest records exactly the inputs that determine
//! the outputs (the worker count and the output location do not), so two
//! runs with equal manifests produce byte-identical files.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use goupillaud_core::goupillaud::GoupillaudMedium;
use goupillaud_core::ig_analytics::{basepoint_density, DensityCurve, IgQuery};
use goupillaud_core::levy_paths::{build_two_sided_path, LevyPathSample, ProcessSpec};
use goupillaud_core::montecarlo::{
    histogram, ks_critical_1pct, ks_distance, l1_distance, l1_noise_budget, sample_basepoints, tabulated_cdf,
    BasepointModel, BasepointSamples, Histogram, McConfig,
};
use goupillaud_core::transport::{
    convergence_table, solve_limit, write_convergence_csv, InitialDatum, SolutionField, WindowK,
};
use goupillaud_core::{QuadratureSpec, RngSeed};

#[derive(Debug, Parser)]
#[command(
    name = "goupillaud",
    version,
    about = "Transport in random layered media generated by Lévy paths"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Root seed of all random streams.
    #[arg(long, global = true, env = "GOUPILLAUD_SEED", default_value_t = 2024)]
    pub seed: u64,
    /// Output directory (created if missing).
    #[arg(long, global = true, env = "GOUPILLAUD_OUT", default_value = "out")]
    pub out: PathBuf,
    /// Worker threads; 0 uses all cores. Does not affect results.
    #[arg(long, global = true, env = "GOUPILLAUD_THREADS", default_value_t = 0)]
    pub threads: usize,
    /// Absolute quadrature tolerance.
    #[arg(long, global = true, env = "GOUPILLAUD_TOL_ABS", default_value_t = 1e-9)]
    pub tol_abs: f64,
    /// Relative quadrature tolerance.
    #[arg(long, global = true, env = "GOUPILLAUD_TOL_REL", default_value_t = 1e-8)]
    pub tol_rel: f64,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample a two-sided path; writes path.csv, path.json and medium.csv.
    Paths(PathsArgs),
    /// Solve the transport equation on a sampled medium; writes solution.csv.
    Solve(SolveArgs),
    /// L^p distance of level-N solutions to the finest level; writes convergence.csv.
    Converge(ConvergeArgs),
    /// Base-point density of the stable-1/2 medium; writes density.csv, cdf.csv, density.json.
    Density(DensityArgs),
    /// Monte Carlo base points against the analytic density; exit status 1 on failure.
    Validate(ValidateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProcessKind {
    /// Gamma subordinator plus drift (--k, --theta, --drift).
    Gamma,
    /// Compound Poisson with fixed jumps plus drift (--intensity, --jump, --drift).
    Poisson,
    /// First-passage times of standard Brownian motion, L(t) ~ t^2/Z^2.
    StableHalf,
    /// Deterministic L(t) = drift * t (not accepted by `paths`).
    DriftOnly,
}

/// Process grammar shared by all commands. Time is dimensionless; space is
/// measured in the units of the path values, speeds in space per unit time.
#[derive(Debug, Clone, Args, Serialize)]
pub struct ProcessArgs {
    /// Process family.
    #[arg(long, value_enum, default_value_t = ProcessKind::Gamma)]
    pub process: ProcessKind,
    /// Gamma shape per unit time.
    #[arg(long, default_value_t = 1.0)]
    pub k: f64,
    /// Gamma scale (space units per jump unit).
    #[arg(long, default_value_t = 1.0)]
    pub theta: f64,
    /// Linear drift (space per unit time); gamma, poisson, drift-only.
    #[arg(long, default_value_t = 1.0)]
    pub drift: f64,
    /// Poisson jump rate per unit time.
    #[arg(long, default_value_t = 1.0)]
    pub intensity: f64,
    /// Poisson jump size (space units).
    #[arg(long, default_value_t = 1.0)]
    pub jump: f64,
}

impl ProcessArgs {
    pub fn model(&self) -> Result<BasepointModel> {
        let spec = match self.process {
            ProcessKind::Gamma => ProcessSpec::GammaDrift {
                shape_rate: self.k,
                scale: self.theta,
                drift: self.drift,
            },
            ProcessKind::Poisson => ProcessSpec::PoissonDrift {
                intensity: self.intensity,
                jump_size: self.jump,
                drift: self.drift,
            },
            ProcessKind::StableHalf => ProcessSpec::StableHalf,
            ProcessKind::DriftOnly => {
                if !(self.drift > 0.0 && self.drift.is_finite()) {
                    bail!("drift-only needs a positive drift, got {}", self.drift);
                }
                return Ok(BasepointModel::PureDrift { drift: self.drift });
            }
        };
        spec.validate()?;
        Ok(BasepointModel::Levy(spec))
    }
}

/// `lo:hi` pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
}

impl std::str::FromStr for Range {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (a, b) = s.split_once(':').ok_or_else(|| format!("expected lo:hi, got {s:?}"))?;
        let lo: f64 = a.trim().parse().map_err(|e| format!("{a:?}: {e}"))?;
        let hi: f64 = b.trim().parse().map_err(|e| format!("{b:?}: {e}"))?;
        if lo >= hi || !lo.is_finite() || !hi.is_finite() {
            return Err(format!("need finite lo < hi, got {s:?}"));
        }
        Ok(Self { lo, hi })
    }
}

impl Range {
    /// Index window `[floor(lo 2^N), ceil(hi 2^N)]`, widened to contain 0.
    pub fn index_window(&self, level: u32) -> (i64, i64) {
        let scale = 2f64.powi(level as i32);
        (
            (self.lo * scale).floor().min(0.0) as i64,
            (self.hi * scale).ceil().max(0.0) as i64,
        )
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PathsArgs {
    #[command(flatten)]
    pub process: ProcessArgs,
    /// Finest dyadic level N_max (time step 2^-N_max).
    #[arg(long = "nmax", visible_alias = "n-max", default_value_t = 10)]
    pub n_max: u32,
    /// Sampled time window lo:hi.
    #[arg(long, allow_hyphen_values = true, default_value = "-4:4")]
    pub range: Range,
    /// Level of the exported medium (defaults to N_max).
    #[arg(long)]
    pub medium_level: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SolveLevel {
    Level(u32),
    Limit,
}

impl std::str::FromStr for SolveLevel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "limit" {
            Ok(Self::Limit)
        } else {
            s.parse()
                .map(Self::Level)
                .map_err(|e| format!("level must be an integer or 'limit': {e}"))
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SolveArgs {
    #[command(flatten)]
    pub process: ProcessArgs,
    #[arg(long = "nmax", visible_alias = "n-max", default_value_t = 12)]
    pub n_max: u32,
    /// Sampled time window lo:hi.
    #[arg(long, allow_hyphen_values = true, default_value = "-8:8")]
    pub range: Range,
    /// Level N of the approximate solution, or 'limit'.
    #[arg(long, default_value = "limit")]
    pub level: SolveLevel,
    /// Initial datum: triangular:center,halfwidth,height | constant:value | piecewise:x,v;x,v;...
    #[arg(long, default_value = "triangular:3,2,1")]
    pub datum: DatumArg,
    /// Comma-separated output times.
    #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
    pub times: Vec<f64>,
    /// Spatial interval lo:hi.
    #[arg(long, allow_hyphen_values = true, default_value = "0:10")]
    pub x_range: Range,
    /// Number of equally spaced x points (endpoints included).
    #[arg(long, default_value_t = 1001)]
    pub nx: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct DatumArg(pub InitialDatum);

impl std::str::FromStr for DatumArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (kind, rest) = s
            .split_once(':')
            .ok_or_else(|| format!("expected kind:params, got {s:?}"))?;
        let nums = |t: &str| -> Result<Vec<f64>, String> {
            t.split(',')
                .map(|v| v.trim().parse::<f64>().map_err(|e| format!("{v:?}: {e}")))
                .collect()
        };
        let datum = match kind {
            "constant" => match nums(rest)?.as_slice() {
                [v] => InitialDatum::Constant { value: *v },
                _ => return Err("constant takes one value".into()),
            },
            "triangular" => match nums(rest)?.as_slice() {
                [c, w, h] => InitialDatum::Triangular {
                    center: *c,
                    halfwidth: *w,
                    height: *h,
                },
                _ => return Err("triangular takes center,halfwidth,height".into()),
            },
            "piecewise" => {
                let nodes = rest
                    .split(';')
                    .map(|pair| match nums(pair)?.as_slice() {
                        [x, v] => Ok((*x, *v)),
                        _ => Err(format!("node {pair:?} is not x,v")),
                    })
                    .collect::<Result<Vec<_>, String>>()?;
                InitialDatum::PiecewiseLinear { nodes }
            }
            other => return Err(format!("unknown datum kind {other:?}")),
        };
        datum.validate().map_err(|e| e.to_string())?;
        Ok(Self(datum))
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ConvergeArgs {
    #[command(flatten)]
    pub process: ProcessArgs,
    /// Reference level.
    #[arg(long = "nmax", visible_alias = "n-max", default_value_t = 12)]
    pub n_max: u32,
    /// Sampled time window lo:hi.
    #[arg(long, allow_hyphen_values = true, default_value = "-8:16")]
    pub range: Range,
    /// Levels to compare, comma separated or a..=b.
    #[arg(long, default_value = "2..=10")]
    pub levels: LevelList,
    #[arg(long, default_value = "triangular:3,3,1")]
    pub datum: DatumArg,
    /// Exponent p of the L^p(K) norm.
    #[arg(long, default_value_t = 1.0)]
    pub p: f64,
    /// Time interval of K.
    #[arg(long, allow_hyphen_values = true, default_value = "0:3")]
    pub t_range: Range,
    /// Space interval of K.
    #[arg(long, allow_hyphen_values = true, default_value = "0:12")]
    pub x_range: Range,
    #[arg(long, default_value_t = 64)]
    pub nt: usize,
    #[arg(long, default_value_t = 512)]
    pub nx: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct LevelList(pub Vec<u32>);

impl std::str::FromStr for LevelList {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if let Some((a, b)) = s.split_once("..=") {
            let a: u32 = a.parse().map_err(|e| format!("{a:?}: {e}"))?;
            let b: u32 = b.parse().map_err(|e| format!("{b:?}: {e}"))?;
            return Ok(Self((a..=b).collect()));
        }
        s.split(',')
            .map(|v| v.trim().parse().map_err(|e| format!("{v:?}: {e}")))
            .collect::<Result<Vec<u32>, String>>()
            .map(Self)
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DensityArgs {
    /// Space level x of the characteristic.
    #[arg(long, default_value_t = 8.0)]
    pub x: f64,
    /// Elapsed time t > 0.
    #[arg(long, default_value_t = 1.0)]
    pub t: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub process: ProcessArgs,
    /// Space level x0 of the characteristic.
    #[arg(long, default_value_t = 8.0)]
    pub x0: f64,
    /// Elapsed time t0 > 0.
    #[arg(long, default_value_t = 1.0)]
    pub t0: f64,
    /// Number of Monte Carlo samples.
    #[arg(long, default_value_t = 10_000)]
    pub n: usize,
    #[arg(long = "nmax", visible_alias = "n-max", default_value_t = 14)]
    pub n_max: u32,
    /// Sampled time window lo:hi (only the needed part is generated).
    #[arg(long, allow_hyphen_values = true, default_value = "-64:64")]
    pub range: Range,
    /// Histogram bins.
    #[arg(long, default_value_t = 60)]
    pub bins: usize,
    /// Largest accepted L1 distance.
    #[arg(long, default_value_t = 0.10)]
    pub l1_tol: f64,
}

#[derive(Debug, Serialize)]
struct Manifest<'a, T: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    seed: u64,
    quadrature: QuadratureSpec,
    args: &'a T,
}

/// Outcome of a command; only `validate` can fail without an error.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Done,
    Passed,
    Failed,
}

impl GlobalArgs {
    pub fn quadrature(&self) -> Result<QuadratureSpec> {
        Ok(QuadratureSpec::new(
            self.tol_abs,
            self.tol_rel,
            QuadratureSpec::default().max_subdivisions,
        )?)
    }

    fn prepare_out(&self) -> Result<&Path> {
        fs::create_dir_all(&self.out).with_context(|| format!("creating {}", self.out.display()))?;
        Ok(&self.out)
    }

    fn manifest<T: Serialize>(&self, command: &'static str, args: &T) -> Result<()> {
        let m = Manifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            seed: self.seed,
            quadrature: self.quadrature()?,
            args,
        };
        write_json(&self.out.join("manifest.json"), &m)
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// Parses and runs a command line (including the program name).
pub fn run_from<I, S>(args: I) -> Result<Outcome>
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    run(Cli::try_parse_from(args)?)
}

pub fn run(cli: Cli) -> Result<Outcome> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.global.threads)
        .build()?;
    pool.install(|| match &cli.command {
        Command::Paths(a) => cmd_paths(&cli.global, a),
        Command::Solve(a) => cmd_solve(&cli.global, a),
        Command::Converge(a) => cmd_converge(&cli.global, a),
        Command::Density(a) => cmd_density(&cli.global, a),
        Command::Validate(a) => cmd_validate(&cli.global, a),
    })
}

fn sample_path(g: &GlobalArgs, process: &ProcessArgs, n_max: u32, range: Range) -> Result<LevyPathSample> {
    let (k_min, k_max) = range.index_window(n_max);
    Ok(match process.model()? {
        BasepointModel::Levy(spec) => build_two_sided_path(&spec, n_max, k_min, k_max, RngSeed::new(g.seed, 0))?,
        BasepointModel::PureDrift { drift } => LevyPathSample::pure_drift(drift, n_max, k_min, k_max)?,
    })
}

pub fn cmd_paths(g: &GlobalArgs, a: &PathsArgs) -> Result<Outcome> {
    if a.process.process == ProcessKind::DriftOnly {
        bail!(
            "paths samples Lévy paths; drift-only is deterministic and only accepted by solve, converge and validate"
        );
    }
    let out = g.prepare_out()?;
    let path = sample_path(g, &a.process, a.n_max, a.range)?;
    path.write_csv(create(&out.join("path.csv"))?)?;
    write_json(&out.join("path.json"), &path.metadata())?;
    let medium = GoupillaudMedium::build(&path, a.medium_level.unwrap_or(a.n_max))?;
    medium.write_csv(create(&out.join("medium.csv"))?)?;
    g.manifest("paths", a)?;
    Ok(Outcome::Done)
}

fn linspace(r: Range, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.5 * (r.lo + r.hi)];
    }
    (0..n)
        .map(|i| r.lo + (r.hi - r.lo) * i as f64 / (n - 1) as f64)
        .collect()
}

pub fn cmd_solve(g: &GlobalArgs, a: &SolveArgs) -> Result<Outcome> {
    if a.nx == 0 || a.times.is_empty() {
        bail!("need at least one x point and one time");
    }
    let out = g.prepare_out()?;
    let path = sample_path(g, &a.process, a.n_max, a.range)?;
    let xs = linspace(a.x_range, a.nx);
    let medium = match a.level {
        SolveLevel::Level(n) => Some(GoupillaudMedium::build(&path, n)?),
        SolveLevel::Limit => None,
    };
    let fields = a
        .times
        .iter()
        .map(|&t| match &medium {
            Some(m) => goupillaud_core::transport::solve_on_medium(m, &a.datum.0, t, &xs),
            None => solve_limit(&path, &a.datum.0, t, &xs),
        })
        .collect::<Result<Vec<SolutionField>, _>>()
        .context("characteristics left the sampled path; widen --range or shrink --x-range and --times")?;
    SolutionField::write_csv(&fields, create(&out.join("solution.csv"))?)?;
    g.manifest("solve", a)?;
    Ok(Outcome::Done)
}

pub fn cmd_converge(g: &GlobalArgs, a: &ConvergeArgs) -> Result<Outcome> {
    if let Some(&bad) = a.levels.0.iter().find(|&&n| n > a.n_max) {
        bail!("level {bad} exceeds n_max = {}", a.n_max);
    }
    let out = g.prepare_out()?;
    let path = sample_path(g, &a.process, a.n_max, a.range)?;
    let k = WindowK::with_grid((a.t_range.lo, a.t_range.hi), (a.x_range.lo, a.x_range.hi), a.nt, a.nx)?;
    let table = convergence_table(&path, &a.datum.0, &k, a.p, &a.levels.0)?;
    write_convergence_csv(&table, a.p, create(&out.join("convergence.csv"))?)?;
    g.manifest("converge", a)?;
    Ok(Outcome::Done)
}

pub fn cmd_density(g: &GlobalArgs, a: &DensityArgs) -> Result<Outcome> {
    let out = g.prepare_out()?;
    let spec = g.quadrature()?;
    let curve = basepoint_density(&IgQuery::with_default_grid(a.x, a.t), &spec)?;
    curve.write_csv(create(&out.join("density.csv"))?)?;
    curve.write_cdf_csv(create(&out.join("cdf.csv"))?)?;
    write_json(&out.join("density.json"), &curve.metadata(&spec))?;
    g.manifest("density", a)?;
    if !curve.all_converged() {
        eprintln!("warning: quadrature did not converge at some z; see the err column");
    }
    Ok(Outcome::Done)
}

/// Histogram edges on `[0, x0 + 0.5]` for `x0 > 0`: one bin `[0, e0)`,
/// geometric bins up to `x0 / 16`, uniform bins above. With `x0 = 8` and 60
/// bins: `[0, 0.004)`, 11 geometric bins to 0.5, 48 bins of width 1/6.
pub fn basepoint_edges(x0: f64, bins: usize) -> Result<Vec<f64>> {
    if x0.is_nan() || x0 <= 0.0 || bins < 5 {
        bail!("histogram needs x0 > 0 and at least 5 bins");
    }
    let hi = x0 + x0 / 16.0;
    let knee = x0 / 16.0;
    let first = knee / 125.0;
    let n_geo = bins / 5;
    let n_uni = bins - n_geo;
    let ratio = (knee / first).powf(1.0 / (n_geo - 1) as f64);
    let mut edges = vec![0.0];
    edges.extend((0..n_geo - 1).map(|i| first * ratio.powi(i as i32)));
    edges.push(knee);
    edges.extend((1..=n_uni).map(|i| knee + (hi - knee) * i as f64 / n_uni as f64));
    Ok(edges)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Tolerances {
    pub l1_max: f64,
    pub ks_critical: f64,
    pub density_beyond_level_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub process: ProcessKind,
    pub x0: f64,
    pub t0: f64,
    pub n: usize,
    pub failed_samples: usize,
    pub seed: u64,
    pub n_max: u32,
    pub l1: Option<f64>,
    pub l1_noise: Option<f64>,
    pub ks: Option<f64>,
    pub max_sample: f64,
    pub density_beyond_level: Option<f64>,
    pub peak_bin: Option<usize>,
    pub analytic_peak_bin: Option<usize>,
    pub mass: Option<f64>,
    pub tolerances: Tolerances,
    pub notes: Vec<String>,
    pub pass: bool,
}

/// Everything `validate` computes, kept in memory.
pub struct Validation {
    pub samples: BasepointSamples,
    pub histogram: Option<Histogram>,
    pub curve: Option<DensityCurve>,
    pub report: ValidationReport,
}

fn argmax(v: &[f64]) -> Option<usize> {
    v.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).map(|(i, _)| i)
}

pub fn validate(g: &GlobalArgs, a: &ValidateArgs) -> Result<Validation> {
    let model = a.process.model()?;
    let (k_min, k_max) = a.range.index_window(a.n_max);
    let cfg = McConfig {
        n_samples: a.n,
        n_max: a.n_max,
        k_min,
        k_max,
        seed: RngSeed::new(g.seed, 0),
        bins: a.bins,
    };
    let samples = sample_basepoints(&model, a.x0, a.t0, &cfg)?;
    let max_sample = samples.z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let tolerances = Tolerances {
        l1_max: a.l1_tol,
        ks_critical: ks_critical_1pct(samples.z.len()),
        density_beyond_level_max: 1e-10,
    };
    let mut report = ValidationReport {
        process: a.process.process,
        x0: a.x0,
        t0: a.t0,
        n: a.n,
        failed_samples: samples.failed.len(),
        seed: g.seed,
        n_max: a.n_max,
        l1: None,
        l1_noise: None,
        ks: None,
        max_sample,
        density_beyond_level: None,
        peak_bin: None,
        analytic_peak_bin: None,
        mass: None,
        tolerances,
        notes: Vec::new(),
        pass: false,
    };

    match model {
        BasepointModel::PureDrift { drift } => {
            let want = a.x0 - drift * a.t0;
            let bound = drift * 2f64.powi(-(a.n_max as i32));
            let worst = samples.z.iter().map(|z| (z - want).abs()).fold(0.0, f64::max);
            report.notes.push(format!(
                "drift-only: point mass at {want}; KS and L1 skipped, max deviation {worst:e} (bound {bound:e})"
            ));
            report.pass = worst <= bound + 1e-12 * want.abs();
            Ok(Validation {
                samples,
                histogram: None,
                curve: None,
                report,
            })
        }
        BasepointModel::Levy(ProcessSpec::StableHalf) => {
            let spec = g.quadrature()?;
            let curve = basepoint_density(&IgQuery::with_default_grid(a.x0, a.t0), &spec)?;
            let cdf = curve.cdf();
            report.ks = Some(ks_distance(&samples.z, tabulated_cdf(&cdf)));
            report.mass = Some(curve.mass);
            if !curve.all_converged() {
                report.notes.push("quadrature did not converge at some z".into());
            }
            let beyond = curve
                .z
                .iter()
                .zip(&curve.f)
                .filter(|(z, _)| **z > a.x0)
                .map(|(_, f)| *f)
                .fold(0.0, f64::max);
            report.density_beyond_level = Some(beyond);
            let mut hist = None;
            if a.x0 > 0.0 {
                let h = histogram(&samples.z, &basepoint_edges(a.x0, a.bins)?)?;
                report.l1 = Some(l1_distance(&h, &curve));
                report.l1_noise = Some(l1_noise_budget(&h, &curve));
                report.peak_bin = argmax(&h.densities());
                let analytic: Vec<f64> = (0..h.counts.len())
                    .map(|i| curve.integrate_between(h.edges[i], h.edges[i + 1]) / h.width(i))
                    .collect();
                report.analytic_peak_bin = argmax(&analytic);
                hist = Some(h);
            } else {
                report.notes.push("x0 <= 0: histogram and L1 skipped".into());
            }
            let t = &report.tolerances;
            report.pass = report.l1.is_none_or(|l| l <= t.l1_max)
                && report.ks.is_some_and(|k| k < t.ks_critical)
                && beyond <= t.density_beyond_level_max
                && max_sample <= a.x0
                && (a.x0 <= 0.0 || (report.peak_bin == Some(0) && report.analytic_peak_bin == Some(0)));
            Ok(Validation {
                samples,
                histogram: hist,
                curve: Some(curve),
                report,
            })
        }
        BasepointModel::Levy(spec) => Err(anyhow!(
            "no analytic base-point law is available for {spec}; validate supports stable-half and drift-only"
        )),
    }
}

pub fn cmd_validate(g: &GlobalArgs, a: &ValidateArgs) -> Result<Outcome> {
    let out = g.prepare_out()?.to_path_buf();
    let v = validate(g, a)?;
    v.samples.write_csv(create(&out.join("samples.csv"))?)?;
    if let Some(h) = &v.histogram {
        h.write_csv(create(&out.join("histogram.csv"))?)?;
    }
    if let Some(c) = &v.curve {
        c.write_csv(create(&out.join("density.csv"))?)?;
    }
    write_json(&out.join("report.json"), &v.report)?;
    g.manifest("validate", a)?;
    for note in &v.report.notes {
        eprintln!("note: {note}");
    }
    Ok(if v.report.pass {
        Outcome::Passed
    } else {
        Outcome::Failed
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn range_parsing() {
        let r: Range = "-4:4.5".parse().unwrap();
        assert_eq!((r.lo, r.hi), (-4.0, 4.5));
        assert!("3:1".parse::<Range>().is_err());
        assert!("1".parse::<Range>().is_err());
        assert_eq!(r.index_window(2), (-16, 18));
        let r: Range = "0.5:2".parse().unwrap();
        assert_eq!(r.index_window(1), (0, 4));
    }

    #[test]
    fn datum_parsing() {
        let d: DatumArg = "triangular:0,1,2".parse().unwrap();
        assert_eq!(
            d.0,
            InitialDatum::Triangular {
                center: 0.0,
                halfwidth: 1.0,
                height: 2.0
            }
        );
        let d: DatumArg = "piecewise:0,0;1,1;2,0".parse().unwrap();
        assert_eq!(d.0.eval(1.0), 1.0);
        assert!("constant:1,2".parse::<DatumArg>().is_err());
        assert!("triangular:0,0,1".parse::<DatumArg>().is_err());
        assert!("wave:1".parse::<DatumArg>().is_err());
    }

    #[test]
    fn level_lists() {
        assert_eq!("2..=5".parse::<LevelList>().unwrap().0, vec![2, 3, 4, 5]);
        assert_eq!("1,3".parse::<LevelList>().unwrap().0, vec![1, 3]);
        assert_eq!("limit".parse::<SolveLevel>().unwrap(), SolveLevel::Limit);
        assert_eq!("4".parse::<SolveLevel>().unwrap(), SolveLevel::Level(4));
    }

    #[test]
    fn default_edges() {
        let e = basepoint_edges(8.0, 60).unwrap();
        assert_eq!(e.len(), 61);
        assert_eq!(e[0], 0.0);
        assert!((e[1] - 0.004).abs() < 1e-15);
        assert!((e[12] - 0.5).abs() < 1e-15);
        assert!((e[13] - e[12] - 1.0 / 6.0).abs() < 1e-12);
        assert!((e[60] - 8.5).abs() < 1e-12);
        assert!(e.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn process_grammar() {
        let p = ProcessArgs {
            process: ProcessKind::Poisson,
            k: 1.0,
            theta: 1.0,
            drift: 0.0,
            intensity: 1.0,
            jump: 1.0,
        };
        assert!(p.model().is_err());
        let p = ProcessArgs {
            process: ProcessKind::DriftOnly,
            drift: 2.0,
            ..p
        };
        assert_eq!(p.model().unwrap(), BasepointModel::PureDrift { drift: 2.0 });
    }
}
