//! The `bsc` command line: TOML or flag configuration, command dispatch and
//! artifact writing.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 configuration error, 3 numerical
//! failure. Failures print `{"error": kind, "message": ...}` on stderr.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::bench::{
    convergence_run, mc_estimate, point_set, BenchMethod, ConvergenceConfig, ConvergenceReport, IntegrandSpec,
    LengthSetting, PointSetKind, ZcbModel,
};
use crate::cubature::{CubatureContext, CubatureResult};
use crate::error::Error;
use crate::gp::{condition, Dataset, PriorSpec};
use crate::hyper::{eb_lengthscale, studentize, EbConfig, EbResult};
use crate::kernels::{KernelFamily, KernelSpec, LengthScale, MaternOrder, Structure};
use crate::measures::MeasureSpec;
use crate::polyspace::{total_degree_space, FunctionSpace};
use crate::quadrature::gauss_hermite;

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// Environment variable holding the worker-thread count.
pub const THREADS_ENV: &str = "BSC_THREADS";

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Io(String),
    Core(Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => EXIT_IO,
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Core(e) => match e {
                Error::NotUnisolvent { .. }
                | Error::FactorizationFailed { .. }
                | Error::RankDeficient
                | Error::NegativeVariance { .. } => EXIT_NUMERICAL,
                _ => EXIT_CONFIG,
            },
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Io(_) => "IoError",
            CliError::Config(_) => "ConfigError",
            CliError::Core(e) => e.kind(),
        }
    }

    pub fn message(&self) -> String {
        match self {
            CliError::Io(m) | CliError::Config(m) => m.clone(),
            CliError::Core(e) => e.to_string(),
        }
    }

    pub fn to_json(&self) -> Value {
        json!({ "error": self.kind(), "message": self.message() })
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

// ---------------------------------------------------------------------------
// Configuration

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelBlock {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub family: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ell: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub structure: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eb: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ell_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ell_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureBlock {
    /// `std-gaussian`, `gaussian` or `uniform`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kind: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lower: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub upper: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub variance: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceBlock {
    /// Total degree of `π`; absent means no parametric part.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m: Option<u32>,
    /// Finite coefficient prior `Σ = σ²I` for `posterior`; flat when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma2: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointsBlock {
    /// `grid`, `random` or `file`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kind: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegrandBlock {
    /// `toy`, `zcb`, `expcos` or `file`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    /// CSV of `x_1, …, x_d, f` rows.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepBlock {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ns: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ells: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seeds: Option<Vec<u64>>,
    /// Method labels: `bc`, `nbc`, `mc`, `bsc` (degree from `space.m`) or `bsc-mK`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub methods: Option<Vec<String>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PosteriorBlock {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eval_n: Option<usize>,
    /// Report Student-t bands with the amplitude marginalised.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub student_t: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndowBlock {
    /// `mc`, `gauss-hermite` or `file`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rule: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weights_file: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub json: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub csv: Option<PathBuf>,
}

/// Full run configuration, as read from TOML and overridden by flags.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// `bc`, `bsc`, `nbc`, `square` or `endow`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
    #[serde(default)]
    pub kernel: KernelBlock,
    #[serde(default)]
    pub measure: MeasureBlock,
    #[serde(default)]
    pub space: SpaceBlock,
    #[serde(default)]
    pub points: PointsBlock,
    #[serde(default)]
    pub integrand: IntegrandBlock,
    #[serde(default)]
    pub sweep: SweepBlock,
    #[serde(default)]
    pub posterior: PosteriorBlock,
    #[serde(default)]
    pub endow: EndowBlock,
    #[serde(default)]
    pub output: OutputBlock,
}

macro_rules! overlay_fields {
    ($base:expr, $top:expr; $($field:ident),+) => {
        $( if $top.$field.is_some() { $base.$field = $top.$field.clone(); } )+
    };
}

macro_rules! default_fields {
    ($block:expr; $($field:ident = $value:expr),+) => {
        { $( if $block.$field.is_none() { $block.$field = Some($value); } )+ }
    };
}

impl RunConfig {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| config_err(format!("invalid config: {e}")))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run configs always serialize")
    }

    /// Fields set in `top` replace those in `self`.
    pub fn overlay(mut self, top: &RunConfig) -> Self {
        if top.method.is_some() {
            self.method = top.method.clone();
        }
        overlay_fields!(self.kernel, top.kernel; family, rho, ell, lambda, structure, eb, ell_min, ell_max, grid);
        overlay_fields!(self.measure, top.measure; kind, dim, lower, upper, mean, variance);
        overlay_fields!(self.space, top.space; m, sigma2);
        overlay_fields!(self.points, top.points; kind, n, seed, file);
        overlay_fields!(self.integrand, top.integrand; name, file);
        overlay_fields!(self.sweep, top.sweep; ns, ells, seeds, methods);
        overlay_fields!(self.posterior, top.posterior; x_min, x_max, eval_n, student_t);
        overlay_fields!(self.endow, top.endow; rule, weights_file);
        overlay_fields!(self.output, top.output; json, csv);
        self
    }

    /// Fill command-specific defaults so the echoed config is fully resolved.
    fn with_defaults(mut self, command: CommandKind) -> Self {
        let zcb = command == CommandKind::Zcb;
        let builtin = if self.integrand.file.is_some() { "file" } else if zcb { "zcb" } else { "toy" };
        default_fields!(self.integrand; name = builtin.into());
        let name = self.integrand.name.clone().unwrap_or_default();
        default_fields!(self.kernel;
            family = if zcb { "matern".into() } else { "gaussian".into() },
            lambda = 1.0,
            structure = if zcb { "product".into() } else { "isotropic".into() },
            eb = command == CommandKind::Toy && self.kernel.ell.is_none()
        );
        if self.kernel.family.as_deref() == Some("matern") {
            default_fields!(self.kernel; rho = 2.5);
        }
        if self.kernel.eb == Some(true) {
            default_fields!(self.kernel; ell_min = 0.1, ell_max = 10.0, grid = 60);
        } else {
            default_fields!(self.kernel; ell = if zcb { 0.2 } else { 1.0 });
        }
        if name != "file" {
            default_fields!(self.measure; dim = if name == "zcb" { 10 } else { 1 });
        }
        default_fields!(self.measure; kind = match name.as_str() {
            "zcb" | "expcos" => "uniform".into(),
            _ => "std-gaussian".into(),
        });
        let default_n = match command {
            CommandKind::Toy => 30,
            CommandKind::Zcb => 128,
            CommandKind::Posterior => 4,
            _ => 10,
        };
        if self.points.file.is_none() && self.integrand.file.is_none() {
            default_fields!(self.points;
                kind = if zcb { "random".into() } else { "grid".into() },
                n = default_n,
                seed = 0
            );
        }
        match command {
            CommandKind::Integrate => default_fields!(self; method = "bsc".into()),
            CommandKind::Endow => default_fields!(self.endow; rule = "mc".into()),
            CommandKind::Posterior => default_fields!(self.posterior; x_min = -3.0, x_max = 3.0, eval_n = 201, student_t = false),
            CommandKind::Convergence => default_fields!(self.sweep;
                ns = vec![10, 15, 20, 25, 30],
                seeds = vec![0],
                methods = vec!["bc".into(), "bsc".into()]
            ),
            CommandKind::LengthscaleSweep => default_fields!(self.sweep;
                ells = (0..13).map(|i| 10f64.powf(-1.0 + i as f64 / 6.0)).collect(),
                seeds = vec![0],
                methods = vec!["bc".into(), "bsc".into(), "nbc".into()]
            ),
            CommandKind::Toy => default_fields!(self.sweep; methods = vec!["bc".into(), "bsc".into(), "nbc".into()]),
            CommandKind::Zcb => default_fields!(self.sweep; methods = vec!["bc".into(), "bsc".into(), "mc".into()]),
        }
        if matches!(command, CommandKind::Toy | CommandKind::Convergence | CommandKind::LengthscaleSweep) {
            default_fields!(self.space; m = 3);
        }
        if matches!(command, CommandKind::Zcb) {
            default_fields!(self.space; m = 1);
        }
        self
    }
}

// ---------------------------------------------------------------------------
// Command line

#[derive(Debug, Parser)]
#[command(name = "bsc", version, about = "Bayes–Sard cubature and related integral estimators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum CommandKind {
    Integrate,
    Posterior,
    Convergence,
    LengthscaleSweep,
    Toy,
    Zcb,
    Endow,
}

impl CommandKind {
    fn name(self) -> &'static str {
        match self {
            CommandKind::Integrate => "integrate",
            CommandKind::Posterior => "posterior",
            CommandKind::Convergence => "convergence",
            CommandKind::LengthscaleSweep => "lengthscale-sweep",
            CommandKind::Toy => "toy",
            CommandKind::Zcb => "zcb",
            CommandKind::Endow => "endow",
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate one integral and report mean, variance and weights.
    Integrate(Flags),
    /// Evaluate the posterior mean and standard deviation on a 1-d grid.
    Posterior(Flags),
    /// Error against n for several estimators.
    Convergence(Flags),
    /// Error against the length-scale at fixed nodes.
    LengthscaleSweep(Flags),
    /// The one-dimensional Gaussian toy problem.
    Toy(Flags),
    /// The Vasicek zero-coupon bond benchmark.
    Zcb(Flags),
    /// Uncertainty for a given cubature rule.
    Endow(Flags),
}

#[derive(Debug, Clone, Default, Args)]
struct Flags {
    /// TOML configuration file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// bc | bsc | nbc | square | endow
    #[arg(long)]
    method: Option<String>,
    /// gaussian | matern
    #[arg(long)]
    kernel: Option<String>,
    /// Matérn smoothness: 0.5, 1.5 or 2.5
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    ell: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    /// isotropic | product
    #[arg(long)]
    structure: Option<String>,
    /// Choose the length-scale by empirical Bayes.
    #[arg(long)]
    eb: bool,
    #[arg(long)]
    ell_min: Option<f64>,
    #[arg(long)]
    ell_max: Option<f64>,
    /// Number of log-spaced EB grid points.
    #[arg(long)]
    grid: Option<usize>,
    /// std-gaussian | gaussian | uniform
    #[arg(long)]
    measure: Option<String>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    lower: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    upper: Option<Vec<f64>>,
    #[arg(long = "mean", value_delimiter = ',', allow_hyphen_values = true)]
    measure_mean: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    variance: Option<Vec<f64>>,
    /// Total degree of the polynomial space.
    #[arg(long)]
    m: Option<u32>,
    /// Finite coefficient prior variance (posterior command).
    #[arg(long)]
    sigma2: Option<f64>,
    /// grid | random | file
    #[arg(long)]
    points: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// CSV of node coordinates.
    #[arg(long)]
    nodes: Option<PathBuf>,
    /// toy | zcb | expcos | file
    #[arg(long)]
    integrand: Option<String>,
    /// CSV of `x_1, …, x_d, f` rows.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    ns: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    ells: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    #[arg(long, allow_hyphen_values = true)]
    x_min: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    x_max: Option<f64>,
    #[arg(long)]
    eval_n: Option<usize>,
    /// Student-t bands with the amplitude marginalised.
    #[arg(long)]
    student_t: bool,
    /// mc | gauss-hermite | file
    #[arg(long)]
    rule: Option<String>,
    /// Weights file (one weight per line, or last CSV column).
    #[arg(long)]
    weights: Option<PathBuf>,
    /// JSON result path (also printed to stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    /// CSV output path.
    #[arg(long)]
    csv: Option<PathBuf>,
}

impl Flags {
    fn to_config(&self) -> RunConfig {
        RunConfig {
            method: self.method.clone(),
            kernel: KernelBlock {
                family: self.kernel.clone(),
                rho: self.rho,
                ell: self.ell,
                lambda: self.lambda,
                structure: self.structure.clone(),
                eb: self.eb.then_some(true),
                ell_min: self.ell_min,
                ell_max: self.ell_max,
                grid: self.grid,
            },
            measure: MeasureBlock {
                kind: self.measure.clone(),
                dim: self.dim,
                lower: self.lower.clone(),
                upper: self.upper.clone(),
                mean: self.measure_mean.clone(),
                variance: self.variance.clone(),
            },
            space: SpaceBlock { m: self.m, sigma2: self.sigma2 },
            points: PointsBlock {
                kind: self.points.clone(),
                n: self.n,
                seed: self.seed,
                file: self.nodes.clone(),
            },
            integrand: IntegrandBlock {
                name: self.integrand.clone(),
                file: self.data.clone(),
            },
            sweep: SweepBlock {
                ns: self.ns.clone(),
                ells: self.ells.clone(),
                seeds: self.seeds.clone(),
                methods: self.methods.clone(),
            },
            posterior: PosteriorBlock {
                x_min: self.x_min,
                x_max: self.x_max,
                eval_n: self.eval_n,
                student_t: self.student_t.then_some(true),
            },
            endow: EndowBlock {
                rule: self.rule.clone(),
                weights_file: self.weights.clone(),
            },
            output: OutputBlock {
                json: self.out.clone(),
                csv: self.csv.clone(),
            },
        }
    }
}

// ---------------------------------------------------------------------------
// Resolution of config blocks into library types

fn resolve_family(cfg: &RunConfig) -> CliResult<KernelFamily> {
    match cfg.kernel.family.as_deref().unwrap_or("gaussian") {
        "gaussian" => Ok(KernelFamily::Gaussian),
        "matern" => Ok(KernelFamily::Matern(MaternOrder::from_rho(cfg.kernel.rho.unwrap_or(2.5))?)),
        other => Err(config_err(format!("unknown kernel family '{other}' (expected gaussian or matern)"))),
    }
}

fn resolve_structure(cfg: &RunConfig) -> CliResult<Structure> {
    match cfg.kernel.structure.as_deref().unwrap_or("isotropic") {
        "isotropic" => Ok(Structure::Isotropic),
        "product" => Ok(Structure::Product),
        other => Err(config_err(format!("unknown kernel structure '{other}' (expected isotropic or product)"))),
    }
}

fn resolve_kernel(cfg: &RunConfig, ell: f64) -> CliResult<KernelSpec> {
    let spec = KernelSpec {
        family: resolve_family(cfg)?,
        structure: resolve_structure(cfg)?,
        lengthscale: LengthScale::Shared(ell),
        amplitude: cfg.kernel.lambda.unwrap_or(1.0),
    };
    spec.validate()?;
    Ok(spec)
}

fn resolve_eb(cfg: &RunConfig) -> Option<EbConfig> {
    (cfg.kernel.eb == Some(true)).then(|| EbConfig {
        ell_min: cfg.kernel.ell_min.unwrap_or(0.1),
        ell_max: cfg.kernel.ell_max.unwrap_or(10.0),
        grid: cfg.kernel.grid.unwrap_or(60),
        tolerance: 1e-4,
    })
}

fn resolve_measure(cfg: &RunConfig, d: usize) -> CliResult<MeasureSpec> {
    let m = &cfg.measure;
    if m.dim.is_some_and(|k| k != d) {
        return Err(config_err(format!("measure dimension {} does not match the problem dimension {d}", m.dim.unwrap())));
    }
    let measure = match m.kind.as_deref().unwrap_or("std-gaussian") {
        "std-gaussian" => MeasureSpec::standard_gaussian(d),
        "gaussian" => MeasureSpec::DiagonalGaussian {
            mean: m.mean.clone().unwrap_or_else(|| vec![0.0; d]),
            variance: m.variance.clone().unwrap_or_else(|| vec![1.0; d]),
        },
        "uniform" => MeasureSpec::UniformBox {
            lower: m.lower.clone().unwrap_or_else(|| vec![0.0; d]),
            upper: m.upper.clone().unwrap_or_else(|| vec![1.0; d]),
        },
        other => return Err(config_err(format!("unknown measure '{other}' (expected std-gaussian, gaussian or uniform)"))),
    };
    measure.validate()?;
    if measure.dim() != d {
        return Err(config_err(format!("measure has dimension {} but the problem has dimension {d}", measure.dim())));
    }
    Ok(measure)
}

fn resolve_space(cfg: &RunConfig, d: usize) -> FunctionSpace {
    match cfg.space.m {
        Some(m) => total_degree_space(m, d),
        None => FunctionSpace::empty(d),
    }
}

/// Builtin integrand from the config, if one is selected.
fn resolve_builtin(cfg: &RunConfig) -> CliResult<Option<IntegrandSpec>> {
    let d = cfg.measure.dim.unwrap_or(1);
    let name = cfg.integrand.name.as_deref().unwrap_or("toy");
    if cfg.integrand.file.is_some() && cfg.integrand.name.is_none() {
        return Ok(None);
    }
    match name {
        "toy" => {
            if d != 1 {
                return Err(config_err("the toy integrand is one-dimensional"));
            }
            Ok(Some(IntegrandSpec::Toy))
        }
        "zcb" => Ok(Some(IntegrandSpec::Zcb(ZcbModel::benchmark_dim(d)))),
        "expcos" => Ok(Some(IntegrandSpec::Expcos { dim: d })),
        "file" => Ok(None),
        other => Err(config_err(format!("unknown integrand '{other}' (expected toy, zcb, expcos or file)"))),
    }
}

/// Check that a builtin integrand is paired with its own measure.
fn check_builtin_measure(spec: &IntegrandSpec, measure: &MeasureSpec) -> CliResult<()> {
    if &spec.measure() != measure {
        return Err(config_err(format!(
            "integrand '{}' is defined against {:?}, not {:?}",
            spec.label(),
            spec.measure(),
            measure
        )));
    }
    Ok(())
}

fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
    }
    fs::write(path, text).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

/// Numeric CSV rows; blank lines, `#` comments and a non-numeric header are skipped.
pub fn parse_numeric_csv(text: &str) -> CliResult<Vec<Vec<f64>>> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parsed: Result<Vec<f64>, _> = line.split(',').map(|f| f.trim().parse::<f64>()).collect();
        match parsed {
            Ok(row) => rows.push(row),
            Err(_) if rows.is_empty() => continue,
            Err(_) => return Err(config_err(format!("line {}: expected numeric CSV fields", i + 1))),
        }
    }
    if let Some(first) = rows.first() {
        if rows.iter().any(|r| r.len() != first.len()) {
            return Err(config_err("CSV rows have differing numbers of columns"));
        }
    }
    Ok(rows)
}

fn read_dataset(path: &Path) -> CliResult<Dataset> {
    let rows = parse_numeric_csv(&read_text(path)?)?;
    if rows.is_empty() || rows[0].len() < 2 {
        return Err(config_err(format!("{}: need rows of x_1, …, x_d, f", path.display())));
    }
    let (nodes, values) = rows
        .into_iter()
        .map(|mut r| {
            let f = r.pop().unwrap();
            (r, f)
        })
        .unzip();
    Ok(Dataset::new(nodes, values)?)
}

fn read_nodes(path: &Path) -> CliResult<Vec<Vec<f64>>> {
    let rows = parse_numeric_csv(&read_text(path)?)?;
    if rows.is_empty() {
        return Err(config_err(format!("{}: no nodes", path.display())));
    }
    Ok(rows)
}

fn read_weights(path: &Path) -> CliResult<Vec<f64>> {
    Ok(parse_numeric_csv(&read_text(path)?)?.into_iter().map(|r| *r.last().unwrap()).collect())
}

/// Map unit-cube nodes into the support of the measure (grids) or draw them.
fn generate_nodes(kind: &str, measure: &MeasureSpec, n: usize, seed: u64) -> CliResult<Vec<Vec<f64>>> {
    let d = measure.dim();
    match (kind, measure) {
        ("grid", MeasureSpec::UniformBox { lower, upper }) => {
            let unit = point_set(&PointSetKind::EquispacedGrid { lower: 0.0, upper: 1.0 }, n, d)?;
            Ok(unit
                .into_iter()
                .map(|x| x.iter().enumerate().map(|(j, t)| lower[j] + (upper[j] - lower[j]) * t).collect())
                .collect())
        }
        ("grid", MeasureSpec::StandardGaussian { .. }) => Ok(point_set(&PointSetKind::ScaledSymmetricGrid, n, d)?),
        ("grid", MeasureSpec::DiagonalGaussian { mean, variance }) => {
            let base = point_set(&PointSetKind::ScaledSymmetricGrid, n, d)?;
            Ok(base
                .into_iter()
                .map(|x| x.iter().enumerate().map(|(j, t)| mean[j] + variance[j].sqrt() * t).collect())
                .collect())
        }
        ("random", MeasureSpec::UniformBox { lower, upper }) => {
            let unit = point_set(&PointSetKind::random_unit(seed), n, d)?;
            Ok(unit
                .into_iter()
                .map(|x| x.iter().enumerate().map(|(j, t)| lower[j] + (upper[j] - lower[j]) * t).collect())
                .collect())
        }
        ("random", _) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Ok((0..n).map(|_| measure.sample(&mut rng)).collect())
        }
        (other, _) => Err(config_err(format!("unknown point kind '{other}' (expected grid, random or file)"))),
    }
}

/// The data for single-integral commands, plus the truth when known.
struct Problem {
    measure: MeasureSpec,
    data: Dataset,
    truth: Option<f64>,
}

fn resolve_problem(cfg: &RunConfig) -> CliResult<Problem> {
    if let Some(path) = &cfg.integrand.file {
        if cfg.integrand.name.as_deref().is_some_and(|n| n != "file") {
            return Err(config_err("use either a builtin integrand or a data file, not both"));
        }
        let data = read_dataset(path)?;
        let measure = resolve_measure(cfg, data.dim())?;
        return Ok(Problem { measure, data, truth: None });
    }
    let builtin = resolve_builtin(cfg)?.ok_or_else(|| config_err("integrand 'file' needs --data"))?;
    let d = builtin.dim();
    let measure = resolve_measure(cfg, d)?;
    check_builtin_measure(&builtin, &measure)?;
    let nodes = match &cfg.points.file {
        Some(path) => read_nodes(path)?,
        None => {
            let kind = cfg.points.kind.as_deref().unwrap_or("grid");
            if kind == "file" {
                return Err(config_err("points kind 'file' needs --nodes"));
            }
            generate_nodes(kind, &measure, cfg.points.n.unwrap_or(10), cfg.points.seed.unwrap_or(0))?
        }
    };
    let data = builtin.dataset(nodes)?;
    Ok(Problem { measure, data, truth: Some(builtin.truth()) })
}

/// Fixed `ℓ`, or EB `ℓ̂` from the data.
fn resolve_lengthscale(cfg: &RunConfig, data: &Dataset) -> CliResult<(f64, Option<EbResult>)> {
    match resolve_eb(cfg) {
        Some(eb) => {
            let base = resolve_kernel(cfg, 1.0)?;
            let res = eb_lengthscale(&base, data, &eb)?;
            Ok((res.ell_hat, Some(res)))
        }
        None => Ok((cfg.kernel.ell.unwrap_or(1.0), None)),
    }
}

fn parse_method(label: &str, default_m: u32) -> CliResult<BenchMethod> {
    match label {
        "bc" => Ok(BenchMethod::Bc),
        "nbc" => Ok(BenchMethod::Nbc),
        "mc" => Ok(BenchMethod::Mc),
        "bsc" => Ok(BenchMethod::Bsc { m: default_m }),
        other => other
            .strip_prefix("bsc-m")
            .and_then(|m| m.parse().ok())
            .map(|m| BenchMethod::Bsc { m })
            .ok_or_else(|| config_err(format!("unknown method '{other}' (expected bc, bsc, bsc-mK, nbc or mc)"))),
    }
}

fn eb_json(eb: &Option<EbResult>) -> Value {
    match eb {
        Some(e) => json!({
            "ell_hat": e.ell_hat,
            "log_marginal_at_hat": e.log_marginal,
            "lambda_hat": e.lambda_hat,
            "identifiable": e.identifiable,
        }),
        None => Value::Null,
    }
}

fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

fn emit_json(cfg: &RunConfig, value: &Value) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).expect("JSON values serialize");
    println!("{text}");
    if let Some(path) = &cfg.output.json {
        write_text(path, &(text + "\n"))?;
    }
    Ok(())
}

/// Manifest path next to a CSV artifact: `runs/a.csv` → `runs/a.manifest.json`.
pub fn manifest_path(csv: &Path) -> PathBuf {
    csv.with_extension("manifest.json")
}

fn emit_csv(cfg: &RunConfig, command: CommandKind, csv: &str, extra: Value, started: f64) -> CliResult<()> {
    match &cfg.output.csv {
        Some(path) => {
            write_text(path, csv)?;
            let manifest = json!({
                "tool": "bsc",
                "version": env!("CARGO_PKG_VERSION"),
                "command": command.name(),
                "config": cfg,
                "started_unix": started,
                "finished_unix": unix_now(),
                "csv": path,
                "details": extra,
            });
            let text = serde_json::to_string_pretty(&manifest).expect("JSON values serialize") + "\n";
            write_text(&manifest_path(path), &text)?;
            if let Some(json_path) = &cfg.output.json {
                write_text(json_path, &text)?;
            }
            Ok(())
        }
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

fn run_cubature(method: &str, ctx: &CubatureContext, space: &FunctionSpace, values: &DVector<f64>, weights: Option<DVector<f64>>) -> CliResult<CubatureResult> {
    Ok(match method {
        "bc" => ctx.bc(values)?,
        "bsc" => ctx.bsc(space, values, None)?,
        "nbc" => ctx.normalized_bc(values)?,
        "square" => ctx.bsc_square(space, values)?,
        "endow" => {
            let w = weights.unwrap_or_else(|| DVector::from_element(ctx.n(), 1.0 / ctx.n() as f64));
            ctx.endow(&w, values)?
        }
        other => return Err(config_err(format!("unknown method '{other}' (expected bc, bsc, nbc, square or endow)"))),
    })
}

fn result_json(r: &CubatureResult, truth: Option<f64>) -> Value {
    json!({
        "method": r.method.label(),
        "mean": r.mean,
        "variance": r.variance,
        "sd": r.sd(),
        "weights": r.weights_k,
        "weights_pi": r.weights_pi,
        "diagnostics": r.diagnostics,
        "abs_error": truth.map(|t| (r.mean - t).abs()),
        "rel_error": truth.map(|t| (r.mean - t).abs() / t.abs()),
    })
}

fn weights_csv(nodes: &[Vec<f64>], w: &[f64]) -> String {
    let d = nodes.first().map_or(0, |x| x.len());
    let mut out = String::from("index");
    for j in 0..d {
        let _ = write!(out, ",x{}", j + 1);
    }
    out.push_str(",weight\n");
    for (i, (x, wi)) in nodes.iter().zip(w).enumerate() {
        let _ = write!(out, "{i}");
        for v in x {
            let _ = write!(out, ",{v:e}");
        }
        let _ = writeln!(out, ",{wi:e}");
    }
    out
}

// ---------------------------------------------------------------------------
// Commands

fn cmd_integrate(cfg: &RunConfig) -> CliResult<()> {
    let problem = resolve_problem(cfg)?;
    let d = problem.data.dim();
    let (ell, eb) = resolve_lengthscale(cfg, &problem.data)?;
    let kernel = resolve_kernel(cfg, ell)?;
    let method = cfg.method.as_deref().unwrap_or("bsc");
    let space = match (method, cfg.space.m) {
        ("nbc", _) => FunctionSpace::constant(d),
        ("square", None) => return Err(config_err("method 'square' needs --m")),
        _ => resolve_space(cfg, d),
    };
    let weights = match (&cfg.endow.weights_file, method) {
        (Some(p), "endow") => Some(DVector::from_vec(read_weights(p)?)),
        _ => None,
    };
    let ctx = if method == "square" || method == "endow" {
        CubatureContext::assemble(&kernel, &problem.measure, problem.data.nodes())?
    } else {
        CubatureContext::new(&kernel, &problem.measure, problem.data.nodes())?
    };
    let result = run_cubature(method, &ctx, &space, &problem.data.values_vector(), weights)?;
    let student = if eb.is_some() { Some(studentize(&result, &problem.data, &kernel)?) } else { None };
    let mut out = result_json(&result, problem.truth);
    out["ell"] = json!(ell);
    out["truth"] = json!(problem.truth);
    out["eb"] = eb_json(&eb);
    out["student_t"] = match student {
        Some(t) => json!({
            "location": t.location,
            "scale": t.scale(),
            "dof": t.dof,
            "interval_95": t.interval(0.95)?,
        }),
        None => Value::Null,
    };
    out["config"] = serde_json::to_value(cfg).expect("configs serialize");
    if let Some(path) = &cfg.output.csv {
        write_text(path, &weights_csv(problem.data.nodes(), &result.weights_k))?;
    }
    emit_json(cfg, &out)
}

fn cmd_posterior(cfg: &RunConfig, started: f64) -> CliResult<()> {
    let problem = resolve_problem(cfg)?;
    if problem.data.dim() != 1 {
        return Err(config_err("posterior bands are produced for one-dimensional problems only"));
    }
    let (ell, eb) = resolve_lengthscale(cfg, &problem.data)?;
    let kernel = resolve_kernel(cfg, ell)?;
    let space = resolve_space(cfg, 1);
    let prior = match cfg.space.sigma2 {
        Some(s2) => PriorSpec::isotropic(space, s2),
        None => PriorSpec::flat(space),
    };
    let post = condition(&prior, &kernel, &problem.data)?;
    let student_t = cfg.posterior.student_t == Some(true);
    let scale = if student_t {
        let k = crate::kernels::kernel_matrix(&kernel, problem.data.nodes(), problem.data.nodes())?;
        let f = crate::linalg::jittered_factorize(&k, &crate::linalg::JitterPolicy::default())?;
        f.quad_form(&problem.data.values_vector()) / problem.data.n() as f64
    } else {
        1.0
    };
    let (lo, hi) = (cfg.posterior.x_min.unwrap_or(-3.0), cfg.posterior.x_max.unwrap_or(3.0));
    let m = cfg.posterior.eval_n.unwrap_or(201);
    if m < 2 || !(lo < hi) {
        return Err(config_err("posterior grid needs eval_n ≥ 2 and x_min < x_max"));
    }
    let mut csv = String::from(if student_t { "x,mean,stddev,dof\n" } else { "x,mean,stddev\n" });
    for i in 0..m {
        let x = lo + (hi - lo) * i as f64 / (m - 1) as f64;
        let mean = post.mean(&[x])?;
        let var = post.variance(&[x])?.max(0.0) * scale;
        if student_t {
            let _ = writeln!(csv, "{x:e},{mean:e},{:e},{}", var.sqrt(), problem.data.n());
        } else {
            let _ = writeln!(csv, "{x:e},{mean:e},{:e}", var.sqrt());
        }
    }
    let extra = json!({ "ell": ell, "eb": eb_json(&eb), "nodes": problem.data.nodes(), "values": problem.data.values() });
    emit_csv(cfg, CommandKind::Posterior, &csv, extra, started)
}

fn sweep_methods(cfg: &RunConfig) -> CliResult<Vec<BenchMethod>> {
    let default_m = cfg.space.m.unwrap_or(0);
    let labels = cfg.sweep.methods.clone().unwrap_or_else(|| vec!["bc".into(), "bsc".into()]);
    let mut methods = Vec::new();
    for l in &labels {
        let m = parse_method(l, default_m)?;
        if !methods.contains(&m) {
            methods.push(m);
        }
    }
    Ok(methods)
}

fn sweep_points(cfg: &RunConfig, spec: &IntegrandSpec) -> CliResult<PointSetKind> {
    let measure = spec.measure();
    Ok(match (cfg.points.kind.as_deref().unwrap_or("grid"), &measure) {
        ("grid", MeasureSpec::UniformBox { .. }) => PointSetKind::EquispacedGrid { lower: 0.0, upper: 1.0 },
        ("grid", _) => PointSetKind::ScaledSymmetricGrid,
        ("random", MeasureSpec::UniformBox { .. }) => PointSetKind::random_unit(cfg.points.seed.unwrap_or(0)),
        ("random", _) => return Err(config_err("random nodes for sweeps are drawn from the unit cube; use a uniform-measure integrand")),
        (other, _) => return Err(config_err(format!("sweeps support grid or random points, got '{other}'"))),
    })
}

fn sweep_integrand(cfg: &RunConfig) -> CliResult<IntegrandSpec> {
    let spec = resolve_builtin(cfg)?.ok_or_else(|| config_err("sweeps need a builtin integrand (toy, zcb or expcos)"))?;
    let measure = resolve_measure(cfg, spec.dim())?;
    check_builtin_measure(&spec, &measure)?;
    Ok(spec)
}

fn report_details(report: &ConvergenceReport) -> Value {
    let series: Vec<Value> = report
        .all_series()
        .into_iter()
        .map(|s| {
            json!({
                "method": s.method,
                "setting": s.setting,
                "ns": s.ns,
                "rmse": s.rmse,
                "median_rel_error": s.median_rel,
                "slope": s.slope(),
            })
        })
        .collect();
    let failures: Vec<Value> = report
        .failures()
        .map(|r| json!({ "method": r.method, "n": r.n, "seed": r.seed, "setting": r.setting, "flag": r.flag }))
        .collect();
    json!({ "truth": report.truth, "series": series, "failures": failures, "bench_config": report.config })
}

fn cmd_convergence(cfg: &RunConfig, started: f64) -> CliResult<()> {
    let integrand = sweep_integrand(cfg)?;
    let lengthscales = match resolve_eb(cfg) {
        Some(eb) => vec![LengthSetting::Eb(eb)],
        None => match &cfg.sweep.ells {
            Some(ells) => ells.iter().map(|&l| LengthSetting::Fixed(l)).collect(),
            None => vec![LengthSetting::Fixed(cfg.kernel.ell.unwrap_or(1.0))],
        },
    };
    let config = ConvergenceConfig {
        points: sweep_points(cfg, &integrand)?,
        integrand,
        methods: sweep_methods(cfg)?,
        kernel: resolve_family(cfg)?,
        structure: resolve_structure(cfg)?,
        lengthscales,
        ns: cfg.sweep.ns.clone().unwrap_or_else(|| vec![10, 15, 20, 25, 30]),
        seeds: cfg.sweep.seeds.clone().unwrap_or_else(|| vec![0]),
    };
    let report = convergence_run(&config)?;
    emit_csv(cfg, CommandKind::Convergence, &report.csv(), report_details(&report), started)
}

fn cmd_lengthscale_sweep(cfg: &RunConfig, started: f64) -> CliResult<()> {
    let integrand = sweep_integrand(cfg)?;
    let ells = cfg.sweep.ells.clone().ok_or_else(|| config_err("lengthscale-sweep needs --ells"))?;
    let config = ConvergenceConfig {
        points: sweep_points(cfg, &integrand)?,
        integrand,
        methods: sweep_methods(cfg)?.into_iter().filter(|m| *m != BenchMethod::Mc).collect(),
        kernel: resolve_family(cfg)?,
        structure: resolve_structure(cfg)?,
        lengthscales: ells.iter().map(|&l| LengthSetting::Fixed(l)).collect(),
        ns: vec![cfg.points.n.unwrap_or(10)],
        seeds: cfg.sweep.seeds.clone().unwrap_or_else(|| vec![0]),
    };
    let report = convergence_run(&config)?;
    emit_csv(cfg, CommandKind::LengthscaleSweep, &report.csv(), report_details(&report), started)
}

/// Shared body of `toy` and `zcb`: every requested estimator on one node set.
fn cmd_benchmark(cfg: &RunConfig, command: CommandKind, started: f64) -> CliResult<()> {
    let problem = resolve_problem(cfg)?;
    let truth = problem.truth.expect("builtin integrands carry their truth");
    let d = problem.data.dim();
    let (ell, eb) = resolve_lengthscale(cfg, &problem.data)?;
    let kernel = resolve_kernel(cfg, ell)?;
    let values = problem.data.values_vector();
    let n = problem.data.n();
    let seed = cfg.points.seed.unwrap_or(0);
    let mut results = Vec::new();
    let mut csv = String::from(crate::bench::CSV_HEADER);
    csv.push('\n');
    let methods = sweep_methods(cfg)?;
    let ctx = if methods.iter().any(|m| *m != BenchMethod::Mc) {
        Some(CubatureContext::new(&kernel, &problem.measure, problem.data.nodes())?)
    } else {
        None
    };
    for m in methods {
        let (label, mean, sigma, jitter) = match m {
            BenchMethod::Mc => {
                let builtin = resolve_builtin(cfg)?.expect("benchmarks use builtin integrands");
                let v = mc_estimate(|x| builtin.eval(x).unwrap_or(f64::NAN), &problem.measure, n, seed)?;
                (m.label(), v, None, None)
            }
            _ => {
                let ctx = ctx.as_ref().expect("context built for kernel methods");
                let r = match m {
                    BenchMethod::Bc => ctx.bc(&values)?,
                    BenchMethod::Nbc => ctx.normalized_bc(&values)?,
                    BenchMethod::Bsc { m } => ctx.bsc(&total_degree_space(m, d), &values, None)?,
                    BenchMethod::Mc => unreachable!(),
                };
                (m.label(), r.mean, Some(r.sd()), Some(r.diagnostics.jitter_used))
            }
        };
        let err = (mean - truth).abs();
        let rel = err / truth.abs();
        let _ = writeln!(
            csv,
            "{label},{n},{d},{},{err:e},{rel:e},{},{},{seed}",
            if m == BenchMethod::Mc { String::new() } else { format!("{ell:e}") },
            sigma.map(|s| format!("{s:e}")).unwrap_or_default(),
            jitter.map(|s| format!("{s:e}")).unwrap_or_default(),
        );
        results.push(json!({ "method": label, "mean": mean, "sd": sigma, "abs_error": err, "rel_error": rel }));
    }
    let out = json!({
        "command": command.name(),
        "truth": truth,
        "n": n,
        "d": d,
        "ell": ell,
        "eb": eb_json(&eb),
        "results": results,
        "config": cfg,
    });
    if cfg.output.csv.is_some() {
        emit_csv(cfg, command, &csv, out.clone(), started)?;
    }
    if cfg.output.csv.is_none() || cfg.output.json.is_none() {
        println!("{}", serde_json::to_string_pretty(&out).expect("JSON values serialize"));
    }
    Ok(())
}

fn cmd_endow(cfg: &RunConfig) -> CliResult<()> {
    let rule = cfg.endow.rule.as_deref().unwrap_or("mc");
    let (ell, _) = (cfg.kernel.ell.unwrap_or(1.0), ());
    let kernel = resolve_kernel(cfg, ell)?;
    let (measure, data, weights, truth) = match rule {
        "mc" => {
            let mut c = cfg.clone();
            c.points.kind = Some("random".into());
            let p = resolve_problem(&c)?;
            let n = p.data.n();
            (p.measure, p.data, DVector::from_element(n, 1.0 / n as f64), p.truth)
        }
        "gauss-hermite" => {
            let n = cfg.points.n.unwrap_or(5);
            let (x, w) = gauss_hermite(n)?;
            let mut c = cfg.clone();
            c.points.file = None;
            let builtin = resolve_builtin(&c)?.ok_or_else(|| config_err("gauss-hermite rule needs a builtin integrand"))?;
            let measure = resolve_measure(&c, 1)?;
            if measure != MeasureSpec::standard_gaussian(1) {
                return Err(config_err("gauss-hermite rule is defined for the standard Gaussian in one dimension"));
            }
            check_builtin_measure(&builtin, &measure)?;
            let data = builtin.dataset(x.into_iter().map(|v| vec![v]).collect())?;
            (measure, data, DVector::from_vec(w), Some(builtin.truth()))
        }
        "file" => {
            let path = cfg.endow.weights_file.as_ref().ok_or_else(|| config_err("rule 'file' needs --weights"))?;
            let w = read_weights(path)?;
            let p = resolve_problem(cfg)?;
            (p.measure, p.data, DVector::from_vec(w), p.truth)
        }
        other => return Err(config_err(format!("unknown rule '{other}' (expected mc, gauss-hermite or file)"))),
    };
    let ctx = CubatureContext::assemble(&kernel, &measure, data.nodes())?;
    let r = ctx.endow(&weights, &data.values_vector())?;
    let mut out = result_json(&r, truth);
    out["rule"] = json!(rule);
    out["truth"] = json!(truth);
    out["config"] = serde_json::to_value(cfg).expect("configs serialize");
    emit_json(cfg, &out)
}

fn configure_threads() {
    if let Some(n) = std::env::var(THREADS_ENV).ok().and_then(|v| v.parse::<usize>().ok()) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

fn dispatch(command: CommandKind, flags: &Flags) -> CliResult<()> {
    let started = unix_now();
    let file_cfg = match &flags.config {
        Some(path) => RunConfig::from_toml(&read_text(path)?)?,
        None => RunConfig::default(),
    };
    let cfg = file_cfg.overlay(&flags.to_config()).with_defaults(command);
    match command {
        CommandKind::Integrate => cmd_integrate(&cfg),
        CommandKind::Posterior => cmd_posterior(&cfg, started),
        CommandKind::Convergence => cmd_convergence(&cfg, started),
        CommandKind::LengthscaleSweep => cmd_lengthscale_sweep(&cfg, started),
        CommandKind::Toy | CommandKind::Zcb => cmd_benchmark(&cfg, command, started),
        CommandKind::Endow => cmd_endow(&cfg),
    }
}

/// Parse `args` (program name first), run the command and return the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return EXIT_OK;
            }
            let err = CliError::Config(e.to_string().trim().to_string());
            eprintln!("{}", err.to_json());
            return err.exit_code();
        }
    };
    configure_threads();
    let (command, flags) = match &cli.command {
        Command::Integrate(f) => (CommandKind::Integrate, f),
        Command::Posterior(f) => (CommandKind::Posterior, f),
        Command::Convergence(f) => (CommandKind::Convergence, f),
        Command::LengthscaleSweep(f) => (CommandKind::LengthscaleSweep, f),
        Command::Toy(f) => (CommandKind::Toy, f),
        Command::Zcb(f) => (CommandKind::Zcb, f),
        Command::Endow(f) => (CommandKind::Endow, f),
    };
    match dispatch(command, flags) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.exit_code()
        }
    }
}
