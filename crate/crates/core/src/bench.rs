//! Benchmark integrands with exact reference values, node generators,
//! fill-distance diagnostics, the Monte Carlo baseline and the
//! convergence-rate harness.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Open01;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::cubature::CubatureContext;
use crate::error::{Error, Result};
use crate::gp::Dataset;
use crate::hyper::{eb_lengthscale, EbConfig};
use crate::kernels::{KernelFamily, KernelSpec, Structure};
use crate::measures::MeasureSpec;
use crate::polyspace::{total_degree_space, FunctionSpace};

/// `∫ f dN(0, 1)` for [`toy_integrand`], from 30-digit quadrature.
pub const TOY_TRUTH: f64 = 2.069_264_103_255_239_5;

/// `exp(sin 2x − x²/5) + x²`.
pub fn toy_integrand(x: f64) -> f64 {
    ((2.0 * x).sin() - x * x / 5.0).exp() + x * x
}

pub fn toy_truth() -> f64 {
    TOY_TRUTH
}

/// `∏_j eˣʲ cos(2xⱼ)`, integrated against the uniform measure on `[0, 1]^d`.
pub fn expcos_integrand(x: &[f64]) -> f64 {
    x.iter().map(|t| t.exp() * (2.0 * t).cos()).product()
}

pub fn expcos_truth(d: usize) -> f64 {
    let one = (std::f64::consts::E * (2f64.cos() + 2.0 * 2f64.sin()) - 1.0) / 5.0;
    one.powi(d as i32)
}

/// Vasicek short-rate model discretized by Euler–Maruyama.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZcbModel {
    pub kappa: f64,
    pub theta: f64,
    pub sigma: f64,
    pub r0: f64,
    pub maturity: f64,
    /// Number of Euler steps `D`; the integral has dimension `D − 1`.
    pub steps: usize,
}

impl ZcbModel {
    pub fn benchmark(steps: usize) -> Self {
        ZcbModel {
            kappa: 0.181_730_3,
            theta: 0.082_539_895_7,
            sigma: 0.012_590_1,
            r0: 0.021_673,
            maturity: 5.0,
            steps,
        }
    }

    /// Benchmark parameters with integral dimension `d`.
    pub fn benchmark_dim(d: usize) -> Self {
        ZcbModel::benchmark(d + 1)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [self.kappa, self.theta, self.maturity].iter().all(|v| *v > 0.0 && v.is_finite());
        if !positive || !(self.sigma >= 0.0) || !self.r0.is_finite() {
            return Err(Error::InvalidParameter("ZCB model needs kappa, theta, T > 0 and sigma ≥ 0".into()));
        }
        if self.steps < 2 {
            return Err(Error::InvalidParameter("ZCB model needs at least 2 Euler steps".into()));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.steps - 1
    }

    pub fn dt(&self) -> f64 {
        self.maturity / self.steps as f64
    }

    /// Rates `r_0, …, r_{D−1}` driven by standard normal increments `x`.
    pub fn short_rates(&self, x: &[f64]) -> Vec<f64> {
        let dt = self.dt();
        let vol = self.sigma * dt.sqrt();
        let mut rates = Vec::with_capacity(self.steps);
        let mut r = self.r0;
        rates.push(r);
        for &xi in x {
            r += self.kappa * (self.theta - r) * dt + vol * xi;
            rates.push(r);
        }
        rates
    }

    /// Discount factor `exp(−Δt Σ rᵢ)` along the path driven by `x`.
    pub fn discount(&self, x: &[f64]) -> f64 {
        (-self.dt() * self.short_rates(x).iter().sum::<f64>()).exp()
    }

    /// Bond price from the Gaussian moment-generating function of the
    /// (affine in `x`) exponent.
    pub fn truth(&self) -> f64 {
        let dt = self.dt();
        let noiseless = self.short_rates(&vec![0.0; self.dim()]);
        let mean = -dt * noiseless.iter().sum::<f64>();
        let decay = 1.0 - self.kappa * dt;
        let vol = self.sigma * dt.sqrt();
        // coefficient of x_j in the exponent: −Δt Σ_{i ≥ j} decay^{i−j} vol
        let var: f64 = (1..self.steps)
            .map(|j| {
                let c: f64 = (j..self.steps).map(|i| decay.powi((i - j) as i32)).sum();
                (dt * vol * c).powi(2)
            })
            .sum();
        (mean + 0.5 * var).exp()
    }
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal is valid")
}

/// ZCB integrand on the open unit cube: each `u_j` is mapped through the
/// standard normal quantile before running the rate recursion.
pub fn zcb_integrand(u: &[f64], model: &ZcbModel) -> Result<f64> {
    if u.len() != model.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), found: u.len() });
    }
    if let Some(index) = u.iter().position(|&v| !(v > 0.0 && v < 1.0)) {
        return Err(Error::DomainBoundary { index, value: u[index] });
    }
    let normal = std_normal();
    let x: Vec<f64> = u.iter().map(|&v| normal.inverse_cdf(v)).collect();
    Ok(model.discount(&x))
}

pub fn zcb_truth(model: &ZcbModel) -> f64 {
    model.truth()
}

/// Which node generator to use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PointSetKind {
    /// Grid over `[lower, upper]^d`.
    EquispacedGrid { lower: f64, upper: f64 },
    /// Grid over `[−√n, √n]^d`.
    ScaledSymmetricGrid,
    /// Independent uniform draws from the open box `(lower, upper)^d`.
    RandomUniformBox {
        seed: u64,
        #[serde(default)]
        lower: f64,
        #[serde(default = "one")]
        upper: f64,
    },
    Explicit { points: Vec<Vec<f64>> },
}

fn one() -> f64 {
    1.0
}

impl PointSetKind {
    pub fn random_unit(seed: u64) -> Self {
        PointSetKind::RandomUniformBox { seed, lower: 0.0, upper: 1.0 }
    }

    /// Same kind with a different seed; deterministic kinds are unchanged.
    pub fn reseeded(&self, seed: u64) -> Self {
        match self {
            PointSetKind::RandomUniformBox { lower, upper, .. } => PointSetKind::RandomUniformBox {
                seed,
                lower: *lower,
                upper: *upper,
            },
            other => other.clone(),
        }
    }

    pub fn is_random(&self) -> bool {
        matches!(self, PointSetKind::RandomUniformBox { .. })
    }
}

fn linspace(lo: f64, hi: f64, m: usize) -> Vec<f64> {
    if m == 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..m).map(|i| if i == m - 1 { hi } else { lo + (hi - lo) * i as f64 / (m - 1) as f64 }).collect()
}

/// `n` points of the tensor grid with `m = ⌈n^{1/d}⌉` points per axis,
/// keeping every `(m^d/n)`-th grid point when `m^d > n`.
fn thinned_grid(lo: f64, hi: f64, n: usize, d: usize) -> Vec<Vec<f64>> {
    let mut m = (n as f64).powf(1.0 / d as f64).round().max(1.0) as usize;
    while m.pow(d as u32) < n {
        m += 1;
    }
    let axis = linspace(lo, hi, m);
    let total = m.pow(d as u32);
    (0..n)
        .map(|i| {
            let mut idx = (i as u128 * total as u128 / n as u128) as usize;
            let mut x = vec![0.0; d];
            for xj in x.iter_mut() {
                *xj = axis[idx % m];
                idx /= m;
            }
            x
        })
        .collect()
}

pub fn point_set(kind: &PointSetKind, n: usize, d: usize) -> Result<Vec<Vec<f64>>> {
    if n == 0 || d == 0 {
        return Err(Error::InvalidParameter("point sets need n ≥ 1 and d ≥ 1".into()));
    }
    match kind {
        PointSetKind::EquispacedGrid { lower, upper } => {
            if !(lower < upper) {
                return Err(Error::InvalidParameter(format!("grid bounds must satisfy lower < upper, got [{lower}, {upper}]")));
            }
            Ok(thinned_grid(*lower, *upper, n, d))
        }
        PointSetKind::ScaledSymmetricGrid => {
            let r = (n as f64).sqrt();
            Ok(thinned_grid(-r, r, n, d))
        }
        PointSetKind::RandomUniformBox { seed, lower, upper } => {
            if !(lower < upper) {
                return Err(Error::InvalidParameter(format!("box bounds must satisfy lower < upper, got [{lower}, {upper}]")));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            Ok((0..n)
                .map(|_| {
                    (0..d)
                        .map(|_| {
                            let u: f64 = rng.sample(Open01);
                            lower + (upper - lower) * u
                        })
                        .collect()
                })
                .collect())
        }
        PointSetKind::Explicit { points } => {
            if points.len() != n {
                return Err(Error::DimensionMismatch { expected: n, found: points.len() });
            }
            if let Some(p) = points.iter().find(|p| p.len() != d) {
                return Err(Error::DimensionMismatch { expected: d, found: p.len() });
            }
            Ok(points.clone())
        }
    }
}

pub const FILL_GRID_LIMIT: u128 = 10_000_000;

/// `sup_x min_i ‖x − xᵢ‖` over the box, approximated on a
/// `resolution^d` evaluation grid.
pub fn fill_distance(nodes: &[Vec<f64>], lower: &[f64], upper: &[f64], resolution: usize) -> Result<f64> {
    let d = lower.len();
    if upper.len() != d {
        return Err(Error::DimensionMismatch { expected: d, found: upper.len() });
    }
    if resolution < 2 {
        return Err(Error::InvalidParameter("fill distance needs resolution ≥ 2".into()));
    }
    if nodes.is_empty() {
        return Err(Error::InvalidParameter("fill distance of an empty node set".into()));
    }
    if let Some(x) = nodes.iter().find(|x| x.len() != d) {
        return Err(Error::DimensionMismatch { expected: d, found: x.len() });
    }
    let points = (resolution as u128).checked_pow(d as u32).unwrap_or(u128::MAX);
    if points > FILL_GRID_LIMIT {
        return Err(Error::GridTooLarge { points, limit: FILL_GRID_LIMIT });
    }
    let axes: Vec<Vec<f64>> = (0..d).map(|j| linspace(lower[j], upper[j], resolution)).collect();
    let h = (0..points as usize)
        .into_par_iter()
        .map(|mut idx| {
            let x: Vec<f64> = axes
                .iter()
                .map(|axis| {
                    let v = axis[idx % resolution];
                    idx /= resolution;
                    v
                })
                .collect();
            nodes
                .iter()
                .map(|y| x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
                .fold(f64::INFINITY, f64::min)
                .sqrt()
        })
        .reduce(|| 0.0, f64::max);
    Ok(h)
}

/// Sample mean of `n` evaluations at independent draws from `measure`.
pub fn mc_estimate(f: impl Fn(&[f64]) -> f64, measure: &MeasureSpec, n: usize, seed: u64) -> Result<f64> {
    Ok(mc_summary(f, measure, n, seed)?.mean)
}

/// Monte Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McSummary {
    pub mean: f64,
    pub std_error: f64,
    pub n: usize,
}

/// Same draws as [`mc_estimate`], with Welford accumulation of the variance.
pub fn mc_summary(f: impl Fn(&[f64]) -> f64, measure: &MeasureSpec, n: usize, seed: u64) -> Result<McSummary> {
    measure.validate()?;
    if n == 0 {
        return Err(Error::InvalidParameter("Monte Carlo needs n ≥ 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut mean, mut m2) = (0.0, 0.0);
    for i in 0..n {
        let v = f(&measure.sample(&mut rng));
        let delta = v - mean;
        mean += delta / (i + 1) as f64;
        m2 += delta * (v - mean);
    }
    let std_error = if n > 1 { (m2 / (n - 1) as f64 / n as f64).sqrt() } else { f64::INFINITY };
    Ok(McSummary { mean, std_error, n })
}

/// Built-in integrand with its measure and reference value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum IntegrandSpec {
    /// One-dimensional toy problem against `N(0, 1)`.
    Toy,
    /// Bond price on the unit cube of dimension `steps − 1`.
    Zcb(ZcbModel),
    /// Smooth product integrand on `[0, 1]^dim`.
    Expcos { dim: usize },
}

impl IntegrandSpec {
    pub fn label(&self) -> &'static str {
        match self {
            IntegrandSpec::Toy => "toy",
            IntegrandSpec::Zcb(_) => "zcb",
            IntegrandSpec::Expcos { .. } => "expcos",
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            IntegrandSpec::Toy => 1,
            IntegrandSpec::Zcb(m) => m.dim(),
            IntegrandSpec::Expcos { dim } => *dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            IntegrandSpec::Toy => Ok(()),
            IntegrandSpec::Zcb(m) => m.validate(),
            IntegrandSpec::Expcos { dim } if *dim >= 1 => Ok(()),
            IntegrandSpec::Expcos { .. } => Err(Error::InvalidParameter("expcos needs dim ≥ 1".into())),
        }
    }

    pub fn measure(&self) -> MeasureSpec {
        match self {
            IntegrandSpec::Toy => MeasureSpec::standard_gaussian(1),
            _ => MeasureSpec::unit_cube(self.dim()),
        }
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: x.len() });
        }
        match self {
            IntegrandSpec::Toy => Ok(toy_integrand(x[0])),
            IntegrandSpec::Zcb(m) => zcb_integrand(x, m),
            IntegrandSpec::Expcos { .. } => Ok(expcos_integrand(x)),
        }
    }

    pub fn truth(&self) -> f64 {
        match self {
            IntegrandSpec::Toy => TOY_TRUTH,
            IntegrandSpec::Zcb(m) => m.truth(),
            IntegrandSpec::Expcos { dim } => expcos_truth(*dim),
        }
    }

    /// Default node generator for this integrand.
    pub fn default_points(&self) -> PointSetKind {
        match self {
            IntegrandSpec::Toy => PointSetKind::ScaledSymmetricGrid,
            IntegrandSpec::Zcb(_) => PointSetKind::random_unit(0),
            IntegrandSpec::Expcos { .. } => PointSetKind::EquispacedGrid { lower: 0.0, upper: 1.0 },
        }
    }

    pub fn dataset(&self, nodes: Vec<Vec<f64>>) -> Result<Dataset> {
        let values = nodes.iter().map(|x| self.eval(x)).collect::<Result<Vec<_>>>()?;
        Dataset::new(nodes, values)
    }
}

/// Estimator evaluated by the harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case", deny_unknown_fields)]
pub enum BenchMethod {
    Bc,
    /// BSC with `π = Π_m`.
    Bsc { m: u32 },
    Nbc,
    Mc,
}

impl BenchMethod {
    pub fn label(&self) -> String {
        match self {
            BenchMethod::Bc => "bc".into(),
            BenchMethod::Bsc { m } => format!("bsc-m{m}"),
            BenchMethod::Nbc => "nbc".into(),
            BenchMethod::Mc => "mc".into(),
        }
    }

    fn uses_kernel(&self) -> bool {
        !matches!(self, BenchMethod::Mc)
    }
}

/// Fixed length-scale or empirical Bayes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum LengthSetting {
    Fixed(f64),
    Eb(EbConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceConfig {
    pub integrand: IntegrandSpec,
    pub methods: Vec<BenchMethod>,
    pub kernel: KernelFamily,
    #[serde(default)]
    pub structure: Structure,
    pub lengthscales: Vec<LengthSetting>,
    pub ns: Vec<usize>,
    pub points: PointSetKind,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

impl ConvergenceConfig {
    pub fn validate(&self) -> Result<()> {
        self.integrand.validate()?;
        if self.methods.is_empty() || self.ns.is_empty() || self.seeds.is_empty() {
            return Err(Error::InvalidParameter("convergence runs need methods, ns and seeds".into()));
        }
        if self.ns.contains(&0) {
            return Err(Error::InvalidParameter("every n must be at least 1".into()));
        }
        if self.methods.iter().any(|m| m.uses_kernel()) && self.lengthscales.is_empty() {
            return Err(Error::InvalidParameter("kernel methods need at least one length-scale setting".into()));
        }
        for l in &self.lengthscales {
            match l {
                LengthSetting::Fixed(ell) if !(*ell > 0.0 && ell.is_finite()) => {
                    return Err(Error::InvalidParameter(format!("length-scale must be positive, got {ell}")));
                }
                LengthSetting::Eb(c) => c.validate()?,
                _ => {}
            }
        }
        Ok(())
    }

    fn kernel_spec(&self, ell: f64) -> KernelSpec {
        KernelSpec {
            family: self.kernel,
            structure: self.structure,
            lengthscale: crate::kernels::LengthScale::Shared(ell),
            amplitude: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub method: String,
    pub n: usize,
    pub d: usize,
    /// Length-scale actually used (`ℓ̂` under EB); `None` for Monte Carlo.
    pub ell: Option<f64>,
    /// Index into the configured length-scale settings.
    pub setting: usize,
    pub seed: u64,
    pub estimate: Option<f64>,
    pub abs_error: Option<f64>,
    pub rel_error: Option<f64>,
    pub sigma: Option<f64>,
    pub jitter: Option<f64>,
    /// Error kind when the row could not be computed.
    pub flag: Option<String>,
}

pub const CSV_HEADER: &str = "method,n,d,ell,error,rel_error,sigma,jitter,seed";

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

impl ConvergenceRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.method,
            self.n,
            self.d,
            opt(self.ell),
            opt(self.abs_error),
            opt(self.rel_error),
            opt(self.sigma),
            opt(self.jitter),
            self.seed
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual of the log-log fit.
    pub residual: f64,
    pub n_min: usize,
    pub n_max: usize,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub config: ConvergenceConfig,
    pub truth: f64,
    pub rows: Vec<ConvergenceRow>,
}

/// Errors aggregated over seeds for one `(method, setting)` at each `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorSeries {
    pub method: String,
    pub setting: usize,
    pub ns: Vec<usize>,
    /// Root-mean-square absolute error over the seeds that succeeded.
    pub rmse: Vec<f64>,
    pub median_rel: Vec<f64>,
}

impl ErrorSeries {
    pub fn slope(&self) -> Option<SlopeFit> {
        fit_slope(&self.ns, &self.rmse)
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

impl ConvergenceReport {
    pub fn csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.csv_line());
            out.push('\n');
        }
        out
    }

    pub fn series(&self, method: &str, setting: usize) -> Option<ErrorSeries> {
        let mut ns: Vec<usize> = self
            .rows
            .iter()
            .filter(|r| r.method == method && r.setting == setting && r.abs_error.is_some())
            .map(|r| r.n)
            .collect();
        ns.sort_unstable();
        ns.dedup();
        if ns.is_empty() {
            return None;
        }
        let mut rmse = Vec::new();
        let mut median_rel = Vec::new();
        for &n in &ns {
            let rows: Vec<&ConvergenceRow> = self
                .rows
                .iter()
                .filter(|r| r.method == method && r.setting == setting && r.n == n && r.abs_error.is_some())
                .collect();
            let sq: f64 = rows.iter().map(|r| r.abs_error.unwrap().powi(2)).sum();
            rmse.push((sq / rows.len() as f64).sqrt());
            median_rel.push(median(rows.iter().map(|r| r.rel_error.unwrap()).collect()));
        }
        Some(ErrorSeries { method: method.to_string(), setting, ns, rmse, median_rel })
    }

    /// One series per `(method, setting)` present in the rows.
    pub fn all_series(&self) -> Vec<ErrorSeries> {
        let mut keys: Vec<(String, usize)> = self.rows.iter().map(|r| (r.method.clone(), r.setting)).collect();
        keys.dedup();
        let mut seen = Vec::new();
        for k in keys {
            if !seen.contains(&k) {
                seen.push(k);
            }
        }
        seen.into_iter().filter_map(|(m, s)| self.series(&m, s)).collect()
    }

    pub fn failures(&self) -> impl Iterator<Item = &ConvergenceRow> {
        self.rows.iter().filter(|r| r.flag.is_some())
    }
}

fn ols(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let res = (xs.iter().zip(ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum::<f64>() / k).sqrt();
    (slope, intercept, res)
}

/// Log-log least-squares slope of `err` against `n`.
///
/// The fit uses the longest contiguous stretch over which the error strictly
/// decreases, then drops its smallest `n` values as pre-asymptotic: two when
/// at least five points remain, one when four remain, none otherwise.
pub fn fit_slope(ns: &[usize], errs: &[f64]) -> Option<SlopeFit> {
    if ns.len() != errs.len() || ns.len() < 2 {
        return None;
    }
    let mut order: Vec<usize> = (0..ns.len()).filter(|&i| errs[i] > 0.0 && errs[i].is_finite()).collect();
    order.sort_by_key(|&i| ns[i]);
    let (mut best, mut start) = ((0, 0), 0);
    for k in 1..=order.len() {
        let run_ends = k == order.len() || errs[order[k]] >= errs[order[k - 1]] || ns[order[k]] == ns[order[k - 1]];
        if run_ends {
            if k - start > best.1 - best.0 {
                best = (start, k);
            }
            start = k;
        }
    }
    let run = &order[best.0..best.1];
    if run.len() < 2 {
        return None;
    }
    let drop = match run.len() {
        0..=3 => 0,
        4 => 1,
        _ => 2,
    };
    let run = &run[drop..];
    let xs: Vec<f64> = run.iter().map(|&i| (ns[i] as f64).ln()).collect();
    let ys: Vec<f64> = run.iter().map(|&i| errs[i].ln()).collect();
    let (slope, intercept, residual) = ols(&xs, &ys);
    Some(SlopeFit {
        slope,
        intercept,
        residual,
        n_min: ns[run[0]],
        n_max: ns[*run.last().unwrap()],
        points: run.len(),
    })
}

/// Super-polynomial decay check: for every integer `p ≤ max_p`, the error at
/// `n_test` lies below `C_p n_test^{−p}`, with `C_p` the log-least-squares
/// fit of `err ≈ C_p n^{−p}` to the reference points.
pub fn beats_polynomial_extrapolation(ns: &[usize], errs: &[f64], n_test: usize, err_test: f64, max_p: u32) -> bool {
    let logs: Vec<(f64, f64)> = ns.iter().zip(errs).map(|(&n, &e)| ((n as f64).ln(), e.ln())).collect();
    let k = logs.len() as f64;
    (1..=max_p).all(|p| {
        let log_c = logs.iter().map(|(ln, le)| le + p as f64 * ln).sum::<f64>() / k;
        err_test.ln() < log_c - p as f64 * (n_test as f64).ln()
    })
}

struct Task {
    setting: usize,
    n: usize,
    seed: u64,
}

fn method_rank(methods: &[BenchMethod], label: &str) -> usize {
    methods.iter().position(|m| m.label() == label).unwrap_or(usize::MAX)
}

/// Evaluate every `(length-scale setting, n, seed)` combination for every
/// method; rows are returned sorted by `(method, setting, n, seed)`.
pub fn convergence_run(config: &ConvergenceConfig) -> Result<ConvergenceReport> {
    config.validate()?;
    let d = config.integrand.dim();
    let measure = config.integrand.measure();
    let truth = config.integrand.truth();
    let kernel_methods: Vec<BenchMethod> = config.methods.iter().copied().filter(|m| m.uses_kernel()).collect();
    let wants_mc = config.methods.contains(&BenchMethod::Mc);

    let mut tasks = Vec::new();
    for &n in &config.ns {
        for &seed in &config.seeds {
            for setting in 0..config.lengthscales.len() {
                if !kernel_methods.is_empty() {
                    tasks.push(Task { setting, n, seed });
                }
            }
        }
    }

    let failed_row = |method: String, n: usize, setting: usize, seed: u64, ell: Option<f64>, e: &Error| ConvergenceRow {
        method,
        n,
        d,
        ell,
        setting,
        seed,
        estimate: None,
        abs_error: None,
        rel_error: None,
        sigma: None,
        jitter: None,
        flag: Some(e.kind().to_string()),
    };

    let mut rows: Vec<ConvergenceRow> = tasks
        .par_iter()
        .flat_map_iter(|t| {
            let labels: Vec<String> = kernel_methods.iter().map(|m| m.label()).collect();
            let outcome = (|| -> Result<(f64, CubatureContext, Dataset)> {
                let nodes = point_set(&config.points.reseeded(t.seed), t.n, d)?;
                let data = config.integrand.dataset(nodes)?;
                let ell = match config.lengthscales[t.setting] {
                    LengthSetting::Fixed(ell) => ell,
                    LengthSetting::Eb(eb) => eb_lengthscale(&config.kernel_spec(1.0), &data, &eb)?.ell_hat,
                };
                let ctx = CubatureContext::new(&config.kernel_spec(ell), &measure, data.nodes())?;
                Ok((ell, ctx, data))
            })();
            let rows: Vec<ConvergenceRow> = match outcome {
                Err(e) => labels.into_iter().map(|l| failed_row(l, t.n, t.setting, t.seed, None, &e)).collect(),
                Ok((ell, ctx, data)) => {
                    let values = data.values_vector();
                    kernel_methods
                        .iter()
                        .map(|m| {
                            let res = match m {
                                BenchMethod::Bc => ctx.bc(&values),
                                BenchMethod::Bsc { m } => ctx.bsc(&total_degree_space(*m, d), &values, None),
                                BenchMethod::Nbc => ctx.normalized_bc(&values),
                                BenchMethod::Mc => unreachable!("filtered above"),
                            };
                            match res {
                                Ok(r) => ConvergenceRow {
                                    method: m.label(),
                                    n: t.n,
                                    d,
                                    ell: Some(ell),
                                    setting: t.setting,
                                    seed: t.seed,
                                    estimate: Some(r.mean),
                                    abs_error: Some((r.mean - truth).abs()),
                                    rel_error: Some((r.mean - truth).abs() / truth.abs()),
                                    sigma: Some(r.sd()),
                                    jitter: Some(r.diagnostics.jitter_used),
                                    flag: None,
                                },
                                Err(e) => failed_row(m.label(), t.n, t.setting, t.seed, Some(ell), &e),
                            }
                        })
                        .collect()
                }
            };
            rows
        })
        .collect();

    if wants_mc {
        let mc_tasks: Vec<(usize, u64)> =
            config.ns.iter().flat_map(|&n| config.seeds.iter().map(move |&s| (n, s))).collect();
        let mc_rows: Vec<ConvergenceRow> = mc_tasks
            .par_iter()
            .map(|&(n, seed)| {
                let est = mc_estimate(|x| config.integrand.eval(x).unwrap_or(f64::NAN), &measure, n, seed);
                match est {
                    Ok(v) if v.is_finite() => ConvergenceRow {
                        method: BenchMethod::Mc.label(),
                        n,
                        d,
                        ell: None,
                        setting: 0,
                        seed,
                        estimate: Some(v),
                        abs_error: Some((v - truth).abs()),
                        rel_error: Some((v - truth).abs() / truth.abs()),
                        sigma: None,
                        jitter: None,
                        flag: None,
                    },
                    Ok(_) => failed_row(BenchMethod::Mc.label(), n, 0, seed, None, &Error::InvalidParameter("non-finite estimate".into())),
                    Err(e) => failed_row(BenchMethod::Mc.label(), n, 0, seed, None, &e),
                }
            })
            .collect();
        rows.extend(mc_rows);
    }

    rows.sort_by(|a, b| {
        method_rank(&config.methods, &a.method)
            .cmp(&method_rank(&config.methods, &b.method))
            .then(a.setting.cmp(&b.setting))
            .then(a.n.cmp(&b.n))
            .then(a.seed.cmp(&b.seed))
    });
    Ok(ConvergenceReport { config: config.clone(), truth, rows })
}

/// Relative error of each estimator across a range of length-scales at fixed
/// nodes; one row per `(ℓ, method)`.
pub fn lengthscale_sweep(
    integrand: &IntegrandSpec,
    kernel: KernelFamily,
    structure: Structure,
    methods: &[BenchMethod],
    ells: &[f64],
    n: usize,
    points: &PointSetKind,
    seed: u64,
) -> Result<ConvergenceReport> {
    let config = ConvergenceConfig {
        integrand: integrand.clone(),
        methods: methods.iter().copied().filter(|m| m.uses_kernel()).collect(),
        kernel,
        structure,
        lengthscales: ells.iter().map(|&l| LengthSetting::Fixed(l)).collect(),
        ns: vec![n],
        points: points.clone(),
        seeds: vec![seed],
    };
    convergence_run(&config)
}

/// Evaluate a fixed dataset-level comparison: returns `(estimate, σ)` of each
/// kernel method at one `(ℓ, nodes)`.
pub fn compare_methods(
    integrand: &IntegrandSpec,
    kernel: &KernelSpec,
    nodes: Vec<Vec<f64>>,
    methods: &[BenchMethod],
) -> Result<Vec<(BenchMethod, Result<(f64, f64)>)>> {
    let data = integrand.dataset(nodes)?;
    let ctx = CubatureContext::new(kernel, &integrand.measure(), data.nodes())?;
    let values: DVector<f64> = data.values_vector();
    let d = integrand.dim();
    Ok(methods
        .iter()
        .filter(|m| m.uses_kernel())
        .map(|m| {
            let space = match m {
                BenchMethod::Bsc { m } => total_degree_space(*m, d),
                BenchMethod::Nbc => FunctionSpace::constant(d),
                _ => FunctionSpace::empty(d),
            };
            let r = match m {
                BenchMethod::Nbc => ctx.normalized_bc(&values),
                BenchMethod::Bc => ctx.bc(&values),
                _ => ctx.bsc(&space, &values, None),
            };
            (*m, r.map(|r| (r.mean, r.sd())))
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::MaternOrder;
    use crate::quadrature::{integrate, Tolerance};
    use proptest::prelude::*;

    #[test]
    fn toy_values() {
        assert_eq!(toy_integrand(0.0), 1.0);
        let q = std::f64::consts::FRAC_PI_4;
        assert!((toy_integrand(q) - toy_integrand(-q)).abs() > 0.1);
        // independent quadrature of the Gaussian integral
        let phi = |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let q = integrate(|x| toy_integrand(x) * phi(x), -14.0, 14.0, &[], Tolerance::default()).value;
        assert!((q - TOY_TRUTH).abs() < 1e-12);
        assert!((TOY_TRUTH - 2.0693).abs() < 1e-4);
    }

    #[test]
    fn expcos_truth_matches_quadrature() {
        let q = integrate(|x| expcos_integrand(&[x]), 0.0, 1.0, &[], Tolerance::default()).value;
        assert!((q - expcos_truth(1)).abs() < 1e-14);
        assert!((expcos_truth(3) - q.powi(3)).abs() < 1e-14);
    }

    #[test]
    fn zcb_median_path_is_drift_only() {
        let model = ZcbModel::benchmark_dim(4);
        let v = zcb_integrand(&[0.5; 4], &model).unwrap();
        assert!((v - model.discount(&[0.0; 4])).abs() < 1e-15);
        let still = ZcbModel { sigma: 0.0, ..model };
        assert_eq!(still.truth().to_bits(), zcb_integrand(&[0.5; 4], &still).unwrap().to_bits());
        let a = zcb_integrand(&[0.1, 0.7, 0.3, 0.9], &still).unwrap();
        assert_eq!(a, still.truth());
    }

    #[test]
    fn zcb_values_are_discount_factors() {
        let model = ZcbModel::benchmark_dim(3);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let u: Vec<f64> = (0..3).map(|_| rng.sample(Open01)).collect();
            let v = zcb_integrand(&u, &model).unwrap();
            assert!(v > 0.0 && v < 1.0);
        }
        assert!(matches!(zcb_integrand(&[0.5, 0.0, 0.5], &model), Err(Error::DomainBoundary { index: 1, .. })));
        assert!(matches!(zcb_integrand(&[1.0, 0.5, 0.5], &model), Err(Error::DomainBoundary { index: 0, .. })));
    }

    #[test]
    fn zcb_truth_random_walk_by_hand() {
        // κ = 0 would be rejected by validate; truth() is still well-defined
        let m = ZcbModel { kappa: 0.0, theta: 0.05, sigma: 0.2, r0: 0.03, maturity: 2.0, steps: 2 };
        // Y = −Δt (2 r0 + σ√Δt x), Δt = 1
        let expected = (-2.0 * 0.03 + 0.5 * 0.2f64.powi(2)).exp();
        assert!((m.truth() - expected).abs() < 1e-15);
    }

    #[test]
    fn zcb_truth_agrees_with_gauss_hermite_tensor_rule() {
        // d = 2 tensor Gauss–Hermite is essentially exact for this smooth integrand
        let m = ZcbModel::benchmark_dim(2);
        let (x, w) = crate::quadrature::gauss_hermite(20).unwrap();
        let mut q = 0.0;
        for i in 0..20 {
            for j in 0..20 {
                q += w[i] * w[j] * m.discount(&[x[i], x[j]]);
            }
        }
        assert!((q - m.truth()).abs() < 1e-13);
    }

    #[test]
    fn normal_quantile_accuracy() {
        let normal = std_normal();
        for u in [1e-10, 1e-4, 0.01, 0.3, 0.5, 0.77, 0.999, 1.0 - 1e-9] {
            let x = normal.inverse_cdf(u);
            assert!((normal.cdf(x) - u).abs() <= 1e-9 * u.min(1.0 - u).max(1e-6));
        }
    }

    #[test]
    fn point_set_examples() {
        let g = point_set(&PointSetKind::EquispacedGrid { lower: 0.0, upper: 1.0 }, 3, 1).unwrap();
        assert_eq!(g, vec![vec![0.0], vec![0.5], vec![1.0]]);
        let s = point_set(&PointSetKind::ScaledSymmetricGrid, 2, 1).unwrap();
        assert_eq!(s, vec![vec![-2f64.sqrt()], vec![2f64.sqrt()]]);
        assert_eq!(point_set(&PointSetKind::ScaledSymmetricGrid, 1, 1).unwrap(), vec![vec![0.0]]);
        let a = point_set(&PointSetKind::RandomUniformBox { seed: 7, lower: 0.0, upper: 1.0 }, 5, 3).unwrap();
        let b = point_set(&PointSetKind::random_unit(7), 5, 3).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, point_set(&PointSetKind::random_unit(8), 5, 3).unwrap());
        assert!(point_set(&PointSetKind::Explicit { points: vec![vec![0.0]] }, 2, 1).is_err());
    }

    #[test]
    fn thinned_grid_is_distinct_and_sized() {
        for d in 1..=3 {
            for n in [1, 2, 5, 10, 17, 30] {
                let pts = point_set(&PointSetKind::EquispacedGrid { lower: 0.0, upper: 1.0 }, n, d).unwrap();
                assert_eq!(pts.len(), n);
                assert!(Dataset::new(pts, vec![0.0; n]).is_ok());
            }
        }
    }

    #[test]
    fn fill_distance_examples() {
        let h = fill_distance(&[vec![0.5]], &[0.0], &[1.0], 101).unwrap();
        assert!((h - 0.5).abs() < 0.01);
        for n in [3, 6, 11] {
            let pts = point_set(&PointSetKind::EquispacedGrid { lower: 0.0, upper: 1.0 }, n, 1).unwrap();
            let h = fill_distance(&pts, &[0.0], &[1.0], 2001).unwrap();
            assert!((h - 0.5 / (n - 1) as f64).abs() < 1e-3);
        }
        assert!(matches!(
            fill_distance(&[vec![0.5; 4]], &[0.0; 4], &[1.0; 4], 100),
            Err(Error::GridTooLarge { .. })
        ));
    }

    #[test]
    fn fill_distance_rate_matches_dimension() {
        for d in 1..=2usize {
            // resolutions chosen so the evaluation grid contains every cell centre
            let ns: Vec<usize> = if d == 1 { vec![33, 65, 129, 257] } else { vec![81, 289, 1089] };
            let res = if d == 1 { 513 } else { 65 };
            let hs: Vec<f64> = ns
                .iter()
                .map(|&n| {
                    let pts = point_set(&PointSetKind::EquispacedGrid { lower: 0.0, upper: 1.0 }, n, d).unwrap();
                    fill_distance(&pts, &vec![0.0; d], &vec![1.0; d], res).unwrap()
                })
                .collect();
            let xs: Vec<f64> = ns.iter().map(|&n| (n as f64).ln()).collect();
            let ys: Vec<f64> = hs.iter().map(|h| h.ln()).collect();
            let (slope, _, _) = ols(&xs, &ys);
            assert!((slope + 1.0 / d as f64).abs() < 0.05, "d = {d}: slope {slope}");
        }
    }

    #[test]
    fn mc_examples() {
        let nu = MeasureSpec::standard_gaussian(2);
        assert_eq!(mc_estimate(|_| 3.5, &nu, 17, 1).unwrap(), 3.5);
        let a = mc_estimate(|x| x[0] * x[1], &nu, 100, 9).unwrap();
        assert_eq!(a, mc_estimate(|x| x[0] * x[1], &nu, 100, 9).unwrap());
    }

    #[test]
    fn slope_fit_policy() {
        let ns = [16, 32, 64, 128, 256, 512];
        let errs: Vec<f64> = ns.iter().map(|&n| 3.0 * (n as f64).powi(-3)).collect();
        let fit = fit_slope(&ns, &errs).unwrap();
        assert!((fit.slope + 3.0).abs() < 1e-12);
        assert_eq!((fit.n_min, fit.points), (64, 4));

        // a plateau after n = 128 ends the decreasing run
        let mut plateau = errs.clone();
        plateau[4] = plateau[3];
        plateau[5] = plateau[3] * 1.1;
        let fit = fit_slope(&ns, &plateau).unwrap();
        assert_eq!((fit.n_min, fit.n_max), (32, 128));

        let fit = fit_slope(&[100, 1000, 10000], &[0.1, 0.03, 0.01]).unwrap();
        assert_eq!(fit.points, 3);
        assert!(fit_slope(&[10], &[0.1]).is_none());
    }

    #[test]
    fn polynomial_extrapolation_check() {
        let ns = [10, 12, 14, 16, 18, 20];
        let exp_decay: Vec<f64> = ns.iter().map(|&n| (-(n as f64)).exp()).collect();
        assert!(beats_polynomial_extrapolation(&ns, &exp_decay, 40, (-40f64).exp(), 6));
        let poly: Vec<f64> = ns.iter().map(|&n| (n as f64).powi(-4)).collect();
        assert!(!beats_polynomial_extrapolation(&ns, &poly, 40, 40f64.powi(-4), 6));
    }

    #[test]
    fn convergence_run_is_deterministic_and_ordered() {
        let config = ConvergenceConfig {
            integrand: IntegrandSpec::Expcos { dim: 1 },
            methods: vec![BenchMethod::Bsc { m: 1 }, BenchMethod::Bc, BenchMethod::Mc],
            kernel: KernelFamily::Matern(MaternOrder::FiveHalves),
            structure: Structure::Isotropic,
            lengthscales: vec![LengthSetting::Fixed(0.3)],
            ns: vec![8, 16, 4],
            points: PointSetKind::EquispacedGrid { lower: 0.0, upper: 1.0 },
            seeds: vec![1, 2],
        };
        let a = convergence_run(&config).unwrap();
        let b = convergence_run(&config).unwrap();
        assert_eq!(a.csv(), b.csv());
        assert_eq!(a.rows.len(), 3 * 3 * 2);
        assert!(a.csv().starts_with("method,n,d,ell,error,rel_error,sigma,jitter,seed\n"));
        let bsc: Vec<usize> = a.rows.iter().filter(|r| r.method == "bsc-m1" && r.seed == 1).map(|r| r.n).collect();
        assert_eq!(bsc, vec![4, 8, 16]);
        assert_eq!(a.rows[0].method, "bsc-m1");
        let series = a.series("bsc-m1", 0).unwrap();
        assert!(series.rmse[2] < series.rmse[0]);
    }

    #[test]
    fn convergence_rows_flag_failures_and_continue() {
        let config = ConvergenceConfig {
            integrand: IntegrandSpec::Toy,
            methods: vec![BenchMethod::Bsc { m: 3 }, BenchMethod::Bc],
            kernel: KernelFamily::Gaussian,
            structure: Structure::Isotropic,
            lengthscales: vec![LengthSetting::Fixed(1.0)],
            ns: vec![2, 10],
            points: PointSetKind::ScaledSymmetricGrid,
            seeds: vec![0],
        };
        let r = convergence_run(&config).unwrap();
        let failed: Vec<&ConvergenceRow> = r.failures().collect();
        assert_eq!(failed.len(), 1);
        assert_eq!((failed[0].method.as_str(), failed[0].n), ("bsc-m3", 2));
        assert_eq!(failed[0].flag.as_deref(), Some("NotUnisolvent"));
        assert!(r.rows.iter().filter(|r| r.flag.is_none()).count() == 3);
        assert!(r.csv().lines().any(|l| l.starts_with("bsc-m3,2,1,1e0,,,")));
    }

    #[test]
    fn sigma_is_nonincreasing_on_nested_grids() {
        let config = ConvergenceConfig {
            integrand: IntegrandSpec::Expcos { dim: 1 },
            methods: vec![BenchMethod::Bc, BenchMethod::Bsc { m: 2 }],
            kernel: KernelFamily::Matern(MaternOrder::ThreeHalves),
            structure: Structure::Isotropic,
            lengthscales: vec![LengthSetting::Fixed(0.4)],
            ns: vec![5, 9, 17, 33],
            points: PointSetKind::EquispacedGrid { lower: 0.0, upper: 1.0 },
            seeds: vec![0],
        };
        let r = convergence_run(&config).unwrap();
        for m in ["bc", "bsc-m2"] {
            let s: Vec<f64> = r.rows.iter().filter(|x| x.method == m).map(|x| x.sigma.unwrap()).collect();
            assert!(s.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{m}: {s:?}");
        }
    }

    #[test]
    fn config_round_trips_through_toml() {
        let config = ConvergenceConfig {
            integrand: IntegrandSpec::Zcb(ZcbModel::benchmark_dim(3)),
            methods: vec![BenchMethod::Bsc { m: 1 }, BenchMethod::Mc],
            kernel: KernelFamily::Matern(MaternOrder::FiveHalves),
            structure: Structure::Product,
            lengthscales: vec![LengthSetting::Fixed(0.2), LengthSetting::Eb(EbConfig::new(0.05, 2.0))],
            ns: vec![16, 32],
            points: PointSetKind::random_unit(3),
            seeds: vec![1, 2, 3],
        };
        let text = toml::to_string(&config).unwrap();
        let back: ConvergenceConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, config);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn random_points_stay_in_open_box(seed in any::<u64>(), n in 1usize..40, d in 1usize..6) {
            let pts = point_set(&PointSetKind::random_unit(seed), n, d).unwrap();
            prop_assert_eq!(pts.len(), n);
            prop_assert!(pts.iter().flatten().all(|&v| v > 0.0 && v < 1.0));
        }

        #[test]
        fn zcb_integrand_bounded(u in proptest::collection::vec(1e-6f64..(1.0 - 1e-6), 5)) {
            let v = zcb_integrand(&u, &ZcbModel::benchmark_dim(5)).unwrap();
            prop_assert!(v > 0.0 && v < 1.0);
        }
    }

    #[test]
    fn mc_summary_matches_estimate_and_covers_truth() {
        let measure = MeasureSpec::unit_cube(2);
        let s = mc_summary(expcos_integrand, &measure, 20_000, 3).unwrap();
        assert_eq!(s.mean, mc_estimate(expcos_integrand, &measure, 20_000, 3).unwrap());
        assert!((s.mean - expcos_truth(2)).abs() < 4.0 * s.std_error);
        assert!(s.std_error > 0.0 && s.std_error < 0.05);
        assert!(mc_summary(expcos_integrand, &measure, 1, 0).unwrap().std_error.is_infinite());
    }
}
