//! Kernel hyperparameters: empirical-Bayes length-scale selection and
//! marginalisation of the amplitude `λ` into a Student-t integral posterior.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::cubature::CubatureResult;
use crate::error::{Error, Result};
use crate::gp::Dataset;
use crate::kernels::{kernel_matrix, KernelSpec};
use crate::linalg::{jittered_factorize, JitterPolicy, SpdFactor};

fn factor_for(kernel: &KernelSpec, data: &Dataset) -> Result<SpdFactor> {
    kernel.validate()?;
    let k = kernel_matrix(kernel, data.nodes(), data.nodes())?;
    jittered_factorize(&k, &JitterPolicy::default())
}

/// GP log-marginal likelihood at the kernel's own amplitude:
/// `−½ fᵀK⁻¹f − ½ log det K − (n/2) log 2π`.
pub fn log_marginal(kernel: &KernelSpec, data: &Dataset) -> Result<f64> {
    let factor = factor_for(kernel, data)?;
    let f = data.values_vector();
    let n = data.n() as f64;
    Ok(-0.5 * factor.quad_form(&f) - 0.5 * factor.log_det() - 0.5 * n * (2.0 * PI).ln())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfiledLikelihood {
    pub log_marginal: f64,
    /// `λ̂ = fᵀK₀⁻¹f / n` for the unit-amplitude kernel matrix `K₀`.
    pub lambda_hat: f64,
}

/// Log-marginal likelihood with `λ` replaced by its maximiser `λ̂`.
///
/// The amplitude stored in `kernel` is ignored. When `f = 0` the profile is
/// unbounded; `λ̂` is then floored at the smallest positive normal number.
pub fn profiled_log_marginal(kernel: &KernelSpec, data: &Dataset) -> Result<ProfiledLikelihood> {
    let unit = kernel.clone().with_amplitude(1.0);
    let factor = factor_for(&unit, data)?;
    let f = data.values_vector();
    let n = data.n() as f64;
    let lambda_hat = (factor.quad_form(&f) / n).max(f64::MIN_POSITIVE);
    let log_marginal = -0.5 * n * (1.0 + lambda_hat.ln() + (2.0 * PI).ln()) - 0.5 * factor.log_det();
    Ok(ProfiledLikelihood { log_marginal, lambda_hat })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EbConfig {
    pub ell_min: f64,
    pub ell_max: f64,
    #[serde(default = "default_grid")]
    pub grid: usize,
    /// Golden-section stopping tolerance, relative in `ℓ`.
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

fn default_grid() -> usize {
    60
}

fn default_tolerance() -> f64 {
    1e-4
}

impl Default for EbConfig {
    fn default() -> Self {
        EbConfig {
            ell_min: 1e-2,
            ell_max: 1e2,
            grid: default_grid(),
            tolerance: default_tolerance(),
        }
    }
}

impl EbConfig {
    pub fn new(ell_min: f64, ell_max: f64) -> Self {
        EbConfig {
            ell_min,
            ell_max,
            ..EbConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.ell_min > 0.0 && self.ell_min < self.ell_max && self.ell_max.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "length-scale bounds must satisfy 0 < ell_min < ell_max, got [{}, {}]",
                self.ell_min, self.ell_max
            )));
        }
        if self.grid < 2 {
            return Err(Error::InvalidParameter("EB grid needs at least 2 points".into()));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidParameter("EB tolerance must be positive".into()));
        }
        Ok(())
    }

    /// Log-spaced candidate length-scales, endpoints included.
    pub fn grid_points(&self) -> Vec<f64> {
        let (a, b) = (self.ell_min.ln(), self.ell_max.ln());
        let m = self.grid - 1;
        (0..self.grid)
            .map(|i| if i == m { self.ell_max } else { (a + (b - a) * i as f64 / m as f64).exp() })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EbResult {
    pub ell_hat: f64,
    pub log_marginal: f64,
    pub lambda_hat: f64,
    /// False when the data cannot pin down `ℓ` (a single node or a flat profile).
    pub identifiable: bool,
}

/// Empirical-Bayes length-scale: log-grid scan of the profiled likelihood,
/// then golden-section refinement in `log ℓ` around the best grid point.
///
/// Candidates whose kernel matrix cannot be factorized are skipped.
pub fn eb_lengthscale(kernel: &KernelSpec, data: &Dataset, config: &EbConfig) -> Result<EbResult> {
    config.validate()?;
    let objective = |ell: f64| profiled_log_marginal(&kernel.clone().with_lengthscale(ell), data);

    let grid = config.grid_points();
    let scores: Vec<Result<ProfiledLikelihood>> = grid.par_iter().map(|&ell| objective(ell)).collect();
    let mut best: Option<(usize, ProfiledLikelihood)> = None;
    let mut last_err = None;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for (i, s) in scores.into_iter().enumerate() {
        match s {
            Ok(p) => {
                lo = lo.min(p.log_marginal);
                hi = hi.max(p.log_marginal);
                if best.is_none_or(|(_, b)| p.log_marginal > b.log_marginal) {
                    best = Some((i, p));
                }
            }
            Err(e) => {
                log::debug!("EB candidate ell = {} skipped: {e}", grid[i]);
                last_err = Some(e);
            }
        }
    }
    let Some((i, grid_best)) = best else {
        return Err(last_err.unwrap_or(Error::FactorizationFailed { last_jitter: f64::NAN }));
    };
    let flat = hi - lo <= 1e-10 * (1.0 + hi.abs());
    let identifiable = data.n() > 1 && !flat;
    if !identifiable {
        return Ok(EbResult {
            ell_hat: grid[i],
            log_marginal: grid_best.log_marginal,
            lambda_hat: grid_best.lambda_hat,
            identifiable,
        });
    }

    let a = grid[i.saturating_sub(1)].ln();
    let b = grid[(i + 1).min(grid.len() - 1)].ln();
    let score = |t: f64| objective(t.exp()).map(|p| p.log_marginal).unwrap_or(f64::NEG_INFINITY);
    let t_star = golden_section_max(score, a, b, config.tolerance);
    let mut result = EbResult {
        ell_hat: grid[i],
        log_marginal: grid_best.log_marginal,
        lambda_hat: grid_best.lambda_hat,
        identifiable,
    };
    if let Ok(p) = objective(t_star.exp()) {
        if p.log_marginal >= grid_best.log_marginal {
            result.ell_hat = t_star.exp();
            result.log_marginal = p.log_marginal;
            result.lambda_hat = p.lambda_hat;
        }
    }
    Ok(result)
}

fn golden_section_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Integral posterior after marginalising `λ` under an improper prior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StudentTPosterior {
    pub location: f64,
    pub scale2: f64,
    pub dof: usize,
}

impl StudentTPosterior {
    pub fn scale(&self) -> f64 {
        self.scale2.sqrt()
    }

    /// Two-sided `t_{n,q}` quantile multiplier for central level `q`.
    pub fn quantile_multiplier(&self, level: f64) -> Result<f64> {
        if !(level > 0.0 && level < 1.0) {
            return Err(Error::InvalidParameter(format!("credible level must lie in (0, 1), got {level}")));
        }
        let t = StudentsT::new(0.0, 1.0, self.dof as f64).map_err(|e| Error::InvalidParameter(e.to_string()))?;
        Ok(t.inverse_cdf(0.5 * (1.0 + level)))
    }

    pub fn interval(&self, level: f64) -> Result<(f64, f64)> {
        let half = self.quantile_multiplier(level)? * self.scale();
        Ok((self.location - half, self.location + half))
    }
}

/// `location = μ_X`, `scale² = (fᵀK⁻¹f / n)·σ_X²`, `dof = n`.
///
/// `result` and `kernel` must share the same amplitude; the product is then
/// independent of it.
pub fn studentize(result: &CubatureResult, data: &Dataset, kernel: &KernelSpec) -> Result<StudentTPosterior> {
    let factor = factor_for(kernel, data)?;
    let quad = factor.quad_form(&data.values_vector());
    let n = data.n();
    Ok(StudentTPosterior {
        location: result.mean,
        scale2: quad / n as f64 * result.variance,
        dof: n,
    })
}
