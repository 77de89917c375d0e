//! Integration measures `ν` and the quantities they induce: kernel means
//! `k_ν(x)`, the initial error `k_{ν,ν}` and the moments `p_ν` of the
//! parametric basis.
//!
//! Every supported measure is a product of univariate marginals, so all
//! quantities are assembled coordinate by coordinate. The Gaussian kernel
//! has closed-form means against both Gaussian and uniform marginals; the
//! Matérn kernels go through adaptive quadrature of each univariate factor.

use std::f64::consts::PI;

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

use crate::error::{Error, Result};
use crate::kernels::{KernelFamily, KernelSpec};
use crate::polyspace::{AffineMap, BasisFunction, FunctionSpace};
use crate::quadrature::{self, Tolerance};

/// Gaussian marginals are integrated over `mean ± GAUSS_TAIL·sd`.
const GAUSS_TAIL: f64 = 14.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MeasureSpec {
    StandardGaussian { dim: usize },
    DiagonalGaussian { mean: Vec<f64>, variance: Vec<f64> },
    UniformBox { lower: Vec<f64>, upper: Vec<f64> },
}

/// One coordinate of a product measure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Marginal {
    Gaussian { mean: f64, sd: f64 },
    Uniform { lower: f64, upper: f64 },
}

impl Marginal {
    /// Image of the marginal under `t = a·x + b`.
    fn mapped(self, a: f64, b: f64) -> Marginal {
        match self {
            Marginal::Gaussian { mean, sd } => Marginal::Gaussian {
                mean: a * mean + b,
                sd: a.abs() * sd,
            },
            Marginal::Uniform { lower, upper } => {
                let (l, u) = (a * lower + b, a * upper + b);
                Marginal::Uniform {
                    lower: l.min(u),
                    upper: l.max(u),
                }
            }
        }
    }

    /// `E[t^k]` for `k = 0..=max_k`.
    pub fn raw_moments(self, max_k: u32) -> Vec<f64> {
        let mut out = Vec::with_capacity(max_k as usize + 1);
        match self {
            Marginal::Gaussian { mean, sd } => {
                let var = sd * sd;
                for k in 0..=max_k as usize {
                    let v = match k {
                        0 => 1.0,
                        1 => mean,
                        _ => mean * out[k - 1] + (k - 1) as f64 * var * out[k - 2],
                    };
                    out.push(v);
                }
            }
            Marginal::Uniform { lower, upper } => {
                for k in 0..=max_k as i32 {
                    let v = (upper.powi(k + 1) - lower.powi(k + 1)) / ((k + 1) as f64 * (upper - lower));
                    out.push(v);
                }
            }
        }
        out
    }

    /// `∫ g dν_j` by adaptive quadrature; `kinks` are passed as breakpoints.
    fn integrate<F: Fn(f64) -> f64>(self, g: F, kinks: &[f64], tol: Tolerance) -> f64 {
        match self {
            Marginal::Gaussian { mean, sd } => {
                let norm = 1.0 / (2.0 * PI).sqrt();
                let zk: Vec<f64> = kinks.iter().map(|t| (t - mean) / sd).collect();
                quadrature::integrate(
                    |z| g(mean + sd * z) * norm * (-0.5 * z * z).exp(),
                    -GAUSS_TAIL,
                    GAUSS_TAIL,
                    &zk,
                    tol,
                )
                .value
            }
            Marginal::Uniform { lower, upper } => {
                quadrature::integrate(&g, lower, upper, kinks, tol).value / (upper - lower)
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        match self {
            Marginal::Gaussian { mean, sd } => {
                let z: f64 = rng.sample(StandardNormal);
                mean + sd * z
            }
            Marginal::Uniform { lower, upper } => rng.random_range(lower..upper),
        }
    }
}

impl MeasureSpec {
    pub fn standard_gaussian(dim: usize) -> Self {
        MeasureSpec::StandardGaussian { dim }
    }

    pub fn unit_cube(dim: usize) -> Self {
        MeasureSpec::UniformBox {
            lower: vec![0.0; dim],
            upper: vec![1.0; dim],
        }
    }

    pub fn uniform_box(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        MeasureSpec::UniformBox { lower, upper }
    }

    pub fn dim(&self) -> usize {
        match self {
            MeasureSpec::StandardGaussian { dim } => *dim,
            MeasureSpec::DiagonalGaussian { mean, .. } => mean.len(),
            MeasureSpec::UniformBox { lower, .. } => lower.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim() == 0 {
            return Err(Error::InvalidParameter("measure dimension must be at least 1".into()));
        }
        match self {
            MeasureSpec::StandardGaussian { .. } => Ok(()),
            MeasureSpec::DiagonalGaussian { mean, variance } => {
                if mean.len() != variance.len() {
                    return Err(Error::DimensionMismatch {
                        expected: mean.len(),
                        found: variance.len(),
                    });
                }
                if variance.iter().any(|v| !(*v > 0.0 && v.is_finite())) || mean.iter().any(|m| !m.is_finite()) {
                    return Err(Error::InvalidParameter("Gaussian variances must be positive".into()));
                }
                Ok(())
            }
            MeasureSpec::UniformBox { lower, upper } => {
                if lower.len() != upper.len() {
                    return Err(Error::DimensionMismatch {
                        expected: lower.len(),
                        found: upper.len(),
                    });
                }
                if lower.iter().zip(upper).any(|(l, u)| !(l < u) || !l.is_finite() || !u.is_finite()) {
                    return Err(Error::InvalidParameter("box requires lower < upper in every coordinate".into()));
                }
                Ok(())
            }
        }
    }

    pub fn marginal(&self, j: usize) -> Marginal {
        match self {
            MeasureSpec::StandardGaussian { .. } => Marginal::Gaussian { mean: 0.0, sd: 1.0 },
            MeasureSpec::DiagonalGaussian { mean, variance } => Marginal::Gaussian {
                mean: mean[j],
                sd: variance[j].sqrt(),
            },
            MeasureSpec::UniformBox { lower, upper } => Marginal::Uniform {
                lower: lower[j],
                upper: upper[j],
            },
        }
    }

    pub fn marginals(&self) -> Vec<Marginal> {
        (0..self.dim()).map(|j| self.marginal(j)).collect()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        (0..self.dim()).map(|j| self.marginal(j).sample(rng)).collect()
    }
}

fn check_pair(kernel: &KernelSpec, measure: &MeasureSpec) -> Result<usize> {
    measure.validate()?;
    kernel.validate()?;
    let d = measure.dim();
    kernel.check_dim(d)?;
    if !kernel.factorizes(d) {
        return Err(Error::UnsupportedCombination(format!(
            "isotropic {:?} kernel in {d} dimensions does not factorize over coordinates",
            kernel.family
        )));
    }
    Ok(d)
}

fn check_point(d: usize, x: &[f64]) -> Result<()> {
    if x.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: x.len(),
        });
    }
    Ok(())
}

/// Closed-form univariate Gaussian-kernel mean `∫ exp(−(x−t)²/(2ℓ²)) dν_j(t)`.
fn gaussian_mean_1d(ell: f64, marginal: Marginal, x: f64) -> f64 {
    match marginal {
        Marginal::Gaussian { mean, sd } => {
            let s2 = ell * ell + sd * sd;
            ell / s2.sqrt() * (-(x - mean).powi(2) / (2.0 * s2)).exp()
        }
        Marginal::Uniform { lower, upper } => {
            let c = std::f64::consts::SQRT_2 * ell;
            ell * (PI / 2.0).sqrt() / (upper - lower) * (erf((upper - x) / c) - erf((lower - x) / c))
        }
    }
}

/// Closed-form univariate Gaussian-kernel initial error.
fn gaussian_initial_1d(ell: f64, marginal: Marginal) -> f64 {
    match marginal {
        Marginal::Gaussian { sd, .. } => ell / (ell * ell + 2.0 * sd * sd).sqrt(),
        Marginal::Uniform { lower, upper } => {
            // (1/L²)·2∫₀ᴸ (L − r)·exp(−r²/(2ℓ²)) dr
            let len = upper - lower;
            let a = len / (std::f64::consts::SQRT_2 * ell);
            let inner = len * ell * (PI / 2.0).sqrt() * erf(a) - ell * ell * (-(a * a)).exp_m1().abs();
            2.0 * inner / (len * len)
        }
    }
}

fn quadrature_mean_1d(kernel: &KernelSpec, j: usize, marginal: Marginal, x: f64) -> f64 {
    marginal.integrate(|t| kernel.factor_1d(j, x, t), &[x], Tolerance::default())
}

fn quadrature_initial_1d(kernel: &KernelSpec, j: usize, marginal: Marginal) -> f64 {
    marginal.integrate(|s| quadrature_mean_1d(kernel, j, marginal, s), &[], Tolerance::default())
}

fn mean_1d(kernel: &KernelSpec, j: usize, marginal: Marginal, x: f64) -> f64 {
    match kernel.family {
        KernelFamily::Gaussian => gaussian_mean_1d(kernel.lengthscale.get(j), marginal, x),
        KernelFamily::Matern(_) => quadrature_mean_1d(kernel, j, marginal, x),
    }
}

/// `k_ν(x) = ∫ k(t, x) dν(t)`.
pub fn kernel_mean(kernel: &KernelSpec, measure: &MeasureSpec, x: &[f64]) -> Result<f64> {
    let d = check_pair(kernel, measure)?;
    check_point(d, x)?;
    let prod: f64 = (0..d).map(|j| mean_1d(kernel, j, measure.marginal(j), x[j])).product();
    Ok(kernel.amplitude * prod)
}

/// Kernel mean computed by per-coordinate quadrature regardless of whether
/// a closed form exists. Serves as an independent cross-check.
pub fn kernel_mean_quadrature(kernel: &KernelSpec, measure: &MeasureSpec, x: &[f64]) -> Result<f64> {
    let d = check_pair(kernel, measure)?;
    check_point(d, x)?;
    let prod: f64 = (0..d)
        .map(|j| quadrature_mean_1d(kernel, j, measure.marginal(j), x[j]))
        .product();
    Ok(kernel.amplitude * prod)
}

/// `k_{ν,X}ᵀ` for a node set.
pub fn kernel_mean_vector(kernel: &KernelSpec, measure: &MeasureSpec, xs: &[Vec<f64>]) -> Result<DVector<f64>> {
    let values = xs
        .iter()
        .map(|x| kernel_mean(kernel, measure, x))
        .collect::<Result<Vec<_>>>()?;
    Ok(DVector::from_vec(values))
}

/// `k_{ν,ν} = ∫∫ k dν dν`, the squared worst-case error of the empty rule.
pub fn initial_error(kernel: &KernelSpec, measure: &MeasureSpec) -> Result<f64> {
    let d = check_pair(kernel, measure)?;
    let mut cache: Vec<(Marginal, f64, f64)> = Vec::new();
    let mut prod = 1.0;
    for j in 0..d {
        let marginal = measure.marginal(j);
        let ell = kernel.lengthscale.get(j);
        let v = match cache.iter().find(|(m, l, _)| *m == marginal && *l == ell) {
            Some((_, _, v)) => *v,
            None => {
                let v = match kernel.family {
                    KernelFamily::Gaussian => gaussian_initial_1d(ell, marginal),
                    KernelFamily::Matern(_) => quadrature_initial_1d(kernel, j, marginal),
                };
                cache.push((marginal, ell, v));
                v
            }
        };
        prod *= v;
    }
    Ok(kernel.amplitude * prod)
}

/// Kernel-mean quantities for one node set.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMeanSet {
    pub k_nu_x: DVector<f64>,
    pub k_nu_nu: f64,
    pub p_nu: DVector<f64>,
}

impl KernelMeanSet {
    pub fn assemble(
        kernel: &KernelSpec,
        measure: &MeasureSpec,
        space: &FunctionSpace,
        xs: &[Vec<f64>],
    ) -> Result<Self> {
        Ok(KernelMeanSet {
            k_nu_x: kernel_mean_vector(kernel, measure, xs)?,
            k_nu_nu: initial_error(kernel, measure)?,
            p_nu: poly_moments(space, measure)?,
        })
    }
}

fn monomial_moment(alpha: &[u32], marginals: &[Marginal], scaling: Option<&AffineMap>) -> f64 {
    alpha
        .iter()
        .enumerate()
        .map(|(j, &e)| {
            let m = match scaling {
                Some(map) => marginals[j].mapped(map.scale[j], map.shift[j]),
                None => marginals[j],
            };
            m.raw_moments(e)[e as usize]
        })
        .product()
}

/// `[p_ν]_j = ∫ p_j dν`.
///
/// Monomials use exact moments. Custom basis functions use their declared
/// integral; without one they fall back to quadrature in one dimension and
/// are rejected otherwise.
pub fn poly_moments(space: &FunctionSpace, measure: &MeasureSpec) -> Result<DVector<f64>> {
    measure.validate()?;
    let d = measure.dim();
    if space.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: space.dim(),
        });
    }
    let marginals = measure.marginals();
    let values = space
        .basis()
        .iter()
        .map(|b| match b {
            BasisFunction::Monomial(alpha) => Ok(monomial_moment(alpha, &marginals, space.scaling())),
            BasisFunction::Custom(c) => match c.integral {
                Some(v) => Ok(v),
                None if d == 1 => {
                    log::warn!("basis function '{}' has no closed-form moment; using quadrature", c.name);
                    Ok(marginals[0].integrate(|t| c.eval(&[t]), &[], Tolerance::default()))
                }
                None => Err(Error::UnsupportedCombination(format!(
                    "basis function '{}' has no moment in {d} dimensions",
                    c.name
                ))),
            },
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DVector::from_vec(values))
}
