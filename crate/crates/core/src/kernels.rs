//! Stationary covariance kernels `k(x, x') = λ·k₀((x − x')/ℓ)` and
//! kernel-matrix assembly.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smoothness `ρ` of a half-integer Matérn kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MaternOrder {
    #[serde(rename = "1/2")]
    Half,
    #[serde(rename = "3/2")]
    ThreeHalves,
    #[serde(rename = "5/2")]
    FiveHalves,
}

impl MaternOrder {
    pub fn rho(self) -> f64 {
        match self {
            MaternOrder::Half => 0.5,
            MaternOrder::ThreeHalves => 1.5,
            MaternOrder::FiveHalves => 2.5,
        }
    }

    pub fn from_rho(rho: f64) -> Result<Self> {
        match rho {
            r if r == 0.5 => Ok(MaternOrder::Half),
            r if r == 1.5 => Ok(MaternOrder::ThreeHalves),
            r if r == 2.5 => Ok(MaternOrder::FiveHalves),
            r => Err(Error::InvalidParameter(format!(
                "Matérn smoothness must be 1/2, 3/2 or 5/2, got {r}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KernelFamily {
    Gaussian,
    Matern(MaternOrder),
}

/// How a multivariate kernel is built from the univariate profile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Structure {
    /// `k₀` applied to the scaled Euclidean distance.
    #[default]
    Isotropic,
    /// Product of univariate kernels, one per coordinate.
    Product,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LengthScale {
    Shared(f64),
    PerDimension(Vec<f64>),
}

impl LengthScale {
    #[inline]
    pub fn get(&self, dim: usize) -> f64 {
        match self {
            LengthScale::Shared(l) => *l,
            LengthScale::PerDimension(ls) => ls[dim],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub structure: Structure,
    pub lengthscale: LengthScale,
    pub amplitude: f64,
}

/// Univariate profile `k₀(r)` for a scaled, non-negative lag `r = |t|/ℓ`.
#[inline]
fn profile(family: KernelFamily, r: f64) -> f64 {
    match family {
        KernelFamily::Gaussian => (-0.5 * r * r).exp(),
        KernelFamily::Matern(MaternOrder::Half) => (-r).exp(),
        KernelFamily::Matern(MaternOrder::ThreeHalves) => {
            let s = 3f64.sqrt() * r;
            (1.0 + s) * (-s).exp()
        }
        KernelFamily::Matern(MaternOrder::FiveHalves) => {
            let s = 5f64.sqrt() * r;
            (1.0 + s + s * s / 3.0) * (-s).exp()
        }
    }
}

impl KernelSpec {
    pub fn gaussian(lengthscale: f64) -> Self {
        KernelSpec {
            family: KernelFamily::Gaussian,
            structure: Structure::Isotropic,
            lengthscale: LengthScale::Shared(lengthscale),
            amplitude: 1.0,
        }
    }

    pub fn matern(order: MaternOrder, lengthscale: f64) -> Self {
        KernelSpec {
            family: KernelFamily::Matern(order),
            structure: Structure::Isotropic,
            lengthscale: LengthScale::Shared(lengthscale),
            amplitude: 1.0,
        }
    }

    /// Product-over-dimensions Matérn, as used for the bond-pricing benchmark.
    pub fn product_matern(order: MaternOrder, lengthscale: f64) -> Self {
        KernelSpec::matern(order, lengthscale).with_structure(Structure::Product)
    }

    pub fn with_structure(mut self, structure: Structure) -> Self {
        self.structure = structure;
        self
    }

    pub fn with_amplitude(mut self, amplitude: f64) -> Self {
        self.amplitude = amplitude;
        self
    }

    pub fn with_lengthscale(mut self, lengthscale: f64) -> Self {
        self.lengthscale = LengthScale::Shared(lengthscale);
        self
    }

    pub fn with_lengthscales(mut self, lengthscales: Vec<f64>) -> Self {
        self.lengthscale = LengthScale::PerDimension(lengthscales);
        self
    }

    /// Shared length-scale, or the first entry of per-dimension scales.
    pub fn ell(&self) -> f64 {
        self.lengthscale.get(0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.amplitude > 0.0 && self.amplitude.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "amplitude must be positive, got {}",
                self.amplitude
            )));
        }
        let ok = match &self.lengthscale {
            LengthScale::Shared(l) => *l > 0.0 && l.is_finite(),
            LengthScale::PerDimension(ls) => {
                !ls.is_empty() && ls.iter().all(|l| *l > 0.0 && l.is_finite())
            }
        };
        if !ok {
            return Err(Error::InvalidParameter(
                "length-scales must be positive and finite".into(),
            ));
        }
        Ok(())
    }

    /// True when the kernel is a product of univariate factors. The
    /// Gaussian kernel factorizes under either structure.
    pub fn factorizes(&self, d: usize) -> bool {
        d == 1 || self.structure == Structure::Product || self.family == KernelFamily::Gaussian
    }

    /// Unit-amplitude univariate factor along coordinate `dim`.
    #[inline]
    pub fn factor_1d(&self, dim: usize, a: f64, b: f64) -> f64 {
        profile(self.family, (a - b).abs() / self.lengthscale.get(dim))
    }

    pub fn check_dim(&self, d: usize) -> Result<()> {
        if let LengthScale::PerDimension(ls) = &self.lengthscale {
            if ls.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: ls.len(),
                    found: d,
                });
            }
        }
        Ok(())
    }

    /// Kernel value without dimension checks.
    #[inline]
    pub(crate) fn eval_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        let base = match (self.family, self.structure) {
            (KernelFamily::Gaussian, _) | (_, Structure::Isotropic) => {
                let r2: f64 = x
                    .iter()
                    .zip(y)
                    .enumerate()
                    .map(|(j, (a, b))| {
                        let t = (a - b) / self.lengthscale.get(j);
                        t * t
                    })
                    .sum();
                profile(self.family, r2.sqrt())
            }
            (_, Structure::Product) => x
                .iter()
                .zip(y)
                .enumerate()
                .map(|(j, (a, b))| self.factor_1d(j, *a, *b))
                .product(),
        };
        self.amplitude * base
    }
}

pub fn kernel_eval(spec: &KernelSpec, x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            found: y.len(),
        });
    }
    spec.check_dim(x.len())?;
    Ok(spec.eval_unchecked(x, y))
}

fn common_dim(xs: &[Vec<f64>], ys: &[Vec<f64>]) -> Result<usize> {
    let d = xs.first().or(ys.first()).map_or(0, |p| p.len());
    for p in xs.iter().chain(ys) {
        if p.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: p.len(),
            });
        }
    }
    Ok(d)
}

/// `[K]_{ij} = k(x_i, y_j)`. Symmetric inputs give an exactly symmetric
/// matrix: only the upper triangle is evaluated.
pub fn kernel_matrix(spec: &KernelSpec, xs: &[Vec<f64>], ys: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let d = common_dim(xs, ys)?;
    spec.check_dim(d)?;
    let same = std::ptr::eq(xs, ys) || xs == ys;
    let mut k = DMatrix::zeros(xs.len(), ys.len());
    if same {
        for i in 0..xs.len() {
            for j in i..ys.len() {
                let v = spec.eval_unchecked(&xs[i], &ys[j]);
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
        }
    } else {
        for (i, x) in xs.iter().enumerate() {
            for (j, y) in ys.iter().enumerate() {
                k[(i, j)] = spec.eval_unchecked(x, y);
            }
        }
    }
    Ok(k)
}

/// Column vector `k_X(x)ᵀ` with entries `k(x, x_i)`.
pub fn kernel_vector(spec: &KernelSpec, xs: &[Vec<f64>], x: &[f64]) -> Result<DVector<f64>> {
    xs.iter().map(|xi| kernel_eval(spec, x, xi)).collect::<Result<Vec<_>>>().map(DVector::from_vec)
}
