//! Integral estimators: Bayesian cubature (BC), Bayes–Sard cubature (BSC),
//! normalised BC, the kernel-independent `Q = n` rule, worst-case errors and
//! uncertainty for arbitrary weighted rules.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::Dataset;
use crate::kernels::{kernel_matrix, KernelSpec};
use crate::linalg::{jittered_factorize, numeric_rank, JitterPolicy, SaddleSystem, SpdFactor};
use crate::measures::{initial_error, kernel_mean_vector, poly_moments, MeasureSpec};
use crate::polyspace::{vandermonde, FunctionSpace};

/// Negative variances down to `-VARIANCE_TOLERANCE·λ` are treated as roundoff.
pub const VARIANCE_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Bc,
    Bsc,
    NormalizedBc,
    BscSquare,
    Endow,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::Bc => "bc",
            Method::Bsc => "bsc",
            Method::NormalizedBc => "nbc",
            Method::BscSquare => "square",
            Method::Endow => "endow",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub jitter_used: f64,
    pub vandermonde_rank: Option<usize>,
    pub variance_clamped: bool,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CubatureResult {
    pub method: Method,
    pub mean: f64,
    pub variance: f64,
    pub weights_k: Vec<f64>,
    pub weights_pi: Vec<f64>,
    pub diagnostics: Diagnostics,
}

impl CubatureResult {
    pub fn sd(&self) -> f64 {
        self.variance.sqrt()
    }

    pub fn weights(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.weights_k)
    }
}

/// Clamp a roundoff-negative variance to zero; returns the value and whether
/// it was clamped.
pub fn settle_variance(raw: f64, amplitude: f64) -> Result<(f64, bool)> {
    if !raw.is_finite() {
        return Err(Error::NegativeVariance { value: raw, tolerance: VARIANCE_TOLERANCE * amplitude });
    }
    if raw >= 0.0 {
        Ok((raw, false))
    } else if raw >= -VARIANCE_TOLERANCE * amplitude {
        Ok((0.0, true))
    } else {
        Err(Error::NegativeVariance { value: raw, tolerance: VARIANCE_TOLERANCE * amplitude })
    }
}

/// Kernel quantities for one node set, shared by every estimator on it.
///
/// The kernel matrix factor and kernel means are computed once; BC, BSC and
/// worst-case errors can then be evaluated for many data vectors and
/// function spaces.
#[derive(Debug, Clone)]
pub struct CubatureContext {
    kernel: KernelSpec,
    measure: MeasureSpec,
    nodes: Vec<Vec<f64>>,
    gram: DMatrix<f64>,
    k_nu_x: DVector<f64>,
    k_nu_nu: f64,
    factor: Option<SpdFactor>,
    /// `K⁻¹ k_{ν,X}ᵀ`
    bc_weights: Option<DVector<f64>>,
}

impl CubatureContext {
    /// Assemble `K_X`, `k_{ν,X}`, `k_{ν,ν}` without factorizing.
    pub fn assemble(kernel: &KernelSpec, measure: &MeasureSpec, nodes: &[Vec<f64>]) -> Result<Self> {
        kernel.validate()?;
        measure.validate()?;
        if let Some(x) = nodes.iter().find(|x| x.len() != measure.dim()) {
            return Err(Error::DimensionMismatch { expected: measure.dim(), found: x.len() });
        }
        Ok(CubatureContext {
            kernel: kernel.clone(),
            measure: measure.clone(),
            nodes: nodes.to_vec(),
            gram: kernel_matrix(kernel, nodes, nodes)?,
            k_nu_x: kernel_mean_vector(kernel, measure, nodes)?,
            k_nu_nu: initial_error(kernel, measure)?,
            factor: None,
            bc_weights: None,
        })
    }

    /// Assemble and factorize `K_X` with the default jitter policy.
    pub fn new(kernel: &KernelSpec, measure: &MeasureSpec, nodes: &[Vec<f64>]) -> Result<Self> {
        let mut ctx = CubatureContext::assemble(kernel, measure, nodes)?;
        let factor = jittered_factorize(&ctx.gram, &JitterPolicy::default())?;
        ctx.bc_weights = Some(factor.solve(&ctx.k_nu_x));
        ctx.factor = Some(factor);
        Ok(ctx)
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn measure(&self) -> &MeasureSpec {
        &self.measure
    }

    pub fn nodes(&self) -> &[Vec<f64>] {
        &self.nodes
    }

    pub fn n(&self) -> usize {
        self.nodes.len()
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn k_nu_x(&self) -> &DVector<f64> {
        &self.k_nu_x
    }

    pub fn k_nu_nu(&self) -> f64 {
        self.k_nu_nu
    }

    fn factor(&self) -> Result<(&SpdFactor, &DVector<f64>)> {
        match (&self.factor, &self.bc_weights) {
            (Some(f), Some(w)) => Ok((f, w)),
            _ => Err(Error::InvalidParameter("context was assembled without a kernel factorization".into())),
        }
    }

    pub fn jitter_used(&self) -> f64 {
        self.factor.as_ref().map_or(0.0, |f| f.jitter_used())
    }

    fn check_values(&self, values: &DVector<f64>) -> Result<()> {
        if values.len() != self.n() {
            return Err(Error::DimensionMismatch { expected: self.n(), found: values.len() });
        }
        Ok(())
    }

    /// Squared worst-case error `k_{ν,ν} − 2 k_{ν,X} w + wᵀ K_X w`, unclamped.
    pub fn wce_squared(&self, w: &DVector<f64>) -> Result<f64> {
        if w.len() != self.n() {
            return Err(Error::DimensionMismatch { expected: self.n(), found: w.len() });
        }
        Ok(self.k_nu_nu - 2.0 * self.k_nu_x.dot(w) + w.dot(&(&self.gram * w)))
    }

    /// Worst-case error, with roundoff-negative squares clamped at zero.
    pub fn wce(&self, w: &DVector<f64>) -> Result<f64> {
        let raw = self.wce_squared(w)?;
        Ok(settle_variance(raw, self.kernel.amplitude)?.0.sqrt())
    }

    pub fn bc(&self, values: &DVector<f64>) -> Result<CubatureResult> {
        let start = Instant::now();
        self.check_values(values)?;
        let (factor, w) = self.factor()?;
        let raw = self.k_nu_nu - self.k_nu_x.dot(w);
        let (variance, clamped) = settle_variance(raw, self.kernel.amplitude)?;
        Ok(CubatureResult {
            method: Method::Bc,
            mean: w.dot(values),
            variance,
            weights_k: w.as_slice().to_vec(),
            weights_pi: Vec::new(),
            diagnostics: Diagnostics {
                jitter_used: factor.jitter_used(),
                vandermonde_rank: None,
                variance_clamped: clamped,
                wall_time_s: start.elapsed().as_secs_f64(),
            },
        })
    }

    pub fn bsc(&self, space: &FunctionSpace, values: &DVector<f64>, eta: Option<&DVector<f64>>) -> Result<CubatureResult> {
        let start = Instant::now();
        self.check_values(values)?;
        if space.dim() != self.measure.dim() {
            return Err(Error::DimensionMismatch { expected: self.measure.dim(), found: space.dim() });
        }
        let (factor, z) = self.factor()?;
        let q = space.q();
        if let Some(e) = eta {
            if e.len() != q {
                return Err(Error::DimensionMismatch { expected: q, found: e.len() });
            }
        }
        let p = vandermonde(space, &self.nodes)?.into_matrix();
        let rank = if q == 0 { 0 } else { numeric_rank(&p) };
        if rank < q {
            return Err(Error::NotUnisolvent { rank, dim: q });
        }
        let p_nu = poly_moments(space, &self.measure)?;
        let system = SaddleSystem::new(factor.clone(), p).map_err(|e| match e {
            Error::RankDeficient => Error::NotUnisolvent { rank, dim: q },
            other => other,
        })?;
        let sol = system.solve(&self.k_nu_x, &p_nu)?;
        let (w_k, w_pi) = (sol.top, sol.bottom);

        // k_νν − k_νX K⁻¹ k_νXᵀ + (k_νX K⁻¹ P − p_ν) w_π
        let residual = system.vandermonde().tr_mul(z) - &p_nu;
        let raw = self.k_nu_nu - self.k_nu_x.dot(z) + residual.dot(&w_pi);
        let (variance, clamped) = settle_variance(raw, self.kernel.amplitude)?;
        let mut mean = w_k.dot(values);
        if let Some(e) = eta {
            mean -= w_pi.dot(e);
        }
        Ok(CubatureResult {
            method: Method::Bsc,
            mean,
            variance,
            weights_k: w_k.as_slice().to_vec(),
            weights_pi: w_pi.as_slice().to_vec(),
            diagnostics: Diagnostics {
                jitter_used: factor.jitter_used(),
                vandermonde_rank: Some(rank),
                variance_clamped: clamped,
                wall_time_s: start.elapsed().as_secs_f64(),
            },
        })
    }

    /// Normalised BC from the closed-form weight expression
    /// `w = z + g(1 − 𝟙ᵀz)/(𝟙ᵀg)` with `z = K⁻¹k_{ν,X}ᵀ`, `g = K⁻¹𝟙`.
    pub fn normalized_bc(&self, values: &DVector<f64>) -> Result<CubatureResult> {
        let start = Instant::now();
        self.check_values(values)?;
        let (factor, z) = self.factor()?;
        let g = factor.solve(&DVector::from_element(self.n(), 1.0));
        let c = g.sum();
        let w = z + &g * ((1.0 - z.sum()) / c);
        let w_pi = (z.sum() - 1.0) / c;
        let raw = self.k_nu_nu - self.k_nu_x.dot(z) + (z.sum() - 1.0) * w_pi;
        let (variance, clamped) = settle_variance(raw, self.kernel.amplitude)?;
        Ok(CubatureResult {
            method: Method::NormalizedBc,
            mean: w.dot(values),
            variance,
            weights_k: w.as_slice().to_vec(),
            weights_pi: vec![w_pi],
            diagnostics: Diagnostics {
                jitter_used: factor.jitter_used(),
                vandermonde_rank: Some(1),
                variance_clamped: clamped,
                wall_time_s: start.elapsed().as_secs_f64(),
            },
        })
    }

    /// `Q = n`: weights `w_kᵀ = p_ν P_X⁻¹` do not involve the kernel; the
    /// variance is the squared worst-case error of those weights.
    pub fn bsc_square(&self, space: &FunctionSpace, values: &DVector<f64>) -> Result<CubatureResult> {
        let start = Instant::now();
        self.check_values(values)?;
        let q = space.q();
        if q != self.n() {
            return Err(Error::InvalidParameter(format!(
                "square rule needs Q = n, got Q = {q} and n = {}",
                self.n()
            )));
        }
        let p = vandermonde(space, &self.nodes)?.into_matrix();
        let rank = numeric_rank(&p);
        if rank < q {
            return Err(Error::NotUnisolvent { rank, dim: q });
        }
        let p_nu = poly_moments(space, &self.measure)?;
        let w_k = p
            .transpose()
            .lu()
            .solve(&p_nu)
            .ok_or(Error::NotUnisolvent { rank, dim: q })?;
        // from K w_k + P w_π = k_νX
        let w_pi = p
            .lu()
            .solve(&(&self.k_nu_x - &self.gram * &w_k))
            .ok_or(Error::NotUnisolvent { rank, dim: q })?;
        let (variance, clamped) = settle_variance(self.wce_squared(&w_k)?, self.kernel.amplitude)?;
        Ok(CubatureResult {
            method: Method::BscSquare,
            mean: w_k.dot(values),
            variance,
            weights_k: w_k.as_slice().to_vec(),
            weights_pi: w_pi.as_slice().to_vec(),
            diagnostics: Diagnostics {
                jitter_used: 0.0,
                vandermonde_rank: Some(rank),
                variance_clamped: clamped,
                wall_time_s: start.elapsed().as_secs_f64(),
            },
        })
    }

    /// Mean and variance of an arbitrary rule read as a BSC posterior:
    /// `μ = wᵀf_X`, `σ² = e_k(X, w)²`.
    ///
    /// This is the output of BSC on an `n`-dimensional space whose `Q = n`
    /// weights are exactly `w`. Such a space is built from indicator functions
    /// of the nodes; it is never materialized, since any choice yields the
    /// same mean and variance.
    pub fn endow(&self, weights: &DVector<f64>, values: &DVector<f64>) -> Result<CubatureResult> {
        let start = Instant::now();
        self.check_values(values)?;
        if weights.len() != self.n() {
            return Err(Error::DimensionMismatch { expected: self.n(), found: weights.len() });
        }
        if let Some(index) = weights.iter().position(|&w| w == 0.0) {
            return Err(Error::ZeroWeight { index });
        }
        let (variance, clamped) = settle_variance(self.wce_squared(weights)?, self.kernel.amplitude)?;
        Ok(CubatureResult {
            method: Method::Endow,
            mean: weights.dot(values),
            variance,
            weights_k: weights.as_slice().to_vec(),
            weights_pi: Vec::new(),
            diagnostics: Diagnostics {
                jitter_used: 0.0,
                vandermonde_rank: None,
                variance_clamped: clamped,
                wall_time_s: start.elapsed().as_secs_f64(),
            },
        })
    }
}

pub fn bc(kernel: &KernelSpec, measure: &MeasureSpec, data: &Dataset) -> Result<CubatureResult> {
    CubatureContext::new(kernel, measure, data.nodes())?.bc(&data.values_vector())
}

pub fn bsc(
    kernel: &KernelSpec,
    measure: &MeasureSpec,
    space: &FunctionSpace,
    data: &Dataset,
    eta: Option<&DVector<f64>>,
) -> Result<CubatureResult> {
    CubatureContext::new(kernel, measure, data.nodes())?.bsc(space, &data.values_vector(), eta)
}

pub fn normalized_bc(kernel: &KernelSpec, measure: &MeasureSpec, data: &Dataset) -> Result<CubatureResult> {
    CubatureContext::new(kernel, measure, data.nodes())?.normalized_bc(&data.values_vector())
}

pub fn bsc_square(
    kernel: &KernelSpec,
    measure: &MeasureSpec,
    space: &FunctionSpace,
    data: &Dataset,
) -> Result<CubatureResult> {
    CubatureContext::assemble(kernel, measure, data.nodes())?.bsc_square(space, &data.values_vector())
}

pub fn wce_squared(kernel: &KernelSpec, measure: &MeasureSpec, nodes: &[Vec<f64>], w: &DVector<f64>) -> Result<f64> {
    CubatureContext::assemble(kernel, measure, nodes)?.wce_squared(w)
}

pub fn wce(kernel: &KernelSpec, measure: &MeasureSpec, nodes: &[Vec<f64>], w: &DVector<f64>) -> Result<f64> {
    CubatureContext::assemble(kernel, measure, nodes)?.wce(w)
}

pub fn endow_rule(
    kernel: &KernelSpec,
    measure: &MeasureSpec,
    data: &Dataset,
    weights: &DVector<f64>,
) -> Result<CubatureResult> {
    CubatureContext::assemble(kernel, measure, data.nodes())?.endow(weights, &data.values_vector())
}
