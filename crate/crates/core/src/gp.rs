//! Gaussian-process regression with a parametric mean in `π`.
//!
//! The prior is `f | γ ~ GP(p(x)γ, k)` with `γ ~ N(η, Σ)`. Two posteriors
//! are provided:
//!
//! * finite `Σ`, computed through the marginal kernel `k + pΣpᵀ` whose
//!   matrix `K_X + P_X Σ P_Xᵀ` is symmetric positive definite;
//! * the flat limit `Σ⁻¹ → 0`, computed from the saddle-point system
//!   `[[K_X, P_X], [P_Xᵀ, 0]]`. This mode needs a `π`-unisolvent node set.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kernels::{kernel_matrix, kernel_vector, KernelSpec};
use crate::linalg::{jittered_factorize, JitterPolicy, SaddleSystem, SpdFactor};
use crate::polyspace::{vandermonde, FunctionSpace};

#[derive(Debug, Clone)]
pub enum CoefficientPrior {
    /// Proper Gaussian prior with the given symmetric positive definite covariance.
    Finite(DMatrix<f64>),
    FlatLimit,
}

#[derive(Debug, Clone)]
pub struct PriorSpec {
    pub space: FunctionSpace,
    pub coefficients: CoefficientPrior,
    /// Prior mean `η` of the coefficients; zero when absent.
    pub coefficient_mean: Option<DVector<f64>>,
}

impl PriorSpec {
    pub fn flat(space: FunctionSpace) -> Self {
        PriorSpec {
            space,
            coefficients: CoefficientPrior::FlatLimit,
            coefficient_mean: None,
        }
    }

    pub fn finite(space: FunctionSpace, sigma: DMatrix<f64>) -> Self {
        PriorSpec {
            space,
            coefficients: CoefficientPrior::Finite(sigma),
            coefficient_mean: None,
        }
    }

    /// `Σ = σ²·I`.
    pub fn isotropic(space: FunctionSpace, sigma2: f64) -> Self {
        let q = space.q();
        PriorSpec::finite(space, DMatrix::identity(q, q) * sigma2)
    }

    pub fn with_mean(mut self, eta: DVector<f64>) -> Self {
        self.coefficient_mean = Some(eta);
        self
    }

    pub fn eta(&self) -> DVector<f64> {
        self.coefficient_mean
            .clone()
            .unwrap_or_else(|| DVector::zeros(self.space.q()))
    }
}

/// Exact integrand evaluations at pairwise distinct nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    nodes: Vec<Vec<f64>>,
    values: Vec<f64>,
}

impl Dataset {
    pub fn new(nodes: Vec<Vec<f64>>, values: Vec<f64>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::InvalidParameter("dataset needs at least one node".into()));
        }
        if nodes.len() != values.len() {
            return Err(Error::DimensionMismatch {
                expected: nodes.len(),
                found: values.len(),
            });
        }
        let d = nodes[0].len();
        if d == 0 {
            return Err(Error::InvalidParameter("nodes must have dimension at least 1".into()));
        }
        if let Some(bad) = nodes.iter().find(|x| x.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: bad.len(),
            });
        }
        if nodes.iter().flatten().chain(&values).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("nodes and values must be finite".into()));
        }
        let mut order: Vec<usize> = (0..nodes.len()).collect();
        let lex = |a: &[f64], b: &[f64]| {
            a.iter()
                .zip(b)
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        };
        order.sort_by(|&i, &j| lex(&nodes[i], &nodes[j]));
        for w in order.windows(2) {
            if nodes[w[0]] == nodes[w[1]] {
                let (a, b) = (w[0].min(w[1]), w[0].max(w[1]));
                return Err(Error::DuplicateNode { first: a, second: b });
            }
        }
        Ok(Dataset { nodes, values })
    }

    pub fn from_fn(nodes: Vec<Vec<f64>>, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let values = nodes.iter().map(|x| f(x)).collect();
        Dataset::new(nodes, values)
    }

    pub fn nodes(&self) -> &[Vec<f64>] {
        &self.nodes
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.values)
    }

    pub fn n(&self) -> usize {
        self.nodes.len()
    }

    pub fn dim(&self) -> usize {
        self.nodes[0].len()
    }

    /// Same nodes, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.n() {
            return Err(Error::DimensionMismatch {
                expected: self.n(),
                found: values.len(),
            });
        }
        Ok(Dataset {
            nodes: self.nodes.clone(),
            values,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PosteriorMode {
    Finite,
    Flat,
}

#[derive(Debug, Clone)]
enum Solver {
    Finite {
        marginal: SpdFactor,
        sigma: DMatrix<f64>,
        /// `P_X Σ`, n×Q.
        p_sigma: DMatrix<f64>,
    },
    Flat(SaddleSystem),
}

/// Posterior process conditioned on exact evaluations.
#[derive(Debug, Clone)]
pub struct PosteriorGP {
    kernel: KernelSpec,
    space: FunctionSpace,
    nodes: Vec<Vec<f64>>,
    values: DVector<f64>,
    eta: DVector<f64>,
    alpha: DVector<f64>,
    beta: DVector<f64>,
    solver: Solver,
}

/// Condition the hierarchical prior on `data`.
pub fn condition(prior: &PriorSpec, kernel: &KernelSpec, data: &Dataset) -> Result<PosteriorGP> {
    kernel.validate()?;
    let space = &prior.space;
    if space.dim() != data.dim() {
        return Err(Error::DimensionMismatch {
            expected: data.dim(),
            found: space.dim(),
        });
    }
    let q = space.q();
    let eta = prior.eta();
    if eta.len() != q {
        return Err(Error::DimensionMismatch { expected: q, found: eta.len() });
    }
    let nodes = data.nodes().to_vec();
    let f = data.values_vector();
    let k = kernel_matrix(kernel, &nodes, &nodes)?;
    let p = vandermonde(space, &nodes)?.into_matrix();

    let (alpha, beta, solver) = match &prior.coefficients {
        CoefficientPrior::Finite(sigma) => {
            if sigma.shape() != (q, q) {
                return Err(Error::DimensionMismatch { expected: q, found: sigma.nrows() });
            }
            if q > 0 && Cholesky::new(sigma.clone()).is_none() {
                return Err(Error::InvalidParameter("coefficient covariance must be positive definite".into()));
            }
            let p_sigma = &p * sigma;
            let mut c = &k + &p_sigma * p.transpose();
            // symmetrize away the roundoff of the product
            c = (&c + c.transpose()) * 0.5;
            let marginal = jittered_factorize(&c, &JitterPolicy::default())?;
            let alpha = marginal.solve(&(&f - &p * &eta));
            let beta = &eta + p_sigma.tr_mul(&alpha);
            (
                alpha,
                beta,
                Solver::Finite {
                    marginal,
                    sigma: sigma.clone(),
                    p_sigma,
                },
            )
        }
        CoefficientPrior::FlatLimit => {
            if q > data.n() {
                return Err(Error::NotUnisolvent { rank: data.n(), dim: q });
            }
            if q > 0 {
                let rank = crate::linalg::numeric_rank(&p);
                if rank < q {
                    return Err(Error::NotUnisolvent { rank, dim: q });
                }
            }
            let factor = jittered_factorize(&k, &JitterPolicy::default())?;
            let system = SaddleSystem::new(factor, p).map_err(|e| match e {
                Error::RankDeficient => Error::NotUnisolvent { rank: q.saturating_sub(1), dim: q },
                other => other,
            })?;
            let sol = system.solve(&f, &(-&eta))?;
            (sol.top, sol.bottom, Solver::Flat(system))
        }
    };

    Ok(PosteriorGP {
        kernel: kernel.clone(),
        space: space.clone(),
        nodes,
        values: f,
        eta,
        alpha,
        beta,
        solver,
    })
}

impl PosteriorGP {
    pub fn mode(&self) -> PosteriorMode {
        match self.solver {
            Solver::Finite { .. } => PosteriorMode::Finite,
            Solver::Flat(_) => PosteriorMode::Flat,
        }
    }

    pub fn alpha(&self) -> &DVector<f64> {
        &self.alpha
    }

    pub fn beta(&self) -> &DVector<f64> {
        &self.beta
    }

    pub fn nodes(&self) -> &[Vec<f64>] {
        &self.nodes
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn space(&self) -> &FunctionSpace {
        &self.space
    }

    pub fn jitter_used(&self) -> f64 {
        match &self.solver {
            Solver::Finite { marginal, .. } => marginal.jitter_used(),
            Solver::Flat(system) => system.kernel_factor().jitter_used(),
        }
    }

    fn features(&self, x: &[f64]) -> Result<(DVector<f64>, DVector<f64>)> {
        Ok((kernel_vector(&self.kernel, &self.nodes, x)?, self.space.eval(x)?))
    }

    /// `s(x) = k_X(x)·α + p(x)·β`.
    pub fn mean(&self, x: &[f64]) -> Result<f64> {
        let (kx, px) = self.features(x)?;
        Ok(kx.dot(&self.alpha) + px.dot(&self.beta))
    }

    pub fn cov(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        let (kx, px) = self.features(x)?;
        let (ky, py) = self.features(y)?;
        let kxy = crate::kernels::kernel_eval(&self.kernel, x, y)?;
        Ok(match &self.solver {
            Solver::Finite { marginal, sigma, p_sigma } => {
                let cx = &kx + p_sigma * &px;
                let cy = &ky + p_sigma * &py;
                let prior = kxy + px.dot(&(sigma * &py));
                prior - marginal.whiten(&cx).dot(&marginal.whiten(&cy))
            }
            Solver::Flat(system) => {
                let factor = system.kernel_factor();
                let (wx, wy) = (factor.whiten(&kx), factor.whiten(&ky));
                let bc = kxy - wx.dot(&wy);
                if system.q() == 0 {
                    bc
                } else {
                    let rx = system.kinv_p().tr_mul(&kx) - &px;
                    let ry = system.kinv_p().tr_mul(&ky) - &py;
                    bc + rx.dot(&system.schur_solve(&ry))
                }
            }
        })
    }

    pub fn variance(&self, x: &[f64]) -> Result<f64> {
        self.cov(x, x)
    }

    /// Lagrange cardinal functions `(u(x), v(x))`, solving the block system
    /// with right-hand side `[k_X(x); p(x)]`.
    ///
    /// Flat mode: `s(x) = u(x)ᵀ f_X − v(x)ᵀ η`. Finite mode:
    /// `v(x) = Σ(P_Xᵀ u(x) − p(x))` and `s(x) = u(x)ᵀ f_X − v(x)ᵀ Σ⁻¹ η`,
    /// which is the flat form whenever `Σ = I` or `η = 0`.
    pub fn lagrange(&self, x: &[f64]) -> Result<(DVector<f64>, DVector<f64>)> {
        let (kx, px) = self.features(x)?;
        match &self.solver {
            Solver::Finite { marginal, sigma, p_sigma } => {
                let u = marginal.solve(&(&kx + p_sigma * &px));
                let v = sigma * (self.p().tr_mul(&u) - px);
                Ok((u, v))
            }
            Solver::Flat(system) => {
                let sol = system.solve(&kx, &px)?;
                Ok((sol.top, sol.bottom))
            }
        }
    }

    fn p(&self) -> DMatrix<f64> {
        match &self.solver {
            Solver::Flat(system) => system.vandermonde().clone(),
            Solver::Finite { .. } => vandermonde(&self.space, &self.nodes)
                .expect("nodes were validated at conditioning")
                .into_matrix(),
        }
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn eta(&self) -> &DVector<f64> {
        &self.eta
    }
}

pub fn posterior_mean(post: &PosteriorGP, x: &[f64]) -> Result<f64> {
    post.mean(x)
}

pub fn posterior_cov(post: &PosteriorGP, x: &[f64], y: &[f64]) -> Result<f64> {
    post.cov(x, y)
}

pub fn lagrange_functions(post: &PosteriorGP, x: &[f64]) -> Result<(DVector<f64>, DVector<f64>)> {
    post.lagrange(x)
}
