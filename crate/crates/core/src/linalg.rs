//! Factorizations and solvers for kernel matrices and the saddle-point
//! systems built on top of them.
//!
//! Kernel matrices are symmetric positive definite in exact arithmetic but
//! routinely lose definiteness to roundoff for small length-scales or
//! clustered nodes. [`jittered_factorize`] walks an escalating diagonal
//! shift schedule and records the shift it needed, so every downstream
//! result can report how far the factored matrix is from the assembled one.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Diagonal-shift schedule used by [`jittered_factorize`].
///
/// The candidates are `0, τ·m̄, 10τ·m̄, …, 10^(steps-1)·τ·m̄` where `m̄` is the
/// mean diagonal entry of the matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JitterPolicy {
    pub relative: f64,
    pub steps: u32,
}

impl Default for JitterPolicy {
    fn default() -> Self {
        JitterPolicy {
            relative: 1e-12,
            steps: 9,
        }
    }
}

impl JitterPolicy {
    /// No shift at all: the factorization either succeeds as is or fails.
    pub fn none() -> Self {
        JitterPolicy {
            relative: 0.0,
            steps: 0,
        }
    }

    fn schedule(&self, mean_diag: f64) -> impl Iterator<Item = f64> + '_ {
        let base = self.relative * mean_diag.abs();
        std::iter::once(0.0).chain((0..self.steps).map(move |k| base * 10f64.powi(k as i32)))
    }
}

/// Cholesky factor of `A + jitter_used·I` for a symmetric positive
/// definite `A`.
#[derive(Debug, Clone)]
pub struct SpdFactor {
    chol: Cholesky<f64, Dyn>,
    shifted: DMatrix<f64>,
    jitter_used: f64,
    log_det: f64,
}

impl SpdFactor {
    pub fn dim(&self) -> usize {
        self.shifted.nrows()
    }

    /// Absolute diagonal shift that was added before factorizing.
    pub fn jitter_used(&self) -> f64 {
        self.jitter_used
    }

    /// `log det(A + jitter_used·I)`.
    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    /// Lower-triangular factor `L` with `L·Lᵀ = A + jitter_used·I`.
    pub fn lower(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    /// The matrix that was actually factorized (`A` plus the jitter).
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.shifted
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }

    pub fn solve_matrix(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(b)
    }

    /// `L⁻¹·b`.
    pub fn whiten(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut out = b.clone();
        self.chol.l_dirty().solve_lower_triangular_mut(&mut out);
        out
    }

    /// `L⁻¹·B` for a block of right-hand sides.
    pub fn whiten_matrix(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = b.clone();
        self.chol.l_dirty().solve_lower_triangular_mut(&mut out);
        out
    }

    /// `bᵀ·A⁻¹·b`, computed as the squared norm of the whitened vector so the
    /// result is non-negative by construction.
    pub fn quad_form(&self, b: &DVector<f64>) -> f64 {
        self.whiten(b).norm_squared()
    }
}

/// Factorize a symmetric matrix, escalating a diagonal shift until the
/// Cholesky factorization succeeds.
pub fn jittered_factorize(a: &DMatrix<f64>, policy: &JitterPolicy) -> Result<SpdFactor> {
    let n = a.nrows();
    if n == 0 || a.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n.max(1),
            found: a.ncols(),
        });
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::FactorizationFailed { last_jitter: 0.0 });
    }
    let scale = a.amax();
    let asym = (a - a.transpose()).amax();
    if asym > 1e-12 * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::InvalidParameter(format!(
            "matrix is not symmetric (max asymmetry {asym:e})"
        )));
    }

    let mean_diag = a.diagonal().mean();
    let mut last = 0.0;
    for jitter in policy.schedule(mean_diag) {
        last = jitter;
        let mut shifted = a.clone();
        for i in 0..n {
            shifted[(i, i)] += jitter;
        }
        if let Some(chol) = Cholesky::new(shifted.clone()) {
            let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
            if !log_det.is_finite() {
                continue;
            }
            return Ok(SpdFactor {
                chol,
                shifted,
                jitter_used: jitter,
                log_det,
            });
        }
    }
    Err(Error::FactorizationFailed { last_jitter: last })
}

/// Solution `(top, bottom)` of a saddle-point system.
#[derive(Debug, Clone, PartialEq)]
pub struct SaddleSolution {
    pub top: DVector<f64>,
    pub bottom: DVector<f64>,
}

/// Pre-factored saddle-point operator
///
/// ```text
/// [ K   P ] [top   ]   [b_top   ]
/// [ Pᵀ  0 ] [bottom] = [b_bottom]
/// ```
///
/// solved through the Schur complement `S = Pᵀ K⁻¹ P`. Both `K` and `S` are
/// factorized once, so many right-hand sides (integration weights, Lagrange
/// functions at many points) reuse the same triangular factors.
#[derive(Debug, Clone)]
pub struct SaddleSystem {
    kernel: SpdFactor,
    vandermonde: DMatrix<f64>,
    kinv_p: DMatrix<f64>,
    schur: Option<Cholesky<f64, Dyn>>,
}

const REFINEMENT_STEPS: usize = 2;

impl SaddleSystem {
    pub fn new(kernel: SpdFactor, vandermonde: DMatrix<f64>) -> Result<Self> {
        let n = kernel.dim();
        if vandermonde.nrows() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: vandermonde.nrows(),
            });
        }
        let q = vandermonde.ncols();
        if q > n {
            return Err(Error::RankDeficient);
        }
        let (kinv_p, schur) = if q == 0 {
            (DMatrix::zeros(n, 0), None)
        } else {
            let whitened = kernel.whiten_matrix(&vandermonde);
            let s = whitened.transpose() * &whitened;
            if s.iter().any(|v| !v.is_finite()) {
                return Err(Error::RankDeficient);
            }
            let schur = Cholesky::new(s).ok_or(Error::RankDeficient)?;
            (kernel.solve_matrix(&vandermonde), Some(schur))
        };
        Ok(SaddleSystem {
            kernel,
            vandermonde,
            kinv_p,
            schur,
        })
    }

    pub fn kernel_factor(&self) -> &SpdFactor {
        &self.kernel
    }

    pub fn vandermonde(&self) -> &DMatrix<f64> {
        &self.vandermonde
    }

    /// `K⁻¹·P`, cached at construction.
    pub fn kinv_p(&self) -> &DMatrix<f64> {
        &self.kinv_p
    }

    pub fn n(&self) -> usize {
        self.kernel.dim()
    }

    pub fn q(&self) -> usize {
        self.vandermonde.ncols()
    }

    /// Solve `S·y = b` with the Schur complement `S = Pᵀ K⁻¹ P`.
    pub fn schur_solve(&self, b: &DVector<f64>) -> DVector<f64> {
        match &self.schur {
            Some(s) => s.solve(b),
            None => DVector::zeros(0),
        }
    }

    fn solve_once(&self, b_top: &DVector<f64>, b_bottom: &DVector<f64>) -> SaddleSolution {
        let kinv_b = self.kernel.solve(b_top);
        let bottom = match &self.schur {
            Some(s) => s.solve(&(self.vandermonde.tr_mul(&kinv_b) - b_bottom)),
            None => DVector::zeros(0),
        };
        // K⁻¹(b − P·bottom) = K⁻¹b − (K⁻¹P)·bottom
        let top = if bottom.is_empty() {
            kinv_b
        } else {
            kinv_b - &self.kinv_p * &bottom
        };
        SaddleSolution { top, bottom }
    }

    /// Residuals of both block equations for a candidate solution.
    pub fn residual(
        &self,
        sol: &SaddleSolution,
        b_top: &DVector<f64>,
        b_bottom: &DVector<f64>,
    ) -> (DVector<f64>, DVector<f64>) {
        let mut r_top = b_top - self.kernel.matrix() * &sol.top;
        if self.q() > 0 {
            r_top -= &self.vandermonde * &sol.bottom;
        }
        let r_bottom = b_bottom - self.vandermonde.tr_mul(&sol.top);
        (r_top, r_bottom)
    }

    pub fn solve(&self, b_top: &DVector<f64>, b_bottom: &DVector<f64>) -> Result<SaddleSolution> {
        if b_top.len() != self.n() {
            return Err(Error::DimensionMismatch {
                expected: self.n(),
                found: b_top.len(),
            });
        }
        if b_bottom.len() != self.q() {
            return Err(Error::DimensionMismatch {
                expected: self.q(),
                found: b_bottom.len(),
            });
        }
        let mut sol = self.solve_once(b_top, b_bottom);
        if self.q() > 0 {
            for _ in 0..REFINEMENT_STEPS {
                let (r_top, r_bottom) = self.residual(&sol, b_top, b_bottom);
                let corr = self.solve_once(&r_top, &r_bottom);
                sol.top += corr.top;
                sol.bottom += corr.bottom;
            }
        }
        Ok(sol)
    }
}

/// One-shot saddle-point solve. Prefer [`SaddleSystem`] when several
/// right-hand sides share the same operator.
pub fn solve_saddle(
    kernel: &SpdFactor,
    vandermonde: &DMatrix<f64>,
    b_top: &DVector<f64>,
    b_bottom: &DVector<f64>,
) -> Result<SaddleSolution> {
    SaddleSystem::new(kernel.clone(), vandermonde.clone())?.solve(b_top, b_bottom)
}

/// Numerical rank from the singular values, with threshold
/// `max(n, Q)·ε·σ_max`.
pub fn numeric_rank(m: &DMatrix<f64>) -> usize {
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let smax = sv.max();
    if smax == 0.0 || !smax.is_finite() {
        return 0;
    }
    let tol = rows.max(cols) as f64 * f64::EPSILON * smax;
    sv.iter().filter(|&&s| s > tol).count()
}
