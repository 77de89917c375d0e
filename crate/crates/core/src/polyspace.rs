//! The parametric function space `π`: bases, Vandermonde matrices and the
//! unisolvency check.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::numeric_rank;

type BasisFn = dyn Fn(&[f64]) -> f64 + Send + Sync;

/// An evaluable basis function with an optional known integral against the
/// measure it will be used with.
#[derive(Clone)]
pub struct CustomBasis {
    pub name: String,
    func: Arc<BasisFn>,
    pub integral: Option<f64>,
}

impl CustomBasis {
    pub fn new(name: impl Into<String>, func: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        CustomBasis {
            name: name.into(),
            func: Arc::new(func),
            integral: None,
        }
    }

    pub fn with_integral(mut self, integral: f64) -> Self {
        self.integral = Some(integral);
        self
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.func)(x)
    }
}

impl fmt::Debug for CustomBasis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomBasis")
            .field("name", &self.name)
            .field("integral", &self.integral)
            .finish()
    }
}

#[derive(Debug, Clone)]
pub enum BasisFunction {
    /// `x^α` for a multi-index `α`.
    Monomial(Vec<u32>),
    Custom(CustomBasis),
}

impl BasisFunction {
    fn same_descriptor(&self, other: &BasisFunction) -> bool {
        match (self, other) {
            (BasisFunction::Monomial(a), BasisFunction::Monomial(b)) => a == b,
            (BasisFunction::Custom(a), BasisFunction::Custom(b)) => a.name == b.name,
            _ => false,
        }
    }
}

/// Per-coordinate affine change of variable `t_j = scale_j·x_j + shift_j`
/// applied before monomials are evaluated.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMap {
    pub scale: Vec<f64>,
    pub shift: Vec<f64>,
}

impl AffineMap {
    /// Map the box `[lower, upper]` onto `[-1, 1]^d`.
    pub fn to_unit_box(lower: &[f64], upper: &[f64]) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                expected: lower.len(),
                found: upper.len(),
            });
        }
        let mut scale = Vec::with_capacity(lower.len());
        let mut shift = Vec::with_capacity(lower.len());
        for (&l, &u) in lower.iter().zip(upper) {
            if !(u > l) {
                return Err(Error::InvalidParameter(format!("empty rescaling interval [{l}, {u}]")));
            }
            let s = 2.0 / (u - l);
            scale.push(s);
            shift.push(-1.0 - s * l);
        }
        Ok(AffineMap { scale, shift })
    }

    #[inline]
    pub fn apply(&self, j: usize, x: f64) -> f64 {
        self.scale[j] * x + self.shift[j]
    }
}

#[derive(Debug, Clone)]
pub struct FunctionSpace {
    dim: usize,
    basis: Vec<BasisFunction>,
    degree: Option<u32>,
    scaling: Option<AffineMap>,
}

fn push_graded(d: usize, total: u32, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
    if prefix.len() + 1 == d {
        prefix.push(total);
        out.push(prefix.clone());
        prefix.pop();
        return;
    }
    for first in (0..=total).rev() {
        prefix.push(first);
        push_graded(d, total - first, prefix, out);
        prefix.pop();
    }
}

/// Multi-indices with `|α| ≤ m` in graded lexicographic order.
pub fn graded_multi_indices(m: u32, d: usize) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    for total in 0..=m {
        push_graded(d, total, &mut Vec::with_capacity(d), &mut out);
    }
    out
}

/// `C(m + d, d)`, the dimension of `Π_m(R^d)`.
pub fn total_degree_dim(m: u32, d: usize) -> usize {
    let m = m as u128;
    let mut c: u128 = 1;
    for i in 1..=d as u128 {
        c = c * (m + i) / i;
    }
    c as usize
}

impl FunctionSpace {
    /// The empty space: conditioning reduces to standard Bayesian cubature.
    pub fn empty(dim: usize) -> Self {
        FunctionSpace {
            dim,
            basis: Vec::new(),
            degree: None,
            scaling: None,
        }
    }

    /// `π = {1}`.
    pub fn constant(dim: usize) -> Self {
        total_degree_space(0, dim)
    }

    /// A space from explicit basis descriptors; rejects duplicates.
    pub fn from_basis(dim: usize, basis: Vec<BasisFunction>) -> Result<Self> {
        for (i, b) in basis.iter().enumerate() {
            if let BasisFunction::Monomial(alpha) = b {
                if alpha.len() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        found: alpha.len(),
                    });
                }
            }
            if basis[..i].iter().any(|prev| prev.same_descriptor(b)) {
                return Err(Error::InvalidParameter(format!("duplicate basis function at position {i}")));
            }
        }
        Ok(FunctionSpace {
            dim,
            basis,
            degree: None,
            scaling: None,
        })
    }

    /// Evaluate monomials in coordinates rescaled from `[lower, upper]` to
    /// `[-1, 1]^d`. The span is unchanged; only conditioning improves.
    pub fn with_rescaling(mut self, lower: &[f64], upper: &[f64]) -> Result<Self> {
        if lower.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: lower.len(),
            });
        }
        self.scaling = Some(AffineMap::to_unit_box(lower, upper)?);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `Q = dim(π)`.
    pub fn q(&self) -> usize {
        self.basis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.basis.is_empty()
    }

    pub fn degree(&self) -> Option<u32> {
        self.degree
    }

    pub fn basis(&self) -> &[BasisFunction] {
        &self.basis
    }

    pub fn scaling(&self) -> Option<&AffineMap> {
        self.scaling.as_ref()
    }

    /// Position of the monomial `x^α` in the basis, if present.
    pub fn index_of(&self, alpha: &[u32]) -> Option<usize> {
        self.basis
            .iter()
            .position(|b| matches!(b, BasisFunction::Monomial(a) if a == alpha))
    }

    fn eval_basis(&self, b: &BasisFunction, x: &[f64]) -> f64 {
        match b {
            BasisFunction::Monomial(alpha) => alpha
                .iter()
                .enumerate()
                .map(|(j, &e)| {
                    let t = match &self.scaling {
                        Some(map) => map.apply(j, x[j]),
                        None => x[j],
                    };
                    t.powi(e as i32)
                })
                .product(),
            BasisFunction::Custom(c) => c.eval(x),
        }
    }

    /// The row `p(x)` as a column vector.
    pub fn eval(&self, x: &[f64]) -> Result<DVector<f64>> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: x.len(),
            });
        }
        Ok(DVector::from_iterator(
            self.q(),
            self.basis.iter().map(|b| self.eval_basis(b, x)),
        ))
    }
}

/// `Π_m(R^d)` with the monomial basis in graded lexicographic order.
pub fn total_degree_space(m: u32, d: usize) -> FunctionSpace {
    FunctionSpace {
        dim: d,
        basis: graded_multi_indices(m, d).into_iter().map(BasisFunction::Monomial).collect(),
        degree: Some(m),
        scaling: None,
    }
}

/// `[P_X]_{ij} = p_j(x_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Vandermonde {
    matrix: DMatrix<f64>,
}

impl Vandermonde {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.matrix
    }

    pub fn rank(&self) -> usize {
        numeric_rank(&self.matrix)
    }
}

pub fn vandermonde(space: &FunctionSpace, xs: &[Vec<f64>]) -> Result<Vandermonde> {
    let mut m = DMatrix::zeros(xs.len(), space.q());
    for (i, x) in xs.iter().enumerate() {
        let row = space.eval(x)?;
        for (j, v) in row.iter().enumerate() {
            m[(i, j)] = *v;
        }
    }
    Ok(Vandermonde { matrix: m })
}

/// True iff `|X| ≥ Q` and the Vandermonde matrix has full column rank.
pub fn is_unisolvent(space: &FunctionSpace, xs: &[Vec<f64>]) -> bool {
    if space.is_empty() {
        return true;
    }
    if xs.len() < space.q() {
        return false;
    }
    match vandermonde(space, xs) {
        Ok(v) => v.rank() == space.q(),
        Err(_) => false,
    }
}
