//! First-order fields X = Σ_k a_k(x) D_k with D_k = -i ∂_k.
//!
//! The convention matters: iX = Σ a_k ∂_k is the real object when the a_k
//! are real-valued, and that is the standing assumption for the fields a
//! system is built from (checked by `SystemSpec`, not here).

use crate::diffop::DiffOp;
use crate::error::{Error, Result};
use crate::scalar::{GaussianRational, ScalarExpr};
use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VectorField {
    dim: usize,
    coeffs: Vec<ScalarExpr>,
}

impl VectorField {
    pub fn new(coeffs: Vec<ScalarExpr>) -> Result<Self> {
        let dim = coeffs.len();
        if dim == 0 {
            return Err(Error::InvalidSystem("vector field needs at least one axis".into()));
        }
        for c in &coeffs {
            if c.dim() != dim {
                return Err(Error::DimensionMismatch { left: dim, right: c.dim() });
            }
        }
        Ok(VectorField { dim, coeffs })
    }

    pub fn zero(dim: usize) -> Self {
        VectorField { dim, coeffs: vec![ScalarExpr::zero(dim); dim] }
    }

    /// The coordinate operator D_axis.
    pub fn coordinate(dim: usize, axis: usize) -> Result<Self> {
        if axis >= dim {
            return Err(Error::AxisOutOfRange { axis, dim });
        }
        let mut coeffs = vec![ScalarExpr::zero(dim); dim];
        coeffs[axis] = ScalarExpr::one(dim);
        Ok(VectorField { dim, coeffs })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn coeffs(&self) -> &[ScalarExpr] {
        &self.coeffs
    }

    pub fn coeff(&self, axis: usize) -> &ScalarExpr {
        &self.coeffs[axis]
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_zero())
    }

    /// True when iX is a real vector field, i.e. every D-coefficient is
    /// real-valued (or zero).
    pub fn is_real(&self) -> bool {
        self.coeffs.iter().all(|c| c.classify_reality().admits_real())
    }

    pub fn has_constant_coeffs(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_constant())
    }

    /// X e = Σ_k a_k · (-i) ∂_k e.
    pub fn apply(&self, e: &ScalarExpr) -> Result<ScalarExpr> {
        if e.dim() != self.dim {
            return Err(Error::DimensionMismatch { left: self.dim, right: e.dim() });
        }
        let minus_i = GaussianRational::i().neg();
        let mut acc = ScalarExpr::zero(self.dim);
        for k in 0..self.dim {
            if self.coeffs[k].is_zero() {
                continue;
            }
            let d = e.diff(k)?;
            if d.is_zero() {
                continue;
            }
            acc = acc.add(&self.coeffs[k].checked_mul(&d)?.scale(&minus_i));
        }
        Ok(acc)
    }

    /// d = Σ_k D_k a_k; imaginary-valued whenever the field is real.
    pub fn divergence_term(&self) -> ScalarExpr {
        let minus_i = GaussianRational::i().neg();
        let mut acc = ScalarExpr::zero(self.dim);
        for k in 0..self.dim {
            acc = acc.add(&self.coeffs[k].diff(k).expect("axis in range").scale(&minus_i));
        }
        acc
    }

    /// [X,Y] as a first-order field: the l-th coefficient is X(b_l) - Y(a_l).
    pub fn commutator(&self, other: &Self) -> Result<Self> {
        if other.dim != self.dim {
            return Err(Error::DimensionMismatch { left: self.dim, right: other.dim });
        }
        let mut coeffs = Vec::with_capacity(self.dim);
        for l in 0..self.dim {
            coeffs.push(self.apply(&other.coeffs[l])?.sub(&other.apply(&self.coeffs[l])?));
        }
        Ok(VectorField { dim: self.dim, coeffs })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if other.dim != self.dim {
            return Err(Error::DimensionMismatch { left: self.dim, right: other.dim });
        }
        let coeffs = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| a.add(b))
            .collect();
        Ok(VectorField { dim: self.dim, coeffs })
    }

    pub fn neg(&self) -> Self {
        VectorField {
            dim: self.dim,
            coeffs: self.coeffs.iter().map(|c| c.neg()).collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.neg())
    }

    /// c(x) X, coefficient-wise product.
    pub fn scaled(&self, c: &ScalarExpr) -> Result<Self> {
        let mut coeffs = Vec::with_capacity(self.dim);
        for a in &self.coeffs {
            coeffs.push(c.checked_mul(a)?);
        }
        Ok(VectorField { dim: self.dim, coeffs })
    }

    /// The field as a normal-form operator Σ a_k D_k.
    pub fn as_diffop(&self) -> DiffOp {
        let mut op = DiffOp::zero(self.dim);
        for k in 0..self.dim {
            if self.coeffs[k].is_zero() {
                continue;
            }
            let mut alpha = vec![0u16; self.dim];
            alpha[k] = 1;
            op.add_term(alpha, self.coeffs[k].clone());
        }
        op
    }

    /// X* = X + d for the L² pairing; valid for any coefficients since the
    /// divergence correction here is computed from the conjugate
    /// coefficients by the general adjoint.
    pub fn adjoint_diffop(&self) -> DiffOp {
        crate::diffop::adjoint(&self.as_diffop())
    }
}

impl fmt::Display for VectorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        for (k, c) in self.coeffs.iter().enumerate() {
            if !c.is_zero() {
                parts.push(format!("[{c}]*D{}", k + 1));
            }
        }
        if parts.is_empty() {
            return write!(f, "0");
        }
        write!(f, "{}", parts.join(" + "))
    }
}
