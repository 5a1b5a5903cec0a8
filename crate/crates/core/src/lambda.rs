//! Operator-valued polynomials in the Carleman parameter λ.
//!
//! A `LambdaOp` is Σ_p λ^p A_p with each A_p a `DiffOp`. The λ-grading is
//! what the estimates care about, so the coefficients are kept separate
//! instead of folding λ into the scalars.

use crate::diffop::DiffOp;
use crate::error::{Error, Result};
use crate::scalar::{GaussianRational, ScalarExpr};
use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LambdaOp {
    dim: usize,
    // index p holds the coefficient of λ^p; trailing zero ops are trimmed
    coeff_ops: Vec<DiffOp>,
}

impl LambdaOp {
    pub fn zero(dim: usize) -> Self {
        LambdaOp { dim, coeff_ops: Vec::new() }
    }

    pub fn from_diffop(op: DiffOp) -> Self {
        let dim = op.dim();
        let mut out = LambdaOp { dim, coeff_ops: vec![op] };
        out.trim();
        out
    }

    pub fn from_parts(dim: usize, parts: Vec<DiffOp>) -> Result<Self> {
        for p in &parts {
            if p.dim() != dim {
                return Err(Error::DimensionMismatch { left: dim, right: p.dim() });
            }
        }
        let mut out = LambdaOp { dim, coeff_ops: parts };
        out.trim();
        Ok(out)
    }

    /// λ^power · op as a one-term polynomial.
    pub fn monomial(power: usize, op: DiffOp) -> Self {
        let dim = op.dim();
        if op.is_zero() {
            return LambdaOp::zero(dim);
        }
        let mut coeff_ops = vec![DiffOp::zero(dim); power];
        coeff_ops.push(op);
        LambdaOp { dim, coeff_ops }
    }

    fn trim(&mut self) {
        while matches!(self.coeff_ops.last(), Some(op) if op.is_zero()) {
            self.coeff_ops.pop();
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_zero(&self) -> bool {
        self.coeff_ops.is_empty()
    }

    pub fn degree(&self) -> usize {
        self.coeff_ops.len().saturating_sub(1)
    }

    /// Largest operator order over all λ-coefficients.
    pub fn order(&self) -> u32 {
        self.coeff_ops.iter().map(|op| op.order()).max().unwrap_or(0)
    }

    pub fn coeff(&self, power: usize) -> DiffOp {
        self.coeff_ops
            .get(power)
            .cloned()
            .unwrap_or_else(|| DiffOp::zero(self.dim))
    }

    pub fn coeff_ref(&self, power: usize) -> Option<&DiffOp> {
        self.coeff_ops.get(power)
    }

    pub fn coeffs(&self) -> &[DiffOp] {
        &self.coeff_ops
    }

    /// The λ = 0 part.
    pub fn at_zero(&self) -> DiffOp {
        self.coeff(0)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if other.dim != self.dim {
            return Err(Error::DimensionMismatch { left: self.dim, right: other.dim });
        }
        let len = self.coeff_ops.len().max(other.coeff_ops.len());
        let mut parts = Vec::with_capacity(len);
        for p in 0..len {
            let a = self.coeff_ops.get(p);
            let b = other.coeff_ops.get(p);
            parts.push(match (a, b) {
                (Some(a), Some(b)) => a.add(b)?,
                (Some(a), None) => a.clone(),
                (None, Some(b)) => b.clone(),
                (None, None) => unreachable!(),
            });
        }
        let mut out = LambdaOp { dim: self.dim, coeff_ops: parts };
        out.trim();
        Ok(out)
    }

    pub fn neg(&self) -> Self {
        LambdaOp {
            dim: self.dim,
            coeff_ops: self.coeff_ops.iter().map(|op| op.neg()).collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.neg())
    }

    pub fn scale(&self, s: &GaussianRational) -> Self {
        let mut out = LambdaOp {
            dim: self.dim,
            coeff_ops: self.coeff_ops.iter().map(|op| op.scale(s)).collect(),
        };
        out.trim();
        out
    }

    /// Left multiplication by a function at every λ-power.
    pub fn mul_scalar_left(&self, b: &ScalarExpr) -> Result<Self> {
        let mut parts = Vec::with_capacity(self.coeff_ops.len());
        for op in &self.coeff_ops {
            parts.push(op.mul_scalar_left(b)?);
        }
        let mut out = LambdaOp { dim: self.dim, coeff_ops: parts };
        out.trim();
        Ok(out)
    }

    /// Operator composition; λ-degrees add by convolution.
    pub fn compose(&self, other: &Self) -> Result<Self> {
        if other.dim != self.dim {
            return Err(Error::DimensionMismatch { left: self.dim, right: other.dim });
        }
        if self.is_zero() || other.is_zero() {
            return Ok(LambdaOp::zero(self.dim));
        }
        let deg = self.coeff_ops.len() + other.coeff_ops.len() - 1;
        let mut parts = vec![DiffOp::zero(self.dim); deg];
        for (p, a) in self.coeff_ops.iter().enumerate() {
            if a.is_zero() {
                continue;
            }
            for (q, b) in other.coeff_ops.iter().enumerate() {
                if b.is_zero() {
                    continue;
                }
                parts[p + q] = parts[p + q].add(&a.compose(b)?)?;
            }
        }
        let mut out = LambdaOp { dim: self.dim, coeff_ops: parts };
        out.trim();
        Ok(out)
    }

    /// Multiplies by λ^p, shifting every coefficient up.
    pub fn shift_lambda(&self, p: usize) -> Self {
        if self.is_zero() || p == 0 {
            return self.clone();
        }
        let mut coeff_ops = vec![DiffOp::zero(self.dim); p];
        coeff_ops.extend(self.coeff_ops.iter().cloned());
        LambdaOp { dim: self.dim, coeff_ops }
    }

    /// Substitutes a concrete value for λ.
    pub fn eval(&self, lambda: &GaussianRational) -> DiffOp {
        let mut acc = DiffOp::zero(self.dim);
        let mut pow = GaussianRational::one();
        for op in &self.coeff_ops {
            acc = acc.add(&op.scale(&pow)).expect("same dim");
            pow = pow.mul(lambda);
        }
        acc
    }
}

/// Conjugation of A by the weight e^{λf}, computed as the substitution
/// A(x, D + λ(Df)). The substituted factors D_k + λ(D_k f) commute with one
/// another because the extra part is a gradient, so each monomial
/// c_α(x) D^α maps to c_α(x) Π_k (D_k + λ(D_k f))^{α_k} unambiguously.
pub fn conjugate(a: &DiffOp, f: &ScalarExpr) -> Result<LambdaOp> {
    if a.dim() != f.dim() {
        return Err(Error::DimensionMismatch { left: a.dim(), right: f.dim() });
    }
    let reality = f.classify_reality();
    if !reality.admits_real() {
        return Err(Error::NotRealValued { found: reality.describe() });
    }
    let dim = a.dim();
    let minus_i = GaussianRational::i().neg();
    // g_k = D_k f
    let mut g = Vec::with_capacity(dim);
    for k in 0..dim {
        g.push(f.diff(k)?.scale(&minus_i));
    }
    let mut out = LambdaOp::zero(dim);
    for (alpha, c) in a.terms() {
        let mut acc = LambdaOp::from_diffop(DiffOp::identity(dim));
        for k in 0..dim {
            if alpha[k] == 0 {
                continue;
            }
            let factor = LambdaOp::from_parts(
                dim,
                vec![DiffOp::d(dim, k)?, DiffOp::from_scalar(g[k].clone())],
            )?;
            for _ in 0..alpha[k] {
                acc = acc.compose(&factor)?;
            }
        }
        out = out.add(&acc.mul_scalar_left(c)?)?;
    }
    Ok(out)
}

impl fmt::Display for LambdaOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let mut parts = Vec::new();
        for (p, op) in self.coeff_ops.iter().enumerate() {
            if op.is_zero() {
                continue;
            }
            match p {
                0 => parts.push(format!("{op}")),
                1 => parts.push(format!("lambda * ({op})")),
                _ => parts.push(format!("lambda^{p} * ({op})")),
            }
        }
        write!(f, "{}", parts.join(" + "))
    }
}
