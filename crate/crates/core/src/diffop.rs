//! Linear differential operators in normal form.
//!
//! An operator is stored as Σ_α c_α(x) D^α with every coefficient to the
//! left of the derivatives, D^α = D_1^{α_1}···D_n^{α_n}, D_k = -i ∂_k.
//! Monomials in D commute with each other, so the multi-index map is a
//! faithful canonical form: two operators are equal as maps iff their maps
//! of nonzero coefficients are equal.

use crate::error::{Error, Result};
use crate::scalar::{GaussianRational, ScalarExpr};
use num_bigint::BigInt;
use num_rational::BigRational;
use std::collections::BTreeMap;
use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiffOp {
    dim: usize,
    terms: BTreeMap<Vec<u16>, ScalarExpr>,
}

impl DiffOp {
    pub fn zero(dim: usize) -> Self {
        DiffOp { dim, terms: BTreeMap::new() }
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_scalar(ScalarExpr::one(dim))
    }

    /// The multiplication operator u ↦ c·u.
    pub fn from_scalar(c: ScalarExpr) -> Self {
        let mut op = DiffOp::zero(c.dim());
        op.add_term(vec![0; op.dim], c);
        op
    }

    pub fn d(dim: usize, axis: usize) -> Result<Self> {
        if axis >= dim {
            return Err(Error::AxisOutOfRange { axis, dim });
        }
        let mut alpha = vec![0u16; dim];
        alpha[axis] = 1;
        let mut op = DiffOp::zero(dim);
        op.add_term(alpha, ScalarExpr::one(dim));
        Ok(op)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn order(&self) -> u32 {
        self.terms
            .keys()
            .map(|a| a.iter().map(|&e| e as u32).sum())
            .max()
            .unwrap_or(0)
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Vec<u16>, &ScalarExpr)> {
        self.terms.iter()
    }

    pub fn coeff(&self, alpha: &[u16]) -> Option<&ScalarExpr> {
        self.terms.get(alpha)
    }

    /// Adds c·D^α into the map, keeping it free of zero coefficients.
    pub fn add_term(&mut self, alpha: Vec<u16>, c: ScalarExpr) {
        debug_assert_eq!(alpha.len(), self.dim);
        debug_assert_eq!(c.dim(), self.dim);
        if c.is_zero() {
            return;
        }
        match self.terms.entry(alpha) {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                let s = o.get().add(&c);
                if s.is_zero() {
                    o.remove();
                } else {
                    *o.get_mut() = s;
                }
            }
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if other.dim != self.dim {
            return Err(Error::DimensionMismatch { left: self.dim, right: other.dim });
        }
        let mut out = self.clone();
        for (a, c) in &other.terms {
            out.add_term(a.clone(), c.clone());
        }
        Ok(out)
    }

    pub fn neg(&self) -> Self {
        DiffOp {
            dim: self.dim,
            terms: self.terms.iter().map(|(a, c)| (a.clone(), c.neg())).collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.neg())
    }

    pub fn scale(&self, s: &GaussianRational) -> Self {
        if s.is_zero() {
            return DiffOp::zero(self.dim);
        }
        DiffOp {
            dim: self.dim,
            terms: self.terms.iter().map(|(a, c)| (a.clone(), c.scale(s))).collect(),
        }
    }

    /// Left multiplication by a function: M_b ∘ self.
    pub fn mul_scalar_left(&self, b: &ScalarExpr) -> Result<Self> {
        if b.dim() != self.dim {
            return Err(Error::DimensionMismatch { left: self.dim, right: b.dim() });
        }
        let mut out = DiffOp::zero(self.dim);
        for (a, c) in &self.terms {
            out.add_term(a.clone(), b.checked_mul(c)?);
        }
        Ok(out)
    }

    /// self ∘ other as operators; normal-ordering by the Leibniz rule
    /// D^α M_b = Σ_{γ≤α} C(α,γ) M_{D^γ b} D^{α-γ}.
    pub fn compose(&self, other: &Self) -> Result<Self> {
        if other.dim != self.dim {
            return Err(Error::DimensionMismatch { left: self.dim, right: other.dim });
        }
        let mut out = DiffOp::zero(self.dim);
        for (alpha, a) in &self.terms {
            for (beta, b) in &other.terms {
                for gamma in sub_indices(alpha) {
                    let db = d_pow(b, &gamma)?;
                    if db.is_zero() {
                        continue;
                    }
                    let w = binom_multi(alpha, &gamma);
                    let mut idx = vec![0u16; self.dim];
                    for k in 0..self.dim {
                        idx[k] = alpha[k] - gamma[k] + beta[k];
                    }
                    out.add_term(idx, a.checked_mul(&db)?.scale(&w));
                }
            }
        }
        Ok(out)
    }

    /// self applied to a function.
    pub fn apply(&self, e: &ScalarExpr) -> Result<ScalarExpr> {
        if e.dim() != self.dim {
            return Err(Error::DimensionMismatch { left: self.dim, right: e.dim() });
        }
        let mut acc = ScalarExpr::zero(self.dim);
        for (alpha, c) in &self.terms {
            let de = d_pow(e, alpha)?;
            if de.is_zero() {
                continue;
            }
            acc = acc.add(&c.checked_mul(&de)?);
        }
        Ok(acc)
    }
}

/// Formal L² adjoint: (M_c D^α)* = D^α M_{c̄} = Σ_{γ≤α} C(α,γ) M_{D^γ c̄} D^{α-γ}.
/// Differentiation never raises polynomial degree, so no cap check is needed.
pub fn adjoint(op: &DiffOp) -> DiffOp {
    let mut out = DiffOp::zero(op.dim);
    for (alpha, c) in &op.terms {
        let cbar = c.conj();
        for gamma in sub_indices(alpha) {
            let dc = d_pow(&cbar, &gamma).expect("derivative stays under cap");
            if dc.is_zero() {
                continue;
            }
            let w = binom_multi(alpha, &gamma);
            let mut idx = vec![0u16; op.dim];
            for k in 0..op.dim {
                idx[k] = alpha[k] - gamma[k];
            }
            out.add_term(idx, dc.scale(&w));
        }
    }
    out
}

/// D^γ e = (-i)^{|γ|} ∂^γ e.
fn d_pow(e: &ScalarExpr, gamma: &[u16]) -> Result<ScalarExpr> {
    let mut out = e.clone();
    let mut total = 0u32;
    for (k, &g) in gamma.iter().enumerate() {
        for _ in 0..g {
            if out.is_zero() {
                return Ok(out);
            }
            out = out.diff(k)?;
            total += 1;
        }
    }
    Ok(out.scale(&minus_i_pow(total)))
}

/// (-i)^n.
fn minus_i_pow(n: u32) -> GaussianRational {
    match n % 4 {
        0 => GaussianRational::one(),
        1 => GaussianRational::i().neg(),
        2 => GaussianRational::from_int(-1),
        _ => GaussianRational::i(),
    }
}

/// All γ with γ ≤ α componentwise, in lexicographic order.
fn sub_indices(alpha: &[u16]) -> Vec<Vec<u16>> {
    let mut out = vec![Vec::with_capacity(alpha.len())];
    for &a in alpha {
        let mut next = Vec::with_capacity(out.len() * (a as usize + 1));
        for prefix in &out {
            for g in 0..=a {
                let mut p = prefix.clone();
                p.push(g);
                next.push(p);
            }
        }
        out = next;
    }
    out
}

/// Π_k C(α_k, γ_k) as an exact scalar.
fn binom_multi(alpha: &[u16], gamma: &[u16]) -> GaussianRational {
    let mut prod = BigInt::from(1);
    for (&a, &g) in alpha.iter().zip(gamma) {
        prod *= binomial(a, g);
    }
    GaussianRational::new(
        BigRational::from_integer(prod),
        BigRational::from_integer(BigInt::from(0)),
    )
}

fn binomial(n: u16, k: u16) -> BigInt {
    let k = k.min(n - k.min(n));
    let mut num = BigInt::from(1);
    for j in 0..k {
        num *= BigInt::from((n - j) as i64);
        num /= BigInt::from((j + 1) as i64);
    }
    num
}

impl fmt::Display for DiffOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut parts = Vec::new();
        for (alpha, c) in &self.terms {
            let mut s = format!("[{c}]");
            for (k, &e) in alpha.iter().enumerate() {
                match e {
                    0 => {}
                    1 => s.push_str(&format!(" D{}", k + 1)),
                    _ => s.push_str(&format!(" D{}^{}", k + 1, e)),
                }
            }
            parts.push(s);
        }
        write!(f, "{}", parts.join(" + "))
    }
}
