//! Exact scalar arithmetic: Gaussian-rational numbers and multivariate
//! polynomials over them.
//!
//! Polynomials play the role of the smooth coefficient functions: vector
//! field coefficients, weight functions, divergence terms, structure
//! coefficients. Everything here is exact; there are no tolerances.

use crate::error::{Error, Result};
use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use std::collections::BTreeMap;
use std::fmt;

/// Exponents above this cap abort multiplication with an error rather than
/// silently truncating. Generous for every operator this crate builds.
pub const DEFAULT_EXPONENT_CAP: u16 = 64;

/// A complex number with rational real and imaginary parts.
///
/// `BigRational` keeps itself in lowest terms with a positive denominator,
/// so `(re, im)` is a canonical representation and `==` is exact equality.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GaussianRational {
    pub re: BigRational,
    pub im: BigRational,
}

impl GaussianRational {
    pub fn new(re: BigRational, im: BigRational) -> Self {
        GaussianRational { re, im }
    }

    pub fn zero() -> Self {
        GaussianRational::new(BigRational::zero(), BigRational::zero())
    }

    pub fn one() -> Self {
        GaussianRational::new(BigRational::one(), BigRational::zero())
    }

    /// The imaginary unit.
    pub fn i() -> Self {
        GaussianRational::new(BigRational::zero(), BigRational::one())
    }

    pub fn from_int(n: i64) -> Self {
        GaussianRational::new(BigRational::from_integer(BigInt::from(n)), BigRational::zero())
    }

    /// p/q as a real value. Panics if q = 0.
    pub fn from_ratio(p: i64, q: i64) -> Self {
        assert!(q != 0, "zero denominator");
        GaussianRational::new(
            BigRational::new(BigInt::from(p), BigInt::from(q)),
            BigRational::zero(),
        )
    }

    /// p/q times i. Panics if q = 0.
    pub fn imaginary_ratio(p: i64, q: i64) -> Self {
        assert!(q != 0, "zero denominator");
        GaussianRational::new(
            BigRational::zero(),
            BigRational::new(BigInt::from(p), BigInt::from(q)),
        )
    }

    pub fn is_zero(&self) -> bool {
        self.re.is_zero() && self.im.is_zero()
    }

    pub fn is_real(&self) -> bool {
        self.im.is_zero()
    }

    pub fn is_imaginary(&self) -> bool {
        self.re.is_zero()
    }

    pub fn conj(&self) -> Self {
        GaussianRational::new(self.re.clone(), -self.im.clone())
    }

    pub fn add(&self, other: &Self) -> Self {
        GaussianRational::new(&self.re + &other.re, &self.im + &other.im)
    }

    pub fn sub(&self, other: &Self) -> Self {
        GaussianRational::new(&self.re - &other.re, &self.im - &other.im)
    }

    pub fn mul(&self, other: &Self) -> Self {
        // (a+bi)(c+di) = (ac-bd) + (ad+bc)i
        GaussianRational::new(
            &self.re * &other.re - &self.im * &other.im,
            &self.re * &other.im + &self.im * &other.re,
        )
    }

    pub fn neg(&self) -> Self {
        GaussianRational::new(-self.re.clone(), -self.im.clone())
    }

    pub fn to_complex(&self) -> Complex64 {
        Complex64::new(
            self.re.to_f64().expect("rational out of f64 range"),
            self.im.to_f64().expect("rational out of f64 range"),
        )
    }
}

fn fmt_rational(r: &BigRational) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

impl fmt::Display for GaussianRational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let mut parts = Vec::new();
        if !self.re.is_zero() {
            parts.push(fmt_rational(&self.re));
        }
        if !self.im.is_zero() {
            let im = if self.im == BigRational::one() {
                "i".to_string()
            } else if self.im == -BigRational::one() {
                "-i".to_string()
            } else {
                format!("{}*i", fmt_rational(&self.im))
            };
            parts.push(im);
        }
        let mut out = String::new();
        for (k, p) in parts.iter().enumerate() {
            if k > 0 && !p.starts_with('-') {
                out.push('+');
            }
            out.push_str(p);
        }
        write!(f, "{out}")
    }
}

/// Reality class of an expression, judged coefficient by coefficient
/// (the variables are real by convention).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reality {
    Zero,
    RealValued,
    ImaginaryValued,
    Mixed,
}

impl Reality {
    /// Zero is admissible wherever a real value is required.
    pub fn admits_real(self) -> bool {
        matches!(self, Reality::Zero | Reality::RealValued)
    }

    /// Zero is admissible wherever an imaginary value is required.
    pub fn admits_imaginary(self) -> bool {
        matches!(self, Reality::Zero | Reality::ImaginaryValued)
    }

    pub fn describe(self) -> &'static str {
        match self {
            Reality::Zero => "zero",
            Reality::RealValued => "real-valued",
            Reality::ImaginaryValued => "imaginary-valued",
            Reality::Mixed => "mixed",
        }
    }
}

/// Multivariate polynomial in `dim` real variables with Gaussian-rational
/// coefficients, stored as a map from exponent multi-indices to nonzero
/// coefficients. The map is the canonical form: two expressions are equal
/// iff their term maps are identical.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScalarExpr {
    dim: usize,
    terms: BTreeMap<Vec<u16>, GaussianRational>,
}

impl ScalarExpr {
    pub fn zero(dim: usize) -> Self {
        ScalarExpr { dim, terms: BTreeMap::new() }
    }

    pub fn one(dim: usize) -> Self {
        ScalarExpr::constant(dim, GaussianRational::one())
    }

    pub fn constant(dim: usize, c: GaussianRational) -> Self {
        let mut terms = BTreeMap::new();
        if !c.is_zero() {
            terms.insert(vec![0; dim], c);
        }
        ScalarExpr { dim, terms }
    }

    pub fn from_int(dim: usize, n: i64) -> Self {
        ScalarExpr::constant(dim, GaussianRational::from_int(n))
    }

    /// The coordinate monomial x_{axis} (0-based axis).
    pub fn var(dim: usize, axis: usize) -> Result<Self> {
        if axis >= dim {
            return Err(Error::AxisOutOfRange { axis, dim });
        }
        let mut exp = vec![0u16; dim];
        exp[axis] = 1;
        let mut terms = BTreeMap::new();
        terms.insert(exp, GaussianRational::one());
        Ok(ScalarExpr { dim, terms })
    }

    /// Single monomial c * x^exponents.
    pub fn monomial(dim: usize, exponents: Vec<u16>, c: GaussianRational) -> Self {
        assert_eq!(exponents.len(), dim, "exponent tuple length");
        let mut terms = BTreeMap::new();
        if !c.is_zero() {
            terms.insert(exponents, c);
        }
        ScalarExpr { dim, terms }
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

    pub fn terms(&self) -> impl Iterator<Item = (&Vec<u16>, &GaussianRational)> {
        self.terms.iter()
    }

    /// Total degree; zero polynomial reports 0.
    pub fn degree(&self) -> usize {
        self.terms
            .keys()
            .map(|e| e.iter().map(|&k| k as usize).sum())
            .max()
            .unwrap_or(0)
    }

    pub fn is_constant(&self) -> bool {
        self.terms.keys().all(|e| e.iter().all(|&k| k == 0))
    }

    /// The value of a constant expression, if it is one.
    pub fn as_constant(&self) -> Option<GaussianRational> {
        if self.is_zero() {
            return Some(GaussianRational::zero());
        }
        if self.is_constant() {
            self.terms.values().next().cloned()
        } else {
            None
        }
    }

    fn insert_term(terms: &mut BTreeMap<Vec<u16>, GaussianRational>, exp: Vec<u16>, c: GaussianRational) {
        if c.is_zero() {
            return;
        }
        match terms.entry(exp) {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                let sum = o.get().add(&c);
                if sum.is_zero() {
                    o.remove();
                } else {
                    *o.get_mut() = sum;
                }
            }
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim, "scalar dimension mismatch");
        let mut terms = self.terms.clone();
        for (e, c) in &other.terms {
            Self::insert_term(&mut terms, e.clone(), c.clone());
        }
        ScalarExpr { dim: self.dim, terms }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> Self {
        let terms = self.terms.iter().map(|(e, c)| (e.clone(), c.neg())).collect();
        ScalarExpr { dim: self.dim, terms }
    }

    pub fn scale(&self, c: &GaussianRational) -> Self {
        if c.is_zero() {
            return ScalarExpr::zero(self.dim);
        }
        let terms = self.terms.iter().map(|(e, k)| (e.clone(), k.mul(c))).collect();
        ScalarExpr { dim: self.dim, terms }
    }

    /// Product with an explicit exponent cap; exceeding the cap is an
    /// error, never a truncation.
    pub fn checked_mul_with_cap(&self, other: &Self, cap: u16) -> Result<Self> {
        assert_eq!(self.dim, other.dim, "scalar dimension mismatch");
        let mut terms = BTreeMap::new();
        for (ea, ca) in &self.terms {
            for (eb, cb) in &other.terms {
                let mut exp = Vec::with_capacity(self.dim);
                for k in 0..self.dim {
                    let sum = ea[k] as u64 + eb[k] as u64;
                    if sum > cap as u64 {
                        return Err(Error::ExponentCap { cap, reached: sum });
                    }
                    exp.push(sum as u16);
                }
                Self::insert_term(&mut terms, exp, ca.mul(cb));
            }
        }
        Ok(ScalarExpr { dim: self.dim, terms })
    }

    pub fn checked_mul(&self, other: &Self) -> Result<Self> {
        self.checked_mul_with_cap(other, DEFAULT_EXPONENT_CAP)
    }

    /// Product under the default cap; panics on cap overflow. Use
    /// `checked_mul` where inputs are not known to be small.
    pub fn mul(&self, other: &Self) -> Self {
        self.checked_mul(other)
            .expect("exponent cap exceeded; use checked_mul for fallible multiplication")
    }

    pub fn pow(&self, n: u32) -> Result<Self> {
        let mut acc = ScalarExpr::one(self.dim);
        for _ in 0..n {
            acc = acc.checked_mul(self)?;
        }
        Ok(acc)
    }

    /// Partial derivative with respect to x_{axis} (0-based).
    pub fn diff(&self, axis: usize) -> Result<Self> {
        if axis >= self.dim {
            return Err(Error::AxisOutOfRange { axis, dim: self.dim });
        }
        let mut terms = BTreeMap::new();
        for (e, c) in &self.terms {
            let k = e[axis];
            if k == 0 {
                continue;
            }
            let mut exp = e.clone();
            exp[axis] = k - 1;
            let factor = GaussianRational::from_int(k as i64);
            Self::insert_term(&mut terms, exp, c.mul(&factor));
        }
        Ok(ScalarExpr { dim: self.dim, terms })
    }

    /// Complex-conjugates the coefficients; the variables are real.
    pub fn conj(&self) -> Self {
        let terms = self.terms.iter().map(|(e, c)| (e.clone(), c.conj())).collect();
        ScalarExpr { dim: self.dim, terms }
    }

    pub fn classify_reality(&self) -> Reality {
        if self.terms.is_empty() {
            return Reality::Zero;
        }
        let all_real = self.terms.values().all(|c| c.is_real());
        let all_imag = self.terms.values().all(|c| c.is_imaginary());
        match (all_real, all_imag) {
            (true, _) => Reality::RealValued,
            (_, true) => Reality::ImaginaryValued,
            _ => Reality::Mixed,
        }
    }

    pub fn eval_f64(&self, point: &[f64]) -> Result<Complex64> {
        if point.len() != self.dim {
            return Err(Error::DimensionMismatch { left: self.dim, right: point.len() });
        }
        let mut acc = Complex64::new(0.0, 0.0);
        for (e, c) in &self.terms {
            let mut m = 1.0f64;
            for (k, &p) in e.iter().enumerate() {
                if p > 0 {
                    m *= point[k].powi(p as i32);
                }
            }
            acc += c.to_complex() * m;
        }
        Ok(acc)
    }

    pub fn eval_exact(&self, point: &[BigRational]) -> Result<GaussianRational> {
        if point.len() != self.dim {
            return Err(Error::DimensionMismatch { left: self.dim, right: point.len() });
        }
        let mut acc = GaussianRational::zero();
        for (e, c) in &self.terms {
            let mut m = BigRational::one();
            for (k, &p) in e.iter().enumerate() {
                for _ in 0..p {
                    m *= &point[k];
                }
            }
            acc = acc.add(&GaussianRational::new(&c.re * &m, &c.im * &m));
        }
        Ok(acc)
    }

    /// Largest absolute value of any coefficient component, as f64. Used by
    /// numeric layers for crude scale bounds.
    pub fn coeff_magnitude_bound(&self) -> f64 {
        self.terms
            .values()
            .map(|c| {
                let re = c.re.abs().to_f64().unwrap_or(f64::INFINITY);
                let im = c.im.abs().to_f64().unwrap_or(f64::INFINITY);
                re + im
            })
            .fold(0.0, f64::max)
    }
}

fn fmt_monomial(exp: &[u16]) -> String {
    let mut parts = Vec::new();
    for (k, &p) in exp.iter().enumerate() {
        match p {
            0 => {}
            1 => parts.push(format!("x{}", k + 1)),
            _ => parts.push(format!("x{}^{}", k + 1, p)),
        }
    }
    parts.join("*")
}

impl fmt::Display for ScalarExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut out = String::new();
        for (n, (e, c)) in self.terms.iter().enumerate() {
            let mono = fmt_monomial(e);
            let piece = if mono.is_empty() {
                format!("({c})")
            } else {
                format!("({c})*{mono}")
            };
            if n > 0 {
                out.push_str(" + ");
            }
            out.push_str(&piece);
        }
        write!(f, "{out}")
    }
}
