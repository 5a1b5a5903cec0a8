//! Checks for the standing assumptions: involutivity of the field family,
//! nondegeneracy of the first field, and the bracket-generating rank.

use crate::error::{Error, Result};
use crate::field::VectorField;
use crate::scalar::ScalarExpr;
use crate::system::SystemSpec;
use nalgebra::DMatrix;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};

pub const DEFAULT_INVOLUTIVITY_TOL: f64 = 1e-8;
pub const DEFAULT_NONDEGENERACY_THRESHOLD: f64 = 1e-9;
pub const RANK_SVD_THRESHOLD: f64 = 1e-9;

/// Axis-aligned compact box with a per-axis sampling density.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    lo: Vec<BigRational>,
    hi: Vec<BigRational>,
    sample_density: usize,
}

impl Region {
    pub fn new(lo: Vec<BigRational>, hi: Vec<BigRational>, sample_density: usize) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::InvalidRegion(format!(
                "bounds have lengths {} and {}",
                lo.len(),
                hi.len()
            )));
        }
        for (a, b) in lo.iter().zip(&hi) {
            if a >= b {
                return Err(Error::InvalidRegion(format!("need lo < hi, got {a} >= {b}")));
            }
        }
        if sample_density < 2 {
            return Err(Error::InvalidRegion(format!(
                "sample_density must be at least 2, got {sample_density}"
            )));
        }
        Ok(Region { lo, hi, sample_density })
    }

    /// Symmetric box [-r, r]^dim.
    pub fn centered_box(dim: usize, r: i64, sample_density: usize) -> Result<Self> {
        let r = BigRational::from_integer(r.into());
        Ok(Region::new(
            vec![-r.clone(); dim],
            vec![r; dim],
            sample_density,
        )?)
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[BigRational] {
        &self.lo
    }

    pub fn hi(&self) -> &[BigRational] {
        &self.hi
    }

    pub fn sample_density(&self) -> usize {
        self.sample_density
    }

    pub fn lo_f64(&self) -> Vec<f64> {
        self.lo.iter().map(|r| r.to_f64().unwrap_or(f64::NAN)).collect()
    }

    pub fn hi_f64(&self) -> Vec<f64> {
        self.hi.iter().map(|r| r.to_f64().unwrap_or(f64::NAN)).collect()
    }

    /// Uniform grid over the box including both endpoints,
    /// sample_density^dim points.
    pub fn sample_points(&self) -> Vec<Vec<f64>> {
        let lo = self.lo_f64();
        let hi = self.hi_f64();
        let d = self.dim();
        let m = self.sample_density;
        let mut pts = Vec::with_capacity(m.pow(d as u32));
        let mut idx = vec![0usize; d];
        loop {
            let p: Vec<f64> = (0..d)
                .map(|a| lo[a] + (hi[a] - lo[a]) * idx[a] as f64 / (m - 1) as f64)
                .collect();
            pts.push(p);
            let mut a = 0;
            loop {
                if a == d {
                    return pts;
                }
                idx[a] += 1;
                if idx[a] < m {
                    break;
                }
                idx[a] = 0;
                a += 1;
            }
        }
    }

    /// Largest sample spacing on any axis.
    pub fn max_spacing(&self) -> f64 {
        let lo = self.lo_f64();
        let hi = self.hi_f64();
        (0..self.dim())
            .map(|a| (hi[a] - lo[a]) / (self.sample_density - 1) as f64)
            .fold(0.0, f64::max)
    }

    pub fn center(&self) -> Vec<BigRational> {
        let two = BigRational::from_integer(2.into());
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(a, b)| (a + b) / &two)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Involutivity {
    VerifiedExact,
    VerifiedNumeric { max_residual: f64 },
    Failed { witness: Vec<f64>, residual: f64 },
}

impl Involutivity {
    pub fn verified(&self) -> bool {
        !matches!(self, Involutivity::Failed { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Nondegeneracy {
    pub min_norm: f64,
    pub threshold: f64,
    /// Lipschitz-style bound on how much the norm can drop between
    /// neighbouring samples; min_norm - margin is the certified floor.
    pub margin: f64,
    pub exact: bool,
    pub nondegenerate: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisReport {
    pub involutive: Involutivity,
    pub nondegenerate: Nondegeneracy,
    /// Smallest bracket length spanning the full tangent space at the region
    /// center, if any was found up to the probed length. Informational: the
    /// estimates gate on involutivity and nondegeneracy only.
    pub hormander_rank: Option<u32>,
}

impl HypothesisReport {
    pub fn all_pass(&self) -> bool {
        self.involutive.verified() && self.nondegenerate.nondegenerate
    }
}

/// Checks [X_j, X_k] = Σ_l c^{jk}_l X_l for all pairs.
///
/// With a structure table the check is symbolic: every residual field must
/// vanish identically. Without one, a least-squares problem for pointwise
/// c-values is solved at each sample of `region` and the verdict is numeric.
pub fn verify_involutivity(s: &SystemSpec, region: &Region, tol: f64) -> Involutivity {
    if s.has_structure_coeffs() {
        verify_involutivity_symbolic(s, region)
    } else {
        verify_involutivity_numeric(s, region, tol)
    }
}

fn verify_involutivity_symbolic(s: &SystemSpec, region: &Region) -> Involutivity {
    let nf = s.num_fields();
    for j in 1..=nf {
        for k in 1..=nf {
            let bracket = s
                .field(j)
                .unwrap()
                .commutator(s.field(k).unwrap())
                .expect("same dim");
            let row = match s.structure_row(j, k) {
                Ok(r) => r,
                Err(_) => {
                    // table present but pair missing: treat as claiming zero
                    &[]
                }
            };
            let mut claimed = VectorField::zero(s.dim());
            for (l, c) in row.iter().enumerate() {
                let xl = s.field(l + 1).unwrap();
                claimed = claimed.add(&xl.scaled(c).expect("cap ok")).expect("same dim");
            }
            let resid = bracket.sub(&claimed).expect("same dim");
            if !resid.is_zero() {
                let (witness, val) = locate_nonzero(&resid, region);
                return Involutivity::Failed { witness, residual: val };
            }
        }
    }
    Involutivity::VerifiedExact
}

/// Finds a point where some coefficient of a nonzero field is nonzero,
/// preferring region samples; falls back to fixed rational probes that
/// cannot all be roots of a nonzero polynomial family by chance.
fn locate_nonzero(f: &VectorField, region: &Region) -> (Vec<f64>, f64) {
    let mut best: (Vec<f64>, f64) = (vec![0.0; f.dim()], 0.0);
    for p in region.sample_points() {
        let v = field_norm_at(f, &p);
        if v > best.1 {
            best = (p, v);
        }
    }
    if best.1 > 0.0 {
        return best;
    }
    for shift in 1..=5i64 {
        let p: Vec<f64> = (0..f.dim())
            .map(|a| (3 + a as i64 * 7 + shift) as f64 / (11 + shift) as f64)
            .collect();
        let v = field_norm_at(f, &p);
        if v > 0.0 {
            return (p, v);
        }
    }
    best
}

fn field_norm_at(f: &VectorField, p: &[f64]) -> f64 {
    f.coeffs()
        .iter()
        .map(|c| c.eval_f64(p).map(|z| z.norm_sqr()).unwrap_or(0.0))
        .sum::<f64>()
        .sqrt()
}

fn verify_involutivity_numeric(s: &SystemSpec, region: &Region, tol: f64) -> Involutivity {
    let dim = s.dim();
    let nf = s.num_fields();
    let mut max_residual = 0.0f64;
    let mut worst = vec![0.0; dim];
    for p in region.sample_points() {
        // columns: real coefficient vectors of iX_j at p
        let mut a = DMatrix::zeros(dim, nf);
        for j in 1..=nf {
            for l in 0..dim {
                let z = s.field(j).unwrap().coeff(l).eval_f64(&p).unwrap_or_default();
                a[(l, j - 1)] = z.re;
            }
        }
        let svd = a.clone().svd(true, true);
        for j in 1..=nf {
            for k in (j + 1)..=nf {
                let bracket = s
                    .field(j)
                    .unwrap()
                    .commutator(s.field(k).unwrap())
                    .expect("same dim");
                // bracket coefficients are imaginary for real fields; solve
                // in the real form by dividing out i
                let mut b = DMatrix::zeros(dim, 1);
                for l in 0..dim {
                    let z = bracket.coeff(l).eval_f64(&p).unwrap_or_default();
                    b[(l, 0)] = z.im;
                }
                if let Ok(c) = svd.solve(&b, RANK_SVD_THRESHOLD) {
                    let r = (&a * c - &b).norm();
                    if r > max_residual {
                        max_residual = r;
                        worst = p.clone();
                    }
                }
            }
        }
    }
    if max_residual <= tol {
        Involutivity::VerifiedNumeric { max_residual }
    } else {
        Involutivity::Failed { witness: worst, residual: max_residual }
    }
}

/// Samples |coefficient vector| of X over K and compares the minimum against
/// the threshold. Constant fields short-circuit to a single exact evaluation.
/// The reported margin bounds the drop of the norm between samples using the
/// sampled maximum of the coefficient gradients; it is a dense-sampling
/// certificate, not a proof.
pub fn check_nondegeneracy(x: &VectorField, k: &Region, threshold: f64) -> Nondegeneracy {
    if x.has_constant_coeffs() {
        let p = vec![0.0; x.dim()];
        let min_norm = field_norm_at(x, &p);
        return Nondegeneracy {
            min_norm,
            threshold,
            margin: 0.0,
            exact: true,
            nondegenerate: min_norm >= threshold,
        };
    }
    let pts = k.sample_points();
    let mut min_norm = f64::INFINITY;
    for p in &pts {
        min_norm = min_norm.min(field_norm_at(x, p));
    }
    // Lipschitz constant of the norm is at most sqrt(Σ_l max|∇a_l|²)
    let mut lip_sq = 0.0f64;
    for c in x.coeffs() {
        let mut grad_sq_max = 0.0f64;
        for p in &pts {
            let mut g = 0.0;
            for axis in 0..x.dim() {
                let d = c.diff(axis).expect("axis in range");
                g += d.eval_f64(p).map(|z| z.norm_sqr()).unwrap_or(0.0);
            }
            grad_sq_max = grad_sq_max.max(g);
        }
        lip_sq += grad_sq_max;
    }
    let half_cell = 0.5 * k.max_spacing() * (x.dim() as f64).sqrt();
    let margin = lip_sq.sqrt() * half_cell;
    Nondegeneracy {
        min_norm,
        threshold,
        margin,
        exact: false,
        nondegenerate: min_norm >= threshold,
    }
}

/// A real polynomial field written in the ∂-convention; brackets here are
/// ordinary Lie brackets of real fields.
#[derive(Clone)]
struct RealField {
    coeffs: Vec<ScalarExpr>,
}

fn real_bracket(u: &RealField, v: &RealField) -> RealField {
    let dim = u.coeffs.len();
    let mut out = Vec::with_capacity(dim);
    for l in 0..dim {
        let mut acc = ScalarExpr::zero(dim);
        for m in 0..dim {
            let dv = v.coeffs[l].diff(m).expect("axis in range");
            let du = u.coeffs[l].diff(m).expect("axis in range");
            acc = acc
                .add(&u.coeffs[m].checked_mul(&dv).expect("cap"))
                .sub(&v.coeffs[m].checked_mul(&du).expect("cap"));
        }
        out.push(acc);
    }
    RealField { coeffs: out }
}

fn is_zero_field(f: &RealField) -> bool {
    f.coeffs.iter().all(|c| c.is_zero())
}

/// Smallest bracket length r ≤ max_len at which the fields X₁…X_N together
/// with their left-normed iterated brackets span ℝ^{n+1} at p, if any.
///
/// Spans are taken over the real coefficient vectors of the fields iX_j; the
/// rank at the rational point p is computed exactly.
pub fn hormander_rank(s: &SystemSpec, p: &[BigRational], max_len: u32) -> Result<Option<u32>> {
    if p.len() != s.dim() {
        return Err(Error::DimensionMismatch { left: s.dim(), right: p.len() });
    }
    if max_len == 0 {
        return Err(Error::InvalidConfig("max_len must be at least 1".into()));
    }
    let dim = s.dim();
    let generators: Vec<RealField> = (1..=s.num_fields())
        .map(|j| RealField { coeffs: s.field(j).unwrap().coeffs().to_vec() })
        .collect();

    let mut rows: Vec<Vec<BigRational>> = Vec::new();
    let mut level: Vec<RealField> = generators.clone();
    for len in 1..=max_len {
        for f in &level {
            if let Some(row) = eval_real_row(f, p)? {
                rows.push(row);
            }
        }
        if rational_rank(&rows, dim) == dim {
            return Ok(Some(len));
        }
        if len == max_len {
            break;
        }
        let mut next = Vec::new();
        for f in &level {
            if is_zero_field(f) {
                continue;
            }
            for g in &generators {
                let b = real_bracket(f, g);
                if !is_zero_field(&b) {
                    next.push(b);
                }
            }
        }
        if next.is_empty() {
            break;
        }
        level = next;
    }
    Ok(None)
}

/// Same search with a floating point and an SVD rank threshold.
pub fn hormander_rank_f64(s: &SystemSpec, p: &[f64], max_len: u32) -> Result<Option<u32>> {
    if p.len() != s.dim() {
        return Err(Error::DimensionMismatch { left: s.dim(), right: p.len() });
    }
    let dim = s.dim();
    let generators: Vec<RealField> = (1..=s.num_fields())
        .map(|j| RealField { coeffs: s.field(j).unwrap().coeffs().to_vec() })
        .collect();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut level: Vec<RealField> = generators.clone();
    for len in 1..=max_len {
        for f in &level {
            let mut row = Vec::with_capacity(dim);
            let mut any = false;
            for c in &f.coeffs {
                let v = c.eval_f64(p)?.re;
                if v != 0.0 {
                    any = true;
                }
                row.push(v);
            }
            if any {
                rows.push(row);
            }
        }
        if !rows.is_empty() {
            let m = DMatrix::from_fn(rows.len(), dim, |r, c| rows[r][c]);
            if m.svd(false, false).rank(RANK_SVD_THRESHOLD) == dim {
                return Ok(Some(len));
            }
        }
        if len == max_len {
            break;
        }
        let mut next = Vec::new();
        for f in &level {
            if is_zero_field(f) {
                continue;
            }
            for g in &generators {
                let b = real_bracket(f, g);
                if !is_zero_field(&b) {
                    next.push(b);
                }
            }
        }
        if next.is_empty() {
            break;
        }
        level = next;
    }
    Ok(None)
}

fn eval_real_row(f: &RealField, p: &[BigRational]) -> Result<Option<Vec<BigRational>>> {
    let mut row = Vec::with_capacity(f.coeffs.len());
    let mut any = false;
    for c in &f.coeffs {
        let v = c.eval_exact(p)?;
        if !v.is_real() && !v.is_zero() {
            return Err(Error::NotRealValued { found: "complex coefficient in real span".into() });
        }
        let re = v.re.clone();
        if !re.is_zero() {
            any = true;
        }
        row.push(re);
    }
    Ok(if any { Some(row) } else { None })
}

/// Exact rank of the row span via fraction-free Gaussian elimination.
fn rational_rank(rows: &[Vec<BigRational>], dim: usize) -> usize {
    let mut m: Vec<Vec<BigRational>> = rows.to_vec();
    let mut rank = 0;
    for col in 0..dim {
        let Some(pivot) = (rank..m.len()).find(|&r| !m[r][col].is_zero()) else {
            continue;
        };
        m.swap(rank, pivot);
        let pv = m[rank][col].clone();
        for r in (rank + 1)..m.len() {
            if m[r][col].is_zero() {
                continue;
            }
            let factor = &m[r][col] / &pv;
            for c in col..dim {
                let sub = &factor * &m[rank][c];
                m[r][c] = &m[r][c] - sub;
            }
        }
        rank += 1;
        if rank == m.len() {
            break;
        }
    }
    rank
}

/// Runs all three checks; the rank probe is evaluated at the region center.
pub fn check_hypotheses(s: &SystemSpec, region: &Region, max_len: u32) -> Result<HypothesisReport> {
    let involutive = verify_involutivity(s, region, DEFAULT_INVOLUTIVITY_TOL);
    let nondegenerate =
        check_nondegeneracy(s.field(1)?, region, DEFAULT_NONDEGENERACY_THRESHOLD);
    let hormander = hormander_rank(s, &region.center(), max_len)?;
    Ok(HypothesisReport { involutive, nondegenerate, hormander_rank: hormander })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::GaussianRational;
    use crate::system::StructureCoeffs;

    fn x(dim: usize, axis: usize) -> ScalarExpr {
        ScalarExpr::var(dim, axis).unwrap()
    }

    fn heis_space(with_structure: bool) -> SystemSpec {
        let half = GaussianRational::from_ratio(1, 2);
        let f1 = VectorField::new(vec![
            ScalarExpr::one(3),
            ScalarExpr::zero(3),
            x(3, 1).scale(&half.neg()),
        ])
        .unwrap();
        let f2 = VectorField::new(vec![
            ScalarExpr::zero(3),
            ScalarExpr::one(3),
            x(3, 0).scale(&half),
        ])
        .unwrap();
        let f3 = VectorField::new(vec![
            ScalarExpr::zero(3),
            ScalarExpr::zero(3),
            ScalarExpr::one(3),
        ])
        .unwrap();
        let sc = if with_structure {
            let mut sc = StructureCoeffs::new();
            let zero3 = || vec![ScalarExpr::zero(3); 3];
            for a in 1..=3usize {
                for b in 1..=3usize {
                    sc.insert((a, b), zero3());
                }
            }
            sc.get_mut(&(1, 2)).unwrap()[2] = ScalarExpr::constant(3, GaussianRational::i().neg());
            sc.get_mut(&(2, 1)).unwrap()[2] = ScalarExpr::constant(3, GaussianRational::i());
            Some(sc)
        } else {
            None
        };
        SystemSpec::new(2, VectorField::zero(3), vec![f1, f2, f3], sc).unwrap()
    }

    #[test]
    fn region_validation() {
        let one = BigRational::from_integer(1.into());
        assert!(Region::new(vec![-one.clone()], vec![one.clone()], 2).is_ok());
        assert!(Region::new(vec![one.clone()], vec![-one.clone()], 2).is_err());
        assert!(Region::new(vec![-one.clone()], vec![one], 1).is_err());
    }

    #[test]
    fn region_sampling_counts() {
        let r = Region::centered_box(2, 1, 3).unwrap();
        let pts = r.sample_points();
        assert_eq!(pts.len(), 9);
        assert!(pts.iter().any(|p| p == &[0.0, 0.0]));
        assert!(pts.iter().any(|p| p == &[-1.0, 1.0]));
    }

    #[test]
    fn involutivity_commuting_fields_exact() {
        let f1 = VectorField::coordinate(2, 0).unwrap();
        let f2 = VectorField::coordinate(2, 1).unwrap();
        let mut sc = StructureCoeffs::new();
        for a in 1..=2usize {
            for b in 1..=2usize {
                sc.insert((a, b), vec![ScalarExpr::zero(2); 2]);
            }
        }
        let s = SystemSpec::new(1, VectorField::zero(2), vec![f1, f2], Some(sc)).unwrap();
        let region = Region::centered_box(2, 1, 3).unwrap();
        assert_eq!(
            verify_involutivity(&s, &region, DEFAULT_INVOLUTIVITY_TOL),
            Involutivity::VerifiedExact
        );
    }

    #[test]
    fn involutivity_heisenberg_exact() {
        let s = heis_space(true);
        let region = Region::centered_box(3, 1, 3).unwrap();
        assert_eq!(
            verify_involutivity(&s, &region, DEFAULT_INVOLUTIVITY_TOL),
            Involutivity::VerifiedExact
        );
    }

    #[test]
    fn involutivity_heisenberg_numeric_without_table() {
        let s = heis_space(false);
        let region = Region::centered_box(3, 1, 3).unwrap();
        match verify_involutivity(&s, &region, DEFAULT_INVOLUTIVITY_TOL) {
            Involutivity::VerifiedNumeric { max_residual } => {
                assert!(max_residual <= 1e-10, "residual {max_residual}");
            }
            other => panic!("expected numeric verification, got {other:?}"),
        }
    }

    fn d1_x1d2_system(with_zero_claim: bool) -> SystemSpec {
        let f1 = VectorField::coordinate(2, 0).unwrap();
        let f2 = VectorField::new(vec![ScalarExpr::zero(2), x(2, 0)]).unwrap();
        let sc = if with_zero_claim {
            let mut sc = StructureCoeffs::new();
            for a in 1..=2usize {
                for b in 1..=2usize {
                    sc.insert((a, b), vec![ScalarExpr::zero(2); 2]);
                }
            }
            Some(sc)
        } else {
            None
        };
        SystemSpec::new(1, VectorField::zero(2), vec![f1, f2], sc).unwrap()
    }

    #[test]
    fn involutivity_fails_symbolically_with_wrong_claim() {
        // [D1, x1 D2] = -i D2 is not x1-divisible, so a zero claim fails.
        let s = d1_x1d2_system(true);
        let region = Region::centered_box(2, 1, 3).unwrap();
        match verify_involutivity(&s, &region, DEFAULT_INVOLUTIVITY_TOL) {
            Involutivity::Failed { residual, .. } => assert!(residual > 0.0),
            other => panic!("expected failure, got {other:?}"),
        }
    }

    #[test]
    fn involutivity_fails_numerically_at_degenerate_point() {
        // The span of (D1, x1 D2) loses the second direction at x1 = 0.
        let s = d1_x1d2_system(false);
        let region = Region::centered_box(2, 1, 3).unwrap();
        match verify_involutivity(&s, &region, DEFAULT_INVOLUTIVITY_TOL) {
            Involutivity::Failed { witness, residual } => {
                assert!(residual > 0.5);
                assert_eq!(witness[0], 0.0);
            }
            other => panic!("expected failure, got {other:?}"),
        }
    }

    #[test]
    fn nondegeneracy_constant_field() {
        let d1 = VectorField::coordinate(3, 0).unwrap();
        let k = Region::centered_box(3, 5, 2).unwrap();
        let r = check_nondegeneracy(&d1, &k, DEFAULT_NONDEGENERACY_THRESHOLD);
        assert!(r.exact);
        assert_eq!(r.min_norm, 1.0);
        assert!(r.nondegenerate);
        assert_eq!(r.margin, 0.0);
    }

    #[test]
    fn nondegeneracy_vanishing_field() {
        let f = VectorField::new(vec![x(1, 0)]).unwrap();
        let k = Region::centered_box(1, 1, 3).unwrap();
        let r = check_nondegeneracy(&f, &k, DEFAULT_NONDEGENERACY_THRESHOLD);
        assert_eq!(r.min_norm, 0.0);
        assert!(!r.nondegenerate);
        assert!(r.margin > 0.0);
    }

    #[test]
    fn nondegeneracy_heisenberg_first_field() {
        let s = heis_space(true);
        let k = Region::centered_box(3, 1, 3).unwrap();
        let r = check_nondegeneracy(s.field(1).unwrap(), &k, DEFAULT_NONDEGENERACY_THRESHOLD);
        assert!((r.min_norm - 1.0).abs() < 1e-12);
        assert!(r.nondegenerate);
    }

    #[test]
    fn nondegeneracy_scaling_invariance() {
        let s = heis_space(true);
        let k = Region::centered_box(3, 1, 3).unwrap();
        let x1 = s.field(1).unwrap();
        let scaled = x1.scaled(&ScalarExpr::from_int(3, 7)).unwrap();
        let a = check_nondegeneracy(x1, &k, DEFAULT_NONDEGENERACY_THRESHOLD);
        let b = check_nondegeneracy(&scaled, &k, DEFAULT_NONDEGENERACY_THRESHOLD);
        assert_eq!(a.nondegenerate, b.nondegenerate);
    }

    #[test]
    fn rank_one_for_spanning_constants() {
        let f1 = VectorField::coordinate(2, 0).unwrap();
        let f2 = VectorField::coordinate(2, 1).unwrap();
        let s = SystemSpec::new(1, VectorField::zero(2), vec![f1, f2], None).unwrap();
        let p = vec![BigRational::zero(), BigRational::zero()];
        assert_eq!(hormander_rank(&s, &p, 3).unwrap(), Some(1));
    }

    #[test]
    fn rank_two_for_heisenberg_pair() {
        // X₁ and X₂ alone span two directions; one bracket supplies the third.
        let half = GaussianRational::from_ratio(1, 2);
        let f1 = VectorField::new(vec![
            ScalarExpr::one(3),
            ScalarExpr::zero(3),
            x(3, 1).scale(&half.neg()),
        ])
        .unwrap();
        let f2 = VectorField::new(vec![
            ScalarExpr::zero(3),
            ScalarExpr::one(3),
            x(3, 0).scale(&half),
        ])
        .unwrap();
        let s = SystemSpec::new(2, VectorField::zero(3), vec![f1, f2], None).unwrap();
        let origin = vec![BigRational::zero(); 3];
        assert_eq!(hormander_rank(&s, &origin, 4).unwrap(), Some(2));
        let p = vec![
            BigRational::new(1.into(), 3.into()),
            BigRational::new((-2).into(), 5.into()),
            BigRational::new(7.into(), 2.into()),
        ];
        assert_eq!(hormander_rank(&s, &p, 4).unwrap(), Some(2));
        assert_eq!(hormander_rank_f64(&s, &[0.25, -0.5, 1.0], 4).unwrap(), Some(2));
    }

    #[test]
    fn rank_none_with_untouched_time_axis() {
        // Same fields zero-extended by a time axis no bracket can reach.
        let half = GaussianRational::from_ratio(1, 2);
        let mk = |entries: Vec<(usize, ScalarExpr)>| {
            let mut coeffs = vec![ScalarExpr::zero(4); 4];
            for (axis, e) in entries {
                coeffs[axis] = e;
            }
            VectorField::new(coeffs).unwrap()
        };
        let f1 = mk(vec![
            (1, ScalarExpr::one(4)),
            (3, x(4, 2).scale(&half.neg())),
        ]);
        let f2 = mk(vec![(2, ScalarExpr::one(4)), (3, x(4, 1).scale(&half))]);
        let f3 = mk(vec![(3, ScalarExpr::one(4))]);
        let s = SystemSpec::new(3, VectorField::zero(4), vec![f1, f2, f3], None).unwrap();
        let origin = vec![BigRational::zero(); 4];
        for max_len in [1, 3, 5] {
            assert_eq!(hormander_rank(&s, &origin, max_len).unwrap(), None);
        }
    }

    #[test]
    fn full_report_heisenberg() {
        let s = heis_space(true);
        let region = Region::centered_box(3, 1, 3).unwrap();
        let r = check_hypotheses(&s, &region, 3).unwrap();
        assert!(r.all_pass());
        assert_eq!(r.hormander_rank, Some(1));
    }
}
