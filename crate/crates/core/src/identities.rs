//! Exact cross-checks between operators built two different ways.
//!
//! Each verifier assembles a right-hand side literally from a displayed
//! formula and compares it, in canonical normal form, against the same
//! object computed from first principles. Nothing is ever "corrected": a
//! disagreement is reported as the exact residual operator.

use crate::builders::{
    build_cdoubleprime, build_p1, build_p1_star, build_qj_prime, carleman_decomposition,
    second_order_part,
};
use crate::diffop::{adjoint, DiffOp};
use crate::error::Result;
use crate::lambda::{conjugate, LambdaOp};
use crate::scalar::{GaussianRational, ScalarExpr};
use crate::system::SystemSpec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum IdentityStatus {
    ExactMatch,
    ResidualOp(DiffOp),
    ResidualLambda(LambdaOp),
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentityReport {
    pub name: String,
    pub status: IdentityStatus,
    pub notes: Vec<String>,
}

impl IdentityReport {
    pub fn is_exact(&self) -> bool {
        matches!(self.status, IdentityStatus::ExactMatch)
    }

    pub fn residual_term_count(&self) -> usize {
        match &self.status {
            IdentityStatus::ExactMatch => 0,
            IdentityStatus::ResidualOp(op) => op.num_terms(),
            IdentityStatus::ResidualLambda(l) => l.coeffs().iter().map(|o| o.num_terms()).sum(),
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        let (status, kind, residual) = match &self.status {
            IdentityStatus::ExactMatch => ("exact-match", serde_json::Value::Null, None),
            IdentityStatus::ResidualOp(op) => {
                ("residual", "operator".into(), Some(format!("{op}")))
            }
            IdentityStatus::ResidualLambda(l) => ("residual", "lambda".into(), Some(format!("{l}"))),
        };
        serde_json::json!({
            "identity": self.name,
            "status": status,
            "residual_kind": kind,
            "residual_term_count": self.residual_term_count(),
            "residual": residual,
            "notes": self.notes,
        })
    }
}

impl fmt::Display for IdentityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "identity: {}", self.name)?;
        match &self.status {
            IdentityStatus::ExactMatch => writeln!(f, "status: exact-match")?,
            IdentityStatus::ResidualOp(op) => {
                writeln!(f, "status: residual")?;
                writeln!(f, "residual-kind: operator")?;
                writeln!(f, "residual-terms: {}", op.num_terms())?;
                writeln!(f, "residual: {op}")?;
            }
            IdentityStatus::ResidualLambda(l) => {
                writeln!(f, "status: residual")?;
                writeln!(f, "residual-kind: lambda")?;
                writeln!(f, "residual-terms: {}", self.residual_term_count())?;
                writeln!(f, "residual: {l}")?;
            }
        }
        for n in &self.notes {
            writeln!(f, "note: {n}")?;
        }
        Ok(())
    }
}

/// On an exact normal-form match, double-check by applying both sides to a
/// fixed set of 200 pseudorandom monomials. Equality of canonical term maps
/// must imply equality as maps; a mismatch would be an internal bug.
fn monomial_sanity(lhs: &DiffOp, rhs: &DiffOp) {
    let dim = lhs.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(0x1DE17);
    for _ in 0..200 {
        let expts: Vec<u16> = (0..dim).map(|_| rng.gen_range(0..=3)).collect();
        let m = ScalarExpr::monomial(dim, expts, GaussianRational::one());
        let a = lhs.apply(&m).expect("apply within cap");
        let b = rhs.apply(&m).expect("apply within cap");
        assert_eq!(a, b, "normal forms equal but actions differ");
    }
}

fn compare_ops(name: &str, lhs: DiffOp, rhs: DiffOp, notes: Vec<String>) -> Result<IdentityReport> {
    let residual = rhs.sub(&lhs)?;
    let status = if residual.is_zero() {
        monomial_sanity(&lhs, &rhs);
        IdentityStatus::ExactMatch
    } else {
        IdentityStatus::ResidualOp(residual)
    };
    Ok(IdentityReport { name: name.into(), status, notes })
}

fn compare_lambda(
    name: &str,
    lhs: LambdaOp,
    rhs: LambdaOp,
    notes: Vec<String>,
) -> Result<IdentityReport> {
    let residual = rhs.sub(&lhs)?;
    let status = if residual.is_zero() {
        for p in 0..=lhs.degree().max(rhs.degree()) {
            monomial_sanity(&lhs.coeff(p), &rhs.coeff(p));
        }
        IdentityStatus::ExactMatch
    } else {
        IdentityStatus::ResidualLambda(residual)
    };
    Ok(IdentityReport { name: name.into(), status, notes })
}

/// Conjugating P₁ by e^{λf} two ways: direct substitution on the normal
/// form, versus the sum base + L₂ + L₁ + L₀ of displayed corrections. The
/// residual, when present, is the displayed sum minus the substitution
/// result, per λ-power.
pub fn verify_conjugation(s: &SystemSpec, f: &ScalarExpr) -> Result<IdentityReport> {
    let lhs = conjugate(&build_p1(s)?, f)?;
    let rhs = carleman_decomposition(s, f)?.total()?;
    compare_lambda(
        "conjugation-decomposition",
        lhs,
        rhs,
        vec![
            "left: substitution expansion of e^{lf} P1 e^{-lf}".into(),
            "right: P1 plus the displayed order-2/1/0 corrections".into(),
        ],
    )
}

/// The displayed expansion of P₁* in terms of P₁, divergence terms, and
/// bracket coefficients, against the first-principles formal adjoint.
pub fn verify_adjoint_expansion(s: &SystemSpec) -> Result<IdentityReport> {
    let nf = s.num_fields();
    let x1 = s.field(1)?;
    let d1 = x1.divergence_term();

    // P₁ + d₁ Σ_j X_j*X_j
    let mut rhs = build_p1(s)?.add(&second_order_part(s)?.mul_scalar_left(&d1)?)?;

    // Σ_{j,k} { c^{j1}_k (X_j*X_k + X_k*X_j) + (−c^{j1}_k d_k + (X_k* c^{k1}_j)) X_j }
    for j in 1..=nf {
        let xj = s.field(j)?;
        let xj_op = xj.as_diffop();
        for k in 1..=nf {
            let xk = s.field(k)?;
            let c_j1_k = s.structure_coeff(j, 1, k)?.clone();
            let c_k1_j = s.structure_coeff(k, 1, j)?.clone();
            let dk = xk.divergence_term();
            if !c_j1_k.is_zero() {
                let sym = xj
                    .adjoint_diffop()
                    .compose(&xk.as_diffop())?
                    .add(&xk.adjoint_diffop().compose(&xj_op)?)?;
                rhs = rhs.add(&sym.mul_scalar_left(&c_j1_k)?)?;
            }
            // X_k* acting on a scalar: X_k g + d_k g
            let xk_star_c = xk.apply(&c_k1_j)?.add(&dk.checked_mul(&c_k1_j)?);
            let factor = xk_star_c.sub(&c_j1_k.checked_mul(&dk)?);
            rhs = rhs.add(&xj_op.mul_scalar_left(&factor)?)?;
        }
    }

    // − Σ_j (X₁d_j) X_j + Σ_j ((X_jd₁) d_j + (X_j* X₁ d₁)) + d₀
    let mut zero_order = s.x0().divergence_term();
    for j in 1..=nf {
        let xj = s.field(j)?;
        let dj = xj.divergence_term();
        rhs = rhs.add(&xj.as_diffop().mul_scalar_left(&x1.apply(&dj)?.neg())?)?;
        let x1d1 = x1.apply(&d1)?;
        let xj_star_x1d1 = xj.apply(&x1d1)?.add(&dj.checked_mul(&x1d1)?);
        zero_order = zero_order
            .add(&xj.apply(&d1)?.checked_mul(&dj)?)
            .add(&xj_star_x1d1);
    }
    rhs = rhs.add(&DiffOp::from_scalar(zero_order))?;

    let lhs = adjoint(&build_p1(s)?);
    compare_ops(
        "adjoint-expansion",
        lhs,
        rhs,
        vec![
            "left: formal adjoint of the assembled third-order operator".into(),
            "right: displayed expansion via divergence and bracket terms".into(),
        ],
    )
}

/// The displayed expansion of P₁ − P₁* through brackets and divergence
/// terms, against the literal normal-form difference.
pub fn verify_skew_part(s: &SystemSpec) -> Result<IdentityReport> {
    let nf = s.num_fields();
    let dim = s.dim();
    let x1 = s.field(1)?;
    let d1 = x1.divergence_term();

    let mut rhs = DiffOp::zero(dim);
    for j in 1..=nf {
        let xj = s.field(j)?;
        let xj_op = xj.as_diffop();
        let dj = xj.divergence_term();

        // [X_j, X₁] read through the structure table: Σ_k c^{j1}_k X_k
        let mut bracket = DiffOp::zero(dim);
        for k in 1..=nf {
            let c = s.structure_coeff(j, 1, k)?;
            if !c.is_zero() {
                bracket = bracket.add(&s.field(k)?.as_diffop().mul_scalar_left(c)?)?;
            }
        }
        // [X_j, [X_j, X₁]] as displayed: Σ_{k,l} c^{j1}_k c^{jk}_l X_l
        let mut nested = DiffOp::zero(dim);
        for k in 1..=nf {
            let cjk1 = s.structure_coeff(j, 1, k)?.clone();
            if cjk1.is_zero() {
                continue;
            }
            for l in 1..=nf {
                let c2 = s.structure_coeff(j, k, l)?;
                if c2.is_zero() {
                    continue;
                }
                nested = nested.add(
                    &s.field(l)?
                        .as_diffop()
                        .mul_scalar_left(&cjk1.checked_mul(c2)?)?,
                )?;
            }
        }

        let mut block = bracket
            .compose(&xj_op)?
            .scale(&GaussianRational::from_int(2))
            .add(&nested)?
            .add(&bracket.mul_scalar_left(&dj)?)?;
        block = block.sub(&xj_op.mul_scalar_left(&x1.apply(&dj)?)?)?;
        rhs = rhs.sub(&block)?;

        let xjs_xj = xj.adjoint_diffop().compose(&xj_op)?;
        let xjd1 = xj.apply(&d1)?;
        // (X_j* X_j d₁) as a scalar: X_j(X_jd₁) + d_j (X_jd₁)
        let star_scalar = xj.apply(&xjd1)?.add(&dj.checked_mul(&xjd1)?);
        let div_block = xjs_xj
            .mul_scalar_left(&d1)?
            .add(&xj_op.mul_scalar_left(&xjd1.scale(&GaussianRational::from_int(2)))?)?
            .add(&xj_op.mul_scalar_left(&d1.checked_mul(&dj)?)?)?
            .add(&DiffOp::from_scalar(star_scalar.add(&xjd1.checked_mul(&dj)?)))?;
        rhs = rhs.sub(&div_block)?;
    }
    rhs = rhs.sub(&DiffOp::from_scalar(s.x0().divergence_term()))?;

    let lhs = build_p1(s)?.sub(&build_p1_star(s)?)?;
    compare_ops(
        "skew-part",
        lhs,
        rhs,
        vec![
            "left: P1 minus its formal adjoint, canonical difference".into(),
            "right: displayed bracket and divergence expansion".into(),
        ],
    )
}

/// The two displayed forms of Q'_j: the subtraction form (Q_j minus
/// symmetrized bracket corrections) against the expanded second display,
/// summed over j and compared per λ-power.
pub fn verify_qj_consistency(s: &SystemSpec, f: &ScalarExpr) -> Result<IdentityReport> {
    let dim = s.dim();
    let nf = s.num_fields();
    let i = GaussianRational::i();
    let minus_i = i.neg();
    let half_i = GaussianRational::imaginary_ratio(1, 2);

    let mut total = LambdaOp::zero(dim);
    let mut first_nonzero: Option<(usize, LambdaOp)> = None;
    for j in 1..=nf {
        let form1 = build_qj_prime(s, f, j)?;

        // expanded display: (λ(−iX₁f)+id₁/2)X_j*X_j − Σ_k i c^{j1}_k X_j*X_k
        //   − iλ(X_jX₁f)X_j + (i/2)(c'_j − c''_j − (X₁d_j) + 2(X_jd₁) + d₁d_j)X_j
        let x1 = s.field(1)?;
        let xj = s.field(j)?;
        let d1 = x1.divergence_term();
        let dj = xj.divergence_term();
        let x1f = x1.apply(f)?;
        let xj_op = xj.as_diffop();
        let xj_star = xj.adjoint_diffop();
        let xjs_xj = xj_star.compose(&xj_op)?;

        let mut p0 = xjs_xj.mul_scalar_left(&d1.scale(&half_i))?;
        for k in 1..=nf {
            let c = s.structure_coeff(j, 1, k)?;
            if c.is_zero() {
                continue;
            }
            let xjs_xk = xj_star.compose(&s.field(k)?.as_diffop())?;
            p0 = p0.sub(&xjs_xk.mul_scalar_left(&c.scale(&i))?)?;
        }
        let factor = crate::builders::build_cprime(s, j)?
            .sub(&build_cdoubleprime(s, j)?)
            .sub(&x1.apply(&dj)?)
            .add(&xj.apply(&d1)?.scale(&GaussianRational::from_int(2)))
            .add(&d1.checked_mul(&dj)?)
            .scale(&half_i);
        p0 = p0.add(&xj_op.mul_scalar_left(&factor)?)?;
        let p1 = xjs_xj
            .mul_scalar_left(&x1f.scale(&minus_i))?
            .add(&xj_op.mul_scalar_left(&xj.apply(&x1f)?.scale(&minus_i))?)?;
        let form2 = LambdaOp::from_parts(dim, vec![p0, p1])?;

        let res_j = form2.sub(&form1)?;
        if !res_j.is_zero() && first_nonzero.is_none() {
            first_nonzero = Some((j, res_j.clone()));
        }
        if res_j.is_zero() {
            for p in 0..=form1.degree().max(form2.degree()) {
                monomial_sanity(&form1.coeff(p), &form2.coeff(p));
            }
        }
        total = total.add(&res_j)?;
    }

    let mut notes = vec![
        "left: subtraction form summed over j".into(),
        "right: expanded display summed over j".into(),
    ];
    let status = match (total.is_zero(), first_nonzero) {
        (true, None) => IdentityStatus::ExactMatch,
        (true, Some((j, res))) => {
            // per-j residuals cancelled in the sum; report the first so the
            // nonzero-residual invariant holds
            notes.push(format!("sum cancelled; residual shown for j = {j}"));
            IdentityStatus::ResidualLambda(res)
        }
        (false, _) => IdentityStatus::ResidualLambda(total),
    };
    Ok(IdentityReport { name: "qj-consistency".into(), status, notes })
}

/// Runs every verifier that a system's data admits, in a fixed order.
pub fn verify_all(s: &SystemSpec, f: &ScalarExpr) -> Result<Vec<IdentityReport>> {
    let mut out = vec![verify_conjugation(s, f)?];
    if s.has_structure_coeffs() {
        out.push(verify_adjoint_expansion(s)?);
        out.push(verify_skew_part(s)?);
        out.push(verify_qj_consistency(s, f)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builders::conjugation_cross_term;
    use crate::field::VectorField;
    use crate::system::StructureCoeffs;

    fn x(dim: usize, axis: usize) -> ScalarExpr {
        ScalarExpr::var(dim, axis).unwrap()
    }

    fn kdv_const() -> SystemSpec {
        let x0 = VectorField::coordinate(2, 0).unwrap();
        let x1 = VectorField::coordinate(2, 1).unwrap();
        let mut sc = StructureCoeffs::new();
        sc.insert((1, 1), vec![ScalarExpr::zero(2)]);
        SystemSpec::new(1, x0, vec![x1], Some(sc)).unwrap()
    }

    fn kdv_var() -> SystemSpec {
        let a = ScalarExpr::one(2).add(&x(2, 1).pow(2).unwrap());
        let x1 = VectorField::new(vec![ScalarExpr::zero(2), a]).unwrap();
        let mut sc = StructureCoeffs::new();
        sc.insert((1, 1), vec![ScalarExpr::zero(2)]);
        SystemSpec::new(1, VectorField::zero(2), vec![x1], Some(sc)).unwrap()
    }

    fn heis(j0: usize, with_time: bool) -> SystemSpec {
        let (dim, off) = if with_time { (4, 1) } else { (3, 0) };
        let half = GaussianRational::from_ratio(1, 2);
        let mk = |entries: Vec<(usize, ScalarExpr)>| {
            let mut coeffs = vec![ScalarExpr::zero(dim); dim];
            for (axis, e) in entries {
                coeffs[axis] = e;
            }
            VectorField::new(coeffs).unwrap()
        };
        let f1 = mk(vec![
            (off, ScalarExpr::one(dim)),
            (off + 2, x(dim, off + 1).scale(&half.neg())),
        ]);
        let f2 = mk(vec![
            (off + 1, ScalarExpr::one(dim)),
            (off + 2, x(dim, off).scale(&half)),
        ]);
        let f3 = mk(vec![(off + 2, ScalarExpr::one(dim))]);
        let mut fields = vec![f1, f2, f3];
        fields.swap(0, j0 - 1);
        let slot_central = fields
            .iter()
            .position(|f| {
                f.coeff(off + 2).is_constant() && !f.coeff(off + 2).is_zero()
                    && (0..dim - 1).all(|a| f.coeff(a).is_zero())
            })
            .unwrap();
        let mut sc = StructureCoeffs::new();
        for a in 1..=3usize {
            for b in 1..=3usize {
                let c = fields[a - 1].commutator(&fields[b - 1]).unwrap();
                let mut row = vec![ScalarExpr::zero(dim); 3];
                if !c.is_zero() {
                    row[slot_central] = c.coeff(off + 2).clone();
                }
                sc.insert((a, b), row);
            }
        }
        let x0 = if with_time {
            VectorField::coordinate(dim, 0).unwrap()
        } else {
            VectorField::zero(dim)
        };
        SystemSpec::new(dim - 1, x0, fields, Some(sc)).unwrap()
    }

    /// Involutive family with variable structure coefficients:
    /// X₁ = D₁, X₂ = x₁² D₁; [X₂, X₁] = 2i x₁ X₁.
    fn collinear_variable() -> SystemSpec {
        let f1 = VectorField::coordinate(2, 0).unwrap();
        let f2 = VectorField::new(vec![x(2, 0).pow(2).unwrap(), ScalarExpr::zero(2)]).unwrap();
        let mut sc = StructureCoeffs::new();
        let z = || vec![ScalarExpr::zero(2); 2];
        sc.insert((1, 1), z());
        sc.insert((2, 2), z());
        let mut r12 = z();
        r12[0] = x(2, 0).scale(&GaussianRational::imaginary_ratio(-2, 1));
        sc.insert((1, 2), r12);
        let mut r21 = z();
        r21[0] = x(2, 0).scale(&GaussianRational::imaginary_ratio(2, 1));
        sc.insert((2, 1), r21);
        SystemSpec::new(1, VectorField::zero(2), vec![f1, f2], Some(sc)).unwrap()
    }

    #[test]
    fn conjugation_zero_weight_exact() {
        let r = verify_conjugation(&kdv_const(), &ScalarExpr::zero(2)).unwrap();
        assert!(r.is_exact());
    }

    #[test]
    fn conjugation_gap_reported_and_matches_cross_term() {
        let s = kdv_const();
        let f = x(2, 1).neg();
        let r = verify_conjugation(&s, &f).unwrap();
        match &r.status {
            IdentityStatus::ResidualLambda(res) => {
                assert_eq!(*res, conjugation_cross_term(&s, &f).unwrap().neg());
                assert_eq!(res.degree(), 3);
            }
            other => panic!("expected lambda residual, got {other:?}"),
        }
    }

    #[test]
    fn conjugation_gap_heisenberg() {
        let s = heis(1, false);
        let f = x(3, 0).neg();
        let r = verify_conjugation(&s, &f).unwrap();
        match &r.status {
            IdentityStatus::ResidualLambda(res) => {
                assert_eq!(*res, conjugation_cross_term(&s, &f).unwrap().neg());
            }
            other => panic!("expected lambda residual, got {other:?}"),
        }
    }

    #[test]
    fn adjoint_expansion_heisenberg_exact() {
        for s in [heis(1, false), heis(1, true), heis(3, false)] {
            let r = verify_adjoint_expansion(&s).unwrap();
            assert!(r.is_exact(), "{r}");
        }
    }

    #[test]
    fn adjoint_expansion_commuting_divergence_free_exact() {
        let r = verify_adjoint_expansion(&kdv_const()).unwrap();
        assert!(r.is_exact());
    }

    #[test]
    fn adjoint_expansion_divergent_residual_pinned() {
        // d₁ ≠ 0 exposes the printed zero-order term; the residual is
        // exactly d₁(X₁d₁) − 2(X₁d₁)X₁ (display minus adjoint).
        let s = kdv_var();
        let r = verify_adjoint_expansion(&s).unwrap();
        let x1 = s.field(1).unwrap();
        let d1 = x1.divergence_term();
        let x1d1 = x1.apply(&d1).unwrap();
        let want = DiffOp::from_scalar(d1.checked_mul(&x1d1).unwrap())
            .sub(
                &x1.as_diffop()
                    .mul_scalar_left(&x1d1.scale(&GaussianRational::from_int(2)))
                    .unwrap(),
            )
            .unwrap();
        match &r.status {
            IdentityStatus::ResidualOp(res) => assert_eq!(*res, want),
            other => panic!("expected operator residual, got {other:?}"),
        }
    }

    #[test]
    fn skew_part_heisenberg_exact_both_orderings() {
        // First-field ordering: both sides equal a nonzero commutator term.
        let s = heis(1, false);
        let r = verify_skew_part(&s).unwrap();
        assert!(r.is_exact(), "{r}");
        let gap = build_p1(&s)
            .unwrap()
            .sub(&build_p1_star(&s).unwrap())
            .unwrap();
        assert!(!gap.is_zero());

        // Central-field ordering: both sides vanish identically.
        let c = heis(3, true);
        assert!(verify_skew_part(&c).unwrap().is_exact());
        assert!(build_p1(&c)
            .unwrap()
            .sub(&build_p1_star(&c).unwrap())
            .unwrap()
            .is_zero());
    }

    #[test]
    fn skew_part_constant_coefficients_exact() {
        assert!(verify_skew_part(&kdv_const()).unwrap().is_exact());
    }

    #[test]
    fn skew_part_divergent_residual_pinned() {
        // Display minus true difference is −d₁² X₁ − d₁(X₁d₁).
        let s = kdv_var();
        let r = verify_skew_part(&s).unwrap();
        let x1 = s.field(1).unwrap();
        let d1 = x1.divergence_term();
        let x1d1 = x1.apply(&d1).unwrap();
        let want = x1
            .as_diffop()
            .mul_scalar_left(&d1.checked_mul(&d1).unwrap())
            .unwrap()
            .add(&DiffOp::from_scalar(d1.checked_mul(&x1d1).unwrap()))
            .unwrap()
            .neg();
        match &r.status {
            IdentityStatus::ResidualOp(res) => assert_eq!(*res, want),
            other => panic!("expected operator residual, got {other:?}"),
        }
    }

    #[test]
    fn qj_consistency_constant_brackets_exact() {
        let f3 = x(3, 0).neg();
        assert!(verify_qj_consistency(&heis(1, false), &f3).unwrap().is_exact());
        assert!(verify_qj_consistency(&kdv_const(), &x(2, 1).neg())
            .unwrap()
            .is_exact());
    }

    #[test]
    fn qj_consistency_zero_weight() {
        let r = verify_qj_consistency(&heis(2, false), &ScalarExpr::zero(3)).unwrap();
        assert!(r.is_exact());
    }

    #[test]
    fn qj_consistency_variable_brackets_residual() {
        // Nonzero c'' makes the expanded display exceed the subtraction
        // form by (i/2) Σ_j c''_j X_j.
        let s = collinear_variable();
        assert_eq!(
            build_cdoubleprime(&s, 2).unwrap(),
            ScalarExpr::from_int(2, 4)
        );
        let f = x(2, 0).neg();
        let r = verify_qj_consistency(&s, &f).unwrap();
        let mut want = LambdaOp::zero(2);
        for j in 1..=2usize {
            let c2 = build_cdoubleprime(&s, j).unwrap();
            let term = s
                .field(j)
                .unwrap()
                .as_diffop()
                .mul_scalar_left(&c2.scale(&GaussianRational::imaginary_ratio(1, 2)))
                .unwrap();
            want = want.add(&LambdaOp::from_diffop(term)).unwrap();
        }
        match &r.status {
            IdentityStatus::ResidualLambda(res) => assert_eq!(*res, want),
            other => panic!("expected lambda residual, got {other:?}"),
        }
    }

    #[test]
    fn corrupted_structure_table_yields_residual() {
        // Perturb one bracket coefficient by 1 (times i to stay imaginary):
        // the verifiers must not report exact-match.
        let s = heis(1, false);
        let mut sc = s.structure_coeffs().unwrap().clone();
        let row = sc.get_mut(&(2, 1)).unwrap();
        row[2] = row[2].add(&ScalarExpr::constant(3, GaussianRational::i()));
        let bad = SystemSpec::new(
            2,
            s.x0().clone(),
            s.fields().to_vec(),
            Some(sc),
        )
        .unwrap();
        assert!(!verify_adjoint_expansion(&bad).unwrap().is_exact());
        assert!(!verify_skew_part(&bad).unwrap().is_exact());
    }

    #[test]
    fn reports_are_deterministic() {
        let s = kdv_var();
        let a = format!("{}", verify_skew_part(&s).unwrap());
        let b = format!("{}", verify_skew_part(&s).unwrap());
        assert_eq!(a, b);
        let ja = verify_adjoint_expansion(&s).unwrap().to_json().to_string();
        let jb = verify_adjoint_expansion(&s).unwrap().to_json().to_string();
        assert_eq!(ja, jb);
    }

    #[test]
    fn verify_all_order_and_count() {
        let s = heis(1, false);
        let f = x(3, 0).neg();
        let reports = verify_all(&s, &f).unwrap();
        let names: Vec<_> = reports.iter().map(|r| r.name.as_str()).collect();
        assert_eq!(
            names,
            [
                "conjugation-decomposition",
                "adjoint-expansion",
                "skew-part",
                "qj-consistency"
            ]
        );
    }
}
