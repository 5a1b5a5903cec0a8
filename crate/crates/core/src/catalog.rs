//! Ready-made systems: KdV on the line, ZK on the plane, and the
//! Heisenberg family, each packaged with a default affine weight, a
//! default region, and the hypothesis verdicts the construction
//! guarantees.
//!
//! Axis convention: axis 1 is the evolution variable t whenever a system
//! has one; space axes follow in order. Reports echo this so transposed
//! axes cannot pass silently.

use crate::error::{Error, Result};
use crate::field::VectorField;
use crate::hypotheses::Region;
use crate::scalar::{GaussianRational, ScalarExpr};
use crate::system::{StructureCoeffs, SystemSpec};

/// Hypothesis verdicts a catalog entry is built to satisfy; tests and the
/// `check` command compare fresh runs against these.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExpectedVerdicts {
    /// Involutivity verifies symbolically with zero residual.
    pub involutivity_exact: bool,
    /// The field in the leading slot has a nonvanishing coefficient vector
    /// on the default region.
    pub nondegenerate: bool,
    /// Bracket length spanning the full tangent space at the region
    /// center, when one exists at all.
    pub hormander_rank: Option<u32>,
    /// Every divergence term vanishes identically, which forces the
    /// operator to equal its formal adjoint up to commutators alone.
    pub divergence_free: bool,
}

pub struct CatalogEntry {
    pub id: &'static str,
    pub summary: &'static str,
    pub system: SystemSpec,
    /// Default affine weight f, chosen so the leading field differentiates
    /// it to the constant 1.
    pub weight: ScalarExpr,
    /// Claimed lower bound for that derivative on the region.
    pub c0: f64,
    pub region: Region,
    pub expected: ExpectedVerdicts,
}

/// KdV-type operator on the line: X₀ = D_t, X₁ = a(x)D_x, so
/// P₁ = a D_x (a D_x)* (a D_x) … collapses to D_t + D_x³ when a ≡ 1.
pub fn kdv_1d(a: ScalarExpr) -> Result<SystemSpec> {
    if a.dim() != 2 {
        return Err(Error::DimensionMismatch { left: 2, right: a.dim() });
    }
    let reality = a.classify_reality();
    if !reality.admits_real() {
        return Err(Error::NotRealValued { found: reality.describe() });
    }
    let x0 = VectorField::coordinate(2, 0)?;
    let x1 = VectorField::new(vec![ScalarExpr::zero(2), a])?;
    let mut sc = StructureCoeffs::new();
    sc.insert((1, 1), vec![ScalarExpr::zero(2)]);
    SystemSpec::new(1, x0, vec![x1], Some(sc))
}

/// ZK-type operator on the plane: X₀ = D_t plus two space fields whose
/// brackets close under the supplied structure coefficients. The fields
/// must not touch the time axis, and involutivity is verified before the
/// system is handed back.
pub fn zk_2d(x1: VectorField, x2: VectorField, c: StructureCoeffs) -> Result<SystemSpec> {
    for (idx, f) in [&x1, &x2].into_iter().enumerate() {
        if f.dim() != 3 {
            return Err(Error::DimensionMismatch { left: 3, right: f.dim() });
        }
        if !f.coeff(0).is_zero() {
            return Err(Error::InvalidSystem(format!(
                "X{} must not differentiate in t (zero coefficient on axis 1)",
                idx + 1
            )));
        }
    }
    let sys = SystemSpec::new(2, VectorField::coordinate(3, 0)?, vec![x1, x2], Some(c))?;
    let region = Region::centered_box(3, 1, 3)?;
    let verdict = crate::hypotheses::verify_involutivity(
        &sys,
        &region,
        crate::hypotheses::DEFAULT_INVOLUTIVITY_TOL,
    );
    if !verdict.verified() {
        return Err(Error::HypothesisFailure(format!(
            "supplied frame is not involutive under the given coefficients: {verdict:?}"
        )));
    }
    Ok(sys)
}

/// Heisenberg basis fields on ℝ^{2k+1}, optionally prefixed with a time
/// axis carrying X₀ = D_t. For 1 ≤ j ≤ k, writing z for the last space
/// coordinate:
///
///   iX_j     = ∂_j − (x_{k+j}/2) ∂_z
///   iX_{k+j} = ∂_{k+j} + (x_j/2) ∂_z
///   iX_{2k+1} = ∂_z
///
/// The field indexed `j0` is swapped into the leading slot, since the
/// estimates only ever distinguish the leading field from the rest.
/// Structure coefficients are populated from the actual commutators; all
/// nonzero brackets are constant multiples of the center.
pub fn heisenberg(k: usize, j0: usize, with_time: bool) -> Result<SystemSpec> {
    if k == 0 {
        return Err(Error::InvalidConfig("Heisenberg index k must be at least 1".into()));
    }
    let nf = 2 * k + 1;
    if j0 == 0 || j0 > nf {
        return Err(Error::FieldIndexOutOfRange { index: j0, count: nf });
    }
    let off = usize::from(with_time);
    let dim = nf + off;
    let half = GaussianRational::from_ratio(1, 2);
    let center = off + 2 * k;

    let mk = |entries: Vec<(usize, ScalarExpr)>| -> Result<VectorField> {
        let mut coeffs = vec![ScalarExpr::zero(dim); dim];
        for (axis, e) in entries {
            coeffs[axis] = e;
        }
        VectorField::new(coeffs)
    };

    let mut fields = Vec::with_capacity(nf);
    for j in 0..k {
        fields.push(mk(vec![
            (off + j, ScalarExpr::one(dim)),
            (center, ScalarExpr::var(dim, off + k + j)?.scale(&half.neg())),
        ])?);
    }
    for j in 0..k {
        fields.push(mk(vec![
            (off + k + j, ScalarExpr::one(dim)),
            (center, ScalarExpr::var(dim, off + j)?.scale(&half)),
        ])?);
    }
    fields.push(mk(vec![(center, ScalarExpr::one(dim))])?);
    fields.swap(0, j0 - 1);

    let slot_central = fields
        .iter()
        .position(|f| {
            f.coeff(center).is_constant()
                && !f.coeff(center).is_zero()
                && (0..dim).all(|a| a == center || f.coeff(a).is_zero())
        })
        .expect("center field present");

    let mut sc = StructureCoeffs::new();
    for a in 1..=nf {
        for b in 1..=nf {
            let bracket = fields[a - 1].commutator(&fields[b - 1])?;
            let mut row = vec![ScalarExpr::zero(dim); nf];
            if !bracket.is_zero() {
                row[slot_central] = bracket.coeff(center).clone();
            }
            sc.insert((a, b), row);
        }
    }

    let x0 = if with_time {
        VectorField::coordinate(dim, 0)?
    } else {
        VectorField::zero(dim)
    };
    SystemSpec::new(dim - 1, x0, fields, Some(sc))
}

/// Only the 2k generating fields, space only, no center and no time.
/// The frame is deliberately not involutive (the bracket leaves the span);
/// its purpose is bracket-rank computation.
pub fn heisenberg_generators(k: usize) -> Result<SystemSpec> {
    let full = heisenberg(k, 1, false)?;
    let fields: Vec<VectorField> = full.fields()[..2 * k].to_vec();
    SystemSpec::new(full.n(), VectorField::zero(full.dim()), fields, None)
}

fn lift_expr(e: &ScalarExpr, dim: usize) -> ScalarExpr {
    let mut out = ScalarExpr::zero(dim);
    for (exps, c) in e.terms() {
        let mut v = exps.clone();
        v.resize(dim, 0);
        out = out.add(&ScalarExpr::monomial(dim, v, c.clone()));
    }
    out
}

fn lift_field(f: &VectorField, dim: usize) -> Result<VectorField> {
    let mut coeffs: Vec<ScalarExpr> = f.coeffs().iter().map(|c| lift_expr(c, dim)).collect();
    coeffs.resize(dim, ScalarExpr::zero(dim));
    VectorField::new(coeffs)
}

/// Heisenberg fields with time, extended by `m` trailing axes on which
/// every field has zero coefficient. The second-order part stays blind to
/// those directions, so brackets cannot reach them and the rank
/// computation reports no spanning length.
pub fn heisenberg_embedded(k: usize, m: usize) -> Result<SystemSpec> {
    if m == 0 {
        return Err(Error::InvalidConfig("need at least one extra axis".into()));
    }
    let base = heisenberg(k, 1, true)?;
    let dim = base.dim() + m;
    let x0 = VectorField::coordinate(dim, 0)?;
    let fields: Vec<VectorField> = base
        .fields()
        .iter()
        .map(|f| lift_field(f, dim))
        .collect::<Result<_>>()?;
    let sc: StructureCoeffs = base
        .structure_coeffs()
        .expect("heisenberg always carries a table")
        .iter()
        .map(|(&jk, row)| (jk, row.iter().map(|c| lift_expr(c, dim)).collect()))
        .collect();
    SystemSpec::new(dim - 1, x0, fields, Some(sc))
}

/// Same system with the X₀ term removed: the operator loses its
/// evolution part and becomes purely spatial.
pub fn non_kdv(s: &SystemSpec) -> SystemSpec {
    SystemSpec::new(
        s.n(),
        VectorField::zero(s.dim()),
        s.fields().to_vec(),
        s.structure_coeffs().cloned(),
    )
    .expect("rebuilding a valid system cannot fail")
}

pub const CATALOG_IDS: [&str; 8] = [
    "kdv",
    "kdv-var",
    "zk",
    "heisenberg1",
    "heisenberg1-space",
    "heisenberg2",
    "heisenberg-embedded",
    "nonkdv-heisenberg1",
];

pub fn catalog_ids() -> &'static [&'static str] {
    &CATALOG_IDS
}

/// Weight −x_axis (1-based axis), the affine choice whose derivative
/// along a unit-coefficient field is exactly 1.
fn neg_axis(dim: usize, axis_1based: usize) -> ScalarExpr {
    ScalarExpr::var(dim, axis_1based - 1).expect("axis in range").neg()
}

pub fn catalog_entry(id: &str) -> Result<CatalogEntry> {
    let verdicts = |rank: Option<u32>, divergence_free: bool| ExpectedVerdicts {
        involutivity_exact: true,
        nondegenerate: true,
        hormander_rank: rank,
        divergence_free,
    };
    let entry = match id {
        "kdv" => CatalogEntry {
            id: "kdv",
            summary: "constant-coefficient KdV operator D_t + D_x^3 on (t, x)",
            system: kdv_1d(ScalarExpr::one(2))?,
            weight: neg_axis(2, 2),
            c0: 1.0,
            region: Region::centered_box(2, 1, 3)?,
            expected: verdicts(None, true),
        },
        "kdv-var" => CatalogEntry {
            id: "kdv-var",
            summary: "variable-speed KdV operator with a(x) = 1 + x^2",
            system: kdv_1d(
                ScalarExpr::one(2).add(&ScalarExpr::var(2, 1)?.pow(2)?),
            )?,
            weight: neg_axis(2, 2),
            c0: 1.0,
            region: Region::centered_box(2, 1, 3)?,
            expected: verdicts(None, false),
        },
        "zk" => CatalogEntry {
            id: "zk",
            summary: "constant-coefficient ZK operator D_t + D_1(D_1^2 + D_2^2) on (t, x1, x2)",
            system: {
                let z = || vec![ScalarExpr::zero(3); 2];
                let mut c = StructureCoeffs::new();
                for a in 1..=2usize {
                    for b in 1..=2usize {
                        c.insert((a, b), z());
                    }
                }
                zk_2d(
                    VectorField::coordinate(3, 1)?,
                    VectorField::coordinate(3, 2)?,
                    c,
                )?
            },
            weight: neg_axis(3, 2),
            c0: 1.0,
            region: Region::centered_box(3, 1, 3)?,
            expected: verdicts(None, true),
        },
        "heisenberg1" => CatalogEntry {
            id: "heisenberg1",
            summary: "KdV-type operator over the first Heisenberg frame, with time",
            system: heisenberg(1, 1, true)?,
            weight: neg_axis(4, 2),
            c0: 1.0,
            region: Region::centered_box(4, 1, 3)?,
            expected: verdicts(None, true),
        },
        "heisenberg1-space" => CatalogEntry {
            id: "heisenberg1-space",
            summary: "first Heisenberg frame alone, no evolution axis",
            system: heisenberg(1, 1, false)?,
            weight: neg_axis(3, 1),
            c0: 1.0,
            region: Region::centered_box(3, 1, 3)?,
            expected: verdicts(Some(1), true),
        },
        "heisenberg2" => CatalogEntry {
            id: "heisenberg2",
            summary: "KdV-type operator over the second Heisenberg frame, with time",
            system: heisenberg(2, 1, true)?,
            weight: neg_axis(6, 2),
            c0: 1.0,
            region: Region::centered_box(6, 1, 3)?,
            expected: verdicts(None, true),
        },
        "heisenberg-embedded" => CatalogEntry {
            id: "heisenberg-embedded",
            summary: "first Heisenberg frame with time plus two inert axes",
            system: heisenberg_embedded(1, 2)?,
            weight: neg_axis(6, 2),
            c0: 1.0,
            region: Region::centered_box(6, 1, 3)?,
            expected: verdicts(None, true),
        },
        "nonkdv-heisenberg1" => CatalogEntry {
            id: "nonkdv-heisenberg1",
            summary: "first Heisenberg frame with time axis present but no evolution term",
            system: non_kdv(&heisenberg(1, 1, true)?),
            weight: neg_axis(4, 2),
            c0: 1.0,
            region: Region::centered_box(4, 1, 3)?,
            expected: verdicts(None, true),
        },
        other => {
            return Err(Error::InvalidConfig(format!(
                "unknown catalog id {other:?}; valid ids: {}",
                CATALOG_IDS.join(", ")
            )))
        }
    };
    Ok(entry)
}

pub fn catalog() -> Vec<CatalogEntry> {
    CATALOG_IDS
        .iter()
        .map(|id| catalog_entry(id).expect("built-in entry"))
        .collect()
}

/// The leading field applied twice then once more never reaches the
/// evolution axis, so a KdV-type catalog operator always splits as
/// (spatial part) + X₀. Used by tests and the report echo.
pub fn evolution_term(s: &SystemSpec) -> crate::diffop::DiffOp {
    s.x0().as_diffop()
}
