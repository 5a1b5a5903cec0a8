//! System data: the drift field X₀, the fields X₁…X_N entering the
//! second-order part, and optional bracket structure constants.

use crate::error::{Error, Result};
use crate::field::VectorField;
use crate::scalar::ScalarExpr;
use std::collections::BTreeMap;

/// Structure data c^{jk}_l with [X_j, X_k] = Σ_l c^{jk}_l X_l, keyed by the
/// 1-based pair (j, k); each entry lists the N components l = 1…N.
pub type StructureCoeffs = BTreeMap<(usize, usize), Vec<ScalarExpr>>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SystemSpec {
    n: usize,
    x0: VectorField,
    fields: Vec<VectorField>,
    structure_coeffs: Option<StructureCoeffs>,
}

impl SystemSpec {
    /// Ambient dimension is n+1; `fields` are X₁…X_N with 1 ≤ N ≤ n+1.
    ///
    /// Every iX_j must be a real field (all D-coefficients real-valued) and
    /// structure coefficients, when given, must be imaginary-valued; both
    /// follow from the sign convention D = -i ∂.
    pub fn new(
        n: usize,
        x0: VectorField,
        fields: Vec<VectorField>,
        structure_coeffs: Option<StructureCoeffs>,
    ) -> Result<Self> {
        let dim = n + 1;
        let nf = fields.len();
        if nf == 0 || nf > dim {
            return Err(Error::InvalidSystem(format!(
                "need 1..={dim} second-order fields for n = {n}, got {nf}"
            )));
        }
        if x0.dim() != dim {
            return Err(Error::DimensionMismatch { left: dim, right: x0.dim() });
        }
        if !x0.is_real() {
            return Err(Error::InvalidSystem("iX0 must have real coefficients".into()));
        }
        for (idx, f) in fields.iter().enumerate() {
            if f.dim() != dim {
                return Err(Error::DimensionMismatch { left: dim, right: f.dim() });
            }
            if !f.is_real() {
                return Err(Error::InvalidSystem(format!(
                    "iX{} must have real coefficients",
                    idx + 1
                )));
            }
        }
        if let Some(sc) = &structure_coeffs {
            for (&(j, k), row) in sc {
                if j == 0 || j > nf || k == 0 || k > nf {
                    return Err(Error::InvalidSystem(format!(
                        "structure pair ({j},{k}) outside 1..={nf}"
                    )));
                }
                if row.len() != nf {
                    return Err(Error::InvalidSystem(format!(
                        "structure row ({j},{k}) has {} components, expected {nf}",
                        row.len()
                    )));
                }
                for (l, c) in row.iter().enumerate() {
                    if c.dim() != dim {
                        return Err(Error::DimensionMismatch { left: dim, right: c.dim() });
                    }
                    let r = c.classify_reality();
                    if !r.admits_imaginary() {
                        return Err(Error::NotImaginaryValued { found: r.describe() });
                    }
                    let _ = l;
                }
            }
        }
        Ok(SystemSpec { n, x0, fields, structure_coeffs })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.n + 1
    }

    pub fn num_fields(&self) -> usize {
        self.fields.len()
    }

    pub fn x0(&self) -> &VectorField {
        &self.x0
    }

    /// X_j for 1-based j (j = 1 is the distinguished first field).
    pub fn field(&self, j: usize) -> Result<&VectorField> {
        if j == 0 || j > self.fields.len() {
            return Err(Error::FieldIndexOutOfRange { index: j, count: self.fields.len() });
        }
        Ok(&self.fields[j - 1])
    }

    pub fn fields(&self) -> &[VectorField] {
        &self.fields
    }

    /// d_j = divergence term of X_j (1-based); j = 0 gives d₀ for X₀.
    pub fn divergence(&self, j: usize) -> Result<ScalarExpr> {
        if j == 0 {
            return Ok(self.x0.divergence_term());
        }
        Ok(self.field(j)?.divergence_term())
    }

    pub fn has_structure_coeffs(&self) -> bool {
        self.structure_coeffs.is_some()
    }

    pub fn structure_coeffs(&self) -> Option<&StructureCoeffs> {
        self.structure_coeffs.as_ref()
    }

    /// The N components of [X_j, X_k]; errors when the table or the pair is
    /// absent.
    pub fn structure_row(&self, j: usize, k: usize) -> Result<&[ScalarExpr]> {
        let sc = self.structure_coeffs.as_ref().ok_or(Error::MissingStructureCoeffs)?;
        sc.get(&(j, k))
            .map(|v| v.as_slice())
            .ok_or(Error::MissingStructureCoeffs)
    }

    /// c^{jk}_l for 1-based j, k, l.
    pub fn structure_coeff(&self, j: usize, k: usize, l: usize) -> Result<&ScalarExpr> {
        let row = self.structure_row(j, k)?;
        if l == 0 || l > row.len() {
            return Err(Error::FieldIndexOutOfRange { index: l, count: row.len() });
        }
        Ok(&row[l - 1])
    }
}
