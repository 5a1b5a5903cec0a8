//! Plain-text system definition files.
//!
//! Line oriented, `#` starts a comment, every directive is `key = value`.
//! Coefficient values are comma-separated polynomial expressions in
//! x1..x{n+1}; rationals are integers or p/q (no decimals in box bounds).
//!
//! ```text
//! n = 3
//! x0 = 1, 0, 0, 0
//! field 1 = 0, 1, 0, (-1/2)*x3
//! field 2 = 0, 0, 1, (1/2)*x2
//! field 3 = 0, 0, 0, 1
//! c 1 2 = 0, 0, -i
//! c 2 1 = 0, 0, i
//! box = -1, 1, -1, 1, -1, 1, -1, 1
//! samples = 3
//! weight = -x2
//! c0 = 1
//! ```
//!
//! `n` must come first since it fixes the variable space for everything
//! after it. `x0` defaults to the zero field, `c` rows are optional as a
//! group, and `box`/`samples`/`weight`/`c0` are optional extras consumed
//! by the command-line tool.

use crate::error::{Error, Result};
use crate::field::VectorField;
use crate::hypotheses::Region;
use crate::parse::{parse_expr_at_line, AliasTable};
use crate::scalar::ScalarExpr;
use crate::system::{StructureCoeffs, SystemSpec};
use num_bigint::BigInt;
use num_rational::BigRational;
use std::collections::BTreeMap;
use std::str::FromStr;

#[derive(Debug, Clone)]
pub struct SystemFile {
    pub system: SystemSpec,
    pub region: Option<Region>,
    pub weight: Option<ScalarExpr>,
    pub c0: Option<f64>,
}

fn perr(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, col: 1, msg: msg.into() }
}

fn parse_rational(tok: &str, line: usize) -> Result<BigRational> {
    let t = tok.trim();
    if let Ok(r) = BigRational::from_str(t) {
        return Ok(r);
    }
    if let Ok(n) = BigInt::from_str(t) {
        return Ok(BigRational::from_integer(n));
    }
    Err(perr(line, format!("expected an integer or p/q rational, found {t:?}")))
}

pub fn parse_system_file(text: &str) -> Result<SystemFile> {
    let mut n: Option<usize> = None;
    let mut x0: Option<VectorField> = None;
    let mut fields: BTreeMap<usize, VectorField> = BTreeMap::new();
    let mut rows: StructureCoeffs = StructureCoeffs::new();
    let mut saw_rows = false;
    let mut box_bounds: Option<(Vec<BigRational>, Vec<BigRational>)> = None;
    let mut samples: Option<usize> = None;
    let mut weight: Option<ScalarExpr> = None;
    let mut c0: Option<f64> = None;

    for (idx, raw) in text.lines().enumerate() {
        let lno = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (head, value) = match line.split_once('=') {
            Some((h, v)) => (h.trim(), v.trim()),
            None => return Err(perr(lno, format!("expected `key = value`, found {line:?}"))),
        };
        let words: Vec<&str> = head.split_whitespace().collect();

        let dim_of = |n: &Option<usize>| -> Result<usize> {
            n.map(|n| n + 1)
                .ok_or_else(|| perr(lno, "`n = <space dimension>` must come before this line"))
        };
        let parse_exprs = |value: &str, dim: usize| -> Result<Vec<ScalarExpr>> {
            value
                .split(',')
                .map(|piece| parse_expr_at_line(piece, dim, &AliasTable::for_dim(dim), lno))
                .collect()
        };

        match words.as_slice() {
            ["n"] => {
                if n.is_some() {
                    return Err(perr(lno, "duplicate `n` directive"));
                }
                let v: usize = value
                    .parse()
                    .map_err(|_| perr(lno, format!("bad space dimension {value:?}")))?;
                if v == 0 {
                    return Err(perr(lno, "space dimension must be at least 1"));
                }
                n = Some(v);
            }
            ["x0"] => {
                let dim = dim_of(&n)?;
                let coeffs = parse_exprs(value, dim)?;
                if coeffs.len() != dim {
                    return Err(perr(lno, format!("x0 needs {dim} components, got {}", coeffs.len())));
                }
                x0 = Some(VectorField::new(coeffs)?);
            }
            ["field", j] => {
                let dim = dim_of(&n)?;
                let j: usize = j
                    .parse()
                    .map_err(|_| perr(lno, format!("bad field index {j:?}")))?;
                if j == 0 {
                    return Err(perr(lno, "field indices start at 1"));
                }
                let coeffs = parse_exprs(value, dim)?;
                if coeffs.len() != dim {
                    return Err(perr(
                        lno,
                        format!("field {j} needs {dim} components, got {}", coeffs.len()),
                    ));
                }
                if fields.insert(j, VectorField::new(coeffs)?).is_some() {
                    return Err(perr(lno, format!("duplicate field {j}")));
                }
            }
            ["c", j, k] => {
                let dim = dim_of(&n)?;
                let j: usize = j.parse().map_err(|_| perr(lno, format!("bad index {j:?}")))?;
                let k: usize = k.parse().map_err(|_| perr(lno, format!("bad index {k:?}")))?;
                let row = parse_exprs(value, dim)?;
                if rows.insert((j, k), row).is_some() {
                    return Err(perr(lno, format!("duplicate structure row ({j},{k})")));
                }
                saw_rows = true;
            }
            ["box"] => {
                let dim = dim_of(&n)?;
                let vals: Vec<BigRational> = value
                    .split(',')
                    .map(|t| parse_rational(t, lno))
                    .collect::<Result<_>>()?;
                if vals.len() != 2 * dim {
                    return Err(perr(
                        lno,
                        format!("box needs {} values (lo,hi per axis), got {}", 2 * dim, vals.len()),
                    ));
                }
                let lo = vals.iter().step_by(2).cloned().collect();
                let hi = vals.iter().skip(1).step_by(2).cloned().collect();
                box_bounds = Some((lo, hi));
            }
            ["samples"] => {
                samples = Some(
                    value
                        .parse()
                        .map_err(|_| perr(lno, format!("bad sample density {value:?}")))?,
                );
            }
            ["weight"] => {
                let dim = dim_of(&n)?;
                weight = Some(parse_expr_at_line(value, dim, &AliasTable::for_dim(dim), lno)?);
            }
            ["c0"] => {
                c0 = Some(
                    value
                        .parse()
                        .map_err(|_| perr(lno, format!("bad weight floor {value:?}")))?,
                );
            }
            _ => return Err(perr(lno, format!("unknown directive {head:?}"))),
        }
    }

    let n = n.ok_or_else(|| perr(1, "missing `n = <space dimension>` directive"))?;
    let dim = n + 1;
    let nf = fields.len();
    if nf == 0 {
        return Err(perr(1, "no `field j = …` lines"));
    }
    for (expect, &j) in fields.keys().enumerate() {
        if j != expect + 1 {
            return Err(perr(1, format!("field indices must be contiguous from 1; missing {}", expect + 1)));
        }
    }
    let system = SystemSpec::new(
        n,
        x0.unwrap_or_else(|| VectorField::zero(dim)),
        fields.into_values().collect(),
        saw_rows.then_some(rows),
    )?;
    let region = match box_bounds {
        Some((lo, hi)) => Some(Region::new(lo, hi, samples.unwrap_or(3))?),
        None => samples
            .map(|s| Region::centered_box(dim, 1, s))
            .transpose()?,
    };
    Ok(SystemFile { system, region, weight, c0 })
}

pub fn read_system_file(path: &std::path::Path) -> Result<SystemFile> {
    parse_system_file(&std::fs::read_to_string(path)?)
}

fn fmt_rational(r: &BigRational) -> String {
    if r.is_integer() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Render in the same format `parse_system_file` reads; round-trips
/// exactly because expression display is parser-compatible.
pub fn render_system_file(
    system: &SystemSpec,
    region: Option<&Region>,
    weight: Option<&ScalarExpr>,
    c0: Option<f64>,
) -> String {
    let mut out = String::new();
    out.push_str(&format!("n = {}\n", system.n()));
    let join = |f: &VectorField| {
        f.coeffs().iter().map(|c| c.to_string()).collect::<Vec<_>>().join(", ")
    };
    if !system.x0().is_zero() {
        out.push_str(&format!("x0 = {}\n", join(system.x0())));
    }
    for j in 1..=system.num_fields() {
        out.push_str(&format!("field {j} = {}\n", join(system.field(j).expect("in range"))));
    }
    if let Some(sc) = system.structure_coeffs() {
        // zero rows are written too: the presence of a table is what selects
        // symbolic involutivity checking, so it must survive a round trip
        for (&(j, k), row) in sc {
            let vals = row.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(", ");
            out.push_str(&format!("c {j} {k} = {vals}\n"));
        }
    }
    if let Some(r) = region {
        let bounds: Vec<String> = r
            .lo()
            .iter()
            .zip(r.hi())
            .flat_map(|(lo, hi)| [fmt_rational(lo), fmt_rational(hi)])
            .collect();
        out.push_str(&format!("box = {}\n", bounds.join(", ")));
        out.push_str(&format!("samples = {}\n", r.sample_density()));
    }
    if let Some(w) = weight {
        out.push_str(&format!("weight = {w}\n"));
    }
    if let Some(c0) = c0 {
        out.push_str(&format!("c0 = {c0:?}\n"));
    }
    out
}
