//! Plain-text expression syntax for scalar coefficients and weights.
//!
//! Grammar: variables `x1`..`x9` (plus caller-registered aliases such as
//! `x` or `t`), rational literals `p` or `p/q`, the imaginary unit `i`,
//! operators `+ - * ^`, parentheses, and unary minus. Multiplication is
//! always explicit (`2*x1`, not `2x1`). Division is allowed by nonzero
//! integer literals only, so `-x2/2` means `(-1/2)*x2`.

use crate::error::{Error, Result};
use crate::scalar::{GaussianRational, ScalarExpr};
use std::collections::BTreeMap;

/// Maps variable names to 0-based axes. `x1`..`x9` are always present
/// (clamped to the target dimension); callers add context-specific names
/// like `x` or `t`.
#[derive(Debug, Clone)]
pub struct AliasTable {
    map: BTreeMap<String, usize>,
}

impl AliasTable {
    pub fn for_dim(dim: usize) -> Self {
        let mut map = BTreeMap::new();
        for axis in 0..dim.min(9) {
            map.insert(format!("x{}", axis + 1), axis);
        }
        AliasTable { map }
    }

    pub fn with(mut self, name: &str, axis: usize) -> Self {
        self.map.insert(name.to_string(), axis);
        self
    }

    fn lookup(&self, name: &str) -> Option<usize> {
        self.map.get(name).copied()
    }
}

pub fn parse_expr(src: &str, dim: usize, aliases: &AliasTable) -> Result<ScalarExpr> {
    parse_expr_at_line(src, dim, aliases, 1)
}

/// Like `parse_expr`, but errors report `line` instead of line 1; used by
/// the system-file loader.
pub fn parse_expr_at_line(src: &str, dim: usize, aliases: &AliasTable, line: usize) -> Result<ScalarExpr> {
    let mut p = Parser {
        src: src.as_bytes(),
        pos: 0,
        dim,
        aliases,
        line,
    };
    p.skip_ws();
    let e = p.expr()?;
    p.skip_ws();
    if p.pos < p.src.len() {
        return Err(p.err("unexpected trailing input"));
    }
    Ok(e)
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    dim: usize,
    aliases: &'a AliasTable,
    line: usize,
}

impl<'a> Parser<'a> {
    fn err(&self, msg: &str) -> Error {
        Error::Parse {
            line: self.line,
            col: self.pos + 1,
            msg: msg.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && (self.src[self.pos] == b' ' || self.src[self.pos] == b'\t') {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn expr(&mut self) -> Result<ScalarExpr> {
        let mut acc = self.term()?;
        loop {
            self.skip_ws();
            match self.peek() {
                Some(b'+') => {
                    self.pos += 1;
                    let t = self.term()?;
                    acc = acc.add(&t);
                }
                Some(b'-') => {
                    self.pos += 1;
                    let t = self.term()?;
                    acc = acc.sub(&t);
                }
                _ => return Ok(acc),
            }
        }
    }

    fn term(&mut self) -> Result<ScalarExpr> {
        let mut acc = self.factor()?;
        loop {
            self.skip_ws();
            match self.peek() {
                Some(b'*') => {
                    self.pos += 1;
                    let f = self.factor()?;
                    acc = acc.checked_mul(&f)?;
                }
                Some(b'/') => {
                    self.pos += 1;
                    self.skip_ws();
                    let q = self.uint()? as i64;
                    if q == 0 {
                        return Err(self.err("zero denominator"));
                    }
                    acc = acc.scale(&GaussianRational::from_ratio(1, q));
                }
                _ => return Ok(acc),
            }
        }
    }

    fn factor(&mut self) -> Result<ScalarExpr> {
        self.skip_ws();
        if self.peek() == Some(b'-') {
            self.pos += 1;
            let f = self.factor()?;
            return Ok(f.neg());
        }
        let base = self.atom()?;
        self.skip_ws();
        if self.peek() == Some(b'^') {
            self.pos += 1;
            self.skip_ws();
            let n = self.uint()?;
            if n > u32::from(u16::MAX) {
                return Err(self.err("exponent too large"));
            }
            return Ok(base.pow(n)?);
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<ScalarExpr> {
        self.skip_ws();
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                self.skip_ws();
                if self.peek() != Some(b')') {
                    return Err(self.err("expected ')'"));
                }
                self.pos += 1;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() => self.rational(),
            Some(c) if c.is_ascii_alphabetic() => self.name(),
            Some(_) => Err(self.err("expected a number, variable, 'i', or '('")),
            None => Err(self.err("unexpected end of input")),
        }
    }

    fn uint(&mut self) -> Result<u32> {
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if self.pos == start {
            return Err(self.err("expected an integer"));
        }
        std::str::from_utf8(&self.src[start..self.pos])
            .unwrap()
            .parse::<u32>()
            .map_err(|_| self.err("integer literal out of range"))
    }

    fn rational(&mut self) -> Result<ScalarExpr> {
        let p = self.uint()? as i64;
        self.skip_ws();
        if self.peek() == Some(b'/') {
            self.pos += 1;
            self.skip_ws();
            let q = self.uint()? as i64;
            if q == 0 {
                return Err(self.err("zero denominator"));
            }
            Ok(ScalarExpr::constant(self.dim, GaussianRational::from_ratio(p, q)))
        } else {
            Ok(ScalarExpr::from_int(self.dim, p))
        }
    }

    fn name(&mut self) -> Result<ScalarExpr> {
        let start = self.pos;
        while self.pos < self.src.len()
            && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
        {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        if name == "i" {
            return Ok(ScalarExpr::constant(self.dim, GaussianRational::i()));
        }
        match self.aliases.lookup(name) {
            Some(axis) if axis < self.dim => Ok(ScalarExpr::var(self.dim, axis)?),
            Some(axis) => {
                self.pos = start;
                Err(self.err(&format!(
                    "variable '{name}' maps to axis {} but the expression dimension is {}",
                    axis + 1,
                    self.dim
                )))
            }
            None => {
                self.pos = start;
                Err(self.err(&format!("unknown variable '{name}'")))
            }
        }
    }
}
