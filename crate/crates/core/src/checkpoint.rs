//! `qgpe-cmps-v1` JSON checkpoints.
//!
//! Complex numbers are `[re, im]` pairs and matrices nest rows inside columns
//! of the outer list (row-major). Floats are written in their shortest
//! round-trip form, so write -> read -> write reproduces the bytes.

use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::cmps::{BoundaryCondition, Cmps, FiniteCmps, UniformCmps};
use crate::error::{QgpeError, Result};
use crate::numerics::dense::{CMat, CVec};

pub const FORMAT: &str = "qgpe-cmps-v1";

type Pair = [f64; 2];
type Rows = Vec<Vec<Pair>>;

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum Matrices {
    One(Rows),
    Many(Vec<Rows>),
}

#[derive(Debug, Serialize, Deserialize)]
struct Grid {
    x1: f64,
    x2: f64,
    n: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum Bc {
    Dirichlet { a: Pair, b: Pair },
    Neumann,
}

#[derive(Debug, Serialize, Deserialize)]
struct Document {
    format: String,
    kind: String,
    #[serde(rename = "D")]
    d: usize,
    #[serde(rename = "Q")]
    q: Matrices,
    #[serde(rename = "R")]
    r: Matrices,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    grid: Option<Grid>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    v1: Option<Vec<Pair>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    v2: Option<Vec<Pair>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    bc: Option<Bc>,
}

fn pair(z: Complex64) -> Result<Pair> {
    if !(z.re.is_finite() && z.im.is_finite()) {
        return Err(QgpeError::InvalidInput("checkpoint values must be finite".into()));
    }
    Ok([z.re, z.im])
}

fn rows(m: &CMat) -> Result<Rows> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| pair(m[(i, j)])).collect()).collect()
}

fn vector(v: &CVec) -> Result<Vec<Pair>> {
    v.iter().map(|z| pair(*z)).collect()
}

fn matrix(rows: &Rows, d: usize) -> Result<CMat> {
    if rows.len() != d || rows.iter().any(|r| r.len() != d) {
        return Err(QgpeError::DimensionMismatch(format!("checkpoint matrix is not {d}x{d}")));
    }
    Ok(CMat::from_fn(d, d, |i, j| Complex64::new(rows[i][j][0], rows[i][j][1])))
}

fn cvec(v: &[Pair], d: usize) -> Result<CVec> {
    if v.len() != d {
        return Err(QgpeError::DimensionMismatch(format!("checkpoint vector is not of length {d}")));
    }
    Ok(CVec::from_iterator(d, v.iter().map(|p| Complex64::new(p[0], p[1]))))
}

fn c(p: Pair) -> Complex64 {
    Complex64::new(p[0], p[1])
}

/// Serialize a state, newline-terminated.
pub fn to_checkpoint_string(state: &Cmps) -> Result<String> {
    let doc = match state {
        Cmps::Uniform(u) => Document {
            format: FORMAT.into(),
            kind: "uniform".into(),
            d: u.bond_dim(),
            q: Matrices::One(rows(&u.q)?),
            r: Matrices::One(rows(&u.r)?),
            grid: None,
            v1: None,
            v2: None,
            bc: None,
        },
        Cmps::Finite(f) => Document {
            format: FORMAT.into(),
            kind: "finite".into(),
            d: f.bond_dim(),
            q: Matrices::Many(f.qs.iter().map(rows).collect::<Result<_>>()?),
            r: Matrices::Many(f.rs.iter().map(rows).collect::<Result<_>>()?),
            grid: Some(Grid { x1: f.x1, x2: f.x2, n: f.len() }),
            v1: Some(vector(&f.v1)?),
            v2: Some(vector(&f.v2)?),
            bc: Some(match f.bc {
                BoundaryCondition::Dirichlet { a, b } => Bc::Dirichlet { a: pair(a)?, b: pair(b)? },
                BoundaryCondition::Neumann => Bc::Neumann,
            }),
        },
    };
    let mut s = serde_json::to_string(&doc).map_err(|e| QgpeError::InvalidInput(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

/// Parse and validate a checkpoint document.
pub fn from_checkpoint_str(text: &str) -> Result<Cmps> {
    let doc: Document =
        serde_json::from_str(text).map_err(|e| QgpeError::InvalidInput(format!("malformed checkpoint: {e}")))?;
    if doc.format != FORMAT {
        return Err(QgpeError::InvalidInput(format!("unsupported checkpoint format {:?}", doc.format)));
    }
    let d = doc.d;
    match (doc.kind.as_str(), &doc.q, &doc.r) {
        ("uniform", Matrices::One(q), Matrices::One(r)) => Ok(Cmps::Uniform(UniformCmps::new(matrix(q, d)?, matrix(r, d)?)?)),
        ("finite", Matrices::Many(qs), Matrices::Many(rs)) => {
            let missing = |what: &str| QgpeError::InvalidInput(format!("finite checkpoint lacks {what}"));
            let grid = doc.grid.as_ref().ok_or_else(|| missing("grid"))?;
            if qs.len() != grid.n || rs.len() != grid.n {
                return Err(QgpeError::DimensionMismatch(format!("grid has {} points, Q/R have {}/{}", grid.n, qs.len(), rs.len())));
            }
            let qs = qs.iter().map(|m| matrix(m, d)).collect::<Result<Vec<_>>>()?;
            let rs = rs.iter().map(|m| matrix(m, d)).collect::<Result<Vec<_>>>()?;
            let v1 = cvec(doc.v1.as_deref().ok_or_else(|| missing("v1"))?, d)?;
            let v2 = cvec(doc.v2.as_deref().ok_or_else(|| missing("v2"))?, d)?;
            let bc = match doc.bc.as_ref().ok_or_else(|| missing("bc"))? {
                Bc::Dirichlet { a, b } => BoundaryCondition::Dirichlet { a: c(*a), b: c(*b) },
                Bc::Neumann => BoundaryCondition::Neumann,
            };
            Ok(Cmps::Finite(FiniteCmps::new(grid.x1, grid.x2, qs, rs, v1, v2, bc)?))
        }
        (kind, _, _) => Err(QgpeError::InvalidInput(format!("checkpoint kind {kind:?} does not match its Q/R layout"))),
    }
}

pub fn write_checkpoint(path: &Path, state: &Cmps) -> Result<()> {
    let text = to_checkpoint_string(state)?;
    std::fs::write(path, text).map_err(|e| QgpeError::Io(format!("{}: {e}", path.display())))
}

pub fn read_checkpoint(path: &Path) -> Result<Cmps> {
    let text = std::fs::read_to_string(path).map_err(|e| QgpeError::Io(format!("{}: {e}", path.display())))?;
    from_checkpoint_str(&text)
}
