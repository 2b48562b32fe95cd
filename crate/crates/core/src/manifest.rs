//! JSON manifests describing file-backed families.
//!
//! ```json
//! {
//!   "n": 100,
//!   "terms": [
//!     {"matrix_path": "A0.mtx", "function": {"kind": "poly", "params": [1.0]}},
//!     {"matrix_path": "A1.mtx", "function": {"kind": "exp", "params": -1.0}}
//!   ],
//!   "scale": 1.0,
//!   "rhs_path": "b.txt"
//! }
//! ```
//!
//! Relative paths are resolved against the manifest's directory. The
//! right-hand side is either `rhs` (inline array) or `rhs_path` (whitespace
//! separated numbers); without either, `b` is the vector of ones.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mtx;
use crate::taylor::{ScalarFunction, TaylorMatrixFunction, Term};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub n: usize,
    pub terms: Vec<ManifestTerm>,
    #[serde(default = "one")]
    pub scale: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rhs: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rhs_path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestTerm {
    pub matrix_path: PathBuf,
    pub function: serde_json::Value,
}

fn one() -> f64 {
    1.0
}

fn manifest_err(path: &Path, term: usize, msg: impl Into<String>) -> Error {
    Error::Manifest {
        path: path.display().to_string(),
        term,
        msg: msg.into(),
    }
}

pub fn load(path: &Path) -> Result<(TaylorMatrixFunction, Vec<f64>)> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    let base = path.parent().unwrap_or(Path::new("."));
    build(&manifest, base, path)
}

/// Builds the family from a parsed manifest; `origin` names it in errors.
pub fn build(m: &Manifest, base: &Path, origin: &Path) -> Result<(TaylorMatrixFunction, Vec<f64>)> {
    if m.terms.is_empty() {
        return Err(manifest_err(origin, 0, "no terms"));
    }
    let mut terms = Vec::with_capacity(m.terms.len());
    for (k, t) in m.terms.iter().enumerate() {
        let function: ScalarFunction = serde_json::from_value(t.function.clone())
            .map_err(|e| manifest_err(origin, k, format!("function: {e}; kinds are poly, exp, sin, cos")))?;
        let file = base.join(&t.matrix_path);
        let matrix = mtx::read(&file)?;
        if matrix.nrows() != m.n || matrix.ncols() != m.n {
            return Err(manifest_err(
                origin,
                k,
                format!(
                    "{} is {}x{}, expected {}x{}",
                    file.display(),
                    matrix.nrows(),
                    matrix.ncols(),
                    m.n,
                    m.n
                ),
            ));
        }
        terms.push(Term {
            matrix: Arc::new(matrix),
            function,
        });
    }
    let mut f = TaylorMatrixFunction::from_terms(m.n, terms)?;
    if m.scale != 1.0 {
        f = f.rescale(m.scale)?;
    }

    let b = match (&m.rhs, &m.rhs_path) {
        (Some(b), _) => b.clone(),
        (None, Some(p)) => read_vector(&base.join(p))?,
        (None, None) => vec![1.0; m.n],
    };
    if b.len() != m.n {
        return Err(manifest_err(origin, m.terms.len(), format!("right-hand side has length {}, expected {}", b.len(), m.n)));
    }
    Ok((f, b))
}

/// Whitespace-separated numbers; `%` starts a comment line.
pub fn read_vector(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut out = Vec::new();
    for (k, line) in text.lines().enumerate() {
        if line.trim_start().starts_with('%') {
            continue;
        }
        for tok in line.split_whitespace() {
            out.push(tok.parse().map_err(|_| Error::MatrixMarket {
                path: path.display().to_string(),
                line: k + 1,
                msg: format!("bad number '{tok}'"),
            })?);
        }
    }
    Ok(out)
}
