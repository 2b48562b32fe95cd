//! Matrix Market coordinate files (real, general or symmetric).

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

fn err(path: &str, line: usize, msg: impl Into<String>) -> Error {
    Error::MatrixMarket {
        path: path.to_string(),
        line,
        msg: msg.into(),
    }
}

pub fn read(path: &Path) -> Result<CsrMatrix> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse(&text, &path.display().to_string())
}

/// Parses file contents; `origin` names the source in error messages.
pub fn parse(text: &str, origin: &str) -> Result<CsrMatrix> {
    let mut lines = text.lines().enumerate().map(|(k, l)| (k + 1, l));

    let (lineno, header) = lines.next().ok_or_else(|| err(origin, 1, "empty file"))?;
    let fields: Vec<String> = header.split_whitespace().map(str::to_ascii_lowercase).collect();
    if fields.len() != 5 || fields[0] != "%%matrixmarket" || fields[1] != "matrix" {
        return Err(err(origin, lineno, "expected '%%MatrixMarket matrix coordinate real general|symmetric'"));
    }
    if fields[2] != "coordinate" {
        return Err(err(origin, lineno, format!("unsupported format '{}'", fields[2])));
    }
    if fields[3] != "real" && fields[3] != "integer" {
        return Err(err(origin, lineno, format!("unsupported field '{}'", fields[3])));
    }
    let symmetric = match fields[4].as_str() {
        "general" => false,
        "symmetric" => true,
        other => return Err(err(origin, lineno, format!("unsupported symmetry '{other}'"))),
    };

    let mut data = lines.filter(|(_, l)| {
        let t = l.trim();
        !t.is_empty() && !t.starts_with('%')
    });
    let (size_line, size) = data.next().ok_or_else(|| err(origin, lineno + 1, "missing size line"))?;
    let dims: Vec<usize> = size
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| err(origin, size_line, format!("bad size field '{t}'"))))
        .collect::<Result<_>>()?;
    let [nrows, ncols, nnz] = dims[..] else {
        return Err(err(origin, size_line, "size line needs rows, columns and entry count"));
    };
    if symmetric && nrows != ncols {
        return Err(err(origin, size_line, "symmetric matrix must be square"));
    }

    let mut triplets = Vec::with_capacity(if symmetric { 2 * nnz } else { nnz });
    let mut count = 0;
    let mut last_line = size_line;
    for (ln, l) in data {
        last_line = ln;
        let toks: Vec<&str> = l.split_whitespace().collect();
        if toks.len() != 3 {
            return Err(err(origin, ln, format!("expected 'row col value', found {} fields", toks.len())));
        }
        let idx = |t: &str, bound: usize, what: &str| -> Result<usize> {
            let v: usize = t.parse().map_err(|_| err(origin, ln, format!("bad {what} index '{t}'")))?;
            if v == 0 || v > bound {
                return Err(err(origin, ln, format!("{what} index {v} outside 1..={bound}")));
            }
            Ok(v - 1)
        };
        let r = idx(toks[0], nrows, "row")?;
        let c = idx(toks[1], ncols, "column")?;
        let v: f64 = toks[2].parse().map_err(|_| err(origin, ln, format!("bad value '{}'", toks[2])))?;
        if symmetric && c > r {
            return Err(err(origin, ln, "symmetric files store the lower triangle only"));
        }
        triplets.push((r, c, v));
        if symmetric && r != c {
            triplets.push((c, r, v));
        }
        count += 1;
        if count > nnz {
            return Err(err(origin, ln, format!("more than the declared {nnz} entries")));
        }
    }
    if count < nnz {
        return Err(err(origin, last_line, format!("expected {nnz} entries, found {count}")));
    }
    Ok(CsrMatrix::from_triplets(nrows, ncols, &triplets))
}

/// General coordinate format with full round-trip precision.
pub fn to_string(a: &CsrMatrix) -> String {
    let mut out = String::from("%%MatrixMarket matrix coordinate real general\n");
    writeln!(out, "{} {} {}", a.nrows(), a.ncols(), a.nnz()).unwrap();
    for (r, c, v) in a.triplets() {
        writeln!(out, "{} {} {:e}", r + 1, c + 1, v).unwrap();
    }
    out
}

pub fn write(path: &Path, a: &CsrMatrix) -> Result<()> {
    std::fs::write(path, to_string(a)).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}
