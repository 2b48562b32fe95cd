//! The reusable parameterized approximation `x̃(μ) = Z̃(1:n,:) w(μ)`.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::KrylovFactorization;
use crate::error::{Error, Result};
use crate::lstsq::{shifted_least_squares, Hessenberg};
use crate::sparse::{norm, residual_norm};
use crate::taylor::TaylorMatrixFunction;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterizedSolution {
    pub version: u32,
    pub n: usize,
    pub j: usize,
    #[serde(rename = "H")]
    pub h: Hessenberg,
    /// Columns of the first block rows of Z̃.
    #[serde(rename = "Z_first")]
    pub z_first: Vec<Vec<f64>>,
    pub c_norm: f64,
    pub s: f64,
    pub mu_ref: f64,
    pub eps: f64,
    pub converged: bool,
    /// Optional description of the problem the solution was built for, so
    /// that residuals can be evaluated later without extra input.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem: Option<serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub mu: f64,
    pub rel_res: std::result::Result<f64, String>,
}

impl ParameterizedSolution {
    pub fn from_factorization(f: &KrylovFactorization, s: f64, mu_ref: f64, eps: f64, converged: bool) -> Self {
        Self {
            version: FORMAT_VERSION,
            n: f.z_first.first().map_or(0, Vec::len),
            j: f.h.ncols(),
            h: f.h.clone(),
            z_first: f.z_first.clone(),
            c_norm: f.c_norm,
            s,
            mu_ref,
            eps,
            converged,
            problem: None,
        }
    }

    /// The approximation available after iteration `j`.
    pub fn prefix(&self, j: usize) -> Self {
        assert!(j >= 1 && j <= self.j, "prefix length {j} out of range");
        Self {
            j,
            h: self.h.leading(j),
            z_first: self.z_first[..j].to_vec(),
            ..self.clone()
        }
    }

    /// `x̃(μ)` for `μ` in the original parameterization.
    pub fn evaluate(&self, mu: f64) -> Result<Vec<f64>> {
        let nu = mu / self.s;
        let (w, _) = shifted_least_squares(&self.h, nu, self.c_norm).map_err(|e| match e {
            Error::RankDeficient { .. } => Error::RankDeficient { mu },
            other => other,
        })?;
        let mut x = vec![0.0; self.n];
        for (col, wk) in self.z_first.iter().zip(&w) {
            for (xi, ci) in x.iter_mut().zip(col) {
                *xi += wk * ci;
            }
        }
        Ok(x)
    }

    /// `‖A(μ) x̃(μ) − b‖ / ‖b‖`.
    pub fn true_relative_residual(&self, mu: f64, problem: &TaylorMatrixFunction, b: &[f64]) -> Result<f64> {
        let a = problem.eval(mu)?;
        let x = self.evaluate(mu)?;
        if b.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: b.len(),
            });
        }
        Ok(residual_norm(&a, &x, b) / norm(b))
    }

    /// Relative residuals for each `μ`, in input order. Rows are independent
    /// and computed in parallel; a failing row does not stop the others.
    pub fn sweep(&self, mus: &[f64], problem: &TaylorMatrixFunction, b: &[f64]) -> Vec<SweepRow> {
        mus.par_iter()
            .map(|&mu| SweepRow {
                mu,
                rel_res: self.true_relative_residual(mu, problem, b).map_err(|e| e.to_string()),
            })
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let sol: Self = serde_json::from_str(text)?;
        sol.check()?;
        Ok(sol)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    fn check(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.version != FORMAT_VERSION {
            return bad(format!("unsupported solution version {}", self.version));
        }
        if self.j == 0 || self.h.ncols() != self.j || self.z_first.len() != self.j {
            return bad(format!(
                "solution has j = {}, H with {} columns and {} Z_first columns",
                self.j,
                self.h.ncols(),
                self.z_first.len()
            ));
        }
        if self.z_first.iter().any(|c| c.len() != self.n) {
            return bad(format!("Z_first columns must have length n = {}", self.n));
        }
        if !(self.s > 0.0) {
            return bad(format!("s must be positive, got {}", self.s));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{run, SolverConfig};
    use crate::sparse::CsrMatrix;
    use crate::taylor::{ScalarFunction, Term};
    use std::sync::Arc;

    fn family(n: usize) -> TaylorMatrixFunction {
        let mut t0 = Vec::new();
        let mut t1 = Vec::new();
        for i in 0..n {
            t0.push((i, i, 5.0 + (i % 3) as f64));
            t1.push((i, i, 1.0));
            if i + 1 < n {
                t0.push((i, i + 1, -1.0));
                t1.push((i + 1, i, 0.7));
            }
        }
        TaylorMatrixFunction::from_terms(
            n,
            vec![
                Term {
                    matrix: Arc::new(CsrMatrix::from_triplets(n, n, &t0)),
                    function: ScalarFunction::Poly(vec![1.0]),
                },
                Term {
                    matrix: Arc::new(CsrMatrix::from_triplets(n, n, &t1)),
                    function: ScalarFunction::Sin(1.0),
                },
            ],
        )
        .unwrap()
    }

    fn solved(n: usize) -> (TaylorMatrixFunction, Vec<f64>, ParameterizedSolution) {
        let f = family(n);
        let b: Vec<f64> = (0..n).map(|i| (i as f64).cos()).collect();
        let cfg = SolverConfig {
            j_max: 25,
            mu_ref: 0.5,
            ..Default::default()
        };
        let sol = run(&f, &b, &cfg).unwrap().solution;
        (f, b, sol)
    }

    #[test]
    fn zero_parameter_gives_direct_solve() {
        let (f, b, sol) = solved(20);
        assert!(sol.true_relative_residual(0.0, &f, &b).unwrap() <= 1e-12);
    }

    #[test]
    fn evaluation_is_deterministic_and_json_roundtrips() {
        let (f, b, sol) = solved(15);
        assert_eq!(sol.evaluate(0.3).unwrap(), sol.evaluate(0.3).unwrap());
        let back = ParameterizedSolution::from_json(&sol.to_json().unwrap()).unwrap();
        assert_eq!(back, sol);
        assert_eq!(back.evaluate(0.3).unwrap(), sol.evaluate(0.3).unwrap());
        let rows = sol.sweep(&[0.2, 0.2, 0.4], &f, &b);
        assert_eq!(rows[0], SweepRow { mu: 0.2, ..rows[1].clone() });
        assert_eq!(rows.iter().map(|r| r.mu).collect::<Vec<_>>(), vec![0.2, 0.2, 0.4]);
        let single = sol.sweep(&[0.4], &f, &b);
        assert_eq!(single[0].rel_res, Ok(sol.true_relative_residual(0.4, &f, &b).unwrap()));
    }

    #[test]
    fn sweep_records_row_errors() {
        let (_, b, sol) = solved(10);
        let oracle_only = TaylorMatrixFunction::from_coefficient_fn(10, |_| CsrMatrix::identity(10));
        let rows = sol.sweep(&[0.1], &oracle_only, &b);
        assert!(rows[0].rel_res.as_ref().unwrap_err().contains("evaluator unavailable"));
    }

    #[test]
    fn corrupted_container_rejected() {
        let (_, _, mut sol) = solved(10);
        sol.z_first.pop();
        assert!(ParameterizedSolution::from_json(&sol.to_json().unwrap()).is_err());
    }
}
