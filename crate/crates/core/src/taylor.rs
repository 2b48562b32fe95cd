//! Parameterized matrix families `A(μ) = Σ_ℓ A_ℓ μ^ℓ` accessed through their
//! Taylor coefficients.

use std::fmt;
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// Scalar functions with closed-form Taylor coefficients at the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "lowercase")]
pub enum ScalarFunction {
    /// `c_0 + c_1 μ + … + c_d μ^d`
    Poly(Vec<f64>),
    /// `exp(a μ)`
    Exp(f64),
    /// `sin(a μ)`
    Sin(f64),
    /// `cos(a μ)`
    Cos(f64),
}

impl ScalarFunction {
    pub fn eval(&self, mu: f64) -> f64 {
        match self {
            Self::Poly(c) => c.iter().rev().fold(0.0, |acc, &ck| acc * mu + ck),
            Self::Exp(a) => (a * mu).exp(),
            Self::Sin(a) => (a * mu).sin(),
            Self::Cos(a) => (a * mu).cos(),
        }
    }

    /// The `ℓ`-th Taylor coefficient `f^{(ℓ)}(0) / ℓ!`.
    pub fn taylor_coefficient(&self, ell: usize) -> f64 {
        match self {
            Self::Poly(c) => c.get(ell).copied().unwrap_or(0.0),
            Self::Exp(a) => power_over_factorial(*a, ell),
            Self::Sin(a) => {
                if ell % 2 == 1 {
                    sign((ell - 1) / 2) * power_over_factorial(*a, ell)
                } else {
                    0.0
                }
            }
            Self::Cos(a) => {
                if ell.is_multiple_of(2) {
                    sign(ell / 2) * power_over_factorial(*a, ell)
                } else {
                    0.0
                }
            }
        }
    }
}

fn sign(k: usize) -> f64 {
    if k.is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

/// `a^ℓ / ℓ!`, dividing by the exactly represented factorial while it fits.
fn power_over_factorial(a: f64, ell: usize) -> f64 {
    if ell <= 170 {
        let fact: f64 = (1..=ell).map(|k| k as f64).product();
        a.powi(ell as i32) / fact
    } else {
        (1..=ell).fold(1.0, |acc, k| acc * a / k as f64)
    }
}

/// One `C_k f_k(μ)` term of a family.
#[derive(Debug, Clone, PartialEq)]
pub struct Term {
    pub matrix: Arc<CsrMatrix>,
    pub function: ScalarFunction,
}

type CoefficientFn = dyn Fn(usize) -> CsrMatrix + Send + Sync;

#[derive(Clone)]
enum Source {
    Terms(Vec<Term>),
    Oracle(Arc<CoefficientFn>),
}

/// The family `A(μ)` with lazily memoized, scale-folded Taylor coefficients.
///
/// `coeff(ℓ)` returns `s^ℓ A_ℓ`, i.e. the coefficients of `Â(ν) = A(sν)`,
/// while `eval(μ)` always works in the original parameter.
pub struct TaylorMatrixFunction {
    n: usize,
    source: Source,
    scale: f64,
    memo: RwLock<Vec<Arc<CsrMatrix>>>,
}

impl fmt::Debug for TaylorMatrixFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let terms = match &self.source {
            Source::Terms(t) => t.len(),
            Source::Oracle(_) => 0,
        };
        f.debug_struct("TaylorMatrixFunction")
            .field("n", &self.n)
            .field("terms", &terms)
            .field("scale", &self.scale)
            .finish()
    }
}

impl Clone for TaylorMatrixFunction {
    fn clone(&self) -> Self {
        Self {
            n: self.n,
            source: self.source.clone(),
            scale: self.scale,
            memo: RwLock::new(self.memo.read().unwrap().clone()),
        }
    }
}

impl TaylorMatrixFunction {
    /// Family `Σ_k C_k f_k(μ)`. All matrices must be `n × n`.
    pub fn from_terms(n: usize, terms: Vec<Term>) -> Result<Self> {
        for t in &terms {
            if t.matrix.nrows() != n || t.matrix.ncols() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: t.matrix.nrows().max(t.matrix.ncols()),
                });
            }
        }
        Ok(Self {
            n,
            source: Source::Terms(terms),
            scale: 1.0,
            memo: RwLock::new(Vec::new()),
        })
    }

    /// Family known only through its coefficients; `eval` is unavailable.
    pub fn from_coefficient_fn<F>(n: usize, coefficient: F) -> Self
    where
        F: Fn(usize) -> CsrMatrix + Send + Sync + 'static,
    {
        Self {
            n,
            source: Source::Oracle(Arc::new(coefficient)),
            scale: 1.0,
            memo: RwLock::new(Vec::new()),
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn terms(&self) -> Option<&[Term]> {
        match &self.source {
            Source::Terms(t) => Some(t),
            Source::Oracle(_) => None,
        }
    }

    pub fn has_evaluator(&self) -> bool {
        matches!(self.source, Source::Terms(_))
    }

    /// `s^ℓ A_ℓ`, memoized.
    pub fn coeff(&self, ell: usize) -> Arc<CsrMatrix> {
        if let Some(m) = self.memo.read().unwrap().get(ell) {
            return Arc::clone(m);
        }
        let mut memo = self.memo.write().unwrap();
        while memo.len() <= ell {
            let k = memo.len();
            let unscaled = self.unscaled_coeff(k);
            let factor = self.scale.powi(k as i32);
            let m = if factor == 1.0 { unscaled } else { unscaled.scaled(factor) };
            memo.push(Arc::new(m));
        }
        Arc::clone(&memo[ell])
    }

    fn unscaled_coeff(&self, ell: usize) -> CsrMatrix {
        match &self.source {
            Source::Terms(terms) => {
                let parts: Vec<(f64, &CsrMatrix)> = terms
                    .iter()
                    .map(|t| (t.function.taylor_coefficient(ell), t.matrix.as_ref()))
                    .collect();
                CsrMatrix::linear_combination(self.n, self.n, &parts)
            }
            Source::Oracle(f) => {
                let m = f(ell);
                assert_eq!((m.nrows(), m.ncols()), (self.n, self.n), "coefficient {ell} has wrong shape");
                m
            }
        }
    }

    /// `A(μ)` in the original parameterization.
    pub fn eval(&self, mu: f64) -> Result<CsrMatrix> {
        match &self.source {
            Source::Terms(terms) => {
                let parts: Vec<(f64, &CsrMatrix)> =
                    terms.iter().map(|t| (t.function.eval(mu), t.matrix.as_ref())).collect();
                Ok(CsrMatrix::linear_combination(self.n, self.n, &parts))
            }
            Source::Oracle(_) => Err(Error::EvaluatorUnavailable),
        }
    }

    /// The family `ν ↦ A(sν)`. Scales compose multiplicatively.
    pub fn rescale(&self, s: f64) -> Result<Self> {
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::InvalidScale(s));
        }
        Ok(Self {
            n: self.n,
            source: self.source.clone(),
            scale: self.scale * s,
            memo: RwLock::new(Vec::new()),
        })
    }

    /// `Σ_{ℓ≤degree} coeff(ℓ) ν^ℓ`, a truncated Taylor sum in the scaled parameter.
    pub fn partial_sum(&self, nu: f64, degree: usize) -> CsrMatrix {
        let coeffs: Vec<Arc<CsrMatrix>> = (0..=degree).map(|l| self.coeff(l)).collect();
        let parts: Vec<(f64, &CsrMatrix)> = coeffs
            .iter()
            .enumerate()
            .map(|(l, c)| (nu.powi(l as i32), c.as_ref()))
            .collect();
        CsrMatrix::linear_combination(self.n, self.n, &parts)
    }
}
