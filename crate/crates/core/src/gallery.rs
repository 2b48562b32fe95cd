//! Built-in problem families at desk scale.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::sparse::CsrMatrix;
use crate::taylor::{ScalarFunction, TaylorMatrixFunction, Term};

pub const DEFAULT_DELAY_BANDWIDTH: usize = 5;
pub const DEFAULT_HELMHOLTZ_ALPHA: f64 = 30.0;

/// The matrices behind [`time_delay`], for callers that need them directly.
#[derive(Debug, Clone)]
pub struct DelayMatrices {
    pub a0: CsrMatrix,
    pub a1: CsrMatrix,
    pub b: Vec<f64>,
}

fn random_banded(n: usize, bandwidth: usize, rng: &mut ChaCha8Rng, diag_shift: f64) -> CsrMatrix {
    let scale = 1.0 / bandwidth.max(1) as f64;
    let mut t = Vec::new();
    for i in 0..n {
        let lo = i.saturating_sub(bandwidth);
        let hi = (i + bandwidth).min(n - 1);
        for j in lo..=hi {
            let mut v = rng.gen_range(-1.0..=1.0) * scale;
            if i == j {
                v += diag_shift;
            }
            t.push((i, j, v));
        }
    }
    CsrMatrix::from_triplets(n, n, &t)
}

pub fn delay_matrices(n: usize, bandwidth: usize, seed: u64) -> DelayMatrices {
    assert!(n >= 2, "time-delay problem needs n >= 2");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a0 = random_banded(n, bandwidth, &mut rng, 2.0 * bandwidth as f64);
    let a1 = random_banded(n, bandwidth, &mut rng, 0.0);
    let b = (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect();
    DelayMatrices { a0, a1, b }
}

/// `A(μ) = −μI + A0 + A1 e^{−μ}` with seeded random banded `A0`, `A1`.
pub fn time_delay(n: usize, bandwidth: usize, seed: u64) -> (TaylorMatrixFunction, Vec<f64>) {
    let DelayMatrices { a0, a1, b } = delay_matrices(n, bandwidth, seed);
    let terms = vec![
        Term {
            matrix: Arc::new(CsrMatrix::identity(n)),
            function: ScalarFunction::Poly(vec![0.0, -1.0]),
        },
        Term {
            matrix: Arc::new(a0),
            function: ScalarFunction::Poly(vec![1.0]),
        },
        Term {
            matrix: Arc::new(a1),
            function: ScalarFunction::Exp(-1.0),
        },
    ];
    let f = TaylorMatrixFunction::from_terms(n, terms).expect("consistent dimensions");
    (f, b)
}

/// Material coefficient `k(x)`.
pub fn helmholtz_k(x1: f64, alpha: f64) -> f64 {
    let w = if x1 < 0.5 { x1 } else { 1.0 - x1 };
    1.0 + w * (alpha * PI * x1).sin()
}

pub fn helmholtz_beta(x1: f64) -> f64 {
    (2.0 * PI * x1).sin()
}

pub fn helmholtz_load(x1: f64, alpha: f64) -> f64 {
    (-alpha * x1).exp()
}

/// Five-point finite differences for
/// `(∇² + μ(1 + μ k)² + sin(μ) β) u = h` on the unit square with zero
/// Dirichlet data, `grid` interior points per side, `x1` varying fastest.
///
/// The system is multiplied by `−h²`, so `A0` is the `[4, −1]` stencil and
/// the other terms are diagonal:
/// `A(μ) = A0 + μ A1 + 2μ² A2 + μ³ A3 + sin(μ) A4`.
pub fn helmholtz_fd(grid: usize, alpha: f64) -> (TaylorMatrixFunction, Vec<f64>) {
    assert!(grid >= 2, "grid must have at least 2 points per side");
    let n = grid * grid;
    let h = 1.0 / (grid + 1) as f64;
    let h2 = h * h;
    let x1_of = |idx: usize| ((idx % grid) + 1) as f64 * h;

    let mut t = Vec::with_capacity(5 * n);
    for j in 0..grid {
        for i in 0..grid {
            let k = j * grid + i;
            t.push((k, k, 4.0));
            if i > 0 {
                t.push((k, k - 1, -1.0));
            }
            if i + 1 < grid {
                t.push((k, k + 1, -1.0));
            }
            if j > 0 {
                t.push((k, k - grid, -1.0));
            }
            if j + 1 < grid {
                t.push((k, k + grid, -1.0));
            }
        }
    }
    let a0 = CsrMatrix::from_triplets(n, n, &t);
    let diag = |f: &dyn Fn(f64) -> f64| CsrMatrix::from_diagonal(&(0..n).map(|k| -h2 * f(x1_of(k))).collect::<Vec<_>>());
    let a1 = diag(&|_| 1.0);
    let a2 = diag(&|x| helmholtz_k(x, alpha));
    let a3 = diag(&|x| helmholtz_k(x, alpha).powi(2));
    let a4 = diag(&helmholtz_beta);
    let b = (0..n).map(|k| -h2 * helmholtz_load(x1_of(k), alpha)).collect();

    let term = |m: CsrMatrix, function: ScalarFunction| Term {
        matrix: Arc::new(m),
        function,
    };
    let terms = vec![
        term(a0, ScalarFunction::Poly(vec![1.0])),
        term(a1, ScalarFunction::Poly(vec![0.0, 1.0])),
        term(a2, ScalarFunction::Poly(vec![0.0, 0.0, 2.0])),
        term(a3, ScalarFunction::Poly(vec![0.0, 0.0, 0.0, 1.0])),
        term(a4, ScalarFunction::Sin(1.0)),
    ];
    (TaylorMatrixFunction::from_terms(n, terms).expect("consistent dimensions"), b)
}

/// Loads a file-backed family; see [`crate::manifest`].
pub fn from_manifest(path: &std::path::Path) -> Result<(TaylorMatrixFunction, Vec<f64>)> {
    crate::manifest::load(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inner::direct_solve;
    use crate::sparse::residual_norm;

    fn max_abs_diff(a: &CsrMatrix, b: &CsrMatrix) -> f64 {
        let (da, db) = (a.to_dense(), b.to_dense());
        da.iter()
            .flatten()
            .zip(db.iter().flatten())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn delay_coefficients() {
        let d = delay_matrices(30, 3, 11);
        let (f, _) = time_delay(30, 3, 11);
        let sum = CsrMatrix::linear_combination(30, 30, &[(1.0, &d.a0), (1.0, &d.a1)]);
        assert_eq!(max_abs_diff(&f.coeff(0), &sum), 0.0);
        let c1 = CsrMatrix::linear_combination(30, 30, &[(-1.0, &CsrMatrix::identity(30)), (-1.0, &d.a1)]);
        assert_eq!(max_abs_diff(&f.coeff(1), &c1), 0.0);
        assert!(max_abs_diff(&f.coeff(5), &d.a1.scaled(-1.0 / 120.0)) < 1e-18);
    }

    #[test]
    fn delay_is_seeded() {
        let (f, b) = time_delay(20, 2, 5);
        let (g, c) = time_delay(20, 2, 5);
        assert_eq!(*f.coeff(0), *g.coeff(0));
        assert_eq!(*f.coeff(1), *g.coeff(1));
        assert_eq!(b, c);
        let (h, _) = time_delay(20, 2, 6);
        assert_ne!(*f.coeff(0), *h.coeff(0));
        assert_eq!(f.coeff(0).bandwidths(), (2, 2));
    }

    #[test]
    fn delay_direct_solve_large() {
        let (f, b) = time_delay(1000, DEFAULT_DELAY_BANDWIDTH, 1);
        let a = f.coeff(0);
        let x = direct_solve(&a, &b).unwrap();
        assert!(residual_norm(&a, &x, &b) <= 1e-10 * crate::sparse::norm(&b));
    }

    #[test]
    fn helmholtz_coefficients() {
        let (f, _) = helmholtz_fd(8, DEFAULT_HELMHOLTZ_ALPHA);
        let terms = f.terms().unwrap();
        let a = |k: usize| &*terms[k].matrix;
        assert_eq!(*f.coeff(0), *a(0));
        assert!(a(0).is_symmetric(0.0));
        assert!(a(0).diagonal().iter().all(|&d| d > 0.0));
        assert!(max_abs_diff(&f.coeff(2), &a(2).scaled(2.0)) < 1e-18);
        let c3 = CsrMatrix::linear_combination(64, 64, &[(1.0, a(3)), (-1.0 / 6.0, a(4))]);
        assert!(max_abs_diff(&f.coeff(3), &c3) < 1e-18);
        assert!(max_abs_diff(&f.coeff(7), &a(4).scaled(-1.0 / 5040.0)) < 1e-20);
        assert!(direct_solve(&f.coeff(0), &vec![1.0; 64]).is_ok());
    }

    #[test]
    fn helmholtz_k_profile() {
        assert_eq!(helmholtz_k(0.0, 30.0), 1.0);
        assert!((helmholtz_k(0.25, 30.0) - (1.0 + 0.25 * (7.5 * PI).sin())).abs() < 1e-15);
        assert!((helmholtz_k(0.75, 30.0) - (1.0 + 0.25 * (22.5 * PI).sin())).abs() < 1e-15);
    }
}
