//! Approximate actions of `A0^{-1}`.
//!
//! Every solver receives the current inner tolerance `eps_inner`, an absolute
//! bound for the inner residual `‖A0 w̃ − rhs‖`, together with the previous
//! iteration's value. The outer iteration recomputes the residual itself, so a
//! solver's own bookkeeping is never trusted.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::InnerSolveError;
use crate::sparse::{axpy, dot, norm, BandedLu, CsrMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InnerKind {
    Lu,
    Bicgstab,
    IdentityThenBicgstab,
    Perturbed,
}

impl InnerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Lu => "lu",
            Self::Bicgstab => "bicgstab",
            Self::IdentityThenBicgstab => "identity_then_bicgstab",
            Self::Perturbed => "perturbed",
        }
    }
}

/// Tolerance handed to BiCGSTAB.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TolPolicy {
    /// Relative tolerance `eps_inner` of the previous outer iteration, capped
    /// so the absolute residual never exceeds the current `eps_inner`.
    #[default]
    Lagged,
    /// Absolute residual target equal to the current `eps_inner`.
    Current,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerTolerance {
    /// `eps_inner` of this outer iteration.
    pub current: f64,
    /// `eps_inner` of the previous outer iteration (equal to `current` on the first).
    pub previous: f64,
}

impl InnerTolerance {
    pub fn fixed(eps_inner: f64) -> Self {
        Self {
            current: eps_inner,
            previous: eps_inner,
        }
    }
}

/// Inner solver selection, as it appears in run configurations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InnerConfig {
    pub kind: InnerKind,
    pub tol_policy: TolPolicy,
    pub max_it: usize,
    pub seed: u64,
    /// Jacobi preconditioning for BiCGSTAB.
    pub jacobi: bool,
    /// Fraction of the inner tolerance targeted by the perturbed solver.
    pub saturation: f64,
}

impl Default for InnerConfig {
    fn default() -> Self {
        Self {
            kind: InnerKind::Lu,
            tol_policy: TolPolicy::Lagged,
            max_it: 5000,
            seed: 0,
            jacobi: false,
            saturation: DEFAULT_SATURATION,
        }
    }
}

/// Rounding in `A0 w̃ − rhs` is relative to `‖rhs‖`, not to the target, so
/// aiming exactly at the bound would overshoot it about half the time.
pub const DEFAULT_SATURATION: f64 = 0.999;

#[derive(Debug, Clone, PartialEq)]
pub struct InnerOutcome {
    pub solution: Vec<f64>,
    pub iterations: usize,
    /// Products with `A0` spent inside the solver.
    pub matvecs: usize,
    /// The identity was accepted in place of a solve.
    pub substituted: bool,
}

/// What one outer iteration asked of its inner solve and what it got.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InnerSolveReport {
    pub iteration: usize,
    pub eps_inner: f64,
    /// Exact `‖A0 w̃ − rhs‖`, recomputed outside the solver.
    pub p_norm: f64,
    pub inner_iterations: usize,
    pub matvecs: usize,
    pub kind: InnerKind,
    pub substituted: bool,
}

pub trait InnerSolver: Send {
    fn kind(&self) -> InnerKind;

    /// Returns `w̃` with `‖A0 w̃ − rhs‖ ≤ tol.current` on success.
    fn solve(&mut self, rhs: &[f64], tol: InnerTolerance, iteration: usize) -> Result<InnerOutcome, InnerSolveError>;
}

/// Builds the configured solver for `a0`.
pub fn build(a0: Arc<CsrMatrix>, config: &InnerConfig) -> Result<Box<dyn InnerSolver>, InnerSolveError> {
    Ok(match config.kind {
        InnerKind::Lu => Box::new(DirectSolver::new(&a0)?),
        InnerKind::Bicgstab => Box::new(BicgstabSolver::new(a0, config.max_it, config.jacobi, config.tol_policy)),
        InnerKind::IdentityThenBicgstab => Box::new(IdentityThenBicgstab::new(
            a0,
            config.max_it,
            config.jacobi,
            config.tol_policy,
        )),
        InnerKind::Perturbed => {
            Box::new(PerturbedExactSolver::new(a0, config.seed, config.saturation)?)
        }
    })
}

/// Exact solves with an LU factorization computed once.
#[derive(Debug, Clone)]
pub struct DirectSolver {
    lu: BandedLu,
}

impl DirectSolver {
    pub fn new(a0: &CsrMatrix) -> Result<Self, InnerSolveError> {
        Ok(Self { lu: BandedLu::factor(a0)? })
    }
}

impl InnerSolver for DirectSolver {
    fn kind(&self) -> InnerKind {
        InnerKind::Lu
    }

    fn solve(&mut self, rhs: &[f64], _tol: InnerTolerance, _iteration: usize) -> Result<InnerOutcome, InnerSolveError> {
        Ok(InnerOutcome {
            solution: self.lu.solve(rhs),
            iterations: 0,
            matvecs: 0,
            substituted: false,
        })
    }
}

/// One-shot `A0^{-1} rhs` by banded LU.
pub fn direct_solve(a0: &CsrMatrix, rhs: &[f64]) -> Result<Vec<f64>, InnerSolveError> {
    Ok(BandedLu::factor(a0)?.solve(rhs))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BicgstabResult {
    pub solution: Vec<f64>,
    /// True relative residual `‖A0 x − rhs‖ / ‖rhs‖` at exit.
    pub relative_residual: f64,
    pub iterations: usize,
    pub matvecs: usize,
    pub converged: bool,
}

/// Unpreconditioned BiCGSTAB from a zero initial guess.
///
/// Stops when the relative residual is at most `tol` or after `max_it`
/// iterations; `converged` tells which. Breakdowns are errors.
pub fn bicgstab_solve(
    a0: &CsrMatrix,
    rhs: &[f64],
    tol: f64,
    max_it: usize,
) -> Result<BicgstabResult, InnerSolveError> {
    bicgstab(a0, rhs, tol, max_it, None)
}

/// Right-preconditioned BiCGSTAB; `inv_diag` enables Jacobi scaling.
///
/// The recursively updated residual drifts from the true one, so convergence
/// is confirmed against `rhs − A0 x` and the iteration restarts from `x` when
/// the two disagree.
fn bicgstab(
    a: &CsrMatrix,
    b: &[f64],
    tol: f64,
    max_it: usize,
    inv_diag: Option<&[f64]>,
) -> Result<BicgstabResult, InnerSolveError> {
    let n = b.len();
    let b_norm = norm(b);
    let mut x = vec![0.0; n];
    if b_norm == 0.0 || tol >= 1.0 {
        return Ok(BicgstabResult {
            solution: x,
            relative_residual: if b_norm == 0.0 { 0.0 } else { 1.0 },
            iterations: 0,
            matvecs: 0,
            converged: true,
        });
    }
    let threshold = tol * b_norm;
    let precondition = |v: &[f64]| -> Vec<f64> {
        match inv_diag {
            Some(d) => v.iter().zip(d).map(|(a, b)| a * b).collect(),
            None => v.to_vec(),
        }
    };

    let mut iterations = 0;
    let mut matvecs = 0;
    let mut r = b.to_vec();
    let mut true_res = b_norm;
    const RESTARTS: usize = 5;
    for _ in 0..RESTARTS {
        let r_hat = r.clone();
        let mut p = vec![0.0; n];
        let mut v = vec![0.0; n];
        let (mut rho_old, mut alpha, mut omega) = (1.0, 1.0, 1.0);
        let mut t = vec![0.0; n];
        let mut s = vec![0.0; n];

        while iterations < max_it {
            iterations += 1;
            let rho = dot(&r_hat, &r);
            if rho.abs() <= f64::MIN_POSITIVE || rho.abs() < 1e-300 * b_norm * b_norm {
                return Err(InnerSolveError::Breakdown { quantity: "rho", iterations });
            }
            let beta = (rho / rho_old) * (alpha / omega);
            for i in 0..n {
                p[i] = r[i] + beta * (p[i] - omega * v[i]);
            }
            let p_hat = precondition(&p);
            a.matvec_into(&p_hat, &mut v);
            matvecs += 1;
            let denom = dot(&r_hat, &v);
            if denom == 0.0 {
                return Err(InnerSolveError::Breakdown { quantity: "r_hat·v", iterations });
            }
            alpha = rho / denom;
            for i in 0..n {
                s[i] = r[i] - alpha * v[i];
            }
            if norm(&s) <= threshold {
                axpy(alpha, &p_hat, &mut x);
                r.copy_from_slice(&s);
                break;
            }
            let s_hat = precondition(&s);
            a.matvec_into(&s_hat, &mut t);
            matvecs += 1;
            let tt = dot(&t, &t);
            if tt == 0.0 {
                return Err(InnerSolveError::Breakdown { quantity: "omega", iterations });
            }
            omega = dot(&t, &s) / tt;
            if omega == 0.0 {
                return Err(InnerSolveError::Breakdown { quantity: "omega", iterations });
            }
            for i in 0..n {
                x[i] += alpha * p_hat[i] + omega * s_hat[i];
                r[i] = s[i] - omega * t[i];
            }
            rho_old = rho;
            if norm(&r) <= threshold {
                break;
            }
        }

        let ax = a.matvec(&x);
        matvecs += 1;
        for i in 0..n {
            r[i] = b[i] - ax[i];
        }
        true_res = norm(&r);
        if true_res <= threshold || iterations >= max_it {
            break;
        }
    }
    Ok(BicgstabResult {
        solution: x,
        relative_residual: true_res / b_norm,
        iterations,
        matvecs,
        converged: true_res <= threshold,
    })
}

/// BiCGSTAB with the tolerance chosen by a [`TolPolicy`].
#[derive(Debug, Clone)]
pub struct BicgstabSolver {
    a0: Arc<CsrMatrix>,
    max_it: usize,
    inv_diag: Option<Vec<f64>>,
    policy: TolPolicy,
}

impl BicgstabSolver {
    pub fn new(a0: Arc<CsrMatrix>, max_it: usize, jacobi: bool, policy: TolPolicy) -> Self {
        let inv_diag = jacobi.then(|| {
            a0.diagonal()
                .into_iter()
                .map(|d| if d != 0.0 { 1.0 / d } else { 1.0 })
                .collect()
        });
        Self {
            a0,
            max_it,
            inv_diag,
            policy,
        }
    }
}

impl InnerSolver for BicgstabSolver {
    fn kind(&self) -> InnerKind {
        InnerKind::Bicgstab
    }

    fn solve(&mut self, rhs: &[f64], tol: InnerTolerance, _iteration: usize) -> Result<InnerOutcome, InnerSolveError> {
        let rhs_norm = norm(rhs);
        let target = match self.policy {
            TolPolicy::Current => tol.current,
            TolPolicy::Lagged => (tol.previous * rhs_norm).min(tol.current),
        };
        let tol = if rhs_norm > 0.0 { target / rhs_norm } else { 1.0 };
        let res = bicgstab(&self.a0, rhs, tol, self.max_it, self.inv_diag.as_deref())?;
        if !res.converged {
            return Err(InnerSolveError::NotConverged {
                achieved: res.relative_residual,
                tol,
                iterations: res.iterations,
            });
        }
        Ok(InnerOutcome {
            solution: res.solution,
            iterations: res.iterations,
            matvecs: res.matvecs,
            substituted: false,
        })
    }
}

/// Proposes `w̃ = rhs` and accepts it only when `‖(A0 − I) rhs‖ ≤ eps_inner`.
/// Returns the accepted vector together with its inner-residual norm.
pub fn identity_substitute(a0: &CsrMatrix, rhs: &[f64], eps_inner: f64) -> Option<(Vec<f64>, f64)> {
    let mut p = a0.matvec(rhs);
    axpy(-1.0, rhs, &mut p);
    let p_norm = norm(&p);
    (p_norm <= eps_inner).then(|| (rhs.to_vec(), p_norm))
}

/// Tries [`identity_substitute`] first and falls back to BiCGSTAB.
#[derive(Debug, Clone)]
pub struct IdentityThenBicgstab {
    fallback: BicgstabSolver,
}

impl IdentityThenBicgstab {
    pub fn new(a0: Arc<CsrMatrix>, max_it: usize, jacobi: bool, policy: TolPolicy) -> Self {
        Self {
            fallback: BicgstabSolver::new(a0, max_it, jacobi, policy),
        }
    }
}

impl InnerSolver for IdentityThenBicgstab {
    fn kind(&self) -> InnerKind {
        InnerKind::IdentityThenBicgstab
    }

    fn solve(&mut self, rhs: &[f64], tol: InnerTolerance, iteration: usize) -> Result<InnerOutcome, InnerSolveError> {
        if let Some((solution, _)) = identity_substitute(&self.fallback.a0, rhs, tol.current) {
            return Ok(InnerOutcome {
                solution,
                iterations: 0,
                matvecs: 1,
                substituted: true,
            });
        }
        let mut out = self.fallback.solve(rhs, tol, iteration)?;
        out.matvecs += 1;
        Ok(out)
    }
}

/// Seeded direction uniformly distributed on the unit sphere in `R^n`.
pub fn perturbation_direction(n: usize, seed: u64, stream: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    loop {
        let v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let nv = norm(&v);
        if nv > 0.0 {
            return v.into_iter().map(|x| x / nv).collect();
        }
    }
}

/// `A0^{-1} rhs + Δ` with the induced inner residual `A0 w̃ − rhs` equal to
/// `target_norm · u` for the seeded unit direction `u`.
///
/// The perturbation is scaled in residual space: `Δ` solves `A0 Δ = t u − r0`
/// where `r0` is the rounding residual of the exact solve.
pub fn perturbed_exact(
    lu: &BandedLu,
    a0: &CsrMatrix,
    rhs: &[f64],
    target_norm: f64,
    seed: u64,
    stream: u64,
) -> Vec<f64> {
    let mut x = lu.solve(rhs);
    if target_norm == 0.0 {
        return x;
    }
    let u = perturbation_direction(rhs.len(), seed, stream);
    let mut r0 = a0.matvec(&x);
    axpy(-1.0, rhs, &mut r0);
    let shift: Vec<f64> = u.iter().zip(&r0).map(|(ui, ri)| target_norm * ui - ri).collect();
    let delta = lu.solve(&shift);
    axpy(1.0, &delta, &mut x);
    x
}

/// Exact solves deliberately perturbed so the inner residual saturates a
/// fixed fraction of the requested target.
#[derive(Debug, Clone)]
pub struct PerturbedExactSolver {
    a0: Arc<CsrMatrix>,
    lu: BandedLu,
    seed: u64,
    saturation: f64,
}

impl PerturbedExactSolver {
    pub fn new(a0: Arc<CsrMatrix>, seed: u64, saturation: f64) -> Result<Self, InnerSolveError> {
        let lu = BandedLu::factor(&a0)?;
        Ok(Self { a0, lu, seed, saturation })
    }
}

impl InnerSolver for PerturbedExactSolver {
    fn kind(&self) -> InnerKind {
        InnerKind::Perturbed
    }

    fn solve(&mut self, rhs: &[f64], tol: InnerTolerance, iteration: usize) -> Result<InnerOutcome, InnerSolveError> {
        let t = if tol.current.is_finite() { self.saturation * tol.current } else { 0.0 };
        Ok(InnerOutcome {
            solution: perturbed_exact(&self.lu, &self.a0, rhs, t, self.seed, iteration as u64),
            iterations: 0,
            matvecs: 1,
            substituted: false,
        })
    }
}
