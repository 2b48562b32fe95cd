//! The outer loop: one Arnoldi basis for the companion operator, shared by
//! every parameter value, with inner tolerances relaxed as the residual at
//! the reference parameter decreases.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::companion::{apply_kinv, shift_down, BlockVector};
use crate::error::{Error, Result};
use crate::inner::{self, InnerConfig, InnerKind, InnerSolveReport, InnerTolerance};
use crate::lstsq::{shifted_least_squares, smallest_shifted_singular_value, Hessenberg, ShiftedQr};
use crate::solution::ParameterizedSolution;
use crate::sparse::norm;
use crate::taylor::TaylorMatrixFunction;

/// How the constant `ℓ` in `eps_inner = ℓ ε / ‖r̃_{i−1}‖` is chosen.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EllPolicy {
    /// `ℓ` from the configuration, 1 by default.
    #[default]
    Fixed,
    /// `ℓ = σ_min(I̲ − ν_ref H̲)/j`, with `H̲` and `j` from a first pass using
    /// exact inner solves.
    Strict,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Reorth {
    /// Every Gram-Schmidt pass is repeated once.
    #[default]
    Twice,
    /// Repeat only when the projected norm drops below `eta` times the input.
    Dgks { eta: f64 },
}

pub const DGKS_ETA: f64 = std::f64::consts::FRAC_1_SQRT_2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub j_max: usize,
    pub eps: f64,
    pub ell_policy: EllPolicy,
    pub ell: f64,
    /// Reference parameter in the original (unscaled) parameterization.
    pub mu_ref: f64,
    pub reorth: Reorth,
    pub stop_rel_res: Option<f64>,
    pub inner: InnerConfig,
    pub keep_full_ztilde: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            j_max: 50,
            eps: 1e-10,
            ell_policy: EllPolicy::Fixed,
            ell: 1.0,
            mu_ref: 0.0,
            reorth: Reorth::Twice,
            stop_rel_res: None,
            inner: InnerConfig::default(),
            keep_full_ztilde: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.j_max == 0 {
            return bad("j_max must be at least 1");
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return bad("eps must be positive and finite");
        }
        if !(self.ell > 0.0 && self.ell.is_finite()) {
            return bad("ell must be positive and finite");
        }
        if !self.mu_ref.is_finite() {
            return bad("mu_ref must be finite");
        }
        if let Some(t) = self.stop_rel_res {
            if !(t > 0.0) {
                return bad("stop_rel_res must be positive");
            }
        }
        if let Reorth::Dgks { eta } = self.reorth {
            if !(eta > 0.0 && eta < 1.0) {
                return bad("reorth.eta must lie in (0, 1)");
            }
        }
        if self.inner.max_it == 0 {
            return bad("inner.max_it must be at least 1");
        }
        if !(self.inner.saturation > 0.0 && self.inner.saturation <= 1.0) {
            return bad("inner.saturation must lie in (0, 1]");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iter: usize,
    pub rel_res_exact: f64,
    pub eps_inner: f64,
    pub p_norm: f64,
    pub inner_iters: usize,
    pub elapsed_s: f64,
}

pub const TRACE_HEADER: [&str; 6] = ["iter", "rel_res_exact", "eps_inner", "p_norm", "inner_iters", "elapsed_s"];

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub rows: Vec<TraceRow>,
}

/// Q, Z̃ and H̲ of the shifted inexact Arnoldi relation `M Z̃ = Q H̲`.
#[derive(Debug, Clone)]
pub struct KrylovFactorization {
    /// Column `i` (0-based) has `i + 1` active blocks.
    pub q: Vec<BlockVector>,
    /// First blocks of the columns of Z̃.
    pub z_first: Vec<Vec<f64>>,
    /// All active blocks of Z̃, when requested.
    pub z_full: Option<Vec<BlockVector>>,
    pub h: Hessenberg,
    pub c_norm: f64,
    pub reports: Vec<InnerSolveReport>,
}

#[derive(Debug, Clone)]
pub struct Run {
    pub solution: ParameterizedSolution,
    pub factorization: KrylovFactorization,
    pub trace: RunTrace,
    pub converged: bool,
    pub breakdown: bool,
    /// The `ℓ` actually used for the tolerances.
    pub ell: f64,
}

impl Run {
    pub fn iterations(&self) -> usize {
        self.factorization.h.ncols()
    }

    pub fn final_rel_res(&self) -> f64 {
        self.trace.rows.last().map_or(1.0, |r| r.rel_res_exact)
    }
}

/// Inner tolerance for the next iteration; `None` when the previous exact
/// residual is zero and no further inner solve is needed.
pub fn eps_inner(r_prev_norm: f64, ell: f64, eps: f64) -> Option<f64> {
    (r_prev_norm > 0.0).then(|| ell * eps / r_prev_norm)
}

/// Norm of the exact residual for parameter `nu` (in the scaled
/// parameterization) from the Hessenberg matrix alone.
pub fn exact_residual_norm(h: &Hessenberg, nu: f64, c_norm: f64) -> f64 {
    crate::lstsq::shifted_residual_norm(h, nu, c_norm)
}

/// Gram-Schmidt result: coefficients, the norm of the projected vector, and
/// the normalised new direction unless the step broke down.
#[derive(Debug, Clone)]
pub struct Orthogonalized {
    pub h: Vec<f64>,
    pub beta: f64,
    pub q_new: Option<BlockVector>,
}

/// Relative size of `β` below which the new direction is considered to lie
/// in the span of the basis.
pub const BREAKDOWN_TOL: f64 = 1e-14;

/// Classical Gram-Schmidt of `y` against the orthonormal columns `q`, with
/// the pass repeated according to `reorth`.
pub fn orthogonalize(y: &BlockVector, q: &[BlockVector], reorth: Reorth) -> Orthogonalized {
    let y_norm = y.norm();
    let mut v = y.clone();
    let mut h = vec![0.0; q.len()];
    let pass = |v: &mut BlockVector, h: &mut [f64]| {
        let coeffs: Vec<f64> = q.iter().map(|qk| qk.dot(v)).collect();
        for (qk, &c) in q.iter().zip(&coeffs) {
            v.axpy(-c, qk);
        }
        for (hk, c) in h.iter_mut().zip(coeffs) {
            *hk += c;
        }
    };
    pass(&mut v, &mut h);
    let repeat = match reorth {
        Reorth::Twice => true,
        Reorth::Dgks { eta } => v.norm() < eta * y_norm,
    };
    if repeat {
        pass(&mut v, &mut h);
    }
    let beta = v.norm();
    if beta <= BREAKDOWN_TOL * y_norm || beta == 0.0 {
        return Orthogonalized { h, beta, q_new: None };
    }
    v.scale(1.0 / beta);
    Orthogonalized { h, beta, q_new: Some(v) }
}

/// Runs the method on `problem` (whose scale is honoured) with right-hand
/// side `b`.
pub fn run(problem: &TaylorMatrixFunction, b: &[f64], config: &SolverConfig) -> Result<Run> {
    config.validate()?;
    match config.ell_policy {
        EllPolicy::Fixed => run_with_ell(problem, b, config, config.ell),
        EllPolicy::Strict => {
            let ell = strict_ell(problem, b, config)?;
            let mut second = config.clone();
            second.j_max = ell.1;
            run_with_ell(problem, b, &second, ell.0)
        }
    }
}

/// First pass of the strict policy: exact inner solves, returning `ℓ` and the
/// number of iterations it should be applied to.
pub fn strict_ell(problem: &TaylorMatrixFunction, b: &[f64], config: &SolverConfig) -> Result<(f64, usize)> {
    let mut exact = config.clone();
    exact.inner = InnerConfig {
        kind: InnerKind::Lu,
        ..config.inner.clone()
    };
    exact.keep_full_ztilde = false;
    let first = run_with_ell(problem, b, &exact, config.ell)?;
    let j = first.iterations();
    let nu_ref = config.mu_ref / problem.scale();
    let sigma = smallest_shifted_singular_value(&first.factorization.h, nu_ref);
    Ok((sigma / j as f64, j))
}

fn run_with_ell(problem: &TaylorMatrixFunction, b: &[f64], config: &SolverConfig, ell: f64) -> Result<Run> {
    let start = Instant::now();
    let n = problem.dim();
    if b.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: b.len(),
        });
    }
    let c_norm = norm(b);
    if c_norm == 0.0 || !c_norm.is_finite() {
        return Err(Error::ZeroRhs);
    }
    let mut solver = inner::build(problem.coeff(0), &config.inner)?;
    let nu_ref = config.mu_ref / problem.scale();

    let q1 = BlockVector::from_flat(n, b.iter().map(|v| v / c_norm).collect())?;
    let mut q = vec![q1];
    let mut z_first = Vec::new();
    let mut z_full = config.keep_full_ztilde.then(Vec::new);
    let mut h = Hessenberg::new();
    let mut reports = Vec::new();
    let mut trace = RunTrace::default();
    let mut tracker = ShiftedQr::new(nu_ref, c_norm);
    let mut r_prev = c_norm;
    let mut tol_prev = None;
    let mut breakdown = false;
    let mut stopped = false;

    for i in 1..=config.j_max {
        let Some(tol) = eps_inner(r_prev, ell, config.eps) else {
            break;
        };
        let tolerance = InnerTolerance {
            current: tol,
            previous: tol_prev.unwrap_or(tol),
        };
        tol_prev = Some(tol);
        let (z, report) = match apply_kinv(&q[i - 1], problem, solver.as_mut(), tolerance, i) {
            Ok(v) => v,
            Err(Error::InnerSolve { iteration, source, .. }) => {
                return Err(Error::InnerSolve {
                    iteration,
                    source,
                    trace: Box::new(trace),
                })
            }
            Err(e) => return Err(e),
        };
        let y = shift_down(&z);
        let orth = orthogonalize(&y, &q, config.reorth);
        let beta = if orth.q_new.is_some() { orth.beta } else { 0.0 };
        let mut col = orth.h;
        col.push(beta);
        tracker.push(&col);
        h.push_column(col)?;
        let r = tracker.residual_norm();

        trace.rows.push(TraceRow {
            iter: i,
            rel_res_exact: r / c_norm,
            eps_inner: tol,
            p_norm: report.p_norm,
            inner_iters: report.inner_iterations,
            elapsed_s: start.elapsed().as_secs_f64(),
        });
        reports.push(report);
        z_first.push(z.block(0).to_vec());
        if let Some(full) = z_full.as_mut() {
            full.push(z);
        }
        match orth.q_new {
            Some(qn) => q.push(qn),
            None => {
                breakdown = true;
                break;
            }
        }
        r_prev = r;
        if config.stop_rel_res.is_some_and(|t| r / c_norm <= t) {
            stopped = true;
            break;
        }
    }

    let r_final = tracker.residual_norm();
    let converged = breakdown
        || r_final == 0.0
        || stopped
        || match config.stop_rel_res {
            Some(t) => r_final / c_norm <= t,
            None => r_final <= config.eps,
        };
    let factorization = KrylovFactorization {
        q,
        z_first,
        z_full,
        h,
        c_norm,
        reports,
    };
    let solution = ParameterizedSolution::from_factorization(
        &factorization,
        problem.scale(),
        config.mu_ref,
        config.eps,
        converged,
    );
    Ok(Run {
        solution,
        factorization,
        trace,
        converged,
        breakdown,
        ell,
    })
}

/// Decomposition of the companion residual at one parameter value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualSplit {
    /// `‖c − (K − νM) Z̃ w‖`, assembled block by block.
    pub true_norm: f64,
    /// `‖Q (e1 ‖c‖ − (I̲ − νH̲) w)‖`, the residual with exact preconditioning.
    pub exact_norm: f64,
    /// `‖r − r̃‖`, the contamination from inexact inner solves.
    pub delta: f64,
    /// Least-squares residual of the small problem.
    pub small_norm: f64,
}

impl KrylovFactorization {
    pub fn iterations(&self) -> usize {
        self.h.ncols()
    }

    /// The factorization as it stood after iteration `j`.
    pub fn prefix(&self, j: usize) -> Self {
        assert!(j >= 1 && j <= self.iterations(), "prefix length {j} out of range");
        Self {
            q: self.q[..(j + 1).min(self.q.len())].to_vec(),
            z_first: self.z_first[..j].to_vec(),
            z_full: self.z_full.as_ref().map(|z| z[..j].to_vec()),
            h: self.h.leading(j),
            c_norm: self.c_norm,
            reports: self.reports[..j].to_vec(),
        }
    }

    /// The blocks of `Z̃ w`, the companion-space iterate for the minimiser `w`.
    pub fn companion_iterate(&self, w: &[f64]) -> Option<BlockVector> {
        let full = self.z_full.as_ref()?;
        let n = self.z_first.first()?.len();
        let mut v = BlockVector::zeros(n, full.last()?.num_blocks());
        for (zk, &wk) in full.iter().zip(w) {
            v.axpy(wk, zk);
        }
        Some(v)
    }

    /// Splits the residual at `mu` (original parameterization) into its
    /// exact-preconditioning part and the inexactness part. Needs the full Z̃.
    pub fn residual_split(&self, problem: &TaylorMatrixFunction, b: &[f64], mu: f64) -> Result<ResidualSplit> {
        let nu = mu / problem.scale();
        let (w, small_norm) = shifted_least_squares(&self.h, nu, self.c_norm)?;
        let v = self
            .companion_iterate(&w)
            .ok_or_else(|| Error::InvalidConfig("residual split needs keep_full_ztilde".into()))?;
        let n = problem.dim();
        let j = v.num_blocks();

        let mut r = BlockVector::zeros(n, j + 1);
        let r0 = r.block_mut(0);
        r0.copy_from_slice(b);
        for ell in 0..j {
            problem.coeff(ell).matvec_add(-1.0, v.block(ell), r0);
        }
        for ell in 1..=j {
            let blk: Vec<f64> = (0..n)
                .map(|k| {
                    let cur = if ell < j { v.block(ell)[k] } else { 0.0 };
                    nu * v.block(ell - 1)[k] - cur
                })
                .collect();
            r.block_mut(ell).copy_from_slice(&blk);
        }

        let jc = self.h.ncols();
        let mut g = vec![0.0; jc + 1];
        g[0] = self.c_norm;
        for (col, &wc) in w.iter().enumerate() {
            for (row, &hv) in self.h.column(col).iter().enumerate() {
                let shifted = if row == col { 1.0 } else { 0.0 } - nu * hv;
                g[row] -= shifted * wc;
            }
        }
        let mut r_exact = BlockVector::zeros(n, j + 1);
        for (qk, &gk) in self.q.iter().zip(&g) {
            r_exact.axpy(gk, qk);
        }
        let mut diff = r.clone();
        diff.axpy(-1.0, &r_exact);
        Ok(ResidualSplit {
            true_norm: r.norm(),
            exact_norm: r_exact.norm(),
            delta: diff.norm(),
            small_norm,
        })
    }
}
