//! Companion-space vectors and the structured action of `M K^{-1}`.
//!
//! A companion vector is an infinite sequence of length-`n` blocks of which
//! only a finite prefix can be nonzero. Nothing here ever depends on a
//! truncation length.

use crate::error::{Error, Result};
use crate::inner::{InnerSolveReport, InnerSolver, InnerTolerance};
use crate::sparse::{axpy, dot, norm};
use crate::taylor::TaylorMatrixFunction;

/// Active blocks `w0, w1, …, w_{k-1}` stored contiguously, followed by an
/// implicit zero tail.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockVector {
    block_size: usize,
    data: Vec<f64>,
}

impl BlockVector {
    pub fn zeros(block_size: usize, num_blocks: usize) -> Self {
        assert!(block_size > 0, "block size must be positive");
        Self {
            block_size,
            data: vec![0.0; block_size * num_blocks],
        }
    }

    pub fn from_blocks(block_size: usize, blocks: &[Vec<f64>]) -> Result<Self> {
        let mut out = Self::zeros(block_size, 0);
        for b in blocks {
            out.push_block(b)?;
        }
        Ok(out)
    }

    /// Reinterprets a flat vector; its length must be a multiple of `block_size`.
    pub fn from_flat(block_size: usize, data: Vec<f64>) -> Result<Self> {
        if block_size == 0 || !data.len().is_multiple_of(block_size) {
            return Err(Error::DimensionMismatch {
                expected: block_size,
                got: data.len(),
            });
        }
        Ok(Self { block_size, data })
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    pub fn num_blocks(&self) -> usize {
        self.data.len() / self.block_size
    }

    pub fn block(&self, k: usize) -> &[f64] {
        &self.data[k * self.block_size..(k + 1) * self.block_size]
    }

    pub fn block_mut(&mut self, k: usize) -> &mut [f64] {
        let n = self.block_size;
        &mut self.data[k * n..(k + 1) * n]
    }

    pub fn blocks(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.block_size)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    pub fn push_block(&mut self, block: &[f64]) -> Result<()> {
        if block.len() != self.block_size {
            return Err(Error::DimensionMismatch {
                expected: self.block_size,
                got: block.len(),
            });
        }
        self.data.extend_from_slice(block);
        Ok(())
    }

    /// Dense vector of `total_blocks` blocks; blocks past the active ones are
    /// exact zeros. Panics if `total_blocks` would drop active blocks.
    pub fn to_dense(&self, total_blocks: usize) -> Vec<f64> {
        assert!(total_blocks >= self.num_blocks(), "cannot truncate active blocks");
        let mut out = self.data.clone();
        out.resize(total_blocks * self.block_size, 0.0);
        out
    }

    /// Inner product over the common active prefix; the tails contribute zero.
    pub fn dot(&self, other: &Self) -> f64 {
        debug_assert_eq!(self.block_size, other.block_size);
        let len = self.data.len().min(other.data.len());
        dot(&self.data[..len], &other.data[..len])
    }

    pub fn norm(&self) -> f64 {
        norm(&self.data)
    }

    /// `self += alpha · x`. `x` may not have more active blocks than `self`.
    pub fn axpy(&mut self, alpha: f64, x: &Self) {
        assert!(x.data.len() <= self.data.len(), "axpy would grow the active support");
        axpy(alpha, &x.data, &mut self.data[..x.data.len()]);
    }

    pub fn scale(&mut self, alpha: f64) {
        self.data.iter_mut().for_each(|v| *v *= alpha);
    }

    /// Drops trailing blocks that are exactly zero.
    pub fn trim(&mut self) {
        while self.num_blocks() > 0 && self.block(self.num_blocks() - 1).iter().all(|&v| v == 0.0) {
            let new_len = self.data.len() - self.block_size;
            self.data.truncate(new_len);
        }
    }

    /// Number of active blocks of a padded dense vector, counting up to the
    /// last nonzero entry.
    pub fn active_blocks_of_dense(block_size: usize, dense: &[f64]) -> usize {
        match dense.iter().rposition(|&v| v != 0.0) {
            Some(idx) => idx / block_size + 1,
            None => 0,
        }
    }
}

/// Selects blocks `w1, …, w_{m_active−1}` of a block vector, which is the
/// action of the truncated down-shift on the remainder of `K^{-1}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShiftMatrixView {
    pub m_active: usize,
}

impl ShiftMatrixView {
    pub fn apply(&self, w: &BlockVector) -> BlockVector {
        let n = w.block_size();
        let mut out = BlockVector::zeros(n, 0);
        for k in 1..self.m_active {
            if k < w.num_blocks() {
                out.data.extend_from_slice(w.block(k));
            } else {
                out.data.resize(out.data.len() + n, 0.0);
            }
        }
        out
    }
}

/// Structured `K^{-1} q` with an approximate `A0^{-1}`.
///
/// For `q = [w0, …, w_{i−1}]` the result is `[w̃, w1, …, w_{i−1}]` where
/// `w̃ ≈ A0^{-1}(w0 − Σ_{ℓ≥1} A_ℓ w_ℓ)`. The returned report carries the
/// inner residual norm recomputed with one extra product by `A0`.
pub fn apply_kinv(
    q: &BlockVector,
    coeffs: &TaylorMatrixFunction,
    inner: &mut dyn InnerSolver,
    tol: InnerTolerance,
    iteration: usize,
) -> Result<(BlockVector, InnerSolveReport)> {
    let n = coeffs.dim();
    if q.block_size() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: q.block_size(),
        });
    }
    let i = q.num_blocks();
    if i == 0 {
        return Err(Error::EmptyBlockVector);
    }

    let mut rhs = q.block(0).to_vec();
    for ell in 1..i {
        coeffs.coeff(ell).matvec_add(-1.0, q.block(ell), &mut rhs);
    }
    let a0 = coeffs.coeff(0);
    let outcome = inner.solve(&rhs, tol, iteration).map_err(|source| Error::InnerSolve {
        iteration,
        source,
        trace: Box::default(),
    })?;
    let w_tilde = outcome.solution;
    let mut p = a0.matvec(&w_tilde);
    axpy(-1.0, &rhs, &mut p);

    let mut z = BlockVector::zeros(n, 0);
    z.data.reserve(i * n);
    z.data.extend_from_slice(&w_tilde);
    z.data.extend_from_slice(ShiftMatrixView { m_active: i }.apply(q).as_flat());

    let report = InnerSolveReport {
        iteration,
        eps_inner: tol.current,
        p_norm: norm(&p),
        inner_iterations: outcome.iterations,
        matvecs: outcome.matvecs,
        kind: inner.kind(),
        substituted: outcome.substituted,
    };
    Ok((z, report))
}

/// The action of `M`: prepends a zero block.
pub fn shift_down(z: &BlockVector) -> BlockVector {
    let n = z.block_size();
    let mut data = Vec::with_capacity(z.data.len() + n);
    data.resize(n, 0.0);
    data.extend_from_slice(&z.data);
    BlockVector { block_size: n, data }
}

/// `M K^{-1} q`; the result has one more active block than `q`.
pub fn apply_mkinv(
    q: &BlockVector,
    coeffs: &TaylorMatrixFunction,
    inner: &mut dyn InnerSolver,
    tol: InnerTolerance,
    iteration: usize,
) -> Result<(BlockVector, InnerSolveReport)> {
    let (z, report) = apply_kinv(q, coeffs, inner, tol, iteration)?;
    Ok((shift_down(&z), report))
}
