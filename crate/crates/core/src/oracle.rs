//! Brute-force references for testing: explicit truncated companion
//! matrices, dense flexible GMRES, dense eigenvalues and direct solves.
//!
//! Everything here is dense and cubic; dimensions are capped.

use num_complex::Complex64;

use crate::error::{Error, InnerSolveError, Result};
use crate::lstsq::Hessenberg;
use crate::sparse::{BandedLu, CsrMatrix};
use crate::taylor::TaylorMatrixFunction;

pub const DEFAULT_CAP: usize = 20_000;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Dense {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_csr(a: &CsrMatrix) -> Self {
        let mut m = Self::zeros(a.nrows(), a.ncols());
        for (r, c, v) in a.triplets() {
            m[(r, c)] = v;
        }
        m
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|r| self.row(r).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows);
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let orow = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a != 0.0 {
                    for (o, b) in orow.iter_mut().zip(other.row(k)) {
                        *o += a * b;
                    }
                }
            }
        }
        out
    }

    /// Copies `block` into position `(r0, c0)`.
    pub fn set_block(&mut self, r0: usize, c0: usize, block: &Dense) {
        for r in 0..block.rows {
            let dst = (r0 + r) * self.cols + c0;
            self.data[dst..dst + block.cols].copy_from_slice(block.row(r));
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| alpha * v).collect(),
        }
    }
}

impl std::ops::Index<(usize, usize)> for Dense {
    type Output = f64;
    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        &self.data[r * self.cols + c]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Dense {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }
}

/// Dense LU with partial pivoting.
#[derive(Debug, Clone)]
pub struct DenseLu {
    lu: Dense,
    perm: Vec<usize>,
}

impl DenseLu {
    pub fn factor(a: &Dense) -> Result<Self, InnerSolveError> {
        assert_eq!(a.rows, a.cols);
        let n = a.rows;
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let scale = a.max_abs();
        for k in 0..n {
            let p = (k..n)
                .max_by(|&x, &y| lu[(x, k)].abs().partial_cmp(&lu[(y, k)].abs()).unwrap())
                .unwrap();
            if lu[(p, k)] == 0.0 || lu[(p, k)].abs() <= f64::EPSILON * scale * 1e-3 {
                return Err(InnerSolveError::Singular { pivot: k });
            }
            if p != k {
                for c in 0..n {
                    lu.data.swap(k * n + c, p * n + c);
                }
                perm.swap(k, p);
            }
            let pivot = lu[(k, k)];
            let (upper, lower) = lu.data.split_at_mut((k + 1) * n);
            let prow = &upper[k * n + k + 1..k * n + n];
            for r in 0..n - k - 1 {
                let row = &mut lower[r * n..(r + 1) * n];
                let f = row[k] / pivot;
                row[k] = f;
                if f != 0.0 {
                    for (x, y) in row[k + 1..].iter_mut().zip(prow) {
                        *x -= f * y;
                    }
                }
            }
        }
        Ok(Self { lu, perm })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.lu.rows;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let s: f64 = (0..i).map(|j| self.lu[(i, j)] * x[j]).sum();
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|j| self.lu[(i, j)] * x[j]).sum();
            x[i] = (x[i] - s) / self.lu[(i, i)];
        }
        x
    }

    pub fn inverse(&self) -> Dense {
        let n = self.lu.rows;
        let mut inv = Dense::zeros(n, n);
        let mut e = vec![0.0; n];
        for c in 0..n {
            e[c] = 1.0;
            let col = self.solve(&e);
            e[c] = 0.0;
            for r in 0..n {
                inv[(r, c)] = col[r];
            }
        }
        inv
    }
}

/// `K_m`, `M_m` and `c_m` of the truncated companion linearization.
#[derive(Debug, Clone)]
pub struct ExplicitCompanion {
    pub n: usize,
    pub m: usize,
    pub k: Dense,
    pub shift: Dense,
    pub c: Vec<f64>,
    /// Closed-form `K_m^{-1}`.
    pub k_inv: Option<Dense>,
}

/// Assembles the `(m+1)n`-dimensional companion matrices block by block.
pub fn build_explicit(
    problem: &TaylorMatrixFunction,
    b: &[f64],
    m: usize,
    cap: usize,
    with_inverse: bool,
) -> Result<ExplicitCompanion> {
    let n = problem.dim();
    let dim = (m + 1) * n;
    if dim > cap {
        return Err(Error::CapExceeded { dim, cap });
    }
    let mut k = Dense::zeros(dim, dim);
    let mut shift = Dense::zeros(dim, dim);
    let id = Dense::identity(n);
    let coeffs: Vec<Dense> = (0..=m).map(|l| Dense::from_csr(&problem.coeff(l))).collect();
    for (l, a) in coeffs.iter().enumerate() {
        k.set_block(0, l * n, a);
    }
    for l in 1..=m {
        k.set_block(l * n, l * n, &id);
        shift.set_block(l * n, (l - 1) * n, &id);
    }
    let mut c = vec![0.0; dim];
    c[..n].copy_from_slice(b);

    let k_inv = if with_inverse {
        let a0_inv = DenseLu::factor(&coeffs[0])?.inverse();
        let mut inv = Dense::zeros(dim, dim);
        inv.set_block(0, 0, &a0_inv);
        for l in 1..=m {
            inv.set_block(0, l * n, &a0_inv.matmul(&coeffs[l]).scaled(-1.0));
            inv.set_block(l * n, l * n, &id);
        }
        Some(inv)
    } else {
        None
    };
    Ok(ExplicitCompanion { n, m, k, shift, c, k_inv })
}

#[derive(Debug, Clone)]
pub struct FgmresResult {
    pub q: Vec<Vec<f64>>,
    pub z: Vec<Vec<f64>>,
    pub h: Hessenberg,
    /// `Z w` for the minimiser at the requested shift.
    pub x: Vec<f64>,
    /// `‖c − (K − μM) x‖`, computed densely.
    pub residual_norm: f64,
    pub breakdown: bool,
}

fn vdot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn vnorm(a: &[f64]) -> f64 {
    vdot(a, a).sqrt()
}

/// Flexible GMRES for `(K − μM) x = c`, right-preconditioned by per-step
/// approximations of `K^{-1}`: `z_i = inner(i, q_i)`, and the Arnoldi process
/// runs on `M z_i` with modified Gram-Schmidt applied twice.
pub fn dense_fgmres<F>(ex: &ExplicitCompanion, mu: f64, steps: usize, mut inner: F) -> FgmresResult
where
    F: FnMut(usize, &[f64]) -> Vec<f64>,
{
    let c_norm = vnorm(&ex.c);
    let mut q = vec![ex.c.iter().map(|v| v / c_norm).collect::<Vec<_>>()];
    let mut z = Vec::new();
    let mut h = Hessenberg::new();
    let mut breakdown = false;
    for i in 1..=steps {
        let zi = inner(i, &q[i - 1]);
        let mut y = ex.shift.matvec(&zi);
        let y_norm = vnorm(&y);
        let mut col = vec![0.0; i + 1];
        for _ in 0..2 {
            for (k, qk) in q.iter().enumerate() {
                let d = vdot(qk, &y);
                col[k] += d;
                for (yv, qv) in y.iter_mut().zip(qk) {
                    *yv -= d * qv;
                }
            }
        }
        let beta = vnorm(&y);
        z.push(zi);
        if beta <= 1e-14 * y_norm {
            col[i] = 0.0;
            h.push_column(col).unwrap();
            breakdown = true;
            break;
        }
        col[i] = beta;
        h.push_column(col).unwrap();
        q.push(y.iter().map(|v| v / beta).collect());
    }

    let j = h.ncols();
    let shifted = h.shifted_dense(mu);
    let mut rhs = vec![0.0; j + 1];
    rhs[0] = c_norm;
    let w = householder_lstsq(&shifted, &rhs);
    let dim = ex.c.len();
    let mut x = vec![0.0; dim];
    for (zk, wk) in z.iter().zip(&w) {
        for (xv, zv) in x.iter_mut().zip(zk) {
            *xv += wk * zv;
        }
    }
    let kx = ex.k.matvec(&x);
    let mx = ex.shift.matvec(&x);
    let r: Vec<f64> = (0..dim).map(|i| ex.c[i] - kx[i] + mu * mx[i]).collect();
    FgmresResult {
        q,
        z,
        h,
        x,
        residual_norm: vnorm(&r),
        breakdown,
    }
}

/// Least squares for a tall full-rank row-major matrix by Householder QR.
pub fn householder_lstsq(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let m = a.len();
    let n = if m == 0 { 0 } else { a[0].len() };
    let mut r: Vec<Vec<f64>> = a.to_vec();
    let mut y = b.to_vec();
    for k in 0..n {
        let alpha_norm: f64 = (k..m).map(|i| r[i][k] * r[i][k]).sum::<f64>().sqrt();
        if alpha_norm == 0.0 {
            continue;
        }
        let alpha = if r[k][k] > 0.0 { -alpha_norm } else { alpha_norm };
        let mut v: Vec<f64> = (k..m).map(|i| r[i][k]).collect();
        v[0] -= alpha;
        let vn2: f64 = v.iter().map(|x| x * x).sum();
        if vn2 == 0.0 {
            continue;
        }
        for c in k..n {
            let s: f64 = (k..m).map(|i| v[i - k] * r[i][c]).sum::<f64>() * 2.0 / vn2;
            for i in k..m {
                r[i][c] -= s * v[i - k];
            }
        }
        let s: f64 = (k..m).map(|i| v[i - k] * y[i]).sum::<f64>() * 2.0 / vn2;
        for i in k..m {
            y[i] -= s * v[i - k];
        }
    }
    let mut x = vec![0.0; n];
    for k in (0..n).rev() {
        let s: f64 = (k + 1..n).map(|c| r[k][c] * x[c]).sum();
        x[k] = (y[k] - s) / r[k][k];
    }
    x
}

/// Eigenvalues of `M_m K_m^{-1}`, largest modulus first.
///
/// `M K^{-1}` is similar to `K^{-1} M`, a block companion matrix whose last
/// block column vanishes; those `n` zero eigenvalues are appended directly
/// and the remaining `m n` come from a dense Hessenberg QR.
pub fn companion_spectrum(problem: &TaylorMatrixFunction, m: usize, cap: usize) -> Result<Vec<Complex64>> {
    let n = problem.dim();
    let dim = (m + 1) * n;
    if dim > cap {
        return Err(Error::CapExceeded { dim, cap });
    }
    let mut eig = Vec::with_capacity(dim);
    if m > 0 {
        let a0 = DenseLu::factor(&Dense::from_csr(&problem.coeff(0)))?;
        let mn = m * n;
        let mut c = Dense::zeros(mn, mn);
        for l in 1..=m {
            let al = Dense::from_csr(&problem.coeff(l));
            for col in 0..n {
                let rhs: Vec<f64> = (0..n).map(|r| al[(r, col)]).collect();
                let sol = a0.solve(&rhs);
                for r in 0..n {
                    c[(r, (l - 1) * n + col)] = -sol[r];
                }
            }
        }
        for r in n..mn {
            c[(r, r - n)] = 1.0;
        }
        eig = eigenvalues(c);
    }
    eig.extend(std::iter::repeat_n(Complex64::new(0.0, 0.0), n));
    eig.sort_by(|a, b| b.norm().partial_cmp(&a.norm()).unwrap());
    Ok(eig)
}

/// Eigenvalues of a general real square matrix.
pub fn eigenvalues(mut a: Dense) -> Vec<Complex64> {
    hessenberg_reduce(&mut a);
    hqr(&mut a)
}

/// Householder reduction to upper Hessenberg form, in place.
pub fn hessenberg_reduce(a: &mut Dense) {
    let n = a.rows;
    let mut v = vec![0.0; n];
    let mut w = vec![0.0; n];
    for k in 0..n.saturating_sub(2) {
        let x_norm: f64 = (k + 1..n).map(|i| a[(i, k)] * a[(i, k)]).sum::<f64>().sqrt();
        if x_norm == 0.0 {
            continue;
        }
        let alpha = if a[(k + 1, k)] > 0.0 { -x_norm } else { x_norm };
        for i in k + 1..n {
            v[i] = a[(i, k)];
        }
        v[k + 1] -= alpha;
        let vn2: f64 = (k + 1..n).map(|i| v[i] * v[i]).sum();
        if vn2 == 0.0 {
            continue;
        }
        let tau = 2.0 / vn2;
        // left: A ← (I − τ v vᵀ) A on rows k+1.., columns k..
        w[k..n].iter_mut().for_each(|x| *x = 0.0);
        for i in k + 1..n {
            let vi = v[i];
            let row = &a.data[i * n + k..(i + 1) * n];
            for (wj, aij) in w[k..n].iter_mut().zip(row) {
                *wj += vi * aij;
            }
        }
        for i in k + 1..n {
            let f = tau * v[i];
            let row = &mut a.data[i * n + k..(i + 1) * n];
            for (aij, wj) in row.iter_mut().zip(&w[k..n]) {
                *aij -= f * wj;
            }
        }
        // right: A ← A (I − τ v vᵀ) on all rows, columns k+1..
        for i in 0..n {
            let row = &mut a.data[i * n + k + 1..(i + 1) * n];
            let s: f64 = row.iter().zip(&v[k + 1..n]).map(|(x, y)| x * y).sum();
            let f = tau * s;
            for (aij, vj) in row.iter_mut().zip(&v[k + 1..n]) {
                *aij -= f * vj;
            }
        }
        a[(k + 1, k)] = alpha;
        for i in k + 2..n {
            a[(i, k)] = 0.0;
        }
    }
}

/// Francis double-shift QR on an upper Hessenberg matrix (eigenvalues only).
pub fn hqr(a: &mut Dense) -> Vec<Complex64> {
    let n = a.rows;
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    if n == 0 {
        return out;
    }
    let anorm: f64 = (0..n)
        .map(|i| (i.saturating_sub(1)..n).map(|j| a[(i, j)].abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let mut nn = n as isize - 1;
    let mut t = 0.0;
    while nn >= 0 {
        let mut its = 0;
        loop {
            let nu = nn as usize;
            let mut l = nu;
            while l >= 1 {
                let s = a[(l - 1, l - 1)].abs() + a[(l, l)].abs();
                let s = if s == 0.0 { anorm } else { s };
                if a[(l, l - 1)].abs() <= f64::EPSILON * s {
                    a[(l, l - 1)] = 0.0;
                    break;
                }
                l -= 1;
            }
            let x = a[(nu, nu)];
            if l == nu {
                out[nu] = Complex64::new(x + t, 0.0);
                nn -= 1;
                break;
            }
            let y = a[(nu - 1, nu - 1)];
            let w = a[(nu, nu - 1)] * a[(nu - 1, nu)];
            if l + 1 == nu {
                let pp = 0.5 * (y - x);
                let qq = pp * pp + w;
                let z = qq.abs().sqrt();
                let xx = x + t;
                if qq >= 0.0 {
                    let z = pp + z.copysign(pp);
                    let e1 = xx + z;
                    let e2 = if z != 0.0 { xx - w / z } else { e1 };
                    out[nu - 1] = Complex64::new(e1, 0.0);
                    out[nu] = Complex64::new(e2, 0.0);
                } else {
                    out[nu - 1] = Complex64::new(xx + pp, z);
                    out[nu] = Complex64::new(xx + pp, -z);
                }
                nn -= 2;
                break;
            }
            if its == 60 * n.max(1) {
                panic!("QR iteration did not converge");
            }
            let (mut x, mut y, mut w) = (x, y, w);
            if its > 0 && its % 10 == 0 {
                t += x;
                for i in 0..=nu {
                    a[(i, i)] -= x;
                }
                let s = a[(nu, nu - 1)].abs() + a[(nu - 1, nu - 2)].abs();
                x = 0.75 * s;
                y = x;
                w = -0.4375 * s * s;
            }
            its += 1;
            let mut m = nu - 2;
            let (mut p, mut q, mut r);
            loop {
                let z = a[(m, m)];
                let rr = x - z;
                let ss = y - z;
                p = (rr * ss - w) / a[(m + 1, m)] + a[(m, m + 1)];
                q = a[(m + 1, m + 1)] - z - rr - ss;
                r = a[(m + 2, m + 1)];
                let s = p.abs() + q.abs() + r.abs();
                p /= s;
                q /= s;
                r /= s;
                if m == l {
                    break;
                }
                let u = a[(m, m - 1)].abs() * (q.abs() + r.abs());
                let v = p.abs() * (a[(m - 1, m - 1)].abs() + z.abs() + a[(m + 1, m + 1)].abs());
                if u <= f64::EPSILON * v {
                    break;
                }
                m -= 1;
            }
            for i in m + 2..=nu {
                a[(i, i - 2)] = 0.0;
                if i != m + 2 {
                    a[(i, i - 3)] = 0.0;
                }
            }
            let mut k = m;
            while k < nu {
                if k != m {
                    p = a[(k, k - 1)];
                    q = a[(k + 1, k - 1)];
                    r = if k + 1 != nu { a[(k + 2, k - 1)] } else { 0.0 };
                    x = p.abs() + q.abs() + r.abs();
                    if x != 0.0 {
                        p /= x;
                        q /= x;
                        r /= x;
                    }
                }
                let s = (p * p + q * q + r * r).sqrt().copysign(p);
                if s != 0.0 {
                    if k == m {
                        if l != m {
                            a[(k, k - 1)] = -a[(k, k - 1)];
                        }
                    } else {
                        a[(k, k - 1)] = -s * x;
                    }
                    p += s;
                    x = p / s;
                    y = q / s;
                    let z = r / s;
                    q /= p;
                    r /= p;
                    let third = k + 1 != nu;
                    for j in k..=nu {
                        let mut pp = a[(k, j)] + q * a[(k + 1, j)];
                        if third {
                            pp += r * a[(k + 2, j)];
                            a[(k + 2, j)] -= pp * z;
                        }
                        a[(k + 1, j)] -= pp * y;
                        a[(k, j)] -= pp * x;
                    }
                    let mmin = if nu < k + 3 { nu } else { k + 3 };
                    for i in l..=mmin {
                        let mut pp = x * a[(i, k)] + y * a[(i, k + 1)];
                        if third {
                            pp += z * a[(i, k + 2)];
                            a[(i, k + 2)] -= pp * r;
                        }
                        a[(i, k + 1)] -= pp * q;
                        a[(i, k)] -= pp;
                    }
                }
                k += 1;
            }
        }
    }
    out
}

/// Reference `A(μ)^{-1} b` from the closed-form evaluator.
pub fn direct_solve(problem: &TaylorMatrixFunction, b: &[f64], mu: f64) -> Result<Vec<f64>> {
    let a = problem.eval(mu)?;
    Ok(BandedLu::factor(&a)?.solve(b))
}

/// Same as [`direct_solve`] through a dense LU, independent of the banded code.
pub fn dense_direct_solve(problem: &TaylorMatrixFunction, b: &[f64], mu: f64) -> Result<Vec<f64>> {
    let a = Dense::from_csr(&problem.eval(mu)?);
    Ok(DenseLu::factor(&a)?.solve(b))
}
