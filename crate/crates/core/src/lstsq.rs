//! Small dense kernels on the Hessenberg matrix: shifted least squares by
//! Givens rotations and singular values by one-sided Jacobi.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `(j+1) × j` upper Hessenberg matrix stored by columns; column `i` holds
/// rows `0..=i+1` only, so entries below the subdiagonal do not exist.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Hessenberg {
    columns: Vec<Vec<f64>>,
}

impl Hessenberg {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends column `j` (0-based) from its `j+2` leading entries.
    pub fn push_column(&mut self, column: Vec<f64>) -> Result<()> {
        let expected = self.columns.len() + 2;
        if column.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                got: column.len(),
            });
        }
        self.columns.push(column);
        Ok(())
    }

    /// Number of columns `j`.
    pub fn ncols(&self) -> usize {
        self.columns.len()
    }

    pub fn nrows(&self) -> usize {
        self.columns.len() + 1
    }

    pub fn column(&self, i: usize) -> &[f64] {
        &self.columns[i]
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.columns[col].get(row).copied().unwrap_or(0.0)
    }

    /// The leading `(k+1) × k` block.
    pub fn leading(&self, k: usize) -> Self {
        Self {
            columns: self.columns[..k].to_vec(),
        }
    }

    /// Row-major dense copy, `(j+1) × j`.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let j = self.ncols();
        (0..=j).map(|r| (0..j).map(|c| self.get(r, c)).collect()).collect()
    }

    /// Row-major dense `I̲ − ν H̲`, where `I̲` is the identity with a zero row appended.
    pub fn shifted_dense(&self, nu: f64) -> Vec<Vec<f64>> {
        let mut d = self.to_dense();
        for (r, row) in d.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = if r == c { 1.0 } else { 0.0 } - nu * *v;
            }
        }
        d
    }
}

#[derive(Debug, Clone, Copy)]
struct Givens {
    c: f64,
    s: f64,
}

impl Givens {
    fn new(a: f64, b: f64) -> (Self, f64) {
        if b == 0.0 {
            (Self { c: 1.0, s: 0.0 }, a)
        } else {
            let r = a.hypot(b);
            (Self { c: a / r, s: b / r }, r)
        }
    }

    fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        (self.c * x + self.s * y, -self.s * x + self.c * y)
    }
}

/// Incremental QR of `I̲ − ν H̲` for one fixed shift. Each appended column
/// costs `O(j)`, and the least-squares residual for the right-hand side
/// `e1 · c_norm` is available after every step.
#[derive(Debug, Clone)]
pub struct ShiftedQr {
    nu: f64,
    rotations: Vec<Givens>,
    /// Upper-triangular factor by columns.
    r: Vec<Vec<f64>>,
    /// Rotated right-hand side, one entry longer than `r`.
    g: Vec<f64>,
    max_col_norm: f64,
}

impl ShiftedQr {
    pub fn new(nu: f64, c_norm: f64) -> Self {
        Self {
            nu,
            rotations: Vec::new(),
            r: Vec::new(),
            g: vec![c_norm],
            max_col_norm: 0.0,
        }
    }

    /// Adds the next Hessenberg column (`k+2` entries for column `k`).
    pub fn push(&mut self, h_col: &[f64]) {
        let k = self.r.len();
        debug_assert_eq!(h_col.len(), k + 2);
        let mut col: Vec<f64> = h_col.iter().map(|v| -self.nu * v).collect();
        col[k] += 1.0;
        self.max_col_norm = self.max_col_norm.max(col.iter().map(|v| v * v).sum::<f64>().sqrt());
        for (i, rot) in self.rotations.iter().enumerate() {
            let (x, y) = rot.apply(col[i], col[i + 1]);
            col[i] = x;
            col[i + 1] = y;
        }
        let (rot, rkk) = Givens::new(col[k], col[k + 1]);
        col[k] = rkk;
        col.truncate(k + 1);
        let (gk, gk1) = rot.apply(self.g[k], 0.0);
        self.g[k] = gk;
        self.g.push(gk1);
        self.rotations.push(rot);
        self.r.push(col);
    }

    pub fn ncols(&self) -> usize {
        self.r.len()
    }

    /// Least-squares residual norm for the columns pushed so far.
    pub fn residual_norm(&self) -> f64 {
        self.g.last().copied().unwrap_or(0.0).abs()
    }

    fn rank_deficient(&self) -> bool {
        let tol = f64::EPSILON * self.max_col_norm.max(1.0) * (self.r.len().max(1) as f64);
        self.r.iter().enumerate().any(|(k, col)| col[k].abs() <= tol)
    }

    /// Back substitution for the minimiser.
    pub fn solve(&self) -> Result<Vec<f64>> {
        if self.rank_deficient() {
            return Err(Error::RankDeficient { mu: self.nu });
        }
        let j = self.r.len();
        let mut w = self.g[..j].to_vec();
        for k in (0..j).rev() {
            w[k] /= self.r[k][k];
            let wk = w[k];
            for (i, wi) in w.iter_mut().enumerate().take(k) {
                *wi -= self.r[k][i] * wk;
            }
        }
        Ok(w)
    }
}

/// `argmin_w ‖(I̲ − ν H̲) w − e1 c_norm‖` and the attained residual norm.
///
/// Fails with [`Error::RankDeficient`] (reporting `ν`) when the shifted matrix
/// is numerically rank deficient.
pub fn shifted_least_squares(h: &Hessenberg, nu: f64, c_norm: f64) -> Result<(Vec<f64>, f64)> {
    let qr = shifted_qr(h, nu, c_norm);
    Ok((qr.solve()?, qr.residual_norm()))
}

/// Residual norm of the shifted least-squares problem. With no columns this
/// is `c_norm`. Rank deficiency does not affect the residual.
pub fn shifted_residual_norm(h: &Hessenberg, nu: f64, c_norm: f64) -> f64 {
    shifted_qr(h, nu, c_norm).residual_norm()
}

fn shifted_qr(h: &Hessenberg, nu: f64, c_norm: f64) -> ShiftedQr {
    let mut qr = ShiftedQr::new(nu, c_norm);
    for i in 0..h.ncols() {
        qr.push(h.column(i));
    }
    qr
}

/// Singular values of a row-major dense matrix, descending, by one-sided
/// Jacobi rotations on the columns.
pub fn singular_values(a: &[Vec<f64>]) -> Vec<f64> {
    let m = a.len();
    let n = if m == 0 { 0 } else { a[0].len() };
    let mut cols: Vec<Vec<f64>> = (0..n).map(|c| (0..m).map(|r| a[r][c]).collect()).collect();
    for _sweep in 0..60 {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in p + 1..n {
                let alpha: f64 = cols[p].iter().map(|v| v * v).sum();
                let beta: f64 = cols[q].iter().map(|v| v * v).sum();
                let gamma: f64 = cols[p].iter().zip(&cols[q]).map(|(x, y)| x * y).sum();
                if gamma == 0.0 {
                    continue;
                }
                let rel = gamma.abs() / (alpha * beta).sqrt();
                off = off.max(rel);
                if rel <= f64::EPSILON {
                    continue;
                }
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let (left, right) = cols.split_at_mut(q);
                for (x, y) in left[p].iter_mut().zip(right[0].iter_mut()) {
                    let (xp, yq) = (*x, *y);
                    *x = c * xp - s * yq;
                    *y = s * xp + c * yq;
                }
            }
        }
        if off <= f64::EPSILON {
            break;
        }
    }
    let mut sv: Vec<f64> = cols.iter().map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
    sv
}

/// Smallest singular value of `I̲ − ν H̲`.
pub fn smallest_shifted_singular_value(h: &Hessenberg, nu: f64) -> f64 {
    singular_values(&h.shifted_dense(nu)).last().copied().unwrap_or(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn hessenberg(cols: &[Vec<f64>]) -> Hessenberg {
        let mut h = Hessenberg::new();
        for c in cols {
            h.push_column(c.clone()).unwrap();
        }
        h
    }

    /// Normal-equations reference for the tiny least-squares problem.
    fn normal_equations(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
        let n = a[0].len();
        let mut m: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let mut row: Vec<f64> = (0..n).map(|j| a.iter().map(|r| r[i] * r[j]).sum()).collect();
                row.push(a.iter().zip(b).map(|(r, bi)| r[i] * bi).sum());
                row
            })
            .collect();
        for k in 0..n {
            let p = (k..n).max_by(|&x, &y| m[x][k].abs().partial_cmp(&m[y][k].abs()).unwrap()).unwrap();
            m.swap(k, p);
            for i in k + 1..n {
                let f = m[i][k] / m[k][k];
                for j in k..=n {
                    m[i][j] -= f * m[k][j];
                }
            }
        }
        let mut x = vec![0.0; n];
        for k in (0..n).rev() {
            let s: f64 = (k + 1..n).map(|j| m[k][j] * x[j]).sum();
            x[k] = (m[k][n] - s) / m[k][k];
        }
        x
    }

    #[test]
    fn structure_rejects_wrong_length() {
        let mut h = Hessenberg::new();
        assert!(h.push_column(vec![1.0]).is_err());
        h.push_column(vec![1.0, 2.0]).unwrap();
        assert_eq!(h.get(2, 0), 0.0);
        assert_eq!(h.to_dense(), vec![vec![1.0], vec![2.0]]);
    }

    #[test]
    fn zero_shift_is_trivial() {
        let h = hessenberg(&[vec![0.3, 0.7], vec![0.1, 0.2, 0.5]]);
        let (w, res) = shifted_least_squares(&h, 0.0, 2.5).unwrap();
        assert_eq!(w, vec![2.5, 0.0]);
        assert_eq!(res, 0.0);
    }

    #[test]
    fn empty_basis_residual_is_c_norm() {
        assert_eq!(shifted_residual_norm(&Hessenberg::new(), 0.4, 3.0), 3.0);
    }

    #[test]
    fn singular_values_of_padded_identity() {
        let h = hessenberg(&[vec![0.3, 0.7], vec![0.1, 0.2, 0.5]]);
        let sv = singular_values(&h.shifted_dense(0.0));
        assert!(sv.iter().all(|s| (s - 1.0).abs() < 1e-15));
    }

    #[test]
    fn singular_values_known() {
        let a = vec![vec![3.0, 0.0], vec![0.0, -2.0], vec![0.0, 0.0]];
        assert_eq!(singular_values(&a), vec![3.0, 2.0]);
        let b = vec![vec![1.0, 1.0], vec![1.0, 1.0]];
        let sv = singular_values(&b);
        assert!((sv[0] - 2.0).abs() < 1e-15 && sv[1].abs() < 1e-15);
    }

    #[test]
    fn rank_deficiency_reports_shift() {
        // ν H̲ = I̲ on the first column makes it vanish
        let h = hessenberg(&[vec![2.0, 0.0]]);
        match shifted_least_squares(&h, 0.5, 1.0) {
            Err(Error::RankDeficient { mu }) => assert_eq!(mu, 0.5),
            other => panic!("{other:?}"),
        }
    }

    proptest! {
        #[test]
        fn givens_matches_normal_equations(
            entries in proptest::collection::vec(-1.0f64..1.0, 20),
            nu in -0.5f64..0.5,
            c_norm in 0.1f64..10.0,
        ) {
            let j = 5;
            let mut cols = Vec::new();
            let mut it = entries.iter();
            for k in 0..j {
                cols.push((0..k + 2).map(|_| *it.next().unwrap_or(&0.2)).collect::<Vec<_>>());
            }
            let h = hessenberg(&cols);
            let (w, res) = shifted_least_squares(&h, nu, c_norm).unwrap();
            let a = h.shifted_dense(nu);
            let mut rhs = vec![0.0; j + 1];
            rhs[0] = c_norm;
            let w_ref = normal_equations(&a, &rhs);
            for (x, y) in w.iter().zip(&w_ref) {
                prop_assert!((x - y).abs() <= 1e-9 * (1.0 + y.abs()));
            }
            let r: f64 = a.iter().zip(&rhs).map(|(row, bi)| {
                let ax: f64 = row.iter().zip(&w).map(|(p, q)| p * q).sum();
                (bi - ax).powi(2)
            }).sum::<f64>().sqrt();
            prop_assert!((r - res).abs() <= 1e-12 * c_norm);
        }

        #[test]
        fn residual_is_nonincreasing(entries in proptest::collection::vec(-2.0f64..2.0, 36), nu in -1.0f64..1.0) {
            let mut qr = ShiftedQr::new(nu, 1.0);
            let mut it = entries.iter();
            let mut prev = 1.0;
            for k in 0..7 {
                let col: Vec<f64> = (0..k + 2).map(|_| *it.next().unwrap_or(&0.1)).collect();
                qr.push(&col);
                prop_assert!(qr.residual_norm() <= prev * (1.0 + 1e-15));
                prev = qr.residual_norm();
            }
        }
    }
}
