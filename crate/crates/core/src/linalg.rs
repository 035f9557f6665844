//! Banded direct solvers and a Jacobi-preconditioned conjugate gradient.
//!
//! Two banded layouts are used in the crate: a symmetric positive definite
//! band (lower triangle only) for the Darcy pressure system, and a general
//! band without pivoting for the diagonally dominant implicit time steps of
//! the 1D transport models.

use crate::error::{Error, Result};

/// Symmetric positive definite matrix stored as its lower band.
///
/// Entry `(i, j)` with `j <= i` and `i - j <= bandwidth` lives at
/// `data[i * (bandwidth + 1) + (i - j)]`.
#[derive(Debug, Clone)]
pub struct SymBand {
    n: usize,
    bandwidth: usize,
    data: Vec<f64>,
}

impl SymBand {
    pub fn zeros(n: usize, bandwidth: usize) -> Self {
        Self {
            n,
            bandwidth,
            data: vec![0.0; n * (bandwidth + 1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        debug_assert!(j <= i && i - j <= self.bandwidth);
        i * (self.bandwidth + 1) + (i - j)
    }

    /// Adds `v` to entry `(i, j)` (and implicitly to `(j, i)`).
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        let s = self.slot(r, c);
        self.data[s] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        if r - c > self.bandwidth {
            0.0
        } else {
            self.data[self.slot(r, c)]
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.data[self.slot(i, i)]).collect()
    }

    /// `y = A x`.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        assert_eq!(y.len(), self.n);
        y.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bandwidth);
            let row = &self.data[i * (self.bandwidth + 1)..(i + 1) * (self.bandwidth + 1)];
            y[i] += row[0] * x[i];
            for j in lo..i {
                let a = row[i - j];
                y[i] += a * x[j];
                y[j] += a * x[i];
            }
        }
    }

    /// In-place banded Cholesky factorization `A = L Lᵀ`.
    pub fn cholesky(mut self) -> Result<BandCholesky> {
        let w = self.bandwidth;
        for i in 0..self.n {
            let lo = i.saturating_sub(w);
            for j in lo..=i {
                let klo = lo.max(j.saturating_sub(w));
                let mut s = self.data[i * (w + 1) + (i - j)];
                for k in klo..j {
                    s -= self.data[i * (w + 1) + (i - k)] * self.data[j * (w + 1) + (j - k)];
                }
                if i == j {
                    if !(s > 0.0) || !s.is_finite() {
                        return Err(Error::Solver {
                            reason: format!("matrix not positive definite at row {i} (pivot {s:e})"),
                            residual: f64::NAN,
                            iterations: 0,
                        });
                    }
                    self.data[i * (w + 1)] = s.sqrt();
                } else {
                    self.data[i * (w + 1) + (i - j)] = s / self.data[j * (w + 1)];
                }
            }
        }
        Ok(BandCholesky { factor: self })
    }
}

#[derive(Debug, Clone)]
pub struct BandCholesky {
    factor: SymBand,
}

impl BandCholesky {
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let f = &self.factor;
        let w = f.bandwidth;
        assert_eq!(b.len(), f.n);
        for i in 0..f.n {
            let lo = i.saturating_sub(w);
            let mut s = b[i];
            for k in lo..i {
                s -= f.data[i * (w + 1) + (i - k)] * b[k];
            }
            b[i] = s / f.data[i * (w + 1)];
        }
        for i in (0..f.n).rev() {
            let hi = (i + w).min(f.n - 1);
            let mut s = b[i];
            for k in i + 1..=hi {
                s -= f.data[k * (w + 1) + (k - i)] * b[k];
            }
            b[i] = s / f.data[i * (w + 1)];
        }
    }
}

/// General banded matrix with `lower` sub- and `upper` super-diagonals.
///
/// Entry `(i, j)` lives at `data[i * (lower + upper + 1) + (j + lower - i)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BandMatrix {
    n: usize,
    lower: usize,
    upper: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, lower: usize, upper: usize) -> Self {
        Self {
            n,
            lower,
            upper,
            data: vec![0.0; n * (lower + upper + 1)],
        }
    }

    pub fn identity(n: usize, lower: usize, upper: usize) -> Self {
        let mut m = Self::zeros(n, lower, upper);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn lower(&self) -> usize {
        self.lower
    }

    pub fn upper(&self) -> usize {
        self.upper
    }

    #[inline]
    fn in_band(&self, i: usize, j: usize) -> bool {
        j + self.lower >= i && j <= i + self.upper
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        i * (self.lower + self.upper + 1) + (j + self.lower - i)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i < self.n && j < self.n && self.in_band(i, j) {
            self.data[self.slot(i, j)]
        } else {
            0.0
        }
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        assert!(self.in_band(i, j), "({i}, {j}) outside band");
        let s = self.slot(i, j);
        self.data[s] = v;
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        assert!(self.in_band(i, j), "({i}, {j}) outside band");
        let s = self.slot(i, j);
        self.data[s] += v;
    }

    /// `self + alpha * other`, both with identical band layout.
    pub fn axpy(&self, alpha: f64, other: &BandMatrix) -> BandMatrix {
        assert_eq!((self.n, self.lower, self.upper), (other.n, other.lower, other.upper));
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + alpha * b)
            .collect();
        BandMatrix {
            n: self.n,
            lower: self.lower,
            upper: self.upper,
            data,
        }
    }

    pub fn row_range(&self, i: usize) -> std::ops::RangeInclusive<usize> {
        i.saturating_sub(self.lower)..=(i + self.upper).min(self.n - 1)
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        assert_eq!(y.len(), self.n);
        for i in 0..self.n {
            y[i] = self.row_range(i).map(|j| self.data[self.slot(i, j)] * x[j]).sum();
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.get(i, j)).collect())
            .collect()
    }

    /// LU factorization without pivoting. Valid for the strictly diagonally
    /// dominant systems produced by implicit steps of M-matrix operators.
    pub fn lu(mut self) -> Result<BandLu> {
        let (n, kl, ku) = (self.n, self.lower, self.upper);
        for k in 0..n {
            let pivot = self.data[self.slot(k, k)];
            if pivot == 0.0 || !pivot.is_finite() {
                return Err(Error::Solver {
                    reason: format!("zero or non-finite pivot {pivot:e} at row {k}"),
                    residual: f64::NAN,
                    iterations: 0,
                });
            }
            for i in k + 1..=(k + kl).min(n - 1) {
                let si = self.slot(i, k);
                let l = self.data[si] / pivot;
                self.data[si] = l;
                if l == 0.0 {
                    continue;
                }
                for j in k + 1..=(k + ku).min(n - 1) {
                    let skj = self.slot(k, j);
                    let sij = self.slot(i, j);
                    self.data[sij] -= l * self.data[skj];
                }
            }
        }
        Ok(BandLu { factor: self })
    }
}

/// Unit-lower / upper factors of a [`BandMatrix`], stored in the same band.
#[derive(Debug, Clone)]
pub struct BandLu {
    factor: BandMatrix,
}

impl BandLu {
    pub fn dim(&self) -> usize {
        self.factor.n
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let f = &self.factor;
        let n = f.n;
        assert_eq!(b.len(), n);
        for i in 0..n {
            let mut s = b[i];
            for k in i.saturating_sub(f.lower)..i {
                s -= f.data[f.slot(i, k)] * b[k];
            }
            b[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in i + 1..=(i + f.upper).min(n - 1) {
                s -= f.data[f.slot(i, k)] * b[k];
            }
            b[i] = s / f.data[f.slot(i, i)];
        }
    }

    /// Solves `Aᵀ x = b` in place.
    pub fn solve_transpose_in_place(&self, b: &mut [f64]) {
        let f = &self.factor;
        let n = f.n;
        assert_eq!(b.len(), n);
        // Uᵀ z = b
        for i in 0..n {
            let mut s = b[i];
            for k in i.saturating_sub(f.upper)..i {
                s -= f.data[f.slot(k, i)] * b[k];
            }
            b[i] = s / f.data[f.slot(i, i)];
        }
        // Lᵀ x = z
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in i + 1..=(i + f.lower).min(n - 1) {
                s -= f.data[f.slot(k, i)] * b[k];
            }
            b[i] = s;
        }
    }
}

/// Outcome of an iterative solve.
#[derive(Debug, Clone, Copy)]
pub struct IterativeReport {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Conjugate gradient with diagonal (Jacobi) preconditioning.
///
/// `apply` computes `y = A x` for a symmetric positive definite `A`.
pub fn pcg<F>(
    apply: F,
    diagonal: &[f64],
    b: &[f64],
    x: &mut [f64],
    rel_tol: f64,
    max_iter: usize,
) -> Result<IterativeReport>
where
    F: Fn(&[f64], &mut [f64]),
{
    let n = b.len();
    let b_norm = norm(b);
    if b_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(IterativeReport {
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let inv_diag: Vec<f64> = diagonal.iter().map(|d| 1.0 / d).collect();
    let mut r = vec![0.0; n];
    apply(x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let mut rel = norm(&r) / b_norm;
    for it in 0..max_iter {
        if rel <= rel_tol {
            return Ok(IterativeReport {
                iterations: it,
                relative_residual: rel,
            });
        }
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::Solver {
                reason: "conjugate gradient breakdown (non-positive curvature)".into(),
                residual: rel,
                iterations: it,
            });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        rel = norm(&r) / b_norm;
    }
    if rel <= rel_tol {
        return Ok(IterativeReport {
            iterations: max_iter,
            relative_residual: rel,
        });
    }
    Err(Error::Solver {
        reason: "conjugate gradient did not converge".into(),
        residual: rel,
        iterations: max_iter,
    })
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_solve(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
        // Gaussian elimination with partial pivoting.
        let n = b.len();
        let mut m: Vec<Vec<f64>> = a.to_vec();
        let mut x = b.to_vec();
        for k in 0..n {
            let p = (k..n)
                .max_by(|&i, &j| m[i][k].abs().total_cmp(&m[j][k].abs()))
                .unwrap();
            m.swap(k, p);
            x.swap(k, p);
            for i in k + 1..n {
                let l = m[i][k] / m[k][k];
                for j in k..n {
                    m[i][j] -= l * m[k][j];
                }
                x[i] -= l * x[k];
            }
        }
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|j| m[i][j] * x[j]).sum();
            x[i] = (x[i] - s) / m[i][i];
        }
        x
    }

    fn laplacian_2d(nx: usize, ny: usize) -> SymBand {
        let mut a = SymBand::zeros(nx * ny, ny);
        for i in 0..nx {
            for j in 0..ny {
                let k = i * ny + j;
                a.add(k, k, 4.0 + 0.1 * (k % 7) as f64);
                if j + 1 < ny {
                    a.add(k + 1, k, -1.0);
                }
                if i + 1 < nx {
                    a.add(k + ny, k, -1.0);
                }
            }
        }
        a
    }

    #[test]
    fn cholesky_matches_dense_solve() {
        let a = laplacian_2d(5, 4);
        let n = a.dim();
        let dense: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| a.get(i, j)).collect()).collect();
        let b: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let expected = dense_solve(&dense, &b);
        let mut x = b.clone();
        a.cholesky().unwrap().solve_in_place(&mut x);
        for (u, v) in x.iter().zip(&expected) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let mut a = SymBand::zeros(2, 1);
        a.add(0, 0, 1.0);
        a.add(1, 0, 2.0);
        a.add(1, 1, 1.0);
        assert!(matches!(a.cholesky(), Err(Error::Solver { .. })));
    }

    #[test]
    fn pcg_matches_direct() {
        let a = laplacian_2d(6, 5);
        let n = a.dim();
        let b: Vec<f64> = (0..n).map(|i| 1.0 + (i % 3) as f64).collect();
        let mut direct = b.clone();
        a.clone().cholesky().unwrap().solve_in_place(&mut direct);
        let mut x = vec![0.0; n];
        let report = pcg(|u, v| a.matvec(u, v), &a.diagonal(), &b, &mut x, 1e-13, 500).unwrap();
        assert!(report.relative_residual <= 1e-13);
        for (u, v) in x.iter().zip(&direct) {
            assert!((u - v).abs() < 1e-10);
        }
    }

    #[test]
    fn band_lu_and_transpose_match_dense() {
        let n = 9;
        let mut a = BandMatrix::zeros(n, 2, 3);
        for i in 0..n {
            for j in a.row_range(i) {
                let v = if i == j { 6.0 } else { -0.3 - 0.1 * ((i + 2 * j) % 4) as f64 };
                a.set(i, j, v);
            }
        }
        let dense = a.to_dense();
        let dense_t: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| dense[j][i]).collect()).collect();
        let b: Vec<f64> = (0..n).map(|i| (i as f64).cos()).collect();
        let lu = a.lu().unwrap();
        let mut x = b.clone();
        lu.solve_in_place(&mut x);
        let mut xt = b.clone();
        lu.solve_transpose_in_place(&mut xt);
        for (u, v) in x.iter().zip(dense_solve(&dense, &b)) {
            assert!((u - v).abs() < 1e-13);
        }
        for (u, v) in xt.iter().zip(dense_solve(&dense_t, &b)) {
            assert!((u - v).abs() < 1e-13);
        }
    }
}
