//! Dense linear algebra for the small systems that arise here (n is 9 for the
//! reference family).
//!
//! Kronecker convention: for length-`n` vectors, `(x ⊗ y)[n*j + k] = x[j] * y[k]`
//! (zero-based). Every routine that reads `B` (n × n²) uses this layout.

use std::collections::VecDeque;
use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tolerances::Tolerances;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Vector(Vec<f64>);

impl Vector {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidDimension("vector must be nonempty".into()));
        }
        if let Some(i) = entries.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("vector entry {i} is not finite")));
        }
        Ok(Self(entries))
    }

    pub fn zeros(n: usize) -> Result<Self> {
        Self::new(vec![0.0; n])
    }

    pub fn unit(n: usize, m: usize) -> Result<Self> {
        if m >= n {
            return Err(Error::InvalidDimension(format!("unit index {m} out of range for n = {n}")));
        }
        let mut v = vec![0.0; n];
        v[m] = 1.0;
        Self::new(v)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn min(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn add(&self, other: &Vector) -> Result<Vector> {
        same_len(self, other)?;
        Ok(Vector(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect()))
    }

    pub fn sub(&self, other: &Vector) -> Result<Vector> {
        same_len(self, other)?;
        Ok(Vector(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect()))
    }

    pub fn scale(&self, alpha: f64) -> Vector {
        Vector(self.0.iter().map(|v| alpha * v).collect())
    }
}

fn same_len(x: &Vector, y: &Vector) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::InvalidDimension(format!(
            "vector lengths differ: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    Ok(())
}

impl TryFrom<Vec<f64>> for Vector {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Vector::new(v)
    }
}

impl From<Vector> for Vec<f64> {
    fn from(v: Vector) -> Self {
        v.0
    }
}

impl Index<usize> for Vector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for Vector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidDimension(format!("matrix shape {rows}x{cols} is empty")));
        }
        if data.len() != rows * cols {
            return Err(Error::InvalidDimension(format!(
                "matrix {rows}x{cols} needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(p) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "matrix entry ({}, {}) is not finite",
                p / cols,
                p % cols
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if let Some(i) = rows.iter().position(|row| row.len() != c) {
            return Err(Error::InvalidDimension(format!(
                "row {i} has {} entries, expected {c}",
                rows[i].len()
            )));
        }
        Self::new(r, c, rows.into_iter().flatten().collect())
    }

    pub fn zeros(rows: usize, cols: usize) -> Result<Self> {
        Self::new(rows, cols, vec![0.0; rows * cols])
    }

    pub fn identity(n: usize) -> Result<Self> {
        let mut m = Self::zeros(n, n)?;
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        Ok(m)
    }

    pub fn diag(entries: &[f64]) -> Result<Self> {
        let n = entries.len();
        let mut m = Self::zeros(n, n)?;
        for (i, &v) in entries.iter().enumerate() {
            m[(i, i)] = v;
        }
        Ok(m)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.cols).map(<[f64]>::to_vec).collect()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn is_nonnegative(&self) -> bool {
        self.data.iter().all(|&v| v >= 0.0)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn mul_vec(&self, x: &Vector) -> Result<Vector> {
        if x.len() != self.cols {
            return Err(Error::InvalidDimension(format!(
                "cannot multiply {}x{} matrix by vector of length {}",
                self.rows,
                self.cols,
                x.len()
            )));
        }
        Ok(Vector(
            self.data
                .chunks(self.cols)
                .map(|row| row.iter().zip(x.iter()).map(|(a, b)| a * b).sum())
                .collect(),
        ))
    }

    pub fn mul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::InvalidDimension(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols)?;
        for i in 0..self.rows {
            for k in 0..self.cols {
                let aik = self[(i, k)];
                if aik == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += aik * other[(k, j)];
                }
            }
        }
        Ok(out)
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, alpha: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| alpha * v).collect(),
        }
    }

    fn zip_with(&self, other: &Matrix, f: impl Fn(f64, f64) -> f64) -> Result<Matrix> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::InvalidDimension(format!(
                "shape mismatch: {}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    /// Applies the permutation `perm` (new index `i` takes old index `perm[i]`)
    /// to the rows and columns of a square matrix.
    pub fn permute(&self, perm: &[usize]) -> Result<Matrix> {
        if !self.is_square() || perm.len() != self.rows {
            return Err(Error::InvalidDimension("permutation does not match matrix".into()));
        }
        let n = self.rows;
        let mut out = Matrix::zeros(n, n)?;
        for i in 0..n {
            for j in 0..n {
                out[(i, j)] = self[(perm[i], perm[j])];
            }
        }
        Ok(out)
    }
}

impl TryFrom<Vec<Vec<f64>>> for Matrix {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Matrix::from_rows(rows)
    }
}

impl From<Matrix> for Vec<Vec<f64>> {
    fn from(m: Matrix) -> Self {
        m.to_rows()
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

pub fn ones(n: usize) -> Result<Vector> {
    if n == 0 {
        return Err(Error::InvalidDimension("ones(0)".into()));
    }
    Vector::new(vec![1.0; n])
}

/// Infinity norm: largest absolute row sum of a matrix or largest absolute entry of a vector.
pub trait InfNorm {
    fn inf_norm(&self) -> f64;
}

impl InfNorm for Vector {
    fn inf_norm(&self) -> f64 {
        self.0.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

impl InfNorm for Matrix {
    fn inf_norm(&self) -> f64 {
        self.data
            .chunks(self.cols)
            .map(|row| row.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

pub fn inf_norm<T: InfNorm + ?Sized>(m: &T) -> f64 {
    m.inf_norm()
}

pub fn kron_vec(x: &Vector, y: &Vector) -> Result<Vector> {
    same_len(x, y)?;
    let mut out = Vec::with_capacity(x.len() * y.len());
    for &xj in x.iter() {
        for &yk in y.iter() {
            out.push(xj * yk);
        }
    }
    Ok(Vector(out))
}

fn check_bilinear(b: &Matrix, x: &Vector, y: &Vector) -> Result<usize> {
    let n = b.rows();
    if b.cols() != n * n {
        return Err(Error::InvalidDimension(format!(
            "B must be n x n^2, got {}x{}",
            b.rows(),
            b.cols()
        )));
    }
    if x.len() != n || y.len() != n {
        return Err(Error::InvalidDimension(format!(
            "bilinear arguments must have length {n}, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    Ok(n)
}

/// `B (x ⊗ y)` without materializing the Kronecker product.
pub fn apply_bilinear(b: &Matrix, x: &Vector, y: &Vector) -> Result<Vector> {
    let n = check_bilinear(b, x, y)?;
    let out = (0..n)
        .map(|i| {
            let row = b.row(i);
            (0..n)
                .map(|j| {
                    let block = &row[n * j..n * (j + 1)];
                    x[j] * block.iter().zip(y.iter()).map(|(bv, yk)| bv * yk).sum::<f64>()
                })
                .sum()
        })
        .collect();
    Ok(Vector(out))
}

/// The n × n matrix `M` with `M z = B(u ⊗ z) + B(z ⊗ v)` for all `z`,
/// i.e. `B(u ⊗ I + I ⊗ v)`.
pub fn mixed_operator(b: &Matrix, u: &Vector, v: &Vector) -> Result<Matrix> {
    let n = check_bilinear(b, u, v)?;
    let mut out = Matrix::zeros(n, n)?;
    for i in 0..n {
        let row = b.row(i);
        for m in 0..n {
            let left: f64 = (0..n).map(|j| row[n * j + m] * u[j]).sum();
            let right: f64 = (0..n).map(|k| row[n * m + k] * v[k]).sum();
            out[(i, m)] = left + right;
        }
    }
    Ok(out)
}

/// LU factorization with partial pivoting, `P A = L U`.
#[derive(Clone, Debug)]
pub struct Lu {
    n: usize,
    factors: Vec<f64>,
    perm: Vec<usize>,
}

impl Lu {
    pub fn factor(a: &Matrix, pivot_tol: f64) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::InvalidDimension(format!(
                "LU needs a square matrix, got {}x{}",
                a.rows(),
                a.cols()
            )));
        }
        let n = a.rows();
        let threshold = pivot_tol * a.max_abs();
        let mut f = a.as_slice().to_vec();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let p = (k..n)
                .max_by(|&i, &j| f[i * n + k].abs().total_cmp(&f[j * n + k].abs()))
                .unwrap_or(k);
            let pivot = f[p * n + k];
            if pivot.abs() <= threshold || pivot == 0.0 {
                return Err(Error::SingularMatrix { column: k, pivot });
            }
            if p != k {
                for c in 0..n {
                    f.swap(p * n + c, k * n + c);
                }
                perm.swap(p, k);
            }
            for i in k + 1..n {
                let l = f[i * n + k] / pivot;
                f[i * n + k] = l;
                if l != 0.0 {
                    for c in k + 1..n {
                        f[i * n + c] -= l * f[k * n + c];
                    }
                }
            }
        }
        Ok(Self { n, factors: f, perm })
    }

    pub fn solve(&self, b: &Vector) -> Result<Vector> {
        let n = self.n;
        if b.len() != n {
            return Err(Error::InvalidDimension(format!(
                "right-hand side has length {}, expected {n}",
                b.len()
            )));
        }
        let f = &self.factors;
        let mut z: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let s: f64 = (0..i).map(|c| f[i * n + c] * z[c]).sum();
            z[i] -= s;
        }
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|c| f[i * n + c] * z[c]).sum();
            z[i] = (z[i] - s) / f[i * n + i];
        }
        Vector::new(z)
    }

    pub fn inverse(&self) -> Result<Matrix> {
        let n = self.n;
        let mut inv = Matrix::zeros(n, n)?;
        for j in 0..n {
            let col = self.solve(&Vector::unit(n, j)?)?;
            for i in 0..n {
                inv[(i, j)] = col[i];
            }
        }
        Ok(inv)
    }
}

pub fn solve_linear(a: &Matrix, b: &Vector) -> Result<Vector> {
    Lu::factor(a, Tolerances::default().pivot)?.solve(b)
}

pub fn inverse(a: &Matrix) -> Result<Matrix> {
    Lu::factor(a, Tolerances::default().pivot)?.inverse()
}

/// `‖A⁻¹‖∞` from the explicitly formed inverse.
pub fn inf_norm_inverse(a: &Matrix) -> Result<f64> {
    Ok(inverse(a)?.inf_norm())
}

const NEGLIGIBLE_COMPONENT: f64 = 1e-30;

pub fn spectral_radius(m: &Matrix) -> Result<f64> {
    spectral_radius_with(m, &Tolerances::default())
}

/// Perron root of a nonnegative square matrix by power iteration from `e`.
///
/// Each step yields the Collatz-Wielandt bracket `min_i (Mv)_i/v_i <= rho <= max_i (Mv)_i/v_i`
/// over the positive components of `v`. If the bracket stops shrinking (periodic
/// matrices) the iteration moves to `M + sI` with `s = ‖M‖∞`, which has the same
/// Perron vector and a strictly dominant root.
pub fn spectral_radius_with(m: &Matrix, tol: &Tolerances) -> Result<f64> {
    if !m.is_square() {
        return Err(Error::InvalidDimension(format!(
            "spectral radius needs a square matrix, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    if !m.is_nonnegative() {
        return Err(Error::InvalidInput("spectral radius expects a nonnegative matrix".into()));
    }
    let norm = m.inf_norm();
    if norm == 0.0 {
        return Ok(0.0);
    }
    let n = m.rows();
    let mut v = vec![1.0; n];
    let mut w = vec![0.0; n];
    let mut shift = 0.0;
    let mut checkpoint = f64::INFINITY;
    let (mut lo, mut hi) = (0.0, norm);
    for it in 1..=tol.spectral_max_iter {
        for (i, wi) in w.iter_mut().enumerate() {
            *wi = m.row(i).iter().zip(&v).map(|(a, b)| a * b).sum::<f64>() + shift * v[i];
        }
        let wmax = w.iter().fold(0.0_f64, |a, &b| a.max(b));
        if wmax == 0.0 {
            // M^k e = 0: nilpotent.
            return Ok(0.0);
        }
        lo = f64::INFINITY;
        hi = 0.0;
        for (&wi, &vi) in w.iter().zip(&v) {
            // Components that have decayed to nothing belong to a dominated class.
            if vi > NEGLIGIBLE_COMPONENT {
                let ratio = wi / vi;
                lo = lo.min(ratio);
                hi = hi.max(ratio);
            }
        }
        lo -= shift;
        hi -= shift;
        let width = hi - lo;
        if width <= tol.spectral * hi.abs() {
            return Ok(0.5 * (lo + hi));
        }
        if shift == 0.0 && it % tol.spectral_stall_window == 0 {
            if width > 0.5 * checkpoint {
                shift = norm;
            }
            checkpoint = width;
        }
        for (vi, &wi) in v.iter_mut().zip(&w) {
            *vi = wi / wmax;
        }
    }
    Err(Error::SpectralNoConvergence {
        iterations: tol.spectral_max_iter,
        lower: lo.max(0.0),
        upper: hi,
    })
}

/// Strong connectivity of the digraph with an edge `i -> j` whenever `M[i][j] > 0`.
/// A 1 × 1 matrix is irreducible regardless of its entry.
pub fn is_irreducible(m: &Matrix) -> bool {
    if !m.is_square() {
        return false;
    }
    let n = m.rows();
    if n == 1 {
        return true;
    }
    let reach = |forward: bool| {
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(i) = queue.pop_front() {
            for j in 0..n {
                let edge = if forward { m[(i, j)] } else { m[(j, i)] };
                if edge > 0.0 && !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    };
    reach(true) && reach(false)
}
