//! Dense linear algebra used throughout the crate.
//!
//! Everything is dense and row-major. Sizes here are at most a few hundred
//! rows (covariances) or a few dozen (graph matrices), so the simple
//! algorithms below are adequate: Cholesky with a jitter schedule for
//! covariance solves and cyclic Jacobi rotations for the symmetric
//! eigenproblems behind the spectral graph kernels.

use std::fmt;
use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};

#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        write!(f, "]")
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = Matrix::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    /// Panics if the rows are ragged.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.as_ref().len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            let row = row.as_ref();
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Matrix { rows: r, cols: c, data }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols);
        Matrix { rows, cols, data }
    }

    pub fn column(values: &[f64]) -> Self {
        Matrix::from_vec(values.len(), 1, values.to_vec())
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    pub fn trace(&self) -> f64 {
        self.diag().iter().sum()
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Largest asymmetry relative to `max(1, max|A|)`.
    pub fn asymmetry(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let mut worst = 0.0f64;
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst / self.max_abs().max(1.0)
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.asymmetry() <= tol
    }

    /// Replaces the matrix by `(A + Aᵀ)/2`.
    pub fn symmetrize(&mut self) {
        assert!(self.is_square());
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                let avg = 0.5 * (self[(i, j)] + self[(j, i)]);
                self[(i, j)] = avg;
                self[(j, i)] = avg;
            }
        }
    }

    pub fn scaled(&self, s: f64) -> Matrix {
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|v| v * s).collect() }
    }

    pub fn add(&self, other: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Matrix { rows: self.rows, cols: self.cols, data }
    }

    pub fn sub(&self, other: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Matrix { rows: self.rows, cols: self.cols, data }
    }

    pub fn add_diag(&mut self, values: &[f64]) {
        assert_eq!(values.len(), self.rows.min(self.cols));
        for (i, v) in values.iter().enumerate() {
            self[(i, i)] += v;
        }
    }

    pub fn add_scalar_diag(&mut self, value: f64) {
        for i in 0..self.rows.min(self.cols) {
            self[(i, i)] += value;
        }
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                let b_row = &other.data[k * other.cols..(k + 1) * other.cols];
                for (o, b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        out
    }

    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, v.len());
        (0..self.rows).map(|i| dot(self.row(i), v)).collect()
    }

    /// `A·Aᵀ`
    pub fn gram(&self) -> Matrix {
        let mut out = Matrix::zeros(self.rows, self.rows);
        for i in 0..self.rows {
            for j in 0..=i {
                let v = dot(self.row(i), self.row(j));
                out[(i, j)] = v;
                out[(j, i)] = v;
            }
        }
        out
    }

    pub fn approx_eq(&self, other: &Matrix, tol: f64) -> bool {
        self.rows == other.rows
            && self.cols == other.cols
            && self.data.iter().zip(&other.data).all(|(a, b)| (a - b).abs() <= tol)
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data.iter().zip(&other.data).fold(0.0, |acc, (a, b)| acc.max((a - b).abs()))
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Diagonal jitters tried in order until a factorization succeeds.
#[derive(Clone, Debug, PartialEq)]
pub struct JitterPolicy {
    pub schedule: Vec<f64>,
}

impl Default for JitterPolicy {
    fn default() -> Self {
        JitterPolicy { schedule: vec![0.0, 1e-12, 1e-10, 1e-8, 1e-6, 1e-4, 1e-2] }
    }
}

impl JitterPolicy {
    pub fn none() -> Self {
        JitterPolicy { schedule: vec![0.0] }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CholFactor {
    lower: Matrix,
    jitter_used: f64,
}

impl CholFactor {
    pub fn lower(&self) -> &Matrix {
        &self.lower
    }

    pub fn jitter_used(&self) -> f64 {
        self.jitter_used
    }

    pub fn dim(&self) -> usize {
        self.lower.rows()
    }

    /// `L·Lᵀ`, i.e. the factored matrix including jitter.
    pub fn reconstruct(&self) -> Matrix {
        self.lower.gram()
    }
}

pub fn cholesky(a: &Matrix) -> Result<CholFactor> {
    cholesky_with(a, &JitterPolicy::default())
}

pub fn cholesky_with(a: &Matrix, policy: &JitterPolicy) -> Result<CholFactor> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "cholesky of a {}x{} matrix",
            a.rows(),
            a.cols()
        )));
    }
    for &jitter in &policy.schedule {
        if let Some(lower) = try_cholesky(a, jitter) {
            return Ok(CholFactor { lower, jitter_used: jitter });
        }
    }
    Err(Error::NotPositiveDefinite {
        dim: a.rows(),
        max_jitter: policy.schedule.last().copied().unwrap_or(0.0),
    })
}

fn try_cholesky(a: &Matrix, jitter: f64) -> Option<Matrix> {
    let n = a.rows();
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let lj = &l.data[j * n..j * n + j];
        let mut d = a[(j, j)] + jitter - dot(lj, lj);
        if !(d > 0.0) || !d.is_finite() {
            return None;
        }
        d = d.sqrt();
        l.data[j * n + j] = d;
        for i in (j + 1)..n {
            let s = a[(i, j)] - dot(&l.data[i * n..i * n + j], &l.data[j * n..j * n + j]);
            l.data[i * n + j] = s / d;
        }
    }
    Some(l)
}

fn forward_sub(l: &Matrix, b: &mut [f64]) {
    let n = l.rows();
    for i in 0..n {
        let s = dot(&l.row(i)[..i], &b[..i]);
        b[i] = (b[i] - s) / l[(i, i)];
    }
}

fn backward_sub_transposed(l: &Matrix, b: &mut [f64]) {
    let n = l.rows();
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in (i + 1)..n {
            s -= l[(k, i)] * b[k];
        }
        b[i] = s / l[(i, i)];
    }
}

/// Solves `(A + jI) x = b` for a vector right-hand side.
pub fn solve_chol_vec(f: &CholFactor, b: &[f64]) -> Result<Vec<f64>> {
    if b.len() != f.dim() {
        return Err(Error::DimensionMismatch(format!(
            "factor is {}x{}, right-hand side has {} rows",
            f.dim(),
            f.dim(),
            b.len()
        )));
    }
    let mut x = b.to_vec();
    forward_sub(&f.lower, &mut x);
    backward_sub_transposed(&f.lower, &mut x);
    Ok(x)
}

/// Solves `(A + jI) X = B` column by column.
pub fn solve_chol(f: &CholFactor, b: &Matrix) -> Result<Matrix> {
    if b.rows() != f.dim() {
        return Err(Error::DimensionMismatch(format!(
            "factor is {}x{}, right-hand side has {} rows",
            f.dim(),
            f.dim(),
            b.rows()
        )));
    }
    let mut out = Matrix::zeros(b.rows(), b.cols());
    let mut col = vec![0.0; b.rows()];
    for j in 0..b.cols() {
        for i in 0..b.rows() {
            col[i] = b[(i, j)];
        }
        forward_sub(&f.lower, &mut col);
        backward_sub_transposed(&f.lower, &mut col);
        for i in 0..b.rows() {
            out[(i, j)] = col[i];
        }
    }
    Ok(out)
}

/// `L⁻¹ B`, the half-solve used for predictive covariances.
pub fn solve_lower(f: &CholFactor, b: &Matrix) -> Result<Matrix> {
    if b.rows() != f.dim() {
        return Err(Error::DimensionMismatch(format!(
            "factor is {}x{}, right-hand side has {} rows",
            f.dim(),
            f.dim(),
            b.rows()
        )));
    }
    let mut out = Matrix::zeros(b.rows(), b.cols());
    let mut col = vec![0.0; b.rows()];
    for j in 0..b.cols() {
        for i in 0..b.rows() {
            col[i] = b[(i, j)];
        }
        forward_sub(&f.lower, &mut col);
        for i in 0..b.rows() {
            out[(i, j)] = col[i];
        }
    }
    Ok(out)
}

/// `(A + jI)⁻¹` from its factor.
pub fn chol_inverse(f: &CholFactor) -> Matrix {
    let n = f.dim();
    // invert L, then form L⁻ᵀ L⁻¹
    let l = &f.lower;
    let mut linv = Matrix::zeros(n, n);
    for j in 0..n {
        linv[(j, j)] = 1.0 / l[(j, j)];
        for i in (j + 1)..n {
            let mut s = 0.0;
            for k in j..i {
                s += l[(i, k)] * linv[(k, j)];
            }
            linv[(i, j)] = -s / l[(i, i)];
        }
    }
    let mut out = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut s = 0.0;
            for k in i..n {
                s += linv[(k, i)] * linv[(k, j)];
            }
            out[(i, j)] = s;
            out[(j, i)] = s;
        }
    }
    out
}

pub fn logdet(f: &CholFactor) -> f64 {
    2.0 * f.lower.diag().iter().map(|d| d.ln()).sum::<f64>()
}

/// Eigenpairs of a symmetric matrix, eigenvalues ascending, eigenvectors as columns.
#[derive(Clone, Debug, PartialEq)]
pub struct EigDecomp {
    pub values: Vec<f64>,
    pub vectors: Matrix,
}

impl EigDecomp {
    /// `V·diag(f(λ))·Vᵀ`
    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Matrix {
        let mapped: Vec<f64> = self.values.iter().map(|&l| f(l)).collect();
        self.with_values(&mapped)
    }

    pub fn with_values(&self, values: &[f64]) -> Matrix {
        let n = self.values.len();
        let v = &self.vectors;
        let mut out = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let mut s = 0.0;
                for (k, &lk) in values.iter().enumerate() {
                    s += v[(i, k)] * lk * v[(j, k)];
                }
                out[(i, j)] = s;
                out[(j, i)] = s;
            }
        }
        out
    }

    pub fn max_value(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }

    pub fn min_value(&self) -> f64 {
        self.values.first().copied().unwrap_or(0.0)
    }
}

pub fn sym_eig(a: &Matrix) -> Result<EigDecomp> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch(format!("eigendecomposition of a {}x{} matrix", a.rows(), a.cols())));
    }
    let n = a.rows();
    let mut w = a.clone();
    w.symmetrize();
    let mut v = Matrix::identity(n);
    let scale = w.frobenius();
    let max_sweeps = 100 * n.max(1);
    let mut converged = scale == 0.0 || n <= 1;
    let mut sweeps = 0;
    while !converged && sweeps < max_sweeps {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += w[(p, q)] * w[(p, q)];
            }
        }
        if off.sqrt() <= 1e-15 * scale || off == 0.0 {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = w[(p, q)];
                if apq.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let theta = (w[(q, q)] - w[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for r in 0..n {
                    let arp = w[(r, p)];
                    let arq = w[(r, q)];
                    w[(r, p)] = c * arp - s * arq;
                    w[(r, q)] = s * arp + c * arq;
                }
                for r in 0..n {
                    let apr = w[(p, r)];
                    let aqr = w[(q, r)];
                    w[(p, r)] = c * apr - s * aqr;
                    w[(q, r)] = s * apr + c * aqr;
                }
                w[(p, q)] = 0.0;
                w[(q, p)] = 0.0;
                for r in 0..n {
                    let vrp = v[(r, p)];
                    let vrq = v[(r, q)];
                    v[(r, p)] = c * vrp - s * vrq;
                    v[(r, q)] = s * vrp + c * vrq;
                }
            }
        }
        sweeps += 1;
    }
    if !converged {
        return Err(Error::ConvergenceFailure { sweeps });
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| w[(i, i)].total_cmp(&w[(j, j)]).then(i.cmp(&j)));
    let values: Vec<f64> = order.iter().map(|&i| w[(i, i)]).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (new_col, &old_col) in order.iter().enumerate() {
        // sign: largest-magnitude component positive (first on ties)
        let mut pivot = 0;
        for r in 0..n {
            if v[(r, old_col)].abs() > v[(pivot, old_col)].abs() + 1e-12 {
                pivot = r;
            }
        }
        let sign = if v[(pivot, old_col)] < 0.0 { -1.0 } else { 1.0 };
        for r in 0..n {
            vectors[(r, new_col)] = sign * v[(r, old_col)];
        }
    }
    Ok(EigDecomp { values, vectors })
}

/// Scalar maps applied spectrally by [`matrix_function`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MatrixFn {
    Exp,
    Cos,
    Pow(f64),
    Pinv,
}

pub const PINV_RELATIVE_THRESHOLD: f64 = 1e-10;

pub fn matrix_function(a: &Matrix, f: MatrixFn) -> Result<Matrix> {
    let eig = sym_eig(a)?;
    apply_matrix_function(&eig, f)
}

pub fn apply_matrix_function(eig: &EigDecomp, f: MatrixFn) -> Result<Matrix> {
    let mapped: Vec<f64> = match f {
        MatrixFn::Exp => eig.values.iter().map(|l| l.exp()).collect(),
        MatrixFn::Cos => eig.values.iter().map(|l| l.cos()).collect(),
        MatrixFn::Pow(t) => {
            let mut out = Vec::with_capacity(eig.values.len());
            for &l in &eig.values {
                if t < 0.0 && l <= 1e-10 {
                    return Err(Error::SingularForNegativePower { eigenvalue: l });
                }
                out.push(if t.fract() == 0.0 { l.powi(t as i32) } else { l.powf(t) });
            }
            out
        }
        MatrixFn::Pinv => {
            let biggest = eig.values.iter().fold(0.0f64, |acc, l| acc.max(l.abs()));
            let cut = PINV_RELATIVE_THRESHOLD * biggest;
            eig.values.iter().map(|&l| if l.abs() <= cut { 0.0 } else { 1.0 / l }).collect()
        }
    };
    Ok(eig.with_values(&mapped))
}

/// Kronecker product; block `(i, j)` of the result is `a[i][j]·b`.
pub fn kron(a: &Matrix, b: &Matrix) -> Matrix {
    let (ar, ac, br, bc) = (a.rows(), a.cols(), b.rows(), b.cols());
    Matrix::from_fn(ar * br, ac * bc, |i, j| a[(i / br, j / bc)] * b[(i % br, j % bc)])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(rows)
    }

    #[test]
    fn cholesky_identity_needs_no_jitter() {
        let f = cholesky(&Matrix::identity(3)).unwrap();
        assert_eq!(f.lower(), &Matrix::identity(3));
        assert_eq!(f.jitter_used(), 0.0);
    }

    #[test]
    fn cholesky_two_by_two() {
        let f = cholesky(&m(&[&[4.0, 2.0], &[2.0, 3.0]])).unwrap();
        let expected = m(&[&[2.0, 0.0], &[1.0, 2f64.sqrt()]]);
        assert!(f.lower().approx_eq(&expected, 1e-14));
    }

    #[test]
    fn cholesky_rank_one_uses_jitter() {
        let a = m(&[&[1.0, 1.0], &[1.0, 1.0]]);
        let f = cholesky(&a).unwrap();
        let j = f.jitter_used();
        assert!(j > 0.0 && j <= 1e-2);
        let mut shifted = a.clone();
        shifted.add_scalar_diag(j);
        assert!(f.reconstruct().sub(&shifted).frobenius() <= 1e-8 * shifted.frobenius());
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = m(&[&[1.0, 0.0], &[0.0, -1.0]]);
        assert!(matches!(cholesky(&a), Err(Error::NotPositiveDefinite { .. })));
    }

    #[test]
    fn solves() {
        let f = cholesky(&Matrix::identity(2)).unwrap();
        assert_eq!(solve_chol_vec(&f, &[1.0, 2.0]).unwrap(), vec![1.0, 2.0]);

        let f = cholesky(&m(&[&[4.0, 2.0], &[2.0, 3.0]])).unwrap();
        let x = solve_chol_vec(&f, &[2.0, 1.0]).unwrap();
        assert!((x[0] - 0.5).abs() < 1e-14 && x[1].abs() < 1e-14);

        let f = cholesky(&Matrix::identity(3).scaled(2.0)).unwrap();
        let x = solve_chol(&f, &Matrix::identity(3)).unwrap();
        assert!(x.approx_eq(&Matrix::identity(3).scaled(0.5), 1e-15));

        assert!(matches!(solve_chol_vec(&f, &[1.0]), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn logdets() {
        assert_eq!(logdet(&cholesky(&Matrix::identity(4)).unwrap()), 0.0);
        let two = cholesky(&Matrix::identity(3).scaled(2.0)).unwrap();
        assert!((logdet(&two) - 3.0 * 2f64.ln()).abs() < 1e-14);
        let f = cholesky(&m(&[&[4.0, 2.0], &[2.0, 3.0]])).unwrap();
        assert!((logdet(&f) - 8f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn inverse_matches_solve() {
        let a = m(&[&[4.0, 2.0, 0.5], &[2.0, 3.0, 0.1], &[0.5, 0.1, 2.0]]);
        let f = cholesky(&a).unwrap();
        let inv = chol_inverse(&f);
        assert!(inv.matmul(&a).approx_eq(&Matrix::identity(3), 1e-13));
    }

    #[test]
    fn eig_small_cases() {
        let e = sym_eig(&Matrix::from_diag(&[3.0, 1.0])).unwrap();
        assert_eq!(e.values, vec![1.0, 3.0]);
        assert!(e.vectors.approx_eq(&m(&[&[0.0, 1.0], &[1.0, 0.0]]), 0.0));

        let e = sym_eig(&m(&[&[1.0, -1.0], &[-1.0, 1.0]])).unwrap();
        assert!((e.values[0]).abs() < 1e-15 && (e.values[1] - 2.0).abs() < 1e-15);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!(e.vectors.approx_eq(&m(&[&[h, h], &[h, -h]]), 1e-15));

        let e = sym_eig(&Matrix::identity(4)).unwrap();
        assert!(e.values.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn matrix_functions() {
        let l = m(&[&[1.0, -1.0], &[-1.0, 1.0]]);
        let pinv = matrix_function(&l, MatrixFn::Pinv).unwrap();
        assert!(pinv.approx_eq(&l.scaled(0.25), 1e-15));

        let e = matrix_function(&Matrix::zeros(3, 3), MatrixFn::Exp).unwrap();
        assert!(e.approx_eq(&Matrix::identity(3), 0.0));

        let c = matrix_function(&l.scaled(std::f64::consts::FRAC_PI_4), MatrixFn::Cos).unwrap();
        assert!(c.approx_eq(&Matrix::from_fn(2, 2, |_, _| 0.5), 1e-15));

        assert!(matches!(
            matrix_function(&l, MatrixFn::Pow(-1.0)),
            Err(Error::SingularForNegativePower { .. })
        ));
    }

    #[test]
    fn kron_examples() {
        let b = m(&[&[1.0, 2.0], &[2.0, 5.0]]);
        let k = kron(&Matrix::identity(2), &b);
        let expected = m(&[
            &[1.0, 2.0, 0.0, 0.0],
            &[2.0, 5.0, 0.0, 0.0],
            &[0.0, 0.0, 1.0, 2.0],
            &[0.0, 0.0, 2.0, 5.0],
        ]);
        assert_eq!(k, expected);
        assert_eq!(kron(&m(&[&[2.0]]), &b), b.scaled(2.0));
        let ones = Matrix::from_fn(2, 2, |_, _| 1.0);
        let k = kron(&ones, &Matrix::identity(2));
        for bi in 0..2 {
            for bj in 0..2 {
                for i in 0..2 {
                    for j in 0..2 {
                        assert_eq!(k[(2 * bi + i, 2 * bj + j)], if i == j { 1.0 } else { 0.0 });
                    }
                }
            }
        }
    }
}
