//! Dense complex linear algebra for small MIMO problems.
//!
//! Channel matrices are K x N with K <= N and K rarely above a few tens, so
//! everything here is plain row-major storage with O(n^3) factorizations of
//! the K x K Gram matrix. Nothing larger than K x K is ever inverted.

use num_complex::Complex64;

use crate::{Error, Result};

/// Dense complex matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl CMatrix {
    /// Build from a row-major data vector.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{}x{} matrix needs {} entries, got {}",
                rows,
                cols,
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Build by evaluating `f(row, col)` for every entry.
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![Complex64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: Complex64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[Complex64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    /// Multiply every entry by a real scalar.
    pub fn scaled(&self, s: f64) -> CMatrix {
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    /// `A x` for an `x` of length `cols`. Costs `rows * cols` complex multiplications.
    pub fn matvec(&self, x: &[Complex64]) -> Result<Vec<Complex64>> {
        if x.len() != self.cols {
            return Err(Error::Shape(format!(
                "matvec: matrix has {} columns, vector has length {}",
                self.cols,
                x.len()
            )));
        }
        let mut y = Vec::with_capacity(self.rows);
        for r in 0..self.rows {
            let row = self.row(r);
            let mut acc = Complex64::new(0.0, 0.0);
            for (h, xv) in row.iter().zip(x) {
                acc += h * xv;
            }
            y.push(acc);
        }
        Ok(y)
    }

    /// `A^H y` for a `y` of length `rows`. Costs `rows * cols` complex multiplications.
    pub fn adjoint_matvec(&self, y: &[Complex64]) -> Result<Vec<Complex64>> {
        if y.len() != self.rows {
            return Err(Error::Shape(format!(
                "adjoint_matvec: matrix has {} rows, vector has length {}",
                self.rows,
                y.len()
            )));
        }
        let mut x = vec![Complex64::new(0.0, 0.0); self.cols];
        for r in 0..self.rows {
            let row = self.row(r);
            let yr = y[r];
            for (xc, h) in x.iter_mut().zip(row) {
                *xc += h.conj() * yr;
            }
        }
        Ok(x)
    }

    /// Gram matrix `A A^H` (rows x rows, Hermitian).
    pub fn gram(&self) -> CMatrix {
        let k = self.rows;
        let mut g = CMatrix::zeros(k, k);
        for i in 0..k {
            for j in i..k {
                let mut acc = Complex64::new(0.0, 0.0);
                let ri = self.row(i);
                let rj = self.row(j);
                for (a, b) in ri.iter().zip(rj) {
                    acc += a * b.conj();
                }
                g.set(i, j, acc);
                if i != j {
                    g.set(j, i, acc.conj());
                }
            }
        }
        g
    }

    /// Squared 2-norms of the columns, i.e. the diagonal of `A^H A`.
    pub fn col_norms_sqr(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.cols];
        for r in 0..self.rows {
            for (dc, h) in d.iter_mut().zip(self.row(r)) {
                *dc += h.norm_sqr();
            }
        }
        d
    }

    /// Maximum absolute column sum (induced 1-norm).
    pub fn norm_one(&self) -> f64 {
        let mut sums = vec![0.0; self.cols];
        for r in 0..self.rows {
            for (s, h) in sums.iter_mut().zip(self.row(r)) {
                *s += h.norm();
            }
        }
        sums.into_iter().fold(0.0, f64::max)
    }
}

/// Cholesky factor `L` (lower triangular, `G = L L^H`) of a Hermitian
/// positive-definite matrix.
pub struct Cholesky {
    n: usize,
    l: Vec<Complex64>, // row-major lower triangle, full square storage
}

impl Cholesky {
    /// Factor a Hermitian positive-definite matrix. Fails if a pivot is not
    /// strictly positive, which is how singular Grams surface.
    pub fn factor(g: &CMatrix) -> Result<Self> {
        if g.rows() != g.cols() {
            return Err(Error::Shape(format!(
                "cholesky: matrix is {}x{}, must be square",
                g.rows(),
                g.cols()
            )));
        }
        let n = g.rows();
        let mut l = vec![Complex64::new(0.0, 0.0); n * n];
        for i in 0..n {
            for j in 0..=i {
                let mut acc = g.get(i, j);
                for p in 0..j {
                    acc -= l[i * n + p] * l[j * n + p].conj();
                }
                if i == j {
                    let d = acc.re;
                    if !(d > 0.0) || !d.is_finite() {
                        return Err(Error::Numerical(format!(
                            "cholesky pivot {} is {:.3e}; matrix is not positive definite",
                            i, d
                        )));
                    }
                    l[i * n + i] = Complex64::new(d.sqrt(), 0.0);
                } else {
                    l[i * n + j] = acc / l[j * n + j].re;
                }
            }
        }
        Ok(Self { n, l })
    }

    /// Solve `G x = b` via the two triangular solves.
    pub fn solve(&self, b: &[Complex64]) -> Result<Vec<Complex64>> {
        if b.len() != self.n {
            return Err(Error::Shape(format!(
                "cholesky solve: system is {}x{}, rhs has length {}",
                self.n,
                self.n,
                b.len()
            )));
        }
        let n = self.n;
        // L y = b
        let mut y = b.to_vec();
        for i in 0..n {
            for p in 0..i {
                let lip = self.l[i * n + p];
                y[i] = y[i] - lip * y[p];
            }
            y[i] /= self.l[i * n + i].re;
        }
        // L^H x = y
        for i in (0..n).rev() {
            for p in (i + 1)..n {
                let lpi = self.l[p * n + i];
                y[i] = y[i] - lpi.conj() * y[p];
            }
            y[i] /= self.l[i * n + i].re;
        }
        Ok(y)
    }
}

/// Hermitian inner product `sum_i a_i * conj(b_i)`.
pub fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| x * y.conj())
        .fold(Complex64::new(0.0, 0.0), |acc, z| acc + z)
}

/// Squared Euclidean norm.
pub fn norm_sqr(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}
