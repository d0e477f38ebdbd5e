//! Small dense matrices over any [`Real`] scalar.

use super::real::Real;

/// Row-major `rows x cols` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Copy> Mat<T> {
    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Self { rows, cols, data }
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

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.cols + j] = v;
    }

    pub fn map<U: Copy>(&self, f: impl FnMut(&T) -> U) -> Mat<U> {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(f).collect(),
        }
    }

    pub fn transpose(&self) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for j in 0..self.cols {
            for i in 0..self.rows {
                data.push(self.get(i, j));
            }
        }
        Self {
            rows: self.cols,
            cols: self.rows,
            data,
        }
    }
}

impl<T: Real> Mat<T> {
    /// Identity of size `n`, with entries in the context of `like`.
    pub fn identity_like(n: usize, like: T) -> Self {
        let zero = like.lift(0.0);
        let one = like.lift(1.0);
        let mut data = vec![zero; n * n];
        for i in 0..n {
            data[i * n + i] = one;
        }
        Self {
            rows: n,
            cols: n,
            data,
        }
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let bt = other.transpose();
        let zero = self.data[0].lift(0.0);
        let mut data = Vec::with_capacity(self.rows * other.cols);
        for i in 0..self.rows {
            for j in 0..other.cols {
                data.push(T::affine(self.row(i), bt.row(j), zero));
            }
        }
        Self {
            rows: self.rows,
            cols: other.cols,
            data,
        }
    }

    pub fn matvec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(self.cols, v.len(), "matvec shape mismatch");
        (0..self.rows).map(|i| T::dot(self.row(i), v)).collect()
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|&x| x * s)
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| a + b).collect(),
        }
    }

    pub fn values(&self) -> Mat<f64> {
        self.map(|x| x.value())
    }

    /// Maximum absolute row sum of the values.
    pub fn inf_norm(&self) -> f64 {
        (0..self.rows)
            .map(|i| self.row(i).iter().map(|x| x.value().abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

const TAYLOR_TERMS: usize = 14;

/// Matrix exponential by scaling and squaring with a truncated Taylor series.
///
/// The argument is scaled to norm at most 1/2, where 14 terms leave a
/// remainder below 1e-19; every step is built from differentiable primitives.
pub fn expm_series<T: Real>(m: &Mat<T>) -> Mat<T> {
    assert!(m.is_square(), "matrix exponential of a non-square matrix");
    let n = m.rows();
    let norm = m.inf_norm();
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as i32
    } else {
        0
    };
    let x = m.scale(0.5f64.powi(squarings));
    let eye = Mat::identity_like(n, m.as_slice()[0]);

    // Horner: I + X(I + X/2(I + X/3(...)))
    let mut p = eye.add(&x.scale(1.0 / TAYLOR_TERMS as f64));
    for k in (1..TAYLOR_TERMS).rev() {
        p = eye.add(&x.matmul(&p).scale(1.0 / k as f64));
    }
    for _ in 0..squarings {
        p = p.matmul(&p);
    }
    p
}

/// Solve `a * x = b` by Gaussian elimination with partial pivoting.
/// Returns the solution and the determinant of `a`; when the determinant is
/// exactly zero the returned vector is meaningless.
pub fn solve<T: Real>(a: &Mat<T>, b: &[T]) -> (Vec<T>, f64) {
    assert!(a.is_square() && a.rows() == b.len());
    let n = a.rows();
    let mut m = a.clone();
    let mut rhs = b.to_vec();
    let mut det = 1.0;
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| {
                m.get(i, col)
                    .value()
                    .abs()
                    .total_cmp(&m.get(j, col).value().abs())
            })
            .unwrap_or(col);
        if pivot != col {
            for j in 0..n {
                let tmp = m.get(col, j);
                m.set(col, j, m.get(pivot, j));
                m.set(pivot, j, tmp);
            }
            rhs.swap(col, pivot);
            det = -det;
        }
        let diag = m.get(col, col);
        det *= diag.value();
        if det == 0.0 {
            return (rhs, 0.0);
        }
        for row in col + 1..n {
            let factor = m.get(row, col) / diag;
            for j in col..n {
                let v = m.get(row, j) - factor * m.get(col, j);
                m.set(row, j, v);
            }
            rhs[row] = rhs[row] - factor * rhs[col];
        }
    }
    let mut x = rhs.clone();
    for row in (0..n).rev() {
        let mut acc = rhs[row];
        for (j, &xj) in x.iter().enumerate().skip(row + 1) {
            acc = acc - m.get(row, j) * xj;
        }
        x[row] = acc / m.get(row, row);
    }
    (x, det)
}

/// Determinant of the values of a square matrix.
pub fn determinant(a: &Mat<f64>) -> f64 {
    let zeros = vec![0.0; a.rows()];
    // Elimination stops at the first zero pivot; only the determinant is used.
    solve(a, &zeros).1
}
