use crate::error::{Error, Result};

/// Dense row-major matrix of f64.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::InvalidInput(format!(
                "matrix data has {} values, expected {rows} x {cols}",
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::InvalidInput("ragged rows".into()));
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.cols.max(1)).take(self.rows)
    }

    /// Rows `indices` gathered into a new matrix.
    pub fn gather_rows(&self, indices: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn slice_rows(&self, start: usize, end: usize) -> Matrix {
        Matrix {
            rows: end - start,
            cols: self.cols,
            data: self.data[start * self.cols..end * self.cols].to_vec(),
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| f(*v)).collect(),
        }
    }
}

/// `x (n x k) * w^T` where `w` is `(m x k)` row-major; result `n x m`.
pub(crate) fn matmul_bt(x: &Matrix, w: &[f64], m: usize) -> Matrix {
    let (n, k) = (x.rows, x.cols);
    debug_assert_eq!(w.len(), m * k);
    let mut out = Matrix::zeros(n, m);
    if n == 0 || m == 0 || k == 0 {
        return out;
    }
    // SAFETY: slice lengths match the dimensions and strides passed in.
    unsafe {
        matrixmultiply::dgemm(
            n,
            k,
            m,
            1.0,
            x.data.as_ptr(),
            k as isize,
            1,
            w.as_ptr(),
            1,
            k as isize,
            0.0,
            out.data.as_mut_ptr(),
            m as isize,
            1,
        );
    }
    out
}

/// `dy (n x m) * w` where `w` is `(m x k)` row-major; result `n x k`.
pub(crate) fn matmul(dy: &Matrix, w: &[f64], k: usize) -> Matrix {
    let (n, m) = (dy.rows, dy.cols);
    debug_assert_eq!(w.len(), m * k);
    let mut out = Matrix::zeros(n, k);
    if n == 0 || m == 0 || k == 0 {
        return out;
    }
    // SAFETY: as above.
    unsafe {
        matrixmultiply::dgemm(
            n,
            m,
            k,
            1.0,
            dy.data.as_ptr(),
            m as isize,
            1,
            w.as_ptr(),
            k as isize,
            1,
            0.0,
            out.data.as_mut_ptr(),
            k as isize,
            1,
        );
    }
    out
}

/// `dy^T (m x n) * x (n x k)`, written into `out` (`m x k`, row-major).
pub(crate) fn matmul_at(dy: &Matrix, x: &Matrix, out: &mut [f64]) {
    let (n, m, k) = (dy.rows, dy.cols, x.cols);
    debug_assert_eq!(x.rows, n);
    debug_assert_eq!(out.len(), m * k);
    if n == 0 || m == 0 || k == 0 {
        out.iter_mut().for_each(|v| *v = 0.0);
        return;
    }
    // SAFETY: as above.
    unsafe {
        matrixmultiply::dgemm(
            m,
            n,
            k,
            1.0,
            dy.data.as_ptr(),
            1,
            m as isize,
            x.data.as_ptr(),
            k as isize,
            1,
            0.0,
            out.as_mut_ptr(),
            k as isize,
            1,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn products_match_naive_loops() {
        let x = Matrix::new(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let w = [1.0, 0.0, -1.0, 2.0, 1.0, 0.5]; // 2 x 3
        let y = matmul_bt(&x, &w, 2);
        assert_eq!(y.data(), &[-2.0, 5.5, -2.0, 16.0]);

        let dy = Matrix::new(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let dx = matmul(&dy, &w, 3);
        assert_eq!(dx.data(), &[5.0, 2.0, 0.0, 11.0, 4.0, -1.0]);

        let mut dw = vec![0.0; 6];
        matmul_at(&dy, &x, &mut dw);
        assert_eq!(dw, vec![13.0, 17.0, 21.0, 18.0, 24.0, 30.0]);
    }
}
