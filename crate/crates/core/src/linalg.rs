//! Dense row-major matrices and the few kernels the networks and PCA need.

use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    /// Wraps a row-major buffer. Panics when `data.len() != rows * cols`.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix buffer length");
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Self { rows: rows.len(), cols, data }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        t
    }

    /// Plain `self * rhs`.
    pub fn matmul(&self, rhs: &Self) -> Self {
        assert_eq!(self.cols, rhs.rows, "matmul inner dimension");
        let mut out = Self::zeros(self.rows, rhs.cols);
        for r in 0..self.rows {
            let out_row = &mut out.data[r * rhs.cols..(r + 1) * rhs.cols];
            for k in 0..self.cols {
                axpy(out_row, self.data[r * self.cols + k], rhs.row(k));
            }
        }
        out
    }

    pub fn frobenius_norm(&self) -> T {
        self.data.iter().map(|&x| x * x).sum::<T>().sqrt()
    }

    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Self { rows: idx.len(), cols: self.cols, data }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

impl<T> std::ops::Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &T {
        &self.data[r * self.cols + c]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut T {
        &mut self.data[r * self.cols + c]
    }
}

/// `y += a * x`
#[inline]
pub fn axpy<T: Real>(y: &mut [T], a: T, x: &[T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[inline]
pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let mut acc = T::zero();
    for (&x, &y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

const ROW_TILE: usize = 4;
const COL_TILE: usize = 8;

/// `out = x * w + b` with `w` stored input-major (`in × out`).
///
/// Every output element is accumulated as `b[j] + x[r][0] w[0][j] + x[r][1] w[1][j] + ...`
/// in that order regardless of how many rows are processed together, so a batch
/// reproduces the single-row result bit for bit.
pub fn affine_rows<T: Real>(x: &Matrix<T>, w: &[T], b: &[T], out: &mut Matrix<T>) {
    let n_in = x.cols();
    let n_out = b.len();
    assert_eq!(w.len(), n_in * n_out, "weight shape");
    assert_eq!(out.rows(), x.rows(), "output rows");
    assert_eq!(out.cols(), n_out, "output cols");

    let rows = x.rows();
    let full = rows - rows % ROW_TILE;
    let col_full = n_out - n_out % COL_TILE;
    let xs = x.as_slice();
    let os = out.as_mut_slice();

    let mut r0 = 0;
    while r0 < full {
        let mut j0 = 0;
        while j0 < col_full {
            let mut acc = [[T::zero(); COL_TILE]; ROW_TILE];
            for row in acc.iter_mut() {
                row.copy_from_slice(&b[j0..j0 + COL_TILE]);
            }
            for k in 0..n_in {
                let wk = &w[k * n_out + j0..k * n_out + j0 + COL_TILE];
                for (t, row) in acc.iter_mut().enumerate() {
                    let xv = xs[(r0 + t) * n_in + k];
                    for c in 0..COL_TILE {
                        row[c] += xv * wk[c];
                    }
                }
            }
            for (t, row) in acc.iter().enumerate() {
                let base = (r0 + t) * n_out + j0;
                os[base..base + COL_TILE].copy_from_slice(row);
            }
            j0 += COL_TILE;
        }
        for t in 0..ROW_TILE {
            affine_tail(&xs[(r0 + t) * n_in..(r0 + t + 1) * n_in], w, b, col_full, &mut os[(r0 + t) * n_out..(r0 + t + 1) * n_out]);
        }
        r0 += ROW_TILE;
    }
    for r in full..rows {
        let xr = &xs[r * n_in..(r + 1) * n_in];
        let orow = &mut os[r * n_out..(r + 1) * n_out];
        affine_single(xr, w, b, orow);
    }
}

fn affine_tail<T: Real>(x: &[T], w: &[T], b: &[T], from: usize, out: &mut [T]) {
    let n_out = b.len();
    for j in from..n_out {
        let mut acc = b[j];
        for (k, &xv) in x.iter().enumerate() {
            acc += xv * w[k * n_out + j];
        }
        out[j] = acc;
    }
}

/// Single-row `out = x * w + b`; same accumulation order as [`affine_rows`].
pub fn affine_single<T: Real>(x: &[T], w: &[T], b: &[T], out: &mut [T]) {
    let n_out = b.len();
    let col_full = n_out - n_out % COL_TILE;
    let mut j0 = 0;
    while j0 < col_full {
        let mut acc = [T::zero(); COL_TILE];
        acc.copy_from_slice(&b[j0..j0 + COL_TILE]);
        for (k, &xv) in x.iter().enumerate() {
            let wk = &w[k * n_out + j0..k * n_out + j0 + COL_TILE];
            for c in 0..COL_TILE {
                acc[c] += xv * wk[c];
            }
        }
        out[j0..j0 + COL_TILE].copy_from_slice(&acc);
        j0 += COL_TILE;
    }
    affine_tail(x, w, b, col_full, out);
}
