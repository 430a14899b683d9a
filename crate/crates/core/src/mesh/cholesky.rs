//! Envelope (skyline) Cholesky factorization under a reverse Cuthill-McKee
//! ordering. Mesh normal matrices are banded after RCM, so the envelope stays
//! narrow and the factor is computed once and reused for every solve.

use std::collections::VecDeque;

use super::{MeshError, Result};
use crate::scalar::Real;

/// Symmetric sparse matrix stored with its full pattern, CSR, sorted columns.
#[derive(Clone, Debug, PartialEq)]
pub struct SymmetricSparse<T> {
    pub(crate) row_ptr: Vec<usize>,
    pub(crate) col_idx: Vec<usize>,
    pub(crate) values: Vec<T>,
}

impl<T: Real> SymmetricSparse<T> {
    /// Builds from per-row `(column, value)` lists. Entries are summed per column.
    pub fn from_rows(rows: Vec<Vec<(usize, T)>>) -> Self {
        let mut row_ptr = vec![0];
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for mut row in rows {
            row.sort_by_key(|e| e.0);
            let mut last: Option<usize> = None;
            for (c, v) in row {
                if last == Some(c) {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_idx.push(c);
                    values.push(v);
                    last = Some(c);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self { row_ptr, col_idx, values }
    }

    pub fn size(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[span.clone()].iter().copied().zip(self.values[span].iter().copied())
    }

    pub fn to_dense(&self) -> Vec<Vec<T>> {
        let n = self.size();
        let mut d = vec![vec![T::zero(); n]; n];
        for (i, r) in d.iter_mut().enumerate() {
            for (j, v) in self.row(i) {
                r[j] = v;
            }
        }
        d
    }
}

/// Reverse Cuthill-McKee ordering; returns `perm` with `perm[new] = old`.
pub(crate) fn reverse_cuthill_mckee<T: Real>(m: &SymmetricSparse<T>) -> Vec<usize> {
    let n = m.size();
    let degree: Vec<usize> = (0..n).map(|i| m.row_ptr[i + 1] - m.row_ptr[i]).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut queue = VecDeque::new();
    while order.len() < n {
        // Start each component at its lowest-degree unvisited vertex.
        let start = (0..n).filter(|&i| !visited[i]).min_by_key(|&i| (degree[i], i)).unwrap();
        visited[start] = true;
        queue.push_back(start);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut nbrs: Vec<usize> = m.row(v).map(|(j, _)| j).filter(|&j| !visited[j]).collect();
            nbrs.sort_by_key(|&j| (degree[j], j));
            for j in nbrs {
                visited[j] = true;
                queue.push_back(j);
            }
        }
    }
    order.reverse();
    order
}

/// Lower-triangular Cholesky factor of `P A Pᵀ` stored row by row over its envelope.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvelopeCholesky<T> {
    pub(crate) perm: Vec<usize>,
    pub(crate) first: Vec<usize>,
    pub(crate) offsets: Vec<usize>,
    pub(crate) values: Vec<T>,
}

impl<T: Real> EnvelopeCholesky<T> {
    pub fn factor(a: &SymmetricSparse<T>) -> Result<Self> {
        let perm = reverse_cuthill_mckee(a);
        Self::factor_with_permutation(a, perm)
    }

    pub fn factor_with_permutation(a: &SymmetricSparse<T>, perm: Vec<usize>) -> Result<Self> {
        let n = a.size();
        let mut inv = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let mut first: Vec<usize> = (0..n).collect();
        for new_i in 0..n {
            for (old_j, _) in a.row(perm[new_i]) {
                let new_j = inv[old_j];
                if new_j < first[new_i] {
                    first[new_i] = new_j;
                }
            }
        }
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        for i in 0..n {
            offsets.push(offsets[i] + (i - first[i] + 1));
        }
        let mut values = vec![T::zero(); offsets[n]];
        for new_i in 0..n {
            for (old_j, v) in a.row(perm[new_i]) {
                let new_j = inv[old_j];
                if new_j <= new_i {
                    values[offsets[new_i] + new_j - first[new_i]] = v;
                }
            }
        }

        for i in 0..n {
            let fi = first[i];
            let row_i = offsets[i];
            for j in fi..i {
                let fj = first[j];
                let k0 = fi.max(fj);
                let mut s = values[row_i + j - fi];
                let li = &values[row_i + k0 - fi..row_i + j - fi];
                let lj = &values[offsets[j] + k0 - fj..offsets[j] + j - fj];
                for (&x, &y) in li.iter().zip(lj) {
                    s -= x * y;
                }
                let diag_j = values[offsets[j + 1] - 1];
                values[row_i + j - fi] = s / diag_j;
            }
            let mut s = values[row_i + i - fi];
            for &x in &values[row_i..row_i + i - fi] {
                s -= x * x;
            }
            if !(s > T::zero()) || !s.is_finite() {
                return Err(MeshError::NotPositiveDefinite { row: perm[i], pivot: s.as_f64() });
            }
            values[row_i + i - fi] = s.sqrt();
        }
        Ok(Self { perm, first, offsets, values })
    }

    pub fn size(&self) -> usize {
        self.perm.len()
    }

    /// Stored entries, including envelope fill.
    pub fn stored_len(&self) -> usize {
        self.values.len()
    }

    /// Solves `A X = B` in place. `b` is vertex-major with `width` right-hand
    /// sides per row. Each column sees the same arithmetic whatever `width` is.
    pub fn solve_in_place(&self, b: &mut [T], width: usize) {
        let n = self.size();
        assert_eq!(b.len(), n * width, "right-hand side shape");
        let mut work = vec![T::zero(); n * width];
        for (new, &old) in self.perm.iter().enumerate() {
            work[new * width..(new + 1) * width].copy_from_slice(&b[old * width..(old + 1) * width]);
        }
        for i in 0..n {
            let fi = self.first[i];
            let row = &self.values[self.offsets[i]..self.offsets[i + 1]];
            let (done, rest) = work.split_at_mut(i * width);
            let wi = &mut rest[..width];
            for j in fi..i {
                let l = row[j - fi];
                let wj = &done[j * width..(j + 1) * width];
                for (a, &c) in wi.iter_mut().zip(wj) {
                    *a -= l * c;
                }
            }
            let d = row[i - fi];
            wi.iter_mut().for_each(|a| *a /= d);
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            let row = &self.values[self.offsets[i]..self.offsets[i + 1]];
            let d = row[i - fi];
            let (head, rest) = work.split_at_mut(i * width);
            let wi = &mut rest[..width];
            wi.iter_mut().for_each(|a| *a /= d);
            for j in fi..i {
                let l = row[j - fi];
                let wj = &mut head[j * width..(j + 1) * width];
                for (a, &c) in wj.iter_mut().zip(wi.iter()) {
                    *a -= l * c;
                }
            }
        }
        for (new, &old) in self.perm.iter().enumerate() {
            b[old * width..(old + 1) * width].copy_from_slice(&work[new * width..(new + 1) * width]);
        }
    }

    /// `F Fᵀ` mapped back to the original ordering, dense.
    pub fn reassemble_dense(&self) -> Vec<Vec<T>> {
        let n = self.size();
        let lower = |i: usize, k: usize| -> T {
            if k < self.first[i] || k > i {
                T::zero()
            } else {
                self.values[self.offsets[i] + k - self.first[i]]
            }
        };
        let mut out = vec![vec![T::zero(); n]; n];
        for i in 0..n {
            for j in 0..=i {
                let mut s = T::zero();
                for k in self.first[i].max(self.first[j])..=j {
                    s += lower(i, k) * lower(j, k);
                }
                out[self.perm[i]][self.perm[j]] = s;
                out[self.perm[j]][self.perm[i]] = s;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tridiag(n: usize) -> SymmetricSparse<f64> {
        let rows = (0..n)
            .map(|i| {
                let mut r = vec![(i, 4.0)];
                if i > 0 {
                    r.push((i - 1, -1.0));
                }
                if i + 1 < n {
                    r.push((i + 1, -1.0));
                }
                r
            })
            .collect();
        SymmetricSparse::from_rows(rows)
    }

    #[test]
    fn factor_reassembles_and_solves() {
        let a = tridiag(9);
        let f = EnvelopeCholesky::factor(&a).unwrap();
        let dense = a.to_dense();
        let back = f.reassemble_dense();
        for i in 0..9 {
            for j in 0..9 {
                assert!((back[i][j] - dense[i][j]).abs() < 1e-12);
            }
        }
        let x: Vec<f64> = (0..9).map(|i| (i as f64).sin()).collect();
        let mut b: Vec<f64> = (0..9).map(|i| (0..9).map(|j| dense[i][j] * x[j]).sum()).collect();
        f.solve_in_place(&mut b, 1);
        for i in 0..9 {
            assert!((b[i] - x[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn indefinite_is_rejected() {
        let a = SymmetricSparse::from_rows(vec![vec![(0, 1.0), (1, 2.0)], vec![(0, 2.0), (1, 1.0)]]);
        assert!(matches!(EnvelopeCholesky::factor(&a), Err(MeshError::NotPositiveDefinite { .. })));
    }

    #[test]
    fn multi_rhs_matches_single_bitwise() {
        let a = tridiag(12);
        let f = EnvelopeCholesky::factor(&a).unwrap();
        let cols: Vec<Vec<f64>> = (0..3).map(|c| (0..12).map(|i| ((i * 7 + c * 3) as f64).cos()).collect()).collect();
        let mut interleaved = vec![0.0; 36];
        for i in 0..12 {
            for c in 0..3 {
                interleaved[i * 3 + c] = cols[c][i];
            }
        }
        f.solve_in_place(&mut interleaved, 3);
        for c in 0..3 {
            let mut single = cols[c].clone();
            f.solve_in_place(&mut single, 1);
            for i in 0..12 {
                assert_eq!(single[i].to_bits(), interleaved[i * 3 + c].to_bits());
            }
        }
    }
}
