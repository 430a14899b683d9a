use super::{MeshError, Result, TriMesh, Vec3};
use crate::scalar::Real;

/// Uniform graph Laplacian `L = D - A` in compressed sparse row form.
///
/// Columns within a row are sorted. Off-diagonal entries are exactly `-1`,
/// the diagonal is the vertex degree.
#[derive(Clone, Debug, PartialEq)]
pub struct LaplacianOperator<T> {
    pub(crate) row_ptr: Vec<usize>,
    pub(crate) col_idx: Vec<usize>,
    pub(crate) values: Vec<T>,
}

/// `delta = L * positions`, one column per axis.
#[derive(Clone, Debug, PartialEq)]
pub struct DiffCoords<T> {
    pub delta: Vec<Vec3<T>>,
}

pub fn build_laplacian<T: Real>(mesh: &TriMesh<T>) -> Result<LaplacianOperator<T>> {
    if let Some(v) = mesh.first_unreachable_vertex() {
        return Err(MeshError::Disconnected { vertex: v });
    }
    Ok(LaplacianOperator::from_adjacency(&mesh.adjacency()))
}

impl<T: Real> LaplacianOperator<T> {
    pub(crate) fn from_adjacency(adj: &[Vec<usize>]) -> Self {
        let mut row_ptr = Vec::with_capacity(adj.len() + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for (i, nbrs) in adj.iter().enumerate() {
            let mut placed = false;
            for &j in nbrs {
                if !placed && j > i {
                    col_idx.push(i);
                    values.push(T::of(nbrs.len() as f64));
                    placed = true;
                }
                col_idx.push(j);
                values.push(-T::one());
            }
            if !placed {
                col_idx.push(i);
                values.push(T::of(nbrs.len() as f64));
            }
            row_ptr.push(col_idx.len());
        }
        Self { row_ptr, col_idx, values }
    }

    #[inline]
    pub fn size(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// `(column, value)` pairs of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[span.clone()].iter().copied().zip(self.values[span].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[span.clone()].binary_search(&j) {
            Ok(k) => self.values[span.start + k],
            Err(_) => T::zero(),
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<T>> {
        let n = self.size();
        let mut d = vec![vec![T::zero(); n]; n];
        for (i, row) in d.iter_mut().enumerate() {
            for (j, v) in self.row(i) {
                row[j] = v;
            }
        }
        d
    }

    /// `L * x` for a stack of 3-vectors.
    pub fn apply(&self, x: &[Vec3<T>]) -> Vec<Vec3<T>> {
        let mut out = vec![[T::zero(); 3]; self.size()];
        for (i, o) in out.iter_mut().enumerate() {
            for (j, v) in self.row(i) {
                for a in 0..3 {
                    o[a] += v * x[j][a];
                }
            }
        }
        out
    }

    /// `L * x` for a vertex-major interleaved buffer with `width` columns per vertex.
    pub fn apply_strided(&self, x: &[T], width: usize, out: &mut [T]) {
        debug_assert_eq!(x.len(), self.size() * width);
        for i in 0..self.size() {
            let o = &mut out[i * width..(i + 1) * width];
            o.iter_mut().for_each(|v| *v = T::zero());
            for (j, v) in self.row(i) {
                let xj = &x[j * width..(j + 1) * width];
                for (oc, &xc) in o.iter_mut().zip(xj) {
                    *oc += v * xc;
                }
            }
        }
    }
}

pub fn differential_coords<T: Real>(lap: &LaplacianOperator<T>, positions: &[Vec3<T>]) -> Result<DiffCoords<T>> {
    if positions.len() != lap.size() {
        return Err(MeshError::DimensionMismatch { expected: lap.size(), got: positions.len() });
    }
    Ok(DiffCoords { delta: lap.apply(positions) })
}
