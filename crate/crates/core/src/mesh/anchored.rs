use super::cholesky::{EnvelopeCholesky, SymmetricSparse};
use super::{DiffCoords, LaplacianOperator, MeshError, Result, Vec3};
use crate::binio::{BinError, ByteReader, ByteWriter};
use crate::scalar::Real;

/// Cholesky factor of `LᵀL + λ² SᵀS`, where `S` selects the anchor rows.
///
/// The factor depends only on topology and the anchor set, so it is built once
/// and every frame only pays for two triangular solves per axis.
#[derive(Clone, Debug, PartialEq)]
pub struct AnchoredFactor<T> {
    pub(crate) laplacian: LaplacianOperator<T>,
    pub(crate) anchors: Vec<usize>,
    pub(crate) weight: T,
    pub(crate) cholesky: EnvelopeCholesky<T>,
}

/// Assembles `LᵀL + weight² SᵀS` with the full symmetric pattern.
pub(crate) fn anchored_normal_matrix<T: Real>(lap: &LaplacianOperator<T>, anchors: &[usize], weight: T) -> SymmetricSparse<T> {
    let n = lap.size();
    let mut acc = vec![T::zero(); n];
    let mut touched = Vec::new();
    let mut mark = vec![false; n];
    let w2 = weight * weight;
    let mut is_anchor = vec![false; n];
    for &a in anchors {
        is_anchor[a] = true;
    }
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        for (k, lik) in lap.row(i) {
            for (j, lkj) in lap.row(k) {
                if !mark[j] {
                    mark[j] = true;
                    touched.push(j);
                }
                acc[j] += lik * lkj;
            }
        }
        if is_anchor[i] {
            if !mark[i] {
                mark[i] = true;
                touched.push(i);
            }
            acc[i] += w2;
        }
        touched.sort_unstable();
        let row: Vec<(usize, T)> = touched.iter().map(|&j| (j, acc[j])).collect();
        for &j in &touched {
            acc[j] = T::zero();
            mark[j] = false;
        }
        touched.clear();
        rows.push(row);
    }
    SymmetricSparse::from_rows(rows)
}

pub fn factor_anchored<T: Real>(lap: &LaplacianOperator<T>, anchors: &[usize], weight: T) -> Result<AnchoredFactor<T>> {
    let n = lap.size();
    if anchors.is_empty() {
        return Err(MeshError::NoAnchors);
    }
    if !(weight > T::zero()) || !weight.is_finite() {
        return Err(MeshError::BadAnchorWeight(weight.as_f64()));
    }
    let mut sorted = anchors.to_vec();
    sorted.sort_unstable();
    for w in sorted.windows(2) {
        if w[0] == w[1] {
            return Err(MeshError::BadAnchor { index: w[0], vertex_count: n });
        }
    }
    if let Some(&bad) = sorted.iter().find(|&&a| a >= n) {
        return Err(MeshError::BadAnchor { index: bad, vertex_count: n });
    }
    let m = anchored_normal_matrix(lap, &sorted, weight);
    let cholesky = EnvelopeCholesky::factor(&m)?;
    Ok(AnchoredFactor { laplacian: lap.clone(), anchors: sorted, weight, cholesky })
}

impl<T: Real> AnchoredFactor<T> {
    /// Anchor vertex indices, sorted. Anchor positions passed to the solvers
    /// follow this order.
    pub fn anchors(&self) -> &[usize] {
        &self.anchors
    }

    pub fn weight(&self) -> T {
        self.weight
    }

    pub fn vertex_count(&self) -> usize {
        self.laplacian.size()
    }

    pub fn laplacian(&self) -> &LaplacianOperator<T> {
        &self.laplacian
    }

    pub fn cholesky(&self) -> &EnvelopeCholesky<T> {
        &self.cholesky
    }

    /// The normal matrix this factor was computed from, dense.
    pub fn normal_matrix_dense(&self) -> Vec<Vec<T>> {
        anchored_normal_matrix(&self.laplacian, &self.anchors, self.weight).to_dense()
    }

    /// Least-squares positions for `min |L x - delta|² + λ² |S x - c|²`, per axis.
    pub fn reconstruct(&self, delta: &DiffCoords<T>, anchor_positions: &[Vec3<T>]) -> Result<Vec<Vec3<T>>> {
        let n = self.vertex_count();
        if delta.delta.len() != n {
            return Err(MeshError::DimensionMismatch { expected: n, got: delta.delta.len() });
        }
        if anchor_positions.len() != self.anchors.len() {
            return Err(MeshError::DimensionMismatch { expected: self.anchors.len(), got: anchor_positions.len() });
        }
        let flat_delta: Vec<T> = delta.delta.iter().flat_map(|v| v.iter().copied()).collect();
        let flat_anchor: Vec<T> = anchor_positions.iter().flat_map(|v| v.iter().copied()).collect();
        let x = self.reconstruct_interleaved(&flat_delta, &flat_anchor, 3)?;
        Ok(x.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect())
    }

    /// Solve for `width` independent columns at once. `delta` is `N × width`
    /// vertex-major, `anchor_values` is `A × width`. Column results are
    /// bitwise identical to solving each column alone.
    pub fn reconstruct_interleaved(&self, delta: &[T], anchor_values: &[T], width: usize) -> Result<Vec<T>> {
        let n = self.vertex_count();
        if delta.len() != n * width {
            return Err(MeshError::DimensionMismatch { expected: n * width, got: delta.len() });
        }
        if anchor_values.len() != self.anchors.len() * width {
            return Err(MeshError::DimensionMismatch { expected: self.anchors.len() * width, got: anchor_values.len() });
        }
        let mut rhs = vec![T::zero(); n * width];
        self.laplacian.apply_strided(delta, width, &mut rhs);
        let w2 = self.weight * self.weight;
        for (k, &a) in self.anchors.iter().enumerate() {
            let dst = &mut rhs[a * width..(a + 1) * width];
            for (d, &c) in dst.iter_mut().zip(&anchor_values[k * width..(k + 1) * width]) {
                *d += w2 * c;
            }
        }
        self.cholesky.solve_in_place(&mut rhs, width);
        Ok(rhs)
    }
}

impl<T: Real> AnchoredFactor<T> {
    /// Binary form used inside model bundles: weight, anchors, Laplacian CSR,
    /// then the envelope factor (permutation, row starts, values).
    pub(crate) fn encode(&self, w: &mut ByteWriter) {
        w.real(self.weight);
        w.usizes(&self.anchors);
        w.usizes(&self.laplacian.row_ptr);
        w.usizes(&self.laplacian.col_idx);
        w.reals(&self.laplacian.values);
        w.usizes(&self.cholesky.perm);
        w.usizes(&self.cholesky.first);
        w.reals(&self.cholesky.values);
    }

    pub(crate) fn decode(r: &mut ByteReader) -> Result<Self, BinError> {
        let bad = |m: &str| BinError::Malformed(format!("anchored factor: {m}"));
        let weight: T = r.real()?;
        let anchors = r.usizes()?;
        let row_ptr = r.usizes()?;
        let col_idx = r.usizes()?;
        let lap_values: Vec<T> = r.reals()?;
        let perm = r.usizes()?;
        let first = r.usizes()?;
        let values: Vec<T> = r.reals()?;

        let n = perm.len();
        if !(weight > T::zero()) || !weight.is_finite() {
            return Err(bad("anchor weight"));
        }
        if anchors.is_empty() || anchors.windows(2).any(|p| p[0] >= p[1]) || anchors.iter().any(|&a| a >= n) {
            return Err(bad("anchor list"));
        }
        if row_ptr.len() != n + 1 || row_ptr[0] != 0 || row_ptr.windows(2).any(|p| p[0] > p[1]) {
            return Err(bad("row pointers"));
        }
        if row_ptr[n] != col_idx.len() || col_idx.len() != lap_values.len() || col_idx.iter().any(|&c| c >= n) {
            return Err(bad("laplacian entries"));
        }
        let mut seen = vec![false; n];
        for &p in &perm {
            if p >= n || std::mem::replace(&mut seen[p], true) {
                return Err(bad("permutation"));
            }
        }
        if first.len() != n || first.iter().enumerate().any(|(i, &f)| f > i) {
            return Err(bad("envelope"));
        }
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        for i in 0..n {
            offsets.push(offsets[i] + (i - first[i] + 1));
        }
        if values.len() != offsets[n] || (0..n).any(|i| !(values[offsets[i + 1] - 1] > T::zero())) {
            return Err(bad("factor values"));
        }
        Ok(Self {
            laplacian: LaplacianOperator { row_ptr, col_idx, values: lap_values },
            anchors,
            weight,
            cholesky: EnvelopeCholesky { perm, first, offsets, values },
        })
    }
}
