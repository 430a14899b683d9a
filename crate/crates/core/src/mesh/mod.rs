//! Triangle meshes, the uniform graph Laplacian and anchored reconstruction
//! from differential coordinates.

mod anchored;
mod cholesky;
mod laplacian;
pub mod obj;

pub use anchored::{factor_anchored, AnchoredFactor};
pub use cholesky::{EnvelopeCholesky, SymmetricSparse};
pub use laplacian::{build_laplacian, differential_coords, DiffCoords, LaplacianOperator};

use std::collections::VecDeque;

use thiserror::Error;

use crate::scalar::Real;

pub type Vec3<T> = [T; 3];

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("triangle {triangle} references vertex {index} but the mesh has {vertex_count} vertices")]
    IndexOutOfRange { triangle: usize, index: usize, vertex_count: usize },
    #[error("triangle {triangle} repeats vertex {index}")]
    DegenerateTriangle { triangle: usize, index: usize },
    #[error("mesh graph is disconnected: vertex {vertex} is unreachable from vertex 0")]
    Disconnected { vertex: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("anchor set is empty")]
    NoAnchors,
    #[error("anchor {index} is duplicated or out of range (vertex count {vertex_count})")]
    BadAnchor { index: usize, vertex_count: usize },
    #[error("anchor weight must be positive and finite, got {0}")]
    BadAnchorWeight(f64),
    #[error("matrix is not positive definite (pivot {pivot} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },
    #[error("OBJ parse error on line {line}: {message}")]
    ObjParse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = MeshError> = std::result::Result<T, E>;

/// Shared topology plus one set of vertex positions.
#[derive(Clone, Debug, PartialEq)]
pub struct TriMesh<T> {
    positions: Vec<Vec3<T>>,
    triangles: Vec<[usize; 3]>,
}

impl<T: Real> TriMesh<T> {
    pub fn new(positions: Vec<Vec3<T>>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        let n = positions.len();
        for (t, tri) in triangles.iter().enumerate() {
            for (a, &i) in tri.iter().enumerate() {
                if i >= n {
                    return Err(MeshError::IndexOutOfRange { triangle: t, index: i, vertex_count: n });
                }
                if tri[..a].contains(&i) {
                    return Err(MeshError::DegenerateTriangle { triangle: t, index: i });
                }
            }
        }
        Ok(Self { positions, triangles })
    }

    #[inline]
    pub fn vertex_count(&self) -> usize {
        self.positions.len()
    }

    #[inline]
    pub fn positions(&self) -> &[Vec3<T>] {
        &self.positions
    }

    #[inline]
    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    /// Same topology, new positions.
    pub fn with_positions(&self, positions: Vec<Vec3<T>>) -> Result<Self> {
        if positions.len() != self.positions.len() {
            return Err(MeshError::DimensionMismatch { expected: self.positions.len(), got: positions.len() });
        }
        Ok(Self { positions, triangles: self.triangles.clone() })
    }

    /// Sorted, deduplicated neighbor lists of the edge graph.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.vertex_count()];
        for tri in &self.triangles {
            for a in 0..3 {
                let i = tri[a];
                let j = tri[(a + 1) % 3];
                adj[i].push(j);
                adj[j].push(i);
            }
        }
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
        }
        adj
    }

    /// Smallest vertex index not reachable from vertex 0, if any.
    pub fn first_unreachable_vertex(&self) -> Option<usize> {
        let n = self.vertex_count();
        if n == 0 {
            return None;
        }
        let seen = bfs_hops(&self.adjacency(), 0);
        seen.iter().position(|d| d.is_none())
    }

    pub fn bbox_diagonal(&self) -> T {
        bbox_diagonal(&self.positions)
    }
}

/// Diagonal length of the axis-aligned bounding box of `points`.
pub fn bbox_diagonal<T: Real>(points: &[Vec3<T>]) -> T {
    if points.is_empty() {
        return T::zero();
    }
    let mut lo = points[0];
    let mut hi = points[0];
    for p in points {
        for a in 0..3 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    (0..3).map(|a| (hi[a] - lo[a]) * (hi[a] - lo[a])).sum::<T>().sqrt()
}

/// Breadth-first hop distances from `source`; `None` for unreachable vertices.
pub fn bfs_hops(adj: &[Vec<usize>], source: usize) -> Vec<Option<usize>> {
    let mut dist = vec![None; adj.len()];
    let mut queue = VecDeque::new();
    dist[source] = Some(0);
    queue.push_back(source);
    while let Some(v) = queue.pop_front() {
        let d = dist[v].unwrap();
        for &w in &adj[v] {
            if dist[w].is_none() {
                dist[w] = Some(d + 1);
                queue.push_back(w);
            }
        }
    }
    dist
}
